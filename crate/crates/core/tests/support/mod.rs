//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls the library's integrators or eigen-solvers: matrix
//! exponentials come from a Taylor series with scaling and squaring, the
//! discretized problems use exact zero-order-hold transitions, and spectra
//! come from power iteration or Cholesky bisection.
#![allow(dead_code)]

use lqconic_core::model::{CostData, ProblemSpec, StateSpace, TimeGrid, Variant};
use lqconic_core::symmat::SymMat;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `e^M` by scaling and squaring with an 18-term Taylor series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = m.iter().map(|v| v.abs()).sum::<f64>();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let a = m / 2f64.powi(squarings);
    let n = m.nrows();
    let mut term = DMatrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=18 {
        term = &term * &a / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Quadratic `UᵀHU + 2gᵀU + c` in the stacked piecewise-constant inputs.
pub struct DiscreteQuadratic {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c: f64,
    pub step: f64,
}

impl DiscreteQuadratic {
    /// Minimum over `U`, assuming `H ≻ 0`.
    pub fn minimum(&self) -> f64 {
        let sol = self
            .h
            .clone()
            .lu()
            .solve(&self.g)
            .expect("nonsingular discretized Hessian");
        self.c - self.g.dot(&sol)
    }
}

/// Exact integral of `[x; u]ᵀ𝒬[x; u]` over `[0, T]` for `ẋ = Ax + Bu`,
/// `x(0) = x0`, `u` constant on each of `steps` equal intervals.
///
/// Per interval, `∫₀ʰ zᵀe^{Fᵀs}𝒬e^{Fs}z ds` with `F = [A B; 0 0]` is
/// evaluated by Van Loan's block exponential.
pub fn zoh_quadratic(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    x0: &DVector<f64>,
    horizon: f64,
    steps: usize,
) -> DiscreteQuadratic {
    let (n, m) = (a.nrows(), b.ncols());
    let d = n + m;
    let h = horizon / steps as f64;
    let mut f = DMatrix::zeros(d, d);
    f.view_mut((0, 0), (n, n)).copy_from(a);
    f.view_mut((0, n), (n, m)).copy_from(b);
    let mut vl = DMatrix::zeros(2 * d, 2 * d);
    vl.view_mut((0, 0), (d, d)).copy_from(&(-f.transpose()));
    vl.view_mut((0, d), (d, d)).copy_from(q);
    vl.view_mut((d, d), (d, d)).copy_from(&f);
    let e = expm(&(vl * h));
    let g22 = e.view((d, d), (d, d)).into_owned();
    let g12 = e.view((0, d), (d, d)).into_owned();
    let qd = g22.transpose() * g12;
    let qd = (&qd + qd.transpose()) * 0.5;
    let phi = g22.view((0, 0), (n, n)).into_owned();
    let gam = g22.view((0, n), (n, m)).into_owned();

    // x_k = S_k x0 + Σ_j T_{k,j} u_j
    let nu = steps * m;
    let mut s_k = DMatrix::identity(n, n);
    let mut t_k = DMatrix::zeros(n, nu);
    let mut hess = DMatrix::zeros(nu, nu);
    let mut grad = DVector::zeros(nu);
    let mut c = 0.0;
    for k in 0..steps {
        // z_k = P x0 + L U with P = [S_k; 0], L = [T_k; E_k]
        let mut p = DMatrix::zeros(d, n);
        p.view_mut((0, 0), (n, n)).copy_from(&s_k);
        let mut l = DMatrix::zeros(d, nu);
        l.view_mut((0, 0), (n, nu)).copy_from(&t_k);
        for i in 0..m {
            l[(n + i, k * m + i)] = 1.0;
        }
        let px = &p * x0;
        hess += l.transpose() * &qd * &l;
        grad += l.transpose() * &qd * &px;
        c += px.dot(&(&qd * &px));
        let next_t = &phi * &t_k;
        t_k = next_t;
        t_k.view_mut((0, k * m), (n, m)).copy_from(&gam);
        s_k = &phi * &s_k;
    }
    let hess = (&hess + hess.transpose()) * 0.5;
    DiscreteQuadratic {
        h: hess,
        g: grad,
        c,
        step: h,
    }
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn power_iteration(m: &DMatrix<f64>, iters: usize) -> f64 {
    let n = m.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.37).sin());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = m * &v;
        let next = w.norm();
        if next == 0.0 {
            return 0.0;
        }
        v = w / next;
        if (next - lambda).abs() <= 1e-14 * next {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Smallest eigenvalue of a symmetric matrix, to absolute accuracy `tol`,
/// by bisection on the shift `s` for which `M − sI` admits a Cholesky factor.
pub fn min_eig_cholesky(m: &DMatrix<f64>, tol: f64) -> f64 {
    let n = m.nrows();
    let bound = (0..n)
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let (mut lo, mut hi) = (-bound - 1.0, bound + 1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let shifted = m - DMatrix::identity(n, n) * mid;
        if shifted.cholesky().is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Finite-horizon `L²`-induced norm of `u ↦ Cx` (zero initial state) over
/// piecewise-constant inputs with `steps` intervals.
pub fn induced_norm_oracle(sys_a: f64, sys_b: f64, sys_c: f64, horizon: f64, steps: usize) -> f64 {
    let a = DMatrix::from_element(1, 1, sys_a);
    let b = DMatrix::from_element(1, 1, sys_b);
    let q = DMatrix::from_row_slice(2, 2, &[sys_c * sys_c, 0.0, 0.0, 0.0]);
    let dq = zoh_quadratic(&a, &b, &q, &DVector::zeros(1), horizon, steps);
    // ‖u‖² = h·‖U‖²
    (power_iteration(&dq.h, 20_000) / dq.step).sqrt()
}

/// Smallest eigenvalue of the discretized passivity form `∫ zᵀu dt` per unit
/// input energy, zero initial state.
pub fn passivity_oracle(sys: (f64, f64, f64, f64), horizon: f64, steps: usize) -> f64 {
    let (a, b, c, d) = sys;
    let q = DMatrix::from_row_slice(2, 2, &[0.0, 0.5 * c, 0.5 * c, d]);
    let dq = zoh_quadratic(
        &DMatrix::from_element(1, 1, a),
        &DMatrix::from_element(1, 1, b),
        &q,
        &DVector::zeros(1),
        horizon,
        steps,
    );
    min_eig_cholesky(&dq.h, 1e-6 * dq.step) / dq.step
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Random LQR data with jointly PSD `[Q N; Nᵀ R]` and `R ⪰ 0.5·I`.
pub fn random_lqr(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    horizon: f64,
    steps: usize,
) -> ProblemSpec {
    let a = uniform(rng, n, n);
    let b = uniform(rng, n, m);
    let l = uniform(rng, n + m, n + m);
    let mut full = &l * l.transpose();
    for j in 0..m {
        full[(n + j, n + j)] += 0.5;
    }
    let x_i = DVector::from_iterator(n, uniform(rng, n, 1).iter().copied());
    ProblemSpec::new(
        StateSpace::without_output(a, b),
        TimeGrid::new(horizon, steps).unwrap(),
        Variant::Lqr {
            cost: split_cost(&full, n, m),
            x_i,
        },
    )
}

pub fn split_cost(full: &DMatrix<f64>, n: usize, m: usize) -> CostData {
    let sym = |v: DMatrix<f64>| SymMat::symmetrize(&v).unwrap();
    CostData::new(
        sym(full.view((0, 0), (n, n)).into_owned()),
        full.view((0, n), (n, m)).into_owned(),
        sym(full.view((n, n), (m, m)).into_owned()),
    )
}

/// The LQR instance's matrices `(A, B, 𝒬, x_i)`.
pub fn lqr_parts(spec: &ProblemSpec) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let (cost, x_i) = match &spec.variant {
        Variant::Lqr { cost, x_i } | Variant::GeneralIqc { cost, x_i } => (cost, x_i),
        other => panic!("not a deterministic LQ variant: {:?}", other.tag()),
    };
    (
        spec.sys.a.at(0.0),
        spec.sys.b.at(0.0),
        cost.assemble().into_matrix(),
        x_i.clone(),
    )
}

/// Writes one result line past the test harness's output capture.
pub fn report(line: &str) {
    use std::io::Write;
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}
