//! Primal side: closed-loop simulation, covariance trajectories, the primal
//! objective, descriptor and alignment residuals, rank-one factors and a
//! Monte Carlo estimate of the stochastic cost.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dlmi::{m_trajectory, LambdaDot};
use crate::error::{dim_mismatch, Error, Result};
use crate::model::{apply_a_op, apply_e, MatrixFn, QuadForm, StateSpace, TimeGrid};
use crate::quadrature::{compensated_sum, simpson, trapezoid};
use crate::riccati::{finite_difference, solve_pd, MatTrajectory, RiccatiData};
use crate::symmat::{eps_rank, trace_inner, SymMat};

/// State feedback `u = −K(t)x` sampled on a grid.
///
/// Between nodes the gain is a cubic Hermite interpolant of the samples and
/// their time derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Gain {
    grid: TimeGrid,
    k: Vec<DMatrix<f64>>,
    k_dot: Vec<DMatrix<f64>>,
}

impl Gain {
    pub fn new(grid: TimeGrid, k: Vec<DMatrix<f64>>, k_dot: Vec<DMatrix<f64>>) -> Result<Self> {
        if k.len() != grid.len() || k_dot.len() != grid.len() {
            return Err(dim_mismatch(
                "Gain samples",
                grid.len(),
                k.len().min(k_dot.len()),
            ));
        }
        let shape = k[0].shape();
        if k.iter().chain(&k_dot).any(|g| g.shape() != shape) {
            return Err(dim_mismatch(
                "Gain sample shape",
                format!("{shape:?}"),
                "mixed",
            ));
        }
        Ok(Gain { grid, k, k_dot })
    }

    pub fn zeros(grid: TimeGrid, m: usize, n: usize) -> Self {
        Self::constant(grid, DMatrix::zeros(m, n))
    }

    pub fn constant(grid: TimeGrid, k: DMatrix<f64>) -> Self {
        let zero = DMatrix::zeros(k.nrows(), k.ncols());
        Gain {
            grid,
            k: vec![k; grid.len()],
            k_dot: vec![zero; grid.len()],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `(m, n)`.
    pub fn shape(&self) -> (usize, usize) {
        self.k[0].shape()
    }

    pub fn samples(&self) -> &[DMatrix<f64>] {
        &self.k
    }

    pub fn rates(&self) -> &[DMatrix<f64>] {
        &self.k_dot
    }

    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let h = self.grid.step();
        let steps = self.grid.steps();
        let s = (t / h).clamp(0.0, steps as f64);
        let k = (s.floor() as usize).min(steps - 1);
        let u = s - k as f64;
        if u == 0.0 {
            return self.k[k].clone();
        }
        if u == 1.0 {
            return self.k[k + 1].clone();
        }
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        &self.k[k] * h00
            + &self.k_dot[k] * (h10 * h)
            + &self.k[k + 1] * h01
            + &self.k_dot[k + 1] * (h11 * h)
    }

    pub fn scale(&self, factor: f64) -> Gain {
        Gain {
            grid: self.grid,
            k: self.k.iter().map(|g| g * factor).collect(),
            k_dot: self.k_dot.iter().map(|g| g * factor).collect(),
        }
    }
}

fn k_of(sys: &StateSpace, qf: &QuadForm, t: f64, lam: &DMatrix<f64>) -> DMatrix<f64> {
    let blocks = qf.blocks_at(t);
    let rhs = blocks.n.transpose() + sys.b.at(t).transpose() * lam;
    solve_pd(blocks.r.as_matrix(), &rhs)
}

/// `K(t) = R⁻¹(Nᵀ + BᵀΛ̄(t))`, the alignment feedback `u = −Kx`.
///
/// `K̇` is formed from `Λ̇` (taken from `source`) plus a centered difference
/// in the data at frozen `Λ` when the data vary in time.
pub fn gain_from_dual(
    lambda_bar: &MatTrajectory,
    source: LambdaDot<'_>,
    sys: &StateSpace,
    qf: &QuadForm,
) -> Result<Gain> {
    if !lambda_bar.is_complete() {
        return Err(Error::IncompleteTrajectory {
            label: lambda_bar.label().to_string(),
            node: lambda_bar.first_index().saturating_sub(1),
        });
    }
    if lambda_bar.dim() != sys.n() || qf.n() != sys.n() || qf.m() != sys.m() {
        return Err(dim_mismatch("gain_from_dual", sys.n(), lambda_bar.dim()));
    }
    let dots = match source {
        LambdaDot::FiniteDifference => finite_difference(lambda_bar, "lambda_dot")?,
        LambdaDot::FromEquation(data) => data.derivative_trajectory(lambda_bar, None),
        LambdaDot::Given(d) => d.clone(),
    };
    let grid = *lambda_bar.grid();
    let constant_data = qf.is_constant() && sys.b.is_constant();
    let delta = 0.5 * grid.step();
    let mut k = Vec::with_capacity(grid.len());
    let mut k_dot = Vec::with_capacity(grid.len());
    for ((_, t, l), d) in lambda_bar.iter().zip(dots.samples()) {
        let lam = l.as_matrix();
        k.push(k_of(sys, qf, t, lam));
        let r = qf.blocks_at(t).r;
        let mut rate = solve_pd(r.as_matrix(), &(sys.b.at(t).transpose() * d.as_matrix()));
        if !constant_data {
            let lo = (t - delta).max(0.0);
            let hi = (t + delta).min(grid.horizon());
            rate += (k_of(sys, qf, hi, lam) - k_of(sys, qf, lo, lam)) / (hi - lo);
        }
        k_dot.push(rate);
    }
    Gain::new(grid, k, k_dot)
}

/// Closed-loop state and input samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub grid: TimeGrid,
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
}

/// RK4 integration of `ẋ = (A − BK)x`, `x(0) = x_i`, with `u = −Kx`.
pub fn closed_loop_simulate(
    sys: &StateSpace,
    gain: &Gain,
    x_i: &DVector<f64>,
    grid: TimeGrid,
) -> Result<ClosedLoop> {
    let (n, m) = (sys.n(), sys.m());
    if x_i.len() != n || gain.shape() != (m, n) {
        return Err(dim_mismatch(
            "closed_loop_simulate",
            format!("x_i {n}, K {m}x{n}"),
            format!("x_i {}, K {:?}", x_i.len(), gain.shape()),
        ));
    }
    let f = |t: f64, x: &DVector<f64>| -> DVector<f64> {
        let u = -(gain.at(t) * x);
        sys.a.at(t) * x + sys.b.at(t) * u
    };
    let h = grid.step();
    let mut xs = Vec::with_capacity(grid.len());
    let mut x = x_i.clone();
    xs.push(x.clone());
    for k in 0..grid.steps() {
        let t = grid.t(k);
        let k1 = f(t, &x);
        let k2 = f(t + 0.5 * h, &(&x + &k1 * (0.5 * h)));
        let k3 = f(t + 0.5 * h, &(&x + &k2 * (0.5 * h)));
        let k4 = f(t + h, &(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        xs.push(x.clone());
    }
    let us = xs
        .iter()
        .zip(grid.nodes())
        .map(|(x, t)| -(gain.at(t) * x))
        .collect();
    Ok(ClosedLoop { grid, x: xs, u: us })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovKind {
    Deterministic,
    Stochastic,
}

/// Joint state/input covariance `Σ(t)` of size `n + m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovTrajectory {
    pub sigma: MatTrajectory,
    pub kind: CovKind,
}

impl CovTrajectory {
    pub fn grid(&self) -> &TimeGrid {
        self.sigma.grid()
    }

    /// Largest numerical rank over the nodes.
    pub fn max_rank(&self, tol: f64) -> usize {
        self.sigma
            .samples()
            .iter()
            .map(|s| eps_rank(s, tol))
            .max()
            .unwrap_or(0)
    }

    pub fn min_eig(&self) -> f64 {
        self.sigma
            .samples()
            .iter()
            .map(SymMat::min_eig)
            .fold(f64::INFINITY, f64::min)
    }
}

/// `Σ(t_k) = [x; u][x; u]ᵀ`.
pub fn deterministic_covariance(cl: &ClosedLoop) -> Result<CovTrajectory> {
    let samples = cl
        .x
        .iter()
        .zip(&cl.u)
        .map(|(x, u)| {
            let z = DVector::from_iterator(x.len() + u.len(), x.iter().chain(u.iter()).copied());
            SymMat::outer(&z)
        })
        .collect();
    Ok(CovTrajectory {
        sigma: MatTrajectory::new(cl.grid, samples, "sigma_det")?,
        kind: CovKind::Deterministic,
    })
}

fn joint_covariance(sxx: &SymMat, k: &DMatrix<f64>) -> SymMat {
    let (m, n) = k.shape();
    let s = sxx.as_matrix();
    let sxu = -(s * k.transpose());
    let suu = k * s * k.transpose();
    let mut out = DMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(s);
    out.view_mut((0, n), (n, m)).copy_from(&sxu);
    out.view_mut((n, 0), (m, n)).copy_from(&sxu.transpose());
    out.view_mut((n, n), (m, m)).copy_from(&suu);
    SymMat::from_symmetric_unchecked(out)
}

/// Integrates `Σ̇xx = FΣxx + ΣxxFᵀ + W` with `F = A − BK` forward from `X_i`
/// and assembles `Σ` with `Σxu = −ΣxxKᵀ`, `Σuu = KΣxxKᵀ`.
pub fn stochastic_covariance(
    sys: &StateSpace,
    gain: &Gain,
    w: &MatrixFn,
    x_i: &SymMat,
    grid: TimeGrid,
) -> Result<CovTrajectory> {
    let (n, m) = (sys.n(), sys.m());
    if x_i.dim() != n || w.shape() != (n, n) || gain.shape() != (m, n) {
        return Err(dim_mismatch(
            "stochastic_covariance",
            format!("n={n}, m={m}"),
            format!("X_i {}, W {:?}, K {:?}", x_i.dim(), w.shape(), gain.shape()),
        ));
    }
    let rhs = |t: f64, s: &SymMat| -> SymMat {
        let f = sys.a.at(t) - sys.b.at(t) * gain.at(t);
        let fs = f * s.as_matrix();
        SymMat::from_symmetric_unchecked(&fs + fs.transpose() + w.at(t))
    };
    let h = grid.step();
    let mut sxx = x_i.clone();
    let mut out = Vec::with_capacity(grid.len());
    out.push(joint_covariance(&sxx, &gain.at(0.0)));
    for k in 0..grid.steps() {
        let t = grid.t(k);
        let k1 = rhs(t, &sxx);
        let k2 = rhs(t + 0.5 * h, &(&sxx + &k1.scale(0.5 * h)));
        let k3 = rhs(t + 0.5 * h, &(&sxx + &k2.scale(0.5 * h)));
        let k4 = rhs(t + h, &(&sxx + &k3.scale(h)));
        let incr = &(&(&k1 + &k2.scale(2.0)) + &k3.scale(2.0)) + &k4;
        sxx = &sxx + &incr.scale(h / 6.0);
        out.push(joint_covariance(&sxx, &gain.at(grid.t(k + 1))));
    }
    Ok(CovTrajectory {
        sigma: MatTrajectory::new(grid, out, "sigma_stoch")?,
        kind: CovKind::Stochastic,
    })
}

/// `∫⟨𝒬(t), Σ(t)⟩ dt` by composite Simpson quadrature.
pub fn primal_objective(sigma: &CovTrajectory, qf: &QuadForm) -> Result<f64> {
    let vals = sigma
        .sigma
        .iter()
        .map(|(_, t, s)| trace_inner(&qf.at(t), s))
        .collect::<Result<Vec<_>>>()?;
    Ok(simpson(&vals, sigma.grid().step()))
}

/// `max_k ‖ℰ(Σ̇) − 𝒜(Σ) − W‖_max` over interior nodes, `Σ̇` by centered
/// differences.
pub fn descriptor_residual(
    sigma: &CovTrajectory,
    sys: &StateSpace,
    w: Option<&MatrixFn>,
) -> Result<f64> {
    let s = sigma.sigma.samples();
    let n = sys.n();
    if s.len() < 3 {
        return Err(dim_mismatch("descriptor_residual", ">= 3 samples", s.len()));
    }
    let h = sigma.grid().step();
    let mut worst = 0.0_f64;
    for k in 1..s.len() - 1 {
        let t = sigma.grid().t(sigma.sigma.first_index() + k);
        let dot = (&s[k + 1] - &s[k - 1]).scale(0.5 / h);
        let mut r = &apply_e(&dot, n)? - &apply_a_op(sys, &s[k], t)?;
        if let Some(w) = w {
            r = &r - &w.sym_at(t);
        }
        worst = worst.max(r.norm_max());
    }
    Ok(worst)
}

/// `∫⟨𝓜(Λ̄)(t), Σ(t)⟩ dt` by composite Simpson quadrature.
pub fn alignment_residual(
    sigma: &CovTrajectory,
    lambda_bar: &MatTrajectory,
    source: LambdaDot<'_>,
    sys: &StateSpace,
    qf: &QuadForm,
) -> Result<f64> {
    if lambda_bar.grid() != sigma.grid() || !lambda_bar.is_complete() {
        return Err(Error::GridMismatch);
    }
    let ms = m_trajectory(lambda_bar, source, sys, qf)?;
    let vals = ms
        .samples()
        .iter()
        .zip(sigma.sigma.samples())
        .map(|(m, s)| trace_inner(m, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(simpson(&vals, sigma.grid().step()))
}

/// `z` with `zzᵀ = Σ` for a rank-one `Σ`; the first entry whose magnitude
/// exceeds `tol·‖z‖_∞` is positive.
pub fn extract_rank_one_factor(sigma: &SymMat, tol: f64) -> Result<DVector<f64>> {
    let rank = eps_rank(sigma, tol);
    if rank > 1 {
        return Err(Error::RankTooHigh { rank });
    }
    let n = sigma.dim();
    if rank == 0 {
        return Ok(DVector::zeros(n));
    }
    let (vals, vecs) = sigma.eigen();
    let top = vals[n - 1];
    if top <= 0.0 {
        return Ok(DVector::zeros(n));
    }
    let mut z = vecs.column(n - 1) * top.sqrt();
    let cut = tol * z.amax();
    if let Some(first) = z.iter().find(|v| v.abs() > cut) {
        if *first < 0.0 {
            z = -z;
        }
    }
    Ok(z)
}

/// Rank-one factors along a trajectory, each sign matched to the previous
/// node's factor.
pub fn factor_path(sigma: &CovTrajectory, tol: f64) -> Result<Vec<DVector<f64>>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(sigma.sigma.len());
    for s in sigma.sigma.samples() {
        let mut z = extract_rank_one_factor(s, tol)?;
        if let Some(prev) = out.last() {
            if prev.dot(&z) < 0.0 {
                z = -z;
            }
        }
        out.push(z);
    }
    Ok(out)
}

/// Sample mean and standard error of a Monte Carlo cost estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub paths: usize,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> McEstimate {
        let paths = samples.len();
        if paths == 0 {
            return McEstimate {
                mean: f64::NAN,
                stderr: f64::NAN,
                paths,
            };
        }
        let mean = compensated_sum(samples.iter().copied()) / paths as f64;
        let var = if paths > 1 {
            compensated_sum(samples.iter().map(|v| (v - mean) * (v - mean))) / (paths - 1) as f64
        } else {
            0.0
        };
        McEstimate {
            mean,
            stderr: (var / paths as f64).sqrt(),
            paths,
        }
    }
}

/// Precomputed per-node data for Euler–Maruyama paths.
struct PathData {
    h: f64,
    /// `A − BK` at each node.
    f: Vec<DMatrix<f64>>,
    /// `Q − NK − KᵀNᵀ + KᵀRK`, the running cost on `x` under `u = −Kx`.
    cost: Vec<DMatrix<f64>>,
    /// `L` with `LLᵀ = W` at each node.
    noise: Vec<DMatrix<f64>>,
    x0_factor: DMatrix<f64>,
}

fn psd_sqrt(s: &SymMat) -> DMatrix<f64> {
    s.map_eigenvalues(|v| v.max(0.0).sqrt()).into_matrix()
}

impl PathData {
    fn new(
        sys: &StateSpace,
        gain: &Gain,
        qf: &QuadForm,
        w: &MatrixFn,
        x_i: &SymMat,
        grid: TimeGrid,
    ) -> Self {
        let mut f = Vec::with_capacity(grid.len());
        let mut cost = Vec::with_capacity(grid.len());
        let mut noise = Vec::with_capacity(grid.len());
        let w_const = w.is_constant().then(|| psd_sqrt(&w.sym_at(0.0)));
        for t in grid.nodes() {
            let k = gain.at(t);
            f.push(sys.a.at(t) - sys.b.at(t) * &k);
            let b = qf.blocks_at(t);
            let nk = &b.n * &k;
            cost.push(
                b.q.as_matrix() - &nk - nk.transpose() + k.transpose() * b.r.as_matrix() * &k,
            );
            noise.push(match &w_const {
                Some(l) => l.clone(),
                None => psd_sqrt(&w.sym_at(t)),
            });
        }
        PathData {
            h: grid.step(),
            f,
            cost,
            noise,
            x0_factor: psd_sqrt(x_i),
        }
    }

    fn path_cost(&self, rng: &mut ChaCha8Rng) -> f64 {
        let n = self.x0_factor.nrows();
        let draw = |rng: &mut ChaCha8Rng| {
            DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
        };
        let mut x = &self.x0_factor * draw(rng);
        let steps = self.f.len() - 1;
        let sqrt_h = self.h.sqrt();
        let mut running = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            running.push(x.dot(&(&self.cost[k] * &x)));
            if k < steps {
                let dw = &self.noise[k] * draw(rng) * sqrt_h;
                x = &x + &self.f[k] * &x * self.h + dw;
            }
        }
        trapezoid(&running, self.h)
    }
}

/// Euler–Maruyama estimate of `E ∫ [x; u]ᵀ𝒬[x; u] dt` for
/// `dx = (A − BK)x dt + dw`, `E[dw dwᵀ] = W dt`, `x(0) ~ 𝒩(0, X_i)`.
///
/// Path `p` draws from ChaCha8 seeded by `seed` on stream `p`, so the result
/// is independent of thread scheduling.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_cost(
    sys: &StateSpace,
    gain: &Gain,
    qf: &QuadForm,
    w: &MatrixFn,
    x_i: &SymMat,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    Ok(McEstimate::from_samples(&monte_carlo_paths(
        sys, gain, qf, w, x_i, grid, n_paths, seed,
    )?))
}

/// Per-path costs behind [`monte_carlo_cost`].
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_paths(
    sys: &StateSpace,
    gain: &Gain,
    qf: &QuadForm,
    w: &MatrixFn,
    x_i: &SymMat,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let (n, m) = (sys.n(), sys.m());
    if x_i.dim() != n || w.shape() != (n, n) || gain.shape() != (m, n) || qf.n() != n {
        return Err(dim_mismatch(
            "monte_carlo_cost",
            format!("n={n}, m={m}"),
            format!("X_i {}, W {:?}, K {:?}", x_i.dim(), w.shape(), gain.shape()),
        ));
    }
    let data = PathData::new(sys, gain, qf, w, x_i, grid);
    Ok((0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            data.path_cost(&mut rng)
        })
        .collect())
}

/// Convenience: optimal gain straight from a DRE solution.
pub fn optimal_gain(lambda_bar: &MatTrajectory, data: &RiccatiData) -> Result<Gain> {
    match data {
        RiccatiData::Lq { sys, qf } => {
            gain_from_dual(lambda_bar, LambdaDot::FromEquation(data), sys, qf)
        }
        RiccatiData::Standard { .. } => Err(Error::WrongVariant {
            analyzer: "optimal_gain",
            found: "standard-form Riccati data",
        }),
    }
}
