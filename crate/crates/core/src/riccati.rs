//! Differential Lyapunov and Riccati equations on a uniform grid.
//!
//! All integrators are fixed-step classical RK4. The Riccati operator is
//!
//! ```text
//! 𝓡(Λ) = Λ̇ + AᵀΛ + ΛA − (N + ΛB) R⁻¹ (N + ΛB)ᵀ + Q
//! ```
//!
//! or, in standard form, `Λ̇ + ÂᵀΛ + ΛÂ − ΛMΛ + Q̂`. A forced equation
//! `𝓡(Λ) = H` with `H ⪰ 0` describes a solution of the inequality `𝓡(Λ) ⪰ 0`.

use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{dim_mismatch, Error, Result};
use crate::model::{CostData, MatrixFn, QuadForm, StateSpace, TimeGrid};
use crate::symmat::{sigma_max_norm, SymMat};

/// Default threshold on `σ_max(Λ)` beyond which a solution counts as escaped.
pub const DEFAULT_ESCAPE_CAP: f64 = 1e9;
/// Substeps used to locate the escape time inside the failing step.
const ESCAPE_SUBSTEPS: usize = 40;

/// Symmetric matrix samples on a contiguous run of grid nodes.
///
/// A complete trajectory covers every node; a solution that escaped only
/// covers the nodes reached before the escape.
#[derive(Debug, Clone, PartialEq)]
pub struct MatTrajectory {
    grid: TimeGrid,
    start: usize,
    samples: Vec<SymMat>,
    label: String,
}

impl MatTrajectory {
    pub fn new(grid: TimeGrid, samples: Vec<SymMat>, label: impl Into<String>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(dim_mismatch(
                "MatTrajectory::new",
                grid.len(),
                samples.len(),
            ));
        }
        Self::partial(grid, 0, samples, label)
    }

    /// Samples for nodes `start..start + samples.len()`.
    pub fn partial(
        grid: TimeGrid,
        start: usize,
        samples: Vec<SymMat>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if start + samples.len() > grid.len() {
            return Err(dim_mismatch(
                "MatTrajectory::partial",
                grid.len(),
                start + samples.len(),
            ));
        }
        if let Some(first) = samples.first() {
            if let Some(bad) = samples.iter().find(|s| s.dim() != first.dim()) {
                return Err(dim_mismatch(
                    "MatTrajectory samples",
                    first.dim(),
                    bad.dim(),
                ));
            }
        }
        Ok(MatTrajectory {
            grid,
            start,
            samples,
            label: label.into(),
        })
    }

    /// Samples `f(t_k)` at every node.
    pub fn from_fn(grid: TimeGrid, label: impl Into<String>, f: impl Fn(f64) -> SymMat) -> Self {
        let samples = grid.nodes().map(f).collect();
        MatTrajectory {
            grid,
            start: 0,
            samples,
            label: label.into(),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn set_label(&mut self, label: impl Into<String>) {
        self.label = label.into();
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, SymMat::dim)
    }

    pub fn is_complete(&self) -> bool {
        self.start == 0 && self.samples.len() == self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Node indices that carry a sample.
    pub fn range(&self) -> RangeInclusive<usize> {
        if self.samples.is_empty() {
            #[allow(clippy::reversed_empty_ranges)]
            return 1..=0;
        }
        self.start..=self.start + self.samples.len() - 1
    }

    pub fn get(&self, k: usize) -> Option<&SymMat> {
        k.checked_sub(self.start).and_then(|i| self.samples.get(i))
    }

    pub fn samples(&self) -> &[SymMat] {
        &self.samples
    }

    pub fn first_index(&self) -> usize {
        self.start
    }

    /// `(k, t_k, Λ_k)` over the valid nodes.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64, &SymMat)> + '_ {
        self.samples
            .iter()
            .enumerate()
            .map(move |(i, s)| (self.start + i, self.grid.t(self.start + i), s))
    }

    /// Piecewise-linear interpolation inside the valid range.
    pub fn at(&self, t: f64) -> Option<SymMat> {
        let range = self.range();
        if range.is_empty() {
            return None;
        }
        let s = t / self.grid.step();
        let (lo, hi) = (*range.start() as f64, *range.end() as f64);
        if s < lo - 1e-9 || s > hi + 1e-9 {
            return None;
        }
        let s = s.clamp(lo, hi);
        let r = s.round();
        if (s - r).abs() < 1e-9 {
            return self.get(r as usize).cloned();
        }
        let i = s.floor() as usize;
        let frac = s - i as f64;
        let a = self.get(i)?;
        let b = self.get(i + 1)?;
        Some(&a.scale(1.0 - frac) + &b.scale(frac))
    }

    pub fn map(&self, label: impl Into<String>, f: impl Fn(f64, &SymMat) -> SymMat) -> Self {
        MatTrajectory {
            grid: self.grid,
            start: self.start,
            samples: self.iter().map(|(_, t, s)| f(t, s)).collect(),
            label: label.into(),
        }
    }

    /// Largest `‖·‖_max` over the samples.
    pub fn norm_max(&self) -> f64 {
        self.samples
            .iter()
            .fold(0.0_f64, |a, s| a.max(s.norm_max()))
    }
}

/// Time derivative by finite differences: centered at interior nodes,
/// second-order one-sided at the ends of the valid range.
pub fn finite_difference(traj: &MatTrajectory, label: impl Into<String>) -> Result<MatTrajectory> {
    let s = traj.samples();
    let len = s.len();
    if len < 3 {
        return Err(dim_mismatch("finite_difference", ">= 3 samples", len));
    }
    let h = traj.grid().step();
    let inv2h = 1.0 / (2.0 * h);
    let out = (0..len)
        .map(|i| {
            if i == 0 {
                (&(&s[1].scale(4.0) - &s[0].scale(3.0)) - &s[2]).scale(inv2h)
            } else if i == len - 1 {
                (&(&s[len - 1].scale(3.0) - &s[len - 2].scale(4.0)) + &s[len - 3]).scale(inv2h)
            } else {
                (&s[i + 1] - &s[i - 1]).scale(inv2h)
            }
        })
        .collect();
    MatTrajectory::partial(*traj.grid(), traj.first_index(), out, label)
}

/// Coefficients of a differential Riccati equation.
#[derive(Debug, Clone, PartialEq)]
pub enum RiccatiData {
    /// `(A, B)` from a system and `(Q, N, R)` from a quadratic form.
    Lq { sys: StateSpace, qf: QuadForm },
    /// Standard form `(Â, M, Q̂)`; `M` may have any signature.
    Standard {
        a: MatrixFn,
        m: MatrixFn,
        q: MatrixFn,
    },
}

impl RiccatiData {
    pub fn from_problem(sys: &StateSpace, qf: &QuadForm) -> Result<Self> {
        if sys.n() != qf.n() || sys.m() != qf.m() {
            return Err(dim_mismatch(
                "RiccatiData::from_problem",
                format!("n={}, m={}", sys.n(), sys.m()),
                format!("n={}, m={}", qf.n(), qf.m()),
            ));
        }
        Ok(RiccatiData::Lq {
            sys: sys.clone(),
            qf: qf.clone(),
        })
    }

    pub fn from_cost(sys: &StateSpace, cost: &CostData) -> Result<Self> {
        Self::from_problem(sys, &QuadForm::from_cost(cost)?)
    }

    pub fn standard(a: MatrixFn, m: MatrixFn, q: MatrixFn) -> Result<Self> {
        let n = a.shape().0;
        for (name, f) in [("A", &a), ("M", &m), ("Q", &q)] {
            if f.shape() != (n, n) {
                return Err(dim_mismatch(
                    "RiccatiData::standard",
                    format!("{name} {n}x{n}"),
                    format!("{:?}", f.shape()),
                ));
            }
        }
        Ok(RiccatiData::Standard { a, m, q })
    }

    /// Scalar `−λ̇ = q + 2aλ − mλ²`.
    pub fn scalar(a: f64, m: f64, q: f64) -> Self {
        let s = |v| MatrixFn::Constant(DMatrix::from_element(1, 1, v));
        RiccatiData::Standard {
            a: s(a),
            m: s(m),
            q: s(q),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            RiccatiData::Lq { sys, .. } => sys.n(),
            RiccatiData::Standard { a, .. } => a.shape().0,
        }
    }

    /// `AᵀΛ + ΛA − (N+ΛB)R⁻¹(N+ΛB)ᵀ + Q`, so that `𝓡(Λ) = Λ̇ + rhs`.
    pub fn rhs(&self, t: f64, lam: &SymMat) -> SymMat {
        match self {
            RiccatiData::Lq { sys, qf } => {
                let blocks = qf.blocks_at(t);
                let a = sys.a.at(t);
                let b = sys.b.at(t);
                let l = lam.as_matrix();
                let s = &blocks.n + l * &b;
                let r_inv_st = solve_pd(blocks.r.as_matrix(), &s.transpose());
                let la = l * &a;
                let out = &la + la.transpose() - s * r_inv_st + blocks.q.as_matrix();
                SymMat::from_symmetric_unchecked(out)
            }
            RiccatiData::Standard { a, m, q } => {
                let a = a.at(t);
                let l = lam.as_matrix();
                let la = l * &a;
                let out = &la + la.transpose() - l * m.at(t) * l + q.at(t);
                SymMat::from_symmetric_unchecked(out)
            }
        }
    }

    /// `Q̂ = Q − N R⁻¹ Nᵀ`, the constant term of the standard form.
    pub fn constant_term(&self, t: f64) -> SymMat {
        match self {
            RiccatiData::Lq { qf, .. } => {
                let b = qf.blocks_at(t);
                let corr = &b.n * solve_pd(b.r.as_matrix(), &b.n.transpose());
                SymMat::from_symmetric_unchecked(b.q.as_matrix() - corr)
            }
            RiccatiData::Standard { q, .. } => q.sym_at(t),
        }
    }

    /// Largest `‖Q‖_max` of the raw cost term used to scale DRI forcing.
    fn forcing_scale(&self) -> f64 {
        match self {
            RiccatiData::Lq { qf, .. } => qf.blocks_at(0.0).q.norm_max(),
            RiccatiData::Standard { q, .. } => q.sym_at(0.0).norm_max(),
        }
    }

    /// `Λ̇ = H − rhs(t, Λ)`, the derivative of a solution of `𝓡(Λ) = H`.
    pub fn derivative(&self, t: f64, lam: &SymMat, forcing: Option<&Forcing>) -> SymMat {
        let mut d = -&self.rhs(t, lam);
        if let Some(f) = forcing {
            d = &d + f.at(t);
        }
        d
    }

    /// `Λ̇` along a solution trajectory, taken from the equation itself.
    pub fn derivative_trajectory(
        &self,
        lambda: &MatTrajectory,
        forcing: Option<&Forcing>,
    ) -> MatTrajectory {
        lambda.map("lambda_dot", |t, l| self.derivative(t, l, forcing))
    }
}

pub(crate) fn solve_pd(r: &DMatrix<f64>, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    match r.clone().cholesky() {
        Some(c) => c.solve(rhs),
        None => r
            .clone()
            .lu()
            .solve(rhs)
            .expect("R is nonsingular for a validated problem"),
    }
}

/// Piecewise-constant forcing on equal subintervals of `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    horizon: f64,
    levels: Vec<SymMat>,
}

impl Forcing {
    pub fn new(horizon: f64, levels: Vec<SymMat>) -> Self {
        assert!(!levels.is_empty(), "forcing needs at least one level");
        Forcing { horizon, levels }
    }

    pub fn zero(horizon: f64, n: usize) -> Self {
        Forcing::new(horizon, vec![SymMat::zeros(n)])
    }

    pub fn levels(&self) -> &[SymMat] {
        &self.levels
    }

    pub fn at(&self, t: f64) -> &SymMat {
        let k = self.levels.len();
        let idx = ((t / self.horizon) * k as f64).floor();
        let idx = if idx < 0.0 {
            0
        } else {
            (idx as usize).min(k - 1)
        };
        &self.levels[idx]
    }

    /// Switch times strictly inside `(0, T)`.
    pub fn switch_times(&self) -> Vec<f64> {
        let k = self.levels.len();
        (1..k).map(|j| self.horizon * j as f64 / k as f64).collect()
    }

    pub fn sample(&self, grid: TimeGrid) -> MatTrajectory {
        MatTrajectory::from_fn(grid, "forcing", |t| self.at(t).clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DreOptions {
    pub escape_cap: f64,
}

impl Default for DreOptions {
    fn default() -> Self {
        DreOptions {
            escape_cap: DEFAULT_ESCAPE_CAP,
        }
    }
}

/// Result of integrating a (possibly forced) Riccati equation.
#[derive(Debug, Clone, PartialEq)]
pub struct DreSolution {
    /// Samples up to the escape (all nodes when no escape happened).
    pub lambda: MatTrajectory,
    pub escaped: bool,
    pub escape_time: Option<f64>,
    /// Largest `‖𝓡(Λ) − H‖_max` over the valid nodes, with `Λ̇` from finite
    /// differences.
    pub residual_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Backward,
    Forward,
}

fn rk4_step(data: &RiccatiData, forcing: Option<&Forcing>, t: f64, dt: f64, y: &SymMat) -> SymMat {
    let f = |t: f64, y: &SymMat| data.derivative(t, y, forcing);
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * dt, &(y + &k1.scale(0.5 * dt)));
    let k3 = f(t + 0.5 * dt, &(y + &k2.scale(0.5 * dt)));
    let k4 = f(t + dt, &(y + &k3.scale(dt)));
    let incr = &(&(&k1 + &k2.scale(2.0)) + &k3.scale(2.0)) + &k4;
    y + &incr.scale(dt / 6.0)
}

fn escaped(y: &SymMat, cap: f64) -> bool {
    !y.is_finite() || sigma_max_norm(y) > cap
}

fn integrate(
    data: &RiccatiData,
    boundary: &SymMat,
    grid: TimeGrid,
    forcing: Option<&Forcing>,
    dir: Direction,
    opts: DreOptions,
    label: &str,
) -> Result<DreSolution> {
    let n = data.n();
    if boundary.dim() != n {
        return Err(dim_mismatch(
            "Riccati boundary condition",
            n,
            boundary.dim(),
        ));
    }
    let steps = grid.steps();
    let h = grid.step();
    let mut out = Vec::with_capacity(grid.len());
    out.push(boundary.clone());
    let mut escape_time = None;
    let mut y = boundary.clone();
    for i in 0..steps {
        let (k_from, k_to, dt) = match dir {
            Direction::Backward => (steps - i, steps - i - 1, -h),
            Direction::Forward => (i, i + 1, h),
        };
        let t = grid.t(k_from);
        let next = rk4_step(data, forcing, t, dt, &y);
        if escaped(&next, opts.escape_cap) {
            escape_time = Some(locate_escape(data, forcing, t, grid.t(k_to), &y, opts));
            break;
        }
        y = next;
        out.push(y.clone());
    }
    let start = match dir {
        Direction::Backward => {
            out.reverse();
            grid.len() - out.len()
        }
        Direction::Forward => 0,
    };
    let lambda = MatTrajectory::partial(grid, start, out, label)?;
    let residual_max = if lambda.len() >= 3 {
        let res = riccati_residual(&lambda, data)?;
        res.iter()
            .map(|(_, t, r)| match forcing {
                Some(f) => (r - f.at(t)).norm_max(),
                None => r.norm_max(),
            })
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(DreSolution {
        escaped: escape_time.is_some(),
        escape_time,
        lambda,
        residual_max,
    })
}

/// Re-integrates the failing step with finer substeps and returns the end of
/// the first substep that crosses the cap.
fn locate_escape(
    data: &RiccatiData,
    forcing: Option<&Forcing>,
    t_from: f64,
    t_to: f64,
    y0: &SymMat,
    opts: DreOptions,
) -> f64 {
    let dt = (t_to - t_from) / ESCAPE_SUBSTEPS as f64;
    let mut y = y0.clone();
    for j in 0..ESCAPE_SUBSTEPS {
        let t = t_from + j as f64 * dt;
        y = rk4_step(data, forcing, t, dt, &y);
        if escaped(&y, opts.escape_cap) {
            return t + dt;
        }
    }
    t_to
}

/// Maximal-final extremal: integrates `𝓡(Λ) = 0` backward from `Λ(T) = Λ_f`.
pub fn solve_dre_final(
    data: &RiccatiData,
    lambda_f: &SymMat,
    grid: TimeGrid,
    opts: DreOptions,
) -> Result<DreSolution> {
    integrate(
        data,
        lambda_f,
        grid,
        None,
        Direction::Backward,
        opts,
        "dre_final",
    )
}

/// Minimal-initial extremal: integrates `𝓡(Λ) = 0` forward from `Λ(0) = Λ_i`.
pub fn solve_dre_initial(
    data: &RiccatiData,
    lambda_i: &SymMat,
    grid: TimeGrid,
    opts: DreOptions,
) -> Result<DreSolution> {
    integrate(
        data,
        lambda_i,
        grid,
        None,
        Direction::Forward,
        opts,
        "dre_initial",
    )
}

/// Solves the forced equation `𝓡(Λ) = H` backward from `Λ(T) = Λ_f`.
pub fn solve_forced_final(
    data: &RiccatiData,
    lambda_f: &SymMat,
    forcing: &Forcing,
    grid: TimeGrid,
    opts: DreOptions,
) -> Result<DreSolution> {
    integrate(
        data,
        lambda_f,
        grid,
        Some(forcing),
        Direction::Backward,
        opts,
        "dri_final",
    )
}

/// Solves the forced equation `𝓡(Λ) = H` forward from `Λ(0) = Λ_i`.
pub fn solve_forced_initial(
    data: &RiccatiData,
    lambda_i: &SymMat,
    forcing: &Forcing,
    grid: TimeGrid,
    opts: DreOptions,
) -> Result<DreSolution> {
    integrate(
        data,
        lambda_i,
        grid,
        Some(forcing),
        Direction::Forward,
        opts,
        "dri_initial",
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriOptions {
    pub switch_points: usize,
    /// Scale of the entries of `G` in `H = G·Gᵀ`; `None` uses
    /// `0.5·(1 + ‖Q‖_max)`.
    pub amplitude: Option<f64>,
    pub seed: u64,
    pub dre: DreOptions,
}

impl Default for DriOptions {
    fn default() -> Self {
        DriOptions {
            switch_points: 10,
            amplitude: None,
            seed: 0,
            dre: DreOptions::default(),
        }
    }
}

/// A solution of the Riccati inequality together with its forcing `H ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriSample {
    pub solution: DreSolution,
    pub forcing: Forcing,
}

impl DriSample {
    pub fn lambda(&self) -> &MatTrajectory {
        &self.solution.lambda
    }

    pub fn forcing_trajectory(&self) -> MatTrajectory {
        self.forcing.sample(*self.solution.lambda.grid())
    }
}

/// Draws a random piecewise-constant PSD forcing from `seed`.
pub fn random_forcing(data: &RiccatiData, horizon: f64, opts: &DriOptions) -> Forcing {
    let n = data.n();
    let amp = opts
        .amplitude
        .unwrap_or_else(|| 0.5 * (1.0 + data.forcing_scale()));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let levels = (0..opts.switch_points.max(1))
        .map(|_| {
            let g = DMatrix::from_fn(n, n, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                amp * z
            });
            SymMat::gram(&g)
        })
        .collect();
    Forcing::new(horizon, levels)
}

/// Random solution of the final-value Riccati inequality `𝓡(Λ) ⪰ 0`.
pub fn sample_dri_solution(
    data: &RiccatiData,
    lambda_f: &SymMat,
    grid: TimeGrid,
    opts: &DriOptions,
) -> Result<DriSample> {
    let forcing = random_forcing(data, grid.horizon(), opts);
    let mut solution = solve_forced_final(data, lambda_f, &forcing, grid, opts.dre)?;
    solution.lambda.set_label(format!("dri_{}", opts.seed));
    Ok(DriSample { solution, forcing })
}

/// Random solution of the initial-value Riccati inequality `𝓡(Λ) ⪰ 0`.
pub fn sample_dri_initial(
    data: &RiccatiData,
    lambda_i: &SymMat,
    grid: TimeGrid,
    opts: &DriOptions,
) -> Result<DriSample> {
    let forcing = random_forcing(data, grid.horizon(), opts);
    let solution = solve_forced_initial(data, lambda_i, &forcing, grid, opts.dre)?;
    Ok(DriSample { solution, forcing })
}

/// `𝓡(Λ)` at the valid nodes with `Λ̇` from finite differences.
pub fn riccati_residual(lambda: &MatTrajectory, data: &RiccatiData) -> Result<MatTrajectory> {
    if lambda.dim() != data.n() {
        return Err(dim_mismatch("riccati_residual", data.n(), lambda.dim()));
    }
    let dot = finite_difference(lambda, "lambda_dot_fd")?;
    let samples = lambda
        .iter()
        .zip(dot.samples())
        .map(|((_, t, l), d)| d + &data.rhs(t, l))
        .collect();
    MatTrajectory::partial(
        *lambda.grid(),
        lambda.first_index(),
        samples,
        "riccati_residual",
    )
}

/// Loewner ordering between two trajectories on their shared nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoewnerComparison {
    /// `min_k λ_min(a_k − b_k)`.
    pub min_eig_a_minus_b: f64,
    /// `min_k λ_min(b_k − a_k)`.
    pub min_eig_b_minus_a: f64,
    pub shared_nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoewnerOrder {
    /// `a ⪰ b` and `b ⪰ a` within tolerance.
    Both,
    AGeqB,
    BGeqA,
    Incomparable,
}

impl LoewnerComparison {
    pub fn verdict(&self, tol: f64) -> LoewnerOrder {
        match (
            self.min_eig_a_minus_b >= -tol,
            self.min_eig_b_minus_a >= -tol,
        ) {
            (true, true) => LoewnerOrder::Both,
            (true, false) => LoewnerOrder::AGeqB,
            (false, true) => LoewnerOrder::BGeqA,
            (false, false) => LoewnerOrder::Incomparable,
        }
    }
}

pub fn loewner_margins(a: &MatTrajectory, b: &MatTrajectory) -> Result<LoewnerComparison> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    if !a.is_empty() && !b.is_empty() && a.dim() != b.dim() {
        return Err(dim_mismatch("loewner_compare", a.dim(), b.dim()));
    }
    let mut out = LoewnerComparison {
        min_eig_a_minus_b: f64::INFINITY,
        min_eig_b_minus_a: f64::INFINITY,
        shared_nodes: 0,
    };
    for (k, _, sa) in a.iter() {
        if let Some(sb) = b.get(k) {
            let eig = (sa - sb).eigenvalues();
            let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            out.min_eig_a_minus_b = out.min_eig_a_minus_b.min(lo);
            out.min_eig_b_minus_a = out.min_eig_b_minus_a.min(-hi);
            out.shared_nodes += 1;
        }
    }
    Ok(out)
}

/// Loewner verdict with absolute eigenvalue tolerance `tol`.
pub fn loewner_compare(a: &MatTrajectory, b: &MatTrajectory, tol: f64) -> Result<LoewnerOrder> {
    Ok(loewner_margins(a, b)?.verdict(tol))
}

/// State-transition matrix of `ẋ = F(t)x` on grid nodes.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    f: MatrixFn,
    grid: TimeGrid,
}

impl TransitionMatrix {
    pub fn new(f: MatrixFn, grid: TimeGrid) -> Result<Self> {
        let (r, c) = f.shape();
        if r != c {
            return Err(dim_mismatch(
                "TransitionMatrix",
                "square F",
                format!("{r}x{c}"),
            ));
        }
        Ok(TransitionMatrix { f, grid })
    }

    /// `Φ(t_k, t_j)` with `∂Φ/∂t = F(t)Φ`, `Φ(t_j, t_j) = I`, integrated by
    /// RK4 over the grid steps between the two nodes (either direction).
    pub fn between(&self, k: usize, j: usize) -> DMatrix<f64> {
        let n = self.f.shape().0;
        let mut phi = DMatrix::identity(n, n);
        let h = self.grid.step();
        let (dt, count) = if k >= j { (h, k - j) } else { (-h, j - k) };
        let f = &self.f;
        for i in 0..count {
            let t = if k >= j {
                self.grid.t(j + i)
            } else {
                self.grid.t(j - i)
            };
            let k1 = f.at(t) * &phi;
            let k2 = f.at(t + 0.5 * dt) * (&phi + &k1 * (0.5 * dt));
            let k3 = f.at(t + 0.5 * dt) * (&phi + &k2 * (0.5 * dt));
            let k4 = f.at(t + dt) * (&phi + &k3 * dt);
            phi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        phi
    }
}

fn lyapunov_rhs(f: &MatrixFn, h: &MatrixFn, t: f64, x: &SymMat) -> SymMat {
    // Ẋ = −(FᵀX + XF + H)
    let xf = x.as_matrix() * f.at(t);
    let s = &xf + xf.transpose() + h.at(t);
    SymMat::symmetrize(&(-s)).expect("square")
}

fn lyapunov_integrate(
    f: &MatrixFn,
    h: &MatrixFn,
    boundary: &SymMat,
    grid: TimeGrid,
    dir: Direction,
) -> Result<MatTrajectory> {
    let n = f.shape().0;
    if boundary.dim() != n || h.shape() != (n, n) || f.shape() != (n, n) {
        return Err(dim_mismatch("Lyapunov data", n, boundary.dim()));
    }
    let steps = grid.steps();
    let dt_abs = grid.step();
    let mut out = Vec::with_capacity(grid.len());
    let mut y = boundary.clone();
    out.push(y.clone());
    for i in 0..steps {
        let (t, dt) = match dir {
            Direction::Backward => (grid.t(steps - i), -dt_abs),
            Direction::Forward => (grid.t(i), dt_abs),
        };
        let k1 = lyapunov_rhs(f, h, t, &y);
        let k2 = lyapunov_rhs(f, h, t + 0.5 * dt, &(&y + &k1.scale(0.5 * dt)));
        let k3 = lyapunov_rhs(f, h, t + 0.5 * dt, &(&y + &k2.scale(0.5 * dt)));
        let k4 = lyapunov_rhs(f, h, t + dt, &(&y + &k3.scale(dt)));
        let incr = &(&(&k1 + &k2.scale(2.0)) + &k3.scale(2.0)) + &k4;
        y = &y + &incr.scale(dt / 6.0);
        out.push(y.clone());
    }
    if dir == Direction::Backward {
        out.reverse();
    }
    MatTrajectory::new(grid, out, "lyapunov")
}

/// `−Ẋ = FᵀX + XF + H`, `X(T) = X_T`, integrated backward.
pub fn solve_lyapunov_final(
    f: &MatrixFn,
    h: &MatrixFn,
    x_t: &SymMat,
    grid: TimeGrid,
) -> Result<MatTrajectory> {
    lyapunov_integrate(f, h, x_t, grid, Direction::Backward)
}

/// `−Ẋ = FᵀX + XF + H`, `X(0) = X_0`, integrated forward.
pub fn solve_lyapunov_initial(
    f: &MatrixFn,
    h: &MatrixFn,
    x_0: &SymMat,
    grid: TimeGrid,
) -> Result<MatTrajectory> {
    lyapunov_integrate(f, h, x_0, grid, Direction::Forward)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn s1(v: f64) -> SymMat {
        SymMat::from_diagonal(&[v])
    }

    fn c1(v: f64) -> MatrixFn {
        MatrixFn::Constant(dmatrix![v])
    }

    fn scalar_lqr() -> RiccatiData {
        RiccatiData::from_cost(
            &StateSpace::scalar(0.0, 1.0, 0.0, 0.0),
            &CostData::scalar(1.0, 0.0, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn transition_matrix_examples() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let tm = TransitionMatrix::new(MatrixFn::Constant(DMatrix::zeros(2, 2)), grid).unwrap();
        assert_eq!(tm.between(40, 3), DMatrix::identity(2, 2));
        let tm = TransitionMatrix::new(c1(-0.8), grid).unwrap();
        let (k, j) = (50, 10);
        let want = (-0.8 * (grid.t(k) - grid.t(j))).exp();
        assert!((tm.between(k, j)[(0, 0)] - want).abs() < 1e-9);
        assert!((tm.between(j, k)[(0, 0)] - 1.0 / want).abs() < 1e-9);
        let group = tm.between(50, 30) * tm.between(30, 10);
        assert!((group[(0, 0)] - tm.between(50, 10)[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_examples() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let x = solve_lyapunov_final(&c1(0.0), &c1(1.0), &s1(0.0), grid).unwrap();
        for (_, t, v) in x.iter() {
            assert!((v.get(0, 0) - (1.0 - t)).abs() < 1e-13);
        }
        let x = solve_lyapunov_final(&c1(0.3), &c1(0.0), &s1(0.0), grid).unwrap();
        assert!(x.norm_max() == 0.0);
    }

    #[test]
    fn dre_zero_equilibrium() {
        let data = RiccatiData::from_cost(
            &StateSpace::scalar(1.7, 1.0, 0.0, 0.0),
            &CostData::scalar(0.0, 0.0, 1.0),
        )
        .unwrap();
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let sol = solve_dre_final(&data, &s1(0.0), grid, DreOptions::default()).unwrap();
        assert!(!sol.escaped);
        assert_eq!(sol.lambda.norm_max(), 0.0);
        let sol = solve_dre_initial(&data, &s1(0.0), grid, DreOptions::default()).unwrap();
        assert_eq!(sol.lambda.norm_max(), 0.0);
    }

    #[test]
    fn dre_final_tanh() {
        let grid = TimeGrid::new(1.0, 512).unwrap();
        let sol = solve_dre_final(&scalar_lqr(), &s1(0.0), grid, DreOptions::default()).unwrap();
        assert!(sol.lambda.is_complete());
        let err = sol
            .lambda
            .iter()
            .map(|(_, t, l)| (l.get(0, 0) - (1.0 - t).tanh()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "max error {err}");
        assert!(sol.residual_max < 1e-5);
    }

    #[test]
    fn dre_initial_forward_tanh() {
        // λ̇ = λ² − 1 from λ(0) = 0 gives λ(t) = −tanh(t)
        let grid = TimeGrid::new(1.0, 256).unwrap();
        let sol = solve_dre_initial(&scalar_lqr(), &s1(0.0), grid, DreOptions::default()).unwrap();
        for (_, t, l) in sol.lambda.iter() {
            assert!((l.get(0, 0) + t.tanh()).abs() < 1e-9);
        }
        // sign-flipped pair (q, m) = (−1, −1): λ̇ = 1 − λ², λ = tanh(t)
        let sol = solve_dre_initial(
            &RiccatiData::scalar(0.0, -1.0, -1.0),
            &s1(0.0),
            grid,
            DreOptions::default(),
        )
        .unwrap();
        for (_, t, l) in sol.lambda.iter() {
            assert!((l.get(0, 0) - t.tanh()).abs() < 1e-9);
        }
    }

    #[test]
    fn dre_escape_tan() {
        let grid = TimeGrid::new(2.0, 512).unwrap();
        let data = RiccatiData::from_cost(
            &StateSpace::scalar(0.0, 1.0, 0.0, 0.0),
            &CostData::scalar(-1.0, 0.0, 1.0),
        )
        .unwrap();
        let sol = solve_dre_final(&data, &s1(0.0), grid, DreOptions::default()).unwrap();
        assert!(sol.escaped);
        let te = sol.escape_time.unwrap();
        let want = 2.0 - std::f64::consts::FRAC_PI_2;
        assert!((te - want).abs() <= 2.0 * grid.step(), "{te} vs {want}");
        assert!(!sol.lambda.is_complete());
        // valid samples lie after the escape time
        assert!(grid.t(sol.lambda.first_index()) > te - 1e-12);
        assert!(sol.lambda.get(0).is_none());
        for (_, t, l) in sol.lambda.iter().filter(|(_, t, _)| *t > want + 0.2) {
            assert!((l.get(0, 0) + (2.0 - t).tan()).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_forcing_reproduces_extremal() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let data = scalar_lqr();
        let dre = solve_dre_final(&data, &s1(0.0), grid, DreOptions::default()).unwrap();
        let forced = solve_forced_final(
            &data,
            &s1(0.0),
            &Forcing::zero(1.0, 1),
            grid,
            DreOptions::default(),
        )
        .unwrap();
        assert_eq!(dre.lambda.samples(), forced.lambda.samples());
    }

    #[test]
    fn dri_sample_residual_matches_forcing() {
        let grid = TimeGrid::new(1.0, 400).unwrap();
        let data = RiccatiData::from_cost(
            &StateSpace::without_output(dmatrix![0.0, 1.0; -1.0, -0.2], dmatrix![0.0; 1.0]),
            &CostData::diagonal_blocks(SymMat::identity(2), SymMat::from_diagonal(&[0.5])),
        )
        .unwrap();
        let opts = DriOptions {
            seed: 11,
            ..DriOptions::default()
        };
        let sample = sample_dri_solution(&data, &SymMat::zeros(2), grid, &opts).unwrap();
        let res = riccati_residual(sample.lambda(), &data).unwrap();
        let switches = sample.forcing.switch_times();
        let h = grid.step();
        for (_, t, r) in res.iter() {
            if switches.iter().any(|s| (s - t).abs() < 3.0 * h) {
                continue;
            }
            let hk = sample.forcing.at(t);
            assert!(hk.is_psd(1e-12));
            assert!((r - hk).norm_max() < 1e-3, "t={t}");
        }
        for l in sample.forcing.levels() {
            assert!(l.is_psd(1e-12));
        }
    }

    #[test]
    fn dri_forcing_is_reproducible() {
        let data = scalar_lqr();
        let opts = DriOptions {
            seed: 99,
            ..DriOptions::default()
        };
        let a = random_forcing(&data, 1.0, &opts);
        let b = random_forcing(&data, 1.0, &opts);
        assert_eq!(a, b);
        assert_eq!(a.levels().len(), 10);
        let other = random_forcing(&data, 1.0, &DriOptions { seed: 100, ..opts });
        assert_ne!(a, other);
    }

    #[test]
    fn loewner_examples() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let a = MatTrajectory::from_fn(grid, "a", |_| SymMat::from_diagonal(&[2.0, 0.0]));
        let b = MatTrajectory::from_fn(grid, "b", |_| SymMat::identity(2));
        assert_eq!(loewner_compare(&a, &a, 1e-12).unwrap(), LoewnerOrder::Both);
        assert_eq!(
            loewner_compare(&a, &b, 1e-12).unwrap(),
            LoewnerOrder::Incomparable
        );
        let c =
            MatTrajectory::from_fn(TimeGrid::new(1.0, 5).unwrap(), "c", |_| SymMat::identity(2));
        assert_eq!(loewner_compare(&a, &c, 1e-12), Err(Error::GridMismatch));
    }

    #[test]
    fn riccati_comparison_scalar() {
        let grid = TimeGrid::new(1.0, 256).unwrap();
        let sys = StateSpace::scalar(0.3, 1.0, 0.0, 0.0);
        let d1 = RiccatiData::from_cost(&sys, &CostData::scalar(2.0, 0.0, 1.0)).unwrap();
        let d2 = RiccatiData::from_cost(&sys, &CostData::scalar(1.0, 0.0, 1.0)).unwrap();
        let l1 = solve_dre_final(&d1, &s1(0.0), grid, DreOptions::default()).unwrap();
        let l2 = solve_dre_final(&d2, &s1(0.0), grid, DreOptions::default()).unwrap();
        assert_eq!(
            loewner_compare(&l1.lambda, &l2.lambda, 1e-12).unwrap(),
            LoewnerOrder::AGeqB
        );
    }

    #[test]
    fn residual_of_zero_solution() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let data = RiccatiData::from_cost(
            &StateSpace::scalar(-0.5, 1.0, 0.0, 0.0),
            &CostData::scalar(0.0, 0.0, 2.0),
        )
        .unwrap();
        let zero = MatTrajectory::from_fn(grid, "zero", |_| s1(0.0));
        assert_eq!(riccati_residual(&zero, &data).unwrap().norm_max(), 0.0);
    }

    #[test]
    fn finite_difference_is_exact_on_quadratics() {
        let grid = TimeGrid::new(2.0, 10).unwrap();
        let tr = MatTrajectory::from_fn(grid, "q", |t| s1(3.0 * t * t - t + 1.0));
        let d = finite_difference(&tr, "d").unwrap();
        for (_, t, v) in d.iter() {
            assert!((v.get(0, 0) - (6.0 * t - 1.0)).abs() < 1e-12);
        }
    }
}
