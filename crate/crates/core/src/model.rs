//! Problem data: time grid, state-space system, cost data, variants, the
//! quadratic-form matrix `𝒬 = [Q N; Nᵀ R]` and the structured operators
//! `ℰ(S)`, `𝒜(S)` together with their adjoints.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_mismatch, Result};
use crate::symmat::{SymMat, DEFAULT_TOL};

/// Uniform grid `t_k = k·T/steps`, `k = 0..=steps`, on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        let mut v = Vec::new();
        if !(horizon.is_finite() && horizon > 0.0) {
            v.push(Violation::HorizonNotPositive { horizon });
        }
        if steps == 0 {
            v.push(Violation::ZeroSteps);
        }
        if !v.is_empty() {
            return Err(ValidationError { violations: v }.into());
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node time; the last node is exactly `T`.
    pub fn t(&self, k: usize) -> f64 {
        self.horizon * (k as f64) / (self.steps as f64)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |k| self.t(k))
    }

    /// Same horizon with `factor` times as many steps.
    pub fn refine(&self, factor: usize) -> Self {
        TimeGrid {
            horizon: self.horizon,
            steps: self.steps * factor.max(1),
        }
    }

    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        TimeGrid::new(self.horizon, steps)
    }
}

/// A matrix-valued function of time: constant, or node samples on a uniform
/// grid over `[0, T]` with piecewise-linear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixFn {
    Constant(DMatrix<f64>),
    Sampled {
        horizon: f64,
        samples: Vec<DMatrix<f64>>,
    },
}

impl MatrixFn {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            MatrixFn::Constant(m) => m.shape(),
            MatrixFn::Sampled { samples, .. } => samples.first().map_or((0, 0), |m| m.shape()),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, MatrixFn::Constant(_))
    }

    pub fn at(&self, t: f64) -> DMatrix<f64> {
        match self {
            MatrixFn::Constant(m) => m.clone(),
            MatrixFn::Sampled { horizon, samples } => {
                let last = samples.len() - 1;
                if last == 0 {
                    return samples[0].clone();
                }
                let s = (t / horizon * last as f64).clamp(0.0, last as f64);
                let r = s.round();
                if (s - r).abs() < 1e-9 {
                    return samples[r as usize].clone();
                }
                let i = (s.floor() as usize).min(last - 1);
                let frac = s - i as f64;
                &samples[i] * (1.0 - frac) + &samples[i + 1] * frac
            }
        }
    }

    /// Evaluation symmetrized as `(M + Mᵀ)/2`.
    pub fn sym_at(&self, t: f64) -> SymMat {
        SymMat::symmetrize(&self.at(t)).expect("square matrix function")
    }

    /// Every stored matrix (one for constant data).
    pub fn samples(&self) -> Vec<&DMatrix<f64>> {
        match self {
            MatrixFn::Constant(m) => vec![m],
            MatrixFn::Sampled { samples, .. } => samples.iter().collect(),
        }
    }
}

impl From<DMatrix<f64>> for MatrixFn {
    fn from(m: DMatrix<f64>) -> Self {
        MatrixFn::Constant(m)
    }
}

/// `ẋ = A x + B v`, `z = C x + D v`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: MatrixFn,
    pub b: MatrixFn,
    pub c: MatrixFn,
    pub d: MatrixFn,
}

impl StateSpace {
    pub fn new(
        a: impl Into<MatrixFn>,
        b: impl Into<MatrixFn>,
        c: impl Into<MatrixFn>,
        d: impl Into<MatrixFn>,
    ) -> Self {
        StateSpace {
            a: a.into(),
            b: b.into(),
            c: c.into(),
            d: d.into(),
        }
    }

    /// System without an output map (`p = 0`).
    pub fn without_output(a: impl Into<MatrixFn>, b: impl Into<MatrixFn>) -> Self {
        let a = a.into();
        let b = b.into();
        let (n, m) = b.shape();
        StateSpace {
            c: MatrixFn::Constant(DMatrix::zeros(0, n)),
            d: MatrixFn::Constant(DMatrix::zeros(0, m)),
            a,
            b,
        }
    }

    /// Constant scalar system.
    pub fn scalar(a: f64, b: f64, c: f64, d: f64) -> Self {
        let m = |v| DMatrix::from_element(1, 1, v);
        StateSpace::new(m(a), m(b), m(c), m(d))
    }

    pub fn n(&self) -> usize {
        self.a.shape().0
    }

    pub fn m(&self) -> usize {
        self.b.shape().1
    }

    pub fn p(&self) -> usize {
        self.c.shape().0
    }

    pub fn is_time_invariant(&self) -> bool {
        self.a.is_constant() && self.b.is_constant() && self.c.is_constant() && self.d.is_constant()
    }

    fn check(&self, grid: &TimeGrid, out: &mut Vec<Violation>) {
        let n = self.a.shape().0;
        let m = self.b.shape().1;
        let p = self.c.shape().0;
        let want = [("A", n, n), ("B", n, m), ("C", p, n), ("D", p, m)];
        let fns = [&self.a, &self.b, &self.c, &self.d];
        for ((name, r, c), f) in want.into_iter().zip(fns) {
            check_fn(name, f, (r, c), grid, out);
        }
        if n == 0 {
            out.push(Violation::Empty { field: "A" });
        }
    }
}

fn check_fn(
    field: &'static str,
    f: &MatrixFn,
    shape: (usize, usize),
    grid: &TimeGrid,
    out: &mut Vec<Violation>,
) {
    if let MatrixFn::Sampled { horizon, samples } = f {
        if samples.len() < 2 {
            out.push(Violation::TooFewSamples {
                field,
                count: samples.len(),
            });
            return;
        }
        if (horizon - grid.horizon()).abs() > 1e-12 * grid.horizon().max(1.0) {
            out.push(Violation::SampleHorizon {
                field,
                expected: grid.horizon(),
                found: *horizon,
            });
        }
    }
    for s in f.samples() {
        if s.shape() != shape {
            out.push(Violation::Shape {
                field,
                expected: shape,
                found: s.shape(),
            });
            return;
        }
        if s.iter().any(|v| !v.is_finite()) {
            out.push(Violation::NonFinite { field });
            return;
        }
    }
}

/// LQ cost blocks `Q`, `N`, `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostData {
    pub q: SymMat,
    pub n: DMatrix<f64>,
    pub r: SymMat,
}

impl CostData {
    pub fn new(q: SymMat, n: DMatrix<f64>, r: SymMat) -> Self {
        CostData { q, n, r }
    }

    /// `N = 0`.
    pub fn diagonal_blocks(q: SymMat, r: SymMat) -> Self {
        let n = DMatrix::zeros(q.dim(), r.dim());
        CostData { q, n, r }
    }

    pub fn scalar(q: f64, n: f64, r: f64) -> Self {
        CostData {
            q: SymMat::from_diagonal(&[q]),
            n: DMatrix::from_element(1, 1, n),
            r: SymMat::from_diagonal(&[r]),
        }
    }

    /// `[Q N; Nᵀ R]`.
    pub fn assemble(&self) -> SymMat {
        let n = self.q.dim();
        let m = self.r.dim();
        let mut out = DMatrix::zeros(n + m, n + m);
        out.view_mut((0, 0), (n, n)).copy_from(self.q.as_matrix());
        out.view_mut((0, n), (n, m)).copy_from(&self.n);
        out.view_mut((n, 0), (m, n)).copy_from(&self.n.transpose());
        out.view_mut((n, n), (m, m)).copy_from(self.r.as_matrix());
        SymMat::from_symmetric_unchecked(out)
    }

    fn check(&self, nx: usize, nu: usize, out: &mut Vec<Violation>) {
        let mut ok = true;
        for (field, found, want) in [
            ("Q", self.q.as_matrix().shape(), (nx, nx)),
            ("N", self.n.shape(), (nx, nu)),
            ("R", self.r.as_matrix().shape(), (nu, nu)),
        ] {
            if found != want {
                out.push(Violation::Shape {
                    field,
                    expected: want,
                    found,
                });
                ok = false;
            }
        }
        let finite =
            self.q.is_finite() && self.r.is_finite() && self.n.iter().all(|v| v.is_finite());
        if !finite {
            out.push(Violation::NonFinite { field: "cost" });
            ok = false;
        }
        if ok && !self.r.is_pd(DEFAULT_TOL) {
            out.push(Violation::RNotPd {
                min_eig: self.r.min_eig(),
            });
        }
    }
}

/// Problem variants.
#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    /// Deterministic LQR from a given initial state.
    Lqr { cost: CostData, x_i: DVector<f64> },
    /// LQR with Gaussian initial state covariance `X_i` and white process
    /// noise intensity `W(t)`.
    StochLqr {
        cost: CostData,
        x_i_cov: SymMat,
        w: MatrixFn,
    },
    /// `γ²‖v‖² − ‖Cx‖²` with zero initial state.
    BoundedReal { gamma: f64 },
    /// `zᵀv` with `z = Cx + Dv` and zero initial state.
    PositiveReal,
    /// Indefinite quadratic form with `R ≻ 0`.
    GeneralIqc { cost: CostData, x_i: DVector<f64> },
}

impl Variant {
    pub fn tag(&self) -> VariantTag {
        match self {
            Variant::Lqr { .. } => VariantTag::Lqr,
            Variant::StochLqr { .. } => VariantTag::StochLqr,
            Variant::BoundedReal { .. } => VariantTag::BoundedReal,
            Variant::PositiveReal => VariantTag::PositiveReal,
            Variant::GeneralIqc { .. } => VariantTag::GeneralIqc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantTag {
    Lqr,
    StochLqr,
    BoundedReal,
    PositiveReal,
    GeneralIqc,
}

impl VariantTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            VariantTag::Lqr => "lqr",
            VariantTag::StochLqr => "stoch_lqr",
            VariantTag::BoundedReal => "bounded_real",
            VariantTag::PositiveReal => "positive_real",
            VariantTag::GeneralIqc => "iqc",
        }
    }
}

impl fmt::Display for VariantTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub sys: StateSpace,
    pub grid: TimeGrid,
    pub variant: Variant,
}

impl ProblemSpec {
    pub fn new(sys: StateSpace, grid: TimeGrid, variant: Variant) -> Self {
        ProblemSpec { sys, grid, variant }
    }

    /// Initial state for deterministic variants (zero for the IQC tests).
    pub fn initial_state(&self) -> DVector<f64> {
        match &self.variant {
            Variant::Lqr { x_i, .. } | Variant::GeneralIqc { x_i, .. } => x_i.clone(),
            _ => DVector::zeros(self.sys.n()),
        }
    }

    pub fn with_grid(&self, grid: TimeGrid) -> Self {
        ProblemSpec {
            grid,
            ..self.clone()
        }
    }

    /// Checks dimensions, finiteness and the sign hypotheses of the variant.
    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut v = Vec::new();
        self.sys.check(&self.grid, &mut v);
        let (n, m, p) = (self.sys.n(), self.sys.m(), self.sys.p());
        let check_x = |x: &DVector<f64>, v: &mut Vec<Violation>| {
            if x.len() != n {
                v.push(Violation::Shape {
                    field: "x_i",
                    expected: (n, 1),
                    found: (x.len(), 1),
                });
            } else if x.iter().any(|e| !e.is_finite()) {
                v.push(Violation::NonFinite { field: "x_i" });
            }
        };
        match &self.variant {
            Variant::Lqr { cost, x_i } => {
                cost.check(n, m, &mut v);
                check_x(x_i, &mut v);
                if cost.q.dim() == n && cost.q.is_finite() && !cost.q.is_psd(DEFAULT_TOL) {
                    v.push(Violation::QNotPsd {
                        min_eig: cost.q.min_eig(),
                    });
                }
            }
            Variant::StochLqr { cost, x_i_cov, w } => {
                cost.check(n, m, &mut v);
                if cost.q.dim() == n && cost.q.is_finite() && !cost.q.is_psd(DEFAULT_TOL) {
                    v.push(Violation::QNotPsd {
                        min_eig: cost.q.min_eig(),
                    });
                }
                if x_i_cov.dim() != n {
                    v.push(Violation::Shape {
                        field: "X_i",
                        expected: (n, n),
                        found: (x_i_cov.dim(), x_i_cov.dim()),
                    });
                } else if !x_i_cov.is_finite() {
                    v.push(Violation::NonFinite { field: "X_i" });
                } else if !x_i_cov.is_psd(DEFAULT_TOL) {
                    v.push(Violation::NotPsd {
                        field: "X_i",
                        min_eig: x_i_cov.min_eig(),
                    });
                }
                let before = v.len();
                check_fn("W", w, (n, n), &self.grid, &mut v);
                if v.len() == before {
                    for s in w.samples() {
                        let s = SymMat::symmetrize(s).expect("checked square");
                        if !s.is_psd(DEFAULT_TOL) {
                            v.push(Violation::NotPsd {
                                field: "W",
                                min_eig: s.min_eig(),
                            });
                            break;
                        }
                    }
                }
            }
            Variant::BoundedReal { gamma } => {
                if !(gamma.is_finite() && *gamma > 0.0) {
                    v.push(Violation::GammaNotPositive { gamma: *gamma });
                }
            }
            Variant::PositiveReal => {
                if p != m {
                    v.push(Violation::Shape {
                        field: "D",
                        expected: (m, m),
                        found: (p, m),
                    });
                } else {
                    for d in self.sys.d.samples() {
                        if d.shape() != (m, m) || d.iter().any(|e| !e.is_finite()) {
                            continue;
                        }
                        let s = SymMat::symmetrize(&(d + d.transpose())).expect("square");
                        if !s.is_pd(DEFAULT_TOL) {
                            v.push(Violation::DPlusDtNotPd {
                                min_eig: s.min_eig(),
                            });
                            break;
                        }
                    }
                }
            }
            Variant::GeneralIqc { cost, x_i } => {
                cost.check(n, m, &mut v);
                check_x(x_i, &mut v);
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ValidationError { violations: v })
        }
    }
}

/// One failed validation check.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    HorizonNotPositive {
        horizon: f64,
    },
    ZeroSteps,
    Empty {
        field: &'static str,
    },
    Shape {
        field: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    NonFinite {
        field: &'static str,
    },
    TooFewSamples {
        field: &'static str,
        count: usize,
    },
    SampleHorizon {
        field: &'static str,
        expected: f64,
        found: f64,
    },
    RNotPd {
        min_eig: f64,
    },
    QNotPsd {
        min_eig: f64,
    },
    NotPsd {
        field: &'static str,
        min_eig: f64,
    },
    GammaNotPositive {
        gamma: f64,
    },
    DPlusDtNotPd {
        min_eig: f64,
    },
}

impl Violation {
    /// The offending field.
    pub fn field(&self) -> &'static str {
        match self {
            Violation::HorizonNotPositive { .. } => "T",
            Violation::ZeroSteps => "steps",
            Violation::Empty { field }
            | Violation::Shape { field, .. }
            | Violation::NonFinite { field }
            | Violation::TooFewSamples { field, .. }
            | Violation::SampleHorizon { field, .. }
            | Violation::NotPsd { field, .. } => field,
            Violation::RNotPd { .. } => "R",
            Violation::QNotPsd { .. } => "Q",
            Violation::GammaNotPositive { .. } => "gamma",
            Violation::DPlusDtNotPd { .. } => "D",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::HorizonNotPositive { horizon } => {
                write!(f, "T: horizon must be positive and finite, got {horizon}")
            }
            Violation::ZeroSteps => write!(f, "steps: must be at least 1"),
            Violation::Empty { field } => write!(f, "{field}: empty state dimension"),
            Violation::Shape {
                field,
                expected,
                found,
            } => write!(
                f,
                "{field}: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Violation::NonFinite { field } => write!(f, "{field}: non-finite entry"),
            Violation::TooFewSamples { field, count } => {
                write!(f, "{field}: need at least 2 time samples, got {count}")
            }
            Violation::SampleHorizon {
                field,
                expected,
                found,
            } => write!(
                f,
                "{field}: samples span horizon {found}, problem horizon is {expected}"
            ),
            Violation::RNotPd { min_eig } => {
                write!(
                    f,
                    "R: not positive definite (RNotPD, min eigenvalue {min_eig:e})"
                )
            }
            Violation::QNotPsd { min_eig } => {
                write!(
                    f,
                    "Q: not positive semidefinite (min eigenvalue {min_eig:e})"
                )
            }
            Violation::NotPsd { field, min_eig } => write!(
                f,
                "{field}: not positive semidefinite (min eigenvalue {min_eig:e})"
            ),
            Violation::GammaNotPositive { gamma } => {
                write!(f, "gamma: must be positive (GammaNotPositive, got {gamma})")
            }
            Violation::DPlusDtNotPd { min_eig } => write!(
                f,
                "D: D + D^T not positive definite (min eigenvalue {min_eig:e})"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

impl ValidationError {
    pub fn has(&self, pred: impl Fn(&Violation) -> bool) -> bool {
        self.violations.iter().any(pred)
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid problem: ")?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationError {}

/// The quadratic form `𝒬(t)` on `[x; v]`, of size `n + m`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadForm {
    n: usize,
    m: usize,
    q: MatrixFn,
}

/// `(Q, N, R)` blocks of `𝒬(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostBlocks {
    pub q: SymMat,
    pub n: DMatrix<f64>,
    pub r: SymMat,
}

impl QuadForm {
    /// Wraps an explicit constant `𝒬`.
    pub fn constant(n: usize, m: usize, q: SymMat) -> Result<Self> {
        if q.dim() != n + m {
            return Err(dim_mismatch("QuadForm::constant", n + m, q.dim()));
        }
        let qf = QuadForm {
            n,
            m,
            q: MatrixFn::Constant(q.into_matrix()),
        };
        qf.check_r()?;
        Ok(qf)
    }

    pub fn from_cost(cost: &CostData) -> Result<Self> {
        QuadForm::constant(cost.q.dim(), cost.r.dim(), cost.assemble())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_constant(&self) -> bool {
        self.q.is_constant()
    }

    pub fn at(&self, t: f64) -> SymMat {
        self.q.sym_at(t)
    }

    pub fn blocks_at(&self, t: f64) -> CostBlocks {
        let full = self.at(t);
        let (n, m) = (self.n, self.m);
        let mat = full.as_matrix();
        CostBlocks {
            q: full.principal_block(0, n),
            n: mat.view((0, n), (n, m)).into_owned(),
            r: full.principal_block(n, m),
        }
    }

    fn check_r(&self) -> Result<()> {
        for s in self.q.samples() {
            let r = SymMat::symmetrize(&s.view((self.n, self.n), (self.m, self.m)).into_owned())?;
            if !r.is_pd(DEFAULT_TOL) {
                return Err(ValidationError {
                    violations: vec![Violation::RNotPd {
                        min_eig: r.min_eig(),
                    }],
                }
                .into());
            }
        }
        Ok(())
    }
}

/// Builds `𝒬` for the variant:
/// LQR and general IQC use `[Q N; Nᵀ R]`, bounded-real uses
/// `[−CᵀC 0; 0 γ²I]`, positive-real uses `½[0 Cᵀ; C D+Dᵀ]`.
pub fn assemble_quadform(spec: &ProblemSpec) -> Result<QuadForm> {
    spec.validate()?;
    let (n, m) = (spec.sys.n(), spec.sys.m());
    let qf = match &spec.variant {
        Variant::Lqr { cost, .. }
        | Variant::StochLqr { cost, .. }
        | Variant::GeneralIqc { cost, .. } => QuadForm::from_cost(cost)?,
        Variant::BoundedReal { gamma } => {
            let g2 = gamma * gamma;
            let build = |c: &DMatrix<f64>| {
                let mut q = DMatrix::zeros(n + m, n + m);
                q.view_mut((0, 0), (n, n))
                    .copy_from(&(-(c.transpose() * c)));
                for i in 0..m {
                    q[(n + i, n + i)] = g2;
                }
                q
            };
            QuadForm {
                n,
                m,
                q: map_fn(&spec.sys.c, build),
            }
        }
        Variant::PositiveReal => {
            let c_fn = &spec.sys.c;
            let d_fn = &spec.sys.d;
            let q = if c_fn.is_constant() && d_fn.is_constant() {
                MatrixFn::Constant(passivity_form(&c_fn.at(0.0), &d_fn.at(0.0), n, m))
            } else {
                // sample on the finer of the two sample grids
                let (horizon, len) = sample_layout(&[c_fn, d_fn], spec.grid.horizon());
                let samples = (0..len)
                    .map(|k| {
                        let t = horizon * k as f64 / (len - 1) as f64;
                        passivity_form(&c_fn.at(t), &d_fn.at(t), n, m)
                    })
                    .collect();
                MatrixFn::Sampled { horizon, samples }
            };
            QuadForm { n, m, q }
        }
    };
    qf.check_r()?;
    Ok(qf)
}

fn passivity_form(c: &DMatrix<f64>, d: &DMatrix<f64>, n: usize, m: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(n + m, n + m);
    q.view_mut((0, n), (n, m)).copy_from(&(c.transpose() * 0.5));
    q.view_mut((n, 0), (m, n)).copy_from(&(c * 0.5));
    q.view_mut((n, n), (m, m))
        .copy_from(&((d + d.transpose()) * 0.5));
    q
}

fn map_fn(f: &MatrixFn, g: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> MatrixFn {
    match f {
        MatrixFn::Constant(m) => MatrixFn::Constant(g(m)),
        MatrixFn::Sampled { horizon, samples } => MatrixFn::Sampled {
            horizon: *horizon,
            samples: samples.iter().map(g).collect(),
        },
    }
}

fn sample_layout(fns: &[&MatrixFn], horizon: f64) -> (f64, usize) {
    let len = fns
        .iter()
        .filter_map(|f| match f {
            MatrixFn::Sampled { samples, .. } => Some(samples.len()),
            MatrixFn::Constant(_) => None,
        })
        .max()
        .unwrap_or(2);
    (horizon, len)
}

/// `ℰ(S) = [I 0]·S·[I; 0]`: the top-left `n×n` block.
pub fn apply_e(s: &SymMat, n: usize) -> Result<SymMat> {
    if s.dim() < n {
        return Err(dim_mismatch("apply_e", format!(">= {n}"), s.dim()));
    }
    Ok(s.principal_block(0, n))
}

/// `𝒜(S) = [A B]·S·[I; 0] + [I 0]·S·[Aᵀ; Bᵀ]` at time `t`.
pub fn apply_a_op(sys: &StateSpace, s: &SymMat, t: f64) -> Result<SymMat> {
    let (n, m) = (sys.n(), sys.m());
    if s.dim() != n + m {
        return Err(dim_mismatch("apply_a_op", n + m, s.dim()));
    }
    let mut ab = DMatrix::zeros(n, n + m);
    ab.view_mut((0, 0), (n, n)).copy_from(&sys.a.at(t));
    ab.view_mut((0, n), (n, m)).copy_from(&sys.b.at(t));
    let left = ab * s.as_matrix().columns(0, n);
    Ok(SymMat::from_symmetric_unchecked(&left + left.transpose()))
}

/// `ℰ*(Y)`: `Y` embedded in the top-left block of an `(n+m)` zero matrix.
pub fn apply_e_adj(y: &SymMat, m: usize) -> SymMat {
    y.embed_top_left(y.dim() + m)
}

/// `𝒜*(Y) = [Aᵀ; Bᵀ]·Y·[I 0] + [I; 0]·Y·[A B]` at time `t`.
pub fn apply_a_adj(sys: &StateSpace, y: &SymMat, t: f64) -> Result<SymMat> {
    let (n, m) = (sys.n(), sys.m());
    if y.dim() != n {
        return Err(dim_mismatch("apply_a_adj", n, y.dim()));
    }
    let mut ab = DMatrix::zeros(n, n + m);
    ab.view_mut((0, 0), (n, n)).copy_from(&sys.a.at(t));
    ab.view_mut((0, n), (n, m)).copy_from(&sys.b.at(t));
    let ya = y.as_matrix() * ab;
    let mut out = DMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n + m)).copy_from(&ya);
    let out_t = out.transpose();
    Ok(SymMat::from_symmetric_unchecked(out + out_t))
}
