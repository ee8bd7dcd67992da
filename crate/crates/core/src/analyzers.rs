//! End-to-end analyzers. Each one solves the backward Riccati equation,
//! builds the primal covariance from the alignment feedback and packages the
//! evidence in a [`Certificate`].

use nalgebra::DVector;
use rayon::prelude::*;

use crate::covariance::{
    alignment_residual, closed_loop_simulate, descriptor_residual, deterministic_covariance,
    gain_from_dual, primal_objective, stochastic_covariance, Gain,
};
use crate::dlmi::{
    certify, dual_objective, extremal_factorization, m_trajectory, DualPayload, LambdaDot,
};
use crate::error::{Error, Result};
use crate::model::{
    assemble_quadform, ProblemSpec, QuadForm, StateSpace, TimeGrid, Variant, VariantTag, Violation,
};
use crate::riccati::{
    loewner_margins, sample_dri_solution, solve_dre_final, DreOptions, DreSolution, DriOptions,
    DriSample, MatTrajectory, RiccatiData,
};
use crate::symmat::{eps_rank, SymMat, DEFAULT_TOL};

/// Grid resolution used when the caller does not choose one.
pub const DEFAULT_STEPS: usize = 512;
/// Pointwise Loewner tolerance of the DRI-cloud maximality verdict.
pub const MAXIMALITY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzerOptions {
    pub tol: f64,
    pub dre: DreOptions,
}

impl Default for AnalyzerOptions {
    fn default() -> Self {
        AnalyzerOptions {
            tol: DEFAULT_TOL,
            dre: DreOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimalValue {
    Finite(f64),
    MinusInfinity { escape_time: f64 },
}

impl OptimalValue {
    pub fn finite(&self) -> Option<f64> {
        match self {
            OptimalValue::Finite(v) => Some(*v),
            OptimalValue::MinusInfinity { .. } => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, OptimalValue::Finite(_))
    }
}

/// Optimality evidence for one problem.
///
/// For a finite optimum `dual_min_eig ≥ −tol`, `duality_gap ≈ 0` and
/// `rank_ok` hold. For `−∞` the primal fields are `None` and `lambda` covers
/// only the nodes after the escape.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub variant: VariantTag,
    pub optimal_value: OptimalValue,
    pub primal_value: Option<f64>,
    pub gain: Option<Gain>,
    pub lambda: MatTrajectory,
    pub dual_min_eig: f64,
    /// `primal − dual`.
    pub duality_gap: Option<f64>,
    pub alignment: Option<f64>,
    pub rank_ok: bool,
    /// `max_t λ_max(Λ(t))`, recorded for the bounded-real and positive-real
    /// tests where `Λ ⪯ 0` is expected.
    pub lambda_max_eig: Option<f64>,
    pub grid: TimeGrid,
}

impl Certificate {
    pub fn sign_ok(&self, tol: f64) -> Option<bool> {
        self.lambda_max_eig.map(|v| v <= tol)
    }
}

/// Acceptable `|primal − dual|` for a finite optimum.
pub fn gap_tolerance(dual: f64) -> f64 {
    (1e-3 * dual.abs()).max(1e-6)
}

fn expect_variant(spec: &ProblemSpec, analyzer: &'static str, ok: &[VariantTag]) -> Result<()> {
    let tag = spec.variant.tag();
    if ok.contains(&tag) {
        Ok(())
    } else {
        Err(Error::WrongVariant {
            analyzer,
            found: tag.as_str(),
        })
    }
}

/// Spectral evidence along the valid nodes of an extremal.
struct DualEvidence {
    min_eig: f64,
    rank_ok: bool,
}

fn dual_evidence(
    lambda: &MatTrajectory,
    data: &RiccatiData,
    sys: &StateSpace,
    qf: &QuadForm,
    tol: f64,
) -> Result<DualEvidence> {
    if lambda.is_empty() {
        return Ok(DualEvidence {
            min_eig: f64::NAN,
            rank_ok: false,
        });
    }
    let ms = m_trajectory(lambda, LambdaDot::FromEquation(data), sys, qf)?;
    let mut min_eig = f64::INFINITY;
    let mut rank_ok = true;
    for (_, t, m) in ms.iter() {
        min_eig = min_eig.min(m.min_eig());
        let r_rank = eps_rank(&qf.blocks_at(t).r, tol);
        rank_ok &= eps_rank(m, tol) == r_rank;
    }
    Ok(DualEvidence { min_eig, rank_ok })
}

fn lambda_max_eig(lambda: &MatTrajectory) -> f64 {
    lambda
        .samples()
        .iter()
        .map(SymMat::max_eig)
        .fold(f64::NEG_INFINITY, f64::max)
}

struct Prepared {
    qf: QuadForm,
    data: RiccatiData,
    sol: DreSolution,
}

fn prepare(spec: &ProblemSpec, opts: &AnalyzerOptions) -> Result<Prepared> {
    let qf = assemble_quadform(spec)?;
    let data = RiccatiData::from_problem(&spec.sys, &qf)?;
    let sol = solve_dre_final(&data, &SymMat::zeros(spec.sys.n()), spec.grid, opts.dre)?;
    Ok(Prepared { qf, data, sol })
}

/// Certificate for a non-escaping extremal and deterministic initial state.
fn deterministic_certificate(
    spec: &ProblemSpec,
    p: &Prepared,
    x_i: &DVector<f64>,
    opts: &AnalyzerOptions,
) -> Result<Certificate> {
    let sys = &spec.sys;
    let lambda = &p.sol.lambda;
    let source = LambdaDot::FromEquation(&p.data);
    let dual = dual_objective(lambda, DualPayload::Deterministic(x_i))?;
    let gain = gain_from_dual(lambda, source, sys, &p.qf)?;
    let cl = closed_loop_simulate(sys, &gain, x_i, spec.grid)?;
    let cov = deterministic_covariance(&cl)?;
    let primal = primal_objective(&cov, &p.qf)?;
    let alignment = alignment_residual(&cov, lambda, source, sys, &p.qf)?;
    let ev = dual_evidence(lambda, &p.data, sys, &p.qf, opts.tol)?;
    Ok(Certificate {
        variant: spec.variant.tag(),
        optimal_value: OptimalValue::Finite(dual),
        primal_value: Some(primal),
        gain: Some(gain),
        lambda: lambda.clone(),
        dual_min_eig: ev.min_eig,
        duality_gap: Some(primal - dual),
        alignment: Some(alignment),
        rank_ok: ev.rank_ok,
        lambda_max_eig: None,
        grid: spec.grid,
    })
}

fn escape_certificate(
    spec: &ProblemSpec,
    p: &Prepared,
    opts: &AnalyzerOptions,
) -> Result<Certificate> {
    let escape_time = p
        .sol
        .escape_time
        .expect("escaped solution carries its escape time");
    let ev = dual_evidence(&p.sol.lambda, &p.data, &spec.sys, &p.qf, opts.tol)?;
    Ok(Certificate {
        variant: spec.variant.tag(),
        optimal_value: OptimalValue::MinusInfinity { escape_time },
        primal_value: None,
        gain: None,
        lambda: p.sol.lambda.clone(),
        dual_min_eig: ev.min_eig,
        duality_gap: None,
        alignment: None,
        rank_ok: ev.rank_ok,
        lambda_max_eig: None,
        grid: spec.grid,
    })
}

/// Deterministic LQR: value `x_iᵀΛ̄(0)x_i`, feedback `u = −R⁻¹(Nᵀ + BᵀΛ̄)x`.
pub fn solve_lqr(spec: &ProblemSpec, opts: &AnalyzerOptions) -> Result<Certificate> {
    expect_variant(spec, "solve_lqr", &[VariantTag::Lqr])?;
    let p = prepare(spec, opts)?;
    if let Some(escape_time) = p.sol.escape_time {
        return Err(Error::EscapeUnexpected { escape_time });
    }
    deterministic_certificate(spec, &p, &spec.initial_state(), opts)
}

/// Stochastic LQR: value `tr(Λ̄(0)X_i) + ∫tr(Λ̄W)`, with the same gain as the
/// deterministic problem and the primal from the covariance ODE.
pub fn solve_stoch_lqr(spec: &ProblemSpec, opts: &AnalyzerOptions) -> Result<Certificate> {
    expect_variant(spec, "solve_stoch_lqr", &[VariantTag::StochLqr])?;
    let Variant::StochLqr { x_i_cov, w, .. } = &spec.variant else {
        unreachable!("variant checked above")
    };
    let p = prepare(spec, opts)?;
    if let Some(escape_time) = p.sol.escape_time {
        return Err(Error::EscapeUnexpected { escape_time });
    }
    let sys = &spec.sys;
    let lambda = &p.sol.lambda;
    let source = LambdaDot::FromEquation(&p.data);
    let dual = dual_objective(lambda, DualPayload::Stochastic { x_i_cov, w })?;
    let gain = gain_from_dual(lambda, source, sys, &p.qf)?;
    let cov = stochastic_covariance(sys, &gain, w, x_i_cov, spec.grid)?;
    let primal = primal_objective(&cov, &p.qf)?;
    let alignment = alignment_residual(&cov, lambda, source, sys, &p.qf)?;
    let ev = dual_evidence(lambda, &p.data, sys, &p.qf, opts.tol)?;
    Ok(Certificate {
        variant: VariantTag::StochLqr,
        optimal_value: OptimalValue::Finite(dual),
        primal_value: Some(primal),
        gain: Some(gain),
        lambda: lambda.clone(),
        dual_min_eig: ev.min_eig,
        duality_gap: Some(primal - dual),
        alignment: Some(alignment),
        rank_ok: ev.rank_ok,
        lambda_max_eig: None,
        grid: spec.grid,
    })
}

fn iqc_core(spec: &ProblemSpec, opts: &AnalyzerOptions) -> Result<Certificate> {
    let p = prepare(spec, opts)?;
    if p.sol.escaped {
        return escape_certificate(spec, &p, opts);
    }
    deterministic_certificate(spec, &p, &spec.initial_state(), opts)
}

/// Infimum of an indefinite quadratic form with `R ≻ 0`: finite with the
/// alignment feedback as minimizer, or `−∞` when the extremal escapes.
pub fn iqc_infimum(spec: &ProblemSpec, opts: &AnalyzerOptions) -> Result<Certificate> {
    expect_variant(
        spec,
        "iqc_infimum",
        &[
            VariantTag::GeneralIqc,
            VariantTag::BoundedReal,
            VariantTag::PositiveReal,
        ],
    )?;
    iqc_core(spec, opts)
}

/// Verdict of a dissipativity test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub passes: bool,
    pub certificate: Certificate,
}

fn sign_test(spec: ProblemSpec, opts: &AnalyzerOptions) -> Result<TestOutcome> {
    let mut certificate = iqc_core(&spec, opts)?;
    let passes = certificate.optimal_value.is_finite();
    if passes {
        certificate.lambda_max_eig = Some(lambda_max_eig(&certificate.lambda));
    }
    Ok(TestOutcome {
        passes,
        certificate,
    })
}

/// Finite-horizon `L²`-gain test: passes iff the DRE for
/// `γ²‖v‖² − ‖Cx‖²` stays bounded on `[0, T]`.
pub fn bounded_real_test(
    sys: &StateSpace,
    gamma: f64,
    grid: TimeGrid,
    opts: &AnalyzerOptions,
) -> Result<TestOutcome> {
    sign_test(
        ProblemSpec::new(sys.clone(), grid, Variant::BoundedReal { gamma }),
        opts,
    )
}

/// Finite-horizon passivity test for `z = Cx + Dv`: passes iff the DRE for
/// `zᵀv` stays bounded on `[0, T]`.
pub fn passivity_test(
    sys: &StateSpace,
    grid: TimeGrid,
    opts: &AnalyzerOptions,
) -> Result<TestOutcome> {
    let spec = ProblemSpec::new(sys.clone(), grid, Variant::PositiveReal);
    if let Err(e) = spec.validate() {
        for v in &e.violations {
            if let Violation::DPlusDtNotPd { min_eig } = v {
                return Err(Error::DNotStrictlyPassive { min_eig: *min_eig });
            }
        }
        return Err(e.into());
    }
    sign_test(spec, opts)
}

/// Induced-norm estimate from bisection on [`bounded_real_test`].
///
/// The test passes at `bracket.1` and fails at `bracket.0`; near the
/// critical γ the DRE escape is decided by the escape cap, so the bracket
/// resolves γ* only to grid accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormResult {
    pub gamma_star: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
}

const BRACKET_GROWTH: f64 = 4.0;
const MAX_BRACKET_STEPS: usize = 40;
const MAX_BISECTIONS: usize = 60;

fn output_is_zero(sys: &StateSpace) -> bool {
    sys.c.samples().iter().all(|c| c.iter().all(|v| *v == 0.0))
}

pub fn hinf_norm_bisection(
    sys: &StateSpace,
    grid: TimeGrid,
    tol: f64,
    opts: &AnalyzerOptions,
) -> Result<NormResult> {
    if output_is_zero(sys) {
        return Ok(NormResult {
            gamma_star: 0.0,
            iterations: 0,
            bracket: (0.0, 0.0),
        });
    }
    let passes =
        |gamma: f64| -> Result<bool> { Ok(bounded_real_test(sys, gamma, grid, opts)?.passes) };
    let (mut lo, mut hi);
    if passes(1.0)? {
        hi = 1.0;
        lo = hi / BRACKET_GROWTH;
        let mut steps = 0;
        while passes(lo)? {
            steps += 1;
            if steps >= MAX_BRACKET_STEPS {
                return Err(Error::BracketFailure { gamma: lo });
            }
            hi = lo;
            lo /= BRACKET_GROWTH;
        }
    } else {
        lo = 1.0;
        hi = lo * BRACKET_GROWTH;
        let mut steps = 0;
        while !passes(hi)? {
            steps += 1;
            if steps >= MAX_BRACKET_STEPS {
                return Err(Error::BracketFailure { gamma: hi });
            }
            lo = hi;
            hi *= BRACKET_GROWTH;
        }
    }
    let mut iterations = 0;
    while hi - lo > tol && iterations < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if passes(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok(NormResult {
        gamma_star: hi,
        iterations,
        bracket: (lo, hi),
    })
}

/// Scalar standard-form presets `−λ̇ = q − mλ²` with `(q, m) ∈ {±1}²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarPreset {
    PosPos,
    PosNeg,
    NegPos,
    NegNeg,
}

impl ScalarPreset {
    pub const ALL: [ScalarPreset; 4] = [
        ScalarPreset::PosPos,
        ScalarPreset::PosNeg,
        ScalarPreset::NegPos,
        ScalarPreset::NegNeg,
    ];
    /// Horizon of the presets.
    pub const HORIZON: f64 = 2.0;

    /// `(q, m)`.
    pub fn coefficients(&self) -> (f64, f64) {
        match self {
            ScalarPreset::PosPos => (1.0, 1.0),
            ScalarPreset::PosNeg => (1.0, -1.0),
            ScalarPreset::NegPos => (-1.0, 1.0),
            ScalarPreset::NegNeg => (-1.0, -1.0),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScalarPreset::PosPos => "q+m+",
            ScalarPreset::PosNeg => "q+m-",
            ScalarPreset::NegPos => "q-m+",
            ScalarPreset::NegNeg => "q-m-",
        }
    }

    pub fn parse(name: &str) -> Option<ScalarPreset> {
        ScalarPreset::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn data(&self) -> RiccatiData {
        let (q, m) = self.coefficients();
        RiccatiData::scalar(0.0, m, q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriCloudOptions {
    pub n_samples: usize,
    pub switch_points: usize,
    pub seed: u64,
    pub amplitude: Option<f64>,
    pub tol: f64,
    pub dre: DreOptions,
}

impl Default for DriCloudOptions {
    fn default() -> Self {
        DriCloudOptions {
            n_samples: 100,
            switch_points: 10,
            seed: 0,
            amplitude: None,
            tol: MAXIMALITY_TOL,
            dre: DreOptions::default(),
        }
    }
}

/// The DRE extremal, the DRI samples and the maximality verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct DriCloudReport {
    pub extremal: DreSolution,
    pub samples: Vec<DriSample>,
    /// Every sample lies below the extremal at every shared node.
    pub maximal: bool,
    /// `min` over samples and shared nodes of `λ_min(Λ̄ − Λ_sample)`.
    pub worst_margin: f64,
    pub violations: usize,
}

/// Samples `n_samples` DRI solutions (sample `i` seeded with `seed + i`) and
/// checks `Λ_sample ⪯ Λ̄ + tol·I` on the nodes where both are finite.
pub fn dri_cloud(
    data: &RiccatiData,
    lambda_f: &SymMat,
    grid: TimeGrid,
    opts: &DriCloudOptions,
) -> Result<DriCloudReport> {
    let extremal = solve_dre_final(data, lambda_f, grid, opts.dre)?;
    let samples = (0..opts.n_samples)
        .into_par_iter()
        .map(|i| {
            let dri = DriOptions {
                switch_points: opts.switch_points,
                amplitude: opts.amplitude,
                seed: opts.seed.wrapping_add(i as u64),
                dre: opts.dre,
            };
            sample_dri_solution(data, lambda_f, grid, &dri)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut worst_margin = f64::INFINITY;
    let mut violations = 0;
    for s in &samples {
        let c = loewner_margins(&extremal.lambda, s.lambda())?;
        if c.shared_nodes > 0 {
            worst_margin = worst_margin.min(c.min_eig_a_minus_b);
            if c.min_eig_a_minus_b < -opts.tol {
                violations += 1;
            }
        }
    }
    Ok(DriCloudReport {
        extremal,
        samples,
        maximal: violations == 0,
        worst_margin,
        violations,
    })
}

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub passed: bool,
    pub refined_grid: TimeGrid,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn push(checks: &mut Vec<Check>, name: &'static str, value: f64, tolerance: f64) {
    checks.push(Check {
        name,
        passed: value.is_finite() && value <= tolerance,
        value,
        tolerance,
    });
}

/// Safety factor applied to Richardson estimates of finite-difference error.
const FD_SAFETY: f64 = 10.0;

/// Per-node estimate of the error in `Λ̇` from centered differences, from the
/// difference between step `h` and step `2h` stencils.
///
/// Nodes without a `2h` stencil inherit four times the nearest interior
/// estimate, since the one-sided end stencils carry a larger constant.
fn fd_error_estimate(lambda: &MatTrajectory) -> Vec<f64> {
    let s = lambda.samples();
    let len = s.len();
    let h = lambda.grid().step();
    let mut est = vec![f64::NAN; len];
    for k in 2..len.saturating_sub(2) {
        let fine = (&s[k + 1] - &s[k - 1]).scale(0.5 / h);
        let coarse = (&s[k + 2] - &s[k - 2]).scale(0.25 / h);
        est[k] = (&coarse - &fine).norm_max() / 3.0;
    }
    let first = est.iter().copied().find(|v| v.is_finite()).unwrap_or(0.0);
    let last = est
        .iter()
        .rev()
        .copied()
        .find(|v| v.is_finite())
        .unwrap_or(0.0);
    let mid = len / 2;
    for (k, v) in est.iter_mut().enumerate() {
        if !v.is_finite() {
            *v = 4.0 * if k < mid { first } else { last };
        }
    }
    est
}

/// Independently re-checks a certificate.
///
/// The claimed Λ is tested for dual feasibility with finite-difference `Λ̇`
/// and a Richardson tolerance, for the final condition, and for being a
/// Riccati extremal (factorization residual). The claimed gain is simulated
/// on a grid refined twice, and the duality gap, alignment and descriptor
/// residual are recomputed there; the optimal value is compared against an
/// independent solve on the refined grid. A `−∞` certificate passes when the
/// refined solve escapes within two coarse steps of the claimed time.
pub fn verify_solution(
    spec: &ProblemSpec,
    cert: &Certificate,
    opts: &AnalyzerOptions,
) -> Result<VerificationReport> {
    let fine = spec.grid.refine(2);
    let fine_spec = spec.with_grid(fine);
    let qf = assemble_quadform(spec)?;
    let data = RiccatiData::from_problem(&spec.sys, &qf)?;
    let reference = solve_dre_final(&data, &SymMat::zeros(spec.sys.n()), fine, opts.dre)?;
    let mut checks = Vec::new();
    let variant_ok = cert.variant == spec.variant.tag() && cert.grid == spec.grid;
    push(
        &mut checks,
        "variant_and_grid",
        if variant_ok { 0.0 } else { 1.0 },
        0.0,
    );

    match cert.optimal_value {
        OptimalValue::MinusInfinity { escape_time } => {
            let tol = 2.0 * spec.grid.step();
            let err = match reference.escape_time {
                Some(t) => (t - escape_time).abs(),
                None => f64::INFINITY,
            };
            push(&mut checks, "escape_time", err, tol);
        }
        OptimalValue::Finite(value) => {
            if reference.escaped {
                push(&mut checks, "reference_bounded", 1.0, 0.0);
            } else {
                verify_finite(
                    &fine_spec,
                    cert,
                    value,
                    &qf,
                    &data,
                    &reference,
                    opts,
                    &mut checks,
                )?;
            }
        }
    }
    Ok(VerificationReport {
        passed: checks.iter().all(|c| c.passed),
        refined_grid: fine,
        checks,
    })
}

#[allow(clippy::too_many_arguments)]
fn verify_finite(
    fine_spec: &ProblemSpec,
    cert: &Certificate,
    value: f64,
    qf: &QuadForm,
    data: &RiccatiData,
    reference: &DreSolution,
    opts: &AnalyzerOptions,
    checks: &mut Vec<Check>,
) -> Result<()> {
    let sys = &fine_spec.sys;
    let lambda = &cert.lambda;
    let n = sys.n();
    let gap_tol = gap_tolerance(value);

    // final condition
    let boundary_err = match lambda.get(cert.grid.steps()) {
        Some(l) => l.norm_max(),
        None => f64::INFINITY,
    };
    push(checks, "boundary", boundary_err, 1e-9);
    if !lambda.is_complete() || lambda.len() < 5 || lambda.dim() != n {
        push(checks, "lambda_complete", 1.0, 0.0);
        return Ok(());
    }

    // dual feasibility and extremality with finite-difference Λ̇
    let ms = m_trajectory(lambda, LambdaDot::FiniteDifference, sys, qf)?;
    let est = fd_error_estimate(lambda);
    let node_tols: Vec<f64> = ms
        .samples()
        .iter()
        .zip(&est)
        .map(|(m, e)| opts.tol + FD_SAFETY * e / m.norm_max().max(1.0))
        .collect();
    let dlmi = certify(lambda, &ms, Some(&SymMat::zeros(n)), opts.tol, &node_tols)?;
    // ≤ 1 iff every node satisfies its tolerance
    let worst_scaled = ms
        .samples()
        .iter()
        .zip(&node_tols)
        .map(|(m, tol)| -m.min_eig() / (m.norm_max().max(1.0) * tol))
        .fold(0.0, f64::max);
    push(checks, "dual_feasibility", worst_scaled, 1.0);
    debug_assert_eq!(dlmi.feasible, worst_scaled <= 1.0 && boundary_err <= 1e-9);

    let mut worst_factor = 0.0_f64;
    for ((k, t, l), m) in lambda.iter().zip(ms.samples()) {
        let exact_dot = data.derivative(t, l, None);
        let f = extremal_factorization(l, &exact_dot, sys, qf, t, f64::INFINITY)?;
        let resid = (&f.reconstruct() - m).norm_max();
        let allowed = FD_SAFETY * est[k] + opts.tol * (1.0 + m.norm_max());
        worst_factor = worst_factor.max(resid / allowed);
    }
    push(checks, "rank_factorization", worst_factor, 1.0);

    // claimed value against the certificate's own Λ and an independent solve
    let (dual_cert, dual_ref, cov) = match &fine_spec.variant {
        Variant::StochLqr { x_i_cov, w, .. } => {
            let payload = DualPayload::Stochastic { x_i_cov, w };
            let gain = fine_gain(cert)?;
            let cov = stochastic_covariance(sys, &gain, w, x_i_cov, fine_spec.grid)?;
            (
                dual_objective(lambda, payload)?,
                dual_objective(&reference.lambda, payload)?,
                cov,
            )
        }
        _ => {
            let x_i = fine_spec.initial_state();
            let payload = DualPayload::Deterministic(&x_i);
            let gain = fine_gain(cert)?;
            let cl = closed_loop_simulate(sys, &gain, &x_i, fine_spec.grid)?;
            (
                dual_objective(lambda, payload)?,
                dual_objective(&reference.lambda, payload)?,
                deterministic_covariance(&cl)?,
            )
        }
    };
    push(
        checks,
        "value_matches_certificate_dual",
        (value - dual_cert).abs(),
        gap_tol,
    );
    push(
        checks,
        "value_matches_reference",
        (value - dual_ref).abs(),
        gap_tol,
    );

    let primal = primal_objective(&cov, qf)?;
    push(checks, "duality_gap", (primal - value).abs(), gap_tol);

    // slack of the independently solved extremal, exactly UUᵀ at each node
    let align = alignment_residual(
        &cov,
        &reference.lambda,
        LambdaDot::FromEquation(data),
        sys,
        qf,
    )?;
    push(checks, "alignment", align.abs(), gap_tol);

    let w = match &fine_spec.variant {
        Variant::StochLqr { w, .. } => Some(w),
        _ => None,
    };
    let desc = descriptor_residual(&cov, sys, w)?;
    let scale = 1.0 + cov.sigma.norm_max();
    push(checks, "descriptor_residual", desc / scale, 1e-4);

    if let Some(max_eig) = cert.lambda_max_eig {
        push(checks, "lambda_sign", max_eig, opts.tol);
        let recomputed = lambda_max_eig(lambda);
        push(checks, "lambda_sign_recomputed", recomputed, opts.tol);
    }
    Ok(())
}

fn fine_gain(cert: &Certificate) -> Result<Gain> {
    match &cert.gain {
        Some(g) => Ok(g.clone()),
        None => Err(Error::WrongVariant {
            analyzer: "verify_solution",
            found: "finite certificate without a gain",
        }),
    }
}
