//! The differential LMI `𝓜(Λ) = 𝒬 + ℰ*(Λ̇) + 𝒜*(Λ) ⪰ 0`: assembly,
//! pointwise feasibility, the full-rank factorization at a Riccati extremal,
//! Lur'e residuals and the dual objective.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_mismatch, Error, Result};
use crate::model::{apply_a_adj, apply_e_adj, MatrixFn, QuadForm, StateSpace};
use crate::quadrature::simpson;
use crate::riccati::{finite_difference, MatTrajectory, RiccatiData};
use crate::symmat::{eps_rank, sym_factor, trace_inner, SymFactor, SymMat};

/// `𝓜(Λ) = 𝒬(t) + ℰ*(Λ̇) + 𝒜*(Λ)`, i.e.
/// `[Q + Λ̇ + AᵀΛ + ΛA, N + ΛB; (N + ΛB)ᵀ, R]`.
pub fn assemble_m(
    lambda: &SymMat,
    lambda_dot: &SymMat,
    sys: &StateSpace,
    qf: &QuadForm,
    t: f64,
) -> Result<SymMat> {
    let n = sys.n();
    if lambda.dim() != n || lambda_dot.dim() != n {
        return Err(dim_mismatch(
            "assemble_m",
            n,
            lambda.dim().max(lambda_dot.dim()),
        ));
    }
    if qf.n() != n || qf.m() != sys.m() {
        return Err(dim_mismatch(
            "assemble_m quadratic form",
            n + sys.m(),
            qf.n() + qf.m(),
        ));
    }
    let e = apply_e_adj(lambda_dot, sys.m());
    let a = apply_a_adj(sys, lambda, t)?;
    Ok(&(&qf.at(t) + &e) + &a)
}

/// Source of `Λ̇` for pointwise DLMI evaluation.
#[derive(Debug, Clone, Copy)]
pub enum LambdaDot<'a> {
    /// Centered finite differences of the samples.
    FiniteDifference,
    /// `Λ̇ = −rhs(t, Λ)`, exact along an unforced Riccati solution.
    FromEquation(&'a RiccatiData),
    /// Externally supplied samples on the same nodes.
    Given(&'a MatTrajectory),
}

fn lambda_dot_trajectory(lambda: &MatTrajectory, source: LambdaDot<'_>) -> Result<MatTrajectory> {
    match source {
        LambdaDot::FiniteDifference => finite_difference(lambda, "lambda_dot_fd"),
        LambdaDot::FromEquation(data) => Ok(data.derivative_trajectory(lambda, None)),
        LambdaDot::Given(d) => {
            if d.grid() != lambda.grid() || d.range() != lambda.range() {
                return Err(Error::GridMismatch);
            }
            Ok(d.clone())
        }
    }
}

/// `𝓜(Λ)(t_k)` at every valid node of `lambda`.
pub fn m_trajectory(
    lambda: &MatTrajectory,
    source: LambdaDot<'_>,
    sys: &StateSpace,
    qf: &QuadForm,
) -> Result<MatTrajectory> {
    let dot = lambda_dot_trajectory(lambda, source)?;
    let samples = lambda
        .iter()
        .zip(dot.samples())
        .map(|((_, t, l), d)| assemble_m(l, d, sys, qf, t))
        .collect::<Result<Vec<_>>>()?;
    MatTrajectory::partial(*lambda.grid(), lambda.first_index(), samples, "dlmi")
}

/// Pointwise evidence for `𝓜(Λ) ⪰ 0` along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DlmiCertificate {
    /// Node times matching `min_eig`.
    pub times: Vec<f64>,
    pub min_eig: Vec<f64>,
    pub feasible: bool,
    /// Time of the smallest `min_eig`.
    pub worst_node: f64,
    /// `None` when no boundary value was supplied.
    pub boundary_ok: Option<bool>,
    pub boundary_error: Option<f64>,
    pub rank_trace: Vec<usize>,
    /// Symmetric factor of `𝓜` at each node where it is PSD within tolerance.
    pub factors: Vec<Option<SymFactor>>,
}

impl DlmiCertificate {
    pub fn worst_min_eig(&self) -> f64 {
        self.min_eig.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates `𝓜(Λ)` at each node and records its spectrum.
///
/// The trajectory is feasible when it covers the whole grid, every node
/// satisfies `λ_min(𝓜) ≥ −tol·max(1, ‖𝓜‖_max)` and, if `lambda_f` is given,
/// the final sample matches it within `1e-9·(1 + ‖Λ_f‖_max)`.
pub fn feasibility(
    lambda: &MatTrajectory,
    source: LambdaDot<'_>,
    sys: &StateSpace,
    qf: &QuadForm,
    lambda_f: Option<&SymMat>,
    tol: f64,
) -> Result<DlmiCertificate> {
    let ms = m_trajectory(lambda, source, sys, qf)?;
    let node_tols = vec![tol; ms.len()];
    certify(lambda, &ms, lambda_f, tol, &node_tols)
}

pub(crate) fn certify(
    lambda: &MatTrajectory,
    ms: &MatTrajectory,
    lambda_f: Option<&SymMat>,
    tol: f64,
    node_tols: &[f64],
) -> Result<DlmiCertificate> {
    let mut times = Vec::with_capacity(ms.len());
    let mut min_eig = Vec::with_capacity(ms.len());
    let mut rank_trace = Vec::with_capacity(ms.len());
    let mut factors = Vec::with_capacity(ms.len());
    let mut all_ok = lambda.is_complete();
    for ((_, t, m), &node_tol) in ms.iter().zip(node_tols) {
        let lo = m.min_eig();
        let scale = m.norm_max().max(1.0);
        all_ok &= lo >= -node_tol * scale;
        times.push(t);
        min_eig.push(lo);
        rank_trace.push(eps_rank(m, node_tol));
        factors.push(sym_factor(m, node_tol).ok());
    }
    let worst_node = times
        .iter()
        .zip(&min_eig)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map_or(f64::NAN, |(t, _)| *t);
    let (boundary_ok, boundary_error) = match lambda_f {
        None => (None, None),
        Some(f) => {
            let last = lambda.grid().steps();
            match lambda.get(last) {
                Some(l) => {
                    let err = (l - f).norm_max();
                    (Some(err <= 1e-9 * (1.0 + f.norm_max())), Some(err))
                }
                None => (Some(false), None),
            }
        }
    };
    let _ = tol;
    Ok(DlmiCertificate {
        feasible: all_ok && boundary_ok != Some(false),
        times,
        min_eig,
        worst_node,
        boundary_ok,
        boundary_error,
        rank_trace,
        factors,
    })
}

/// `U = [(N + Λ̄B)R^{−1/2}; R^{1/2}]`, the width-`m` factor with
/// `U·Uᵀ = 𝓜(Λ̄)` at a Riccati extremal.
///
/// Fails with [`Error::ResidualTooLarge`] when `‖U·Uᵀ − 𝓜(Λ̄, Λ̇)‖_max`
/// exceeds `tol·(1 + ‖𝓜‖_max)`, i.e. when `(Λ̄, Λ̇)` does not solve the
/// Riccati equation at `t`.
pub fn extremal_factorization(
    lambda_bar: &SymMat,
    lambda_dot: &SymMat,
    sys: &StateSpace,
    qf: &QuadForm,
    t: f64,
    tol: f64,
) -> Result<SymFactor> {
    let u = extremal_factor_unchecked(lambda_bar, sys, qf, t)?;
    let m = assemble_m(lambda_bar, lambda_dot, sys, qf, t)?;
    let residual = (&SymMat::gram(&u) - &m).norm_max();
    let bound = tol * (1.0 + m.norm_max());
    if residual > bound {
        return Err(Error::ResidualTooLarge {
            residual,
            tol: bound,
        });
    }
    Ok(SymFactor { u })
}

fn extremal_factor_unchecked(
    lambda_bar: &SymMat,
    sys: &StateSpace,
    qf: &QuadForm,
    t: f64,
) -> Result<DMatrix<f64>> {
    let (n, m) = (sys.n(), sys.m());
    if lambda_bar.dim() != n {
        return Err(dim_mismatch("extremal_factorization", n, lambda_bar.dim()));
    }
    let blocks = qf.blocks_at(t);
    let r_half = blocks.r.map_eigenvalues(f64::sqrt);
    let r_inv_half = blocks.r.map_eigenvalues(|v| 1.0 / v.sqrt());
    let s = &blocks.n + lambda_bar.as_matrix() * sys.b.at(t);
    let mut u = DMatrix::zeros(n + m, m);
    u.view_mut((0, 0), (n, m))
        .copy_from(&(s * r_inv_half.as_matrix()));
    u.view_mut((n, 0), (m, m)).copy_from(r_half.as_matrix());
    Ok(u)
}

/// Residuals of the Lur'e equations
/// `U1U1ᵀ = Q + Λ̇ + AᵀΛ + ΛA`, `U1U2ᵀ = N + ΛB`, `U2U2ᵀ = R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LureResiduals {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

impl LureResiduals {
    pub fn max(&self) -> f64 {
        self.r1.max(self.r2).max(self.r3)
    }
}

pub fn lure_residuals(
    lambda: &SymMat,
    lambda_dot: &SymMat,
    u1: &DMatrix<f64>,
    u2: &DMatrix<f64>,
    sys: &StateSpace,
    qf: &QuadForm,
    t: f64,
) -> Result<LureResiduals> {
    let (n, m) = (sys.n(), sys.m());
    if u1.nrows() != n || u2.nrows() != m || u1.ncols() != u2.ncols() {
        return Err(dim_mismatch(
            "lure_residuals",
            format!("U1 {n}xr, U2 {m}xr"),
            format!("U1 {:?}, U2 {:?}", u1.shape(), u2.shape()),
        ));
    }
    let blocks = qf.blocks_at(t);
    let a = sys.a.at(t);
    let l = lambda.as_matrix();
    let la = l * &a;
    let top = blocks.q.as_matrix() + lambda_dot.as_matrix() + &la + la.transpose();
    let off = &blocks.n + l * sys.b.at(t);
    let amax = |m: DMatrix<f64>| m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    Ok(LureResiduals {
        r1: amax(u1 * u1.transpose() - top),
        r2: amax(u1 * u2.transpose() - off),
        r3: amax(u2 * u2.transpose() - blocks.r.as_matrix()),
    })
}

/// Problem data entering the dual objective.
#[derive(Debug, Clone, Copy)]
pub enum DualPayload<'a> {
    /// `x_iᵀ Λ(0) x_i`.
    Deterministic(&'a DVector<f64>),
    /// `tr(Λ(0) X_i) + ∫ tr(Λ W) dt`.
    Stochastic {
        x_i_cov: &'a SymMat,
        w: &'a MatrixFn,
    },
}

pub fn dual_objective(lambda: &MatTrajectory, payload: DualPayload<'_>) -> Result<f64> {
    let l0 = lambda.get(0).ok_or_else(|| Error::IncompleteTrajectory {
        label: lambda.label().to_string(),
        node: 0,
    })?;
    match payload {
        DualPayload::Deterministic(x) => {
            if x.len() != l0.dim() {
                return Err(dim_mismatch("dual_objective x_i", l0.dim(), x.len()));
            }
            Ok((x.transpose() * l0.as_matrix() * x)[(0, 0)])
        }
        DualPayload::Stochastic { x_i_cov, w } => {
            if !lambda.is_complete() {
                return Err(Error::IncompleteTrajectory {
                    label: lambda.label().to_string(),
                    node: lambda.grid().steps(),
                });
            }
            let init = trace_inner(l0, x_i_cov)?;
            let vals = lambda
                .iter()
                .map(|(_, t, l)| trace_inner(l, &w.sym_at(t)))
                .collect::<Result<Vec<_>>>()?;
            Ok(init + simpson(&vals, lambda.grid().step()))
        }
    }
}
