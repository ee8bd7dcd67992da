//! Dense symmetric matrices and positive-cone utilities.
//!
//! Tolerances are relative: an eigenvalue `λ` of `m` counts as nonnegative when
//! `λ ≥ -tol · max(1, ‖m‖_max)`, where `‖m‖_max` is the largest absolute entry.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{dim_mismatch, Error, Result};

/// Default relative tolerance for PSD and rank decisions.
pub const DEFAULT_TOL: f64 = 1e-9;

/// A dense real symmetric matrix. The stored entries are exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat(DMatrix<f64>);

impl SymMat {
    /// Builds a symmetric matrix from the upper triangle of `m`, mirroring it
    /// onto the lower triangle.
    pub fn from_upper(mut m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(dim_mismatch(
                "SymMat::from_upper",
                "square matrix",
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                m[(i, j)] = m[(j, i)];
            }
        }
        Ok(SymMat(m))
    }

    /// Builds `(m + mᵀ)/2`.
    pub fn symmetrize(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(dim_mismatch(
                "SymMat::symmetrize",
                "square matrix",
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        let n = m.nrows();
        let mut out = m.clone();
        for j in 0..n {
            for i in (j + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(SymMat(out))
    }

    /// Internal constructor for results that are symmetric up to rounding.
    pub(crate) fn from_symmetric_unchecked(m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut out = m;
        for j in 0..n {
            for i in (j + 1)..n {
                let v = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        SymMat(out)
    }

    pub fn zeros(n: usize) -> Self {
        SymMat(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMat(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMat(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// `v·vᵀ`.
    pub fn outer(v: &DVector<f64>) -> Self {
        SymMat::from_symmetric_unchecked(v * v.transpose())
    }

    /// `U·Uᵀ` for an arbitrary `n×r` matrix.
    pub fn gram(u: &DMatrix<f64>) -> Self {
        SymMat::from_symmetric_unchecked(u * u.transpose())
    }

    /// `X·S·Xᵀ` for a congruence `X`.
    pub fn congruence(&self, x: &DMatrix<f64>) -> Self {
        SymMat::from_symmetric_unchecked(x * &self.0 * x.transpose())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Largest absolute entry.
    pub fn norm_max(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        SymMat(&self.0 * s)
    }

    /// Eigenvalues in ascending order with matching eigenvector columns.
    pub fn eigen(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.dim();
        if n == 0 {
            return (DVector::zeros(0), DMatrix::zeros(0, 0));
        }
        let eig = SymmetricEigen::new(self.0.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        (values, vectors)
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        let n = self.dim();
        if n == 0 {
            return DVector::zeros(0);
        }
        let mut v: Vec<f64> = self
            .0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        v.sort_by(f64::total_cmp);
        DVector::from_vec(v)
    }

    pub fn min_eig(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_eig(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Relative PSD test: `min λ ≥ -tol·max(1, ‖m‖_max)`.
    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eig() >= -tol * self.norm_max().max(1.0)
    }

    /// Relative positive-definiteness test: `min λ > tol·max(1, ‖m‖_max)`.
    pub fn is_pd(&self, tol: f64) -> bool {
        self.min_eig() > tol * self.norm_max().max(1.0)
    }

    /// Applies `f` to the eigenvalues: `V·diag(f(λ))·Vᵀ`.
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> Self {
        let (vals, vecs) = self.eigen();
        let d = DMatrix::from_diagonal(&vals.map(f));
        SymMat::from_symmetric_unchecked(&vecs * d * vecs.transpose())
    }

    /// Embeds `self` into the top-left corner of a `size×size` zero matrix.
    pub fn embed_top_left(&self, size: usize) -> Self {
        let n = self.dim();
        let mut out = DMatrix::zeros(size, size);
        out.view_mut((0, 0), (n, n)).copy_from(&self.0);
        SymMat(out)
    }

    /// The `(start..start+len)` principal sub-block.
    pub fn principal_block(&self, start: usize, len: usize) -> Self {
        SymMat(self.0.view((start, start), (len, len)).into_owned())
    }

    fn check_same_dim(&self, other: &SymMat, context: &'static str) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(dim_mismatch(context, self.dim(), other.dim()));
        }
        Ok(())
    }
}

impl Add for &SymMat {
    type Output = SymMat;
    fn add(self, rhs: &SymMat) -> SymMat {
        SymMat(&self.0 + &rhs.0)
    }
}

impl Sub for &SymMat {
    type Output = SymMat;
    fn sub(self, rhs: &SymMat) -> SymMat {
        SymMat(&self.0 - &rhs.0)
    }
}

impl Neg for &SymMat {
    type Output = SymMat;
    fn neg(self) -> SymMat {
        SymMat(-&self.0)
    }
}

impl Mul<f64> for &SymMat {
    type Output = SymMat;
    fn mul(self, rhs: f64) -> SymMat {
        self.scale(rhs)
    }
}

/// `tr(h·m)`.
pub fn trace_inner(h: &SymMat, m: &SymMat) -> Result<f64> {
    h.check_same_dim(m, "trace_inner")?;
    Ok(h.0.dot(&m.0))
}

/// Sum of singular values (absolute eigenvalues).
pub fn nuclear_norm(m: &SymMat) -> f64 {
    m.eigenvalues().iter().map(|v| v.abs()).sum()
}

/// Largest singular value (largest absolute eigenvalue).
pub fn sigma_max_norm(m: &SymMat) -> f64 {
    m.eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Returns `m` of unit nuclear norm attaining `tr(h·m) = σ_max(h)`.
///
/// The maximizer is `sign(λ)·v·vᵀ` for the eigenpair `(λ, v)` of largest
/// magnitude.
pub fn trace_duality_maximizer(h: &SymMat) -> Result<SymMat> {
    if h.0.iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroInput);
    }
    let (vals, vecs) = h.eigen();
    let (idx, lam) = vals
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("non-empty spectrum");
    let v = vecs.column(idx).into_owned();
    Ok(SymMat::outer(&v).scale(lam.signum()))
}

/// Symmetric factor `U` with `U·Uᵀ ≈ m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymFactor {
    pub u: DMatrix<f64>,
}

impl SymFactor {
    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn width(&self) -> usize {
        self.u.ncols()
    }

    pub fn reconstruct(&self) -> SymMat {
        SymMat::gram(&self.u)
    }
}

fn rel_threshold(m: &SymMat, tol: f64) -> f64 {
    tol * m.norm_max().max(1.0)
}

/// Eigendecomposition-based factorization of a PSD matrix, dropping
/// eigenvalues inside the relative tolerance band.
pub fn sym_factor(m: &SymMat, tol: f64) -> Result<SymFactor> {
    let (vals, vecs) = m.eigen();
    let thr = rel_threshold(m, tol);
    if let Some(&min) = vals.iter().next() {
        if min < -thr {
            return Err(Error::NotPsd { min_eig: min });
        }
    }
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > thr).collect();
    let mut u = DMatrix::zeros(m.dim(), keep.len());
    // largest eigenvalue first
    for (col, &i) in keep.iter().rev().enumerate() {
        u.set_column(col, &(vecs.column(i) * vals[i].sqrt()));
    }
    Ok(SymFactor { u })
}

/// Number of eigenvalues with `|λ| > tol·max(1, ‖m‖_max)`.
pub fn eps_rank(m: &SymMat, tol: f64) -> usize {
    let thr = rel_threshold(m, tol);
    m.eigenvalues().iter().filter(|v| v.abs() > thr).count()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchurVerdict {
    pub psd: bool,
    /// Smallest eigenvalue of `m11 − m12·m22⁻¹·m12ᵀ`.
    pub complement_min_eig: f64,
}

/// PSD test of `[m11 m12; m12ᵀ m22]` through the Schur complement of a
/// positive definite `m22`.
pub fn schur_psd_test(
    m11: &SymMat,
    m12: &DMatrix<f64>,
    m22: &SymMat,
    tol: f64,
) -> Result<SchurVerdict> {
    if m12.nrows() != m11.dim() || m12.ncols() != m22.dim() {
        return Err(dim_mismatch(
            "schur_psd_test",
            format!("{}x{}", m11.dim(), m22.dim()),
            format!("{}x{}", m12.nrows(), m12.ncols()),
        ));
    }
    let min22 = m22.min_eig();
    if min22 <= rel_threshold(m22, tol) {
        return Err(Error::M22NotPd { min_eig: min22 });
    }
    let chol = m22
        .0
        .clone()
        .cholesky()
        .ok_or(Error::M22NotPd { min_eig: min22 })?;
    let sol = chol.solve(&m12.transpose());
    let complement = SymMat::from_symmetric_unchecked(&m11.0 - m12 * sol);
    let complement_min_eig = if complement.dim() == 0 {
        0.0
    } else {
        complement.min_eig()
    };
    Ok(SchurVerdict {
        psd: complement_min_eig >= -rel_threshold(&complement, tol),
        complement_min_eig,
    })
}

/// Evidence that two PSD matrices are orthogonal in the trace inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityReport {
    pub inner: f64,
    /// Whether the inner product was small enough for the rank and factor
    /// assertions to apply.
    pub orthogonal: bool,
    /// `max |U1ᵀ·U2|`, present when `orthogonal`.
    pub cross_max: Option<f64>,
    pub cross_ok: Option<bool>,
    pub rank1: usize,
    pub rank2: usize,
    pub rank_sum_ok: Option<bool>,
}

impl OrthogonalityReport {
    /// True when every applicable assertion holds.
    pub fn holds(&self) -> bool {
        !self.orthogonal || (self.cross_ok == Some(true) && self.rank_sum_ok == Some(true))
    }
}

pub fn orthogonality_certificate(
    m1: &SymMat,
    m2: &SymMat,
    tol: f64,
) -> Result<OrthogonalityReport> {
    m1.check_same_dim(m2, "orthogonality_certificate")?;
    let f1 = sym_factor(m1, tol)?;
    let f2 = sym_factor(m2, tol)?;
    let inner = trace_inner(m1, m2)?;
    let rank1 = eps_rank(m1, tol);
    let rank2 = eps_rank(m2, tol);
    let scale = m1.norm_max().max(m2.norm_max()).max(1.0);
    let orthogonal = inner <= tol * scale;
    let (cross_max, cross_ok, rank_sum_ok) = if orthogonal {
        let cross = f1.u.transpose() * &f2.u;
        let cm = cross.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        (
            Some(cm),
            Some(cm <= (tol * scale).sqrt()),
            Some(rank1 + rank2 <= m1.dim()),
        )
    } else {
        (None, None, None)
    };
    Ok(OrthogonalityReport {
        inner,
        orthogonal,
        cross_max,
        cross_ok,
        rank1,
        rank2,
        rank_sum_ok,
    })
}
