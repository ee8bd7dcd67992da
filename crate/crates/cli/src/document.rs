//! Problem documents: the JSON input format and its conversion to core types.

use std::path::Path;

use lqconic_core::analyzers::{ScalarPreset, DEFAULT_STEPS};
use lqconic_core::model::{CostData, MatrixFn, ProblemSpec, StateSpace, TimeGrid, Variant};
use lqconic_core::riccati::{RiccatiData, DEFAULT_ESCAPE_CAP};
use lqconic_core::symmat::{SymMat, DEFAULT_TOL};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{input, CliError, Result};

pub const SCHEMA_VERSION: &str = "1";

/// Row-major dense matrix.
pub type Rows = Vec<Vec<f64>>;

/// A constant matrix, or samples on a uniform grid over `[0, horizon]`
/// interpolated linearly in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    untagged,
    expecting = "an array of rows or an object {\"horizon\", \"samples\"}"
)]
pub enum MatrixDoc {
    Constant(Rows),
    Sampled(SampledDoc),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledDoc {
    pub horizon: f64,
    pub samples: Vec<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    #[serde(rename = "A")]
    pub a: MatrixDoc,
    #[serde(rename = "B")]
    pub b: MatrixDoc,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<MatrixDoc>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<MatrixDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonDoc {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Lqr,
    StochLqr,
    BoundedReal,
    PositiveReal,
    Iqc,
    /// Riccati data for `dri-cloud`: a scalar preset, or the standard form
    /// `−Λ̇ = AᵀΛ + ΛA − ΛMΛ + Q` with final value `lambda_f`.
    Riccati,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Lqr => "lqr",
            Kind::StochLqr => "stoch_lqr",
            Kind::BoundedReal => "bounded_real",
            Kind::PositiveReal => "positive_real",
            Kind::Iqc => "iqc",
            Kind::Riccati => "riccati",
        }
    }

    /// `(required, optional)` payload fields.
    fn fields(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            Kind::Lqr | Kind::Iqc => (&["Q", "R", "x_i"], &["N"]),
            Kind::StochLqr => (&["Q", "R", "X_i", "W"], &["N"]),
            Kind::BoundedReal => (&["gamma"], &[]),
            Kind::PositiveReal => (&[], &[]),
            Kind::Riccati => (&[], &["preset", "A", "M", "Q", "lambda_f"]),
        }
    }
}

/// Variant payload. One flat object keeps parse errors addressed to the
/// exact field; which fields a kind needs is checked after parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantDoc {
    pub kind: Kind,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<MatrixDoc>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Rows>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_i: Option<Vec<f64>>,
    #[serde(rename = "X_i", default, skip_serializing_if = "Option::is_none")]
    pub x_i_cov: Option<Rows>,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub w: Option<MatrixDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<MatrixDoc>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<MatrixDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_f: Option<Rows>,
}

impl VariantDoc {
    fn present(&self) -> [(&'static str, bool); 11] {
        [
            ("Q", self.q.is_some()),
            ("N", self.n.is_some()),
            ("R", self.r.is_some()),
            ("x_i", self.x_i.is_some()),
            ("X_i", self.x_i_cov.is_some()),
            ("W", self.w.is_some()),
            ("gamma", self.gamma.is_some()),
            ("preset", self.preset.is_some()),
            ("A", self.a.is_some()),
            ("M", self.m.is_some()),
            ("lambda_f", self.lambda_f.is_some()),
        ]
    }

    /// Rejects missing required fields and fields the kind does not use.
    pub fn check_fields(&self) -> Result<()> {
        let (required, optional) = self.kind.fields();
        for (name, present) in self.present() {
            if present && !required.contains(&name) && !optional.contains(&name) {
                return Err(input(format!(
                    "variant.{name}: not a field of kind {}",
                    self.kind.as_str()
                )));
            }
            if !present && required.contains(&name) {
                return Err(input(format!(
                    "variant.{name}: required for kind {}",
                    self.kind.as_str()
                )));
            }
        }
        if self.kind == Kind::Riccati {
            let standard = self.a.is_some() || self.m.is_some() || self.q.is_some();
            match (&self.preset, standard || self.lambda_f.is_some()) {
                (Some(_), true) => {
                    return Err(input("variant.preset: excludes A, M, Q and lambda_f"))
                }
                (None, _) => {
                    for (name, present) in [
                        ("A", self.a.is_some()),
                        ("M", self.m.is_some()),
                        ("Q", self.q.is_some()),
                    ] {
                        if !present {
                            return Err(input(format!(
                                "variant.{name}: required without a preset"
                            )));
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn cost(&self) -> Result<CostData> {
        let q = match self.q.as_ref().expect("checked") {
            MatrixDoc::Constant(rows) => symmetric(rows, "variant.Q")?,
            MatrixDoc::Sampled(_) => {
                return Err(input("variant.Q: cost data must be a constant matrix"))
            }
        };
        let r = symmetric(self.r.as_ref().expect("checked"), "variant.R")?;
        let n = match &self.n {
            Some(n) => matrix(n, "variant.N")?,
            None => DMatrix::zeros(q.dim(), r.dim()),
        };
        Ok(CostData::new(q, n, r))
    }

    fn initial_state(&self) -> DVector<f64> {
        DVector::from_vec(self.x_i.clone().expect("checked"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escape_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub schema_version: String,
    /// Required by every variant except `riccati`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemDoc>,
    pub horizon: HorizonDoc,
    pub variant: VariantDoc,
    #[serde(default)]
    pub options: OptionsDoc,
}

/// Riccati coefficients and final value for a DRI cloud.
pub struct RiccatiSource {
    pub data: RiccatiData,
    pub lambda_f: SymMat,
    pub preset: Option<ScalarPreset>,
}

/// Command-line overrides of the document's grid.
#[derive(Debug, Clone, Copy, Default)]
pub struct GridOverride {
    pub steps: Option<usize>,
    pub horizon: Option<f64>,
}

impl ProblemDocument {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: ProblemDocument =
            serde_path_to_error::deserialize(de).map_err(|source| CliError::Parse {
                path: path.to_owned(),
                source,
            })?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(input(format!(
                "schema_version: unsupported version {:?}, expected {SCHEMA_VERSION:?}",
                doc.schema_version
            )));
        }
        doc.variant.check_fields()?;
        Ok(doc)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn grid(&self, ov: GridOverride) -> Result<TimeGrid> {
        let t = ov.horizon.unwrap_or(self.horizon.t);
        let steps = ov.steps.or(self.horizon.steps).unwrap_or(DEFAULT_STEPS);
        TimeGrid::new(t, steps).map_err(|e| input(format!("horizon: {e}")))
    }

    pub fn tol(&self) -> f64 {
        self.options.tol.unwrap_or(DEFAULT_TOL)
    }

    pub fn escape_cap(&self) -> f64 {
        self.options.escape_cap.unwrap_or(DEFAULT_ESCAPE_CAP)
    }

    /// SHA-256 over the canonical serialization of `system` and `variant`.
    /// Horizon and options are excluded since command-line flags override
    /// them.
    pub fn system_hash(&self) -> String {
        let canonical =
            serde_json::to_vec(&(&self.system, &self.variant)).expect("documents serialize");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn state_space(&self) -> Result<StateSpace> {
        let sys = self.system.as_ref().ok_or_else(|| {
            input(format!(
                "system: required for kind {}",
                self.variant.kind.as_str()
            ))
        })?;
        let a = matrix_fn(&sys.a, "system.A")?;
        let b = matrix_fn(&sys.b, "system.B")?;
        let (n, m) = (a.shape().0, b.shape().1);
        let c = match &sys.c {
            Some(c) => matrix_fn(c, "system.C")?,
            None => MatrixFn::Constant(DMatrix::zeros(0, n)),
        };
        let p = c.shape().0;
        let d = match &sys.d {
            Some(d) => matrix_fn(d, "system.D")?,
            None => MatrixFn::Constant(DMatrix::zeros(p, m)),
        };
        Ok(StateSpace::new(
            a,
            b,
            reshape_empty(c, n),
            reshape_empty(d, m),
        ))
    }

    /// The validated problem on the resolved grid.
    pub fn spec(&self, ov: GridOverride) -> Result<ProblemSpec> {
        let v = &self.variant;
        v.check_fields()?;
        let variant = match v.kind {
            Kind::Lqr => Variant::Lqr {
                cost: v.cost()?,
                x_i: v.initial_state(),
            },
            Kind::StochLqr => Variant::StochLqr {
                cost: v.cost()?,
                x_i_cov: symmetric(v.x_i_cov.as_ref().expect("checked"), "variant.X_i")?,
                w: matrix_fn(v.w.as_ref().expect("checked"), "variant.W")?,
            },
            Kind::BoundedReal => Variant::BoundedReal {
                gamma: v.gamma.expect("checked"),
            },
            Kind::PositiveReal => Variant::PositiveReal,
            Kind::Iqc => Variant::GeneralIqc {
                cost: v.cost()?,
                x_i: v.initial_state(),
            },
            Kind::Riccati => {
                return Err(input(
                    "variant.kind: riccati documents are only accepted by dri-cloud",
                ))
            }
        };
        self.spec_with(variant, ov)
    }

    /// The document's system and grid with a caller-chosen variant.
    pub fn spec_with(&self, variant: Variant, ov: GridOverride) -> Result<ProblemSpec> {
        let spec = ProblemSpec::new(self.state_space()?, self.grid(ov)?, variant);
        spec.validate()?;
        Ok(spec)
    }

    /// Riccati data of a `riccati` document, or the LQ Riccati equation of
    /// any other problem with `Λ(T) = 0`.
    pub fn riccati(&self, ov: GridOverride) -> Result<RiccatiSource> {
        let v = &self.variant;
        if v.kind != Kind::Riccati {
            let spec = self.spec(ov)?;
            let qf = lqconic_core::model::assemble_quadform(&spec)?;
            return Ok(RiccatiSource {
                data: RiccatiData::from_problem(&spec.sys, &qf)?,
                lambda_f: SymMat::zeros(spec.sys.n()),
                preset: None,
            });
        }
        v.check_fields()?;
        if let Some(name) = &v.preset {
            let preset = ScalarPreset::parse(name).ok_or_else(|| {
                input(format!(
                    "variant.preset: unknown preset {name:?}, expected one of q+m+, q+m-, q-m+, q-m-"
                ))
            })?;
            return Ok(RiccatiSource {
                data: preset.data(),
                lambda_f: SymMat::zeros(1),
                preset: Some(preset),
            });
        }
        let get = |f: &Option<MatrixDoc>, name: &str| {
            matrix_fn(f.as_ref().expect("checked"), &format!("variant.{name}"))
        };
        let a = get(&v.a, "A")?;
        let n = a.shape().0;
        let data = RiccatiData::standard(a, get(&v.m, "M")?, get(&v.q, "Q")?)
            .map_err(|e| input(format!("variant: {e}")))?;
        let lambda_f = match &v.lambda_f {
            Some(l) => symmetric(l, "variant.lambda_f")?,
            None => SymMat::zeros(n),
        };
        if lambda_f.dim() != n {
            return Err(input(format!(
                "variant.lambda_f: expected {n}x{n}, found {0}x{0}",
                lambda_f.dim()
            )));
        }
        Ok(RiccatiSource {
            data,
            lambda_f,
            preset: None,
        })
    }
}

pub(crate) fn matrix(rows: &Rows, field: &str) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(input(format!(
            "{field}[{i}]: row has {} entries, expected {cols}",
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_fn(doc: &MatrixDoc, field: &str) -> Result<MatrixFn> {
    match doc {
        MatrixDoc::Constant(rows) => Ok(MatrixFn::Constant(matrix(rows, field)?)),
        MatrixDoc::Sampled(s) => {
            let samples = s
                .samples
                .iter()
                .enumerate()
                .map(|(k, r)| matrix(r, &format!("{field}.samples[{k}]")))
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = samples.first() {
                if let Some(k) = samples.iter().position(|m| m.shape() != first.shape()) {
                    return Err(input(format!(
                        "{field}.samples[{k}]: shape differs from samples[0]"
                    )));
                }
            }
            Ok(MatrixFn::Sampled {
                horizon: s.horizon,
                samples,
            })
        }
    }
}

/// `[]` carries no column count; give it the one the system implies.
fn reshape_empty(f: MatrixFn, cols: usize) -> MatrixFn {
    match f {
        MatrixFn::Constant(m) if m.nrows() == 0 => MatrixFn::Constant(DMatrix::zeros(0, cols)),
        other => other,
    }
}

fn symmetric(rows: &Rows, field: &str) -> Result<SymMat> {
    let m = matrix(rows, field)?;
    if !m.is_square() {
        return Err(input(format!(
            "{field}: expected a square matrix, found {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    if (&m - m.transpose()).amax() > 1e-12 * scale {
        return Err(input(format!("{field}: not symmetric")));
    }
    Ok(SymMat::symmetrize(&m).expect("square"))
}
