//! Result documents written by the analysis commands.
//!
//! Serialization is `serde_json` pretty printing plus a final newline, and
//! floats use shortest round-trip formatting, so parsing a result and
//! serializing it again reproduces the file byte for byte. Non-finite
//! numbers are stored as `null`.

use std::path::Path;

use lqconic_core::analyzers::{Certificate, NormResult, OptimalValue};
use lqconic_core::covariance::Gain;
use lqconic_core::model::{TimeGrid, VariantTag};
use lqconic_core::riccati::MatTrajectory;
use lqconic_core::symmat::SymMat;
use serde::{Deserialize, Serialize};

use crate::document::{matrix, rows_of, Rows, SCHEMA_VERSION};
use crate::error::{input, CliError, Result};

pub const TOOL_NAME: &str = "lqconic";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolDoc {
    pub name: String,
    pub version: String,
}

impl ToolDoc {
    pub fn current() -> Self {
        ToolDoc {
            name: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    #[serde(rename = "T")]
    pub t: f64,
    pub steps: usize,
}

impl GridDoc {
    pub fn of(grid: &TimeGrid) -> Self {
        GridDoc {
            t: grid.horizon(),
            steps: grid.steps(),
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t, self.steps).map_err(|e| input(format!("grid: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptionsDoc {
    pub tol: f64,
    pub escape_cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryDoc {
    /// Grid index of the first sample; nonzero after a finite escape.
    pub first_node: usize,
    pub samples: Vec<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainDoc {
    #[serde(rename = "K")]
    pub k: Vec<Rows>,
    #[serde(rename = "K_dot")]
    pub k_dot: Vec<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateDoc {
    pub variant: String,
    /// Optimal value; `null` when the infimum is `−∞`.
    pub value: Option<f64>,
    pub escape_time: Option<f64>,
    pub primal_value: Option<f64>,
    pub dual_min_eig: Option<f64>,
    pub duality_gap: Option<f64>,
    pub alignment: Option<f64>,
    pub rank_ok: bool,
    pub lambda_max_eig: Option<f64>,
    pub lambda: TrajectoryDoc,
    pub gain: Option<GainDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormDoc {
    pub gamma_star: f64,
    pub iterations: usize,
    pub bracket: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingDoc {
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultDocument {
    pub schema_version: String,
    pub tool: ToolDoc,
    pub command: String,
    pub system_hash: String,
    pub grid: GridDoc,
    pub options: RunOptionsDoc,
    /// Verdict of `passivity`; `null` for other commands.
    pub passes: Option<bool>,
    pub certificate: Option<CertificateDoc>,
    pub norm: Option<NormDoc>,
    /// Present only when timing was requested, so default output is
    /// reproducible.
    pub timing: Option<TimingDoc>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn variant_tag(name: &str) -> Result<VariantTag> {
    [
        VariantTag::Lqr,
        VariantTag::StochLqr,
        VariantTag::BoundedReal,
        VariantTag::PositiveReal,
        VariantTag::GeneralIqc,
    ]
    .into_iter()
    .find(|t| t.as_str() == name)
    .ok_or_else(|| input(format!("certificate.variant: unknown variant {name:?}")))
}

impl CertificateDoc {
    pub fn from_certificate(c: &Certificate) -> Self {
        let (value, escape_time) = match c.optimal_value {
            // `+ 0.0` turns −0 into 0
            OptimalValue::Finite(v) => (Some(v + 0.0), None),
            OptimalValue::MinusInfinity { escape_time } => (None, Some(escape_time)),
        };
        CertificateDoc {
            variant: c.variant.as_str().into(),
            value,
            escape_time,
            primal_value: c.primal_value.and_then(finite),
            dual_min_eig: finite(c.dual_min_eig),
            duality_gap: c.duality_gap.and_then(finite),
            alignment: c.alignment.and_then(finite),
            rank_ok: c.rank_ok,
            lambda_max_eig: c.lambda_max_eig.and_then(finite),
            lambda: TrajectoryDoc {
                first_node: c.lambda.first_index(),
                samples: c
                    .lambda
                    .samples()
                    .iter()
                    .map(|s| rows_of(s.as_matrix()))
                    .collect(),
            },
            gain: c.gain.as_ref().map(|g| GainDoc {
                k: g.samples().iter().map(rows_of).collect(),
                k_dot: g.rates().iter().map(rows_of).collect(),
            }),
        }
    }

    pub fn to_certificate(&self, grid: TimeGrid) -> Result<Certificate> {
        let optimal_value = match (self.value, self.escape_time) {
            (Some(v), None) => OptimalValue::Finite(v),
            (None, Some(escape_time)) => OptimalValue::MinusInfinity { escape_time },
            _ => {
                return Err(input(
                    "certificate: exactly one of value and escape_time must be set",
                ))
            }
        };
        let samples = self
            .lambda
            .samples
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let field = format!("certificate.lambda.samples[{k}]");
                let m = matrix(r, &field)?;
                SymMat::symmetrize(&m).map_err(|e| input(format!("{field}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let lambda = MatTrajectory::partial(grid, self.lambda.first_node, samples, "dre_final")
            .map_err(|e| input(format!("certificate.lambda: {e}")))?;
        let gain = match &self.gain {
            None => None,
            Some(g) => {
                let read = |v: &Vec<Rows>, name: &str| {
                    v.iter()
                        .enumerate()
                        .map(|(k, r)| matrix(r, &format!("certificate.gain.{name}[{k}]")))
                        .collect::<Result<Vec<_>>>()
                };
                Some(
                    Gain::new(grid, read(&g.k, "K")?, read(&g.k_dot, "K_dot")?)
                        .map_err(|e| input(format!("certificate.gain: {e}")))?,
                )
            }
        };
        Ok(Certificate {
            variant: variant_tag(&self.variant)?,
            optimal_value,
            primal_value: self.primal_value,
            gain,
            lambda,
            dual_min_eig: self.dual_min_eig.unwrap_or(f64::NAN),
            duality_gap: self.duality_gap,
            alignment: self.alignment,
            rank_ok: self.rank_ok,
            lambda_max_eig: self.lambda_max_eig,
            grid,
        })
    }
}

impl NormDoc {
    pub fn of(r: &NormResult) -> Self {
        NormDoc {
            gamma_star: r.gamma_star,
            iterations: r.iterations,
            bracket: [r.bracket.0, r.bracket.1],
        }
    }
}

impl ResultDocument {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: ResultDocument =
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
        Ok(doc)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result documents serialize");
        s.push('\n');
        s
    }
}
