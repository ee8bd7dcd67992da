use std::path::{Path, PathBuf};
use std::time::Instant;

use lqconic_core::analyzers::{
    bounded_real_test, dri_cloud as run_cloud, hinf_norm_bisection, iqc_infimum, passivity_test,
    solve_lqr, solve_stoch_lqr, verify_solution, AnalyzerOptions, DriCloudOptions, OptimalValue,
    MAXIMALITY_TOL,
};
use lqconic_core::model::{ProblemSpec, Variant, VariantTag};
use lqconic_core::riccati::{DreOptions, DreSolution};
use serde::{Deserialize, Serialize};

use crate::csv::format_trajectory;
use crate::document::{GridOverride, ProblemDocument, SCHEMA_VERSION};
use crate::error::{input, CliError, Result};
use crate::result::{
    CertificateDoc, GridDoc, NormDoc, ResultDocument, RunOptionsDoc, TimingDoc, ToolDoc,
};

/// Non-error ends of a command, each with its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    MinusInfinity,
    NotPassive,
    VerificationFailed,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::MinusInfinity => 2,
            Outcome::NotPassive => 3,
            Outcome::VerificationFailed => 4,
        }
    }
}

/// Exit code of every [`CliError`].
pub const INPUT_ERROR: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analysis {
    Lqr,
    Slqr,
    Iqc,
    Hinf,
    Passivity,
}

impl Analysis {
    pub fn as_str(self) -> &'static str {
        match self {
            Analysis::Lqr => "lqr",
            Analysis::Slqr => "slqr",
            Analysis::Iqc => "iqc",
            Analysis::Hinf => "hinf",
            Analysis::Passivity => "passivity",
        }
    }

    pub fn parse(name: &str) -> Option<Analysis> {
        [
            Analysis::Lqr,
            Analysis::Slqr,
            Analysis::Iqc,
            Analysis::Hinf,
            Analysis::Passivity,
        ]
        .into_iter()
        .find(|a| a.as_str() == name)
    }

    fn accepts(self) -> &'static [VariantTag] {
        match self {
            Analysis::Lqr => &[VariantTag::Lqr],
            Analysis::Slqr => &[VariantTag::StochLqr],
            Analysis::Iqc => &[
                VariantTag::GeneralIqc,
                VariantTag::BoundedReal,
                VariantTag::PositiveReal,
            ],
            Analysis::Hinf | Analysis::Passivity => &[],
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub input: PathBuf,
    pub out: Option<PathBuf>,
    pub steps: Option<usize>,
    pub tol: Option<f64>,
    pub horizon: Option<f64>,
    pub timing: bool,
}

impl RunArgs {
    fn grid_override(&self) -> GridOverride {
        GridOverride {
            steps: self.steps,
            horizon: self.horizon,
        }
    }
}

fn analyzer_options(tol: f64, escape_cap: f64) -> AnalyzerOptions {
    AnalyzerOptions {
        tol,
        dre: DreOptions { escape_cap },
    }
}

/// The problem a command analyzes: the document's own variant for the
/// certificate commands, the positive-real form for `passivity` and `hinf`
/// (which uses only the system and grid).
pub fn analyzed_spec(
    doc: &ProblemDocument,
    cmd: Analysis,
    ov: GridOverride,
) -> Result<ProblemSpec> {
    match cmd {
        Analysis::Passivity | Analysis::Hinf => Ok(ProblemSpec::new(
            doc.state_space()?,
            doc.grid(ov)?,
            Variant::PositiveReal,
        )),
        _ => {
            let spec = doc.spec(ov)?;
            let tag = spec.variant.tag();
            if !cmd.accepts().contains(&tag) {
                return Err(input(format!(
                    "variant.kind: {} does not accept a {} document",
                    cmd.as_str(),
                    tag.as_str()
                )));
            }
            Ok(spec)
        }
    }
}

pub fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn analyze(cmd: Analysis, args: &RunArgs) -> Result<Outcome> {
    let doc = ProblemDocument::read(&args.input)?;
    let ov = args.grid_override();
    let tol = args.tol.unwrap_or(doc.tol());
    let escape_cap = doc.escape_cap();
    let opts = analyzer_options(tol, escape_cap);
    let started = Instant::now();
    let spec = analyzed_spec(&doc, cmd, ov)?;
    let mut passes = None;
    let mut norm = None;
    let certificate = match cmd {
        Analysis::Lqr => Some(solve_lqr(&spec, &opts)?),
        Analysis::Slqr => Some(solve_stoch_lqr(&spec, &opts)?),
        Analysis::Iqc => Some(iqc_infimum(&spec, &opts)?),
        Analysis::Passivity => {
            let r = passivity_test(&spec.sys, spec.grid, &opts)?;
            passes = Some(r.passes);
            Some(r.certificate)
        }
        Analysis::Hinf => {
            norm = Some(hinf_norm_bisection(&spec.sys, spec.grid, tol, &opts)?);
            None
        }
    };
    let elapsed = started.elapsed().as_secs_f64();
    let outcome = match (&certificate, passes) {
        (_, Some(false)) => Outcome::NotPassive,
        (Some(c), None) if !c.optimal_value.is_finite() => Outcome::MinusInfinity,
        _ => Outcome::Success,
    };
    let result = ResultDocument {
        schema_version: SCHEMA_VERSION.into(),
        tool: ToolDoc::current(),
        command: cmd.as_str().into(),
        system_hash: doc.system_hash(),
        grid: GridDoc::of(&spec.grid),
        options: RunOptionsDoc { tol, escape_cap },
        passes,
        certificate: certificate.as_ref().map(CertificateDoc::from_certificate),
        norm: norm.as_ref().map(NormDoc::of),
        timing: args.timing.then_some(TimingDoc {
            wall_seconds: elapsed,
        }),
    };
    write_output(args.out.as_deref(), &result.to_json())?;
    if let Some(c) = &certificate {
        if let OptimalValue::MinusInfinity { escape_time } = c.optimal_value {
            eprintln!("infimum is -inf: Riccati solution escapes at t = {escape_time}");
        }
    }
    if passes == Some(false) {
        eprintln!("not passive on [0, {}]", spec.grid.horizon());
    }
    Ok(outcome)
}

#[derive(Debug, Clone)]
pub struct CloudArgs {
    pub input: PathBuf,
    pub csv_dir: PathBuf,
    pub samples: usize,
    pub seed: Option<u64>,
    pub switch_points: usize,
    pub steps: Option<usize>,
    pub horizon: Option<f64>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryEntry {
    pub file: String,
    pub seed: Option<u64>,
    pub escaped: bool,
    pub escape_time: Option<f64>,
    /// Grid nodes covered by the file.
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudSummary {
    pub schema_version: String,
    pub tool: ToolDoc,
    pub preset: Option<String>,
    pub grid: GridDoc,
    pub seed: u64,
    pub switch_points: usize,
    pub tolerance: f64,
    /// Every sample stays below the extremal (within `tolerance`) at every
    /// shared node.
    pub maximal: bool,
    pub worst_margin: Option<f64>,
    pub violations: usize,
    pub extremal: TrajectoryEntry,
    pub samples: Vec<TrajectoryEntry>,
}

pub const SUMMARY_FILE: &str = "summary.json";
pub const EXTREMAL_FILE: &str = "dre.csv";

pub fn sample_file(i: usize, count: usize) -> String {
    let width = count.saturating_sub(1).to_string().len().max(3);
    format!("dri_{i:0width$}.csv")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn entry(file: String, seed: Option<u64>, sol: &DreSolution) -> TrajectoryEntry {
    TrajectoryEntry {
        file,
        seed,
        escaped: sol.escaped,
        escape_time: sol.escape_time,
        nodes: sol.lambda.len(),
    }
}

/// Writes the extremal and sample CSVs plus the summary. Exits with
/// [`Outcome::VerificationFailed`] when some sample rises above the extremal.
pub fn dri_cloud(args: &CloudArgs) -> Result<Outcome> {
    let doc = ProblemDocument::read(&args.input)?;
    let ov = GridOverride {
        steps: args.steps,
        horizon: args.horizon,
    };
    let grid = doc.grid(ov)?;
    let source = doc.riccati(ov)?;
    let seed = args.seed.or(doc.options.seed).unwrap_or(0);
    let opts = DriCloudOptions {
        n_samples: args.samples,
        switch_points: args.switch_points,
        seed,
        amplitude: None,
        tol: args.tol.unwrap_or(MAXIMALITY_TOL),
        dre: DreOptions {
            escape_cap: doc.escape_cap(),
        },
    };
    let report = run_cloud(&source.data, &source.lambda_f, grid, &opts)?;
    std::fs::create_dir_all(&args.csv_dir).map_err(|source| CliError::Io {
        path: args.csv_dir.clone(),
        source,
    })?;
    write_file(
        &args.csv_dir.join(EXTREMAL_FILE),
        &format_trajectory(&report.extremal.lambda),
    )?;
    let mut samples = Vec::with_capacity(report.samples.len());
    for (i, s) in report.samples.iter().enumerate() {
        let file = sample_file(i, report.samples.len());
        write_file(&args.csv_dir.join(&file), &format_trajectory(s.lambda()))?;
        samples.push(entry(file, Some(seed.wrapping_add(i as u64)), &s.solution));
    }
    let summary = CloudSummary {
        schema_version: SCHEMA_VERSION.into(),
        tool: ToolDoc::current(),
        preset: source.preset.map(|p| p.name().to_owned()),
        grid: GridDoc::of(&grid),
        seed,
        switch_points: opts.switch_points,
        tolerance: opts.tol,
        maximal: report.maximal,
        worst_margin: report
            .worst_margin
            .is_finite()
            .then_some(report.worst_margin),
        violations: report.violations,
        extremal: entry(EXTREMAL_FILE.into(), None, &report.extremal),
        samples,
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    write_file(&args.csv_dir.join(SUMMARY_FILE), &text)?;
    if report.maximal {
        Ok(Outcome::Success)
    } else {
        eprintln!(
            "{} of {} samples exceed the extremal (worst margin {:e})",
            report.violations,
            report.samples.len(),
            report.worst_margin
        );
        Ok(Outcome::VerificationFailed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckDoc {
    pub name: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyReport {
    pub passed: bool,
    pub command: String,
    pub system_hash: String,
    pub refined_grid: Option<GridDoc>,
    pub checks: Vec<CheckDoc>,
}

fn check(name: &str, passed: bool, value: f64, tolerance: f64) -> CheckDoc {
    CheckDoc {
        name: name.into(),
        passed,
        value: value.is_finite().then_some(value),
        tolerance: tolerance.is_finite().then_some(tolerance),
    }
}

pub fn verify(problem: &Path, result: &Path, tol: Option<f64>) -> Result<Outcome> {
    let doc = ProblemDocument::read(problem)?;
    let res = ResultDocument::read(result)?;
    let computed = doc.system_hash();
    if computed != res.system_hash {
        return Err(CliError::HashMismatch {
            recorded: res.system_hash,
            computed,
        });
    }
    let cmd = Analysis::parse(&res.command)
        .ok_or_else(|| input(format!("command: cannot verify {:?} results", res.command)))?;
    let ov = GridOverride {
        steps: Some(res.grid.steps),
        horizon: Some(res.grid.t),
    };
    let spec = analyzed_spec(&doc, cmd, ov)?;
    let opts = analyzer_options(tol.unwrap_or(res.options.tol), res.options.escape_cap);
    let report = if cmd == Analysis::Hinf {
        let norm = res
            .norm
            .ok_or_else(|| input("norm: hinf result without a norm"))?;
        let checks = verify_norm(&spec, &norm, &opts)?;
        VerifyReport {
            passed: checks.iter().all(|c| c.passed),
            command: res.command.clone(),
            system_hash: computed.clone(),
            refined_grid: None,
            checks,
        }
    } else {
        let cert = res
            .certificate
            .as_ref()
            .ok_or_else(|| input("certificate: result without a certificate"))?
            .to_certificate(spec.grid)?;
        let r = verify_solution(&spec, &cert, &opts)?;
        let mut checks: Vec<CheckDoc> = r
            .checks
            .iter()
            .map(|c| check(c.name, c.passed, c.value, c.tolerance))
            .collect();
        if let Some(claimed) = res.passes {
            let actual = cert.optimal_value.is_finite();
            checks.push(check(
                "verdict",
                claimed == actual,
                f64::from(u8::from(actual)),
                0.0,
            ));
        }
        VerifyReport {
            passed: r.passed && checks.iter().all(|c| c.passed),
            command: res.command.clone(),
            system_hash: computed.clone(),
            refined_grid: Some(GridDoc::of(&r.refined_grid)),
            checks,
        }
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    print!("{text}");
    Ok(if report.passed {
        Outcome::Success
    } else {
        Outcome::VerificationFailed
    })
}

/// The bracket must straddle the critical γ: the test passes at the upper
/// end and fails at the lower end. A zero norm requires a zero output map.
fn verify_norm(
    spec: &ProblemSpec,
    norm: &NormDoc,
    opts: &AnalyzerOptions,
) -> Result<Vec<CheckDoc>> {
    let [lo, hi] = norm.bracket;
    let mut checks = vec![check(
        "gamma_star_is_upper_end",
        norm.gamma_star == hi && lo <= hi,
        norm.gamma_star,
        0.0,
    )];
    if hi > 0.0 {
        let up = bounded_real_test(&spec.sys, hi, spec.grid, opts)?.passes;
        checks.push(check("upper_end_passes", up, hi, 0.0));
    } else {
        let zero = spec
            .sys
            .c
            .samples()
            .iter()
            .all(|c| c.iter().all(|v| *v == 0.0));
        checks.push(check("zero_output", zero, 0.0, 0.0));
    }
    if lo > 0.0 {
        let down = !bounded_real_test(&spec.sys, lo, spec.grid, opts)?.passes;
        checks.push(check("lower_end_fails", down, lo, 0.0));
    }
    Ok(checks)
}
