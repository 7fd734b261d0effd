//! Batch front end: JSON experiment configs in, JSON reports and CSV tables out.

use std::path::PathBuf;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cocycle::{
    bunching_constant, check_fiber_bunched, ensemble_spectrum, spectrum_gap_report, Cocycle,
    SpectrumEstimate, SpectrumOptions,
};
use crate::criterion::{
    criterion_verdict, cross_validate, matrix_gap, rotate_at_homoclinic, transition_map_rotated,
    transition_map_smooth, Consistency, CriterionConfig,
};
use crate::error::Error;
use crate::linalg::{from_rows, op_norm, to_rows};
use crate::report::{CriterionReport, Tolerances, Verdict};
use crate::shift::{
    make_homoclinic, simplicity_check_shift, PeriodicWord, ShiftSpec, METRIC_WINDOW,
};
use crate::smooth::{
    derivative_cocycle, homoclinic_linear, periodic_points_linear, BundleSide, MapSpec,
    RestrictedCocycle, TorusCocycle, DEFAULT_BUNDLE_STEPS, DEFAULT_CLEARANCE_STEPS,
};

/// Version of the JSON layout of [`RunReport`].
pub const RUN_SCHEMA_VERSION: u32 = 1;
/// Largest sweep grid accepted.
pub const MAX_GRID: usize = 1000;
/// Sweeps with a smaller fraction of successful rows exit with a failure.
pub const SWEEP_SUCCESS_FRACTION: f64 = 0.9;
/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "PINCHTWIST_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INCONSISTENT: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Run(#[from] Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_CONFIG,
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn default_renorm() -> usize {
    1
}
fn default_orbits() -> usize {
    1
}
fn default_gap_tol() -> f64 {
    1e-3
}
fn default_bundle_steps() -> usize {
    DEFAULT_BUNDLE_STEPS
}
fn default_clearance_steps() -> usize {
    DEFAULT_CLEARANCE_STEPS
}
fn default_bunching_steps() -> usize {
    20
}
fn default_bunching_samples() -> usize {
    32
}
fn default_side() -> BundleSide {
    BundleSide::Uu
}

/// Fiber over a smooth map.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum FiberSpec {
    #[default]
    Derivative,
    Restricted {
        side: BundleSide,
        dim: usize,
        #[serde(default = "default_bundle_steps")]
        bundle_steps: usize,
    },
    NearIdentity {
        epsilon: f64,
    },
    Constant {
        matrix: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemSpec {
    Shift(ShiftSpec),
    Smooth {
        map: MapSpec,
        #[serde(default)]
        fiber: FiberSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub system: SystemSpec,
    pub steps: usize,
    #[serde(default = "default_renorm")]
    pub renorm_period: usize,
    #[serde(default = "default_orbits")]
    pub orbits: usize,
    #[serde(default)]
    pub transient: Option<usize>,
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BunchingConfig {
    pub system: SystemSpec,
    pub steps: usize,
    pub samples: usize,
    /// Also run the fiber-bunching fit at this rate.
    #[serde(default)]
    pub chi: Option<f64>,
    pub seed: u64,
}

/// Monte-Carlo spectrum run compared against the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    pub steps: usize,
    #[serde(default = "default_orbits")]
    pub orbits: usize,
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftCheckConfig {
    pub shift: ShiftSpec,
    pub periodic: Vec<u32>,
    #[serde(default)]
    pub insertion: Vec<u32>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub validation: Option<ValidationConfig>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationConfig {
    pub theta: f64,
    #[serde(default = "default_clearance_steps")]
    pub clearance_steps: usize,
}

/// Criterion at the fixed point at the origin of a linear model, through the
/// homoclinic point generated by `lattice`, optionally after a local rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothCheckConfig {
    pub map: MapSpec,
    #[serde(default = "default_side")]
    pub side: BundleSide,
    pub dim: usize,
    #[serde(default = "default_bundle_steps")]
    pub bundle_steps: usize,
    pub lattice: Vec<i64>,
    #[serde(default)]
    pub rotation: Option<RotationConfig>,
    pub chi: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_bunching_steps")]
    pub bunching_steps: usize,
    #[serde(default = "default_bunching_samples")]
    pub bunching_samples: usize,
    #[serde(default)]
    pub validation: Option<ValidationConfig>,
    pub seed: u64,
}

/// Runs `base` once per value, with the value written at the JSON pointer
/// `parameter` and a per-row seed derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: Value,
    pub parameter: String,
    pub values: Vec<f64>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    Spectrum(SpectrumConfig),
    Bunching(BunchingConfig),
    ShiftCheck(ShiftCheckConfig),
    SmoothCheck(SmoothCheckConfig),
    Sweep(SweepConfig),
}

impl ExperimentConfig {
    pub fn command(&self) -> &'static str {
        match self {
            ExperimentConfig::Spectrum(_) => "spectrum",
            ExperimentConfig::Bunching(_) => "bunching",
            ExperimentConfig::ShiftCheck(_) => "shift-check",
            ExperimentConfig::SmoothCheck(_) => "smooth-check",
            ExperimentConfig::Sweep(_) => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    /// SHA-256 of the config with keys sorted.
    pub config_hash: String,
    pub wall_time_secs: f64,
    pub payload: Value,
}

/// A finished run: the report, an optional CSV table and the exit code.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: RunReport,
    pub csv: Option<(PathBuf, String)>,
    pub exit_code: i32,
}

pub fn config_hash(config: &Value) -> String {
    // serde_json maps are ordered by key, so this serialization is canonical.
    hex::encode(Sha256::digest(config.to_string().as_bytes()))
}

pub fn parse_config(text: &str) -> Result<(ExperimentConfig, Value), CliError> {
    let value: Value = serde_json::from_str(text).map_err(|e| config_error(e.to_string()))?;
    let config = serde_json::from_value(value.clone()).map_err(|e| config_error(e.to_string()))?;
    Ok((config, value))
}

/// Parses and runs a config.
pub fn run(text: &str) -> Result<Outcome, CliError> {
    let (config, value) = parse_config(text)?;
    run_config(&config, &value)
}

pub fn run_config(config: &ExperimentConfig, value: &Value) -> Result<Outcome, CliError> {
    let start = std::time::Instant::now();
    let hash = config_hash(value);
    let (payload, exit_code, csv) = match config {
        ExperimentConfig::Sweep(s) => {
            let (payload, exit_code, table) = sweep(s)?;
            (payload, exit_code, s.csv.clone().map(|p| (p, table)))
        }
        other => {
            let (payload, exit_code) = run_single(other, &hash)?;
            (payload, exit_code, None)
        }
    };
    Ok(Outcome {
        report: RunReport {
            schema_version: RUN_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: config.command().to_string(),
            config_hash: hash,
            wall_time_secs: start.elapsed().as_secs_f64(),
            payload,
        },
        csv,
        exit_code,
    })
}

fn run_single(config: &ExperimentConfig, hash: &str) -> Result<(Value, i32), CliError> {
    match config {
        ExperimentConfig::Spectrum(c) => spectrum(c).map(|v| (v, EXIT_OK)),
        ExperimentConfig::Bunching(c) => bunching(c).map(|v| (v, EXIT_OK)),
        ExperimentConfig::ShiftCheck(c) => shift_check(c, hash),
        ExperimentConfig::SmoothCheck(c) => smooth_check(c, hash),
        ExperimentConfig::Sweep(_) => Err(config_error("sweeps cannot be nested")),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

/// A computation generic over the cocycle type.
trait Task {
    fn run<C: Cocycle>(&self, sys: &C) -> Result<Value, Error>;
}

fn dispatch<T: Task>(spec: &SystemSpec, sample_length: usize, task: &T) -> Result<Value, Error> {
    match spec {
        SystemSpec::Shift(s) => task.run(&s.build()?.with_sample_length(sample_length)),
        SystemSpec::Smooth { map, fiber } => {
            let f = map.build()?;
            match fiber {
                FiberSpec::Derivative => task.run(&derivative_cocycle(&f)),
                FiberSpec::Restricted {
                    side,
                    dim,
                    bundle_steps,
                } => task.run(&RestrictedCocycle::new(&f, *side, *dim, *bundle_steps)?),
                FiberSpec::NearIdentity { epsilon } => {
                    task.run(&TorusCocycle::near_identity(&f, *epsilon)?)
                }
                FiberSpec::Constant { matrix } => {
                    task.run(&TorusCocycle::constant(&f, from_rows(matrix)?)?)
                }
            }
        }
    }
}

fn spectrum_options(
    steps: usize,
    renorm: usize,
    seed: u64,
    transient: Option<usize>,
) -> SpectrumOptions {
    let mut opts = SpectrumOptions::new(steps, renorm, seed);
    if let Some(t) = transient {
        opts.transient = t;
    }
    opts
}

/// Shift samples must cover the whole measured orbit plus the metric window.
fn sample_length(opts: &SpectrumOptions) -> usize {
    opts.steps + opts.transient + 2 * METRIC_WINDOW as usize
}

struct SpectrumTask {
    orbits: usize,
    opts: SpectrumOptions,
    gap_tol: f64,
}

impl Task for SpectrumTask {
    fn run<C: Cocycle>(&self, sys: &C) -> Result<Value, Error> {
        let est = ensemble_spectrum(sys, self.orbits, &self.opts)?;
        let gaps = spectrum_gap_report(&est, self.gap_tol);
        Ok(json!({
            "estimate": to_value(&est),
            "sum": est.sum(),
            "sum_std_error": est.sum_std_error(),
            "gaps": to_value(&gaps),
        }))
    }
}

fn spectrum(c: &SpectrumConfig) -> Result<Value, CliError> {
    let opts = spectrum_options(c.steps, c.renorm_period, c.seed, c.transient);
    let task = SpectrumTask {
        orbits: c.orbits,
        opts,
        gap_tol: c.gap_tol,
    };
    Ok(dispatch(&c.system, sample_length(&opts), &task)?)
}

struct BunchingTask<'a>(&'a BunchingConfig);

impl Task for BunchingTask<'_> {
    fn run<C: Cocycle>(&self, sys: &C) -> Result<Value, Error> {
        let c = self.0;
        let est = bunching_constant(sys, c.steps, c.samples, c.seed)?;
        let fit = c
            .chi
            .map(|chi| check_fiber_bunched(sys, chi, c.steps, c.samples, c.seed))
            .transpose()?;
        Ok(json!({ "estimate": to_value(&est), "fiber_bunching": to_value(&fit) }))
    }
}

fn bunching(c: &BunchingConfig) -> Result<Value, CliError> {
    Ok(dispatch(
        &c.system,
        2 * c.steps + 2 * METRIC_WINDOW as usize,
        &BunchingTask(c),
    )?)
}

fn validate<C: Cocycle>(
    sys: &C,
    v: &ValidationConfig,
    seed: u64,
    report: &CriterionReport,
) -> Result<(SpectrumEstimate, Consistency), Error> {
    let opts = SpectrumOptions::new(v.steps, 1, seed);
    let est = ensemble_spectrum(sys, v.orbits, &opts)?;
    let consistency = cross_validate(report, &est, v.gap_tol);
    Ok((est, consistency))
}

fn exit_for(consistency: Option<Consistency>) -> i32 {
    if consistency == Some(Consistency::Inconsistent) {
        EXIT_INCONSISTENT
    } else {
        EXIT_OK
    }
}

fn shift_check(c: &ShiftCheckConfig, hash: &str) -> Result<(Value, i32), CliError> {
    let sys = c.shift.build()?;
    let p = PeriodicWord::new(sys.shift(), c.periodic.clone())?;
    let u = make_homoclinic(sys.shift(), &p, &c.insertion)?;
    let mut report = simplicity_check_shift(&sys, &p, &u, &c.tolerances);
    report.provenance.config_hash = Some(hash.to_string());
    report.provenance.seeds = vec![c.seed];
    let validation = match &c.validation {
        Some(v) => {
            let opts = SpectrumOptions::new(v.steps, 1, c.seed);
            let sampled = sys.clone().with_sample_length(sample_length(&opts));
            Some(validate(&sampled, v, c.seed, &report)?)
        }
        None => None,
    };
    let consistency = validation.as_ref().map(|v| v.1);
    Ok((
        json!({
            "report": to_value(&report),
            "spectrum": to_value(&validation.as_ref().map(|v| &v.0)),
            "consistency": to_value(&consistency),
        }),
        exit_for(consistency),
    ))
}

fn smooth_check(c: &SmoothCheckConfig, hash: &str) -> Result<(Value, i32), CliError> {
    let f = c.map.build()?;
    if f.integer_matrix().is_none() || !f.bumps().is_empty() || f.is_inverted() {
        return Err(config_error(
            "smooth-check needs an unperturbed linear map; use `rotation` to perturb it",
        ));
    }
    let fixed = periodic_points_linear(&f, 1)?;
    let p = fixed
        .iter()
        .find(|d| d.point.amax() == 0.0)
        .ok_or_else(|| config_error("the map does not fix the origin"))?;
    let z = homoclinic_linear(&f, &c.lattice)?;
    let base = RestrictedCocycle::new(&f, c.side, c.dim, c.bundle_steps)?;
    let mut extras = serde_json::Map::new();
    let mut mismatch = None;
    let coc = match &c.rotation {
        None => base.clone(),
        Some(rot) => {
            if c.side != BundleSide::Uu || c.dim != 2 {
                return Err(config_error("`rotation` needs side uu and dim 2"));
            }
            let rm =
                rotate_at_homoclinic(&f, p, &z, rot.theta, rot.clearance_steps, c.bundle_steps)?;
            let g = RestrictedCocycle::with_reference(
                &rm.map,
                c.side,
                c.dim,
                c.bundle_steps,
                base.reference().clone(),
            )?;
            let (direct, _) = transition_map_smooth(&g, p, &z, &c.tolerances)?;
            let (rotated, _) = transition_map_rotated(&base, p, &z, &rm.rotation, &c.tolerances)?;
            let gap = matrix_gap(&to_rows(&direct.matrix), &to_rows(&rotated.matrix));
            let tails: f64 = direct.tails.iter().chain(&rotated.tails).sum();
            let allowed = 10.0 * tails + 64.0 * f64::EPSILON * op_norm(&direct.matrix);
            if !(gap <= allowed) {
                mismatch = Some(format!(
                    "transition maps of the perturbed and the rotated unperturbed cocycle differ by {gap:.3e} (allowed {allowed:.3e})"
                ));
            }
            extras.insert(
                "perturbation".into(),
                json!({
                    "theta": rot.theta,
                    "radius": rm.radius,
                    "clearance": rm.clearance,
                    "clearance_steps": rot.clearance_steps,
                    "map": to_value(&rm.map.to_spec()),
                }),
            );
            extras.insert(
                "two_paths".into(),
                json!({ "gap": gap, "allowed": allowed, "agree": mismatch.is_none() }),
            );
            g
        }
    };
    let config = CriterionConfig {
        chi: c.chi,
        tolerances: c.tolerances,
        bunching_steps: c.bunching_steps,
        bunching_samples: c.bunching_samples,
        seed: c.seed,
    };
    let mut report = criterion_verdict(&coc, p, &z, &config);
    report.provenance.config_hash = Some(hash.to_string());
    if let Some(m) = mismatch {
        if report.verdict == Verdict::SimplePredicted {
            report.verdict = Verdict::NotDecided;
        }
        report.reasons.push(m);
    }
    let validation = c
        .validation
        .as_ref()
        .map(|v| validate(&coc, v, c.seed, &report))
        .transpose()?;
    let consistency = validation.as_ref().map(|v| v.1);
    extras.insert("report".into(), to_value(&report));
    extras.insert(
        "homoclinic".into(),
        json!({ "point": z.point.as_slice(), "l": z.l, "transversality_angle": z.transversality_angle }),
    );
    extras.insert(
        "spectrum".into(),
        to_value(&validation.as_ref().map(|v| &v.0)),
    );
    extras.insert("consistency".into(), to_value(&consistency));
    Ok((Value::Object(extras), exit_for(consistency)))
}

/// Seed of sweep row `row`, independent of the other rows.
pub fn row_seed(seed: u64, row: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: f64,
    pub seed: u64,
    pub ok: bool,
    pub exit_code: i32,
    pub verdict: Option<Verdict>,
    pub min_relative_gap: Option<f64>,
    pub min_normalized_minor: Option<f64>,
    pub exponents: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub gaps: Vec<f64>,
    pub error: Option<String>,
}

fn floats(v: &Value, pointer: &str) -> Vec<f64> {
    v.pointer(pointer)
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_f64).collect())
        .unwrap_or_default()
}

fn first_floats(v: &Value, pointers: &[&str]) -> Vec<f64> {
    pointers
        .iter()
        .map(|p| floats(v, p))
        .find(|f| !f.is_empty())
        .unwrap_or_default()
}

fn sweep_row(s: &SweepConfig, row: usize, value: f64) -> SweepRow {
    let seed = row_seed(s.seed, row);
    let mut out = SweepRow {
        parameter: value,
        seed,
        ok: false,
        exit_code: EXIT_CONFIG,
        verdict: None,
        min_relative_gap: None,
        min_normalized_minor: None,
        exponents: Vec::new(),
        std_errors: Vec::new(),
        gaps: Vec::new(),
        error: None,
    };
    let mut config = s.base.clone();
    let result = (|| {
        let slot = config.pointer_mut(&s.parameter).ok_or_else(|| {
            config_error(format!(
                "parameter `{}` is not in the base config",
                s.parameter
            ))
        })?;
        *slot = json!(value);
        config["seed"] = json!(seed);
        let parsed: ExperimentConfig =
            serde_json::from_value(config.clone()).map_err(|e| config_error(e.to_string()))?;
        run_single(&parsed, &config_hash(&config))
    })();
    match result {
        Ok((payload, code)) => {
            out.ok = code != EXIT_CONFIG && code != EXIT_NUMERICAL;
            out.exit_code = code;
            out.verdict = payload
                .pointer("/report/verdict")
                .and_then(|v| serde_json::from_value(v.clone()).ok());
            out.min_relative_gap = payload
                .pointer("/report/pinching/min_relative_gap")
                .and_then(Value::as_f64);
            out.min_normalized_minor = payload
                .pointer("/report/twisting/min_normalized_minor")
                .and_then(Value::as_f64);
            out.exponents = first_floats(&payload, &["/estimate/exponents", "/spectrum/exponents"]);
            out.std_errors =
                first_floats(&payload, &["/estimate/std_errors", "/spectrum/std_errors"]);
            out.gaps = floats(&payload, "/gaps/gaps");
        }
        Err(e) => {
            out.exit_code = e.exit_code();
            out.error = Some(e.to_string());
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per grid point. Exponent columns are numbered from 1 and padded
/// to the widest row.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let k = rows.iter().map(|r| r.exponents.len()).max().unwrap_or(0);
    let g = rows.iter().map(|r| r.gaps.len()).max().unwrap_or(0);
    let mut header = vec![
        "parameter".to_string(),
        "seed".into(),
        "ok".into(),
        "exit_code".into(),
        "verdict".into(),
        "min_relative_gap".into(),
        "min_normalized_minor".into(),
    ];
    header.extend((1..=k).map(|i| format!("exponent_{i}")));
    header.extend((1..=k).map(|i| format!("std_error_{i}")));
    header.extend((1..=g).map(|i| format!("gap_{i}")));
    header.push("error".into());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let pad = |v: &[f64], n: usize| (0..n).map(|i| opt(v.get(i).copied())).collect::<Vec<_>>();
        let mut rec = vec![
            r.parameter.to_string(),
            r.seed.to_string(),
            r.ok.to_string(),
            r.exit_code.to_string(),
            r.verdict
                .map(|v| to_value(&v).as_str().unwrap_or_default().to_string())
                .unwrap_or_default(),
            opt(r.min_relative_gap),
            opt(r.min_normalized_minor),
        ];
        rec.extend(pad(&r.exponents, k));
        rec.extend(pad(&r.std_errors, k));
        rec.extend(pad(&r.gaps, g));
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn sweep(s: &SweepConfig) -> Result<(Value, i32, String), CliError> {
    if s.values.is_empty() {
        return Err(config_error("sweep grid is empty"));
    }
    if s.values.len() > MAX_GRID {
        return Err(config_error(format!(
            "sweep grid has {} points, limit {MAX_GRID}",
            s.values.len()
        )));
    }
    if !s.base.is_object() || s.base.get("command").and_then(Value::as_str) == Some("sweep") {
        return Err(config_error("sweep base must be a non-sweep config object"));
    }
    let rows: Vec<SweepRow> = s
        .values
        .par_iter()
        .enumerate()
        .map(|(i, v)| sweep_row(s, i, *v))
        .collect();
    let succeeded = rows.iter().filter(|r| r.ok).count();
    let exit_code = if rows.iter().any(|r| r.exit_code == EXIT_INCONSISTENT) {
        EXIT_INCONSISTENT
    } else if (succeeded as f64) < SWEEP_SUCCESS_FRACTION * rows.len() as f64 {
        EXIT_NUMERICAL
    } else {
        EXIT_OK
    };
    let table = sweep_csv(&rows);
    Ok((
        json!({
            "parameter": s.parameter,
            "succeeded": succeeded,
            "failed": rows.len() - succeeded,
            "rows": to_value(&rows),
        }),
        exit_code,
        table,
    ))
}

/// Byte-stable form of a payload for comparisons across runs.
pub fn payload_bytes(report: &RunReport) -> String {
    report.payload.to_string()
}
