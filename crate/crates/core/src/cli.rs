//! The `shelfscan` command line.
//!
//! Every numeric flag mirrors a key of the JSON config file given with
//! `--config`; flags override file values. Reports embed the resolved
//! configuration. Usage errors exit with 2, data errors with 1 and a JSON
//! error record on stderr.

use crate::analytics::{conversion_rates, shelf_stats, visit_vector, PurchaseMode};
use crate::calibration::{cross_store_eval, same_store_eval, AxisRange, CalibrationSet, LabeledTrack, ParamGrid};
use crate::detector::{detect_stops, StopEvent, StopParams};
use crate::error::Error;
use crate::io::{self, MatrixRows};
use crate::kinematics::{build_track, KinematicTrack, Trajectory, DEFAULT_WINDOW, SAMPLE_PERIOD};
use crate::labeling::{check_roster, visit_matrices, LabelManifest, ReviewerLabel};
use crate::layout::{load_layout, save_layout, StoreLayout};
use crate::oracle::oracle_check;
use crate::synth::{generate, random_population, LayoutTemplate, NoiseSpec, ScenarioSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "shelfscan", version, about = "Shelf-visit detection, calibration and analytics")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, env = "SHELFSCAN_JOBS", global = true)]
    pub jobs: Option<usize>,
    /// JSON config file; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect shelf stops.
    Detect(DetectArgs),
    /// Grid-search the stop parameters against reviewer labels.
    Calibrate(CalibrateArgs),
    /// Same-store split evaluation over one or more fractions.
    EvalSame(EvalSameArgs),
    /// Calibrate on store A, evaluate on store B.
    EvalCross(EvalCrossArgs),
    /// Visit averages and conversion rates.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic store and shoppers.
    Synth(SynthArgs),
    /// Compare the detector with the brute-force reference.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixOutput {
    Full,
    Positive,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PurchaseModeArg {
    Quantity,
    Incidence,
}

#[derive(Debug, Args)]
pub struct ParamArgs {
    #[arg(long)]
    pub t_b: Option<f64>,
    #[arg(long)]
    pub delta_b: Option<f64>,
    #[arg(long)]
    pub v_b: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// min:max:step, or a single value.
    #[arg(long)]
    pub t_b_range: Option<String>,
    #[arg(long)]
    pub delta_b_range: Option<String>,
    #[arg(long)]
    pub v_b_range: Option<String>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Sidecar manifest with n_l and the reviewer roster.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub n_l: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub layout: Option<PathBuf>,
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, value_enum)]
    pub matrix: Option<MatrixOutput>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub layout: Option<PathBuf>,
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub window: Option<usize>,
    /// Also write the full score table as grid_scores.csv.
    #[arg(long)]
    pub dump_grid: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalSameArgs {
    #[arg(long)]
    pub layout: Option<PathBuf>,
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub window: Option<usize>,
    /// Calibration fraction; repeat the flag for a sweep.
    #[arg(long)]
    pub p: Vec<f64>,
    /// Fraction sweep as min:max:step.
    #[arg(long)]
    pub p_sweep: Option<String>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalCrossArgs {
    #[arg(long)]
    pub layout: Option<PathBuf>,
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub layout_b: Option<PathBuf>,
    #[arg(long)]
    pub trajectories_b: Option<PathBuf>,
    #[arg(long)]
    pub labels_b: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub n_l: Option<usize>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub layout: Option<PathBuf>,
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    /// Stop events from a previous `detect`; otherwise detection runs with
    /// the given parameters.
    #[arg(long)]
    pub stops: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub purchases: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub purchase_mode: Option<PurchaseModeArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario file; without it a random population is generated.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub shoppers: Option<usize>,
    #[arg(long)]
    pub shelves: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub position_noise: Option<f64>,
    #[arg(long)]
    pub heading_noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write labels produced by the detector at the given parameters.
    #[arg(long)]
    pub plant_labels: bool,
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub n_l: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub scenarios: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Every configurable key. Unset keys take command defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layout: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layout_b: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectories_b: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels_b: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stops: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub purchases: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<ParamGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_l: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixOutput>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub purchase_mode: Option<PurchaseMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump_grid: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenarios: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shoppers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shelves: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position_noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heading_noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plant_labels: Option<bool>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
    /// Oracle disagreement; the report has already been written.
    CheckFailed,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "{e}"),
            CliError::CheckFailed => write!(f, "oracle check failed"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(Error::Io(e))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    result: T,
}

fn write_report<T: Serialize>(path: &Path, command: &'static str, config: &RunConfig, result: T) -> CliResult<()> {
    let report = Report {
        tool: "shelfscan",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        result,
    };
    io::write_json(path, &report)?;
    Ok(())
}

fn require<T: Clone>(value: &Option<T>, flag: &str) -> CliResult<T> {
    value.clone().ok_or_else(|| CliError::Usage(format!("missing --{flag}")))
}

fn require_path(value: &Option<PathBuf>, flag: &str) -> CliResult<PathBuf> {
    let p = require(value, flag)?;
    if !p.exists() {
        return Err(CliError::Usage(format!("--{flag}: {} does not exist", p.display())));
    }
    Ok(p)
}

fn out_dir(config: &RunConfig) -> CliResult<PathBuf> {
    let dir = require(&config.out, "out")?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Usage(format!("--out {}: {e}", dir.display())))?;
    Ok(dir)
}

fn parse_range(text: &str, flag: &str) -> CliResult<AxisRange> {
    let parts: Vec<&str> = text.split(':').collect();
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| CliError::Usage(format!("--{flag}: cannot parse {s:?}")))
    };
    match parts.as_slice() {
        [v] => Ok(AxisRange::single(num(v)?)),
        [a, b, c] => Ok(AxisRange::new(num(a)?, num(b)?, num(c)?)),
        _ => Err(CliError::Usage(format!("--{flag}: expected min:max:step or a single value"))),
    }
}

fn overlay_grid(config: &mut RunConfig, args: &GridArgs) -> CliResult<()> {
    let mut grid = config.grid.unwrap_or_default();
    if let Some(r) = &args.t_b_range {
        grid.t_b = parse_range(r, "t-b-range")?;
    }
    if let Some(r) = &args.delta_b_range {
        grid.delta_b = parse_range(r, "delta-b-range")?;
    }
    if let Some(r) = &args.v_b_range {
        grid.v_b = parse_range(r, "v-b-range")?;
    }
    config.grid = Some(grid);
    Ok(())
}

macro_rules! overlay {
    ($cfg:expr, $args:expr; $($field:ident),* $(,)?) => {
        $( if $args.$field.is_some() { $cfg.$field = $args.$field.clone(); } )*
    };
}

fn resolve(cli: &Cli) -> CliResult<RunConfig> {
    let mut c: RunConfig = match &cli.config {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Usage(format!("--config: {} does not exist", path.display())));
            }
            io::read_json(path)?
        }
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Detect(a) => {
            overlay!(c, a; layout, trajectories, window, matrix, out);
            overlay!(c, a.params; t_b, delta_b, v_b);
        }
        Command::Calibrate(a) => {
            overlay!(c, a; layout, trajectories, window, out);
            overlay!(c, a.labels; labels, manifest, n_l);
            overlay_grid(&mut c, &a.grid)?;
            if a.dump_grid {
                c.dump_grid = Some(true);
            }
        }
        Command::EvalSame(a) => {
            overlay!(c, a; layout, trajectories, window, repeats, seed, out);
            overlay!(c, a.labels; labels, manifest, n_l);
            overlay_grid(&mut c, &a.grid)?;
            let mut ps = a.p.clone();
            if let Some(sweep) = &a.p_sweep {
                ps.extend(parse_range(sweep, "p-sweep")?.values("p").map_err(CliError::Data)?);
            }
            if !ps.is_empty() {
                c.p = Some(ps);
            }
        }
        Command::EvalCross(a) => {
            overlay!(c, a; layout, trajectories, labels, layout_b, trajectories_b, labels_b, manifest, n_l,
                window, repeats, seed, out);
            overlay_grid(&mut c, &a.grid)?;
            if let Some(p) = a.p {
                c.p = Some(vec![p]);
            }
        }
        Command::Analyze(a) => {
            overlay!(c, a; layout, trajectories, stops, window, purchases, out);
            overlay!(c, a.params; t_b, delta_b, v_b);
            if let Some(m) = a.purchase_mode {
                c.purchase_mode = Some(match m {
                    PurchaseModeArg::Quantity => PurchaseMode::Quantity,
                    PurchaseModeArg::Incidence => PurchaseMode::Incidence,
                });
            }
        }
        Command::Synth(a) => {
            overlay!(c, a; scenario, shoppers, shelves, samples, position_noise, heading_noise, seed, window, n_l, out);
            overlay!(c, a.params; t_b, delta_b, v_b);
            if a.plant_labels {
                c.plant_labels = Some(true);
            }
        }
        Command::OracleCheck(a) => {
            overlay!(c, a; seed, scenarios, out);
        }
    }
    Ok(c)
}

fn stop_params(c: &RunConfig) -> CliResult<StopParams> {
    Ok(StopParams::new(require(&c.t_b, "t-b")?, require(&c.delta_b, "delta-b")?, require(&c.v_b, "v-b")?)?)
}

fn build_tracks(trajectories: &[Trajectory], window: usize) -> CliResult<Vec<KinematicTrack>> {
    Ok(trajectories
        .par_iter()
        .map(|t| build_track(t, window))
        .collect::<crate::Result<Vec<_>>>()?)
}

/// Points labels at split trajectory pieces (`id#k`) when the original id
/// was split at a dropout.
fn remap_labels(labels: Vec<ReviewerLabel>, trajectories: &[Trajectory]) -> Vec<ReviewerLabel> {
    let ids: BTreeSet<&str> = trajectories.iter().map(|t| t.trajectory_id.as_str()).collect();
    let mut pieces: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for id in &ids {
        if let Some((base, _)) = id.rsplit_once('#') {
            pieces.entry(base).or_default().push(id);
        }
    }
    labels
        .into_iter()
        .flat_map(|l| match pieces.get(l.trajectory_id.as_str()) {
            Some(ps) if !ids.contains(l.trajectory_id.as_str()) => ps
                .iter()
                .map(|p| ReviewerLabel {
                    trajectory_id: p.to_string(),
                    ..l.clone()
                })
                .collect(),
            _ => vec![l],
        })
        .collect()
}

fn panel_size(c: &RunConfig) -> CliResult<(usize, Option<LabelManifest>)> {
    let manifest = match &c.manifest {
        Some(_) => Some(io::read_manifest(require_path(&c.manifest, "manifest")?)?),
        None => None,
    };
    let n_l = match (c.n_l, &manifest) {
        (Some(n), _) => n,
        (None, Some(m)) => m.n_l,
        (None, None) => return Err(CliError::Usage("missing --n-l or --manifest".into())),
    };
    Ok((n_l, manifest))
}

fn load_labeled(
    layout_path: &Path,
    traj_path: &Path,
    labels_path: &Path,
    n_l: usize,
    manifest: Option<&LabelManifest>,
    window: usize,
) -> CliResult<(StoreLayout, CalibrationSet)> {
    let layout = load_layout(layout_path)?;
    let trajectories = io::read_trajectories(traj_path)?;
    let labels = remap_labels(io::read_labels(labels_path)?, &trajectories);
    if let Some(m) = manifest {
        check_roster(&labels, m)?;
    }
    let visits = visit_matrices(&labels, &trajectories, &layout, n_l)?;
    let tracks = build_tracks(&trajectories, window)?;
    let dataset = tracks
        .into_iter()
        .zip(visits)
        .map(|(track, visits)| LabeledTrack { track, visits })
        .collect();
    let set = CalibrationSet::new(dataset, &layout)?;
    Ok((layout, set))
}

fn cmd_detect(c: &RunConfig) -> CliResult<()> {
    let layout = load_layout(require_path(&c.layout, "layout")?)?;
    let trajectories = io::read_trajectories(require_path(&c.trajectories, "trajectories")?)?;
    let params = stop_params(c)?;
    let window = c.window.unwrap_or(DEFAULT_WINDOW);
    let matrix = c.matrix.unwrap_or(MatrixOutput::Full);
    let out = out_dir(c)?;

    let mut stops = std::io::BufWriter::new(std::fs::File::create(out.join("stops.jsonl"))?);
    let mut csv_out = match matrix {
        MatrixOutput::None => None,
        _ => {
            let mut w = csv::Writer::from_path(out.join("stop_matrix.csv")).map_err(Error::from)?;
            w.write_record(io::MATRIX_HEADER).map_err(Error::from)?;
            Some(w)
        }
    };
    let mut n_events = 0usize;
    let mut stop_samples = 0usize;
    for chunk in trajectories.chunks(1024) {
        let results = chunk
            .par_iter()
            .map(|t| {
                let track = build_track(t, window)?;
                let (events, m) = detect_stops(&track, &layout, &params)?;
                Ok((track.times, events, m))
            })
            .collect::<crate::Result<Vec<_>>>()?;
        for (times, events, m) in results {
            use std::io::Write;
            for e in &events {
                serde_json::to_writer(&mut stops, e).map_err(Error::from)?;
                stops.write_all(b"\n")?;
            }
            n_events += events.len();
            stop_samples += m.mask.count_ones();
            if let Some(w) = csv_out.as_mut() {
                let rows = if matrix == MatrixOutput::Full { MatrixRows::Full } else { MatrixRows::Positive };
                io::write_matrix_rows(w, &m, &times, rows)?;
            }
        }
    }
    {
        use std::io::Write;
        stops.flush()?;
    }
    if let Some(mut w) = csv_out {
        w.flush()?;
    }
    #[derive(Serialize)]
    struct Summary {
        trajectories: usize,
        stop_events: usize,
        stop_samples: usize,
    }
    write_report(
        &out.join("detect.json"),
        "detect",
        c,
        Summary {
            trajectories: trajectories.len(),
            stop_events: n_events,
            stop_samples,
        },
    )
}

fn cmd_calibrate(c: &RunConfig) -> CliResult<()> {
    let (n_l, manifest) = panel_size(c)?;
    let (_, set) = load_labeled(
        &require_path(&c.layout, "layout")?,
        &require_path(&c.trajectories, "trajectories")?,
        &require_path(&c.labels, "labels")?,
        n_l,
        manifest.as_ref(),
        c.window.unwrap_or(DEFAULT_WINDOW),
    )?;
    let out = out_dir(c)?;
    if set.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    let grid = c.grid.unwrap_or_default();
    let dump = c.dump_grid.unwrap_or(false);
    let mut result = set.calibrate(&set.all_indices(), &grid, dump)?;
    if let Some(scores) = result.scores.take() {
        io::write_grid_scores(out.join("grid_scores.csv"), &scores)?;
    }
    write_report(&out.join("calibration.json"), "calibrate", c, result)
}

fn cmd_eval_same(c: &RunConfig) -> CliResult<()> {
    let (n_l, manifest) = panel_size(c)?;
    let (_, set) = load_labeled(
        &require_path(&c.layout, "layout")?,
        &require_path(&c.trajectories, "trajectories")?,
        &require_path(&c.labels, "labels")?,
        n_l,
        manifest.as_ref(),
        c.window.unwrap_or(DEFAULT_WINDOW),
    )?;
    let out = out_dir(c)?;
    let ps = c.p.clone().unwrap_or_else(|| vec![0.5]);
    let grid = c.grid.unwrap_or_default();
    let repeats = c.repeats.unwrap_or(10);
    let seed = c.seed.unwrap_or(0);
    let reports = ps
        .iter()
        .map(|&p| same_store_eval(&set, &grid, p, repeats, seed))
        .collect::<crate::Result<Vec<_>>>()?;
    io::write_eval_csv(out.join("eval_repeats.csv"), &reports)?;
    write_report(&out.join("eval.json"), "eval-same", c, reports)
}

fn cmd_eval_cross(c: &RunConfig) -> CliResult<()> {
    let (n_l, manifest) = panel_size(c)?;
    let window = c.window.unwrap_or(DEFAULT_WINDOW);
    let (_, set_a) = load_labeled(
        &require_path(&c.layout, "layout")?,
        &require_path(&c.trajectories, "trajectories")?,
        &require_path(&c.labels, "labels")?,
        n_l,
        manifest.as_ref(),
        window,
    )?;
    let (_, set_b) = load_labeled(
        &require_path(&c.layout_b, "layout-b")?,
        &require_path(&c.trajectories_b, "trajectories-b")?,
        &require_path(&c.labels_b, "labels-b")?,
        n_l,
        manifest.as_ref(),
        window,
    )?;
    let out = out_dir(c)?;
    let p = match c.p.as_deref() {
        None => 1.0,
        Some([p]) => *p,
        Some(_) => return Err(CliError::Usage("eval-cross takes a single --p".into())),
    };
    let grid = c.grid.unwrap_or_default();
    let report = cross_store_eval(&set_a, &set_b, &grid, p, c.repeats.unwrap_or(1), c.seed.unwrap_or(0))?;
    let reports = vec![report];
    io::write_eval_csv(out.join("eval_repeats.csv"), &reports)?;
    write_report(&out.join("eval.json"), "eval-cross", c, reports)
}

fn cmd_analyze(c: &RunConfig) -> CliResult<()> {
    let layout = load_layout(require_path(&c.layout, "layout")?)?;
    let trajectories = io::read_trajectories(require_path(&c.trajectories, "trajectories")?)?;
    let population: Vec<String> = trajectories.iter().map(|t| t.trajectory_id.clone()).collect();
    let n_s = layout.shelf_count();
    let mut by_traj: BTreeMap<String, Vec<StopEvent>> =
        population.iter().map(|id| (id.clone(), Vec::new())).collect();
    if c.stops.is_some() {
        for e in io::read_stops(require_path(&c.stops, "stops")?)? {
            match by_traj.get_mut(&e.trajectory_id) {
                Some(v) => v.push(e),
                None => {
                    return Err(Error::InconsistentPopulation(format!(
                        "stop event for trajectory {} outside the trajectory file",
                        e.trajectory_id
                    ))
                    .into())
                }
            }
        }
    } else {
        let params = stop_params(c)?;
        let tracks = build_tracks(&trajectories, c.window.unwrap_or(DEFAULT_WINDOW))?;
        let results = tracks
            .par_iter()
            .map(|t| detect_stops(t, &layout, &params).map(|r| r.0))
            .collect::<crate::Result<Vec<_>>>()?;
        for (t, events) in trajectories.iter().zip(results) {
            by_traj.insert(t.trajectory_id.clone(), events);
        }
    }
    let out = out_dir(c)?;
    let vectors = population
        .iter()
        .map(|id| visit_vector(id, &by_traj[id], n_s))
        .collect::<crate::Result<Vec<_>>>()?;
    let stats = shelf_stats(&vectors)?;
    io::write_shelf_stats(out.join("shelf_stats.csv"), &stats)?;
    let conversion = match &c.purchases {
        Some(_) => {
            let purchases = io::read_purchases(require_path(&c.purchases, "purchases")?)?;
            let conv = conversion_rates(&stats, &purchases, &population, c.purchase_mode.unwrap_or_default())?;
            io::write_conversion(out.join("conversion.csv"), &conv)?;
            Some(conv)
        }
        None => None,
    };
    #[derive(Serialize)]
    struct Summary {
        stats: crate::analytics::ShelfStats,
        conversion: Option<crate::analytics::ConversionVector>,
    }
    write_report(&out.join("analytics.json"), "analyze", c, Summary { stats, conversion })
}

fn cmd_synth(c: &RunConfig) -> CliResult<()> {
    let spec: ScenarioSpec = match &c.scenario {
        Some(_) => io::read_json(require_path(&c.scenario, "scenario")?)?,
        None => {
            let template = LayoutTemplate {
                shelf_count: c.shelves.unwrap_or(19),
                ..LayoutTemplate::default()
            };
            random_population(
                &template,
                c.shoppers.unwrap_or(100),
                c.samples.unwrap_or(600),
                NoiseSpec {
                    position_std: c.position_noise.unwrap_or(0.0),
                    heading_std: c.heading_noise.unwrap_or(0.0),
                },
                c.seed.unwrap_or(0),
            )
        }
    };
    let scenario = generate(&spec)?;
    let out = out_dir(c)?;
    save_layout(&scenario.layout, out.join("layout.json"))?;
    io::write_trajectories(out.join("trajectories.jsonl"), &scenario.trajectories)?;
    io::write_ground_truth(out.join("ground_truth.jsonl"), &scenario.ground_truth)?;
    io::write_json(out.join("scenario.json"), &spec)?;
    if c.plant_labels.unwrap_or(false) {
        let params = stop_params(c)?;
        let n_l = c.n_l.unwrap_or(4);
        let reviewers: Vec<String> = (1..=n_l).map(|i| format!("reviewer-{i}")).collect();
        let tracks = build_tracks(&scenario.trajectories, c.window.unwrap_or(DEFAULT_WINDOW))?;
        let mut labels = Vec::new();
        for track in &tracks {
            let (events, _) = detect_stops(track, &scenario.layout, &params)?;
            for e in events {
                for r in &reviewers {
                    labels.push(ReviewerLabel {
                        reviewer_id: r.clone(),
                        trajectory_id: e.trajectory_id.clone(),
                        shelf_id: e.shelf_id,
                        t_start: e.t_s - SAMPLE_PERIOD / 2.0,
                        t_end: e.t_f + SAMPLE_PERIOD / 2.0,
                    });
                }
            }
        }
        io::write_jsonl(out.join("labels.jsonl"), &labels)?;
        io::write_json(out.join("manifest.json"), &LabelManifest { n_l, reviewers })?;
    }
    Ok(())
}

fn cmd_oracle(c: &RunConfig) -> CliResult<()> {
    let report = oracle_check(c.seed.unwrap_or(0), c.scenarios.unwrap_or(1000))?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
    if c.out.is_some() {
        let out = out_dir(c)?;
        write_report(&out.join("oracle_check.json"), "oracle-check", c, &report)?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(CliError::CheckFailed)
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let config = resolve(cli)?;
    match &cli.command {
        Command::Detect(_) => cmd_detect(&config),
        Command::Calibrate(_) => cmd_calibrate(&config),
        Command::EvalSame(_) => cmd_eval_same(&config),
        Command::EvalCross(_) => cmd_eval_cross(&config),
        Command::Analyze(_) => cmd_analyze(&config),
        Command::Synth(_) => cmd_synth(&config),
        Command::OracleCheck(_) => cmd_oracle(&config),
    }
}

fn error_record(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("{}", error_record("UsageError", "--jobs must be at least 1"));
            return EXIT_USAGE;
        }
        pool = pool.num_threads(j);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{}", error_record("UsageError", &e.to_string()));
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            eprintln!("{}", error_record("UsageError", &m));
            EXIT_USAGE
        }
        Err(CliError::Data(e)) => {
            eprintln!("{}", error_record(e.kind(), &e.to_string()));
            EXIT_DATA
        }
        Err(CliError::CheckFailed) => {
            eprintln!("{}", error_record("OracleMismatch", "detector and brute-force reference disagree"));
            EXIT_DATA
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_parsing() {
        assert_eq!(parse_range("0.5:4:0.1", "x").unwrap(), AxisRange::new(0.5, 4.0, 0.1));
        assert_eq!(parse_range("2", "x").unwrap(), AxisRange::single(2.0));
        assert!(parse_range("1:2", "x").is_err());
        assert!(parse_range("a:b:c", "x").is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"t_b": 1.0, "delta_b": 1.5, "window": 3}"#).unwrap();
        let cli = Cli::try_parse_from([
            "shelfscan",
            "--config",
            cfg.to_str().unwrap(),
            "detect",
            "--t-b",
            "2.0",
        ])
        .unwrap();
        let c = resolve(&cli).unwrap();
        assert_eq!(c.t_b, Some(2.0));
        assert_eq!(c.delta_b, Some(1.5));
        assert_eq!(c.window, Some(3));
    }

    #[test]
    fn unknown_config_key_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"tb": 1.0}"#).unwrap();
        let cli = Cli::try_parse_from(["shelfscan", "--config", cfg.to_str().unwrap(), "detect"]).unwrap();
        assert!(matches!(resolve(&cli), Err(CliError::Data(Error::Parse(_)))));
    }

    #[test]
    fn labels_follow_split_pieces() {
        use crate::geometry::Vec2;
        use crate::kinematics::RawSample;
        let mk = |id: &str| {
            let s = (0..3).map(|k| RawSample::new(k as f64 * 0.1, Vec2::default(), 0.0)).collect();
            Trajectory::new(id, "s", s).unwrap()
        };
        let ts = vec![mk("a#0"), mk("a#1"), mk("b")];
        let l = |id: &str| ReviewerLabel {
            reviewer_id: "r".into(),
            trajectory_id: id.into(),
            shelf_id: 1,
            t_start: 0.0,
            t_end: 1.0,
        };
        let out = remap_labels(vec![l("a"), l("b")], &ts);
        let ids: Vec<&str> = out.iter().map(|l| l.trajectory_id.as_str()).collect();
        assert_eq!(ids, vec!["a#0", "a#1", "b"]);
    }
}
