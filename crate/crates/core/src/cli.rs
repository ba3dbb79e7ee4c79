//! Command-line front end.
//!
//! Every run first writes a [`RunManifest`] holding the resolved scenario,
//! seed and command, then its results. `crpfb replay <manifest>` re-executes
//! the recorded command and regenerates the same bytes.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::crpfb::BankConfig;
use crate::detector::detect;
use crate::gevfit;
use crate::harness::{self, CalibrationResult, Scenario, SweepAxis};
use crate::numfmt::{csv_row, to_json_pretty};
use crate::signalgen::ComplexSeries;
use crate::{Error, Result};

pub const TOOL: &str = "crpfb";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "crpfb", version, about = "Particle filter bank track-before-detect simulator")]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum BaseSignal {
    S1,
    S2,
}

/// Scenario selection and overrides shared by all experiment commands.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// JSON document with any of `model`, `bank`, `noise`, `signal`, `baseline`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in base scenario the config file and flags are applied to.
    #[arg(long, value_enum)]
    pub signal: Option<BaseSignal>,
    #[arg(long, env = "CRPFB_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Observation length T in seconds.
    #[arg(long)]
    pub t_obs: Option<f64>,
    #[arg(long)]
    pub ts: Option<f64>,
    /// Subinterval length dT in seconds.
    #[arg(long)]
    pub dt_sub: Option<f64>,
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Filters per bank (M).
    #[arg(long)]
    pub filters: Option<usize>,
    /// Particles per filter (N).
    #[arg(long)]
    pub particles: Option<usize>,
    #[arg(long)]
    pub q: Option<u32>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub noise_shape: Option<f64>,
    #[arg(long)]
    pub noise_var: Option<f64>,
    /// Particles of the monolithic baseline filter.
    #[arg(long)]
    pub baseline_particles: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Write one noisy test record as CSV (`l,t,re,im`).
    GenSignal(GenSignalArgs),
    /// Run the bank on a record and decide against a threshold.
    Detect(DetectArgs),
    /// Empirical and GEV thresholds from noise-only records.
    Calibrate(CalibrateArgs),
    /// Detection probability against SNR.
    PdSweep(PdSweepArgs),
    /// Detection probability against false-alarm probability.
    Roc(RocArgs),
    /// IF estimation RMSE of the bank and the monolithic baseline against SNR.
    RmseSweep(RmseSweepArgs),
    /// Detection probability and RMSE against b, dT, q, M or N.
    ParamSweep(ParamSweepArgs),
    /// Probability, quantile, return-level and density diagnostics of a GEV fit.
    GevDiagnostics(GevDiagnosticsArgs),
    /// Latency of one filter, the whole bank and the baseline.
    Bench(BenchArgs),
    /// Desk-scale experiment recipe writing a set of plot-ready files.
    Reproduce(ReproduceArgs),
    /// Re-run the command recorded in a manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GenSignalArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArgs,
    /// H1 trial index; the record equals the harness record of that trial.
    #[arg(long, default_value_t = 0)]
    pub trial: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DetectArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArgs,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Threshold value or a calibration JSON file.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: String,
    /// Use the empirical rather than the GEV threshold of a calibration file.
    #[arg(long)]
    pub empirical: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CalibrateArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArgs,
    #[arg(long, default_value_t = 1e-2)]
    pub pfa: f64,
    #[arg(long, default_value_t = 10_000)]
    pub mc: usize,
    #[arg(long, default_value_t = 1_500)]
    pub nfit: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the H0 metrics (`trial,psi`).
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct PdSweepArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArgs,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-17,-14,-11,-8,-5")]
    pub snr_grid: Vec<f64>,
    /// Threshold value or calibration JSON; calibrated empirically when absent.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<String>,
    #[arg(long)]
    pub empirical: bool,
    #[arg(long, default_value_t = 1e-2)]
    pub pfa: f64,
    #[arg(long, default_value_t = 10_000)]
    pub mc: usize,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    /// Add a mean runtime column; makes the output machine dependent.
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RocArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.002,0.005,0.01,0.02,0.05,0.1,0.2,0.5,1")]
    pub pfa_grid: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub mc: usize,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RmseSweepArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArgs,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-17,-14,-11,-8,-5")]
    pub snr_grid: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ParamSweepArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArgs,
    /// One of b, dT, q, M, N.
    #[arg(long)]
    pub axis: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long, default_value_t = 1e-2)]
    pub pfa: f64,
    #[arg(long, default_value_t = 10_000)]
    pub mc: usize,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GevDiagnosticsArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArgs,
    /// Metrics CSV from `calibrate --metrics-out`; generated when absent.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub mc: usize,
    #[arg(long, default_value_t = 1_500)]
    pub nfit: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BenchArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArgs,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Figure {
    Fig4b,
    Fig5,
    Fig6,
    Fig12,
    Fig13,
    Fig14,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReproduceArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArgs,
    #[arg(value_enum)]
    pub figure: Figure,
    #[arg(long, default_value_t = 10_000)]
    pub mc: usize,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Everything needed to regenerate a run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub created: String,
    pub seed: u64,
    pub config: Scenario,
    pub command: Command,
    pub outputs: Vec<PathBuf>,
}

impl Command {
    fn config_args(&self) -> Option<&ConfigArgs> {
        Some(match self {
            Command::GenSignal(a) => &a.cfg,
            Command::Detect(a) => &a.cfg,
            Command::Calibrate(a) => &a.cfg,
            Command::PdSweep(a) => &a.cfg,
            Command::Roc(a) => &a.cfg,
            Command::RmseSweep(a) => &a.cfg,
            Command::ParamSweep(a) => &a.cfg,
            Command::GevDiagnostics(a) => &a.cfg,
            Command::Bench(a) => &a.cfg,
            Command::Reproduce(a) => &a.cfg,
            Command::Replay(_) => return None,
        })
    }

    /// Result files, in the order they are written.
    pub fn outputs(&self) -> Vec<PathBuf> {
        let files = |dir: &Path, names: &[&str]| names.iter().map(|n| dir.join(n)).collect::<Vec<_>>();
        match self {
            Command::GenSignal(a) => vec![a.out.clone()],
            Command::Detect(a) => vec![a.out.clone()],
            Command::Calibrate(a) => std::iter::once(a.out.clone()).chain(a.metrics_out.clone()).collect(),
            Command::PdSweep(a) => vec![a.out.clone()],
            Command::Roc(a) => vec![a.out.clone()],
            Command::RmseSweep(a) => vec![a.out.clone()],
            Command::ParamSweep(a) => vec![a.out.clone()],
            Command::GevDiagnostics(a) => files(&a.out_dir, &DIAGNOSTIC_FILES),
            Command::Bench(a) => vec![a.out.clone()],
            Command::Reproduce(a) => files(&a.out_dir, a.figure.files()),
            Command::Replay(_) => Vec::new(),
        }
    }

    /// `<out>.manifest.json` for single-file commands, `<dir>/manifest.json`
    /// for directory commands.
    pub fn manifest_path(&self) -> Option<PathBuf> {
        match self {
            Command::GevDiagnostics(a) => Some(a.out_dir.join("manifest.json")),
            Command::Reproduce(a) => Some(a.out_dir.join("manifest.json")),
            Command::Replay(_) => None,
            _ => {
                let main = self.outputs().into_iter().next()?;
                let mut name = main.file_name()?.to_os_string();
                name.push(".manifest.json");
                Some(main.with_file_name(name))
            }
        }
    }
}

const DIAGNOSTIC_FILES: [&str; 6] =
    ["fit.json", "probability.csv", "quantile.csv", "return_level.csv", "density.csv", "diagnostics.csv"];

impl Figure {
    fn files(&self) -> &'static [&'static str] {
        match self {
            Figure::Fig4b => &["calibration.json", "pd.csv"],
            Figure::Fig5 => &["roc.csv"],
            Figure::Fig6 => &["b_sweep.csv", "dt_sweep.csv", "q_sweep.csv"],
            Figure::Fig12 => &["m_sweep.csv", "n_sweep.csv"],
            Figure::Fig13 => &DIAGNOSTIC_FILES,
            Figure::Fig14 => &["thresholds.csv"],
        }
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Base scenario, then the config file, then flags.
pub fn resolve_scenario(args: &ConfigArgs) -> Result<Scenario> {
    let base = match args.signal {
        Some(BaseSignal::S2) => Scenario::s2(),
        _ => Scenario::s1(1.0),
    };
    let mut sc = match &args.config {
        None => base,
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            let patch: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
            if !patch.is_object() {
                return Err(Error::Config("config must be a JSON object".into()));
            }
            let mut value = serde_json::to_value(&base)?;
            merge(&mut value, patch);
            serde_json::from_value(value).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?
        }
    };
    if let Some(t) = args.t_obs {
        sc.model.t_obs = t;
    }
    if let Some(ts) = args.ts {
        sc.model.ts = ts;
    }
    if let Some(dt) = args.dt_sub {
        sc.model.dt_sub = dt;
    }
    if let Some(p) = args.blocks {
        sc.model.blocks = Some(p);
    }
    if let Some(m) = args.filters {
        sc.bank.m_filters = m;
    }
    if let Some(n) = args.particles {
        sc.bank.crpf.n_particles = n;
    }
    if let Some(q) = args.q {
        sc.bank.crpf.q = q;
    }
    if let Some(snr) = args.snr {
        sc.signal.snr_db = snr;
    }
    if let Some(b) = args.b {
        sc.signal.b = b;
    }
    if let Some(c) = args.noise_shape {
        sc.noise.shape = c;
    }
    if let Some(v) = args.noise_var {
        sc.noise.variance = v;
    }
    if let Some(n) = args.baseline_particles {
        sc.baseline.n_particles = n;
    }
    sc.bank.seed = args.seed;
    sc.validate()?;
    Ok(sc)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(to_json_pretty(value)?.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn read_calibration(path: &Path) -> Result<CalibrationResult> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// A literal number or the GEV (or empirical) threshold of a calibration file.
fn resolve_threshold(spec: &str, empirical: bool) -> Result<f64> {
    if let Ok(v) = spec.parse::<f64>() {
        return Ok(v);
    }
    let cal = read_calibration(Path::new(spec))?;
    Ok(if empirical { cal.v_t_empirical } else { cal.v_t_gev })
}

fn check_pfa(pfa: f64) -> Result<()> {
    if pfa > 0.0 && pfa < 1.0 {
        Ok(())
    } else {
        Err(Error::Probability(pfa))
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    Ok(())
}

fn fig_dir(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn write_diagnostics(dir: &Path, metrics: &[f64], n_fit: usize) -> Result<gevfit::GevFit> {
    if n_fit > metrics.len() {
        return Err(Error::Config(format!("nfit = {n_fit} exceeds the {} available metrics", metrics.len())));
    }
    let fit = gevfit::fit_mle(&metrics[..n_fit], None)?;
    let diag = gevfit::diagnostics(&fit.params, metrics);
    write_json(&dir.join("fit.json"), &fit)?;
    write_with(&dir.join("probability.csv"), |w| diag.write_probability_csv(w))?;
    write_with(&dir.join("quantile.csv"), |w| diag.write_quantile_csv(w))?;
    write_with(&dir.join("return_level.csv"), |w| diag.write_return_level_csv(w))?;
    write_with(&dir.join("density.csv"), |w| diag.write_density_csv(w))?;
    write_with(&dir.join("diagnostics.csv"), |w| diag.write_csv(w))?;
    Ok(fit)
}

fn reproduce(a: &ReproduceArgs, sc: &Scenario, seed: u64) -> Result<()> {
    check_trials(a.trials)?;
    let dir = &a.out_dir;
    let n_fit = a.mc.min(1_500);
    match a.figure {
        Figure::Fig4b => {
            let (cal, _) = harness::calibrate(sc, 1e-2, a.mc, n_fit, seed)?;
            write_json(&fig_dir(dir, "calibration.json"), &cal)?;
            let grid: Vec<f64> = (-17..=-5).map(f64::from).collect();
            let rows = harness::pd_sweep(sc, &grid, cal.v_t_gev, a.trials, seed)?;
            write_with(&fig_dir(dir, "pd.csv"), |w| harness::write_sweep_csv(w, "snr_db", &rows, false))?;
        }
        Figure::Fig5 => {
            let grid = [1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 0.1, 0.2, 0.5, 1.0];
            let rows = harness::roc(sc, sc.signal.snr_db, &grid, a.mc, a.trials, seed)?;
            write_with(&fig_dir(dir, "roc.csv"), |w| harness::write_roc_csv(w, &rows))?;
        }
        Figure::Fig6 => {
            let sweeps: [(SweepAxis, &str, Vec<f64>); 3] = [
                (SweepAxis::B, "b_sweep.csv", vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]),
                (SweepAxis::SubintervalLength, "dt_sweep.csv", vec![1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0]),
                (SweepAxis::Q, "q_sweep.csv", vec![1.0, 5.0, 10.0]),
            ];
            for (axis, name, values) in sweeps {
                let rows = harness::param_sweep(sc, axis, &values, 1e-2, a.mc, a.trials, seed)?;
                write_with(&fig_dir(dir, name), |w| harness::write_sweep_csv(w, axis.name(), &rows, false))?;
            }
        }
        Figure::Fig12 => {
            let mut sc = sc.clone();
            sc.signal.snr_db = -10.0;
            let sweeps: [(SweepAxis, &str, Vec<f64>); 2] = [
                (SweepAxis::Filters, "m_sweep.csv", vec![250.0, 500.0, 1000.0, 2000.0]),
                (SweepAxis::Particles, "n_sweep.csv", vec![1.0, 2.0, 5.0, 10.0]),
            ];
            for (axis, name, values) in sweeps {
                let rows = harness::param_sweep(&sc, axis, &values, 1e-2, a.mc, a.trials, seed)?;
                write_with(&fig_dir(dir, name), |w| harness::write_sweep_csv(w, axis.name(), &rows, false))?;
            }
        }
        Figure::Fig13 => {
            let metrics = harness::h0_metrics(sc, a.mc, seed)?;
            write_diagnostics(dir, &metrics, n_fit)?;
        }
        Figure::Fig14 => {
            let metrics = harness::h0_metrics(sc, a.mc, seed)?;
            let fit = gevfit::fit_mle(&metrics[..n_fit.min(metrics.len())], None)?;
            write_with(&fig_dir(dir, "thresholds.csv"), |w| {
                writeln!(w, "pfa,vt_empirical,vt_gev")?;
                for pfa in [1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 0.1] {
                    let emp = harness::empirical_threshold(&metrics, pfa)?;
                    let gev = gevfit::threshold(&fit, pfa)?;
                    writeln!(w, "{}", csv_row(&[pfa, emp, gev]))?;
                }
                Ok(())
            })?;
        }
    }
    Ok(())
}

/// Runs a resolved command. Nothing here reads the clock or the
/// environment, so replays reproduce the outputs exactly.
pub fn execute(cmd: &Command, sc: &Scenario, seed: u64) -> Result<()> {
    match cmd {
        Command::GenSignal(a) => {
            let (_, z) = harness::h1_record(sc, sc.signal.snr_db, seed, a.trial)?;
            write_with(&a.out, |w| z.write_csv(w))
        }
        Command::Detect(a) => {
            let z = ComplexSeries::read_csv(BufReader::new(File::open(&a.input)?))?;
            if (z.dt - sc.model.ts).abs() > 1e-9 * sc.model.ts {
                return Err(Error::Config(format!("record step {} does not match ts = {}", z.dt, sc.model.ts)));
            }
            let threshold = resolve_threshold(&a.threshold, a.empirical)?;
            let bank = BankConfig { seed, ..sc.bank };
            let (decision, result) = detect(&z, &sc.model, &bank, threshold)?;
            let mut out = serde_json::to_value(decision)?;
            if let (Value::Object(o), Value::Object(r)) = (&mut out, result.to_json()) {
                o.extend(r);
            }
            write_json(&a.out, &out)
        }
        Command::Calibrate(a) => {
            check_pfa(a.pfa)?;
            let (cal, metrics) = harness::calibrate(sc, a.pfa, a.mc, a.nfit, seed)?;
            write_json(&a.out, &cal)?;
            if let Some(path) = &a.metrics_out {
                write_with(path, |w| harness::write_metrics_csv(w, &metrics))?;
            }
            Ok(())
        }
        Command::PdSweep(a) => {
            check_trials(a.trials)?;
            let threshold = match &a.threshold {
                Some(t) => resolve_threshold(t, a.empirical)?,
                None => {
                    check_pfa(a.pfa)?;
                    harness::empirical_threshold(&harness::h0_metrics(sc, a.mc, seed)?, a.pfa)?
                }
            };
            let rows = harness::pd_sweep(sc, &a.snr_grid, threshold, a.trials, seed)?;
            write_with(&a.out, |w| harness::write_sweep_csv(w, "snr_db", &rows, a.timing))
        }
        Command::Roc(a) => {
            check_trials(a.trials)?;
            if let Some(&p) = a.pfa_grid.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
                return Err(Error::Probability(p));
            }
            let rows = harness::roc(sc, sc.signal.snr_db, &a.pfa_grid, a.mc, a.trials, seed)?;
            write_with(&a.out, |w| harness::write_roc_csv(w, &rows))
        }
        Command::RmseSweep(a) => {
            check_trials(a.trials)?;
            let rows = harness::rmse_sweep(sc, &a.snr_grid, a.trials, seed)?;
            write_with(&a.out, |w| harness::write_rmse_csv(w, &rows, a.timing))
        }
        Command::ParamSweep(a) => {
            check_trials(a.trials)?;
            check_pfa(a.pfa)?;
            let axis = SweepAxis::parse(&a.axis)?;
            let rows = harness::param_sweep(sc, axis, &a.values, a.pfa, a.mc, a.trials, seed)?;
            write_with(&a.out, |w| harness::write_sweep_csv(w, axis.name(), &rows, a.timing))
        }
        Command::GevDiagnostics(a) => {
            let metrics = match &a.metrics {
                Some(path) => harness::read_metrics_csv(BufReader::new(File::open(path)?))?,
                None => harness::h0_metrics(sc, a.mc, seed)?,
            };
            write_diagnostics(&a.out_dir, &metrics, a.nfit).map(|_| ())
        }
        Command::Bench(a) => {
            check_trials(a.trials)?;
            let report = harness::benchmark(sc, a.trials, seed)?;
            write_json(&a.out, &report)
        }
        Command::Reproduce(a) => reproduce(a, sc, seed),
        Command::Replay(_) => Err(Error::Config("a manifest cannot record a replay".into())),
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read manifest {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("manifest {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Replay(r) = &cli.command {
        let m = read_manifest(&r.manifest)?;
        m.config.validate()?;
        return execute(&m.command, &m.config, m.seed);
    }
    let cfg = cli.command.config_args().cloned().unwrap_or_default();
    let sc = resolve_scenario(&cfg)?;
    let manifest = RunManifest {
        tool: TOOL.into(),
        version: VERSION.into(),
        created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        seed: cfg.seed,
        config: sc.clone(),
        command: cli.command.clone(),
        outputs: cli.command.outputs(),
    };
    if let Some(path) = cli.command.manifest_path() {
        write_json(&path, &manifest)?;
    }
    execute(&cli.command, &sc, cfg.seed)?;
    for out in &manifest.outputs {
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    if e.is_config() {
        1
    } else {
        2
    }
}

/// Parses `argv` and runs it. Returns 0 on success, 1 on usage or config
/// errors and 2 on runtime errors.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let pool = match cli.workers {
        Some(0) => {
            eprintln!("error: --workers must be at least 1");
            return 1;
        }
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 2;
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signalgen::SignalKind;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("crpfb").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("cfg.json");
        fs::write(&cfg, r#"{"bank": {"m_filters": 64}, "model": {"T": 0.5}, "noise": {"shape": 1.0}}"#).unwrap();
        let cli = parse(&["calibrate", "--config", cfg.to_str().unwrap(), "--q", "3", "--seed", "9", "--out", "x.json"]);
        let sc = resolve_scenario(cli.command.config_args().unwrap()).unwrap();
        assert_eq!(sc.bank.m_filters, 64);
        assert_eq!(sc.bank.crpf.q, 3);
        assert_eq!(sc.bank.seed, 9);
        assert_eq!(sc.model.t_obs, 0.5);
        assert_eq!(sc.noise.shape, 1.0);
        assert_eq!(sc.model.ts, 1.0 / 512.0);
    }

    #[test]
    fn bad_config_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("cfg.json");
        fs::write(&cfg, r#"{"model": {"dT": 0.003}}"#).unwrap();
        let cli = parse(&["calibrate", "--config", cfg.to_str().unwrap(), "--out", "x.json"]);
        assert!(resolve_scenario(cli.command.config_args().unwrap()).unwrap_err().is_config());
        fs::write(&cfg, "[1, 2]").unwrap();
        assert!(resolve_scenario(cli.command.config_args().unwrap()).unwrap_err().is_config());
    }

    #[test]
    fn negative_snr_lists_parse() {
        let cli = parse(&["pd-sweep", "--snr-grid", "-14,-11,-8", "--snr", "-3", "--out", "p.csv"]);
        match cli.command {
            Command::PdSweep(a) => {
                assert_eq!(a.snr_grid, vec![-14.0, -11.0, -8.0]);
                assert_eq!(a.cfg.snr, Some(-3.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn manifest_paths() {
        let cli = parse(&["calibrate", "--out", "out/cal.json", "--metrics-out", "out/m.csv"]);
        assert_eq!(cli.command.manifest_path().unwrap(), PathBuf::from("out/cal.json.manifest.json"));
        assert_eq!(cli.command.outputs(), vec![PathBuf::from("out/cal.json"), PathBuf::from("out/m.csv")]);
        let cli = parse(&["reproduce", "fig13", "--out-dir", "d"]);
        assert_eq!(cli.command.manifest_path().unwrap(), PathBuf::from("d/manifest.json"));
        assert_eq!(cli.command.outputs().len(), 6);
    }

    #[test]
    fn usage_errors_exit_one_and_help_exits_zero() {
        assert_eq!(main(["crpfb", "--bogus"]), 1);
        assert_eq!(main(["crpfb", "calibrate", "--out", "x", "--nope"]), 1);
        assert_eq!(main(["crpfb"]), 1);
        assert_eq!(main(["crpfb", "--help"]), 0);
        assert_eq!(main(["crpfb", "--workers", "0", "bench", "--out", "x"]), 1);
    }

    #[test]
    fn manifest_roundtrip() {
        let cli = parse(&["param-sweep", "--axis", "q", "--values", "1,5", "--out", "q.csv"]);
        let m = RunManifest {
            tool: TOOL.into(),
            version: VERSION.into(),
            created: "2026-01-01T00:00:00Z".into(),
            seed: 4,
            config: Scenario::s1(1.0),
            command: cli.command.clone(),
            outputs: cli.command.outputs(),
        };
        let text = to_json_pretty(&m).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.config, m.config);
        assert_eq!(to_json_pretty(&back).unwrap(), text);
    }

    #[test]
    fn signal_base_selection() {
        let cli = parse(&["bench", "--signal", "s2", "--out", "b.json"]);
        let sc = resolve_scenario(cli.command.config_args().unwrap()).unwrap();
        assert_eq!(sc.signal.kind, SignalKind::S2);
        assert_eq!(sc.model.blocks, Some(4));
    }
}
