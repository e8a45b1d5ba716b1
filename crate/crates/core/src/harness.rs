//! Scenario configuration, δ-sweeps and their on-disk artifacts.
//!
//! A config is a TOML document with four sections:
//!
//! ```toml
//! [scenario]
//! name = "channel_1d"      # channel_1d | source_2d | kuznetsov | westervelt_potential
//! delta = 0.0              # diffusivity for `run`
//! final_time = 7e-5        # optional overrides
//! amplitude_scale = 1.0
//! n_elements = 600         # 1D domains
//! h = 0.01                 # 2D domains
//! linear = false           # drop the nonlinear term
//! kappa = 2.2e-6           # kuznetsov only
//! sigma = 2.0
//!
//! [medium]                 # optional overrides of the water defaults
//! tau = 1.5e-5
//! c = 1500.0
//! rho = 1000.0
//! b_over_a = 5.0
//! alpha0 = 1.0
//!
//! [newmark]                # a3, beta, gamma, cfl, fp_tol, fp_max_iter
//! cfl = 0.1
//!
//! [sweep]
//! deltas = [0.0, 1e-5, 1e-4, 1e-3, 1e-2]
//! delta_bar = 1e-2         # optional, defaults to max(deltas)
//! snapshot_times = [7e-5]
//! output_dir = "out"
//! parallelism = 1
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{fit_rate, ErrorAccumulator, RateFit, SweepRecord, Trajectory};
use crate::error::{Error, Result};
use crate::integrator::{AcousticState, NewmarkParams};
use crate::medium::{derived_kappa, NonlinearityParams};
use crate::mesh::{DomainSpec, Mesh};
use crate::models::{
    channel_1d_scenario, kuznetsov_scenario, source_2d_scenario, westervelt_potential_scenario, Equation,
    ProblemSpec,
};
use crate::simulation::{RunSummary, Simulation};

const DEFAULT_TAU: f64 = 1.5e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    #[serde(rename = "channel_1d")]
    Channel1d,
    #[serde(rename = "source_2d")]
    Source2d,
    Kuznetsov,
    WesterveltPotential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: ScenarioName,
    #[serde(default)]
    pub delta: f64,
    pub final_time: Option<f64>,
    pub amplitude_scale: Option<f64>,
    pub n_elements: Option<usize>,
    pub h: Option<f64>,
    #[serde(default)]
    pub linear: bool,
    pub kappa: Option<f64>,
    pub sigma: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumOverrides {
    pub tau: Option<f64>,
    pub c: Option<f64>,
    pub rho: Option<f64>,
    pub b_over_a: Option<f64>,
    pub alpha0: Option<f64>,
}

fn default_parallelism() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub deltas: Vec<f64>,
    pub delta_bar: Option<f64>,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            deltas: vec![0.0],
            delta_bar: None,
            snapshot_times: Vec::new(),
            output_dir: default_output_dir(),
            parallelism: default_parallelism(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub medium: MediumOverrides,
    #[serde(default)]
    pub newmark: NewmarkParams,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// A config for `name` with default parameters.
    pub fn for_scenario(name: ScenarioName) -> Self {
        Config {
            scenario: ScenarioConfig {
                name,
                delta: 0.0,
                final_time: None,
                amplitude_scale: None,
                n_elements: None,
                h: None,
                linear: false,
                kappa: None,
                sigma: None,
            },
            medium: MediumOverrides::default(),
            newmark: NewmarkParams::default(),
            sweep: SweepConfig::default(),
        }
    }

    /// The fully resolved problem at diffusivity `delta`.
    pub fn problem(&self, delta: f64) -> Result<ProblemSpec> {
        let sc = &self.scenario;
        let tau = self.medium.tau.unwrap_or(DEFAULT_TAU);
        let mut spec = match sc.name {
            ScenarioName::Channel1d => channel_1d_scenario(delta, tau),
            ScenarioName::Source2d => source_2d_scenario(delta),
            ScenarioName::Kuznetsov => kuznetsov_scenario(delta, tau, 2.0, 0.0),
            ScenarioName::WesterveltPotential => westervelt_potential_scenario(delta, tau),
        };
        let m = &mut spec.medium;
        m.tau = tau;
        if let Some(c) = self.medium.c {
            m.c = c;
        }
        if let Some(rho) = self.medium.rho {
            m.rho = rho;
        }
        if let Some(ba) = self.medium.b_over_a {
            m.b_over_a = ba;
        }
        if let Some(a) = self.medium.alpha0 {
            m.alpha0 = a;
        }

        spec.nonlin = match spec.equation {
            Equation::GeneralizedMgt => NonlinearityParams::LINEAR,
            Equation::JmgtWesterveltPressure => NonlinearityParams {
                k: crate::medium::derived_k(&spec.medium),
                ..NonlinearityParams::LINEAR
            },
            Equation::JmgtKuznetsovPotential => NonlinearityParams {
                k: 0.0,
                kappa: sc.kappa.unwrap_or_else(|| derived_kappa(&spec.medium)),
                sigma: sc.sigma.unwrap_or(2.0),
            },
            Equation::JmgtWesterveltPotential => {
                let (kappa, sigma) = crate::medium::westervelt_potential_kappa_sigma(&spec.medium);
                NonlinearityParams { k: 0.0, kappa, sigma }
            }
        };
        if sc.name != ScenarioName::Kuznetsov && (sc.kappa.is_some() || sc.sigma.is_some()) {
            return Err(Error::Config("kappa and sigma apply to the kuznetsov scenario only".into()));
        }
        if sc.linear {
            spec = spec.linearized();
        }
        if let Some(t) = sc.final_time {
            spec.final_time = t;
        }
        if let Some(s) = sc.amplitude_scale {
            spec = spec.with_amplitude_scale(s);
        }
        match (&mut spec.domain, sc.n_elements, sc.h) {
            (_, None, None) => {}
            (DomainSpec::Interval { n_elements, .. }, Some(n), None) => *n_elements = n,
            (DomainSpec::Square { h, .. }, None, Some(v)) => *h = v,
            _ => {
                return Err(Error::Config(
                    "n_elements applies to 1D scenarios and h to 2D scenarios".into(),
                ))
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.newmark.validate()?;
        let sw = &self.sweep;
        if sw.deltas.first() != Some(&0.0) {
            return Err(Error::Config("sweep deltas must start with 0".into()));
        }
        if sw.deltas.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::Config("sweep deltas must be finite and non-negative".into()));
        }
        if sw.deltas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sweep deltas must be strictly ascending".into()));
        }
        if let Some(db) = sw.delta_bar {
            if !(db >= self.max_delta()) || !db.is_finite() {
                return Err(Error::Config(format!(
                    "delta_bar = {db} must be finite and at least max(deltas) = {}",
                    self.max_delta()
                )));
            }
        }
        if sw.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        let spec = self.problem(0.0)?;
        for &t in &sw.snapshot_times {
            if !(0.0..=spec.final_time).contains(&t) {
                return Err(Error::Config(format!(
                    "snapshot time {t} outside [0, {}]",
                    spec.final_time
                )));
            }
        }
        Ok(())
    }

    fn max_delta(&self) -> f64 {
        self.sweep.deltas.iter().copied().fold(0.0, f64::max)
    }

    /// δ̄ that fixes the shared time step.
    pub fn delta_bar(&self) -> f64 {
        self.sweep.delta_bar.unwrap_or_else(|| self.max_delta())
    }
}

/// File name `snapshot_<tag>_<time>.csv`.
pub fn snapshot_file_name(tag: &str, t: f64) -> String {
    format!("snapshot_{tag}_{t:e}.csv")
}

/// Tag identifying a run by its diffusivity.
pub fn delta_tag(delta: f64) -> String {
    format!("d{delta:e}")
}

/// Writes the nodal fields with coordinates: `x[,y],u,u_t,u_tt`.
pub fn write_snapshot(path: &Path, mesh: &Mesh, s: &AcousticState) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if mesh.dim() == 1 {
        w.write_record(["x", "u", "u_t", "u_tt"])?;
    } else {
        w.write_record(["x", "y", "u", "u_t", "u_tt"])?;
    }
    for i in 0..mesh.n_nodes() {
        let x = mesh.coord(i);
        let mut row: Vec<String> = x[..mesh.dim()].iter().map(|v| v.to_string()).collect();
        row.extend([s.u[i], s.u_t[i], s.u_tt[i]].iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Step indices nearest to each requested time.
fn snapshot_steps(times: &[f64], dt: f64, steps: usize) -> Vec<(usize, f64)> {
    times
        .iter()
        .map(|&t| (((t / dt).round() as usize).min(steps), t))
        .collect()
}

/// Runs `sim`, writing snapshots into `dir` and forwarding every state.
fn run_with_snapshots<F>(sim: &Simulation, tag: &str, times: &[f64], dir: &Path, mut observer: F) -> Result<RunSummary>
where
    F: FnMut(&AcousticState) -> Result<()>,
{
    let wanted = snapshot_steps(times, sim.dt(), sim.steps());
    let mut step = 0;
    sim.run(|s| {
        for &(k, t) in &wanted {
            if k == step {
                write_snapshot(&dir.join(snapshot_file_name(tag, t)), sim.ops().mesh(), s)?;
            }
        }
        step += 1;
        observer(s)
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One δ of a sweep: the record, or the error that stopped the run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepEntry {
    pub delta: f64,
    pub record: Option<SweepRecord>,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub entries: Vec<SweepEntry>,
    pub rate: Result<RateFit>,
}

impl SweepOutcome {
    pub fn records(&self) -> Vec<SweepRecord> {
        self.entries.iter().filter_map(|e| e.record.clone()).collect()
    }
}

#[derive(Serialize)]
struct CsvRow {
    delta: f64,
    err_rel: f64,
    dt: Option<f64>,
    h: Option<f64>,
    steps: Option<usize>,
    max_fp_iters: Option<usize>,
}

/// Writes `sweep.csv` in δ order; failed runs get `err_rel = NaN` and empty
/// remaining fields.
pub fn write_sweep_csv(path: &Path, entries: &[SweepEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in entries {
        let row = match &e.record {
            Some(r) => CsvRow {
                delta: r.delta,
                err_rel: r.err_rel,
                dt: Some(r.dt),
                h: Some(r.h),
                steps: Some(r.steps),
                max_fp_iters: Some(r.max_fp_iters),
            },
            None => CsvRow {
                delta: e.delta,
                err_rel: f64::NAN,
                dt: None,
                h: None,
                steps: None,
                max_fp_iters: None,
            },
        };
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Deserialize)]
struct CsvRowIn {
    delta: f64,
    err_rel: f64,
    dt: Option<f64>,
    h: Option<f64>,
    steps: Option<usize>,
    max_fp_iters: Option<usize>,
}

/// Reads a `sweep.csv`; rows of failed runs are skipped.
pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let expected = ["delta", "err_rel", "dt", "h", "steps", "max_fp_iters"];
    if headers.iter().ne(expected) {
        return Err(Error::InsufficientData(format!(
            "{} has columns {:?}, expected {:?}",
            path.display(),
            headers.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: CsvRowIn = row?;
        if let (Some(dt), Some(h), Some(steps), Some(it)) = (row.dt, row.h, row.steps, row.max_fp_iters) {
            if row.err_rel.is_finite() {
                out.push(SweepRecord {
                    delta: row.delta,
                    err_rel: row.err_rel,
                    dt,
                    h,
                    steps,
                    max_fp_iters: it,
                    mean_fp_iters: f64::NAN,
                    max_energy: f64::NAN,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct RatioEntry {
    delta: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct RateReport {
    slope: Option<f64>,
    intercept: Option<f64>,
    ratios: Vec<RatioEntry>,
    max_ratio_deviation: Option<f64>,
    error: Option<String>,
}

pub fn write_rate_json(path: &Path, rate: &Result<RateFit>) -> Result<()> {
    let report = match rate {
        Ok(f) => RateReport {
            slope: Some(f.slope),
            intercept: Some(f.intercept),
            ratios: f.ratios.iter().map(|&(delta, ratio)| RatioEntry { delta, ratio }).collect(),
            max_ratio_deviation: Some(f.max_ratio_deviation),
            error: None,
        },
        Err(e) => RateReport {
            slope: None,
            intercept: None,
            ratios: Vec::new(),
            max_ratio_deviation: None,
            error: Some(e.to_string()),
        },
    };
    write_json(path, &report)
}

#[derive(Serialize)]
struct SweepMeta<'a> {
    version: &'static str,
    config: &'a Config,
    delta_bar: f64,
    reference: &'a ProblemSpec,
    runs: &'a [SweepEntry],
}

fn record(delta: f64, err_rel: f64, s: &RunSummary) -> SweepRecord {
    SweepRecord {
        delta,
        err_rel,
        dt: s.dt,
        h: s.h,
        steps: s.steps,
        max_fp_iters: s.max_fp_iters,
        mean_fp_iters: s.mean_fp_iters,
        max_energy: s.max_energy,
    }
}

/// Runs δ = 0 first as the reference, then every δ > 0 on up to
/// `parallelism` workers, and writes `sweep.csv`, `rate.json`,
/// `run_meta.json` and the snapshots into the output directory.
///
/// A failing δ > 0 is recorded and the others still run; a failing
/// reference run aborts the sweep.
pub fn run_sweep(cfg: &Config) -> Result<SweepOutcome> {
    use rayon::prelude::*;

    cfg.validate()?;
    let dir = cfg.sweep.output_dir.clone();
    create_dir(&dir)?;
    let delta_bar = cfg.delta_bar();
    let times = &cfg.sweep.snapshot_times;

    let reference_spec = cfg.problem(0.0)?;
    let sim0 = Simulation::new(&reference_spec, &cfg.newmark, delta_bar)?;
    let mut traj = Trajectory::default();
    let ops0 = sim0.ops();
    let summary0 = run_with_snapshots(&sim0, &delta_tag(0.0), times, &dir, |s| {
        traj.push(ops0, s);
        Ok(())
    })?;
    let mut entries = vec![SweepEntry {
        delta: 0.0,
        record: Some(record(0.0, 0.0, &summary0)),
        error: None,
    }];

    let run_one = |delta: f64| -> Result<SweepRecord> {
        let sim = Simulation::new(&cfg.problem(delta)?, &cfg.newmark, delta_bar)?;
        let mut acc = ErrorAccumulator::new(sim.ops(), &traj);
        let summary = run_with_snapshots(&sim, &delta_tag(delta), times, &dir, |s| acc.observe(s))?;
        Ok(record(delta, acc.finish()?, &summary))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sweep.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let rest: Vec<SweepEntry> = pool.install(|| {
        cfg.sweep.deltas[1..]
            .par_iter()
            .map(|&delta| match run_one(delta) {
                Ok(r) => SweepEntry {
                    delta,
                    record: Some(r),
                    error: None,
                },
                Err(e) => SweepEntry {
                    delta,
                    record: None,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    });
    entries.extend(rest);

    let outcome = SweepOutcome {
        rate: fit_rate(&entries.iter().filter_map(|e| e.record.clone()).collect::<Vec<_>>()),
        entries,
    };
    write_sweep_csv(&dir.join("sweep.csv"), &outcome.entries)?;
    write_rate_json(&dir.join("rate.json"), &outcome.rate)?;
    write_json(
        &dir.join("run_meta.json"),
        &SweepMeta {
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            delta_bar,
            reference: &reference_spec,
            runs: &outcome.entries,
        },
    )?;
    Ok(outcome)
}

#[derive(Serialize)]
struct RunMeta<'a> {
    version: &'static str,
    config: &'a Config,
    problem: &'a ProblemSpec,
    summary: &'a RunSummary,
}

/// Single simulation at `scenario.delta` with snapshots and `run_meta.json`.
pub fn run_single(cfg: &Config) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = &cfg.sweep.output_dir;
    create_dir(dir)?;
    let delta = cfg.scenario.delta;
    let spec = cfg.problem(delta)?;
    let sim = Simulation::new(&spec, &cfg.newmark, cfg.sweep.delta_bar.unwrap_or(delta))?;
    let summary = run_with_snapshots(&sim, &delta_tag(delta), &cfg.sweep.snapshot_times, dir, |_| Ok(()))?;
    write_json(
        &dir.join("run_meta.json"),
        &RunMeta {
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            problem: &spec,
            summary: &summary,
        },
    )?;
    Ok(summary)
}
