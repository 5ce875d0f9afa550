//! Run orchestration: TOML configs, initial data, persisted runs and
//! α-continuation sweeps.
//!
//! A run directory holds `config.resolved.toml`, `diagnostics.csv`,
//! `snapshots/t_<index>.{bin,json}` and `summary.json`. A sweep directory
//! holds one run directory per job plus `sweep_report.{json,csv}`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, AprioriReport, BlowupPolicy, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::groundstate;
use crate::par;
use crate::spectral::{ComplexField, Grid};
use crate::stepper::{self, RunSettings, StepControl, Termination};
use crate::system::{self, EquationKind, EquationSpec, RegimeReport};

pub const SNAPSHOT_FORMAT: &str = "shnls-snapshot-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    /// Points per axis; a single entry applies to every axis.
    pub n: Vec<usize>,
    /// Box length per axis; a single entry applies to every axis.
    pub box_length: Vec<f64>,
}

impl GridSpec {
    pub fn uniform(dim: usize, n: usize, box_length: f64) -> Self {
        GridSpec {
            dim,
            n: vec![n; dim],
            box_length: vec![box_length; dim],
        }
    }

    pub fn build(&self) -> Result<Arc<Grid>> {
        let n = broadcast(&self.n, self.dim, "grid.n")?;
        let l = broadcast(&self.box_length, self.dim, "grid.box_length")?;
        Grid::new(&n, &l)
    }
}

fn broadcast<T: Copy>(v: &[T], dim: usize, what: &str) -> Result<Vec<T>> {
    match v.len() {
        1 => Ok(vec![v[0]; dim]),
        len if len == dim => Ok(v.to_vec()),
        len => Err(Error::Config(format!(
            "{what} has {len} entries for dim {dim}"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `A exp(-|x - c|² / (2 w²))`.
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        center: Vec<f64>,
    },
    /// `A exp(i k·x)` with `k = 2π m / L`.
    PlaneWave { amplitude: f64, k_index: Vec<i64> },
    /// `η^{1/σ} ((σ+1) sech²(σηx))^{1/(2σ)}`, the NLS soliton of frequency `η²`.
    #[serde(rename = "soliton_1d")]
    Soliton1d { eta: f64 },
    /// 2D cubic ground state scaled to `power_multiple` times its power.
    Townes { power_multiple: f64 },
    /// Raw snapshot written by a previous run.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub directory: PathBuf,
    #[serde(default = "one")]
    pub diagnostics_every: usize,
    /// Write a snapshot every this many diagnostics records; 0 keeps only the
    /// final state.
    #[serde(default)]
    pub snapshot_every: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Relative amplitude of multiplicative noise on the initial data.
    #[serde(default)]
    pub noise_amplitude: f64,
    pub grid: GridSpec,
    pub equation: EquationSpec,
    pub initial: InitialSpec,
    pub step: StepControl,
    #[serde(default)]
    pub blowup: BlowupPolicy,
    pub output: OutputSpec,
}

/// Turns a toml error into a one-line message with line and column.
fn toml_message(text: &str, err: &toml::de::Error) -> String {
    let msg = err.message().trim().to_string();
    match err.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!("line {line}, column {col}: {msg}")
        }
        None => msg,
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(toml_message(text, &e)))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads and validates a config file. A relative `file` initial-data path
    /// is resolved against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| Error::ConfigParse {
            path: path.to_path_buf(),
            message: toml_message(&text, &e),
        })?;
        if let InitialSpec::File { path: p } = &mut config.initial {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new("")).join(&*p);
            }
        }
        config.validate().map_err(|e| Error::ConfigParse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            control: self.step,
            policy: self.blowup,
            diagnostics_every: self.output.diagnostics_every,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid.build()?;
        self.equation.validate()?;
        self.settings().validate()?;
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude.is_finite()) {
            return Err(Error::Config(format!(
                "noise_amplitude must be >= 0, got {}",
                self.noise_amplitude
            )));
        }
        let dim = grid.dim();
        match &self.initial {
            InitialSpec::Gaussian {
                amplitude,
                width,
                center,
            } => {
                if !amplitude.is_finite() || !(*width > 0.0) {
                    return Err(Error::Config(
                        "gaussian needs finite amplitude and width > 0".into(),
                    ));
                }
                if !center.is_empty() && center.len() != dim {
                    return Err(Error::Config(format!(
                        "gaussian center has {} entries for dim {dim}",
                        center.len()
                    )));
                }
            }
            InitialSpec::PlaneWave { amplitude, k_index } => {
                if !amplitude.is_finite() || k_index.len() != dim {
                    return Err(Error::Config(format!(
                        "plane_wave needs a finite amplitude and {dim} k_index entries"
                    )));
                }
            }
            InitialSpec::Soliton1d { eta } => {
                if dim != 1 || !(*eta > 0.0) {
                    return Err(Error::Config("soliton_1d needs dim = 1 and eta > 0".into()));
                }
            }
            InitialSpec::Townes { power_multiple } => {
                if !(*power_multiple > 0.0 && power_multiple.is_finite()) {
                    return Err(Error::Config(format!(
                        "power_multiple must be > 0, got {power_multiple}"
                    )));
                }
                if dim != 2 || self.equation.sigma != 1.0 {
                    return Err(Error::Config(
                        "townes initial data needs dim = 2 and sigma = 1".into(),
                    ));
                }
            }
            InitialSpec::File { .. } => {}
        }
        Ok(())
    }
}

/// Builds the initial field. Deterministic in the config and seed.
pub fn build_initial(config: &RunConfig) -> Result<ComplexField> {
    let grid = config.grid.build()?;
    let mut v = match &config.initial {
        InitialSpec::Gaussian {
            amplitude,
            width,
            center,
        } => {
            let (a, w) = (*amplitude, *width);
            let c = center.clone();
            ComplexField::from_fn(grid, move |x| {
                let r2: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(i, xi)| {
                        let d = xi - c.get(i).copied().unwrap_or(0.0);
                        d * d
                    })
                    .sum();
                Complex64::new(a * (-r2 / (2.0 * w * w)).exp(), 0.0)
            })
        }
        InitialSpec::PlaneWave { amplitude, k_index } => {
            let k: Vec<f64> = k_index
                .iter()
                .zip(grid.box_length())
                .map(|(&m, &l)| 2.0 * std::f64::consts::PI * m as f64 / l)
                .collect();
            let a = *amplitude;
            ComplexField::from_fn(grid, move |x| {
                let phase: f64 = x.iter().zip(&k).map(|(xi, ki)| xi * ki).sum();
                Complex64::from_polar(a, phase)
            })
        }
        InitialSpec::Soliton1d { eta } => {
            let (s, eta) = (config.equation.sigma, *eta);
            ComplexField::from_fn(grid, move |x| {
                let sech = 1.0 / (s * eta * x[0]).cosh();
                Complex64::new(
                    eta.powf(1.0 / s) * ((s + 1.0) * sech * sech).powf(0.5 / s),
                    0.0,
                )
            })
        }
        InitialSpec::Townes { power_multiple } => {
            let profile = groundstate::solve_ground_state(
                1.0,
                2,
                groundstate::default_bracket(1.0, 2),
                groundstate::DEFAULT_TOL,
            )?;
            let mut v = groundstate::deposit(&profile, &grid, 1.0, 1.0)?;
            let m = diagnostics::mass(&v);
            v.scale(Complex64::new(
                (power_multiple * profile.power / m).sqrt(),
                0.0,
            ));
            v
        }
        InitialSpec::File { path } => load_snapshot(path, &grid)?,
    };
    if config.noise_amplitude > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let eps = config.noise_amplitude;
        for z in v.values_mut() {
            let xi = Complex64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
            *z *= Complex64::new(1.0, 0.0) + eps * xi;
        }
    }
    v.check_finite()?;
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub format_version: String,
    pub dims: usize,
    pub n: Vec<usize>,
    pub box_length: Vec<f64>,
    pub t: f64,
}

/// Writes `<stem>.bin` (little-endian f64 pairs, row-major) and `<stem>.json`.
pub fn write_snapshot(stem: &Path, field: &ComplexField, t: f64) -> Result<()> {
    let mut bytes = Vec::with_capacity(field.values().len() * 16);
    for z in field.values() {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    let bin = stem.with_extension("bin");
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    let grid = field.grid();
    let meta = SnapshotMeta {
        format_version: SNAPSHOT_FORMAT.into(),
        dims: grid.dim(),
        n: grid.n().to_vec(),
        box_length: grid.box_length().to_vec(),
        t,
    };
    write_json(&stem.with_extension("json"), &meta)
}

/// Reads a raw snapshot onto `grid`, checking the sidecar when present.
pub fn load_snapshot(path: &Path, grid: &Arc<Grid>) -> Result<ComplexField> {
    let sidecar = path.with_extension("json");
    if sidecar.exists() {
        let meta: SnapshotMeta =
            serde_json::from_str(&read_text(&sidecar)?).map_err(|e| Error::ConfigParse {
                path: sidecar.clone(),
                message: e.to_string(),
            })?;
        if meta.n != grid.n() {
            return Err(Error::GridMismatch(format!(
                "{} holds a {:?} grid, config has {:?}",
                path.display(),
                meta.n,
                grid.n()
            )));
        }
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != grid.len() * 16 {
        return Err(Error::GridMismatch(format!(
            "{} has {} bytes, expected {}",
            path.display(),
            bytes.len(),
            grid.len() * 16
        )));
    }
    let values = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    ComplexField::new(grid.clone(), values)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Largest `|x - x0| / |x0|` over the series (absolute when `x0 = 0`).
pub fn max_drift<I: IntoIterator<Item = f64>>(series: I) -> f64 {
    let mut it = series.into_iter();
    let Some(x0) = it.next() else { return 0.0 };
    let scale = if x0 != 0.0 { x0.abs() } else { 1.0 };
    it.fold(0.0, |m, x| m.max((x - x0).abs() / scale))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub reason: Termination,
    pub t_final: f64,
    pub steps: usize,
    pub records: usize,
    pub mass_drift: f64,
    pub hamiltonian_drift: f64,
    pub peak_sup: f64,
    pub peak_grad_sq: f64,
    pub t_blowup: Option<f64>,
    pub blowup_trigger: Option<String>,
    pub floor_hits: usize,
    pub regime: RegimeReport,
    pub apriori: AprioriReport,
}

impl RunSummary {
    fn new(config: &RunConfig, run: &stepper::RunResult) -> Self {
        let records = &run.records;
        let peak = |f: fn(&DiagnosticsRecord) -> f64| records.iter().map(f).fold(0.0, f64::max);
        RunSummary {
            reason: run.reason,
            t_final: run.t_final,
            steps: run.steps,
            records: records.len(),
            mass_drift: max_drift(records.iter().map(|r| r.mass)),
            hamiltonian_drift: max_drift(records.iter().map(|r| r.hamiltonian)),
            peak_sup: peak(|r| r.sup_abs),
            peak_grad_sq: peak(|r| r.grad_sq),
            t_blowup: run.blowup.map(|b| b.t),
            blowup_trigger: run.blowup.map(|b| {
                b.reason
                    .map_or_else(|| "non-finite".to_string(), |r| r.to_string())
            }),
            floor_hits: run.floor_hits,
            regime: system::validate_regime(&config.equation, config.grid.dim),
            apriori: diagnostics::apriori_tracker(&config.equation, config.grid.dim, records),
        }
    }
}

/// Runs `config` and writes its artifacts to `config.output.directory`.
pub fn execute(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let v0 = build_initial(config)?;
    execute_from(config, &v0)
}

/// Like [`execute`] with a prebuilt initial field.
pub fn execute_from(config: &RunConfig, v0: &ComplexField) -> Result<RunSummary> {
    let dir = &config.output.directory;
    let snap_dir = dir.join("snapshots");
    create_dir(&snap_dir)?;
    fs::write(dir.join("config.resolved.toml"), config.to_toml()?)
        .map_err(|e| Error::io(dir.join("config.resolved.toml"), e))?;

    let every = config.output.snapshot_every;
    let mut last_written = None;
    let mut snapshots =
        |index: usize, rec: &DiagnosticsRecord, field: &ComplexField| -> Result<()> {
            if every > 0 && index.is_multiple_of(every) {
                write_snapshot(&snap_dir.join(format!("t_{index}")), field, rec.t)?;
                last_written = Some(index);
            }
            Ok(())
        };
    let run = stepper::run(
        &config.equation,
        v0,
        &config.settings(),
        &mut [&mut snapshots],
    )?;
    let last = run.records.len() - 1;
    if last_written != Some(last) {
        write_snapshot(&snap_dir.join(format!("t_{last}")), &run.field, run.t_final)?;
    }

    let csv = dir.join("diagnostics.csv");
    fs::write(&csv, diagnostics::to_csv(&run.records)).map_err(|e| Error::io(&csv, e))?;
    let summary = RunSummary::new(config, &run);
    write_json(&dir.join("summary.json"), &summary)?;
    log::info!(
        "{}: {} at t={} after {} steps",
        dir.display(),
        summary.reason,
        summary.t_final,
        summary.steps
    );
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    base: PathBuf,
    alphas: Vec<f64>,
    #[serde(default)]
    include_nls_baseline: bool,
    #[serde(default)]
    directory: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: RunConfig,
    pub alphas: Vec<f64>,
    pub include_nls_baseline: bool,
    /// Parent of the per-run directories; defaults to the base output directory.
    pub directory: PathBuf,
}

impl SweepConfig {
    /// Loads a sweep file; `base` is resolved against the sweep file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let file: SweepFile = toml::from_str(&text).map_err(|e| Error::ConfigParse {
            path: path.to_path_buf(),
            message: toml_message(&text, &e),
        })?;
        let base = RunConfig::load(&path.parent().unwrap_or(Path::new("")).join(&file.base))?;
        let directory = file
            .directory
            .unwrap_or_else(|| base.output.directory.clone());
        let sweep = SweepConfig {
            base,
            alphas: file.alphas,
            include_nls_baseline: file.include_nls_baseline,
            directory,
        };
        sweep.validate().map_err(|e| Error::ConfigParse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(sweep)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.alphas.is_empty() {
            return Err(Error::Config("sweep needs at least one alpha".into()));
        }
        if self.alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::Config(format!(
                "sweep alphas must be > 0, got {:?}",
                self.alphas
            )));
        }
        if self.alphas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(format!(
                "sweep alphas must be strictly decreasing, got {:?}",
                self.alphas
            )));
        }
        if self.base.equation.kind == EquationKind::Nls {
            return Err(Error::Config("sweep base equation must be SH or SN".into()));
        }
        Ok(())
    }

    fn jobs(&self) -> Vec<(String, Option<f64>, RunConfig)> {
        let mut jobs: Vec<_> = self
            .alphas
            .iter()
            .map(|&a| {
                let label = format!("alpha_{a}");
                let mut c = self.base.clone();
                c.equation.alpha = a;
                c.output.directory = self.directory.join(&label);
                (label, Some(a), c)
            })
            .collect();
        if self.include_nls_baseline {
            let mut c = self.base.clone();
            c.equation = EquationSpec::nls(self.base.equation.sigma);
            c.output.directory = self.directory.join("nls");
            jobs.push(("nls".into(), None, c));
        }
        jobs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub label: String,
    pub kind: EquationKind,
    pub alpha: Option<f64>,
    pub directory: PathBuf,
    /// `None` when the run failed; see `error`.
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub failures: usize,
    /// Peak `sup|v|` of the regularized runs never drops as α decreases.
    pub peak_sup_nondecreasing: bool,
}

const SWEEP_CSV_HEADER: &str =
    "label,kind,alpha,status,reason,t_final,peak_sup,peak_grad_sq,t_blowup,mass_drift,hamiltonian_drift";

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.16e}"));
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            let s = e.summary.as_ref();
            let fields = [
                e.label.clone(),
                e.kind.to_string(),
                opt(e.alpha),
                if s.is_some() { "ok" } else { "failed" }.to_string(),
                s.map_or(String::new(), |s| s.reason.to_string()),
                opt(s.map(|s| s.t_final)),
                opt(s.map(|s| s.peak_sup)),
                opt(s.map(|s| s.peak_grad_sq)),
                opt(s.and_then(|s| s.t_blowup)),
                opt(s.map(|s| s.mass_drift)),
                opt(s.map(|s| s.hamiltonian_drift)),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Runs every α (and the optional NLS baseline) from one shared initial
/// field. Failed runs are recorded in the report; the sweep continues.
pub fn alpha_sweep(sweep: &SweepConfig) -> Result<SweepReport> {
    sweep.validate()?;
    create_dir(&sweep.directory)?;
    let v0 = build_initial(&sweep.base)?;
    let jobs = sweep.jobs();
    let results = par::map_collect(&jobs, |(_, _, config)| execute_from(config, &v0));

    let entries: Vec<SweepEntry> = jobs
        .into_iter()
        .zip(results)
        .map(|((label, alpha, config), res)| {
            if let Err(e) = &res {
                log::warn!("sweep run {label} failed: {e}");
            }
            let (summary, error) = match res {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e.to_string())),
            };
            SweepEntry {
                label,
                kind: config.equation.kind,
                alpha,
                directory: config.output.directory,
                summary,
                error,
            }
        })
        .collect();
    let peaks: Vec<f64> = entries
        .iter()
        .filter(|e| e.alpha.is_some())
        .filter_map(|e| e.summary.as_ref().map(|s| s.peak_sup))
        .collect();
    let report = SweepReport {
        failures: entries.iter().filter(|e| e.summary.is_none()).count(),
        peak_sup_nondecreasing: peaks.windows(2).all(|w| w[1] >= w[0]),
        entries,
    };
    write_json(&sweep.directory.join("sweep_report.json"), &report)?;
    let csv = sweep.directory.join("sweep_report.csv");
    fs::write(&csv, report.to_csv()).map_err(|e| Error::io(&csv, e))?;
    Ok(report)
}
