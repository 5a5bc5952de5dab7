//! Sweep orchestration, CSV and plot-data output, and channel validation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::montecarlo::{empirical_flip_count, run_trials, wilson_interval, SeedPolicy, TrialStats};
use crate::noise::{
    calibrate_from_visibilities, choi_trace_distance, theta_for_flip_probability, BellDiagonalSource,
    InterferenceVisibility, PauliChannel, WaveplateSandwich,
};
use crate::protocol::{
    calibrate_parity_visibility, direct_qber, eq4_qber, run_analytic, ChannelKind, PipelineConfig,
    SamplingMode, SixState,
};

pub const CSV_VERSION: &str = "# parity-reject-csv v1";

pub const CSV_COLUMNS: [&str; 13] = [
    "state",
    "basis",
    "theta_deg",
    "p",
    "e0_analytic",
    "e1_analytic",
    "e1_mc",
    "ci_low",
    "ci_high",
    "yield_analytic",
    "yield_mc",
    "n_accepted",
    "n_trials",
];

/// Label used for the six-state average rows.
pub const AVERAGE_LABEL: &str = "avg";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("infeasible calibration: {0}")]
    Infeasible(Error),
    #[error("numerical failure: {0}")]
    Numerical(Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl ExperimentError {
    /// 2 config, 3 infeasible calibration, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) | ExperimentError::Io { .. } => 2,
            ExperimentError::Infeasible(_) => 3,
            ExperimentError::Numerical(_) => 4,
        }
    }
}

impl From<Error> for ExperimentError {
    fn from(e: Error) -> Self {
        match e {
            Error::InfeasibleVisibilities { .. } | Error::UnreachableVisibility { .. } => {
                ExperimentError::Infeasible(e)
            }
            other => ExperimentError::Numerical(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, ExperimentError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Ideal {},
    /// Bell-diagonal weights over `(φ⁺, φ⁻, ψ⁺, ψ⁻)`.
    Lambda { lambda: [f64; 4] },
    Visibilities { v_hv: f64, v_pm: f64 },
}

impl SourceSpec {
    pub fn build(&self) -> CliResult<BellDiagonalSource> {
        Ok(match self {
            SourceSpec::Ideal {} => BellDiagonalSource::ideal(),
            SourceSpec::Lambda { lambda } => {
                BellDiagonalSource::new(*lambda).map_err(|e| ExperimentError::Config(e.to_string()))?
            }
            SourceSpec::Visibilities { v_hv, v_pm } => calibrate_from_visibilities(*v_hv, *v_pm)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSpec {
    BitFlip,
    PhaseFlip,
    Sandwich,
}

impl From<ChannelSpec> for ChannelKind {
    fn from(c: ChannelSpec) -> Self {
        match c {
            ChannelSpec::BitFlip => ChannelKind::BitFlip,
            ChannelSpec::PhaseFlip => ChannelKind::PhaseFlip,
            ChannelSpec::Sandwich => ChannelKind::Sandwich,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingSpec {
    FullUnitary,
    PauliDraw,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    #[serde(default = "ideal_source")]
    pub source: SourceSpec,
    /// Prepare photon 1 by detecting its partner from a second pair of the
    /// same source.
    #[serde(default)]
    pub herald: bool,
    #[serde(default)]
    pub parity_visibility: Option<f64>,
    /// Tune the parity visibility so the four-photon `±` visibility after the
    /// first parity check hits this value.
    #[serde(default)]
    pub ghz_visibility_target: Option<f64>,
    #[serde(default = "default_channel")]
    pub channel: ChannelSpec,
    #[serde(default = "default_sampling")]
    pub sampling: SamplingSpec,
    #[serde(default = "default_true")]
    pub use_minus_branches: bool,
    #[serde(default)]
    pub phase_error_mode: bool,
}

fn ideal_source() -> SourceSpec {
    SourceSpec::Ideal {}
}

fn default_channel() -> ChannelSpec {
    ChannelSpec::Sandwich
}

fn default_sampling() -> SamplingSpec {
    SamplingSpec::FullUnitary
}

impl Default for PipelineSpec {
    fn default() -> Self {
        Self {
            source: SourceSpec::Ideal {},
            herald: false,
            parity_visibility: None,
            ghz_visibility_target: None,
            channel: default_channel(),
            sampling: default_sampling(),
            use_minus_branches: true,
            phase_error_mode: false,
        }
    }
}

impl PipelineSpec {
    pub fn build(&self) -> CliResult<PipelineConfig> {
        let source = self.source.build()?;
        let mut cfg = PipelineConfig {
            pair_source: source,
            herald_source: self.herald.then_some(source),
            parity_visibility: InterferenceVisibility::perfect(),
            channel: self.channel.into(),
            use_minus_branches: self.use_minus_branches,
            phase_error_mode: self.phase_error_mode,
            sampling: match self.sampling {
                SamplingSpec::FullUnitary => SamplingMode::FullUnitary,
                SamplingSpec::PauliDraw => SamplingMode::PauliDraw,
            },
        };
        match (self.parity_visibility, self.ghz_visibility_target) {
            (Some(_), Some(_)) => {
                return Err(ExperimentError::Config(
                    "set at most one of parity_visibility and ghz_visibility_target".into(),
                ))
            }
            (Some(v), None) => {
                cfg.parity_visibility =
                    InterferenceVisibility::new(v).map_err(|e| ExperimentError::Config(e.to_string()))?
            }
            (None, Some(target)) => {
                // the four-photon state always involves a (1, 4) pair
                let probe = PipelineConfig {
                    herald_source: Some(source),
                    ..cfg
                };
                cfg.parity_visibility = calibrate_parity_visibility(&probe, target)?;
            }
            (None, None) => {}
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub p_values: Option<Vec<f64>>,
    /// Waveplate angles in degrees; `p = sin²(2θ)`.
    #[serde(default)]
    pub theta_values: Option<Vec<f64>>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            p_values: Some(default_grid()),
            theta_values: None,
        }
    }
}

/// `0, 0.05, …, 0.40`
pub fn default_grid() -> Vec<f64> {
    (0..=8).map(|i| f64::from(i) / 20.0).collect()
}

/// One sweep point as `(theta_deg, p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub theta_deg: f64,
    pub p: f64,
}

impl SweepSpec {
    pub fn points(&self) -> CliResult<Vec<GridPoint>> {
        let points: Vec<GridPoint> = match (&self.p_values, &self.theta_values) {
            (Some(_), Some(_)) => {
                return Err(ExperimentError::Config(
                    "sweep takes either p_values or theta_values, not both".into(),
                ))
            }
            (Some(ps), None) => {
                for &p in ps {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(ExperimentError::Config(format!("p = {p} not in [0, 1]")));
                    }
                }
                ps.iter()
                    .map(|&p| GridPoint {
                        theta_deg: theta_for_flip_probability(p),
                        p,
                    })
                    .collect()
            }
            (None, Some(ts)) => ts
                .iter()
                .map(|&t| {
                    let s = WaveplateSandwich::new(t, true)
                        .map_err(|_| ExperimentError::Config(format!("theta = {t} not in [0, 45]")))?;
                    Ok(GridPoint {
                        theta_deg: t,
                        p: s.flip_probability(),
                    })
                })
                .collect::<CliResult<_>>()?,
            (None, None) => default_grid()
                .into_iter()
                .map(|p| GridPoint {
                    theta_deg: theta_for_flip_probability(p),
                    p,
                })
                .collect(),
        };
        if points.is_empty() {
            return Err(ExperimentError::Config("sweep is empty".into()));
        }
        Ok(points)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub csv_path: Option<PathBuf>,
    #[serde(default)]
    pub plotdata_path: Option<PathBuf>,
}

fn all_states() -> Vec<String> {
    SixState::ALL.iter().map(|s| s.label().to_string()).collect()
}

fn default_trials() -> u64 {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "all_states")]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub pipeline: PipelineSpec,
    #[serde(default = "default_trials")]
    pub trials_per_point: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub outputs: OutputSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            inputs: all_states(),
            sweep: SweepSpec::default(),
            pipeline: PipelineSpec::default(),
            trials_per_point: default_trials(),
            master_seed: 0,
            outputs: OutputSpec::default(),
        }
    }
}

/// A parsed config together with the digest of its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub sha256: String,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<LoadedConfig> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        config.validate()?;
        Ok(LoadedConfig {
            config,
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }

    pub fn load(path: &Path) -> CliResult<LoadedConfig> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.trials_per_point == 0 {
            return Err(ExperimentError::Config("trials_per_point must be at least 1".into()));
        }
        if self.inputs.is_empty() {
            return Err(ExperimentError::Config("inputs is empty".into()));
        }
        self.states()?;
        self.sweep.points()?;
        Ok(())
    }

    pub fn states(&self) -> CliResult<Vec<SixState>> {
        self.inputs
            .iter()
            .map(|s| s.parse().map_err(ExperimentError::Config))
            .collect()
    }
}

/// One CSV row. Rate columns are `None` when not computed or undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub state: String,
    pub basis: String,
    pub theta_deg: f64,
    pub p: f64,
    pub e0_analytic: Option<f64>,
    pub e1_analytic: Option<f64>,
    pub e1_mc: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub yield_analytic: Option<f64>,
    pub yield_mc: Option<f64>,
    pub n_accepted: u64,
    pub n_trials: u64,
}

/// Evaluates one `(state, point)` cell.
pub fn sweep_cell(
    cfg: &PipelineConfig,
    state: SixState,
    point: GridPoint,
    trials: u64,
    seed: u64,
) -> CliResult<(SweepRow, TrialStats)> {
    let model = cfg.channel.instantiate(point.p)?;
    let analytic = run_analytic(cfg, state, point.p)?;
    let e0 = direct_qber(&state.ket(), &model)?;
    let stats = run_trials(cfg, &state.ket(), &model, trials, SeedPolicy::new(seed))?;
    let row = SweepRow {
        state: state.label().to_string(),
        basis: state.basis().label().to_string(),
        theta_deg: point.theta_deg,
        p: point.p,
        e0_analytic: Some(e0),
        e1_analytic: Some(analytic.qber),
        e1_mc: stats.qber_hat,
        ci_low: stats.qber_hat.map(|_| stats.ci_low),
        ci_high: stats.qber_hat.map(|_| stats.ci_high),
        yield_analytic: Some(analytic.yield_prob),
        yield_mc: Some(stats.yield_hat),
        n_accepted: stats.n_accepted,
        n_trials: stats.n_trials,
    };
    Ok((row, stats))
}

/// Seed for one cell, so each grid point gets its own streams.
pub fn cell_seed(master: u64, state_index: usize, point_index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((state_index as u64).to_le_bytes());
    h.update((point_index as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Mean over the six per-state rows at one grid point.
fn average_row(rows: &[&SweepRow], stats: &[&TrialStats]) -> CliResult<SweepRow> {
    let mean = |f: &dyn Fn(&SweepRow) -> Option<f64>| -> Option<f64> {
        let vals: Option<Vec<f64>> = rows.iter().map(|r| f(r)).collect();
        vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    };
    let n = rows.len() as f64;
    let (e1_mc, ci_low, ci_high) = match mean(&|r| r.e1_mc) {
        Some(m) => {
            // independent proportions: each contributes its Wilson half-width in quadrature
            let mut var = 0.0;
            for s in stats {
                let (lo, hi) = wilson_interval(s.n_errors, s.n_accepted, 0.95)?;
                var += (0.5 * (hi - lo)).powi(2);
            }
            let half = var.sqrt() / n;
            (Some(m), Some((m - half).max(0.0)), Some((m + half).min(1.0)))
        }
        None => (None, None, None),
    };
    Ok(SweepRow {
        state: AVERAGE_LABEL.to_string(),
        basis: "all".to_string(),
        theta_deg: rows[0].theta_deg,
        p: rows[0].p,
        e0_analytic: mean(&|r| r.e0_analytic),
        e1_analytic: mean(&|r| r.e1_analytic),
        e1_mc,
        ci_low,
        ci_high,
        yield_analytic: mean(&|r| r.yield_analytic),
        yield_mc: mean(&|r| r.yield_mc),
        n_accepted: rows.iter().map(|r| r.n_accepted).sum(),
        n_trials: rows.iter().map(|r| r.n_trials).sum(),
    })
}

/// Runs every `(state, point)` cell. Average rows are appended per point
/// when all six states are swept.
pub fn run_sweep(config: &ExperimentConfig) -> CliResult<Vec<SweepRow>> {
    config.validate()?;
    let cfg = config.pipeline.build()?;
    let states = config.states()?;
    let points = config.sweep.points()?;
    let complete = SixState::ALL.iter().all(|s| states.contains(s));
    let mut out = Vec::new();
    for (pi, &point) in points.iter().enumerate() {
        let mut cells = Vec::new();
        for (si, &state) in states.iter().enumerate() {
            let seed = cell_seed(config.master_seed, si, pi);
            cells.push((state, sweep_cell(&cfg, state, point, config.trials_per_point, seed)?));
        }
        out.extend(cells.iter().map(|(_, (row, _))| row.clone()));
        if complete {
            let mut by_state: BTreeMap<SixState, (&SweepRow, &TrialStats)> = BTreeMap::new();
            for (s, (row, stats)) in &cells {
                by_state.entry(*s).or_insert((row, stats));
            }
            let rows: Vec<&SweepRow> = by_state.values().map(|(r, _)| *r).collect();
            let stats: Vec<&TrialStats> = by_state.values().map(|(_, s)| *s).collect();
            out.push(average_row(&rows, &stats)?);
        }
    }
    Ok(out)
}

/// Shortest decimal that round-trips the value rounded to 12 significant digits.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn opt(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

/// CSV text with version, seed and config-hash comment lines.
pub fn render_csv(rows: &[SweepRow], master_seed: u64, config_sha256: &str) -> CliResult<String> {
    let mut buf = Vec::new();
    writeln!(buf, "{CSV_VERSION}").expect("write to Vec");
    writeln!(buf, "# master_seed: {master_seed}").expect("write to Vec");
    writeln!(buf, "# config_sha256: {config_sha256}").expect("write to Vec");
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let fail = |e: csv::Error| ExperimentError::Config(e.to_string());
        w.write_record(CSV_COLUMNS).map_err(fail)?;
        for r in rows {
            w.write_record([
                r.state.clone(),
                r.basis.clone(),
                format_number(r.theta_deg),
                format_number(r.p),
                opt(r.e0_analytic),
                opt(r.e1_analytic),
                opt(r.e1_mc),
                opt(r.ci_low),
                opt(r.ci_high),
                opt(r.yield_analytic),
                opt(r.yield_mc),
                r.n_accepted.to_string(),
                r.n_trials.to_string(),
            ])
            .map_err(fail)?;
        }
        w.flush().map_err(|e| ExperimentError::Io {
            path: PathBuf::from("<buffer>"),
            source: e,
        })?;
    }
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Writes via a temporary file in the target directory and renames it.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(contents).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| ExperimentError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn parse_csv(text: &str) -> CliResult<Vec<SweepRow>> {
    if !text.lines().any(|l| l.trim() == CSV_VERSION) {
        return Err(ExperimentError::Config("missing `# parity-reject-csv v1` header".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| ExperimentError::Config(format!("malformed CSV: {e}")))?;
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(ExperimentError::Config(format!("unexpected CSV header: {header:?}")));
    }
    let rows: Vec<SweepRow> = reader
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| ExperimentError::Config(format!("malformed CSV: {e}")))?;
    if rows.is_empty() {
        return Err(ExperimentError::Config("CSV has no data rows".into()));
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> CliResult<Vec<SweepRow>> {
    parse_csv(&fs::read_to_string(path).map_err(io_err(path))?)
}

/// Result of `sweep`: the rows plus where they were written.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub csv: String,
    pub written: Vec<PathBuf>,
}

pub fn cmd_sweep(config_path: &Path) -> CliResult<SweepReport> {
    let loaded = ExperimentConfig::load(config_path)?;
    let config = &loaded.config;
    let rows = run_sweep(config)?;
    let csv = render_csv(&rows, config.master_seed, &loaded.sha256)?;
    let mut written = Vec::new();
    if let Some(path) = &config.outputs.csv_path {
        write_atomic(path, csv.as_bytes())?;
        written.push(path.clone());
    }
    if let Some(path) = &config.outputs.plotdata_path {
        written.extend(write_plotdata(&rows, path)?);
    }
    Ok(SweepReport { rows, csv, written })
}

pub fn cmd_single(config_path: &Path, state: SixState, p: f64) -> CliResult<String> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ExperimentError::Config(format!("p = {p} not in [0, 1]")));
    }
    let loaded = ExperimentConfig::load(config_path)?;
    single_report(&loaded.config, state, p)
}

pub fn single_report(config: &ExperimentConfig, state: SixState, p: f64) -> CliResult<String> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ExperimentError::Config(format!("p = {p} not in [0, 1]")));
    }
    let cfg = config.pipeline.build()?;
    let point = GridPoint {
        theta_deg: theta_for_flip_probability(p),
        p,
    };
    let (row, stats) = sweep_cell(&cfg, state, point, config.trials_per_point, config.master_seed)?;
    let mut s = String::new();
    let f = |x: Option<f64>| x.map_or("undefined".to_string(), format_number);
    writeln!(s, "state {state}  p = {}  theta = {} deg", format_number(p), format_number(point.theta_deg)).unwrap();
    writeln!(s, "direct QBER (analytic):    {}", f(row.e0_analytic)).unwrap();
    writeln!(s, "rejected QBER (analytic):  {}", f(row.e1_analytic)).unwrap();
    writeln!(
        s,
        "rejected QBER (MC):        {}  95% CI [{}, {}]",
        f(row.e1_mc),
        f(row.ci_low),
        f(row.ci_high)
    )
    .unwrap();
    writeln!(s, "yield (analytic):          {}", f(row.yield_analytic)).unwrap();
    writeln!(
        s,
        "yield (MC):                {}  ({} of {} trials accepted)",
        f(row.yield_mc),
        stats.n_accepted,
        stats.n_trials
    )
    .unwrap();
    let b = stats.branch_counts;
    writeln!(
        s,
        "branches (encode/decode):  ++ {}  +- {}  -+ {}  -- {}",
        b[0][0], b[0][1], b[1][0], b[1][1]
    )
    .unwrap();
    write!(s, "seed {}", config.master_seed).unwrap();
    Ok(s)
}

/// Parses `0,5,...,45`: a `...` entry continues the progression set by the two
/// preceding values up to the value that follows it.
pub fn parse_theta_list(text: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| ExperimentError::Config(format!("bad angle `{s}`")))
    };
    let mut out: Vec<f64> = Vec::new();
    let mut i = 0;
    while i < parts.len() {
        if parts[i] == "..." || parts[i] == "…" {
            let (a, b) = match out.as_slice() {
                [.., a, b] => (*a, *b),
                _ => return Err(ExperimentError::Config("`...` needs two preceding values".into())),
            };
            let end = num(parts.get(i + 1).ok_or_else(|| {
                ExperimentError::Config("`...` needs a final value".into())
            })?)?;
            let step = b - a;
            if step <= 0.0 || end < b {
                return Err(ExperimentError::Config("`...` needs an increasing progression".into()));
            }
            let steps = ((end - b) / step).round() as i64;
            if (b + steps as f64 * step - end).abs() > 1e-9 * step.max(1.0) {
                return Err(ExperimentError::Config(format!("{end} is not on the progression")));
            }
            for k in 1..steps {
                out.push(b + k as f64 * step);
            }
            out.push(end);
            i += 2;
        } else {
            out.push(num(parts[i])?);
            i += 1;
        }
    }
    if out.is_empty() {
        return Err(ExperimentError::Config("no angles given".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelCheck {
    pub theta_deg: f64,
    pub p: f64,
    pub empirical: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub choi_distance: f64,
}

impl ChannelCheck {
    pub fn pass(&self) -> bool {
        self.choi_distance < 1e-12 && self.ci_low <= self.p && self.p <= self.ci_high
    }
}

pub fn validate_channel(theta_deg: f64, trials: u64, seed: u64) -> CliResult<ChannelCheck> {
    let sandwich = WaveplateSandwich::new(theta_deg, true)
        .map_err(|_| ExperimentError::Config(format!("theta = {theta_deg} not in [0, 45]")))?;
    let p = sandwich.flip_probability();
    let bit_flip = PauliChannel::bit_flip(p.clamp(0.0, 1.0))?;
    let choi_distance = choi_trace_distance(&sandwich.induced_channel(), &bit_flip.kraus())?;
    let k = empirical_flip_count(&sandwich, trials, SeedPolicy::new(seed))?;
    let (ci_low, ci_high) = wilson_interval(k, trials, 0.95)?;
    Ok(ChannelCheck {
        theta_deg,
        p,
        empirical: k as f64 / trials as f64,
        ci_low,
        ci_high,
        choi_distance,
    })
}

pub fn cmd_validate_channel(thetas: &[f64], trials: u64, seed: u64) -> CliResult<(String, bool)> {
    let mut s = String::from("theta_deg  p_analytic      p_empirical     95% CI                       choi_distance  ok\n");
    let mut all = true;
    for &t in thetas {
        let c = validate_channel(t, trials, seed)?;
        all &= c.pass();
        writeln!(
            s,
            "{:<10} {:<15} {:<15} [{:<12}, {:<12}] {:<14.3e} {}",
            format_number(t),
            format_number(c.p),
            format_number(c.empirical),
            format_number(c.ci_low),
            format_number(c.ci_high),
            c.choi_distance,
            if c.pass() { "yes" } else { "NO" }
        )
        .unwrap();
    }
    Ok((s, all))
}

/// States shown as separate panels, plus the average.
pub const PANELS: [&str; 4] = ["V", "-", "L", AVERAGE_LABEL];

/// Writes the gnuplot data file at `out` and an SVG next to it. Returns both
/// paths.
pub fn write_plotdata(rows: &[SweepRow], out: &Path) -> CliResult<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(ExperimentError::Config("no rows to plot".into()));
    }
    let svg_path = out.with_extension("svg");
    write_atomic(out, render_gnuplot(rows).as_bytes())?;
    write_atomic(&svg_path, render_svg(rows).as_bytes())?;
    Ok(vec![out.to_path_buf(), svg_path])
}

pub fn cmd_plotdata(csv_path: &Path, out: &Path) -> CliResult<Vec<PathBuf>> {
    let rows = read_csv(csv_path)?;
    write_plotdata(&rows, out)
}

fn panel_rows<'a>(rows: &'a [SweepRow], panel: &str) -> Vec<&'a SweepRow> {
    let mut v: Vec<&SweepRow> = rows.iter().filter(|r| r.state == panel).collect();
    v.sort_by(|a, b| a.p.total_cmp(&b.p));
    v
}

/// One gnuplot index block per panel:
/// `p e0_analytic e1_analytic e1_mc ci_low ci_high eq4`.
pub fn render_gnuplot(rows: &[SweepRow]) -> String {
    let mut s = String::new();
    let na = |x: Option<f64>| x.map_or("NaN".to_string(), format_number);
    for panel in PANELS {
        writeln!(s, "# panel {panel}").unwrap();
        writeln!(s, "# p e0_analytic e1_analytic e1_mc ci_low ci_high eq4").unwrap();
        for r in panel_rows(rows, panel) {
            writeln!(
                s,
                "{} {} {} {} {} {} {}",
                format_number(r.p),
                na(r.e0_analytic),
                na(r.e1_analytic),
                na(r.e1_mc),
                na(r.ci_low),
                na(r.ci_high),
                na(eq4_qber(r.p).ok()),
            )
            .unwrap();
        }
        s.push_str("\n\n");
    }
    s
}

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 270.0;
const MARGIN: f64 = 45.0;

struct Frame {
    x0: f64,
    y0: f64,
    p_max: f64,
    q_max: f64,
}

impl Frame {
    fn x(&self, p: f64) -> f64 {
        self.x0 + MARGIN + p / self.p_max * (PANEL_W - 1.5 * MARGIN)
    }

    fn y(&self, q: f64) -> f64 {
        self.y0 + PANEL_H - MARGIN - q / self.q_max * (PANEL_H - 1.5 * MARGIN)
    }
}

/// Four panels: baseline squares, rejected triangles with CI bars, and the
/// curves `E₀ = p` (solid) and the rejected-rate law (dashed).
pub fn render_svg(rows: &[SweepRow]) -> String {
    let p_max = rows.iter().map(|r| r.p).fold(0.0, f64::max).max(0.05);
    let q_max = rows
        .iter()
        .flat_map(|r| [r.e0_analytic, r.e1_mc, r.ci_high, r.e1_analytic])
        .flatten()
        .fold(p_max, f64::max)
        * 1.05;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
        2.0 * PANEL_W,
        2.0 * PANEL_H
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    for (i, panel) in PANELS.iter().enumerate() {
        let f = Frame {
            x0: (i % 2) as f64 * PANEL_W,
            y0: (i / 2) as f64 * PANEL_H,
            p_max,
            q_max,
        };
        let title = if *panel == AVERAGE_LABEL {
            "six-state average".to_string()
        } else {
            format!("input |{panel}⟩")
        };
        writeln!(s, r#"<g>"#).unwrap();
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-weight="bold">{title}</text>"#,
            f.x0 + MARGIN,
            f.y0 + 0.4 * MARGIN
        )
        .unwrap();
        // axes
        writeln!(
            s,
            r#"<polyline points="{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}" fill="none" stroke="black"/>"#,
            f.x(0.0),
            f.y(q_max),
            f.x(0.0),
            f.y(0.0),
            f.x(p_max),
            f.y(0.0)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">p</text>"#,
            f.x(p_max / 2.0),
            f.y(0.0) + 28.0
        )
        .unwrap();
        for k in 0..=4 {
            let p = p_max * f64::from(k) / 4.0;
            let q = q_max * f64::from(k) / 4.0;
            writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.2}</text>"#,
                f.x(p),
                f.y(0.0) + 14.0,
                p
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.2}</text>"#,
                f.x(0.0) - 4.0,
                f.y(q) + 4.0,
                q
            )
            .unwrap();
        }
        // theory curves
        let line = |g: &dyn Fn(f64) -> f64| -> String {
            (0..=100)
                .map(|k| {
                    let p = p_max * f64::from(k) / 100.0;
                    format!("{:.1},{:.1}", f.x(p), f.y(g(p).min(q_max)))
                })
                .collect::<Vec<_>>()
                .join(" ")
        };
        writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="steelblue"/>"#,
            line(&|p| p)
        )
        .unwrap();
        writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="firebrick" stroke-dasharray="4 3"/>"#,
            line(&|p| eq4_qber(p).unwrap_or(f64::NAN))
        )
        .unwrap();
        for r in panel_rows(rows, panel) {
            let x = f.x(r.p);
            if let Some(e0) = r.e0_analytic {
                let y = f.y(e0);
                writeln!(
                    s,
                    r#"<rect x="{:.1}" y="{:.1}" width="6" height="6" fill="steelblue"/>"#,
                    x - 3.0,
                    y - 3.0
                )
                .unwrap();
            }
            if let (Some(lo), Some(hi)) = (r.ci_low, r.ci_high) {
                writeln!(
                    s,
                    r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="firebrick"/>"#,
                    f.y(lo),
                    f.y(hi)
                )
                .unwrap();
            }
            if let Some(e1) = r.e1_mc.or(r.e1_analytic) {
                let y = f.y(e1);
                writeln!(
                    s,
                    r#"<polygon points="{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}" fill="firebrick"/>"#,
                    x,
                    y - 4.0,
                    x - 4.0,
                    y + 3.0,
                    x + 4.0,
                    y + 3.0
                )
                .unwrap();
            }
        }
        writeln!(s, "</g>").unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_keeps_twelve_digits() {
        assert_eq!(format_number(0.1), "0.1");
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(0.15517241379310345), "0.155172413793");
        assert_eq!(format_number(1.0 / 3.0e7), "0.0000000333333333333");
    }

    #[test]
    fn theta_list_expansion() {
        let v = parse_theta_list("0,5,...,45").unwrap();
        assert_eq!(v.len(), 10);
        assert_eq!(v[9], 45.0);
        assert_eq!(parse_theta_list("10, 22.5").unwrap(), vec![10.0, 22.5]);
        assert!(parse_theta_list("0,...,45").is_err());
        assert!(parse_theta_list("0,5,...,47").is_err());
        assert!(parse_theta_list("x").is_err());
    }

    #[test]
    fn default_grid_matches_sweep_range() {
        let g = default_grid();
        assert_eq!(g.len(), 9);
        assert_eq!(g[3], 0.15);
        assert_eq!(g[8], 0.4);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"trials": 5}"#),
            Err(ExperimentError::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"pipeline": {"source": {"kind": "ideal", "x": 1}}}"#),
            Err(ExperimentError::Config(_))
        ));
        let ok = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(ok.config, ExperimentConfig::default());
    }

    #[test]
    fn error_exit_codes() {
        assert_eq!(ExperimentError::Config("x".into()).exit_code(), 2);
        let infeasible: ExperimentError = calibrate_from_visibilities(1.2, 0.9).unwrap_err().into();
        assert_eq!(infeasible.exit_code(), 3);
        assert_eq!(ExperimentError::from(Error::NoAcceptedTrials).exit_code(), 4);
    }
}
