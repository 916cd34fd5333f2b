//! Command-line surface: run-configuration parsing, subcommand dispatch and
//! structured output.
//!
//! Configuration is strict TOML: unknown keys are rejected so unit mistakes
//! (misspelled keys, MHz vs rad/ns confusion) surface immediately. Every
//! subcommand reads the same [`RunConfig`] shape and takes what it needs:
//!
//! | table      | keys                                                      |
//! |------------|-----------------------------------------------------------|
//! | `[device]` | omega_c_mhz*, omega_t_mhz*, alpha_c_mhz*, alpha_t_mhz*,   |
//! |            | j_mhz*, levels_c, levels_t, omega_d_mhz                   |
//! | `[pulse]`  | shape, amp_mhz, tau_p_ns*, tau_r_ns*, sigma_r_ns,         |
//! |            | drag_delta_mhz                                            |
//! | `[solver]` | dt_ns, expm_tol                                           |
//! | `[sweep]`  | start*, stop*, step*                                      |
//! | `[output]` | path, format                                              |
//!
//! (* = required when the table is present; `[device]` itself is always
//! required.) Defaults: levels 5/3, dt 0.01 ns, σ_r = τ_r/2, DRAG off. When
//! `amp_mhz` is omitted the drive amplitude is solved by calibration. The
//! `[sweep]` table overrides the default grid of the sweep subcommands and
//! supplies the frequency grid (MHz) of `spectrum`.
//!
//! Output: the structured payload goes to `--out` (or `[output] path`) and a
//! one-line summary is printed to standard output; without a path the
//! payload itself is printed to standard output instead. Exit codes:
//! 0 success, 1 runtime failure (machine-readable error JSON on standard
//! error), 2 usage error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::{self, CalibrationResult, Method, RefineConfig};
use crate::error::CrError;
use crate::experiments::{self, CnotTarget, ProbabilityMap, SweepOptions, SweepResult};
use crate::model::{self, DeviceConfig, DeviceParams};
use crate::offres::{self, TransitionSpec};
use crate::propagator::{self, MagnusConfig};
use crate::pulses::{self, PolynomialTone, PulseConfig, PulseShape};
use crate::rates;
use crate::units::{mhz_to_rad_ns, rad_ns_to_mhz};

// ----------------------------------------------------------------------
// Configuration
// ----------------------------------------------------------------------

/// Errors from reading and validating a run configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    /// Syntax or type error, located by line.
    #[error("config parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Strict-mode rejection of a key no table defines.
    #[error("unknown key `{key}` at line {line}")]
    UnknownKey { key: String, line: usize },

    /// A required key of a present table is absent.
    #[error("missing key `{key}` at line {line}")]
    MissingKey { key: String, line: usize },

    #[error("missing required table [{0}]")]
    MissingTable(&'static str),

    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: &'static str, message: String },

    /// A parsed value violates a domain invariant (e.g. level cutoffs).
    #[error(transparent)]
    Domain(#[from] CrError),
}

impl ConfigError {
    /// Stable machine-readable code for error JSON.
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::Io { .. } => "cli.io",
            ConfigError::Parse { .. } => "cli.parse",
            ConfigError::UnknownKey { .. } => "cli.unknown_key",
            ConfigError::MissingKey { .. } => "cli.missing_key",
            ConfigError::MissingTable(_) => "cli.missing_table",
            ConfigError::InvalidValue { .. } => "cli.invalid_value",
            ConfigError::Domain(e) => e.code(),
        }
    }
}

/// Output format of the structured payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Pulse settings with calibration-aware amplitude semantics: when
/// `amp_mhz` is absent the amplitude is solved by the direct-CNOT
/// calibration before use.
#[derive(Debug, Clone)]
pub struct PulseSettings {
    pub amp_mhz: Option<f64>,
    pub tau_p_ns: f64,
    pub tau_r_ns: f64,
    pub sigma_r_ns: Option<f64>,
    pub drag_delta_mhz: Option<f64>,
}

impl PulseSettings {
    /// The strict pulse table with the amplitude filled in.
    pub fn to_pulse_config(&self, amp_mhz: f64) -> PulseConfig {
        PulseConfig {
            shape: PulseShape::SquareGaussian,
            amp_mhz,
            tau_p_ns: self.tau_p_ns,
            tau_r_ns: self.tau_r_ns,
            sigma_r_ns: self.sigma_r_ns,
            drag_delta_mhz: self.drag_delta_mhz,
        }
    }
}

/// Uniform sweep grid start..=stop in steps of `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    /// All grid points; `stop` is included when it is a whole number of
    /// steps from `start` (within roundoff).
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + self.step * k as f64).collect()
    }
}

/// Output destination and format from the `[output]` table; command-line
/// flags override both.
#[derive(Debug, Clone, Default)]
pub struct OutputSettings {
    pub path: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

/// Parsed and validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub device: DeviceParams,
    pub pulse: Option<PulseSettings>,
    pub solver: MagnusConfig,
    pub sweep: Option<GridSpec>,
    pub output: OutputSettings,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    device: Option<DeviceConfig>,
    pulse: Option<RawPulse>,
    solver: Option<RawSolver>,
    sweep: Option<RawSweep>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPulse {
    #[serde(default)]
    #[allow(dead_code)] // accepted for symmetry with the strict pulse table
    shape: Option<PulseShape>,
    #[serde(default)]
    amp_mhz: Option<f64>,
    tau_p_ns: f64,
    tau_r_ns: f64,
    #[serde(default)]
    sigma_r_ns: Option<f64>,
    #[serde(default)]
    drag_delta_mhz: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    #[serde(default)]
    dt_ns: Option<f64>,
    #[serde(default)]
    expm_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    start: f64,
    stop: f64,
    step: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    #[serde(default)]
    path: Option<String>,
    #[serde(default)]
    format: Option<String>,
}

/// Read and parse a run configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config_str(&text)
}

/// Parse a run configuration from TOML text (strict mode).
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| classify_toml_error(&e, text))?;

    let device = raw.device.ok_or(ConfigError::MissingTable("device"))?;
    let device = DeviceParams::try_from(device)?;

    let pulse = raw.pulse.map(|p| PulseSettings {
        amp_mhz: p.amp_mhz,
        tau_p_ns: p.tau_p_ns,
        tau_r_ns: p.tau_r_ns,
        sigma_r_ns: p.sigma_r_ns,
        drag_delta_mhz: p.drag_delta_mhz,
    });

    let s = raw.solver.unwrap_or_default();
    let dt = s.dt_ns.unwrap_or(0.01);
    if !(dt.is_finite() && dt > 0.0) {
        return Err(ConfigError::InvalidValue {
            key: "solver.dt_ns",
            message: format!("must be a positive time step, got {dt}"),
        });
    }
    let expm_tol = s.expm_tol.unwrap_or(1e-12);
    if !(expm_tol.is_finite() && expm_tol > 0.0) {
        return Err(ConfigError::InvalidValue {
            key: "solver.expm_tol",
            message: format!("must be a positive tolerance, got {expm_tol}"),
        });
    }
    let solver = MagnusConfig { dt, expm_tol, ..MagnusConfig::default() };

    let sweep = match raw.sweep {
        None => None,
        Some(g) => {
            if !(g.step.is_finite() && g.step > 0.0) {
                return Err(ConfigError::InvalidValue {
                    key: "sweep.step",
                    message: format!("must be positive, got {}", g.step),
                });
            }
            if !(g.start.is_finite() && g.stop.is_finite() && g.stop >= g.start) {
                return Err(ConfigError::InvalidValue {
                    key: "sweep.stop",
                    message: format!("need finite start <= stop, got {}..{}", g.start, g.stop),
                });
            }
            Some(GridSpec { start: g.start, stop: g.stop, step: g.step })
        }
    };

    let output = match raw.output {
        None => OutputSettings::default(),
        Some(o) => OutputSettings {
            path: o.path.map(PathBuf::from),
            format: match o.format.as_deref() {
                None => None,
                Some("csv") => Some(OutputFormat::Csv),
                Some("json") => Some(OutputFormat::Json),
                Some(other) => {
                    return Err(ConfigError::InvalidValue {
                        key: "output.format",
                        message: format!("expected \"csv\" or \"json\", got \"{other}\""),
                    })
                }
            },
        },
    };

    Ok(RunConfig { device, pulse, solver, sweep, output })
}

/// Split a strict-parse failure into unknown-key / missing-key / general
/// parse errors, locating it by line from the error span.
fn classify_toml_error(e: &toml::de::Error, text: &str) -> ConfigError {
    let line = e
        .span()
        .map_or(0, |s| 1 + text[..s.start.min(text.len())].matches('\n').count());
    let msg = e.message().to_string();
    if let Some(key) = backticked_after(&msg, "unknown field ") {
        ConfigError::UnknownKey { key, line }
    } else if let Some(key) = backticked_after(&msg, "missing field ") {
        ConfigError::MissingKey { key, line }
    } else {
        ConfigError::Parse { line, message: msg }
    }
}

fn backticked_after(msg: &str, prefix: &str) -> Option<String> {
    let rest = &msg[msg.find(prefix)? + prefix.len()..];
    let rest = rest.strip_prefix('`')?;
    Some(rest[..rest.find('`')?].to_string())
}

// ----------------------------------------------------------------------
// Command line
// ----------------------------------------------------------------------

/// Cross-resonance gate simulator and analysis toolkit.
#[derive(Debug, Parser)]
#[command(name = "cr-sim", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Propagate the configured pulse; report e_pop and the probability map.
    Simulate(CommonArgs),
    /// Solve the direct-CNOT amplitude and cancellation tone.
    Calibrate(CommonArgs),
    /// Closed-form effective-rate coefficients and static ZZ.
    Rates(CommonArgs),
    /// Perturbative off-resonant error estimates, time and frequency domain.
    Estimate(CommonArgs),
    /// Control-pulse spectrum magnitude over a frequency grid.
    Spectrum(CommonArgs),
    /// Sweep the ramp rise time at fixed gate time.
    SweepRise(CommonArgs),
    /// Sweep the DRAG coefficient 1/Delta_D at fixed gate and rise time.
    SweepDrag(CommonArgs),
    /// Sweep the drive amplitude (gate time re-solved per point).
    SweepAmp(CommonArgs),
    /// Sweep the gate time (amplitude re-solved per point).
    SweepGatetime(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run-configuration file (TOML).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output file; the payload goes to standard output when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Payload format (tabular subcommands default to csv, the rest json).
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Sweep worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Numerically refine the calibration before running.
    #[arg(long)]
    pub refine: bool,
}

#[derive(Debug, Error)]
enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Domain(#[from] CrError),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Usage(String),
}

impl RunError {
    fn code(&self) -> &'static str {
        match self {
            RunError::Config(e) => e.code(),
            RunError::Domain(e) => e.code(),
            RunError::Write { .. } => "cli.io",
            RunError::Usage(_) => "cli.usage",
        }
    }

    fn to_json(&self) -> String {
        serde_json::json!({ "error": { "code": self.code(), "message": self.to_string() } })
            .to_string()
    }
}

/// Execute a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let args = match &cli.command {
        Command::Simulate(a)
        | Command::Calibrate(a)
        | Command::Rates(a)
        | Command::Estimate(a)
        | Command::Spectrum(a)
        | Command::SweepRise(a)
        | Command::SweepDrag(a)
        | Command::SweepAmp(a)
        | Command::SweepGatetime(a) => a,
    };
    match execute(&cli.command, args) {
        Ok((payload, summary)) => {
            let dest = args.out.clone();
            match dest {
                Some(path) => match fs::write(&path, &payload) {
                    Ok(()) => {
                        println!("{summary}");
                        0
                    }
                    Err(source) => {
                        eprintln!("{}", RunError::Write { path, source }.to_json());
                        1
                    }
                },
                None => {
                    // Payload is the standard output; the summary is dropped
                    // so downstream parsers see only the document.
                    let mut stdout = io::stdout();
                    if stdout.write_all(&payload).and_then(|()| stdout.flush()).is_err() {
                        return 1;
                    }
                    0
                }
            }
        }
        Err(RunError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            2
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            1
        }
    }
}

fn execute(command: &Command, args: &CommonArgs) -> Result<(Vec<u8>, String), RunError> {
    let mut cfg = parse_config(&args.config)?;
    // Flags override the [output] table.
    if args.out.is_some() {
        cfg.output.path = args.out.clone();
    }
    match command {
        Command::Simulate(_) => cmd_simulate(&cfg, args),
        Command::Calibrate(_) => cmd_calibrate(&cfg, args),
        Command::Rates(_) => cmd_rates(&cfg, args),
        Command::Estimate(_) => cmd_estimate(&cfg, args),
        Command::Spectrum(_) => cmd_spectrum(&cfg, args),
        Command::SweepRise(_) => cmd_sweep(SweepAxis::Rise, &cfg, args),
        Command::SweepDrag(_) => cmd_sweep(SweepAxis::Drag, &cfg, args),
        Command::SweepAmp(_) => cmd_sweep(SweepAxis::Amplitude, &cfg, args),
        Command::SweepGatetime(_) => cmd_sweep(SweepAxis::GateTime, &cfg, args),
    }
}

// ----------------------------------------------------------------------
// Subcommand bodies
// ----------------------------------------------------------------------

fn require_pulse(cfg: &RunConfig) -> Result<&PulseSettings, RunError> {
    cfg.pulse
        .as_ref()
        .ok_or_else(|| ConfigError::MissingTable("pulse").into())
}

/// Effective payload format after flag/config/default precedence; errors
/// when a JSON-only subcommand is forced to CSV.
fn effective_format(
    args: &CommonArgs,
    cfg: &RunConfig,
    default: OutputFormat,
    csv_allowed: bool,
) -> Result<OutputFormat, RunError> {
    let fmt = args.format.or(cfg.output.format).unwrap_or(default);
    if fmt == OutputFormat::Csv && !csv_allowed {
        return Err(RunError::Usage(
            "this subcommand emits a JSON document; use --format json".into(),
        ));
    }
    Ok(fmt)
}

/// Amplitude and tone coefficients: explicit from the pulse table, or
/// solved by the perturbative calibration (numerically refined with
/// `--refine`).
fn resolve_calibration(
    device: &DeviceParams,
    pulse: &PulseSettings,
    solver: &MagnusConfig,
    refine: bool,
) -> Result<CalibrationResult, CrError> {
    let seed = match pulse.amp_mhz {
        Some(amp) => CalibrationResult {
            omega_cx_amp: amp,
            target_tone_coeffs: calibrate::cancellation_coeffs(device)?,
            residual_ix_plus_zx: None,
            method: Method::Perturbative,
            converged: true,
        },
        None => calibrate::calibrate_perturbative(device, pulse.tau_p_ns, pulse.tau_r_ns)?,
    };
    if refine {
        let mut rc = RefineConfig::new(pulse.tau_p_ns, pulse.tau_r_ns);
        rc.dt = solver.dt;
        calibrate::refine_numeric(device, &seed, &rc)
    } else {
        Ok(seed)
    }
}

fn json_payload<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report types serialize");
    bytes.push(b'\n');
    bytes
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    omega_cx_mhz: f64,
    omega_tx_mhz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    drag_delta_mhz: Option<f64>,
    e_pop: f64,
    p_00_to_01: f64,
    p_00_to_10: f64,
    p_00_to_20: f64,
    p_10_to_20: f64,
    p_10_to_11: f64,
    probabilities: ProbabilityMap,
}

fn cmd_simulate(cfg: &RunConfig, args: &CommonArgs) -> Result<(Vec<u8>, String), RunError> {
    effective_format(args, cfg, OutputFormat::Json, false)?;
    let pulse = require_pulse(cfg)?;
    let cal = resolve_calibration(&cfg.device, pulse, &cfg.solver, args.refine)?;
    let control = pulse.to_pulse_config(cal.omega_cx_amp).build()?;
    let (c1, c3) = cal.target_tone_coeffs;
    let tone = PolynomialTone::new(*control.base(), c1, c3);
    let u = propagator::propagate(&cfg.device, &control, Some(&tone), &cfg.solver)?;
    let basis =
        model::dressed_basis(&cfg.device, &model::build_static_hamiltonian(&cfg.device))?;
    let map = experiments::transition_probabilities(&u, &basis);
    let e_pop = experiments::avg_population_error(&u, &CnotTarget::ideal(), &basis);
    let w = cal.omega_cx_amp;
    let report = SimulateReport {
        omega_cx_mhz: w,
        omega_tx_mhz: c1 * w + c3 * w.powi(3),
        drag_delta_mhz: pulse.drag_delta_mhz,
        e_pop,
        p_00_to_01: map.get((0, 0), (0, 1)),
        p_00_to_10: map.get((0, 0), (1, 0)),
        p_00_to_20: map.get((0, 0), (2, 0)),
        p_10_to_20: map.get((1, 0), (2, 0)),
        p_10_to_11: map.get((1, 0), (1, 1)),
        probabilities: map,
    };
    let summary = format!(
        "e_pop = {:.6e}; P(00->01) = {:.4e}; P(10->11) = {:.6}",
        report.e_pop, report.p_00_to_01, report.p_10_to_11
    );
    Ok((json_payload(&report), summary))
}

fn cmd_calibrate(cfg: &RunConfig, args: &CommonArgs) -> Result<(Vec<u8>, String), RunError> {
    effective_format(args, cfg, OutputFormat::Json, false)?;
    let pulse = require_pulse(cfg)?;
    let cal = resolve_calibration(&cfg.device, pulse, &cfg.solver, args.refine)?;
    let summary = format!(
        "omega_cx = {:.6} MHz; tone c1 = {:.6}, c3 = {:.6e} MHz^-2; method = {}",
        cal.omega_cx_amp,
        cal.target_tone_coeffs.0,
        cal.target_tone_coeffs.1,
        match cal.method {
            Method::Perturbative => "perturbative",
            Method::Refined => "refined",
        }
    );
    Ok((json_payload(&cal), summary))
}

#[derive(Debug, Serialize)]
struct RatesReport {
    /// Reporting convention: 2·|ω_zz⁽⁰⁾| in kHz.
    static_zz_khz: f64,
    w_zz0_rad_ns: f64,
    /// Closed-form rate coefficients (normalized per drive power).
    coefficients: std::collections::BTreeMap<&'static str, f64>,
    /// Effective rates (rad/ns) on the flat top of the configured pulse.
    #[serde(skip_serializing_if = "Option::is_none")]
    flat_top_rates: Option<std::collections::BTreeMap<&'static str, f64>>,
}

fn cmd_rates(cfg: &RunConfig, args: &CommonArgs) -> Result<(Vec<u8>, String), RunError> {
    effective_format(args, cfg, OutputFormat::Json, false)?;
    let zz0 = rates::static_zz0(&cfg.device)?;
    let coefficients = rates::coefficient_table(&cfg.device)?;
    let flat_top_rates = match &cfg.pulse {
        None => None,
        Some(pulse) => {
            let cal = resolve_calibration(&cfg.device, pulse, &cfg.solver, args.refine)?;
            let (c1, c3) = cal.target_tone_coeffs;
            let w = cal.omega_cx_amp;
            let drive = rates::DriveAt::from_mhz(w, 0.0, c1 * w + c3 * w.powi(3), 0.0, 0.0, 0.0);
            Some(rates::rates_up_to_order(&cfg.device, &drive, 4)?.as_map())
        }
    };
    let report = RatesReport {
        static_zz_khz: 2.0 * rad_ns_to_mhz(zz0).abs() * 1e3,
        w_zz0_rad_ns: zz0,
        coefficients,
        flat_top_rates,
    };
    let summary = format!("static ZZ (2|w_zz0|) = {:.2} kHz", report.static_zz_khz);
    Ok((json_payload(&report), summary))
}

#[derive(Debug, Serialize)]
struct EstimateEntry {
    p_time: f64,
    p_freq: f64,
}

#[derive(Debug, Serialize)]
struct EstimateReport {
    omega_cx_mhz: f64,
    type1: EstimateEntry,
    type2: EstimateEntry,
    type3: EstimateEntry,
}

fn cmd_estimate(cfg: &RunConfig, args: &CommonArgs) -> Result<(Vec<u8>, String), RunError> {
    effective_format(args, cfg, OutputFormat::Json, false)?;
    let pulse = require_pulse(cfg)?;
    let cal = resolve_calibration(&cfg.device, pulse, &cfg.solver, args.refine)?;
    let control = pulse.to_pulse_config(cal.omega_cx_amp).build()?;
    let p = &cfg.device;
    let (tau_p, d, ac) = (pulse.tau_p_ns, p.delta_ct_ang(), p.alpha_c_ang());
    let type1 = EstimateEntry {
        p_time: offres::p_type1_time(&control, d, tau_p),
        p_freq: offres::p_freq_domain(&control, &TransitionSpec::type1(p)?, tau_p, None)?,
    };
    let type2 = EstimateEntry {
        p_time: offres::p_type2_time(&control, d, ac, tau_p),
        p_freq: offres::p_freq_domain(&control, &TransitionSpec::type2(p)?, tau_p, None)?,
    };
    let type3 = EstimateEntry {
        p_time: offres::p_type3_time(&control, d + ac, tau_p),
        p_freq: offres::p_freq_domain(&control, &TransitionSpec::type3(p)?, tau_p, None)?,
    };
    let summary = format!(
        "P1 = {:.3e}; P2 = {:.3e}; P3 = {:.3e} (time domain)",
        type1.p_time, type2.p_time, type3.p_time
    );
    let report =
        EstimateReport { omega_cx_mhz: cal.omega_cx_amp, type1, type2, type3 };
    Ok((json_payload(&report), summary))
}

#[derive(Debug, Serialize)]
struct SpectrumRow {
    omega_mhz: f64,
    magnitude_mhz_ns: f64,
}

fn cmd_spectrum(cfg: &RunConfig, args: &CommonArgs) -> Result<(Vec<u8>, String), RunError> {
    let fmt = effective_format(args, cfg, OutputFormat::Csv, true)?;
    let pulse = require_pulse(cfg)?;
    // The spectrum is a property of the pulse shape alone; default to unit
    // amplitude when none is configured (magnitudes simply scale).
    let amp = pulse.amp_mhz.unwrap_or(1.0);
    let control = pulse.to_pulse_config(amp).build()?;
    let grid_mhz = cfg
        .sweep
        .unwrap_or(GridSpec { start: 0.0, stop: 100.0, step: 0.5 })
        .points();
    let grid_ang: Vec<f64> = grid_mhz.iter().map(|&f| mhz_to_rad_ns(f)).collect();
    let values = pulses::spectrum(&control, &grid_ang)?;
    let rows: Vec<SpectrumRow> = grid_mhz
        .iter()
        .zip(values.iter())
        .map(|(&omega_mhz, v)| SpectrumRow { omega_mhz, magnitude_mhz_ns: v.norm() })
        .collect();
    let best = rows
        .iter()
        .min_by(|a, b| a.magnitude_mhz_ns.total_cmp(&b.magnitude_mhz_ns))
        .expect("grid is non-empty");
    let summary = format!(
        "minimum |spectrum| = {:.4e} MHz*ns at {:.1} MHz",
        best.magnitude_mhz_ns, best.omega_mhz
    );
    let payload = match fmt {
        OutputFormat::Json => json_payload(&rows),
        OutputFormat::Csv => {
            let mut text = String::from("omega_mhz,magnitude_mhz_ns\n");
            for r in &rows {
                text.push_str(&experiments::fmt_sig(r.omega_mhz));
                text.push(',');
                text.push_str(&experiments::fmt_sig(r.magnitude_mhz_ns));
                text.push('\n');
            }
            text.into_bytes()
        }
    };
    Ok((payload, summary))
}

#[derive(Debug, Clone, Copy)]
enum SweepAxis {
    Rise,
    Drag,
    Amplitude,
    GateTime,
}

fn cmd_sweep(
    axis: SweepAxis,
    cfg: &RunConfig,
    args: &CommonArgs,
) -> Result<(Vec<u8>, String), RunError> {
    let fmt = effective_format(args, cfg, OutputFormat::Csv, true)?;
    let pulse = require_pulse(cfg)?;
    let opts = SweepOptions { dt: cfg.solver.dt, refine: args.refine, workers: args.workers };
    let grid = |default: Vec<f64>| cfg.sweep.map_or(default, |g| g.points());
    let p = &cfg.device;
    let drag = pulse.drag_delta_mhz;
    let (axis_name, result): (&str, SweepResult) = match axis {
        SweepAxis::Rise => (
            "tau_r",
            experiments::sweep_rise_time(
                p,
                pulse.tau_p_ns,
                &grid(experiments::default_tau_r_grid()),
                drag,
                &opts,
            )?,
        ),
        SweepAxis::Drag => (
            "1/Delta_D",
            experiments::sweep_drag(
                p,
                pulse.tau_p_ns,
                pulse.tau_r_ns,
                &grid(experiments::default_inv_delta_d_grid()),
                &opts,
            )?,
        ),
        SweepAxis::Amplitude => (
            "omega_cx",
            experiments::sweep_amplitude(
                p,
                pulse.tau_r_ns,
                &grid(experiments::default_amplitude_grid()),
                drag,
                &opts,
            )?,
        ),
        SweepAxis::GateTime => (
            "tau_p",
            experiments::sweep_gate_time(
                p,
                pulse.tau_r_ns,
                &grid(experiments::default_tau_p_grid()),
                drag,
                &opts,
            )?,
        ),
    };
    let n_ok = result.records.iter().filter(|r| r.is_ok()).count();
    let summary = match result.argmin {
        Some((v, e)) => format!(
            "{n_ok}/{} points ok; best {axis_name} = {v}; e_pop = {e:.4e}",
            result.records.len()
        ),
        None => format!("0/{} points ok; no successful points", result.records.len()),
    };
    let payload = match fmt {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            experiments::write_csv(&mut buf, &result.records)
                .expect("writing to memory cannot fail");
            buf
        }
        OutputFormat::Json => {
            let mut buf = Vec::new();
            experiments::write_json(&mut buf, &result.records)
                .expect("writing to memory cannot fail");
            buf
        }
    };
    Ok((payload, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const DEVICE: &str = "[device]\n\
                          omega_c_mhz = 5050.0\n\
                          omega_t_mhz = 5000.0\n\
                          alpha_c_mhz = -340.0\n\
                          alpha_t_mhz = -340.0\n\
                          j_mhz = 3.5\n";

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let text = format!("{DEVICE}[pulse]\ntau_p_ns = 200.0\ntau_r_ns = 26.0\n");
        let cfg = parse_config_str(&text).unwrap();
        assert_eq!(cfg.device.levels_c(), 5);
        assert_eq!(cfg.device.levels_t(), 3);
        assert_abs_diff_eq!(cfg.device.delta_ct(), 50.0, epsilon = 1e-12);
        assert_eq!(cfg.device.omega_d(), cfg.device.omega_t());
        let pulse = cfg.pulse.as_ref().unwrap();
        assert!(pulse.amp_mhz.is_none());
        assert_eq!(pulse.tau_r_ns, 26.0);
        assert!(pulse.sigma_r_ns.is_none());
        assert_eq!(cfg.solver.dt, 0.01);
        assert_eq!(cfg.solver.expm_tol, 1e-12);
        assert!(cfg.sweep.is_none());
        assert!(cfg.output.path.is_none() && cfg.output.format.is_none());
        // sigma_r defaults to tau_r/2 when the envelope is built.
        let env = pulse.to_pulse_config(10.0).build().unwrap();
        assert_eq!(env.base().value_real(100.0), 10.0);
    }

    #[test]
    fn small_level_cutoffs_are_rejected() {
        let text = format!("{DEVICE}levels_c = 2\n");
        match parse_config_str(&text) {
            Err(e @ ConfigError::Domain(CrError::InvalidDevice(_))) => {
                assert_eq!(e.code(), "model.invalid_device");
            }
            other => panic!("expected InvalidDevice, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let text = format!("{DEVICE}[pulse]\ntau_p_ns = 200.0\ntau_r_ns = 26.0\nampl_mhz = 18.0\n");
        match parse_config_str(&text) {
            Err(e @ ConfigError::UnknownKey { .. }) => {
                assert_eq!(e.code(), "cli.unknown_key");
                let msg = e.to_string();
                assert!(msg.contains("ampl_mhz"), "offender not named: {msg}");
            }
            other => panic!("expected UnknownKey, got {other:?}"),
        }
    }

    #[test]
    fn missing_required_key_is_named() {
        let text = format!("{DEVICE}[pulse]\ntau_r_ns = 26.0\n");
        match parse_config_str(&text) {
            Err(ConfigError::MissingKey { key, .. }) => assert_eq!(key, "tau_p_ns"),
            other => panic!("expected MissingKey, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_the_line() {
        let text = "[device]\nomega_c_mhz = \n";
        match parse_config_str(text) {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected Parse, got {other:?}"),
        }
    }

    #[test]
    fn device_table_is_required() {
        match parse_config_str("[pulse]\ntau_p_ns = 200.0\ntau_r_ns = 26.0\n") {
            Err(e @ ConfigError::MissingTable("device")) => {
                assert_eq!(e.code(), "cli.missing_table");
            }
            other => panic!("expected MissingTable(device), got {other:?}"),
        }
    }

    #[test]
    fn grid_spec_is_validated_and_inclusive() {
        let text = format!("{DEVICE}[sweep]\nstart = 4.0\nstop = 40.0\nstep = 1.0\n");
        let cfg = parse_config_str(&text).unwrap();
        let pts = cfg.sweep.unwrap().points();
        assert_eq!(pts.len(), 37);
        assert_eq!(pts[0], 4.0);
        assert_eq!(pts[36], 40.0);

        let bad = format!("{DEVICE}[sweep]\nstart = 4.0\nstop = 40.0\nstep = 0.0\n");
        match parse_config_str(&bad) {
            Err(ConfigError::InvalidValue { key: "sweep.step", .. }) => {}
            other => panic!("expected InvalidValue, got {other:?}"),
        }
    }

    #[test]
    fn output_format_strings_are_checked() {
        let ok = format!("{DEVICE}[output]\npath = \"out.csv\"\nformat = \"csv\"\n");
        let cfg = parse_config_str(&ok).unwrap();
        assert_eq!(cfg.output.format, Some(OutputFormat::Csv));
        assert_eq!(cfg.output.path.as_deref(), Some(Path::new("out.csv")));

        let bad = format!("{DEVICE}[output]\nformat = \"yaml\"\n");
        match parse_config_str(&bad) {
            Err(ConfigError::InvalidValue { key: "output.format", .. }) => {}
            other => panic!("expected InvalidValue, got {other:?}"),
        }
    }

    #[test]
    fn unreadable_file_is_an_io_error() {
        let missing = Path::new("/nonexistent/cr-sim-config.toml");
        match parse_config(missing) {
            Err(e @ ConfigError::Io { .. }) => assert_eq!(e.code(), "cli.io"),
            other => panic!("expected Io, got {other:?}"),
        }
    }
}
