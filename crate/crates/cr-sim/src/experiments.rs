//! Gate-level experiments: the ideal-CNOT target, transition-probability
//! maps, the average population error Ē_pop, and calibrated sweeps over rise
//! time, DRAG coefficient, drive amplitude and gate time, with CSV/JSON
//! writers.
//!
//! Sweep points are independent jobs executed on a thread pool. Per-point
//! calibration or propagation failures are recorded in the `status` column
//! rather than aborting the sweep, and results are ordered by swept value
//! regardless of completion order. Sweep-level argument errors (empty grid,
//! zero DRAG parameter, ambiguous dressing) fail fast instead, because no
//! point could succeed.

use std::io;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::calibrate::{self, CalibrationResult, Method};
use crate::error::CrError;
use crate::model::{self, DeviceParams, DressedBasis};
use crate::propagator::{self, MagnusConfig};
use crate::pulses::{DragEnvelope, PolynomialTone, SquareGaussian};

/// The four computational initial states in row order |00⟩, |01⟩, |10⟩, |11⟩
/// (control-major).
pub const COMPUTATIONAL: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

/// Ideal CNOT on the dressed computational subspace, rows and columns
/// ordered as [`COMPUTATIONAL`]: identity on the control-0 block, X on the
/// control-1 block.
#[derive(Debug, Clone, PartialEq)]
pub struct CnotTarget {
    matrix: Array2<C64>,
}

impl CnotTarget {
    pub fn ideal() -> Self {
        let mut m = Array2::zeros((4, 4));
        let one = C64::from(1.0);
        m[[0, 0]] = one;
        m[[1, 1]] = one;
        m[[2, 3]] = one;
        m[[3, 2]] = one;
        Self { matrix: m }
    }

    /// 4×4 unitary in the [`COMPUTATIONAL`] ordering.
    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }
}

impl Default for CnotTarget {
    fn default() -> Self {
        Self::ideal()
    }
}

/// Full transition-probability map P(mn→pq) = |⟨p̃q̃|Û|m̃ñ⟩|²: rows are the
/// four computational initial states in [`COMPUTATIONAL`] order, columns all
/// final states of the truncated space in flat label order (including
/// leakage levels), so each row sums to 1 by unitarity.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    levels_c: usize,
    levels_t: usize,
    probs: Array2<f64>,
}

impl ProbabilityMap {
    /// P(from → to); `from` must be computational, `to` may be any label.
    pub fn get(&self, from: (usize, usize), to: (usize, usize)) -> f64 {
        let row = COMPUTATIONAL
            .iter()
            .position(|&s| s == from)
            .expect("initial state must be computational");
        assert!(
            to.0 < self.levels_c && to.1 < self.levels_t,
            "final label ({},{}) outside the ({},{}) truncation",
            to.0,
            to.1,
            self.levels_c,
            self.levels_t
        );
        self.probs[[row, to.0 * self.levels_t + to.1]]
    }

    pub fn levels_c(&self) -> usize {
        self.levels_c
    }

    pub fn levels_t(&self) -> usize {
        self.levels_t
    }

    /// Raw 4×dim matrix; column index is the flat final label.
    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    /// Total probability per initial state (1 within roundoff for unitary Û).
    pub fn row_sums(&self) -> [f64; 4] {
        let mut sums = [0.0; 4];
        for (row, sum) in sums.iter_mut().enumerate() {
            *sum = self.probs.row(row).sum();
        }
        sums
    }
}

impl Serialize for ProbabilityMap {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("ProbabilityMap", 3)?;
        st.serialize_field("levels_c", &self.levels_c)?;
        st.serialize_field("levels_t", &self.levels_t)?;
        let rows: Vec<Vec<f64>> = self.probs.rows().into_iter().map(|r| r.to_vec()).collect();
        st.serialize_field("probs", &rows)?;
        st.end()
    }
}

/// Transition probabilities of `u` (a propagator on the full truncated
/// space, bare basis) between dressed states.
pub fn transition_probabilities(u: &Array2<C64>, basis: &DressedBasis) -> ProbabilityMap {
    let dim = basis.dim();
    assert_eq!(u.nrows(), dim, "propagator dimension does not match the basis");
    let vdag = basis.states().t().mapv(|z| z.conj());
    let mut probs = Array2::zeros((4, dim));
    for (row, &(mc, mt)) in COMPUTATIONAL.iter().enumerate() {
        let evolved = u.dot(&basis.state(mc, mt));
        let amps = vdag.dot(&evolved);
        probs.row_mut(row).assign(&amps.mapv(|z| z.norm_sqr()));
    }
    ProbabilityMap { levels_c: basis.levels_c(), levels_t: basis.levels_t(), probs }
}

/// Average population error
/// Ē_pop = 1 − (1/4) Σ_{j,k∈{0,1}} |⟨j̃k̃| Û_CNOT† Û |j̃k̃⟩|².
///
/// Only the moduli of the diagonal of Û_CNOT†Û enter, so the metric is
/// insensitive to diagonal phase errors; it isolates population transfer.
/// Ideal CNOT → 0; identity → 0.5 (CNOT's diagonal is (1,1,0,0)).
pub fn avg_population_error(u: &Array2<C64>, target: &CnotTarget, basis: &DressedBasis) -> f64 {
    // M_ab = ⟨ã|Û|b̃⟩ over the computational subspace.
    let mut m = Array2::<C64>::zeros((4, 4));
    for (b, &(bc, bt)) in COMPUTATIONAL.iter().enumerate() {
        let evolved = u.dot(&basis.state(bc, bt));
        for (a, &(ac, at)) in COMPUTATIONAL.iter().enumerate() {
            let amp: C64 = basis
                .state(ac, at)
                .iter()
                .zip(evolved.iter())
                .map(|(x, y)| x.conj() * y)
                .sum();
            m[[a, b]] = amp;
        }
    }
    let tdag = target.matrix().t().mapv(|z| z.conj());
    let d = tdag.dot(&m);
    1.0 - 0.25 * (0..4).map(|a| d[[a, a]].norm_sqr()).sum::<f64>()
}

/// One sweep point. Successful points satisfy: probabilities ∈ [0, 1], e_pop
/// ∈ [0, 1], probability rows summing to 1 within 1e-9. Failed points carry
/// the machine-readable error code in `status` and NaN in every numeric
/// field that was never computed.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    /// Which axis was swept (e.g. "tau_r_ns", "drag_inv_delta_d").
    pub sweep_name: String,
    pub sweep_value: f64,
    /// Calibrated control flat-top amplitude (MHz).
    pub omega_cx_mhz: f64,
    /// Cancellation-tone flat-top amplitude c₁Ω + c₃Ω³ (MHz).
    pub omega_tx_mhz: f64,
    /// DRAG coefficient 1/Δ_D (MHz⁻¹); 0 when DRAG is off.
    pub drag_inv_delta_d: f64,
    /// Δ_D (MHz) when DRAG is on.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drag_delta_mhz: Option<f64>,
    pub p_00_to_01: f64,
    pub p_00_to_10: f64,
    pub p_00_to_20: f64,
    pub p_10_to_20: f64,
    pub p_10_to_11: f64,
    pub e_pop: f64,
    /// "ok" or a module-qualified error code.
    pub status: String,
    /// Full P(mn→pq) map on success.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<ProbabilityMap>,
}

impl SweepRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn failed(sweep_name: &str, sweep_value: f64, inv_dd: f64, status: String) -> Self {
        Self {
            sweep_name: sweep_name.to_string(),
            sweep_value,
            omega_cx_mhz: f64::NAN,
            omega_tx_mhz: f64::NAN,
            drag_inv_delta_d: inv_dd,
            drag_delta_mhz: drag_delta_of(inv_dd),
            p_00_to_01: f64::NAN,
            p_00_to_10: f64::NAN,
            p_00_to_20: f64::NAN,
            p_10_to_20: f64::NAN,
            p_10_to_11: f64::NAN,
            e_pop: f64::NAN,
            status,
            probabilities: None,
        }
    }
}

/// Sweep output: records in grid order, plus `(swept value, e_pop)` of the
/// smallest e_pop among the points that completed.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    pub argmin: Option<(f64, f64)>,
}

impl SweepResult {
    fn from_records(records: Vec<SweepRecord>) -> Self {
        let argmin = records
            .iter()
            .filter(|r| r.is_ok() && r.e_pop.is_finite())
            .min_by(|a, b| a.e_pop.total_cmp(&b.e_pop))
            .map(|r| (r.sweep_value, r.e_pop));
        Self { records, argmin }
    }
}

/// Execution options shared by all sweeps.
#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    /// Magnus step (ns).
    pub dt: f64,
    /// Numerically refine each point's calibration (slow). The refinement
    /// objective is the in-phase conditional-π error; a DRAG quadrature is
    /// layered onto the refined amplitudes afterwards. Applies only where
    /// the amplitude is solved rather than swept.
    pub refine: bool,
    /// Worker threads; 0 uses the process-wide default pool.
    pub workers: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { dt: 0.01, refine: false, workers: 0 }
    }
}

/// Rise-time grid 4–40 ns, step 1 ns.
pub fn default_tau_r_grid() -> Vec<f64> {
    (4..=40).map(f64::from).collect()
}

/// DRAG-coefficient grid 1/Δ_D ∈ [−0.05, +0.02] MHz⁻¹, step 5·10⁻⁴, built
/// so the DRAG-off point 1/Δ_D = 0 is hit exactly.
pub fn default_inv_delta_d_grid() -> Vec<f64> {
    (-100..=40).map(|n| f64::from(n) * 5e-4).collect()
}

/// Gate-time grid 160–280 ns, step 2 ns.
pub fn default_tau_p_grid() -> Vec<f64> {
    (0..=60).map(|n| 160.0 + 2.0 * f64::from(n)).collect()
}

/// Drive-amplitude grid 8–36 MHz, step 0.5 MHz — within the π-condition's
/// solvable range at the detunings of interest.
pub fn default_amplitude_grid() -> Vec<f64> {
    (0..=56).map(|n| 8.0 + 0.5 * f64::from(n)).collect()
}

/// Rise-time sweep at fixed gate time: each point solves the π condition at
/// (τ_p, τ_r), propagates the calibrated pulse and records probabilities and
/// e_pop. `drag_delta` is an optional fixed Δ_D in MHz (None = no DRAG).
pub fn sweep_rise_time(
    p: &DeviceParams,
    tau_p: f64,
    tau_r_grid: &[f64],
    drag_delta: Option<f64>,
    opts: &SweepOptions,
) -> Result<SweepResult, CrError> {
    let inv_dd = inverse_drag(drag_delta)?;
    let ctx = PointCtx::new(p, opts)?;
    let records = run_sweep(tau_r_grid, opts.workers, |tau_r| {
        run_point(&ctx, "tau_r_ns", tau_r, tau_p, tau_r, inv_dd, None)
    })?;
    Ok(SweepResult::from_records(records))
}

/// DRAG-coefficient sweep at fixed gate and rise time; the swept value is
/// 1/Δ_D in MHz⁻¹ and 0 means DRAG off.
pub fn sweep_drag(
    p: &DeviceParams,
    tau_p: f64,
    tau_r: f64,
    inv_delta_d_grid: &[f64],
    opts: &SweepOptions,
) -> Result<SweepResult, CrError> {
    let ctx = PointCtx::new(p, opts)?;
    let records = run_sweep(inv_delta_d_grid, opts.workers, |inv| {
        run_point(&ctx, "drag_inv_delta_d", inv, tau_p, tau_r, inv, None)
    })?;
    Ok(SweepResult::from_records(records))
}

/// Drive-amplitude sweep: the gate time is re-solved per amplitude so every
/// point still satisfies the π condition. Amplitudes outside the solvable
/// range (zero, or beyond the cubic turnover) are recorded with an error
/// status rather than aborting.
pub fn sweep_amplitude(
    p: &DeviceParams,
    tau_r: f64,
    amp_grid: &[f64],
    drag_delta: Option<f64>,
    opts: &SweepOptions,
) -> Result<SweepResult, CrError> {
    let inv_dd = inverse_drag(drag_delta)?;
    let ctx = PointCtx::new(p, opts)?;
    let records = run_sweep(amp_grid, opts.workers, |amp| {
        match calibrate::solve_pi_gate_time(p, amp, tau_r) {
            Ok(tau_p) => run_point(&ctx, "omega_cx_mhz", amp, tau_p, tau_r, inv_dd, Some(amp)),
            Err(e) => SweepRecord::failed("omega_cx_mhz", amp, inv_dd, e.code().to_string()),
        }
    })?;
    Ok(SweepResult::from_records(records))
}

/// Gate-time sweep: the amplitude is re-solved per τ_p.
pub fn sweep_gate_time(
    p: &DeviceParams,
    tau_r: f64,
    tau_p_grid: &[f64],
    drag_delta: Option<f64>,
    opts: &SweepOptions,
) -> Result<SweepResult, CrError> {
    let inv_dd = inverse_drag(drag_delta)?;
    let ctx = PointCtx::new(p, opts)?;
    let records = run_sweep(tau_p_grid, opts.workers, |tau_p| {
        run_point(&ctx, "tau_p_ns", tau_p, tau_p, tau_r, inv_dd, None)
    })?;
    Ok(SweepResult::from_records(records))
}

/// The amplitude and gate-time sweeps with a shared fixed DRAG setting.
pub fn sweep_amplitude_and_gate_time(
    p: &DeviceParams,
    drag_delta: Option<f64>,
    tau_r: f64,
    amp_grid: &[f64],
    tau_p_grid: &[f64],
    opts: &SweepOptions,
) -> Result<(SweepResult, SweepResult), CrError> {
    Ok((
        sweep_amplitude(p, tau_r, amp_grid, drag_delta, opts)?,
        sweep_gate_time(p, tau_r, tau_p_grid, drag_delta, opts)?,
    ))
}

/// Per-sweep shared state (dressing and target are the same for every
/// point).
struct PointCtx<'a> {
    p: &'a DeviceParams,
    basis: DressedBasis,
    target: CnotTarget,
    opts: &'a SweepOptions,
}

impl<'a> PointCtx<'a> {
    fn new(p: &'a DeviceParams, opts: &'a SweepOptions) -> Result<Self, CrError> {
        let h_s = model::build_static_hamiltonian(p);
        let basis = model::dressed_basis(p, &h_s)?;
        Ok(Self { p, basis, target: CnotTarget::ideal(), opts })
    }
}

fn inverse_drag(drag_delta: Option<f64>) -> Result<f64, CrError> {
    match drag_delta {
        None => Ok(0.0),
        Some(d) if d == 0.0 || !d.is_finite() => Err(CrError::ZeroDragParameter),
        Some(d) => Ok(1.0 / d),
    }
}

fn drag_delta_of(inv_dd: f64) -> Option<f64> {
    if inv_dd == 0.0 { None } else { Some(1.0 / inv_dd) }
}

/// Run the grid on the requested pool; `par_iter().map().collect()` keeps
/// the output in grid order regardless of completion order.
fn run_sweep<F>(grid: &[f64], workers: usize, f: F) -> Result<Vec<SweepRecord>, CrError>
where
    F: Fn(f64) -> SweepRecord + Sync,
{
    if grid.is_empty() {
        return Err(CrError::EmptyGrid);
    }
    let work = || grid.par_iter().map(|&v| f(v)).collect();
    match (workers > 0)
        .then(|| rayon::ThreadPoolBuilder::new().num_threads(workers).build())
    {
        Some(Ok(pool)) => Ok(pool.install(work)),
        // Pool construction fails only on thread-spawn exhaustion; fall back
        // to the shared pool rather than losing the sweep.
        _ => Ok(work()),
    }
}

fn run_point(
    ctx: &PointCtx,
    sweep_name: &str,
    sweep_value: f64,
    tau_p: f64,
    tau_r: f64,
    inv_dd: f64,
    omega_override: Option<f64>,
) -> SweepRecord {
    match run_point_inner(ctx, tau_p, tau_r, inv_dd, omega_override) {
        Ok((omega_cx, omega_tx, map, e_pop)) => {
            let sums = map.row_sums();
            let status = if sums.iter().all(|s| (s - 1.0).abs() <= 1e-9) {
                "ok".to_string()
            } else {
                "experiments.row_sum_violation".to_string()
            };
            SweepRecord {
                sweep_name: sweep_name.to_string(),
                sweep_value,
                omega_cx_mhz: omega_cx,
                omega_tx_mhz: omega_tx,
                drag_inv_delta_d: inv_dd,
                drag_delta_mhz: drag_delta_of(inv_dd),
                p_00_to_01: map.get((0, 0), (0, 1)).clamp(0.0, 1.0),
                p_00_to_10: map.get((0, 0), (1, 0)).clamp(0.0, 1.0),
                p_00_to_20: map.get((0, 0), (2, 0)).clamp(0.0, 1.0),
                p_10_to_20: map.get((1, 0), (2, 0)).clamp(0.0, 1.0),
                p_10_to_11: map.get((1, 0), (1, 1)).clamp(0.0, 1.0),
                e_pop: e_pop.clamp(0.0, 1.0),
                status,
                probabilities: Some(map),
            }
        }
        Err(e) => SweepRecord::failed(sweep_name, sweep_value, inv_dd, e.code().to_string()),
    }
}

fn run_point_inner(
    ctx: &PointCtx,
    tau_p: f64,
    tau_r: f64,
    inv_dd: f64,
    omega_override: Option<f64>,
) -> Result<(f64, f64, ProbabilityMap, f64), CrError> {
    let cal = match omega_override {
        Some(amp) => CalibrationResult {
            omega_cx_amp: amp,
            target_tone_coeffs: calibrate::cancellation_coeffs(ctx.p)?,
            residual_ix_plus_zx: None,
            method: Method::Perturbative,
            converged: true,
        },
        None => {
            let seed = calibrate::calibrate_perturbative(ctx.p, tau_p, tau_r)?;
            if ctx.opts.refine {
                let mut rc = calibrate::RefineConfig::new(tau_p, tau_r);
                rc.dt = ctx.opts.dt;
                calibrate::refine_numeric(ctx.p, &seed, &rc)?
            } else {
                seed
            }
        }
    };
    let base = SquareGaussian::new(cal.omega_cx_amp, tau_p, tau_r)?;
    let control = DragEnvelope::from_inverse(base, inv_dd);
    let (c1, c3) = cal.target_tone_coeffs;
    let tone = PolynomialTone::new(base, c1, c3);
    let mcfg = MagnusConfig { dt: ctx.opts.dt, ..MagnusConfig::default() };
    let u = propagator::propagate(ctx.p, &control, Some(&tone), &mcfg)?;
    let map = transition_probabilities(&u, &ctx.basis);
    let e_pop = avg_population_error(&u, &ctx.target, &ctx.basis);
    let w = cal.omega_cx_amp;
    Ok((w, c1 * w + c3 * w.powi(3), map, e_pop))
}

/// Fixed CSV schema, one record per row.
pub const CSV_HEADER: &str = "sweep_name,sweep_value,omega_cx_mhz,omega_tx_mhz,\
                              drag_inv_delta_d,p00_01,p00_10,p00_20,p10_20,p10_11,e_pop,status";

/// 12-significant-digit scientific notation; non-finite values print as
/// "nan" so the output stays machine-parseable.
pub fn fmt_sig(x: f64) -> String {
    if x.is_finite() { format!("{x:.11e}") } else { "nan".to_string() }
}

/// Write records as CSV under [`CSV_HEADER`]. Formatting is deterministic:
/// the same records always produce byte-identical output.
pub fn write_csv<W: io::Write>(w: &mut W, records: &[SweepRecord]) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.sweep_name,
            fmt_sig(r.sweep_value),
            fmt_sig(r.omega_cx_mhz),
            fmt_sig(r.omega_tx_mhz),
            fmt_sig(r.drag_inv_delta_d),
            fmt_sig(r.p_00_to_01),
            fmt_sig(r.p_00_to_10),
            fmt_sig(r.p_00_to_20),
            fmt_sig(r.p_10_to_20),
            fmt_sig(r.p_10_to_11),
            fmt_sig(r.e_pop),
            r.status,
        )?;
    }
    Ok(())
}

/// JSON mirror of the CSV rows: the full records, including the probability
/// maps, as a pretty-printed array.
pub fn write_json<W: io::Write>(w: &mut W, records: &[SweepRecord]) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, records).map_err(io::Error::from)?;
    writeln!(w)
}
