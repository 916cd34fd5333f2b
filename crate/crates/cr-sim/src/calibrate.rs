//! Direct-CNOT calibration: the target cancellation tone, the π-condition
//! control amplitude, and an optional simulation-in-the-loop refinement.
//!
//! A direct CNOT requires an identity on the target when the control is in
//! |0_c⟩ (ω_ix(t) + ω_zx(t) = 0 at every instant) and a conditional π
//! rotation when it is in |1_c⟩ (∫(ω_ix − ω_zx) dt = π). Perturbatively the
//! first condition fixes the target tone as a pointwise odd-polynomial map
//! of the control envelope,
//!
//!   Ω_tx(t) = (J/Δ_ct) Ω_cx(t) − [α_c J / (2Δ_ct³(2Δ_ct+α_c))] Ω_cx³(t),
//!
//! and the second fixes the flat-top amplitude Ω through
//!
//!   g₁ Ω (τ_p − s₁) − g₃ Ω³ (τ_p − s₃) = π,
//!
//! with g₁ = 2α_cJ/[Δ_ct(Δ_ct+α_c)], g₃ the corresponding cubic coefficient,
//! and s_n the reduced ramp areas of the pulse shape. `refine_numeric`
//! closes the remaining gap with a two-parameter derivative-free search in
//! the scale of the tone and of the control amplitude, scoring candidates by
//! full propagation.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::CrError;
use crate::model::{self, DeviceParams};
use crate::propagator::{self, MagnusConfig};
use crate::pulses::{self, PolynomialTone, SquareGaussian};
use crate::units::MHZ_TO_RAD_NS;

/// Energy denominators closer to zero than this (MHz) poison the
/// perturbative formulas; same guard limit as the rate expressions.
const POLE_LIMIT_MHZ: f64 = 1.0;

/// How a [`CalibrationResult`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Perturbative,
    Refined,
}

/// Calibrated direct-CNOT drive parameters.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationResult {
    /// Flat-top control amplitude (MHz).
    pub omega_cx_amp: f64,
    /// (linear, cubic) coefficients mapping Ω_cx(t) to the target tone;
    /// the linear one is dimensionless, the cubic one is MHz⁻².
    pub target_tone_coeffs: (f64, f64),
    /// Measured ε = P(|00⟩→|01⟩) + (1 − P(|10⟩→|11⟩)) for the calibrated
    /// drive; `None` when no simulation has been run.
    pub residual_ix_plus_zx: Option<f64>,
    pub method: Method,
    /// Whether the refinement loop met its improvement threshold before the
    /// iteration cap. Trivially true for purely perturbative results.
    pub converged: bool,
}

fn guard(context: &'static str, value_mhz: f64) -> Result<(), CrError> {
    if !(value_mhz.abs() >= POLE_LIMIT_MHZ) {
        return Err(CrError::NearPole { context, value_mhz, limit_mhz: POLE_LIMIT_MHZ });
    }
    Ok(())
}

/// (linear, cubic) cancellation-tone coefficients (dimensionless, MHz⁻²).
///
/// The map is form-invariant under the MHz ↔ rad/ns unit change, so it is
/// evaluated directly on MHz device parameters.
pub fn cancellation_coeffs(p: &DeviceParams) -> Result<(f64, f64), CrError> {
    let (d, ac, j) = (p.delta_ct(), p.alpha_c(), p.j());
    guard("delta_ct", d)?;
    guard("2 delta_ct + alpha_c", 2.0 * d + ac)?;
    let c1 = j / d;
    let c3 = -ac * j / (2.0 * d.powi(3) * (2.0 * d + ac));
    Ok((c1, c3))
}

/// Pointwise cancellation tone Ω_tx = (J/Δ_ct)Ω_cx − [α_cJ/(2Δ_ct³(2Δ_ct+α_c))]Ω_cx³
/// (MHz in, MHz out).
pub fn cancellation_tone(p: &DeviceParams, omega_cx: f64) -> Result<f64, CrError> {
    let (c1, c3) = cancellation_coeffs(p)?;
    Ok(c1 * omega_cx + c3 * omega_cx.powi(3))
}

/// The cancellation tone as a full envelope: the pointwise map applied to
/// the control shape, so the tone inherits the ramps.
pub fn target_tone(p: &DeviceParams, control: SquareGaussian) -> Result<PolynomialTone, CrError> {
    let (c1, c3) = cancellation_coeffs(p)?;
    Ok(PolynomialTone::new(control, c1, c3))
}

/// g₁ = 2α_cJ/[Δ_ct(Δ_ct+α_c)] (dimensionless).
fn g1(d: f64, ac: f64, j: f64) -> f64 {
    2.0 * ac * j / (d * (d + ac))
}

/// g₃ = (9Δ³+15Δ²α_c+11Δα_c²+3α_c³)α_c²J / [Δ³(Δ+α_c)³(2Δ+α_c)(2Δ+3α_c)]
/// (inverse frequency squared).
fn g3(d: f64, ac: f64, j: f64) -> f64 {
    (9.0 * d.powi(3) + 15.0 * d.powi(2) * ac + 11.0 * d * ac.powi(2) + 3.0 * ac.powi(3))
        * ac.powi(2)
        * j
        / (d.powi(3) * (d + ac).powi(3) * (2.0 * d + ac) * (2.0 * d + 3.0 * ac))
}

/// π-condition residual g₁Ω·t₁ − g₃Ω³·t₃ − target (radians) with frequency
/// inputs in rad/ns and effective durations t_n = τ_p − s_n in ns.
/// Dimensionless: invariant under frequencies × κ, durations / κ.
fn pi_residual(d: f64, ac: f64, j: f64, omega: f64, t1: f64, t3: f64, target: f64) -> f64 {
    g1(d, ac, j) * omega * t1 - g3(d, ac, j) * omega.powi(3) * t3 - target
}

/// Solve the π condition for the flat-top control amplitude (MHz) of a
/// square-Gaussian pulse of gate time `tau_p` and rise time `tau_r` (ns).
///
/// The smallest positive root of the cubic is returned (larger roots are
/// over-rotation branches), found by bracketed bisection polished with
/// safeguarded Newton steps to |residual| < 1e-10·π. Fails with
/// `NoRootInBracket` when the gate time is too short for a π rotation below
/// the turnover amplitude.
pub fn solve_pi_condition(p: &DeviceParams, tau_p: f64, tau_r: f64) -> Result<f64, CrError> {
    let template = SquareGaussian::new(1.0, tau_p, tau_r)?;
    let s1 = pulses::reduced_ramp_area(&template, 1);
    let s3 = pulses::reduced_ramp_area(&template, 3);
    let (dm, acm) = (p.delta_ct(), p.alpha_c());
    guard("delta_ct", dm)?;
    guard("delta_ct + alpha_c", dm + acm)?;
    guard("2 delta_ct + alpha_c", 2.0 * dm + acm)?;
    guard("2 delta_ct + 3 alpha_c", 2.0 * dm + 3.0 * acm)?;
    let (d, ac, j) = (p.delta_ct_ang(), p.alpha_c_ang(), p.j_ang());

    // Rotation coefficients of the whole pulse: θ(Ω) = a₁Ω − a₃Ω³. Orient so
    // the linear term rotates in the +π sense; the opposite sign is a
    // drive-phase flip and does not change the amplitude magnitude.
    let (t1, t3) = (tau_p - s1, tau_p - s3);
    let sign = if g1(d, ac, j) * t1 >= 0.0 { 1.0 } else { -1.0 };
    let (a1, a3) = (sign * g1(d, ac, j) * t1, sign * g3(d, ac, j) * t3);
    let r = |w: f64| sign * pi_residual(d, ac, j, w, t1, t3, 0.0) - PI;

    // Bracket (0, hi]: up to the turnover when the cubic bends the rotation
    // back down, else past the linear-inversion point.
    let hi = if a3 > 0.0 { (a1 / (3.0 * a3)).sqrt() } else { 2.0 * PI / a1 };
    if !hi.is_finite() || r(hi) < 0.0 {
        return Err(CrError::NoRootInBracket {
            omega_max_mhz: if hi.is_finite() { hi / MHZ_TO_RAD_NS } else { 0.0 },
        });
    }

    // First sign change on a coarse scan bounds the smallest positive root.
    let n_scan = 256;
    let (mut lo, mut hi_b) = (0.0, hi);
    for k in 1..=n_scan {
        let w = hi * k as f64 / n_scan as f64;
        if r(w) >= 0.0 {
            hi_b = w;
            break;
        }
        lo = w;
    }

    // Bisection with Newton steps accepted only while they stay bracketed.
    let mut w = 0.5 * (lo + hi_b);
    for _ in 0..200 {
        let rv = r(w);
        if rv.abs() < 1e-10 * PI {
            return Ok(w / MHZ_TO_RAD_NS);
        }
        if rv > 0.0 {
            hi_b = w;
        } else {
            lo = w;
        }
        let slope = a1 - 3.0 * a3 * w * w;
        let newton = w - rv / slope;
        w = if slope != 0.0 && newton > lo && newton < hi_b {
            newton
        } else {
            0.5 * (lo + hi_b)
        };
    }
    // A bracketed cubic converges well inside the iteration budget; reaching
    // here means the residual stalled at rounding level, which still
    // satisfies the bracket.
    debug_assert!(r(w).abs() < 1e-9 * PI);
    Ok(w / MHZ_TO_RAD_NS)
}

/// Solve the π condition for the gate time (ns) at a given flat-top control
/// amplitude (MHz) and rise time — the inverse of [`solve_pi_condition`],
/// used by amplitude sweeps that keep the gate calibrated per point. The
/// condition is linear in τ_p:
///
///   τ_p = (π + g₁Ω s₁ − g₃Ω³ s₃) / (g₁Ω − g₃Ω³).
///
/// Fails with `NoRootInBracket` when the flat-top rotation rate is not
/// positive (zero amplitude, or amplitude beyond the cubic turnover) and
/// with `InvalidPulse` when the solved gate time cannot hold both ramps.
pub fn solve_pi_gate_time(
    p: &DeviceParams,
    omega_cx_amp: f64,
    tau_r: f64,
) -> Result<f64, CrError> {
    // The reduced areas do not depend on τ_p as long as the ramps fit; the
    // template gate time only needs to be long enough to be valid.
    let template = SquareGaussian::new(1.0, 4.0 * tau_r.max(1.0), tau_r)?;
    let s1 = pulses::reduced_ramp_area(&template, 1);
    let s3 = pulses::reduced_ramp_area(&template, 3);
    let (dm, acm) = (p.delta_ct(), p.alpha_c());
    guard("delta_ct", dm)?;
    guard("delta_ct + alpha_c", dm + acm)?;
    guard("2 delta_ct + alpha_c", 2.0 * dm + acm)?;
    guard("2 delta_ct + 3 alpha_c", 2.0 * dm + 3.0 * acm)?;
    let (d, ac, j) = (p.delta_ct_ang(), p.alpha_c_ang(), p.j_ang());

    let (g1v, g3v) = (g1(d, ac, j), g3(d, ac, j));
    let sign = if g1v >= 0.0 { 1.0 } else { -1.0 };
    let w = omega_cx_amp * MHZ_TO_RAD_NS;
    let (b1, b3) = (sign * g1v * w, sign * g3v * w.powi(3));
    let rate = b1 - b3; // flat-top rotation rate (rad/ns)
    if !(rate > 0.0) {
        // Largest amplitude with a positive rate: the zero of g1 w - g3 w^3.
        let ratio = g1v / g3v;
        let omega_max_mhz = if ratio > 0.0 { ratio.sqrt() / MHZ_TO_RAD_NS } else { 0.0 };
        return Err(CrError::NoRootInBracket { omega_max_mhz });
    }
    let tau_p = (PI + b1 * s1 - b3 * s3) / rate;
    if !(tau_p >= 2.0 * tau_r) {
        return Err(CrError::InvalidPulse(format!(
            "pi-condition gate time {tau_p:.3} ns cannot hold two {tau_r} ns ramps"
        )));
    }
    Ok(tau_p)
}

/// Perturbative calibration: π-condition amplitude plus cancellation-tone
/// coefficients. No simulation is run, so the residual is unmeasured.
pub fn calibrate_perturbative(
    p: &DeviceParams,
    tau_p: f64,
    tau_r: f64,
) -> Result<CalibrationResult, CrError> {
    Ok(CalibrationResult {
        omega_cx_amp: solve_pi_condition(p, tau_p, tau_r)?,
        target_tone_coeffs: cancellation_coeffs(p)?,
        residual_ix_plus_zx: None,
        method: Method::Perturbative,
        converged: true,
    })
}

/// Configuration of the numeric refinement loop.
#[derive(Debug, Clone)]
pub struct RefineConfig {
    /// Gate time (ns).
    pub tau_p: f64,
    /// Rise time (ns).
    pub tau_r: f64,
    /// Magnus step (ns).
    pub dt: f64,
    /// Stop once a round of probes improves ε by less than this.
    pub tol: f64,
    /// Outer iteration cap of the coordinate search.
    pub max_iters: usize,
}

impl RefineConfig {
    pub fn new(tau_p: f64, tau_r: f64) -> Self {
        Self { tau_p, tau_r, dt: 0.02, tol: 1e-8, max_iters: 50 }
    }
}

/// ε = P(|00⟩→|01⟩) + (1 − P(|10⟩→|11⟩)) of the calibrated drive — the
/// deviation from (identity | control 0⟩, π rotation | control 1⟩) — from a
/// full propagation, with states read in the dressed basis.
pub fn conditional_pi_error(
    p: &DeviceParams,
    omega_cx_amp: f64,
    tone_coeffs: (f64, f64),
    cfg: &RefineConfig,
) -> Result<f64, CrError> {
    let control = SquareGaussian::new(omega_cx_amp, cfg.tau_p, cfg.tau_r)?;
    let tone = PolynomialTone::new(control, tone_coeffs.0, tone_coeffs.1);
    let mcfg = MagnusConfig { dt: cfg.dt, ..MagnusConfig::default() };
    let u = propagator::propagate(p, &control, Some(&tone), &mcfg)?;
    let h_s = model::build_static_hamiltonian(p);
    let basis = model::dressed_basis(p, &h_s)?;
    let p_00_01 = dressed_probability(&u, &basis, (0, 0), (0, 1));
    let p_10_11 = dressed_probability(&u, &basis, (1, 0), (1, 1));
    Ok((p_00_01 + (1.0 - p_10_11)).max(0.0))
}

/// |⟨to| U |from⟩|² between dressed states, with U in the bare basis.
pub fn dressed_probability(
    u: &ndarray::Array2<C64>,
    basis: &model::DressedBasis,
    from: (usize, usize),
    to: (usize, usize),
) -> f64 {
    let ua = u.dot(&basis.state(from.0, from.1));
    basis
        .state(to.0, to.1)
        .iter()
        .zip(ua.iter())
        .map(|(b, y)| b.conj() * y)
        .sum::<C64>()
        .norm_sqr()
}

/// Refine a calibration by a two-parameter derivative-free search over
/// (target-tone scale, control-amplitude scale), minimizing the
/// conditional-π error with a monotone acceptance rule. Terminates when a
/// round's improvement drops below `cfg.tol` (or the probe step underflows);
/// at the iteration cap the best-so-far result is returned with
/// `converged: false`.
pub fn refine_numeric(
    p: &DeviceParams,
    initial: &CalibrationResult,
    cfg: &RefineConfig,
) -> Result<CalibrationResult, CrError> {
    let (c1, c3) = initial.target_tone_coeffs;
    let amp = initial.omega_cx_amp;
    let eval = |x: [f64; 2]| -> Result<f64, CrError> {
        conditional_pi_error(p, amp * x[1], (c1 * x[0], c3 * x[0]), cfg)
    };
    let (x, best, converged) = coordinate_search(&eval, [1.0, 1.0], cfg.tol, cfg.max_iters)?;
    Ok(CalibrationResult {
        omega_cx_amp: amp * x[1],
        target_tone_coeffs: (c1 * x[0], c3 * x[0]),
        residual_ix_plus_zx: Some(best),
        method: Method::Refined,
        converged,
    })
}

/// Coordinate (pattern) search over two positive scale factors: probe ± the
/// current step in each coordinate, accept only improvements, then chain
/// pattern moves along the accepted displacement so diagonal valleys do not
/// stall the axis probes; halve the step when a full round fails. Returns
/// (best point, best value, converged).
fn coordinate_search(
    f: &dyn Fn([f64; 2]) -> Result<f64, CrError>,
    start: [f64; 2],
    tol: f64,
    max_iters: usize,
) -> Result<([f64; 2], f64, bool), CrError> {
    const STEP_FLOOR: f64 = 1e-7;
    let mut x = start;
    let mut fx = f(x)?;
    let mut step = 0.05;
    for _ in 0..max_iters {
        let before = fx;
        let base = x;
        for k in 0..2 {
            for sgn in [1.0, -1.0] {
                let mut trial = x;
                trial[k] += sgn * step;
                if trial[k] <= 0.0 {
                    continue;
                }
                let ft = f(trial)?;
                if ft < fx {
                    x = trial;
                    fx = ft;
                    break;
                }
            }
        }
        if fx < before {
            let dir = [x[0] - base[0], x[1] - base[1]];
            loop {
                let trial = [x[0] + dir[0], x[1] + dir[1]];
                if trial[0] <= 0.0 || trial[1] <= 0.0 {
                    break;
                }
                let ft = f(trial)?;
                if ft < fx {
                    x = trial;
                    fx = ft;
                } else {
                    break;
                }
            }
            if before - fx < tol {
                return Ok((x, fx, true));
            }
        } else {
            step *= 0.5;
            if step < STEP_FLOOR {
                return Ok((x, fx, true));
            }
        }
    }
    Ok((x, fx, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulses::Envelope;
    use crate::units::mhz_to_rad_ns;
    use approx::assert_abs_diff_eq;

    const TAU_P: f64 = 200.0;
    const TAU_R: f64 = 26.0;

    #[test]
    fn cancellation_zero_in_zero_out() {
        let p = DeviceParams::standard(50.0);
        assert_eq!(cancellation_tone(&p, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn cancellation_reference_coefficients() {
        // J = 3.5, Δ_ct = 50, α_c = −340 MHz: linear 3.5/50 = 0.07 and cubic
        // 1190/(2·125000·(−240)) = −1.98333…e-5 MHz⁻², negative because
        // 2Δ_ct + α_c < 0.
        let p = DeviceParams::standard(50.0);
        let (c1, c3) = cancellation_coeffs(&p).unwrap();
        assert_abs_diff_eq!(c1, 0.07, epsilon = 1e-15);
        assert!(c3 < 0.0);
        assert_abs_diff_eq!(c3, -1.9833333333333333e-5, epsilon = 1e-18);
    }

    #[test]
    fn cancellation_guards_fire() {
        let near_zero = DeviceParams::standard(0.2);
        match cancellation_tone(&near_zero, 10.0) {
            Err(CrError::NearPole { context, .. }) => assert_eq!(context, "delta_ct"),
            other => panic!("expected NearPole, got {other:?}"),
        }
        // 2Δ_ct + α_c = 0 at Δ_ct = 170 MHz.
        let collision = DeviceParams::standard(170.3);
        match cancellation_tone(&collision, 10.0) {
            Err(CrError::NearPole { context, value_mhz, .. }) => {
                assert_eq!(context, "2 delta_ct + alpha_c");
                assert_abs_diff_eq!(value_mhz, 0.6, epsilon = 1e-9);
            }
            other => panic!("expected NearPole, got {other:?}"),
        }
    }

    #[test]
    fn tone_envelope_is_pointwise_map() {
        let p = DeviceParams::standard(50.0);
        let control = SquareGaussian::new(18.0, TAU_P, TAU_R).unwrap();
        let tone = target_tone(&p, control).unwrap();
        for t in [0.0, 9.0, TAU_R, 55.0, TAU_P - 13.0, TAU_P] {
            let want = cancellation_tone(&p, control.value_real(t)).unwrap();
            assert_abs_diff_eq!(tone.value_real(t), want, epsilon = 1e-18);
        }
        assert_eq!(tone.breakpoints(), control.breakpoints());
    }

    #[test]
    fn pi_residual_is_units_invariant() {
        let (d, ac, j) = (0.3141, -2.1363, 0.022);
        let (w, t1, t3) = (0.11, 178.0, 185.0);
        let base = pi_residual(d, ac, j, w, t1, t3, PI);
        for kappa in [1e-3, 2.5, 640.0] {
            let scaled = pi_residual(
                kappa * d,
                kappa * ac,
                kappa * j,
                kappa * w,
                t1 / kappa,
                t3 / kappa,
                PI,
            );
            assert_abs_diff_eq!(scaled, base, epsilon = 1e-12 * base.abs().max(1.0));
        }
    }

    #[test]
    fn pi_root_satisfies_equation_and_linear_seed_is_close() {
        let p = DeviceParams::standard(50.0);
        let omega = solve_pi_condition(&p, TAU_P, TAU_R).unwrap();
        assert!((15.0..25.0).contains(&omega), "root {omega} MHz");

        let template = SquareGaussian::new(1.0, TAU_P, TAU_R).unwrap();
        let s1 = pulses::reduced_ramp_area(&template, 1);
        let s3 = pulses::reduced_ramp_area(&template, 3);
        let (d, ac, j) = (p.delta_ct_ang(), p.alpha_c_ang(), p.j_ang());
        let res = pi_residual(d, ac, j, mhz_to_rad_ns(omega), TAU_P - s1, TAU_P - s3, PI);
        assert!(res.abs() < 1e-10 * PI, "residual {res:e}");

        // Linear inversion Ω = πΔ(Δ+α_c)/[2α_cJ(τ_p−s₁)] seeds the solver;
        // the cubic correction moves the root by under 15% here.
        let seed = PI * d * (d + ac) / (2.0 * ac * j * (TAU_P - s1)) / MHZ_TO_RAD_NS;
        assert!((omega - seed).abs() / omega < 0.15, "seed {seed}, root {omega}");
    }

    #[test]
    fn pi_doubling_tau_p_roughly_halves_amplitude() {
        // The linear-limit amplitude is exactly ∝ 1/(τ_p − s₁); with the
        // ramp offset s₁ fixed by τ_r and the cubic correction shrinking at
        // the lower amplitude, doubling τ_p cuts the root to roughly half.
        let p = DeviceParams::standard(50.0);
        let w200 = solve_pi_condition(&p, 200.0, TAU_R).unwrap();
        let w400 = solve_pi_condition(&p, 400.0, TAU_R).unwrap();
        let ratio = w200 / w400;
        assert!((1.9..=2.5).contains(&ratio), "ratio {ratio}");

        // At long gate times the cubic term dies out and the root approaches
        // the linear inversion itself.
        let tau_long = 3200.0;
        let template = SquareGaussian::new(1.0, tau_long, TAU_R).unwrap();
        let s1 = pulses::reduced_ramp_area(&template, 1);
        let (d, ac, j) = (p.delta_ct_ang(), p.alpha_c_ang(), p.j_ang());
        let seed = PI / (g1(d, ac, j) * (tau_long - s1)) / MHZ_TO_RAD_NS;
        let root = solve_pi_condition(&p, tau_long, TAU_R).unwrap();
        assert_abs_diff_eq!(root, seed, epsilon = 5e-3 * seed);
    }

    #[test]
    fn pi_no_root_when_gate_too_short() {
        let p = DeviceParams::standard(50.0);
        match solve_pi_condition(&p, 8.0, 3.0) {
            Err(CrError::NoRootInBracket { omega_max_mhz }) => {
                assert!(omega_max_mhz.is_finite() && omega_max_mhz > 0.0);
            }
            other => panic!("expected NoRootInBracket, got {other:?}"),
        }
    }

    #[test]
    fn gate_time_solve_inverts_amplitude_solve() {
        // Solving the π condition for τ_p at the amplitude that solves it for
        // Ω must return the original gate time.
        let p = DeviceParams::standard(50.0);
        let omega = solve_pi_condition(&p, TAU_P, TAU_R).unwrap();
        let tau_p = solve_pi_gate_time(&p, omega, TAU_R).unwrap();
        assert_abs_diff_eq!(tau_p, TAU_P, epsilon = 1e-8 * TAU_P);
    }

    #[test]
    fn gate_time_solve_rejects_degenerate_amplitudes() {
        let p = DeviceParams::standard(50.0);
        // Zero amplitude: no rotation, no finite gate time.
        match solve_pi_gate_time(&p, 0.0, TAU_R) {
            Err(CrError::NoRootInBracket { omega_max_mhz }) => {
                assert!(omega_max_mhz > 0.0, "largest usable amplitude should be reported");
            }
            other => panic!("expected NoRootInBracket, got {other:?}"),
        }
        // Past the zero of g₁Ω − g₃Ω³ the flat-top rotation runs backwards.
        match solve_pi_gate_time(&p, 70.0, TAU_R) {
            Err(CrError::NoRootInBracket { omega_max_mhz }) => {
                assert!(
                    (60.0..70.0).contains(&omega_max_mhz),
                    "rate zero expected just above the turnover, got {omega_max_mhz}"
                );
            }
            other => panic!("expected NoRootInBracket, got {other:?}"),
        }
        // Very long ramps accumulate more than π on their own, so the solved
        // flat-top length goes negative.
        match solve_pi_gate_time(&p, 37.0, 110.0) {
            Err(CrError::InvalidPulse(_)) => {}
            other => panic!("expected InvalidPulse, got {other:?}"),
        }
    }

    #[test]
    fn pi_guards_fire() {
        for (delta, context) in [
            (340.4, "delta_ct + alpha_c"),
            (170.3, "2 delta_ct + alpha_c"),
            (510.2, "2 delta_ct + 3 alpha_c"),
        ] {
            let p = DeviceParams::standard(delta);
            match solve_pi_condition(&p, TAU_P, TAU_R) {
                Err(CrError::NearPole { context: got, .. }) => assert_eq!(got, context),
                other => panic!("Δ_ct = {delta}: expected NearPole, got {other:?}"),
            }
        }
    }

    #[test]
    fn coefficients_match_rate_table() {
        // g₁ and g₃ are combinations of the first- and third-order ZX rate
        // coefficients: g₁ = −2·k1_zx_cx/J·J, g₃ = 2J·c_zx3_1.
        for delta in [50.0, 100.0] {
            let p = DeviceParams::standard(delta);
            let t = crate::rates::coefficient_table(&p).unwrap();
            let (d, ac, j) = (p.delta_ct_ang(), p.alpha_c_ang(), p.j_ang());
            assert_abs_diff_eq!(
                g1(d, ac, j),
                -2.0 * t["k1_zx_cx"],
                epsilon = 1e-12 * g1(d, ac, j).abs()
            );
            assert_abs_diff_eq!(
                g3(d, ac, j),
                2.0 * j * t["c_zx3_1"],
                epsilon = 1e-12 * g3(d, ac, j).abs()
            );
        }
    }

    #[test]
    fn perturbative_result_shape() {
        let p = DeviceParams::standard(50.0);
        let cal = calibrate_perturbative(&p, TAU_P, TAU_R).unwrap();
        assert!(cal.omega_cx_amp.is_finite() && cal.omega_cx_amp > 0.0);
        assert_eq!(cal.method, Method::Perturbative);
        assert!(cal.residual_ix_plus_zx.is_none());
        assert!(cal.converged);
    }

    #[test]
    fn coordinate_search_keeps_optimum_fixed() {
        // Zero gradient at the start point: the probes never improve, the
        // steps shrink to the floor, and the input comes back unchanged.
        let f = |x: [f64; 2]| -> Result<f64, CrError> {
            Ok((x[0] - 1.0).powi(2) + 2.0 * (x[1] - 1.0).powi(2) + 0.25)
        };
        let (x, fx, converged) = coordinate_search(&f, [1.0, 1.0], 1e-8, 50).unwrap();
        assert_eq!(x, [1.0, 1.0]);
        assert_eq!(fx, 0.25);
        assert!(converged);
    }

    #[test]
    fn coordinate_search_finds_quadratic_minimum() {
        let f = |x: [f64; 2]| -> Result<f64, CrError> {
            let (u, v) = (x[0] - 1.3, x[1] - 0.8);
            Ok(5.0 + u * u + 2.0 * v * v + 0.3 * u * v)
        };
        let (x, fx, converged) = coordinate_search(&f, [1.0, 1.0], 1e-12, 200).unwrap();
        assert!(converged);
        assert!(fx < 5.0 + 1e-6, "best {fx}");
        assert!((x[0] - 1.3).abs() < 5e-3 && (x[1] - 0.8).abs() < 5e-3, "{x:?}");
    }

    #[test]
    fn refinement_improves_delta_100_seed() {
        // A shorter gate raises the amplitude to ~44 MHz, where the O(Ω⁵)
        // truncation of the perturbative conditions leaves the seed a real
        // correctable rotation error well above the leakage floor.
        let (tau_p, tau_r) = (160.0, 26.0);
        let p = DeviceParams::standard(100.0);
        let cfg = RefineConfig::new(tau_p, tau_r);
        let seed = calibrate_perturbative(&p, tau_p, tau_r).unwrap();
        let eps0 =
            conditional_pi_error(&p, seed.omega_cx_amp, seed.target_tone_coeffs, &cfg).unwrap();
        let refined = refine_numeric(&p, &seed, &cfg).unwrap();
        let eps1 = refined.residual_ix_plus_zx.unwrap();
        assert_eq!(refined.method, Method::Refined);
        assert!(eps1 <= eps0, "monotone acceptance violated: {eps1:e} > {eps0:e}");
        assert!(eps0 / eps1 >= 2.0, "improvement only {:.2}x", eps0 / eps1);
    }

    #[test]
    fn closure_direct_cnot_at_reference_device() {
        let p = DeviceParams::standard(50.0);
        let cfg = RefineConfig::new(TAU_P, TAU_R);
        let seed = calibrate_perturbative(&p, TAU_P, TAU_R).unwrap();
        let refined = refine_numeric(&p, &seed, &cfg).unwrap();

        let control = SquareGaussian::new(refined.omega_cx_amp, TAU_P, TAU_R).unwrap();
        let tone = PolynomialTone::new(
            control,
            refined.target_tone_coeffs.0,
            refined.target_tone_coeffs.1,
        );
        let mcfg = MagnusConfig { dt: cfg.dt, ..MagnusConfig::default() };
        let u = propagator::propagate(&p, &control, Some(&tone), &mcfg).unwrap();
        let h_s = model::build_static_hamiltonian(&p);
        let basis = model::dressed_basis(&p, &h_s).unwrap();
        let p_00_01 = dressed_probability(&u, &basis, (0, 0), (0, 1));
        let p_10_11 = dressed_probability(&u, &basis, (1, 0), (1, 1));
        assert!(p_00_01 < 1e-3, "P(00→01) = {p_00_01:e}");
        assert!(p_10_11 > 1.0 - 5e-3, "P(10→11) = {p_10_11}");
    }
}
