//! Off-resonant transition-probability estimators for the driven control
//! transmon: time-domain overlap integrals, their frequency-domain twins,
//! the ramp/flat interference decomposition, the adiabatic boundary series,
//! and analytic DRAG conditions, plus a brute-force three-level reference
//! integrator used as an oracle.
//!
//! Three error channels are tracked, labeled by the control-state transition
//! they excite:
//!
//!   Type 1: |0_c⟩ → |1_c⟩, detuning Δ_ct;
//!   Type 2: |0_c⟩ → |2_c⟩ (two-photon), detunings (Δ_ct, Δ_ct + α_c);
//!   Type 3: |1_c⟩ → |2_c⟩, detuning Δ_ct + α_c.
//!
//! All detunings in this module are angular (rad/ns); envelopes remain in
//! linear MHz and are converted at the boundary. Estimated probabilities are
//! perturbative and meaningful only while ≪ 1. Every estimator takes the
//! envelope as an argument, so sweep drivers can recalibrate the drive per
//! grid point and pass the recalibrated pulse in.

use std::f64::consts::{PI, SQRT_2};

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::CrError;
use crate::model::DeviceParams;
use crate::propagator;
use crate::pulses::{DifferentiableEnvelope, Envelope, SquareGaussian};
use crate::quad;
use crate::units::{mhz_to_rad_ns, rad_ns_to_mhz, MHZ_TO_RAD_NS};

/// Off-resonant error channel label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    Type1,
    Type2,
    Type3,
}

/// An error channel together with its relevant detuning(s) in rad/ns.
///
/// Constructors guard against the frequency collisions at
/// Δ_ct ∈ {0, −α_c/2, −α_c} where the corresponding estimator has a pole
/// (limit 1 MHz, as elsewhere).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransitionSpec {
    Type1 { delta: f64 },
    Type2 { delta: f64, delta_plus_alpha: f64 },
    Type3 { delta_plus_alpha: f64 },
}

const POLE_LIMIT_MHZ: f64 = 1.0;

fn collision_guard(context: &'static str, value_ang: f64) -> Result<(), CrError> {
    if value_ang.abs() < mhz_to_rad_ns(POLE_LIMIT_MHZ) {
        Err(CrError::NearPole {
            context,
            value_mhz: rad_ns_to_mhz(value_ang),
            limit_mhz: POLE_LIMIT_MHZ,
        })
    } else {
        Ok(())
    }
}

impl TransitionSpec {
    pub fn type1(p: &DeviceParams) -> Result<Self, CrError> {
        let d = p.delta_ct_ang();
        collision_guard("delta_ct", d)?;
        Ok(TransitionSpec::Type1 { delta: d })
    }

    pub fn type2(p: &DeviceParams) -> Result<Self, CrError> {
        let d = p.delta_ct_ang();
        let da = d + p.alpha_c_ang();
        collision_guard("delta_ct", d)?;
        collision_guard("delta_ct + alpha_c", da)?;
        collision_guard("2 delta_ct + alpha_c", d + da)?;
        Ok(TransitionSpec::Type2 { delta: d, delta_plus_alpha: da })
    }

    pub fn type3(p: &DeviceParams) -> Result<Self, CrError> {
        let da = p.delta_ct_ang() + p.alpha_c_ang();
        collision_guard("delta_ct + alpha_c", da)?;
        Ok(TransitionSpec::Type3 { delta_plus_alpha: da })
    }

    pub fn for_kind(kind: TransitionKind, p: &DeviceParams) -> Result<Self, CrError> {
        match kind {
            TransitionKind::Type1 => Self::type1(p),
            TransitionKind::Type2 => Self::type2(p),
            TransitionKind::Type3 => Self::type3(p),
        }
    }

    pub fn kind(&self) -> TransitionKind {
        match self {
            TransitionSpec::Type1 { .. } => TransitionKind::Type1,
            TransitionSpec::Type2 { .. } => TransitionKind::Type2,
            TransitionSpec::Type3 { .. } => TransitionKind::Type3,
        }
    }

    /// Kernel pole locations on the ω axis (rad/ns): ω = −Δ for each
    /// relevant detuning.
    fn poles(&self) -> Vec<f64> {
        match *self {
            TransitionSpec::Type1 { delta } => vec![-delta],
            TransitionSpec::Type2 { delta, delta_plus_alpha } => {
                vec![-delta, -delta_plus_alpha]
            }
            TransitionSpec::Type3 { delta_plus_alpha } => vec![-delta_plus_alpha],
        }
    }
}

// ----------------------------------------------------------------------
// Time-domain estimators
// ----------------------------------------------------------------------

/// ∫_a^b Ω(t) e^{iδt} dt with Ω converted to rad/ns, split at envelope
/// breakpoints, adaptive to 1e-8 relative.
fn overlap(pulse: &dyn Envelope, delta: f64, a: f64, b: f64) -> C64 {
    let mut cuts: Vec<f64> = vec![a];
    cuts.extend(pulse.breakpoints().into_iter().filter(|&t| t > a && t < b));
    cuts.push(b);
    let f = |t: f64| pulse.value(t) * MHZ_TO_RAD_NS * C64::new(0.0, delta * t).exp();
    let mut total = C64::from(0.0);
    for pair in cuts.windows(2) {
        // The absolute floor keeps the panel budget finite when a segment
        // integrates to (near) zero, e.g. a whole number of oscillations.
        total += quad::integrate(&f, pair[0], pair[1], 1e-8, 1e-13).value;
    }
    total
}

/// P(|0_c⟩→|1_c⟩) ≈ ¼ |∫₀^{τ_p} Ω_c(t) e^{iΔ_ct t} dt|².
pub fn p_type1_time(pulse: &dyn Envelope, delta: f64, tau_p: f64) -> f64 {
    0.25 * overlap(pulse, delta, 0.0, tau_p).norm_sqr()
}

/// P(|1_c⟩→|2_c⟩) ≈ ½ |∫₀^{τ_p} Ω_c(t) e^{i(Δ_ct+α_c) t} dt|².
pub fn p_type3_time(pulse: &dyn Envelope, delta_plus_alpha: f64, tau_p: f64) -> f64 {
    0.5 * overlap(pulse, delta_plus_alpha, 0.0, tau_p).norm_sqr()
}

/// Cubic Hermite read-out of a cumulative integral sampled on a uniform grid,
/// using the exact integrand as the derivative at the cell ends.
fn hermite_lookup(
    t0: f64,
    h: f64,
    vals: &[C64],
    deriv: &dyn Fn(f64) -> C64,
    t: f64,
) -> C64 {
    let n = vals.len() - 1;
    let x = (t - t0) / h;
    let k = (x.floor() as isize).clamp(0, n as isize - 1) as usize;
    let s = x - k as f64;
    let tk = t0 + k as f64 * h;
    let (d0, d1) = (deriv(tk), deriv(tk + h));
    let h00 = (2.0 * s - 3.0) * s * s + 1.0;
    let h10 = ((s - 2.0) * s + 1.0) * s;
    let h01 = (3.0 - 2.0 * s) * s * s;
    let h11 = (s - 1.0) * s * s;
    vals[k] * h00 + d0 * (h10 * h) + vals[k + 1] * h01 + d1 * (h11 * h)
}

/// P(|0_c⟩→|2_c⟩) ≈ (1/32) |∫₀^{τ_p}dt′ ∫₀^{t′}dt″ Ω(t′)Ω(t″)
/// [e^{iΔ₃t′}e^{iΔ₁t″} − e^{iΔ₁t′}e^{iΔ₃t″}]|² with Δ₁ = Δ_ct,
/// Δ₃ = Δ_ct + α_c (two-photon interference bracket).
///
/// The inner integrals A_k(t′) = ∫₀^{t′}Ω e^{iΔ_k t″}dt″ are precomputed on a
/// fine uniform grid; the outer integral is adaptive (1e-6 relative) with the
/// inner values read out by cubic Hermite interpolation.
pub fn p_type2_time(pulse: &dyn Envelope, delta: f64, alpha_c: f64, tau_p: f64) -> f64 {
    let d1 = delta;
    let d3 = delta + alpha_c;
    let rate = d1.abs().max(d3.abs()).max(2.0 * PI / tau_p);
    let mut n = ((tau_p * rate * 64.0 / (2.0 * PI)).ceil() as usize).clamp(2000, 400_000);
    n += n % 2;
    let f1 = |t: f64| pulse.value(t) * MHZ_TO_RAD_NS * C64::new(0.0, d1 * t).exp();
    let f3 = |t: f64| pulse.value(t) * MHZ_TO_RAD_NS * C64::new(0.0, d3 * t).exp();
    let (_, a1) = quad::cumulative(&f1, 0.0, tau_p, n);
    let (_, a3) = quad::cumulative(&f3, 0.0, tau_p, n);
    let h = tau_p / n as f64;

    let outer = |t: f64| {
        let w = pulse.value(t) * MHZ_TO_RAD_NS;
        let e1 = C64::new(0.0, d1 * t).exp();
        let e3 = C64::new(0.0, d3 * t).exp();
        let a1_t = hermite_lookup(0.0, h, &a1, &f1, t);
        let a3_t = hermite_lookup(0.0, h, &a3, &f3, t);
        w * (e3 * a1_t - e1 * a3_t)
    };
    let mut cuts: Vec<f64> = vec![0.0];
    cuts.extend(
        pulse
            .breakpoints()
            .into_iter()
            .filter(|&t| t > 0.0 && t < tau_p),
    );
    cuts.push(tau_p);
    let mut i2 = C64::from(0.0);
    for pair in cuts.windows(2) {
        i2 += quad::integrate(&outer, pair[0], pair[1], 1e-6, 0.0).value;
    }
    i2.norm_sqr() / 32.0
}

// ----------------------------------------------------------------------
// Frequency-domain estimators
// ----------------------------------------------------------------------

/// E(x) = ∫₀^τ e^{ixt} dt = (e^{ixτ} − 1)/(ix); entire in x, evaluated by
/// series below |xτ| < 1e-4. This is the regular (principal-value-free)
/// kernel: the apparent pole at x = 0 cancels against the vanishing bracket.
fn e_kernel(x: f64, tau: f64) -> C64 {
    let y = x * tau;
    if y.abs() < 1e-4 {
        let iy = C64::new(0.0, y);
        C64::from(tau)
            * (C64::from(1.0) + iy * 0.5 + iy * iy * (1.0 / 6.0) + iy * iy * iy * (1.0 / 24.0))
    } else {
        (C64::new(0.0, y).exp() - 1.0) / C64::new(0.0, x)
    }
}

/// Moment integrals M_m(u) = ∫₀^τ tᵐ e^{iut} dt for m = 0..=6, by upward
/// recurrence for |uτ| ≥ 0.5 and by power series below.
fn moments(u: f64, tau: f64) -> [C64; 7] {
    let mut m = [C64::from(0.0); 7];
    if (u * tau).abs() >= 0.5 {
        let iu = C64::new(0.0, u);
        let e = C64::new(0.0, u * tau).exp();
        m[0] = (e - 1.0) / iu;
        let mut tp = 1.0;
        for k in 1..=6 {
            tp *= tau;
            m[k] = (e * tp - m[k - 1] * k as f64) / iu;
        }
    } else {
        let z = C64::new(0.0, u * tau);
        for (mm, slot) in m.iter_mut().enumerate() {
            let mut pk = C64::from(1.0);
            let mut kfact = 1.0;
            let mut sum = C64::from(0.0);
            for k in 0..=16usize {
                if k > 0 {
                    pk *= z;
                    kfact *= k as f64;
                }
                sum += pk / (kfact * (mm + k + 1) as f64);
            }
            *slot = sum * tau.powi(mm as i32 + 1);
        }
    }
    m
}

/// g(u, x) = [E(u+x) − E(u)]/x with the removable x → 0 limit taken by the
/// moment series g = Σ_{m≥1} x^{m−1} iᵐ M_m(u)/m!.
fn g_kernel(u: f64, x: f64, tau: f64) -> C64 {
    if (x * tau).abs() < 0.1 {
        let m = moments(u, tau);
        let i = C64::new(0.0, 1.0);
        let mut ip = i;
        let mut xp = 1.0;
        let mut fact = 1.0;
        let mut s = C64::from(0.0);
        for mm in 1..=6usize {
            fact *= mm as f64;
            s += ip * m[mm] * (xp / fact);
            xp *= x;
            ip *= i;
        }
        s
    } else {
        (e_kernel(u + x, tau) - e_kernel(u, tau)) / x
    }
}

/// Effective spectral bandwidth of the pulse: 2π over the first breakpoint
/// segment (the ramp length for a square-Gaussian envelope).
fn bandwidth(pulse: &dyn Envelope) -> f64 {
    let bps = pulse.breakpoints();
    let ramp = if bps.len() >= 2 { (bps[1] - bps[0]).abs() } else { pulse.tau_p() };
    2.0 * PI / ramp.max(1e-9)
}

fn simpson_weight(k: usize, n: usize) -> f64 {
    if k == 0 || k == n {
        1.0
    } else if k % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

/// Ω̃(ω) = ∫ Ω(t)e^{−iωt} dt (MHz·ns) by a Filon-type rule: the envelope is
/// interpolated piecewise-quadratically on a fixed grid per breakpoint
/// segment and each cell is integrated against the phase factor exactly
/// through the cell moments ∫ uᵐe^{−iωu}du. Both cost and accuracy are
/// independent of |ω| (only the smooth envelope is ever sampled), which is
/// what makes wide spectral windows affordable.
fn spectrum_at_fast(pulse: &dyn Envelope, omega: f64) -> C64 {
    let bps = pulse.breakpoints();
    let mut acc = C64::from(0.0);
    for pair in bps.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let len = b - a;
        if len <= 0.0 {
            continue;
        }
        let n = 96usize;
        let h = len / n as f64;
        // Cell moments over [0, 2h], shared by every cell of the segment.
        let m = moments(-omega, 2.0 * h);
        let (m0, m1, m2) = (m[0], m[1], m[2]);
        let r = C64::new(0.0, -omega * 2.0 * h).exp();
        let mut ph = C64::new(0.0, -omega * a).exp();
        let inv_h = 1.0 / h;
        let mut seg = C64::from(0.0);
        let mut j = 0;
        while j < n {
            let f0 = pulse.value(a + j as f64 * h);
            let f1 = pulse.value(a + (j + 1) as f64 * h);
            let f2 = pulse.value(a + (j + 2) as f64 * h);
            let c1 = (f1 * 4.0 - f0 * 3.0 - f2) * (0.5 * inv_h);
            let c2 = (f0 - f1 * 2.0 + f2) * (0.5 * inv_h * inv_h);
            seg += ph * (f0 * m0 + c1 * m1 + c2 * m2);
            ph *= r;
            j += 2;
        }
        acc += seg;
    }
    acc
}

/// Single-photon frequency-domain overlap amplitude over one ω interval:
/// (1/2π)∫_lo^hi Ω̃(ω) E(ω+δ) dω, adaptive, split at the kernel pole.
fn freq_single_piece(
    pulse: &dyn Envelope,
    delta_rel: f64,
    tau_p: f64,
    lo: f64,
    hi: f64,
    abs_tol: f64,
) -> C64 {
    let f = |w: f64| {
        spectrum_at_fast(pulse, w) * MHZ_TO_RAD_NS * e_kernel(w + delta_rel, tau_p)
    };
    let mut cuts = vec![lo];
    let pole = -delta_rel;
    if pole > lo && pole < hi {
        cuts.push(pole);
    }
    cuts.push(hi);
    let mut acc = C64::from(0.0);
    for pair in cuts.windows(2) {
        acc += quad::integrate(&f, pair[0], pair[1], 1e-8, abs_tol).value;
    }
    acc / (2.0 * PI)
}

/// Two-photon frequency-domain overlap (Type 2): the exact two-dimensional
/// transform of the time-domain bracket,
/// I₂ = (1/i)∬ dω′dω″/(2π)² Ω̃(ω′)Ω̃(ω″)[g(ω′+Δ₃, ω″+Δ₁) − g(ω′+Δ₁, ω″+Δ₃)],
/// P = |I₂|²/32, on a uniform Simpson product grid with per-node kernel
/// tables (the ω′+ω″ kernel is indexed by the diagonal).
fn freq_two_photon(pulse: &dyn Envelope, d1: f64, d3: f64, tau_p: f64, lo: f64, hi: f64) -> f64 {
    let step = 2.0 * PI / tau_p / 14.0;
    let mut n = (((hi - lo) / step).ceil() as usize).clamp(64, 400_000);
    n += n % 2;
    let h = (hi - lo) / n as f64;
    let grid: Vec<f64> = (0..=n).map(|k| lo + k as f64 * h).collect();
    // Weighted spectral samples (Simpson weight folded in once per axis).
    let wvals: Vec<C64> = grid
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            spectrum_at_fast(pulse, w) * MHZ_TO_RAD_NS * simpson_weight(k, n)
        })
        .collect();
    // Per-node kernels E(ω+Δ) and per-diagonal E(ω′+ω″+Δ₁+Δ₃).
    let e1: Vec<C64> = grid.iter().map(|&w| e_kernel(w + d1, tau_p)).collect();
    let e3: Vec<C64> = grid.iter().map(|&w| e_kernel(w + d3, tau_p)).collect();
    let esum: Vec<C64> = (0..=2 * n)
        .map(|k| e_kernel(grid[0] * 2.0 + k as f64 * h + d1 + d3, tau_p))
        .collect();
    let series_band = 0.1 / tau_p;

    let mut acc = C64::from(0.0);
    for ia in 0..=n {
        if wvals[ia].norm_sqr() == 0.0 {
            continue;
        }
        let wa = grid[ia];
        let mut row = C64::from(0.0);
        for (ib, &wb) in grid.iter().enumerate() {
            let x1 = wb + d1;
            let x3 = wb + d3;
            let k12 = if x1.abs() < series_band || x3.abs() < series_band {
                g_kernel(wa + d3, x1, tau_p) - g_kernel(wa + d1, x3, tau_p)
            } else {
                let es = esum[ia + ib];
                (es - e3[ia]) / x1 - (es - e1[ia]) / x3
            };
            row += wvals[ib] * k12;
        }
        acc += wvals[ia] * row;
    }
    let i2 = acc * (h / 3.0) * (h / 3.0) / (C64::new(0.0, 1.0) * (2.0 * PI) * (2.0 * PI));
    i2.norm_sqr() / 32.0
}

/// Frequency-domain estimator for any channel.
///
/// With `window = None` the integration window starts at the required
/// minimum — every kernel pole padded by 10× the pulse bandwidth — and grows
/// until the result is window-converged. An explicit window is used as given
/// after checking it covers the required minimum ([`CrError::WindowTooNarrow`]
/// otherwise).
pub fn p_freq_domain(
    pulse: &dyn Envelope,
    spec: &TransitionSpec,
    tau_p: f64,
    window: Option<(f64, f64)>,
) -> Result<f64, CrError> {
    let bw = bandwidth(pulse);
    let poles = spec.poles();
    let p_lo = poles.iter().cloned().fold(0.0_f64, f64::min);
    let p_hi = poles.iter().cloned().fold(0.0_f64, f64::max);
    let need_lo = p_lo - 10.0 * bw;
    let need_hi = p_hi + 10.0 * bw;

    if let Some((got_lo, got_hi)) = window {
        if got_lo > need_lo || got_hi < need_hi {
            return Err(CrError::WindowTooNarrow { need_lo, need_hi, got_lo, got_hi });
        }
        return Ok(match *spec {
            TransitionSpec::Type1 { delta } => {
                0.25 * freq_single_piece(pulse, delta, tau_p, got_lo, got_hi, 0.0).norm_sqr()
            }
            TransitionSpec::Type3 { delta_plus_alpha } => {
                0.5 * freq_single_piece(pulse, delta_plus_alpha, tau_p, got_lo, got_hi, 0.0)
                    .norm_sqr()
            }
            TransitionSpec::Type2 { delta, delta_plus_alpha } => {
                freq_two_photon(pulse, delta, delta_plus_alpha, tau_p, got_lo, got_hi)
            }
        });
    }

    // Auto window: grow the margin geometrically until the value stops
    // moving at the 1e-4 relative level (window truncation error well below
    // the 1e-3 agreement budget with the time domain).
    match *spec {
        TransitionSpec::Type1 { delta } | TransitionSpec::Type3 { delta_plus_alpha: delta } => {
            let pref = if spec.kind() == TransitionKind::Type1 { 0.25 } else { 0.5 };
            // Window growth is incremental: each step only integrates the
            // newly added annulus, to a loose absolute tolerance tied to the
            // accumulated amplitude.
            let mut margin = 10.0 * bw;
            let mut amp =
                freq_single_piece(pulse, delta, tau_p, p_lo - margin, p_hi + margin, 0.0);
            let mut p_prev = pref * amp.norm_sqr();
            for _ in 0..12 {
                if margin >= 500.0 {
                    break;
                }
                let next_margin = (margin * 1.7).min(500.0);
                let annulus_tol = 1e-7 * amp.norm().max(1e-9);
                amp += freq_single_piece(
                    pulse,
                    delta,
                    tau_p,
                    p_lo - next_margin,
                    p_lo - margin,
                    annulus_tol,
                );
                amp += freq_single_piece(
                    pulse,
                    delta,
                    tau_p,
                    p_hi + margin,
                    p_hi + next_margin,
                    annulus_tol,
                );
                margin = next_margin;
                let p_next = pref * amp.norm_sqr();
                let scale = p_next.abs().max(p_prev.abs());
                if (p_next - p_prev).abs() <= 1e-4 * scale + 1e-300 {
                    return Ok(p_next);
                }
                p_prev = p_next;
            }
            Ok(p_prev)
        }
        TransitionSpec::Type2 { delta, delta_plus_alpha } => {
            // Joint spectral decay is fast (∝ ω⁻⁵), so the auto window can
            // start well below the conservative 10× bandwidth pad; correctness
            // comes from the convergence check, and the margin cap keeps the
            // two-dimensional grid tractable.
            let max_margin = 30.0_f64;
            let mut margin = (10.0 * bw).min(15.0);
            let mut prev = freq_two_photon(
                pulse,
                delta,
                delta_plus_alpha,
                tau_p,
                p_lo - margin,
                p_hi + margin,
            );
            for _ in 0..4 {
                if margin >= max_margin {
                    break;
                }
                margin = (margin * 1.7).min(max_margin);
                let next = freq_two_photon(
                    pulse,
                    delta,
                    delta_plus_alpha,
                    tau_p,
                    p_lo - margin,
                    p_hi + margin,
                );
                let scale = next.abs().max(prev.abs());
                if (next - prev).abs() <= 1e-4 * scale + 1e-300 {
                    return Ok(next);
                }
                prev = next;
            }
            Ok(prev)
        }
    }
}

// ----------------------------------------------------------------------
// Ramp/flat decomposition and the adiabatic boundary series
// ----------------------------------------------------------------------

/// Split the Type-1 overlap amplitude ∫ Ω e^{iδt} dt into the two ramp
/// intervals, the flat top, and the full support (the last computed
/// independently, not as the sum). The parts interfere: amp_total =
/// amp_ramps + amp_flat by linearity.
pub fn ramp_flat_decomposition(
    pulse: &SquareGaussian,
    delta: f64,
    tau_p: f64,
) -> (C64, C64, C64) {
    let tr = pulse.tau_r();
    let amp_ramps =
        overlap(pulse, delta, 0.0, tr) + overlap(pulse, delta, tau_p - tr, tau_p);
    let amp_flat = overlap(pulse, delta, tr, tau_p - tr);
    let amp_total = overlap(pulse, delta, 0.0, tau_p);
    (amp_ramps, amp_flat, amp_total)
}

/// Adiabatic (boundary) expansion of the Type-1 overlap integral:
///
///   ∫₀^{τ} Ω e^{iδt} dt = (−i/δ) Σ_{n≥0} (i/δ)ⁿ [Ω⁽ⁿ⁾(t) e^{iδt}]₀^{τ},
///
/// truncated at `n_max`, with analytic envelope derivatives. Exact for a
/// constant pulse already at n_max = 0; for ramped pulses the residual is
/// governed by the first omitted derivative order.
pub fn adiabatic_series(pulse: &dyn DifferentiableEnvelope, delta: f64, n_max: u32) -> C64 {
    let tau = pulse.tau_p();
    let e = C64::new(0.0, delta * tau).exp();
    let i_over = C64::new(0.0, 1.0) / delta;
    let mut pref = -i_over; // (−i/δ)(i/δ)ⁿ, built up term by term
    let mut s = C64::from(0.0);
    for n in 0..=n_max {
        let d_tau = pulse.derivative_n(tau, n) * MHZ_TO_RAD_NS;
        let d_0 = pulse.derivative_n(0.0, n) * MHZ_TO_RAD_NS;
        s += pref * (d_tau * e - d_0);
        pref *= i_over;
    }
    s
}

// ----------------------------------------------------------------------
// DRAG
// ----------------------------------------------------------------------

/// Row-by-row breakdown of the truncated Type-1 boundary residual with
/// Y-DRAG, λ = Δ_ct/Δ_D:
///
///   P = (1+λ)²/(4Δ⁴)·B[Ω̇] + (1+λ)²/(4Δ⁶)·B[Ω̈] + λ²/(4Δ⁸)·B[Ω⃛]
///     − λ(1+λ)/(2Δ⁶)·[Ω⃛(τ)Ω̇(τ) + Ω⃛(0)Ω̇(0)
///                      − cos(Δτ)(Ω⃛(τ)Ω̇(0) + Ω⃛(0)Ω̇(τ))],
///
/// with B[f] = f(τ)² + f(0)² − 2cos(Δτ) f(τ)f(0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DragResidual {
    /// First-derivative row (1+λ)²B[Ω̇]/(4Δ⁴).
    pub d1: f64,
    /// Second-derivative row (1+λ)²B[Ω̈]/(4Δ⁶).
    pub d2: f64,
    /// Third-derivative row λ²B[Ω⃛]/(4Δ⁸).
    pub d3: f64,
    /// Mixed Ω⃛–Ω̇ cross row.
    pub cross: f64,
}

impl DragResidual {
    pub fn total(&self) -> f64 {
        self.d1 + self.d2 + self.d3 + self.cross
    }
}

/// Evaluate the DRAG-corrected Type-1 boundary residual for a square-Gaussian
/// base pulse over [0, tau_p]. `delta_ct` and `delta_d` in MHz;
/// `delta_d = ±∞` is the no-DRAG limit λ = 0, while `delta_d = 0` (or NaN)
/// is rejected.
pub fn drag_residual_type1(
    base: &SquareGaussian,
    delta_ct: f64,
    delta_d: f64,
    tau_p: f64,
) -> Result<DragResidual, CrError> {
    if delta_d == 0.0 || delta_d.is_nan() {
        return Err(CrError::ZeroDragParameter);
    }
    let lam = delta_ct / delta_d;
    let d = mhz_to_rad_ns(delta_ct);
    let c = (d * tau_p).cos();
    let f = |n: u32, t: f64| MHZ_TO_RAD_NS * base.derivative(t, n);
    let b = |n: u32| {
        let (ft, f0) = (f(n, tau_p), f(n, 0.0));
        ft * ft + f0 * f0 - 2.0 * c * ft * f0
    };
    let one = 1.0 + lam;
    Ok(DragResidual {
        d1: one * one / (4.0 * d.powi(4)) * b(1),
        d2: one * one / (4.0 * d.powi(6)) * b(2),
        d3: lam * lam / (4.0 * d.powi(8)) * b(3),
        cross: -lam * one / (2.0 * d.powi(6))
            * (f(3, tau_p) * f(1, tau_p) + f(3, 0.0) * f(1, 0.0)
                - c * (f(3, tau_p) * f(1, 0.0) + f(3, 0.0) * f(1, tau_p))),
    })
}

/// Leading-order DRAG frequency suggested for suppressing one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DragSuggestion {
    pub delta_d_mhz: f64,
    /// True when the rule is heuristic rather than a leading-order zero
    /// (the two-photon midpoint rule).
    pub heuristic: bool,
}

/// Type 1 → Δ_D = −Δ_ct; Type 3 → Δ_D = −(Δ_ct + α_c);
/// Type 2 → Δ_D = −(Δ_ct + α_c/2) (heuristic midpoint).
pub fn drag_optimum_analytic(kind: TransitionKind, p: &DeviceParams) -> DragSuggestion {
    match kind {
        TransitionKind::Type1 => DragSuggestion { delta_d_mhz: -p.delta_ct(), heuristic: false },
        TransitionKind::Type3 => DragSuggestion {
            delta_d_mhz: -(p.delta_ct() + p.alpha_c()),
            heuristic: false,
        },
        TransitionKind::Type2 => DragSuggestion {
            delta_d_mhz: -(p.delta_ct() + 0.5 * p.alpha_c()),
            heuristic: true,
        },
    }
}

// ----------------------------------------------------------------------
// Three-level brute-force reference
// ----------------------------------------------------------------------

/// Integrate the driven three-level control transmon exactly (adaptive RK to
/// tolerance `tol`) in the drive rotating frame:
///
///   ⟨n|Ĥ_I(t)|n−1⟩ = (√n/2) Ω_c(t) e^{iΔ_nd t},  Δ_nd = Δ_cd + (n−1)α_c,
///
/// with Δ_cd = Δ_ct (drive at the target frequency) and n ∈ {1, 2}.
/// Detunings in rad/ns. Returns the 3×3 evolution operator over [0, τ_p].
pub fn three_level_reference(
    control: &dyn Envelope,
    delta_cd: f64,
    alpha_c: f64,
    tol: f64,
) -> Result<Array2<C64>, CrError> {
    let tau = control.tau_p();
    let h = |t: f64| {
        let w = control.value(t) * (0.5 * MHZ_TO_RAD_NS);
        let m10 = w * C64::new(0.0, delta_cd * t).exp();
        let m21 = w * SQRT_2 * C64::new(0.0, (delta_cd + alpha_c) * t).exp();
        let mut m = Array2::<C64>::zeros((3, 3));
        m[(1, 0)] = m10;
        m[(0, 1)] = m10.conj();
        m[(2, 1)] = m21;
        m[(1, 2)] = m21.conj();
        m
    };
    propagator::dp45(&h, 3, tau, tol)
}

/// Transition probabilities (P(0→1), P(0→2), P(1→2)) from a three-level
/// evolution operator.
pub fn three_level_probabilities(u: &Array2<C64>) -> (f64, f64, f64) {
    (
        u[(1, 0)].norm_sqr(),
        u[(2, 0)].norm_sqr(),
        u[(2, 1)].norm_sqr(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulses::ConstantEnvelope;
    use approx::assert_abs_diff_eq;

    fn sg(amp: f64, tau_p: f64, tau_r: f64) -> SquareGaussian {
        SquareGaussian::new(amp, tau_p, tau_r).unwrap()
    }

    fn device(delta: f64) -> DeviceParams {
        DeviceParams::standard(delta)
    }

    // ---------------- time domain ----------------

    #[test]
    fn type1_zero_amplitude() {
        let c = ConstantEnvelope { amp: C64::from(0.0), tau_p: 100.0 };
        assert_eq!(p_type1_time(&c, 0.3, 100.0), 0.0);
    }

    #[test]
    fn type1_constant_sine_law() {
        let (omega, delta, tau) = (5.0, 0.9, 47.0);
        let c = ConstantEnvelope { amp: C64::from(omega), tau_p: tau };
        let got = p_type1_time(&c, delta, tau);
        let w = mhz_to_rad_ns(omega);
        let want = (w / delta).powi(2) * (0.5 * delta * tau).sin().powi(2);
        assert_abs_diff_eq!(got, want, epsilon = 1e-10 * want);
    }

    #[test]
    fn type1_constant_periodic_zeros() {
        let delta = 0.4;
        for k in 1..=3 {
            let tau = 2.0 * PI * k as f64 / delta;
            let c = ConstantEnvelope { amp: C64::from(8.0), tau_p: tau };
            let p = p_type1_time(&c, delta, tau);
            assert!(p < 1e-22, "k = {k}: {p:e}");
        }
    }

    #[test]
    fn type3_prefactor_and_closed_form() {
        let (omega, dpa, tau) = (6.0, -1.1, 63.0);
        let c = ConstantEnvelope { amp: C64::from(omega), tau_p: tau };
        let p3 = p_type3_time(&c, dpa, tau);
        assert_abs_diff_eq!(
            p3,
            2.0 * p_type1_time(&c, dpa, tau),
            epsilon = 1e-12 * p3
        );
        let w = mhz_to_rad_ns(omega);
        // (Ω²/2)·|(e^{iδτ}−1)/δ|²
        let num = (C64::new(0.0, dpa * tau).exp() - 1.0).norm_sqr();
        let want = 0.5 * w * w * num / (dpa * dpa);
        assert_abs_diff_eq!(p3, want, epsilon = 1e-10 * want);
    }

    #[test]
    fn type2_vanishes_when_alpha_zero() {
        let env = sg(10.0, 120.0, 20.0);
        let p = p_type2_time(&env, 0.4, 0.0, 120.0);
        assert_eq!(p, 0.0);
    }

    // ---------------- three-level oracle comparisons ----------------

    #[test]
    fn type1_matches_three_level_oracle() {
        let env = sg(4.0, 200.0, 16.0);
        let delta = mhz_to_rad_ns(50.0);
        let alpha = mhz_to_rad_ns(-340.0);
        let p_est = p_type1_time(&env, delta, 200.0);
        assert!(
            p_est > 1e-6 && p_est < 1.1e-3,
            "estimator out of oracle validity window: {p_est:e}"
        );
        let u = three_level_reference(&env, delta, alpha, 1e-11).unwrap();
        let (p01, _, _) = three_level_probabilities(&u);
        let ratio = p_est / p01;
        assert!(
            (0.8..=1.25).contains(&ratio),
            "ratio {ratio} (est {p_est:e}, oracle {p01:e})"
        );
    }

    #[test]
    fn type3_matches_three_level_oracle() {
        // α_c = −90 MHz puts the 1→2 detuning at −40 MHz so the channel is
        // visible at small amplitude.
        let env = sg(1.5, 200.0, 16.0);
        let delta = mhz_to_rad_ns(50.0);
        let alpha = mhz_to_rad_ns(-90.0);
        let p_est = p_type3_time(&env, delta + alpha, 200.0);
        assert!(
            p_est > 1e-6 && p_est < 1.1e-3,
            "estimator out of oracle validity window: {p_est:e}"
        );
        let u = three_level_reference(&env, delta, alpha, 1e-11).unwrap();
        let (_, _, p12) = three_level_probabilities(&u);
        let ratio = p_est / p12;
        assert!(
            (0.8..=1.25).contains(&ratio),
            "ratio {ratio} (est {p_est:e}, oracle {p12:e})"
        );
    }

    #[test]
    fn type2_matches_three_level_oracle() {
        // Two-photon detuning 2Δ_ct + α_c = 10 MHz; small amplitude keeps
        // the channel perturbative.
        let env = sg(4.0, 185.0, 20.0);
        let delta = mhz_to_rad_ns(50.0);
        let alpha = mhz_to_rad_ns(-90.0);
        let p_est = p_type2_time(&env, delta, alpha, 185.0);
        assert!(
            p_est > 1e-7 && p_est < 1.1e-3,
            "estimator out of oracle validity window: {p_est:e}"
        );
        let u = three_level_reference(&env, delta, alpha, 1e-11).unwrap();
        let (_, p02, _) = three_level_probabilities(&u);
        let ratio = p_est / p02;
        assert!(
            (0.8..=1.25).contains(&ratio),
            "ratio {ratio} (est {p_est:e}, oracle {p02:e})"
        );
    }

    #[test]
    fn type2_constant_pulse_matches_oracle_tightly() {
        // Constant drive at very small amplitude: the second-order estimator
        // tracks the exact three-level result to 10%. The duration sits at a
        // two-photon response maximum (δ₂τ/2 = 3π/2) so the comparison is
        // first-order insensitive to AC-Stark shifts of the resonance.
        let delta = mhz_to_rad_ns(50.0);
        let alpha = mhz_to_rad_ns(-90.0);
        let d2 = 2.0 * delta + alpha; // 10 MHz two-photon detuning
        let tau = 3.0 * PI / d2;
        let c = ConstantEnvelope { amp: C64::from(1.0), tau_p: tau };
        let p_est = p_type2_time(&c, delta, alpha, tau);
        assert!(
            p_est > 1e-8 && p_est < 1.1e-3,
            "estimator out of oracle validity window: {p_est:e}"
        );
        let u = three_level_reference(&c, delta, alpha, 1e-12).unwrap();
        let (_, p02, _) = three_level_probabilities(&u);
        assert!(
            (p_est - p02).abs() <= 0.1 * p02,
            "est {p_est:e} vs oracle {p02:e}"
        );
    }

    // ---------------- frequency domain ----------------

    #[test]
    fn freq_matches_time_on_reference_parameters() {
        // Ω = 20 MHz, Δ_ct = 50 MHz, τ_p = 200 ns, τ_r = 26 ns.
        let env = sg(20.0, 200.0, 26.0);
        let p = device(50.0);
        let spec = TransitionSpec::type1(&p).unwrap();
        let pt = p_type1_time(&env, p.delta_ct_ang(), 200.0);
        let pf = p_freq_domain(&env, &spec, 200.0, None).unwrap();
        assert!(
            (pf - pt).abs() <= 1e-3 * pt.abs(),
            "freq {pf:e} vs time {pt:e}"
        );
    }

    #[test]
    fn freq_zero_amplitude() {
        let env = sg(0.0, 120.0, 15.0);
        let p = device(50.0);
        let spec = TransitionSpec::type1(&p).unwrap();
        assert_eq!(p_freq_domain(&env, &spec, 120.0, None).unwrap(), 0.0);
    }

    #[test]
    fn freq_square_limit_reproduces_sine_law() {
        // Nearly square pulse (τ_r ≪ τ_p) over half a detuning period, so
        // the sin² law predicts the maximum (Ω/δ)². The window must cover
        // the very wide spectrum of the sharp ramps.
        let delta = 1.0; // rad/ns
        let tau_p = PI / delta;
        let tau_r = 0.08;
        let env = sg(6.0, tau_p, tau_r);
        let spec = TransitionSpec::Type1 { delta };
        let pf = p_freq_domain(&env, &spec, tau_p, Some((-800.0, 800.0))).unwrap();
        let w = mhz_to_rad_ns(6.0);
        let want = (w / delta).powi(2) * (0.5 * delta * tau_p).sin().powi(2);
        assert!(
            (pf - want).abs() <= 1e-2 * want,
            "freq {pf:e} vs square law {want:e}"
        );
    }

    #[test]
    fn freq_window_too_narrow() {
        let env = sg(20.0, 200.0, 26.0);
        let p = device(50.0);
        let spec = TransitionSpec::type1(&p).unwrap();
        match p_freq_domain(&env, &spec, 200.0, Some((-1.0, 1.0))) {
            Err(CrError::WindowTooNarrow { need_lo, need_hi, got_lo, got_hi }) => {
                assert!(need_lo < -1.0 && need_hi > 1.0);
                assert_eq!((got_lo, got_hi), (-1.0, 1.0));
            }
            other => panic!("expected WindowTooNarrow, got {other:?}"),
        }
    }

    #[test]
    fn freq_time_agreement_across_ramp_grid() {
        // All three channels, five ramp lengths, < 1e-3 relative.
        let p = DeviceParams::new(5052.0, 5000.0, -90.0, -90.0, 3.5).unwrap();
        let tau_p = 200.0;
        for tau_r in [10.0, 16.0, 22.0, 30.0, 38.0] {
            let env = sg(8.0, tau_p, tau_r);
            let d = p.delta_ct_ang();
            let a = p.alpha_c_ang();

            let t1 = p_type1_time(&env, d, tau_p);
            let f1 =
                p_freq_domain(&env, &TransitionSpec::type1(&p).unwrap(), tau_p, None).unwrap();
            assert!(
                (f1 - t1).abs() <= 1e-3 * t1.abs(),
                "type1 τ_r={tau_r}: {f1:e} vs {t1:e}"
            );

            let t3 = p_type3_time(&env, d + a, tau_p);
            let f3 =
                p_freq_domain(&env, &TransitionSpec::type3(&p).unwrap(), tau_p, None).unwrap();
            assert!(
                (f3 - t3).abs() <= 1e-3 * t3.abs(),
                "type3 τ_r={tau_r}: {f3:e} vs {t3:e}"
            );

            let t2 = p_type2_time(&env, d, a, tau_p);
            let f2 =
                p_freq_domain(&env, &TransitionSpec::type2(&p).unwrap(), tau_p, None).unwrap();
            assert!(
                (f2 - t2).abs() <= 1e-3 * t2.abs(),
                "type2 τ_r={tau_r}: {f2:e} vs {t2:e}"
            );
        }
    }

    // ---------------- ramp/flat decomposition ----------------

    #[test]
    fn ramp_flat_additivity_and_no_flat_case() {
        let env = sg(20.0, 200.0, 26.0);
        let delta = mhz_to_rad_ns(50.0);
        let (ramps, flat, total) = ramp_flat_decomposition(&env, delta, 200.0);
        assert!((ramps + flat - total).norm() < 1e-12 * total.norm().max(1.0));

        let half = sg(20.0, 120.0, 60.0);
        let (_, flat2, _) = ramp_flat_decomposition(&half, delta, 120.0);
        assert_eq!(flat2, C64::from(0.0));
    }

    #[test]
    fn flat_part_dominates_total_at_interference_optimum() {
        // At the interference optimum τ_r = 26 ns the full-pulse overlap is
        // far smaller than either constituent.
        let env = sg(20.0, 200.0, 26.0);
        let delta = mhz_to_rad_ns(50.0);
        let (_, flat, total) = ramp_flat_decomposition(&env, delta, 200.0);
        assert!(
            flat.norm_sqr() >= 10.0 * total.norm_sqr(),
            "flat {:e} vs total {:e}",
            flat.norm_sqr(),
            total.norm_sqr()
        );
    }

    // ---------------- adiabatic series ----------------

    #[test]
    fn adiabatic_constant_exact_at_order_zero() {
        let (omega, delta, tau) = (7.0, 0.6, 35.0);
        let c = ConstantEnvelope { amp: C64::from(omega), tau_p: tau };
        let s0 = adiabatic_series(&c, delta, 0);
        let exact = overlap(&c, delta, 0.0, tau);
        assert!((s0 - exact).norm() < 1e-10 * exact.norm());
        // Higher orders add nothing: all derivatives vanish.
        let s4 = adiabatic_series(&c, delta, 4);
        assert!((s4 - s0).norm() < 1e-15);
    }

    #[test]
    fn adiabatic_terms_shrink_in_adiabatic_regime() {
        let env = sg(20.0, 200.0, 26.0);
        // δ·τ_p = 20.5π, so e^{iδτ_p} = i and the boundary combination has
        // the same magnitude at every order; the shrink then reflects the
        // derivative hierarchy alone.
        let delta = mhz_to_rad_ns(51.25);
        // The n = 0 term carries only the endpoint values, which vanish for
        // this envelope; successive derivative terms must then decay.
        assert!(adiabatic_series(&env, delta, 0).norm() < 1e-18);
        let mut prev = f64::INFINITY;
        for n in 1..=3u32 {
            let curr = (adiabatic_series(&env, delta, n) - adiabatic_series(&env, delta, n - 1))
                .norm();
            assert!(curr > 0.0 && curr < prev, "term {n}: {curr:e} vs {prev:e}");
            prev = curr;
        }
    }

    #[test]
    fn adiabatic_truncation_residual_is_second_derivative_scale() {
        let delta = mhz_to_rad_ns(50.0);
        for tau_r in [16.0, 26.0, 40.0] {
            let env = sg(20.0, 200.0, tau_r);
            let s1 = adiabatic_series(&env, delta, 1);
            let exact = overlap(&env, delta, 0.0, 200.0);
            let resid = (s1 - exact).norm();
            // Scale bound from the boundary and join second derivatives.
            let dd = |t: f64| (MHZ_TO_RAD_NS * env.derivative(t, 2)).abs();
            let bound = (dd(0.0) + dd(200.0) + dd(tau_r - 1e-9) + dd(200.0 - tau_r + 1e-9))
                / delta.powi(3);
            assert!(
                resid <= 10.0 * bound,
                "τ_r={tau_r}: residual {resid:e} vs bound {bound:e}"
            );
        }
    }

    // ---------------- DRAG ----------------

    #[test]
    fn drag_rows_at_special_lambda_values() {
        let env = sg(20.0, 200.0, 26.0);
        // λ = 0 (no DRAG): third-derivative and cross rows vanish.
        let r0 = drag_residual_type1(&env, 50.0, f64::INFINITY, 200.0).unwrap();
        assert_eq!(r0.d3, 0.0);
        assert_eq!(r0.cross, 0.0);
        assert!(r0.d1 > 0.0);
        // λ = −1: only the third-derivative row survives.
        let r1 = drag_residual_type1(&env, 50.0, -50.0, 200.0).unwrap();
        assert_eq!(r1.d1, 0.0);
        assert_eq!(r1.d2, 0.0);
        assert_eq!(r1.cross, 0.0);
        assert!(r1.d3 > 0.0);
        // The full cancellation beats no-DRAG by well over 10×.
        assert!(r1.total() * 10.0 <= r0.total());
    }

    #[test]
    fn drag_rejects_zero_parameter() {
        let env = sg(20.0, 200.0, 26.0);
        assert!(matches!(
            drag_residual_type1(&env, 50.0, 0.0, 200.0),
            Err(CrError::ZeroDragParameter)
        ));
        assert!(matches!(
            drag_residual_type1(&env, 50.0, f64::NAN, 200.0),
            Err(CrError::ZeroDragParameter)
        ));
    }

    #[test]
    fn drag_row1_equals_boundary_leakage_probability() {
        // Cross-check against the non-block-diagonal boundary elements: with
        // zero rates and a plain square-Gaussian envelope, |u_xi|² + |u_yi|²
        // is exactly the first-derivative row of the residual formula.
        use crate::pulses::DragEnvelope;
        use crate::rates::{nonbd_elements, EffectiveRates};
        let p = device(50.0);
        let env = sg(20.0, 200.0, 26.0);
        let plain = DragEnvelope::disabled(env.clone());
        let e = nonbd_elements(&p, &EffectiveRates::default(), &plain).unwrap();
        let p_boundary = e.xi.norm_sqr() + e.yi.norm_sqr();
        let row1 = drag_residual_type1(&env, 50.0, f64::INFINITY, 200.0).unwrap().d1;
        assert_abs_diff_eq!(p_boundary, row1, epsilon = 1e-12 * row1);
    }

    #[test]
    fn drag_optimum_rules() {
        let p = device(50.0);
        let s1 = drag_optimum_analytic(TransitionKind::Type1, &p);
        assert_eq!(s1.delta_d_mhz, -50.0);
        assert!(!s1.heuristic);
        let s3 = drag_optimum_analytic(TransitionKind::Type3, &p);
        assert_eq!(s3.delta_d_mhz, 290.0);
        assert!(!s3.heuristic);
        let s2 = drag_optimum_analytic(TransitionKind::Type2, &p);
        assert_eq!(s2.delta_d_mhz, 120.0);
        assert!(s2.heuristic);
    }

    // ---------------- spec guards ----------------

    #[test]
    fn transition_spec_collision_guards() {
        // Δ_ct below the collision limit.
        match TransitionSpec::type1(&device(0.3)) {
            Err(CrError::NearPole { context, .. }) => assert_eq!(context, "delta_ct"),
            other => panic!("expected NearPole, got {other:?}"),
        }
        // Two-photon collision at Δ_ct = −α_c/2 = 170 MHz.
        match TransitionSpec::type2(&device(170.2)) {
            Err(CrError::NearPole { context, .. }) => {
                assert_eq!(context, "2 delta_ct + alpha_c")
            }
            other => panic!("expected NearPole, got {other:?}"),
        }
        // Type-3 collision at Δ_ct = −α_c = 340 MHz.
        match TransitionSpec::type3(&device(339.6)) {
            Err(CrError::NearPole { context, .. }) => {
                assert_eq!(context, "delta_ct + alpha_c")
            }
            other => panic!("expected NearPole, got {other:?}"),
        }
        // A healthy operating point constructs all three.
        for kind in [TransitionKind::Type1, TransitionKind::Type2, TransitionKind::Type3] {
            let s = TransitionSpec::for_kind(kind, &device(50.0)).unwrap();
            assert_eq!(s.kind(), kind);
        }
    }

    // ---------------- kernel internals ----------------

    #[test]
    fn e_kernel_series_matches_direct() {
        let tau = 173.0;
        for x in [5e-7, -3e-7, 9e-8] {
            let series = e_kernel(x, tau);
            let direct = (C64::new(0.0, x * tau).exp() - 1.0) / C64::new(0.0, x);
            assert!((series - direct).norm() < 1e-9 * tau);
        }
        // Exact value at moderate argument.
        let x = 0.37;
        let direct = e_kernel(x, tau);
        let brute = quad::integrate(&|t| C64::new(0.0, x * t).exp(), 0.0, tau, 1e-12, 0.0).value;
        assert!((direct - brute).norm() < 1e-9 * tau);
    }

    #[test]
    fn moment_recurrence_matches_quadrature() {
        let tau = 41.0;
        for u in [0.004, 0.3, -1.7] {
            let m = moments(u, tau);
            for (k, &mk) in m.iter().enumerate() {
                let brute = quad::integrate(
                    &|t: f64| C64::from(t.powi(k as i32)) * C64::new(0.0, u * t).exp(),
                    0.0,
                    tau,
                    1e-12,
                    0.0,
                )
                .value;
                let scale = tau.powi(k as i32 + 1);
                assert!(
                    (mk - brute).norm() < 1e-9 * scale,
                    "u={u}, m={k}: {mk} vs {brute}"
                );
            }
        }
    }

    #[test]
    fn g_kernel_series_is_continuous_across_switch() {
        let tau = 200.0;
        let u = 1.3;
        // Just inside the series branch the finite difference of kernels is
        // still well conditioned, so the two evaluation routes must agree.
        let x = 0.05 / tau;
        let series = g_kernel(u, x, tau);
        let direct = (e_kernel(u + x, tau) - e_kernel(u, tau)) / x;
        assert!(
            (series - direct).norm() < 1e-9 * direct.norm(),
            "{series} vs {direct}"
        );
    }

    #[test]
    fn fast_spectrum_matches_adaptive_spectrum() {
        let env = sg(20.0, 200.0, 26.0);
        for w in [0.0, 0.05, -0.31, 1.4, -6.0] {
            let fast = spectrum_at_fast(&env, w);
            let slow = crate::pulses::spectrum_at(&env, w);
            let scale = slow.norm().max(1.0);
            assert!(
                (fast - slow).norm() < 1e-6 * scale,
                "ω={w}: {fast} vs {slow}"
            );
        }
    }
}
