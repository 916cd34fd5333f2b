//! Closed-form effective-Hamiltonian rates for the driven coupled-transmon
//! model, perturbative in the drive amplitudes and the exchange coupling J.
//!
//! Within the two-qubit computational subspace the time-dependent dynamics is
//! captured (block-diagonally) by
//!
//!   Ĥ_eff(t) = ½ [ ω_ix ÎX̂ + ω_iy ÎŶ + ω_iz ÎẐ
//!                + ω_zx ẐX̂ + ω_zy ẐŶ + ω_zz ẐẐ + ω_zi ẐÎ ],
//!
//! with rates given order by order in the instantaneous drive quadratures
//! (Ω_cx, Ω_cy) and target-tone quadratures (Ω_tx, Ω_ty) and their time
//! derivatives. Orders implemented here:
//!
//!   0  static ZZ (drive-independent, ∝ J²);
//!   1  IX, IY, ZX, ZY linear in the drives;
//!   2  ZI, IZ, ZZ Stark-type shifts, bilinear (including derivative terms);
//!   3  IX, ZX cubic corrections (including squared-derivative terms);
//!   4  ZI quartic correction.
//!
//! Everything in this module is evaluated in angular units (rad/ns); the
//! [`DriveAt`] constructor converts from the linear-MHz envelope convention.
//! The rate expressions have simple poles when certain detuning combinations
//! vanish; [`CrError::NearPole`] is returned when any required denominator
//! factor is smaller than 1 MHz in magnitude.

use std::collections::BTreeMap;

use ndarray::{linalg::kron, Array2};

use crate::error::CrError;
use crate::model::{DeviceParams, Pauli};
use crate::pulses::SmoothEnvelope;
use crate::units::{mhz_to_rad_ns, rad_ns_to_mhz, MHZ_TO_RAD_NS};
use num_complex::Complex64 as C64;

/// Instantaneous drive data entering the rate formulas, in angular units
/// internally but constructed from linear-MHz values: quadratures in MHz,
/// quadrature time derivatives in MHz/ns.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DriveAt {
    /// Control in-phase quadrature Ω_cx (MHz).
    pub cx: f64,
    /// Control quadrature-phase component Ω_cy (MHz).
    pub cy: f64,
    /// Target-tone in-phase quadrature Ω_tx (MHz).
    pub tx: f64,
    /// Target-tone quadrature-phase component Ω_ty (MHz).
    pub ty: f64,
    /// dΩ_cx/dt (MHz/ns).
    pub dcx: f64,
    /// dΩ_cy/dt (MHz/ns).
    pub dcy: f64,
}

impl DriveAt {
    pub fn from_mhz(cx: f64, cy: f64, tx: f64, ty: f64, dcx: f64, dcy: f64) -> Self {
        DriveAt { cx, cy, tx, ty, dcx, dcy }
    }

    /// Sample the control envelope (and optionally the target tone) at time t.
    pub fn sample(
        control: &dyn SmoothEnvelope,
        target: Option<&dyn SmoothEnvelope>,
        t: f64,
    ) -> Self {
        let c = control.value(t);
        let dc = control.rate(t);
        let (tx, ty) = match target {
            Some(e) => {
                let v = e.value(t);
                (v.re, v.im)
            }
            None => (0.0, 0.0),
        };
        DriveAt { cx: c.re, cy: c.im, tx, ty, dcx: dc.re, dcy: dc.im }
    }

    fn is_finite(&self) -> bool {
        [self.cx, self.cy, self.tx, self.ty, self.dcx, self.dcy]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Effective two-qubit rates (all rad/ns) at one instant, with a record of
/// which perturbative orders were accumulated (bit n set ⇔ order n included).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EffectiveRates {
    pub w_ix: f64,
    pub w_iy: f64,
    pub w_iz: f64,
    pub w_zx: f64,
    pub w_zy: f64,
    pub w_zz: f64,
    pub w_zi: f64,
    pub order_mask: u8,
}

impl EffectiveRates {
    pub fn includes(&self, order: u8) -> bool {
        self.order_mask & (1 << order) != 0
    }

    /// Named rates in rad/ns, deterministic key order.
    pub fn as_map(&self) -> BTreeMap<&'static str, f64> {
        BTreeMap::from([
            ("w_ix", self.w_ix),
            ("w_iy", self.w_iy),
            ("w_iz", self.w_iz),
            ("w_zx", self.w_zx),
            ("w_zy", self.w_zy),
            ("w_zz", self.w_zz),
            ("w_zi", self.w_zi),
        ])
    }
}

/// Collective rotation frequencies ω_± of the two control-conditioned target
/// blocks (rad/ns).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectiveFrequencies {
    pub w_plus: f64,
    pub w_minus: f64,
}

const POLE_LIMIT_MHZ: f64 = 1.0;

fn guard(context: &'static str, value_ang: f64) -> Result<(), CrError> {
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

/// Denominator factors (rad/ns) that must stay away from zero for all rate
/// expressions up to `max_order`, with display labels.
fn guard_factors(p: &DeviceParams, max_order: u8) -> Vec<(&'static str, f64)> {
    let d = p.delta_ct_ang();
    let ac = p.alpha_c_ang();
    let at = p.alpha_t_ang();
    let mut v = vec![
        ("delta_ct - alpha_t", d - at),
        ("delta_ct + alpha_c", d + ac),
    ];
    if max_order >= 1 {
        v.push(("delta_ct", d));
    }
    if max_order >= 2 {
        v.push(("alpha_c", ac));
        v.push(("alpha_t", at));
        v.push(("2 alpha_c + delta_ct", 2.0 * ac + d));
        v.push(("alpha_c + 2 delta_ct", ac + 2.0 * d));
        v.push(("3 alpha_c + 2 delta_ct", 3.0 * ac + 2.0 * d));
        v.push(("alpha_c + delta_ct - alpha_t", ac + d - at));
    }
    v
}

fn check_guards(p: &DeviceParams, max_order: u8) -> Result<(), CrError> {
    for (name, value) in guard_factors(p, max_order) {
        guard(name, value)?;
    }
    Ok(())
}

/// Drive-independent ZZ rate ω_zz⁽⁰⁾ = [1/(Δ_ct − α_t) − 1/(Δ_ct + α_c)] J²
/// (rad/ns).
pub fn static_zz0(p: &DeviceParams) -> Result<f64, CrError> {
    check_guards(p, 0)?;
    let d = p.delta_ct_ang();
    let ac = p.alpha_c_ang();
    let at = p.alpha_t_ang();
    let j = p.j_ang();
    Ok((1.0 / (d - at) - 1.0 / (d + ac)) * j * j)
}

/// Second-order coefficient sets. Each rate row uses the same six bilinear
/// combinations:
///
///   ω⁽²⁾ = C₁ (Ω_cx² + Ω_cy²) + C₂ J² (Ω_cx² + Ω_cy²)
///        + C₃ J (Ω_tx Ω_cx + Ω_ty Ω_cy)
///        + C₄ (Ω_cx Ω̇_cy − Ω_cy Ω̇_cx) + C₅ J² (Ω_cx Ω̇_cy − Ω_cy Ω̇_cx)
///        + C₆ J (Ω_tx Ω̇_cy − Ω_ty Ω̇_cx).
fn c2_zi(d: f64, ac: f64, at: f64) -> [f64; 6] {
    let acd = ac + d;
    let tacd = 2.0 * ac + d;
    let a2d = ac + 2.0 * d;
    let t3a2d = 3.0 * ac + 2.0 * d;
    let dmat = d - at;
    let acdmat = ac + d - at;
    let c1 = 1.0 / (2.0 * acd) - 1.0 / (2.0 * d);
    let c2 = -1.0 / (4.0 * ac * d * d) + 1.0 / (ac * acd * acd)
        - 3.0 / (4.0 * ac * tacd * tacd)
        + 1.0 / (ac * ac * d)
        - 2.0 / (ac * ac * acd)
        - 3.0 / (ac * ac * tacd)
        - 4.0 / (ac * ac * a2d)
        + 12.0 / (ac * ac * t3a2d)
        + 1.0 / (at * acdmat * acdmat)
        - 1.0 / (ac * at * dmat)
        + 1.0 / (ac * at * acdmat);
    let c3 = ac / (2.0 * d * at * acd);
    let c4 = 1.0 / (2.0 * d * d) - 1.0 / (2.0 * acd * acd);
    let c5 = 6.0 / (ac.powi(3) * acd) - 9.0 / (2.0 * ac.powi(3) * tacd)
        - 1.0 / (2.0 * ac * ac * acd * acd)
        - 3.0 / (4.0 * ac * ac * tacd * tacd)
        + 4.0 / (ac * ac * a2d * a2d)
        - 12.0 / (ac * ac * t3a2d * t3a2d)
        - 3.0 / (2.0 * ac.powi(3) * d)
        + 1.0 / (4.0 * ac * ac * d * d)
        + 1.0 / (ac * at * at * dmat)
        - 1.0 / (ac * at * at * acdmat)
        - 1.0 / (at * at * acdmat * acdmat);
    let c6 = -(ac * ac * d + ac * d * d + 2.0 * ac * d * at + ac * ac * at)
        / (2.0 * d * d * at * at * acd * acd);
    [c1, c2, c3, c4, c5, c6]
}

fn c2_iz(d: f64, ac: f64, at: f64) -> [f64; 6] {
    let acd = ac + d;
    let tacd = 2.0 * ac + d;
    let a2d = ac + 2.0 * d;
    let t3a2d = 3.0 * ac + 2.0 * d;
    let dmat = d - at;
    let acdmat = ac + d - at;
    let c2 = 1.0 / (4.0 * ac * d * d) + 1.0 / (2.0 * ac * acd * acd)
        - 3.0 / (4.0 * ac * tacd * tacd)
        - 1.0 / (ac * ac * d)
        - 4.0 / (ac * ac * acd)
        - 3.0 / (ac * ac * tacd)
        + 4.0 / (ac * ac * a2d)
        + 12.0 / (ac * ac * t3a2d)
        + 1.0 / (at * acdmat * acdmat)
        - 1.0 / (ac * at * dmat)
        + 1.0 / (ac * at * acdmat)
        + 1.0 / (2.0 * at * dmat * dmat);
    let c3 = -(d + ac + at) / (2.0 * at * acd * acd);
    let c5 = 3.0 / (ac.powi(3) * acd) - 9.0 / (2.0 * ac.powi(3) * tacd)
        - 1.0 / (ac * ac * acd * acd)
        - 3.0 / (4.0 * ac * ac * tacd * tacd)
        - 4.0 / (ac * ac * a2d * a2d)
        - 12.0 / (ac * ac * t3a2d * t3a2d)
        + 3.0 / (2.0 * ac.powi(3) * d)
        - 1.0 / (4.0 * ac * ac * d * d)
        + 1.0 / (ac * at * at * dmat)
        - 1.0 / (ac * at * at * acdmat)
        - 1.0 / (2.0 * at * at * dmat * dmat)
        - 1.0 / (at * at * acdmat * acdmat);
    let c6 = (ac * ac + 2.0 * ac * d + ac * at + d * d + d * at + at * at)
        / (2.0 * at * at * acd.powi(3));
    [0.0, c2, c3, 0.0, c5, c6]
}

fn c2_zz(d: f64, ac: f64, at: f64) -> [f64; 6] {
    let acd = ac + d;
    let tacd = 2.0 * ac + d;
    let a2d = ac + 2.0 * d;
    let t3a2d = 3.0 * ac + 2.0 * d;
    let dmat = d - at;
    let acdmat = ac + d - at;
    let c2 = 1.0 / (4.0 * ac * d * d) - 1.0 / (ac * acd * acd)
        + 3.0 / (4.0 * ac * tacd * tacd)
        - 1.0 / (ac * ac * d)
        + 2.0 / (ac * ac * acd)
        + 3.0 / (ac * ac * tacd)
        + 4.0 / (ac * ac * a2d)
        - 12.0 / (ac * ac * t3a2d)
        - 1.0 / (at * acdmat * acdmat)
        + 1.0 / (ac * at * dmat)
        - 1.0 / (ac * at * acdmat);
    let c3 = -(ac * ac * d + ac * d * d + 2.0 * ac * d * at + ac * ac * at)
        / (2.0 * d * d * at * acd * acd);
    let c5 = -6.0 / (ac.powi(3) * acd) + 9.0 / (2.0 * ac.powi(3) * tacd)
        + 1.0 / (2.0 * ac * ac * acd * acd)
        + 3.0 / (4.0 * ac * ac * tacd * tacd)
        - 4.0 / (ac * ac * a2d * a2d)
        + 12.0 / (ac * ac * t3a2d * t3a2d)
        + 3.0 / (2.0 * ac.powi(3) * d)
        - 1.0 / (4.0 * ac * ac * d * d)
        - 1.0 / (ac * at * at * dmat)
        + 1.0 / (ac * at * at * acdmat)
        + 1.0 / (at * at * acdmat * acdmat);
    let c6 = -1.0 / (2.0 * acd.powi(3)) - 1.0 / (2.0 * at * acd * acd)
        - 1.0 / (2.0 * at * at * acd)
        + 1.0 / (2.0 * d.powi(3))
        + 1.0 / (2.0 * d * d * at)
        + 1.0 / (2.0 * d * at * at);
    [0.0, c2, c3, 0.0, c5, c6]
}

/// Third-order coefficient sets: ω⁽³⁾ = C₁ J (Ω_cx² + Ω_cy²) Ω_cx
/// + C₂ J Ω̇_cx² Ω_cx + C₃ J Ω̇_cy² Ω_cx.
fn c3_ix(d: f64, ac: f64) -> [f64; 3] {
    let acd = ac + d;
    let a2d = ac + 2.0 * d;
    let t3a2d = 3.0 * ac + 2.0 * d;
    let c1 = ac * d / (acd.powi(3) * a2d * t3a2d);
    let c2 = -1.0 / acd.powi(5) + 1.0 / (2.0 * ac * acd.powi(4))
        + 1.0 / (12.0 * ac * ac * d.powi(3))
        - 5.0 / (24.0 * ac * ac * acd.powi(3))
        - 1.0 / (3.0 * ac.powi(3) * d * d)
        - 71.0 / (24.0 * ac.powi(3) * acd * acd)
        + 2.0 / (3.0 * ac.powi(3) * a2d * a2d)
        - 12.0 / (ac.powi(3) * t3a2d * t3a2d)
        + 103.0 / (8.0 * ac.powi(4) * acd)
        + 9.0 / (8.0 * ac.powi(4) * d)
        - 4.0 / (ac.powi(4) * a2d)
        - 24.0 / (ac.powi(4) * t3a2d);
    let c3 = ac * (4.0 * ac + 7.0 * d) / (24.0 * d * d * acd.powi(3) * a2d * a2d);
    [c1, c2, c3]
}

fn c3_zx(d: f64, ac: f64) -> [f64; 3] {
    let acd = ac + d;
    let a2d = ac + 2.0 * d;
    let t3a2d = 3.0 * ac + 2.0 * d;
    let c1 = ac
        * ac
        * (3.0 * ac.powi(3) + 11.0 * ac * ac * d + 15.0 * ac * d * d + 9.0 * d.powi(3))
        / (2.0 * d.powi(3) * acd.powi(3) * a2d * t3a2d);
    let c2 = 1.0 / acd.powi(5) + 1.0 / (2.0 * ac * d.powi(4))
        - 1.0 / (2.0 * ac * acd.powi(4))
        - 1.0 / (2.0 * ac * ac * d.powi(3))
        + 3.0 / (8.0 * ac * ac * acd.powi(3))
        + 1.0 / (4.0 * ac.powi(3) * d * d)
        + 29.0 / (8.0 * ac.powi(3) * acd * acd)
        - 2.0 / (ac.powi(3) * a2d * a2d)
        + 12.0 / (ac.powi(3) * t3a2d * t3a2d)
        + 5.0 / (8.0 * ac.powi(4) * d)
        - 85.0 / (8.0 * ac.powi(4) * acd)
        - 4.0 / (ac.powi(4) * a2d)
        + 24.0 / (ac.powi(4) * t3a2d)
        - 1.0 / (2.0 * d.powi(5));
    let c3 = -ac * (2.0 * ac * ac + 8.0 * ac * d + 7.0 * d * d)
        / (8.0 * d.powi(3) * acd.powi(3) * a2d * a2d);
    [c1, c2, c3]
}

/// Fourth-order ZI coefficient: ω_zi⁽⁴⁾ = C (Ω_cx² + Ω_cy²)².
fn c4_zi(d: f64, ac: f64) -> f64 {
    let acd = ac + d;
    let a2d = ac + 2.0 * d;
    let t3a2d = 3.0 * ac + 2.0 * d;
    (3.0 * ac.powi(5) + 11.0 * ac.powi(4) * d + 15.0 * ac.powi(3) * d * d
        + 9.0 * ac * ac * d.powi(3))
        / (8.0 * d.powi(3) * acd.powi(3) * a2d * t3a2d)
}

/// Accumulate the effective rates through perturbative order `max_order`
/// (0 ≤ max_order ≤ 4) at one instant of the drive.
pub fn rates_up_to_order(
    p: &DeviceParams,
    drive: &DriveAt,
    max_order: u8,
) -> Result<EffectiveRates, CrError> {
    assert!(max_order <= 4, "perturbative orders 0..=4 are implemented");
    if !drive.is_finite() {
        return Err(CrError::InvalidPulse("drive sample is not finite".into()));
    }
    check_guards(p, max_order)?;

    let d = p.delta_ct_ang();
    let ac = p.alpha_c_ang();
    let at = p.alpha_t_ang();
    let j = p.j_ang();

    let cx = mhz_to_rad_ns(drive.cx);
    let cy = mhz_to_rad_ns(drive.cy);
    let tx = mhz_to_rad_ns(drive.tx);
    let ty = mhz_to_rad_ns(drive.ty);
    // MHz/ns → rad/ns² uses the same 2π·10⁻³ factor.
    let dcx = MHZ_TO_RAD_NS * drive.dcx;
    let dcy = MHZ_TO_RAD_NS * drive.dcy;

    let mut r = EffectiveRates::default();

    // Order 0: static ZZ.
    r.w_zz += (1.0 / (d - at) - 1.0 / (d + ac)) * j * j;
    r.order_mask |= 1;
    if max_order == 0 {
        return Ok(r);
    }

    // Order 1: linear response of the single-excitation rates.
    r.w_ix += tx - j / (d + ac) * cx;
    r.w_iy += ty - j / (d + ac) * cy;
    let k_zx = j / (d + ac) - j / d;
    r.w_zx += k_zx * cx;
    r.w_zy += k_zx * cy;
    r.order_mask |= 1 << 1;
    if max_order == 1 {
        return Ok(r);
    }

    // Order 2: Stark-type diagonal shifts.
    let quad = cx * cx + cy * cy;
    let cross = tx * cx + ty * cy;
    let curl = cx * dcy - cy * dcx;
    let tcurl = tx * dcy - ty * dcx;
    for (c, w) in [
        (c2_zi(d, ac, at), &mut r.w_zi),
        (c2_iz(d, ac, at), &mut r.w_iz),
        (c2_zz(d, ac, at), &mut r.w_zz),
    ] {
        *w += c[0] * quad
            + c[1] * j * j * quad
            + c[2] * j * cross
            + c[3] * curl
            + c[4] * j * j * curl
            + c[5] * j * tcurl;
    }
    r.order_mask |= 1 << 2;
    if max_order == 2 {
        return Ok(r);
    }

    // Order 3: cubic corrections to IX and ZX.
    let cix = c3_ix(d, ac);
    let czx = c3_zx(d, ac);
    r.w_ix += j * (cix[0] * quad * cx + cix[1] * dcx * dcx * cx + cix[2] * dcy * dcy * cx);
    r.w_zx += j * (czx[0] * quad * cx + czx[1] * dcx * dcx * cx + czx[2] * dcy * dcy * cx);
    r.order_mask |= 1 << 3;
    if max_order == 3 {
        return Ok(r);
    }

    // Order 4: quartic ZI correction.
    r.w_zi += c4_zi(d, ac) * quad * quad;
    r.order_mask |= 1 << 4;
    Ok(r)
}

/// All perturbative coefficients at the operating point, keyed by name.
/// Values carry angular units (powers of rad/ns as dictated by each term);
/// `zz0` is the static ZZ rate itself (rad/ns).
pub fn coefficient_table(p: &DeviceParams) -> Result<BTreeMap<&'static str, f64>, CrError> {
    check_guards(p, 4)?;
    let d = p.delta_ct_ang();
    let ac = p.alpha_c_ang();
    let at = p.alpha_t_ang();
    let j = p.j_ang();

    let mut m = BTreeMap::new();
    m.insert("zz0", (1.0 / (d - at) - 1.0 / (d + ac)) * j * j);
    m.insert("k1_ix_cx", -j / (d + ac));
    m.insert("k1_zx_cx", j / (d + ac) - j / d);
    let names_zi = ["c_zi_1", "c_zi_2", "c_zi_3", "c_zi_4", "c_zi_5", "c_zi_6"];
    let names_iz = ["c_iz_1", "c_iz_2", "c_iz_3", "c_iz_4", "c_iz_5", "c_iz_6"];
    let names_zz = ["c_zz_1", "c_zz_2", "c_zz_3", "c_zz_4", "c_zz_5", "c_zz_6"];
    for (names, vals) in [
        (names_zi, c2_zi(d, ac, at)),
        (names_iz, c2_iz(d, ac, at)),
        (names_zz, c2_zz(d, ac, at)),
    ] {
        for (n, v) in names.iter().zip(vals) {
            m.insert(n, v);
        }
    }
    for (n, v) in ["c_ix3_1", "c_ix3_2", "c_ix3_3"].iter().zip(c3_ix(d, ac)) {
        m.insert(n, v);
    }
    for (n, v) in ["c_zx3_1", "c_zx3_2", "c_zx3_3"].iter().zip(c3_zx(d, ac)) {
        m.insert(n, v);
    }
    m.insert("c_zi4", c4_zi(d, ac));
    Ok(m)
}

/// Collective frequencies ω_± = [(ω_ix ± ω_zx)² + (ω_iy ± ω_zy)²
/// + (ω_iz ± ω_zz)²]^{1/2} of the control-conditioned target rotations.
pub fn collective_frequencies(r: &EffectiveRates) -> CollectiveFrequencies {
    let sum_sq = |a: f64, b: f64, c: f64| (a * a + b * b + c * c).sqrt();
    CollectiveFrequencies {
        w_plus: sum_sq(r.w_ix + r.w_zx, r.w_iy + r.w_zy, r.w_iz + r.w_zz),
        w_minus: sum_sq(r.w_ix - r.w_zx, r.w_iy - r.w_zy, r.w_iz - r.w_zz),
    }
}

/// sin(w t / 2) / w with the analytic w → 0 limit t/2, switching to the
/// quadratic series below |w t / 2| < 1e-6.
fn sin_half_over(w: f64, t: f64) -> f64 {
    let y = 0.5 * w * t;
    if y.abs() < 1e-6 {
        0.5 * t * (1.0 - y * y / 6.0)
    } else {
        y.sin() / w
    }
}

/// Effective evolution operator over the computational subspace after time t
/// (ns) of constant rates, in the ordered basis {|00⟩, |01⟩, |10⟩, |11⟩}
/// (control index major). Exactly block-diagonal in the control state; the
/// ω_± → 0 limits are taken analytically.
pub fn effective_unitary(r: &EffectiveRates, t: f64) -> Result<Array2<C64>, CrError> {
    let CollectiveFrequencies { w_plus, w_minus } = collective_frequencies(r);
    if !w_plus.is_finite() || !w_minus.is_finite() || !r.w_zi.is_finite() || !t.is_finite() {
        return Err(CrError::ZeroCollectiveFrequency);
    }
    let i = C64::new(0.0, 1.0);
    // Control-|0⟩ block rotates at ω₊ under phase e^{−i ω_zi t/2}; the
    // control-|1⟩ block at ω₋ under the conjugate phase.
    let ep = (-i * C64::from(0.5 * r.w_zi * t)).exp();
    let em = (i * C64::from(0.5 * r.w_zi * t)).exp();
    let cp = C64::from((0.5 * w_plus * t).cos());
    let cm = C64::from((0.5 * w_minus * t).cos());
    let sp = sin_half_over(w_plus, t);
    let sm = sin_half_over(w_minus, t);

    let (ax_p, ay_p, az_p) = (r.w_ix + r.w_zx, r.w_iy + r.w_zy, r.w_iz + r.w_zz);
    let (ax_m, ay_m, az_m) = (r.w_ix - r.w_zx, r.w_iy - r.w_zy, r.w_iz - r.w_zz);

    let mut u = Array2::<C64>::zeros((4, 4));
    u[(0, 0)] = ep * (cp - i * az_p * sp);
    u[(0, 1)] = -ep * (i * ax_p + ay_p) * sp;
    u[(1, 0)] = -ep * (i * ax_p - ay_p) * sp;
    u[(1, 1)] = ep * (cp + i * az_p * sp);
    u[(2, 2)] = em * (cm - i * az_m * sm);
    u[(2, 3)] = -em * (i * ax_m + ay_m) * sm;
    u[(3, 2)] = -em * (i * ax_m - ay_m) * sm;
    u[(3, 3)] = em * (cm + i * az_m * sm);
    Ok(u)
}

/// Coefficients u_mn = ¼ Tr[(σ_m ⊗ σ_n) U] of a 4×4 operator over the
/// two-qubit Pauli basis, indexed [m][n] in the order I, X, Y, Z
/// (first factor = control).
pub fn pauli_decomposition(u: &Array2<C64>) -> [[C64; 4]; 4] {
    assert_eq!(u.dim(), (4, 4), "expected a two-qubit (4×4) operator");
    let mut out = [[C64::from(0.0); 4]; 4];
    for (mi, m) in Pauli::ALL.into_iter().enumerate() {
        for (ni, n) in Pauli::ALL.into_iter().enumerate() {
            let basis = kron(&m.matrix(), &n.matrix());
            let trace: C64 = basis.dot(u).diag().sum();
            out[mi][ni] = trace * 0.25;
        }
    }
    out
}

/// Leading non-block-diagonal (leakage-type) elements of the evolution
/// operator at the end of the pulse, produced by the discontinuity of the
/// envelope slope at the endpoints. Labels denote the control-side Pauli
/// component X or Y paired with the target-side component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonBdElements {
    pub xi: C64,
    pub xx: C64,
    pub xy: C64,
    pub xz: C64,
    pub yi: C64,
    pub yx: C64,
    pub yy: C64,
    pub yz: C64,
}

impl NonBdElements {
    pub fn to_map(&self) -> BTreeMap<&'static str, C64> {
        BTreeMap::from([
            ("u_xi", self.xi),
            ("u_xx", self.xx),
            ("u_xy", self.xy),
            ("u_xz", self.xz),
            ("u_yi", self.yi),
            ("u_yx", self.yx),
            ("u_yy", self.yy),
            ("u_yz", self.yz),
        ])
    }

    pub fn max_abs(&self) -> f64 {
        [self.xi, self.xx, self.xy, self.xz, self.yi, self.yx, self.yy, self.yz]
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }
}

/// Core evaluation from boundary data: τ in ns, Δ_ct in rad/ns, complex
/// envelope slopes Ω̇_c(0), Ω̇_c(τ) in rad/ns².
fn nonbd_from_boundary(
    r: &EffectiveRates,
    delta_ct_ang: f64,
    tau: f64,
    dot0: C64,
    dot_tau: C64,
) -> NonBdElements {
    let i = C64::new(0.0, 1.0);
    let d = delta_ct_ang;
    let pref = 1.0 / (4.0 * d * d);
    let e_delta = (i * C64::from(d * tau)).exp();

    let CollectiveFrequencies { w_plus, w_minus } = collective_frequencies(r);
    let phase_m = (i * C64::from(0.5 * r.w_zi * tau)).exp();
    let phase_p = (-i * C64::from(0.5 * r.w_zi * tau)).exp();
    let cm = C64::from((0.5 * w_minus * tau).cos());
    let cp = C64::from((0.5 * w_plus * tau).cos());
    let sm = C64::from(sin_half_over(w_minus, tau));
    let sp = C64::from(sin_half_over(w_plus, tau));

    // Slope combinations with the end-point slope rotated by e^{±iΔτ}; the
    // X-row uses the difference, the Y-row the sum.
    let bm = dot0 - e_delta * dot_tau;
    let bp = dot0 + e_delta * dot_tau;
    let am = bm.conj();
    let ap = bp.conj();

    let (ax_p, ay_p, az_p) = (r.w_ix + r.w_zx, r.w_iy + r.w_zy, r.w_iz + r.w_zz);
    let (ax_m, ay_m, az_m) = (r.w_ix - r.w_zx, r.w_iy - r.w_zy, r.w_iz - r.w_zz);

    NonBdElements {
        xi: i * pref * (am * phase_m * cm + bm * phase_p * cp),
        xx: pref * (ax_m * am * phase_m * sm + ax_p * bm * phase_p * sp),
        xy: pref * (ay_m * am * phase_m * sm + ay_p * bm * phase_p * sp),
        xz: pref * (az_m * am * phase_m * sm + az_p * bm * phase_p * sp),
        yi: pref * (ap * phase_m * cm - bp * phase_p * cp),
        yx: i * pref * (-ax_m * ap * phase_m * sm + ax_p * bp * phase_p * sp),
        yy: i * pref * (-ay_m * ap * phase_m * sm + ay_p * bp * phase_p * sp),
        yz: i * pref * (-az_m * ap * phase_m * sm + az_p * bp * phase_p * sp),
    }
}

/// Non-block-diagonal elements at the end of the pulse, sampled from the
/// control envelope. Requires Ω_c(0) = Ω_c(τ_p) = 0; returns
/// [`CrError::NonzeroEndpointAmplitude`] otherwise and
/// [`CrError::NearPole`] when Δ_ct is too small.
pub fn nonbd_elements(
    p: &DeviceParams,
    r: &EffectiveRates,
    control: &dyn SmoothEnvelope,
) -> Result<NonBdElements, CrError> {
    guard("delta_ct", p.delta_ct_ang())?;
    let tau = control.tau_p();
    let at_start = control.value(0.0).norm();
    let at_end = control.value(tau).norm();
    if at_start > 1e-9 || at_end > 1e-9 {
        return Err(CrError::NonzeroEndpointAmplitude { at_start, at_end });
    }
    let dot0 = control.rate(0.0) * MHZ_TO_RAD_NS;
    let dot_tau = control.rate(tau) * MHZ_TO_RAD_NS;
    Ok(nonbd_from_boundary(r, p.delta_ct_ang(), tau, dot0, dot_tau))
}
