//! Unit conventions and conversions.
//!
//! All user-facing frequencies are linear MHz; all internal frequencies are
//! angular rad/ns. Times are ns everywhere. The two are related by
//! ω [rad/ns] = 2π·10⁻³ · f [MHz], so e.g. a 50 MHz detuning is
//! ≈ 0.314 rad/ns and "one period of 2π/Δ" for 50 MHz is exactly 20 ns.

use std::f64::consts::PI;

/// Multiply a linear MHz value by this to get angular rad/ns.
pub const MHZ_TO_RAD_NS: f64 = 2.0e-3 * PI;

/// Linear MHz → angular rad/ns.
pub fn mhz_to_rad_ns(f_mhz: f64) -> f64 {
    f_mhz * MHZ_TO_RAD_NS
}

/// Angular rad/ns → linear MHz.
pub fn rad_ns_to_mhz(w: f64) -> f64 {
    w / MHZ_TO_RAD_NS
}

/// Angular rad/ns → linear kHz (reporting convention for small rates).
pub fn rad_ns_to_khz(w: f64) -> f64 {
    1.0e3 * rad_ns_to_mhz(w)
}
