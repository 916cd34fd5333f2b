//! Pulse envelopes: the square Gaussian, its Y-DRAG composite, the
//! polynomial cancellation tone, spectra and ramp-area functionals.
//!
//! Real amplitudes are linear MHz and times are ns throughout; a complex
//! envelope value Ω(t) = Ω_x(t) + iΩ_y(t) packs the X/Y drive quadratures.
//! Derivatives are analytic (Hermite-polynomial closed forms), never finite
//! differences.

use num_complex::Complex64 as C64;
use serde::Deserialize;

use crate::error::CrError;
use crate::quad;
use crate::units::MHZ_TO_RAD_NS;

/// Complex drive envelope defined on [0, τ_p].
///
/// `value` returns complex MHz; outside the support it must return zero.
/// `breakpoints` lists the times where the envelope is not smooth (piece
/// joins), used to split quadratures; it must start at 0 and end at τ_p.
pub trait Envelope: Sync {
    fn value(&self, t: f64) -> C64;
    fn tau_p(&self) -> f64;
    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0, self.tau_p()]
    }
}

/// Envelope with an analytic first time derivative (complex MHz/ns), used
/// where boundary derivative values enter closed-form expressions.
pub trait SmoothEnvelope: Envelope {
    fn rate(&self, t: f64) -> C64;
}

/// Envelope with analytic derivatives of every order (complex MHz/nsⁿ);
/// n = 0 returns the value itself. Edge conventions follow
/// [`SquareGaussian::derivative`]: interior one-sided limits.
pub trait DifferentiableEnvelope: Envelope {
    fn derivative_n(&self, t: f64, n: u32) -> C64;
}

/// Flat-top pulse with truncated-Gaussian ramps:
///
/// Ω_SG(t) = Ω (g(t) − g₀)/(1 − g₀) on the ramps and Ω on the flat top,
/// where g(t) is a Gaussian of deviation σ_r centered on the nearer flat-top
/// join and g₀ is its value at the pulse edge. Exactly zero at t = 0 and
/// t = τ_p, exactly Ω on [τ_r, τ_p − τ_r].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareGaussian {
    amp: f64,
    tau_p: f64,
    tau_r: f64,
    sigma_r: f64,
}

impl SquareGaussian {
    /// Standard linkage σ_r = τ_r/2.
    pub fn new(amp: f64, tau_p: f64, tau_r: f64) -> Result<Self, CrError> {
        Self::with_sigma(amp, tau_p, tau_r, 0.5 * tau_r)
    }

    /// Independent σ_r. Requires 0 < 2τ_r ≤ τ_p and σ_r > 0.
    pub fn with_sigma(amp: f64, tau_p: f64, tau_r: f64, sigma_r: f64) -> Result<Self, CrError> {
        if !(amp.is_finite() && tau_p.is_finite() && tau_r.is_finite() && sigma_r.is_finite()) {
            return Err(CrError::InvalidPulse("non-finite pulse parameter".into()));
        }
        if !(tau_r > 0.0 && 2.0 * tau_r <= tau_p) {
            return Err(CrError::InvalidPulse(format!(
                "need 0 < 2*tau_r <= tau_p, got tau_r = {tau_r}, tau_p = {tau_p}"
            )));
        }
        if sigma_r <= 0.0 {
            return Err(CrError::InvalidPulse(format!("sigma_r must be positive, got {sigma_r}")));
        }
        Ok(Self { amp, tau_p, tau_r, sigma_r })
    }

    pub fn amp(&self) -> f64 { self.amp }
    pub fn tau_p(&self) -> f64 { self.tau_p }
    pub fn tau_r(&self) -> f64 { self.tau_r }
    pub fn sigma_r(&self) -> f64 { self.sigma_r }

    /// Same shape with a different peak amplitude (calibration rescale).
    pub fn with_amp(&self, amp: f64) -> Self {
        Self { amp, ..*self }
    }

    /// Truncation offset g₀ = exp(−τ_r²/2σ_r²); with σ_r = τ_r/2 this is
    /// e⁻² regardless of τ_r.
    fn g0(&self) -> f64 {
        (-0.5 * (self.tau_r / self.sigma_r).powi(2)).exp()
    }

    /// Gaussian ramp center for time `t`, or None on the flat top / outside.
    fn ramp_center(&self, t: f64) -> Option<f64> {
        if !(0.0..=self.tau_p).contains(&t) {
            None
        } else if t <= self.tau_r {
            Some(self.tau_r)
        } else if t >= self.tau_p - self.tau_r {
            Some(self.tau_p - self.tau_r)
        } else {
            None
        }
    }

    /// Normalized shape Ω_SG(t)/Ω ∈ [0, 1] (amp-independent).
    pub fn shape(&self, t: f64) -> f64 {
        if !(0.0..=self.tau_p).contains(&t) {
            return 0.0;
        }
        match self.ramp_center(t) {
            None => 1.0,
            Some(c) => {
                let g0 = self.g0();
                let g = (-0.5 * ((t - c) / self.sigma_r).powi(2)).exp();
                // Exactly 0 at the pulse edges, exactly 1 at the joins.
                (g - g0) / (1.0 - g0)
            }
        }
    }

    /// Envelope value Ω_SG(t) in MHz.
    pub fn value_real(&self, t: f64) -> f64 {
        self.amp * self.shape(t)
    }

    /// nth time derivative (MHz/nsⁿ), analytic.
    ///
    /// The Gaussian piece obeys dⁿg/dtⁿ = (−1)ⁿ (σ√2)⁻ⁿ Hₙ(u) g with
    /// u = (t−c)/(σ√2) and physicists' Hermite polynomials Hₙ. Exactly zero
    /// on the flat top. At t = 0 and t = τ_p the *interior* one-sided limit
    /// is returned (the pulse is only C⁰ there); at the flat-top joins the
    /// ramp-side value is returned (C¹ there, so n = 1 agrees anyway).
    pub fn derivative(&self, t: f64, n: u32) -> f64 {
        if n == 0 {
            return self.value_real(t);
        }
        if !(0.0..=self.tau_p).contains(&t) {
            return 0.0;
        }
        let c = match self.ramp_center(t) {
            None => return 0.0,
            Some(c) => c,
        };
        let s = self.sigma_r * std::f64::consts::SQRT_2;
        let u = (t - c) / s;
        // Hermite recurrence H_{k+1} = 2u H_k − 2k H_{k−1}.
        let (mut hm, mut h) = (0.0_f64, 1.0_f64);
        for k in 0..n {
            let next = 2.0 * u * h - 2.0 * (k as f64) * hm;
            hm = h;
            h = next;
        }
        let g = (-u * u).exp();
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        self.amp / (1.0 - self.g0()) * sign * s.powi(-(n as i32)) * h * g
    }
}

impl Envelope for SquareGaussian {
    fn value(&self, t: f64) -> C64 {
        C64::from(self.value_real(t))
    }

    fn tau_p(&self) -> f64 {
        self.tau_p
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0, self.tau_r, self.tau_p - self.tau_r, self.tau_p]
    }
}

impl SmoothEnvelope for SquareGaussian {
    fn rate(&self, t: f64) -> C64 {
        C64::from(self.derivative(t, 1))
    }
}

impl DifferentiableEnvelope for SquareGaussian {
    fn derivative_n(&self, t: f64, n: u32) -> C64 {
        C64::from(self.derivative(t, n))
    }
}

/// Y-DRAG composite envelope Ω_c(t) = Ω_SG(t) + (i/Δ_D) Ω̇_SG(t).
///
/// The imaginary part carries the derivative scaled by the DRAG parameter
/// Δ_D (sign meaningful); in linear-MHz bookkeeping that is
/// Ω_cy[MHz] = Ω̇_SG[MHz/ns] / (2π·10⁻³ · Δ_D[MHz]). It vanishes on the
/// flat top where the derivative is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DragEnvelope {
    base: SquareGaussian,
    delta_d: f64,
    enabled: bool,
}

impl DragEnvelope {
    /// DRAG with parameter `delta_d` in MHz; must be nonzero.
    pub fn new(base: SquareGaussian, delta_d: f64) -> Result<Self, CrError> {
        if delta_d == 0.0 || delta_d.is_nan() {
            return Err(CrError::ZeroDragParameter);
        }
        Ok(Self { base, delta_d, enabled: true })
    }

    /// Plain square Gaussian (no derivative component).
    pub fn disabled(base: SquareGaussian) -> Self {
        Self { base, delta_d: f64::INFINITY, enabled: false }
    }

    /// Build from the sweep axis 1/Δ_D (MHz⁻¹); zero means DRAG off.
    pub fn from_inverse(base: SquareGaussian, inv_delta_d: f64) -> Self {
        if inv_delta_d == 0.0 {
            Self::disabled(base)
        } else {
            Self { base, delta_d: 1.0 / inv_delta_d, enabled: true }
        }
    }

    pub fn base(&self) -> &SquareGaussian { &self.base }
    pub fn delta_d(&self) -> f64 { self.delta_d }
    pub fn enabled(&self) -> bool { self.enabled }

    /// Same DRAG setting on a rescaled base amplitude.
    pub fn with_amp(&self, amp: f64) -> Self {
        Self { base: self.base.with_amp(amp), ..*self }
    }

    /// (Ω_cx, Ω_cy) in MHz.
    pub fn quadratures(&self, t: f64) -> (f64, f64) {
        let x = self.base.value_real(t);
        let y = if self.enabled {
            self.base.derivative(t, 1) / (MHZ_TO_RAD_NS * self.delta_d)
        } else {
            0.0
        };
        (x, y)
    }

    /// (Ω̇_cx, Ω̇_cy) in MHz/ns.
    pub fn quadrature_rates(&self, t: f64) -> (f64, f64) {
        let dx = self.base.derivative(t, 1);
        let dy = if self.enabled {
            self.base.derivative(t, 2) / (MHZ_TO_RAD_NS * self.delta_d)
        } else {
            0.0
        };
        (dx, dy)
    }
}

impl Envelope for DragEnvelope {
    fn value(&self, t: f64) -> C64 {
        let (x, y) = self.quadratures(t);
        C64::new(x, y)
    }

    fn tau_p(&self) -> f64 {
        self.base.tau_p()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.base.breakpoints()
    }
}

impl SmoothEnvelope for DragEnvelope {
    fn rate(&self, t: f64) -> C64 {
        let (dx, dy) = self.quadrature_rates(t);
        C64::new(dx, dy)
    }
}

impl DifferentiableEnvelope for DragEnvelope {
    fn derivative_n(&self, t: f64, n: u32) -> C64 {
        let re = self.base.derivative(t, n);
        if self.enabled {
            let im = self.base.derivative(t, n + 1) / (MHZ_TO_RAD_NS * self.delta_d);
            C64::new(re, im)
        } else {
            C64::from(re)
        }
    }
}

/// Target cancellation tone: pointwise polynomial map of the control shape,
/// Ω_t(t) = c₁ Ω_SG(t) + c₃ Ω_SG(t)³ (real; c₁ dimensionless, c₃ in MHz⁻²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolynomialTone {
    base: SquareGaussian,
    c1: f64,
    c3: f64,
}

impl PolynomialTone {
    pub fn new(base: SquareGaussian, c1: f64, c3: f64) -> Self {
        Self { base, c1, c3 }
    }

    pub fn coeffs(&self) -> (f64, f64) {
        (self.c1, self.c3)
    }

    pub fn value_real(&self, t: f64) -> f64 {
        let x = self.base.value_real(t);
        self.c1 * x + self.c3 * x.powi(3)
    }
}

impl Envelope for PolynomialTone {
    fn value(&self, t: f64) -> C64 {
        C64::from(self.value_real(t))
    }

    fn tau_p(&self) -> f64 {
        self.base.tau_p()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.base.breakpoints()
    }
}

impl SmoothEnvelope for PolynomialTone {
    fn rate(&self, t: f64) -> C64 {
        let s = self.base.value_real(t);
        let ds = self.base.derivative(t, 1);
        C64::from((self.c1 + 3.0 * self.c3 * s * s) * ds)
    }
}

/// Constant complex amplitude on [0, τ_p]; zero outside. Test/reference
/// envelope (the square-pulse limit).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEnvelope {
    pub amp: C64,
    pub tau_p: f64,
}

impl Envelope for ConstantEnvelope {
    fn value(&self, t: f64) -> C64 {
        if (0.0..=self.tau_p).contains(&t) {
            self.amp
        } else {
            C64::from(0.0)
        }
    }

    fn tau_p(&self) -> f64 {
        self.tau_p
    }
}

impl SmoothEnvelope for ConstantEnvelope {
    fn rate(&self, _t: f64) -> C64 {
        C64::from(0.0)
    }
}

impl DifferentiableEnvelope for ConstantEnvelope {
    fn derivative_n(&self, t: f64, n: u32) -> C64 {
        if n == 0 {
            self.value(t)
        } else {
            C64::from(0.0)
        }
    }
}

/// Fourier transform Ω̃(ω) = ∫₀^{τ_p} Ω(t) e^{−iωt} dt (MHz·ns) on an
/// angular-frequency grid (rad/ns), by adaptive quadrature split at the
/// envelope's breakpoints, relative tolerance 1e-8.
pub fn spectrum<E: Envelope + ?Sized>(env: &E, omega_grid: &[f64]) -> Result<Vec<C64>, CrError> {
    if omega_grid.is_empty() {
        return Err(CrError::EmptyGrid);
    }
    Ok(omega_grid.iter().map(|&w| spectrum_at(env, w)).collect())
}

/// Single-frequency transform (same rule as [`spectrum`]).
pub fn spectrum_at<E: Envelope + ?Sized>(env: &E, omega: f64) -> C64 {
    let bps = env.breakpoints();
    let mut total = C64::from(0.0);
    for pair in bps.windows(2) {
        let f = |t: f64| env.value(t) * C64::new(0.0, -omega * t).exp();
        total += quad::integrate(&f, pair[0], pair[1], 1e-8, 0.0).value;
    }
    total
}

/// Reduced ramp area s_n(τ_r) = ∫_ramps [1 − (Ω_SG/Ω)ⁿ] dt in time units
/// (ns), so that ∫ Ω_SGⁿ dt = Ωⁿ [τ_p − s_n(τ_r)]. Independent of the peak
/// amplitude. `n ≥ 1`.
pub fn reduced_ramp_area(env: &SquareGaussian, n: u32) -> f64 {
    assert!(n >= 1, "reduced_ramp_area: n must be >= 1");
    // Both ramps have the same shape; integrate the rising one and double.
    let f = |t: f64| C64::from(1.0 - env.shape(t).powi(n as i32));
    2.0 * quad::integrate(&f, 0.0, env.tau_r(), 1e-8, 1e-14).value.re
}

/// DRAG transfer function T_D(ω) = 1 − ω/Δ_D, with `delta_d` in MHz and
/// `omega` in rad/ns (converted consistently).
pub fn drag_transfer_function(delta_d: f64, omega: f64) -> Result<f64, CrError> {
    if delta_d == 0.0 || delta_d.is_nan() {
        return Err(CrError::ZeroDragParameter);
    }
    Ok(1.0 - omega / (MHZ_TO_RAD_NS * delta_d))
}

/// `pulse` config table.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub shape: PulseShape,
    pub amp_mhz: f64,
    pub tau_p_ns: f64,
    pub tau_r_ns: f64,
    #[serde(default)]
    pub sigma_r_ns: Option<f64>,
    #[serde(default)]
    pub drag_delta_mhz: Option<f64>,
}

/// Supported pulse shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum PulseShape {
    #[serde(rename = "square_gaussian")]
    SquareGaussian,
}

impl PulseConfig {
    /// Construct the control envelope (σ_r defaults to τ_r/2; DRAG off when
    /// `drag_delta_mhz` is absent).
    pub fn build(&self) -> Result<DragEnvelope, CrError> {
        let PulseShape::SquareGaussian = self.shape;
        let sigma = self.sigma_r_ns.unwrap_or(0.5 * self.tau_r_ns);
        let base = SquareGaussian::with_sigma(self.amp_mhz, self.tau_p_ns, self.tau_r_ns, sigma)?;
        match self.drag_delta_mhz {
            Some(dd) => DragEnvelope::new(base, dd),
            None => Ok(DragEnvelope::disabled(base)),
        }
    }
}
