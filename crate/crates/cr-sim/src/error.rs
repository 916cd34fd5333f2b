//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the simulation, calibration and analysis layers.
///
/// Config-file parsing has its own error type in [`crate::cli`]; everything
/// numerical funnels through this enum so the CLI can emit module-qualified
/// machine-readable codes.
#[derive(Debug, Clone, Error)]
pub enum CrError {
    /// Invalid device parameters (level cutoffs, non-finite fields).
    #[error("invalid device parameters: {0}")]
    InvalidDevice(String),

    /// Invalid pulse parameters (ramp longer than the pulse, non-positive times).
    #[error("invalid pulse parameters: {0}")]
    InvalidPulse(String),

    /// Two dressed eigenstates claim the same bare label, or the top two
    /// overlaps of one eigenstate are indistinguishable: the max-overlap
    /// labeling heuristic is not applicable (J too large for this detuning).
    #[error(
        "ambiguous dressed-state assignment for bare label ({nc},{nt}): \
         overlaps {o1:.6} vs {o2:.6}"
    )]
    AmbiguousAssignment { nc: usize, nt: usize, o1: f64, o2: f64 },

    /// A single Magnus step accumulated more than π of generator norm; the
    /// exponential-map accuracy contract is void and dt must shrink.
    #[error("Magnus step too large at t = {t} ns: ||K1+K2|| = {norm:.3e} rad > pi")]
    StepTooLarge { t: f64, norm: f64 },

    /// `matrix_exponential` requires a generator of the form −i·Hermitian.
    #[error("matrix is not anti-Hermitian: ||A + A^dagger||_max = {0:.3e}")]
    NotAntiHermitian(f64),

    /// An energy denominator of a closed-form rate sits within 1 MHz of a
    /// frequency collision; the perturbative expression is unreliable there.
    #[error("near pole in {context}: |denominator| = {value_mhz:.3} MHz < {limit_mhz:.3} MHz")]
    NearPole { context: &'static str, value_mhz: f64, limit_mhz: f64 },

    /// DRAG transfer/residual formulas divide by Δ_D.
    #[error("DRAG parameter Delta_D must be nonzero")]
    ZeroDragParameter,

    /// Spectrum evaluation requested on an empty frequency grid.
    #[error("empty frequency grid")]
    EmptyGrid,

    /// Frequency-domain estimator window does not cover pole ± 10 bandwidths.
    #[error(
        "frequency window too narrow: need at least [{need_lo:.3}, {need_hi:.3}] rad/ns, \
         got [{got_lo:.3}, {got_hi:.3}]"
    )]
    WindowTooNarrow { need_lo: f64, need_hi: f64, got_lo: f64, got_hi: f64 },

    /// The π-condition polynomial has no positive root below the amplitude
    /// cap: the gate time is too short for a π rotation at allowed amplitudes.
    #[error("no pi-condition root in (0, {omega_max_mhz:.1} MHz]")]
    NoRootInBracket { omega_max_mhz: f64 },

    /// Numeric refinement hit its iteration cap before the improvement
    /// threshold. (The refine API returns best-so-far with a flag instead of
    /// this error; the variant exists for CLI surfacing.)
    #[error("calibration refinement did not converge after {iters} iterations (epsilon = {best:.3e})")]
    DidNotConverge { iters: usize, best: f64 },

    /// Appendix-style endpoint formulas require Ω(0) = Ω(τ_p) = 0.
    #[error(
        "pulse amplitude nonzero at endpoints: |Omega(0)| = {at_start:.3e} MHz, \
         |Omega(tau_p)| = {at_end:.3e} MHz"
    )]
    NonzeroEndpointAmplitude { at_start: f64, at_end: f64 },

    /// The adaptive ODE oracle could not meet the requested tolerance
    /// (step size underflow or step budget exhausted).
    #[error("ODE oracle tolerance not reached at t = {t} ns (step = {step:.3e} ns)")]
    ToleranceNotReached { t: f64, step: f64 },

    /// Collective frequency input was NaN (ω± = 0 itself is a handled
    /// analytic sin(x)/x limit, not an error).
    #[error("collective frequency is NaN")]
    ZeroCollectiveFrequency,
}

impl CrError {
    /// Stable machine-readable code for CLI error JSON.
    pub fn code(&self) -> &'static str {
        match self {
            CrError::InvalidDevice(_) => "model.invalid_device",
            CrError::InvalidPulse(_) => "pulses.invalid_pulse",
            CrError::AmbiguousAssignment { .. } => "model.ambiguous_assignment",
            CrError::StepTooLarge { .. } => "propagator.step_too_large",
            CrError::NotAntiHermitian(_) => "propagator.not_anti_hermitian",
            CrError::NearPole { .. } => "rates.near_pole",
            CrError::ZeroDragParameter => "pulses.zero_drag_parameter",
            CrError::EmptyGrid => "pulses.empty_grid",
            CrError::WindowTooNarrow { .. } => "offres.window_too_narrow",
            CrError::NoRootInBracket { .. } => "calibrate.no_root_in_bracket",
            CrError::DidNotConverge { .. } => "calibrate.did_not_converge",
            CrError::NonzeroEndpointAmplitude { .. } => "rates.nonzero_endpoint_amplitude",
            CrError::ToleranceNotReached { .. } => "propagator.tolerance_not_reached",
            CrError::ZeroCollectiveFrequency => "rates.zero_collective_frequency",
        }
    }
}
