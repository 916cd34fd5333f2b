//! Time propagation: 2nd-order Magnus stepper with Gauss–Legendre nodes,
//! scaling-and-squaring matrix exponential, and an independent adaptive
//! Runge–Kutta oracle for cross-validation.
//!
//! The propagator works in the interaction frame of the static Hamiltonian
//! and returns the interaction-frame propagator U_I(τ_p) in the bare product
//! basis. Internally it steps in the dressed eigenbasis, where the frame
//! phases reduce to e^{iμ_j t} with μ_j = E_j − N_j ω_d (N_j = total
//! excitation number of dressed state j): the drive only connects states
//! with ΔN = ±1, so the explicit e^{±iω_d t} drive phases cancel against the
//! ω_d part of the frame phases and every retained phase is slow.

use ndarray::linalg::kron;
use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::CrError;
use crate::linalg::{self, OperatorMatrix};
use crate::model::{self, DeviceParams};
use crate::pulses::Envelope;
use crate::units::MHZ_TO_RAD_NS;

/// Quadrature rule for the Magnus generators on one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    /// Two-point Gauss–Legendre (nodes 1/2 ∓ √3/6): 4th-order step.
    #[default]
    GaussLegendre2,
}

/// Magnus stepper configuration.
#[derive(Debug, Clone, Copy)]
pub struct MagnusConfig {
    /// Step size in ns.
    pub dt: f64,
    /// Node rule for the generators.
    pub quadrature: Quadrature,
    /// Truncation tolerance of the matrix-exponential series.
    pub expm_tol: f64,
}

impl Default for MagnusConfig {
    fn default() -> Self {
        Self { dt: 0.01, quadrature: Quadrature::GaussLegendre2, expm_tol: 1e-12 }
    }
}

/// Gauss–Legendre nodes on [0, 1].
const GL2_LO: f64 = 0.5 - 0.288_675_134_594_812_9; // 1/2 − √3/6
const GL2_HI: f64 = 0.5 + 0.288_675_134_594_812_9; // 1/2 + √3/6
/// K₂ prefactor √3/12.
const GL2_K2: f64 = 0.144_337_567_297_406_44;

/// First- and second-order Magnus generators over one step [t0, t0 + dt]
/// for a Hamiltonian closure (rad/ns), using the two-point Gauss–Legendre
/// rule:
///
/// K₁ = (dt/2)(H₁ + H₂),  K₂ = i(√3/12) dt² [H₁, H₂],
///
/// so that the step propagator is exp(−i(K₁ + K₂)). Both generators are
/// Hermitian.
pub fn magnus_generators<F>(h: &F, t0: f64, dt: f64) -> (OperatorMatrix, OperatorMatrix)
where
    F: Fn(f64) -> OperatorMatrix + ?Sized,
{
    let h1 = h(t0 + GL2_LO * dt);
    let h2 = h(t0 + GL2_HI * dt);
    gl2_generators(&h1, &h2, dt)
}

/// Generator core shared by [`magnus_generators`] and the internal stepper.
fn gl2_generators(h1: &OperatorMatrix, h2: &OperatorMatrix, dt: f64) -> (OperatorMatrix, OperatorMatrix) {
    let k1 = (h1 + h2) * C64::from(0.5 * dt);
    let k2 = linalg::commutator(h1, h2) * C64::new(0.0, GL2_K2 * dt * dt);
    (k1, k2)
}

/// exp(−iK) for Hermitian K by scaling-and-squaring with a truncated
/// Taylor series (truncation bound `tol`). Errors with `NotAntiHermitian`
/// if −iK is not anti-Hermitian, i.e. K is not Hermitian, beyond 1e-10
/// relative.
pub fn matrix_exponential(k: &OperatorMatrix, tol: f64) -> Result<OperatorMatrix, CrError> {
    let defect = linalg::hermiticity_error(k);
    if defect > 1e-10 {
        return Err(CrError::NotAntiHermitian(defect));
    }
    let n = k.nrows();
    let norm = linalg::max_abs(k) * n as f64; // cheap upper bound on ‖K‖₁
    let s = if norm > 0.25 { (norm / 0.25).log2().ceil() as u32 } else { 0 };
    let scale = C64::new(0.0, -1.0) / C64::from(2.0_f64.powi(s as i32));
    let b = k * scale;

    // exp(B) = Σ Bᵏ/k!, terms added until they fall below tol.
    let mut result = Array2::<C64>::eye(n);
    let mut term = Array2::<C64>::eye(n);
    for j in 1..=64 {
        term = term.dot(&b) / C64::from(j as f64);
        result = result + &term;
        if linalg::max_abs(&term) < tol {
            break;
        }
    }
    for _ in 0..s {
        result = result.dot(&result);
    }
    Ok(result)
}

/// Propagate the driven device over the control pulse and return the
/// interaction-frame propagator U_I(τ_p) in the bare product basis.
///
/// `control` drives the control transmon and `target` (if any) the target
/// transmon, both at the device drive frequency. Fails with `StepTooLarge`
/// if a Magnus generator norm exceeds π (the step must be refined), and
/// propagates any dressed-basis ambiguity of the device.
pub fn propagate(
    params: &DeviceParams,
    control: &dyn Envelope,
    target: Option<&dyn Envelope>,
    cfg: &MagnusConfig,
) -> Result<OperatorMatrix, CrError> {
    let Quadrature::GaussLegendre2 = cfg.quadrature;
    if !(cfg.dt.is_finite() && cfg.dt > 0.0) {
        return Err(CrError::InvalidPulse(format!("magnus dt must be positive, got {}", cfg.dt)));
    }
    let h_s = model::build_static_hamiltonian(params);
    let basis = model::dressed_basis(params, &h_s)?;
    let dim = basis.dim();
    let v = basis.states(); // columns: dressed states in the bare basis

    // Dressed-basis raising operators and slow frame phases μ_j.
    let raise_c = dressed_raising(v, &model::annihilation(params.levels_c()), true, params);
    let raise_t = dressed_raising(v, &model::annihilation(params.levels_t()), false, params);
    let wd = params.omega_d_ang();
    let mu: Vec<f64> = (0..dim)
        .map(|idx| {
            let (nc, nt) = params.label_of(idx);
            // energy() is already angular (rad/ns).
            basis.energy(nc, nt) - (nc + nt) as f64 * wd
        })
        .collect();

    let tau_p = control.tau_p();
    let mut u = Array2::<C64>::eye(dim);
    let mut h1 = Array2::<C64>::zeros((dim, dim));
    let mut h2 = Array2::<C64>::zeros((dim, dim));
    let mut t = 0.0;
    while t < tau_p - 1e-12 * tau_p.max(1.0) {
        let h = cfg.dt.min(tau_p - t);
        node_hamiltonian(&mut h1, t + GL2_LO * h, control, target, &raise_c, &raise_t, &mu);
        node_hamiltonian(&mut h2, t + GL2_HI * h, control, target, &raise_c, &raise_t, &mu);
        let (k1, k2) = gl2_generators(&h1, &h2, h);
        let k = k1 + k2;
        let norm = linalg::frobenius(&k);
        if !norm.is_finite() || norm > std::f64::consts::PI {
            return Err(CrError::StepTooLarge { t, norm });
        }
        u = matrix_exponential(&k, cfg.expm_tol)?.dot(&u);
        t += h;
    }
    debug_assert!(linalg::unitarity_error(&u) < 1e-9);

    // Back to the bare basis: U_I = V Ũ V†.
    Ok(v.dot(&u).dot(&linalg::dagger(v)))
}

/// Dressed-basis raising operator Ṽ† b̂† Ṽ for one transmon, embedded in the
/// full product space.
fn dressed_raising(
    v: &OperatorMatrix,
    b: &OperatorMatrix,
    is_control: bool,
    params: &DeviceParams,
) -> OperatorMatrix {
    let bdag = linalg::dagger(b);
    let full = if is_control {
        kron(&bdag, &Array2::eye(params.levels_t()))
    } else {
        kron(&Array2::eye(params.levels_c()), &bdag)
    };
    linalg::dagger(v).dot(&full).dot(v)
}

/// Interaction-frame Hamiltonian at one quadrature node, written into `out`:
/// (H̃_I)_{jk} = e^{i(μ_j−μ_k)t} M_{jk} with
/// M = ½[Ω_c B̃_c⁺ + Ω_c* B̃_c⁻ + Ω_t B̃_t⁺ + Ω_t* B̃_t⁻] (angular units).
fn node_hamiltonian(
    out: &mut OperatorMatrix,
    t: f64,
    control: &dyn Envelope,
    target: Option<&dyn Envelope>,
    raise_c: &OperatorMatrix,
    raise_t: &OperatorMatrix,
    mu: &[f64],
) {
    let amp_c = control.value(t) * C64::from(0.5 * MHZ_TO_RAD_NS);
    let amp_t = target.map_or(C64::from(0.0), |e| e.value(t)) * C64::from(0.5 * MHZ_TO_RAD_NS);
    let dim = mu.len();
    let phases: Vec<C64> = mu.iter().map(|&m| C64::new(0.0, m * t).exp()).collect();
    for j in 0..dim {
        for k in 0..dim {
            // Raising part carries Ω, lowering part Ω*: M is Hermitian.
            let m = amp_c * raise_c[(j, k)] + amp_c.conj() * raise_c[(k, j)].conj()
                + amp_t * raise_t[(j, k)] + amp_t.conj() * raise_t[(k, j)].conj();
            out[(j, k)] = phases[j] * m * phases[k].conj();
        }
    }
}

/// Reference frame for [`oracle_propagate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// Integrate U̇_I = −i H_I(t) U_I directly.
    Interaction,
    /// Integrate in the lab frame (static + drive) and convert the result
    /// to the interaction frame at τ_p.
    Lab,
}

/// Independent cross-check propagator: adaptive Dormand–Prince 5(4) on the
/// Schrödinger equation, sharing no machinery with the Magnus stepper
/// beyond the Hamiltonian builders. Returns U_I(τ_p) in the bare basis.
///
/// `tol` is the per-step local error target on the propagator entries.
/// Fails with `ToleranceNotReached` if the controller is forced below the
/// minimum step.
pub fn oracle_propagate(
    params: &DeviceParams,
    control: &dyn Envelope,
    target: Option<&dyn Envelope>,
    tol: f64,
    frame: Frame,
) -> Result<OperatorMatrix, CrError> {
    let h_s = model::build_static_hamiltonian(params);
    let iframe = model::InteractionFrame::new(&h_s)?;
    let tau_p = control.tau_p();
    let drive = |t: f64| {
        let wc = control.value(t);
        let wt = target.map_or(C64::from(0.0), |e| e.value(t));
        model::build_drive_hamiltonian(params, wc, wt, t)
    };
    let u = match frame {
        Frame::Interaction => {
            let h_fn = |t: f64| iframe.conjugate(&drive(t), t);
            dp45(&h_fn, params.dim(), tau_p, tol)?
        }
        Frame::Lab => {
            let h_fn = |t: f64| &h_s + &drive(t);
            let u_lab = dp45(&h_fn, params.dim(), tau_p, tol)?;
            iframe.frame_unitary(tau_p).dot(&u_lab)
        }
    };
    Ok(u)
}

/// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive DP45 for U̇ = −i H(t) U, U(0) = 1, over [0, τ].
pub(crate) fn dp45<F>(h_fn: &F, dim: usize, tau: f64, tol: f64) -> Result<OperatorMatrix, CrError>
where
    F: Fn(f64) -> OperatorMatrix,
{
    let rhs = |t: f64, u: &OperatorMatrix| {
        h_fn(t).dot(u).mapv(|z| z * C64::new(0.0, -1.0))
    };
    let min_step = 1e-9;
    let mut u = Array2::<C64>::eye(dim);
    let mut t = 0.0;
    let mut h = (tau * 1e-3).min(0.1);
    let mut k1 = rhs(0.0, &u); // FSAL
    while t < tau - 1e-12 * tau.max(1.0) {
        h = h.min(tau - t);
        let mut stages: Vec<Array2<C64>> = Vec::with_capacity(7);
        stages.push(k1.clone());
        for i in 1..7 {
            let mut y = u.clone();
            for (j, stage) in stages.iter().enumerate() {
                let a = DP_A[i - 1][j];
                if a != 0.0 {
                    y = y + stage * C64::from(a * h);
                }
            }
            stages.push(rhs(t + DP_C[i] * h, &y));
        }
        let mut u5 = u.clone();
        let mut err = Array2::<C64>::zeros((dim, dim));
        for (i, stage) in stages.iter().enumerate() {
            if DP_B5[i] != 0.0 {
                u5 = u5 + stage * C64::from(DP_B5[i] * h);
            }
            let db = DP_B5[i] - DP_B4[i];
            if db != 0.0 {
                err = err + stage * C64::from(db * h);
            }
        }
        let err_norm = linalg::max_abs(&err);
        if err_norm <= tol {
            t += h;
            u = u5;
            k1 = stages[6].clone(); // FSAL: last stage is next step's first
        }
        let factor = if err_norm > 0.0 {
            (0.9 * (tol / err_norm).powf(0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= factor;
        if h < min_step {
            return Err(CrError::ToleranceNotReached { t, step: h });
        }
    }
    Ok(u)
}
