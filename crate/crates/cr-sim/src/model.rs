//! Two-transmon device model: truncated Kerr-oscillator Hamiltonians, the
//! rotating drive term, the interaction-frame conjugation, and the dressed
//! computational basis.
//!
//! Basis convention: the product space is indexed control-major, so bare state
//! |n_c, n_t⟩ sits at index `n_c * levels_t + n_t`. All Hamiltonians are
//! returned in angular units (rad/ns); [`DeviceParams`] carries linear MHz as
//! configured and converts at the accessor level.

use ndarray as nd;
use ndarray::linalg::kron;
use num_complex::Complex64 as C64;
use serde::Deserialize;

use crate::error::CrError;
use crate::linalg::{self, OperatorMatrix};
use crate::units::mhz_to_rad_ns;

/// Raw `device` config table (linear MHz / ns units, suffixed keys).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub omega_c_mhz: f64,
    pub omega_t_mhz: f64,
    pub alpha_c_mhz: f64,
    pub alpha_t_mhz: f64,
    pub j_mhz: f64,
    #[serde(default)]
    pub levels_c: Option<usize>,
    #[serde(default)]
    pub levels_t: Option<usize>,
    /// Drive frequency; defaults to the target frequency (CR condition).
    #[serde(default)]
    pub omega_d_mhz: Option<f64>,
}

/// Device parameters for the coupled control/target transmon pair.
///
/// All frequency-like fields are linear MHz; accessors with an `_ang` suffix
/// return angular rad/ns. Constructed through [`DeviceParams::new`] so the
/// level-cutoff and finiteness invariants always hold.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "DeviceConfig")]
pub struct DeviceParams {
    omega_c: f64,
    omega_t: f64,
    alpha_c: f64,
    alpha_t: f64,
    j: f64,
    levels_c: usize,
    levels_t: usize,
    omega_d: f64,
    /// Control-target detuning, stored once at construction.
    delta_ct: f64,
}

impl TryFrom<DeviceConfig> for DeviceParams {
    type Error = CrError;

    fn try_from(c: DeviceConfig) -> Result<Self, CrError> {
        let mut p = DeviceParams::new(c.omega_c_mhz, c.omega_t_mhz, c.alpha_c_mhz, c.alpha_t_mhz, c.j_mhz)?;
        if c.levels_c.is_some() || c.levels_t.is_some() {
            let (lc, lt) = (c.levels_c.unwrap_or(p.levels_c), c.levels_t.unwrap_or(p.levels_t));
            p = p.with_levels(lc, lt)?;
        }
        if let Some(wd) = c.omega_d_mhz {
            p = p.with_drive_frequency(wd)?;
        }
        Ok(p)
    }
}

impl DeviceParams {
    /// Build a device with default level cutoffs (5 control, 3 target) and
    /// the drive resonant with the target (ω_d = ω_t). Frequencies in MHz.
    pub fn new(
        omega_c: f64,
        omega_t: f64,
        alpha_c: f64,
        alpha_t: f64,
        j: f64,
    ) -> Result<Self, CrError> {
        for (name, v) in [
            ("omega_c", omega_c),
            ("omega_t", omega_t),
            ("alpha_c", alpha_c),
            ("alpha_t", alpha_t),
            ("j", j),
        ] {
            if !v.is_finite() {
                return Err(CrError::InvalidDevice(format!("{name} is not finite")));
            }
        }
        Ok(Self {
            omega_c,
            omega_t,
            alpha_c,
            alpha_t,
            j,
            levels_c: 5,
            levels_t: 3,
            omega_d: omega_t,
            delta_ct: omega_c - omega_t,
        })
    }

    /// Typical operating point used throughout the examples: target at
    /// 5000 MHz, control detuned by `delta_ct_mhz`, anharmonicities
    /// −340 MHz, exchange rate 3.5 MHz, cutoffs (5, 3).
    pub fn standard(delta_ct_mhz: f64) -> Self {
        // Unwrap is fine: all inputs are finite literals.
        Self::new(5000.0 + delta_ct_mhz, 5000.0, -340.0, -340.0, 3.5).unwrap()
    }

    /// Override the level cutoffs; requires at least 3 control and 2 target
    /// levels (three control levels feed the two-photon and 1→2 leakage
    /// channels).
    pub fn with_levels(mut self, levels_c: usize, levels_t: usize) -> Result<Self, CrError> {
        if levels_c < 3 || levels_t < 2 {
            return Err(CrError::InvalidDevice(format!(
                "level cutoffs ({levels_c},{levels_t}) below minimum (3,2)"
            )));
        }
        self.levels_c = levels_c;
        self.levels_t = levels_t;
        Ok(self)
    }

    /// Override the drive frequency (MHz); default is ω_t.
    pub fn with_drive_frequency(mut self, omega_d: f64) -> Result<Self, CrError> {
        if !omega_d.is_finite() {
            return Err(CrError::InvalidDevice("omega_d is not finite".into()));
        }
        self.omega_d = omega_d;
        Ok(self)
    }

    pub fn omega_c(&self) -> f64 { self.omega_c }
    pub fn omega_t(&self) -> f64 { self.omega_t }
    pub fn alpha_c(&self) -> f64 { self.alpha_c }
    pub fn alpha_t(&self) -> f64 { self.alpha_t }
    pub fn j(&self) -> f64 { self.j }
    pub fn levels_c(&self) -> usize { self.levels_c }
    pub fn levels_t(&self) -> usize { self.levels_t }
    pub fn omega_d(&self) -> f64 { self.omega_d }
    /// Control-target detuning Δ_ct = ω_c − ω_t (MHz).
    pub fn delta_ct(&self) -> f64 { self.delta_ct }

    pub fn omega_c_ang(&self) -> f64 { mhz_to_rad_ns(self.omega_c) }
    pub fn omega_t_ang(&self) -> f64 { mhz_to_rad_ns(self.omega_t) }
    pub fn alpha_c_ang(&self) -> f64 { mhz_to_rad_ns(self.alpha_c) }
    pub fn alpha_t_ang(&self) -> f64 { mhz_to_rad_ns(self.alpha_t) }
    pub fn j_ang(&self) -> f64 { mhz_to_rad_ns(self.j) }
    pub fn omega_d_ang(&self) -> f64 { mhz_to_rad_ns(self.omega_d) }
    pub fn delta_ct_ang(&self) -> f64 { mhz_to_rad_ns(self.delta_ct) }

    /// Product-space dimension levels_c × levels_t.
    pub fn dim(&self) -> usize { self.levels_c * self.levels_t }

    /// Flat index of bare state |n_c, n_t⟩ (control-major).
    pub fn index_of(&self, n_c: usize, n_t: usize) -> usize {
        debug_assert!(n_c < self.levels_c && n_t < self.levels_t);
        n_c * self.levels_t + n_t
    }

    /// Bare label (n_c, n_t) of a flat index.
    pub fn label_of(&self, idx: usize) -> (usize, usize) {
        (idx / self.levels_t, idx % self.levels_t)
    }
}

/// Annihilation operator b̂ on an `n`-level truncation: ⟨m−1|b̂|m⟩ = √m.
pub fn annihilation(levels: usize) -> OperatorMatrix {
    let mut b = nd::Array2::zeros((levels, levels));
    for m in 1..levels {
        b[[m - 1, m]] = C64::from((m as f64).sqrt());
    }
    b
}

/// Static Hamiltonian Ĥ_s = Ĥ_q + Ĥ_J (rad/ns) on the truncated product
/// space: Kerr oscillators ω_j b̂†b̂ + (α_j/2) b̂†b̂†b̂b̂ for each transmon plus
/// the exchange term J(b̂_c†b̂_t + b̂_c b̂_t†).
pub fn build_static_hamiltonian(p: &DeviceParams) -> OperatorMatrix {
    let (lc, lt) = (p.levels_c(), p.levels_t());
    let kerr = |levels: usize, omega: f64, alpha: f64| -> OperatorMatrix {
        // Diagonal: ω n + (α/2) n(n−1).
        nd::Array2::from_diag(&nd::Array1::from_iter((0..levels).map(|n| {
            let n = n as f64;
            C64::from(omega * n + 0.5 * alpha * n * (n - 1.0))
        })))
    };
    let eye_c: OperatorMatrix = nd::Array2::eye(lc);
    let eye_t: OperatorMatrix = nd::Array2::eye(lt);
    let mut h = kron(&kerr(lc, p.omega_c_ang(), p.alpha_c_ang()), &eye_t)
        + kron(&eye_c, &kerr(lt, p.omega_t_ang(), p.alpha_t_ang()));
    let (b_c, b_t) = (annihilation(lc), annihilation(lt));
    let exchange = kron(&linalg::dagger(&b_c), &b_t);
    h = h + (&exchange + &linalg::dagger(&exchange)).mapv(|z| z * p.j_ang());
    debug_assert!(linalg::hermiticity_error(&h) < 1e-12);
    h
}

/// Rotating drive Hamiltonian Ĥ_d(t) (rad/ns):
/// (1/2)[Ω_c*(t) b̂_c e^{iω_d t} + Ω_c(t) b̂_c† e^{−iω_d t}] plus the same for
/// the target. Envelope values `omega_c_env`, `omega_t_env` are complex MHz.
pub fn build_drive_hamiltonian(
    p: &DeviceParams,
    omega_c_env: C64,
    omega_t_env: C64,
    t: f64,
) -> OperatorMatrix {
    let (lc, lt) = (p.levels_c(), p.levels_t());
    let eye_c: OperatorMatrix = nd::Array2::eye(lc);
    let eye_t: OperatorMatrix = nd::Array2::eye(lt);
    let phase = C64::new(0.0, -p.omega_d_ang() * t).exp();
    let half = |env: C64| 0.5 * env * crate::units::MHZ_TO_RAD_NS * phase;
    // (Ω/2) b̂† e^{−iω_d t} + h.c. for each transmon.
    let term = |b: &OperatorMatrix, amp: C64| -> OperatorMatrix {
        let up = linalg::dagger(b).mapv(|z| z * amp);
        &up + &linalg::dagger(&up)
    };
    kron(&term(&annihilation(lc), half(omega_c_env)), &eye_t)
        + kron(&eye_c, &term(&annihilation(lt), half(omega_t_env)))
}

/// Precomputed eigendecomposition of Ĥ_s for interaction-frame conjugation
/// Ĥ_I(t) = e^{iĤ_s t} Ĥ_d(t) e^{−iĤ_s t}.
#[derive(Debug, Clone)]
pub struct InteractionFrame {
    vals: nd::Array1<f64>,
    vecs: nd::Array2<C64>,
}

impl InteractionFrame {
    pub fn new(h_s: &OperatorMatrix) -> Result<Self, CrError> {
        let (vals, vecs) = linalg::eigh_hermitian(h_s)?;
        Ok(Self { vals, vecs })
    }

    /// e^{iĤ_s t} as a dense unitary.
    pub fn frame_unitary(&self, t: f64) -> OperatorMatrix {
        let d = nd::Array2::from_diag(
            &self.vals.mapv(|lam| C64::new(0.0, lam * t).exp()),
        );
        self.vecs.dot(&d).dot(&linalg::dagger(&self.vecs))
    }

    /// Conjugate an operator into the interaction frame at time `t`:
    /// returns e^{iĤ_s t} A e^{−iĤ_s t}.
    pub fn conjugate(&self, a: &OperatorMatrix, t: f64) -> OperatorMatrix {
        let u = self.frame_unitary(t);
        u.dot(a).dot(&linalg::dagger(&u))
    }
}

/// Interaction-frame Hamiltonian Ĥ_I(t) for a drive evaluated at time `t`.
///
/// `frame` must hold the eigendecomposition of the same Ĥ_s the drive
/// belongs to; the conjugation preserves Hermiticity and spectral norm.
pub fn interaction_frame_hamiltonian(
    frame: &InteractionFrame,
    h_d: &OperatorMatrix,
    t: f64,
) -> OperatorMatrix {
    frame.conjugate(h_d, t)
}

/// Single-transmon Pauli label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    /// 2×2 matrix representation.
    pub fn matrix(self) -> nd::Array2<C64> {
        let o = C64::from(0.0);
        let l = C64::from(1.0);
        let i = C64::new(0.0, 1.0);
        match self {
            Pauli::I => nd::array![[l, o], [o, l]],
            Pauli::X => nd::array![[o, l], [l, o]],
            Pauli::Y => nd::array![[o, -i], [i, o]],
            Pauli::Z => nd::array![[l, o], [o, -l]],
        }
    }

    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
}

/// Eigenbasis of Ĥ_s labeled by bare indices.
///
/// Column ℓ of `states` is the dressed eigenvector assigned (by maximum
/// squared overlap) to bare label (n_c, n_t) = (ℓ / levels_t, ℓ mod levels_t),
/// with global phase fixed so the largest-magnitude component is real
/// positive. `energies[ℓ]` is the matching eigenvalue in rad/ns.
#[derive(Debug, Clone)]
pub struct DressedBasis {
    levels_c: usize,
    levels_t: usize,
    states: nd::Array2<C64>,
    energies: nd::Array1<f64>,
}

/// Diagonalize Ĥ_s and label its eigenvectors by bare max-overlap
/// assignment.
///
/// Errors with [`CrError::AmbiguousAssignment`] when two eigenvectors claim
/// the same bare label or an eigenvector's top two overlaps are numerically
/// indistinguishable (within 1e-6) — both signal that the dressing is too
/// strong for bare labeling (J not small against a level splitting).
pub fn dressed_basis(p: &DeviceParams, h_s: &OperatorMatrix) -> Result<DressedBasis, CrError> {
    let dim = p.dim();
    assert_eq!(h_s.nrows(), dim, "H_s dimension does not match DeviceParams");
    let (vals, vecs) = linalg::eigh_hermitian(h_s)?;
    let mut states = nd::Array2::zeros((dim, dim));
    let mut energies = nd::Array1::zeros(dim);
    let mut claimed = vec![false; dim];
    for k in 0..dim {
        let col = vecs.column(k);
        // Best and runner-up squared overlaps with the bare basis.
        let (mut best, mut best_idx, mut second) = (0.0_f64, 0_usize, 0.0_f64);
        for (idx, z) in col.iter().enumerate() {
            let w = z.norm_sqr();
            if w > best {
                second = best;
                best = w;
                best_idx = idx;
            } else if w > second {
                second = w;
            }
        }
        let (nc, nt) = p.label_of(best_idx);
        if best - second < 1e-6 || claimed[best_idx] {
            return Err(CrError::AmbiguousAssignment { nc, nt, o1: best, o2: second });
        }
        claimed[best_idx] = true;
        // Phase fix: rotate the largest component to the positive real axis.
        let rot = col[best_idx].conj() / col[best_idx].norm();
        let fixed = col.mapv(|z| z * rot);
        states.column_mut(best_idx).assign(&fixed);
        energies[best_idx] = vals[k];
    }
    Ok(DressedBasis { levels_c: p.levels_c(), levels_t: p.levels_t(), states, energies })
}

impl DressedBasis {
    pub fn dim(&self) -> usize {
        self.levels_c * self.levels_t
    }

    pub fn levels_c(&self) -> usize { self.levels_c }
    pub fn levels_t(&self) -> usize { self.levels_t }

    /// Flat index of label (n_c, n_t).
    pub fn index_of(&self, n_c: usize, n_t: usize) -> usize {
        debug_assert!(n_c < self.levels_c && n_t < self.levels_t);
        n_c * self.levels_t + n_t
    }

    /// Dressed eigenvector labeled (n_c, n_t) as a column view.
    pub fn state(&self, n_c: usize, n_t: usize) -> nd::ArrayView1<'_, C64> {
        self.states.column(self.index_of(n_c, n_t))
    }

    /// Eigenvalue (rad/ns) of the state labeled (n_c, n_t).
    pub fn energy(&self, n_c: usize, n_t: usize) -> f64 {
        self.energies[self.index_of(n_c, n_t)]
    }

    /// All eigenvalues in label order (rad/ns).
    pub fn energies(&self) -> &nd::Array1<f64> {
        &self.energies
    }

    /// Matrix whose column ℓ is the dressed state with flat label ℓ
    /// (a unitary change of basis bare → dressed).
    pub fn states(&self) -> &nd::Array2<C64> {
        &self.states
    }

    /// Spectroscopic ZZ splitting E₁₁ − E₁₀ − E₀₁ + E₀₀ (rad/ns).
    ///
    /// This is the reporting convention for "static ZZ rate": twice the
    /// ω_zz coefficient of (1/2) σ_z⊗σ_z.
    pub fn zz_splitting(&self) -> f64 {
        self.energy(1, 1) - self.energy(1, 0) - self.energy(0, 1) + self.energy(0, 0)
    }
}

/// Two-qubit Pauli operator σ_a ⊗ σ_b embedded in the dressed computational
/// subspace (zero on and to leakage levels).
pub fn dressed_pauli(basis: &DressedBasis, a: Pauli, b: Pauli) -> OperatorMatrix {
    let dim = basis.dim();
    let (ma, mb) = (a.matrix(), b.matrix());
    let mut out = nd::Array2::zeros((dim, dim));
    for jc in 0..2 {
        for jt in 0..2 {
            for kc in 0..2 {
                for kt in 0..2 {
                    let coeff = ma[[jc, kc]] * mb[[jt, kt]];
                    if coeff == C64::from(0.0) {
                        continue;
                    }
                    let ket = basis.state(jc, jt);
                    let bra = basis.state(kc, kt);
                    for (r, kr) in ket.iter().enumerate() {
                        for (c, bc) in bra.iter().enumerate() {
                            out[[r, c]] += coeff * kr * bc.conj();
                        }
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::units::{mhz_to_rad_ns, rad_ns_to_khz};

    fn two_by_three() -> DeviceParams {
        // Small system with exact closed forms: 3 control, 2 target levels.
        DeviceParams::new(5050.0, 5000.0, -340.0, -300.0, 3.5)
            .unwrap()
            .with_levels(3, 2)
            .unwrap()
    }

    #[test]
    fn level_cutoff_floor_enforced() {
        let p = DeviceParams::new(5050.0, 5000.0, -340.0, -340.0, 3.5).unwrap();
        assert!(p.clone().with_levels(2, 2).is_err());
        assert!(p.clone().with_levels(3, 1).is_err());
        assert!(p.with_levels(3, 2).is_ok());
    }

    #[test]
    fn delta_ct_is_exact_difference() {
        let p = DeviceParams::new(5123.375, 5000.125, -340.0, -340.0, 3.5).unwrap();
        assert_eq!(p.delta_ct(), p.omega_c() - p.omega_t());
        assert_eq!(p.omega_d(), p.omega_t());
    }

    #[test]
    fn static_hamiltonian_decoupled_spectrum() {
        // J = 0: eigenvalues are the bare Kerr ladder sums.
        let p = DeviceParams::new(5050.0, 5000.0, -340.0, -300.0, 0.0)
            .unwrap()
            .with_levels(3, 2)
            .unwrap();
        let h = build_static_hamiltonian(&p);
        assert!(linalg::hermiticity_error(&h) < 1e-13);
        let (mut vals, _) = linalg::eigh_hermitian(&h).unwrap();
        let mut expect: Vec<f64> = [
            0.0,
            5000.0,
            5050.0,
            10050.0,
            2.0 * 5050.0 - 340.0,
            2.0 * 5050.0 - 340.0 + 5000.0,
        ]
        .iter()
        .map(|f| mhz_to_rad_ns(*f))
        .collect();
        expect.sort_by(f64::total_cmp);
        let v = vals.as_slice_mut().unwrap();
        v.sort_by(f64::total_cmp);
        for (got, want) in v.iter().zip(&expect) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-9 * want.abs().max(1.0));
        }
    }

    #[test]
    fn single_excitation_block_closed_form() {
        // With J ≠ 0 the {|10⟩, |01⟩} block is exactly 2×2:
        // eigenvalues (ω_c+ω_t)/2 ± sqrt(Δ²/4 + J²).
        let p = two_by_three();
        let h = build_static_hamiltonian(&p);
        let (vals, _) = linalg::eigh_hermitian(&h).unwrap();
        let mean = 0.5 * (p.omega_c_ang() + p.omega_t_ang());
        let split = (0.25 * p.delta_ct_ang().powi(2) + p.j_ang().powi(2)).sqrt();
        // The two single-excitation eigenvalues are the 2nd and 3rd of six.
        let mut sorted: Vec<f64> = vals.to_vec();
        sorted.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(sorted[1], mean - split, epsilon = 1e-10 * mean);
        assert_abs_diff_eq!(sorted[2], mean + split, epsilon = 1e-10 * mean);
    }

    #[test]
    fn static_zz_magnitude_near_147_khz() {
        // J = 3.5 MHz, Δ_ct = 50 MHz, α = −340 MHz, cutoffs (5,3).
        let p = DeviceParams::standard(50.0);
        let h = build_static_hamiltonian(&p);
        let basis = dressed_basis(&p, &h).unwrap();
        let zz_khz = rad_ns_to_khz(basis.zz_splitting()).abs();
        assert!(
            (zz_khz - 147.2).abs() / 147.2 < 0.02,
            "exact-diagonalization ZZ {zz_khz:.2} kHz not within 2% of 147.2"
        );
    }

    #[test]
    fn drive_hamiltonian_zero_and_matrix_elements() {
        let p = two_by_three();
        let z = build_drive_hamiltonian(&p, C64::from(0.0), C64::from(0.0), 3.7);
        assert_eq!(linalg::max_abs(&z), 0.0);

        // Real Ω_c at t = 0: ⟨10|Ĥ_d|00⟩ = Ω_c/2 (angular).
        let om = 20.0;
        let h = build_drive_hamiltonian(&p, C64::from(om), C64::from(0.0), 0.0);
        assert!(linalg::hermiticity_error(&h) < 1e-13);
        let el = h[[p.index_of(1, 0), p.index_of(0, 0)]];
        assert_abs_diff_eq!(el.re, 0.5 * mhz_to_rad_ns(om), epsilon = 1e-14);
        assert_abs_diff_eq!(el.im, 0.0, epsilon = 1e-14);

        // Imaginary Ω_c = iΩ_y: same element is iΩ_y/2, conjugate below.
        let hy = build_drive_hamiltonian(&p, C64::new(0.0, om), C64::from(0.0), 0.0);
        let ely = hy[[p.index_of(1, 0), p.index_of(0, 0)]];
        assert_abs_diff_eq!(ely.im, 0.5 * mhz_to_rad_ns(om), epsilon = 1e-14);
        assert_abs_diff_eq!(ely.re, 0.0, epsilon = 1e-14);
        let below = hy[[p.index_of(0, 0), p.index_of(1, 0)]];
        assert_abs_diff_eq!((below - ely.conj()).norm(), 0.0, epsilon = 1e-14);

        // √2 ladder factor on the 1→2 control element.
        let el2 = h[[p.index_of(2, 0), p.index_of(1, 0)]];
        assert_abs_diff_eq!(el2.re, 0.5 * mhz_to_rad_ns(om) * 2.0_f64.sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn interaction_frame_identity_cases() {
        let p = two_by_three();
        let h_s = build_static_hamiltonian(&p);
        let frame = InteractionFrame::new(&h_s).unwrap();
        let h_d = build_drive_hamiltonian(&p, C64::from(15.0), C64::from(2.0), 0.0);

        // t = 0 is the identity frame.
        let h_i0 = interaction_frame_hamiltonian(&frame, &h_d, 0.0);
        assert!(linalg::max_abs(&(&h_i0 - &h_d)) < 1e-10);

        // Diagonal operators commute with Ĥ_s only when Ĥ_s is also
        // diagonal in the same basis; use a multiple of Ĥ_s itself.
        let a = h_s.mapv(|z| z * 0.3);
        let h_ia = frame.conjugate(&a, 8.3);
        assert!(linalg::max_abs(&(&h_ia - &a)) < 1e-9);
    }

    #[test]
    fn interaction_frame_preserves_norm_and_hermiticity() {
        let p = two_by_three();
        let h_s = build_static_hamiltonian(&p);
        let frame = InteractionFrame::new(&h_s).unwrap();
        for &t in &[0.37, 5.0, 41.9, 200.0] {
            let h_d = build_drive_hamiltonian(&p, C64::new(20.0, 3.0), C64::new(-1.4, 0.2), t);
            let h_i = frame.conjugate(&h_d, t);
            assert!(linalg::hermiticity_error(&h_i) < 1e-12);
            // Unitary conjugation preserves the Frobenius norm.
            let rel = (linalg::frobenius(&h_i) - linalg::frobenius(&h_d)).abs()
                / linalg::frobenius(&h_d);
            assert!(rel < 1e-10, "norm drift {rel:.3e} at t = {t}");
        }
    }

    #[test]
    fn interaction_frame_detuned_drive_phase() {
        // Two-level target reduction: J = 0, drive off-resonant from ω_t by
        // Δ_td; ⟨01|Ĥ_I(t)|00⟩ = (Ω_t/2) e^{i(ω_t − ω_d) t}.
        let p = DeviceParams::new(5050.0, 5000.0, -340.0, -300.0, 0.0)
            .unwrap()
            .with_levels(3, 2)
            .unwrap()
            .with_drive_frequency(4990.0)
            .unwrap();
        let h_s = build_static_hamiltonian(&p);
        let frame = InteractionFrame::new(&h_s).unwrap();
        let om_t = 7.0;
        let t = 13.4;
        let h_d = build_drive_hamiltonian(&p, C64::from(0.0), C64::from(om_t), t);
        let h_i = frame.conjugate(&h_d, t);
        let el = h_i[[p.index_of(0, 1), p.index_of(0, 0)]];
        let expect = 0.5
            * mhz_to_rad_ns(om_t)
            * C64::new(0.0, (p.omega_t_ang() - p.omega_d_ang()) * t).exp();
        assert!((el - expect).norm() < 1e-12);
    }

    #[test]
    fn dressed_basis_reduces_to_bare_at_zero_j() {
        let p = DeviceParams::new(5050.0, 5000.0, -340.0, -300.0, 0.0)
            .unwrap()
            .with_levels(3, 2)
            .unwrap();
        let h = build_static_hamiltonian(&p);
        let basis = dressed_basis(&p, &h).unwrap();
        for nc in 0..3 {
            for nt in 0..2 {
                let s = basis.state(nc, nt);
                let idx = p.index_of(nc, nt);
                assert_abs_diff_eq!((s[idx] - C64::from(1.0)).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn dressed_overlap_perturbative() {
        // |⟨01_bare|01_dressed⟩|² ≈ 1 − (J/Δ_ct)² > 0.99 at J=3.5, Δ=50.
        let p = DeviceParams::standard(50.0);
        let h = build_static_hamiltonian(&p);
        let basis = dressed_basis(&p, &h).unwrap();
        let s = basis.state(0, 1);
        let w = s[p.index_of(0, 1)].norm_sqr();
        assert!(w > 0.99, "overlap {w:.4}");
        // Phase convention: the dominant component is real positive.
        assert!(s[p.index_of(0, 1)].im.abs() < 1e-12);
        assert!(s[p.index_of(0, 1)].re > 0.0);
    }

    #[test]
    fn dressed_basis_orthonormal_and_complete() {
        let p = DeviceParams::standard(100.0);
        let h = build_static_hamiltonian(&p);
        let basis = dressed_basis(&p, &h).unwrap();
        assert!(linalg::unitarity_error(basis.states()) < 1e-12);
    }

    #[test]
    fn degenerate_detuning_is_ambiguous() {
        let p = DeviceParams::new(5000.0, 5000.0, -340.0, -340.0, 3.5)
            .unwrap()
            .with_levels(3, 2)
            .unwrap();
        let h = build_static_hamiltonian(&p);
        match dressed_basis(&p, &h) {
            Err(CrError::AmbiguousAssignment { .. }) => {}
            other => panic!("expected AmbiguousAssignment, got {other:?}"),
        }
    }

    #[test]
    fn dressed_pauli_projector_and_orthogonality() {
        let p = DeviceParams::standard(50.0);
        let h = build_static_hamiltonian(&p);
        let basis = dressed_basis(&p, &h).unwrap();
        // (I,I) is the projector onto the dressed computational subspace.
        let pii = dressed_pauli(&basis, Pauli::I, Pauli::I);
        let pii2 = pii.dot(&pii);
        assert!(linalg::max_abs(&(&pii2 - &pii)) < 1e-12);
        let trace: C64 = (0..basis.dim()).map(|k| pii[[k, k]]).sum();
        assert_abs_diff_eq!(trace.re, 4.0, epsilon = 1e-12);

        // Tr[P_a P_b] = 4 δ_ab over the dressed Pauli set.
        let labels = [
            (Pauli::I, Pauli::X),
            (Pauli::Z, Pauli::X),
            (Pauli::X, Pauli::Y),
            (Pauli::Z, Pauli::Z),
        ];
        for (i, &(a1, b1)) in labels.iter().enumerate() {
            let pa = dressed_pauli(&basis, a1, b1);
            for (j, &(a2, b2)) in labels.iter().enumerate() {
                let prod = pa.dot(&dressed_pauli(&basis, a2, b2));
                let tr: C64 = (0..basis.dim()).map(|k| prod[[k, k]]).sum();
                let want = if i == j { 4.0 } else { 0.0 };
                assert_abs_diff_eq!(tr.re, want, epsilon = 1e-10);
                assert_abs_diff_eq!(tr.im, 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn dressed_zx_equals_bare_embedding_at_zero_j() {
        let p = DeviceParams::new(5050.0, 5000.0, -340.0, -300.0, 0.0)
            .unwrap()
            .with_levels(3, 2)
            .unwrap();
        let h = build_static_hamiltonian(&p);
        let basis = dressed_basis(&p, &h).unwrap();
        let zx = dressed_pauli(&basis, Pauli::Z, Pauli::X);
        let mut expect: OperatorMatrix = nd::Array2::zeros((6, 6));
        // σ_z⊗σ_x on the computational block, control-major indexing.
        expect[[p.index_of(0, 0), p.index_of(0, 1)]] = C64::from(1.0);
        expect[[p.index_of(0, 1), p.index_of(0, 0)]] = C64::from(1.0);
        expect[[p.index_of(1, 0), p.index_of(1, 1)]] = C64::from(-1.0);
        expect[[p.index_of(1, 1), p.index_of(1, 0)]] = C64::from(-1.0);
        assert!(linalg::max_abs(&(&zx - &expect)) < 1e-12);
    }

    #[test]
    fn device_config_round_trip() {
        let cfg: DeviceConfig = toml::from_str(
            r#"
            omega_c_mhz = 5050.0
            omega_t_mhz = 5000.0
            alpha_c_mhz = -340.0
            alpha_t_mhz = -340.0
            j_mhz = 3.5
            "#,
        )
        .unwrap();
        let p = DeviceParams::try_from(cfg).unwrap();
        assert_eq!(p.levels_c(), 5);
        assert_eq!(p.levels_t(), 3);
        assert_eq!(p.omega_d(), 5000.0);
        assert_eq!(p.delta_ct(), 50.0);
    }

    #[test]
    fn device_config_rejects_low_cutoff() {
        let cfg: DeviceConfig = toml::from_str(
            r#"
            omega_c_mhz = 5050.0
            omega_t_mhz = 5000.0
            alpha_c_mhz = -340.0
            alpha_t_mhz = -340.0
            j_mhz = 3.5
            levels_c = 2
            "#,
        )
        .unwrap();
        assert!(DeviceParams::try_from(cfg).is_err());
    }
}
