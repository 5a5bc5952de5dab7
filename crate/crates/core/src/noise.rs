//! Single-photon noise channels, imperfect entangled-pair sources and the
//! loss of interference contrast at parity checks.
//!
//! The source and overlap model has two knobs: Bell-diagonal pair noise with
//! no `ψ⁻` weight, and one visibility `v` that scales the coherence between the
//! two parity branches at each beam splitter. Both are calibrated against
//! measured visibilities only.

use rand::Rng;

use crate::algebra::{
    DensityOperator, Ket, Operator, Register, Tensor, ALGEBRA_TOL, C64, PROB_EPS, ZERO,
};
use crate::bench::{jones_matrix, WaveplateKind};
use crate::error::{Error, Result};

/// A channel given by Kraus operators `{Kₖ}` with `Σ Kₖ†Kₖ = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    ops: Vec<Operator>,
}

impl KrausChannel {
    pub fn new(ops: Vec<Operator>) -> Result<Self> {
        let first = ops.first().ok_or(Error::EmptyIndexList)?;
        let dim = first.dim();
        let mut sum = Operator::identity(first.photons()).scale(ZERO);
        for k in &ops {
            k.check_dim(dim)?;
            sum = sum.add(&(&k.adjoint() * k))?;
        }
        let dev = sum.max_abs_diff(&Operator::identity(first.photons()));
        if dev >= ALGEBRA_TOL {
            return Err(Error::NotTracePreserving(dev));
        }
        Ok(Self { ops })
    }

    /// `ρ ↦ Σ wₖ UₖρUₖ†`
    pub fn unitary_mixture(parts: &[(f64, Operator)]) -> Result<Self> {
        let ops = parts
            .iter()
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, u)| u.scale(C64::new(w.sqrt(), 0.0)))
            .collect();
        Self::new(ops)
    }

    pub fn operators(&self) -> &[Operator] {
        &self.ops
    }

    pub fn photons(&self) -> usize {
        self.ops[0].photons()
    }

    pub fn apply(&self, rho: &DensityOperator, on: &[usize]) -> Result<DensityOperator> {
        let parts = self
            .ops
            .iter()
            .map(|k| rho.apply(k, on).map(|r| (1.0, r)))
            .collect::<Result<Vec<_>>>()?;
        DensityOperator::mixture(&parts)
    }

    /// Draws one Kraus branch by its Born weight and returns the branch index
    /// with the renormalized post-branch state.
    pub fn sample_apply<R: Rng + ?Sized>(&self, ket: &Ket, on: &[usize], rng: &mut R) -> Result<(usize, Ket)> {
        let branches = self
            .ops
            .iter()
            .map(|k| ket.apply(k, on))
            .collect::<Result<Vec<_>>>()?;
        let weights: Vec<f64> = branches.iter().map(Ket::norm_sqr).collect();
        let total: f64 = weights.iter().sum();
        let mut r = rng.random::<f64>() * total;
        let mut chosen = weights.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            if r < *w {
                chosen = k;
                break;
            }
            r -= w;
        }
        while weights[chosen] <= PROB_EPS && chosen > 0 {
            chosen -= 1;
        }
        let state = branches[chosen].normalize()?;
        Ok((chosen, state))
    }

    /// Normalized Choi state `(E ⊗ id)(|Ω⟩⟨Ω|)`.
    pub fn choi(&self) -> DensityOperator {
        let k = self.photons();
        let d = 1usize << k;
        let mut amps = vec![ZERO; d * d];
        for i in 0..d {
            amps[i * d + i] = C64::new(1.0 / (d as f64).sqrt(), 0.0);
        }
        let omega = Ket::new(amps).expect("d² is a power of two").to_density();
        let on: Vec<usize> = (0..k).collect();
        self.apply(&omega, &on).expect("channel acts on the first half")
    }
}

/// Trace distance between the Choi states of two channels.
pub fn choi_trace_distance(a: &KrausChannel, b: &KrausChannel) -> Result<f64> {
    a.choi().trace_distance(&b.choi())
}

/// `ρ ↦ pᵢρ + pₓXρX + p_yYρY + p_zZρZ` on one photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliChannel {
    pub p_i: f64,
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
}

impl PauliChannel {
    pub fn new(p_i: f64, p_x: f64, p_y: f64, p_z: f64) -> Result<Self> {
        let ps = [p_i, p_x, p_y, p_z];
        if ps.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidProbability(format!("{ps:?}")));
        }
        let sum: f64 = ps.iter().sum();
        if (sum - 1.0).abs() >= ALGEBRA_TOL {
            return Err(Error::InvalidProbability(format!("{ps:?} sums to {sum}")));
        }
        Ok(Self { p_i, p_x, p_y, p_z })
    }

    pub fn identity() -> Self {
        Self {
            p_i: 1.0,
            p_x: 0.0,
            p_y: 0.0,
            p_z: 0.0,
        }
    }

    pub fn bit_flip(p: f64) -> Result<Self> {
        check_unit(p)?;
        Self::new(1.0 - p, p, 0.0, 0.0)
    }

    pub fn phase_flip(p: f64) -> Result<Self> {
        check_unit(p)?;
        Self::new(1.0 - p, 0.0, 0.0, p)
    }

    pub fn kraus(&self) -> KrausChannel {
        KrausChannel::unitary_mixture(&[
            (self.p_i, Operator::identity(1)),
            (self.p_x, Operator::pauli_x()),
            (self.p_y, Operator::pauli_y()),
            (self.p_z, Operator::pauli_z()),
        ])
        .expect("validated Pauli weights")
    }
}

pub fn pauli_apply(channel: &PauliChannel, rho: &DensityOperator, photon: usize) -> Result<DensityOperator> {
    channel.kraus().apply(rho, &[photon])
}

fn check_unit(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(format!("{p} not in [0, 1]")));
    }
    Ok(())
}

/// A half-wave plate between two quarter-wave plates at 90°, with the HWP
/// axis at `±theta_deg`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveplateSandwich {
    theta_deg: f64,
    /// When set, the HWP sign is a fair coin per photon.
    pub sign_random: bool,
}

impl WaveplateSandwich {
    pub fn new(theta_deg: f64, sign_random: bool) -> Result<Self> {
        if !theta_deg.is_finite() || !(0.0..=45.0).contains(&theta_deg) {
            return Err(Error::AngleOutOfRange(theta_deg));
        }
        Ok(Self {
            theta_deg,
            sign_random,
        })
    }

    /// The random-sign sandwich whose flip probability is `p`.
    pub fn from_flip_probability(p: f64) -> Result<Self> {
        check_unit(p)?;
        Self::new(theta_for_flip_probability(p), true)
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta_deg
    }

    /// `sin²(2θ)`
    pub fn flip_probability(&self) -> f64 {
        (2.0 * self.theta_deg.to_radians()).sin().powi(2)
    }

    /// `QWP(90°)·HWP(sign·θ)·QWP(90°)`
    pub fn unitary(&self, sign: f64) -> Operator {
        let q = jones_matrix(WaveplateKind::Quarter, 90.0);
        let h = jones_matrix(WaveplateKind::Half, sign * self.theta_deg);
        &(&q * &h) * &q
    }

    /// The exact channel of the plate stack.
    pub fn induced_channel(&self) -> KrausChannel {
        let parts = if self.sign_random {
            vec![(0.5, self.unitary(1.0)), (0.5, self.unitary(-1.0))]
        } else {
            vec![(1.0, self.unitary(1.0))]
        };
        KrausChannel::unitary_mixture(&parts).expect("waveplates are unitary")
    }
}

/// `θ = ½·asin(√p)` in degrees.
pub fn theta_for_flip_probability(p: f64) -> f64 {
    0.5 * p.clamp(0.0, 1.0).sqrt().asin().to_degrees()
}

/// The bit-flip channel with `p = sin²(2θ)`. Exact for the random-sign
/// sandwich, where averaging over `±θ` cancels the `I`–`X` cross terms.
pub fn sandwich_as_channel(s: &WaveplateSandwich) -> PauliChannel {
    let p = s.flip_probability().clamp(0.0, 1.0);
    PauliChannel::new(1.0 - p, p, 0.0, 0.0).expect("p in [0, 1]")
}

pub fn sample_sandwich<R: Rng + ?Sized>(s: &WaveplateSandwich, rng: &mut R) -> Operator {
    let sign = if !s.sign_random || rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    };
    s.unitary(sign)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub const ALL: [BellState; 4] = [
        BellState::PhiPlus,
        BellState::PhiMinus,
        BellState::PsiPlus,
        BellState::PsiMinus,
    ];

    pub fn ket(self) -> Ket {
        match self {
            BellState::PhiPlus => Ket::phi_plus(),
            BellState::PhiMinus => Ket::phi_minus(),
            BellState::PsiPlus => Ket::psi_plus(),
            BellState::PsiMinus => Ket::psi_minus(),
        }
    }
}

/// Mixture `Σ λᵢ |Bᵢ⟩⟨Bᵢ|` over `(φ⁺, φ⁻, ψ⁺, ψ⁻)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellDiagonalSource {
    lambda: [f64; 4],
}

impl BellDiagonalSource {
    pub fn new(lambda: [f64; 4]) -> Result<Self> {
        if lambda.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidProbability(format!("{lambda:?}")));
        }
        let sum: f64 = lambda.iter().sum();
        if (sum - 1.0).abs() >= ALGEBRA_TOL {
            return Err(Error::InvalidProbability(format!("{lambda:?} sums to {sum}")));
        }
        Ok(Self { lambda })
    }

    pub fn ideal() -> Self {
        Self {
            lambda: [1.0, 0.0, 0.0, 0.0],
        }
    }

    pub fn lambda(&self) -> [f64; 4] {
        self.lambda
    }

    pub fn is_ideal(&self) -> bool {
        self.lambda == [1.0, 0.0, 0.0, 0.0]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> BellState {
        let mut r = rng.random::<f64>();
        for (state, &l) in BellState::ALL.iter().zip(self.lambda.iter()) {
            if r < l {
                return *state;
            }
            r -= l;
        }
        // rounding: fall back to the last state with non-zero weight
        let last = self.lambda.iter().rposition(|&l| l > 0.0).unwrap_or(0);
        BellState::ALL[last]
    }
}

pub fn bell_diagonal_rho(src: &BellDiagonalSource) -> DensityOperator {
    let parts: Vec<(f64, DensityOperator)> = BellState::ALL
        .iter()
        .zip(src.lambda.iter())
        .map(|(b, &l)| (l, b.ket().to_density()))
        .collect();
    DensityOperator::mixture(&parts).expect("Bell states share a dimension")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisibilityBasis {
    /// `|H⟩/|V⟩`
    HV,
    /// `|+⟩/|−⟩`
    PM,
    /// `|R⟩/|L⟩`
    RL,
}

impl VisibilityBasis {
    fn observable(self) -> Operator {
        match self {
            VisibilityBasis::HV => Operator::pauli_z(),
            VisibilityBasis::PM => Operator::pauli_x(),
            VisibilityBasis::RL => Operator::pauli_y(),
        }
    }
}

/// Two-photon correlation visibility, e.g. `P(HH)+P(VV)−P(HV)−P(VH)`.
pub fn visibility(rho: &DensityOperator, basis: VisibilityBasis) -> Result<f64> {
    if rho.photons() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            actual: rho.dim(),
        });
    }
    correlation_visibility(rho, basis)
}

/// n-photon generalization: the signed sum over outcomes with sign
/// `(−1)^(number of second-basis outcomes)`, i.e. `⟨σ⊗…⊗σ⟩`.
pub fn correlation_visibility(rho: &DensityOperator, basis: VisibilityBasis) -> Result<f64> {
    let single = basis.observable();
    let mut obs = single.clone();
    for _ in 1..rho.photons() {
        obs = obs.tensor(&single);
    }
    rho.expectation(&obs)
}

/// Solves for Bell-diagonal weights with `λ₄ = 0` from the two-photon
/// visibilities: `λ₁+λ₂−λ₃ = V_HV`, `λ₁−λ₂+λ₃ = V_PM`, `λ₁+λ₂+λ₃ = 1`.
pub fn calibrate_from_visibilities(v_hv: f64, v_pm: f64) -> Result<BellDiagonalSource> {
    let l1 = 0.5 * (v_hv + v_pm);
    let l2 = 0.5 * (1.0 - v_pm);
    let l3 = 0.5 * (1.0 - v_hv);
    let lambda = [l1, l2, l3];
    if lambda.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::InfeasibleVisibilities { v_hv, v_pm, lambda });
    }
    BellDiagonalSource::new([l1, l2, l3, 0.0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceVisibility(f64);

impl InterferenceVisibility {
    pub fn new(v: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidProbability(format!("visibility {v} not in [0, 1]")));
        }
        Ok(Self(v))
    }

    pub fn perfect() -> Self {
        Self(1.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Kraus form of the parity dephasing:
/// `{√((1+v)/2)·I, √((1−v)/2)·(P₁−P₂), √((1−v)/2)·Q}` with `Q = I − P₁ − P₂`.
///
/// The `P₁`–`P₂` coherences are multiplied by `v`, diagonal blocks are kept,
/// and coherences with the rest of the space are multiplied by `(1+v)/2`.
pub fn parity_dephasing(v: InterferenceVisibility, p1: &Operator, p2: &Operator) -> Result<KrausChannel> {
    p1.ensure_idempotent()?;
    p2.ensure_idempotent()?;
    p1.check_dim(p2.dim())?;
    let overlap = (p1 * p2).max_abs_diff(&Operator::identity(p1.photons()).scale(ZERO));
    if overlap >= ALGEBRA_TOL {
        return Err(Error::NotOrthogonal(overlap));
    }
    let v = v.value();
    let eye = Operator::identity(p1.photons());
    let q = eye.sub(p1)?.sub(p2)?;
    let a = C64::new((0.5 * (1.0 + v)).sqrt(), 0.0);
    let b = C64::new((0.5 * (1.0 - v)).sqrt(), 0.0);
    let mut ops = vec![eye.scale(a)];
    if v < 1.0 {
        ops.push(p1.sub(p2)?.scale(b));
        ops.push(q.scale(b));
    }
    KrausChannel::new(ops)
}

/// Applies [`parity_dephasing`]; the projectors act on the whole register of `rho`.
pub fn degrade_parity_coherence(
    rho: &DensityOperator,
    v: InterferenceVisibility,
    branch_projectors: (&Operator, &Operator),
) -> Result<DensityOperator> {
    let (p1, p2) = branch_projectors;
    p1.check_dim(rho.dim())?;
    let channel = parity_dephasing(v, p1, p2)?;
    let on: Vec<usize> = (0..rho.photons()).collect();
    channel.apply(rho, &on)
}

/// `|H…H⟩⟨H…H|` and `|V…V⟩⟨V…V|` on `photons` photons.
pub fn parity_branch_projectors(photons: usize) -> (Operator, Operator) {
    let hs: String = "H".repeat(photons);
    let vs: String = "V".repeat(photons);
    (
        Ket::basis(&hs).expect("valid label").outer(),
        Ket::basis(&vs).expect("valid label").outer(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{fidelity, POSITIVITY_TOL};
    use rand::SeedableRng;
    use std::f64::consts::FRAC_1_SQRT_2;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pauli_examples() {
        let h = Ket::h().to_density();
        let id = PauliChannel::bit_flip(0.0).unwrap();
        assert!(pauli_apply(&id, &h, 0).unwrap().max_abs_diff(&h) < ALGEBRA_TOL);

        let full = PauliChannel::bit_flip(1.0).unwrap();
        let out = pauli_apply(&full, &h, 0).unwrap();
        assert!(out.max_abs_diff(&Ket::v().to_density()) < ALGEBRA_TOL);

        let quarter = PauliChannel::bit_flip(0.25).unwrap();
        let out = pauli_apply(&quarter, &h, 0).unwrap();
        let expected = DensityOperator::mixture(&[
            (0.75, Ket::h().to_density()),
            (0.25, Ket::v().to_density()),
        ])
        .unwrap();
        assert!(out.max_abs_diff(&expected) < ALGEBRA_TOL);
        assert!((fidelity(&out, &Ket::h()).unwrap() - 0.75).abs() < ALGEBRA_TOL);
    }

    #[test]
    fn pauli_validation() {
        assert!(PauliChannel::new(0.5, 0.6, 0.0, 0.0).is_err());
        assert!(PauliChannel::new(1.1, -0.1, 0.0, 0.0).is_err());
        assert!(PauliChannel::bit_flip(1.5).is_err());
        assert!(pauli_apply(&PauliChannel::identity(), &Ket::h().to_density(), 1).is_err());
    }

    #[test]
    fn sandwich_flip_probabilities() {
        let s0 = WaveplateSandwich::new(0.0, true).unwrap();
        assert_eq!(sandwich_as_channel(&s0).p_x, 0.0);
        let s = WaveplateSandwich::new(22.5, true).unwrap();
        assert!((sandwich_as_channel(&s).p_x - 0.5).abs() < ALGEBRA_TOL);
        let s = WaveplateSandwich::new(15.0, true).unwrap();
        assert!((sandwich_as_channel(&s).p_x - 0.25).abs() < ALGEBRA_TOL);
        assert!(WaveplateSandwich::new(46.0, true).is_err());
        assert!(WaveplateSandwich::new(-1.0, true).is_err());
    }

    /// Brute-force ±θ average of the explicit Jones product.
    fn averaged_sandwich(theta: f64, rho: &DensityOperator) -> DensityOperator {
        let q = jones_matrix(WaveplateKind::Quarter, 90.0);
        let parts: Vec<(f64, DensityOperator)> = [theta, -theta]
            .iter()
            .map(|&t| {
                let u = &(&q * &jones_matrix(WaveplateKind::Half, t)) * &q;
                (0.5, rho.apply(&u, &[0]).unwrap())
            })
            .collect();
        DensityOperator::mixture(&parts).unwrap()
    }

    #[test]
    fn sandwich_average_equals_bit_flip() {
        let s = WaveplateSandwich::new(15.0, true).unwrap();
        let pauli = sandwich_as_channel(&s);
        for input in [Ket::h(), Ket::plus(), Ket::r(), Ket::qubit(C64::new(0.3, 0.1), C64::new(-0.2, 0.9)).unwrap()] {
            let rho = input.to_density();
            let avg = averaged_sandwich(15.0, &rho);
            let expected = pauli_apply(&pauli, &rho, 0).unwrap();
            assert!(avg.trace_distance(&expected).unwrap() < 1e-12);
        }
    }

    #[test]
    fn sandwich_choi_matches_pauli_on_grid() {
        for k in 0..=9 {
            let theta = 5.0 * k as f64;
            let s = WaveplateSandwich::new(theta, true).unwrap();
            let d = choi_trace_distance(&s.induced_channel(), &sandwich_as_channel(&s).kraus()).unwrap();
            assert!(d < 1e-12, "theta {theta}: {d}");
        }
    }

    #[test]
    fn fixed_sign_sandwich_is_not_a_pauli_channel() {
        let s = WaveplateSandwich::new(15.0, false).unwrap();
        let d = choi_trace_distance(&s.induced_channel(), &sandwich_as_channel(&s).kraus()).unwrap();
        assert!(d > 0.1);
    }

    #[test]
    fn sampled_sandwich_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s0 = WaveplateSandwich::new(0.0, true).unwrap();
        let u = sample_sandwich(&s0, &mut rng);
        assert!(u.diff_up_to_phase(&Operator::identity(1)) < ALGEBRA_TOL);

        let s = WaveplateSandwich::new(22.5, true).unwrap();
        let r = C64::new(FRAC_1_SQRT_2, 0.0);
        let plus = Operator::from_2x2([[r, C64::new(0.0, FRAC_1_SQRT_2)], [C64::new(0.0, FRAC_1_SQRT_2), r]]);
        let minus = plus.adjoint();
        for _ in 0..20 {
            let u = sample_sandwich(&s, &mut rng);
            assert!(u.diff_up_to_phase(&plus) < ALGEBRA_TOL || u.diff_up_to_phase(&minus) < ALGEBRA_TOL);
        }
    }

    #[test]
    fn bell_diagonal_examples() {
        let rho = bell_diagonal_rho(&BellDiagonalSource::ideal());
        assert!(rho.max_abs_diff(&Ket::phi_plus().to_density()) < ALGEBRA_TOL);
        let mixed = bell_diagonal_rho(&BellDiagonalSource::new([0.25; 4]).unwrap());
        assert!(mixed.max_abs_diff(&DensityOperator::maximally_mixed(2)) < ALGEBRA_TOL);
        assert!(BellDiagonalSource::new([0.5, 0.5, 0.1, -0.1]).is_err());
    }

    #[test]
    fn visibility_examples() {
        let bell = Ket::phi_plus().to_density();
        assert!((visibility(&bell, VisibilityBasis::HV).unwrap() - 1.0).abs() < ALGEBRA_TOL);
        assert!((visibility(&bell, VisibilityBasis::PM).unwrap() - 1.0).abs() < ALGEBRA_TOL);
        let mixed = DensityOperator::maximally_mixed(2);
        assert!(visibility(&mixed, VisibilityBasis::HV).unwrap().abs() < ALGEBRA_TOL);
        assert!(visibility(&mixed, VisibilityBasis::PM).unwrap().abs() < ALGEBRA_TOL);

        let src = BellDiagonalSource::new([0.955, 0.03, 0.015, 0.0]).unwrap();
        let rho = bell_diagonal_rho(&src);
        assert!((visibility(&rho, VisibilityBasis::HV).unwrap() - 0.97).abs() < ALGEBRA_TOL);
        assert!((visibility(&rho, VisibilityBasis::PM).unwrap() - 0.94).abs() < ALGEBRA_TOL);

        assert!(visibility(&Ket::h().to_density(), VisibilityBasis::HV).is_err());
    }

    #[test]
    fn visibility_by_outcome_enumeration() {
        // P(++)+P(−−)−P(+−)−P(−+) computed from explicit projectors
        let src = BellDiagonalSource::new([0.7, 0.1, 0.15, 0.05]).unwrap();
        let rho = bell_diagonal_rho(&src);
        let mut v = 0.0;
        for (a, sa) in [(Ket::plus(), 1.0), (Ket::minus(), -1.0)] {
            for (b, sb) in [(Ket::plus(), 1.0), (Ket::minus(), -1.0)] {
                let p = rho.expectation_ket(&a.tensor(&b)).unwrap();
                v += sa * sb * p;
            }
        }
        assert!((visibility(&rho, VisibilityBasis::PM).unwrap() - v).abs() < ALGEBRA_TOL);
        assert!((v - (0.7 - 0.1 + 0.15 - 0.05)).abs() < ALGEBRA_TOL);
    }

    #[test]
    fn calibration_examples() {
        let src = calibrate_from_visibilities(1.0, 1.0).unwrap();
        assert_eq!(src.lambda(), [1.0, 0.0, 0.0, 0.0]);

        let src = calibrate_from_visibilities(0.97, 0.94).unwrap();
        let l = src.lambda();
        assert!((l[0] - 0.955).abs() < ALGEBRA_TOL);
        assert!((l[1] - 0.03).abs() < ALGEBRA_TOL);
        assert!((l[2] - 0.015).abs() < ALGEBRA_TOL);
        assert_eq!(l[3], 0.0);

        assert!(matches!(
            calibrate_from_visibilities(0.0, 2.0),
            Err(Error::InfeasibleVisibilities { .. })
        ));
    }

    #[test]
    fn degrade_examples() {
        let (p1, p2) = parity_branch_projectors(2);
        let bell = Ket::phi_plus().to_density();
        let same = degrade_parity_coherence(&bell, InterferenceVisibility::perfect(), (&p1, &p2)).unwrap();
        assert!(same.max_abs_diff(&bell) < ALGEBRA_TOL);

        let flat = degrade_parity_coherence(&bell, InterferenceVisibility::new(0.0).unwrap(), (&p1, &p2)).unwrap();
        let expected = DensityOperator::mixture(&[
            (0.5, Ket::basis("HH").unwrap().to_density()),
            (0.5, Ket::basis("VV").unwrap().to_density()),
        ])
        .unwrap();
        assert!(flat.max_abs_diff(&expected) < ALGEBRA_TOL);

        let v = 0.88;
        let part = degrade_parity_coherence(&bell, InterferenceVisibility::new(v).unwrap(), (&p1, &p2)).unwrap();
        assert!((visibility(&part, VisibilityBasis::PM).unwrap() - v).abs() < ALGEBRA_TOL);
        assert!((part.trace() - 1.0).abs() < ALGEBRA_TOL);
    }

    #[test]
    fn degrade_rejects_overlapping_projectors() {
        let (p1, _) = parity_branch_projectors(2);
        assert!(matches!(
            parity_dephasing(InterferenceVisibility::new(0.5).unwrap(), &p1, &p1),
            Err(Error::NotOrthogonal(_))
        ));
    }

    #[test]
    fn degrade_is_completely_positive() {
        let (p1, p2) = parity_branch_projectors(2);
        for v in [0.0, 0.3, 0.83, 1.0] {
            let ch = parity_dephasing(InterferenceVisibility::new(v).unwrap(), &p1, &p2).unwrap();
            let choi = ch.choi();
            assert!((choi.trace() - 1.0).abs() < ALGEBRA_TOL);
            assert!(choi.min_eigenvalue() > -POSITIVITY_TOL);
        }
    }

    #[test]
    fn kraus_completeness_is_checked() {
        let bad = vec![Operator::pauli_x(), Operator::pauli_z()];
        assert!(matches!(KrausChannel::new(bad), Err(Error::NotTracePreserving(_))));
    }

    #[test]
    fn bell_sampling_frequencies() {
        let src = BellDiagonalSource::new([0.6, 0.2, 0.2, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let drawn = src.sample(&mut rng);
            let i = BellState::ALL.iter().position(|b| *b == drawn).unwrap();
            counts[i] += 1;
        }
        assert_eq!(counts[3], 0);
        let f0 = counts[0] as f64 / n as f64;
        assert!((f0 - 0.6).abs() < 5.0 * (0.24f64 / n as f64).sqrt());
    }
}
