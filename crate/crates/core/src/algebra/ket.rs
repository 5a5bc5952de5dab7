use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DVector;

use super::{
    gather, mask_of, photons_for_dim, scatter, target_shifts, DensityOperator, Operator,
    Projection, Register, Tensor, C64, PROB_EPS, ZERO,
};
use crate::error::{Error, Result};

/// A pure state of a polarization register.
#[derive(Debug, Clone, PartialEq)]
pub struct Ket {
    amps: DVector<C64>,
    photons: usize,
}

impl Ket {
    /// Builds a ket from raw amplitudes. No normalization is applied.
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        let photons = photons_for_dim(amps.len())?;
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            amps: DVector::from_vec(amps),
            photons,
        })
    }

    pub(crate) fn from_vector(amps: DVector<C64>) -> Self {
        let photons = amps.len().trailing_zeros() as usize;
        Self { amps, photons }
    }

    /// Normalized single-photon state `α|H⟩ + β|V⟩`.
    pub fn qubit(alpha: C64, beta: C64) -> Result<Self> {
        Self::new(vec![alpha, beta])?.normalize()
    }

    /// Computational basis ket from a string over `{H, V}`, e.g. `"HVV"`.
    pub fn basis(label: &str) -> Result<Self> {
        let mut index = 0usize;
        let mut photons = 0usize;
        for ch in label.chars() {
            let bit = match ch {
                'H' | 'h' | '0' => 0,
                'V' | 'v' | '1' => 1,
                _ => return Err(Error::ModeLayout(vec![label.to_string()])),
            };
            index = (index << 1) | bit;
            photons += 1;
        }
        if photons == 0 {
            return Err(Error::EmptyIndexList);
        }
        let mut amps = vec![ZERO; 1 << photons];
        amps[index] = C64::new(1.0, 0.0);
        Self::new(amps)
    }

    pub fn h() -> Self {
        Self::from_vector(DVector::from_vec(vec![C64::new(1.0, 0.0), ZERO]))
    }

    pub fn v() -> Self {
        Self::from_vector(DVector::from_vec(vec![ZERO, C64::new(1.0, 0.0)]))
    }

    pub fn plus() -> Self {
        let a = C64::new(FRAC_1_SQRT_2, 0.0);
        Self::from_vector(DVector::from_vec(vec![a, a]))
    }

    pub fn minus() -> Self {
        let a = C64::new(FRAC_1_SQRT_2, 0.0);
        Self::from_vector(DVector::from_vec(vec![a, -a]))
    }

    /// `(|H⟩ + i|V⟩)/√2`
    pub fn r() -> Self {
        Self::from_vector(DVector::from_vec(vec![
            C64::new(FRAC_1_SQRT_2, 0.0),
            C64::new(0.0, FRAC_1_SQRT_2),
        ]))
    }

    /// `(|H⟩ − i|V⟩)/√2`
    pub fn l() -> Self {
        Self::from_vector(DVector::from_vec(vec![
            C64::new(FRAC_1_SQRT_2, 0.0),
            C64::new(0.0, -FRAC_1_SQRT_2),
        ]))
    }

    /// `(|HH⟩ + |VV⟩)/√2`
    pub fn phi_plus() -> Self {
        Self::bell(1.0, false)
    }

    pub fn phi_minus() -> Self {
        Self::bell(-1.0, false)
    }

    pub fn psi_plus() -> Self {
        Self::bell(1.0, true)
    }

    pub fn psi_minus() -> Self {
        Self::bell(-1.0, true)
    }

    fn bell(sign: f64, anti: bool) -> Self {
        let a = FRAC_1_SQRT_2;
        let mut amps = vec![ZERO; 4];
        if anti {
            amps[0b01] = C64::new(a, 0.0);
            amps[0b10] = C64::new(sign * a, 0.0);
        } else {
            amps[0b00] = C64::new(a, 0.0);
            amps[0b11] = C64::new(sign * a, 0.0);
        }
        Self::from_vector(DVector::from_vec(amps))
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        self.amps.as_slice()
    }

    pub fn amplitude(&self, index: usize) -> C64 {
        self.amps[index]
    }

    pub(crate) fn vector(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if n <= PROB_EPS.sqrt() || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(self.scale(C64::new(1.0 / n, 0.0)))
    }

    pub fn scale(&self, c: C64) -> Self {
        Self::from_vector(&self.amps * c)
    }

    pub fn add(&self, other: &Ket) -> Result<Self> {
        self.check_dim(other.dim())?;
        Ok(Self::from_vector(&self.amps + &other.amps))
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &Ket) -> Result<C64> {
        self.check_dim(other.dim())?;
        Ok(self.amps.dotc(&other.amps))
    }

    /// Complex conjugate in the H/V basis.
    pub fn conj(&self) -> Self {
        Self::from_vector(self.amps.map(|a| a.conj()))
    }

    /// Same ray with the first non-negligible amplitude made real and positive.
    pub fn canonical_phase(&self) -> Self {
        match self.amps.iter().find(|a| a.norm() > 1e-12) {
            Some(a) => self.scale(a.conj() / a.norm()),
            None => self.clone(),
        }
    }

    pub fn max_abs_diff(&self, other: &Ket) -> f64 {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Compares two kets after fixing their global phases.
    pub fn approx_eq_up_to_phase(&self, other: &Ket, tol: f64) -> bool {
        self.dim() == other.dim()
            && self
                .canonical_phase()
                .max_abs_diff(&other.canonical_phase())
                <= tol
    }

    /// `|ψ⟩⟨ψ|` as an operator (not renormalized).
    pub fn outer(&self) -> Operator {
        Operator::new(&self.amps * self.amps.adjoint()).expect("outer product is square")
    }

    pub fn to_density(&self) -> DensityOperator {
        DensityOperator::from_ket(self)
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: dim,
            });
        }
        Ok(())
    }

    /// Applies `op` on the target photons without building the full operator.
    pub(crate) fn apply_unchecked(&self, op: &Operator, shifts: &[usize]) -> Self {
        let m = op.matrix();
        let k = shifts.len();
        let mask = mask_of(shifts);
        let src = self.amps.as_slice();
        let mut out = vec![ZERO; src.len()];
        for (i, slot) in out.iter_mut().enumerate() {
            let row = gather(i, shifts);
            let base = i & !mask;
            let mut acc = ZERO;
            for col in 0..(1usize << k) {
                let a = src[base | scatter(col, shifts)];
                if a != ZERO {
                    acc += m[(row, col)] * a;
                }
            }
            *slot = acc;
        }
        Self::from_vector(DVector::from_vec(out))
    }
}

impl Tensor for Ket {
    fn tensor(&self, other: &Self) -> Self {
        Self::from_vector(self.amps.kronecker(&other.amps))
    }
}

impl Register for Ket {
    fn photons(&self) -> usize {
        self.photons
    }

    fn apply(&self, op: &Operator, on: &[usize]) -> Result<Self> {
        let shifts = target_shifts(on, self.photons)?;
        op.check_dim(1 << shifts.len())?;
        Ok(self.apply_unchecked(op, &shifts))
    }

    fn project(&self, projector: &Operator, on: &[usize]) -> Result<Projection<Self>> {
        projector.ensure_idempotent()?;
        let kept = self.apply(projector, on)?;
        let prob = kept.norm_sqr();
        let state = if prob > PROB_EPS {
            Some(kept.scale(C64::new(1.0 / prob.sqrt(), 0.0)))
        } else {
            None
        };
        Ok(Projection { prob, state })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{apply, project, tensor, ALGEBRA_TOL};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn basis_ordering() {
        let k = Ket::basis("HVV").unwrap();
        assert_eq!(k.photons(), 3);
        assert_eq!(k.amplitude(0b011), c(1.0, 0.0));
    }

    #[test]
    fn tensor_examples() {
        let hh = tensor(&Ket::h(), &Ket::h());
        assert_eq!(hh.amplitude(0), c(1.0, 0.0));
        assert_eq!(hh.norm_sqr(), 1.0);

        let ph = tensor(&Ket::plus(), &Ket::h());
        let expected = Ket::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
            .unwrap()
            .normalize()
            .unwrap();
        assert!(ph.max_abs_diff(&expected) < ALGEBRA_TOL);
    }

    #[test]
    fn tensor_input_with_bell_pair() {
        let alpha = c(0.6, 0.0);
        let beta = c(0.0, 0.8);
        let input = Ket::qubit(alpha, beta).unwrap();
        let joint = tensor(&input, &Ket::phi_plus());
        // hand expansion: (α|HHH⟩+α|HVV⟩+β|VHH⟩+β|VVV⟩)/√2
        let s = FRAC_1_SQRT_2;
        let mut expected = vec![ZERO; 8];
        expected[0b000] = alpha * s;
        expected[0b011] = alpha * s;
        expected[0b100] = beta * s;
        expected[0b111] = beta * s;
        let expected = Ket::new(expected).unwrap();
        assert!(joint.max_abs_diff(&expected) < ALGEBRA_TOL);
    }

    #[test]
    fn apply_examples() {
        let x = Operator::pauli_x();
        let z = Operator::pauli_z();
        assert!(apply(&x, &Ket::h(), &[0]).unwrap().max_abs_diff(&Ket::v()) < ALGEBRA_TOL);
        assert!(
            apply(&z, &Ket::plus(), &[0])
                .unwrap()
                .max_abs_diff(&Ket::minus())
                < ALGEBRA_TOL
        );

        let alpha = c(0.6, 0.0);
        let beta = c(0.0, 0.8);
        let code = Ket::basis("HH")
            .unwrap()
            .scale(alpha)
            .add(&Ket::basis("VV").unwrap().scale(beta))
            .unwrap();
        let flipped = apply(&x.tensor(&x), &code, &[0, 1]).unwrap();
        let expected = Ket::basis("VV")
            .unwrap()
            .scale(alpha)
            .add(&Ket::basis("HH").unwrap().scale(beta))
            .unwrap();
        assert!(flipped.max_abs_diff(&expected) < ALGEBRA_TOL);
    }

    #[test]
    fn apply_rejects_bad_targets() {
        let x = Operator::pauli_x();
        let hh = Ket::basis("HH").unwrap();
        assert!(matches!(
            apply(&x, &hh, &[2]),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            apply(&x.tensor(&x), &hh, &[1, 1]),
            Err(Error::DuplicateIndex(1))
        ));
        assert!(matches!(
            apply(&x, &hh, &[0, 1]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn apply_respects_target_order() {
        // CNOT-like operator: control on the first listed photon.
        let mut m = nalgebra::DMatrix::from_element(4, 4, ZERO);
        m[(0, 0)] = c(1.0, 0.0);
        m[(1, 1)] = c(1.0, 0.0);
        m[(2, 3)] = c(1.0, 0.0);
        m[(3, 2)] = c(1.0, 0.0);
        let cnot = Operator::unitary(m).unwrap();
        let vh = Ket::basis("VH").unwrap();
        let hv = Ket::basis("HV").unwrap();
        assert!(
            apply(&cnot, &vh, &[0, 1])
                .unwrap()
                .max_abs_diff(&Ket::basis("VV").unwrap())
                < ALGEBRA_TOL
        );
        // reversed order: photon 1 controls photon 0
        assert!(
            apply(&cnot, &hv, &[1, 0])
                .unwrap()
                .max_abs_diff(&Ket::basis("VV").unwrap())
                < ALGEBRA_TOL
        );
    }

    #[test]
    fn project_examples() {
        let p = project(&Ket::plus(), &Ket::h().outer(), &[0]).unwrap();
        assert!((p.prob - 0.5).abs() < ALGEBRA_TOL);
        assert!(p.state.unwrap().max_abs_diff(&Ket::h()) < ALGEBRA_TOL);

        let p = project(&Ket::h(), &Ket::v().outer(), &[0]).unwrap();
        assert_eq!(p.prob, 0.0);
        assert!(p.state.is_none());
    }

    #[test]
    fn project_rejects_non_idempotent() {
        let x = Operator::pauli_x();
        assert!(matches!(
            project(&Ket::h(), &x, &[0]),
            Err(Error::NotIdempotent(_))
        ));
    }

    #[test]
    fn canonical_phase_fixes_global_phase() {
        let k = Ket::r().scale(C64::from_polar(1.0, 1.234));
        assert!(k.approx_eq_up_to_phase(&Ket::r(), 1e-12));
        assert!(!Ket::r().approx_eq_up_to_phase(&Ket::l(), 1e-6));
        let canon = k.canonical_phase();
        assert!(canon.amplitude(0).im.abs() < 1e-15 && canon.amplitude(0).re > 0.0);
    }

    #[test]
    fn rejects_non_finite() {
        assert_eq!(
            Ket::new(vec![c(f64::NAN, 0.0), ZERO]),
            Err(Error::NonFinite)
        );
        assert_eq!(Ket::new(vec![ZERO; 3]), Err(Error::NotPowerOfTwo(3)));
    }
}
