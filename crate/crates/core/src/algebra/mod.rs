//! Dense complex linear algebra over small polarization registers.
//!
//! A register of `n` photons is a `2^n`-dimensional space. Photon 0 owns the
//! most significant bit of a basis index, and within one photon `H = 0`,
//! `V = 1`. Kronecker products follow the same rule: the left operand is the
//! more significant factor.
//!
//! Registers in this crate never exceed four photons, so everything is stored
//! as dense matrices.

mod density;
mod ket;
mod operator;

pub use density::{partial_trace, DensityOperator};
pub use ket::Ket;
pub use operator::Operator;

use crate::error::{Error, Result};
use num_complex::Complex64;

pub type C64 = Complex64;

/// Tolerance for algebraic identities (unitarity, normalization, idempotence).
pub const ALGEBRA_TOL: f64 = 1e-12;
/// Tolerance for positivity after repeated channel composition.
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Probabilities at or below this value leave the post-measurement state undefined.
pub const PROB_EPS: f64 = 1e-14;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Result of a projective measurement branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<S> {
    pub prob: f64,
    /// `None` when `prob <= PROB_EPS`.
    pub state: Option<S>,
}

impl<S> Projection<S> {
    pub fn into_state(self) -> Result<S> {
        self.state.ok_or(Error::Undefined(self.prob))
    }
}

/// Kronecker product of two values of the same kind.
pub trait Tensor: Sized {
    fn tensor(&self, other: &Self) -> Self;
}

pub fn tensor<T: Tensor>(a: &T, b: &T) -> T {
    a.tensor(b)
}

/// A state over a photon register that operators can act on.
pub trait Register: Sized {
    fn photons(&self) -> usize;

    /// Acts with `op` on the listed photons; `op`'s most significant factor
    /// acts on `on[0]`.
    fn apply(&self, op: &Operator, on: &[usize]) -> Result<Self>;

    fn project(&self, projector: &Operator, on: &[usize]) -> Result<Projection<Self>>;
}

pub fn apply<R: Register>(op: &Operator, target: &R, on: &[usize]) -> Result<R> {
    target.apply(op, on)
}

pub fn project<R: Register>(state: &R, projector: &Operator, on: &[usize]) -> Result<Projection<R>> {
    state.project(projector, on)
}

/// `⟨ψ|ρ|ψ⟩`.
pub fn fidelity(rho: &DensityOperator, target: &Ket) -> Result<f64> {
    rho.expectation_ket(target)
}

pub(crate) fn photons_for_dim(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(dim));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// Validates a target list against an `n`-photon register and returns the bit
/// shift of each listed photon.
pub(crate) fn target_shifts(on: &[usize], n: usize) -> Result<Vec<usize>> {
    if on.is_empty() {
        return Err(Error::EmptyIndexList);
    }
    let mut seen = 0usize;
    let mut shifts = Vec::with_capacity(on.len());
    for &q in on {
        if q >= n {
            return Err(Error::IndexOutOfRange { index: q, photons: n });
        }
        if seen & (1 << q) != 0 {
            return Err(Error::DuplicateIndex(q));
        }
        seen |= 1 << q;
        shifts.push(n - 1 - q);
    }
    Ok(shifts)
}

/// Extracts the sub-index formed by the bits at `shifts` (first shift is the
/// most significant bit of the result).
#[inline]
pub(crate) fn gather(index: usize, shifts: &[usize]) -> usize {
    shifts
        .iter()
        .fold(0, |acc, &s| (acc << 1) | ((index >> s) & 1))
}

/// Inverse of [`gather`]: spreads `sub` over the bit positions `shifts`.
#[inline]
pub(crate) fn scatter(sub: usize, shifts: &[usize]) -> usize {
    let k = shifts.len();
    shifts
        .iter()
        .enumerate()
        .fold(0, |acc, (pos, &s)| acc | (((sub >> (k - 1 - pos)) & 1) << s))
}

pub(crate) fn mask_of(shifts: &[usize]) -> usize {
    shifts.iter().fold(0, |acc, &s| acc | (1 << s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gather_scatter_inverse() {
        let shifts = [0, 3, 1];
        for sub in 0..8 {
            assert_eq!(gather(scatter(sub, &shifts), &shifts), sub);
        }
    }

    #[test]
    fn target_validation() {
        assert!(matches!(
            target_shifts(&[0, 0], 2),
            Err(Error::DuplicateIndex(0))
        ));
        assert!(matches!(
            target_shifts(&[2], 2),
            Err(Error::IndexOutOfRange { index: 2, photons: 2 })
        ));
        assert_eq!(target_shifts(&[0, 2], 3).unwrap(), vec![2, 0]);
    }
}
