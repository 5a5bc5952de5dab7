use nalgebra::{DMatrix, SymmetricEigen};

use super::operator::max_abs;
use super::{
    photons_for_dim, scatter, target_shifts, Ket, Operator, Projection, Register, Tensor,
    ALGEBRA_TOL, C64, PROB_EPS, ZERO,
};
use crate::error::{Error, Result};

/// A mixed state on a polarization register.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    mat: DMatrix<C64>,
    photons: usize,
}

impl DensityOperator {
    /// Validates a Hermitian, unit-trace matrix.
    pub fn from_matrix(mat: DMatrix<C64>) -> Result<Self> {
        let rho = Self::raw(mat)?;
        let herm = max_abs(&(&rho.mat - rho.mat.adjoint()));
        if herm >= ALGEBRA_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let tr = rho.trace();
        if (tr - 1.0).abs() >= ALGEBRA_TOL {
            return Err(Error::BadTrace(tr));
        }
        Ok(rho)
    }

    fn raw(mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                actual: mat.ncols(),
            });
        }
        let photons = photons_for_dim(mat.nrows())?;
        if mat.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { mat, photons })
    }

    pub(crate) fn from_raw_unchecked(mat: DMatrix<C64>) -> Self {
        let photons = mat.nrows().trailing_zeros() as usize;
        Self { mat, photons }
    }

    pub fn from_ket(ket: &Ket) -> Self {
        let v = ket.vector();
        Self::from_raw_unchecked(v * v.adjoint())
    }

    pub fn maximally_mixed(photons: usize) -> Self {
        let dim = 1usize << photons;
        Self::from_raw_unchecked(DMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0))
    }

    /// Weighted sum `Σ wᵢ ρᵢ`; the weights are not required to sum to one.
    pub fn mixture(parts: &[(f64, DensityOperator)]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyIndexList)?;
        let dim = first.1.dim();
        let mut acc = DMatrix::from_element(dim, dim, ZERO);
        for (w, rho) in parts {
            if rho.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: rho.dim(),
                });
            }
            acc += &rho.mat * C64::new(*w, 0.0);
        }
        Self::raw(acc)
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    /// Rescales to unit trace; fails when the trace is at or below [`PROB_EPS`].
    pub fn normalized(&self) -> Result<Self> {
        let tr = self.trace();
        if tr <= PROB_EPS {
            return Err(Error::Undefined(tr));
        }
        Ok(Self::from_raw_unchecked(&self.mat / C64::new(tr, 0.0)))
    }

    pub fn scale(&self, w: f64) -> Self {
        Self::from_raw_unchecked(&self.mat * C64::new(w, 0.0))
    }

    pub fn add(&self, other: &DensityOperator) -> Result<Self> {
        self.check_dim(other.dim())?;
        Ok(Self::from_raw_unchecked(&self.mat + &other.mat))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.mat + self.mat.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// `½‖ρ − σ‖₁`
    pub fn trace_distance(&self, other: &DensityOperator) -> Result<f64> {
        self.check_dim(other.dim())?;
        let diff = Self::from_raw_unchecked(&self.mat - &other.mat);
        Ok(0.5 * diff.eigenvalues().iter().map(|e| e.abs()).sum::<f64>())
    }

    pub fn max_abs_diff(&self, other: &DensityOperator) -> f64 {
        max_abs(&(&self.mat - &other.mat))
    }

    /// `tr(Aρ)`, real part.
    pub fn expectation(&self, op: &Operator) -> Result<f64> {
        op.check_dim(self.dim())?;
        Ok((op.matrix() * &self.mat).trace().re)
    }

    pub fn expectation_ket(&self, ket: &Ket) -> Result<f64> {
        self.check_dim(ket.dim())?;
        let v = ket.vector();
        Ok((v.adjoint() * &self.mat * v)[(0, 0)].re)
    }

    /// Probability of each computational basis outcome.
    pub fn diagonal(&self) -> Vec<f64> {
        self.mat.diagonal().iter().map(|a| a.re).collect()
    }

    /// `KρK†` with `op` already acting on the full register.
    pub(crate) fn conjugate_full(&self, full: &Operator) -> Self {
        Self::from_raw_unchecked(full.matrix() * &self.mat * full.matrix().adjoint())
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: dim,
            });
        }
        Ok(())
    }
}

impl Tensor for DensityOperator {
    fn tensor(&self, other: &Self) -> Self {
        Self::from_raw_unchecked(self.mat.kronecker(&other.mat))
    }
}

impl Register for DensityOperator {
    fn photons(&self) -> usize {
        self.photons
    }

    fn apply(&self, op: &Operator, on: &[usize]) -> Result<Self> {
        let full = op.embed(on, self.photons)?;
        Ok(self.conjugate_full(&full))
    }

    fn project(&self, projector: &Operator, on: &[usize]) -> Result<Projection<Self>> {
        projector.ensure_idempotent()?;
        let kept = self.apply(projector, on)?;
        let prob = kept.trace();
        let state = if prob > PROB_EPS {
            Some(kept.scale(1.0 / prob))
        } else {
            None
        };
        Ok(Projection { prob, state })
    }
}

/// Traces out every photon not listed in `keep`. The kept photons appear in
/// the order given, so a full `keep` list permutes the register.
pub fn partial_trace(rho: &DensityOperator, keep: &[usize]) -> Result<DensityOperator> {
    let n = rho.photons;
    let keep_shifts = target_shifts(keep, n)?;
    let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
    let env_shifts: Vec<usize> = traced.iter().map(|&q| n - 1 - q).collect();
    let out_dim = 1usize << keep.len();
    let env_dim = 1usize << traced.len();
    let mut out = DMatrix::from_element(out_dim, out_dim, ZERO);
    for a in 0..out_dim {
        let ia = scatter(a, &keep_shifts);
        for b in 0..out_dim {
            let ib = scatter(b, &keep_shifts);
            let mut acc = ZERO;
            for e in 0..env_dim {
                let ie = if env_shifts.is_empty() { 0 } else { scatter(e, &env_shifts) };
                acc += rho.mat[(ia | ie, ib | ie)];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(DensityOperator::from_raw_unchecked(out))
}
