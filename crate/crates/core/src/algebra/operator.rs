use std::ops::Mul;

use nalgebra::DMatrix;

use super::{gather, mask_of, photons_for_dim, target_shifts, Tensor, ALGEBRA_TOL, C64, ONE, ZERO};
use crate::error::{Error, Result};

/// A square operator on a polarization register.
///
/// `unitary` and `hermitian` are only set by the validating constructors, so
/// a `true` flag means the property was checked to within [`ALGEBRA_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    mat: DMatrix<C64>,
    unitary: bool,
    hermitian: bool,
}

impl Operator {
    pub fn new(mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                actual: mat.ncols(),
            });
        }
        photons_for_dim(mat.nrows())?;
        if mat.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            mat,
            unitary: false,
            hermitian: false,
        })
    }

    pub fn unitary(mat: DMatrix<C64>) -> Result<Self> {
        let mut op = Self::new(mat)?;
        let dev = op.unitarity_deviation();
        if dev >= ALGEBRA_TOL {
            return Err(Error::NotUnitary(dev));
        }
        op.unitary = true;
        Ok(op)
    }

    pub fn hermitian(mat: DMatrix<C64>) -> Result<Self> {
        let mut op = Self::new(mat)?;
        let dev = op.hermiticity_deviation();
        if dev >= ALGEBRA_TOL {
            return Err(Error::NotHermitian(dev));
        }
        op.hermitian = true;
        Ok(op)
    }

    /// Row-major 2×2 operator.
    pub fn from_2x2(rows: [[C64; 2]; 2]) -> Self {
        Self::new(DMatrix::from_row_slice(
            2,
            2,
            &[rows[0][0], rows[0][1], rows[1][0], rows[1][1]],
        ))
        .expect("2x2 is a valid operator shape")
    }

    pub fn identity(photons: usize) -> Self {
        Self {
            mat: DMatrix::identity(1 << photons, 1 << photons),
            unitary: true,
            hermitian: true,
        }
    }

    pub fn pauli_x() -> Self {
        Self::pauli([[ZERO, ONE], [ONE, ZERO]])
    }

    pub fn pauli_y() -> Self {
        let i = C64::new(0.0, 1.0);
        Self::pauli([[ZERO, -i], [i, ZERO]])
    }

    pub fn pauli_z() -> Self {
        Self::pauli([[ONE, ZERO], [ZERO, -ONE]])
    }

    fn pauli(rows: [[C64; 2]; 2]) -> Self {
        let mut op = Self::from_2x2(rows);
        op.unitary = true;
        op.hermitian = true;
        op
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn photons(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary || self.unitarity_deviation() < ALGEBRA_TOL
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian || self.hermiticity_deviation() < ALGEBRA_TOL
    }

    pub fn unitarity_deviation(&self) -> f64 {
        let eye = DMatrix::<C64>::identity(self.dim(), self.dim());
        max_abs(&(self.mat.adjoint() * &self.mat - eye))
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        max_abs(&(&self.mat - self.mat.adjoint()))
    }

    pub fn idempotence_deviation(&self) -> f64 {
        max_abs(&(&self.mat * &self.mat - &self.mat))
    }

    pub(crate) fn ensure_idempotent(&self) -> Result<()> {
        let dev = self.idempotence_deviation();
        if dev >= ALGEBRA_TOL {
            return Err(Error::NotIdempotent(dev));
        }
        Ok(())
    }

    pub fn adjoint(&self) -> Self {
        Self {
            mat: self.mat.adjoint(),
            unitary: self.unitary,
            hermitian: self.hermitian,
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self::new(&self.mat * c).expect("scaling keeps the shape")
    }

    pub fn add(&self, other: &Operator) -> Result<Self> {
        self.check_dim(other.dim())?;
        Self::new(&self.mat + &other.mat)
    }

    pub fn sub(&self, other: &Operator) -> Result<Self> {
        self.check_dim(other.dim())?;
        Self::new(&self.mat - &other.mat)
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        max_abs(&(&self.mat - &other.mat))
    }

    /// Max-norm distance after removing the relative global phase.
    pub fn diff_up_to_phase(&self, other: &Operator) -> f64 {
        let overlap = self.mat.dotc(&other.mat);
        if overlap.norm() < 1e-300 {
            return self.max_abs_diff(other);
        }
        let phase = overlap / overlap.norm();
        max_abs(&(&self.mat * phase - &other.mat))
    }

    /// Lifts the operator to the full `photons`-photon register, acting on `on`.
    pub fn embed(&self, on: &[usize], photons: usize) -> Result<Self> {
        let shifts = target_shifts(on, photons)?;
        self.check_dim(1 << shifts.len())?;
        let dim = 1usize << photons;
        let mask = mask_of(&shifts);
        let mut full = DMatrix::from_element(dim, dim, ZERO);
        for i in 0..dim {
            for j in 0..dim {
                if i & !mask == j & !mask {
                    full[(i, j)] = self.mat[(gather(i, &shifts), gather(j, &shifts))];
                }
            }
        }
        Ok(Self {
            mat: full,
            unitary: self.unitary,
            hermitian: self.hermitian,
        })
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: self.dim(),
            });
        }
        Ok(())
    }
}

impl Tensor for Operator {
    fn tensor(&self, other: &Self) -> Self {
        Self {
            mat: self.mat.kronecker(&other.mat),
            unitary: self.unitary && other.unitary,
            hermitian: self.hermitian && other.hermitian,
        }
    }
}

impl Mul for &Operator {
    type Output = Operator;

    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim(), rhs.dim(), "operator dimensions differ");
        Operator {
            mat: &self.mat * &rhs.mat,
            unitary: self.unitary && rhs.unitary,
            hermitian: false,
        }
    }
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|a| a.norm()).fold(0.0, f64::max)
}
