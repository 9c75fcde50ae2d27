//! Complex 2x2 algebra for a lossless 50:50 beam splitter.
//!
//! The two phase bases of the splitter correspond to a relative phase of
//! +pi/2 or -pi/2 between the transmitted and reflected fields. Each basis
//! has its own unitary:
//!
//! ```text
//! [BS]+ = 1/sqrt(2) [[1,  i], [ i, 1]]
//! [BS]- = 1/sqrt(2) [[1, -i], [-i, 1]]
//! ```
//!
//! Amplitudes are normalised so that a single photon has `|E0| = 1`, which
//! makes every intensity below a multiple of the single-photon intensity.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

/// Complex field amplitude.
pub type Complex = Complex64;

/// Tolerance used for unitarity checks.
pub const UNITARY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum AlgebraError {
    #[error("beam-splitter matrix is not unitary (max deviation from identity {deviation:.3e})")]
    NotUnitary { deviation: f64 },
}

/// Which of the two splitter phase bases is in play.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PhaseBasis {
    /// Relative phase +pi/2.
    Plus,
    /// Relative phase -pi/2.
    Minus,
}

impl PhaseBasis {
    pub const ALL: [PhaseBasis; 2] = [PhaseBasis::Plus, PhaseBasis::Minus];

    fn sign(self) -> f64 {
        match self {
            PhaseBasis::Plus => 1.0,
            PhaseBasis::Minus => -1.0,
        }
    }

    /// The relative phase in radians.
    pub fn phase(self) -> f64 {
        self.sign() * std::f64::consts::FRAC_PI_2
    }
}

/// How the two opposite-basis matrices are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combination {
    /// `[BS]+ + [BS]-`: everything leaves through output 1.
    Symmetric,
    /// `[BS]+ - [BS]-`: everything leaves through output 2.
    Antisymmetric,
}

/// A 2x2 complex matrix acting on the two splitter ports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSplitterMatrix {
    entries: [[Complex; 2]; 2],
}

impl BeamSplitterMatrix {
    /// Wraps raw entries without checking unitarity.
    pub fn from_entries(entries: [[Complex; 2]; 2]) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[[Complex; 2]; 2] {
        &self.entries
    }

    pub fn scale(&self, factor: Complex) -> Self {
        let mut entries = self.entries;
        for row in entries.iter_mut() {
            for value in row.iter_mut() {
                *value *= factor;
            }
        }
        Self { entries }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex, Complex) -> Complex) -> Self {
        let mut entries = self.entries;
        for (r, row) in entries.iter_mut().enumerate() {
            for (c, value) in row.iter_mut().enumerate() {
                *value = f(self.entries[r][c], other.entries[r][c]);
            }
        }
        Self { entries }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let e = &self.entries;
        Self {
            entries: [
                [e[0][0].conj(), e[1][0].conj()],
                [e[0][1].conj(), e[1][1].conj()],
            ],
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let a = &self.entries;
        let b = &other.entries;
        let mut entries = [[Complex::new(0.0, 0.0); 2]; 2];
        for (r, row) in entries.iter_mut().enumerate() {
            for (c, value) in row.iter_mut().enumerate() {
                *value = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        Self { entries }
    }

    /// Rows swapped, i.e. the two output ports relabelled.
    pub fn swap_rows(&self) -> Self {
        Self {
            entries: [self.entries[1], self.entries[0]],
        }
    }

    /// Largest entrywise deviation of `M^dagger M` from the identity.
    pub fn unitarity_deviation(&self) -> f64 {
        let product = self.adjoint().mul(self);
        let mut worst: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((product.entries[r][c] - target).norm());
            }
        }
        worst
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_deviation() <= tol
    }

    fn mul_vec(&self, input: &PortAmplitudes) -> PortAmplitudes {
        let e = &self.entries;
        PortAmplitudes {
            e1: e[0][0] * input.e1 + e[0][1] * input.e2,
            e2: e[1][0] * input.e1 + e[1][1] * input.e2,
        }
    }
}

/// Field amplitudes at the two splitter ports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortAmplitudes {
    pub e1: Complex,
    pub e2: Complex,
}

impl PortAmplitudes {
    pub fn new(e1: Complex, e2: Complex) -> Self {
        Self { e1, e2 }
    }

    /// A field entering port 1 only.
    pub fn single_port(amplitude: Complex) -> Self {
        Self::new(amplitude, Complex::new(0.0, 0.0))
    }

    pub fn total_intensity(&self) -> f64 {
        self.e1.norm_sqr() + self.e2.norm_sqr()
    }
}

impl fmt::Display for PortAmplitudes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.e1, self.e2)
    }
}

/// Output intensities in units of the single-photon intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityPair {
    pub i1: f64,
    pub i2: f64,
}

impl IntensityPair {
    pub fn total(&self) -> f64 {
        self.i1 + self.i2
    }
}

/// The splitter matrix for one phase basis.
pub fn bs_matrix(basis: PhaseBasis) -> BeamSplitterMatrix {
    let one = Complex::new(FRAC_1_SQRT_2, 0.0);
    let cross = Complex::new(0.0, basis.sign() * FRAC_1_SQRT_2);
    BeamSplitterMatrix::from_entries([[one, cross], [cross, one]])
}

/// Matrix-vector product, refusing matrices that would not conserve energy.
pub fn apply(
    matrix: &BeamSplitterMatrix,
    input: &PortAmplitudes,
) -> Result<PortAmplitudes, AlgebraError> {
    let deviation = matrix.unitarity_deviation();
    if deviation > UNITARY_TOLERANCE {
        return Err(AlgebraError::NotUnitary { deviation });
    }
    Ok(matrix.mul_vec(input))
}

/// Both photons of a pair see opposite bases; the two matrices are summed
/// (symmetric) or differenced (antisymmetric) before acting on the input.
///
/// For a port-1 input `(E0, 0)` the result is `(sqrt(2) E0, 0)` or
/// `(0, sqrt(2) i E0)`: the full pair leaves through a single port.
pub fn superpose_opposite(input: &PortAmplitudes, combination: Combination) -> PortAmplitudes {
    let plus = bs_matrix(PhaseBasis::Plus);
    let minus = bs_matrix(PhaseBasis::Minus);
    let combined = match combination {
        Combination::Symmetric => plus.add(&minus),
        Combination::Antisymmetric => plus.sub(&minus),
    };
    combined.mul_vec(input)
}

/// Both photons see the same basis: the pair acts as one field of amplitude
/// `sqrt(2) E0` entering port 1, which splits evenly.
pub fn apply_same_basis(two_photon_amplitude: Complex, basis: PhaseBasis) -> PortAmplitudes {
    bs_matrix(basis).mul_vec(&PortAmplitudes::single_port(two_photon_amplitude))
}

pub fn intensity(amplitudes: &PortAmplitudes) -> IntensityPair {
    IntensityPair {
        i1: amplitudes.e1.norm_sqr(),
        i2: amplitudes.e2.norm_sqr(),
    }
}

/// True when `m1 = exp(i theta) m2` for some real theta, within `tol`.
///
/// For unitary inputs this holds exactly when `m1 m2^dagger` is a unit-modulus
/// multiple of the identity.
pub fn global_phase_equivalent(m1: &BeamSplitterMatrix, m2: &BeamSplitterMatrix, tol: f64) -> bool {
    let product = m1.mul(&m2.adjoint());
    let e = product.entries();
    let scalar = e[0][0];
    e[0][1].norm() <= tol
        && e[1][0].norm() <= tol
        && (e[1][1] - scalar).norm() <= tol
        && (scalar.norm() - 1.0).abs() <= tol
}
