//! Dense complex-matrix algebra for the rotation/phase operator calculus.
//!
//! Everything here is desk scale: protocol matrices never exceed
//! `2^j x 2^j` for small `j`, so storage is a plain row-major `Vec`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Mul;

use crate::error::{Error, Result};

/// Default tolerance for all numeric assertions (unitarity, equality,
/// postcondition checks). Overridable per scenario.
pub const DEFAULT_TOL: f64 = 1e-9;

/// An angle in radians. Composition may leave [0, 2pi); no wrapping is done.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Angle(pub f64);

impl Angle {
    pub fn rad(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl From<f64> for Angle {
    fn from(v: f64) -> Self {
        Angle(v)
    }
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("matrix dimensions must be >= 1"));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Convenience constructor from real entries.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        Self::new(
            rows,
            cols,
            entries.iter().map(|&r| Complex64::new(r, 0.0)).collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.get(i, j).conj();
            }
        }
        out
    }

    /// Kronecker product with `self` as the high-order factor.
    pub fn tensor(&self, other: &Self) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut out = Self::zeros(rows, cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.get(i, j);
                for p in 0..other.rows {
                    for q in 0..other.cols {
                        out.data[(i * other.rows + p) * cols + (j * other.cols + q)] =
                            a * other.get(p, q);
                    }
                }
            }
        }
        out
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::invalid(format!(
                "dimension mismatch: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// Apply to a column vector.
    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.cols {
            return Err(Error::invalid(format!(
                "vector length {} does not match matrix cols {}",
                v.len(),
                self.cols
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = v.iter().enumerate().map(|(j, &x)| self.get(i, j) * x).sum();
        }
        Ok(out)
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.max_abs_diff(other) <= tol
    }

    /// Entrywise check of `M * M^dagger = I` within `tol`.
    pub fn is_unitary(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let prod = self.matmul(&self.dagger()).expect("square product");
        prod.max_abs_diff(&Self::identity(self.rows)) <= tol
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    /// Panicking product for internal use where dimensions are known to agree.
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("matrix dimension mismatch")
    }
}

impl fmt::Display for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            write!(f, "[")?;
            for j in 0..self.cols {
                let v = self.get(i, j);
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{:+.6}{:+.6}i", v.re, v.im)?;
            }
            writeln!(f, "]")?;
        }
        Ok(())
    }
}

// Serialize complex entries as (re, im) pairs so the wire format is stable.
#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<(f64, f64)>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|c| (c.re, c.im)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = MatrixRepr::deserialize(d)?;
        ComplexMatrix::new(
            r.rows,
            r.cols,
            r.data
                .into_iter()
                .map(|(re, im)| Complex64::new(re, im))
                .collect(),
        )
        .map_err(serde::de::Error::custom)
    }
}

/// The plane rotation `[[cos g, -sin g], [sin g, cos g]]`.
pub fn u_rot(gamma: impl Into<Angle>) -> Result<ComplexMatrix> {
    let gamma = gamma.into();
    if !gamma.is_finite() {
        return Err(Error::invalid("rotation angle must be finite"));
    }
    let (s, c) = gamma.rad().sin_cos();
    ComplexMatrix::from_real(2, 2, &[c, -s, s, c])
}

/// The phase matrix `diag(1, e^{i b})`.
pub fn e_phase(beta: impl Into<Angle>) -> Result<ComplexMatrix> {
    let beta = beta.into();
    if !beta.is_finite() {
        return Err(Error::invalid("phase angle must be finite"));
    }
    ComplexMatrix::new(
        2,
        2,
        vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::from_polar(1.0, beta.rad()),
        ],
    )
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::new(
        2,
        2,
        vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, 0.0),
        ],
    )
    .unwrap()
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
}

pub fn hadamard() -> ComplexMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_real(2, 2, &[h, h, h, -h]).unwrap()
}

/// CNOT with the first (high-order) qubit as control.
pub fn cnot() -> ComplexMatrix {
    ComplexMatrix::from_real(
        4,
        4,
        &[
            1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0,
        ],
    )
    .unwrap()
}

/// `X^a * Z^b * U(sigma2)`: the per-qubit blinding operator of the final
/// decryption handshake.
pub fn blinding_prefix(a: u8, b: u8, sigma2: Angle) -> Result<ComplexMatrix> {
    let mut m = u_rot(sigma2)?;
    if b == 1 {
        m = &pauli_z() * &m;
    }
    if a == 1 {
        m = &pauli_x() * &m;
    }
    Ok(m)
}

/// Solve `[tensor_i X^{a_i} Z^{b_i} U(sigma2)] * Q' = rhs` for `Q'`.
///
/// All factors are unitary, so the prefix is inverted by its adjoint.
pub fn solve_blinded(
    rhs: &ComplexMatrix,
    sigma2: Angle,
    mask: &[(u8, u8)],
) -> Result<ComplexMatrix> {
    let dim = 1usize << mask.len();
    if rhs.rows() != dim || rhs.cols() != dim {
        return Err(Error::invalid(format!(
            "rhs is {}x{} but mask has {} qubits",
            rhs.rows(),
            rhs.cols(),
            mask.len()
        )));
    }
    if !rhs.is_unitary(DEFAULT_TOL) {
        return Err(Error::invalid(
            "rhs of the blinding equation is not unitary",
        ));
    }
    let mut prefix = ComplexMatrix::identity(1);
    for &(a, b) in mask {
        prefix = prefix.tensor(&blinding_prefix(a, b, sigma2)?);
    }
    Ok(&prefix.dagger() * rhs)
}
