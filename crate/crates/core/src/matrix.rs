//! Dense complex matrices, Haar-random unitary sampling, exact permanents,
//! and polar projection onto the unitary group.
//!
//! Everything downstream (mesh composition, the compiler, quantum
//! interference) is built on [`ComplexMatrix`] and [`UnitaryMatrix`].
//! Entry `(j, k)` is always the amplitude from input mode `k` to output
//! mode `j`, so fields propagate as `out = S * in` with column vectors.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Max-abs tolerance for unitarity checks used throughout the crate.
pub const UNITARY_TOL: f64 = 1e-10;

/// Exact permanents are O(2^n * n); larger inputs are rejected.
pub const MAX_PERMANENT_DIM: usize = 20;

/// Dense complex matrix in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Build a matrix from row-major entries, validating shape and finiteness.
    pub fn new(rows: usize, cols: usize, entries: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for j in 0..n {
            m.set(j, j, Complex64::new(1.0, 0.0));
        }
        m
    }

    pub fn from_fn<F: FnMut(usize, usize) -> Complex64>(rows: usize, cols: usize, mut f: F) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for j in 0..rows {
            for k in 0..cols {
                entries.push(f(j, k));
            }
        }
        Self { rows, cols, entries }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.entries[row * self.cols + col] = value;
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn mul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for j in 0..self.rows {
            for k in 0..rhs.cols {
                let mut acc = Complex64::new(0.0, 0.0);
                for l in 0..self.cols {
                    acc += self.get(j, l) * rhs.get(l, k);
                }
                out.set(j, k, acc);
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |j, k| self.get(k, j).conj())
    }

    pub fn transpose(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |j, k| self.get(k, j))
    }

    pub fn scale(&self, factor: Complex64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn scale_in_place(&mut self, factor: Complex64) {
        for z in &mut self.entries {
            *z *= factor;
        }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entry-wise difference modulus; panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.rows, self.cols, |j, k| self.get(j, k))
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<Complex64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |j, k| m[(j, k)])
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    entries: Vec<[f64; 2]>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(deserializer)?;
        ComplexMatrix::new(
            repr.rows,
            repr.cols,
            repr.entries
                .into_iter()
                .map(|[re, im]| Complex64::new(re, im))
                .collect(),
        )
        .map_err(serde::de::Error::custom)
    }
}

/// True iff `max_abs(M†M - I) <= tol`.
pub fn is_unitary(m: &ComplexMatrix, tol: f64) -> Result<bool> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "unitarity check needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    Ok(unitarity_deviation(m) <= tol)
}

/// `max_abs(M†M - I)`, the quantity compared against the tolerance.
pub fn unitarity_deviation(m: &ComplexMatrix) -> f64 {
    let n = m.rows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for k in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in 0..n {
                acc += m.get(l, j).conj() * m.get(l, k);
            }
            if j == k {
                acc -= 1.0;
            }
            worst = worst.max(acc.norm());
        }
    }
    worst
}

/// Square complex matrix with a verified `U†U = I` invariant.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct UnitaryMatrix(ComplexMatrix);

impl UnitaryMatrix {
    /// Verify unitarity at the crate-wide tolerance.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(m, UNITARY_TOL)
    }

    /// Verify unitarity at a caller-chosen tolerance (looser ingest paths).
    pub fn with_tolerance(m: ComplexMatrix, tol: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "unitary matrix must be square, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let dev = unitarity_deviation(&m);
        if dev > tol {
            return Err(Error::NotUnitary { max_dev: dev, tol });
        }
        Ok(Self(m))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }
}

impl<'de> Deserialize<'de> for UnitaryMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let m = ComplexMatrix::deserialize(deserializer)?;
        UnitaryMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

/// Sample an N x N unitary from the Haar measure.
///
/// Complex Gaussian matrix, QR factorization, then the R diagonal is
/// rephased to unit modulus; without that correction plain QR is not
/// Haar-distributed. Deterministic for a fixed seed (ChaCha8 stream).
pub fn haar_random_unitary(n: usize, seed: u64) -> Result<UnitaryMatrix> {
    if n == 0 {
        return Err(Error::Dimension("dimension must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let g = DMatrix::<Complex64>::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * inv_sqrt2, im * inv_sqrt2)
    });
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    UnitaryMatrix::new(ComplexMatrix::from_nalgebra(&q))
}

/// Exact permanent via Ryser's formula with Gray-code subset updates.
pub fn permanent(m: &ComplexMatrix) -> Result<Complex64> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "permanent needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    if n > MAX_PERMANENT_DIM {
        return Err(Error::PermanentTooLarge {
            dim: n,
            max: MAX_PERMANENT_DIM,
        });
    }
    match n {
        1 => return Ok(m.get(0, 0)),
        2 => return Ok(m.get(0, 0) * m.get(1, 1) + m.get(0, 1) * m.get(1, 0)),
        _ => {}
    }
    let mut col_sums = vec![Complex64::new(0.0, 0.0); n];
    let mut total = Complex64::new(0.0, 0.0);
    let mut prev_gray: usize = 0;
    for g in 1usize..(1 << n) {
        let gray = g ^ (g >> 1);
        let changed = gray ^ prev_gray;
        let row = changed.trailing_zeros() as usize;
        if gray & changed != 0 {
            for (k, s) in col_sums.iter_mut().enumerate() {
                *s += m.get(row, k);
            }
        } else {
            for (k, s) in col_sums.iter_mut().enumerate() {
                *s -= m.get(row, k);
            }
        }
        let prod: Complex64 = col_sums.iter().product();
        if gray.count_ones() % 2 == 0 {
            total += prod;
        } else {
            total -= prod;
        }
        prev_gray = gray;
    }
    if n % 2 == 1 {
        total = -total;
    }
    Ok(total)
}

/// Singular values in descending order.
pub fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    let svd = m.to_nalgebra().svd(false, false);
    let mut vals: Vec<f64> = svd.singular_values.iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    vals
}

/// Polar factor `P * Q†` from the SVD `M = P Σ Q†`, with no rank check.
///
/// Always returns a unitary even when M is singular (the factor is then
/// not unique). Callers that must reject rank-deficient input use
/// [`nearest_unitary`].
pub(crate) fn polar_unitary_factor(m: &ComplexMatrix) -> Result<UnitaryMatrix> {
    let svd = m.to_nalgebra().svd(true, true);
    let u = svd
        .u
        .as_ref()
        .ok_or_else(|| Error::Numerical("SVD did not produce U".into()))?;
    let vt = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::Numerical("SVD did not produce V".into()))?;
    UnitaryMatrix::new(ComplexMatrix::from_nalgebra(&(u * vt)))
}

/// Closest unitary in Frobenius norm (polar decomposition).
pub fn nearest_unitary(m: &ComplexMatrix) -> Result<UnitaryMatrix> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "nearest_unitary needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let svd = m.to_nalgebra().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let smin = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if smax <= 0.0 || smin <= 1e-12 * smax {
        return Err(Error::Singular);
    }
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    UnitaryMatrix::new(ComplexMatrix::from_nalgebra(&(u * vt)))
}

/// Global phase `gamma` aligning `a` onto `b` at b's largest entry, and the
/// max-abs difference `|e^{i gamma} a - b|` after alignment.
///
/// Unitaries that are equal as optical transformations differ by exactly
/// such a phase, which intensity and coincidence measurements cannot see.
pub fn align_global_phase(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<(f64, f64)> {
    if (a.rows(), a.cols()) != (b.rows(), b.cols()) {
        return Err(Error::Dimension("phase alignment needs equal shapes".into()));
    }
    let mut best = (0usize, 0usize);
    let mut best_mag = -1.0;
    for j in 0..b.rows() {
        for k in 0..b.cols() {
            let mag = b.get(j, k).norm();
            if mag > best_mag {
                best_mag = mag;
                best = (j, k);
            }
        }
    }
    let aa = a.get(best.0, best.1);
    let gamma = if aa.norm() > 0.0 && best_mag > 0.0 {
        (b.get(best.0, best.1) / aa).arg()
    } else {
        0.0
    };
    let rotated = a.scale(Complex64::from_polar(1.0, gamma));
    Ok((gamma, rotated.max_abs_diff(b)))
}
