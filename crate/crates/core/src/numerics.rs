//! Dense complex linear algebra over explicitly shaped matrices.
//!
//! Subsystem order always follows the declared [`DimProfile`]: the leftmost
//! subsystem is the most significant digit of a row or column index. Classical
//! index tuples use [`MixedRadix`], where the first digit varies fastest.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{schema, Error, Result};

pub type C64 = Complex64;

/// Default tolerance for equality, TP and PSD checks.
pub const DEFAULT_TOL: f64 = 1e-9;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl TryFrom<RawMatrix> for ComplexMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        let data = raw.data.iter().map(|&[re, im]| C64::new(re, im)).collect();
        ComplexMatrix::new(raw.rows, raw.cols, data)
    }
}

impl From<ComplexMatrix> for RawMatrix {
    fn from(m: ComplexMatrix) -> Self {
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries, rejecting length mismatches and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(schema(
                "data",
                format!(
                    "expected {} entries for a {rows}x{cols} matrix, got {}",
                    rows * cols,
                    data.len()
                ),
            ));
        }
        if let Some(pos) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(schema("data", format!("entry {pos} is not finite")));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_real(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        Self::new(rows, cols, values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn diagonal(values: &[C64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// `|row⟩⟨col|` in a `rows x cols` space.
    pub fn ket_bra(rows: usize, cols: usize, row: usize, col: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        m[(row, col)] = ONE;
        m
    }

    /// Column vector from amplitudes.
    pub fn ket(amplitudes: &[C64]) -> Self {
        ComplexMatrix {
            rows: amplitudes.len(),
            cols: 1,
            data: amplitudes.to_vec(),
        }
    }

    /// `|v⟩⟨v|` for a column vector `v`.
    pub fn projector(amplitudes: &[C64]) -> Self {
        let v = Self::ket(amplitudes);
        v.matmul(&v.adjoint())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)];
            }
        }
        out
    }

    pub fn scale(&self, factor: C64) -> Self {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * factor).collect(),
        }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(C64::new(factor, 0.0))
    }

    /// Matrix product; panics on inner-dimension mismatch (use [`Self::try_matmul`]
    /// for checked multiplication).
    pub fn matmul(&self, rhs: &Self) -> Self {
        self.try_matmul(rhs).expect("matmul shape mismatch")
    }

    pub fn try_matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&z| z == ZERO)
    }

    /// `‖m − m†‖_F`.
    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut acc = 0.0;
        for r in 0..self.rows {
            for c in 0..self.cols {
                acc += (self[(r, c)] - self[(c, r)].conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// `(m + m†)/2`.
    pub fn hermitian_part(&self) -> Self {
        let mut out = Self::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(r, c)] = (self[(r, c)] + self[(c, r)].conj()) * 0.5;
            }
        }
        out
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "shape {}x{} differs from {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                out[(r, c)] = m[(r, c)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of bounds");
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of bounds");
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.try_add(rhs).expect("add shape mismatch")
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.try_sub(rhs).expect("sub shape mismatch")
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!(self.shape(), rhs.shape(), "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

/// Ordered subsystem dimensions annotating a square matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DimProfile(Vec<usize>);

impl DimProfile {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Dimension(format!(
                "subsystem dimensions must be non-empty and positive, got {dims:?}"
            )));
        }
        Ok(DimProfile(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Subsystem digits of a flat index, leftmost most significant.
    fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.0.len()];
        for (slot, &d) in out.iter_mut().zip(&self.0).rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }

    fn flatten(&self, digits: &[usize]) -> usize {
        digits.iter().zip(&self.0).fold(0, |acc, (&x, &d)| acc * d + x)
    }

    fn check(&self, m: &ComplexMatrix, subsystems: &[usize]) -> Result<()> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "expected a square matrix, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        if self.total() != m.rows() {
            return Err(Error::Dimension(format!(
                "profile {:?} has total dimension {}, matrix is {}x{}",
                self.0,
                self.total(),
                m.rows(),
                m.cols()
            )));
        }
        if let Some(&bad) = subsystems.iter().find(|&&s| s >= self.0.len()) {
            return Err(Error::Dimension(format!(
                "subsystem {bad} out of range for profile {:?}",
                self.0
            )));
        }
        Ok(())
    }
}

/// Mixed-radix encoding of classical index tuples; the first digit varies
/// fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixedRadix {
    radices: Vec<usize>,
}

impl MixedRadix {
    pub fn new(radices: Vec<usize>) -> Self {
        MixedRadix { radices }
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn size(&self) -> usize {
        self.radices.iter().product()
    }

    pub fn encode(&self, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.radices.len());
        digits
            .iter()
            .zip(&self.radices)
            .rev()
            .fold(0, |acc, (&x, &r)| {
                debug_assert!(x < r);
                acc * r + x
            })
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        self.radices
            .iter()
            .map(|&r| {
                let d = index % r;
                index /= r;
                d
            })
            .collect()
    }

    /// All digit tuples in encoding order.
    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.size()).map(move |i| self.decode(i))
    }
}

/// Kronecker product with subsystem order `(a, b)`.
pub fn tensor_product(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut out = ComplexMatrix::zeros(rows, cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let x = a[(i, j)];
            if x == ZERO {
                continue;
            }
            for k in 0..b.rows {
                for l in 0..b.cols {
                    out.data[(i * b.rows + k) * cols + j * b.cols + l] = x * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Traces out the subsystems listed in `traced`, keeping the rest in profile order.
pub fn partial_trace(
    m: &ComplexMatrix,
    profile: &DimProfile,
    traced: &[usize],
) -> Result<ComplexMatrix> {
    profile.check(m, traced)?;
    let kept: Vec<usize> = (0..profile.len()).filter(|s| !traced.contains(s)).collect();
    let traced: Vec<usize> = (0..profile.len()).filter(|s| traced.contains(s)).collect();
    let kept_dims: Vec<usize> = kept.iter().map(|&s| profile.0[s]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&s| profile.0[s]).collect();
    let kept_total: usize = kept_dims.iter().product();
    let traced_total: usize = traced_dims.iter().product();
    let kept_profile = DimProfile(if kept_dims.is_empty() { vec![1] } else { kept_dims });
    let traced_profile = DimProfile(if traced_dims.is_empty() { vec![1] } else { traced_dims });

    // full index for each (kept, traced) pair
    let mut full = vec![0usize; kept_total * traced_total];
    let mut digits = vec![0usize; profile.len()];
    for k in 0..kept_total {
        let kd = kept_profile.digits(k);
        for t in 0..traced_total {
            let td = traced_profile.digits(t);
            for (pos, &s) in kept.iter().enumerate() {
                digits[s] = kd[pos];
            }
            for (pos, &s) in traced.iter().enumerate() {
                digits[s] = td[pos];
            }
            full[k * traced_total + t] = profile.flatten(&digits);
        }
    }

    let mut out = ComplexMatrix::zeros(kept_total, kept_total);
    for r in 0..kept_total {
        for c in 0..kept_total {
            let mut acc = ZERO;
            for t in 0..traced_total {
                acc += m[(full[r * traced_total + t], full[c * traced_total + t])];
            }
            out[(r, c)] = acc;
        }
    }
    Ok(out)
}

/// Transposes the listed subsystems in the computational basis.
pub fn partial_transpose(
    m: &ComplexMatrix,
    profile: &DimProfile,
    transposed: &[usize],
) -> Result<ComplexMatrix> {
    profile.check(m, transposed)?;
    let n = m.rows();
    let digits: Vec<Vec<usize>> = (0..n).map(|i| profile.digits(i)).collect();
    let mut out = ComplexMatrix::zeros(n, n);
    let mut rd = vec![0usize; profile.len()];
    let mut cd = vec![0usize; profile.len()];
    for r in 0..n {
        for c in 0..n {
            rd.copy_from_slice(&digits[r]);
            cd.copy_from_slice(&digits[c]);
            for &s in transposed {
                std::mem::swap(&mut rd[s], &mut cd[s]);
            }
            out[(profile.flatten(&rd), profile.flatten(&cd))] = m[(r, c)];
        }
    }
    Ok(out)
}

/// Frobenius distance `‖a − b‖_F`.
pub fn distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Spectral decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, matched to `values`.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn vector(&self, k: usize) -> Vec<C64> {
        (0..self.vectors.rows()).map(|r| self.vectors[(r, k)]).collect()
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

fn check_hermitian(m: &ComplexMatrix, tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let deviation = m.hermiticity_defect();
    let allowed = tol * m.rows().max(1) as f64;
    if deviation > allowed {
        return Err(Error::NotHermitian { deviation, allowed });
    }
    Ok(())
}

/// Eigen-decomposes the Hermitian part of `m` after checking
/// `‖m − m†‖_F ≤ tol·dim`.
pub fn hermitian_eigen(m: &ComplexMatrix, tol: f64) -> Result<HermitianEigen> {
    check_hermitian(m, tol)?;
    if m.rows() == 0 {
        return Ok(HermitianEigen {
            values: vec![],
            vectors: ComplexMatrix::zeros(0, 0),
        });
    }
    // Householder tridiagonalization followed by implicit-shift QR.
    let eig = m.hermitian_part().to_nalgebra().symmetric_eigen();
    let mut order: Vec<usize> = (0..m.rows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let sorted = DMatrix::from_fn(m.rows(), m.rows(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(HermitianEigen {
        values,
        vectors: ComplexMatrix::from_nalgebra(&sorted),
    })
}

/// True iff the smallest eigenvalue is at least `−tol`.
pub fn is_positive_semidefinite(m: &ComplexMatrix, tol: f64) -> Result<bool> {
    Ok(hermitian_eigen(m, tol)?.min() >= -tol)
}

/// Largest eigenvalue of a Hermitian matrix (the operator norm when PSD).
pub fn max_eigenvalue(m: &ComplexMatrix, tol: f64) -> Result<f64> {
    Ok(hermitian_eigen(m, tol)?.max())
}

/// Principal square root of a PSD matrix; eigenvalues below zero are clipped.
pub fn psd_sqrt(m: &ComplexMatrix, tol: f64) -> Result<ComplexMatrix> {
    let eig = hermitian_eigen(m, tol)?;
    if eig.min() < -tol {
        return Err(Error::Positivity(format!(
            "minimum eigenvalue {:.3e} below -{tol:.1e}",
            eig.min()
        )));
    }
    let n = m.rows();
    let mut out = ComplexMatrix::zeros(n, n);
    for (k, &lambda) in eig.values.iter().enumerate() {
        if lambda <= 0.0 {
            continue;
        }
        let s = lambda.sqrt();
        let v = eig.vector(k);
        for r in 0..n {
            for c in 0..n {
                out[(r, c)] += v[r] * v[c].conj() * s;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
        let data = (0..rows * cols)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexMatrix::new(rows, cols, data).unwrap()
    }

    fn random_density(rng: &mut ChaCha8Rng, dim: usize) -> ComplexMatrix {
        let a = random_matrix(rng, dim, dim);
        let g = a.adjoint().matmul(&a);
        let t = g.trace().re;
        g.scale_real(1.0 / t)
    }

    fn max_entangled_unnormalized() -> ComplexMatrix {
        // Σ_{k,l} |kk⟩⟨ll|
        let mut m = ComplexMatrix::zeros(4, 4);
        for k in [0, 3] {
            for l in [0, 3] {
                m[(k, l)] = ONE;
            }
        }
        m
    }

    #[test]
    fn new_rejects_length_mismatch_naming_the_field() {
        let err = ComplexMatrix::new(2, 2, vec![ONE; 3]).unwrap_err();
        assert!(err.to_string().contains("`data`"), "{err}");
    }

    #[test]
    fn new_rejects_non_finite() {
        assert!(ComplexMatrix::new(1, 1, vec![C64::new(f64::NAN, 0.0)]).is_err());
        assert!(ComplexMatrix::new(1, 1, vec![C64::new(0.0, f64::INFINITY)]).is_err());
    }

    #[test]
    fn tensor_of_identities_is_identity() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(tensor_product(&i2, &i2), ComplexMatrix::identity(4));
    }

    #[test]
    fn tensor_of_basis_projectors() {
        let p0 = ComplexMatrix::ket_bra(2, 2, 0, 0);
        let p1 = ComplexMatrix::ket_bra(2, 2, 1, 1);
        let expected = ComplexMatrix::diagonal(&[ZERO, ONE, ZERO, ZERO]);
        assert_eq!(tensor_product(&p0, &p1), expected);
    }

    #[test]
    fn tensor_entry_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 2, 2);
        let b = random_matrix(&mut rng, 3, 3);
        let ab = tensor_product(&a, &b);
        assert_eq!(ab.shape(), (6, 6));
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..3 {
                    for l in 0..3 {
                        assert_eq!(ab[(3 * i + k, 3 * j + l)], a[(i, j)] * b[(k, l)]);
                    }
                }
            }
        }
    }

    #[test]
    fn partial_trace_of_identity() {
        let p = DimProfile::new(vec![2, 2]).unwrap();
        let r = partial_trace(&ComplexMatrix::identity(4), &p, &[0]).unwrap();
        assert_eq!(r, ComplexMatrix::identity(2).scale_real(2.0));
    }

    #[test]
    fn partial_trace_of_maximally_entangled() {
        let p = DimProfile::new(vec![2, 2]).unwrap();
        let phi = max_entangled_unnormalized().scale_real(0.5);
        let r = partial_trace(&phi, &p, &[1]).unwrap();
        assert!(distance(&r, &ComplexMatrix::identity(2).scale_real(0.5)).unwrap() < 1e-15);
    }

    #[test]
    fn partial_trace_rejects_profile_mismatch() {
        let p = DimProfile::new(vec![2, 3]).unwrap();
        assert!(matches!(
            partial_trace(&ComplexMatrix::identity(4), &p, &[0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn partial_trace_middle_subsystem() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_density(&mut rng, 2);
        let b = random_density(&mut rng, 3);
        let cc = random_density(&mut rng, 2);
        let abc = tensor_product(&tensor_product(&a, &b), &cc);
        let p = DimProfile::new(vec![2, 3, 2]).unwrap();
        let r = partial_trace(&abc, &p, &[1]).unwrap();
        assert!(distance(&r, &tensor_product(&a, &cc)).unwrap() < 1e-14);
    }

    #[test]
    fn partial_transpose_cases() {
        let p = DimProfile::new(vec![2, 2]).unwrap();
        let swap = ComplexMatrix::from_real(
            4,
            4,
            &[
                1., 0., 0., 0., //
                0., 0., 1., 0., //
                0., 1., 0., 0., //
                0., 0., 0., 1.,
            ],
        )
        .unwrap();
        assert_eq!(partial_transpose(&max_entangled_unnormalized(), &p, &[1]).unwrap(), swap);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_matrix(&mut rng, 4, 4);
        assert_eq!(partial_transpose(&m, &p, &[0, 1]).unwrap(), m.transpose());
        let twice = partial_transpose(&partial_transpose(&m, &p, &[0]).unwrap(), &p, &[0]).unwrap();
        assert_eq!(twice, m);
    }

    #[test]
    fn psd_examples() {
        assert!(is_positive_semidefinite(&ComplexMatrix::identity(4), DEFAULT_TOL).unwrap());
        let d = ComplexMatrix::diagonal(&[c(1.0), c(-1.0)]);
        assert!(!is_positive_semidefinite(&d, DEFAULT_TOL).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(&mut rng, 5, 5);
        assert!(is_positive_semidefinite(&a.adjoint().matmul(&a), DEFAULT_TOL).unwrap());
    }

    #[test]
    fn psd_rejects_non_hermitian() {
        let m = ComplexMatrix::from_real(2, 2, &[1.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            is_positive_semidefinite(&m, DEFAULT_TOL),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn distance_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_matrix(&mut rng, 3, 3);
        assert_eq!(distance(&m, &m).unwrap(), 0.0);
        let d = distance(&ComplexMatrix::identity(2), &ComplexMatrix::zeros(2, 2)).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        let x = random_matrix(&mut rng, 3, 3);
        let y = random_matrix(&mut rng, 3, 3);
        let z = random_matrix(&mut rng, 3, 3);
        assert!(
            distance(&x, &z).unwrap() <= distance(&x, &y).unwrap() + distance(&y, &z).unwrap()
        );
        assert!(distance(&x, &ComplexMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_matrix(&mut rng, 6, 6);
        let h = a.adjoint().matmul(&a);
        let eig = hermitian_eigen(&h, DEFAULT_TOL).unwrap();
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        let diag = ComplexMatrix::diagonal(&eig.values.iter().map(|&v| c(v)).collect::<Vec<_>>());
        let back = eig.vectors.matmul(&diag).matmul(&eig.vectors.adjoint());
        assert!(distance(&back, &h).unwrap() < 1e-12);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = random_matrix(&mut rng, 4, 4);
        let h = a.adjoint().matmul(&a);
        let s = psd_sqrt(&h, DEFAULT_TOL).unwrap();
        assert!(distance(&s.matmul(&s), &h).unwrap() < 1e-12);
    }

    #[test]
    fn mixed_radix_first_digit_fastest() {
        let r = MixedRadix::new(vec![2, 3]);
        assert_eq!(r.encode(&[1, 0]), 1);
        assert_eq!(r.encode(&[0, 1]), 2);
        assert_eq!(r.decode(5), vec![1, 2]);
        assert_eq!(r.iter().count(), 6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        fn int_matrix(rows: usize, cols: usize) -> impl Strategy<Value = ComplexMatrix> {
            proptest::collection::vec((-3i32..=3, -3i32..=3), rows * cols).prop_map(move |v| {
                ComplexMatrix::new(
                    rows,
                    cols,
                    v.into_iter().map(|(a, b)| C64::new(a as f64, b as f64)).collect(),
                )
                .unwrap()
            })
        }

        proptest! {
            #[test]
            fn tensor_is_associative(
                a in int_matrix(2, 1), b in int_matrix(1, 3), cc in int_matrix(2, 2)
            ) {
                let left = tensor_product(&tensor_product(&a, &b), &cc);
                let right = tensor_product(&a, &tensor_product(&b, &cc));
                prop_assert_eq!(left, right);
            }

            #[test]
            fn partial_trace_recovers_factor(seed in any::<u64>(), da in 1usize..=4, db in 1usize..=4) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rho = random_matrix(&mut rng, da, da);
                let sigma = random_matrix(&mut rng, db, db);
                let p = DimProfile::new(vec![da, db]).unwrap();
                let joint = tensor_product(&rho, &sigma);
                let left = partial_trace(&joint, &p, &[1]).unwrap();
                let right = partial_trace(&joint, &p, &[0]).unwrap();
                prop_assert!(distance(&left, &rho.scale(sigma.trace())).unwrap() < 1e-12);
                prop_assert!(distance(&right, &sigma.scale(rho.trace())).unwrap() < 1e-12);
            }

            #[test]
            fn partial_transpose_keeps_trace_and_hermiticity(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random_matrix(&mut rng, 6, 6);
                let h = a.hermitian_part();
                let p = DimProfile::new(vec![2, 3]).unwrap();
                let t = partial_transpose(&h, &p, &[1]).unwrap();
                prop_assert!((t.trace() - h.trace()).norm() < 1e-12);
                prop_assert!(t.hermiticity_defect() < 1e-12);
            }
        }

        #[test]
        fn gram_matrices_are_psd() {
            let mut rng = ChaCha8Rng::seed_from_u64(2024);
            for _ in 0..100 {
                let dim = rng.random_range(1..=8);
                let a = random_matrix(&mut rng, dim, dim);
                assert!(is_positive_semidefinite(&a.adjoint().matmul(&a), DEFAULT_TOL).unwrap());
            }
        }
    }
}
