//! Arithmetic over the prime field `GF(p)`, `p = 2^31 - 1`, and the dense
//! matrices used for channel vectors and combining coefficients.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, MulAssign, Neg, Sub, SubAssign};

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Field modulus, the Mersenne prime `2^31 - 1`.
pub const MODULUS: u32 = (1 << 31) - 1;

#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldElement(u32);

impl FieldElement {
    pub const ZERO: Self = FieldElement(0);
    pub const ONE: Self = FieldElement(1);

    /// Reduces `v` modulo `p`.
    pub fn new(v: u64) -> Self {
        FieldElement((v % MODULUS as u64) as u32)
    }

    pub fn from_i64(v: i64) -> Self {
        FieldElement(v.rem_euclid(MODULUS as i64) as u32)
    }

    pub fn value(self) -> u32 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn pow(self, mut exp: u64) -> Self {
        let mut base = self;
        let mut acc = FieldElement::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc *= base;
            }
            base *= base;
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse, `None` for zero.
    pub fn inverse(self) -> Option<Self> {
        (!self.is_zero()).then(|| self.pow(MODULUS as u64 - 2))
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Add for FieldElement {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let s = self.0 + rhs.0;
        FieldElement(if s >= MODULUS { s - MODULUS } else { s })
    }
}

impl Sub for FieldElement {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        FieldElement(if self.0 >= rhs.0 {
            self.0 - rhs.0
        } else {
            self.0 + MODULUS - rhs.0
        })
    }
}

impl Neg for FieldElement {
    type Output = Self;
    fn neg(self) -> Self {
        FieldElement::ZERO - self
    }
}

impl Mul for FieldElement {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let prod = self.0 as u64 * rhs.0 as u64;
        // 2^31 = 1 (mod p), so fold the high bits down twice
        let folded = (prod & MODULUS as u64) + (prod >> 31);
        let folded = (folded & MODULUS as u64) + (folded >> 31);
        let v = folded as u32;
        FieldElement(if v >= MODULUS { v - MODULUS } else { v })
    }
}

impl AddAssign for FieldElement {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for FieldElement {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl MulAssign for FieldElement {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl std::iter::Sum for FieldElement {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(FieldElement::ZERO, |a, b| a + b)
    }
}

/// Inner product of two equal-length slices.
pub fn dot(a: &[FieldElement], b: &[FieldElement]) -> FieldElement {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Dense row-major matrix over the field.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<FieldElement>,
}

impl FieldMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<FieldElement>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Ok(FieldMatrix {
            rows,
            cols,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        FieldMatrix {
            rows,
            cols,
            entries: vec![FieldElement::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = FieldElement::ONE;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<FieldElement>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_u64_rows(rows: &[&[u64]]) -> Result<Self> {
        let rows: Vec<Vec<FieldElement>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| FieldElement::new(v)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    /// Uniformly random entries in `1..p`.
    pub fn random_nonzero(rows: usize, cols: usize, rng: &mut SeededRng) -> Self {
        let entries = (0..rows * cols).map(|_| rng.nonzero_element()).collect();
        FieldMatrix {
            rows,
            cols,
            entries,
        }
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

    pub fn entries(&self) -> &[FieldElement] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[FieldElement] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, v: &[FieldElement]) -> Result<Vec<FieldElement>> {
        if v.len() != self.cols {
            return Err(Error::Dimension(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn mul(&self, rhs: &FieldMatrix) -> Result<FieldMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = FieldMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a.is_zero() {
                    continue;
                }
                for c in 0..rhs.cols {
                    out[(i, c)] += a * rhs[(l, c)];
                }
            }
        }
        Ok(out)
    }

    /// Submatrix from the given row and column indices, in that order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> FieldMatrix {
        let mut entries = Vec::with_capacity(rows.len() * cols.len());
        for &r in rows {
            for &c in cols {
                entries.push(self[(r, c)]);
            }
        }
        FieldMatrix {
            rows: rows.len(),
            cols: cols.len(),
            entries,
        }
    }

    /// The matrix with column `c` removed.
    pub fn delete_column(&self, c: usize) -> FieldMatrix {
        let keep: Vec<usize> = (0..self.cols).filter(|&x| x != c).collect();
        let all: Vec<usize> = (0..self.rows).collect();
        self.select(&all, &keep)
    }

    /// Row rank by Gaussian elimination.
    pub fn rank(&self) -> usize {
        let mut m = self.entries.clone();
        let (rows, cols) = (self.rows, self.cols);
        let mut rank = 0;
        for col in 0..cols {
            if rank == rows {
                break;
            }
            let Some(pivot) = (rank..rows).find(|&r| !m[r * cols + col].is_zero()) else {
                continue;
            };
            for c in 0..cols {
                m.swap(pivot * cols + c, rank * cols + c);
            }
            let inv = m[rank * cols + col].inverse().expect("nonzero pivot");
            for r in rank + 1..rows {
                let factor = m[r * cols + col] * inv;
                if factor.is_zero() {
                    continue;
                }
                for c in col..cols {
                    let v = m[rank * cols + c];
                    m[r * cols + c] -= factor * v;
                }
            }
            rank += 1;
        }
        rank
    }

    pub fn determinant(&self) -> Result<FieldElement> {
        if self.rows != self.cols {
            return Err(Error::Dimension(
                "determinant of a non-square matrix".into(),
            ));
        }
        let n = self.rows;
        let mut m = self.entries.clone();
        let mut det = FieldElement::ONE;
        for col in 0..n {
            let Some(pivot) = (col..n).find(|&r| !m[r * n + col].is_zero()) else {
                return Ok(FieldElement::ZERO);
            };
            if pivot != col {
                for c in 0..n {
                    m.swap(pivot * n + c, col * n + c);
                }
                det = -det;
            }
            let p = m[col * n + col];
            det *= p;
            let inv = p.inverse().expect("nonzero pivot");
            for r in col + 1..n {
                let factor = m[r * n + col] * inv;
                for c in col..n {
                    let v = m[col * n + c];
                    m[r * n + c] -= factor * v;
                }
            }
        }
        Ok(det)
    }

    /// Solves `self * x = b` for square `self`.
    pub fn solve(&self, b: &[FieldElement]) -> Result<Vec<FieldElement>> {
        let n = self.rows;
        if self.cols != n || b.len() != n {
            return Err(Error::Dimension(format!(
                "solve with a {}x{} matrix and rhs of length {}",
                self.rows,
                self.cols,
                b.len()
            )));
        }
        // augmented [A | b], Gauss-Jordan
        let w = n + 1;
        let mut m = Vec::with_capacity(n * w);
        for (r, &rhs) in b.iter().enumerate() {
            m.extend_from_slice(self.row(r));
            m.push(rhs);
        }
        for col in 0..n {
            let Some(pivot) = (col..n).find(|&r| !m[r * w + col].is_zero()) else {
                return Err(Error::SingularMatrix {
                    rank: self.rank(),
                    dim: n,
                });
            };
            if pivot != col {
                for c in 0..w {
                    m.swap(pivot * w + c, col * w + c);
                }
            }
            let inv = m[col * w + col].inverse().expect("nonzero pivot");
            for c in col..w {
                m[col * w + c] *= inv;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = m[r * w + col];
                if factor.is_zero() {
                    continue;
                }
                for c in col..w {
                    let v = m[col * w + c];
                    m[r * w + c] -= factor * v;
                }
            }
        }
        Ok((0..n).map(|r| m[r * w + n]).collect())
    }
}

impl Index<(usize, usize)> for FieldMatrix {
    type Output = FieldElement;
    fn index(&self, (r, c): (usize, usize)) -> &FieldElement {
        assert!(r < self.rows && c < self.cols);
        &self.entries[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for FieldMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut FieldElement {
        assert!(r < self.rows && c < self.cols);
        &mut self.entries[r * self.cols + c]
    }
}

impl fmt::Debug for FieldMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "FieldMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

/// `(j-1) x j` Cauchy matrix `1 / (x_i - y_l)` with `x_i = i` and
/// `y_l = j - 1 + l`. Every square submatrix of a Cauchy matrix is
/// nonsingular, so removing any one column leaves an invertible minor.
pub fn cauchy_combining_matrix(j: usize) -> FieldMatrix {
    assert!(j >= 1 && (2 * j as u64) < MODULUS as u64);
    let rows = j - 1;
    // x_i - y_l = -(rows + l - i) takes only the values -1 ..= -(2j - 2)
    let neg_inv: Vec<FieldElement> = (0..rows + j)
        .map(|d| match d {
            0 => FieldElement::ZERO,
            d => -FieldElement::new(d as u64).inverse().expect("nonzero"),
        })
        .collect();
    let mut m = FieldMatrix::zeros(rows, j);
    for i in 0..rows {
        for l in 0..j {
            m[(i, l)] = neg_inv[rows + l - i];
        }
    }
    m
}

/// Deterministic generator: xoshiro256** seeded through SplitMix64.
///
/// Field elements are drawn by taking the top 31 bits of each 64-bit output
/// and rejecting values outside the requested range, so streams are
/// reproducible from the seed alone.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: Xoshiro256StarStar,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    /// Independent stream for the `index`-th child of `seed`.
    pub fn child(seed: u64, index: u64) -> Self {
        let mixed = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        Self::new(mixed)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `0..p`.
    pub fn element(&mut self) -> FieldElement {
        loop {
            let v = (self.next_u64() >> 33) as u32;
            if v < MODULUS {
                return FieldElement(v);
            }
        }
    }

    /// Uniform in `1..p`.
    pub fn nonzero_element(&mut self) -> FieldElement {
        loop {
            let v = (self.next_u64() >> 33) as u32;
            if v != 0 && v < MODULUS {
                return FieldElement(v);
            }
        }
    }

    pub fn elements(&mut self, n: usize) -> Vec<FieldElement> {
        (0..n).map(|_| self.element()).collect()
    }
}
