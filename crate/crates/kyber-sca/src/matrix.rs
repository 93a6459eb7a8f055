//! Dense matrices over `Z_q` and the matrix form of the half-size NTT.
//!
//! The 256-point transform splits into two independent 128-point transforms,
//! one on even-index and one on odd-index coefficients, and both use the same
//! kernel: `m[i][j] = zeta^((2*bitrev7(i)+1)*j) mod q`. The inverse matrix
//! maps recovered NTT-domain coefficients back to the small time-domain
//! secret, which is what the lattice step ultimately searches for.

use serde::{Deserialize, Serialize};

use crate::ntt::bitrev7;
use crate::params::KyberParams;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MatrixError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is singular mod {0}")]
    Singular(i64),
}

/// Row-major dense matrix over `Z_q` with canonical entries in `[0, q)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModMatrix {
    pub rows: usize,
    pub cols: usize,
    pub q: i64,
    data: Vec<i64>,
}

/// Modular inverse via extended Euclid; `None` when `gcd(a, q) != 1`.
pub fn mod_inv(a: i64, q: i64) -> Option<i64> {
    let (mut old_r, mut r) = (a.rem_euclid(q), q);
    let (mut old_s, mut s) = (1i64, 0i64);
    while r != 0 {
        let quot = old_r / r;
        (old_r, r) = (r, old_r - quot * r);
        (old_s, s) = (s, old_s - quot * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(q))
}

impl ModMatrix {
    pub fn zero(rows: usize, cols: usize, q: i64) -> Self {
        ModMatrix { rows, cols, q, data: vec![0; rows * cols] }
    }

    pub fn identity(n: usize, q: i64) -> Self {
        let mut m = Self::zero(n, n, q);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, q: i64, f: impl Fn(usize, usize) -> i64) -> Self {
        let mut m = Self::zero(rows, cols, q);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: i64) {
        self.data[i * self.cols + j] = v.rem_euclid(self.q);
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `self * v mod q`.
    pub fn mat_vec(&self, v: &[i64]) -> Result<Vec<i64>, MatrixError> {
        if v.len() != self.cols {
            return Err(MatrixError::Dimension(format!(
                "mat_vec: {} columns vs vector of length {}",
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                let mut acc: i64 = 0;
                for j in 0..self.cols {
                    acc = (acc + self.get(i, j) * v[j].rem_euclid(self.q)) % self.q;
                }
                acc
            })
            .collect())
    }

    /// `self * other mod q`.
    pub fn mat_mul(&self, other: &ModMatrix) -> Result<ModMatrix, MatrixError> {
        if self.cols != other.rows {
            return Err(MatrixError::Dimension(format!(
                "mat_mul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = ModMatrix::zero(self.rows, other.cols, self.q);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    let v = (out.get(i, j) + a * other.get(k, j)) % self.q;
                    out.data[i * out.cols + j] = v;
                }
            }
        }
        Ok(out)
    }

    /// Columns selected by `idx`, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> ModMatrix {
        ModMatrix::from_fn(self.rows, idx.len(), self.q, |i, j| self.get(i, idx[j]))
    }

    /// In-place reduced row echelon form over `Z_q` (q prime). Returns the
    /// pivot column of each nonzero row, in order; the rank is their count.
    pub fn rref(&mut self) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut row = 0usize;
        for col in 0..self.cols {
            if row == self.rows {
                break;
            }
            let Some(p) = (row..self.rows).find(|&r| self.get(r, col) != 0) else {
                continue;
            };
            if p != row {
                for k in 0..self.cols {
                    self.data.swap(p * self.cols + k, row * self.cols + k);
                }
            }
            let inv = mod_inv(self.get(row, col), self.q)
                .expect("pivot invertible: q must be prime for rref");
            for j in col..self.cols {
                let v = self.get(row, j) * inv % self.q;
                self.data[row * self.cols + j] = v;
            }
            for r in 0..self.rows {
                if r == row {
                    continue;
                }
                let factor = self.get(r, col);
                if factor == 0 {
                    continue;
                }
                for j in col..self.cols {
                    let v = (self.get(r, j) - factor * self.get(row, j)).rem_euclid(self.q);
                    self.data[r * self.cols + j] = v;
                }
            }
            pivots.push(col);
            row += 1;
        }
        pivots
    }

    /// Inverse mod q (q prime), or [`MatrixError::Singular`].
    pub fn invert(&self) -> Result<ModMatrix, MatrixError> {
        if self.rows != self.cols {
            return Err(MatrixError::Dimension(format!(
                "invert: {}x{} is not square",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let mut aug = ModMatrix::zero(n, 2 * n, self.q);
        for i in 0..n {
            for j in 0..n {
                aug.set(i, j, self.get(i, j));
            }
            aug.set(i, n + i, 1);
        }
        let pivots = aug.rref();
        if pivots.len() != n || pivots.iter().enumerate().any(|(i, &p)| p != i) {
            return Err(MatrixError::Singular(self.q));
        }
        Ok(ModMatrix::from_fn(n, n, self.q, |i, j| aug.get(i, n + j)))
    }
}

/// The 128x128 transform kernel `m` and its inverse `n_inv` mod q.
#[derive(Debug, Clone)]
pub struct NttMatrices {
    /// Forward: NTT half-group = `m` x time-domain half-group.
    pub m: ModMatrix,
    /// Inverse: time-domain half-group = `n_inv` x NTT half-group.
    pub n_inv: ModMatrix,
}

/// Build the transform kernel and its inverse for the given parameters.
pub fn build_ntt_matrices(params: &KyberParams) -> NttMatrices {
    let q = params.q as i64;
    let half = params.n / 2;
    let zeta = params.zeta as i64;
    let m = ModMatrix::from_fn(half, half, q, |i, j| {
        pow_mod(zeta, ((2 * bitrev7(i) + 1) * j) as u64, q)
    });
    let n_inv = m.invert().expect("transform kernel is invertible mod prime q");
    NttMatrices { m, n_inv }
}

fn pow_mod(base: i64, mut exp: u64, m: i64) -> i64 {
    let mut acc = 1i64;
    let mut b = base.rem_euclid(m);
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        exp >>= 1;
    }
    acc
}
