//! Polynomials over `Z_q[X]/(X^256 + 1)` and secret sampling.

use serde::{Deserialize, Serialize};

use crate::ntt::{intt_in_place, ntt_in_place, to_canonical, Q16};
use crate::params::{KyberParams, N};
use crate::rng;

/// Coefficient representation carried by a [`Poly`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Repr {
    /// All coefficients in `[0, q)`.
    Canonical,
    /// All coefficients in `(-q, q)` (signed residues).
    Centered,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PolyError {
    #[error("expected {expected} coefficients, got {got}")]
    Length { expected: usize, got: usize },
    #[error("coefficient {value} at index {index} outside the {repr:?} range")]
    Range { index: usize, value: i16, repr: Repr },
}

/// A degree-255 polynomial with an explicit coefficient representation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Poly {
    coeffs: Vec<i16>,
    repr: Repr,
}

impl Poly {
    /// Wrap `coeffs`, validating length and the declared representation.
    pub fn new(coeffs: Vec<i16>, repr: Repr) -> Result<Self, PolyError> {
        if coeffs.len() != N {
            return Err(PolyError::Length { expected: N, got: coeffs.len() });
        }
        for (index, &value) in coeffs.iter().enumerate() {
            let ok = match repr {
                Repr::Canonical => (0..Q16).contains(&value),
                Repr::Centered => value > -Q16 && value < Q16,
            };
            if !ok {
                return Err(PolyError::Range { index, value, repr });
            }
        }
        Ok(Poly { coeffs, repr })
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![0; N], repr: Repr::Canonical }
    }

    pub fn coeffs(&self) -> &[i16] {
        &self.coeffs
    }

    pub fn repr(&self) -> Repr {
        self.repr
    }

    /// Same polynomial with canonical `[0, q)` coefficients.
    pub fn to_canonical(&self) -> Poly {
        Poly {
            coeffs: self.coeffs.iter().map(|&c| to_canonical(c)).collect(),
            repr: Repr::Canonical,
        }
    }

    /// Forward NTT; the result is canonical.
    pub fn ntt(&self) -> Poly {
        let mut buf = [0i16; N];
        buf.copy_from_slice(&self.coeffs);
        ntt_in_place(&mut buf);
        Poly { coeffs: buf.iter().map(|&c| to_canonical(c)).collect(), repr: Repr::Canonical }
    }

    /// Inverse NTT (exact inverse of [`Poly::ntt`]); the result is canonical.
    pub fn intt(&self) -> Poly {
        let mut buf = [0i16; N];
        buf.copy_from_slice(&self.coeffs);
        intt_in_place(&mut buf);
        Poly { coeffs: buf.iter().map(|&c| to_canonical(c)).collect(), repr: Repr::Canonical }
    }

    /// The 128 even-index coefficients (canonical), i.e. one key half-group.
    pub fn even_group(&self) -> Vec<u16> {
        self.coeffs.iter().step_by(2).map(|&c| to_canonical(c) as u16).collect()
    }

    /// The 128 odd-index coefficients (canonical).
    pub fn odd_group(&self) -> Vec<u16> {
        self.coeffs.iter().skip(1).step_by(2).map(|&c| to_canonical(c) as u16).collect()
    }
}

/// Sample a secret polynomial from the centered binomial distribution of
/// width `params.eta`. Deterministic in `seed`; coefficients are centered
/// (all in `[-eta, eta]`).
pub fn sample_secret(seed: u64, params: &KyberParams) -> Poly {
    let mut stream = rng::stream(seed);
    let eta = params.eta as u32;
    let mask = (1u32 << eta) - 1;
    let coeffs = (0..N)
        .map(|_| {
            let bits = rand::RngCore::next_u32(&mut stream);
            let a = (bits & mask).count_ones() as i16;
            let b = ((bits >> eta) & mask).count_ones() as i16;
            a - b
        })
        .collect();
    Poly { coeffs, repr: Repr::Centered }
}
