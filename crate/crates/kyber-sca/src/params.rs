//! Parameter sets for the three standard security levels.
//!
//! All levels share the ring: `q = 3329`, `n = 256`, with 17 as the primitive
//! 256th root of unity used by the half-size NTT. Levels differ in the module
//! rank `k` and in the width `eta` of the centered binomial distribution the
//! secret is drawn from.

use serde::{Deserialize, Serialize};

/// Ring modulus. Prime, `q ≡ 1 (mod 256)`.
pub const Q: i32 = 3329;

/// Ring degree.
pub const N: usize = 256;

/// Primitive 256th root of unity mod `q`.
pub const ZETA: i32 = 17;

/// Number of point-wise multiplication slots per polynomial (`n / 2`).
pub const SLOTS: usize = N / 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KyberParams {
    /// Ring modulus (always 3329).
    pub q: i32,
    /// Ring degree (always 256).
    pub n: usize,
    /// Module rank: 2, 3 or 4.
    pub k: usize,
    /// CBD width of the secret: 3 for the 512 level, 2 otherwise.
    pub eta: usize,
    /// Primitive 256th root of unity (always 17).
    pub zeta: i32,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParamError {
    #[error("unknown security level {0} (expected 512, 768 or 1024)")]
    UnknownLevel(u32),
}

impl KyberParams {
    /// Parameters for a security level given as 512, 768 or 1024.
    pub fn new(level: u32) -> Result<Self, ParamError> {
        let (k, eta) = match level {
            512 => (2, 3),
            768 => (3, 2),
            1024 => (4, 2),
            other => return Err(ParamError::UnknownLevel(other)),
        };
        Ok(KyberParams { q: Q, n: N, k, eta, zeta: ZETA })
    }

    /// Security level tag (512, 768 or 1024) recovered from the rank.
    pub fn level(&self) -> u32 {
        match self.k {
            2 => 512,
            3 => 768,
            _ => 1024,
        }
    }

    /// Number of 128-coefficient key groups: one even and one odd half per
    /// polynomial of the secret vector.
    pub fn groups(&self) -> usize {
        2 * self.k
    }

    /// Minimum number of trusted NTT coefficients per group for the
    /// embedding step: 39 when `eta == 3`, 38 when `eta == 2`.
    pub fn sr_min(&self) -> usize {
        if self.eta == 3 {
            39
        } else {
            38
        }
    }
}
