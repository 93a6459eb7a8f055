//! Ring arithmetic: Montgomery multiplication, the seven-layer NTT and its
//! inverse, and the point-wise multiplication of half-degree pairs.
//!
//! The data flow matches the widely deployed embedded reference: the NTT maps
//! a degree-255 polynomial to 128 linear slots, and each slot multiplies
//! `(a0 + a1 X)(b0 + b1 X)` modulo `X^2 - gamma_j`. Every 16-bit intermediate
//! a device would compute is reproducible here bit for bit, which is what the
//! leakage simulator and the correlation engine both key on.

use std::sync::OnceLock;

use crate::params::{Q, SLOTS, ZETA};

/// `q` as i16 for the hot paths.
pub const Q16: i16 = Q as i16;

/// `-q^{-1} mod 2^16`, as the signed value used by Montgomery reduction.
pub const QINV: i16 = -3327;

/// `2^16 mod q`: the Montgomery representation of one.
pub const MONT_R: i16 = 2285;

/// Montgomery reduction: for `|a| <= q * 2^15`, returns `r` with
/// `r ≡ a * 2^-16 (mod q)` and `|r| < q`.
#[inline]
pub fn montgomery_reduce(a: i32) -> i16 {
    let t = (a as i16).wrapping_mul(QINV);
    ((a - (t as i32) * Q) >> 16) as i16
}

/// Centered Barrett reduction: returns `r ≡ a (mod q)` with `|r| <= (q-1)/2`.
#[inline]
pub fn barrett_reduce(a: i16) -> i16 {
    const V: i32 = ((1 << 26) + Q / 2) / Q;
    let t = ((V * (a as i32) + (1 << 25)) >> 26) as i16;
    // t*q may exceed i16::MAX by a hair; the final difference always fits,
    // so wrapping arithmetic is exact here (same trick as the C reference).
    a.wrapping_sub(t.wrapping_mul(Q16))
}

/// Montgomery-domain product: `fqmul(a, b) ≡ a * b * 2^-16 (mod q)`,
/// result in `(-q, q)`. This is the exact 16-bit intermediate the target
/// device produces, so both the simulator and the hypothesis builder use it.
#[inline]
pub fn fqmul(a: i16, b: i16) -> i16 {
    montgomery_reduce(a as i32 * b as i32)
}

/// Map any centered/partially reduced representative to canonical `[0, q)`.
#[inline]
pub fn to_canonical(a: i16) -> i16 {
    let r = barrett_reduce(a);
    r + ((r >> 15) & Q16)
}

/// Reverse the low 7 bits of `i`.
pub fn bitrev7(i: usize) -> usize {
    let mut r = 0;
    for b in 0..7 {
        r |= ((i >> b) & 1) << (6 - b);
    }
    r
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

fn centered_mont(x: i64) -> i16 {
    let v = (x << 16).rem_euclid(Q as i64);
    if v > (Q as i64) / 2 {
        (v - Q as i64) as i16
    } else {
        v as i16
    }
}

/// Butterfly twiddles: `zeta^bitrev7(k) * 2^16 mod q`, centered.
pub fn zetas() -> &'static [i16; 128] {
    static TABLE: OnceLock<[i16; 128]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0i16; 128];
        for (k, slot) in t.iter_mut().enumerate() {
            *slot = centered_mont(pow_mod(ZETA as i64, bitrev7(k) as u64, Q as i64));
        }
        t
    })
}

/// Slot moduli in Montgomery form: `gamma_j = zeta^(2*bitrev7(j)+1) * 2^16
/// mod q`, centered. Slot `j` multiplies modulo `X^2 - gamma_j`.
pub fn basemul_zetas() -> &'static [i16; SLOTS] {
    static TABLE: OnceLock<[i16; SLOTS]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0i16; SLOTS];
        for (j, slot) in t.iter_mut().enumerate() {
            *slot = centered_mont(pow_mod(ZETA as i64, (2 * bitrev7(j) + 1) as u64, Q as i64));
        }
        t
    })
}

/// In-place forward NTT (Cooley-Tukey layers). Input coefficients must be
/// in `(-q, q)`; output coefficients stay below `8q` in absolute value and
/// are *not* canonicalized.
pub fn ntt_in_place(r: &mut [i16; 256]) {
    let zs = zetas();
    let mut k = 1usize;
    let mut len = 128usize;
    while len >= 2 {
        let mut start = 0usize;
        while start < 256 {
            let zeta = zs[k];
            k += 1;
            for j in start..start + len {
                let t = fqmul(zeta, r[j + len]);
                r[j + len] = r[j] - t;
                r[j] += t;
            }
            start += 2 * len;
        }
        len >>= 1;
    }
}

/// In-place inverse NTT (Gentleman-Sande layers), including the exact `1/128`
/// scaling: `intt(ntt(x)) == x` coefficient-wise mod q. Output is *not*
/// canonicalized but every coefficient sits in `(-q, q)`.
pub fn intt_in_place(r: &mut [i16; 256]) {
    // 512 = 2^16 / 128 mod q: one fqmul by it divides by 128 exactly.
    const F_PLAIN: i16 = 512;
    let zs = zetas();
    let mut k = 127usize;
    let mut len = 2usize;
    while len <= 128 {
        let mut start = 0usize;
        while start < 256 {
            let zeta = zs[k];
            k -= 1;
            for j in start..start + len {
                let t = r[j];
                r[j] = barrett_reduce(t + r[j + len]);
                r[j + len] -= t;
                r[j + len] = fqmul(zeta, r[j + len]);
            }
            start += 2 * len;
        }
        len <<= 1;
    }
    for x in r.iter_mut() {
        *x = fqmul(*x, F_PLAIN);
    }
}

/// The five Montgomery products of one slot multiplication, in evaluation
/// order. These are the device's observable intermediates; the simulator
/// leaks `a0_b1` when targeting even-index coefficients and `a1_b0` when
/// targeting odd-index ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasemulTaps {
    /// `fqmul(a1, b1)`
    pub a1_b1: i16,
    /// `fqmul(fqmul(a1, b1), gamma_j)`
    pub a1_b1_gamma: i16,
    /// `fqmul(a0, b0)`
    pub a0_b0: i16,
    /// `fqmul(a0, b1)` - carries the even-index secret coefficient
    pub a0_b1: i16,
    /// `fqmul(a1, b0)` - carries the odd-index secret coefficient
    pub a1_b0: i16,
}

/// One slot of the point-wise multiplication:
/// `(r0, r1) = (a0 + a1 X)(b0 + b1 X) mod (X^2 - gamma)`, with `gamma` given
/// in Montgomery form (an entry of [`basemul_zetas`]). Outputs are reduced to
/// centered representatives; the raw intermediates come along for inspection.
pub fn basemul_pair(a: (i16, i16), b: (i16, i16), gamma_mont: i16) -> ((i16, i16), BasemulTaps) {
    let a1_b1 = fqmul(a.1, b.1);
    let a1_b1_gamma = fqmul(a1_b1, gamma_mont);
    let a0_b0 = fqmul(a.0, b.0);
    let a0_b1 = fqmul(a.0, b.1);
    let a1_b0 = fqmul(a.1, b.0);
    let r0 = barrett_reduce(a1_b1_gamma + a0_b0);
    let r1 = barrett_reduce(a0_b1 + a1_b0);
    ((r0, r1), BasemulTaps { a1_b1, a1_b1_gamma, a0_b0, a0_b1, a1_b0 })
}
