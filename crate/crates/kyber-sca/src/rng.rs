//! Deterministic random streams.
//!
//! Everything random in this crate flows from explicit 64-bit seeds through
//! xoshiro256++ (seeded via splitmix64, the `seed_from_u64` expansion).
//! Work units that may run in parallel (one power trace, one experiment seed)
//! get their own substream derived from `(seed, index)`, so parallel and
//! serial execution produce bit-identical results.

use rand::RngCore;
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Stream = Xoshiro256PlusPlus;

/// One step of splitmix64 on `state`, returning the mixed output.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of substream `index` under master seed `seed`.
///
/// Two splitmix64 passes keep nearby `(seed, index)` pairs uncorrelated.
pub fn substream_seed(seed: u64, index: u64) -> u64 {
    let mut s = seed;
    let mixed = splitmix64(&mut s);
    let mut t = mixed ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    splitmix64(&mut t)
}

/// Master stream for `seed`.
pub fn stream(seed: u64) -> Stream {
    Stream::seed_from_u64(seed)
}

/// Substream `index` of master seed `seed`.
pub fn substream(seed: u64, index: u64) -> Stream {
    Stream::seed_from_u64(substream_seed(seed, index))
}

/// Uniform residue in `[0, q)` by rejection from the smallest covering
/// power-of-two range. Exact (no modulo bias).
pub fn uniform_residue(rng: &mut impl RngCore, q: u16) -> u16 {
    debug_assert!(q > 1);
    let mask = (q as u32).next_power_of_two() - 1;
    loop {
        let x = rng.next_u32() & mask;
        if x < q as u32 {
            return x as u16;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic() {
        let a: Vec<u64> = (0..8).map(|_| 0).scan(stream(42), |r, _| Some(r.next_u64())).collect();
        let b: Vec<u64> = (0..8).map(|_| 0).scan(stream(42), |r, _| Some(r.next_u64())).collect();
        assert_eq!(a, b);
        let c: Vec<u64> = (0..8).map(|_| 0).scan(stream(43), |r, _| Some(r.next_u64())).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn substreams_differ_from_master_and_each_other() {
        let mut seen = std::collections::HashSet::new();
        for idx in 0..1000 {
            assert!(seen.insert(substream_seed(7, idx)), "collision at index {idx}");
        }
        assert!(!seen.contains(&substream_seed(8, 0)));
    }

    #[test]
    fn residues_are_uniform_enough() {
        // Chi-square over all residue classes, q = 3329, 10^6 draws.
        // Upper 0.001 critical value via the Wilson-Hilferty approximation.
        let q = 3329u16;
        let draws = 1_000_000usize;
        let mut counts = vec![0u32; q as usize];
        let mut rng = stream(0xC0FFEE);
        for _ in 0..draws {
            counts[uniform_residue(&mut rng, q) as usize] += 1;
        }
        let expect = draws as f64 / q as f64;
        let chi2: f64 = counts.iter().map(|&c| {
            let d = c as f64 - expect;
            d * d / expect
        }).sum();
        let df = (q - 1) as f64;
        let z = 3.0902; // standard normal upper 0.001 quantile
        let crit = df * (1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt()).powi(3);
        assert!(chi2 < crit, "chi2 {chi2:.1} exceeds 0.001 critical value {crit:.1}");
    }

    #[test]
    fn residue_bounds() {
        let mut rng = stream(1);
        for _ in 0..10_000 {
            assert!(uniform_residue(&mut rng, 3329) < 3329);
            assert!(uniform_residue(&mut rng, 17) < 17);
        }
    }
}
