//! Power-trace simulation for the point-wise multiplication of decryption.
//!
//! Each simulated decryption performs 128 slot multiplications between the
//! NTT-domain secret and a uniformly random NTT-domain ciphertext. Every
//! slot contributes one window of `samples_per_call` samples to the trace.
//! A single sample inside the window carries the leakage of one targeted
//! Montgomery product; every other sample is baseline plus noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ntt::{basemul_pair, basemul_zetas};
use crate::params::{KyberParams, SLOTS};
use crate::poly::Poly;
use crate::rng;

/// Hamming weight of the 16-bit two's complement encoding.
#[inline]
pub fn hw16(x: i16) -> u32 {
    (x as u16).count_ones()
}

/// Hamming weight of the 16-bit encoding of `-x` (the modified model).
///
/// Identity: `mhw16(x) == hw16` of `(65536 - (x mod 65536)) mod 65536`.
/// Under this model a correct guess correlates positively with the trace
/// while its additive complement mod q correlates negatively, which is what
/// lets the filter reject complement false positives by sign alone.
#[inline]
pub fn mhw16(x: i16) -> u32 {
    (x as u16).wrapping_neg().count_ones()
}

/// Leakage model applied to a 16-bit intermediate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeakModel {
    /// Plain Hamming weight.
    Hw,
    /// Hamming weight of the negation (sign-resolving variant).
    Mhw,
}

impl LeakModel {
    #[inline]
    pub fn apply(self, v: i16) -> u32 {
        match self {
            LeakModel::Hw => hw16(v),
            LeakModel::Mhw => mhw16(v),
        }
    }
}

/// Which half of the interleaved key a run targets. Slot `i` multiplies the
/// secret pair `(s[2i], s[2i+1])`; the even-index coefficient surfaces in the
/// product `fqmul(s[2i], u[2i+1])` and the odd one in `fqmul(s[2i+1], u[2i])`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HalfGroup {
    Even,
    Odd,
}

impl HalfGroup {
    /// Index of this half's coefficient inside slot `i` of a polynomial.
    #[inline]
    pub fn coeff_index(self, slot: usize) -> usize {
        match self {
            HalfGroup::Even => 2 * slot,
            HalfGroup::Odd => 2 * slot + 1,
        }
    }

    /// Index of the ciphertext coefficient the targeted product multiplies.
    #[inline]
    pub fn u_index(self, slot: usize) -> usize {
        match self {
            HalfGroup::Even => 2 * slot + 1,
            HalfGroup::Odd => 2 * slot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageConfig {
    pub model: LeakModel,
    /// Scale of the leaking sample.
    pub alpha: f64,
    /// Baseline level of every sample.
    pub beta: f64,
    /// Gaussian noise standard deviation.
    pub sigma: f64,
    /// Samples per slot-multiplication window.
    pub samples_per_call: usize,
    /// Offset of the leaking sample inside each window.
    pub leak_sample_index: usize,
    /// Master seed; trace `t` uses substream `t`.
    pub rng_seed: u64,
}

impl Default for LeakageConfig {
    fn default() -> Self {
        LeakageConfig {
            model: LeakModel::Mhw,
            alpha: 1.0,
            beta: 0.0,
            sigma: 1.0,
            samples_per_call: 8,
            leak_sample_index: 3,
            rng_seed: 1,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LeakageError {
    #[error("leak_sample_index {leak} outside window of {window} samples")]
    LeakIndexOutOfRange { leak: usize, window: usize },
    #[error("need at least one trace")]
    NoTraces,
    #[error("secret polynomial must be in the NTT domain with canonical coefficients")]
    BadSecretForm,
}

/// A batch of simulated traces plus the ciphertexts that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    /// Number of traces.
    pub d: usize,
    /// Samples per slot window.
    pub samples_per_call: usize,
    /// `d` x `t()` samples, row-major.
    pub samples: Vec<f32>,
    /// `d` x 256 canonical NTT-domain ciphertext coefficients, row-major.
    pub ciphertexts: Vec<u16>,
}

impl TraceSet {
    /// Samples per trace.
    pub fn t(&self) -> usize {
        SLOTS * self.samples_per_call
    }

    pub fn trace(&self, i: usize) -> &[f32] {
        let t = self.t();
        &self.samples[i * t..(i + 1) * t]
    }

    pub fn ciphertext(&self, i: usize) -> &[u16] {
        &self.ciphertexts[i * 2 * SLOTS..(i + 1) * 2 * SLOTS]
    }

    /// The window of trace `i` covering slot multiplication `call`.
    pub fn call_window(&self, i: usize, call: usize) -> &[f32] {
        let spc = self.samples_per_call;
        let start = i * self.t() + call * spc;
        &self.samples[start..start + spc]
    }

    /// Column of one ciphertext coefficient across traces.
    pub fn u_column(&self, coeff_index: usize) -> Vec<u16> {
        (0..self.d).map(|i| self.ciphertext(i)[coeff_index]).collect()
    }
}

/// Simulate `d` decryption traces of the slot multiplications of one secret
/// polynomial, leaking the product that carries the requested half-group.
///
/// Per trace: a fresh uniform NTT-domain ciphertext, then one window per
/// slot where the sample at `leak_sample_index` reads
/// `alpha * model(targeted product) + beta + N(0, sigma^2)` and every other
/// sample reads `beta + N(0, sigma^2)`. Trace `t` draws exclusively from
/// substream `t` of `cfg.rng_seed`, so generation order (or parallelism)
/// cannot change the output.
pub fn simulate_traces(
    skey_ntt: &Poly,
    d: usize,
    cfg: &LeakageConfig,
    params: &KyberParams,
    group: HalfGroup,
) -> Result<TraceSet, LeakageError> {
    if d == 0 {
        return Err(LeakageError::NoTraces);
    }
    if cfg.leak_sample_index >= cfg.samples_per_call {
        return Err(LeakageError::LeakIndexOutOfRange {
            leak: cfg.leak_sample_index,
            window: cfg.samples_per_call,
        });
    }
    let skey = skey_ntt.to_canonical();
    let t_len = SLOTS * cfg.samples_per_call;
    let mut samples = vec![0f32; d * t_len];
    let mut ciphertexts = vec![0u16; d * 2 * SLOTS];
    let gammas = basemul_zetas();

    for trace_idx in 0..d {
        let mut stream = rng::substream(cfg.rng_seed, trace_idx as u64);
        let ct = &mut ciphertexts[trace_idx * 2 * SLOTS..(trace_idx + 1) * 2 * SLOTS];
        for c in ct.iter_mut() {
            *c = rng::uniform_residue(&mut stream, params.q as u16);
        }
        let row = &mut samples[trace_idx * t_len..(trace_idx + 1) * t_len];
        for slot in 0..SLOTS {
            let a = (skey.coeffs()[2 * slot], skey.coeffs()[2 * slot + 1]);
            let b = (ct[2 * slot] as i16, ct[2 * slot + 1] as i16);
            let (_, taps) = basemul_pair(a, b, gammas[slot]);
            let target = match group {
                HalfGroup::Even => taps.a0_b1,
                HalfGroup::Odd => taps.a1_b0,
            };
            let leak = cfg.alpha * cfg.model.apply(target) as f64;
            for s in 0..cfg.samples_per_call {
                let noise: f64 = stream.sample(StandardNormal);
                let mut v = cfg.beta + cfg.sigma * noise;
                if s == cfg.leak_sample_index {
                    v += leak;
                }
                row[slot * cfg.samples_per_call + s] = v as f32;
            }
        }
    }

    Ok(TraceSet { d, samples_per_call: cfg.samples_per_call, samples, ciphertexts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ntt::fqmul;
    use crate::poly::sample_secret;

    fn setup() -> (Poly, KyberParams, LeakageConfig) {
        let params = KyberParams::new(512).unwrap();
        let skey = sample_secret(3, &params).ntt();
        let cfg = LeakageConfig { sigma: 0.0, rng_seed: 17, ..LeakageConfig::default() };
        (skey, params, cfg)
    }

    #[test]
    fn model_point_values() {
        assert_eq!(hw16(0), 0);
        assert_eq!(hw16(-1), 16);
        assert_eq!(hw16(5), 2);
        assert_eq!(mhw16(0), 0);
        assert_eq!(mhw16(1), 16);
        assert_eq!(mhw16(-5), 2);
    }

    #[test]
    fn mhw_is_hw_of_negation() {
        for x in i16::MIN..=i16::MAX {
            let lifted = (65536i64 - (x as i64).rem_euclid(65536)).rem_euclid(65536) as u16;
            assert_eq!(mhw16(x), lifted.count_ones(), "x = {x}");
        }
    }

    #[test]
    fn noiseless_leak_sample_is_exact_model_value() {
        let (skey, params, cfg) = setup();
        let ts = simulate_traces(&skey, 3, &cfg, &params, HalfGroup::Even).unwrap();
        assert_eq!(ts.t(), 128 * cfg.samples_per_call);
        for trace in 0..3 {
            let ct = ts.ciphertext(trace);
            for slot in 0..SLOTS {
                let window = ts.call_window(trace, slot);
                let v = fqmul(skey.coeffs()[2 * slot], ct[2 * slot + 1] as i16);
                let want = cfg.alpha * mhw16(v) as f64 + cfg.beta;
                assert_eq!(window[cfg.leak_sample_index], want as f32);
                for (s, &x) in window.iter().enumerate() {
                    if s != cfg.leak_sample_index {
                        assert_eq!(x, cfg.beta as f32);
                    }
                }
            }
        }
    }

    #[test]
    fn odd_group_targets_other_product() {
        let (skey, params, cfg) = setup();
        let ts = simulate_traces(&skey, 2, &cfg, &params, HalfGroup::Odd).unwrap();
        let ct = ts.ciphertext(0);
        let v = fqmul(skey.coeffs()[1], ct[0] as i16);
        assert_eq!(
            ts.call_window(0, 0)[cfg.leak_sample_index],
            (cfg.alpha * mhw16(v) as f64 + cfg.beta) as f32
        );
    }

    #[test]
    fn determinism_and_seed_separation() {
        let (skey, params, cfg) = setup();
        let a = simulate_traces(&skey, 4, &cfg, &params, HalfGroup::Even).unwrap();
        let b = simulate_traces(&skey, 4, &cfg, &params, HalfGroup::Even).unwrap();
        assert_eq!(a, b);
        let other_cfg = LeakageConfig { rng_seed: 18, ..cfg };
        let c = simulate_traces(&skey, 4, &other_cfg, &params, HalfGroup::Even).unwrap();
        assert_ne!(a.ciphertexts, c.ciphertexts);
        // A longer capture extends, not reshuffles, a shorter one.
        let big = simulate_traces(&skey, 8, &cfg, &params, HalfGroup::Even).unwrap();
        assert_eq!(&big.samples[..a.samples.len()], &a.samples[..]);
        assert_eq!(&big.ciphertexts[..a.ciphertexts.len()], &a.ciphertexts[..]);
    }

    #[test]
    fn noise_draws_do_not_depend_on_sigma() {
        // Same seed, different sigma: identical ciphertexts.
        let (skey, params, cfg) = setup();
        let noisy_cfg = LeakageConfig { sigma: 2.5, ..cfg };
        let a = simulate_traces(&skey, 4, &cfg, &params, HalfGroup::Even).unwrap();
        let b = simulate_traces(&skey, 4, &noisy_cfg, &params, HalfGroup::Even).unwrap();
        assert_eq!(a.ciphertexts, b.ciphertexts);
    }

    #[test]
    fn config_validation() {
        let (skey, params, cfg) = setup();
        let bad = LeakageConfig { leak_sample_index: 8, ..cfg };
        assert_eq!(
            simulate_traces(&skey, 2, &bad, &params, HalfGroup::Even),
            Err(LeakageError::LeakIndexOutOfRange { leak: 8, window: 8 })
        );
        assert_eq!(
            simulate_traces(&skey, 0, &cfg, &params, HalfGroup::Even),
            Err(LeakageError::NoTraces)
        );
    }
}
