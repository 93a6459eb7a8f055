//! Correlation key extraction, one NTT-domain coefficient per slot call.
//!
//! For every guess `g` in `[0, q)` the engine predicts the device's 16-bit
//! Montgomery product from the known ciphertext coefficient, maps it through
//! the leakage model, and correlates the prediction column with each sample
//! offset of the call window. Under the negated-weight model the correct
//! guess peaks positive while its additive complement `q - g` peaks negative,
//! so filtering on the *signed* peak discards the complement for free. When
//! several guesses survive, a rank correlation against the peak sample breaks
//! the near-ties.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;

use crate::leakage::{HalfGroup, LeakModel, TraceSet};
use crate::ntt::fqmul;
use crate::params::{Q, SLOTS};
use crate::stats::{kendall_tau_b, pearson, StatsError};

/// How the per-window correlation peak is selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    /// Largest signed value; pairs with the negated-weight model.
    SignedPeak,
    /// Largest magnitude (sign kept); pairs with the plain-weight model.
    AbsPeak,
}

/// Threshold relaxation: when no guess passes, retry `step` lower until the
/// floor. Fixed policy, not configuration.
pub const THRESHOLD_STEP: f64 = 0.05;
pub const THRESHOLD_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpaConfig {
    /// Model assumed by the attacker (need not match the simulator's).
    pub model: LeakModel,
    /// Initial correlation filter threshold.
    pub pcc_threshold: f64,
    /// Cap on survivors kept per call after filtering.
    pub max_candidates: usize,
    /// Refine near-ties with rank correlation.
    pub use_kendall: bool,
    pub selection_rule: SelectionRule,
}

impl CpaConfig {
    /// The natural pairing: signed peaks for the negated-weight model,
    /// magnitude peaks for the plain one.
    pub fn default_for(model: LeakModel) -> Self {
        let selection_rule = match model {
            LeakModel::Mhw => SelectionRule::SignedPeak,
            LeakModel::Hw => SelectionRule::AbsPeak,
        };
        CpaConfig {
            model,
            pcc_threshold: 0.9,
            max_candidates: 16,
            use_kendall: true,
            selection_rule,
        }
    }
}

impl Default for CpaConfig {
    fn default() -> Self {
        CpaConfig::default_for(LeakModel::Mhw)
    }
}

/// One surviving guess for one call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub guess: u16,
    /// Peak correlation over the call window (signed).
    pub pcc_peak: f64,
    /// Sample offset of the peak inside the window.
    pub peak_sample: usize,
    /// Rank correlation at the peak sample; present only when refinement ran.
    pub kendall_tau: Option<f64>,
    /// Ranking score: `pcc_peak + kendall_tau` (tau taken as 0 if absent).
    pub confidence: f64,
}

/// All surviving guesses of one call, strongest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub call_index: usize,
    /// Sorted by confidence descending, ties broken by smaller guess.
    pub candidates: Vec<Candidate>,
    /// Index into `candidates` of the selected guess, if any survived.
    pub chosen: Option<usize>,
    /// The filter threshold actually used (after any relaxation).
    pub threshold_used: f64,
}

impl CandidateSet {
    pub fn chosen_candidate(&self) -> Option<&Candidate> {
        self.chosen.map(|i| &self.candidates[i])
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CpaError {
    #[error("call index {call} out of range (128 slots)")]
    CallOutOfRange { call: usize },
    #[error("need at least 2 traces, got {0}")]
    TooFewTraces(usize),
    #[error("requested {n_calls} calls but only {SLOTS} slots exist")]
    TooManyCalls { n_calls: usize },
}

/// Leakage predictions for every guess: `value(t, g) = model(fqmul(g, u_t))`.
pub struct HypothesisMatrix {
    pub d: usize,
    /// Row-major `d x q` model values.
    data: Vec<u8>,
}

impl HypothesisMatrix {
    #[inline]
    pub fn value(&self, trace: usize, guess: u16) -> f64 {
        self.data[trace * Q as usize + guess as usize] as f64
    }

    /// Prediction column of one guess across traces.
    pub fn column(&self, guess: u16) -> Vec<f64> {
        (0..self.d).map(|t| self.value(t, guess)).collect()
    }
}

/// Build the prediction matrix for one call from the ciphertext coefficients
/// the targeted product multiplies (one per trace).
pub fn build_hypotheses(u_values: &[u16], model: LeakModel) -> HypothesisMatrix {
    let q = Q as usize;
    let mut data = vec![0u8; u_values.len() * q];
    for (t, &u) in u_values.iter().enumerate() {
        let row = &mut data[t * q..(t + 1) * q];
        for (g, slot) in row.iter_mut().enumerate() {
            *slot = model.apply(fqmul(g as i16, u as i16)) as u8;
        }
    }
    HypothesisMatrix { d: u_values.len(), data }
}

/// Per-sample correlation profile of a single guess over one call window.
/// `None` marks offsets where the correlation is degenerate.
pub fn guess_profile(
    ts: &TraceSet,
    call: usize,
    group: HalfGroup,
    model: LeakModel,
    guess: u16,
) -> Vec<Option<f64>> {
    let u_values = ts.u_column(group.u_index(call));
    let hyp = build_hypotheses(&u_values, model);
    let h = hyp.column(guess);
    window_columns(ts, call)
        .iter()
        .map(|y| pearson(&h, y).ok())
        .collect()
}

fn window_columns(ts: &TraceSet, call: usize) -> Vec<Vec<f64>> {
    (0..ts.samples_per_call)
        .map(|s| (0..ts.d).map(|t| ts.call_window(t, call)[s] as f64).collect())
        .collect()
}

/// Attack one slot call: filter guesses by correlation peak, refine
/// near-ties by rank correlation, and pick the highest-confidence guess.
pub fn run_cpa_call(
    ts: &TraceSet,
    call: usize,
    group: HalfGroup,
    cfg: &CpaConfig,
) -> Result<CandidateSet, CpaError> {
    if call >= SLOTS {
        return Err(CpaError::CallOutOfRange { call });
    }
    if ts.d < 2 {
        return Err(CpaError::TooFewTraces(ts.d));
    }
    let u_values = ts.u_column(group.u_index(call));
    let hyp = build_hypotheses(&u_values, cfg.model);
    let columns = window_columns(ts, call);

    // Peak per guess; guesses degenerate at every offset drop out here
    // (guess 0 always does: its prediction column is constant).
    let mut peaks: Vec<(u16, f64, usize)> = Vec::new();
    for g in 0..Q as u16 {
        let h = hyp.column(g);
        let mut best: Option<(f64, usize)> = None;
        for (s, y) in columns.iter().enumerate() {
            let Ok(r) = pearson(&h, y) else { continue };
            let better = match (cfg.selection_rule, best) {
                (_, None) => true,
                (SelectionRule::SignedPeak, Some((b, _))) => r > b,
                (SelectionRule::AbsPeak, Some((b, _))) => r.abs() > b.abs(),
            };
            if better {
                best = Some((r, s));
            }
        }
        if let Some((r, s)) = best {
            peaks.push((g, r, s));
        }
    }

    // Filter at the configured threshold, relaxing in fixed steps down to
    // the floor while nothing survives.
    let mut threshold = cfg.pcc_threshold;
    let survivors = loop {
        let passing: Vec<&(u16, f64, usize)> = peaks
            .iter()
            .filter(|(_, r, _)| match cfg.selection_rule {
                SelectionRule::SignedPeak => *r >= threshold,
                SelectionRule::AbsPeak => r.abs() >= threshold,
            })
            .collect();
        if !passing.is_empty() || threshold <= THRESHOLD_FLOOR {
            break passing;
        }
        threshold = (threshold - THRESHOLD_STEP).max(THRESHOLD_FLOOR);
    };

    // Keep the strongest few.
    let mut survivors: Vec<(u16, f64, usize)> = survivors.into_iter().copied().collect();
    survivors.sort_by(|a, b| {
        let ka = match cfg.selection_rule {
            SelectionRule::SignedPeak => a.1,
            SelectionRule::AbsPeak => a.1.abs(),
        };
        let kb = match cfg.selection_rule {
            SelectionRule::SignedPeak => b.1,
            SelectionRule::AbsPeak => b.1.abs(),
        };
        kb.partial_cmp(&ka).unwrap().then(a.0.cmp(&b.0))
    });
    survivors.truncate(cfg.max_candidates);

    // Rank-correlation refinement on near-ties.
    let refine = cfg.use_kendall && survivors.len() > 1;
    let mut candidates: Vec<Candidate> = survivors
        .into_iter()
        .map(|(guess, pcc_peak, peak_sample)| {
            let kendall_tau = if refine {
                let h = hyp.column(guess);
                match kendall_tau_b(&h, &columns[peak_sample]) {
                    Ok(t) => Some(t),
                    Err(StatsError::Degenerate) => Some(0.0),
                    Err(_) => None,
                }
            } else {
                None
            };
            let confidence = pcc_peak + kendall_tau.unwrap_or(0.0);
            Candidate { guess, pcc_peak, peak_sample, kendall_tau, confidence }
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.confidence.partial_cmp(&a.confidence).unwrap().then(a.guess.cmp(&b.guess))
    });

    let chosen = if candidates.is_empty() { None } else { Some(0) };
    Ok(CandidateSet { call_index: call, candidates, chosen, threshold_used: threshold })
}

/// Attack the first `n_calls` slots of a trace set. Calls run in parallel;
/// the result order is by call index regardless of scheduling.
pub fn run_cpa_group(
    ts: &TraceSet,
    group: HalfGroup,
    n_calls: usize,
    cfg: &CpaConfig,
) -> Result<Vec<CandidateSet>, CpaError> {
    if n_calls > SLOTS {
        return Err(CpaError::TooManyCalls { n_calls });
    }
    (0..n_calls)
        .into_par_iter()
        .map(|call| run_cpa_call(ts, call, group, cfg))
        .collect()
}

/// Write the per-call report. `truth` (the targeted half-group, canonical)
/// adds a correctness column when available.
pub fn write_cpa_report(
    path: &Path,
    sets: &[CandidateSet],
    truth: Option<&[u16]>,
) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "call_index,chosen,pcc_peak,kendall_tau,confidence,n_survivors,correct_flag")?;
    for set in sets {
        let n = set.candidates.len();
        match set.chosen_candidate() {
            Some(c) => {
                let tau = c.kendall_tau.map(|t| format!("{t:.6}")).unwrap_or_default();
                let correct = truth
                    .map(|tv| if tv[set.call_index] == c.guess { "1" } else { "0" })
                    .unwrap_or("");
                writeln!(
                    f,
                    "{},{},{:.6},{},{:.6},{},{}",
                    set.call_index, c.guess, c.pcc_peak, tau, c.confidence, n, correct
                )?;
            }
            None => {
                let correct = if truth.is_some() { "0" } else { "" };
                writeln!(f, "{},,,,,0,{}", set.call_index, correct)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leakage::{simulate_traces, LeakageConfig};
    use crate::params::KyberParams;
    use crate::poly::sample_secret;

    fn noiseless(d: usize, model: LeakModel) -> (TraceSet, Vec<u16>, Vec<u16>) {
        let params = KyberParams::new(512).unwrap();
        let skey = sample_secret(21, &params).ntt();
        let cfg = LeakageConfig { sigma: 0.0, model, rng_seed: 5, ..LeakageConfig::default() };
        let ts = simulate_traces(&skey, d, &cfg, &params, HalfGroup::Even).unwrap();
        (ts, skey.even_group(), skey.odd_group())
    }

    #[test]
    fn noiseless_recovery_with_enough_traces() {
        // With 10 noise-free traces the exact-match guess is uniquely the
        // one whose prediction is affine in the observations on every trace.
        let (ts, even, _) = noiseless(10, LeakModel::Mhw);
        let cfg = CpaConfig::default();
        for call in 0..20 {
            let set = run_cpa_call(&ts, call, HalfGroup::Even, &cfg).unwrap();
            let c = set.chosen_candidate().expect("has survivors");
            assert_eq!(c.guess, even[call], "call {call}");
            assert!(c.pcc_peak >= 1.0 - 1e-12, "pcc {}", c.pcc_peak);
            assert_eq!(c.peak_sample, 3);
        }
    }

    #[test]
    fn complement_peaks_negative_under_mhw() {
        let (ts, even, _) = noiseless(10, LeakModel::Mhw);
        let call = 2;
        let s = even[call];
        let comp = (Q as u16 - s) % Q as u16;
        let leak = 3;
        let p_true = guess_profile(&ts, call, HalfGroup::Even, LeakModel::Mhw, s)[leak].unwrap();
        let p_comp = guess_profile(&ts, call, HalfGroup::Even, LeakModel::Mhw, comp)[leak].unwrap();
        assert!(p_true > 0.9, "true guess pcc {p_true}");
        assert!(p_comp < 0.0, "complement pcc {p_comp}");
    }

    #[test]
    fn zero_guess_never_survives() {
        let (ts, _, _) = noiseless(10, LeakModel::Mhw);
        let set = run_cpa_call(&ts, 0, HalfGroup::Even, &CpaConfig::default()).unwrap();
        assert!(set.candidates.iter().all(|c| c.guess != 0));
    }

    #[test]
    fn threshold_relaxation_reaches_floor_on_pure_noise() {
        // Signal-free traces with enough of them that every spurious
        // correlation sits far below the floor: the filter relaxes all the
        // way down, finds nothing, and reports an empty set at the floor.
        let params = KyberParams::new(512).unwrap();
        let skey = sample_secret(4, &params).ntt();
        let cfg =
            LeakageConfig { sigma: 50.0, alpha: 0.0, rng_seed: 9, ..LeakageConfig::default() };
        let ts = simulate_traces(&skey, 200, &cfg, &params, HalfGroup::Even).unwrap();
        let set = run_cpa_call(&ts, 0, HalfGroup::Even, &CpaConfig::default()).unwrap();
        assert!(set.threshold_used <= THRESHOLD_FLOOR + 1e-9, "used {}", set.threshold_used);
        assert!(set.candidates.is_empty());
        assert_eq!(set.chosen, None);
    }

    #[test]
    fn odd_group_recovers_odd_coefficients() {
        let params = KyberParams::new(512).unwrap();
        let skey = sample_secret(22, &params).ntt();
        let cfg = LeakageConfig { sigma: 0.0, rng_seed: 6, ..LeakageConfig::default() };
        let ts = simulate_traces(&skey, 10, &cfg, &params, HalfGroup::Odd).unwrap();
        let odd = skey.odd_group();
        for call in [0usize, 7, 63] {
            let set = run_cpa_call(&ts, call, HalfGroup::Odd, &CpaConfig::default()).unwrap();
            assert_eq!(set.chosen_candidate().unwrap().guess, odd[call]);
        }
    }

    #[test]
    fn group_run_is_ordered_and_deterministic() {
        let (ts, _, _) = noiseless(10, LeakModel::Mhw);
        let cfg = CpaConfig::default();
        let a = run_cpa_group(&ts, HalfGroup::Even, 16, &cfg).unwrap();
        let b = run_cpa_group(&ts, HalfGroup::Even, 16, &cfg).unwrap();
        assert_eq!(a, b);
        for (i, set) in a.iter().enumerate() {
            assert_eq!(set.call_index, i);
        }
    }

    #[test]
    fn validation_errors() {
        let (ts, _, _) = noiseless(10, LeakModel::Mhw);
        assert_eq!(
            run_cpa_call(&ts, 128, HalfGroup::Even, &CpaConfig::default()),
            Err(CpaError::CallOutOfRange { call: 128 })
        );
        let (one_trace, _, _) = noiseless(1, LeakModel::Mhw);
        assert_eq!(
            run_cpa_call(&one_trace, 0, HalfGroup::Even, &CpaConfig::default()),
            Err(CpaError::TooFewTraces(1))
        );
        assert_eq!(
            run_cpa_group(&ts, HalfGroup::Even, 129, &CpaConfig::default()),
            Err(CpaError::TooManyCalls { n_calls: 129 })
        );
    }

    #[test]
    fn report_writes_expected_columns() {
        let (ts, even, _) = noiseless(10, LeakModel::Mhw);
        let sets = run_cpa_group(&ts, HalfGroup::Even, 4, &CpaConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cpa.csv");
        write_cpa_report(&path, &sets, Some(&even)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "call_index,chosen,pcc_peak,kendall_tau,confidence,n_survivors,correct_flag"
        );
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[0], "0");
        assert_eq!(first[1], even[0].to_string());
        assert_eq!(first[6], "1");
    }
}
