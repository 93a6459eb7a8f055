//! Seeded end-to-end experiments: full-key recovery across all half groups,
//! success-rate sweeps over the trace count, and noise calibration.
//!
//! One *experiment unit* is the recovery of a single half group — simulate
//! traces of its slot multiplications, run the correlation attack on every
//! call, then complete the group with the trial-and-error lattice recovery
//! and compare against the planted ground truth. [`run_end_to_end`] composes
//! that unit over every half group of every seed; [`run_sweep`] repeats it
//! across trace counts; [`calibrate_sigma`] locates the noise level the
//! fixed-seed experiments can just tolerate.
//!
//! Everything derives from the per-seed master seed: polynomial `p` of the
//! secret is sampled from substream `p`, and the traces of group `g` of
//! polynomial `p` draw from substream `16 + 2p + g`. Reports are merged by
//! `(seed, group)` key, so concurrency never changes any output byte.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::cpa::{run_cpa_group, CpaConfig, CpaError};
use crate::lattice::{
    trial_and_error_recover, LatticeError, RecoveryReportRow, ReductionParams,
};
use crate::leakage::{simulate_traces, HalfGroup, LeakageConfig, LeakageError};
use crate::params::{KyberParams, ParamError, SLOTS};
use crate::poly::{sample_secret, Poly};
use crate::rng::substream_seed;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Leakage(#[from] LeakageError),
    #[error(transparent)]
    Cpa(#[from] CpaError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything one experiment campaign needs, serializable as a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// 512, 768 or 1024.
    pub security_level: u32,
    /// Traces simulated per half group (the paper-facing knob `D`).
    pub d_traces: usize,
    /// Slot calls attacked per half group (of the 128 available).
    pub n_calls: usize,
    pub leakage: LeakageConfig,
    pub cpa: CpaConfig,
    pub reduction: ReductionParams,
    /// Master seeds, one experiment row each.
    pub seeds: Vec<u64>,
    /// Directory that receives the CSV reports.
    pub output_dir: PathBuf,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            security_level: 512,
            d_traces: 15,
            n_calls: 60,
            leakage: LeakageConfig::default(),
            cpa: CpaConfig::default(),
            reduction: ReductionParams::default(),
            seeds: (1..=20).collect(),
            output_dir: PathBuf::from("."),
        }
    }
}

impl AttackConfig {
    /// Check every cross-field invariant and resolve the parameter set.
    pub fn validate(&self) -> Result<KyberParams, HarnessError> {
        let params = KyberParams::new(self.security_level)?;
        if self.d_traces < 2 {
            return Err(HarnessError::Config(format!(
                "d_traces {} too small: correlation needs at least 2 traces",
                self.d_traces
            )));
        }
        if self.n_calls < params.sr_min() {
            return Err(HarnessError::Config(format!(
                "n_calls {} below the lattice threshold {}",
                self.n_calls,
                params.sr_min()
            )));
        }
        if self.n_calls > SLOTS {
            return Err(HarnessError::Config(format!(
                "n_calls {} exceeds the {SLOTS} slot calls",
                self.n_calls
            )));
        }
        if self.leakage.leak_sample_index >= self.leakage.samples_per_call {
            return Err(HarnessError::Config(format!(
                "leak_sample_index {} outside the {}-sample window",
                self.leakage.leak_sample_index, self.leakage.samples_per_call
            )));
        }
        if !(self.leakage.sigma >= 0.0) {
            return Err(HarnessError::Config(format!(
                "sigma {} must be a nonnegative number",
                self.leakage.sigma
            )));
        }
        self.reduction.validate()?;
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds list is empty".into()));
        }
        Ok(params)
    }
}

/// Outcome of one experiment unit (one half group of one seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRun {
    pub seed: u64,
    /// Which secret polynomial, `0..k`.
    pub poly_index: usize,
    pub group: HalfGroup,
    /// Stable key for report merging, e.g. `p0-even`.
    pub group_id: String,
    /// Trusted-set size the lattice step used.
    pub sr: usize,
    /// Chosen-guess hits among the attacked calls (against ground truth).
    pub cpa_correct: usize,
    /// Lattice recovery reported success and matched the planted secret.
    pub success: bool,
    pub trials_used: usize,
    /// Trace simulation plus correlation, milliseconds.
    pub step1_ms: u128,
    /// Lattice recovery, milliseconds.
    pub step2_ms: u128,
    /// Per-trial lattice log for the trial-level report.
    pub trial_rows: Vec<RecoveryReportRow>,
}

/// Outcome of one seed: every half group of the sampled secret key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    /// Full-key success: every half group recovered bit-exact.
    pub success: bool,
    pub groups_ok: usize,
    pub groups_total: usize,
    pub total_trials: usize,
    pub step1_ms: u128,
    pub step2_ms: u128,
    pub groups: Vec<GroupRun>,
}

/// A whole campaign: one row per seed plus the derived rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndToEndReport {
    pub rows: Vec<SeedRun>,
    pub success_rate: f64,
}

/// Sample the full secret key of a seed: `k` polynomials, polynomial `p`
/// from substream `p`.
pub fn keygen(seed: u64, params: &KyberParams) -> Vec<Poly> {
    (0..params.k).map(|p| sample_secret(substream_seed(seed, p as u64), params)).collect()
}

/// The planted time-domain half group of a polynomial, for verification.
pub fn truth_half(poly: &Poly, group: HalfGroup) -> Vec<i16> {
    (0..SLOTS).map(|slot| poly.coeffs()[group.coeff_index(slot)]).collect()
}

/// The planted NTT-domain half group: what a perfect correlation step would
/// hand the lattice step.
pub fn truth_ntt_half(poly: &Poly, group: HalfGroup) -> Vec<u16> {
    let ntt = poly.ntt().to_canonical();
    match group {
        HalfGroup::Even => ntt.even_group(),
        HalfGroup::Odd => ntt.odd_group(),
    }
}

/// Run one experiment unit. `secret` is the targeted polynomial; the caller
/// owns seed bookkeeping via `cfg` and `seed`.
pub fn run_single_group(
    cfg: &AttackConfig,
    params: &KyberParams,
    seed: u64,
    poly_index: usize,
    group: HalfGroup,
    secret: &Poly,
) -> Result<GroupRun, HarnessError> {
    let gbit = match group {
        HalfGroup::Even => 0u64,
        HalfGroup::Odd => 1u64,
    };
    let mut leakage = cfg.leakage;
    leakage.rng_seed = substream_seed(seed, 16 + 2 * poly_index as u64 + gbit);

    let t1 = Instant::now();
    let skey_ntt = secret.ntt();
    let traces = simulate_traces(&skey_ntt, cfg.d_traces, &leakage, params, group)?;
    let sets = run_cpa_group(&traces, group, cfg.n_calls, &cfg.cpa)?;
    let step1_ms = t1.elapsed().as_millis();

    let truth_ntt = truth_ntt_half(secret, group);
    let cpa_correct = sets
        .iter()
        .filter(|s| {
            s.chosen_candidate().is_some_and(|c| c.guess == truth_ntt[s.call_index])
        })
        .count();

    let t2 = Instant::now();
    let recovered = trial_and_error_recover(&sets, group, &cfg.reduction, params)?;
    let step2_ms = t2.elapsed().as_millis();

    let group_id = format!(
        "p{poly_index}-{}",
        match group {
            HalfGroup::Even => "even",
            HalfGroup::Odd => "odd",
        }
    );
    let success = recovered.success && recovered.s_time == truth_half(secret, group);
    let trial_rows = recovered.report_rows(&group_id, params.sr_min());
    Ok(GroupRun {
        seed,
        poly_index,
        group,
        group_id,
        sr: params.sr_min(),
        cpa_correct,
        success,
        trials_used: recovered.trials_used,
        step1_ms,
        step2_ms,
        trial_rows,
    })
}

fn run_seed(cfg: &AttackConfig, params: &KyberParams, seed: u64) -> Result<SeedRun, HarnessError> {
    let polys = keygen(seed, params);
    let units: Vec<(usize, HalfGroup)> = (0..params.k)
        .flat_map(|p| [(p, HalfGroup::Even), (p, HalfGroup::Odd)])
        .collect();
    // Half groups run concurrently (trials inside each stay serial); the
    // later sort restores the deterministic report order.
    let mut groups = units
        .into_par_iter()
        .map(|(p, g)| run_single_group(cfg, params, seed, p, g, &polys[p]))
        .collect::<Result<Vec<GroupRun>, HarnessError>>()?;
    groups.sort_by(|a, b| a.group_id.cmp(&b.group_id));
    let groups_ok = groups.iter().filter(|g| g.success).count();
    Ok(SeedRun {
        seed,
        success: groups_ok == groups.len(),
        groups_ok,
        groups_total: groups.len(),
        total_trials: groups.iter().map(|g| g.trials_used).sum(),
        step1_ms: groups.iter().map(|g| g.step1_ms).sum(),
        step2_ms: groups.iter().map(|g| g.step2_ms).sum(),
        groups,
    })
}

/// Attack every half group of every seed and write the three reports
/// (`seeds.csv`, `groups.csv`, `trials.csv`) into `cfg.output_dir`.
pub fn run_end_to_end(cfg: &AttackConfig) -> Result<EndToEndReport, HarnessError> {
    let params = cfg.validate()?;
    let mut rows = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, &params, seed))
        .collect::<Result<Vec<SeedRun>, HarnessError>>()?;
    rows.sort_by_key(|r| r.seed);
    let ok = rows.iter().filter(|r| r.success).count();
    let report =
        EndToEndReport { success_rate: ok as f64 / rows.len() as f64, rows };
    write_reports(&cfg.output_dir, &report)?;
    Ok(report)
}

fn write_reports(dir: &Path, report: &EndToEndReport) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let mut seeds = std::fs::File::create(dir.join("seeds.csv"))?;
    writeln!(
        seeds,
        "seed,success,groups_ok,groups_total,total_trials,step1_ms,step2_ms"
    )?;
    for r in &report.rows {
        writeln!(
            seeds,
            "{},{},{},{},{},{},{}",
            r.seed, r.success, r.groups_ok, r.groups_total, r.total_trials, r.step1_ms, r.step2_ms
        )?;
    }
    let mut groups = std::fs::File::create(dir.join("groups.csv"))?;
    writeln!(
        groups,
        "seed,group_id,sr,cpa_correct,success,trials_used,step1_ms,step2_ms"
    )?;
    let mut trials = std::fs::File::create(dir.join("trials.csv"))?;
    writeln!(trials, "seed,group_id,sr,trial,first_vector_norm,success,wall_ms")?;
    for r in &report.rows {
        for g in &r.groups {
            writeln!(
                groups,
                "{},{},{},{},{},{},{},{}",
                g.seed, g.group_id, g.sr, g.cpa_correct, g.success, g.trials_used, g.step1_ms,
                g.step2_ms
            )?;
            for t in &g.trial_rows {
                writeln!(
                    trials,
                    "{},{},{},{},{:.3},{},{}",
                    g.seed, t.group_id, t.sr, t.trial, t.first_vector_norm, t.success, t.wall_ms
                )?;
            }
        }
    }
    Ok(())
}

/// One row of the trace-count sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d: usize,
    pub success_rate: f64,
    pub mean_step1_ms: f64,
    pub mean_step2_ms: f64,
    pub mean_trials: f64,
}

/// Rerun the whole campaign once per trace count with fixed seeds and write
/// `sweep.csv`. Per-D reports land in `sweep_d<D>/` under the output dir.
pub fn run_sweep(cfg: &AttackConfig, d_values: &[usize]) -> Result<Vec<SweepRow>, HarnessError> {
    cfg.validate()?;
    if d_values.is_empty() {
        return Err(HarnessError::Config("empty list of trace counts".into()));
    }
    let mut out = Vec::new();
    for &d in d_values {
        let mut sub = cfg.clone();
        sub.d_traces = d;
        sub.output_dir = cfg.output_dir.join(format!("sweep_d{d}"));
        sub.validate()?;
        let report = run_end_to_end(&sub)?;
        let n = report.rows.len() as f64;
        out.push(SweepRow {
            d,
            success_rate: report.success_rate,
            mean_step1_ms: report.rows.iter().map(|r| r.step1_ms as f64).sum::<f64>() / n,
            mean_step2_ms: report.rows.iter().map(|r| r.step2_ms as f64).sum::<f64>() / n,
            mean_trials: report.rows.iter().map(|r| r.total_trials as f64).sum::<f64>() / n,
        });
    }
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut f = std::fs::File::create(cfg.output_dir.join("sweep.csv"))?;
    writeln!(f, "D,success_rate,mean_step1_ms,mean_step2_ms,mean_trials")?;
    for row in &out {
        writeln!(
            f,
            "{},{:.4},{:.1},{:.1},{:.2}",
            row.d, row.success_rate, row.mean_step1_ms, row.mean_step2_ms, row.mean_trials
        )?;
    }
    Ok(out)
}

/// Result of [`calibrate_sigma`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Largest tested noise level at which every seed still succeeded.
    pub sigma: f64,
    /// `(sigma, successes, total)` for every probe, in test order.
    pub history: Vec<(f64, usize, usize)>,
}

/// Binary-search the largest noise level at which the configured seeds all
/// recover their half groups. The correlation step is the noise-sensitive
/// part, so the probe runs it alone — each seed's half groups must yield
/// `sr_min` correct coefficients inside the top `sr_min` by confidence,
/// which is exactly the set the lattice step consumes trial 1 with.
pub fn calibrate_sigma(
    cfg: &AttackConfig,
    lo: f64,
    hi: f64,
    steps: usize,
) -> Result<Calibration, HarnessError> {
    let params = cfg.validate()?;
    if !(0.0 <= lo && lo < hi) {
        return Err(HarnessError::Config(format!("bad sigma bracket [{lo}, {hi}]")));
    }
    let mut history = Vec::new();
    let probe = |sigma: f64, history: &mut Vec<(f64, usize, usize)>| -> Result<bool, HarnessError> {
        let mut sub = cfg.clone();
        sub.leakage.sigma = sigma;
        let outcomes = cfg
            .seeds
            .par_iter()
            .map(|&seed| {
                let polys = keygen(seed, &params);
                for (p, poly) in polys.iter().enumerate() {
                    for group in [HalfGroup::Even, HalfGroup::Odd] {
                        if !cpa_clears_threshold(&sub, &params, seed, p, group, poly)? {
                            return Ok(false);
                        }
                    }
                }
                Ok(true)
            })
            .collect::<Result<Vec<bool>, HarnessError>>()?;
        let ok = outcomes.iter().filter(|&&b| b).count();
        history.push((sigma, ok, outcomes.len()));
        Ok(ok == outcomes.len())
    };
    if !probe(lo, &mut history)? {
        return Err(HarnessError::Config(format!(
            "even sigma={lo} fails; nothing to calibrate"
        )));
    }
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        if probe(mid, &mut history)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Calibration { sigma: lo, history })
}

/// Noise probe for one half group: simulate, correlate, and require the
/// `sr_min` highest-confidence chosen guesses to all be correct.
fn cpa_clears_threshold(
    cfg: &AttackConfig,
    params: &KyberParams,
    seed: u64,
    poly_index: usize,
    group: HalfGroup,
    secret: &Poly,
) -> Result<bool, HarnessError> {
    let gbit = match group {
        HalfGroup::Even => 0u64,
        HalfGroup::Odd => 1u64,
    };
    let mut leakage = cfg.leakage;
    leakage.rng_seed = substream_seed(seed, 16 + 2 * poly_index as u64 + gbit);
    let traces = simulate_traces(&secret.ntt(), cfg.d_traces, &leakage, params, group)?;
    let sets = run_cpa_group(&traces, group, cfg.n_calls, &cfg.cpa)?;
    let truth = truth_ntt_half(secret, group);
    let mut chosen: Vec<(f64, bool)> = sets
        .iter()
        .filter_map(|s| {
            s.chosen_candidate()
                .map(|c| (c.confidence, c.guess == truth[s.call_index]))
        })
        .collect();
    if chosen.len() < params.sr_min() {
        return Ok(false);
    }
    chosen.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    Ok(chosen[..params.sr_min()].iter().all(|&(_, correct)| correct))
}
