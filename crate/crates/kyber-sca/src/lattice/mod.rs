//! Key-group recovery from partial NTT-domain knowledge.
//!
//! The correlation step leaves `sr` trusted coefficients of a 128-entry
//! NTT-domain half group. Writing the inverse transform kernel `N` column-
//! split by trusted (`A`) and unknown (`B`) slots, the time-domain secret
//! satisfies `s = N_A*v_A + N_B*v_B (mod q)` with `v_A` known and `s` small.
//! `s` therefore lies in the coset `t + L` of the q-ary lattice generated by
//! the columns of `-N_B`, with `t = N_A*v_A`. Embedding `t` with a trailing
//! 1 turns the coset point into the short vector `[s | 1]` of a
//! 129-dimensional lattice, which LLL and BKZ dig out. Wrong trusted values
//! put the short vector in a different coset, so reduction comes up empty
//! and the driver retries with the least-confident input swapped for the
//! next unused one.

mod bkz;
mod lll;

pub use bkz::{bkz_reduce, bkz_reduce_until, BkzOutcome};
pub use lll::lll_reduce;

use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::cpa::CandidateSet;
use crate::leakage::HalfGroup;
use crate::matrix::{build_ntt_matrices, ModMatrix};
use crate::params::KyberParams;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("Gram-Schmidt data drifted beyond what exact recomputation can repair")]
    PrecisionFailure,
    #[error("basis is not full rank")]
    RankDeficient,
    #[error("integer overflow during a basis transformation")]
    ArithmeticOverflow,
    #[error("invalid reduction parameters: {0}")]
    BadParams(String),
    #[error("invalid trusted coefficient set: {0}")]
    BadTrustedSet(String),
    #[error("need at least {need} usable candidates, got {got}")]
    TooFewCandidates { need: usize, got: usize },
}

/// One trusted NTT-domain coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NttEntry {
    /// Slot inside the half group, `0..128`.
    pub index: usize,
    /// Canonical value in `[0, q)`.
    pub value: u16,
    pub confidence: f64,
}

/// The trusted subset of one half group's NTT coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialNttKey {
    pub entries: Vec<NttEntry>,
    pub group: HalfGroup,
    /// Which of the module's polynomials this group belongs to.
    pub poly_index: usize,
}

impl PartialNttKey {
    fn validate(&self, half: usize, q: i64) -> Result<(), LatticeError> {
        if self.entries.is_empty() {
            return Err(LatticeError::BadTrustedSet("no trusted entries".into()));
        }
        let mut seen = vec![false; half];
        for e in &self.entries {
            if e.index >= half {
                return Err(LatticeError::BadTrustedSet(format!(
                    "slot {} outside 0..{half}",
                    e.index
                )));
            }
            if seen[e.index] {
                return Err(LatticeError::BadTrustedSet(format!("duplicate slot {}", e.index)));
            }
            seen[e.index] = true;
            if i64::from(e.value) >= q {
                return Err(LatticeError::BadTrustedSet(format!(
                    "value {} at slot {} not below q",
                    e.value, e.index
                )));
            }
        }
        Ok(())
    }
}

/// The shifted q-ary search problem: the small time-domain vector lies in
/// `t_vec + {a_mat * x mod q}`.
#[derive(Debug, Clone)]
pub struct LweInstance {
    /// Coset offset, length equal to the group size.
    pub t_vec: Vec<i64>,
    /// Generators of the q-ary lattice, one column per unknown slot.
    pub a_mat: ModMatrix,
    pub trusted: PartialNttKey,
}

impl LweInstance {
    pub fn sr(&self) -> usize {
        self.trusted.entries.len()
    }
}

/// Row basis of the embedded lattice; the final coordinate is the embedding
/// column and the final row carries the coset offset with coefficient 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingBasis {
    pub basis: Vec<Vec<i64>>,
}

impl EmbeddingBasis {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn first_vector_norm(&self) -> f64 {
        (lll::int_dot(&self.basis[0], &self.basis[0]) as f64).sqrt()
    }

    /// Determinant of the row matrix mod a prime below 2^31. Unimodular row
    /// operations can only flip its sign, so it doubles as a cheap lattice-
    /// preservation witness at dimensions where exact determinants overflow.
    pub fn det_mod(&self, p: u64) -> u64 {
        let n = self.dim();
        let mut a: Vec<Vec<u64>> = self
            .basis
            .iter()
            .map(|r| r.iter().map(|&v| (v as i128).rem_euclid(p as i128) as u64).collect())
            .collect();
        let mut det: u64 = 1;
        for col in 0..n {
            let Some(pivot) = (col..n).find(|&r| a[r][col] != 0) else {
                return 0;
            };
            if pivot != col {
                a.swap(pivot, col);
                det = (p - det) % p;
            }
            let inv = mod_pow(a[col][col], p - 2, p);
            det = mul_mod(det, a[col][col], p);
            for r in col + 1..n {
                if a[r][col] == 0 {
                    continue;
                }
                let f = mul_mod(a[r][col], inv, p);
                for c in col..n {
                    let sub = mul_mod(f, a[col][c], p);
                    a[r][c] = (a[r][c] + p - sub) % p;
                }
            }
        }
        det
    }
}

fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    (a as u128 * b as u128 % p as u128) as u64
}

fn mod_pow(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, b, p);
        }
        b = mul_mod(b, b, p);
        e >>= 1;
    }
    acc
}

/// Reduction knobs. Defaults match the attack configuration this crate is
/// tuned for; any block size that meets the success criteria is fair game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionParams {
    #[serde(default = "default_block")]
    pub bkz_block: usize,
    #[serde(default = "default_loops")]
    pub max_loops: usize,
    #[serde(default = "default_delta")]
    pub lll_delta: f64,
    /// Linear pruning during block enumeration.
    #[serde(default = "default_prune")]
    pub enum_prune: bool,
    /// Per-block enumeration node budget; exhaustion skips the block.
    #[serde(default = "default_budget")]
    pub enum_node_budget: u64,
}

fn default_block() -> usize {
    50
}
fn default_loops() -> usize {
    8
}
fn default_delta() -> f64 {
    0.99
}
fn default_prune() -> bool {
    true
}
fn default_budget() -> u64 {
    100_000_000
}

impl Default for ReductionParams {
    fn default() -> Self {
        ReductionParams {
            bkz_block: default_block(),
            max_loops: default_loops(),
            lll_delta: default_delta(),
            enum_prune: default_prune(),
            enum_node_budget: default_budget(),
        }
    }
}

impl ReductionParams {
    pub fn validate(&self) -> Result<(), LatticeError> {
        if !(2..=129).contains(&self.bkz_block) {
            return Err(LatticeError::BadParams(format!(
                "bkz_block {} outside 2..=129",
                self.bkz_block
            )));
        }
        if !(0.25 < self.lll_delta && self.lll_delta < 1.0) {
            return Err(LatticeError::BadParams(format!(
                "lll delta {} outside (0.25, 1)",
                self.lll_delta
            )));
        }
        if self.enum_node_budget == 0 {
            return Err(LatticeError::BadParams("enumeration node budget is zero".into()));
        }
        Ok(())
    }
}

/// One lattice attempt inside the retry loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// 1-based trial number; trial j has swapped in j-1 replacements.
    pub trial: usize,
    pub first_vector_norm: f64,
    pub success: bool,
    pub wall_ms: u128,
}

/// Result of recovering one half group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredGroup {
    /// The 128 small time-domain coefficients; empty when recovery failed.
    pub s_time: Vec<i16>,
    pub trials_used: usize,
    pub success: bool,
    pub trial_log: Vec<TrialRecord>,
}

impl RecoveredGroup {
    pub fn report_rows(&self, group_id: &str, sr: usize) -> Vec<RecoveryReportRow> {
        self.trial_log
            .iter()
            .map(|t| RecoveryReportRow {
                group_id: group_id.to_string(),
                sr,
                trial: t.trial,
                first_vector_norm: t.first_vector_norm,
                success: t.success,
                wall_ms: t.wall_ms,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReportRow {
    pub group_id: String,
    pub sr: usize,
    pub trial: usize,
    pub first_vector_norm: f64,
    pub success: bool,
    pub wall_ms: u128,
}

pub fn write_recovery_report(path: &Path, rows: &[RecoveryReportRow]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "group_id,sr,trial,first_vector_norm,success,wall_ms")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{:.3},{},{}",
            r.group_id,
            r.sr,
            r.trial,
            r.first_vector_norm,
            u8::from(r.success),
            r.wall_ms
        )?;
    }
    Ok(())
}

/// Build the shifted q-ary instance from trusted NTT values and the inverse
/// transform kernel (its columns at trusted slots weight the known values,
/// the rest become lattice generators).
pub fn build_lwe_instance(
    partial: &PartialNttKey,
    n_inv: &ModMatrix,
) -> Result<LweInstance, LatticeError> {
    let half = n_inv.rows;
    let q = n_inv.q;
    partial.validate(half, q)?;
    let mut trusted_idx: Vec<usize> = partial.entries.iter().map(|e| e.index).collect();
    let mut values: Vec<i64> = partial.entries.iter().map(|e| i64::from(e.value)).collect();
    // Canonical slot order keeps the construction independent of the
    // caller's confidence ordering.
    let mut order: Vec<usize> = (0..trusted_idx.len()).collect();
    order.sort_by_key(|&i| trusted_idx[i]);
    trusted_idx = order.iter().map(|&i| trusted_idx[i]).collect();
    values = order.iter().map(|&i| values[i]).collect();

    let n_a = n_inv.select_columns(&trusted_idx);
    let t_vec = n_a.mat_vec(&values).expect("selection matches value count");
    let free_idx: Vec<usize> =
        (0..half).filter(|i| !trusted_idx.contains(i)).collect();
    let n_b = n_inv.select_columns(&free_idx);
    let a_mat = ModMatrix::from_fn(n_b.rows, n_b.cols, q, |i, j| (q - n_b.get(i, j)) % q);
    Ok(LweInstance { t_vec, a_mat, trusted: partial.clone() })
}

/// Canonical basis of the embedded lattice: echelon rows of the generator
/// transpose where they pivot, `q` rows on the remaining coordinates, and
/// the offset row with embedding coefficient 1. Coordinates keep their
/// original order throughout, so nothing needs undoing at extraction.
pub fn build_kannan_basis(inst: &LweInstance) -> EmbeddingBasis {
    let n = inst.a_mat.rows;
    let q = inst.a_mat.q;
    let mut at = ModMatrix::from_fn(inst.a_mat.cols, n, q, |i, j| inst.a_mat.get(j, i));
    let pivots = at.rref();
    let mut pivot_row = vec![usize::MAX; n];
    for (r, &col) in pivots.iter().enumerate() {
        pivot_row[col] = r;
    }
    let dim = n + 1;
    let mut basis = Vec::with_capacity(dim);
    for j in 0..n {
        let mut row = vec![0i64; dim];
        if pivot_row[j] != usize::MAX {
            row[..n].copy_from_slice(at.row(pivot_row[j]));
        } else {
            row[j] = q;
        }
        basis.push(row);
    }
    let mut last = inst.t_vec.clone();
    last.push(1);
    basis.push(last);
    EmbeddingBasis { basis }
}

/// Scan reduced rows for `±[v | ±1]` with every `|v_i| <= eta`; the result
/// is normalized so the embedding coordinate is +1.
pub fn extract_secret(basis: &EmbeddingBasis, eta: i16) -> Option<Vec<i16>> {
    scan_for_secret(&basis.basis, eta)
}

fn scan_for_secret(rows: &[Vec<i64>], eta: i16) -> Option<Vec<i16>> {
    let dim = rows.first()?.len();
    for row in rows {
        let last = row[dim - 1];
        if last.abs() != 1 {
            continue;
        }
        let bound = i64::from(eta);
        if row[..dim - 1].iter().all(|&v| v.abs() <= bound) {
            return Some(row[..dim - 1].iter().map(|&v| (v * last) as i16).collect());
        }
    }
    None
}

#[derive(Debug, Clone, Copy)]
struct SlotGuess {
    slot: usize,
    value: u16,
    confidence: f64,
}

/// Working set for 1-based trial `j`: the strongest `sr - (j-1)` original
/// members plus the `j-1` strongest replacements. Each failure evicts the
/// weakest original still present; earlier replacements stay pinned.
fn trial_subset(ranked: &[SlotGuess], sr: usize, trial: usize) -> Vec<SlotGuess> {
    let kept = sr - (trial - 1);
    let mut set: Vec<SlotGuess> = ranked[..kept].to_vec();
    set.extend_from_slice(&ranked[sr..sr + trial - 1]);
    set
}

/// Recover one half group from CPA output by repeated embed-and-reduce,
/// swapping out the least trusted input after every failure. Failure after
/// all swaps is a result, not an error.
pub fn trial_and_error_recover(
    cands: &[CandidateSet],
    group: HalfGroup,
    rp: &ReductionParams,
    params: &KyberParams,
) -> Result<RecoveredGroup, LatticeError> {
    rp.validate()?;
    let mut ranked: Vec<SlotGuess> = Vec::new();
    let mut seen = vec![false; params.n / 2];
    for set in cands {
        let Some(c) = set.chosen_candidate() else { continue };
        if set.call_index >= params.n / 2 {
            return Err(LatticeError::BadTrustedSet(format!(
                "call index {} outside the half group",
                set.call_index
            )));
        }
        if seen[set.call_index] {
            return Err(LatticeError::BadTrustedSet(format!(
                "duplicate call index {}",
                set.call_index
            )));
        }
        seen[set.call_index] = true;
        ranked.push(SlotGuess { slot: set.call_index, value: c.guess, confidence: c.confidence });
    }
    let sr = params.sr_min();
    if ranked.len() < sr {
        return Err(LatticeError::TooFewCandidates { need: sr, got: ranked.len() });
    }
    ranked.sort_by(|a, b| {
        b.confidence.partial_cmp(&a.confidence).unwrap().then(a.slot.cmp(&b.slot))
    });

    let mats = build_ntt_matrices(params);
    let eta = params.eta as i16;
    let max_trials = ranked.len() - sr + 1;
    let mut log = Vec::new();
    for trial in 1..=max_trials {
        let subset = trial_subset(&ranked, sr, trial);
        let entries: Vec<NttEntry> = subset
            .iter()
            .map(|g| NttEntry { index: g.slot, value: g.value, confidence: g.confidence })
            .collect();
        let partial = PartialNttKey { entries, group, poly_index: 0 };
        let started = Instant::now();
        let inst = build_lwe_instance(&partial, &mats.n_inv)?;
        let mut basis = build_kannan_basis(&inst);
        lll_reduce(&mut basis, rp.lll_delta)?;
        let mut found = verified_secret(&basis, eta, &partial, &mats.m);
        if found.is_none() {
            bkz_reduce_until(&mut basis, rp, |rows| scan_for_secret(rows, eta).is_some())?;
            found = verified_secret(&basis, eta, &partial, &mats.m);
        }
        log.push(TrialRecord {
            trial,
            first_vector_norm: basis.first_vector_norm(),
            success: found.is_some(),
            wall_ms: started.elapsed().as_millis(),
        });
        if let Some(s_time) = found {
            return Ok(RecoveredGroup { s_time, trials_used: trial, success: true, trial_log: log });
        }
    }
    Ok(RecoveredGroup {
        s_time: Vec::new(),
        trials_used: max_trials,
        success: false,
        trial_log: log,
    })
}

/// Extraction plus the success predicate: the candidate must reproduce every
/// trusted NTT value through the forward kernel. Coset membership makes this
/// automatic for genuine lattice vectors, so it guards against construction
/// bugs rather than unlucky reductions.
fn verified_secret(
    basis: &EmbeddingBasis,
    eta: i16,
    partial: &PartialNttKey,
    m: &ModMatrix,
) -> Option<Vec<i16>> {
    let v = extract_secret(basis, eta)?;
    let lifted: Vec<i64> = v.iter().map(|&x| i64::from(x)).collect();
    let ntt = m.mat_vec(&lifted).expect("kernel width matches group size");
    let ok = partial.entries.iter().all(|e| ntt[e.index] == i64::from(e.value));
    ok.then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpa::Candidate;
    use crate::params::Q;
    use crate::rng::{stream, uniform_residue};

    fn toy_kernel() -> ModMatrix {
        // Vandermonde on 1, 2, 3, 5 mod 17: invertible.
        let pts = [1i64, 2, 3, 5];
        ModMatrix::from_fn(4, 4, 17, |i, j| {
            let mut acc = 1i64;
            for _ in 0..j {
                acc = acc * pts[i] % 17;
            }
            acc
        })
    }

    fn toy_partial(entries: Vec<NttEntry>) -> PartialNttKey {
        PartialNttKey { entries, group: HalfGroup::Even, poly_index: 0 }
    }

    #[test]
    fn toy_instance_matches_hand_product() {
        let n = toy_kernel();
        let partial = toy_partial(vec![
            NttEntry { index: 0, value: 5, confidence: 1.0 },
            NttEntry { index: 2, value: 11, confidence: 0.9 },
        ]);
        let inst = build_lwe_instance(&partial, &n).unwrap();
        for i in 0..4 {
            let want = (n.get(i, 0) * 5 + n.get(i, 2) * 11) % 17;
            assert_eq!(inst.t_vec[i], want, "row {i}");
            assert_eq!(inst.a_mat.get(i, 0), (17 - n.get(i, 1)) % 17);
            assert_eq!(inst.a_mat.get(i, 1), (17 - n.get(i, 3)) % 17);
        }
        assert_eq!((inst.a_mat.rows, inst.a_mat.cols), (4, 2));
    }

    #[test]
    fn rejects_empty_and_duplicate_and_out_of_range() {
        let n = toy_kernel();
        assert!(matches!(
            build_lwe_instance(&toy_partial(vec![]), &n),
            Err(LatticeError::BadTrustedSet(_))
        ));
        let dup = vec![
            NttEntry { index: 1, value: 3, confidence: 1.0 },
            NttEntry { index: 1, value: 4, confidence: 0.5 },
        ];
        assert!(matches!(
            build_lwe_instance(&toy_partial(dup), &n),
            Err(LatticeError::BadTrustedSet(_))
        ));
        let oob = vec![NttEntry { index: 4, value: 3, confidence: 1.0 }];
        assert!(matches!(
            build_lwe_instance(&toy_partial(oob), &n),
            Err(LatticeError::BadTrustedSet(_))
        ));
        let big = vec![NttEntry { index: 0, value: 17, confidence: 1.0 }];
        assert!(matches!(
            build_lwe_instance(&toy_partial(big), &n),
            Err(LatticeError::BadTrustedSet(_))
        ));
    }

    #[test]
    fn full_knowledge_pins_the_secret_directly() {
        // With every slot trusted there is nothing left to search: the
        // offset vector already equals the secret mod q.
        let params = KyberParams::new(512).unwrap();
        let mats = build_ntt_matrices(&params);
        let mut rng = stream(40);
        let s: Vec<i64> =
            (0..128).map(|_| uniform_residue(&mut rng, 7) as i64 - 3).collect();
        let ntt = mats.m.mat_vec(&s).unwrap();
        let entries: Vec<NttEntry> = ntt
            .iter()
            .enumerate()
            .map(|(i, &v)| NttEntry { index: i, value: v as u16, confidence: 1.0 })
            .collect();
        let inst = build_lwe_instance(&toy_partial(entries), &mats.n_inv).unwrap();
        assert_eq!(inst.a_mat.cols, 0);
        let q = i64::from(Q);
        let centered: Vec<i64> =
            inst.t_vec.iter().map(|&v| if v > q / 2 { v - q } else { v }).collect();
        assert_eq!(centered, s);
    }

    /// Exact coordinates of `target` in the (triangular-plus-offset-row)
    /// construction basis; `None` when it is not a lattice point.
    fn member_of_construction(basis: &EmbeddingBasis, target: &[i64]) -> bool {
        let dim = basis.dim();
        let n = dim - 1;
        let rows = &basis.basis;
        let mut res: Vec<i128> = target.iter().map(|&v| v as i128).collect();
        let y_last = res[n];
        for c in 0..dim {
            res[c] -= y_last * rows[n][c] as i128;
        }
        for j in 0..n {
            let d = rows[j][j] as i128;
            if res[j] % d != 0 {
                return false;
            }
            let y = res[j] / d;
            if y != 0 {
                for c in j..dim {
                    res[c] -= y * rows[j][c] as i128;
                }
            }
        }
        res.iter().all(|&v| v == 0)
    }

    #[test]
    fn target_is_a_lattice_member_for_random_splits() {
        let params = KyberParams::new(512).unwrap();
        let mats = build_ntt_matrices(&params);
        let mut rng = stream(41);
        for &sr in &[39usize, 64, 100] {
            let s: Vec<i64> =
                (0..128).map(|_| uniform_residue(&mut rng, 7) as i64 - 3).collect();
            let ntt = mats.m.mat_vec(&s).unwrap();
            // Random distinct trusted slots.
            let mut slots: Vec<usize> = (0..128).collect();
            for i in (1..slots.len()).rev() {
                let j = uniform_residue(&mut rng, (i + 1) as u16) as usize;
                slots.swap(i, j);
            }
            slots.truncate(sr);
            let entries: Vec<NttEntry> = slots
                .iter()
                .map(|&i| NttEntry { index: i, value: ntt[i] as u16, confidence: 1.0 })
                .collect();
            let inst = build_lwe_instance(&toy_partial(entries), &mats.n_inv).unwrap();
            let basis = build_kannan_basis(&inst);
            let mut target = s.clone();
            target.push(1);
            assert!(member_of_construction(&basis, &target), "sr={sr}");
            // A perturbed vector must not be a member.
            let mut off = target.clone();
            off[0] += 1;
            assert!(!member_of_construction(&basis, &off), "sr={sr}");
        }
    }

    #[test]
    fn construction_shape_and_diagonal() {
        let params = KyberParams::new(512).unwrap();
        let mats = build_ntt_matrices(&params);
        let entries: Vec<NttEntry> = (0..39)
            .map(|i| NttEntry { index: i * 3, value: (i * 17 % Q as usize) as u16, confidence: 1.0 })
            .collect();
        let inst = build_lwe_instance(&toy_partial(entries), &mats.n_inv).unwrap();
        let b = build_kannan_basis(&inst);
        assert_eq!(b.dim(), 129);
        let q = i64::from(Q);
        // Triangular below the diagonal, except the offset row.
        for j in 0..128 {
            assert!(b.basis[j][j] == 1 || b.basis[j][j] == q);
            for c in 0..j {
                assert_eq!(b.basis[j][c], 0, "row {j} col {c}");
            }
            assert_eq!(b.basis[j][128], 0);
        }
        // Generic instance: generator rank is full, so exactly sr slots
        // keep a bare q on the diagonal.
        let q_rows = (0..128).filter(|&j| b.basis[j][j] == q).count();
        assert_eq!(q_rows, 39);
        assert_eq!(b.basis[128][128], 1);
        assert_eq!(b.basis[128][..128], inst.t_vec[..]);
    }

    #[test]
    fn extraction_round_trip_and_bounds() {
        let q = i64::from(Q);
        let mut rows: Vec<Vec<i64>> = (0..4)
            .map(|j| {
                let mut r = vec![0i64; 6];
                r[j] = q;
                r
            })
            .collect();
        rows.push(vec![2, -1, 0, 3, 0, 1]);
        rows.push(vec![0; 6]);
        rows[5][4] = q;
        let basis = EmbeddingBasis { basis: rows.clone() };
        assert_eq!(extract_secret(&basis, 3), Some(vec![2, -1, 0, 3, 0]));
        // The negated row normalizes to the same secret.
        let mut neg = rows.clone();
        neg[4] = neg[4].iter().map(|&v| -v).collect();
        assert_eq!(extract_secret(&EmbeddingBasis { basis: neg }, 3), Some(vec![2, -1, 0, 3, 0]));
        // An entry beyond the noise bound disqualifies the row.
        assert_eq!(extract_secret(&basis, 2), None);
    }

    fn fake_set(call: usize, guess: u16, confidence: f64) -> CandidateSet {
        CandidateSet {
            call_index: call,
            candidates: vec![Candidate {
                guess,
                pcc_peak: confidence,
                peak_sample: 3,
                kendall_tau: None,
                confidence,
            }],
            chosen: Some(0),
            threshold_used: 0.9,
        }
    }

    #[test]
    fn trial_subsets_evict_bottom_up_and_pin_replacements() {
        let ranked: Vec<SlotGuess> = (0..8)
            .map(|i| SlotGuess { slot: i, value: i as u16, confidence: 1.0 - 0.1 * i as f64 })
            .collect();
        let slots = |t: usize| -> Vec<usize> {
            trial_subset(&ranked, 4, t).iter().map(|g| g.slot).collect()
        };
        assert_eq!(slots(1), vec![0, 1, 2, 3]);
        assert_eq!(slots(2), vec![0, 1, 2, 4]);
        assert_eq!(slots(3), vec![0, 1, 4, 5]);
        assert_eq!(slots(4), vec![0, 4, 5, 6]);
        assert_eq!(slots(5), vec![4, 5, 6, 7]);
    }

    #[test]
    fn too_few_candidates_is_a_precondition_error() {
        let params = KyberParams::new(512).unwrap();
        let cands: Vec<CandidateSet> =
            (0..20).map(|i| fake_set(i, 100, 1.0 - 0.01 * i as f64)).collect();
        let got = trial_and_error_recover(
            &cands,
            HalfGroup::Even,
            &ReductionParams::default(),
            &params,
        );
        assert_eq!(got, Err(LatticeError::TooFewCandidates { need: 39, got: 20 }));
    }

    #[test]
    fn duplicate_call_indices_rejected() {
        let params = KyberParams::new(512).unwrap();
        let mut cands: Vec<CandidateSet> =
            (0..40).map(|i| fake_set(i, 100, 1.0 - 0.01 * i as f64)).collect();
        cands.push(fake_set(5, 7, 0.1));
        assert!(matches!(
            trial_and_error_recover(
                &cands,
                HalfGroup::Even,
                &ReductionParams::default(),
                &params
            ),
            Err(LatticeError::BadTrustedSet(_))
        ));
    }
}
