//! Block reduction: shortest-vector enumeration in projected blocks, with
//! found vectors inserted through a unimodular completion so the lattice is
//! provably unchanged, and an LLL cleanup after every insertion.
//!
//! Plain block SVP only ever returns the minimum of a projected block, and
//! on dense q-ary embeddings that minimum is usually the projection of some
//! long vector rather than of the short one being hunted. Each tour
//! therefore ends with a lift sweep over the tail blocks: enumeration keeps
//! every solution inside a widened radius, lifts each one through the
//! prefix with Babai rounding (directly on the Gram-Schmidt coefficients,
//! with early abort), and the leaf whose lifted full vector is shortest is
//! spliced into the basis. That catches a globally short vector long before
//! it would win any single block on projected length.

use super::lll::{gso_checked, lll_rows, Gso};
use super::{EmbeddingBasis, LatticeError, ReductionParams};

/// Tour statistics; useful for reports and for the skipped-block contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BkzOutcome {
    pub tours: usize,
    pub insertions: usize,
    /// Blocks abandoned because the enumeration node budget ran out with
    /// nothing found; the tour simply continues past them.
    pub budget_skips: usize,
    /// The stop predicate fired before the tour limit.
    pub stopped_early: bool,
}

/// Block-reduce in place with at most `rp.max_loops` tours.
pub fn bkz_reduce(basis: &mut EmbeddingBasis, rp: &ReductionParams) -> Result<BkzOutcome, LatticeError> {
    bkz_reduce_until(basis, rp, |_| false)
}

/// Like [`bkz_reduce`], with a predicate polled after the initial LLL and
/// after every insertion; returning `true` stops the reduction early. The
/// retry driver uses this to bail out as soon as a key candidate appears.
pub fn bkz_reduce_until(
    basis: &mut EmbeddingBasis,
    rp: &ReductionParams,
    mut stop: impl FnMut(&[Vec<i64>]) -> bool,
) -> Result<BkzOutcome, LatticeError> {
    rp.validate()?;
    let mut out =
        BkzOutcome { tours: 0, insertions: 0, budget_skips: 0, stopped_early: false };
    let n = basis.basis.len();
    if rp.max_loops == 0 || n < 2 {
        return Ok(out);
    }
    let rows = &mut basis.basis;
    lll_rows(rows, rp.lll_delta)?;
    if stop(rows) {
        out.stopped_early = true;
        return Ok(out);
    }
    let mut g = gso_checked(rows)?;
    for _ in 0..rp.max_loops {
        out.tours += 1;
        let mut improved = false;
        for k in 0..n - 1 {
            let m = rp.bkz_block.min(n - k);
            if m < 2 {
                continue;
            }
            let radius2 = block_radius2(&g, k, m);
            let found = match enumerate(&g, k, m, radius2, rp.enum_node_budget, rp.enum_prune)
            {
                EnumOutcome::Found { x, norm2 } => {
                    debug_assert!(norm2 <= radius2 * (1.0 + 1e-9), "find inside the radius");
                    Some(x)
                }
                EnumOutcome::Empty => None,
                EnumOutcome::Budget { best } => {
                    if best.is_none() {
                        out.budget_skips += 1;
                    }
                    best.map(|(x, _)| x)
                }
            };
            if let Some(x) = found {
                insert_block(rows, k, &x)?;
                lll_rows(rows, rp.lll_delta)?;
                g = gso_checked(rows)?;
                out.insertions += 1;
                improved = true;
                if stop(rows) {
                    out.stopped_early = true;
                    return Ok(out);
                }
            }
        }
        // Lift sweep over the tail blocks, smallest first: cheap blocks
        // finish their whole tree, and every find tightens the bound the
        // remaining (ever larger) blocks must beat.
        let mut sweep_nodes = 4 * rp.enum_node_budget;
        let mut sweep_best: Option<(usize, LiftFind)> = None;
        let mut sweep_bound = 0.99 * g.b[0];
        for k in (n.saturating_sub(rp.bkz_block)..n - 1).rev() {
            if sweep_nodes == 0 {
                break;
            }
            let m = n - k;
            let budget = rp.enum_node_budget.min(sweep_nodes);
            let (find, used) = lift_sweep(&g, k, m, sweep_bound, budget);
            sweep_nodes = sweep_nodes.saturating_sub(used);
            if let Some(find) = find {
                sweep_bound = find.total2;
                sweep_best = Some((k, find));
            }
        }
        if let Some((k, find)) = sweep_best {
            apply_lift(rows, k, &find)?;
            out.insertions += 1;
            improved = true;
            // Poll before the LLL cleanup: the cleanup may legally trade the
            // freshly spliced row away again while reworking the completion
            // rows around it.
            if stop(rows) {
                out.stopped_early = true;
                return Ok(out);
            }
            lll_rows(rows, rp.lll_delta)?;
            g = gso_checked(rows)?;
            if stop(rows) {
                out.stopped_early = true;
                return Ok(out);
            }
        }
        if !improved {
            break;
        }
    }
    Ok(out)
}

/// Widening factor on the Gaussian-heuristic radius for lift sweeps: the
/// hunted vector's projection typically sits above the block minimum, so the
/// sweep must look past it.
const SWEEP_RADIUS_FACTOR: f64 = 2.25;
/// At most this many leaves are lifted per swept block.
const SWEEP_LIFT_BUDGET: u64 = 2_000_000;
/// Fraction of the expected remaining Babai mass charged up front when
/// deciding to abort a lift. A random direction accumulates about b/12 per
/// remaining level, a genuinely short vector almost nothing, so charging a
/// conservative slice of that forecast ends hopeless walks within a few
/// levels without touching a real find.
const SWEEP_FORECAST: f64 = 0.35;

struct LiftFind {
    /// Coefficients over the block rows.
    x: Vec<i64>,
    /// Babai rounding against each prefix row (length k).
    shifts: Vec<i64>,
    /// Squared norm of the lifted full vector.
    total2: f64,
}

/// Enumerate the tail block at `k` inside a widened radius without seeking
/// the projected minimum; instead, Babai-lift every solution through the
/// prefix and return the one whose full vector is shortest, if any beats
/// `bound2`. Also returns the node count consumed.
fn lift_sweep(
    g: &Gso,
    k: usize,
    m: usize,
    bound2: f64,
    node_budget: u64,
) -> (Option<LiftFind>, u64) {
    let mut ln_det = 0.0;
    for t in 0..m {
        ln_det += g.b[k + t].ln();
    }
    ln_det *= 0.5;
    let mf = m as f64;
    let gh2 = (2.0 / mf * (ln_gamma_half_plus_one(m) + ln_det)).exp() / std::f64::consts::PI;
    // A vector whose lift is worth keeping sits well under the full
    // lattice's Gaussian-heuristic length, and its projection is shorter
    // still — so looking past that length in the block is pure waste.
    let n = g.b.len();
    let mut ln_det_full = ln_det;
    for j in (0..k).chain(k + m..n) {
        ln_det_full += 0.5 * g.b[j].ln();
    }
    let gh2_full = (2.0 / n as f64 * (ln_gamma_half_plus_one(n) + ln_det_full)).exp()
        / std::f64::consts::PI;
    let radius2 = (SWEEP_RADIUS_FACTOR * gh2).min(gh2_full).min(bound2);
    if !(radius2 > 0.0) {
        return (None, 0);
    }
    // Square-root-shaped pruning instead of the linear profile a plain SVP
    // enumeration would use: the hunted vector behaves like a random
    // direction against this basis, so its partial norms fluctuate around
    // the linear expectation and the worst excursions concentrate in the
    // last few levels, where a partial sum has few degrees of freedom. The
    // square-root profile leaves room for exactly those excursions.
    let funnel: Vec<f64> =
        (0..m).map(|t| radius2 * ((m - t) as f64 / mf).sqrt()).collect();
    // Contiguous copies of the needed Gram-Schmidt coefficients: the hot
    // loops otherwise chase pointers through row-major nested storage.
    // over_t[u * k + j] = mu[k + u][j]: block row u against all prefix
    // directions, kept row-contiguous so a leaf can accumulate whole rows.
    let mut over_t = vec![0.0f64; m * k];
    for u in 0..m {
        over_t[u * k..(u + 1) * k].copy_from_slice(&g.mu[k + u][..k]);
    }
    // among[j * k + jj] = mu[jj][j]: prefix row jj against direction j < jj.
    let mut among = vec![0.0f64; k * k];
    for (jj, row) in g.mu.iter().enumerate().take(k) {
        for (j, &v) in row.iter().enumerate().take(jj) {
            among[j * k + jj] = v;
        }
    }
    // forecast[j]: once only levels below j remain, any walk already at this
    // accumulated norm is hopeless against the *initial* bound. Anchoring to
    // the initial bound (not the running cap) keeps a short vector's walk
    // alive no matter how tight earlier finds made the cap.
    let mut forecast = vec![0.0f64; k + 1];
    let mut acc = 0.0;
    for j in 0..=k {
        forecast[j] = bound2 - SWEEP_FORECAST * acc / 12.0;
        if j < k {
            acc += g.b[j];
        }
    }
    let mut best: Option<LiftFind> = None;
    let mut lifts: u64 = 0;
    let mut scr = LiftScratch { muw: vec![0.0; k], shifts: vec![0; k] };
    let (nodes, _) = dfs_enum(g, k, m, &funnel, bound2, node_budget, |x, cost, cap| {
        if lifts >= SWEEP_LIFT_BUDGET {
            return LeafAction::Halt;
        }
        lifts += 1;
        match babai_lift(&g.b[..k], &over_t, &among, &forecast, x, cost, cap, &mut scr) {
            Some(total2) => {
                best = Some(LiftFind { x: x.to_vec(), shifts: scr.shifts.clone(), total2 });
                LeafAction::Cap(total2 * (1.0 - 1e-9))
            }
            None => LeafAction::Keep,
        }
    });
    (best, nodes)
}

enum LeafAction {
    /// Nothing useful at this leaf; continue unchanged.
    Keep,
    /// Tighten the uniform bound to this value and continue.
    Cap(f64),
    /// Stop the search now.
    Halt,
}

/// Depth-first zigzag search over block coefficients with per-level bounds
/// `min(funnel[t], cap)`, calling `on_leaf` for every nonzero solution.
/// The running center sums are kept in a partial-sum table so a descent
/// only recomputes the entries invalidated since the last visit — levels
/// above the highest coefficient changed in between, tracked per level.
/// Returns nodes consumed and whether the node budget stopped the search.
fn dfs_enum(
    g: &Gso,
    k: usize,
    m: usize,
    funnel: &[f64],
    mut cap: f64,
    node_budget: u64,
    mut on_leaf: impl FnMut(&[i64], f64, f64) -> LeafAction,
) -> (u64, bool) {
    // within[t * m + j] = mu[k + j][k + t]: block row j against block
    // direction t, transposed so a descent reads consecutively.
    let within: Vec<f64> =
        (0..m).flat_map(|t| (0..m).map(move |j| g.mu[k + j][k + t])).collect();
    let bb: Vec<f64> = g.b[k..k + m].to_vec();
    let mut x = vec![0i64; m];
    let mut base = vec![0i64; m];
    let mut dir = vec![1i64; m];
    let mut off = vec![0i64; m];
    let mut c = vec![0.0f64; m];
    let mut rho = vec![0.0f64; m + 1];
    // sums[t][j] = -sum over u >= j of x[u] * mu[u][t], valid for j above
    // the stale bound; sums[t][m] = 0 forever.
    let mut sums = vec![0.0f64; m * (m + 1)];
    let mut stale = vec![m.max(2) - 1; m + 1];
    let mut nodes: u64 = 0;

    // The lattice is symmetric, so the top coefficient never goes negative.
    let mut t = m - 1;
    loop {
        nodes += 1;
        if nodes > node_budget {
            return (nodes, true);
        }
        let d = x[t] as f64 - c[t];
        let cost = rho[t + 1] + d * d * bb[t];
        if cost <= funnel[t].min(cap) {
            if t == 0 {
                if cost > 1e-9 {
                    match on_leaf(&x, cost, cap) {
                        LeafAction::Keep => {}
                        LeafAction::Cap(c2) => cap = c2,
                        LeafAction::Halt => return (nodes, false),
                    }
                }
                step(&mut x, &mut off, &base, &dir, 0, m);
            } else {
                rho[t] = cost;
                t -= 1;
                let from = stale[t + 1];
                let row = t * (m + 1);
                let murow = &within[t * m..t * m + m];
                let mut s = sums[row + from + 1];
                for j in (t + 1..=from).rev() {
                    s -= x[j] as f64 * murow[j];
                    sums[row + j] = s;
                }
                if stale[t + 1] > stale[t] {
                    stale[t] = stale[t + 1];
                }
                stale[t + 1] = t + 1;
                c[t] = sums[row + t + 1];
                base[t] = c[t].round() as i64;
                x[t] = base[t];
                off[t] = 0;
                dir[t] = if c[t] >= base[t] as f64 { 1 } else { -1 };
            }
        } else {
            t += 1;
            if t == m {
                break;
            }
            step(&mut x, &mut off, &base, &dir, t, m);
        }
    }
    (nodes, false)
}

/// Reusable buffers for [`babai_lift`], allocated once per block sweep.
struct LiftScratch {
    /// Projection of the current block combination on each prefix direction.
    muw: Vec<f64>,
    /// Per-row rounding shifts of the walk in progress; valid on success.
    shifts: Vec<i64>,
}

/// Nearest-plane rounding of the block combination `x` against the prefix
/// rows, carried out purely on Gram-Schmidt coefficients (`over_t` and
/// `among` as laid out in [`lift_sweep`], `b` the prefix Gram-Schmidt
/// norms). Returns the lifted squared norm if it beats `bound2`, with the
/// per-row shifts left in `scr`; aborts as soon as the accumulated norm
/// cannot.
fn babai_lift(
    b: &[f64],
    over_t: &[f64],
    among: &[f64],
    forecast: &[f64],
    x: &[i64],
    proj2: f64,
    bound2: f64,
    scr: &mut LiftScratch,
) -> Option<f64> {
    let k = b.len();
    if proj2 >= forecast[k] {
        return None;
    }
    // Primitive combinations only: the unimodular insert must not rescale.
    let mut gc = 0i64;
    for &v in x {
        gc = gcd(gc, v);
        if gc == 1 {
            break;
        }
    }
    if gc != 1 {
        return None;
    }
    // Accumulate the combination's projections on every prefix direction in
    // one batched pass of whole-row additions; computing each level's dot
    // product inside the walk instead serializes on short reductions.
    let muw = &mut scr.muw[..k];
    muw.fill(0.0);
    for (u, &xu) in x.iter().enumerate() {
        if xu != 0 {
            let xf = xu as f64;
            for (w, &mu) in muw.iter_mut().zip(&over_t[u * k..(u + 1) * k]) {
                *w += xf * mu;
            }
        }
    }
    let shifts = &mut scr.shifts[..k];
    let mut total2 = proj2;
    for j in (0..k).rev() {
        let mut cj = muw[j];
        let row = &among[j * k..(j + 1) * k];
        for (&r, &mu) in shifts[j + 1..].iter().zip(&row[j + 1..]) {
            if r != 0 {
                cj -= r as f64 * mu;
            }
        }
        let r = cj.round();
        if r.abs() > 1e15 {
            return None;
        }
        shifts[j] = r as i64;
        let frac = cj - r;
        total2 += frac * frac * b[j];
        if total2 >= bound2 || total2 >= forecast[j] {
            return None;
        }
    }
    Some(total2)
}

/// Make the lifted vector a basis row: unimodular insert of the block
/// combination at `k`, then exact subtraction of the Babai shifts.
fn apply_lift(rows: &mut [Vec<i64>], k: usize, find: &LiftFind) -> Result<(), LatticeError> {
    insert_block(rows, k, &find.x)?;
    let limit = (i64::MAX / 4) as i128;
    for j in (0..k).rev() {
        let r = find.shifts[j];
        if r == 0 {
            continue;
        }
        let (head, tail) = rows.split_at_mut(k);
        let (row_j, row_k) = (&head[j], &mut tail[0]);
        for (vk, &vj) in row_k.iter_mut().zip(row_j) {
            let v = *vk as i128 - r as i128 * vj as i128;
            if v.abs() > limit {
                return Err(LatticeError::ArithmeticOverflow);
            }
            *vk = v as i64;
        }
    }
    Ok(())
}

/// Enumeration radius for the block at `k`: strictly below the current
/// first vector (so any find is an improvement), and capped near the
/// Gaussian-heuristic estimate so hopeless wide searches are not attempted.
fn block_radius2(g: &Gso, k: usize, m: usize) -> f64 {
    let mut ln_det = 0.0;
    for t in 0..m {
        ln_det += g.b[k + t].ln();
    }
    ln_det *= 0.5;
    let mf = m as f64;
    let gh2 = (2.0 / mf * (ln_gamma_half_plus_one(m) + ln_det)).exp() / std::f64::consts::PI;
    (0.99 * g.b[k]).min(1.21 * gh2)
}

/// ln Gamma(m/2 + 1) for integer m, via factorials.
fn ln_gamma_half_plus_one(m: usize) -> f64 {
    let ln_fact = |n: usize| (1..=n).map(|k| (k as f64).ln()).sum::<f64>();
    if m % 2 == 0 {
        ln_fact(m / 2)
    } else {
        // Gamma(n + 1/2) = (2n)! sqrt(pi) / (4^n n!), with n = (m+1)/2.
        let n = (m + 1) / 2;
        ln_fact(2 * n) - n as f64 * 4.0f64.ln() - ln_fact(n)
            + 0.5 * std::f64::consts::PI.ln()
    }
}

pub(crate) enum EnumOutcome {
    /// Nonzero coefficient vector over the block rows, and its projected
    /// squared norm.
    Found { x: Vec<i64>, norm2: f64 },
    Empty,
    /// Node budget exhausted; carries the best full solution seen so far.
    Budget { best: Option<(Vec<i64>, f64)> },
}

/// Shortest-vector search in the projected block, nearest-first at every
/// level. With linear pruning the partial norm carried by the last `d`
/// coefficients is held under `radius2 * d / m`. The pruning funnel stays
/// anchored to the initial radius; a found solution only caps every level
/// uniformly at its norm (any better solution has all of its partial norms
/// below that), so the minimum inside the funnel is never pruned away by
/// earlier finds.
pub(crate) fn enumerate(
    g: &Gso,
    k: usize,
    m: usize,
    radius2: f64,
    node_budget: u64,
    linear_prune: bool,
) -> EnumOutcome {
    let funnel: Vec<f64> = (0..m)
        .map(|t| radius2 * if linear_prune { (m - t) as f64 / m as f64 } else { 1.0 })
        .collect();
    let mut best: Option<(Vec<i64>, f64)> = None;
    let (_, exhausted) = dfs_enum(g, k, m, &funnel, radius2, node_budget, |x, cost, _| {
        best = Some((x.to_vec(), cost));
        LeafAction::Cap(cost * (1.0 - 1e-9))
    });
    if exhausted {
        return EnumOutcome::Budget { best };
    }
    match best {
        Some((x, norm2)) => EnumOutcome::Found { x, norm2 },
        None => EnumOutcome::Empty,
    }
}

/// Advance level `t` to its next-nearest value: zigzag around the center,
/// except the top level which walks the nonnegative side only.
#[inline]
fn step(x: &mut [i64], off: &mut [i64], base: &[i64], dir: &[i64], t: usize, m: usize) {
    if t == m - 1 {
        x[t] += 1;
    } else {
        off[t] = if off[t] > 0 { -off[t] } else { -off[t] + 1 };
        x[t] = base[t] + dir[t] * off[t];
    }
}

/// Replace the block rows `k..k+m` by `W * rows` where `W` is unimodular
/// with first row `x / gcd(x)`: the first block row becomes the enumerated
/// vector while the generated lattice stays identical.
pub(crate) fn insert_block(
    rows: &mut [Vec<i64>],
    k: usize,
    x: &[i64],
) -> Result<(), LatticeError> {
    let m = x.len();
    let mut x = x.to_vec();
    let g = x.iter().fold(0i64, |a, &v| gcd(a, v));
    debug_assert!(g > 0, "enumeration never returns the zero vector");
    if g > 1 {
        for v in &mut x {
            *v /= g;
        }
    }
    let w = unimodular_completion(&x)?;
    let width = rows[k].len();
    let mut fresh = vec![vec![0i64; width]; m];
    for (i, wi) in w.iter().enumerate() {
        for c in 0..width {
            let mut acc: i128 = 0;
            for (j, &wij) in wi.iter().enumerate() {
                acc += wij as i128 * rows[k + j][c] as i128;
            }
            if acc.abs() > i64::MAX as i128 / 4 {
                return Err(LatticeError::ArithmeticOverflow);
            }
            fresh[i][c] = acc as i64;
        }
    }
    for (i, row) in fresh.into_iter().enumerate() {
        rows[k + i] = row;
    }
    Ok(())
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Unimodular matrix whose first row equals `x` (which must have gcd 1).
/// Column operations reduce `x` to a unit vector; their inverses, applied as
/// row operations to an identity, accumulate exactly the completion matrix.
pub(crate) fn unimodular_completion(x: &[i64]) -> Result<Vec<Vec<i64>>, LatticeError> {
    let m = x.len();
    let mut v = x.to_vec();
    let mut w: Vec<Vec<i64>> =
        (0..m).map(|i| (0..m).map(|j| i64::from(i == j)).collect()).collect();
    for j in 1..m {
        while v[j] != 0 {
            if v[0] == 0 {
                v.swap(0, j);
                w.swap(0, j);
                continue;
            }
            let t = v[j] / v[0];
            if t != 0 {
                v[j] -= t * v[0];
                let (head, tail) = w.split_at_mut(j);
                for (a, &b) in head[0].iter_mut().zip(tail[0].iter()) {
                    let acc = *a as i128 + t as i128 * b as i128;
                    if acc.abs() > i64::MAX as i128 / 4 {
                        return Err(LatticeError::ArithmeticOverflow);
                    }
                    *a = acc as i64;
                }
            }
            if v[j] != 0 {
                v.swap(0, j);
                w.swap(0, j);
            }
        }
    }
    if v[0] < 0 {
        for e in &mut w[0] {
            *e = -*e;
        }
        v[0] = -v[0];
    }
    debug_assert_eq!(v[0], 1, "caller divides by the gcd first");
    debug_assert_eq!(w[0], x, "completion must start with the target row");
    Ok(w)
}
