//! Exact-arithmetic oracles and basis generators shared by the integration
//! tests. Everything here is deliberately independent of the crate's own
//! reduction code paths.

#![allow(dead_code)]

use kyber_sca::rng::{stream, Stream};
use num_bigint::{BigInt, Sign};
use rand::RngCore;

fn is_zero(v: &BigInt) -> bool {
    v.sign() == Sign::NoSign
}

/// Row-style Hermite normal form over exact integers: upper triangular,
/// positive pivots, entries above a pivot reduced into `[0, pivot)`. Two
/// integer row bases generate the same lattice iff their HNFs are equal.
/// Intended for small dimensions; cost grows quickly.
pub fn hnf(rows: &[Vec<i64>]) -> Vec<Vec<BigInt>> {
    let n = rows.len();
    let m = rows[0].len();
    let mut a: Vec<Vec<BigInt>> =
        rows.iter().map(|r| r.iter().map(|&v| BigInt::from(v)).collect()).collect();
    let mut pivot_row = 0usize;
    for col in 0..m {
        if pivot_row == n {
            break;
        }
        loop {
            let mut best: Option<usize> = None;
            for r in pivot_row..n {
                if !is_zero(&a[r][col])
                    && best.map_or(true, |b: usize| a[r][col].magnitude() < a[b][col].magnitude())
                {
                    best = Some(r);
                }
            }
            let Some(b) = best else { break };
            a.swap(pivot_row, b);
            let mut live = false;
            for r in pivot_row + 1..n {
                if is_zero(&a[r][col]) {
                    continue;
                }
                let q = &a[r][col] / &a[pivot_row][col];
                if !is_zero(&q) {
                    for c in 0..m {
                        let t = &a[pivot_row][c] * &q;
                        a[r][c] -= t;
                    }
                }
                live |= !is_zero(&a[r][col]);
            }
            if !live {
                break;
            }
        }
        if is_zero(&a[pivot_row][col]) {
            continue;
        }
        if a[pivot_row][col].sign() == Sign::Minus {
            for c in 0..m {
                a[pivot_row][c] = -a[pivot_row][c].clone();
            }
        }
        for r in 0..pivot_row {
            let p = a[pivot_row][col].clone();
            let q = floor_div(&a[r][col], &p);
            if !is_zero(&q) {
                for c in 0..m {
                    let t = &a[pivot_row][c] * &q;
                    a[r][c] -= t;
                }
            }
        }
        pivot_row += 1;
    }
    a
}

fn floor_div(a: &BigInt, b: &BigInt) -> BigInt {
    let q = a / b;
    if (a - &q * b).sign() == Sign::Minus {
        q - 1
    } else {
        q
    }
}

/// Exact integer determinant by fraction-free elimination; i128 limits this
/// to small matrices with modest entries.
pub fn bareiss_det(m: &[Vec<i64>]) -> i128 {
    let n = m.len();
    let mut a: Vec<Vec<i128>> =
        m.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if a[k][k] == 0 {
            let Some(s) = (k + 1..n).find(|&s| a[s][k] != 0) else {
                return 0;
            };
            a.swap(k, s);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
            a[i][k] = 0;
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}

pub fn rng(seed: u64) -> Stream {
    stream(seed)
}

/// Random full-rank integer basis: uniform entries plus a dominant diagonal.
pub fn random_basis(dim: usize, seed: u64, spread: i64) -> Vec<Vec<i64>> {
    let mut r = rng(seed);
    (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    let v = (r.next_u64() % (2 * spread as u64 + 1)) as i64 - spread;
                    if i == j {
                        v + 6 * spread
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect()
}

/// Scramble a basis with random elementary row operations (add a small
/// multiple of another row, swap, negate): the lattice is unchanged.
pub fn unimodular_scramble(rows: &mut [Vec<i64>], seed: u64, ops: usize) {
    let n = rows.len();
    let mut r = rng(seed);
    for _ in 0..ops {
        let i = (r.next_u64() % n as u64) as usize;
        let j = (r.next_u64() % n as u64) as usize;
        match r.next_u64() % 4 {
            0 if i != j => rows.swap(i, j),
            1 => {
                for v in &mut rows[i] {
                    *v = -*v;
                }
            }
            _ if i != j => {
                let c = (r.next_u64() % 5) as i64 - 2;
                if c != 0 {
                    let (a, b) = if i < j {
                        let (h, t) = rows.split_at_mut(j);
                        (&mut h[i], &t[0])
                    } else {
                        let (h, t) = rows.split_at_mut(i);
                        (&mut t[0], &h[j])
                    };
                    for (x, &y) in a.iter_mut().zip(b.iter()) {
                        *x += c * y;
                    }
                }
            }
            _ => {}
        }
    }
}
