//! Correlation statistics used by the per-call key extraction.

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("input vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooShort(usize),
    #[error("degenerate input: a variable has zero variance")]
    Degenerate,
}

/// Sample Pearson correlation of `x` and `y`.
///
/// Two-pass covariance formula, clamped to `[-1, 1]`. Zero variance in
/// either input is reported as [`StatsError::Degenerate`] rather than a
/// silent 0 so callers can distinguish "no linear relation" from "no
/// information".
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::TooShort(n));
    }
    let mean_x = x.iter().sum::<f64>() / n as f64;
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for i in 0..n {
        let dx = x[i] - mean_x;
        let dy = y[i] - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(StatsError::Degenerate);
    }
    Ok((cov / (var_x * var_y).sqrt()).clamp(-1.0, 1.0))
}

/// Kendall rank correlation with tie correction (the tau-b variant):
///
/// `tau_b = (c - d) / sqrt((c + d + t_x) * (c + d + t_y))`
///
/// where `c`/`d` count concordant/discordant pairs, and `t_x`/`t_y` count
/// pairs tied in exactly one of the two variables. Pairs tied in both
/// variables count in neither term. Direct O(n^2) pair enumeration; the
/// refinement step only ever sees a handful of traces, so the quadratic
/// cost is irrelevant and the implementation stays an oracle of itself.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::TooShort(n));
    }
    let mut concordant = 0u64;
    let mut discordant = 0u64;
    let mut ties_x = 0u64;
    let mut ties_y = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                ties_x += 1;
            } else if dy == 0.0 {
                ties_y += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let base = concordant + discordant;
    let denom = ((base + ties_x) as f64 * (base + ties_y) as f64).sqrt();
    if denom == 0.0 {
        return Err(StatsError::Degenerate);
    }
    Ok(((concordant as f64 - discordant as f64) / denom).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pearson_known_values() {
        assert_abs_diff_eq!(
            pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap(),
            -1.0,
            epsilon = 1e-15
        );
        // Frozen worked example: cov = 4, var_x = var_y = 5.
        assert_abs_diff_eq!(
            pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap(),
            0.8,
            epsilon = 1e-15
        );
    }

    #[test]
    fn pearson_errors() {
        assert_eq!(pearson(&[1.0], &[2.0]), Err(StatsError::TooShort(1)));
        assert_eq!(pearson(&[1.0, 2.0], &[2.0]), Err(StatsError::LengthMismatch(2, 1)));
        assert_eq!(pearson(&[3.0, 3.0], &[1.0, 2.0]), Err(StatsError::Degenerate));
    }

    #[test]
    fn kendall_known_values() {
        // Frozen worked example: c = 4, d = 0, one tie in each variable:
        // tau = 4 / sqrt(5 * 5) = 0.8.
        assert_abs_diff_eq!(
            kendall_tau_b(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 3.0]).unwrap(),
            0.8,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            kendall_tau_b(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            kendall_tau_b(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap(),
            -1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn kendall_all_tied_is_degenerate() {
        assert_eq!(kendall_tau_b(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(StatsError::Degenerate));
    }

    #[test]
    fn pairs_tied_in_both_count_in_neither() {
        // Two identical pairs: (1,1),(1,1) tie in both and are skipped;
        // the remaining comparisons drive the statistic alone.
        let x = [1.0, 1.0, 2.0];
        let y = [1.0, 1.0, 2.0];
        // pairs: (0,1) tied both; (0,2) and (1,2) concordant.
        // c = 2, d = 0, t_x = t_y = 0 -> tau = 1.
        assert_abs_diff_eq!(kendall_tau_b(&x, &y).unwrap(), 1.0, epsilon = 1e-15);
    }
}
