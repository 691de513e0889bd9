//! Hypothesis tests.

use serde::{Deserialize, Serialize};

use super::special::{normal_cdf, student_t_two_sided};
use super::MetricsError;

/// Sample mean and (n - 1) standard deviation; SD is 0 for a single value.
pub fn mean_sd(values: &[f64]) -> Result<(f64, f64), MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

/// Two-sided paired t-test p-value.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricsError::Degenerate("paired t-test needs at least two pairs"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, sd) = mean_sd(&diffs)?;
    if sd == 0.0 || !sd.is_finite() {
        return Err(MetricsError::Degenerate("zero-variance differences"));
    }
    let n = diffs.len() as f64;
    let t = mean / (sd / n.sqrt());
    Ok(student_t_two_sided(t, n - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample (pairs where a > b, ties count half).
    pub u: f64,
    pub p: f64,
    pub exact: bool,
}

/// Largest combined sample size handled by exact enumeration.
const EXACT_MAX_N: usize = 12;

/// Midranks (1-based) of `values`.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Number of arrangements giving each U value for sample sizes (n1, n2),
/// via the recurrence on the position of the largest observation.
fn u_distribution(n1: usize, n2: usize) -> Vec<u64> {
    // table[i][j] = counts for sizes (i, j)
    let mut table: Vec<Vec<Vec<u64>>> = vec![vec![Vec::new(); n2 + 1]; n1 + 1];
    for i in 0..=n1 {
        for j in 0..=n2 {
            let mut counts = vec![0u64; i * j + 1];
            if i == 0 || j == 0 {
                counts[0] = 1;
            } else {
                for (u, c) in table[i - 1][j].iter().enumerate() {
                    counts[u + j] += c;
                }
                for (u, c) in table[i][j - 1].iter().enumerate() {
                    counts[u] += c;
                }
            }
            table[i][j] = counts;
        }
    }
    std::mem::take(&mut table[n1][n2])
}

struct RankSums {
    u: f64,
    tie_term: f64,
    has_ties: bool,
}

fn rank_sums(a: &[f64], b: &[f64]) -> Result<RankSums, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n1 = a.len();
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&all);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;

    let mut sorted = all;
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut has_ties = false;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        if t > 1.0 {
            has_ties = true;
            tie_term += t * t * t - t;
        }
        i = j + 1;
    }
    Ok(RankSums { u, tie_term, has_ties })
}

/// Two-sided Mann-Whitney U test.
///
/// Exact when the combined size is at most 12 and there are no ties;
/// otherwise [`mann_whitney_normal`].
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<MannWhitney, MetricsError> {
    let sums = rank_sums(a, b)?;
    let (n1, n2) = (a.len(), b.len());
    if !sums.has_ties && n1 + n2 <= EXACT_MAX_N {
        let dist = u_distribution(n1, n2);
        let total: u64 = dist.iter().sum();
        let k = sums.u.round() as usize;
        let lower: u64 = dist[..=k].iter().sum();
        let upper: u64 = dist[k..].iter().sum();
        let p = (2.0 * lower.min(upper) as f64 / total as f64).min(1.0);
        return Ok(MannWhitney { u: sums.u, p, exact: true });
    }
    normal_from(&sums, n1, n2)
}

/// Two-sided Mann-Whitney U test by normal approximation, with tie and
/// continuity corrections, at any sample size.
pub fn mann_whitney_normal(a: &[f64], b: &[f64]) -> Result<MannWhitney, MetricsError> {
    normal_from(&rank_sums(a, b)?, a.len(), b.len())
}

fn normal_from(sums: &RankSums, n1: usize, n2: usize) -> Result<MannWhitney, MetricsError> {
    let u = sums.u;
    let n = (n1 + n2) as f64;
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let mu = n1f * n2f / 2.0;
    let var = n1f * n2f / 12.0 * ((n + 1.0) - sums.tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return Ok(MannWhitney { u, p: 1.0, exact: false });
    }
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    let p = (2.0 * (1.0 - normal_cdf(z))).min(1.0);
    Ok(MannWhitney { u, p, exact: false })
}
