//! Inter-rater reliability and Likert agreement.

use super::MetricsError;

/// The five Likert points after weighting.
pub const LIKERT_VALUES: [i32; 5] = [-10, -5, 0, 5, 10];

/// ICC(2,1): two-way random effects, absolute agreement, single rater.
///
/// `ratings[case][rater]`; every row must have the same number of raters.
pub fn icc(ratings: &[Vec<f64>]) -> Result<f64, MetricsError> {
    let n = ratings.len();
    if n < 2 {
        return Err(MetricsError::Degenerate("ICC needs at least two cases"));
    }
    let k = ratings[0].len();
    if k < 2 {
        return Err(MetricsError::Degenerate("ICC needs at least two raters"));
    }
    if let Some(row) = ratings.iter().find(|r| r.len() != k) {
        return Err(MetricsError::LengthMismatch(row.len(), k));
    }
    let (nf, kf) = (n as f64, k as f64);
    let grand = ratings.iter().flatten().sum::<f64>() / (nf * kf);
    let sst: f64 = ratings.iter().flatten().map(|x| (x - grand).powi(2)).sum();
    if sst == 0.0 {
        return Err(MetricsError::Degenerate("zero total variance"));
    }
    let ssr: f64 = ratings
        .iter()
        .map(|row| (row.iter().sum::<f64>() / kf - grand).powi(2))
        .sum::<f64>()
        * kf;
    let ssc: f64 = (0..k)
        .map(|j| (ratings.iter().map(|row| row[j]).sum::<f64>() / nf - grand).powi(2))
        .sum::<f64>()
        * nf;
    let sse = (sst - ssr - ssc).max(0.0);
    let msr = ssr / (nf - 1.0);
    let msc = ssc / (kf - 1.0);
    let mse = sse / ((nf - 1.0) * (kf - 1.0));
    Ok((msr - mse) / (msr + (kf - 1.0) * mse + kf * (msc - mse) / nf))
}

/// Fraction of Likert values at "agree" (5) or "strongly agree" (10).
pub fn agreement_ratio(values: &[i32]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(v) = values.iter().find(|v| !LIKERT_VALUES.contains(v)) {
        return Err(MetricsError::InvalidValue(format!("likert value {v}")));
    }
    Ok(values.iter().filter(|&&v| v >= 5).count() as f64 / values.len() as f64)
}
