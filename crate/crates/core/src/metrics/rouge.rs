//! ROUGE-L over whitespace tokens.

/// Length of the longest common subsequence, two-row dynamic program.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure (beta = 1) over lowercased whitespace tokens.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let cand = candidate.to_lowercase();
    let refr = reference.to_lowercase();
    let c: Vec<&str> = cand.split_whitespace().collect();
    let r: Vec<&str> = refr.split_whitespace().collect();
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&c, &r);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / c.len() as f64;
    let rec = lcs as f64 / r.len() as f64;
    2.0 * p * rec / (p + rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cases() {
        assert_eq!(rouge_l("Clear lungs.", "clear lungs."), 1.0);
        let v = rouge_l("no acute findings", "acute cardiopulmonary findings");
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge_l("alpha beta", "gamma delta"), 0.0);
        assert_eq!(rouge_l("", "x"), 0.0);
        assert_eq!(rouge_l("x", "   "), 0.0);
    }
}
