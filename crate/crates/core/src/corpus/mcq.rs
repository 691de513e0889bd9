//! Multiple-choice option construction.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::CorpusError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mcq {
    pub options: Vec<String>,
    pub answer_index: usize,
}

impl Mcq {
    pub fn answer(&self) -> &str {
        &self.options[self.answer_index]
    }
}

/// Builds `k` distinct options with `correct` at a uniformly random slot.
///
/// Distractors are drawn without replacement from the distinct pool entries
/// that differ from `correct`.
pub fn make_mcq<R: Rng + ?Sized>(
    correct: &str,
    pool: &[impl AsRef<str>],
    k: usize,
    rng: &mut R,
) -> Result<Mcq, CorpusError> {
    if k < 2 {
        return Err(CorpusError::BadOptionCount(k));
    }
    let mut candidates: Vec<&str> = Vec::new();
    for p in pool {
        let p = p.as_ref();
        if p != correct && !candidates.contains(&p) {
            candidates.push(p);
        }
    }
    if candidates.len() < k - 1 {
        return Err(CorpusError::InsufficientPool {
            needed: k - 1,
            available: candidates.len(),
        });
    }
    let mut options: Vec<String> = candidates
        .choose_multiple(rng, k - 1)
        .map(|s| s.to_string())
        .collect();
    options.shuffle(rng);
    let answer_index = rng.random_range(0..k);
    options.insert(answer_index, correct.to_string());
    Ok(Mcq { options, answer_index })
}

/// Renders options as `(A) first (B) second ...`.
pub fn render_options(options: &[String]) -> String {
    options
        .iter()
        .enumerate()
        .map(|(i, o)| format!("({}) {}", (b'A' + i as u8) as char, o))
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Finding;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn yes_no_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = make_mcq("Yes", &["No"], 2, &mut rng).unwrap();
        let mut sorted = m.options.clone();
        sorted.sort();
        assert_eq!(sorted, vec!["No", "Yes"]);
        assert_eq!(m.answer(), "Yes");
    }

    #[test]
    fn four_findings() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pool: Vec<&str> = Finding::ALL
            .iter()
            .filter(|f| !matches!(f, Finding::NoFinding | Finding::Pneumonia))
            .map(|f| f.name())
            .collect();
        assert_eq!(pool.len(), 12);
        let m = make_mcq("pneumonia", &pool, 4, &mut rng).unwrap();
        assert_eq!(m.options.len(), 4);
        assert_eq!(m.options.iter().filter(|o| *o == "pneumonia").count(), 1);
        let mut dedup = m.options.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 4);
    }

    #[test]
    fn insufficient_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = make_mcq("a", &["b", "c"], 4, &mut rng).unwrap_err();
        assert!(matches!(err, CorpusError::InsufficientPool { needed: 3, available: 2 }));
        // duplicates and the correct answer do not count
        assert!(make_mcq("a", &["a", "b", "b"], 3, &mut rng).is_err());
        assert!(make_mcq("a", &["b"], 1, &mut rng).is_err());
    }

    #[test]
    fn render() {
        assert_eq!(render_options(&["Yes".into(), "No".into()]), "(A) Yes (B) No");
    }
}
