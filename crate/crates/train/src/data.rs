//! Stage inputs and seed-determined batching.

use std::collections::BTreeMap;
use std::sync::Arc;

use cxr_model::SeqExample;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::stage::Stage;
use crate::{Result, TrainError};

#[derive(Debug, Clone)]
pub struct ImageText {
    pub image: Arc<Vec<f32>>,
    pub text: String,
}

/// Training data for one stage.
#[derive(Debug, Clone)]
pub enum StageData {
    /// Plain text for decoder pretraining; every token is a target.
    Documents(Vec<String>),
    /// Matched image/report pairs for contrastive pretraining.
    Pairs(Vec<ImageText>),
    /// Image-prefixed instruction sequences with response-only targets.
    Sequences(Vec<SeqExample>),
}

impl StageData {
    pub fn len(&self) -> usize {
        match self {
            StageData::Documents(d) => d.len(),
            StageData::Pairs(p) => p.len(),
            StageData::Sequences(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn kind(&self) -> &'static str {
        match self {
            StageData::Documents(_) => "documents",
            StageData::Pairs(_) => "pairs",
            StageData::Sequences(_) => "sequences",
        }
    }

    pub(crate) fn check_for(&self, stage: Stage) -> Result<()> {
        let ok = matches!(
            (stage, self),
            (Stage::LmPretrain, StageData::Documents(_))
                | (Stage::Contrastive, StageData::Pairs(_))
                | (Stage::Align | Stage::Instruct, StageData::Sequences(_))
        );
        if !ok {
            return Err(TrainError::DataMismatch { stage, got: self.kind() });
        }
        if self.is_empty() {
            return Err(TrainError::EmptyData);
        }
        Ok(())
    }

    /// Items that may share a batch get the same key (sequences need equal
    /// image counts to share an image prefix length).
    fn group_key(&self, i: usize) -> usize {
        match self {
            StageData::Sequences(s) => s[i].images.len(),
            _ => 0,
        }
    }

    /// Shuffled batches of at most `batch` items, grouped by key, with the
    /// batch order shuffled too.
    pub fn batches(&self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in idx {
            groups.entry(self.group_key(i)).or_default().push(i);
        }
        let mut out: Vec<Vec<usize>> = groups
            .values()
            .flat_map(|g| g.chunks(batch.max(1)).map(<[usize]>::to_vec))
            .collect();
        out.shuffle(rng);
        out
    }

    /// Number of micro-batches `batches` will produce.
    pub fn num_batches(&self, batch: usize) -> usize {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for i in 0..self.len() {
            *counts.entry(self.group_key(i)).or_default() += 1;
        }
        counts.values().map(|n| n.div_ceil(batch.max(1))).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn seqs() -> StageData {
        let img = Arc::new(vec![0.0f32; 4]);
        let mut v = Vec::new();
        for i in 0..7 {
            let images = if i % 3 == 0 { vec![img.clone(), img.clone()] } else { vec![img.clone()] };
            v.push(SeqExample::instruct(images, "q", "a"));
        }
        StageData::Sequences(v)
    }

    #[test]
    fn batches_cover_everything_once_and_never_mix_image_counts() {
        let d = seqs();
        let b = d.batches(2, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(b.len(), d.num_batches(2));
        let mut all: Vec<usize> = b.iter().flatten().copied().collect();
        all.sort();
        assert_eq!(all, (0..7).collect::<Vec<_>>());
        let StageData::Sequences(s) = &d else { unreachable!() };
        for batch in &b {
            assert!(batch.iter().all(|&i| s[i].images.len() == s[batch[0]].images.len()));
        }
        assert_eq!(b, d.batches(2, &mut ChaCha8Rng::seed_from_u64(1)));
    }

    #[test]
    fn stage_kind_checked() {
        let d = StageData::Documents(vec!["x".into()]);
        assert!(d.check_for(Stage::LmPretrain).is_ok());
        assert!(matches!(d.check_for(Stage::Align), Err(TrainError::DataMismatch { .. })));
        assert!(matches!(StageData::Documents(vec![]).check_for(Stage::LmPretrain), Err(TrainError::EmptyData)));
    }
}
