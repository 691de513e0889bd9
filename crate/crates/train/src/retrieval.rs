//! Image-to-text retrieval over fixed-size candidate pools.

use cxr_model::{Model, Tokenizer};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ImageText;
use crate::{Result, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub top1: f64,
    pub hits: usize,
    pub queries: usize,
    pub pools: usize,
    pub pool_size: usize,
    /// Expected top-1 of a random ranker, accounting for duplicate texts.
    pub chance: f64,
}

/// Shuffles `pairs` into pools of `pool_size` (the remainder that does not
/// fill a pool is dropped, unless there are fewer pairs than one pool) and
/// ranks each pool's texts for each of its images by cosine similarity. A
/// query counts as a hit when the top-ranked text equals its own text.
pub fn retrieval_top1(model: &Model, pairs: &[ImageText], pool_size: usize, seed: u64) -> Result<RetrievalResult> {
    if pairs.is_empty() || pool_size == 0 {
        return Err(TrainError::EmptyData);
    }
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let size = pool_size.min(pairs.len());
    let pools: Vec<&[usize]> = idx.chunks_exact(size).collect();
    let (mut hits, mut queries, mut chance) = (0, 0, 0.0);
    for pool in &pools {
        let imgs: Vec<&[f32]> = pool.iter().map(|&i| pairs[i].image.as_slice()).collect();
        let texts: Vec<Vec<u32>> = pool.iter().map(|&i| Tokenizer.encode(&pairs[i].text)).collect();
        let img = model.image_embedding(&model.encode_image(&model.pixels(&imgs)?)?)?.detach();
        let txt = model.text_embedding(&texts)?.detach();
        let sims = img
            .matmul(&txt.t()?)?
            .to_dtype(candle_core::DType::F32)?
            .to_vec2::<f32>()?;
        for (q, row) in sims.iter().enumerate() {
            let mut best = 0;
            for (j, &s) in row.iter().enumerate() {
                if s > row[best] {
                    best = j;
                }
            }
            let own = &pairs[pool[q]].text;
            if &pairs[pool[best]].text == own {
                hits += 1;
            }
            let same = pool.iter().filter(|&&j| &pairs[j].text == own).count();
            chance += same as f64 / pool.len() as f64;
            queries += 1;
        }
    }
    Ok(RetrievalResult {
        top1: hits as f64 / queries as f64,
        hits,
        queries,
        pools: pools.len(),
        pool_size: size,
        chance: chance / queries as f64,
    })
}
