//! Image lookup by id, decoded to grayscale `[0, 1]` buffers and cached.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use crate::{ModelError, Result};

pub struct ImageStore {
    paths: BTreeMap<String, PathBuf>,
    size: (usize, usize),
    cache: Mutex<HashMap<String, Arc<Vec<f32>>>>,
}

impl ImageStore {
    /// `size` is `(height, width)`; images of any other size are rejected.
    pub fn new(paths: BTreeMap<String, PathBuf>, size: (usize, usize)) -> Self {
        Self {
            paths,
            size,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Every `*.png` in `dir`, keyed by file stem.
    pub fn from_dir(dir: &Path, size: (usize, usize)) -> Result<Self> {
        let mut paths = BTreeMap::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    paths.insert(stem.to_string(), path.clone());
                }
            }
        }
        Ok(Self::new(paths, size))
    }

    pub fn size(&self) -> (usize, usize) {
        self.size
    }

    pub fn contains(&self, id: &str) -> bool {
        self.paths.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn load(&self, id: &str) -> Result<Arc<Vec<f32>>> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(id) {
            return Ok(hit.clone());
        }
        let path = self
            .paths
            .get(id)
            .ok_or_else(|| ModelError::UnknownImage(id.to_string()))?;
        let img = image::open(path)?.to_luma8();
        let got = (img.height() as usize, img.width() as usize);
        if got != self.size {
            return Err(ModelError::Resolution {
                expected: self.size,
                got,
            });
        }
        let px = Arc::new(img.into_raw().into_iter().map(|v| v as f32 / 255.0).collect::<Vec<_>>());
        self.cache
            .lock()
            .expect("cache lock")
            .insert(id.to_string(), px.clone());
        Ok(px)
    }
}
