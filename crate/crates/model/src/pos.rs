//! Resampling learned positional embeddings to a new patch grid.

use crate::{ModelError, Result};

/// Bilinearly resizes a row-major `(h * w, dim)` table to `(h2 * w2, dim)`.
///
/// Corner cells map onto corner cells, so a same-size resize is the identity.
pub fn resize_pos_embed(
    table: &[f32],
    from: (usize, usize),
    dim: usize,
    to: (usize, usize),
) -> Result<Vec<f32>> {
    let (h, w) = from;
    let (h2, w2) = to;
    if h == 0 || w == 0 || h2 == 0 || w2 == 0 || dim == 0 {
        return Err(ModelError::Config("grid and dim must be non-zero".into()));
    }
    if table.len() != h * w * dim {
        return Err(ModelError::Config(format!(
            "table has {} values, expected {}",
            table.len(),
            h * w * dim
        )));
    }
    let coord = |i: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        if n_out == 1 || n_in == 1 {
            return (0, 0, 0.0);
        }
        let x = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let lo = (x.floor() as usize).min(n_in - 1);
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, x - lo as f64)
    };
    let at = |r: usize, c: usize, k: usize| table[(r * w + c) * dim + k] as f64;
    let mut out = Vec::with_capacity(h2 * w2 * dim);
    for r in 0..h2 {
        let (r0, r1, fr) = coord(r, h2, h);
        for c in 0..w2 {
            let (c0, c1, fc) = coord(c, w2, w);
            for k in 0..dim {
                let top = at(r0, c0, k) * (1.0 - fc) + at(r0, c1, k) * fc;
                let bottom = at(r1, c0, k) * (1.0 - fc) + at(r1, c1, k) * fc;
                out.push((top * (1.0 - fr) + bottom * fr) as f32);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_to_three_by_three() {
        let out = resize_pos_embed(&[0.0, 1.0, 2.0, 3.0], (2, 2), 1, (3, 3)).unwrap();
        assert_eq!(out, vec![0.0, 0.5, 1.0, 1.0, 1.5, 2.0, 2.0, 2.5, 3.0]);
    }

    #[test]
    fn same_size_is_identity() {
        let table: Vec<f32> = (0..4 * 3 * 5).map(|i| (i as f32).sin()).collect();
        assert_eq!(resize_pos_embed(&table, (4, 3), 5, (4, 3)).unwrap(), table);
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(resize_pos_embed(&[0.0; 3], (2, 2), 1, (3, 3)).is_err());
    }
}
