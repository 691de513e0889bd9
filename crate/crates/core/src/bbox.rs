//! Axis-aligned boxes in normalized integer coordinates.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Upper bound of the normalized coordinate range.
pub const COORD_MAX: i32 = 100;

/// Rectangle `[x1, x2) x [y1, y2)` with integer corners in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i32; 4]", into = "[i32; 4]")]
pub struct BBox {
    x1: i32,
    y1: i32,
    x2: i32,
    y2: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid box [{0},{1},{2},{3}]: need 0 <= x1 < x2 <= 100 and 0 <= y1 < y2 <= 100")]
pub struct InvalidBox(pub i32, pub i32, pub i32, pub i32);

impl BBox {
    pub fn new(x1: i32, y1: i32, x2: i32, y2: i32) -> Result<Self, InvalidBox> {
        let in_range = |v: i32| (0..=COORD_MAX).contains(&v);
        if [x1, y1, x2, y2].into_iter().all(in_range) && x1 < x2 && y1 < y2 {
            Ok(Self { x1, y1, x2, y2 })
        } else {
            Err(InvalidBox(x1, y1, x2, y2))
        }
    }

    /// Converts an inclusive pixel-space bounding rectangle of a `width x height`
    /// image into the smallest normalized box covering it.
    pub fn from_pixel_bounds(
        min_x: u32,
        min_y: u32,
        max_x: u32,
        max_y: u32,
        width: u32,
        height: u32,
    ) -> Result<Self, InvalidBox> {
        let lo = |p: u32, extent: u32| (p as i64 * COORD_MAX as i64 / extent as i64) as i32;
        let hi = |p: u32, extent: u32| {
            let num = (p as i64 + 1) * COORD_MAX as i64;
            ((num + extent as i64 - 1) / extent as i64) as i32
        };
        Self::new(
            lo(min_x, width),
            lo(min_y, height),
            hi(max_x, width),
            hi(max_y, height),
        )
    }

    pub fn x1(&self) -> i32 {
        self.x1
    }
    pub fn y1(&self) -> i32 {
        self.y1
    }
    pub fn x2(&self) -> i32 {
        self.x2
    }
    pub fn y2(&self) -> i32 {
        self.y2
    }

    pub fn area(&self) -> i64 {
        (self.x2 - self.x1) as i64 * (self.y2 - self.y1) as i64
    }

    pub fn intersection_area(&self, other: &BBox) -> i64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0 || h <= 0 {
            0
        } else {
            w as i64 * h as i64
        }
    }

    /// Text form used inside model responses, e.g. `[10,20,30,40]`.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{},{}]", self.x1, self.y1, self.x2, self.y2)
    }
}

impl TryFrom<[i32; 4]> for BBox {
    type Error = InvalidBox;
    fn try_from(v: [i32; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [i32; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_and_out_of_range() {
        assert!(BBox::new(10, 10, 10, 20).is_err());
        assert!(BBox::new(0, 0, 101, 20).is_err());
        assert!(BBox::new(-1, 0, 5, 5).is_err());
        assert!(BBox::new(0, 0, 100, 100).is_ok());
    }

    #[test]
    fn pixel_bounds_cover_the_pixels() {
        // pixels 16..=31 of 64 map to [25, 50)
        let b = BBox::from_pixel_bounds(16, 0, 31, 63, 64, 64).unwrap();
        assert_eq!(<[i32; 4]>::from(b), [25, 0, 50, 100]);
    }

    #[test]
    fn serde_as_array() {
        let b = BBox::new(1, 2, 3, 4).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, "[1,2,3,4]");
        assert!(serde_json::from_str::<BBox>("[3,2,1,4]").is_err());
    }
}
