//! Grey-scale image grids with pixel values in [0,1].

use crate::error::{CoreError, Result};
use rand::Rng;

/// A d1 x d2 matrix of pixel values in [0,1].
///
/// The pixel at 1-based position `(i, j)`, `i` in `1..=d1`, `j` in `1..=d2`,
/// is stored at linear index `(i-1)*d2 + (j-1)` (first index varies slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    d1: usize,
    d2: usize,
    pixels: Vec<f64>,
}

impl ImageGrid {
    /// Validates dimensions and the [0,1] pixel range. Out-of-range pixels
    /// are rejected, not clamped.
    pub fn new(d1: usize, d2: usize, pixels: Vec<f64>) -> Result<Self> {
        if d1 == 0 || d2 == 0 {
            return Err(CoreError::Shape(format!("image dims must be >= 1, got {d1}x{d2}")));
        }
        if pixels.len() != d1 * d2 {
            return Err(CoreError::Shape(format!(
                "expected {} pixels for a {}x{} image, got {}",
                d1 * d2,
                d1,
                d2,
                pixels.len()
            )));
        }
        for (idx, &p) in pixels.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(CoreError::Domain(format!(
                    "pixel {idx} = {p} outside [0,1]"
                )));
            }
        }
        Ok(Self { d1, d2, pixels })
    }

    pub fn from_fn(d1: usize, d2: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(d1 * d2);
        for i in 1..=d1 {
            for j in 1..=d2 {
                pixels.push(f(i, j));
            }
        }
        Self::new(d1, d2, pixels)
    }

    /// Uniform iid pixels in [0,1].
    pub fn random(d1: usize, d2: usize, rng: &mut impl Rng) -> Self {
        let pixels = (0..d1 * d2).map(|_| rng.gen::<f64>()).collect();
        Self { d1, d2, pixels }
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    /// Pixel at 1-based (i, j).
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(1 <= i && i <= self.d1 && 1 <= j && j <= self.d2);
        self.pixels[(i - 1) * self.d2 + (j - 1)]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// Extract the square sub-grid of side `side` whose top-left corner sits
    /// at 1-based (i0, j0), as a side x side patch.
    pub fn window(&self, i0: usize, j0: usize, side: usize) -> Result<Vec<f64>> {
        if i0 + side - 1 > self.d1 || j0 + side - 1 > self.d2 {
            return Err(CoreError::Shape(format!(
                "window {side}x{side} at ({i0},{j0}) exceeds {}x{} image",
                self.d1, self.d2
            )));
        }
        let mut out = Vec::with_capacity(side * side);
        for a in 0..side {
            for b in 0..side {
                out.push(self.get(i0 + a, j0 + b));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(ImageGrid::new(1, 2, vec![0.5, 1.2]).is_err());
        assert!(ImageGrid::new(1, 2, vec![-0.1, 0.5]).is_err());
        assert!(ImageGrid::new(1, 2, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn rejects_empty_dims_and_bad_lengths() {
        assert!(ImageGrid::new(0, 2, vec![]).is_err());
        assert!(ImageGrid::new(2, 2, vec![0.1; 3]).is_err());
    }

    #[test]
    fn indexing_is_first_index_slowest() {
        let g = ImageGrid::new(2, 3, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        assert_eq!(g.get(1, 1), 0.0);
        assert_eq!(g.get(1, 3), 0.2);
        assert_eq!(g.get(2, 1), 0.3);
        assert_eq!(g.get(2, 3), 0.5);
    }
}
