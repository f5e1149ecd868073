//! Regular pixel (voxel) grids in one to three dimensions.
//!
//! Pixels are enumerated with axis 0 varying fastest: in 2-D the flat index
//! of pixel `(ix, iy)` is `ix + nx * iy`, so an image is stored row by row
//! with `x` along each row.

use serde::{Deserialize, Serialize};

use crate::error::{validate, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelGrid {
    origin: Vec<f64>,
    spacing: Vec<f64>,
    shape: Vec<usize>,
}

impl PixelGrid {
    pub fn new(origin: Vec<f64>, spacing: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let grid = Self {
            origin,
            spacing,
            shape,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Square 2-D grid of unit pixels covering `[0, n] x [0, n]`.
    pub fn square(n: usize) -> Self {
        Self::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![n, n]).expect("valid square grid")
    }

    /// Grid of `shape` pixels spanning the box `[lo, hi]`.
    pub fn covering(lo: &[f64], hi: &[f64], shape: &[usize]) -> Result<Self> {
        validate(lo.len() == hi.len() && lo.len() == shape.len(), || {
            "box corners and shape must have equal length".into()
        })?;
        let spacing = lo
            .iter()
            .zip(hi)
            .zip(shape)
            .map(|((l, h), &n)| (h - l) / n as f64)
            .collect();
        Self::new(lo.to_vec(), spacing, shape.to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.origin.len();
        validate((1..=3).contains(&dim), || {
            format!("grid dimension must be 1, 2 or 3, got {dim}")
        })?;
        validate(self.spacing.len() == dim && self.shape.len() == dim, || {
            "origin, spacing and shape must have equal length".into()
        })?;
        validate(
            self.spacing.iter().all(|h| h.is_finite() && *h > 0.0),
            || "grid spacing must be strictly positive".into(),
        )?;
        validate(self.shape.iter().all(|&n| n > 0), || {
            "grid shape must be nonzero on every axis".into()
        })?;
        validate(self.origin.iter().all(|o| o.is_finite()), || {
            "grid origin must be finite".into()
        })
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn box_volume(&self) -> f64 {
        self.pixel_volume() * self.len() as f64
    }

    pub fn lower(&self) -> Vec<f64> {
        self.origin.clone()
    }

    pub fn upper(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| self.origin[k] + self.spacing[k] * self.shape[k] as f64)
            .collect()
    }

    /// Geometric center of the grid box.
    pub fn center(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| self.origin[k] + 0.5 * self.spacing[k] * self.shape[k] as f64)
            .collect()
    }

    pub fn multi_index(&self, mut i: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for (k, &n) in self.shape.iter().enumerate() {
            idx[k] = i % n;
            i /= n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for k in (0..self.dim()).rev() {
            flat = flat * self.shape[k] + idx[k];
        }
        flat
    }

    /// Center of pixel `i` along axis `k`.
    #[inline]
    pub fn axis_center(&self, k: usize, i: usize) -> f64 {
        self.origin[k] + (i as f64 + 0.5) * self.spacing[k]
    }

    pub fn pixel_center(&self, i: usize) -> Vec<f64> {
        let idx = self.multi_index(i);
        (0..self.dim()).map(|k| self.axis_center(k, idx[k])).collect()
    }

    /// All pixel centers, flattened as `len() * dim()` coordinates.
    pub fn centers(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(self.len() * d);
        for i in 0..self.len() {
            let idx = self.multi_index(i);
            for k in 0..d {
                out.push(self.axis_center(k, idx[k]));
            }
        }
        out
    }

    /// Pixel containing `x`, or `None` outside the grid box.
    ///
    /// Points on the upper face of the box are assigned to the last pixel.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = [0usize; 3];
        for k in 0..self.dim() {
            let t = (x[k] - self.origin[k]) / self.spacing[k];
            if !(t >= 0.0) || t > self.shape[k] as f64 {
                return None;
            }
            idx[k] = (t.floor() as usize).min(self.shape[k] - 1);
        }
        Some(self.flat_index(&idx[..self.dim()]))
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim()).all(|k| {
            let hi = self.origin[k] + self.spacing[k] * self.shape[k] as f64;
            x[k] >= self.origin[k] && x[k] <= hi
        })
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if dim == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: dim,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_follow_origin_and_spacing() {
        let g = PixelGrid::new(vec![-1.0, 2.0], vec![0.5, 2.0], vec![4, 3]).unwrap();
        assert_eq!(g.len(), 12);
        assert_eq!(g.pixel_volume(), 1.0);
        assert_eq!(g.pixel_center(0), vec![-0.75, 3.0]);
        assert_eq!(g.pixel_center(5), vec![-0.25, 5.0]);
        assert_eq!(g.multi_index(5), [1, 1, 0]);
        assert_eq!(g.flat_index(&[1, 1]), 5);
        assert_eq!(g.upper(), vec![1.0, 8.0]);
    }

    #[test]
    fn locate_round_trips_centers() {
        let g = PixelGrid::new(vec![0.0, 0.0, 0.0], vec![1.0, 0.5, 2.0], vec![3, 4, 2]).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.locate(&g.pixel_center(i)), Some(i));
        }
        assert_eq!(g.locate(&[3.0, 2.0, 4.0]), Some(g.len() - 1));
        assert_eq!(g.locate(&[-0.1, 0.0, 0.0]), None);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(PixelGrid::new(vec![0.0], vec![0.0], vec![3]).is_err());
        assert!(PixelGrid::new(vec![0.0; 4], vec![1.0; 4], vec![2; 4]).is_err());
        assert!(PixelGrid::new(vec![0.0, 0.0], vec![1.0], vec![2, 2]).is_err());
        assert!(PixelGrid::new(vec![0.0], vec![1.0], vec![0]).is_err());
    }
}
