//! Density estimates on a pixel grid and their file formats.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PixelGrid;

/// Nonnegative pixel values integrating to one over the grid box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: PixelGrid,
    pub values: Vec<f64>,
}

impl DensityEstimate {
    /// Wraps values without renormalizing them.
    pub fn new(grid: PixelGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.pixel_volume()
    }

    /// Value of the pixel containing `x`, or `None` outside the grid box.
    pub fn value_at(&self, x: &[f64]) -> Option<f64> {
        self.grid.locate(x).map(|i| self.values[i])
    }

    /// One line per row of pixels along axis 0, comma separated.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = std::io::BufWriter::new(w);
        let nx = self.grid.shape()[0];
        for line in self.values.chunks(nx) {
            let fields: Vec<String> = line.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", fields.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads values written by [`DensityEstimate::write_csv`] for `grid`.
    pub fn read_csv<R: std::io::Read>(r: R, grid: PixelGrid) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for line in std::io::BufReader::new(r).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            for f in line.split(',') {
                values.push(
                    f.trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad value {f:?}")))?,
                );
            }
        }
        Self::new(grid, values)
    }

    /// Binary 8-bit PGM with values mapped linearly from [min, max] to
    /// [0, 255]. Rows are written top to bottom, so the last pixel row along
    /// axis 1 comes first. Only 2-D grids are supported.
    pub fn write_pgm<W: Write>(&self, w: W) -> Result<()> {
        if self.grid.dim() != 2 {
            return Err(Error::Unsupported("PGM output needs a 2-D grid".into()));
        }
        let (nx, ny) = (self.grid.shape()[0], self.grid.shape()[1]);
        let lo = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let mut w = std::io::BufWriter::new(w);
        write!(w, "P5\n{nx} {ny}\n255\n")?;
        let mut row = vec![0u8; nx];
        for iy in (0..ny).rev() {
            for (ix, px) in row.iter_mut().enumerate() {
                let v = self.values[ix + nx * iy];
                *px = if span > 0.0 {
                    ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
                } else {
                    0
                };
            }
            w.write_all(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_pgm(std::fs::File::create(path)?)
    }
}
