//! Comparison estimators: Gaussian kernel density estimation and the
//! sinc-smoothed projection method reconstructed by filtered backprojection.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{validate, Error, Result};
use crate::estimate::DensityEstimate;
use crate::grid::PixelGrid;
use crate::pointcloud::{relative_error, PointCloud};
use crate::solver::normalize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Bandwidth {
    /// `h_k = factor * sigma_k * m^(-1/(n+4))` per axis.
    RuleOfThumb { factor: f64 },
    Fixed { h: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdeConfig {
    pub bandwidth: Bandwidth,
}

impl Default for KdeConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::RuleOfThumb { factor: 1.0 },
        }
    }
}

/// Per-axis bandwidths. Axes with zero spread fall back to the pixel size.
pub fn kde_bandwidths(cloud: &PointCloud, grid: &PixelGrid, cfg: &KdeConfig) -> Result<Vec<f64>> {
    let n = cloud.dim();
    match cfg.bandwidth {
        Bandwidth::Fixed { h } => {
            validate(h.is_finite() && h > 0.0, || "bandwidth must be positive".into())?;
            Ok(vec![h; n])
        }
        Bandwidth::RuleOfThumb { factor } => {
            validate(factor.is_finite() && factor > 0.0, || {
                "bandwidth factor must be positive".into()
            })?;
            let m = cloud.len() as f64;
            let mean = cloud.mean();
            let shrink = m.powf(-1.0 / (n as f64 + 4.0));
            Ok((0..n)
                .map(|k| {
                    let var = if cloud.len() > 1 {
                        cloud.iter().map(|p| (p[k] - mean[k]).powi(2)).sum::<f64>() / (m - 1.0)
                    } else {
                        0.0
                    };
                    let sigma = var.sqrt();
                    if sigma > 0.0 {
                        factor * sigma * shrink
                    } else {
                        grid.spacing()[k]
                    }
                })
                .collect())
        }
    }
}

/// Gaussian kernel density estimate evaluated at the pixel centers.
pub fn kde(cloud: &PointCloud, grid: &PixelGrid, cfg: &KdeConfig) -> Result<DensityEstimate> {
    grid.check_dim(cloud.dim())?;
    if cloud.is_empty() {
        return Err(Error::DegenerateInput("KDE needs at least one point".into()));
    }
    let h = kde_bandwidths(cloud, grid, cfg)?;
    let d = grid.dim();
    let shape = grid.shape().to_vec();
    let m = cloud.len() as f64;
    // The kernel is a product over axes, so each point contributes an outer
    // product of 1-D Gaussian profiles.
    let norm: f64 = h.iter().map(|hk| 1.0 / ((2.0 * PI).sqrt() * hk)).product::<f64>() / m;
    let chunks: Vec<Vec<f64>> = cloud
        .coords()
        .par_chunks(d * 256)
        .map(|block| {
            let mut acc = vec![0.0; grid.len()];
            let mut prof: Vec<Vec<f64>> = shape.iter().map(|&s| vec![0.0; s]).collect();
            for p in block.chunks_exact(d) {
                for k in 0..d {
                    for (i, v) in prof[k].iter_mut().enumerate() {
                        let z = (grid.axis_center(k, i) - p[k]) / h[k];
                        *v = (-0.5 * z * z).exp();
                    }
                }
                accumulate_outer(&prof, &shape, &mut acc);
            }
            acc
        })
        .collect();
    let mut values = vec![0.0; grid.len()];
    for c in &chunks {
        for (v, a) in values.iter_mut().zip(c) {
            *v += a;
        }
    }
    values.iter_mut().for_each(|v| *v *= norm);
    normalize(&values, grid)
}

fn accumulate_outer(prof: &[Vec<f64>], shape: &[usize], acc: &mut [f64]) {
    match shape.len() {
        1 => acc.iter_mut().zip(&prof[0]).for_each(|(a, x)| *a += x),
        2 => {
            for (iy, &py) in prof[1].iter().enumerate() {
                if py < 1e-300 {
                    continue;
                }
                let row = &mut acc[iy * shape[0]..(iy + 1) * shape[0]];
                for (a, &px) in row.iter_mut().zip(&prof[0]) {
                    *a += px * py;
                }
            }
        }
        _ => {
            for (iz, &pz) in prof[2].iter().enumerate() {
                for (iy, &py) in prof[1].iter().enumerate() {
                    let w = pz * py;
                    if w < 1e-300 {
                        continue;
                    }
                    let base = (iz * shape[1] + iy) * shape[0];
                    for (a, &px) in acc[base..base + shape[0]].iter_mut().zip(&prof[0]) {
                        *a += px * w;
                    }
                }
            }
        }
    }
}

/// Normalized sinc, `sin(pi t) / (pi t)`.
pub fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-8 {
        1.0 - (PI * t).powi(2) / 6.0
    } else {
        (PI * t).sin() / (PI * t)
    }
}

/// Equispaced sample positions `start + i * step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl SGrid {
    /// Grid symmetric about zero with `len` samples, zero included when `len` is odd.
    pub fn centered(step: f64, len: usize) -> Self {
        Self {
            start: -step * (len as f64 - 1.0) / 2.0,
            step,
            len,
        }
    }

    pub fn at(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn validate(&self) -> Result<()> {
        validate(self.step.is_finite() && self.step > 0.0 && self.len > 0, || {
            "s-grid needs a positive step and at least one sample".into()
        })
    }
}

/// Sinc kernel estimate of the projection of the cloud onto `theta`,
/// `(1/m) sum_i sinc((s - theta.x_i) / h_m)` at every `s` of the grid.
pub fn sinc_projection(cloud: &PointCloud, theta: &[f64], s_grid: &SGrid, h_m: f64) -> Result<Vec<f64>> {
    validate(theta.len() == cloud.dim(), || {
        format!("direction has {} coordinates, cloud has dimension {}", theta.len(), cloud.dim())
    })?;
    validate(h_m.is_finite() && h_m > 0.0, || "h_m must be positive".into())?;
    s_grid.validate()?;
    let tn: f64 = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
    validate((tn - 1.0).abs() <= 1e-9, || "direction must have unit norm".into())?;
    let proj: Vec<f64> = cloud
        .iter()
        .map(|p| p.iter().zip(theta).map(|(a, b)| a * b).sum())
        .collect();
    let m = cloud.len().max(1) as f64;
    Ok((0..s_grid.len)
        .map(|i| {
            let s = s_grid.at(i);
            proj.iter().map(|t| sinc((s - t) / h_m)).sum::<f64>() / m
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbpConfig {
    /// Sinc bandwidths in pixel lengths.
    pub h_m: Vec<f64>,
    /// Number of equispaced directions `pi i / angles`.
    pub angles: usize,
}

impl Default for FbpConfig {
    fn default() -> Self {
        Self {
            h_m: vec![0.5, 1.0, 2.0],
            angles: 180,
        }
    }
}

/// Directions `(cos(pi i / k), sin(pi i / k))`.
pub fn fbp_directions(angles: usize) -> Vec<[f64; 2]> {
    (0..angles)
        .map(|i| {
            let a = PI * i as f64 / angles as f64;
            [a.cos(), a.sin()]
        })
        .collect()
}

/// Ramp filtered projections before backprojection: spatial band-limited
/// ramp kernel, linear convolution through zero-padded FFTs.
pub fn ramp_filter(projections: &[Vec<f64>], step: f64) -> Vec<Vec<f64>> {
    let len = projections.first().map_or(0, Vec::len);
    if len == 0 {
        return projections.to_vec();
    }
    let size = (2 * len).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut kernel = vec![Complex::new(0.0, 0.0); size];
    for (i, k) in kernel.iter_mut().enumerate() {
        let n = if i <= size / 2 { i as i64 } else { i as i64 - size as i64 };
        let v = if n == 0 {
            1.0 / (4.0 * step * step)
        } else if n % 2 != 0 {
            -1.0 / ((n * n) as f64 * PI * PI * step * step)
        } else {
            0.0
        };
        *k = Complex::new(v, 0.0);
    }
    fwd.process(&mut kernel);
    projections
        .iter()
        .map(|p| {
            let mut buf: Vec<Complex<f64>> = p
                .iter()
                .map(|&x| Complex::new(x, 0.0))
                .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
                .take(size)
                .collect();
            fwd.process(&mut buf);
            for (b, k) in buf.iter_mut().zip(&kernel) {
                *b *= k;
            }
            inv.process(&mut buf);
            buf[..len].iter().map(|c| c.re * step / size as f64).collect()
        })
        .collect()
}

/// Filtered backprojection before clipping. Projections are sampled on
/// `s_grid`, with `s` measured from the grid center, one per direction
/// `pi i / projections.len()`.
pub fn fbp_image(projections: &[Vec<f64>], s_grid: &SGrid, grid: &PixelGrid) -> Result<Vec<f64>> {
    validate(grid.dim() == 2, || "filtered backprojection needs a 2-D grid".into())?;
    validate(projections.len() >= 2, || "at least two angles are required".into())?;
    s_grid.validate()?;
    validate(projections.iter().all(|p| p.len() == s_grid.len), || {
        "every projection must be sampled on the s-grid".into()
    })?;
    let filtered = ramp_filter(projections, s_grid.step);
    let dirs = fbp_directions(projections.len());
    let center = grid.center();
    let scale = PI / projections.len() as f64;
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p = grid.pixel_center(i);
            let (x, y) = (p[0] - center[0], p[1] - center[1]);
            let mut acc = 0.0;
            for (q, th) in filtered.iter().zip(&dirs) {
                let t = (x * th[0] + y * th[1] - s_grid.start) / s_grid.step;
                // Linear interpolation along s (bilinear in the sinogram).
                if t >= 0.0 && t <= (s_grid.len - 1) as f64 {
                    let j = (t.floor() as usize).min(s_grid.len.saturating_sub(2));
                    let f = t - j as f64;
                    let hi = q.get(j + 1).copied().unwrap_or(q[j]);
                    acc += (1.0 - f) * q[j] + f * hi;
                }
            }
            acc * scale
        })
        .collect();
    Ok(values)
}

/// Filtered backprojection followed by clipping and normalization.
pub fn fbp_reconstruct(projections: &[Vec<f64>], s_grid: &SGrid, grid: &PixelGrid) -> Result<DensityEstimate> {
    normalize(&fbp_image(projections, s_grid, grid)?, grid)
}

/// s-grid used by the projection method: pixel-sized steps covering the
/// half diagonal of the grid plus a margin of `margin` samples.
pub fn os_s_grid(grid: &PixelGrid, margin: usize) -> SGrid {
    let step = grid.spacing()[0];
    let half_diag = grid
        .lower()
        .iter()
        .zip(grid.upper())
        .map(|(l, u)| (u - l) * (u - l) / 4.0)
        .sum::<f64>()
        .sqrt();
    let half = (half_diag / step).ceil() as usize + margin;
    SGrid::centered(step, 2 * half + 1)
}

/// Sinc projections of the cloud (shifted to the grid center) for every
/// direction and one bandwidth in pixel lengths.
pub fn os_sinogram(cloud: &PointCloud, grid: &PixelGrid, angles: usize, h_m: f64) -> Result<(Vec<Vec<f64>>, SGrid)> {
    validate(grid.dim() == 2, || "the projection method needs a 2-D grid".into())?;
    grid.check_dim(cloud.dim())?;
    let center = grid.center();
    let shifted = cloud.map(2, |p, out| {
        out[0] = p[0] - center[0];
        out[1] = p[1] - center[1];
    })?;
    let s_grid = os_s_grid(grid, 8);
    let h = h_m * grid.spacing()[0];
    let sino = fbp_directions(angles)
        .par_iter()
        .map(|th| sinc_projection(&shifted, th, &s_grid, h))
        .collect::<Result<Vec<_>>>()?;
    Ok((sino, s_grid))
}

/// Projection-method estimate for one sinc bandwidth.
pub fn os_estimate(cloud: &PointCloud, grid: &PixelGrid, angles: usize, h_m: f64) -> Result<DensityEstimate> {
    if cloud.is_empty() {
        return Err(Error::DegenerateInput("the projection method needs at least one point".into()));
    }
    let (sino, s_grid) = os_sinogram(cloud, grid, angles, h_m)?;
    fbp_reconstruct(&sino, &s_grid, grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsBest {
    pub h_m: f64,
    pub error: f64,
    pub errors: Vec<f64>,
}

/// Runs the projection method for every configured bandwidth and keeps the
/// one with the smallest relative error against `truth`.
pub fn os_best(cloud: &PointCloud, grid: &PixelGrid, truth: &[f64], cfg: &FbpConfig) -> Result<(DensityEstimate, OsBest)> {
    validate(!cfg.h_m.is_empty(), || "at least one h_m is required".into())?;
    let mut best: Option<(DensityEstimate, f64, f64)> = None;
    let mut errors = Vec::with_capacity(cfg.h_m.len());
    for &h in &cfg.h_m {
        let est = os_estimate(cloud, grid, cfg.angles, h)?;
        let e = relative_error(truth, &est.values)?;
        errors.push(e);
        if best.as_ref().map_or(true, |(_, be, _)| e < *be) {
            best = Some((est, e, h));
        }
    }
    let (est, error, h_m) = best.expect("non-empty bandwidth list");
    Ok((est, OsBest { h_m, error, errors }))
}
