//! End-to-end estimation of a planar density from a point cloud.
//!
//! A [`Pipeline`] owns a pixel grid and lazily assembled Radon operators, so
//! repeated trials on the same grid pay for assembly once.

use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::baselines::{kde, os_best, os_estimate, FbpConfig, KdeConfig, OsBest};
use crate::error::{Error, Result};
use crate::estimate::DensityEstimate;
use crate::grid::PixelGrid;
use crate::operator::{assemble, AssembleOptions, RadonOperator};
use crate::pointcloud::{relative_error, DensitySpec, PointCloud};
use crate::projection::{
    make_ball_geometry, make_halfspace_geometry, measure, BallConfig, Geometry, HalfSpaceConfig,
};
use crate::solver::{solve, RegConfig, SolveReport};

/// Estimation methods compared in the error tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Inversion of ball counts.
    Sph,
    /// Inversion of half-space counts.
    Hs,
    /// Gaussian kernel density estimate.
    Kde,
    /// Sinc projections with filtered backprojection.
    Fbp,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::Sph, Estimator::Hs, Estimator::Kde, Estimator::Fbp];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Sph => "sph",
            Estimator::Hs => "hs",
            Estimator::Kde => "kde",
            Estimator::Fbp => "fbp",
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sph" | "spherical" | "ball" => Ok(Estimator::Sph),
            "hs" | "half-space" | "halfspace" => Ok(Estimator::Hs),
            "kde" | "ker" => Ok(Estimator::Kde),
            "fbp" | "os" => Ok(Estimator::Fbp),
            _ => Err(Error::Validation(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub reg: RegConfig,
    pub ball: BallConfig,
    pub halfspace: HalfSpaceConfig,
    pub kde: KdeConfig,
    pub fbp: FbpConfig,
    pub assemble: AssembleOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            reg: RegConfig::default(),
            ball: BallConfig::default(),
            halfspace: HalfSpaceConfig::default(),
            kde: KdeConfig::default(),
            fbp: FbpConfig::default(),
            assemble: AssembleOptions::default(),
        }
    }
}

/// Result of one estimate.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub estimator: Estimator,
    pub estimate: DensityEstimate,
    /// Solver report for the inversion methods.
    pub report: Option<SolveReport>,
    /// Bandwidth sweep for the backprojection method when a truth was given.
    pub os: Option<OsBest>,
    /// Relative error against the truth, when one was given.
    pub error: Option<f64>,
}

pub struct Pipeline {
    grid: PixelGrid,
    cfg: PipelineConfig,
    ball: OnceLock<(Geometry, RadonOperator)>,
    halfspace: OnceLock<(Geometry, RadonOperator)>,
}

impl Pipeline {
    pub fn new(grid: PixelGrid, cfg: PipelineConfig) -> Result<Self> {
        grid.validate()?;
        cfg.reg.validate()?;
        Ok(Self {
            grid,
            cfg,
            ball: OnceLock::new(),
            halfspace: OnceLock::new(),
        })
    }

    /// `resolution` pixels per axis over the domain box of `spec`.
    pub fn for_spec(spec: &DensitySpec, resolution: usize, cfg: PipelineConfig) -> Result<Self> {
        let shape = vec![resolution; spec.dim];
        Self::new(PixelGrid::covering(&spec.domain.lo, &spec.domain.hi, &shape)?, cfg)
    }

    pub fn grid(&self) -> &PixelGrid {
        &self.grid
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Geometry and operator for an inversion method, assembled on first use.
    pub fn operator(&self, estimator: Estimator) -> Result<&(Geometry, RadonOperator)> {
        let (cell, build): (_, fn(&Self) -> Result<Geometry>) = match estimator {
            Estimator::Sph => (&self.ball, |p| {
                Ok(Geometry::Ball(make_ball_geometry(&p.grid, &p.cfg.ball)?))
            }),
            Estimator::Hs => (&self.halfspace, |p| {
                Ok(Geometry::HalfSpace(make_halfspace_geometry(&p.grid, &p.cfg.halfspace)?))
            }),
            other => return Err(Error::Validation(format!("{other} has no Radon operator"))),
        };
        if let Some(v) = cell.get() {
            return Ok(v);
        }
        let geometry = build(self)?;
        let op = assemble(&self.grid, &geometry, &self.cfg.assemble)?;
        Ok(cell.get_or_init(|| (geometry, op)))
    }

    /// Estimates the density of `cloud`. With a `truth` the error is
    /// reported and the backprojection bandwidth is picked by it; without one
    /// the backprojection uses the middle bandwidth of its list.
    pub fn run(&self, cloud: &PointCloud, estimator: Estimator, truth: Option<&[f64]>) -> Result<Outcome> {
        self.grid.check_dim(cloud.dim())?;
        if let Some(t) = truth {
            if t.len() != self.grid.len() {
                return Err(Error::LengthMismatch {
                    expected: self.grid.len(),
                    got: t.len(),
                });
            }
        }
        let mut report = None;
        let mut os = None;
        let estimate = match estimator {
            Estimator::Sph | Estimator::Hs => {
                let (geometry, op) = self.operator(estimator)?;
                let b = measure(cloud, geometry, self.cfg.assemble.weight_mode.normalization())?;
                let (est, rep) = solve(op, &b.values, &self.cfg.reg, &self.grid)?;
                report = Some(rep);
                est
            }
            Estimator::Kde => kde(cloud, &self.grid, &self.cfg.kde)?,
            Estimator::Fbp => match truth {
                Some(t) => {
                    let (est, best) = os_best(cloud, &self.grid, t, &self.cfg.fbp)?;
                    os = Some(best);
                    est
                }
                None => {
                    let hs = &self.cfg.fbp.h_m;
                    if hs.is_empty() {
                        return Err(Error::Validation("no backprojection bandwidths".into()));
                    }
                    os_estimate(cloud, &self.grid, self.cfg.fbp.angles, hs[hs.len() / 2])?
                }
            },
        };
        let error = truth.map(|t| relative_error(t, &estimate.values)).transpose()?;
        Ok(Outcome {
            estimator,
            estimate,
            report,
            os,
            error,
        })
    }
}
