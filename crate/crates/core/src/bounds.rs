//! Closed-form error bounds for the empirical projections and Monte-Carlo
//! checks of their coverage and of the decay of reconstruction error with
//! the sample size.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{validate, Error, Result};
use crate::pipeline::{Estimator, Pipeline};
use crate::pointcloud::{eval_density, sample_density, ComponentKind, DensitySpec};
use crate::rng::Seed;

/// Largest dimension for which sphere areas are provided.
pub const MAX_SPHERE_DIM: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub m: usize,
    pub k: usize,
    pub p: f64,
    pub n: usize,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        validate(self.m >= 1, || "sample size m must be at least 1".into())?;
        validate(self.k >= 1, || "projection count K must be at least 1".into())?;
        check_p(self.p)?;
        validate(self.n >= 1, || "dimension n must be at least 1".into())
    }
}

fn check_p(p: f64) -> Result<()> {
    validate(p > 0.0 && p < 1.0, || format!("failure probability must lie in (0, 1), got {p}"))
}

/// Radius of the uniform band that contains an empirical CDF of `m`
/// samples with probability at least `1 - p`.
pub fn dkw_epsilon(m: usize, p: f64) -> Result<f64> {
    BoundInputs { m, k: 1, p, n: 1 }.validate()?;
    Ok(((2.0 / p).ln() / (2.0 * m as f64)).sqrt())
}

/// Surface area of the unit sphere in `R^n` (2 for n = 1, 2 pi for n = 2).
pub fn sphere_area(n: usize) -> Result<f64> {
    validate(n >= 1, || "dimension n must be at least 1".into())?;
    if n > MAX_SPHERE_DIM {
        return Err(Error::Unsupported(format!(
            "sphere areas are provided up to dimension {MAX_SPHERE_DIM}, got {n}"
        )));
    }
    let h = n as f64 / 2.0;
    Ok(2.0 * std::f64::consts::PI.powf(h) / gamma(h))
}

/// Squared L2 error bound for half-space counts with `k` directions, without
/// the quadrature term for the finite direction set.
pub fn halfspace_l2_bound(m: usize, k: usize, p: f64, n: usize) -> Result<f64> {
    BoundInputs { m, k, p, n }.validate()?;
    Ok(sphere_area(n)? * (2.0 * k as f64 / p).ln() / m as f64)
}

/// Mean squared L2 error bound for ball counts over `k` centers.
pub fn spherical_l2_bound(m: usize, k: usize, p: f64) -> Result<f64> {
    BoundInputs { m, k, p, n: 1 }.validate()?;
    Ok(((k as f64).ln() + (2.0 / p).ln()) / m as f64)
}

/// Worst-case L2 reconstruction error from half-space counts for a density
/// with Sobolev norm at most `rho`. The constant `c` is not known in closed
/// form; the formula is exposed for reference only.
pub fn reconstruction_bound(m: usize, k: usize, p: f64, n: usize, c: f64, rho: f64) -> Result<f64> {
    validate(c > 0.0 && rho > 0.0, || "c and rho must be positive".into())?;
    let nf = n as f64;
    let data = halfspace_l2_bound(m, k, p, n)?;
    Ok(c * data.powf(1.0 / (2.0 * (nf + 2.0))) * rho.powf(1.0 - 1.0 / (nf + 2.0)))
}

// ---------------------------------------------------------------------------
// Coverage of the projected CDF band

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub m: usize,
    pub p: f64,
    /// Number of directions, spread evenly over a half circle.
    pub directions: usize,
    pub trials: usize,
    pub seed: Seed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub m: usize,
    pub p: f64,
    pub directions: usize,
    pub trials: usize,
    /// Band radius at the per-direction level `p / directions`.
    pub epsilon: f64,
    /// Largest sup-norm CDF error over the directions, per trial.
    pub sup_errors: Vec<f64>,
    pub violations: usize,
    pub violation_fraction: Option<f64>,
    pub mean_sup_error: Option<f64>,
}

/// Directions `(cos, sin)` of `pi j / k` for `j < k`.
pub fn half_circle_directions(k: usize) -> Vec<[f64; 2]> {
    (0..k)
        .map(|j| {
            let a = std::f64::consts::PI * j as f64 / k as f64;
            [a.cos(), a.sin()]
        })
        .collect()
}

/// Exact CDF of `theta . x` for `x` uniform on a planar box.
pub fn box_projection_cdf(lo: &[f64], hi: &[f64], theta: &[f64], t: f64) -> f64 {
    let mut start = 0.0;
    let mut lens = [0.0; 2];
    for k in 0..2 {
        let (a, b) = (theta[k] * lo[k], theta[k] * hi[k]);
        start += a.min(b);
        lens[k] = (b - a).abs();
    }
    let (l1, l2) = (lens[0].max(lens[1]), lens[0].min(lens[1]));
    let x = t - start;
    if x <= 0.0 {
        return 0.0;
    }
    if x >= l1 + l2 {
        return 1.0;
    }
    if l2 <= 1e-12 * l1 {
        return (x / l1).clamp(0.0, 1.0);
    }
    let ramp = |u: f64| if u > 0.0 { 0.5 * u * u } else { 0.0 };
    let v = (ramp(x) - ramp(x - l1) - ramp(x - l2) + ramp(x - l1 - l2)) / (l1 * l2);
    v.clamp(0.0, 1.0)
}

fn uniform_boxes(spec: &DensitySpec) -> Result<Vec<(f64, &[f64], &[f64])>> {
    spec.validate()?;
    if spec.dim != 2 {
        return Err(Error::Unsupported("coverage needs a planar density".into()));
    }
    let total: f64 = spec.components.iter().map(|c| c.weight).sum();
    spec.components
        .iter()
        .map(|c| match &c.kind {
            ComponentKind::AxisAlignedUniform { lo, hi }
                if (0..2).all(|k| lo[k] >= spec.domain.lo[k] && hi[k] <= spec.domain.hi[k]) =>
            {
                Ok((c.weight / total, lo.as_slice(), hi.as_slice()))
            }
            _ => Err(Error::Unsupported(
                "coverage needs a mixture of uniform boxes inside the domain".into(),
            )),
        })
        .collect()
}

/// Draws `trials` samples of size `m` and checks how often the empirical
/// projected CDFs leave the simultaneous band of radius
/// `dkw_epsilon(m, p / directions)` in some direction.
pub fn coverage_experiment(spec: &DensitySpec, cfg: &CoverageConfig) -> Result<CoverageReport> {
    let boxes = uniform_boxes(spec)?;
    validate(cfg.directions >= 1, || "at least one direction is needed".into())?;
    check_p(cfg.p)?;
    validate(cfg.m >= 1, || "sample size m must be at least 1".into())?;
    let epsilon = dkw_epsilon(cfg.m, cfg.p / cfg.directions as f64)?;
    let dirs = half_circle_directions(cfg.directions);
    let cdf = |theta: &[f64], t: f64| -> f64 {
        boxes.iter().map(|(w, lo, hi)| w * box_projection_cdf(lo, hi, theta, t)).sum()
    };
    let sup_errors = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let cloud = sample_density(spec, cfg.m, cfg.seed.substream(t))?;
            let m = cloud.len() as f64;
            let mut worst: f64 = 0.0;
            for d in &dirs {
                let mut s: Vec<f64> = cloud.iter().map(|x| d[0] * x[0] + d[1] * x[1]).collect();
                s.sort_by(f64::total_cmp);
                for (i, &v) in s.iter().enumerate() {
                    let f = cdf(d, v);
                    worst = worst.max((i + 1) as f64 / m - f).max(f - i as f64 / m);
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    let violations = sup_errors.iter().filter(|&&e| e > epsilon).count();
    let n = sup_errors.len();
    Ok(CoverageReport {
        m: cfg.m,
        p: cfg.p,
        directions: cfg.directions,
        trials: cfg.trials,
        epsilon,
        violations,
        violation_fraction: (n > 0).then(|| violations as f64 / n as f64),
        mean_sup_error: (n > 0).then(|| sup_errors.iter().sum::<f64>() / n as f64),
        sup_errors,
    })
}

// ---------------------------------------------------------------------------
// Error decay with the sample size

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub estimator: Estimator,
    pub m_list: Vec<usize>,
    /// Relative errors per sample size, one entry per successful trial.
    pub errors: Vec<Vec<f64>>,
    pub failures: Vec<usize>,
    pub mean_log_error: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Least-squares fit of mean log error against log m.
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square residual of the fit.
    pub residual: f64,
}

/// Least-squares line through `(x, y)`: `(slope, intercept, rms residual)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    validate(x.len() == y.len() && x.len() >= 2, || "a line fit needs at least two points".into())?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateInput("line fit needs distinct abscissae".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Ok((slope, intercept, (ss / n).sqrt()))
}

pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Runs `estimator` on `trials` fresh samples for every size in `m_list` and
/// fits the decay of the mean log error. Trials that fail are counted and
/// skipped; a size whose trials all fail is an error.
pub fn rate_experiment(
    spec: &DensitySpec,
    m_list: &[usize],
    pipeline: &Pipeline,
    estimator: Estimator,
    trials: usize,
    seed: Seed,
) -> Result<RateReport> {
    validate(m_list.len() >= 4, || "the rate fit needs at least 4 sample sizes".into())?;
    validate(trials >= 1, || "at least one trial is needed".into())?;
    let truth = eval_density(spec, pipeline.grid())?;
    let mut errors = Vec::with_capacity(m_list.len());
    let mut failures = Vec::with_capacity(m_list.len());
    for (i, &m) in m_list.iter().enumerate() {
        let runs: Vec<Result<f64>> = (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let cloud = sample_density(spec, m, seed.substream(i as u64).substream(t))?;
                let out = pipeline.run(&cloud, estimator, Some(&truth.values))?;
                Ok(out.error.expect("truth supplied"))
            })
            .collect();
        let mut ok = Vec::with_capacity(trials);
        let mut first_err = None;
        for r in runs {
            match r {
                Ok(v) => ok.push(v),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        if let (true, Some(e)) = (ok.is_empty(), first_err) {
            return Err(e);
        }
        failures.push(trials - ok.len());
        errors.push(ok);
    }
    let mean_log_error: Vec<f64> = errors
        .iter()
        .map(|e| e.iter().map(|v| v.ln()).sum::<f64>() / e.len() as f64)
        .collect();
    let std_error = errors.iter().map(|e| mean_std(e).1).collect();
    let log_m: Vec<f64> = m_list.iter().map(|&m| (m as f64).ln()).collect();
    let (slope, intercept, residual) = fit_line(&log_m, &mean_log_error)?;
    Ok(RateReport {
        estimator,
        m_list: m_list.to_vec(),
        errors,
        failures,
        mean_log_error,
        std_error,
        slope,
        intercept,
        residual,
    })
}
