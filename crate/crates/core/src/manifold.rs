//! Density estimation on embedded manifolds through local PCA patches.
//!
//! For a query point, the samples inside a ball around it are centered and
//! projected onto their leading principal axes; the projected cloud is
//! reconstructed on a small pixel grid and the estimate read off at the
//! query's own projection.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validate, Error, Result};
use crate::estimate::DensityEstimate;
use crate::grid::PixelGrid;
use crate::operator::{assemble, AssembleOptions};
use crate::pointcloud::{relative_error, sample_density, DensitySpec, PointCloud};
use crate::projection::{
    make_ball_geometry, make_halfspace_geometry, measure, BallConfig, Geometry, HalfSpaceConfig,
};
use crate::rng::Seed;
use crate::solver::{solve, RegConfig, SolveReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    Spherical,
    HalfSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchConfig {
    pub r: f64,
    /// Percentage of variance the selected axes must explain.
    pub p: f64,
    pub transform: Transform,
    /// Pixels per axis of the patch grid.
    pub resolution: usize,
    /// Reference density used when scoring a patch against the truth.
    #[serde(default)]
    pub target: PatchTarget,
}

/// What a patch reconstruction is compared against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatchTarget {
    /// The surface density carried to the principal plane over the whole
    /// tangent disk of radius `r`, i.e. the chart the patch approximates.
    #[default]
    TangentBall,
    /// The exact law of the projected scores: the same density restricted
    /// to the part of the surface inside the ball.
    ManifoldBall,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            r: 20.0,
            p: 90.0,
            transform: Transform::Spherical,
            resolution: 50,
            target: PatchTarget::TangentBall,
        }
    }
}

impl PatchConfig {
    pub fn validate(&self) -> Result<()> {
        validate(self.r.is_finite() && self.r > 0.0, || "patch radius must be positive".into())?;
        validate(self.p > 0.0 && self.p <= 100.0, || "variance percentage must lie in (0, 100]".into())?;
        validate(self.resolution >= 3, || "patch grid needs at least 3 pixels per axis".into())
    }
}

/// Maps `(x, y)` to `(x, y, kappa (x^2 + y^2) / 2)`.
pub fn embed_paraboloid(cloud: &PointCloud, kappa: f64) -> Result<PointCloud> {
    validate(cloud.dim() == 2, || "the paraboloid embedding takes 2-D points".into())?;
    validate(kappa.is_finite() && kappa >= 0.0, || "kappa must be nonnegative".into())?;
    cloud.map(3, |p, out| {
        out[0] = p[0];
        out[1] = p[1];
        out[2] = kappa * (p[0] * p[0] + p[1] * p[1]) / 2.0;
    })
}

/// Local principal component analysis around one query point.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchResult {
    /// Number of retained axes.
    pub dim: usize,
    /// Covariance eigenvalues, nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvectors in the order of `eigenvalues`.
    pub axes: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Indices of the samples inside the ball.
    pub indices: Vec<usize>,
    /// Scores of those samples on the retained axes.
    pub scores: PointCloud,
    /// The query in the same coordinates.
    pub query: Vec<f64>,
}

impl PatchResult {
    pub fn count(&self) -> usize {
        self.indices.len()
    }

    /// Coordinates of an ambient point on the retained axes.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.axes[..self.dim]
            .iter()
            .map(|a| a.iter().zip(x).zip(&self.mean).map(|((ai, xi), mi)| ai * (xi - mi)).sum())
            .collect()
    }
}

pub fn pca_patch(cloud: &PointCloud, z: &[f64], cfg: &PatchConfig) -> Result<PatchResult> {
    cfg.validate()?;
    let d = cloud.dim();
    validate(z.len() == d, || format!("query has {} coordinates, cloud has dimension {d}", z.len()))?;
    let r2 = cfg.r * cfg.r;
    let indices: Vec<usize> = (0..cloud.len())
        .filter(|&i| crate::projection::squared_distance(cloud.point(i), z) <= r2)
        .collect();
    if indices.len() < 2 {
        return Err(Error::InsufficientNeighborhood {
            found: indices.len(),
            radius: cfg.r,
        });
    }
    let local = cloud.select(&indices);
    let mean = local.mean();
    let count = local.len() as f64;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for p in local.iter() {
        for a in 0..d {
            for b in a..d {
                cov[(a, b)] += (p[a] - mean[a]) * (p[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            cov[(a, b)] /= count - 1.0;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let axes: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let lead = v
                .iter()
                .copied()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or(0.0);
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegeneratePatch);
    }
    let target = cfg.p / 100.0 * total;
    let mut acc = 0.0;
    let mut dim = d;
    for (k, ev) in eigenvalues.iter().enumerate() {
        acc += ev;
        if acc >= target * (1.0 - 1e-12) {
            dim = k + 1;
            break;
        }
    }
    if indices.len() < dim + 1 {
        return Err(Error::InsufficientNeighborhood {
            found: indices.len(),
            radius: cfg.r,
        });
    }
    let mut result = PatchResult {
        dim,
        eigenvalues,
        axes,
        mean,
        indices,
        scores: PointCloud::empty(dim),
        query: Vec::new(),
    };
    let mut coords = Vec::with_capacity(local.len() * dim);
    for p in local.iter() {
        coords.extend(result.project(p));
    }
    result.scores = PointCloud::new(dim, coords)?;
    result.query = result.project(z);
    Ok(result)
}

/// Grid of `resolution` pixels per axis over the cube of half-width `r`
/// around the projected query, widened by one pixel on every side. Every
/// score lies inside it, since projection onto the axes does not increase
/// distances.
pub fn patch_grid(query: &[f64], r: f64, resolution: usize) -> Result<PixelGrid> {
    let d = query.len();
    validate((1..=3).contains(&d), || format!("patch dimension {d} is not supported"))?;
    validate(r.is_finite() && r > 0.0, || "patch radius must be positive".into())?;
    validate(resolution >= 3, || "patch grid needs at least 3 pixels per axis".into())?;
    let h = 2.0 * r / (resolution - 2) as f64;
    let origin = query.iter().map(|q| q - r - h).collect();
    PixelGrid::new(origin, vec![h; d], vec![resolution; d])
}

/// Reconstruction of one patch.
#[derive(Debug, Clone)]
pub struct PatchEstimate {
    pub patch: PatchResult,
    pub estimate: DensityEstimate,
    pub report: SolveReport,
    /// Estimate at the projected query (containing pixel).
    pub value: f64,
}

pub fn reconstruct_patch(patch: PatchResult, cfg: &PatchConfig, reg: &RegConfig) -> Result<PatchEstimate> {
    let grid = patch_grid(&patch.query, cfg.r, cfg.resolution)?;
    let geometry = match cfg.transform {
        Transform::Spherical => Geometry::Ball(make_ball_geometry(&grid, &BallConfig::default())?),
        Transform::HalfSpace => {
            validate(patch.dim == 2, || {
                format!("half-space patches need 2 retained axes, found {}", patch.dim)
            })?;
            Geometry::HalfSpace(make_halfspace_geometry(&grid, &HalfSpaceConfig::default())?)
        }
    };
    let b = measure(&patch.scores, &geometry, reg_normalization())?;
    let op = assemble(&grid, &geometry, &AssembleOptions::default())?;
    let (estimate, report) = solve(&op, &b.values, reg, &grid)?;
    let value = estimate.value_at(&patch.query).unwrap_or(0.0);
    Ok(PatchEstimate {
        patch,
        estimate,
        report,
        value,
    })
}

fn reg_normalization() -> crate::projection::Normalization {
    AssembleOptions::default().weight_mode.normalization()
}

/// Density values at every query; failures are reported per query.
pub fn patch_density(
    cloud: &PointCloud,
    queries: &[Vec<f64>],
    cfg: &PatchConfig,
    reg: &RegConfig,
) -> Vec<Result<PatchEstimate>> {
    queries
        .par_iter()
        .map(|z| reconstruct_patch(pca_patch(cloud, z, cfg)?, cfg, reg))
        .collect()
}

/// Hausdorff distance estimate between the paraboloid ball around the
/// origin and its tangent disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentCheck {
    pub kappa: f64,
    pub r: f64,
    pub estimate: f64,
    /// `kappa r^2 / 2`.
    pub bound: f64,
    /// Spacing of the sampling lattice.
    pub spacing: f64,
}

/// Samples both sets on a square lattice of about `sample_count` points
/// each and returns the discrete Hausdorff distance.
pub fn tangent_bound_check(kappa: f64, r: f64, sample_count: usize) -> Result<TangentCheck> {
    validate(kappa.is_finite() && kappa >= 0.0, || "kappa must be nonnegative".into())?;
    validate(r.is_finite() && r > 0.0, || "radius must be positive".into())?;
    validate(sample_count >= 4, || "at least four samples are required".into())?;
    let spacing = r * (std::f64::consts::PI / sample_count as f64).sqrt();
    let steps = (r / spacing).ceil() as i64;
    let mut manifold = Vec::new();
    let mut tangent = Vec::new();
    for i in -steps..=steps {
        for j in -steps..=steps {
            let (x, y) = (i as f64 * spacing, j as f64 * spacing);
            let rho2 = x * x + y * y;
            let h = kappa * rho2 / 2.0;
            if rho2 + h * h <= r * r {
                manifold.push([x, y, h]);
            }
            if rho2 <= r * r {
                tangent.push([x, y, 0.0]);
            }
        }
    }
    let directed = |a: &[[f64; 3]], b: &[[f64; 3]]| -> f64 {
        a.par_iter()
            .map(|p| {
                b.iter()
                    .map(|q| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2))
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| 0.0, f64::max)
            .sqrt()
    };
    let estimate = directed(&manifold, &tangent).max(directed(&tangent, &manifold));
    Ok(TangentCheck {
        kappa,
        r,
        estimate,
        bound: 0.5 * kappa * r * r,
        spacing,
    })
}

// ---------------------------------------------------------------------------
// Paraboloid patch experiment

/// One run of the embedded-density experiment: a planar density centered at
/// the paraboloid vertex, embedded, and reconstructed on the patch around
/// the vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchTrial {
    pub kappa: f64,
    pub r: f64,
    pub dim: usize,
    pub eigenvalues: Vec<f64>,
    pub count: usize,
    pub error: Option<f64>,
    pub value: Option<f64>,
    pub status: String,
}

/// Planar density restated with its domain center at the origin.
#[derive(Debug, Clone)]
pub struct CenteredDensity {
    pub spec: DensitySpec,
    pub center: Vec<f64>,
}

impl CenteredDensity {
    pub fn new(spec: DensitySpec) -> Result<Self> {
        spec.validate()?;
        validate(spec.dim == 2, || "the manifold experiment uses a planar density".into())?;
        let center = spec
            .domain
            .lo
            .iter()
            .zip(&spec.domain.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect();
        Ok(Self { spec, center })
    }

    pub fn sample(&self, m: usize, seed: Seed) -> Result<PointCloud> {
        let c = &self.center;
        sample_density(&self.spec, m, seed)?.map(2, |p, o| {
            o[0] = p[0] - c[0];
            o[1] = p[1] - c[1];
        })
    }

    /// Truncated planar density at centered coordinates.
    pub fn pdf(&self, x: f64, y: f64) -> f64 {
        let p = [x + self.center[0], y + self.center[1]];
        if self.spec.domain.contains(&p) {
            self.spec.pdf(&p)
        } else {
            0.0
        }
    }
}

/// Reference density at every pixel center: the planar density pushed
/// through the embedding and the projection, restricted according to
/// `target` and normalized over the grid.
pub fn patch_truth(
    density: &CenteredDensity,
    kappa: f64,
    z: &[f64],
    r: f64,
    patch: &PatchResult,
    grid: &PixelGrid,
    target: PatchTarget,
) -> Result<Vec<f64>> {
    validate(patch.dim == 2 && z.len() == 3, || {
        "patch truth needs a 2-D patch of a surface in 3-D".into()
    })?;
    let (e1, e2) = (&patch.axes[0], &patch.axes[1]);
    let mu = &patch.mean;
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let u = grid.pixel_center(i);
            let du = (u[0] - patch.query[0]).powi(2) + (u[1] - patch.query[1]).powi(2);
            if target == PatchTarget::TangentBall && du > r * r {
                return 0.0;
            }
            // Start from the point of the fitted plane.
            let a: Vec<f64> = (0..3).map(|k| mu[k] + u[0] * e1[k] + u[1] * e2[k]).collect();
            let (mut x, mut y) = (a[0], a[1]);
            let mut det = 0.0;
            let mut ok = false;
            for _ in 0..50 {
                let p = [x, y, kappa * (x * x + y * y) / 2.0];
                let f0 = (0..3).map(|k| e1[k] * (p[k] - mu[k])).sum::<f64>() - u[0];
                let f1 = (0..3).map(|k| e2[k] * (p[k] - mu[k])).sum::<f64>() - u[1];
                let j00 = e1[0] + e1[2] * kappa * x;
                let j01 = e1[1] + e1[2] * kappa * y;
                let j10 = e2[0] + e2[2] * kappa * x;
                let j11 = e2[1] + e2[2] * kappa * y;
                det = j00 * j11 - j01 * j10;
                if det.abs() < 1e-12 {
                    break;
                }
                let dx = (j11 * f0 - j01 * f1) / det;
                let dy = (-j10 * f0 + j00 * f1) / det;
                x -= dx;
                y -= dy;
                if dx.abs() + dy.abs() < 1e-12 * (1.0 + x.abs() + y.abs()) {
                    ok = true;
                    break;
                }
            }
            if !ok || det.abs() < 1e-12 {
                return 0.0;
            }
            let p = [x, y, kappa * (x * x + y * y) / 2.0];
            if target == PatchTarget::ManifoldBall && crate::projection::squared_distance(&p, z) > r * r {
                return 0.0;
            }
            density.pdf(x, y) / det.abs()
        })
        .collect::<Vec<f64>>();
    let total: f64 = values.iter().sum::<f64>() * grid.pixel_volume();
    if !(total > 0.0) {
        return Err(Error::DegeneratePatch);
    }
    Ok(values.iter().map(|v| v / total).collect())
}

/// Samples `m` points, embeds them with curvature `kappa`, and reconstructs
/// the patch of radius `cfg.r` around the vertex.
pub fn patch_trial(
    density: &CenteredDensity,
    kappa: f64,
    m: usize,
    cfg: &PatchConfig,
    reg: &RegConfig,
    seed: Seed,
) -> Result<PatchTrial> {
    let cloud = embed_paraboloid(&density.sample(m, seed)?, kappa)?;
    let z = [0.0, 0.0, 0.0];
    let patch = pca_patch(&cloud, &z, cfg)?;
    let mut trial = PatchTrial {
        kappa,
        r: cfg.r,
        dim: patch.dim,
        eigenvalues: patch.eigenvalues.clone(),
        count: patch.count(),
        error: None,
        value: None,
        status: "ok".into(),
    };
    if patch.dim != 2 {
        trial.status = format!("selected dimension {}", patch.dim);
        return Ok(trial);
    }
    let fitted = reconstruct_patch(patch, cfg, reg)?;
    let truth = patch_truth(density, kappa, &z, cfg.r, &fitted.patch, &fitted.estimate.grid, cfg.target)?;
    trial.error = Some(relative_error(&truth, &fitted.estimate.values)?);
    trial.value = Some(fitted.value);
    if !fitted.report.converged {
        trial.status = "not-converged".into();
    }
    Ok(trial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::canonical;
    use rand::{Rng, SeedableRng};

    #[test]
    fn paraboloid_examples() {
        let c = PointCloud::from_points(2, &[vec![0.0, 0.0], vec![10.0, 10.0]]).unwrap();
        let e = embed_paraboloid(&c, 0.05).unwrap();
        assert_eq!(e.point(0), &[0.0, 0.0, 0.0]);
        assert!((e.point(1)[2] - 5.0).abs() < 1e-12);
        let flat = embed_paraboloid(&c, 0.0).unwrap();
        assert!(flat.iter().all(|p| p[2] == 0.0));
        assert!(embed_paraboloid(&e, 0.1).is_err());
    }

    fn planar_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.gen_range(-5.0..5.0), rng.gen_range(-3.0..3.0));
                vec![a + 0.5 * b, b, 0.2 * a - 0.4 * b]
            })
            .collect();
        PointCloud::from_points(3, &pts).unwrap()
    }

    #[test]
    fn flat_data_selects_two_axes() {
        let cloud = planar_cloud(300, 1);
        let patch = pca_patch(&cloud, &[0.0; 3], &PatchConfig { r: 100.0, ..Default::default() }).unwrap();
        assert_eq!(patch.dim, 2);
        assert!(patch.eigenvalues[2].abs() < 1e-10);
        assert!(patch.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        let total: f64 = patch.eigenvalues.iter().sum();
        assert!(patch.eigenvalues[..2].iter().sum::<f64>() >= 0.9 * total);
        assert!(patch.eigenvalues[0] < 0.9 * total);
    }

    #[test]
    fn scaling_scales_eigenvalues() {
        let cloud = planar_cloud(200, 2);
        let cfg = PatchConfig { r: 1e3, ..Default::default() };
        let a = pca_patch(&cloud, &[0.0; 3], &cfg).unwrap();
        let c = 2.5;
        let scaled = cloud.map(3, |p, o| o.iter_mut().zip(p).for_each(|(x, y)| *x = c * y)).unwrap();
        let b = pca_patch(&scaled, &[0.0; 3], &cfg).unwrap();
        assert_eq!(a.dim, b.dim);
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((y - c * c * x).abs() < 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn sign_convention_makes_largest_loading_positive() {
        let patch = pca_patch(&planar_cloud(100, 3), &[0.0; 3], &PatchConfig { r: 1e3, ..Default::default() }).unwrap();
        for axis in &patch.axes {
            let lead = axis.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn neighborhood_errors() {
        let cloud = planar_cloud(50, 4);
        let far = [1e3, 1e3, 1e3];
        assert!(matches!(
            pca_patch(&cloud, &far, &PatchConfig::default()),
            Err(Error::InsufficientNeighborhood { found: 0, .. })
        ));
        let same = PointCloud::from_points(3, &vec![vec![1.0, 1.0, 1.0]; 5]).unwrap();
        assert!(matches!(
            pca_patch(&same, &[1.0, 1.0, 1.0], &PatchConfig::default()),
            Err(Error::DegeneratePatch)
        ));
    }

    #[test]
    fn density1_paraboloid_patch_is_two_dimensional() {
        for s in 0..3 {
            let density = CenteredDensity::new(canonical::density1(Seed::new(s))).unwrap();
            let cloud = embed_paraboloid(&density.sample(5000, Seed::new(100 + s)).unwrap(), 0.05).unwrap();
            let patch = pca_patch(&cloud, &[0.0; 3], &PatchConfig::default()).unwrap();
            assert_eq!(patch.dim, 2, "{:?}", patch.eigenvalues);
        }
    }

    #[test]
    fn tangent_check_examples() {
        let flat = tangent_bound_check(0.0, 10.0, 2000).unwrap();
        assert!(flat.estimate < 1e-12);
        let c = tangent_bound_check(0.05, 10.0, 2000).unwrap();
        assert!((c.bound - 2.5).abs() < 1e-12);
        assert!(c.estimate <= c.bound + 2.0 * c.spacing);
        let mut last = 0.0;
        for r in [2.0, 4.0, 8.0, 16.0] {
            let e = tangent_bound_check(0.05, r, 1500).unwrap().estimate;
            assert!(e >= last);
            last = e;
        }
    }

    #[test]
    fn truth_integrates_to_one_and_matches_flat_density() {
        let density = CenteredDensity::new(canonical::density4()).unwrap();
        let cloud = embed_paraboloid(&density.sample(3000, Seed::new(9)).unwrap(), 0.0).unwrap();
        let cfg = PatchConfig::default();
        let patch = pca_patch(&cloud, &[0.0; 3], &cfg).unwrap();
        let grid = patch_grid(&patch.query, cfg.r, 50).unwrap();
        assert!(patch.scores.iter().all(|p| grid.contains(p)));
        let tangent = patch_truth(&density, 0.0, &[0.0; 3], cfg.r, &patch, &grid, PatchTarget::TangentBall).unwrap();
        let ball = patch_truth(&density, 0.0, &[0.0; 3], cfg.r, &patch, &grid, PatchTarget::ManifoldBall).unwrap();
        for t in [&tangent, &ball] {
            assert!((t.iter().sum::<f64>() * grid.pixel_volume() - 1.0).abs() < 1e-9);
            assert!(t.iter().all(|v| *v >= 0.0));
        }
        // On a flat surface the two targets coincide.
        for (a, b) in tangent.iter().zip(&ball) {
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }
}
