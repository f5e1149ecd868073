//! Point clouds, declarative mixture densities, IID sampling and ground truth.
//!
//! A [`DensitySpec`] is a finite mixture of simple components restricted to a
//! domain box. Sampling rejects draws that fall outside the box, so the
//! density actually sampled is the mixture truncated to the box and
//! renormalized; [`eval_density`] returns that same truncated density on a
//! pixel grid.

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::{Exp, Gamma, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};
use statrs::function::erf::erfc;

use crate::error::{validate, Error, Result};
use crate::grid::PixelGrid;
use crate::rng::Seed;

/// `m` points in `R^dim`, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        validate(dim > 0, || "point dimension must be positive".into())?;
        validate(coords.len() % dim == 0, || {
            format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )
        })?;
        validate(coords.iter().all(|c| c.is_finite()), || {
            "point coordinates must be finite".into()
        })?;
        Ok(Self { dim, coords })
    }

    pub fn from_points(dim: usize, points: &[Vec<f64>]) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, coords)
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of points `m`.
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for p in self.iter() {
            for (m, x) in mean.iter_mut().zip(p) {
                *m += x;
            }
        }
        let m = self.len().max(1) as f64;
        mean.iter_mut().for_each(|x| *x /= m);
        mean
    }

    /// Applies `f` to every point, producing a cloud of dimension `out_dim`.
    pub fn map(&self, out_dim: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Result<Self> {
        let mut coords = vec![0.0; self.len() * out_dim];
        for (p, out) in self.iter().zip(coords.chunks_exact_mut(out_dim.max(1))) {
            f(p, out);
        }
        Self::new(out_dim, coords)
    }

    /// Points with indices in `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            coords.extend_from_slice(self.point(i));
        }
        Self {
            dim: self.dim,
            coords,
        }
    }

    /// Per-pixel counts; points outside the grid box are ignored.
    pub fn histogram(&self, grid: &PixelGrid) -> Result<Vec<f64>> {
        grid.check_dim(self.dim)?;
        let mut h = vec![0.0; grid.len()];
        for p in self.iter() {
            if let Some(i) = grid.locate(p) {
                h[i] += 1.0;
            }
        }
        Ok(h)
    }

    /// Writes one point per line, comma separated, no header.
    ///
    /// Values use the shortest representation that round-trips, so output
    /// is byte-identical for identical clouds.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let mut line = String::new();
        for p in self.iter() {
            line.clear();
            for (k, x) in p.iter().enumerate() {
                if k > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{x:?}"));
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(f)
    }

    /// Reads a headerless CSV. `dim` is required only to type an empty file.
    pub fn read_csv<R: std::io::Read>(r: R, dim: Option<usize>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut coords = Vec::new();
        let mut found_dim = dim;
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() == 1 && rec[0].is_empty() {
                continue;
            }
            let d = *found_dim.get_or_insert(rec.len());
            if rec.len() != d {
                return Err(Error::Parse(format!(
                    "row {}: expected {d} columns, found {}",
                    line + 1,
                    rec.len()
                )));
            }
            for field in rec.iter() {
                let x: f64 = field
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}: bad number {field:?}", line + 1)))?;
                coords.push(x);
            }
        }
        let dim = found_dim
            .ok_or_else(|| Error::Parse("empty point file and no dimension given".into()))?;
        Self::new(dim, coords)
    }

    pub fn load_csv(path: impl AsRef<Path>, dim: Option<usize>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f), dim)
    }
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (l, h))| *x >= *l && *x <= *h)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }
}

/// One mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ComponentKind {
    IsotropicGaussian { mean: Vec<f64>, sigma: f64 },
    AxisAlignedUniform { lo: Vec<f64>, hi: Vec<f64> },
    /// Product of one-sided exponentials starting at `origin` on every axis.
    Exponential { rate: f64, origin: Vec<f64> },
    /// Product of gamma densities shifted to `origin` on every axis.
    Gamma { shape: f64, scale: f64, origin: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    #[serde(flatten)]
    pub kind: ComponentKind,
}

/// Mixture density restricted to a domain box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    pub dim: usize,
    pub domain: DomainBox,
    pub components: Vec<Component>,
}

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

impl ComponentKind {
    fn params_dim(&self) -> usize {
        match self {
            ComponentKind::IsotropicGaussian { mean, .. } => mean.len(),
            ComponentKind::AxisAlignedUniform { lo, .. } => lo.len(),
            ComponentKind::Exponential { origin, .. } | ComponentKind::Gamma { origin, .. } => {
                origin.len()
            }
        }
    }

    fn validate(&self, dim: usize, domain: &DomainBox) -> Result<()> {
        validate(self.params_dim() == dim, || {
            format!("component has dimension {}, spec has {dim}", self.params_dim())
        })?;
        let meets_domain = match self {
            ComponentKind::IsotropicGaussian { sigma, .. } => {
                validate(*sigma > 0.0, || "gaussian sigma must be positive".into())?;
                true
            }
            ComponentKind::AxisAlignedUniform { lo, hi } => {
                validate(hi.len() == dim && lo.iter().zip(hi).all(|(l, h)| l < h), || {
                    "uniform box needs lo < hi on every axis".into()
                })?;
                (0..dim).all(|k| lo[k] < domain.hi[k] && hi[k] > domain.lo[k])
            }
            ComponentKind::Exponential { rate, origin } => {
                validate(*rate > 0.0, || "exponential rate must be positive".into())?;
                (0..dim).all(|k| origin[k] < domain.hi[k])
            }
            ComponentKind::Gamma {
                shape,
                scale,
                origin,
            } => {
                validate(*shape > 0.0 && *scale > 0.0, || {
                    "gamma shape and scale must be positive".into()
                })?;
                (0..dim).all(|k| origin[k] < domain.hi[k])
            }
        };
        validate(meets_domain, || {
            "component support does not intersect the domain box".into()
        })
    }

    /// Untruncated density at `x`.
    pub fn pdf(&self, x: &[f64]) -> f64 {
        match self {
            ComponentKind::IsotropicGaussian { mean, sigma } => {
                let d2: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
                let norm = (SQRT_2PI * sigma).powi(x.len() as i32);
                (-0.5 * d2 / (sigma * sigma)).exp() / norm
            }
            ComponentKind::AxisAlignedUniform { lo, hi } => {
                let inside = x
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(x, (l, h))| *x >= *l && *x <= *h);
                if inside {
                    1.0 / lo.iter().zip(hi).map(|(l, h)| h - l).product::<f64>()
                } else {
                    0.0
                }
            }
            ComponentKind::Exponential { rate, origin } => x
                .iter()
                .zip(origin)
                .map(|(x, o)| {
                    let t = x - o;
                    if t < 0.0 {
                        0.0
                    } else {
                        rate * (-rate * t).exp()
                    }
                })
                .product(),
            ComponentKind::Gamma {
                shape,
                scale,
                origin,
            } => {
                let ln_norm = statrs::function::gamma::ln_gamma(*shape) + shape * scale.ln();
                x.iter()
                    .zip(origin)
                    .map(|(x, o)| {
                        let t = x - o;
                        if t < 0.0 || (t == 0.0 && *shape < 1.0) {
                            0.0
                        } else if t == 0.0 {
                            if *shape == 1.0 {
                                1.0 / scale
                            } else {
                                0.0
                            }
                        } else {
                            ((shape - 1.0) * t.ln() - t / scale - ln_norm).exp()
                        }
                    })
                    .product()
            }
        }
    }

    /// Probability mass of the untruncated component inside `[lo, hi]`.
    pub fn box_mass(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let per_axis = |k: usize| -> f64 {
            let (a, b) = (lo[k], hi[k]);
            match self {
                ComponentKind::IsotropicGaussian { mean, sigma } => {
                    std_normal_cdf((b - mean[k]) / sigma) - std_normal_cdf((a - mean[k]) / sigma)
                }
                ComponentKind::AxisAlignedUniform { lo: ul, hi: uh } => {
                    let overlap = (b.min(uh[k]) - a.max(ul[k])).max(0.0);
                    overlap / (uh[k] - ul[k])
                }
                ComponentKind::Exponential { rate, origin } => {
                    let cdf = |x: f64| {
                        let t = x - origin[k];
                        if t <= 0.0 {
                            0.0
                        } else {
                            -(-rate * t).exp_m1()
                        }
                    };
                    cdf(b) - cdf(a)
                }
                ComponentKind::Gamma {
                    shape,
                    scale,
                    origin,
                } => {
                    let dist = GammaDist::new(*shape, 1.0 / scale).expect("validated gamma");
                    let cdf = |x: f64| {
                        let t = x - origin[k];
                        if t <= 0.0 {
                            0.0
                        } else {
                            dist.cdf(t)
                        }
                    };
                    cdf(b) - cdf(a)
                }
            }
        };
        (0..lo.len()).map(per_axis).product()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            ComponentKind::IsotropicGaussian { mean, sigma } => {
                let n = Normal::new(0.0, *sigma).expect("validated sigma");
                for (o, m) in out.iter_mut().zip(mean) {
                    *o = m + n.sample(rng);
                }
            }
            ComponentKind::AxisAlignedUniform { lo, hi } => {
                for ((o, l), h) in out.iter_mut().zip(lo).zip(hi) {
                    *o = rng.gen_range(*l..*h);
                }
            }
            ComponentKind::Exponential { rate, origin } => {
                let e = Exp::new(*rate).expect("validated rate");
                for (o, org) in out.iter_mut().zip(origin) {
                    *o = org + e.sample(rng);
                }
            }
            ComponentKind::Gamma {
                shape,
                scale,
                origin,
            } => {
                let g = Gamma::new(*shape, *scale).expect("validated gamma");
                for (o, org) in out.iter_mut().zip(origin) {
                    *o = org + g.sample(rng);
                }
            }
        }
    }
}

/// Attempts allowed per accepted point before sampling gives up.
pub const DEFAULT_REJECTION_CAP: usize = 100_000;

impl DensitySpec {
    pub fn validate(&self) -> Result<()> {
        validate(self.dim > 0, || "spec dimension must be positive".into())?;
        validate(
            self.domain.lo.len() == self.dim && self.domain.hi.len() == self.dim,
            || "domain box dimension does not match spec".into(),
        )?;
        validate(
            self.domain.lo.iter().zip(&self.domain.hi).all(|(l, h)| l < h),
            || "domain box needs lo < hi on every axis".into(),
        )?;
        validate(!self.components.is_empty(), || "spec has no components".into())?;
        validate(self.components.iter().all(|c| c.weight > 0.0), || {
            "component weights must be strictly positive".into()
        })?;
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        validate((total - 1.0).abs() <= 1e-12, || {
            format!("component weights sum to {total}, not 1")
        })?;
        for c in &self.components {
            c.kind.validate(self.dim, &self.domain)?;
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Untruncated mixture density.
    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.components.iter().map(|c| c.weight * c.kind.pdf(x)).sum()
    }

    /// Analytic mass of the untruncated mixture inside `[lo, hi]`.
    pub fn box_mass(&self, lo: &[f64], hi: &[f64]) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.kind.box_mass(lo, hi))
            .sum()
    }

    /// Analytic mass of the untruncated mixture inside the domain box.
    pub fn domain_mass(&self) -> f64 {
        self.box_mass(&self.domain.lo, &self.domain.hi)
    }
}

/// Draws `m` IID points from `spec` truncated to its domain box.
pub fn sample_density(spec: &DensitySpec, m: usize, seed: Seed) -> Result<PointCloud> {
    sample_density_capped(spec, m, seed, DEFAULT_REJECTION_CAP)
}

pub fn sample_density_capped(
    spec: &DensitySpec,
    m: usize,
    seed: Seed,
    cap: usize,
) -> Result<PointCloud> {
    spec.validate()?;
    let mut rng = seed.rng();
    let dim = spec.dim;
    let weights = WeightedIndex::new(spec.components.iter().map(|c| c.weight))
        .map_err(|e| Error::Validation(e.to_string()))?;
    let mut coords = vec![0.0; m * dim];
    for out in coords.chunks_exact_mut(dim) {
        let mut attempts = 0;
        loop {
            if attempts == cap {
                return Err(Error::DegenerateSpec(format!(
                    "{cap} consecutive draws fell outside the domain box"
                )));
            }
            attempts += 1;
            let c = &spec.components[weights.sample(&mut rng)];
            c.kind.sample(&mut rng, out);
            if spec.domain.contains(out) {
                break;
            }
        }
    }
    PointCloud::new(dim, coords)
}

/// A density tabulated at pixel centers.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthGrid {
    pub grid: PixelGrid,
    pub values: Vec<f64>,
    /// Analytic mass of the untruncated spec inside the grid box.
    pub box_mass: f64,
}

/// Tabulates the truncated density of `spec` at the pixel centers of `grid`,
/// normalized to integrate to one over the grid box.
pub fn eval_density(spec: &DensitySpec, grid: &PixelGrid) -> Result<GroundTruthGrid> {
    spec.validate()?;
    grid.check_dim(spec.dim)?;
    let mut values: Vec<f64> = (0..grid.len())
        .map(|i| spec.pdf(&grid.pixel_center(i)))
        .collect();
    let total: f64 = values.iter().sum::<f64>() * grid.pixel_volume();
    if !(total > 0.0) {
        return Err(Error::DegenerateSpec(
            "density vanishes at every pixel center".into(),
        ));
    }
    values.iter_mut().for_each(|v| *v /= total);
    Ok(GroundTruthGrid {
        box_mass: spec.box_mass(&grid.lower(), &grid.upper()),
        grid: grid.clone(),
        values,
    })
}

/// `||v - v_m|| / ||v||`.
pub fn relative_error(v: &[f64], v_m: &[f64]) -> Result<f64> {
    if v.len() != v_m.len() {
        return Err(Error::LengthMismatch {
            expected: v.len(),
            got: v_m.len(),
        });
    }
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::DivisionByZero("reference vector has zero norm".into()));
    }
    let diff: f64 = v
        .iter()
        .zip(v_m)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(diff / norm)
}

/// Canonical test densities on the `[0, 100]^2` domain.
pub mod canonical {
    use super::*;

    pub fn unit_domain_2d() -> DomainBox {
        DomainBox {
            lo: vec![0.0, 0.0],
            hi: vec![100.0, 100.0],
        }
    }

    /// `count` equal-weight isotropic Gaussians whose means are drawn
    /// uniformly from the integer meshgrid `{1..100}^2`.
    pub fn gaussian_mixture(count: usize, sigma: f64, seed: Seed) -> DensitySpec {
        let mut rng = seed.rng();
        let w = 1.0 / count as f64;
        let mut components: Vec<Component> = (0..count)
            .map(|_| Component {
                weight: w,
                kind: ComponentKind::IsotropicGaussian {
                    mean: vec![rng.gen_range(1..=100) as f64, rng.gen_range(1..=100) as f64],
                    sigma,
                },
            })
            .collect();
        fix_weight_sum(&mut components);
        DensitySpec {
            dim: 2,
            domain: unit_domain_2d(),
            components,
        }
    }

    /// Density 1: 100 Gaussians with sigma = 4.5 pixels.
    pub fn density1(seed: Seed) -> DensitySpec {
        gaussian_mixture(100, 4.5, seed)
    }

    /// Density 2: five overlapping uniform boxes.
    pub fn density2() -> DensitySpec {
        let boxes = [
            ([10.0, 10.0], [60.0, 45.0]),
            ([30.0, 25.0], [85.0, 70.0]),
            ([5.0, 50.0], [45.0, 95.0]),
            ([55.0, 55.0], [95.0, 90.0]),
            ([20.0, 15.0], [75.0, 85.0]),
        ];
        let components = boxes
            .iter()
            .map(|(lo, hi)| Component {
                weight: 0.2,
                kind: ComponentKind::AxisAlignedUniform {
                    lo: lo.to_vec(),
                    hi: hi.to_vec(),
                },
            })
            .collect();
        DensitySpec {
            dim: 2,
            domain: unit_domain_2d(),
            components,
        }
    }

    /// Density 3: half Gaussian, half uniform box.
    pub fn density3() -> DensitySpec {
        DensitySpec {
            dim: 2,
            domain: unit_domain_2d(),
            components: vec![
                Component {
                    weight: 0.5,
                    kind: ComponentKind::IsotropicGaussian {
                        mean: vec![35.0, 62.0],
                        sigma: 12.0,
                    },
                },
                Component {
                    weight: 0.5,
                    kind: ComponentKind::AxisAlignedUniform {
                        lo: vec![50.0, 15.0],
                        hi: vec![85.0, 50.0],
                    },
                },
            ],
        }
    }

    /// Density 4: exponential, Gaussian, gamma and uniform in equal parts.
    pub fn density4() -> DensitySpec {
        DensitySpec {
            dim: 2,
            domain: unit_domain_2d(),
            components: vec![
                Component {
                    weight: 0.25,
                    kind: ComponentKind::Exponential {
                        rate: 0.08,
                        origin: vec![5.0, 5.0],
                    },
                },
                Component {
                    weight: 0.25,
                    kind: ComponentKind::IsotropicGaussian {
                        mean: vec![30.0, 72.0],
                        sigma: 8.0,
                    },
                },
                Component {
                    weight: 0.25,
                    kind: ComponentKind::Gamma {
                        shape: 4.0,
                        scale: 5.0,
                        origin: vec![45.0, 40.0],
                    },
                },
                Component {
                    weight: 0.25,
                    kind: ComponentKind::AxisAlignedUniform {
                        lo: vec![60.0, 10.0],
                        hi: vec![92.0, 35.0],
                    },
                },
            ],
        }
    }

    fn fix_weight_sum(components: &mut [Component]) {
        let rest: f64 = components[1..].iter().map(|c| c.weight).sum();
        components[0].weight = 1.0 - rest;
    }
}

#[cfg(test)]
mod tests {
    use super::canonical::*;
    use super::*;

    fn uniform_spec(lo: [f64; 2], hi: [f64; 2]) -> DensitySpec {
        DensitySpec {
            dim: 2,
            domain: DomainBox {
                lo: lo.to_vec(),
                hi: hi.to_vec(),
            },
            components: vec![Component {
                weight: 1.0,
                kind: ComponentKind::AxisAlignedUniform {
                    lo: lo.to_vec(),
                    hi: hi.to_vec(),
                },
            }],
        }
    }

    #[test]
    fn empty_sample() {
        let cloud = sample_density(&density3(), 0, Seed::new(1)).unwrap();
        assert!(cloud.is_empty());
        assert_eq!(cloud.dim(), 2);
    }

    #[test]
    fn uniform_sample_mean() {
        let spec = uniform_spec([0.0, 0.0], [1.0, 1.0]);
        let cloud = sample_density(&spec, 100_000, Seed::new(11)).unwrap();
        let mean = cloud.mean();
        assert!((mean[0] - 0.5).abs() < 0.01 && (mean[1] - 0.5).abs() < 0.01, "{mean:?}");
    }

    #[test]
    fn gaussian_mixture_sample_stays_in_domain() {
        let spec = density1(Seed::new(5));
        spec.validate().unwrap();
        assert_eq!(spec.components.len(), 100);
        let cloud = sample_density(&spec, 1000, Seed::new(6)).unwrap();
        assert_eq!(cloud.len(), 1000);
        assert!(cloud.iter().all(|p| spec.domain.contains(p)));
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = density4();
        let a = sample_density(&spec, 500, Seed::new(3)).unwrap();
        let b = sample_density(&spec, 500, Seed::new(3)).unwrap();
        let c = sample_density(&spec, 500, Seed::new(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_weights_rejected() {
        let mut spec = density3();
        spec.components[0].weight = 0.6;
        assert!(matches!(
            sample_density(&spec, 10, Seed::new(1)),
            Err(Error::Validation(_))
        ));
        spec.components[0].weight = -0.5;
        spec.components[1].weight = 1.5;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn rejection_cap_reports_degenerate_spec() {
        // Almost all mass lies far outside the domain.
        let spec = DensitySpec {
            dim: 1,
            domain: DomainBox {
                lo: vec![0.0],
                hi: vec![1.0],
            },
            components: vec![Component {
                weight: 1.0,
                kind: ComponentKind::IsotropicGaussian {
                    mean: vec![100.0],
                    sigma: 1.0,
                },
            }],
        };
        let err = sample_density_capped(&spec, 1, Seed::new(1), 1000).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpec(_)));
    }

    #[test]
    fn uniform_on_box_is_constant() {
        let spec = uniform_spec([0.0, 0.0], [10.0, 5.0]);
        let grid = PixelGrid::covering(&[0.0, 0.0], &[10.0, 5.0], &[7, 3]).unwrap();
        let truth = eval_density(&spec, &grid).unwrap();
        for v in &truth.values {
            assert!((v - 1.0 / 50.0).abs() < 1e-15);
        }
    }

    #[test]
    fn centered_gaussian_peaks_at_center_pixel() {
        let spec = DensitySpec {
            dim: 2,
            domain: DomainBox {
                lo: vec![0.0, 0.0],
                hi: vec![11.0, 11.0],
            },
            components: vec![Component {
                weight: 1.0,
                kind: ComponentKind::IsotropicGaussian {
                    mean: vec![5.5, 5.5],
                    sigma: 2.0,
                },
            }],
        };
        let grid = PixelGrid::square(11);
        let truth = eval_density(&spec, &grid).unwrap();
        let argmax = (0..grid.len())
            .max_by(|&a, &b| truth.values[a].total_cmp(&truth.values[b]))
            .unwrap();
        assert_eq!(argmax, grid.flat_index(&[5, 5]));
        let total: f64 = truth.values.iter().sum::<f64>() * grid.pixel_volume();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn disjoint_uniform_masses() {
        let spec = DensitySpec {
            dim: 2,
            domain: DomainBox {
                lo: vec![0.0, 0.0],
                hi: vec![20.0, 20.0],
            },
            components: vec![
                Component {
                    weight: 0.3,
                    kind: ComponentKind::AxisAlignedUniform {
                        lo: vec![0.0, 0.0],
                        hi: vec![5.0, 8.0],
                    },
                },
                Component {
                    weight: 0.7,
                    kind: ComponentKind::AxisAlignedUniform {
                        lo: vec![10.0, 10.0],
                        hi: vec![20.0, 13.0],
                    },
                },
            ],
        };
        let grid = PixelGrid::square(20);
        let truth = eval_density(&spec, &grid).unwrap();
        let mass_in = |lo: [f64; 2], hi: [f64; 2]| -> f64 {
            (0..grid.len())
                .filter(|&i| {
                    let c = grid.pixel_center(i);
                    c[0] > lo[0] && c[0] < hi[0] && c[1] > lo[1] && c[1] < hi[1]
                })
                .map(|i| truth.values[i] * grid.pixel_volume())
                .sum()
        };
        assert!((mass_in([0.0, 0.0], [5.0, 8.0]) - 0.3).abs() < 1e-6);
        assert!((mass_in([10.0, 10.0], [20.0, 13.0]) - 0.7).abs() < 1e-6);
        assert!((truth.box_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_mass_matches_quadrature() {
        for spec in [density3(), density4()] {
            let lo = [20.0, 10.0];
            let hi = [70.0, 60.0];
            let n = 1000;
            let h = 50.0 / n as f64;
            let mut quad = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let x = [lo[0] + (i as f64 + 0.5) * h, lo[1] + (j as f64 + 0.5) * h];
                    quad += spec.pdf(&x) * h * h;
                }
            }
            let exact = spec.box_mass(&lo, &hi);
            assert!((quad - exact).abs() < 2e-3, "{quad} vs {exact}");
        }
    }

    #[test]
    fn eval_density_rejects_dim_mismatch() {
        let grid = PixelGrid::new(vec![0.0], vec![1.0], vec![10]).unwrap();
        assert!(matches!(
            eval_density(&density3(), &grid),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(relative_error(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!((relative_error(&[3.0, 4.0], &[3.0, 0.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(
            relative_error(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::DivisionByZero(_))
        ));
        assert!(relative_error(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn csv_round_trip_and_empty_file() {
        let cloud = sample_density(&density3(), 50, Seed::new(9)).unwrap();
        let mut buf = Vec::new();
        cloud.write_csv(&mut buf).unwrap();
        let back = PointCloud::read_csv(&buf[..], None).unwrap();
        assert_eq!(back, cloud);

        let empty = PointCloud::read_csv(&b""[..], Some(3)).unwrap();
        assert_eq!(empty.dim(), 3);
        assert!(empty.is_empty());
        assert!(PointCloud::read_csv(&b""[..], None).is_err());
        assert!(PointCloud::read_csv(&b"1,2\n3\n"[..], None).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = density4();
        let back = DensitySpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(back, spec);
    }
}
