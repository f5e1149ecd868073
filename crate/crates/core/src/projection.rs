//! Empirical Radon projections: counting observations in half spaces and balls.
//!
//! A half space row is `{x : (x - anchor) . theta <= s}` and a ball row is
//! `{x : |x - center|^2 <= s^2}`; both inequalities are closed. The
//! predicates [`half_space_contains`] and [`ball_contains`] are the single
//! definition of membership used by counting, operator assembly and the
//! test oracles.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validate, Error, Result};
use crate::grid::PixelGrid;
use crate::pointcloud::PointCloud;

const UNIT_TOL: f64 = 1e-9;

#[inline]
pub fn shifted_dot(x: &[f64], anchor: &[f64], theta: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..x.len() {
        acc += (x[k] - anchor[k]) * theta[k];
    }
    acc
}

#[inline]
pub fn squared_distance(x: &[f64], c: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..x.len() {
        let d = x[k] - c[k];
        acc += d * d;
    }
    acc
}

#[inline]
pub fn half_space_contains(x: &[f64], anchor: &[f64], theta: &[f64], s: f64) -> bool {
    shifted_dot(x, anchor, theta) <= s
}

#[inline]
pub fn ball_contains(x: &[f64], center: &[f64], s: f64) -> bool {
    squared_distance(x, center) <= s * s
}

fn check_unit(theta: &[f64]) -> Result<()> {
    let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
    validate((norm - 1.0).abs() <= UNIT_TOL, || {
        format!("direction has norm {norm}, expected 1")
    })
}

/// `|{i : x_i . theta <= s}|`.
pub fn count_half_space(cloud: &PointCloud, s: f64, theta: &[f64]) -> Result<usize> {
    if theta.len() != cloud.dim() {
        return Err(Error::DimensionMismatch {
            expected: cloud.dim(),
            got: theta.len(),
        });
    }
    check_unit(theta)?;
    let origin = vec![0.0; cloud.dim()];
    Ok(cloud
        .iter()
        .filter(|x| half_space_contains(x, &origin, theta, s))
        .count())
}

/// `|{i : |x_i - center| <= s}|`.
pub fn count_ball(cloud: &PointCloud, center: &[f64], s: f64) -> Result<usize> {
    if center.len() != cloud.dim() {
        return Err(Error::DimensionMismatch {
            expected: cloud.dim(),
            got: center.len(),
        });
    }
    validate(s >= 0.0, || format!("ball radius must be nonnegative, got {s}"))?;
    Ok(cloud.iter().filter(|x| ball_contains(x, center, s)).count())
}

/// Half spaces `(s_i, theta_j)`; row `j * offsets.len() + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpaceSet {
    pub directions: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
    /// Point from which offsets are measured.
    pub anchor: Vec<f64>,
}

impl HalfSpaceSet {
    pub fn new(directions: Vec<Vec<f64>>, offsets: Vec<f64>, anchor: Vec<f64>) -> Result<Self> {
        let set = Self {
            directions,
            offsets,
            anchor,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.anchor.len();
        validate(dim > 0, || "half space anchor must have positive dimension".into())?;
        for d in &self.directions {
            if d.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: d.len(),
                });
            }
            check_unit(d)?;
        }
        validate(self.offsets.windows(2).all(|w| w[0] < w[1]), || {
            "offsets must be strictly increasing".into()
        })?;
        validate(self.offsets.iter().all(|s| s.is_finite()), || {
            "offsets must be finite".into()
        })
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn rows(&self) -> usize {
        self.directions.len() * self.offsets.len()
    }

    /// `(direction index, offset index)` of a row.
    pub fn row(&self, row: usize) -> (usize, usize) {
        (row / self.offsets.len(), row % self.offsets.len())
    }

    pub fn contains(&self, row: usize, x: &[f64]) -> bool {
        let (j, i) = self.row(row);
        half_space_contains(x, &self.anchor, &self.directions[j], self.offsets[i])
    }
}

/// Balls `(x_j, s_i)`; row `j * radii.len() + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSet {
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
}

impl BallSet {
    pub fn new(centers: Vec<Vec<f64>>, radii: Vec<f64>) -> Result<Self> {
        let set = Self { centers, radii };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        validate(!self.centers.is_empty(), || "ball set has no centers".into())?;
        let dim = self.centers[0].len();
        validate(dim > 0, || "ball centers must have positive dimension".into())?;
        for c in &self.centers {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.len(),
                });
            }
        }
        validate(self.radii.iter().all(|r| r.is_finite() && *r > 0.0), || {
            "radii must be strictly positive".into()
        })?;
        validate(self.radii.windows(2).all(|w| w[0] < w[1]), || {
            "radii must be strictly increasing".into()
        })
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    pub fn rows(&self) -> usize {
        self.centers.len() * self.radii.len()
    }

    /// `(center index, radius index)` of a row.
    pub fn row(&self, row: usize) -> (usize, usize) {
        (row / self.radii.len(), row % self.radii.len())
    }

    pub fn contains(&self, row: usize, x: &[f64]) -> bool {
        let (j, i) = self.row(row);
        ball_contains(x, &self.centers[j], self.radii[i])
    }
}

/// Regions over which observations are counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Geometry {
    HalfSpace(HalfSpaceSet),
    Ball(BallSet),
}

impl Geometry {
    pub fn dim(&self) -> usize {
        match self {
            Geometry::HalfSpace(h) => h.dim(),
            Geometry::Ball(b) => b.dim(),
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            Geometry::HalfSpace(h) => h.rows(),
            Geometry::Ball(b) => b.rows(),
        }
    }

    pub fn contains(&self, row: usize, x: &[f64]) -> bool {
        match self {
            Geometry::HalfSpace(h) => h.contains(row, x),
            Geometry::Ball(b) => b.contains(row, x),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Geometry::HalfSpace(h) => h.validate(),
            Geometry::Ball(b) => b.validate(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Geometry::HalfSpace(_) => "half-space",
            Geometry::Ball(_) => "ball",
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(s)?;
        g.validate()?;
        Ok(g)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

/// Sampling of half spaces for a 2-D grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpaceConfig {
    /// Directions `theta_i = pi * i / angles`.
    pub angles: usize,
    /// Number of equispaced offsets on `[-half_width, half_width]`.
    pub offsets: usize,
    /// Defaults to half the longest side of the grid box.
    pub half_width: Option<f64>,
}

impl Default for HalfSpaceConfig {
    fn default() -> Self {
        Self {
            angles: 180,
            offsets: 101,
            half_width: None,
        }
    }
}

/// Half spaces uniformly covering directions times offsets, with offsets
/// measured from the grid center.
pub fn make_halfspace_geometry(grid: &PixelGrid, cfg: &HalfSpaceConfig) -> Result<HalfSpaceSet> {
    grid.validate()?;
    validate(grid.dim() == 2, || {
        format!("half space sampling needs a 2-D grid, got {}-D", grid.dim())
    })?;
    validate(cfg.angles > 0 && cfg.offsets > 0, || {
        "need at least one angle and one offset".into()
    })?;
    let half_width = cfg.half_width.unwrap_or_else(|| {
        let up = grid.upper();
        (0..2)
            .map(|k| 0.5 * (up[k] - grid.origin()[k]))
            .fold(0.0, f64::max)
    });
    validate(half_width > 0.0, || "half width must be positive".into())?;
    let directions = (0..cfg.angles)
        .map(|i| {
            let a = std::f64::consts::PI * i as f64 / cfg.angles as f64;
            vec![a.cos(), a.sin()]
        })
        .collect();
    let offsets = if cfg.offsets == 1 {
        vec![0.0]
    } else {
        let step = 2.0 * half_width / (cfg.offsets - 1) as f64;
        (0..cfg.offsets)
            .map(|i| -half_width + i as f64 * step)
            .collect()
    };
    HalfSpaceSet::new(directions, offsets, grid.center())
}

/// Balls centered at every pixel center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallConfig {
    /// Radii in pixel units.
    pub radii: Vec<f64>,
}

impl Default for BallConfig {
    fn default() -> Self {
        Self {
            radii: (4..=20).map(f64::from).collect(),
        }
    }
}

pub fn make_ball_geometry(grid: &PixelGrid, cfg: &BallConfig) -> Result<BallSet> {
    grid.validate()?;
    validate(grid.dim() == 2, || {
        format!("ball sampling needs a 2-D grid, got {}-D", grid.dim())
    })?;
    let unit = grid.pixel_volume().powf(1.0 / grid.dim() as f64);
    let centers = (0..grid.len()).map(|i| grid.pixel_center(i)).collect();
    BallSet::new(centers, cfg.radii.iter().map(|r| r * unit).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    RawCounts,
    PerM,
}

/// Stacked projection values, one per geometry row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementVector {
    pub values: Vec<f64>,
    pub normalization: Normalization,
    /// Sample count the values were computed from.
    pub m: usize,
}

impl MeasurementVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values rescaled to per-m normalization.
    pub fn per_m(&self) -> Vec<f64> {
        match self.normalization {
            Normalization::PerM => self.values.clone(),
            Normalization::RawCounts => {
                let m = self.m.max(1) as f64;
                self.values.iter().map(|v| v / m).collect()
            }
        }
    }

    /// Values rescaled to raw counts.
    pub fn raw_counts(&self) -> Vec<f64> {
        match self.normalization {
            Normalization::RawCounts => self.values.clone(),
            Normalization::PerM => self.values.iter().map(|v| v * self.m as f64).collect(),
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row_index,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{i},{v:?}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Reads `row_index,value` rows; indices must be `0..n` in order.
    pub fn read_csv<R: std::io::Read>(r: R, normalization: Normalization, m: usize) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut values = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let idx: usize = rec
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad row index in {rec:?}")))?;
            if idx != values.len() {
                return Err(Error::Parse(format!(
                    "row index {idx} out of order, expected {}",
                    values.len()
                )));
            }
            let v: f64 = rec
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad value in {rec:?}")))?;
            values.push(v);
        }
        Ok(Self {
            values,
            normalization,
            m,
        })
    }
}

/// Counts observations in every row of `geometry`.
pub fn measure(
    cloud: &PointCloud,
    geometry: &Geometry,
    normalization: Normalization,
) -> Result<MeasurementVector> {
    geometry.validate()?;
    if geometry.dim() != cloud.dim() {
        return Err(Error::DimensionMismatch {
            expected: geometry.dim(),
            got: cloud.dim(),
        });
    }
    let counts = match geometry {
        Geometry::HalfSpace(h) => count_half_spaces(cloud, h),
        Geometry::Ball(b) => count_balls(cloud, b),
    };
    let m = cloud.len();
    let values = match normalization {
        Normalization::RawCounts => counts.iter().map(|&c| c as f64).collect(),
        Normalization::PerM => {
            if m == 0 {
                vec![0.0; counts.len()]
            } else {
                counts.iter().map(|&c| c as f64 / m as f64).collect()
            }
        }
    };
    Ok(MeasurementVector {
        values,
        normalization,
        m,
    })
}

fn count_half_spaces(cloud: &PointCloud, set: &HalfSpaceSet) -> Vec<usize> {
    let per_direction: Vec<Vec<usize>> = set
        .directions
        .par_iter()
        .map(|theta| {
            let mut proj: Vec<f64> = cloud
                .iter()
                .map(|x| shifted_dot(x, &set.anchor, theta))
                .collect();
            proj.sort_unstable_by(f64::total_cmp);
            set.offsets
                .iter()
                .map(|&s| proj.partition_point(|&t| t <= s))
                .collect()
        })
        .collect();
    per_direction.concat()
}

fn count_balls(cloud: &PointCloud, set: &BallSet) -> Vec<usize> {
    let nr = set.radii.len();
    let Some(&r_max) = set.radii.last() else {
        return Vec::new();
    };
    // Points sorted by their first coordinate bound the candidate window.
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.sort_unstable_by(|&a, &b| cloud.point(a)[0].total_cmp(&cloud.point(b)[0]));
    let first: Vec<f64> = order.iter().map(|&i| cloud.point(i)[0]).collect();
    let squared: Vec<f64> = set.radii.iter().map(|r| r * r).collect();

    let per_center: Vec<Vec<usize>> = set
        .centers
        .par_iter()
        .map(|c| {
            let margin = 1e-9 * (1.0 + c[0].abs() + r_max);
            let lo = first.partition_point(|&x| x < c[0] - r_max - margin);
            let hi = first.partition_point(|&x| x <= c[0] + r_max + margin);
            let mut hist = vec![0usize; nr + 1];
            for &i in &order[lo..hi] {
                let d2 = squared_distance(cloud.point(i), c);
                hist[squared.partition_point(|&r2| d2 > r2)] += 1;
            }
            let mut acc = 0;
            hist[..nr]
                .iter()
                .map(|h| {
                    acc += h;
                    acc
                })
                .collect()
        })
        .collect();
    per_center.concat()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: &[[f64; 2]]) -> PointCloud {
        PointCloud::from_points(2, &points.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn half_space_counts() {
        let x = cloud(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        assert_eq!(count_half_space(&x, 1.0, &[1.0, 0.0]).unwrap(), 2);
        assert_eq!(count_half_space(&x, 2.0, &[1.0, 0.0]).unwrap(), 3);
        assert_eq!(count_half_space(&PointCloud::empty(2), 1.0, &[1.0, 0.0]).unwrap(), 0);
        assert!(matches!(
            count_half_space(&x, 1.0, &[1.0, 1.0]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn ball_counts() {
        let x = cloud(&[[0.0, 0.0], [3.0, 4.0], [6.0, 8.0]]);
        assert_eq!(count_ball(&x, &[0.0, 0.0], 5.0).unwrap(), 2);
        assert_eq!(count_ball(&x, &[0.0, 0.0], 10.0).unwrap(), 3);
        assert_eq!(count_ball(&x, &[0.1, 0.2], 0.0).unwrap(), 0);
        assert!(count_ball(&x, &[0.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn default_geometries_have_expected_rows() {
        let grid = PixelGrid::square(100);
        let hs = make_halfspace_geometry(&grid, &HalfSpaceConfig::default()).unwrap();
        assert_eq!(hs.rows(), 18_180);
        assert_eq!(hs.offsets[0], -50.0);
        assert_eq!(hs.offsets[100], 50.0);
        for d in &hs.directions {
            assert!((d[0].hypot(d[1]) - 1.0).abs() < 1e-12);
        }
        let balls = make_ball_geometry(&grid, &BallConfig::default()).unwrap();
        assert_eq!(balls.rows(), 170_000);
        assert_eq!(balls.radii.first(), Some(&4.0));
        assert_eq!(balls.radii.last(), Some(&20.0));
        assert_eq!(balls.centers[0], vec![0.5, 0.5]);
    }

    #[test]
    fn small_geometry_configs() {
        let grid = PixelGrid::square(2);
        let hs = make_halfspace_geometry(
            &grid,
            &HalfSpaceConfig {
                angles: 1,
                offsets: 3,
                half_width: None,
            },
        )
        .unwrap();
        assert_eq!(hs.rows(), 3);
        assert_eq!(hs.offsets, vec![-1.0, 0.0, 1.0]);
        let balls = make_ball_geometry(&grid, &BallConfig { radii: vec![1.0] }).unwrap();
        assert_eq!(balls.rows(), 4);
        let grid1 = PixelGrid::new(vec![0.0], vec![1.0], vec![4]).unwrap();
        assert!(make_halfspace_geometry(&grid1, &HalfSpaceConfig::default()).is_err());
    }

    #[test]
    fn measure_monotone_and_normalized() {
        let spec = crate::pointcloud::canonical::density3();
        let x = crate::pointcloud::sample_density(&spec, 300, crate::Seed::new(2)).unwrap();
        let grid = PixelGrid::square(20);
        let grid100 = PixelGrid::covering(&[0.0, 0.0], &[100.0, 100.0], &[20, 20]).unwrap();
        let hs = Geometry::HalfSpace(
            make_halfspace_geometry(&grid100, &HalfSpaceConfig::default()).unwrap(),
        );
        let b = measure(&x, &hs, Normalization::PerM).unwrap();
        assert!(b.values.iter().all(|v| (0.0..=1.0).contains(v)));
        for dir in b.values.chunks(101) {
            assert!(dir.windows(2).all(|w| w[0] <= w[1]));
        }
        let balls = Geometry::Ball(make_ball_geometry(&grid, &BallConfig { radii: vec![1.0, 5.0, 50.0] }).unwrap());
        let x20 = x.map(2, |p, o| {
            o[0] = p[0] / 5.0;
            o[1] = p[1] / 5.0;
        }).unwrap();
        let c = measure(&x20, &balls, Normalization::RawCounts).unwrap();
        for per_center in c.values.chunks(3) {
            assert!(per_center.windows(2).all(|w| w[0] <= w[1]));
            assert!(per_center.iter().all(|v| v.fract() == 0.0 && *v <= 300.0));
        }
    }

    #[test]
    fn measurement_csv_round_trip() {
        let mv = MeasurementVector {
            values: vec![0.0, 0.25, 1.0 / 3.0],
            normalization: Normalization::PerM,
            m: 12,
        };
        let mut buf = Vec::new();
        mv.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"row_index,value\n0,0.0\n"));
        let back = MeasurementVector::read_csv(&buf[..], Normalization::PerM, 12).unwrap();
        assert_eq!(back, mv);
        assert_eq!(back.raw_counts(), vec![0.0, 3.0, 4.0]);
    }

    #[test]
    fn geometry_json_round_trip() {
        let g = Geometry::Ball(BallSet::new(vec![vec![0.5, 0.5]], vec![1.0, 2.0]).unwrap());
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.contains("\"kind\":\"ball\""));
        assert_eq!(Geometry::from_json(&s).unwrap(), g);
        let bad = r#"{"kind":"ball","centers":[[0.0,0.0]],"radii":[2.0,1.0]}"#;
        assert!(Geometry::from_json(bad).is_err());
    }
}
