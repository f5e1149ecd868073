#![allow(dead_code)]

pub mod schema;

use rand::Rng;
use raden::projection::{BallSet, Geometry, HalfSpaceSet};
use raden::{PixelGrid, PointCloud};

/// Plain double loop over rows and points.
pub fn naive_counts(cloud: &PointCloud, geometry: &Geometry) -> Vec<usize> {
    let mut out = Vec::new();
    match geometry {
        Geometry::Ball(b) => {
            for c in &b.centers {
                for &s in &b.radii {
                    let mut n = 0;
                    for x in cloud.iter() {
                        let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                        if d2 <= s * s {
                            n += 1;
                        }
                    }
                    out.push(n);
                }
            }
        }
        Geometry::HalfSpace(h) => {
            for t in &h.directions {
                for &s in &h.offsets {
                    let mut n = 0;
                    for x in cloud.iter() {
                        let dot: f64 = (0..x.len()).map(|k| (x[k] - h.anchor[k]) * t[k]).sum();
                        if dot <= s {
                            n += 1;
                        }
                    }
                    out.push(n);
                }
            }
        }
    }
    out
}

/// Membership of pixel `i` in `row` from the pixel center, computed directly.
pub fn naive_member(grid: &PixelGrid, geometry: &Geometry, row: usize, i: usize) -> bool {
    let shape = grid.shape();
    let mut c = Vec::with_capacity(shape.len());
    let mut rest = i;
    for k in 0..shape.len() {
        let ik = rest % shape[k];
        rest /= shape[k];
        c.push(grid.origin()[k] + (ik as f64 + 0.5) * grid.spacing()[k]);
    }
    let one = PointCloud::from_points(c.len(), &[c]).unwrap();
    naive_counts(&one, &single_row(geometry, row))[0] == 1
}

fn single_row(geometry: &Geometry, row: usize) -> Geometry {
    match geometry {
        Geometry::Ball(b) => {
            let (j, i) = (row / b.radii.len(), row % b.radii.len());
            Geometry::Ball(BallSet::new(vec![b.centers[j].clone()], vec![b.radii[i]]).unwrap())
        }
        Geometry::HalfSpace(h) => {
            let (j, i) = (row / h.offsets.len(), row % h.offsets.len());
            Geometry::HalfSpace(
                HalfSpaceSet::new(vec![h.directions[j].clone()], vec![h.offsets[i]], h.anchor.clone()).unwrap(),
            )
        }
    }
}

/// Strictly increasing values drawn from `0.5..hi`, optionally integers.
pub fn increasing<R: Rng>(rng: &mut R, count: usize, hi: f64, integer: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..count)
        .map(|_| {
            let x = rng.gen_range(0.5..hi);
            if integer {
                x.round().max(1.0)
            } else {
                x
            }
        })
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// A random planar ball or half-space geometry with at most ~`max_rows` rows.
/// Integer coordinates put many points exactly on region boundaries.
pub fn random_geometry<R: Rng>(rng: &mut R, max_rows: usize, integer: bool) -> Geometry {
    let per = rng.gen_range(1..=8usize);
    let groups = rng.gen_range(1..=(max_rows / per).max(1));
    let coord = |rng: &mut R| {
        let x: f64 = rng.gen_range(-10.0..10.0);
        if integer {
            x.round()
        } else {
            x
        }
    };
    if rng.gen_bool(0.5) {
        let centers = (0..groups).map(|_| vec![coord(rng), coord(rng)]).collect();
        let radii = increasing(rng, per, 12.0, integer);
        Geometry::Ball(BallSet::new(centers, radii).unwrap())
    } else {
        let axis = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        let directions = (0..groups)
            .map(|_| {
                if integer {
                    axis[rng.gen_range(0..4)].to_vec()
                } else {
                    let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    vec![a.cos(), a.sin()]
                }
            })
            .collect();
        let mut offsets: Vec<f64> = increasing(rng, per, 20.0, integer).iter().map(|s| s - 10.0).collect();
        offsets.dedup();
        let anchor = vec![coord(rng), coord(rng)];
        Geometry::HalfSpace(HalfSpaceSet::new(directions, offsets, anchor).unwrap())
    }
}

pub fn random_cloud<R: Rng>(rng: &mut R, m: usize, integer: bool) -> PointCloud {
    let pts: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            (0..2)
                .map(|_| {
                    let x: f64 = rng.gen_range(-12.0..12.0);
                    if integer {
                        x.round()
                    } else {
                        x
                    }
                })
                .collect()
        })
        .collect();
    PointCloud::from_points(2, &pts).unwrap()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    num / den
}
