mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raden::baselines::{kde, KdeConfig};
use raden::bounds::{dkw_epsilon, halfspace_l2_bound, spherical_l2_bound};
use raden::manifold::{pca_patch, PatchConfig};
use raden::pointcloud::canonical;
use raden::projection::{Geometry, Normalization};
use raden::{assemble, measure, sample_density, AssembleOptions, LinearOperator, PixelGrid, PointCloud, Seed, WeightMode};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_grid<R: Rng>(rng: &mut R) -> PixelGrid {
    let nx = rng.gen_range(2..14);
    let ny = rng.gen_range(2..14);
    PixelGrid::covering(&[-10.0, -10.0], &[10.0, 10.0], &[nx, ny]).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn counts_match_double_loop(seed in any::<u64>(), m in 0usize..=200, integer in any::<bool>()) {
        let mut r = rng(seed);
        let geometry = random_geometry(&mut r, 500, integer);
        let cloud = random_cloud(&mut r, m, integer);
        let b = measure(&cloud, &geometry, Normalization::RawCounts).unwrap();
        let want: Vec<f64> = naive_counts(&cloud, &geometry).into_iter().map(|c| c as f64).collect();
        prop_assert_eq!(&b.values, &want);
        if m > 0 {
            let frac = measure(&cloud, &geometry, Normalization::PerM).unwrap();
            for (f, c) in frac.values.iter().zip(&want) {
                prop_assert_eq!(*f, c / m as f64);
            }
        }
    }

    #[test]
    fn counts_are_nested_in_the_offset(seed in any::<u64>(), integer in any::<bool>()) {
        let mut r = rng(seed);
        let geometry = random_geometry(&mut r, 300, integer);
        let cloud = random_cloud(&mut r, 150, integer);
        let b = measure(&cloud, &geometry, Normalization::RawCounts).unwrap();
        let per = match &geometry {
            Geometry::Ball(s) => s.radii.len(),
            Geometry::HalfSpace(s) => s.offsets.len(),
        };
        for group in b.values.chunks(per) {
            prop_assert!(group.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn adjoint_identity_and_storage_agreement(seed in any::<u64>(), literal in any::<bool>()) {
        let mut r = rng(seed);
        let grid = random_grid(&mut r);
        let integer = r.gen_bool(0.3);
        let geometry = random_geometry(&mut r, 200, integer);
        let weight_mode = if literal { WeightMode::PaperLiteral } else { WeightMode::Density };
        let free = assemble(&grid, &geometry, &AssembleOptions { weight_mode, ..AssembleOptions::matrix_free() }).unwrap();
        let sparse = assemble(&grid, &geometry, &AssembleOptions { weight_mode, ..AssembleOptions::explicit() }).unwrap();
        let v: Vec<f64> = (0..grid.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..free.rows()).map(|_| r.gen_range(-1.0..1.0)).collect();
        for op in [&free, &sparse] {
            let rv = op.apply(&v).unwrap();
            let rtu = op.adjoint_apply(&u).unwrap();
            let (lhs, rhs) = (dot(&rv, &u), dot(&v, &rtu));
            let scale = rv.iter().map(|x| x.abs()).sum::<f64>() * u.iter().fold(0.0f64, |a, x| a.max(x.abs())) + 1e-300;
            prop_assert!((lhs - rhs).abs() <= 1e-8 * scale, "{} vs {}", lhs, rhs);
        }
        let (a, b) = (free.apply(&v).unwrap(), sparse.apply(&v).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
        }
        let (a, b) = (free.adjoint_apply(&u).unwrap(), sparse.adjoint_apply(&u).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn pattern_matches_center_membership(seed in any::<u64>()) {
        let mut r = rng(seed);
        let grid = random_grid(&mut r);
        let integer = r.gen_bool(0.5);
        let geometry = random_geometry(&mut r, 200, integer);
        let op = assemble(&grid, &geometry, &AssembleOptions::default()).unwrap();
        for _ in 0..40 {
            let row = r.gen_range(0..op.rows());
            let i = r.gen_range(0..grid.len());
            let pattern = op.row_pattern(row);
            prop_assert_eq!(pattern.contains(&i), naive_member(&grid, &geometry, row, i));
        }
    }

    #[test]
    fn histogram_forward_reproduces_counts(seed in any::<u64>(), m in 1usize..200) {
        let mut r = rng(seed);
        let grid = random_grid(&mut r);
        let integer = r.gen_bool(0.5);
        let geometry = random_geometry(&mut r, 200, integer);
        let pts: Vec<Vec<f64>> = (0..m).map(|_| grid.pixel_center(r.gen_range(0..grid.len()))).collect();
        let cloud = PointCloud::from_points(2, &pts).unwrap();
        let op = assemble(&grid, &geometry, &AssembleOptions::default()).unwrap();
        let scale = m as f64 * grid.pixel_volume();
        let v: Vec<f64> = cloud.histogram(&grid).unwrap().iter().map(|h| h / scale).collect();
        let counts = measure(&cloud, &geometry, Normalization::RawCounts).unwrap();
        let rv = op.apply(&v).unwrap();
        for (a, c) in rv.iter().zip(&counts.values) {
            let back = a * scale / op.weight();
            prop_assert!((back - back.round()).abs() < 1e-6);
            prop_assert_eq!(back.round(), *c);
        }
    }

    #[test]
    fn sampling_is_deterministic(seed in any::<u64>(), m in 0usize..300) {
        let spec = canonical::density4();
        let a = sample_density(&spec, m, Seed::new(seed)).unwrap();
        let b = sample_density(&spec, m, Seed::new(seed)).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        prop_assert_eq!(&x, &y);
        prop_assert_eq!(PointCloud::read_csv(&x[..], Some(2)).unwrap(), a);
    }

    #[test]
    fn kde_is_nonnegative_and_normalized(seed in any::<u64>(), m in 1usize..100) {
        let mut r = rng(seed);
        let grid = random_grid(&mut r);
        let cloud = random_cloud(&mut r, m, false);
        let est = kde(&cloud, &grid, &KdeConfig::default()).unwrap();
        prop_assert!(est.values.iter().all(|v| *v >= 0.0));
        prop_assert!((est.mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pca_is_rotation_invariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let pts: Vec<Vec<f64>> = (0..120)
            .map(|_| {
                let (a, b): (f64, f64) = (r.gen_range(-6.0..6.0), r.gen_range(-3.0..3.0));
                vec![a, b, 0.05 * (a * a + b * b) + r.gen_range(-0.2..0.2)]
            })
            .collect();
        let cloud = PointCloud::from_points(3, &pts).unwrap();
        let q = nalgebra::Rotation3::from_euler_angles(r.gen_range(0.0..6.3), r.gen_range(0.0..6.3), r.gen_range(0.0..6.3));
        let t = nalgebra::Vector3::new(r.gen_range(-5.0..5.0), r.gen_range(-5.0..5.0), r.gen_range(-5.0..5.0));
        let moved = cloud.map(3, |p, o| {
            let v = q * nalgebra::Vector3::new(p[0], p[1], p[2]) + t;
            o.copy_from_slice(v.as_slice());
        }).unwrap();
        let z = [0.5, -0.5, 0.1];
        let zm = q * nalgebra::Vector3::new(z[0], z[1], z[2]) + t;
        let cfg = PatchConfig { r: 5.0, ..Default::default() };
        let a = pca_patch(&cloud, &z, &cfg).unwrap();
        let b = pca_patch(&moved, zm.as_slice(), &cfg).unwrap();
        prop_assert_eq!(a.dim, b.dim);
        prop_assert_eq!(&a.indices, &b.indices);
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn bound_formulas_agree_with_a_second_path(m in 1usize..100_000, k in 1usize..1_000_000, p in 1e-6f64..0.999) {
        let e = dkw_epsilon(m, p).unwrap();
        let alt = (-(p / 2.0).ln() / m as f64 / 2.0).sqrt();
        prop_assert!((e - alt).abs() <= 1e-12 * alt);
        // Sphere areas from the recursion A(n) = 2 pi A(n - 2) / (n - 2).
        let mut area = vec![0.0, 2.0, 2.0 * std::f64::consts::PI];
        for n in 3..=10 {
            area.push(2.0 * std::f64::consts::PI * area[n - 2] / (n - 2) as f64);
        }
        for n in 1..=10 {
            let hs = halfspace_l2_bound(m, k, p, n).unwrap();
            let alt = area[n] * (2f64.ln() + (k as f64).ln() - p.ln()) / m as f64;
            prop_assert!((hs - alt).abs() <= 1e-12 * alt, "n = {}", n);
        }
        let sph = spherical_l2_bound(m, k, p).unwrap();
        let alt = (2.0 * k as f64 / p).ln() / m as f64;
        prop_assert!((sph - alt).abs() <= 1e-12 * alt.abs().max(1e-300));
    }
}
