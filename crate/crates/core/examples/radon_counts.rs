//! Empirical ball and half-space counts against the exact masses of the
//! same regions.

use raden::pointcloud::canonical;
use raden::projection::{BallSet, HalfSpaceSet};
use raden::{measure, sample_density, Geometry, Normalization, Result, Seed};

fn main() -> Result<()> {
    // Uniform boxes have closed-form masses on axis-aligned half planes.
    let spec = canonical::density2();
    let cloud = sample_density(&spec, 50_000, Seed::new(3))?;

    let offsets: Vec<f64> = (0..=10).map(|i| -50.0 + 10.0 * i as f64).collect();
    let halfspaces = HalfSpaceSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], offsets.clone(), vec![50.0, 50.0])?;
    let b = measure(&cloud, &Geometry::HalfSpace(halfspaces), Normalization::PerM)?;
    println!("fraction below x = s and y = s (empirical / exact)");
    for (i, s) in offsets.iter().enumerate() {
        let cut = 50.0 + s;
        let ex = spec.box_mass(&[-1e9, -1e9], &[cut, 1e9]);
        let ey = spec.box_mass(&[-1e9, -1e9], &[1e9, cut]);
        let (bx, by) = (b.values[i], b.values[offsets.len() + i]);
        println!("  s = {s:>5.1}:  x {bx:.4} / {ex:.4}   y {by:.4} / {ey:.4}");
    }

    let balls = BallSet::new(vec![vec![30.0, 30.0], vec![70.0, 60.0]], vec![5.0, 10.0, 20.0])?;
    let geometry = Geometry::Ball(balls);
    let raw = measure(&cloud, &geometry, Normalization::RawCounts)?;
    println!("ball counts out of {}: {:?}", cloud.len(), raw.values);
    let nested = raw.values.chunks(3).all(|c| c.windows(2).all(|w| w[0] <= w[1]));
    println!("counts nested in the radius: {nested}");
    Ok(())
}
