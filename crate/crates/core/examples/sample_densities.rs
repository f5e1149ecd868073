//! Samples the four planar test densities and compares pixel histograms
//! with the exact pixel masses.
//!
//! cargo run --release --example sample_densities -- [m] [out_dir]

use raden::pointcloud::canonical;
use raden::{eval_density, sample_density, PixelGrid, Result, Seed};

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let m: usize = args.get(1).map_or(20_000, |s| s.parse().expect("m must be an integer"));
    let out = args
        .get(2)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("raden-examples"));
    std::fs::create_dir_all(&out)?;

    let specs = [
        ("density1", canonical::density1(Seed::new(1))),
        ("density2", canonical::density2()),
        ("density3", canonical::density3()),
        ("density4", canonical::density4()),
    ];
    println!("{:<10} {:>8} {:>14} {:>12}", "density", "m", "domain mass", "hist error");
    for (i, (name, spec)) in specs.iter().enumerate() {
        let cloud = sample_density(spec, m, Seed::new(10 + i as u64))?;
        let grid = PixelGrid::covering(&spec.domain.lo, &spec.domain.hi, &[25, 25])?;
        let truth = eval_density(spec, &grid)?;
        let counts = cloud.histogram(&grid)?;
        let hist: Vec<f64> = counts.iter().map(|c| c / (m as f64 * grid.pixel_volume())).collect();
        let err = raden::relative_error(&truth.values, &hist)?;
        println!("{name:<10} {m:>8} {:>14.4} {err:>12.4}", spec.domain_mass());
        cloud.save_csv(out.join(format!("{name}.csv")))?;
    }
    println!("point clouds written to {}", out.display());
    Ok(())
}
