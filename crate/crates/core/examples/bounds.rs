//! Error bounds for the empirical projections and a Monte-Carlo check of
//! the CDF band they rest on.

use raden::bounds::{
    coverage_experiment, dkw_epsilon, halfspace_l2_bound, sphere_area, spherical_l2_bound, CoverageConfig,
};
use raden::pointcloud::canonical;
use raden::{Result, Seed};

fn main() -> Result<()> {
    println!("{:>7} {:>10} {:>12} {:>12}", "m", "cdf band", "half-space", "spherical");
    for m in [100, 1000, 10_000, 100_000] {
        println!(
            "{m:>7} {:>10.4} {:>12.4} {:>12.4}",
            dkw_epsilon(m, 0.05)?,
            halfspace_l2_bound(m, 180, 0.05, 2)?,
            spherical_l2_bound(m, 170_000, 0.05)?
        );
    }
    let areas: Vec<String> = (1..=4).map(|n| format!("{:.4}", sphere_area(n).unwrap())).collect();
    println!("unit sphere areas n = 1..4: {}", areas.join(", "));

    let cfg = CoverageConfig {
        m: 1000,
        p: 0.05,
        directions: 8,
        trials: 200,
        seed: Seed::new(1),
    };
    let report = coverage_experiment(&canonical::density2(), &cfg)?;
    println!(
        "band {:.4} over {} directions: violated in {} of {} trials, mean sup error {:.4}",
        report.epsilon,
        report.directions,
        report.violations,
        report.trials,
        report.mean_sup_error.unwrap_or(f64::NAN)
    );
    Ok(())
}
