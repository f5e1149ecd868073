//! Full inversion: sample, count, assemble, solve with TV and GCV, and
//! compare against the ground truth.
//!
//! cargo run --release --example reconstruct -- [density1..4] [m] [resolution]

use raden::pipeline::{Estimator, Pipeline, PipelineConfig};
use raden::pointcloud::canonical;
use raden::{eval_density, sample_density, Result, Seed};

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map_or("density3", String::as_str);
    let m: usize = args.get(2).map_or(1000, |s| s.parse().expect("m must be an integer"));
    let resolution: usize = args.get(3).map_or(60, |s| s.parse().expect("resolution must be an integer"));
    let spec = match name {
        "density1" => canonical::density1(Seed::new(1)),
        "density2" => canonical::density2(),
        "density3" => canonical::density3(),
        "density4" => canonical::density4(),
        other => panic!("unknown density {other}"),
    };

    let pipeline = Pipeline::for_spec(&spec, resolution, PipelineConfig::default())?;
    let truth = eval_density(&spec, pipeline.grid())?;
    let cloud = sample_density(&spec, m, Seed::new(42))?;
    let out = std::env::temp_dir().join("raden-examples");
    std::fs::create_dir_all(&out)?;
    for estimator in [Estimator::Sph, Estimator::Hs] {
        let start = std::time::Instant::now();
        let outcome = pipeline.run(&cloud, estimator, Some(&truth.values))?;
        let report = outcome.report.expect("inversions carry a report");
        println!(
            "{estimator}: error {:.3}, lambda {:.3e}, {} iterations, converged {}, {:.1}s",
            outcome.error.unwrap_or(f64::NAN),
            report.lambda,
            report.iterations,
            report.converged,
            start.elapsed().as_secs_f64()
        );
        outcome.estimate.save_pgm(out.join(format!("{name}-{estimator}.pgm")))?;
    }
    raden::DensityEstimate::new(pipeline.grid().clone(), truth.values)?.save_pgm(out.join(format!("{name}-truth.pgm")))?;
    println!("images written to {}", out.display());
    Ok(())
}
