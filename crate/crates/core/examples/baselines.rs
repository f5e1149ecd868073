//! Kernel density estimate and sinc-projection backprojection next to the
//! ball-count inversion on the Gaussian-plus-box density.

use raden::pipeline::{Estimator, Pipeline, PipelineConfig};
use raden::pointcloud::canonical;
use raden::{eval_density, sample_density, Result, Seed};

fn main() -> Result<()> {
    let spec = canonical::density3();
    let pipeline = Pipeline::for_spec(&spec, 50, PipelineConfig::default())?;
    let truth = eval_density(&spec, pipeline.grid())?;
    for m in [500, 2000] {
        let cloud = sample_density(&spec, m, Seed::new(m as u64))?;
        print!("m = {m:>5}:");
        for estimator in [Estimator::Kde, Estimator::Fbp, Estimator::Sph] {
            let out = pipeline.run(&cloud, estimator, Some(&truth.values))?;
            print!("  {estimator} {:.3}", out.error.unwrap_or(f64::NAN));
            if let Some(os) = &out.os {
                print!(" (h = {})", os.h_m);
            }
        }
        println!();
    }
    Ok(())
}
