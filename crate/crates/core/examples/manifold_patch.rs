//! A planar density lifted onto a paraboloid: local PCA picks the patch
//! dimension, the patch is reconstructed in tangent coordinates, and the
//! tangent-plane distance is compared with its curvature bound.

use raden::manifold::{
    embed_paraboloid, pca_patch, reconstruct_patch, tangent_bound_check, CenteredDensity, PatchConfig,
};
use raden::pointcloud::canonical;
use raden::solver::RegConfig;
use raden::{Result, Seed};

fn main() -> Result<()> {
    let density = CenteredDensity::new(canonical::density4())?;
    let planar = density.sample(5000, Seed::new(9))?;
    let cfg = PatchConfig::default();
    for kappa in [0.01, 0.05, 0.1] {
        let cloud = embed_paraboloid(&planar, kappa)?;
        let patch = pca_patch(&cloud, &[0.0, 0.0, 0.0], &cfg)?;
        let (dim, count) = (patch.dim, patch.count());
        let est = reconstruct_patch(patch, &cfg, &RegConfig::default())?;
        let check = tangent_bound_check(kappa, cfg.r, 4000)?;
        println!(
            "kappa {kappa:<5} dim {dim}, {count} samples in the ball, density at the vertex {:.2e}, \
             tangent distance {:.3} (bound {:.3})",
            est.value, check.estimate, check.bound
        );
    }
    Ok(())
}
