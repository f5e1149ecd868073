//! Assembles the discrete Radon operators, checks the adjoint pairing and
//! exports a small one in Matrix Market form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raden::projection::{BallConfig, HalfSpaceConfig};
use raden::{
    assemble, make_ball_geometry, make_halfspace_geometry, AssembleOptions, Geometry, LinearOperator, PixelGrid,
    Result,
};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn main() -> Result<()> {
    let grid = PixelGrid::covering(&[0.0, 0.0], &[100.0, 100.0], &[100, 100])?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for geometry in [
        Geometry::Ball(make_ball_geometry(&grid, &BallConfig::default())?),
        Geometry::HalfSpace(make_halfspace_geometry(&grid, &HalfSpaceConfig::default())?),
    ] {
        let start = std::time::Instant::now();
        let op = assemble(&grid, &geometry, &AssembleOptions::default())?;
        let meta = op.metadata();
        let v: Vec<f64> = (0..op.cols()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let u: Vec<f64> = (0..op.rows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (lhs, rhs) = (dot(&op.apply(&v)?, &u), dot(&v, &op.adjoint_apply(&u)?));
        println!(
            "{:<10} {} x {}, {} nonzeros, assembled in {:.2}s, adjoint mismatch {:.1e}",
            meta.kind,
            meta.rows,
            meta.cols,
            meta.nonzeros,
            start.elapsed().as_secs_f64(),
            (lhs - rhs).abs() / lhs.abs()
        );
    }

    let small = PixelGrid::square(8);
    let op = assemble(
        &small,
        &Geometry::Ball(make_ball_geometry(&small, &BallConfig { radii: vec![1.0, 2.0] })?),
        &AssembleOptions::explicit(),
    )?;
    let path = std::env::temp_dir().join("raden-ball-8x8.mtx");
    op.save_matrix_market(&path)?;
    println!("8x8 ball operator written to {}", path.display());
    Ok(())
}
