pub mod baselines;
pub mod bounds;
pub mod error;
pub mod estimate;
pub mod experiments;
pub mod grid;
pub mod manifold;
pub mod operator;
pub mod pipeline;
pub mod pointcloud;
pub mod projection;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use estimate::DensityEstimate;
pub use grid::PixelGrid;
pub use operator::{assemble, AssembleOptions, LinearOperator, RadonOperator, Storage, WeightMode};
pub use pointcloud::{
    eval_density, relative_error, sample_density, DensitySpec, GroundTruthGrid, PointCloud,
};
pub use projection::{
    count_ball, count_half_space, make_ball_geometry, make_halfspace_geometry, measure, BallSet,
    Geometry, HalfSpaceSet, MeasurementVector, Normalization,
};
pub use rng::Seed;
pub use solver::{normalize, solve, Penalty, RegConfig, Selection, SolveReport};
