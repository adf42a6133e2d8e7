//! Procedural forest, lidar rendering, drifting odometry and submapping.

mod fixture;
mod raycast;
mod submap;
mod traverse;
mod world;

pub use fixture::{build_dataset, survey_world, AerialSurvey, Dataset, FixtureSpec};
pub use raycast::{ray_ellipsoid, ray_trunk, render_view, Scene, SensorModel, View};
pub use submap::{
    aerial_lattice, build_aerial_submaps, build_ground_submaps, GroundFilter, Submap, SubmapParams,
};
pub use traverse::{
    integrate, plan_trajectory, simulate_odometry, simulate_traverse, OdomIncrement, OdometryModel,
    Path2, Traverse, TraverseParams, MIN_REPORTED_SIGMA,
};
pub use world::{StandFields, 
    generate_world, Canopy, CanopyKind, ForestWorld, Heightfield, Trunk, WorldParams,
};
