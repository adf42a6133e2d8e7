use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::raycast::{Scene, SensorModel, View};
use super::submap::{build_aerial_submaps, build_ground_submaps, Submap, SubmapParams};
use super::traverse::{simulate_traverse, OdomIncrement, OdometryModel, TraverseParams};
use super::world::{generate_world, ForestWorld, WorldParams};
use crate::error::{Error, Result};
use crate::geometry::{voxel_downsample, LabeledCloud, Pose6};

/// Drone survey over the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AerialSurvey {
    /// Height above the highest terrain point.
    pub altitude: f64,
    pub line_spacing: f64,
    /// Extra margin flown beyond the world edge (negative shrinks).
    pub margin: f64,
    /// Pre-voxel applied to the stitched map.
    pub map_voxel: f64,
    pub seed: u64,
}

impl Default for AerialSurvey {
    fn default() -> Self {
        Self {
            altitude: 70.0,
            line_spacing: 40.0,
            margin: 0.0,
            map_voxel: 0.15,
            seed: 17,
        }
    }
}

/// Everything needed to regenerate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSpec {
    pub world_seed: u64,
    pub world: WorldParams,
    pub waypoints: Vec<[f64; 2]>,
    pub traverse: TraverseParams,
    pub ground_sensor: SensorModel,
    pub aerial_sensor: SensorModel,
    pub survey: AerialSurvey,
    pub odometry: OdometryModel,
    pub submaps: SubmapParams,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self::standard()
    }
}

impl FixtureSpec {
    /// 4 ha forest, ~300 m open traverse, 1 % drift.
    pub fn standard() -> Self {
        Self {
            world_seed: 42,
            world: WorldParams::default(),
            waypoints: vec![[30.0, 35.0], [162.0, 42.0], [160.0, 122.0], [48.0, 155.0]],
            traverse: TraverseParams::default(),
            ground_sensor: SensorModel::default(),
            aerial_sensor: SensorModel {
                epoch: 1,
                ..SensorModel::aerial_default()
            },
            survey: AerialSurvey::default(),
            odometry: OdometryModel::default(),
            submaps: SubmapParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.ground_sensor.validate()?;
        self.aerial_sensor.validate()?;
        self.odometry.validate()?;
        self.submaps.validate()?;
        if self.waypoints.len() < 2 {
            return Err(Error::Config("fixture.waypoints needs at least two points".into()));
        }
        if !(self.traverse.speed > 0.0 && self.traverse.scan_rate > 0.0) {
            return Err(Error::Config("fixture.traverse speed and scan_rate must be positive".into()));
        }
        if !(self.survey.line_spacing > 0.0 && self.survey.altitude > 0.0) {
            return Err(Error::Config("fixture.survey altitude and line_spacing must be positive".into()));
        }
        Ok(())
    }

    /// 1 ha forest, 60 s traverse; for smoke tests.
    pub fn small() -> Self {
        let mut s = Self::standard();
        s.world.extent_x = 100.0;
        s.world.extent_y = 100.0;
        s.waypoints = vec![[30.0, 35.0], [75.0, 40.0], [70.0, 70.0]];
        s.traverse.speed = (45.25f64.hypot(0.0) + 30.4) / 60.0;
        s
    }
}

pub struct Dataset {
    pub spec: FixtureSpec,
    pub world: ForestWorld,
    pub times: Vec<f64>,
    pub poses: Vec<Pose6>,
    pub increments: Vec<OdomIncrement>,
    pub ground_submaps: Vec<Submap>,
    pub aerial_map: LabeledCloud,
    pub aerial_submaps: Vec<Submap>,
}

/// Stitched aerial map in the map frame.
pub fn survey_world(world: &ForestWorld, survey: &AerialSurvey, model: &SensorModel) -> Result<LabeledCloud> {
    model.validate()?;
    let scene = Scene::new(world, model.epoch);
    let top = world.ground.max_height()
        + world
            .canopies
            .iter()
            .map(|c| c.center.z + c.semi_axes.z - world.ground.height(c.center.x, c.center.y))
            .fold(0.0, f64::max);
    let z = top + survey.altitude;
    let p = &world.params;
    let (x0, x1) = (-survey.margin, p.extent_x + survey.margin);
    let (y0, y1) = (-survey.margin, p.extent_y + survey.margin);
    let nx = ((x1 - x0) / survey.line_spacing).ceil() as usize + 1;
    let ny = ((y1 - y0) / survey.line_spacing).ceil() as usize + 1;
    let mut map = LabeledCloud {
        labels: Some(Vec::new()),
        ..Default::default()
    };
    let mut k = 0u64;
    for j in 0..ny {
        for i in 0..nx {
            let x = (x0 + i as f64 * survey.line_spacing).min(x1);
            let y = (y0 + j as f64 * survey.line_spacing).min(y1);
            let pose = Pose6::from_translation(Vector3::new(x, y, z));
            let seed = survey.seed.wrapping_mul(7_919).wrapping_add(k);
            k += 1;
            let view = scene.render(&pose, View::Aerial, model, seed);
            let world_pts = view.transformed(&pose);
            let inside = world_pts.filter_indices(|n| world.contains_xy(&world_pts.points[n]));
            map.extend(&inside);
        }
    }
    if survey.map_voxel > 0.0 {
        map = voxel_downsample(&map, survey.map_voxel)?;
    }
    Ok(map)
}

pub fn build_dataset(spec: &FixtureSpec) -> Result<Dataset> {
    let world = generate_world(&spec.world, spec.world_seed)?;
    let trav = simulate_traverse(
        &world,
        &spec.waypoints,
        &spec.traverse,
        &spec.ground_sensor,
        &spec.odometry,
    )?;
    let ground_submaps = build_ground_submaps(&trav.scans, &trav.times, &trav.poses, &spec.submaps)?;
    let aerial_map = survey_world(&world, &spec.survey, &spec.aerial_sensor)?;
    let aerial_submaps = build_aerial_submaps(&aerial_map, &spec.submaps)?;
    Ok(Dataset {
        spec: spec.clone(),
        world,
        times: trav.times,
        poses: trav.poses,
        increments: trav.increments,
        ground_submaps,
        aerial_map,
        aerial_submaps,
    })
}
