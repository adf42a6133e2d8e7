use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::world::{Canopy, ForestWorld, Trunk};
use crate::error::{Error, Result};
use crate::geometry::{Label, LabeledCloud, Point3, Pose6};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Ground,
    Aerial,
}

impl View {
    pub fn as_str(self) -> &'static str {
        match self {
            View::Ground => "ground",
            View::Aerial => "aerial",
        }
    }
}

/// Lidar model. For the ground view `vertical_fov` spans elevations around
/// the horizon with full azimuth; for the aerial view it is the full cone
/// angle around nadir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorModel {
    pub max_range: f64,
    pub vertical_fov: f64,
    pub angular_resolution: f64,
    pub noise_sigma: f64,
    pub dropout_prob: f64,
    pub min_range: f64,
    /// Pass index; selects the canopy jitter realisation.
    pub epoch: u64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            max_range: 100.0,
            vertical_fov: 120.0,
            angular_resolution: 1.5,
            noise_sigma: 0.02,
            dropout_prob: 0.0,
            min_range: 0.5,
            epoch: 0,
        }
    }
}

impl SensorModel {
    pub fn aerial_default() -> Self {
        Self {
            vertical_fov: 70.0,
            angular_resolution: 0.3,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_range > 0.0) {
            return Err(Error::InvalidInput("max_range must be positive".into()));
        }
        if !(self.vertical_fov > 0.0 && self.vertical_fov <= 180.0) {
            return Err(Error::InvalidInput("vertical_fov must be in (0, 180]".into()));
        }
        if !(self.angular_resolution > 0.0) {
            return Err(Error::InvalidInput("angular_resolution must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) || self.noise_sigma < 0.0 {
            return Err(Error::InvalidInput("invalid noise or dropout".into()));
        }
        Ok(())
    }
}

/// Ray-cylinder hit for a finite trunk; end caps are ignored.
pub fn ray_trunk(o: &Point3, d: &Vector3<f64>, trunk: &Trunk, below: f64) -> Option<f64> {
    let a = trunk.lean;
    let w = o - trunk.base;
    let d_perp = d - a * d.dot(&a);
    let w_perp = w - a * w.dot(&a);
    let qa = d_perp.norm_squared();
    if qa < 1e-18 {
        return None;
    }
    let qb = 2.0 * d_perp.dot(&w_perp);
    let qc = w_perp.norm_squared() - trunk.radius * trunk.radius;
    if qc <= 0.0 {
        return None;
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let t = (-qb - disc.sqrt()) / (2.0 * qa);
    if t <= 0.0 {
        return None;
    }
    let s = (w + d * t).dot(&a);
    (s >= -below && s <= trunk.height).then_some(t)
}

/// Entry and exit parameters of a ray through an axis-aligned ellipsoid.
pub fn ray_ellipsoid(o: &Point3, d: &Vector3<f64>, c: &Canopy) -> Option<(f64, f64)> {
    let os = (o - c.center).component_div(&c.semi_axes);
    let ds = d.component_div(&c.semi_axes);
    let qa = ds.norm_squared();
    let qb = 2.0 * os.dot(&ds);
    let qc = os.norm_squared() - 1.0;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let (t0, t1) = ((-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa));
    (t1 > 0.0).then_some((t0, t1))
}

#[derive(Debug, Clone, Copy)]
enum Obj {
    Trunk(u32),
    Canopy(u32),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    t: f64,
    label: Label,
    opaque: bool,
}

/// A world frozen at one epoch with a 2D acceleration grid.
pub struct Scene<'a> {
    world: &'a ForestWorld,
    canopies: Vec<Canopy>,
    cell: f64,
    gx: usize,
    gy: usize,
    cells: Vec<Vec<Obj>>,
    terrain_max: f64,
    trunk_below: f64,
}

const GRID_CELL: f64 = 4.0;

impl<'a> Scene<'a> {
    pub fn new(world: &'a ForestWorld, epoch: u64) -> Self {
        let p = &world.params;
        let canopies: Vec<Canopy> = if p.epoch_jitter > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(
                world.seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xC0FF_EE00,
            );
            let n = Normal::new(0.0, p.epoch_jitter).unwrap();
            world
                .canopies
                .iter()
                .map(|c| {
                    let shift = Vector3::new(n.sample(&mut rng), n.sample(&mut rng), 0.5 * n.sample(&mut rng));
                    let scale = Vector3::from_fn(|_, _| 1.0 + rng.random_range(-0.08..0.08));
                    Canopy {
                        center: c.center + shift,
                        semi_axes: c.semi_axes.component_mul(&scale),
                        kind: c.kind,
                    }
                })
                .collect()
        } else {
            world.canopies.clone()
        };
        let gx = (p.extent_x / GRID_CELL).ceil() as usize + 1;
        let gy = (p.extent_y / GRID_CELL).ceil() as usize + 1;
        let mut cells = vec![Vec::new(); gx * gy];
        let mut insert = |lo: (f64, f64), hi: (f64, f64), obj: Obj| {
            let clampi = |v: f64, n: usize| ((v / GRID_CELL).floor().max(0.0) as usize).min(n - 1);
            for j in clampi(lo.1, gy)..=clampi(hi.1, gy) {
                for i in clampi(lo.0, gx)..=clampi(hi.0, gx) {
                    cells[j * gx + i].push(obj);
                }
            }
        };
        for (k, t) in world.trunks.iter().enumerate() {
            let top = t.top();
            let r = t.radius + 0.01;
            insert(
                (t.base.x.min(top.x) - r, t.base.y.min(top.y) - r),
                (t.base.x.max(top.x) + r, t.base.y.max(top.y) + r),
                Obj::Trunk(k as u32),
            );
        }
        for (k, c) in canopies.iter().enumerate() {
            let (ax, ay) = (c.semi_axes.x + 0.01, c.semi_axes.y + 0.01);
            insert(
                (c.center.x - ax, c.center.y - ay),
                (c.center.x + ax, c.center.y + ay),
                Obj::Canopy(k as u32),
            );
        }
        Self {
            world,
            canopies,
            cell: GRID_CELL,
            gx,
            gy,
            cells,
            terrain_max: world.ground.max_height(),
            trunk_below: 0.5,
        }
    }

    pub fn world(&self) -> &ForestWorld {
        self.world
    }

    /// First terrain crossing along the ray within `t_max`.
    fn terrain_hit(&self, o: &Point3, d: &Vector3<f64>, t_max: f64) -> Option<f64> {
        let g = &self.world.ground;
        let gap = |t: f64| {
            let p = o + d * t;
            p.z - g.height(p.x, p.y)
        };
        let mut t = 0.0;
        let mut f = gap(0.0);
        if f <= 0.0 {
            return None;
        }
        while t < t_max {
            let z = o.z + d.z * t;
            if d.z >= 0.0 && z > self.terrain_max {
                return None;
            }
            let step = (0.5 * f).max(0.2);
            let tn = (t + step).min(t_max);
            let fnext = gap(tn);
            if fnext <= 0.0 {
                let (mut lo, mut hi) = (t, tn);
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    if gap(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-7 {
                        break;
                    }
                }
                return Some(0.5 * (lo + hi));
            }
            if tn >= t_max {
                break;
            }
            t = tn;
            f = fnext;
        }
        None
    }

    fn push_events(&self, o: &Point3, d: &Vector3<f64>, obj: Obj, events: &mut Vec<Event>) {
        match obj {
            Obj::Trunk(k) => {
                if let Some(t) = ray_trunk(o, d, &self.world.trunks[k as usize], self.trunk_below) {
                    events.push(Event {
                        t,
                        label: Label::Trunk,
                        opaque: true,
                    });
                }
            }
            Obj::Canopy(k) => {
                if let Some((t0, t1)) = ray_ellipsoid(o, d, &self.canopies[k as usize]) {
                    for t in [t0, t1] {
                        if t > 0.0 {
                            events.push(Event {
                                t,
                                label: Label::Vegetation,
                                opaque: false,
                            });
                        }
                    }
                }
            }
        }
    }

    /// Casts one ray; returns the hit range and label.
    pub fn cast(
        &self,
        o: &Point3,
        d: &Vector3<f64>,
        max_range: f64,
        rng: &mut ChaCha8Rng,
        visited: &mut Vec<u64>,
        ray_id: u64,
    ) -> Option<(f64, Label)> {
        let porosity = self.world.params.canopy_porosity;
        let t_ground = self.terrain_hit(o, d, max_range);
        let t_end = t_ground.unwrap_or(max_range);
        let mut events: Vec<Event> = Vec::new();
        let mut consumed = 0usize;

        // 2D DDA over the acceleration grid
        let mut ix = (o.x / self.cell).floor() as i64;
        let mut iy = (o.y / self.cell).floor() as i64;
        let step_x: i64 = if d.x > 0.0 { 1 } else { -1 };
        let step_y: i64 = if d.y > 0.0 { 1 } else { -1 };
        let next_boundary = |i: i64, s: i64| (if s > 0 { i + 1 } else { i }) as f64 * self.cell;
        let mut t_max_x = if d.x.abs() > 1e-15 {
            (next_boundary(ix, step_x) - o.x) / d.x
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if d.y.abs() > 1e-15 {
            (next_boundary(iy, step_y) - o.y) / d.y
        } else {
            f64::INFINITY
        };
        let t_delta_x = if d.x.abs() > 1e-15 { self.cell / d.x.abs() } else { f64::INFINITY };
        let t_delta_y = if d.y.abs() > 1e-15 { self.cell / d.y.abs() } else { f64::INFINITY };
        loop {
            let t_cell_exit = t_max_x.min(t_max_y).min(t_end);
            if ix >= 0 && iy >= 0 && (ix as usize) < self.gx && (iy as usize) < self.gy {
                for obj in &self.cells[iy as usize * self.gx + ix as usize] {
                    let key = match obj {
                        Obj::Trunk(k) => 2 * *k as usize,
                        Obj::Canopy(k) => 2 * *k as usize + 1,
                    };
                    if visited.len() <= key {
                        visited.resize(key + 1, u64::MAX);
                    }
                    if visited[key] == ray_id {
                        continue;
                    }
                    visited[key] = ray_id;
                    self.push_events(o, d, *obj, &mut events);
                }
            }
            // process events that fall inside this cell, in range order
            events[consumed..].sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
            while consumed < events.len() && events[consumed].t <= t_cell_exit {
                let e = events[consumed];
                consumed += 1;
                if e.t >= t_end {
                    break;
                }
                if e.opaque || rng.random::<f64>() >= porosity {
                    return Some((e.t, e.label));
                }
            }
            if t_cell_exit >= t_end {
                break;
            }
            if t_max_x < t_max_y {
                ix += step_x;
                t_max_x += t_delta_x;
            } else {
                iy += step_y;
                t_max_y += t_delta_y;
            }
        }
        t_ground.map(|t| (t, Label::Ground))
    }

    /// Renders one sensor pose. Points are returned in the sensor frame.
    pub fn render(&self, pose: &Pose6, view: View, model: &SensorModel, seed: u64) -> LabeledCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = (model.noise_sigma > 0.0).then(|| Normal::new(0.0, model.noise_sigma).unwrap());
        let res = model.angular_resolution.to_radians();
        let half = (model.vertical_fov / 2.0).to_radians();
        let mut dirs: Vec<Vector3<f64>> = Vec::new();
        match view {
            View::Ground => {
                let n_el = ((2.0 * half) / res).round() as usize + 1;
                let n_az = ((2.0 * PI) / res).round() as usize;
                for i in 0..n_el {
                    let el = -half + i as f64 * res;
                    for j in 0..n_az {
                        let az = j as f64 * 2.0 * PI / n_az as f64;
                        dirs.push(Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()));
                    }
                }
            }
            View::Aerial => {
                dirs.push(Vector3::new(0.0, 0.0, -1.0));
                let n_ring = (half / res).round() as usize;
                for i in 1..=n_ring {
                    let off = i as f64 * res;
                    let n_az = ((2.0 * PI * off.sin()) / res).round().max(1.0) as usize;
                    for j in 0..n_az {
                        let az = (j as f64 + 0.5 * (i % 2) as f64) * 2.0 * PI / n_az as f64;
                        dirs.push(Vector3::new(off.sin() * az.cos(), off.sin() * az.sin(), -off.cos()));
                    }
                }
            }
        }
        let origin = *pose.translation();
        let mut visited: Vec<u64> = Vec::new();
        let mut cloud = LabeledCloud {
            points: Vec::new(),
            labels: Some(Vec::new()),
            covariances: None,
        };
        for (k, dl) in dirs.iter().enumerate() {
            if model.dropout_prob > 0.0 && rng.random::<f64>() < model.dropout_prob {
                continue;
            }
            let dw = pose.transform_vector(dl);
            if let Some((t, label)) =
                self.cast(&origin, &dw, model.max_range, &mut rng, &mut visited, k as u64)
            {
                let r = t + noise.map_or(0.0, |n| n.sample(&mut rng));
                let shell = if label == Label::Vegetation {
                    self.world.params.shell_noise * rng.random_range(-1.0..1.0)
                } else {
                    0.0
                };
                let r = r + shell;
                if r < model.min_range || r > model.max_range {
                    continue;
                }
                cloud.push(dl * r, Some(label));
            }
        }
        cloud
    }
}

/// Renders a single view of `world`; see [`Scene::render`].
pub fn render_view(
    world: &ForestWorld,
    sensor_pose: &Pose6,
    view: View,
    model: &SensorModel,
    seed: u64,
) -> LabeledCloud {
    Scene::new(world, model.epoch).render(sensor_pose, view, model, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::world::{generate_world, Heightfield, StandFields, WorldParams};

    fn flat_world(trunks: Vec<Trunk>, canopies: Vec<Canopy>) -> ForestWorld {
        let params = WorldParams {
            extent_x: 40.0,
            extent_y: 40.0,
            epoch_jitter: 0.0,
            shell_noise: 0.0,
            ..Default::default()
        };
        ForestWorld {
            stand: StandFields::uniform(&params),
            params,
            seed: 0,
            trunks,
            canopies,
            ground: Heightfield {
                cell: 1.0,
                nx: 41,
                ny: 41,
                heights: vec![0.0; 41 * 41],
            },
        }
    }

    #[test]
    fn treeless_world_returns_only_ground() {
        let w = flat_world(vec![], vec![]);
        let pose = Pose6::from_translation(Vector3::new(20.0, 20.0, 1.5));
        let cloud = render_view(&w, &pose, View::Ground, &SensorModel::default(), 1);
        assert!(!cloud.is_empty());
        assert_eq!(cloud.count_label(Label::Ground), cloud.len());
    }

    #[test]
    fn noiseless_trunk_hit_is_analytic() {
        let trunk = Trunk {
            base: Point3::new(25.0, 20.0, 0.0),
            radius: 0.3,
            height: 10.0,
            lean: Vector3::z(),
        };
        let w = flat_world(vec![trunk], vec![]);
        let scene = Scene::new(&w, 0);
        let o = Point3::new(20.0, 20.0, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut visited = Vec::new();
        let (t, label) = scene
            .cast(&o, &Vector3::x(), 100.0, &mut rng, &mut visited, 0)
            .unwrap();
        assert_eq!(label, Label::Trunk);
        assert!((t - 4.7).abs() < 1e-12);
        // off-axis ray: chord through the cylinder
        let d = Vector3::new(1.0, 0.04, 0.0).normalize();
        let (t, _) = scene.cast(&o, &d, 100.0, &mut rng, &mut visited, 1).unwrap();
        let p = o + d * t;
        let radial = ((p.x - 25.0).powi(2) + (p.y - 20.0).powi(2)).sqrt();
        assert!((radial - 0.3).abs() < 1e-12);
    }

    #[test]
    fn terrain_hit_lands_on_surface() {
        let w = generate_world(
            &WorldParams {
                extent_x: 60.0,
                extent_y: 60.0,
                tree_density: 0.0,
                shrub_density: 0.0,
                ..Default::default()
            },
            5,
        )
        .unwrap();
        let z = w.ground.height(30.0, 30.0) + 1.5;
        let pose = Pose6::from_translation(Vector3::new(30.0, 30.0, z));
        let model = SensorModel {
            noise_sigma: 0.0,
            ..Default::default()
        };
        let cloud = render_view(&w, &pose, View::Ground, &model, 2);
        for p in &cloud.points {
            let q = pose.transform_point(p);
            assert!((q.z - w.ground.height(q.x, q.y)).abs() < 1e-5);
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let w = generate_world(
            &WorldParams {
                extent_x: 50.0,
                extent_y: 50.0,
                ..Default::default()
            },
            9,
        )
        .unwrap();
        let pose = Pose6::from_translation(Vector3::new(25.0, 25.0, w.ground.height(25.0, 25.0) + 1.5));
        let m = SensorModel::default();
        assert_eq!(
            render_view(&w, &pose, View::Ground, &m, 3),
            render_view(&w, &pose, View::Ground, &m, 3)
        );
    }
}
