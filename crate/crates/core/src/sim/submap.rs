use std::collections::HashMap;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::raycast::View;
use crate::error::{Error, Result};
use crate::geometry::{voxel_downsample, LabeledCloud, Point3, Pose6};

/// A cropped, gravity-aligned cloud with its ground-truth frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Submap {
    pub id: u64,
    pub view: View,
    /// Points in the submap frame (z up, min z = 0).
    pub cloud: LabeledCloud,
    /// Submap frame in the map frame (yaw only rotation).
    pub origin: Pose6,
    /// Window centre, ground submaps only.
    pub timestamp: Option<f64>,
    pub crop_radius: f64,
    /// Sensor pose at the anchor scan, in the submap frame: the roll/pitch
    /// removed by gravity alignment and the z-floor shift. Known onboard
    /// from the IMU, so it is not a ground-truth leak. Identity for aerial.
    pub body_in_submap: Pose6,
}

impl Submap {
    /// Ground-truth sensor pose at the anchor scan.
    pub fn body_pose(&self) -> Pose6 {
        self.origin * self.body_in_submap
    }

    pub fn centroid_xy(&self) -> [f64; 2] {
        let t = self.origin.translation();
        [t.x, t.y]
    }
}

/// Height-percentile ground removal on a horizontal grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundFilter {
    pub enabled: bool,
    pub cell: f64,
    pub percentile: f64,
    /// Points up to this height above the cell's ground level are removed.
    pub height: f64,
    /// Neighbourhood (in cells) used to detect cells with no ground returns.
    pub neighborhood: usize,
    /// A cell whose percentile exceeds the neighbourhood minimum by more than
    /// this is treated as ground-free and uses the neighbourhood minimum.
    pub step_tolerance: f64,
}

impl Default for GroundFilter {
    fn default() -> Self {
        Self {
            enabled: true,
            cell: 1.0,
            percentile: 0.05,
            height: 0.3,
            neighborhood: 2,
            step_tolerance: 1.0,
        }
    }
}

impl GroundFilter {
    pub fn apply(&self, cloud: &LabeledCloud) -> LabeledCloud {
        if !self.enabled || cloud.is_empty() {
            return cloud.clone();
        }
        let key = |p: &Point3| ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64);
        let mut cells: HashMap<(i64, i64), Vec<f64>> = HashMap::new();
        for p in &cloud.points {
            cells.entry(key(p)).or_default().push(p.z);
        }
        let pct: HashMap<(i64, i64), f64> = cells
            .into_iter()
            .map(|(k, mut zs)| {
                let idx = ((zs.len() - 1) as f64 * self.percentile).floor() as usize;
                let (_, v, _) = zs.select_nth_unstable_by(idx, |a, b| a.partial_cmp(b).unwrap());
                (k, *v)
            })
            .collect();
        let n = self.neighborhood as i64;
        let mut level: HashMap<(i64, i64), f64> = HashMap::with_capacity(pct.len());
        for (&(i, j), &v) in &pct {
            let mut lo = v;
            for dj in -n..=n {
                for di in -n..=n {
                    if let Some(&w) = pct.get(&(i + di, j + dj)) {
                        lo = lo.min(w);
                    }
                }
            }
            level.insert((i, j), if v - lo > self.step_tolerance { lo } else { v });
        }
        cloud.filter_indices(|i| {
            let p = &cloud.points[i];
            p.z > level[&key(p)] + self.height
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubmapParams {
    /// Hz
    pub rate: f64,
    /// s
    pub window: f64,
    pub crop_radius: f64,
    pub voxel: f64,
    pub aerial_grid_step: f64,
    pub min_points: usize,
    pub ground_filter: GroundFilter,
}

impl Default for SubmapParams {
    fn default() -> Self {
        Self {
            rate: 2.0,
            window: 1.0,
            crop_radius: 30.0,
            voxel: 0.3,
            aerial_grid_step: 5.0,
            min_points: 50,
            ground_filter: GroundFilter::default(),
        }
    }
}

impl SubmapParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.window > 0.0 && self.crop_radius > 0.0 && self.voxel > 0.0) {
            return Err(Error::InvalidInput("submap rate, window, radius and voxel must be positive".into()));
        }
        if !(self.aerial_grid_step > 0.0) {
            return Err(Error::InvalidInput("aerial_grid_step must be positive".into()));
        }
        Ok(())
    }
}

fn yaw_only(pose: &Pose6) -> Pose6 {
    Pose6::new(
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), pose.yaw()),
        *pose.translation(),
    )
}

/// Filter, downsample and floor a cloud already cropped in frame `frame`.
/// Returns the cloud and the floored frame.
fn finish(cloud: LabeledCloud, frame: Pose6, params: &SubmapParams) -> Result<(LabeledCloud, Pose6)> {
    let filtered = params.ground_filter.apply(&cloud);
    let mut vox = voxel_downsample(&filtered, params.voxel)?;
    let zmin = vox.points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    if !zmin.is_finite() {
        return Ok((vox, frame));
    }
    for p in vox.points.iter_mut() {
        p.z -= zmin;
    }
    let floored = frame * Pose6::from_translation(Vector3::new(0.0, 0.0, zmin));
    Ok((vox, floored))
}

/// Aggregates scans over a sliding window around each submap time.
///
/// `poses[k]` is the sensor pose of `scans[k]` at `times[k]`.
pub fn build_ground_submaps(
    scans: &[LabeledCloud],
    times: &[f64],
    poses: &[Pose6],
    params: &SubmapParams,
) -> Result<Vec<Submap>> {
    params.validate()?;
    if scans.len() != times.len() || scans.len() != poses.len() {
        return Err(Error::InvalidInput("scans, times and poses must align".into()));
    }
    if scans.is_empty() {
        return Ok(Vec::new());
    }
    let period = 1.0 / params.rate;
    let t0 = times[0];
    let t_last = *times.last().unwrap();
    let r2 = params.crop_radius * params.crop_radius;
    let mut out = Vec::new();
    let mut i = 0u64;
    loop {
        let tc = t0 + i as f64 * period;
        if tc > t_last + 1e-9 {
            break;
        }
        i += 1;
        let lo = tc - 0.5 * params.window;
        let hi = tc + 0.5 * params.window;
        let members: Vec<usize> = (0..times.len())
            .filter(|&k| times[k] >= lo - 1e-9 && times[k] < hi - 1e-9)
            .collect();
        if members.is_empty() {
            log::info!("no scans in window at t={tc:.3}; skipped");
            continue;
        }
        let anchor = *members
            .iter()
            .min_by(|&&a, &&b| {
                (times[a] - tc).abs().partial_cmp(&(times[b] - tc).abs()).unwrap().then(a.cmp(&b))
            })
            .unwrap();
        let frame = yaw_only(&poses[anchor]);
        let inv = frame.inverse();
        let mut agg = LabeledCloud::default();
        for &k in &members {
            let to_frame = inv * poses[k];
            for (j, p) in scans[k].points.iter().enumerate() {
                let q = to_frame.transform_point(p);
                if q.x * q.x + q.y * q.y <= r2 {
                    agg.push(q, scans[k].label(j));
                }
            }
        }
        let (cloud, origin) = finish(agg, frame, params)?;
        if cloud.len() < params.min_points {
            log::info!("submap at t={tc:.3} has {} points; skipped", cloud.len());
            continue;
        }
        let body_in_submap = origin.inverse() * poses[anchor];
        out.push(Submap {
            id: out.len() as u64,
            view: View::Ground,
            cloud,
            origin,
            timestamp: Some(times[anchor]),
            crop_radius: params.crop_radius,
            body_in_submap,
        });
    }
    Ok(out)
}

/// Horizontal bucket grid for radius crops over a large cloud.
struct Buckets {
    cell: f64,
    min: [f64; 2],
    nx: usize,
    ny: usize,
    start: Vec<usize>,
    idx: Vec<u32>,
}

impl Buckets {
    fn new(points: &[Point3], cell: f64) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in points {
            min = [min[0].min(p.x), min[1].min(p.y)];
            max = [max[0].max(p.x), max[1].max(p.y)];
        }
        let nx = ((max[0] - min[0]) / cell).floor() as usize + 1;
        let ny = ((max[1] - min[1]) / cell).floor() as usize + 1;
        let cell_of = |p: &Point3| {
            let i = ((p.x - min[0]) / cell).floor() as usize;
            let j = ((p.y - min[1]) / cell).floor() as usize;
            j.min(ny - 1) * nx + i.min(nx - 1)
        };
        let mut count = vec![0usize; nx * ny + 1];
        for p in points {
            count[cell_of(p) + 1] += 1;
        }
        for c in 1..count.len() {
            count[c] += count[c - 1];
        }
        let mut fill = count.clone();
        let mut idx = vec![0u32; points.len()];
        for (k, p) in points.iter().enumerate() {
            let c = cell_of(p);
            idx[fill[c]] = k as u32;
            fill[c] += 1;
        }
        Self {
            cell,
            min,
            nx,
            ny,
            start: count,
            idx,
        }
    }

    /// Indices within horizontal `radius`, in input order.
    fn within(&self, points: &[Point3], c: [f64; 2], radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let lo_i = (((c[0] - radius - self.min[0]) / self.cell).floor().max(0.0) as usize).min(self.nx - 1);
        let hi_i = (((c[0] + radius - self.min[0]) / self.cell).floor().max(0.0) as usize).min(self.nx - 1);
        let lo_j = (((c[1] - radius - self.min[1]) / self.cell).floor().max(0.0) as usize).min(self.ny - 1);
        let hi_j = (((c[1] + radius - self.min[1]) / self.cell).floor().max(0.0) as usize).min(self.ny - 1);
        let mut out = Vec::new();
        for j in lo_j..=hi_j {
            for i in lo_i..=hi_i {
                let cell = j * self.nx + i;
                for &k in &self.idx[self.start[cell]..self.start[cell + 1]] {
                    let p = &points[k as usize];
                    if (p.x - c[0]).powi(2) + (p.y - c[1]).powi(2) <= r2 {
                        out.push(k as usize);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Lattice centroids `min + i·step` covering the cloud's horizontal footprint.
pub fn aerial_lattice(cloud: &LabeledCloud, step: f64) -> Vec<[f64; 2]> {
    let Some((lo, hi)) = cloud.bounds() else {
        return Vec::new();
    };
    let nx = ((hi.x - lo.x) / step + 1e-9).floor() as usize + 1;
    let ny = ((hi.y - lo.y) / step + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            out.push([lo.x + i as f64 * step, lo.y + j as f64 * step]);
        }
    }
    out
}

/// Crops the map-frame aerial cloud around every lattice centroid.
pub fn build_aerial_submaps(aerial_cloud: &LabeledCloud, params: &SubmapParams) -> Result<Vec<Submap>> {
    params.validate()?;
    if aerial_cloud.is_empty() {
        return Err(Error::InvalidInput("aerial cloud is empty".into()));
    }
    let buckets = Buckets::new(&aerial_cloud.points, params.aerial_grid_step.max(params.crop_radius / 4.0));
    let mut out = Vec::new();
    for c in aerial_lattice(aerial_cloud, params.aerial_grid_step) {
        let idx = buckets.within(&aerial_cloud.points, c, params.crop_radius);
        if idx.len() < params.min_points {
            continue;
        }
        let frame = Pose6::from_translation(Vector3::new(c[0], c[1], 0.0));
        let mut local = aerial_cloud.select(&idx);
        for p in local.points.iter_mut() {
            p.x -= c[0];
            p.y -= c[1];
        }
        let (cloud, origin) = finish(local, frame, params)?;
        if cloud.len() < params.min_points {
            continue;
        }
        out.push(Submap {
            id: out.len() as u64,
            view: View::Aerial,
            cloud,
            origin,
            timestamp: None,
            crop_radius: params.crop_radius,
            body_in_submap: Pose6::identity(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Label;

    fn grid_cloud(n: usize, step: f64, z: impl Fn(f64, f64) -> f64, label: Label) -> LabeledCloud {
        let mut c = LabeledCloud::default();
        c.labels = Some(Vec::new());
        for j in 0..n {
            for i in 0..n {
                let (x, y) = (i as f64 * step, j as f64 * step);
                c.push(Point3::new(x, y, z(x, y)), Some(label));
            }
        }
        c
    }

    #[test]
    fn aerial_lattice_arithmetic() {
        let c = grid_cloud(101, 1.0, |_, _| 0.0, Label::Ground);
        assert_eq!(aerial_lattice(&c, 5.0).len(), 441);
    }

    #[test]
    fn ground_filter_removes_sloped_ground_and_keeps_canopy() {
        let mut c = grid_cloud(60, 0.25, |x, _| 0.2 * x, Label::Ground);
        let canopy = grid_cloud(40, 0.25, |x, _| 0.2 * x + 6.0, Label::Vegetation);
        c.extend(&canopy);
        let out = GroundFilter::default().apply(&c);
        assert_eq!(out.count_label(Label::Ground), 0);
        assert_eq!(out.count_label(Label::Vegetation), canopy.len());
    }

    #[test]
    fn single_scan_submap_is_shifted_and_voxelized() {
        let scan = grid_cloud(20, 1.0, |x, y| 0.1 * x + 0.05 * y - 1.5, Label::Trunk);
        let pose = Pose6::from_yaw(0.3, Vector3::new(4.0, 5.0, 10.0));
        let params = SubmapParams {
            ground_filter: GroundFilter {
                enabled: false,
                ..Default::default()
            },
            ..Default::default()
        };
        let subs = build_ground_submaps(&[scan.clone()], &[0.0], &[pose], &params).unwrap();
        assert_eq!(subs.len(), 1);
        let s = &subs[0];
        let zmin = scan.points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
        let mut expected = voxel_downsample(&scan, 0.3).unwrap();
        for p in expected.points.iter_mut() {
            p.z -= zmin;
        }
        assert_eq!(s.cloud.len(), expected.len());
        for (a, b) in s.cloud.points.iter().zip(&expected.points) {
            assert!((a - b).norm() < 1e-9);
        }
        let back = s.body_pose();
        let (ang, d) = back.error_to(&pose);
        assert!(ang < 1e-12 && d < 1e-9);
    }

    #[test]
    fn sixty_seconds_at_two_hertz() {
        let scan = grid_cloud(10, 1.0, |_, _| 0.0, Label::Trunk);
        let times: Vec<f64> = (0..240).map(|k| k as f64 * 0.25).collect();
        let poses = vec![Pose6::identity(); 240];
        let scans = vec![scan; 240];
        let params = SubmapParams {
            ground_filter: GroundFilter {
                enabled: false,
                ..Default::default()
            },
            ..Default::default()
        };
        let subs = build_ground_submaps(&scans, &times, &poses, &params).unwrap();
        assert_eq!(subs.len(), 120);
        for s in &subs {
            let zmin = s.cloud.points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
            assert!(zmin.abs() < 1e-6);
        }
    }
}
