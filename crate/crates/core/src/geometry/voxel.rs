use std::collections::HashMap;

use nalgebra::Matrix3;

use super::cloud::{Label, LabeledCloud};
use super::pose::Point3;
use crate::error::{Error, Result};

pub type VoxelKey = (i64, i64, i64);

pub fn voxel_key(p: &Point3, voxel: f64) -> VoxelKey {
    (
        (p.x / voxel).floor() as i64,
        (p.y / voxel).floor() as i64,
        (p.z / voxel).floor() as i64,
    )
}

#[derive(Default)]
struct Cell {
    sum: Point3,
    count: usize,
    first: usize,
    votes: [usize; 3],
    cov_sum: Matrix3<f64>,
}

/// Replaces the points of every occupied voxel by their centroid.
///
/// Output order follows the first occurrence of each voxel in the input.
/// The output label is the voxel's majority label (ties go to the lower
/// label code); covariances, when present, are averaged.
pub fn voxel_downsample(cloud: &LabeledCloud, voxel: f64) -> Result<LabeledCloud> {
    if !(voxel > 0.0) || !voxel.is_finite() {
        return Err(Error::InvalidInput(format!("voxel size {voxel} must be positive")));
    }
    cloud.validate()?;
    let mut slots: HashMap<VoxelKey, usize> = HashMap::with_capacity(cloud.len() / 2 + 1);
    let mut cells: Vec<(VoxelKey, Cell)> = Vec::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let key = voxel_key(p, voxel);
        let slot = *slots.entry(key).or_insert_with(|| {
            cells.push((
                key,
                Cell {
                    first: i,
                    ..Default::default()
                },
            ));
            cells.len() - 1
        });
        let cell = &mut cells[slot].1;
        cell.sum += p;
        cell.count += 1;
        if let Some(l) = cloud.label(i) {
            cell.votes[l.code() as usize] += 1;
        }
        if let Some(c) = &cloud.covariances {
            cell.cov_sum += c[i];
        }
    }

    let mut out = LabeledCloud {
        points: Vec::with_capacity(cells.len()),
        labels: cloud.labels.as_ref().map(|_| Vec::with_capacity(cells.len())),
        covariances: cloud
            .covariances
            .as_ref()
            .map(|_| Vec::with_capacity(cells.len())),
    };
    for (key, cell) in &cells {
        let mut centroid = cell.sum / cell.count as f64;
        // rounding can push a centroid across a voxel face; a member point
        // keeps the representative inside its voxel (and the op idempotent)
        if voxel_key(&centroid, voxel) != *key {
            centroid = cloud.points[cell.first];
        }
        out.points.push(centroid);
        if let Some(labels) = out.labels.as_mut() {
            let mut best = 0;
            for k in 1..3 {
                if cell.votes[k] > cell.votes[best] {
                    best = k;
                }
            }
            labels.push(Label::ALL[best]);
        }
        if let Some(covs) = out.covariances.as_mut() {
            covs.push(cell.cov_sum / cell.count as f64);
        }
    }
    Ok(out)
}
