use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::pose::{Point3, Pose6};
use crate::error::{Error, Result};

/// Semantic class of a point. The discriminant is the on-disk `u8` code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Label {
    Ground = 0,
    Vegetation = 1,
    Trunk = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Ground, Label::Vegetation, Label::Trunk];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Label::Ground),
            1 => Ok(Label::Vegetation),
            2 => Ok(Label::Trunk),
            other => Err(Error::Format(format!("unknown label code {other}"))),
        }
    }
}

/// Points with optional per-point labels and covariances.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledCloud {
    pub points: Vec<Point3>,
    pub labels: Option<Vec<Label>>,
    pub covariances: Option<Vec<Matrix3<f64>>>,
}

impl LabeledCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            labels: None,
            covariances: None,
        }
    }

    pub fn with_labels(points: Vec<Point3>, labels: Vec<Label>) -> Result<Self> {
        let cloud = Self {
            points,
            labels: Some(labels),
            covariances: None,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(labels) = &self.labels {
            if labels.len() != self.points.len() {
                return Err(Error::InvalidInput(format!(
                    "{} labels for {} points",
                    labels.len(),
                    self.points.len()
                )));
            }
        }
        if let Some(covs) = &self.covariances {
            if covs.len() != self.points.len() {
                return Err(Error::InvalidInput(format!(
                    "{} covariances for {} points",
                    covs.len(),
                    self.points.len()
                )));
            }
        }
        Ok(())
    }

    pub fn label(&self, i: usize) -> Option<Label> {
        self.labels.as_ref().map(|l| l[i])
    }

    /// Appends a point; the label channel starts with the first labelled
    /// point of an empty cloud and is dropped by an unlabelled one.
    pub fn push(&mut self, p: Point3, label: Option<Label>) {
        match (self.labels.as_mut(), label) {
            (Some(labels), Some(l)) => labels.push(l),
            (None, Some(l)) if self.points.is_empty() => self.labels = Some(vec![l]),
            (Some(_), None) => self.labels = None,
            _ => {}
        }
        self.points.push(p);
        self.covariances = None;
    }

    /// Appends `other`; the label channel survives only if both clouds carry it.
    pub fn extend(&mut self, other: &LabeledCloud) {
        let labels = match (self.labels.take(), &other.labels) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if self.points.is_empty() => Some(b.clone()),
            _ => None,
        };
        self.points.extend_from_slice(&other.points);
        self.labels = labels;
        self.covariances = None;
    }

    pub fn transformed(&self, pose: &Pose6) -> LabeledCloud {
        let r = pose.rotation_matrix();
        LabeledCloud {
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
            labels: self.labels.clone(),
            covariances: self
                .covariances
                .as_ref()
                .map(|c| c.iter().map(|m| r * m * r.transpose()).collect()),
        }
    }

    /// Keeps the points for which `keep(i)` is true.
    pub fn filter_indices<F: FnMut(usize) -> bool>(&self, mut keep: F) -> LabeledCloud {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        self.select(&idx)
    }

    pub fn select(&self, idx: &[usize]) -> LabeledCloud {
        LabeledCloud {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            covariances: self
                .covariances
                .as_ref()
                .map(|c| idx.iter().map(|&i| c[i]).collect()),
        }
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |l| l.iter().filter(|&&x| x == label).count())
    }

    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }
}
