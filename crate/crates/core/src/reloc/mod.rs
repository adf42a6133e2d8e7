//! Keypoints, descriptors, retrieval and coarse registration.

mod db;
mod descriptors;
mod features;
mod keypoints;
mod ransac;

pub use db::{retrieve_topk, DbEntry, DescriptorDb};
pub use descriptors::{
    compute_global_descriptor, compute_local_descriptors, global_descriptor_of, descriptor_distance, gem_pool, DescriptorParams,
    Projection, POINT_FEATURES,
};
pub use features::{AnalyzedCloud, DENSITY_RADIUS, PCA_K};
pub use keypoints::{detect_keypoints, KeypointParams};
pub use ransac::{
    cloud_fitness, mutual_matches, ransac_register, usable, verify_fitness, CoarseRegistration, RansacParams,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LabeledCloud;
use crate::semantics::{segment_trunks_heuristic, KeypointSet, SegmenterParams, SemanticMask};
use crate::sim::Submap;

/// Where trunk labels for guided keypoints come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Guidance {
    /// Plain saliency peaks.
    None,
    /// Simulator labels carried by the cloud.
    Oracle,
    /// Geometric trunk segmentation.
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelocParams {
    pub guidance: Guidance,
    pub retrieval_k: usize,
    pub fitness_threshold: f64,
    pub segmenter: SegmenterParams,
    pub keypoints: KeypointParams,
    pub descriptors: DescriptorParams,
    pub ransac: RansacParams,
}

impl Default for RelocParams {
    fn default() -> Self {
        Self {
            guidance: Guidance::Oracle,
            retrieval_k: 5,
            fitness_threshold: 0.3,
            segmenter: SegmenterParams::default(),
            keypoints: KeypointParams::default(),
            descriptors: DescriptorParams::default(),
            ransac: RansacParams::default(),
        }
    }
}

impl RelocParams {
    pub fn validate(&self) -> Result<()> {
        if self.retrieval_k == 0 {
            return Err(Error::Config("reloc.retrieval_k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.fitness_threshold) {
            return Err(Error::Config("reloc.fitness_threshold must lie in [0, 1]".into()));
        }
        self.descriptors.validate()
    }
}

/// Everything the relocaliser needs from one submap.
#[derive(Debug, Clone)]
pub struct SubmapDescription {
    pub global: Vec<f64>,
    pub keypoints: KeypointSet,
    pub descriptors: Vec<Option<Vec<f64>>>,
}

pub fn guidance_mask(cloud: &LabeledCloud, guidance: Guidance, seg: &SegmenterParams) -> Option<SemanticMask> {
    match guidance {
        Guidance::None => None,
        Guidance::Oracle => SemanticMask::from_cloud(cloud),
        Guidance::Heuristic => segment_trunks_heuristic(cloud, seg).ok(),
    }
}

pub fn describe_cloud(cloud: &LabeledCloud, projection: &Projection, params: &RelocParams) -> Result<SubmapDescription> {
    let analyzed = AnalyzedCloud::new(cloud);
    let global = compute_global_descriptor(&analyzed, projection, &params.descriptors)?;
    let mask = guidance_mask(cloud, params.guidance, &params.segmenter);
    let keypoints = detect_keypoints(&analyzed, mask.as_ref(), &params.keypoints);
    let descriptors = compute_local_descriptors(&analyzed, &keypoints, &params.descriptors);
    Ok(SubmapDescription {
        global,
        keypoints,
        descriptors,
    })
}

/// One database entry per aerial submap; submaps too small to describe are
/// skipped with a warning.
pub fn build_db(aerial: &[Submap], params: &RelocParams) -> Result<DescriptorDb> {
    let projection = Projection::new(params.descriptors.global_dim, params.descriptors.projection_seed);
    let mut entries = Vec::with_capacity(aerial.len());
    for s in aerial {
        match describe_cloud(&s.cloud, &projection, params) {
            Ok(d) => entries.push(DbEntry {
                id: s.id,
                centroid: *s.origin.translation(),
                global: d.global,
                keypoints: d.keypoints,
                descriptors: d.descriptors,
            }),
            Err(e) => log::warn!("aerial submap {} skipped: {e}", s.id),
        }
    }
    DescriptorDb::new(entries)
}

/// Global descriptors only. Keypoints and local descriptors are left empty
/// for the localiser to compute on demand for retrieved candidates.
pub fn build_global_db(aerial: &[Submap], params: &RelocParams) -> Result<DescriptorDb> {
    let projection = Projection::new(params.descriptors.global_dim, params.descriptors.projection_seed);
    let mut entries = Vec::with_capacity(aerial.len());
    for s in aerial {
        match global_descriptor_of(&s.cloud, &projection, &params.descriptors) {
            Ok(global) => entries.push(DbEntry {
                id: s.id,
                centroid: *s.origin.translation(),
                global,
                keypoints: KeypointSet::default(),
                descriptors: Vec::new(),
            }),
            Err(e) => log::warn!("aerial submap {} skipped: {e}", s.id),
        }
    }
    DescriptorDb::new(entries)
}
