//! The online loop: relocalisation state machine, map factors and fixed-lag
//! smoothing, one ground submap at a time.

use std::collections::HashMap;
use std::io::Write;
use std::rc::Rc;
use std::time::Instant;

use nalgebra::Matrix6;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{EvalParams, StageTimes};
use crate::geometry::Pose6;
use crate::gicp::{
    estimate_subset_covariances, gicp_align, write_registration_line, GaussianCloud, GicpConfig, RegistrationResult,
};
use crate::graph::{
    compose_covariance, information_from_covariance, transfer_covariance, FactorGraph, MapFactor, SmootherParams,
};
use crate::io::Stamped;
use crate::reloc::{describe_cloud, ransac_register, retrieve_topk, DescriptorDb, Projection, RelocParams};
use crate::semantics::KeypointSet;
use crate::sim::{Dataset, FixtureSpec, OdomIncrement, Submap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    /// Consecutive tracking failures tolerated before relocalising.
    pub max_failures: usize,
    /// Tracking registers against the aerial submap nearest the predicted
    /// submap origin, if it lies within this planar distance.
    pub tracking_radius: f64,
    /// Map-factor covariance is max(s², 1) · inflation · Λ, with s² the
    /// registration's residual variance per degree of freedom.
    pub map_covariance_inflation: f64,
    /// Ground points used as the registration source.
    pub source_points: usize,
    /// When off, the run relocalises once and then follows odometry only.
    pub map_factors: bool,
    /// Aerial registration clouds kept in memory.
    pub cache_capacity: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            max_failures: 5,
            tracking_radius: 15.0,
            map_covariance_inflation: 100.0,
            source_points: 4000,
            map_factors: true,
            cache_capacity: 256,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_failures == 0 || self.source_points < 6 || self.cache_capacity == 0 {
            return Err(Error::Config(
                "pipeline.max_failures and pipeline.cache_capacity must be >= 1, source_points >= 6".into(),
            ));
        }
        if !(self.tracking_radius > 0.0) || !(self.map_covariance_inflation >= 1.0) {
            return Err(Error::Config(
                "pipeline.tracking_radius must be positive and map_covariance_inflation >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Every tunable of every module, one section per module.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub fixture: FixtureSpec,
    pub reloc: RelocParams,
    pub gicp: GicpConfig,
    pub smoother: SmootherParams,
    pub pipeline: PipelineParams,
    pub eval: EvalParams,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.fixture.validate()?;
        self.reloc.validate()?;
        self.gicp.validate()?;
        self.smoother.validate()?;
        self.pipeline.validate()?;
        self.eval.validate()
    }

    /// Parses and validates; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Odometry increments between consecutive scan times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OdometryStream {
    pub times: Vec<f64>,
    /// `increments[k]` spans `times[k]` to `times[k + 1]`.
    pub increments: Vec<OdomIncrement>,
}

impl OdometryStream {
    pub fn from_dataset(ds: &Dataset) -> Self {
        Self {
            times: ds.times.clone(),
            increments: ds.increments.clone(),
        }
    }

    /// Composed increment and covariance from scan `a` to scan `b`.
    pub fn between(&self, a: usize, b: usize) -> (Pose6, Matrix6<f64>) {
        let mut delta = Pose6::identity();
        let mut cov = Matrix6::zeros();
        for inc in &self.increments[a..b] {
            cov = compose_covariance(&cov, &inc.delta, &inc.covariance);
            delta = delta.compose(&inc.delta);
        }
        (delta, cov)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Relocalizing,
    Tracking,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Relocalizing => "relocalizing",
            Mode::Tracking => "tracking",
        }
    }
}

/// What happened to one submap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Relocalized,
    NoMatch,
    MapFactor,
    NoCandidate,
    RegistrationFailed,
    LowFitness,
    GateRejected,
    OdometryOnly,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Relocalized => "relocalized",
            Outcome::NoMatch => "no_match",
            Outcome::MapFactor => "map_factor",
            Outcome::NoCandidate => "no_candidate",
            Outcome::RegistrationFailed => "registration_failed",
            Outcome::LowFitness => "low_fitness",
            Outcome::GateRejected => "gate_rejected",
            Outcome::OdometryOnly => "odometry_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizerState {
    pub mode: Mode,
    /// Newest state and its marginal covariance, while tracking.
    pub estimate: Option<(Pose6, Matrix6<f64>)>,
    pub consecutive_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmapDiagnostics {
    pub submap: u64,
    pub time: f64,
    /// Mode the submap was processed in.
    pub mode: Mode,
    pub outcome: Outcome,
    pub candidate: Option<u64>,
    /// 1-based retrieval rank of `candidate`, relocalisation only.
    pub rank: Option<usize>,
    pub inlier_ratio: Option<f64>,
    pub fitness: Option<f64>,
    pub gate_distance: Option<f64>,
    pub gate_accepted: Option<bool>,
    /// This submap exhausted the failure budget.
    pub reverted: bool,
    /// Fine registration behind `fitness`, if one ran.
    pub registration: Option<RegistrationResult>,
    pub times: StageTimes,
}

impl SubmapDiagnostics {
    fn new(submap: u64, time: f64, mode: Mode) -> Self {
        Self {
            submap,
            time,
            mode,
            outcome: Outcome::NoMatch,
            candidate: None,
            rank: None,
            inlier_ratio: None,
            fitness: None,
            gate_distance: None,
            gate_accepted: None,
            reverted: false,
            registration: None,
            times: StageTimes::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// Smoothed states in time order, each as it left the window.
    pub trajectory: Vec<Stamped>,
    /// Marginal covariance of each trajectory state when it left the window.
    pub marginals: Vec<(u64, Matrix6<f64>)>,
    pub diagnostics: Vec<SubmapDiagnostics>,
}

type Description = (KeypointSet, Vec<Option<Vec<f64>>>);

/// Stateful localiser over one aerial map.
pub struct Localizer<'a> {
    cfg: &'a RunConfig,
    aerial: &'a [Submap],
    aerial_index: HashMap<u64, usize>,
    db: &'a DescriptorDb,
    projection: Projection,
    clouds: HashMap<u64, Rc<GaussianCloud>>,
    descriptions: HashMap<u64, Rc<Description>>,
    graph: FactorGraph,
    state: LocalizerState,
    trajectory: Vec<Stamped>,
    marginals: Vec<(u64, Matrix6<f64>)>,
}

impl<'a> Localizer<'a> {
    pub fn new(cfg: &'a RunConfig, aerial: &'a [Submap], db: &'a DescriptorDb) -> Result<Self> {
        cfg.validate()?;
        let aerial_index: HashMap<u64, usize> = aerial.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
        if aerial_index.len() != aerial.len() {
            return Err(Error::Dataset("duplicate aerial submap id".into()));
        }
        if db.is_empty() {
            return Err(Error::Dataset("descriptor database is empty".into()));
        }
        if let Some(e) = db.entries.iter().find(|e| !aerial_index.contains_key(&e.id)) {
            return Err(Error::Dataset(format!(
                "descriptor database entry {} has no aerial submap",
                e.id
            )));
        }
        let d = &cfg.reloc.descriptors;
        Ok(Self {
            cfg,
            aerial,
            aerial_index,
            db,
            projection: Projection::new(d.global_dim, d.projection_seed),
            clouds: HashMap::new(),
            descriptions: HashMap::new(),
            graph: FactorGraph::new(cfg.smoother.clone())?,
            state: LocalizerState {
                mode: Mode::Relocalizing,
                estimate: None,
                consecutive_failures: 0,
            },
            trajectory: Vec::new(),
            marginals: Vec::new(),
        })
    }

    pub fn state(&self) -> &LocalizerState {
        &self.state
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    /// Processes one ground submap. `odometry` is the composed increment
    /// since the previous submap (absent for the first).
    pub fn step(&mut self, submap: &Submap, odometry: Option<(Pose6, Matrix6<f64>)>) -> Result<SubmapDiagnostics> {
        let time = submap
            .timestamp
            .ok_or_else(|| Error::Dataset(format!("ground submap {} has no timestamp", submap.id)))?;
        let mut d = SubmapDiagnostics::new(submap.id, time, self.state.mode);
        match self.state.mode {
            Mode::Relocalizing => self.relocalize(submap, time, &mut d)?,
            Mode::Tracking => {
                let odometry = odometry.ok_or_else(|| {
                    Error::Dataset(format!("no odometry leading to ground submap {}", submap.id))
                })?;
                self.track(submap, time, odometry, &mut d)?;
            }
        }
        Ok(d)
    }

    /// Flushes the window and returns everything estimated so far.
    pub fn finish(mut self) -> Result<(Vec<Stamped>, Vec<(u64, Matrix6<f64>)>)> {
        self.flush()?;
        Ok((self.trajectory, self.marginals))
    }

    fn relocalize(&mut self, submap: &Submap, time: f64, d: &mut SubmapDiagnostics) -> Result<()> {
        let start = Instant::now();
        let accepted = self.try_relocalize(submap, d)?;
        if let Some(factor) = accepted {
            self.graph = FactorGraph::new(self.cfg.smoother.clone())?;
            self.graph.add_prior(submap.id, time, factor.pose, factor.information)?;
            self.graph.optimize()?;
            self.state.mode = Mode::Tracking;
            self.state.consecutive_failures = 0;
            self.state.estimate = Some((factor.pose, self.graph.marginal(submap.id)?));
            d.outcome = Outcome::Relocalized;
        } else {
            d.outcome = Outcome::NoMatch;
        }
        d.times.relocalisation = start.elapsed().as_secs_f64();
        Ok(())
    }

    /// Retrieval, then coarse and fine registration on the candidates in
    /// rank order until one passes the fitness check.
    fn try_relocalize(&mut self, submap: &Submap, d: &mut SubmapDiagnostics) -> Result<Option<MapFactor>> {
        let reloc = &self.cfg.reloc;
        let Ok(query) = describe_cloud(&submap.cloud, &self.projection, reloc) else {
            return Ok(None);
        };
        let Some(source) = self.source_cloud(submap) else {
            return Ok(None);
        };
        let mut best_fitness = f64::NEG_INFINITY;
        for (rank, (id, _)) in retrieve_topk(&query.global, self.db, reloc.retrieval_k).into_iter().enumerate() {
            let candidate = self.description(id)?;
            let coarse = ransac_register(&query.keypoints, &query.descriptors, &candidate.0, &candidate.1, &reloc.ransac);
            if d.candidate.is_none() {
                d.candidate = Some(id);
                d.rank = Some(rank + 1);
                d.inlier_ratio = Some(coarse.inlier_ratio);
            }
            if !coarse.success {
                continue;
            }
            let aerial = &self.aerial[self.aerial_index[&id]];
            let target = self.target_cloud(aerial)?;
            let reg = gicp_align(&source, &target, &coarse.pose, &self.cfg.gicp);
            if reg.is_success() && reg.fitness > best_fitness {
                best_fitness = reg.fitness;
                d.candidate = Some(id);
                d.rank = Some(rank + 1);
                d.inlier_ratio = Some(coarse.inlier_ratio);
                d.fitness = Some(reg.fitness);
                d.registration = Some(reg.clone());
            }
            if reg.is_success() && reg.fitness >= reloc.fitness_threshold {
                return self.map_factor(aerial, submap, &reg).map(Some);
            }
        }
        Ok(None)
    }

    fn track(
        &mut self,
        submap: &Submap,
        time: f64,
        (delta, cov): (Pose6, Matrix6<f64>),
        d: &mut SubmapDiagnostics,
    ) -> Result<()> {
        let start = Instant::now();
        let prev = self.graph.newest().expect("tracking keeps a state").id;
        self.graph
            .add_odom_factor(prev, submap.id, time, delta, information_from_covariance(&cov)?)?;
        d.times.odometry = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let factor = if self.cfg.pipeline.map_factors {
            self.register_tracking(submap, d)?
        } else {
            d.outcome = Outcome::OdometryOnly;
            None
        };
        d.times.registration = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let mut tracked = !self.cfg.pipeline.map_factors;
        if let Some(f) = factor {
            let gate = self.graph.gate_map_factor(&f)?;
            d.gate_distance = Some(gate.distance);
            d.gate_accepted = Some(gate.accepted);
            if gate.accepted {
                self.graph.add_map_factor(f)?;
                d.outcome = Outcome::MapFactor;
                tracked = true;
            } else {
                d.outcome = Outcome::GateRejected;
            }
        }
        self.graph.optimize()?;
        if tracked {
            self.state.consecutive_failures = 0;
        } else {
            self.state.consecutive_failures += 1;
        }
        if self.state.consecutive_failures >= self.cfg.pipeline.max_failures {
            self.flush()?;
            self.state = LocalizerState {
                mode: Mode::Relocalizing,
                estimate: None,
                consecutive_failures: 0,
            };
            d.reverted = true;
        } else {
            self.slide()?;
            let newest = self.graph.newest().expect("tracking keeps a state").clone();
            self.state.estimate = Some((newest.pose, self.graph.marginal(newest.id)?));
        }
        d.times.fg_optimisation = start.elapsed().as_secs_f64();
        Ok(())
    }

    /// Registers against the aerial submap nearest the prediction; returns
    /// a map factor when registration and fitness pass.
    fn register_tracking(&mut self, submap: &Submap, d: &mut SubmapDiagnostics) -> Result<Option<MapFactor>> {
        let predicted = self.graph.newest().expect("tracking keeps a state").pose;
        let origin = predicted.compose(&submap.body_in_submap.inverse());
        let Some(aerial) = self.nearest_aerial(&origin) else {
            d.outcome = Outcome::NoCandidate;
            return Ok(None);
        };
        d.candidate = Some(aerial.id);
        let Some(source) = self.source_cloud(submap) else {
            d.outcome = Outcome::RegistrationFailed;
            return Ok(None);
        };
        let target = self.target_cloud(aerial)?;
        let init = aerial.origin.inverse().compose(&origin);
        let reg = gicp_align(&source, &target, &init, &self.cfg.gicp);
        d.fitness = Some(reg.fitness);
        d.registration = Some(reg.clone());
        if !reg.is_success() {
            d.outcome = Outcome::RegistrationFailed;
            return Ok(None);
        }
        if reg.fitness < self.cfg.reloc.fitness_threshold {
            d.outcome = Outcome::LowFitness;
            return Ok(None);
        }
        self.map_factor(aerial, submap, &reg).map(Some)
    }

    /// Body pose in the map frame measured by a registration of `submap`
    /// into `aerial`, with its (inflated) covariance.
    fn map_factor(&self, aerial: &Submap, submap: &Submap, reg: &RegistrationResult) -> Result<MapFactor> {
        let dof = 3.0 * reg.correspondences as f64 - 6.0;
        let variance = if dof > 0.0 { reg.final_cost / dof } else { 1.0 };
        let scale = variance.max(1.0) * self.cfg.pipeline.map_covariance_inflation;
        let cov = transfer_covariance(&(reg.covariance * scale), &submap.body_in_submap);
        Ok(MapFactor {
            node: submap.id,
            pose: aerial.origin.compose(&reg.pose).compose(&submap.body_in_submap),
            information: information_from_covariance(&cov)?,
            fitness: reg.fitness,
        })
    }

    fn nearest_aerial(&self, origin: &Pose6) -> Option<&'a Submap> {
        let p = origin.translation();
        let r2 = self.cfg.pipeline.tracking_radius.powi(2);
        self.aerial
            .iter()
            .map(|a| {
                let c = a.origin.translation();
                ((c.x - p.x).powi(2) + (c.y - p.y).powi(2), a)
            })
            .filter(|(d2, _)| *d2 <= r2)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)))
            .map(|(_, a)| a)
    }

    fn source_cloud(&self, submap: &Submap) -> Option<GaussianCloud> {
        estimate_subset_covariances(
            &submap.cloud.points,
            self.cfg.gicp.covariance_k,
            self.cfg.pipeline.source_points,
        )
        .ok()
    }

    fn target_cloud(&mut self, aerial: &Submap) -> Result<Rc<GaussianCloud>> {
        if let Some(c) = self.clouds.get(&aerial.id) {
            return Ok(c.clone());
        }
        if self.clouds.len() >= self.cfg.pipeline.cache_capacity {
            self.clouds.clear();
        }
        let cloud = Rc::new(estimate_subset_covariances(
            &aerial.cloud.points,
            self.cfg.gicp.covariance_k,
            usize::MAX,
        )?);
        self.clouds.insert(aerial.id, cloud.clone());
        Ok(cloud)
    }

    /// Keypoints and local descriptors of a database entry, computed on
    /// first use when the database holds global descriptors only.
    fn description(&mut self, id: u64) -> Result<Rc<Description>> {
        if let Some(d) = self.descriptions.get(&id) {
            return Ok(d.clone());
        }
        let entry = self.db.get(id).expect("retrieved ids come from the database");
        let d = if entry.keypoints.is_empty() {
            let aerial = &self.aerial[self.aerial_index[&id]];
            let full = describe_cloud(&aerial.cloud, &self.projection, &self.cfg.reloc)?;
            Rc::new((full.keypoints, full.descriptors))
        } else {
            Rc::new((entry.keypoints.clone(), entry.descriptors.clone()))
        };
        self.descriptions.insert(id, d.clone());
        Ok(d)
    }

    fn slide(&mut self) -> Result<()> {
        if self.graph.nodes().len() <= self.graph.params().lag {
            return Ok(());
        }
        let marginals = self.graph.marginals()?;
        let removed = self.graph.slide_window()?;
        self.emit(&removed, &marginals);
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if self.graph.is_empty() {
            return Ok(());
        }
        let marginals = self.graph.marginals()?;
        let nodes = self.graph.nodes().to_vec();
        self.emit(&nodes, &marginals);
        self.graph = FactorGraph::new(self.cfg.smoother.clone())?;
        Ok(())
    }

    fn emit(&mut self, nodes: &[crate::graph::StateNode], marginals: &[(u64, Matrix6<f64>)]) {
        for n in nodes {
            self.trajectory.push(Stamped {
                time: n.timestamp,
                pose: n.pose,
            });
            if let Some((_, m)) = marginals.iter().find(|(id, _)| *id == n.id) {
                self.marginals.push((n.id, *m));
            }
        }
    }
}

/// Scan index of each ground submap's anchor time.
fn anchor_indices(ground: &[Submap], odometry: &OdometryStream) -> Result<Vec<usize>> {
    let times = &odometry.times;
    if times.len() != odometry.increments.len() + 1 {
        return Err(Error::Dataset(format!(
            "{} odometry times but {} increments",
            times.len(),
            odometry.increments.len()
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Dataset("odometry times must increase strictly".into()));
    }
    let mut out = Vec::with_capacity(ground.len());
    for s in ground {
        let t = s
            .timestamp
            .ok_or_else(|| Error::Dataset(format!("ground submap {} has no timestamp", s.id)))?;
        let k = times.partition_point(|x| *x < t - 1e-9);
        if k >= times.len() || (times[k] - t).abs() > 1e-9 {
            return Err(Error::Dataset(format!(
                "no odometry sample at t={t:.6} for ground submap {}",
                s.id
            )));
        }
        if out.last().is_some_and(|&prev| k <= prev) {
            return Err(Error::Dataset("ground submaps must be in increasing time order".into()));
        }
        out.push(k);
    }
    Ok(out)
}

/// Runs the localiser over a ground submap stream. Inputs are checked for
/// consistency before any submap is processed.
pub fn run(
    ground: &[Submap],
    odometry: &OdometryStream,
    aerial: &[Submap],
    db: &DescriptorDb,
    cfg: &RunConfig,
) -> Result<RunOutput> {
    let anchors = anchor_indices(ground, odometry)?;
    if ground.windows(2).any(|w| w[1].id <= w[0].id) {
        return Err(Error::Dataset("ground submap ids must increase".into()));
    }
    let mut loc = Localizer::new(cfg, aerial, db)?;
    let mut diagnostics = Vec::with_capacity(ground.len());
    for (k, s) in ground.iter().enumerate() {
        let start = Instant::now();
        let odom = (k > 0).then(|| odometry.between(anchors[k - 1], anchors[k]));
        let compose = start.elapsed().as_secs_f64();
        let mut d = loc.step(s, odom)?;
        d.times.odometry += compose;
        log::debug!("submap {} {:?} -> {:?}", s.id, d.mode, d.outcome);
        diagnostics.push(d);
    }
    let (trajectory, marginals) = loc.finish()?;
    Ok(RunOutput {
        trajectory,
        marginals,
        diagnostics,
    })
}

pub fn run_dataset(ds: &Dataset, db: &DescriptorDb, cfg: &RunConfig) -> Result<RunOutput> {
    run(&ds.ground_submaps, &OdometryStream::from_dataset(ds), &ds.aerial_submaps, db, cfg)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_f(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// `submap,time,mode,outcome,candidate,rank,inlier_ratio,fitness,gate_distance,gate,reverted`.
/// Wall-clock times go to [`write_timing`] so this file is reproducible.
pub fn write_diagnostics<W: Write>(rows: &[SubmapDiagnostics], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "submap",
        "time",
        "mode",
        "outcome",
        "candidate",
        "rank",
        "inlier_ratio",
        "fitness",
        "gate_distance",
        "gate",
        "reverted",
    ])
    .map_err(csv_err)?;
    for d in rows {
        let gate = match d.gate_accepted {
            Some(true) => "accept",
            Some(false) => "reject",
            None => "",
        };
        out.write_record([
            d.submap.to_string(),
            format!("{:.6}", d.time),
            d.mode.as_str().to_string(),
            d.outcome.as_str().to_string(),
            opt(d.candidate),
            opt(d.rank),
            opt_f(d.inlier_ratio),
            opt_f(d.fitness),
            opt_f(d.gate_distance),
            gate.to_string(),
            (d.reverted as u8).to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// `submap,odometry,registration,fg_optimisation,relocalisation,total` in seconds.
pub fn write_timing<W: Write>(rows: &[SubmapDiagnostics], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["submap", "odometry", "registration", "fg_optimisation", "relocalisation", "total"])
        .map_err(csv_err)?;
    for d in rows {
        let t = d.times;
        out.write_record([
            d.submap.to_string(),
            format!("{:.6}", t.odometry),
            format!("{:.6}", t.registration),
            format!("{:.6}", t.fg_optimisation),
            format!("{:.6}", t.relocalisation),
            format!("{:.6}", t.total()),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Registration log rows for every submap whose diagnostics carry one.
pub fn write_registrations<W: Write>(rows: &[SubmapDiagnostics], w: &mut W) -> Result<()> {
    for d in rows {
        if let (Some(candidate), Some(reg)) = (d.candidate, &d.registration) {
            write_registration_line(d.submap, candidate, reg, w)?;
        }
    }
    Ok(())
}
