//! Retrieval, registration, keypoint and trajectory metrics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{umeyama_align, Point3, Pose6, SpatialIndex};
use crate::io::Stamped;

/// Top-1 retrieval within this planar distance is a true positive.
pub const TRUE_POSITIVE_RADIUS: f64 = 5.0;
/// Top-1 retrieval beyond this planar distance is a false positive.
pub const FALSE_POSITIVE_RADIUS: f64 = 20.0;
pub const SUCCESS_ROTATION_DEG: f64 = 5.0;
pub const SUCCESS_TRANSLATION: f64 = 2.0;
pub const REPEATABILITY_EPS: f64 = 0.5;
pub const ASSOCIATION_GAP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    /// Path-length segment lengths for the relative translation error.
    pub rte_bins: Vec<f64>,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            rte_bins: vec![25.0, 50.0, 75.0, 100.0, 125.0, 150.0],
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<()> {
        if self.rte_bins.is_empty() || self.rte_bins.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::Config("eval.rte_bins must be non-empty and positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JudgementLabel {
    TruePositive,
    FalsePositive,
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalJudgement {
    pub query: u64,
    pub candidate: u64,
    pub descriptor_distance: f64,
    pub planar_distance: f64,
    /// Some database entry lies within the true-positive radius.
    pub has_positive: bool,
    pub label: JudgementLabel,
}

impl RetrievalJudgement {
    pub fn new(query: u64, candidate: u64, descriptor_distance: f64, planar_distance: f64, has_positive: bool) -> Self {
        let label = if planar_distance < TRUE_POSITIVE_RADIUS {
            JudgementLabel::TruePositive
        } else if planar_distance > FALSE_POSITIVE_RADIUS {
            JudgementLabel::FalsePositive
        } else {
            JudgementLabel::Ignored
        };
        Self {
            query,
            candidate,
            descriptor_distance,
            planar_distance,
            has_positive,
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub f1max: f64,
}

fn pr_point(threshold: f64, tp: usize, fp: usize, positives: usize) -> PrPoint {
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = tp as f64 / positives as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    PrPoint {
        threshold,
        precision,
        recall,
        f1,
    }
}

/// Precision and recall of accepting top-1 retrievals with descriptor
/// distance ≤ threshold, at every distinct distance. Recall is over the
/// queries that have a true match in the database.
pub fn pr_curve_f1max(judgements: &[RetrievalJudgement]) -> Result<PrCurve> {
    let positives = judgements.iter().filter(|j| j.has_positive).count();
    if positives == 0 {
        return Err(Error::InvalidInput("no query has a true match: recall is undefined".into()));
    }
    let mut sorted: Vec<&RetrievalJudgement> = judgements.iter().collect();
    sorted.sort_by(|a, b| a.descriptor_distance.total_cmp(&b.descriptor_distance));
    let (mut tp, mut fp) = (0, 0);
    let mut points = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].descriptor_distance;
        while i < sorted.len() && sorted[i].descriptor_distance == t {
            match sorted[i].label {
                JudgementLabel::TruePositive => tp += 1,
                JudgementLabel::FalsePositive => fp += 1,
                JudgementLabel::Ignored => {}
            }
            i += 1;
        }
        points.push(pr_point(t, tp, fp, positives));
    }
    let f1max = points.iter().map(|p| p.f1).fold(0.0, f64::max);
    Ok(PrCurve { points, f1max })
}

/// Reference O(n²) evaluation at one threshold.
pub fn pr_at_threshold(judgements: &[RetrievalJudgement], threshold: f64) -> Result<PrPoint> {
    let positives = judgements.iter().filter(|j| j.has_positive).count();
    if positives == 0 {
        return Err(Error::InvalidInput("no query has a true match: recall is undefined".into()));
    }
    let accepted = judgements.iter().filter(|j| j.descriptor_distance <= threshold);
    let tp = accepted.clone().filter(|j| j.label == JudgementLabel::TruePositive).count();
    let fp = accepted.filter(|j| j.label == JudgementLabel::FalsePositive).count();
    Ok(pr_point(threshold, tp, fp, positives))
}

/// Rotation below 5° and translation below 2 m.
pub fn registration_success(estimated: &Pose6, truth: &Pose6) -> bool {
    let (rot, trans) = estimated.error_to(truth);
    rot.to_degrees() < SUCCESS_ROTATION_DEG && trans < SUCCESS_TRANSLATION
}

/// Fraction of `q` mapped by `pose` whose nearest point of `q_tilde` lies
/// within `eps`.
pub fn keypoint_repeatability(q: &[Point3], q_tilde: &[Point3], pose: &Pose6, eps: f64) -> f64 {
    if q.is_empty() || q_tilde.is_empty() {
        return 0.0;
    }
    let index = SpatialIndex::new(q_tilde);
    let hits = q
        .iter()
        .filter(|p| index.nearest(&pose.transform_point(p)).is_some_and(|n| n.dist_sq < eps * eps))
        .count();
    hits as f64 / q.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorMode {
    /// Planar translation and heading.
    ThreeDof,
    /// Full translation and geodesic rotation.
    SixDof,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Stats {
    pub rmse: f64,
    pub median: f64,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

impl Stats {
    /// Population standard deviation; zeros for an empty sample.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let rmse = (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            rmse,
            median: quantile(values, 0.5),
            mean,
            std,
            max,
        }
    }
}

/// Linear-interpolated quantile.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub pairs: usize,
    /// Metres.
    pub translation: Stats,
    /// Degrees.
    pub rotation: Stats,
}

/// Index pairs `(est, ref)` matched by nearest timestamp within `max_gap`.
pub fn associate(est: &[Stamped], reference: &[Stamped], max_gap: f64) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..reference.len()).collect();
    order.sort_by(|&a, &b| reference[a].time.total_cmp(&reference[b].time));
    let times: Vec<f64> = order.iter().map(|&i| reference[i].time).collect();
    let mut out = Vec::new();
    for (i, e) in est.iter().enumerate() {
        let k = times.partition_point(|&t| t < e.time);
        let best = [k.checked_sub(1), (k < times.len()).then_some(k)]
            .into_iter()
            .flatten()
            .min_by(|&a, &b| (times[a] - e.time).abs().total_cmp(&(times[b] - e.time).abs()));
        if let Some(b) = best {
            if (times[b] - e.time).abs() <= max_gap {
                out.push((i, order[b]));
            }
        }
    }
    out
}

/// Associated pose pairs with the estimate aligned onto the reference.
pub fn aligned_pairs(est: &[Stamped], reference: &[Stamped]) -> Result<Vec<(Pose6, Pose6)>> {
    let pairs = associate(est, reference, ASSOCIATION_GAP);
    if pairs.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "{} associated pose pairs, need at least 3",
            pairs.len()
        )));
    }
    let e: Vec<Pose6> = pairs.iter().map(|&(i, _)| est[i].pose).collect();
    let r: Vec<Pose6> = pairs.iter().map(|&(_, j)| reference[j].pose).collect();
    let t_inv = umeyama_align(&e, &r)?.inverse();
    Ok(e.iter().zip(r).map(|(p, q)| (t_inv.compose(p), q)).collect())
}

/// Absolute errors after Umeyama alignment.
pub fn absolute_errors(est: &[Stamped], reference: &[Stamped], mode: ErrorMode) -> Result<ErrorSummary> {
    let pairs = aligned_pairs(est, reference)?;
    let (mut te, mut re) = (Vec::with_capacity(pairs.len()), Vec::with_capacity(pairs.len()));
    for (e, r) in &pairs {
        let d = e.translation() - r.translation();
        let rel = e.between(r);
        match mode {
            ErrorMode::ThreeDof => {
                te.push(d.xy().norm());
                re.push(rel.yaw().abs().to_degrees());
            }
            ErrorMode::SixDof => {
                te.push(d.norm());
                re.push(rel.angle().to_degrees());
            }
        }
    }
    Ok(ErrorSummary {
        pairs: pairs.len(),
        translation: Stats::of(&te),
        rotation: Stats::of(&re),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxStats {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Most extreme samples within 1.5 IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
}

impl BoxStats {
    pub fn of(values: &[f64]) -> Self {
        let q1 = quantile(values, 0.25);
        let q3 = quantile(values, 0.75);
        let iqr = q3 - q1;
        let inside = values.iter().copied().filter(|v| *v >= q1 - 1.5 * iqr && *v <= q3 + 1.5 * iqr);
        Self {
            count: values.len(),
            median: quantile(values, 0.5),
            q1,
            q3,
            whisker_low: inside.clone().fold(f64::INFINITY, f64::min),
            whisker_high: inside.fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RteBin {
    pub length: f64,
    pub errors: Vec<f64>,
    pub stats: BoxStats,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RteReport {
    pub bins: Vec<RteBin>,
    /// Bin lengths longer than the reference path.
    pub skipped: Vec<f64>,
}

/// For each bin length d and each start pose, the first later pose at
/// least d metres of reference path away; the error is the difference of
/// the estimated and reference straight-line displacements.
pub fn relative_translation_error(est: &[Stamped], reference: &[Stamped], bins: &[f64]) -> Result<RteReport> {
    let pairs = associate(est, reference, ASSOCIATION_GAP);
    if pairs.len() < 2 {
        return Err(Error::InvalidInput("fewer than 2 associated pose pairs".into()));
    }
    let e: Vec<Point3> = pairs.iter().map(|&(i, _)| *est[i].pose.translation()).collect();
    let r: Vec<Point3> = pairs.iter().map(|&(_, j)| *reference[j].pose.translation()).collect();
    let mut s = vec![0.0];
    for w in r.windows(2) {
        s.push(s.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *s.last().unwrap();
    let mut report = RteReport::default();
    for &d in bins {
        if d > total {
            log::info!("RTE bin {d} m skipped: path is {total:.1} m");
            report.skipped.push(d);
            continue;
        }
        let mut errors = Vec::new();
        let mut j = 0;
        for i in 0..s.len() {
            j = j.max(i);
            while j < s.len() && s[j] - s[i] < d {
                j += 1;
            }
            if j == s.len() {
                break;
            }
            errors.push(((e[j] - e[i]).norm() - (r[j] - r[i]).norm()).abs());
        }
        report.bins.push(RteBin {
            length: d,
            stats: BoxStats::of(&errors),
            errors,
        });
    }
    Ok(report)
}

/// Per-submap stage timings in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimes {
    pub odometry: f64,
    pub registration: f64,
    pub fg_optimisation: f64,
    pub relocalisation: f64,
}

impl StageTimes {
    pub fn total(&self) -> f64 {
        self.odometry + self.registration + self.fg_optimisation + self.relocalisation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> Self {
        let s = Stats::of(values);
        Self { mean: s.mean, std: s.std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RuntimeReport {
    pub submaps: usize,
    pub odometry: MeanStd,
    pub registration: MeanStd,
    pub fg_optimisation: MeanStd,
    pub relocalisation: MeanStd,
    pub total: MeanStd,
}

pub fn runtime_report(rows: &[StageTimes]) -> RuntimeReport {
    let col = |f: fn(&StageTimes) -> f64| MeanStd::of(&rows.iter().map(f).collect::<Vec<_>>());
    RuntimeReport {
        submaps: rows.len(),
        odometry: col(|r| r.odometry),
        registration: col(|r| r.registration),
        fg_optimisation: col(|r| r.fg_optimisation),
        relocalisation: col(|r| r.relocalisation),
        total: col(|r| r.total()),
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// `quantity,rmse,median,mean,std,max` rows for translation and rotation.
pub fn write_error_summary<W: Write>(summary: &ErrorSummary, mode: ErrorMode, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["quantity", "unit", "pairs", "rmse", "median", "mean", "std", "max"]).map_err(csv_err)?;
    let (tname, rname) = match mode {
        ErrorMode::ThreeDof => ("translation_xy", "heading"),
        ErrorMode::SixDof => ("translation", "rotation"),
    };
    for (name, unit, s) in [(tname, "m", summary.translation), (rname, "deg", summary.rotation)] {
        out.write_record([
            name.to_string(),
            unit.to_string(),
            summary.pairs.to_string(),
            format!("{:.6}", s.rmse),
            format!("{:.6}", s.median),
            format!("{:.6}", s.mean),
            format!("{:.6}", s.std),
            format!("{:.6}", s.max),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// One row per bin with box-plot statistics.
pub fn write_rte<W: Write>(report: &RteReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["length_m", "count", "median", "q1", "q3", "whisker_low", "whisker_high"]).map_err(csv_err)?;
    for b in &report.bins {
        let s = b.stats;
        out.write_record([
            format!("{}", b.length),
            s.count.to_string(),
            format!("{:.6}", s.median),
            format!("{:.6}", s.q1),
            format!("{:.6}", s.q3),
            format!("{:.6}", s.whisker_low),
            format!("{:.6}", s.whisker_high),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_pr_curve<W: Write>(curve: &PrCurve, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["threshold", "precision", "recall", "f1"]).map_err(csv_err)?;
    for p in &curve.points {
        out.write_record([
            format!("{:.9}", p.threshold),
            format!("{:.6}", p.precision),
            format!("{:.6}", p.recall),
            format!("{:.6}", p.f1),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_runtime<W: Write>(report: &RuntimeReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["stage", "mean_s", "std_s"]).map_err(csv_err)?;
    for (name, m) in [
        ("odometry", report.odometry),
        ("registration", report.registration),
        ("fg_optimisation", report.fg_optimisation),
        ("relocalisation", report.relocalisation),
        ("total", report.total),
    ] {
        out.write_record([name.to_string(), format!("{:.6}", m.mean), format!("{:.6}", m.std)])
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn j(d: f64, planar: f64) -> RetrievalJudgement {
        RetrievalJudgement::new(0, 0, d, planar, true)
    }

    #[test]
    fn labels_follow_radii() {
        assert_eq!(j(0.0, 4.9).label, JudgementLabel::TruePositive);
        assert_eq!(j(0.0, 10.0).label, JudgementLabel::Ignored);
        assert_eq!(j(0.0, 20.1).label, JudgementLabel::FalsePositive);
    }

    #[test]
    fn perfect_retrieval_gives_unit_f1() {
        let js: Vec<_> = (0..10).map(|i| j(i as f64, 1.0)).collect();
        assert_eq!(pr_curve_f1max(&js).unwrap().f1max, 1.0);
    }

    #[test]
    fn no_positives_is_an_error() {
        let js = vec![RetrievalJudgement::new(0, 1, 0.1, 50.0, false)];
        assert!(pr_curve_f1max(&js).is_err());
    }

    #[test]
    fn success_thresholds() {
        let t = Pose6::from_yaw(1.0, Vector3::new(3.0, 4.0, 0.0));
        assert!(registration_success(&t, &t));
        let yawed = t.compose(&Pose6::from_yaw(6f64.to_radians(), Vector3::zeros()));
        assert!(!registration_success(&yawed, &t));
        let moved = t.compose(&Pose6::from_translation(Vector3::new(1.9, 0.0, 0.0)));
        assert!(registration_success(&moved, &t));
    }

    #[test]
    fn repeatability_threshold_arithmetic() {
        let q: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64 * 3.0, 0.0, 0.0)).collect();
        assert_eq!(keypoint_repeatability(&q, &q, &Pose6::identity(), 0.5), 1.0);
        let shifted: Vec<Point3> = q.iter().map(|p| p + Vector3::new(0.0, 0.6, 0.0)).collect();
        assert_eq!(keypoint_repeatability(&q, &shifted, &Pose6::identity(), 0.5), 0.0);
    }

    #[test]
    fn stats_of_constant_sample() {
        let s = Stats::of(&[2.0; 5]);
        assert_eq!((s.mean, s.median, s.std, s.max, s.rmse), (2.0, 2.0, 0.0, 2.0, 2.0));
        let r = runtime_report(&[StageTimes {
            odometry: 0.1,
            registration: 0.2,
            fg_optimisation: 0.3,
            relocalisation: 0.0,
        }; 4]);
        assert_eq!(r.total.std, 0.0);
        assert!((r.total.mean - 0.6).abs() < 1e-12);
    }

    #[test]
    fn association_respects_gap() {
        let p = Pose6::identity();
        let est: Vec<Stamped> = [0.0, 1.04, 2.5].iter().map(|&t| Stamped { time: t, pose: p }).collect();
        let reference: Vec<Stamped> = [0.0, 1.0, 2.0, 3.0].iter().map(|&t| Stamped { time: t, pose: p }).collect();
        assert_eq!(associate(&est, &reference, 0.1), vec![(0, 0), (1, 1)]);
    }
}
