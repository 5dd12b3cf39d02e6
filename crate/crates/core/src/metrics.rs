//! Trajectory, dense tracking and association metrics.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::association::MatchSet;
use crate::error::{Error, Result};
use crate::fusion::pose_transform;
use crate::model::{rotation_angle, FramePrediction, Pose, SimilarityTransform, TrackletId, Vec3};
use crate::registration::{solve_weighted_rigid, solve_weighted_similarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlignMode {
    Rigid,
    #[default]
    Similarity,
}

/// Least-squares transform taking predicted camera centers onto ground truth.
///
/// Collinear centers are reported as `DegenerateConfiguration`; [`ate`] then falls
/// back to the pose-based estimate used for chunk fallback.
pub fn align_trajectories(pred: &[Pose], gt: &[Pose], mode: AlignMode) -> Result<SimilarityTransform> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!("pose lists differ in length ({} vs {})", pred.len(), gt.len())));
    }
    if pred.len() < 3 {
        return Err(Error::NotEnoughPoints { needed: 3, got: pred.len() });
    }
    let src: Vec<Vec3> = pred.iter().map(|p| p.center()).collect();
    let dst: Vec<Vec3> = gt.iter().map(|p| p.center()).collect();
    let w = vec![1.0; src.len()];
    match mode {
        AlignMode::Similarity => solve_weighted_similarity(&src, &dst, &w),
        AlignMode::Rigid => solve_weighted_rigid(&src, &dst, &w, 1.0),
    }
}

fn align_or_fallback(pred: &[Pose], gt: &[Pose], mode: AlignMode) -> Result<SimilarityTransform> {
    match align_trajectories(pred, gt, mode) {
        Err(Error::DegenerateConfiguration(_)) => {
            let t = pose_transform(gt, pred);
            Ok(if mode == AlignMode::Rigid { t.with_scale(1.0) } else { t })
        }
        other => other,
    }
}

fn centers_rms(t: &SimilarityTransform, pred: &[Pose], gt: &[Pose]) -> f64 {
    let sq: f64 = pred.iter().zip(gt).map(|(p, g)| (t.apply(&p.center()) - g.center()).norm_squared()).sum();
    (sq / pred.len() as f64).sqrt()
}

/// RMS camera-center error after similarity alignment.
pub fn ate(pred: &[Pose], gt: &[Pose]) -> Result<f64> {
    ate_with(pred, gt, AlignMode::Similarity)
}

pub fn ate_with(pred: &[Pose], gt: &[Pose], mode: AlignMode) -> Result<f64> {
    let t = align_or_fallback(pred, gt, mode)?;
    Ok(centers_rms(&t, pred, gt))
}

/// Relative pose error over all pairs `(t, t + delta)`: RMS translation norm and
/// RMS rotation angle in degrees. Poses are compared as given, without alignment.
pub fn rpe(pred: &[Pose], gt: &[Pose], delta: usize) -> Result<(f64, f64)> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!("pose lists differ in length ({} vs {})", pred.len(), gt.len())));
    }
    if delta == 0 {
        return Err(Error::invalid("rpe delta must be at least 1"));
    }
    if pred.len() <= delta {
        return Err(Error::NotEnoughPoints { needed: delta + 1, got: pred.len() });
    }
    let (mut st, mut sr) = (0.0, 0.0);
    let n = pred.len() - delta;
    for t in 0..n {
        let rel_gt = gt[t].inverse().compose(&gt[t + delta]);
        let rel_pred = pred[t].inverse().compose(&pred[t + delta]);
        let e = rel_gt.inverse().compose(&rel_pred);
        st += e.translation().norm_squared();
        sr += rotation_angle(e.rotation()).to_degrees().powi(2);
    }
    Ok(((st / n as f64).sqrt(), (sr / n as f64).sqrt()))
}

/// Per-pixel 3D trajectories keyed by the seed pixel of the first frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackTable {
    pub tracks: BTreeMap<usize, BTreeMap<usize, Vec3>>,
}

impl TrackTable {
    /// Reads pixel `u` of every frame as the trajectory of seed `u`. With a
    /// threshold, only samples whose confidence exceeds it are kept.
    pub fn from_frames(frames: &[FramePrediction], min_confidence: Option<f64>) -> Self {
        let mut tracks: BTreeMap<usize, BTreeMap<usize, Vec3>> = BTreeMap::new();
        for f in frames {
            for (u, (p, c)) in f.points().iter().zip(f.confidence()).enumerate() {
                let row = tracks.entry(u).or_default();
                if min_confidence.is_none_or(|m| *c > m) {
                    row.insert(f.frame_index(), *p);
                }
            }
        }
        Self { tracks }
    }

    pub fn num_samples(&self) -> usize {
        self.tracks.values().map(|r| r.len()).sum()
    }
}

/// Mean 3D end-point error over every ground-truth sample.
///
/// With `align`, one similarity transform fitted over all samples first maps the
/// prediction onto the ground truth.
pub fn dense_epe(pred: &TrackTable, gt: &TrackTable, align: bool) -> Result<f64> {
    if pred.tracks.len() != gt.tracks.len() || pred.tracks.keys().zip(gt.tracks.keys()).any(|(a, b)| a != b) {
        return Err(Error::KeyMismatch(format!(
            "prediction has {} seed pixels, ground truth {}",
            pred.tracks.len(),
            gt.tracks.len()
        )));
    }
    let mut src = Vec::with_capacity(gt.num_samples());
    let mut dst = Vec::with_capacity(gt.num_samples());
    for (u, row) in &gt.tracks {
        let prow = &pred.tracks[u];
        for (f, g) in row {
            let p = prow
                .get(f)
                .ok_or_else(|| Error::KeyMismatch(format!("prediction lacks frame {f} of seed pixel {u}")))?;
            src.push(*p);
            dst.push(*g);
        }
    }
    if dst.is_empty() {
        return Err(Error::NotEnoughPoints { needed: 1, got: 0 });
    }
    let t = if align {
        solve_weighted_similarity(&src, &dst, &vec![1.0; src.len()])?
    } else {
        SimilarityTransform::identity()
    };
    Ok(src.iter().zip(&dst).map(|(p, g)| (t.apply(p) - g).norm()).sum::<f64>() / dst.len() as f64)
}

/// Association counts; precision, recall and F1 derive from them so several
/// chunk pairs can be pooled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Prf {
    pub true_positives: usize,
    pub predicted: usize,
    pub relevant: usize,
}

impl Prf {
    pub fn precision(&self) -> f64 {
        ratio(self.true_positives, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_positives, self.relevant)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 }
    }

    pub fn combine(self, other: Prf) -> Prf {
        Prf {
            true_positives: self.true_positives + other.true_positives,
            predicted: self.predicted + other.predicted,
            relevant: self.relevant + other.relevant,
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 { 0.0 } else { a as f64 / b as f64 }
}

/// Scores a match set against object labels of the tracklets on each side.
///
/// A match is correct when both tracklets carry the same label. The number of
/// achievable correct matches is `Σ_label min(count_i, count_j)`.
pub fn association_prf(
    matches: &MatchSet,
    labels_i: &HashMap<TrackletId, u32>,
    labels_j: &HashMap<TrackletId, u32>,
) -> Result<Prf> {
    let label = |map: &HashMap<TrackletId, u32>, id: TrackletId| {
        map.get(&id).copied().ok_or_else(|| Error::KeyMismatch(format!("no ground-truth label for tracklet {id}")))
    };
    let mut counts: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    let mut tp = 0;
    for &(a, b, _) in &matches.matches {
        let (la, lb) = (label(labels_i, a)?, label(labels_j, b)?);
        counts.entry(la).or_default().0 += 1;
        counts.entry(lb).or_default().1 += 1;
        tp += usize::from(la == lb);
    }
    for &a in &matches.unmatched_i {
        counts.entry(label(labels_i, a)?).or_default().0 += 1;
    }
    for &b in &matches.unmatched_j {
        counts.entry(label(labels_j, b)?).or_default().1 += 1;
    }
    let relevant = counts.values().map(|(i, j)| (*i).min(*j)).sum();
    Ok(Prf { true_positives: tp, predicted: matches.matches.len(), relevant })
}

/// Labels of pixel-indexed tracklets from a per-pixel label map.
pub fn pixel_labels(object_ids: &[u32]) -> HashMap<TrackletId, u32> {
    object_ids.iter().enumerate().map(|(u, l)| (u, *l)).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsReport {
    pub epe: Option<f64>,
    pub ate: Option<f64>,
    pub rpe_delta: Option<usize>,
    pub rpe_translation: Option<f64>,
    pub rpe_rotation_deg: Option<f64>,
    pub association: Option<AssociationSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssociationSummary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(flatten)]
    pub counts: Prf,
}

impl From<Prf> for AssociationSummary {
    fn from(counts: Prf) -> Self {
        Self { precision: counts.precision(), recall: counts.recall(), f1: counts.f1(), counts }
    }
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per metric, aligned for terminals.
    pub fn table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
        let mut rows = vec![
            ("EPE".to_string(), fmt(self.epe)),
            ("ATE".to_string(), fmt(self.ate)),
            (format!("RPE-t (d={})", self.rpe_delta.unwrap_or(1)), fmt(self.rpe_translation)),
            (format!("RPE-r deg (d={})", self.rpe_delta.unwrap_or(1)), fmt(self.rpe_rotation_deg)),
        ];
        if let Some(a) = &self.association {
            rows.push(("Assoc P".into(), format!("{:.4}", a.precision)));
            rows.push(("Assoc R".into(), format!("{:.4}", a.recall)));
            rows.push(("Assoc F1".into(), format!("{:.4}", a.f1)));
        }
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>12}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricSet {
    pub epe: bool,
    pub ate: bool,
    pub rpe: bool,
    pub assoc: bool,
}

impl MetricSet {
    pub fn all() -> Self {
        Self { epe: true, ate: true, rpe: true, assoc: true }
    }

    /// Parses a comma-separated list such as `epe,ate,rpe,assoc`.
    pub fn parse(list: &str) -> Result<Self> {
        let mut m = Self { epe: false, ate: false, rpe: false, assoc: false };
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "epe" => m.epe = true,
                "ate" => m.ate = true,
                "rpe" => m.rpe = true,
                "assoc" => m.assoc = true,
                other => return Err(Error::invalid(format!("unknown metric {other:?}"))),
            }
        }
        Ok(m)
    }
}

/// Fused output and ground truth as needed by [`evaluate`].
pub struct Evaluation<'a> {
    pub pred_frames: &'a [FramePrediction],
    pub matches: &'a [MatchSet],
    /// Ground-truth frames; confidence 0 marks an occluded sample.
    pub gt_frames: &'a [FramePrediction],
    pub object_ids: Option<&'a [u32]>,
    pub align_epe: bool,
    pub rpe_delta: usize,
}

fn poses_by_frame(frames: &[FramePrediction]) -> BTreeMap<usize, Pose> {
    frames.iter().map(|f| (f.frame_index(), f.pose().clone())).collect()
}

pub fn evaluate(e: &Evaluation<'_>, which: MetricSet) -> Result<MetricsReport> {
    let mut report = MetricsReport::default();
    if which.epe {
        let pred = TrackTable::from_frames(e.pred_frames, None);
        let gt = TrackTable::from_frames(e.gt_frames, Some(0.0));
        report.epe = Some(dense_epe(&pred, &gt, e.align_epe)?);
    }
    if which.ate || which.rpe {
        let pred = poses_by_frame(e.pred_frames);
        let gt = poses_by_frame(e.gt_frames);
        if !pred.keys().eq(gt.keys()) {
            return Err(Error::KeyMismatch(format!(
                "prediction covers {} frames, ground truth {}",
                pred.len(),
                gt.len()
            )));
        }
        let pred: Vec<Pose> = pred.into_values().collect();
        let gt: Vec<Pose> = gt.into_values().collect();
        let align = align_or_fallback(&pred, &gt, AlignMode::Similarity)?;
        if which.ate {
            report.ate = Some(centers_rms(&align, &pred, &gt));
        }
        if which.rpe {
            let aligned: Vec<Pose> = pred.iter().map(|p| align.apply_pose(p)).collect();
            let (t, r) = rpe(&aligned, &gt, e.rpe_delta)?;
            report.rpe_delta = Some(e.rpe_delta);
            report.rpe_translation = Some(t);
            report.rpe_rotation_deg = Some(r);
        }
    }
    if which.assoc {
        let ids = e.object_ids.ok_or_else(|| Error::KeyMismatch("ground truth has no object ids".into()))?;
        let labels = pixel_labels(ids);
        let mut total = Prf::default();
        for m in e.matches {
            total = total.combine(association_prf(m, &labels, &labels)?);
        }
        report.association = Some(total.into());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{axis_angle, Mat3};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn orbit(n: usize) -> Vec<Pose> {
        (0..n)
            .map(|t| {
                let a = 0.2 * t as f64;
                let r = axis_angle(&Vec3::z(), a);
                Pose::new(r, Vec3::new(3.0 * a.cos(), 3.0 * a.sin(), 0.3 * t as f64)).unwrap()
            })
            .collect()
    }

    fn gauge() -> SimilarityTransform {
        SimilarityTransform::new(0.6, axis_angle(&Vec3::new(1.0, -0.5, 0.2), 1.1), Vec3::new(2.0, 0.5, -1.0)).unwrap()
    }

    #[test]
    fn alignment_recovers_gauge() {
        let gt = orbit(10);
        assert_relative_eq!(align_trajectories(&gt, &gt, AlignMode::Similarity).unwrap().to_matrix(), SimilarityTransform::identity().to_matrix(), epsilon = 1e-12);
        let g = gauge();
        let pred: Vec<Pose> = gt.iter().map(|p| g.apply_pose(p)).collect();
        let t = align_trajectories(&pred, &gt, AlignMode::Similarity).unwrap();
        assert!((t.to_matrix() - g.inverse().to_matrix()).norm() < 1e-9);
        assert!(matches!(align_trajectories(&pred[..2], &gt[..2], AlignMode::Similarity), Err(Error::NotEnoughPoints { .. })));
    }

    #[test]
    fn ate_absorbs_offsets() {
        let gt = orbit(8);
        assert!(ate(&gt, &gt).unwrap() < 1e-12);
        let shift = SimilarityTransform::new(1.0, Mat3::identity(), Vec3::new(0.4, -2.0, 1.0)).unwrap();
        let pred: Vec<Pose> = gt.iter().map(|p| shift.apply_pose(p)).collect();
        assert!(ate(&pred, &gt).unwrap() < 1e-12);
    }

    #[test]
    fn ate_formula_on_hand_built_case() {
        // Unit square with two corners lifted by ±e. The optimal fit can only beat
        // the identity, whose error is sqrt(2 e² / 4).
        let e = 0.1;
        let corners = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (1.0, 1.0, 0.0), (0.0, 1.0, 0.0)];
        let gt: Vec<Pose> = corners.iter().map(|c| Pose::new(Mat3::identity(), Vec3::new(c.0, c.1, c.2)).unwrap()).collect();
        let mut pred = gt.clone();
        pred[0] = Pose::new(Mat3::identity(), Vec3::new(0.0, 0.0, e)).unwrap();
        pred[2] = Pose::new(Mat3::identity(), Vec3::new(1.0, 1.0, -e)).unwrap();
        let t = align_trajectories(&pred, &gt, AlignMode::Similarity).unwrap();
        let direct = (pred.iter().zip(&gt).map(|(p, g)| (t.apply(&p.center()) - g.center()).norm_squared()).sum::<f64>() / 4.0).sqrt();
        assert_relative_eq!(ate(&pred, &gt).unwrap(), direct, epsilon = 1e-15);
        assert!(ate(&pred, &gt).unwrap() <= (2.0 * e * e / 4.0).sqrt() + 1e-12);
    }

    #[test]
    fn collinear_centers_fall_back() {
        let gt: Vec<Pose> = (0..6).map(|t| Pose::new(Mat3::identity(), Vec3::new(t as f64, 0.0, 0.0)).unwrap()).collect();
        let g = gauge();
        let pred: Vec<Pose> = gt.iter().map(|p| g.apply_pose(p)).collect();
        assert!(matches!(align_trajectories(&pred, &gt, AlignMode::Similarity), Err(Error::DegenerateConfiguration(_))));
        assert!(ate(&pred, &gt).unwrap() < 1e-9);
    }

    #[test]
    fn rpe_constant_rotation() {
        let theta: f64 = 0.05;
        let gt: Vec<Pose> = (0..10).map(|_| Pose::identity()).collect();
        let pred: Vec<Pose> = (0..10).map(|t| Pose::new(axis_angle(&Vec3::z(), theta * t as f64), Vec3::zeros()).unwrap()).collect();
        let (tr, rot) = rpe(&pred, &gt, 1).unwrap();
        assert_eq!(tr, 0.0);
        assert_relative_eq!(rot, theta.to_degrees(), epsilon = 1e-9);
        assert!(matches!(rpe(&pred[..1], &gt[..1], 1), Err(Error::NotEnoughPoints { .. })));
    }

    proptest! {
        #[test]
        fn ate_is_similarity_invariant(s in 0.2f64..5.0, ax in -1.0f64..1.0, ay in -1.0f64..1.0, angle in 0.0f64..3.0, tx in -5.0f64..5.0) {
            let gt = orbit(12);
            let mut rng = ChaCha8Rng::seed_from_u64((s * 1e6) as u64);
            let pred: Vec<Pose> = gt.iter().map(|p| {
                let n = Vec3::from_fn(|_, _| rng.random_range(-0.1..0.1));
                Pose::new(*p.rotation(), p.center() + n).unwrap()
            }).collect();
            let t = SimilarityTransform::new(s, axis_angle(&Vec3::new(ax, ay, 0.5), angle), Vec3::new(tx, 1.0, -2.0)).unwrap();
            let moved: Vec<Pose> = pred.iter().map(|p| t.apply_pose(p)).collect();
            prop_assert!((ate(&moved, &gt).unwrap() - ate(&pred, &gt).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn rpe_of_self_is_zero(d in 1usize..11) {
            let p = orbit(12);
            let (t, r) = rpe(&p, &p, d).unwrap();
            prop_assert!(t < 1e-12 && r < 1e-6);
        }
    }

    fn table(points: &[Vec3]) -> TrackTable {
        let mut tracks = BTreeMap::new();
        for (u, p) in points.iter().enumerate() {
            tracks.insert(u, BTreeMap::from([(0usize, *p)]));
        }
        TrackTable { tracks }
    }

    fn unit_cloud(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Vec3::from_fn(|_, _| rng.random_range(-0.5..0.5))).collect()
    }

    #[test]
    fn epe_trivial_cases() {
        let gt = table(&unit_cloud(200, 1));
        assert!(dense_epe(&gt, &gt, true).unwrap() < 1e-12);
        assert_eq!(dense_epe(&gt, &gt, false).unwrap(), 0.0);
        let shifted: Vec<Vec3> = unit_cloud(200, 1).iter().map(|p| p + Vec3::new(0.3, 0.1, -0.2)).collect();
        assert!(dense_epe(&table(&shifted), &gt, true).unwrap() < 1e-12);
        assert_relative_eq!(dense_epe(&table(&shifted), &gt, false).unwrap(), 0.14f64.sqrt(), epsilon = 1e-12);
        let fewer = table(&unit_cloud(199, 1));
        assert!(matches!(dense_epe(&fewer, &gt, true), Err(Error::KeyMismatch(_))));
    }

    #[test]
    fn epe_matches_monte_carlo() {
        let sigma = 0.01;
        let gt_pts = unit_cloud(20000, 2);
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pred: Vec<Vec3> = gt_pts.iter().map(|p| p + Vec3::from_fn(|_, _| normal.sample(&mut rng))).collect();
        let epe = dense_epe(&table(&pred), &table(&gt_pts), true).unwrap();
        let mut other = ChaCha8Rng::seed_from_u64(99);
        let brute: f64 = (0..200_000).map(|_| Vec3::from_fn(|_, _| normal.sample(&mut other)).norm()).sum::<f64>() / 200_000.0;
        assert!((epe / brute - 1.0).abs() < 0.02, "epe {epe} vs {brute}");
    }

    #[test]
    fn epe_grows_with_noise() {
        let gt_pts = unit_cloud(500, 4);
        let gt = table(&gt_pts);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dirs: Vec<Vec3> = gt_pts.iter().map(|_| Vec3::from_fn(|_, _| Normal::new(0.0, 1.0).unwrap().sample(&mut rng))).collect();
            let mut last = 0.0;
            for sigma in [0.0, 0.002, 0.005, 0.01, 0.02, 0.05] {
                let pred: Vec<Vec3> = gt_pts.iter().zip(&dirs).map(|(p, d)| p + d * sigma).collect();
                let e = dense_epe(&table(&pred), &gt, true).unwrap();
                assert!(e >= last, "seed {seed}: {e} < {last}");
                last = e;
            }
        }
    }

    fn labels(v: &[(usize, u32)]) -> HashMap<TrackletId, u32> {
        v.iter().copied().collect()
    }

    #[test]
    fn prf_cases() {
        let li = labels(&[(0, 1), (1, 2), (2, 3)]);
        let lj = labels(&[(10, 1), (11, 2), (12, 3), (13, 9)]);
        let perfect = MatchSet { matches: vec![(0, 10, 0.1), (1, 11, 0.1), (2, 12, 0.1)], unmatched_i: vec![], unmatched_j: vec![13] };
        let p = association_prf(&perfect, &li, &lj).unwrap();
        assert_eq!((p.precision(), p.recall(), p.f1()), (1.0, 1.0, 1.0));

        let one_wrong = MatchSet { matches: vec![(0, 10, 0.1), (1, 11, 0.1), (2, 13, 0.1)], unmatched_i: vec![], unmatched_j: vec![12] };
        let p = association_prf(&one_wrong, &li, &lj).unwrap();
        assert_relative_eq!(p.precision(), 2.0 / 3.0);
        assert_relative_eq!(p.recall(), 2.0 / 3.0);
        assert_relative_eq!(p.f1(), 2.0 / 3.0);

        let empty = MatchSet { matches: vec![], unmatched_i: vec![0, 1, 2], unmatched_j: vec![10, 11, 12, 13] };
        let p = association_prf(&empty, &li, &lj).unwrap();
        assert_eq!((p.precision(), p.recall(), p.f1()), (0.0, 0.0, 0.0));

        let unknown = MatchSet { matches: vec![(5, 10, 0.0)], unmatched_i: vec![], unmatched_j: vec![] };
        assert!(matches!(association_prf(&unknown, &li, &lj), Err(Error::KeyMismatch(_))));
    }

    #[test]
    fn report_renders() {
        let r = MetricsReport { epe: Some(0.5), ate: Some(0.1), rpe_delta: Some(1), rpe_translation: Some(0.01), rpe_rotation_deg: None, association: Some(Prf { true_positives: 2, predicted: 3, relevant: 4 }.into()) };
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["association"]["true_positives"], 2);
        assert!(r.table().contains("Assoc F1"));
    }
}
