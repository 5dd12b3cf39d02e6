//! Dynamic refinement of pairwise transforms, boundary continuity and streaming
//! sequence fusion.

use std::borrow::Borrow;
use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::ops::RangeInclusive;

use nalgebra::SVD;
use serde::{Deserialize, Serialize};

use crate::association::{associate, build_tracklets, CostContext, MatchSet};
use crate::chunker::slice_overlap;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::model::{Chunk, FramePrediction, Mat3, Pose, SimilarityTransform, Tracklet, TrackletId, Vec3};
use crate::registration::{
    register_pair, select_anchors, solve_weighted_rigid, solve_weighted_similarity, RegistrationReport,
};

/// Correspondences `(src in chunk j, dst in chunk i, weight)` used by the refinement.
pub fn refinement_correspondences(
    matches: &MatchSet,
    tracklets_i: &[Tracklet],
    tracklets_j: &[Tracklet],
    poses_i: &[Pose],
    poses_j: &[Pose],
    initial: &SimilarityTransform,
    cfg: &PipelineConfig,
) -> Result<(Vec<Vec3>, Vec<Vec3>, Vec<f64>)> {
    if matches.is_empty() {
        return Err(Error::NotEnoughPoints { needed: 3, got: 0 });
    }
    let by_id_i: HashMap<TrackletId, &Tracklet> = tracklets_i.iter().map(|t| (t.id(), t)).collect();
    let by_id_j: HashMap<TrackletId, &Tracklet> = tracklets_j.iter().map(|t| (t.id(), t)).collect();
    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut conf = Vec::new();
    let mut residual = Vec::new();
    for &(a, b, _) in &matches.matches {
        let (Some(ta), Some(tb)) = (by_id_i.get(&a), by_id_j.get(&b)) else {
            return Err(Error::invalid(format!("match ({a}, {b}) refers to an unknown tracklet")));
        };
        for (k, &f) in ta.frames().iter().enumerate() {
            let Some(xb) = tb.position_at(f) else { continue };
            let xa = ta.positions()[k];
            src.push(*xb);
            dst.push(xa);
            conf.push((ta.confidences()[k] * tb.confidence_at(f).unwrap()).sqrt());
            residual.push((initial.apply(xb) - xa).norm());
        }
    }
    let max_residual = residual.iter().copied().fold(0.0, f64::max);
    let mut weights: Vec<f64> = conf
        .iter()
        .zip(&residual)
        .map(|(c, r)| if max_residual > 0.0 { c / (1.0 + r / max_residual) } else { *c })
        .collect();
    let positive: Vec<f64> = weights.iter().copied().filter(|w| *w > 0.0).collect();
    let mean_track = if positive.is_empty() { 1.0 } else { positive.iter().sum::<f64>() / positive.len() as f64 };
    for (pi, pj) in poses_i.iter().zip(poses_j) {
        src.push(pj.center());
        dst.push(pi.center());
        weights.push(cfg.lambda_cam * mean_track);
    }
    Ok((src, dst, weights))
}

/// Re-estimates the pairwise transform from matched dynamic tracklets and overlap camera centers.
///
/// `tracklets_i` and `tracklets_j` are in their raw chunk gauges. The scale of
/// `initial` is kept unless `cfg.refine_scale` is set.
pub fn refine_transform(
    matches: &MatchSet,
    tracklets_i: &[Tracklet],
    tracklets_j: &[Tracklet],
    poses_i: &[Pose],
    poses_j: &[Pose],
    initial: &SimilarityTransform,
    cfg: &PipelineConfig,
) -> Result<SimilarityTransform> {
    let (src, dst, w) = refinement_correspondences(matches, tracklets_i, tracklets_j, poses_i, poses_j, initial, cfg)?;
    if cfg.refine_scale {
        solve_weighted_similarity(&src, &dst, &w)
    } else {
        solve_weighted_rigid(&src, &dst, &w, initial.scale())
    }
}

/// Chordal mean of the relative rotations `R_i · R_jᵀ` over paired poses.
fn mean_relative_rotation(poses_i: &[Pose], poses_j: &[Pose]) -> Mat3 {
    let mut sum = Mat3::zeros();
    for (pi, pj) in poses_i.iter().zip(poses_j) {
        sum += pi.rotation() * pj.rotation().transpose();
    }
    let svd = SVD::new(sum, true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => {
            let d = (u * v_t).determinant().signum();
            u * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * v_t
        }
        _ => Mat3::identity(),
    }
}

/// Transform from overlap camera poses alone: a similarity fit on camera centers,
/// or, when the centers are degenerate, the mean relative rotation with scale
/// from the center spreads.
pub fn pose_transform(poses_i: &[Pose], poses_j: &[Pose]) -> SimilarityTransform {
    let ci: Vec<Vec3> = poses_i.iter().map(|p| p.center()).collect();
    let cj: Vec<Vec3> = poses_j.iter().map(|p| p.center()).collect();
    if let Ok(t) = solve_weighted_similarity(&cj, &ci, &vec![1.0; ci.len()]) {
        return t;
    }
    let n = ci.len().max(1) as f64;
    let mi = ci.iter().sum::<Vec3>() / n;
    let mj = cj.iter().sum::<Vec3>() / n;
    let spread_i: f64 = ci.iter().map(|c| (c - mi).norm_squared()).sum();
    let spread_j: f64 = cj.iter().map(|c| (c - mj).norm_squared()).sum();
    let scale = if spread_i > 0.0 && spread_j > 0.0 { (spread_i / spread_j).sqrt() } else { 1.0 };
    let rotation = mean_relative_rotation(poses_i, poses_j);
    SimilarityTransform::from_parts(scale, rotation, mi - scale * (rotation * mj))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    /// Dynamic refinement over matched tracklets and camera centers.
    Refined,
    StaticAnchors,
    CameraPoses,
    /// No registration; chunks are concatenated as predicted.
    Concatenated,
}

/// Fallback hierarchy: refined, then static anchors, then camera poses.
pub fn choose_transform(
    static_result: Option<&(SimilarityTransform, RegistrationReport)>,
    refined: Option<(&SimilarityTransform, usize)>,
    poses_i: &[Pose],
    poses_j: &[Pose],
    cfg: &PipelineConfig,
) -> (SimilarityTransform, Tier) {
    if let Some((t, n)) = refined {
        if n >= cfg.min_dynamic_matches {
            return (t.clone(), Tier::Refined);
        }
    }
    if let Some((t, report)) = static_result {
        if report.reliable {
            return (t.clone(), Tier::StaticAnchors);
        }
    }
    (pose_transform(poses_i, poses_j), Tier::CameraPoses)
}

/// Thomas algorithm for a tridiagonal system; `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let l = if i > 0 { lower[i] } else { 0.0 };
        let denom = diag[i] - if i > 0 { l * c[i - 1] } else { 0.0 };
        c[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - if i > 0 { l * d[i - 1] } else { 0.0 }) / denom;
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = d[i] - if i + 1 < n { c[i] * x[i + 1] } else { 0.0 };
    }
    x
}

/// Data-term weights of the boundary blend at `frame`: the earlier track fades out
/// with `cos²` across the window while the later one fades in.
pub fn blend_weights(frame: usize, window: &RangeInclusive<usize>, has_a: bool, has_b: bool) -> (f64, f64) {
    let n = window.end() - window.start() + 1;
    let r = (frame - window.start()) as f64 / (n - 1) as f64;
    let alpha = (FRAC_PI_2 * r).cos().powi(2);
    let (mut a, mut b) = (if has_a { alpha } else { 0.0 }, if has_b { 1.0 - alpha } else { 0.0 });
    if a + b < 1e-12 {
        a = if has_a { 1.0 } else { 0.0 };
        b = if has_b { 1.0 } else { 0.0 };
    }
    (a, b)
}

/// One boundary blend problem: the free frames inside the window, their data
/// terms, and the fixed neighbors just outside it.
pub struct BoundaryProblem {
    pub frames: Vec<usize>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub target_a: Vec<Vec3>,
    pub target_b: Vec<Vec3>,
    pub before: Option<Vec3>,
    pub after: Option<Vec3>,
    pub smoothness: f64,
}

impl BoundaryProblem {
    pub fn new(d_a: &Tracklet, d_b: &Tracklet, window: &RangeInclusive<usize>, smoothness: f64) -> Result<Self> {
        if window.end() < window.start() || window.end() - window.start() + 1 < 2 {
            let len = if window.end() < window.start() { 0 } else { window.end() - window.start() + 1 };
            return Err(Error::WindowTooShort(len));
        }
        let mut p = BoundaryProblem {
            frames: Vec::new(),
            alpha: Vec::new(),
            beta: Vec::new(),
            target_a: Vec::new(),
            target_b: Vec::new(),
            before: d_a.frames().iter().rposition(|&f| f < *window.start()).map(|k| d_a.positions()[k]),
            after: d_b.frames().iter().position(|&f| f > *window.end()).map(|k| d_b.positions()[k]),
            smoothness,
        };
        for f in window.clone() {
            let (xa, xb) = (d_a.position_at(f), d_b.position_at(f));
            if xa.is_none() && xb.is_none() {
                continue;
            }
            let (a, b) = blend_weights(f, window, xa.is_some(), xb.is_some());
            p.frames.push(f);
            p.alpha.push(a);
            p.beta.push(b);
            p.target_a.push(xa.copied().unwrap_or_else(Vec3::zeros));
            p.target_b.push(xb.copied().unwrap_or_else(Vec3::zeros));
        }
        Ok(p)
    }

    /// Value of the blend objective at `x`.
    pub fn objective(&self, x: &[Vec3]) -> f64 {
        let mut total = 0.0;
        for k in 0..x.len() {
            total += self.alpha[k] * (x[k] - self.target_a[k]).norm_squared()
                + self.beta[k] * (x[k] - self.target_b[k]).norm_squared();
            if k > 0 {
                total += self.smoothness * (x[k] - x[k - 1]).norm_squared();
            }
        }
        if let (Some(b), Some(x0)) = (self.before, x.first()) {
            total += self.smoothness * (x0 - b).norm_squared();
        }
        if let (Some(a), Some(xn)) = (self.after, x.last()) {
            total += self.smoothness * (xn - a).norm_squared();
        }
        total
    }

    /// Exact minimizer, one tridiagonal solve per coordinate.
    pub fn solve(&self) -> Vec<Vec3> {
        let n = self.frames.len();
        if n == 0 {
            return Vec::new();
        }
        let lam = self.smoothness;
        let mut diag = vec![0.0; n];
        let off = vec![-lam; n];
        for k in 0..n {
            diag[k] = self.alpha[k] + self.beta[k];
            if k > 0 || self.before.is_some() {
                diag[k] += lam;
            }
            if k + 1 < n || self.after.is_some() {
                diag[k] += lam;
            }
        }
        let mut out = vec![Vec3::zeros(); n];
        for axis in 0..3 {
            let mut rhs: Vec<f64> = (0..n)
                .map(|k| self.alpha[k] * self.target_a[k][axis] + self.beta[k] * self.target_b[k][axis])
                .collect();
            if let Some(b) = self.before {
                rhs[0] += lam * b[axis];
            }
            if let Some(a) = self.after {
                rhs[n - 1] += lam * a[axis];
            }
            for (k, v) in solve_tridiagonal(&off, &diag, &off, &rhs).into_iter().enumerate() {
                out[k][axis] = v;
            }
        }
        out
    }
}

/// Blends `d_a` into `d_b_aligned` across `window`; outside it, samples are copied
/// from `d_a` before the window and from `d_b_aligned` after it.
pub fn reconstruct_boundary(
    d_a: &Tracklet,
    d_b_aligned: &Tracklet,
    window: RangeInclusive<usize>,
    cfg: &PipelineConfig,
) -> Result<Tracklet> {
    let problem = BoundaryProblem::new(d_a, d_b_aligned, &window, cfg.lambda_sm)?;
    let solved = problem.solve();
    let mut samples: Vec<(usize, Vec3, f64)> = Vec::new();
    for (k, &f) in d_a.frames().iter().enumerate() {
        if f < *window.start() {
            samples.push((f, d_a.positions()[k], d_a.confidences()[k]));
        }
    }
    for (k, &f) in problem.frames.iter().enumerate() {
        let (a, b) = (problem.alpha[k], problem.beta[k]);
        let ca = d_a.confidence_at(f).unwrap_or(0.0);
        let cb = d_b_aligned.confidence_at(f).unwrap_or(0.0);
        samples.push((f, solved[k], (a * ca + b * cb) / (a + b)));
    }
    for (k, &f) in d_b_aligned.frames().iter().enumerate() {
        if f > *window.end() {
            samples.push((f, d_b_aligned.positions()[k], d_b_aligned.confidences()[k]));
        }
    }
    Tracklet::new(d_a.id(), d_a.source_chunk(), d_a.pixel(), samples)
}

/// Boundary window around the junction of two chunks sharing `overlap` frames.
pub fn boundary_window(overlap: &[usize], half_width: usize, first: usize, last: usize) -> RangeInclusive<usize> {
    let junction = overlap[0] + overlap.len() / 2;
    junction.saturating_sub(half_width).max(first)..=(junction + half_width - 1).min(last)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Chunks concatenated in their own gauges.
    Base,
    /// Static-anchor registration with the camera-pose fallback.
    Overlap,
    /// Static registration, dynamic association, refinement and boundary blending.
    #[default]
    Full,
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Ablation::Base),
            "overlap" => Ok(Ablation::Overlap),
            "full" => Ok(Ablation::Full),
            other => Err(Error::InvalidConfig(format!("unknown ablation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairReport {
    pub chunk_i: usize,
    pub chunk_j: usize,
    pub tier: Tier,
    pub static_anchors: usize,
    pub dynamic_supports: usize,
    pub static_residual: Option<f64>,
    pub static_reliable: bool,
    pub tracklets_i: usize,
    pub tracklets_j: usize,
    pub matches: usize,
    pub transform: SimilarityTransform,
}

/// A long-range trajectory in the global frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    pub frames: Vec<usize>,
    pub positions: Vec<Vec3>,
    /// `(chunk id, tracklet id)` of every fused segment, in order.
    pub provenance: Vec<(usize, TrackletId)>,
}

impl Trajectory {
    pub fn first_frame(&self) -> Option<usize> {
        self.frames.first().copied()
    }

    pub fn last_frame(&self) -> Option<usize> {
        self.frames.last().copied()
    }
}

/// Everything fusion produces besides the frames themselves.
#[derive(Debug, Clone, Default)]
pub struct FusionSummary {
    pub chunk_ids: Vec<usize>,
    pub chunk_transforms: Vec<SimilarityTransform>,
    pub trajectories: Vec<Trajectory>,
    pub pairs: Vec<PairReport>,
    /// Match sets of each adjacent pair, in chunk order.
    pub matches: Vec<MatchSet>,
}

#[derive(Debug, Clone)]
pub struct FusedScene {
    pub frames: Vec<FramePrediction>,
    pub summary: FusionSummary,
}

impl FusedScene {
    pub fn chunk_transforms(&self) -> &[SimilarityTransform] {
        &self.summary.chunk_transforms
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.summary.trajectories
    }
}

struct Builder {
    traj: Trajectory,
    /// First frame not yet appended.
    next_frame: usize,
}

/// Visible samples of one pixel over `frames`, mapped into the global frame.
fn pixel_samples(
    chunk: &Chunk,
    pixel: usize,
    frames: RangeInclusive<usize>,
    gauge: &SimilarityTransform,
) -> Vec<(usize, Vec3, f64)> {
    frames
        .filter_map(|f| chunk.frame(f))
        .filter(|fr| fr.confidence()[pixel] > 0.0)
        .map(|fr| (fr.frame_index(), gauge.apply(fr.point(pixel)), fr.confidence()[pixel]))
        .collect()
}

impl Builder {
    fn append(&mut self, samples: Vec<(usize, Vec3, f64)>) {
        for (f, p, _) in samples {
            if self.traj.frames.last().is_some_and(|&last| last >= f) {
                continue;
            }
            self.traj.frames.push(f);
            self.traj.positions.push(p);
        }
    }

    fn append_chunk(&mut self, chunk: &Chunk, pixel: usize, until: usize, gauge: &SimilarityTransform) {
        if self.next_frame <= until {
            self.append(pixel_samples(chunk, pixel, self.next_frame..=until, gauge));
            self.next_frame = until + 1;
        }
    }

    fn samples_from(&self, first: usize) -> Vec<(usize, Vec3, f64)> {
        self.traj
            .frames
            .iter()
            .zip(&self.traj.positions)
            .filter(|(f, _)| **f >= first)
            .map(|(f, p)| (*f, *p, 1.0))
            .collect()
    }

    fn truncate_from(&mut self, first: usize) {
        let keep = self.traj.frames.partition_point(|&f| f < first);
        self.traj.frames.truncate(keep);
        self.traj.positions.truncate(keep);
    }
}

struct TrajectoryState {
    next_id: usize,
    /// Active trajectories keyed by seed pixel in the current chunk.
    active: HashMap<usize, Builder>,
    done: Vec<Trajectory>,
}

impl TrajectoryState {
    fn start(&mut self, chunk: usize, pixel: usize, first_frame: usize) -> Builder {
        let id = self.next_id;
        self.next_id += 1;
        Builder {
            traj: Trajectory { id, frames: Vec::new(), positions: Vec::new(), provenance: vec![(chunk, pixel)] },
            next_frame: first_frame,
        }
    }

    fn close(&mut self, b: Builder) {
        if b.traj.frames.len() >= 2 {
            self.done.push(b.traj);
        }
    }
}

/// Streaming fusion. Chunks are consumed in order and at most two are held at once;
/// every frame is passed to `sink` in the global gauge as soon as it is final.
pub fn fuse_stream<I, C, F>(chunks: I, cfg: &PipelineConfig, ablation: Ablation, mut sink: F) -> Result<FusionSummary>
where
    I: IntoIterator<Item = Result<C>>,
    C: Borrow<Chunk>,
    F: FnMut(FramePrediction) -> Result<()>,
{
    cfg.validate()?;
    let mut iter = chunks.into_iter();
    let mut summary = FusionSummary::default();
    let Some(first) = iter.next() else {
        return Err(Error::invalid("no chunks to fuse"));
    };
    let mut prev: C = first?;
    let mut gauge = SimilarityTransform::identity();
    summary.chunk_ids.push(prev.borrow().chunk_id());
    summary.chunk_transforms.push(gauge.clone());
    for f in prev.borrow().frames() {
        sink(f.transformed(&gauge))?;
    }
    let mut state = TrajectoryState { next_id: 0, active: HashMap::new(), done: Vec::new() };

    for next in iter {
        let next: C = next?;
        let (ci, cj) = (prev.borrow(), next.borrow());
        if cj.start_frame() <= ci.start_frame() || cj.end_frame() <= ci.end_frame() {
            return Err(Error::invalid(format!(
                "chunk {} does not follow chunk {} in frame order",
                cj.chunk_id(),
                ci.chunk_id()
            )));
        }
        let ov = slice_overlap(ci, cj)?;
        let abs = select_anchors(&ov, cfg)?;
        let poses_i: Vec<Pose> = ov.pairs().iter().map(|p| p.0.pose().clone()).collect();
        let poses_j: Vec<Pose> = ov.pairs().iter().map(|p| p.1.pose().clone()).collect();
        let static_result = match ablation {
            Ablation::Base => None,
            _ => register_pair(&ov, &abs, cfg).ok(),
        };

        let identity = SimilarityTransform::identity();
        let d_i = build_tracklets(ci, ov.frames(), &abs, cfg, &identity);
        let d_j_raw = build_tracklets(cj, ov.frames(), &abs, cfg, &identity);

        let (transform, tier, matches) = match ablation {
            Ablation::Base => (identity.clone(), Tier::Concatenated, unmatched(&d_i, &d_j_raw)),
            Ablation::Overlap => {
                let (t, tier) = choose_transform(static_result.as_ref(), None, &poses_i, &poses_j, cfg);
                (t, tier, unmatched(&d_i, &d_j_raw))
            }
            Ablation::Full => {
                // Too few anchors for the final choice can still seed the association.
                let initial = match &static_result {
                    Some((t, r)) if r.relative_residual < cfg.static_residual_cap => t.clone(),
                    _ => pose_transform(&poses_i, &poses_j),
                };
                let d_j: Vec<Tracklet> = d_j_raw.iter().map(|t| t.transformed(&initial)).collect();
                let ctx = CostContext { overlap_frames: ov.frames().to_vec(), scene_scale: abs.scene_scale.0 };
                let matches = associate(&d_i, &d_j, &ctx, cfg);
                let refined = refine_transform(&matches, &d_i, &d_j_raw, &poses_i, &poses_j, &initial, cfg).ok();
                let (t, tier) = choose_transform(
                    static_result.as_ref(),
                    refined.as_ref().map(|t| (t, matches.len())),
                    &poses_i,
                    &poses_j,
                    cfg,
                );
                (t, tier, matches)
            }
        };

        let next_gauge = gauge.compose(&transform);
        summary.pairs.push(PairReport {
            chunk_i: ci.chunk_id(),
            chunk_j: cj.chunk_id(),
            tier,
            static_anchors: abs.static_anchors.len(),
            dynamic_supports: abs.dynamic_supports.len(),
            static_residual: static_result.as_ref().map(|r| r.1.residual_rms),
            static_reliable: static_result.as_ref().is_some_and(|r| r.1.reliable),
            tracklets_i: d_i.len(),
            tracklets_j: d_j_raw.len(),
            matches: matches.len(),
            transform: transform.clone(),
        });

        link_trajectories(
            &mut state,
            ci,
            cj,
            &gauge,
            &next_gauge,
            &matches,
            ov.frames(),
            cfg,
            ablation == Ablation::Full,
        );
        summary.matches.push(matches);

        for f in cj.frames().iter().filter(|f| f.frame_index() > ci.end_frame()) {
            sink(f.transformed(&next_gauge))?;
        }
        summary.chunk_ids.push(cj.chunk_id());
        summary.chunk_transforms.push(next_gauge.clone());
        gauge = next_gauge;
        prev = next;
    }

    let last = prev.borrow();
    let mut remaining: Vec<(usize, Builder)> = state.active.drain().collect();
    remaining.sort_by_key(|(_, b)| b.traj.id);
    for (pixel, mut b) in remaining {
        b.append_chunk(last, pixel, last.end_frame(), &gauge);
        state.close(b);
    }
    state.done.sort_by_key(|t| t.id);
    summary.trajectories = state.done;
    Ok(summary)
}

fn unmatched(d_i: &[Tracklet], d_j: &[Tracklet]) -> MatchSet {
    MatchSet {
        matches: Vec::new(),
        unmatched_i: d_i.iter().map(|t| t.id()).collect(),
        unmatched_j: d_j.iter().map(|t| t.id()).collect(),
    }
}

#[allow(clippy::too_many_arguments)]
fn link_trajectories(
    state: &mut TrajectoryState,
    ci: &Chunk,
    cj: &Chunk,
    gauge_i: &SimilarityTransform,
    gauge_j: &SimilarityTransform,
    matches: &MatchSet,
    overlap: &[usize],
    cfg: &PipelineConfig,
    blend: bool,
) {
    // tracklet ids are row-major seed pixels
    let width = ci.width();
    let pixel_of = |id: TrackletId| id;

    // every outgoing tracklet belongs to some trajectory
    let mut outgoing: Vec<TrackletId> = matches.matches.iter().map(|m| m.0).chain(matches.unmatched_i.iter().copied()).collect();
    outgoing.sort_unstable();
    for &a in &outgoing {
        if !state.active.contains_key(&pixel_of(a)) {
            let b = state.start(ci.chunk_id(), pixel_of(a), ci.start_frame());
            state.active.insert(pixel_of(a), b);
        }
    }

    let mut previous: Vec<(usize, Builder)> = state.active.drain().collect();
    previous.sort_by_key(|(_, b)| b.traj.id);
    let mut by_pixel: HashMap<usize, Builder> = HashMap::new();
    for (pixel, mut b) in previous {
        b.append_chunk(ci, pixel, ci.end_frame(), gauge_i);
        by_pixel.insert(pixel, b);
    }

    let window = boundary_window(overlap, cfg.boundary_window, ci.start_frame(), cj.end_frame());
    let mut next_active = HashMap::new();
    for &(a, bid, _) in &matches.matches {
        let Some(mut builder) = by_pixel.remove(&pixel_of(a)) else { continue };
        let pb = pixel_of(bid);
        let mut blended = false;
        if blend {
            let tail = builder.samples_from(*window.start());
            let head = pixel_samples(cj, pb, cj.start_frame()..=*window.end(), gauge_j);
            let da = Tracklet::new(a, ci.chunk_id(), (a / width, a % width), tail);
            let db = Tracklet::new(bid, cj.chunk_id(), (pb / width, pb % width), head);
            if let (Ok(da), Ok(db)) = (da, db) {
                if let Ok(joined) = reconstruct_boundary(&da, &db, window.clone(), cfg) {
                    builder.truncate_from(*window.start());
                    builder.append(joined.frames().iter().zip(joined.positions()).map(|(f, p)| (*f, *p, 1.0)).collect());
                    builder.next_frame = builder.next_frame.max(window.end() + 1);
                    blended = true;
                }
            }
        }
        if !blended {
            builder.next_frame = ci.end_frame() + 1;
        }
        builder.traj.provenance.push((cj.chunk_id(), bid));
        next_active.insert(pb, builder);
    }
    let mut closing: Vec<Builder> = by_pixel.into_values().collect();
    closing.sort_by_key(|b| b.traj.id);
    for b in closing {
        state.close(b);
    }
    for &bid in &matches.unmatched_j {
        let b = state.start(cj.chunk_id(), pixel_of(bid), cj.start_frame());
        next_active.insert(pixel_of(bid), b);
    }
    state.active = next_active;
}

/// Collects a streamed fusion into memory.
pub fn fuse_sequence<I, C>(chunks: I, cfg: &PipelineConfig, ablation: Ablation) -> Result<FusedScene>
where
    I: IntoIterator<Item = C>,
    C: Borrow<Chunk>,
{
    let mut frames = Vec::new();
    let summary = fuse_stream(chunks.into_iter().map(Ok), cfg, ablation, |f| {
        frames.push(f);
        Ok(())
    })?;
    Ok(FusedScene { frames, summary })
}
