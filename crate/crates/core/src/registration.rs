//! Static-aware overlap abstraction and confidence-weighted similarity registration.
//!
//! The closed-form weighted solvers here are shared with the dynamic refinement
//! and the trajectory metrics.

use nalgebra::{SymmetricEigen, SVD};

use crate::chunker::OverlapView;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::model::{FramePrediction, Mat3, SimilarityTransform, Vec3};

/// Relative singular-value floor below which a weighted source spread counts as rank < 2.
pub const DEGENERATE_RANK_RATIO: f64 = 1e-12;

/// Median camera-to-point distance over the finite, non-zero-confidence pixels of `frames`.
pub fn median_depth<'a>(frames: impl IntoIterator<Item = &'a FramePrediction>) -> Option<f64> {
    let mut d: Vec<f64> = Vec::new();
    for f in frames {
        let c = f.pose().center();
        for (p, &conf) in f.points().iter().zip(f.confidence()) {
            if conf > 0.0 && p.iter().all(|v| v.is_finite()) {
                d.push((p - c).norm());
            }
        }
    }
    if d.is_empty() {
        return None;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    Some(*m).filter(|m| *m > 0.0)
}

/// Per-pixel split of an overlap into static anchors and dynamic supports.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapAbstraction {
    /// Pixel indices (row-major) of static anchors, ascending.
    pub static_anchors: Vec<usize>,
    /// Pixel indices of confident pixels that failed the rigidity test, ascending.
    pub dynamic_supports: Vec<usize>,
    pub mean_confidence_i: Vec<f64>,
    pub mean_confidence_j: Vec<f64>,
    /// Median camera-to-point distance of each chunk over the overlap.
    pub scene_scale: (f64, f64),
    /// Absolute rigidity thresholds used in each chunk's gauge.
    pub rigidity_threshold: (f64, f64),
}

impl OverlapAbstraction {
    pub fn is_static(&self, pixel: usize) -> bool {
        self.static_anchors.binary_search(&pixel).is_ok()
    }

    pub fn is_dynamic(&self, pixel: usize) -> bool {
        self.dynamic_supports.binary_search(&pixel).is_ok()
    }
}

/// Largest pairwise displacement of one pixel across the given frames.
fn max_pairwise_displacement<'a>(frames: impl Iterator<Item = &'a FramePrediction> + Clone, pixel: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for (a_idx, a) in frames.clone().enumerate() {
        let pa = a.point(pixel);
        for b in frames.clone().skip(a_idx + 1) {
            let d = (pa - b.point(pixel)).norm();
            if !d.is_finite() {
                return f64::INFINITY;
            }
            worst = worst.max(d);
        }
    }
    worst
}

pub fn select_anchors(overlap: &OverlapView<'_>, cfg: &PipelineConfig) -> Result<OverlapAbstraction> {
    if overlap.len() < 2 {
        return Err(Error::InsufficientSupport(format!(
            "overlap has {} frames, need at least 2",
            overlap.len()
        )));
    }
    let n = overlap.num_pixels();
    let omega = overlap.len() as f64;
    let scale_i = median_depth(overlap.pairs().iter().map(|p| p.0)).unwrap_or(1.0);
    let scale_j = median_depth(overlap.pairs().iter().map(|p| p.1)).unwrap_or(1.0);
    let thr_i = cfg.gamma_stat * scale_i;
    let thr_j = cfg.gamma_stat * scale_j;

    let mut mean_i = vec![0.0; n];
    let mut mean_j = vec![0.0; n];
    for (fi, fj) in overlap.pairs() {
        for u in 0..n {
            mean_i[u] += fi.confidence()[u];
            mean_j[u] += fj.confidence()[u];
        }
    }
    mean_i.iter_mut().chain(mean_j.iter_mut()).for_each(|c| *c /= omega);

    let mut static_anchors = Vec::new();
    let mut dynamic_supports = Vec::new();
    for u in 0..n {
        if !(mean_i[u] > cfg.gamma_c && mean_j[u] > cfg.gamma_c) {
            continue;
        }
        let di = max_pairwise_displacement(overlap.pairs().iter().map(|p| p.0), u);
        let dj = max_pairwise_displacement(overlap.pairs().iter().map(|p| p.1), u);
        if !(di.is_finite() && dj.is_finite()) {
            continue;
        }
        if di < thr_i && dj < thr_j {
            static_anchors.push(u);
        } else {
            dynamic_supports.push(u);
        }
    }
    Ok(OverlapAbstraction {
        static_anchors,
        dynamic_supports,
        mean_confidence_i: mean_i,
        mean_confidence_j: mean_j,
        scene_scale: (scale_i, scale_j),
        rigidity_threshold: (thr_i, thr_j),
    })
}

struct WeightedMoments {
    src_mean: Vec3,
    dst_mean: Vec3,
    /// Σ w (d - μd)(s - μs)ᵀ / W
    cross: Mat3,
    /// Σ w ‖s - μs‖² / W
    src_variance: f64,
}

fn weighted_moments(src: &[Vec3], dst: &[Vec3], weights: &[f64]) -> Result<WeightedMoments> {
    if src.len() != dst.len() || src.len() != weights.len() {
        return Err(Error::invalid(format!(
            "correspondence lists differ in length ({}, {}, {})",
            src.len(),
            dst.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let positive = weights.iter().filter(|w| **w > 0.0).count();
    if positive < 3 {
        return Err(Error::NotEnoughPoints { needed: 3, got: positive });
    }
    let total: f64 = weights.iter().sum();
    let mut src_mean = Vec3::zeros();
    let mut dst_mean = Vec3::zeros();
    for ((s, d), w) in src.iter().zip(dst).zip(weights) {
        src_mean += *w * s;
        dst_mean += *w * d;
    }
    src_mean /= total;
    dst_mean /= total;

    let mut cross = Mat3::zeros();
    let mut src_cov = Mat3::zeros();
    for ((s, d), w) in src.iter().zip(dst).zip(weights) {
        if *w == 0.0 {
            continue;
        }
        let sc = s - src_mean;
        let dc = d - dst_mean;
        cross += *w * dc * sc.transpose();
        src_cov += *w * sc * sc.transpose();
    }
    cross /= total;
    src_cov /= total;
    if cross.iter().chain(src_cov.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite correspondences"));
    }

    let mut spread: Vec<f64> = SymmetricEigen::new(src_cov).eigenvalues.iter().map(|v| v.max(0.0)).collect();
    spread.sort_by(|a, b| b.total_cmp(a));
    if spread[0] <= 0.0 || spread[1] < DEGENERATE_RANK_RATIO * spread[0] {
        return Err(Error::DegenerateConfiguration(
            "weighted source points are coincident or collinear".into(),
        ));
    }
    Ok(WeightedMoments { src_mean, dst_mean, cross, src_variance: src_cov.trace() })
}

/// Optimal rotation for `cross = Σ w d sᵀ` and the trace of the corrected singular values.
fn rotation_from_cross(cross: &Mat3) -> Result<(Mat3, f64)> {
    let svd = SVD::new(*cross, true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateConfiguration("SVD did not converge".into())),
    };
    let sv = svd.singular_values;
    let smallest = (0..3).min_by(|&a, &b| sv[a].total_cmp(&sv[b])).unwrap();
    let mut signs = Vec3::repeat(1.0);
    if (u * v_t).determinant() < 0.0 {
        signs[smallest] = -1.0;
    }
    let rotation = u * Mat3::from_diagonal(&signs) * v_t;
    let trace = sv.component_mul(&signs).sum();
    Ok((rotation, trace))
}

/// Closed-form minimizer of `Σ wᵢ ‖s·R·srcᵢ + t − dstᵢ‖²` over similarity transforms.
pub fn solve_weighted_similarity(src: &[Vec3], dst: &[Vec3], weights: &[f64]) -> Result<SimilarityTransform> {
    let m = weighted_moments(src, dst, weights)?;
    let (rotation, trace) = rotation_from_cross(&m.cross)?;
    let scale = trace / m.src_variance;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::DegenerateConfiguration(format!("estimated scale {scale} is not positive")));
    }
    let translation = m.dst_mean - scale * (rotation * m.src_mean);
    Ok(SimilarityTransform::from_parts(scale, rotation, translation))
}

/// Weighted Kabsch with a fixed scale: minimizes `Σ wᵢ ‖s·R·srcᵢ + t − dstᵢ‖²` over `(R, t)`.
pub fn solve_weighted_rigid(src: &[Vec3], dst: &[Vec3], weights: &[f64], scale: f64) -> Result<SimilarityTransform> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::invalid(format!("fixed scale must be positive, got {scale}")));
    }
    let m = weighted_moments(src, dst, weights)?;
    let (rotation, _) = rotation_from_cross(&m.cross)?;
    let translation = m.dst_mean - scale * (rotation * m.src_mean);
    Ok(SimilarityTransform::from_parts(scale, rotation, translation))
}

/// The weighted loss `Σ wᵢ ‖T(srcᵢ) − dstᵢ‖²`.
pub fn weighted_loss(t: &SimilarityTransform, src: &[Vec3], dst: &[Vec3], weights: &[f64]) -> f64 {
    src.iter()
        .zip(dst)
        .zip(weights)
        .map(|((s, d), w)| w * (t.apply(s) - d).norm_squared())
        .sum()
}

/// `sqrt(loss / Σw)`.
pub fn weighted_rms(t: &SimilarityTransform, src: &[Vec3], dst: &[Vec3], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    (weighted_loss(t, src, dst, weights) / total).sqrt()
}

/// Outcome of static-anchor registration, consumed by the fallback hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationReport {
    pub anchor_count: usize,
    pub correspondences: usize,
    pub residual_rms: f64,
    /// Residual RMS relative to the reference chunk's scene scale.
    pub relative_residual: f64,
    /// Enough anchors and a residual below the configured cap.
    pub reliable: bool,
}

/// Correspondences `(src in chunk j, dst in chunk i, weight)` over all static anchors and overlap frames.
pub fn static_correspondences(
    overlap: &OverlapView<'_>,
    abstraction: &OverlapAbstraction,
) -> (Vec<Vec3>, Vec<Vec3>, Vec<f64>) {
    let cap = overlap.len() * abstraction.static_anchors.len();
    let mut src = Vec::with_capacity(cap);
    let mut dst = Vec::with_capacity(cap);
    let mut w = Vec::with_capacity(cap);
    for (fi, fj) in overlap.pairs() {
        for &u in &abstraction.static_anchors {
            src.push(*fj.point(u));
            dst.push(*fi.point(u));
            w.push((fi.confidence()[u] * fj.confidence()[u]).sqrt());
        }
    }
    (src, dst, w)
}

/// Estimates the transform mapping chunk j's gauge into chunk i's from static anchors.
pub fn register_pair(
    overlap: &OverlapView<'_>,
    abstraction: &OverlapAbstraction,
    cfg: &PipelineConfig,
) -> Result<(SimilarityTransform, RegistrationReport)> {
    let (src, dst, w) = static_correspondences(overlap, abstraction);
    let transform = solve_weighted_similarity(&src, &dst, &w)?;
    let residual_rms = weighted_rms(&transform, &src, &dst, &w);
    let relative_residual = residual_rms / abstraction.scene_scale.0;
    let anchor_count = abstraction.static_anchors.len();
    let report = RegistrationReport {
        anchor_count,
        correspondences: src.len(),
        residual_rms,
        relative_residual,
        reliable: anchor_count >= cfg.min_static_anchors && relative_residual < cfg.static_residual_cap,
    };
    Ok((transform, report))
}
