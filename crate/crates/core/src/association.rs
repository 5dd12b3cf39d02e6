//! Dynamic tracklets over an overlap, the multi-cue pair cost, endpoint gating
//! and one-to-one assignment with an unmatched option.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::hungarian;
use crate::model::{Chunk, SimilarityTransform, Tracklet, TrackletId, Vec3};
use crate::registration::{median_depth, OverlapAbstraction};

/// Added to the speed sum so momentarily stationary tracklets do not divide by zero.
pub const VELOCITY_EPS: f64 = 1e-9;

/// Tracklet ids are row-major seed pixel indices, unique within a chunk.
pub fn tracklet_id(pixel: (usize, usize), width: usize) -> TrackletId {
    pixel.0 * width + pixel.1
}

/// Candidate dynamic tracklets of one chunk over `overlap_frames`, mapped by `gauge`
/// into the shared frame.
pub fn build_tracklets(
    chunk: &Chunk,
    overlap_frames: &[usize],
    abstraction: &OverlapAbstraction,
    cfg: &PipelineConfig,
    gauge: &SimilarityTransform,
) -> Vec<Tracklet> {
    let frames: Vec<_> = overlap_frames.iter().filter_map(|&f| chunk.frame(f)).collect();
    if frames.len() < 2 {
        return Vec::new();
    }
    let scale = median_depth(frames.iter().copied()).unwrap_or(1.0);
    let min_disp = cfg.min_displacement * scale;
    let width = chunk.width();
    let mut out = Vec::new();
    for &u in &abstraction.dynamic_supports {
        let pixel = (u / width, u % width);
        if !pixel.0.is_multiple_of(cfg.seed_stride) || !pixel.1.is_multiple_of(cfg.seed_stride) {
            continue;
        }
        let mean_conf = frames.iter().map(|f| f.confidence()[u]).sum::<f64>() / frames.len() as f64;
        if mean_conf <= cfg.gamma_c {
            continue;
        }
        let samples: Vec<(usize, Vec3, f64)> = frames
            .iter()
            .filter(|f| f.confidence()[u] > 0.0)
            .map(|f| (f.frame_index(), *f.point(u), f.confidence()[u]))
            .collect();
        if samples.len() < 2 {
            continue;
        }
        if (samples[samples.len() - 1].1 - samples[0].1).norm() < min_disp {
            continue;
        }
        if let Ok(t) = Tracklet::new(tracklet_id(pixel, width), chunk.chunk_id(), pixel, samples) {
            out.push(t.transformed(gauge));
        }
    }
    out
}

/// What the cost needs besides the two tracklets.
#[derive(Debug, Clone)]
pub struct CostContext {
    pub overlap_frames: Vec<usize>,
    /// Normalizer for trajectory discrepancy, in shared-frame units.
    pub scene_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTerms {
    pub traj: f64,
    pub vel: f64,
    pub dir: f64,
}

fn direction_term(va: &Vec3, vb: &Vec3) -> f64 {
    let (na, nb) = (va.norm(), vb.norm());
    match (na > 0.0, nb > 0.0) {
        (true, true) => ((va / na) - (vb / nb)).norm_squared() / 4.0,
        (false, false) => 0.0,
        _ => 0.5,
    }
}

pub fn cost_terms(a: &Tracklet, b: &Tracklet, ctx: &CostContext) -> Result<CostTerms> {
    let shared: Vec<(&Vec3, &Vec3)> = ctx
        .overlap_frames
        .iter()
        .filter_map(|&f| Some((a.position_at(f)?, b.position_at(f)?)))
        .collect();
    if shared.len() < 2 {
        return Err(Error::InsufficientSupport(format!(
            "tracklets {} and {} share {} overlap frames",
            a.id(),
            b.id(),
            shared.len()
        )));
    }
    let traj = shared.iter().map(|(x, y)| (*x - *y).norm()).sum::<f64>() / shared.len() as f64 / ctx.scene_scale;
    let steps = (shared.len() - 1) as f64;
    let mut vel = 0.0;
    let mut dir = 0.0;
    for w in shared.windows(2) {
        let va = w[1].0 - w[0].0;
        let vb = w[1].1 - w[0].1;
        let (na, nb) = (va.norm(), vb.norm());
        vel += (na - nb).abs() / (na + nb + VELOCITY_EPS);
        dir += direction_term(&va, &vb);
    }
    Ok(CostTerms { traj, vel: vel / steps, dir: dir / steps })
}

/// Weighted association cost, or `None` when the pair exceeds the trajectory or direction cap.
pub fn pair_cost(a: &Tracklet, b: &Tracklet, ctx: &CostContext, cfg: &PipelineConfig) -> Result<Option<f64>> {
    let t = cost_terms(a, b, ctx)?;
    if t.traj > cfg.traj_cap || t.dir > cfg.dir_cap {
        return Ok(None);
    }
    Ok(Some(cfg.lambda_traj * t.traj + cfg.lambda_vel * t.vel + cfg.lambda_dir * t.dir))
}

/// Position used for gating: the sample at `frame`, or the latest one before it.
fn terminal(t: &Tracklet, frame: usize) -> &Vec3 {
    let k = t.frames().partition_point(|&f| f <= frame);
    &t.positions()[k.saturating_sub(1)]
}

/// Gating radius in shared-frame units.
pub fn gating_radius(d_i: &[Tracklet], d_j: &[Tracklet], scene_scale: f64, cfg: &PipelineConfig) -> f64 {
    if let Some(r) = cfg.gamma_p {
        return r * scene_scale;
    }
    let mut sum = 0.0;
    let mut steps = 0usize;
    for t in d_i.iter().chain(d_j) {
        for w in t.positions().windows(2) {
            sum += (w[1] - w[0]).norm();
            steps += 1;
        }
    }
    if steps == 0 || sum <= 0.0 {
        return cfg.min_displacement * scene_scale;
    }
    cfg.gamma_p_factor * sum / steps as f64
}

/// Index pairs `(a, b)` whose terminal positions at `terminal_frame` lie closer than `radius`.
pub fn gate_candidates(d_i: &[Tracklet], d_j: &[Tracklet], terminal_frame: usize, radius: f64) -> Vec<(usize, usize)> {
    if d_i.is_empty() || d_j.is_empty() || !(radius > 0.0) {
        return Vec::new();
    }
    let cell = |p: &Vec3| -> [i64; 3] { [0, 1, 2].map(|k| (p[k] / radius).floor() as i64) };
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (b, t) in d_j.iter().enumerate() {
        grid.entry(cell(terminal(t, terminal_frame))).or_default().push(b);
    }
    let mut out = Vec::new();
    for (a, t) in d_i.iter().enumerate() {
        let p = terminal(t, terminal_frame);
        let c = cell(p);
        let start = out.len();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else { continue };
                    for &b in bucket {
                        if (terminal(&d_j[b], terminal_frame) - p).norm() < radius {
                            out.push((a, b));
                        }
                    }
                }
            }
        }
        out[start..].sort_unstable();
    }
    out
}

/// Sparse cost matrix between two id lists.
#[derive(Debug, Clone, Default)]
pub struct CostMatrix {
    pub row_ids: Vec<TrackletId>,
    pub col_ids: Vec<TrackletId>,
    /// `(row index, col index, cost)`
    pub entries: Vec<(usize, usize, f64)>,
}

impl CostMatrix {
    /// Dense matrix with ids equal to indices.
    pub fn dense(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let entries = rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().enumerate().map(move |(c, &v)| (r, c, v)))
            .collect();
        Self { row_ids: (0..rows.len()).collect(), col_ids: (0..cols).collect(), entries }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    /// `(id in chunk i, id in chunk j, cost)`
    pub matches: Vec<(TrackletId, TrackletId, f64)>,
    pub unmatched_i: Vec<TrackletId>,
    pub unmatched_j: Vec<TrackletId>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    /// Matched costs plus `cost_max` for every unmatched row.
    pub fn objective(&self, cost_max: f64) -> f64 {
        self.matches.iter().map(|m| m.2).sum::<f64>() + cost_max * self.unmatched_i.len() as f64
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Minimum-cost one-to-one matching in which leaving a row unmatched costs `cost_max`.
///
/// Entries at or above `cost_max` can never beat the unmatched option and are
/// dropped. The remaining graph is split into connected components, each solved
/// densely with one dummy column per row.
pub fn assign(candidates: &CostMatrix, cfg: &PipelineConfig) -> MatchSet {
    let cost_max = cfg.cost_max;
    let nr = candidates.row_ids.len();
    let nc = candidates.col_ids.len();
    let edges: Vec<(usize, usize, f64)> =
        candidates.entries.iter().copied().filter(|e| e.2 < cost_max).collect();

    let mut parent: Vec<usize> = (0..nr + nc).collect();
    for &(r, c, _) in &edges {
        let (a, b) = (find(&mut parent, r), find(&mut parent, nr + c));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut components: HashMap<usize, (Vec<usize>, Vec<usize>)> = HashMap::new();
    for r in 0..nr {
        let root = find(&mut parent, r);
        components.entry(root).or_default().0.push(r);
    }
    for c in 0..nc {
        let root = find(&mut parent, nr + c);
        components.entry(root).or_default().1.push(c);
    }
    let mut by_component: HashMap<usize, Vec<(usize, usize, f64)>> = HashMap::new();
    for &e in &edges {
        by_component.entry(find(&mut parent, e.0)).or_default().push(e);
    }

    let mut row_match: Vec<Option<(usize, f64)>> = vec![None; nr];
    let mut col_taken = vec![false; nc];
    let mut roots: Vec<usize> = components.keys().copied().collect();
    roots.sort_unstable();
    for root in roots {
        let (rows, cols) = &components[&root];
        let Some(comp_edges) = by_component.get(&root) else { continue };
        let (n, m) = (rows.len(), cols.len());
        let width = m + n;
        let row_pos: HashMap<usize, usize> = rows.iter().enumerate().map(|(k, &r)| (r, k)).collect();
        let col_pos: HashMap<usize, usize> = cols.iter().enumerate().map(|(k, &c)| (c, k)).collect();
        // non-candidates cost more than the unmatched option, so they are never chosen
        let mut dense = vec![cost_max + 1.0; n * width];
        for k in 0..n {
            dense[k * width + m..(k + 1) * width].fill(cost_max);
        }
        for &(r, c, v) in comp_edges {
            let slot = &mut dense[row_pos[&r] * width + col_pos[&c]];
            *slot = slot.min(v);
        }
        for (k, col) in hungarian::solve(&dense, n, width).into_iter().enumerate() {
            if col < m && dense[k * width + col] < cost_max {
                row_match[rows[k]] = Some((cols[col], dense[k * width + col]));
                col_taken[cols[col]] = true;
            }
        }
    }

    let mut out = MatchSet::default();
    for (r, m) in row_match.iter().enumerate() {
        match m {
            Some((c, v)) => out.matches.push((candidates.row_ids[r], candidates.col_ids[*c], *v)),
            None => out.unmatched_i.push(candidates.row_ids[r]),
        }
    }
    out.unmatched_j = (0..nc).filter(|&c| !col_taken[c]).map(|c| candidates.col_ids[c]).collect();
    out
}

/// Gating, scoring and assignment of two tracklet sets already in the shared frame.
pub fn associate(d_i: &[Tracklet], d_j: &[Tracklet], ctx: &CostContext, cfg: &PipelineConfig) -> MatchSet {
    let radius = gating_radius(d_i, d_j, ctx.scene_scale, cfg);
    let terminal_frame = ctx.overlap_frames.last().copied().unwrap_or(0);
    let mut costs = CostMatrix {
        row_ids: d_i.iter().map(|t| t.id()).collect(),
        col_ids: d_j.iter().map(|t| t.id()).collect(),
        entries: Vec::new(),
    };
    for (a, b) in gate_candidates(d_i, d_j, terminal_frame, radius) {
        if let Ok(Some(c)) = pair_cost(&d_i[a], &d_j[b], ctx, cfg) {
            costs.entries.push((a, b, c));
        }
    }
    assign(&costs, cfg)
}
