//! Analytic dynamic scenes and simulated per-chunk predictions.
//!
//! Every pixel of the first frame seeds one surface particle, found by casting
//! the pixel ray into the scene. The same pixel keeps tracking that particle in
//! every later frame and every chunk, the way a query-based point tracker does.
//! Background particles stay on the terrain; object particles move rigidly with
//! their object and are hidden while they are below the terrain.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::chunker::plan_chunks;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::model::{axis_angle, Chunk, FramePrediction, Mat3, Pose, SimilarityTransform, Vec3};

const MAX_RAY: f64 = 200.0;
const CORRUPTED_CONFIDENCE: f64 = 0.05;

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CameraPath {
    /// Circles `target` at `radius` and `height`, looking at it.
    Orbit { target: [f64; 3], radius: f64, height: f64, angular_speed: f64, #[serde(default)] phase: f64 },
    /// Translates by `step` per frame, keeping its initial orientation.
    Dolly { start: [f64; 3], target: [f64; 3], step: [f64; 3] },
    /// Random steps bounded by `max_step` per axis, always looking at `target`.
    RandomWalk { start: [f64; 3], target: [f64; 3], max_step: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Background {
    /// Terrain is `amplitude * sin(frequency * x) * sin(frequency * y)`.
    pub amplitude: f64,
    pub frequency: f64,
    /// Confidence of background pixels outside the reliable subset.
    pub confidence: f64,
    /// Fraction of background pixels that get full confidence.
    pub reliable_fraction: f64,
}

impl Default for Background {
    fn default() -> Self {
        Self { amplitude: 0.3, frequency: 1.0, confidence: 1.0, reliable_fraction: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Sphere,
    /// Axis-aligned cube; `size` is the half extent.
    Box,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub frames: usize,
    pub velocity: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Motion {
    Still,
    Linear { velocity: [f64; 3] },
    /// Rotation of the center about a vertical axis through `pivot`.
    Circular { pivot: [f64; 3], angular_speed: f64 },
    /// Constant velocity per segment; the object stops after the last one.
    Piecewise { segments: Vec<Segment> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub shape: Shape,
    /// Sphere radius or box half extent.
    pub size: f64,
    /// Center at frame 0.
    pub center: [f64; 3],
    pub motion: Motion,
    #[serde(default = "one")]
    pub confidence: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Point noise standard deviation per axis, as a fraction of the scene scale.
    pub point_sigma: f64,
    /// Probability that a pixel's confidence is corrupted for a whole chunk.
    pub confidence_corruption: f64,
    /// Camera center noise per axis, as a fraction of the scene scale.
    pub pose_center_sigma: f64,
    pub pose_rotation_sigma_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaugeSpec {
    pub scale_min: f64,
    pub scale_max: f64,
    pub max_rotation_deg: f64,
    pub max_translation: f64,
}

impl Default for GaugeSpec {
    fn default() -> Self {
        Self { scale_min: 1.0, scale_max: 1.0, max_rotation_deg: 0.0, max_translation: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub num_frames: usize,
    pub height: usize,
    pub width: usize,
    #[serde(default = "default_fov")]
    pub fov_deg: f64,
    #[serde(default)]
    pub seed: u64,
    pub camera: CameraPath,
    #[serde(default)]
    pub background: Background,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub gauge: GaugeSpec,
}

fn default_fov() -> f64 {
    50.0
}

impl SceneSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidSpec(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidSpec(m));
        if self.num_frames == 0 || self.height == 0 || self.width == 0 {
            return fail("scene needs at least one frame and one pixel".into());
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 170.0) {
            return fail(format!("fov_deg {} out of range", self.fov_deg));
        }
        let finite = |v: f64| v.is_finite();
        let bg = &self.background;
        if !(finite(bg.amplitude) && finite(bg.frequency)) {
            return fail("background parameters must be finite".into());
        }
        if !(0.0..=1.0).contains(&bg.confidence) || !(0.0..=1.0).contains(&bg.reliable_fraction) {
            return fail("background confidence and reliable_fraction must lie in [0, 1]".into());
        }
        for (k, o) in self.objects.iter().enumerate() {
            if !(o.size.is_finite() && o.size > 0.0) || !o.center.iter().all(|v| v.is_finite()) {
                return fail(format!("object {k}: size must be positive and center finite"));
            }
            if !(0.0..=1.0).contains(&o.confidence) {
                return fail(format!("object {k}: confidence outside [0, 1]"));
            }
        }
        let n = &self.noise;
        if [n.point_sigma, n.pose_center_sigma, n.pose_rotation_sigma_deg].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return fail("noise levels must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&n.confidence_corruption) {
            return fail("confidence_corruption must lie in [0, 1]".into());
        }
        let g = &self.gauge;
        if !(g.scale_min > 0.0 && g.scale_min <= g.scale_max && g.scale_max.is_finite()) {
            return fail("gauge scale range must satisfy 0 < scale_min <= scale_max".into());
        }
        if !(g.max_rotation_deg >= 0.0 && g.max_translation >= 0.0) {
            return fail("gauge bounds must be non-negative".into());
        }
        Ok(())
    }

    fn terrain(&self, x: f64, y: f64) -> f64 {
        let b = &self.background;
        b.amplitude * (b.frequency * x).sin() * (b.frequency * y).sin()
    }

    fn focal(&self) -> f64 {
        (self.width as f64 / 2.0) / (self.fov_deg.to_radians() / 2.0).tan()
    }

    /// Unit ray direction of a pixel center in camera coordinates (x right, y down, z forward).
    pub fn pixel_ray(&self, row: usize, col: usize) -> Vec3 {
        let f = self.focal();
        Vec3::new(
            (col as f64 + 0.5 - self.width as f64 / 2.0) / f,
            (row as f64 + 0.5 - self.height as f64 / 2.0) / f,
            1.0,
        )
        .normalize()
    }

    fn object_center(&self, k: usize, frame: usize) -> Vec3 {
        let o = &self.objects[k];
        let c0 = v3(o.center);
        let t = frame as f64;
        match &o.motion {
            Motion::Still => c0,
            Motion::Linear { velocity } => c0 + v3(*velocity) * t,
            Motion::Circular { pivot, angular_speed } => {
                let p = v3(*pivot);
                p + axis_angle(&Vec3::z(), angular_speed * t) * (c0 - p)
            }
            Motion::Piecewise { segments } => {
                let mut c = c0;
                let mut left = frame;
                for s in segments {
                    let n = left.min(s.frames);
                    c += v3(s.velocity) * n as f64;
                    left -= n;
                    if left == 0 {
                        break;
                    }
                }
                c
            }
        }
    }
}

/// Camera-to-world pose looking from `eye` at `target` with world +z up.
pub fn look_at(eye: Vec3, target: Vec3) -> Result<Pose> {
    let forward = target - eye;
    if forward.norm() < 1e-9 {
        return Err(Error::InvalidSpec("camera coincides with its target".into()));
    }
    let forward = forward.normalize();
    let right = forward.cross(&Vec3::z());
    if right.norm() < 1e-6 {
        return Err(Error::InvalidSpec("camera looks straight up or down".into()));
    }
    let right = right.normalize();
    let down = forward.cross(&right);
    Pose::new(Mat3::from_columns(&[right, down, forward]), eye)
}

fn camera_path(spec: &SceneSpec) -> Result<Vec<Pose>> {
    let n = spec.num_frames;
    match &spec.camera {
        CameraPath::Orbit { target, radius, height, angular_speed, phase } => {
            if !(*radius > 0.0) {
                return Err(Error::InvalidSpec("orbit radius must be positive".into()));
            }
            let tgt = v3(*target);
            (0..n)
                .map(|t| {
                    let a = phase + angular_speed * t as f64;
                    look_at(tgt + Vec3::new(radius * a.cos(), radius * a.sin(), *height), tgt)
                })
                .collect()
        }
        CameraPath::Dolly { start, target, step } => {
            let base = look_at(v3(*start), v3(*target))?;
            (0..n)
                .map(|t| Pose::new(*base.rotation(), v3(*start) + v3(*step) * t as f64))
                .collect()
        }
        CameraPath::RandomWalk { start, target, max_step } => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut eye = v3(*start);
            let mut out = Vec::with_capacity(n);
            for t in 0..n {
                if t > 0 && *max_step > 0.0 {
                    eye += Vec3::from_fn(|_, _| rng.random_range(-max_step..=*max_step));
                }
                out.push(look_at(eye, v3(*target))?);
            }
            Ok(out)
        }
    }
}

fn ray_sphere(origin: &Vec3, dir: &Vec3, center: &Vec3, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    [-b - s, -b + s].into_iter().find(|t| *t > 1e-9)
}

fn ray_box(origin: &Vec3, dir: &Vec3, center: &Vec3, half: f64) -> Option<f64> {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        let lo = center[k] - half - origin[k];
        let hi = center[k] + half - origin[k];
        if dir[k].abs() < 1e-15 {
            if lo > 0.0 || hi < 0.0 {
                return None;
            }
            continue;
        }
        let (a, b) = (lo / dir[k], hi / dir[k]);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    if t0 > t1 || t1 <= 1e-9 {
        return None;
    }
    Some(if t0 > 1e-9 { t0 } else { t1 })
}

fn ray_terrain(spec: &SceneSpec, origin: &Vec3, dir: &Vec3) -> Option<f64> {
    let above = |t: f64| {
        let p = origin + dir * t;
        p.z - spec.terrain(p.x, p.y)
    };
    if above(0.0) <= 0.0 {
        return None;
    }
    let b = &spec.background;
    let step = if b.amplitude.abs() > 0.0 && b.frequency.abs() > 0.0 {
        (0.05 / b.frequency.abs()).min(0.05)
    } else {
        0.5
    };
    let mut t_prev = 0.0;
    let mut t = step;
    while t < MAX_RAY {
        if above(t) <= 0.0 {
            let (mut lo, mut hi) = (t_prev, t);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if above(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(hi);
        }
        t_prev = t;
        t += step;
    }
    None
}

/// Label 0 is the background; object `k` has label `k + 1`.
pub type ObjectId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub height: usize,
    pub width: usize,
    pub poses: Vec<Pose>,
    /// World-frame particle positions, `[frame][pixel]`.
    pub points: Vec<Vec<Vec3>>,
    pub visible: Vec<Vec<bool>>,
    /// Per-pixel particle owner, constant over time.
    pub object_ids: Vec<ObjectId>,
    /// Confidence a perfect predictor would report for each pixel while visible.
    pub base_confidence: Vec<f64>,
    /// Median camera-to-point distance in frame 0.
    pub scene_scale: f64,
}

impl GroundTruth {
    pub fn num_frames(&self) -> usize {
        self.points.len()
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    /// Trajectory of the particle seeded at `pixel`, keyed by `(object id, pixel)`.
    pub fn trajectory(&self, pixel: usize) -> ((ObjectId, usize), Vec<(usize, Vec3)>) {
        let rows = (0..self.num_frames()).filter(|&t| self.visible[t][pixel]).map(|t| (t, self.points[t][pixel])).collect();
        ((self.object_ids[pixel], pixel), rows)
    }

    /// A world-gauge prediction of one frame: exact points, confidence 1 where visible.
    pub fn frame(&self, t: usize) -> FramePrediction {
        let conf = self.visible[t].iter().map(|v| if *v { 1.0 } else { 0.0 }).collect();
        FramePrediction::new(t, self.height, self.width, self.points[t].clone(), conf, self.poses[t].clone())
            .expect("ground truth frames are valid")
    }

    pub fn as_chunk(&self) -> Chunk {
        Chunk::new(0, (0..self.num_frames()).map(|t| self.frame(t)).collect()).expect("ground truth is contiguous")
    }
}

/// First hit of a pixel ray: `(distance, object id, point)`.
pub fn cast(spec: &SceneSpec, origin: &Vec3, dir: &Vec3, frame: usize) -> Option<(f64, ObjectId, Vec3)> {
    let mut best: Option<(f64, ObjectId)> = ray_terrain(spec, origin, dir).map(|t| (t, 0));
    for (k, o) in spec.objects.iter().enumerate() {
        let c = spec.object_center(k, frame);
        let hit = match o.shape {
            Shape::Sphere => ray_sphere(origin, dir, &c, o.size),
            Shape::Box => ray_box(origin, dir, &c, o.size),
        };
        if let Some(t) = hit {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, k as ObjectId + 1));
            }
        }
    }
    best.map(|(t, id)| (t, id, origin + dir * t))
}

pub fn generate(spec: &SceneSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let poses = camera_path(spec)?;
    let (h, w) = (spec.height, spec.width);
    let n = h * w;
    let origin = poses[0].center();
    if origin.z <= spec.terrain(origin.x, origin.y) {
        return Err(Error::InvalidSpec("camera starts below the terrain".into()));
    }
    let mut object_ids = vec![0; n];
    let mut seeds = vec![Vec3::zeros(); n];
    for r in 0..h {
        for c in 0..w {
            let dir = poses[0].rotation() * spec.pixel_ray(r, c);
            let (_, id, p) = cast(spec, &origin, &dir, 0).ok_or_else(|| {
                Error::InvalidSpec(format!("pixel ({r}, {c}) sees no surface; aim the camera at the ground"))
            })?;
            object_ids[r * w + c] = id;
            seeds[r * w + c] = p;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(u64::MAX);
    let base_confidence: Vec<f64> = object_ids
        .iter()
        .map(|&id| {
            let reliable = rng.random::<f64>() < spec.background.reliable_fraction;
            match id {
                0 if reliable => 1.0,
                0 => spec.background.confidence,
                k => spec.objects[k as usize - 1].confidence,
            }
        })
        .collect();

    let mut points = Vec::with_capacity(spec.num_frames);
    let mut visible = Vec::with_capacity(spec.num_frames);
    for t in 0..spec.num_frames {
        let mut pts = Vec::with_capacity(n);
        let mut vis = Vec::with_capacity(n);
        for u in 0..n {
            match object_ids[u] {
                0 => {
                    pts.push(seeds[u]);
                    vis.push(true);
                }
                id => {
                    let k = id as usize - 1;
                    let p = seeds[u] - spec.object_center(k, 0) + spec.object_center(k, t);
                    vis.push(p.z >= spec.terrain(p.x, p.y) - 1e-9);
                    pts.push(p);
                }
            }
        }
        points.push(pts);
        visible.push(vis);
    }
    let mut depths: Vec<f64> = seeds.iter().map(|p| (p - origin).norm()).collect();
    let mid = depths.len() / 2;
    let scene_scale = *depths.select_nth_unstable_by(mid, |a, b| a.total_cmp(b)).1;
    Ok(GroundTruth { height: h, width: w, poses, points, visible, object_ids, base_confidence, scene_scale })
}

/// One simulated chunk and the gauge that maps world coordinates into it.
#[derive(Debug, Clone)]
pub struct ChunkEmission {
    pub chunk: Chunk,
    pub gauge: SimilarityTransform,
}

fn sample_gauge(rng: &mut ChaCha8Rng, g: &GaugeSpec) -> SimilarityTransform {
    let scale = if g.scale_max > g.scale_min { rng.random_range(g.scale_min..=g.scale_max) } else { g.scale_min };
    let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let angle = rng.random::<f64>() * g.max_rotation_deg.to_radians();
    let rotation = if axis.norm() > 1e-9 { axis_angle(&axis, angle) } else { Mat3::identity() };
    let m = g.max_translation;
    let translation = if m > 0.0 { Vec3::from_fn(|_, _| rng.random_range(-m..=m)) } else { Vec3::zeros() };
    SimilarityTransform::new(scale, rotation, translation).expect("sampled gauge is valid")
}

/// Simulated prediction of chunk `index` covering frames `range`.
pub fn emit_chunk(gt: &GroundTruth, spec: &SceneSpec, index: usize, range: (usize, usize)) -> Result<ChunkEmission> {
    if range.1 >= gt.num_frames() || range.0 > range.1 {
        return Err(Error::invalid(format!("chunk range {range:?} outside the sequence")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let gauge = sample_gauge(&mut rng, &spec.gauge);
    let n = gt.num_pixels();
    let noise = &spec.noise;
    let corrupted: Vec<Option<f64>> = (0..n)
        .map(|_| (rng.random::<f64>() < noise.confidence_corruption).then(|| rng.random::<f64>() * CORRUPTED_CONFIDENCE))
        .collect();
    let point_noise = Normal::new(0.0, noise.point_sigma * gt.scene_scale * gauge.scale()).expect("finite sigma");
    let center_noise = Normal::new(0.0, noise.pose_center_sigma * gt.scene_scale).expect("finite sigma");
    let angle_noise = Normal::new(0.0, noise.pose_rotation_sigma_deg.to_radians()).expect("finite sigma");

    let mut frames = Vec::with_capacity(range.1 - range.0 + 1);
    for t in range.0..=range.1 {
        let pose = &gt.poses[t];
        let noisy_pose = if noise.pose_center_sigma > 0.0 || noise.pose_rotation_sigma_deg > 0.0 {
            let omega = Vec3::from_fn(|_, _| angle_noise.sample(&mut rng));
            let rot = if omega.norm() > 0.0 { axis_angle(&omega, omega.norm()) } else { Mat3::identity() };
            let c = pose.center() + Vec3::from_fn(|_, _| center_noise.sample(&mut rng));
            Pose::new(rot * pose.rotation(), c)?
        } else {
            pose.clone()
        };
        let mut pts = Vec::with_capacity(n);
        let mut conf = Vec::with_capacity(n);
        for u in 0..n {
            let mut p = gauge.apply(&gt.points[t][u]);
            if noise.point_sigma > 0.0 {
                p += Vec3::from_fn(|_, _| point_noise.sample(&mut rng));
            }
            pts.push(p);
            let c = if gt.visible[t][u] { gt.base_confidence[u] } else { 0.0 };
            conf.push(corrupted[u].map_or(c, |v| v.min(c)));
        }
        frames.push(FramePrediction::new(t, gt.height, gt.width, pts, conf, gauge.apply_pose(&noisy_pose))?);
    }
    Ok(ChunkEmission { chunk: Chunk::new(index, frames)?, gauge })
}

/// Lazily emits all planned chunks in order.
pub fn chunk_stream<'a>(
    gt: &'a GroundTruth,
    cfg: &PipelineConfig,
    spec: &'a SceneSpec,
) -> Result<impl Iterator<Item = Result<ChunkEmission>> + 'a> {
    let plan = plan_chunks(gt.num_frames(), cfg.chunk_length, cfg.overlap)?;
    Ok(plan.into_iter().enumerate().map(move |(k, r)| emit_chunk(gt, spec, k, r)))
}

pub fn emit_chunks(gt: &GroundTruth, cfg: &PipelineConfig, spec: &SceneSpec) -> Result<Vec<ChunkEmission>> {
    chunk_stream(gt, cfg, spec)?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_spec() -> SceneSpec {
        SceneSpec {
            num_frames: 20,
            height: 12,
            width: 16,
            fov_deg: 50.0,
            seed: 3,
            camera: CameraPath::Orbit { target: [0.0, 0.0, 0.0], radius: 6.0, height: 4.0, angular_speed: 0.0, phase: 0.3 },
            background: Background::default(),
            objects: vec![],
            noise: NoiseSpec::default(),
            gauge: GaugeSpec::default(),
        }
    }

    #[test]
    fn static_scene_is_constant() {
        let gt = generate(&base_spec()).unwrap();
        for t in 1..gt.num_frames() {
            assert_eq!(gt.points[t], gt.points[0]);
        }
        assert!(gt.object_ids.iter().all(|&id| id == 0));
    }

    #[test]
    fn linear_object_moves_by_velocity() {
        let mut spec = base_spec();
        let v = [0.05, -0.02, 0.0];
        spec.objects.push(ObjectSpec { shape: Shape::Sphere, size: 1.0, center: [0.0, 0.0, 1.2], motion: Motion::Linear { velocity: v }, confidence: 1.0 });
        let gt = generate(&spec).unwrap();
        let owned: Vec<usize> = (0..gt.num_pixels()).filter(|&u| gt.object_ids[u] == 1).collect();
        assert!(!owned.is_empty());
        for &u in &owned {
            let (key, rows) = gt.trajectory(u);
            assert_eq!(key, (1, u));
            for w in rows.windows(2) {
                let step = w[1].1 - w[0].1;
                assert!((step - v3(v) * (w[1].0 - w[0].0) as f64).norm() < 1e-12);
            }
            for (t, p) in rows {
                assert_eq!(p, gt.points[t][u]);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let mut spec = base_spec();
        spec.camera = CameraPath::RandomWalk { start: [5.0, 1.0, 4.0], target: [0.0, 0.0, 0.0], max_step: 0.05 };
        spec.noise.point_sigma = 0.01;
        spec.noise.confidence_corruption = 0.1;
        spec.gauge = GaugeSpec { scale_min: 0.5, scale_max: 2.0, max_rotation_deg: 30.0, max_translation: 1.0 };
        let cfg = PipelineConfig { chunk_length: 8, overlap: 3, ..Default::default() };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        let ca = emit_chunks(&a, &cfg, &spec).unwrap();
        let cb = emit_chunks(&b, &cfg, &spec).unwrap();
        for (x, y) in ca.iter().zip(&cb) {
            assert_eq!(x.chunk, y.chunk);
            assert_eq!(x.gauge, y.gauge);
        }
    }

    #[test]
    fn noise_free_identity_chunks_reproduce_truth() {
        let spec = base_spec();
        let gt = generate(&spec).unwrap();
        let cfg = PipelineConfig { chunk_length: 8, overlap: 3, ..Default::default() };
        for e in emit_chunks(&gt, &cfg, &spec).unwrap() {
            for f in e.chunk.frames() {
                assert_eq!(f.points(), gt.points[f.frame_index()].as_slice());
                assert_eq!(f.pose(), &gt.poses[f.frame_index()]);
            }
        }
    }

    #[test]
    fn gauges_apply_directly() {
        let mut spec = base_spec();
        spec.gauge = GaugeSpec { scale_min: 0.3, scale_max: 3.0, max_rotation_deg: 180.0, max_translation: 5.0 };
        let gt = generate(&spec).unwrap();
        let cfg = PipelineConfig { chunk_length: 8, overlap: 3, ..Default::default() };
        for e in emit_chunks(&gt, &cfg, &spec).unwrap() {
            for f in e.chunk.frames() {
                for (p, q) in f.points().iter().zip(&gt.points[f.frame_index()]) {
                    assert!((p - e.gauge.apply(q)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn full_corruption() {
        let mut spec = base_spec();
        spec.noise.confidence_corruption = 1.0;
        let gt = generate(&spec).unwrap();
        let cfg = PipelineConfig { chunk_length: 8, overlap: 3, ..Default::default() };
        for e in emit_chunks(&gt, &cfg, &spec).unwrap() {
            assert!(e.chunk.frames().iter().all(|f| f.confidence().iter().all(|c| *c <= 0.05)));
        }
    }

    #[test]
    fn round_trip_through_gauges_is_within_noise() {
        let mut spec = base_spec();
        spec.noise.point_sigma = 0.01;
        spec.gauge = GaugeSpec { scale_min: 0.5, scale_max: 2.0, max_rotation_deg: 90.0, max_translation: 2.0 };
        let gt = generate(&spec).unwrap();
        let cfg = PipelineConfig { chunk_length: 8, overlap: 3, ..Default::default() };
        let sigma = spec.noise.point_sigma * gt.scene_scale;
        for e in emit_chunks(&gt, &cfg, &spec).unwrap() {
            let inv = e.gauge.inverse();
            let mut sq = 0.0;
            let mut count = 0.0;
            for f in e.chunk.frames() {
                for (p, q) in f.points().iter().zip(&gt.points[f.frame_index()]) {
                    let d = inv.apply(p) - q;
                    assert!(d.norm() < 8.0 * sigma);
                    sq += d.norm_squared();
                    count += 3.0;
                }
            }
            assert!(((sq / count).sqrt() / sigma - 1.0).abs() < 0.05);
        }
    }

    /// Marches along a ray with a fine step and reports the first surface it enters.
    fn brute_force_owner(spec: &SceneSpec, origin: &Vec3, dir: &Vec3) -> ObjectId {
        let mut t = 0.0;
        while t < 60.0 {
            let p = origin + dir * t;
            for (k, o) in spec.objects.iter().enumerate() {
                let d = p - spec.object_center(k, 0);
                let inside = match o.shape {
                    Shape::Sphere => d.norm() <= o.size,
                    Shape::Box => d.iter().all(|v| v.abs() <= o.size),
                };
                if inside {
                    return k as ObjectId + 1;
                }
            }
            if p.z <= spec.terrain(p.x, p.y) {
                return 0;
            }
            t += 2e-4;
        }
        u32::MAX
    }

    #[test]
    fn visibility_matches_brute_force() {
        let mut spec = base_spec();
        spec.height = 24;
        spec.width = 32;
        spec.objects = vec![
            ObjectSpec { shape: Shape::Sphere, size: 0.8, center: [0.5, 0.0, 0.9], motion: Motion::Still, confidence: 1.0 },
            ObjectSpec { shape: Shape::Box, size: 0.6, center: [-1.0, 1.0, 0.7], motion: Motion::Still, confidence: 1.0 },
            ObjectSpec { shape: Shape::Sphere, size: 0.5, center: [1.5, -1.2, 0.4], motion: Motion::Still, confidence: 1.0 },
        ];
        let gt = generate(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let origin = gt.poses[0].center();
        let mut mismatches = 0;
        for _ in 0..100 {
            let (r, c) = (rng.random_range(0..spec.height), rng.random_range(0..spec.width));
            let dir = gt.poses[0].rotation() * spec.pixel_ray(r, c);
            if brute_force_owner(&spec, &origin, &dir) != gt.object_ids[r * spec.width + c] {
                mismatches += 1;
            }
        }
        assert_eq!(mismatches, 0);
        assert!(gt.object_ids.iter().any(|&i| i == 2));
    }

    #[test]
    fn occlusion_behind_terrain() {
        let mut spec = base_spec();
        spec.objects.push(ObjectSpec {
            shape: Shape::Sphere,
            size: 0.3,
            center: [0.0, 0.0, 1.0],
            motion: Motion::Piecewise { segments: vec![Segment { frames: 5, velocity: [0.0, 0.0, -0.5] }, Segment { frames: 5, velocity: [0.0, 0.0, 0.5] }] },
            confidence: 1.0,
        });
        let gt = generate(&spec).unwrap();
        let u = gt.object_ids.iter().position(|&i| i == 1).unwrap();
        assert!(gt.visible[0][u]);
        assert!(!gt.visible[5][u]);
        assert!(gt.visible[10][u]);
        assert_eq!(gt.points[15][u], gt.points[10][u]);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = base_spec();
        spec.num_frames = 0;
        assert!(matches!(generate(&spec), Err(Error::InvalidSpec(_))));
        let mut spec = base_spec();
        spec.camera = CameraPath::Dolly { start: [0.0, 0.0, 3.0], target: [0.0, 0.0, 3.0], step: [0.1, 0.0, 0.0] };
        assert!(matches!(generate(&spec), Err(Error::InvalidSpec(_))));
        let mut spec = base_spec();
        spec.camera = CameraPath::Dolly { start: [0.0, 0.0, 3.0], target: [10.0, 0.0, 3.5], step: [0.1, 0.0, 0.0] };
        assert!(matches!(generate(&spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn spec_toml_round_trip() {
        let mut spec = base_spec();
        spec.objects.push(ObjectSpec { shape: Shape::Box, size: 0.2, center: [0.0, 0.0, 1.0], motion: Motion::Circular { pivot: [0.0, 0.0, 0.0], angular_speed: 0.1 }, confidence: 1.0 });
        let text = spec.to_toml_string();
        assert_eq!(SceneSpec::from_toml_str(&text).unwrap(), spec);
        assert!(SceneSpec::from_toml_str(&format!("{text}\nbogus = 1\n")).is_err());
    }
}
