//! Scene builders and run helpers shared by the integration tests and the
//! acceptance runner.
#![allow(dead_code)]

use std::collections::HashMap;

use longdpm::fusion::{fuse_sequence, Ablation, FusedScene, Trajectory};
use longdpm::metrics::{ate, association_prf, evaluate, pixel_labels, Evaluation, MetricSet, MetricsReport, Prf};
use longdpm::model::Pose;
use longdpm::synthetic::*;
use longdpm::PipelineConfig;

pub const SIGMA: f64 = 0.01;

/// Rigidity threshold that clears the point noise of the scenes below.
pub fn noisy_config() -> PipelineConfig {
    PipelineConfig { gamma_stat: 0.06, ..PipelineConfig::default() }
}

fn sphere(radius: f64, center: [f64; 3], motion: Motion) -> ObjectSpec {
    ObjectSpec { shape: Shape::Sphere, size: radius, center, motion, confidence: 1.0 }
}

fn gauges() -> GaugeSpec {
    GaugeSpec { scale_min: 0.5, scale_max: 2.0, max_rotation_deg: 180.0, max_translation: 3.0 }
}

/// 128 frames crowded by 16 objects circling their own pivots. Only 15% of the
/// background is confident, so overlaps have few static anchors and most
/// confident pixels move.
pub fn dynamic_scene(seed: u64, pose_noise: f64) -> SceneSpec {
    let (k, size, speed) = (16, 0.55, 0.2);
    let side = 4;
    let objects = (0..k)
        .map(|i| {
            let gx = (i % side) as f64 - (side as f64 - 1.0) / 2.0;
            let gy = (i / side) as f64 - (side as f64 - 1.0) / 2.0;
            let pivot = [gx * 2.2 * size, gy * 2.2 * size, size + 0.3];
            let r = 0.5 * size;
            let phase = i as f64 * 2.1;
            let omega = if i % 2 == 0 { speed / r } else { -speed / r };
            ObjectSpec {
                shape: if i % 2 == 0 { Shape::Sphere } else { Shape::Box },
                size,
                center: [pivot[0] + r * phase.cos(), pivot[1] + r * phase.sin(), pivot[2]],
                motion: Motion::Circular { pivot, angular_speed: omega },
                confidence: 1.0,
            }
        })
        .collect();
    SceneSpec {
        num_frames: 128,
        height: 32,
        width: 40,
        fov_deg: 50.0,
        seed,
        camera: CameraPath::Orbit { target: [0.0, 0.0, 0.3], radius: 4.0, height: 2.5, angular_speed: 0.04, phase: seed as f64 },
        background: Background { confidence: 0.3, reliable_fraction: 0.15, ..Background::default() },
        objects,
        noise: NoiseSpec {
            point_sigma: SIGMA,
            pose_center_sigma: SIGMA * pose_noise,
            pose_rotation_sigma_deg: 20.0 * SIGMA * pose_noise,
            ..NoiseSpec::default()
        },
        gauge: gauges(),
    }
}

/// Noise-free 128-frame scene with moving objects and random gauges.
pub fn clean_scene(seed: u64) -> SceneSpec {
    SceneSpec {
        num_frames: 128,
        height: 24,
        width: 32,
        fov_deg: 50.0,
        seed,
        camera: CameraPath::Orbit { target: [0.0, 0.0, 0.0], radius: 5.0, height: 3.0, angular_speed: 0.01, phase: 0.4 },
        background: Background::default(),
        objects: vec![
            sphere(0.5, [0.8, 0.0, 0.6], Motion::Circular { pivot: [0.0, 0.0, 0.6], angular_speed: 0.05 }),
            ObjectSpec {
                shape: Shape::Box,
                size: 0.4,
                center: [-1.0, 0.8, 0.5],
                motion: Motion::Linear { velocity: [0.01, -0.005, 0.0] },
                confidence: 1.0,
            },
        ],
        noise: NoiseSpec::default(),
        gauge: gauges(),
    }
}

pub struct Crowd {
    pub spec: SceneSpec,
    /// Smallest surface-to-surface distance between any two objects over the sequence.
    pub min_separation: f64,
}

/// 50 small spheres on a grid, all circling with the same phase so the surface
/// gap stays at `gap` (world units).
pub fn crowd_scene(seed: u64, gap: f64) -> Crowd {
    let radius = 0.12;
    let spacing = 2.0 * radius + gap;
    let (cols, rows) = (8, 7);
    let (rho, omega) = (0.5, 0.35);
    let mut objects = Vec::new();
    for i in 0..50 {
        let gx = (i % cols) as f64 - (cols as f64 - 1.0) / 2.0;
        let gy = (i / cols) as f64 - (rows as f64 - 1.0) / 2.0;
        let pivot = [gx * spacing, gy * spacing, radius + 0.05];
        objects.push(sphere(radius, [pivot[0] + rho, pivot[1], pivot[2]], Motion::Circular { pivot, angular_speed: omega }));
    }
    let spec = SceneSpec {
        num_frames: 64,
        height: 64,
        width: 80,
        fov_deg: 50.0,
        seed,
        camera: CameraPath::Orbit { target: [0.0, 0.0, 0.0], radius: 4.0, height: 3.0, angular_speed: 0.01, phase: seed as f64 * 0.7 },
        background: Background { amplitude: 0.0, ..Background::default() },
        objects,
        noise: NoiseSpec { point_sigma: SIGMA, ..NoiseSpec::default() },
        gauge: gauges(),
    };
    let min_separation = min_separation(&spec);
    Crowd { spec, min_separation }
}

/// Center distance minus both radii, minimized over all pairs and frames.
pub fn min_separation(spec: &SceneSpec) -> f64 {
    let mut best = f64::INFINITY;
    for t in 0..spec.num_frames {
        let centers: Vec<_> = (0..spec.objects.len()).map(|k| object_center(spec, k, t)).collect();
        for a in 0..centers.len() {
            for b in a + 1..centers.len() {
                let d = (centers[a] - centers[b]).norm() - spec.objects[a].size - spec.objects[b].size;
                best = best.min(d);
            }
        }
    }
    best
}

/// Object center at `frame`, evaluated independently of the renderer.
pub fn object_center(spec: &SceneSpec, k: usize, frame: usize) -> nalgebra::Vector3<f64> {
    let o = &spec.objects[k];
    let c0 = nalgebra::Vector3::from(o.center);
    let t = frame as f64;
    match &o.motion {
        Motion::Still => c0,
        Motion::Linear { velocity } => c0 + nalgebra::Vector3::from(*velocity) * t,
        Motion::Circular { pivot, angular_speed } => {
            let p = nalgebra::Vector3::from(*pivot);
            let d = c0 - p;
            let (s, c) = (angular_speed * t).sin_cos();
            p + nalgebra::Vector3::new(c * d.x - s * d.y, s * d.x + c * d.y, d.z)
        }
        Motion::Piecewise { segments } => {
            let mut c = c0;
            let mut left = frame;
            for s in segments {
                let n = left.min(s.frames);
                c += nalgebra::Vector3::from(s.velocity) * n as f64;
                left -= n;
            }
            c
        }
    }
}

/// Two spheres on opposing straight paths that meet in the middle of the first overlap.
pub fn crossing_scene(seed: u64) -> SceneSpec {
    let v = 0.15;
    let meet = 13.5;
    SceneSpec {
        num_frames: 40,
        height: 48,
        width: 64,
        fov_deg: 50.0,
        seed,
        camera: CameraPath::Orbit { target: [0.0, 0.0, 0.0], radius: 4.0, height: 3.0, angular_speed: 0.005, phase: 1.9 },
        background: Background { amplitude: 0.0, ..Background::default() },
        objects: vec![
            sphere(0.25, [-v * meet, 0.0, 0.25], Motion::Linear { velocity: [v, 0.0, 0.0] }),
            sphere(0.25, [v * meet, 0.0, 0.25], Motion::Linear { velocity: [-v, 0.0, 0.0] }),
        ],
        noise: NoiseSpec { point_sigma: SIGMA, ..NoiseSpec::default() },
        gauge: gauges(),
    }
}

/// 64 frames in five chunks. Object 1 circles in view the whole time; object 2
/// sinks below the ground in chunk 1 and surfaces again in chunk 3.
pub fn continuity_scene(seed: u64) -> SceneSpec {
    let seg = |frames, velocity| Segment { frames, velocity };
    SceneSpec {
        num_frames: 64,
        height: 48,
        width: 64,
        fov_deg: 50.0,
        seed,
        camera: CameraPath::Orbit { target: [0.0, 0.0, 0.0], radius: 4.5, height: 3.0, angular_speed: 0.005, phase: 0.3 },
        background: Background { amplitude: 0.0, ..Background::default() },
        objects: vec![
            sphere(0.3, [0.7, 1.0, 0.35], Motion::Circular { pivot: [0.0, 1.0, 0.35], angular_speed: 0.2 }),
            sphere(
                0.3,
                [-1.4, -1.0, 0.35],
                Motion::Piecewise {
                    segments: vec![
                        seg(19, [0.15, 0.0, 0.0]),
                        seg(4, [0.0, 0.0, -0.25]),
                        seg(17, [0.0, 0.0, 0.0]),
                        seg(4, [0.0, 0.0, 0.25]),
                        seg(20, [-0.15, 0.0, 0.0]),
                    ],
                },
            ),
        ],
        noise: NoiseSpec { point_sigma: SIGMA, ..NoiseSpec::default() },
        gauge: gauges(),
    }
}

pub struct Run {
    pub gt: GroundTruth,
    pub emissions: Vec<ChunkEmission>,
    pub fused: FusedScene,
    pub report: MetricsReport,
    /// ATE of the chunk poses mapped back with the true gauges.
    pub noise_floor: f64,
    pub association: Prf,
}

impl Run {
    /// Fraction of pixels that belong to objects; constant over time.
    pub fn dynamic_fraction(&self) -> f64 {
        self.gt.object_ids.iter().filter(|&&i| i > 0).count() as f64 / self.gt.num_pixels() as f64
    }

    /// Label of a trajectory, taken from its first segment's seed pixel.
    pub fn trajectory_label(&self, t: &Trajectory) -> u32 {
        self.gt.object_ids[t.provenance[0].1]
    }
}

/// Ground truth, chunk stream, fusion and evaluation of one scene.
pub fn run(spec: &SceneSpec, cfg: &PipelineConfig, ablation: Ablation) -> Run {
    let gt = generate(spec).expect("scene renders");
    let emissions = emit_chunks(&gt, cfg, spec).expect("chunks emit");
    let fused = fuse_sequence(emissions.iter().map(|e| &e.chunk), cfg, ablation).expect("fusion succeeds");
    let gt_chunk = gt.as_chunk();
    let ev = Evaluation {
        pred_frames: &fused.frames,
        matches: &fused.summary.matches,
        gt_frames: gt_chunk.frames(),
        object_ids: Some(&gt.object_ids),
        align_epe: true,
        rpe_delta: 1,
    };
    let report = evaluate(&ev, MetricSet::all()).expect("evaluation succeeds");

    let mut oracle: Vec<Pose> = Vec::new();
    let mut last: Option<usize> = None;
    for e in &emissions {
        let inv = e.gauge.inverse();
        for f in e.chunk.frames().iter().filter(|f| last.is_none_or(|l| f.frame_index() > l)) {
            oracle.push(inv.apply_pose(f.pose()));
        }
        last = Some(e.chunk.end_frame());
    }
    let noise_floor = ate(&oracle, &gt.poses).expect("floor");

    let labels = pixel_labels(&gt.object_ids);
    let association = fused
        .summary
        .matches
        .iter()
        .map(|m| association_prf(m, &labels, &labels).expect("labels cover tracklets"))
        .fold(Prf::default(), Prf::combine);
    Run { gt, emissions, fused, report, noise_floor, association }
}

/// Trajectories grouped by object label.
pub fn trajectories_by_label(run: &Run) -> HashMap<u32, Vec<&Trajectory>> {
    let mut out: HashMap<u32, Vec<&Trajectory>> = HashMap::new();
    for t in run.fused.trajectories() {
        out.entry(run.trajectory_label(t)).or_default().push(t);
    }
    out
}
