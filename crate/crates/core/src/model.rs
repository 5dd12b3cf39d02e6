//! Domain types shared by every stage of the pipeline.
//!
//! All types are immutable once constructed and validate their invariants in
//! their constructors. Poses are camera-to-world, so a camera center is the
//! pose translation. Frame indices are global: the same frame carries the same
//! index in every chunk that contains it.

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Orthonormality tolerance for rotations built in memory.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Orthonormality tolerance for rotations read back from 32-bit storage.
pub const STORED_ROTATION_TOLERANCE: f64 = 1e-5;

pub type TrackletId = usize;

fn check_rotation(rotation: &Mat3, tolerance: f64) -> Result<()> {
    if rotation.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("rotation has non-finite entries"));
    }
    let gram = rotation.transpose() * rotation;
    let off = (gram - Mat3::identity()).abs().max();
    if off > tolerance {
        return Err(Error::invalid(format!(
            "rotation is not orthonormal (max |RᵀR - I| = {off:e})"
        )));
    }
    let det = rotation.determinant();
    if (det - 1.0).abs() > tolerance {
        return Err(Error::invalid(format!("rotation determinant is {det}, expected +1")));
    }
    Ok(())
}

/// Rotation by `angle` radians about the unit `axis`.
pub fn axis_angle(axis: &Vec3, angle: f64) -> Mat3 {
    let axis = nalgebra::Unit::new_normalize(*axis);
    *nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix()
}

/// Angle of a rotation matrix in radians, with the arccos argument clamped.
pub fn rotation_angle(rotation: &Mat3) -> f64 {
    ((rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// Camera-to-world rigid pose.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    rotation: Mat3,
    translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        Self::with_tolerance(rotation, translation, ROTATION_TOLERANCE)
    }

    /// Builds a pose from values that went through 32-bit storage.
    pub fn from_stored(rotation: Mat3, translation: Vec3) -> Result<Self> {
        Self::with_tolerance(rotation, translation, STORED_ROTATION_TOLERANCE)
    }

    fn with_tolerance(rotation: Mat3, translation: Vec3, tolerance: f64) -> Result<Self> {
        check_rotation(&rotation, tolerance)?;
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("pose translation has non-finite entries"));
        }
        Ok(Self { rotation, translation })
    }

    /// Converts a world-to-camera pose to the camera-to-world convention.
    pub fn from_world_to_camera(rotation: Mat3, translation: Vec3) -> Result<Self> {
        check_rotation(&rotation, ROTATION_TOLERANCE)?;
        let r = rotation.transpose();
        Self::new(r, -(r * translation))
    }

    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        self.translation
    }

    pub fn inverse(&self) -> Pose {
        let r = self.rotation.transpose();
        Pose { rotation: r, translation: -(r * self.translation) }
    }

    /// `self * other` as rigid motions.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

/// Scale, rotation and translation: `x ↦ s·R·x + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityTransform {
    scale: f64,
    rotation: Mat3,
    translation: Vec3,
}

impl SimilarityTransform {
    pub fn new(scale: f64, rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!("scale must be positive, got {scale}")));
        }
        check_rotation(&rotation, ROTATION_TOLERANCE)?;
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("translation has non-finite entries"));
        }
        Ok(Self { scale, rotation, translation })
    }

    /// Same as [`SimilarityTransform::new`] but with the 32-bit storage tolerance.
    pub fn from_stored(scale: f64, rotation: Mat3, translation: Vec3) -> Result<Self> {
        check_rotation(&rotation, STORED_ROTATION_TOLERANCE)?;
        if !(scale.is_finite() && scale > 0.0) || translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("invalid stored similarity transform"));
        }
        Ok(Self { scale, rotation, translation })
    }

    /// Construction from solver output, where the rotation is orthonormal by construction.
    pub(crate) fn from_parts(scale: f64, rotation: Mat3, translation: Vec3) -> Self {
        debug_assert!(scale > 0.0);
        Self { scale, rotation, translation }
    }

    pub fn identity() -> Self {
        Self { scale: 1.0, rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn with_scale(&self, scale: f64) -> Self {
        Self { scale, ..self.clone() }
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.scale * (self.rotation * x) + self.translation
    }

    /// Applies the linear part only (for displacement vectors).
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.scale * (self.rotation * v)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &SimilarityTransform) -> SimilarityTransform {
        SimilarityTransform {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let rt = self.rotation.transpose();
        let inv_scale = 1.0 / self.scale;
        SimilarityTransform {
            scale: inv_scale,
            rotation: rt,
            translation: -(inv_scale * (rt * self.translation)),
        }
    }

    /// Maps a camera-to-world pose expressed in the source gauge into the target gauge.
    pub fn apply_pose(&self, pose: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * pose.rotation,
            translation: self.apply(&pose.translation),
        }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(self.rotation * self.scale));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

/// One frame of local predictions: a pointmap, its confidence map and the camera pose.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePrediction {
    frame_index: usize,
    height: usize,
    width: usize,
    points: Vec<Vec3>,
    confidence: Vec<f64>,
    pose: Pose,
}

impl FramePrediction {
    pub fn new(
        frame_index: usize,
        height: usize,
        width: usize,
        points: Vec<Vec3>,
        confidence: Vec<f64>,
        pose: Pose,
    ) -> Result<Self> {
        let n = height
            .checked_mul(width)
            .ok_or_else(|| Error::invalid("grid size overflows"))?;
        if n == 0 {
            return Err(Error::invalid("empty pixel grid"));
        }
        if points.len() != n || confidence.len() != n {
            return Err(Error::invalid(format!(
                "frame {frame_index}: expected {n} pixels, got {} points and {} confidences",
                points.len(),
                confidence.len()
            )));
        }
        for (i, (p, &c)) in points.iter().zip(&confidence).enumerate() {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::invalid(format!(
                    "frame {frame_index}: confidence {c} at pixel {i} is outside [0, 1]"
                )));
            }
            if c != 0.0 && p.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "frame {frame_index}: non-finite point at pixel {i} with confidence {c}"
                )));
            }
        }
        Ok(Self { frame_index, height, width, points, confidence, pose })
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_pixels(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn confidence(&self) -> &[f64] {
        &self.confidence
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn point(&self, pixel: usize) -> &Vec3 {
        &self.points[pixel]
    }

    /// Expresses the whole frame in another gauge.
    pub fn transformed(&self, gauge: &SimilarityTransform) -> FramePrediction {
        FramePrediction {
            frame_index: self.frame_index,
            height: self.height,
            width: self.width,
            points: self.points.iter().map(|p| gauge.apply(p)).collect(),
            confidence: self.confidence.clone(),
            pose: gauge.apply_pose(&self.pose),
        }
    }
}

/// Monotone min-max normalization of raw confidences to `[0, 1]`, applied
/// jointly over all maps of one chunk. Non-finite values map to 0.
pub fn normalize_confidences(maps: &mut [Vec<f64>]) {
    let finite = maps.iter().flatten().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let span = hi - lo;
    for v in maps.iter_mut().flatten() {
        *v = if !v.is_finite() {
            0.0
        } else if span > 0.0 {
            (*v - lo) / span
        } else {
            1.0
        };
    }
}

/// A contiguous run of frames reconstructed in one local gauge.
#[derive(Clone, Debug, PartialEq)]
pub struct Chunk {
    chunk_id: usize,
    start_frame: usize,
    end_frame: usize,
    frames: Vec<FramePrediction>,
}

impl Chunk {
    pub fn new(chunk_id: usize, frames: Vec<FramePrediction>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::invalid(format!("chunk {chunk_id} has no frames")))?;
        let (h, w) = (first.height, first.width);
        let start_frame = first.frame_index;
        for (offset, f) in frames.iter().enumerate() {
            if f.frame_index != start_frame + offset {
                return Err(Error::invalid(format!(
                    "chunk {chunk_id}: frame indices are not consecutive at position {offset}"
                )));
            }
            if (f.height, f.width) != (h, w) {
                return Err(Error::invalid(format!(
                    "chunk {chunk_id}: frame {} is {}x{}, expected {h}x{w}",
                    f.frame_index, f.height, f.width
                )));
            }
        }
        let end_frame = start_frame + frames.len() - 1;
        Ok(Self { chunk_id, start_frame, end_frame, frames })
    }

    pub fn chunk_id(&self) -> usize {
        self.chunk_id
    }

    pub fn start_frame(&self) -> usize {
        self.start_frame
    }

    /// Last frame, inclusive.
    pub fn end_frame(&self) -> usize {
        self.end_frame
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn frames(&self) -> &[FramePrediction] {
        &self.frames
    }

    pub fn contains(&self, frame_index: usize) -> bool {
        (self.start_frame..=self.end_frame).contains(&frame_index)
    }

    pub fn frame(&self, frame_index: usize) -> Option<&FramePrediction> {
        if self.contains(frame_index) {
            Some(&self.frames[frame_index - self.start_frame])
        } else {
            None
        }
    }

    pub fn into_frames(self) -> Vec<FramePrediction> {
        self.frames
    }
}

/// Short per-pixel 3D trajectory segment inside one chunk.
#[derive(Clone, Debug, PartialEq)]
pub struct Tracklet {
    id: TrackletId,
    source_chunk: usize,
    pixel: (usize, usize),
    frames: Vec<usize>,
    positions: Vec<Vec3>,
    confidences: Vec<f64>,
    mean_confidence: f64,
}

impl Tracklet {
    /// `samples` are `(frame_index, position, confidence)` triples sorted by frame.
    pub fn new(
        id: TrackletId,
        source_chunk: usize,
        pixel: (usize, usize),
        samples: Vec<(usize, Vec3, f64)>,
    ) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InsufficientSupport(format!(
                "tracklet {id} has {} positions, need at least 2",
                samples.len()
            )));
        }
        if samples.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::invalid(format!("tracklet {id}: frames are not strictly increasing")));
        }
        let mut frames = Vec::with_capacity(samples.len());
        let mut positions = Vec::with_capacity(samples.len());
        let mut confidences = Vec::with_capacity(samples.len());
        for (f, p, c) in samples {
            frames.push(f);
            positions.push(p);
            confidences.push(c);
        }
        let mean_confidence = confidences.iter().sum::<f64>() / confidences.len() as f64;
        Ok(Self { id, source_chunk, pixel, frames, positions, confidences, mean_confidence })
    }

    pub fn id(&self) -> TrackletId {
        self.id
    }

    pub fn source_chunk(&self) -> usize {
        self.source_chunk
    }

    pub fn pixel(&self) -> (usize, usize) {
        self.pixel
    }

    pub fn frames(&self) -> &[usize] {
        &self.frames
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn confidences(&self) -> &[f64] {
        &self.confidences
    }

    pub fn mean_confidence(&self) -> f64 {
        self.mean_confidence
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn first_frame(&self) -> usize {
        self.frames[0]
    }

    pub fn last_frame(&self) -> usize {
        self.frames[self.frames.len() - 1]
    }

    fn slot(&self, frame: usize) -> Option<usize> {
        self.frames.binary_search(&frame).ok()
    }

    pub fn position_at(&self, frame: usize) -> Option<&Vec3> {
        self.slot(frame).map(|i| &self.positions[i])
    }

    pub fn confidence_at(&self, frame: usize) -> Option<f64> {
        self.slot(frame).map(|i| self.confidences[i])
    }

    pub fn transformed(&self, gauge: &SimilarityTransform) -> Tracklet {
        Tracklet {
            positions: self.positions.iter().map(|p| gauge.apply(p)).collect(),
            ..self.clone()
        }
    }

    pub fn with_id(mut self, id: TrackletId) -> Tracklet {
        self.id = id;
        self
    }
}
