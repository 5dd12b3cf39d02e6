//! On-disk formats: chunk containers, gauge sidecar, trajectory text and the
//! fusion report.
//!
//! A container is a directory with a JSON `manifest` and raw little-endian
//! float32 arrays. Decoding works on in-memory bytes so that the same code path
//! serves files and fuzzing.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::association::MatchSet;
use crate::error::{Error, Result};
use crate::fusion::{FusionSummary, Trajectory};
use crate::model::{Chunk, FramePrediction, Mat3, Pose, SimilarityTransform, Vec3};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub path: String,
    pub byte_order: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub chunk_id: usize,
    pub start_frame: usize,
    pub end_frame: usize,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    pub arrays: Vec<ArrayEntry>,
}

/// A decoded container. `object_ids` is present only in ground-truth containers.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub chunk: Chunk,
    pub object_ids: Option<Vec<u32>>,
}

impl Manifest {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(bytes).map_err(|e| Error::malformed(format!("manifest: {e}")))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::malformed(format!("unsupported format_version {}", m.format_version)));
        }
        if m.end_frame < m.start_frame {
            return Err(Error::malformed(format!("end_frame {} precedes start_frame {}", m.end_frame, m.start_frame)));
        }
        if m.end_frame == usize::MAX {
            return Err(Error::malformed("end_frame out of range"));
        }
        if m.height == 0 || m.width == 0 {
            return Err(Error::malformed("H and W must be positive"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &m.arrays {
            if !seen.insert(a.name.as_str()) {
                return Err(Error::malformed(format!("array {:?} listed twice", a.name)));
            }
            if a.dtype != "float32" {
                return Err(Error::malformed(format!("array {}: dtype {:?}, expected \"float32\"", a.name, a.dtype)));
            }
            if a.byte_order != "little" {
                return Err(Error::malformed(format!("array {}: byte_order {:?}, expected \"little\"", a.name, a.byte_order)));
            }
            let p = Path::new(&a.path);
            if a.path.is_empty() || !p.components().all(|c| matches!(c, Component::Normal(_))) {
                return Err(Error::malformed(format!("array {}: path {:?} must be relative to the container", a.name, a.path)));
            }
            let expected = m.expected_shape(&a.name)?;
            if a.shape != expected {
                return Err(Error::malformed(format!("array {}: shape {:?}, expected {:?}", a.name, a.shape, expected)));
            }
        }
        for required in ["points", "confidence", "poses"] {
            if !seen.contains(required) {
                return Err(Error::malformed(format!("missing array {required}")));
            }
        }
        Ok(m)
    }

    pub fn num_frames(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    fn expected_shape(&self, name: &str) -> Result<Vec<usize>> {
        let (t, h, w) = (self.num_frames(), self.height, self.width);
        Ok(match name {
            "points" => vec![t, h, w, 3],
            "confidence" => vec![t, h, w],
            "poses" => vec![t, 4, 4],
            "object_ids" => vec![h, w],
            other => return Err(Error::malformed(format!("unknown array {other:?}"))),
        })
    }

    pub fn entry(&self, name: &str) -> Option<&ArrayEntry> {
        self.arrays.iter().find(|a| a.name == name)
    }

    fn for_chunk(chunk: &Chunk, with_ids: bool) -> Self {
        let mut m = Manifest {
            format_version: FORMAT_VERSION,
            chunk_id: chunk.chunk_id(),
            start_frame: chunk.start_frame(),
            end_frame: chunk.end_frame(),
            height: chunk.height(),
            width: chunk.width(),
            arrays: Vec::new(),
        };
        let mut names = vec!["points", "confidence", "poses"];
        if with_ids {
            names.push("object_ids");
        }
        for name in names {
            let shape = m.expected_shape(name).expect("known array");
            m.arrays.push(ArrayEntry {
                name: name.into(),
                dtype: "float32".into(),
                shape,
                path: format!("{name}.f32"),
                byte_order: "little".into(),
            });
        }
        m
    }
}

fn decode_f32(name: &str, bytes: &[u8], shape: &[usize]) -> Result<Vec<f32>> {
    let count = shape
        .iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(*d))
        .and_then(|n| n.checked_mul(4).map(|b| (n, b)));
    let Some((n, expected)) = count else {
        return Err(Error::malformed(format!("array {name}: shape {shape:?} overflows")));
    };
    if bytes.len() != expected {
        return Err(Error::malformed(format!("array {name}: {} bytes, expected {expected}", bytes.len())));
    }
    let mut out = Vec::with_capacity(n);
    out.extend(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])));
    Ok(out)
}

fn encode_f32(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(|v| (v as f32).to_le_bytes()).collect()
}

fn decode_pose(frame: usize, m: &[f32]) -> Result<Pose> {
    let at = |r: usize, c: usize| m[r * 4 + c] as f64;
    if (at(3, 0), at(3, 1), at(3, 2), at(3, 3)) != (0.0, 0.0, 0.0, 1.0) {
        return Err(Error::malformed(format!("poses: frame {frame} last row is not (0, 0, 0, 1)")));
    }
    let rotation = Mat3::from_fn(at);
    let translation = Vec3::new(at(0, 3), at(1, 3), at(2, 3));
    Pose::from_stored(rotation, translation).map_err(|e| Error::malformed(format!("poses: frame {frame}: {e}")))
}

/// Decodes a container from its manifest bytes and a lookup of array bytes by name.
pub fn decode_container<'a>(manifest: &[u8], mut array: impl FnMut(&ArrayEntry) -> Result<&'a [u8]>) -> Result<Container> {
    let m = Manifest::parse(manifest)?;
    let (t, h, w) = (m.num_frames(), m.height, m.width);
    let mut load = |name: &str| -> Result<Vec<f32>> {
        let e = m.entry(name).expect("validated");
        decode_f32(name, array(e)?, &e.shape)
    };
    let points = load("points")?;
    let confidence = load("confidence")?;
    let poses = load("poses")?;
    let object_ids = match m.entry("object_ids") {
        Some(_) => {
            let raw = load("object_ids")?;
            let ids = raw
                .iter()
                .map(|v| {
                    if *v >= 0.0 && v.fract() == 0.0 && *v < 16_777_216.0 {
                        Ok(*v as u32)
                    } else {
                        Err(Error::malformed(format!("object_ids: {v} is not a label")))
                    }
                })
                .collect::<Result<Vec<u32>>>()?;
            Some(ids)
        }
        None => None,
    };
    let n = h * w;
    let mut frames = Vec::with_capacity(t);
    for k in 0..t {
        let pts = points[k * n * 3..(k + 1) * n * 3]
            .chunks_exact(3)
            .map(|p| Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64))
            .collect();
        let conf = confidence[k * n..(k + 1) * n].iter().map(|c| *c as f64).collect();
        let pose = decode_pose(m.start_frame + k, &poses[k * 16..(k + 1) * 16])?;
        let frame = FramePrediction::new(m.start_frame + k, h, w, pts, conf, pose)
            .map_err(|e| Error::malformed(format!("frame {}: {e}", m.start_frame + k)))?;
        frames.push(frame);
    }
    let chunk = Chunk::new(m.chunk_id, frames).map_err(|e| Error::malformed(e.to_string()))?;
    Ok(Container { chunk, object_ids })
}

/// Encodes a chunk into `(manifest bytes, [(relative path, bytes)])`.
pub fn encode_container(chunk: &Chunk, object_ids: Option<&[u32]>) -> Result<(Vec<u8>, Vec<(String, Vec<u8>)>)> {
    if let Some(ids) = object_ids {
        if ids.len() != chunk.height() * chunk.width() {
            return Err(Error::invalid(format!("{} object ids for {} pixels", ids.len(), chunk.height() * chunk.width())));
        }
    }
    let m = Manifest::for_chunk(chunk, object_ids.is_some());
    let frames = chunk.frames();
    let mut files = Vec::new();
    for e in &m.arrays {
        let bytes = match e.name.as_str() {
            "points" => encode_f32(frames.iter().flat_map(|f| f.points().iter().flat_map(|p| [p.x, p.y, p.z]))),
            "confidence" => encode_f32(frames.iter().flat_map(|f| f.confidence().iter().copied())),
            "poses" => encode_f32(frames.iter().flat_map(|f| {
                let m = f.pose().to_matrix();
                (0..16).map(move |i| m[(i / 4, i % 4)])
            })),
            _ => encode_f32(object_ids.unwrap_or_default().iter().map(|v| *v as f64)),
        };
        files.push((e.path.clone(), bytes));
    }
    let manifest = serde_json::to_vec_pretty(&m).expect("manifest serializes");
    Ok((manifest, files))
}

fn io_context(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn write_container(chunk: &Chunk, object_ids: Option<&[u32]>, dir: &Path) -> Result<()> {
    let (manifest, files) = encode_container(chunk, object_ids)?;
    fs::create_dir_all(dir).map_err(io_context(dir))?;
    for (name, bytes) in files {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(io_context(&p))?;
    }
    let p = dir.join(MANIFEST);
    fs::write(&p, manifest).map_err(io_context(&p))?;
    Ok(())
}

pub fn write_chunk(chunk: &Chunk, dir: &Path) -> Result<()> {
    write_container(chunk, None, dir)
}

pub fn read_container(dir: &Path) -> Result<Container> {
    let mp = dir.join(MANIFEST);
    let manifest = fs::read(&mp).map_err(|e| Error::malformed(format!("{}: {e}", mp.display())))?;
    let mut buffers: Vec<Vec<u8>> = Vec::new();
    // Read every listed array first so the decoder can borrow them.
    let m = Manifest::parse(&manifest)?;
    for e in &m.arrays {
        let p = dir.join(&e.path);
        buffers.push(fs::read(&p).map_err(|err| Error::malformed(format!("array {}: {}: {err}", e.name, p.display())))?);
    }
    let by_name: BTreeMap<&str, &[u8]> = m.arrays.iter().map(|e| e.name.as_str()).zip(buffers.iter().map(|b| b.as_slice())).collect();
    decode_container(&manifest, |e| Ok(by_name[e.name.as_str()]))
}

pub fn read_chunk(dir: &Path) -> Result<Chunk> {
    Ok(read_container(dir)?.chunk)
}

pub fn chunk_dir_name(chunk_id: usize) -> String {
    format!("chunk_{chunk_id:05}")
}

/// Container directories below `dir`, in name order. Every subdirectory counts,
/// so one that lost its manifest is reported rather than skipped.
pub fn list_chunk_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::malformed(format!("{}: {e}", dir.display())))? {
        let p = entry.map_err(|e| Error::malformed(format!("{}: {e}", dir.display())))?.path();
        if p.is_dir() {
            out.push(p);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::malformed(format!("{}: no chunk containers found", dir.display())));
    }
    Ok(out)
}

/// Lazily reads chunk containers in order; each is loaded only when requested.
pub fn read_chunk_stream(dir: &Path) -> Result<impl Iterator<Item = Result<Chunk>>> {
    Ok(list_chunk_dirs(dir)?.into_iter().map(|p| read_chunk(&p)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeRecord {
    pub chunk_id: usize,
    pub scale: f64,
    /// Row-major.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl GaugeRecord {
    pub fn new(chunk_id: usize, t: &SimilarityTransform) -> Self {
        let r = t.rotation();
        Self {
            chunk_id,
            scale: t.scale(),
            rotation: std::array::from_fn(|i| r[(i / 3, i % 3)]),
            translation: [t.translation().x, t.translation().y, t.translation().z],
        }
    }

    pub fn transform(&self) -> Result<SimilarityTransform> {
        SimilarityTransform::from_stored(
            self.scale,
            Mat3::from_row_slice(&self.rotation),
            Vec3::from_column_slice(&self.translation),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeSidecar {
    /// Each gauge maps world coordinates into its chunk.
    pub gauges: Vec<GaugeRecord>,
}

impl GaugeSidecar {
    pub fn parse(text: &str) -> Result<Self> {
        let s: GaugeSidecar = serde_json::from_str(text).map_err(|e| Error::malformed(format!("gauge sidecar: {e}")))?;
        for g in &s.gauges {
            g.transform().map_err(|e| Error::malformed(format!("gauge of chunk {}: {e}", g.chunk_id)))?;
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sidecar serializes")
    }
}

/// One line per trajectory: `id f x y z f x y z ...`.
pub fn format_trajectories(trajectories: &[Trajectory]) -> String {
    let mut out = String::new();
    for t in trajectories {
        out.push_str(&t.id.to_string());
        for (f, p) in t.frames.iter().zip(&t.positions) {
            out.push_str(&format!(" {f} {} {} {}", p.x, p.y, p.z));
        }
        out.push('\n');
    }
    out
}

/// Parses the trajectory text format into `(id, samples)` records.
pub fn parse_trajectories(text: &str) -> Result<Vec<(usize, Vec<(usize, Vec3)>)>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::malformed(format!("trajectories line {}: {what}", ln + 1));
        let mut tok = line.split_ascii_whitespace();
        let id: usize = tok.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad id"))?;
        let rest: Vec<&str> = tok.collect();
        if !rest.len().is_multiple_of(4) {
            return Err(bad("samples must be (frame, x, y, z) tuples"));
        }
        let mut samples = Vec::with_capacity(rest.len() / 4);
        for s in rest.chunks_exact(4) {
            let f: usize = s[0].parse().map_err(|_| bad("bad frame index"))?;
            let mut xyz = [0.0; 3];
            for (k, v) in s[1..].iter().enumerate() {
                xyz[k] = v.parse::<f64>().map_err(|_| bad("bad coordinate"))?;
            }
            if samples.last().is_some_and(|(last, _): &(usize, Vec3)| *last >= f) {
                return Err(bad("frame indices must increase"));
            }
            samples.push((f, Vec3::from(xyz)));
        }
        out.push((id, samples));
    }
    Ok(out)
}

/// Trajectory provenance and per-pair matches, as written next to fused output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FusionRecord {
    pub ablation: String,
    pub chunk_ids: Vec<usize>,
    pub chunk_transforms: Vec<GaugeRecord>,
    pub pairs: Vec<serde_json::Value>,
    /// `(trajectory id, [(chunk id, tracklet id)])`.
    pub provenance: Vec<(usize, Vec<(usize, usize)>)>,
    pub matches: Vec<MatchSet>,
}

impl FusionRecord {
    pub fn new(summary: &FusionSummary, ablation: &str) -> Self {
        let pairs = summary
            .pairs
            .iter()
            .map(|p| {
                json!({
                    "chunk_i": p.chunk_i,
                    "chunk_j": p.chunk_j,
                    "tier": p.tier,
                    "static_anchors": p.static_anchors,
                    "dynamic_supports": p.dynamic_supports,
                    "static_residual": p.static_residual,
                    "static_reliable": p.static_reliable,
                    "tracklets_i": p.tracklets_i,
                    "tracklets_j": p.tracklets_j,
                    "matches": p.matches,
                    "transform": GaugeRecord::new(p.chunk_j, &p.transform),
                })
            })
            .collect();
        Self {
            ablation: ablation.into(),
            chunk_ids: summary.chunk_ids.clone(),
            chunk_transforms: summary.chunk_ids.iter().zip(&summary.chunk_transforms).map(|(id, t)| GaugeRecord::new(*id, t)).collect(),
            pairs,
            provenance: summary.trajectories.iter().map(|t| (t.id, t.provenance.clone())).collect(),
            matches: summary.matches.clone(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::malformed(format!("fusion record: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    /// Rebuilds trajectories from their exported samples and this provenance.
    pub fn trajectories(&self, samples: Vec<(usize, Vec<(usize, Vec3)>)>) -> Result<Vec<Trajectory>> {
        let prov: BTreeMap<usize, &Vec<(usize, usize)>> = self.provenance.iter().map(|(id, p)| (*id, p)).collect();
        samples
            .into_iter()
            .map(|(id, s)| {
                let p = prov.get(&id).ok_or_else(|| Error::KeyMismatch(format!("trajectory {id} has no provenance")))?;
                let (frames, positions) = s.into_iter().unzip();
                Ok(Trajectory { id, frames, positions, provenance: (*p).clone() })
            })
            .collect()
    }
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) | Error::InvalidSpec(_) => 2,
        Error::MalformedContainer(_) => 3,
        Error::KeyMismatch(_) => 4,
        _ => 1,
    }
}
