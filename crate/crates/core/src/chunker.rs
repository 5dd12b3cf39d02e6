//! Overlapping chunk planning and overlap slicing.

use crate::error::{Error, Result};
use crate::model::{Chunk, FramePrediction};

/// Inclusive frame range of one planned chunk.
pub type ChunkRange = (usize, usize);

/// Splits `[0, num_frames)` into chunks of at most `chunk_length` frames,
/// consecutive chunks sharing `overlap` frames (`s_{k+1} = e_k - O + 1`).
///
/// A trailing fragment shorter than `overlap + 1` frames is absorbed into the
/// previous chunk, which then extends past `chunk_length`.
pub fn plan_chunks(num_frames: usize, chunk_length: usize, overlap: usize) -> Result<Vec<ChunkRange>> {
    if overlap < 2 || overlap >= chunk_length {
        return Err(Error::InvalidConfig(format!(
            "need 2 <= overlap < chunk_length, got overlap {overlap} and chunk_length {chunk_length}"
        )));
    }
    if num_frames == 0 {
        return Err(Error::InvalidConfig("cannot chunk an empty sequence".into()));
    }
    let last = num_frames - 1;
    let mut plan = vec![(0, (chunk_length - 1).min(last))];
    loop {
        let (_, end) = *plan.last().unwrap();
        if end == last {
            break;
        }
        let start = end + 1 - overlap;
        let next_end = (start + chunk_length - 1).min(last);
        if next_end - start + 1 < overlap + 1 {
            plan.last_mut().unwrap().1 = last;
            break;
        }
        plan.push((start, next_end));
    }
    Ok(plan)
}

/// Frames shared by two adjacent chunks, paired per frame.
#[derive(Debug, Clone)]
pub struct OverlapView<'a> {
    frames: Vec<usize>,
    pairs: Vec<(&'a FramePrediction, &'a FramePrediction)>,
    chunk_i: usize,
    chunk_j: usize,
}

impl<'a> OverlapView<'a> {
    /// Global frame indices of the overlap, ascending.
    pub fn frames(&self) -> &[usize] {
        &self.frames
    }

    /// Per-frame predictions `(from chunk i, from chunk j)`.
    pub fn pairs(&self) -> &[(&'a FramePrediction, &'a FramePrediction)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn chunk_ids(&self) -> (usize, usize) {
        (self.chunk_i, self.chunk_j)
    }

    pub fn height(&self) -> usize {
        self.pairs[0].0.height()
    }

    pub fn width(&self) -> usize {
        self.pairs[0].0.width()
    }

    pub fn num_pixels(&self) -> usize {
        self.pairs[0].0.num_pixels()
    }
}

pub fn slice_overlap<'a>(chunk_i: &'a Chunk, chunk_j: &'a Chunk) -> Result<OverlapView<'a>> {
    let start = chunk_i.start_frame().max(chunk_j.start_frame());
    let end = chunk_i.end_frame().min(chunk_j.end_frame());
    if start > end {
        return Err(Error::NoOverlap(chunk_i.chunk_id(), chunk_j.chunk_id()));
    }
    if (chunk_i.height(), chunk_i.width()) != (chunk_j.height(), chunk_j.width()) {
        return Err(Error::invalid(format!(
            "chunks {} and {} have different grid sizes",
            chunk_i.chunk_id(),
            chunk_j.chunk_id()
        )));
    }
    let frames: Vec<usize> = (start..=end).collect();
    let pairs = frames
        .iter()
        .map(|&f| (chunk_i.frame(f).unwrap(), chunk_j.frame(f).unwrap()))
        .collect();
    Ok(OverlapView { frames, pairs, chunk_i: chunk_i.chunk_id(), chunk_j: chunk_j.chunk_id() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Pose, Vec3};
    use proptest::prelude::*;

    fn chunk(id: usize, start: usize, end: usize) -> Chunk {
        let frames = (start..=end)
            .map(|i| {
                FramePrediction::new(i, 1, 1, vec![Vec3::zeros()], vec![1.0], Pose::identity())
                    .unwrap()
            })
            .collect();
        Chunk::new(id, frames).unwrap()
    }

    #[test]
    fn single_chunk() {
        assert_eq!(plan_chunks(16, 16, 4).unwrap(), vec![(0, 15)]);
        assert_eq!(plan_chunks(5, 16, 4).unwrap(), vec![(0, 4)]);
    }

    #[test]
    fn two_chunks() {
        assert_eq!(plan_chunks(28, 16, 4).unwrap(), vec![(0, 15), (12, 27)]);
    }

    #[test]
    fn short_tail_kept_when_long_enough() {
        assert_eq!(plan_chunks(30, 16, 4).unwrap(), vec![(0, 15), (12, 27), (24, 29)]);
    }

    #[test]
    fn minimal_tail() {
        // the recurrence always leaves at least O + 1 frames after the overlap
        assert_eq!(plan_chunks(29, 16, 4).unwrap(), vec![(0, 15), (12, 27), (24, 28)]);
    }

    #[test]
    fn invalid_overlap() {
        assert!(matches!(plan_chunks(30, 16, 16), Err(Error::InvalidConfig(_))));
        assert!(matches!(plan_chunks(30, 16, 1), Err(Error::InvalidConfig(_))));
        assert!(plan_chunks(0, 16, 4).is_err());
    }

    #[test]
    fn overlap_of_adjacent_chunks() {
        let a = chunk(0, 0, 15);
        let b = chunk(1, 12, 27);
        let v = slice_overlap(&a, &b).unwrap();
        assert_eq!(v.frames(), &[12, 13, 14, 15]);
        assert!(v.pairs().iter().all(|(x, y)| x.frame_index() == y.frame_index()));
    }

    #[test]
    fn overlap_of_identical_chunks() {
        let a = chunk(0, 3, 9);
        let v = slice_overlap(&a, &a).unwrap();
        assert_eq!(v.frames(), (3..=9).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn disjoint_chunks() {
        let a = chunk(0, 0, 15);
        let b = chunk(1, 20, 35);
        assert!(matches!(slice_overlap(&a, &b), Err(Error::NoOverlap(0, 1))));
    }

    proptest! {
        #[test]
        fn plan_invariants(n in 1usize..400, l in 3usize..40, o_frac in 0.0f64..1.0) {
            let o = 2 + ((l - 3) as f64 * o_frac) as usize;
            prop_assume!(o < l);
            let plan = plan_chunks(n, l, o).unwrap();
            prop_assert_eq!(plan[0].0, 0);
            prop_assert_eq!(plan.last().unwrap().1, n - 1);
            for w in plan.windows(2) {
                let (s0, e0) = w[0];
                let (s1, e1) = w[1];
                prop_assert!(s1 > s0);
                prop_assert_eq!(e0 + 1 - s1, o);
                prop_assert_eq!(e0 - s0 + 1, l);
                prop_assert!(e1 - s1 + 1 >= o + 1);
            }
            if plan.len() > 1 {
                let (s, e) = *plan.last().unwrap();
                prop_assert!(e - s + 1 >= o + 1);
            }
        }
    }
}
