//! Monotonic alignment search between phonemes and acoustic frames.
//!
//! Scores are `f32` and accumulate left to right over frames. On equal
//! scores the path stays on the current phoneme while backtracking, so
//! later phonemes start as early as possible.

mod kernel;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use kernel::{
    mas_batch, mas_batch_reference, mmtts_mas_batch_f32_reference, BatchedLoglik, MasBackend,
    MasBatchFn, KERNEL_ENV, KERNEL_SYMBOL, STATUS_LAYOUT, STATUS_OK,
};

/// Frame-to-phoneme assignment and the implied per-phoneme durations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentPath {
    pub assignment: Vec<usize>,
    pub durations: Vec<usize>,
}

impl AlignmentPath {
    /// Builds a path from per-frame phoneme indices and checks it.
    pub fn from_assignment(assignment: Vec<usize>, phonemes: usize) -> Result<Self> {
        let mut durations = vec![0; phonemes];
        for &p in &assignment {
            if p >= phonemes {
                return Err(Error::OutOfRange {
                    what: "phoneme",
                    id: p,
                    limit: phonemes,
                });
            }
            durations[p] += 1;
        }
        let path = Self { assignment, durations };
        path.check()?;
        Ok(path)
    }

    pub fn frames(&self) -> usize {
        self.assignment.len()
    }

    pub fn phonemes(&self) -> usize {
        self.durations.len()
    }

    pub fn check(&self) -> Result<()> {
        let (p, f) = (self.phonemes(), self.frames());
        let bad = |msg: &str| Err(Error::Layout(format!("invalid alignment path: {msg}")));
        if p == 0 || f < p {
            return bad("needs 1 <= phonemes <= frames");
        }
        if self.assignment[0] != 0 || self.assignment[f - 1] != p - 1 {
            return bad("must start at the first phoneme and end at the last");
        }
        if self.assignment.windows(2).any(|w| w[1] < w[0] || w[1] - w[0] > 1) {
            return bad("steps must be 0 or 1");
        }
        if self.durations.iter().any(|&d| d == 0) || self.durations.iter().sum::<usize>() != f {
            return bad("durations disagree with assignment");
        }
        Ok(())
    }

    /// Path score summed left to right over frames in `f32`.
    pub fn total(&self, loglik: ArrayView2<'_, f32>) -> f32 {
        self.assignment
            .iter()
            .enumerate()
            .fold(0.0f32, |acc, (t, &p)| acc + loglik[[p, t]])
    }
}

fn check_region(loglik: &ArrayView2<'_, f32>, valid_p: usize, valid_f: usize) -> Result<()> {
    let (p, f) = loglik.dim();
    if valid_p > p || valid_f > f {
        return Err(Error::Layout(format!(
            "valid region {valid_p}x{valid_f} exceeds matrix {p}x{f}"
        )));
    }
    if valid_p == 0 || valid_f < valid_p {
        return Err(Error::Infeasible {
            phonemes: valid_p,
            frames: valid_f,
        });
    }
    Ok(())
}

/// Maximum-score monotonic path over `loglik[..valid_p, ..valid_f]`
/// (rows are phonemes, columns frames). Entries outside are never read.
pub fn mas(loglik: ArrayView2<'_, f32>, valid_p: usize, valid_f: usize) -> Result<AlignmentPath> {
    check_region(&loglik, valid_p, valid_f)?;
    let mut assignment = vec![0usize; valid_f];
    mas_into(
        |p, f| loglik[[p, f]],
        valid_p,
        valid_f,
        &mut Vec::new(),
        &mut assignment,
    )?;
    AlignmentPath::from_assignment(assignment, valid_p)
}

/// DP core shared with the batched reference. `scratch` is reused across calls.
pub(crate) fn mas_into(
    at: impl Fn(usize, usize) -> f32,
    tp: usize,
    tf: usize,
    scratch: &mut Vec<f32>,
    out: &mut [usize],
) -> Result<()> {
    scratch.clear();
    scratch.resize(tp * tf, f32::NEG_INFINITY);
    // value[f * tp + p]: best prefix score ending at phoneme p on frame f
    let value = scratch.as_mut_slice();
    for f in 0..tf {
        let lo = (tp + f).saturating_sub(tf);
        let hi = tp.min(f + 1);
        for p in lo..hi {
            let x = at(p, f);
            if !x.is_finite() {
                return Err(Error::NonFinite(format!("loglik[{p}, {f}]")));
            }
            let stay = if p == f { f32::NEG_INFINITY } else { value[(f - 1) * tp + p] };
            let advance = match (p, f) {
                (0, 0) => 0.0,
                (0, _) => f32::NEG_INFINITY,
                _ => value[(f - 1) * tp + p - 1],
            };
            value[f * tp + p] = (if advance > stay { advance } else { stay }) + x;
        }
    }
    let mut p = tp - 1;
    for f in (0..tf).rev() {
        out[f] = p;
        if p != 0 && (p == f || value[(f - 1) * tp + p] < value[(f - 1) * tp + p - 1]) {
            p -= 1;
        }
    }
    Ok(())
}

/// Largest matrix [`brute_force_align`] will enumerate.
pub const BRUTE_FORCE_MAX_P: usize = 8;
pub const BRUTE_FORCE_MAX_F: usize = 12;

/// Exhaustive search over every monotonic path, for testing. Among paths
/// with the highest [`AlignmentPath::total`], picks the one whose phoneme
/// start frames, compared from the last phoneme backwards, are smallest.
pub fn brute_force_align(loglik: ArrayView2<'_, f32>) -> Result<AlignmentPath> {
    let (p, f) = loglik.dim();
    if p > BRUTE_FORCE_MAX_P || f > BRUTE_FORCE_MAX_F {
        return Err(Error::SizeLimit(format!(
            "brute force is limited to {BRUTE_FORCE_MAX_P}x{BRUTE_FORCE_MAX_F}, got {p}x{f}"
        )));
    }
    check_region(&loglik, p, f)?;
    let mut best: Option<(f32, Vec<usize>, Vec<usize>)> = None;
    let mut starts = vec![0usize; p];
    enumerate_starts(1, p, f, &mut starts, &mut |starts| {
        let path = path_from_starts(starts, f);
        let total = path.total(loglik);
        let key: Vec<usize> = starts.iter().rev().copied().collect();
        let better = match &best {
            None => true,
            Some((bt, bkey, _)) => total > *bt || (total == *bt && key < *bkey),
        };
        if better {
            best = Some((total, key, path.assignment));
        }
    });
    let (_, _, assignment) = best.expect("at least one path when f >= p");
    AlignmentPath::from_assignment(assignment, p)
}

/// Number of monotonic paths an exhaustive search visits.
pub fn count_paths(p: usize, f: usize) -> usize {
    let mut n = 0;
    if p == 0 || f < p {
        return 0;
    }
    let mut starts = vec![0usize; p];
    enumerate_starts(1, p, f, &mut starts, &mut |_| n += 1);
    n
}

fn enumerate_starts(k: usize, p: usize, f: usize, starts: &mut [usize], visit: &mut dyn FnMut(&[usize])) {
    if k == p {
        visit(starts);
        return;
    }
    // phoneme k starts after phoneme k-1 and leaves room for the rest
    for s in starts[k - 1] + 1..=f - (p - k) {
        starts[k] = s;
        enumerate_starts(k + 1, p, f, starts, visit);
    }
}

fn path_from_starts(starts: &[usize], f: usize) -> AlignmentPath {
    let mut assignment = Vec::with_capacity(f);
    let mut durations = Vec::with_capacity(starts.len());
    for (k, &s) in starts.iter().enumerate() {
        let end = starts.get(k + 1).copied().unwrap_or(f);
        durations.push(end - s);
        assignment.extend(std::iter::repeat_n(k, end - s));
    }
    AlignmentPath { assignment, durations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_phoneme() {
        let l = Array2::<f32>::zeros((1, 3));
        let path = mas(l.view(), 1, 3).unwrap();
        assert_eq!(path.assignment, vec![0, 0, 0]);
        assert_eq!(path.durations, vec![3]);
    }

    #[test]
    fn square_is_diagonal() {
        let l = array![[0.0f32, -9.0], [-9.0, 0.0]];
        assert_eq!(mas(l.view(), 2, 2).unwrap().assignment, vec![0, 1]);
    }

    #[test]
    fn infeasible_and_layout() {
        let l = Array2::<f32>::zeros((3, 2));
        assert_eq!(mas(l.view(), 3, 2).unwrap_err().kind(), "infeasible");
        assert_eq!(mas(l.view(), 0, 2).unwrap_err().kind(), "infeasible");
        assert_eq!(mas(l.view(), 2, 5).unwrap_err().kind(), "layout");
    }

    #[test]
    fn ignores_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = Array2::from_shape_fn((3, 6), |_| rng.random_range(-5.0f32..0.0));
        let mut padded = Array2::from_elem((5, 9), f32::NAN);
        padded.slice_mut(ndarray::s![..3, ..6]).assign(&l);
        assert_eq!(mas(padded.view(), 3, 6).unwrap(), mas(l.view(), 3, 6).unwrap());
    }

    #[test]
    fn non_finite_rejected() {
        let mut l = Array2::<f32>::zeros((2, 3));
        l[[1, 2]] = f32::INFINITY;
        assert_eq!(mas(l.view(), 2, 3).unwrap_err().kind(), "non-finite");
    }

    #[test]
    fn all_ties_prefer_staying() {
        // with equal scores the last phoneme takes every spare frame
        let l = Array2::<f32>::zeros((3, 6));
        assert_eq!(mas(l.view(), 3, 6).unwrap().assignment, vec![0, 1, 2, 2, 2, 2]);
        assert_eq!(brute_force_align(l.view()).unwrap().assignment, vec![0, 1, 2, 2, 2, 2]);
    }

    #[test]
    fn path_counts() {
        assert_eq!(count_paths(2, 3), 2);
        assert_eq!(count_paths(1, 7), 1);
        assert_eq!(count_paths(4, 7), 20);
        assert_eq!(count_paths(3, 2), 0);
    }

    #[test]
    fn brute_force_size_limit() {
        let l = Array2::<f32>::zeros((2, 13));
        assert_eq!(brute_force_align(l.view()).unwrap_err().kind(), "size-limit");
    }

    #[test]
    fn integer_ties_match_oracle() {
        // small integer scores make ties frequent and sums exact
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let p = rng.random_range(1..=5);
            let f = rng.random_range(p..=8);
            let l = Array2::from_shape_fn((p, f), |_| rng.random_range(-2i32..=0) as f32);
            let a = mas(l.view(), p, f).unwrap();
            let b = brute_force_align(l.view()).unwrap();
            assert_eq!(a, b, "{l:?}");
        }
    }

    #[test]
    fn path_validation() {
        assert!(AlignmentPath::from_assignment(vec![0, 0, 1], 2).is_ok());
        assert!(AlignmentPath::from_assignment(vec![0, 2, 2], 3).is_err());
        assert!(AlignmentPath::from_assignment(vec![1, 1], 2).is_err());
        assert!(AlignmentPath::from_assignment(vec![0, 1, 0, 1], 2).is_err());
    }
}
