//! Length-bucketed batching and padding.

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Items of one batch with their valid lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub indices: Vec<usize>,
    pub lengths: Vec<usize>,
}

impl BatchPlan {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.lengths.iter().copied().max().unwrap_or(0)
    }

    /// `batch x max_len`, 1 on valid positions and 0 on padding.
    pub fn mask(&self) -> Array2<f32> {
        padding_mask(&self.lengths, self.max_len())
    }
}

pub fn padding_mask(lengths: &[usize], max_len: usize) -> Array2<f32> {
    Array2::from_shape_fn((lengths.len(), max_len), |(b, t)| if t < lengths[b] { 1.0 } else { 0.0 })
}

/// Seeded shuffle, sort by length, cut into batches (the last one may be
/// short), then shuffle batch order. Each epoch uses its own stream.
pub fn make_batches(lengths: &[usize], batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<BatchPlan>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    if lengths.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|&i| lengths[i]);
    let mut batches: Vec<BatchPlan> = order
        .chunks(batch_size)
        .map(|c| BatchPlan {
            indices: c.to_vec(),
            lengths: c.iter().map(|&i| lengths[i]).collect(),
        })
        .collect();
    batches.shuffle(&mut rng);
    Ok(batches)
}

/// Stacks `items` (each `len_i x C`) into `(items.len() * max_len) x C`,
/// zero filling the padding. `max_len` must cover every item.
pub fn pad_stack(items: &[&Array2<f32>], max_len: usize) -> Array2<f32> {
    let cols = items.first().map(|m| m.ncols()).unwrap_or(0);
    let mut out = Array2::zeros((items.len() * max_len, cols));
    for (b, m) in items.iter().enumerate() {
        assert!(m.nrows() <= max_len, "item longer than max_len");
        assert_eq!(m.ncols(), cols, "items differ in width");
        out.slice_mut(s![b * max_len..b * max_len + m.nrows(), ..]).assign(m);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keep_last_counts() {
        let lengths: Vec<usize> = (0..33).map(|i| 10 + i % 7).collect();
        let batches = make_batches(&lengths, 16, 1, 0).unwrap();
        let mut sizes: Vec<usize> = batches.iter().map(BatchPlan::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![1, 16, 16]);
    }

    #[test]
    fn seeded_and_epoch_dependent() {
        let lengths: Vec<usize> = (0..40).map(|i| (i * 37) % 23 + 1).collect();
        let a = make_batches(&lengths, 4, 9, 0).unwrap();
        assert_eq!(a, make_batches(&lengths, 4, 9, 0).unwrap());
        assert_ne!(a, make_batches(&lengths, 4, 9, 1).unwrap());
    }

    #[test]
    fn mask_flags_padding() {
        let plan = BatchPlan {
            indices: vec![0, 1],
            lengths: vec![3, 5],
        };
        let m = plan.mask();
        assert_eq!(m.dim(), (2, 5));
        assert_eq!(m.row(0).to_vec(), vec![1.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(m.sum(), 8.0);
    }

    #[test]
    fn empty_and_zero_batch() {
        assert_eq!(make_batches(&[], 4, 0, 0).unwrap_err().kind(), "empty-dataset");
        assert_eq!(make_batches(&[1], 0, 0, 0).unwrap_err().kind(), "config");
    }

    #[test]
    fn stacking() {
        let a = Array2::from_elem((2, 3), 1.0f32);
        let b = Array2::from_elem((4, 3), 2.0f32);
        let s = pad_stack(&[&a, &b], 4);
        assert_eq!(s.dim(), (8, 3));
        assert_eq!(s.row(2).sum(), 0.0);
        assert_eq!(s.row(7).sum(), 6.0);
    }
}
