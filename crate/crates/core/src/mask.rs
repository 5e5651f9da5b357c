use serde::{Deserialize, Serialize};

/// Dense Boolean matrix over (shelf id, sample index), shelf-major.
/// Shelf ids are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShelfTimeMask {
    n_shelves: usize,
    n_samples: usize,
    bits: Vec<bool>,
}

impl ShelfTimeMask {
    pub fn zeros(n_shelves: usize, n_samples: usize) -> Self {
        Self {
            n_shelves,
            n_samples,
            bits: vec![false; n_shelves * n_samples],
        }
    }

    pub fn n_shelves(&self) -> usize {
        self.n_shelves
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    fn offset(&self, shelf_id: usize, k: usize) -> usize {
        assert!(
            (1..=self.n_shelves).contains(&shelf_id) && k < self.n_samples,
            "mask index ({shelf_id}, {k}) out of bounds"
        );
        (shelf_id - 1) * self.n_samples + k
    }

    pub fn get(&self, shelf_id: usize, k: usize) -> bool {
        self.bits[self.offset(shelf_id, k)]
    }

    pub fn set(&mut self, shelf_id: usize, k: usize, value: bool) {
        let i = self.offset(shelf_id, k);
        self.bits[i] = value;
    }

    /// Row of one shelf across all samples.
    pub fn row(&self, shelf_id: usize) -> &[bool] {
        let start = self.offset(shelf_id, 0);
        &self.bits[start..start + self.n_samples]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn same_shape(&self, other: &ShelfTimeMask) -> bool {
        self.n_shelves == other.n_shelves && self.n_samples == other.n_samples
    }

    /// `(shelf_id, k)` of every set entry, shelf-major.
    pub fn ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i / self.n_samples + 1, i % self.n_samples))
    }

    /// True when every set entry of `other` is also set here.
    pub fn dominates(&self, other: &ShelfTimeMask) -> bool {
        self.same_shape(other) && self.bits.iter().zip(&other.bits).all(|(&a, &b)| a || !b)
    }

    pub(crate) fn bits(&self) -> &[bool] {
        &self.bits
    }
}
