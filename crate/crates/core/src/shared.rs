//! Lock-free shared iterate.
//!
//! Each component is an `AtomicU64` holding the bit pattern of an `f64`, so a
//! single component is never torn. Nothing orders accesses to different
//! components: a full read taken while other threads write may mix versions
//! and match no state that ever existed in memory. The update counter is the
//! only place with acquire/release ordering; component cells use relaxed
//! loads and stores.

use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::problem::CompositeProblem;

pub struct SharedIterate {
    cells: Box<[AtomicU64]>,
    counter: AtomicU64,
}

impl SharedIterate {
    pub fn new(x0: &[f64]) -> Self {
        SharedIterate {
            cells: x0.iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
            counter: AtomicU64::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Number of component writes completed so far.
    pub fn updates(&self) -> u64 {
        self.counter.load(Ordering::Acquire)
    }

    #[inline]
    pub fn load(&self, i: usize) -> f64 {
        f64::from_bits(self.cells[i].load(Ordering::Relaxed))
    }

    /// Reads the counter, then every component in index order, without
    /// locking. Returns the (possibly inconsistent) vector and the counter
    /// value seen before the first component was read.
    pub fn snapshot_read(&self) -> (Vec<f64>, u64) {
        let mut out = vec![0.0; self.len()];
        let before = self.snapshot_into(&mut out);
        (out, before)
    }

    pub fn snapshot_into(&self, out: &mut [f64]) -> u64 {
        let before = self.counter.load(Ordering::Acquire);
        for (o, cell) in out.iter_mut().zip(self.cells.iter()) {
            *o = f64::from_bits(cell.load(Ordering::Relaxed));
        }
        before
    }

    /// `∇_i f(x̂)` where `x̂` is read component by component while the dot
    /// product is accumulated. Observationally identical to
    /// [`snapshot_read`](Self::snapshot_read) followed by
    /// [`CompositeProblem::gradient_coordinate`], without the copy.
    #[inline]
    pub fn read_gradient(&self, problem: &CompositeProblem, i: usize) -> (f64, u64) {
        let before = self.counter.load(Ordering::Acquire);
        let row = problem.row(i);
        let mut s = 0.0;
        for (q, cell) in row.iter().zip(self.cells.iter()) {
            s += q * f64::from_bits(cell.load(Ordering::Relaxed));
        }
        (s - problem.c()[i], before)
    }

    /// Stores `value` into component `i` and bumps the update counter.
    /// Returns the counter after the increment.
    ///
    /// The caller must be the only writer of component `i`; use
    /// [`partition`](Self::partition) to get writers that enforce this.
    #[inline]
    pub fn apply_update(&self, i: usize, value: f64) -> u64 {
        self.cells[i].store(value.to_bits(), Ordering::Relaxed);
        self.counter.fetch_add(1, Ordering::AcqRel) + 1
    }

    /// Splits the components into `parts` contiguous slices of
    /// `⌈n/parts⌉` components each (the last one shorter, trailing ones
    /// possibly empty) and returns one exclusive writer per slice, plus a
    /// read handle that stays usable while the writers are alive.
    pub fn partition(&mut self, parts: usize) -> (&SharedIterate, Vec<SliceWriter<'_>>) {
        let this: &SharedIterate = self;
        let writers = slice_ranges(this.len(), parts)
            .into_iter()
            .map(|range| SliceWriter { shared: this, range })
            .collect();
        (this, writers)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.snapshot_read().0
    }
}

/// Contiguous ownership blocks used by the asynchronous solver.
pub fn slice_ranges(n: usize, parts: usize) -> Vec<Range<usize>> {
    assert!(parts > 0, "need at least one slice");
    let block = n.div_ceil(parts);
    (0..parts)
        .map(|p| (p * block).min(n)..((p + 1) * block).min(n))
        .collect()
}

/// Write access to one ownership slice of a [`SharedIterate`].
///
/// Only obtainable from [`SharedIterate::partition`], which borrows the
/// iterate mutably, so the slices handed out are disjoint.
pub struct SliceWriter<'a> {
    shared: &'a SharedIterate,
    range: Range<usize>,
}

impl<'a> SliceWriter<'a> {
    pub fn range(&self) -> Range<usize> {
        self.range.clone()
    }

    pub fn shared(&self) -> &'a SharedIterate {
        self.shared
    }

    #[inline]
    pub fn apply_update(&self, i: usize, value: f64) -> u64 {
        debug_assert!(
            self.range.contains(&i),
            "component {i} is not owned by slice {:?}",
            self.range
        );
        self.shared.apply_update(i, value)
    }
}
