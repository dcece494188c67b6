//! The majorization vector `x_i = C (sqrt(i) - sqrt(i - 1))`.
//!
//! Its partial sums telescope to `C sqrt(i)`, and by the AM–QM inequality the
//! `i` largest absolute coordinates of any vector in the `C`-ℓ2 ball sum to at
//! most `C sqrt(i)`. So every ℓ2-clipped gradient is weakly majorized by this
//! vector, and a Schur-convex, coordinate-additive moment bound evaluated on
//! it dominates the bound for any clipped gradient.
//!
//! Coordinates are computed on demand; the accountant streams them and never
//! materializes the vector.

use crate::error::{Error, Result};

/// Above this index the difference of square roots is replaced by the
/// cancellation-free form `C / (sqrt(i) + sqrt(i - 1))`.
pub const CANCELLATION_SAFE_FROM: u64 = 10_000;

/// Tolerance used by [`MajorizationSet::weakly_majorizes`].
pub const MAJORIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MajorizationSet {
    clip: f64,
    dim: u64,
}

impl MajorizationSet {
    pub fn new(clip: f64, dim: u64) -> Result<Self> {
        if !(clip >= 0.0) || !clip.is_finite() {
            return Err(Error::invalid(
                "clip_C",
                format!("must be finite and non-negative, got {clip}"),
            ));
        }
        if dim == 0 {
            return Err(Error::invalid("dim_n", "must be at least 1"));
        }
        Ok(MajorizationSet { clip, dim })
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    pub fn dim(&self) -> u64 {
        self.dim
    }

    /// The `i`-th coordinate, 1-based.
    pub fn coordinate(&self, i: u64) -> Result<f64> {
        if i == 0 || i > self.dim {
            return Err(Error::domain(
                "coordinate",
                format!("index {i} outside 1..={}", self.dim),
            ));
        }
        Ok(coordinate_unchecked(self.clip, i))
    }

    /// Iterates coordinates `start..=end` (1-based, inclusive).
    pub fn coordinates(&self, start: u64, end: u64) -> impl Iterator<Item = f64> + '_ {
        let end = end.min(self.dim);
        (start.max(1)..=end).map(move |i| coordinate_unchecked(self.clip, i))
    }

    /// `true` iff the sorted partial sums of `|g|` never exceed `C sqrt(i)`
    /// (with an absolute slack of `1e-12`).
    pub fn weakly_majorizes(&self, g: &[f64]) -> bool {
        assert_eq!(g.len() as u64, self.dim, "vector length must equal the set dimension");
        let mut abs: Vec<f64> = g.iter().map(|v| v.abs()).collect();
        abs.sort_unstable_by(|a, b| b.total_cmp(a));
        let mut partial = 0.0;
        for (idx, v) in abs.iter().enumerate() {
            partial += v;
            let bound = self.clip * ((idx + 1) as f64).sqrt();
            if partial > bound + MAJORIZATION_TOL {
                return false;
            }
        }
        true
    }
}

/// `C (sqrt(i) - sqrt(i-1))` for a real index `i >= 1`.
#[inline]
pub(crate) fn coordinate_at(clip: f64, i: f64) -> f64 {
    if i >= CANCELLATION_SAFE_FROM as f64 {
        clip / (i.sqrt() + (i - 1.0).sqrt())
    } else {
        clip * (i.sqrt() - (i - 1.0).sqrt())
    }
}

#[inline]
pub(crate) fn coordinate_unchecked(clip: f64, i: u64) -> f64 {
    coordinate_at(clip, i as f64)
}
