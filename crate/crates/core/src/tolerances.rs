use serde::{Deserialize, Serialize};

/// Numerical thresholds used across the pipeline. All are scale-aware: each
/// is compared against a quantity already normalized by the natural scale of
/// the object being tested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// `|det g| ≤ det_rel · (max |g_ij|)ⁿ` means degenerate.
    pub det_rel: f64,
    /// Largest accepted condition number of the (row-normalized) coframe.
    pub coframe_cond: f64,
    /// Discriminant threshold for a unit covector, relative to `scale^{m(m-1)}`.
    pub disc: f64,
    /// Threshold on `max |ζ_θ|` relative to `scale³`.
    pub zeta: f64,
    /// Number of random unit covectors for the discriminant-variety checks.
    pub samples: usize,
    /// Smallest accepted normalized `|eigenvalue|` of the minimal-connection Gram matrix.
    pub gram: f64,
    /// Smallest accepted singular value of normalized invariant differentials.
    pub rank: f64,
    /// Relative discrepancy accepted when comparing models.
    pub equiv: f64,
    /// Largest relative gap between invariant coordinates considered a match.
    pub match_gap: f64,
    /// Fraction of model points that must be matched for equivalence.
    pub coverage: f64,
    /// Fraction of grid points on which a coordinate selection must be valid.
    pub selection_fraction: f64,
    /// Fraction of grid points that must be regular to build a model.
    pub regular_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            det_rel: 1e-10,
            coframe_cond: 1e8,
            disc: 1e-10,
            zeta: 1e-10,
            samples: 64,
            gram: 1e-10,
            rank: 1e-6,
            equiv: 1e-6,
            match_gap: 1e-6,
            coverage: 0.8,
            selection_fraction: 0.8,
            regular_fraction: 0.5,
        }
    }
}
