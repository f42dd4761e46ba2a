//! Small dense matrix and tensor arithmetic shared by every other module.
//!
//! Matrices are `nalgebra::DMatrix<f64>`; the sizes involved (fibre and
//! chart dimensions up to about 8) never justify anything fancier.

pub mod jet;
pub mod words;

use crate::error::{Error, Result};
use nalgebra::DMatrix;

pub use jet::{Jet, JetValue};
pub use words::{enumerate_trace_words, trace_word_eval, TraceWord};

/// Dense real matrix, an element of End(E) or End(T) in a chosen frame.
pub type Mat = DMatrix<f64>;

/// A symbol at a point: the ordered n-tuple of m×m matrices `σ_i` such that
/// `σ_θ = Σ θ_i σ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolPoint {
    pub components: Vec<Mat>,
}

impl SymbolPoint {
    pub fn new(components: Vec<Mat>) -> Result<Self> {
        let m = components.first().map(|c| c.nrows()).unwrap_or(0);
        for c in &components {
            if c.nrows() != m || c.ncols() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: c.ncols().max(c.nrows()),
                });
            }
        }
        Ok(Self { components })
    }

    /// Chart dimension.
    pub fn n(&self) -> usize {
        self.components.len()
    }

    /// Fibre dimension.
    pub fn m(&self) -> usize {
        self.components.first().map(|c| c.nrows()).unwrap_or(0)
    }

    /// Largest Frobenius norm among the components; used to scale tolerances.
    pub fn scale(&self) -> f64 {
        self.components.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Push the symbol forward along a linear change of chart `y = L x`:
    /// `σ'_j = Σ_i L_ji σ_i`.
    pub fn pushforward(&self, l: &Mat) -> SymbolPoint {
        let n = self.n();
        let m = self.m();
        let components = (0..n)
            .map(|j| {
                let mut acc = Mat::zeros(m, m);
                for i in 0..n {
                    acc += &self.components[i] * l[(j, i)];
                }
                acc
            })
            .collect();
        SymbolPoint { components }
    }

    /// Simultaneous conjugation `σ_i ↦ P σ_i P⁻¹`.
    pub fn conjugate(&self, p: &Mat, p_inv: &Mat) -> SymbolPoint {
        SymbolPoint {
            components: self.components.iter().map(|c| p * c * p_inv).collect(),
        }
    }
}

/// Value of the symbol at a covector: `σ_θ = Σ θ_i σ_i`.
pub fn symbol_contract(sigma: &SymbolPoint, theta: &[f64]) -> Result<Mat> {
    if theta.len() != sigma.n() {
        return Err(Error::DimensionMismatch {
            expected: sigma.n(),
            got: theta.len(),
        });
    }
    let m = sigma.m();
    let mut out = Mat::zeros(m, m);
    for (c, t) in sigma.components.iter().zip(theta) {
        if *t != 0.0 {
            out += c * *t;
        }
    }
    Ok(out)
}

/// Dense order-k tensor over an n-dimensional space, stored with the last
/// index varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorK {
    pub k: usize,
    pub n: usize,
    pub data: Vec<f64>,
}

impl TensorK {
    pub fn zeros(k: usize, n: usize) -> Self {
        Self {
            k,
            n,
            data: vec![0.0; n.pow(k as u32)],
        }
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.k);
        idx.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

pub fn commutator(a: &Mat, b: &Mat) -> Mat {
    a * b - b * a
}

/// `Tr(A B)` without forming the product.
pub fn trace_of_product(a: &Mat, b: &Mat) -> f64 {
    let m = a.nrows();
    let mut s = 0.0;
    for i in 0..m {
        for k in 0..m {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

/// Singular values in descending order.
pub fn singular_values(a: &Mat) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Numerical rank with a tolerance relative to the largest singular value.
pub fn numeric_rank(a: &Mat, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    match sv.first() {
        Some(&top) if top > 0.0 => sv.iter().filter(|&&s| s > rel_tol * top).count(),
        _ => 0,
    }
}

/// 2-norm condition number; infinite for singular or empty input.
pub fn condition_number(a: &Mat) -> f64 {
    let sv = singular_values(a);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Basis of sl(m): off-diagonal units `E_ab` (a≠b) followed by `E_aa − E_mm`.
pub fn sl_basis(m: usize) -> Vec<Mat> {
    let mut out = Vec::with_capacity(m * m - 1);
    for a in 0..m {
        for b in 0..m {
            if a != b {
                let mut e = Mat::zeros(m, m);
                e[(a, b)] = 1.0;
                out.push(e);
            }
        }
    }
    for a in 0..m - 1 {
        let mut e = Mat::zeros(m, m);
        e[(a, a)] = 1.0;
        e[(m - 1, m - 1)] = -1.0;
        out.push(e);
    }
    out
}
