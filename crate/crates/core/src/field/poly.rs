//! Sparse multivariate polynomials with real coefficients, scalar and
//! matrix-valued.

use std::cmp::Ordering;
use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use crate::kernel::{Jet, Mat};

/// Exponent multi-index, ordered graded-lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Exponent(pub Vec<u32>);

impl Exponent {
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }
}

impl Ord for Exponent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Exponent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyScalarField {
    nvars: usize,
    terms: BTreeMap<Exponent, f64>,
}

impl PolyScalarField {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::from_terms(nvars, [(vec![0; nvars], c)])
    }

    /// The coordinate function `x_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self::from_terms(nvars, [(e, 1.0)])
    }

    /// Sums duplicate exponents and drops exact zeros.
    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Vec<u32>, f64)>) -> Self {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            assert_eq!(e.len(), nvars, "exponent length must equal the number of variables");
            p.add_term(Exponent(e), c);
        }
        p
    }

    fn add_term(&mut self, e: Exponent, c: f64) {
        if c == 0.0 {
            return;
        }
        match self.terms.entry(e) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, f64)> {
        self.terms.iter().map(|(e, c)| (e, *c))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Exponent::degree).max().unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::zero(self.nvars);
        }
        Self {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e = ea.0.iter().zip(&eb.0).map(|(a, b)| a + b).collect();
                out.add_term(Exponent(e), ca * cb);
            }
        }
        out
    }

    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            let k = e.0[i];
            if k > 0 {
                let mut d = e.0.clone();
                d[i] -= 1;
                out.add_term(Exponent(d), c * k as f64);
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.0.iter().zip(x).map(|(k, xi)| xi.powi(*k as i32)).product::<f64>())
            .sum()
    }

    /// Value, gradient and Hessian by term-wise differentiation.
    pub fn eval_jet2(&self, x: &[f64]) -> Jet<f64> {
        let n = self.nvars;
        let mut value = 0.0;
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n * n];
        let mut p = vec![0.0; n];
        let mut d1 = vec![0.0; n];
        let mut d2 = vec![0.0; n];
        for (e, c) in &self.terms {
            for k in 0..n {
                let ek = e.0[k] as i32;
                p[k] = x[k].powi(ek);
                d1[k] = if ek >= 1 { ek as f64 * x[k].powi(ek - 1) } else { 0.0 };
                d2[k] = if ek >= 2 {
                    (ek * (ek - 1)) as f64 * x[k].powi(ek - 2)
                } else {
                    0.0
                };
            }
            let prod_except = |skip: &[usize]| -> f64 { (0..n).filter(|k| !skip.contains(k)).map(|k| p[k]).product() };
            value += c * prod_except(&[]);
            for i in 0..n {
                if d1[i] != 0.0 {
                    grad[i] += c * d1[i] * prod_except(&[i]);
                }
                if d2[i] != 0.0 {
                    hess[i * n + i] += c * d2[i] * prod_except(&[i]);
                }
                for j in i + 1..n {
                    if d1[i] != 0.0 && d1[j] != 0.0 {
                        let v = c * d1[i] * d1[j] * prod_except(&[i, j]);
                        hess[i * n + j] += v;
                        hess[j * n + i] += v;
                    }
                }
            }
        }
        Jet {
            value,
            grad,
            hess: Some(hess),
        }
    }

    /// Substitutes `x_i = Σ_j M_ij y_j + b_i`.
    pub fn compose_affine(&self, m: &Mat, b: &[f64]) -> Self {
        let n = self.nvars;
        let lin: Vec<PolyScalarField> = (0..n)
            .map(|i| {
                let mut terms: Vec<(Vec<u32>, f64)> = (0..n)
                    .map(|j| {
                        let mut e = vec![0; n];
                        e[j] = 1;
                        (e, m[(i, j)])
                    })
                    .collect();
                terms.push((vec![0; n], b[i]));
                PolyScalarField::from_terms(n, terms)
            })
            .collect();
        let mut out = Self::zero(n);
        for (e, c) in &self.terms {
            let mut t = Self::constant(n, *c);
            for (i, k) in e.0.iter().enumerate() {
                for _ in 0..*k {
                    t = t.mul(&lin[i]);
                }
            }
            out = out.add(&t);
        }
        out
    }

    /// Largest coefficient difference; exact-identity checks compare this
    /// against a round-off threshold.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        self.sub(other).max_abs_coeff()
    }
}

/// Square matrix of polynomial entries, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrixField {
    m: usize,
    nvars: usize,
    entries: Vec<PolyScalarField>,
}

impl PolyMatrixField {
    pub fn zero(m: usize, nvars: usize) -> Self {
        Self {
            m,
            nvars,
            entries: vec![PolyScalarField::zero(nvars); m * m],
        }
    }

    pub fn identity(m: usize, nvars: usize) -> Self {
        Self::constant(&Mat::identity(m, m), nvars)
    }

    pub fn constant(c: &Mat, nvars: usize) -> Self {
        let m = c.nrows();
        Self {
            m,
            nvars,
            entries: (0..m * m)
                .map(|k| PolyScalarField::constant(nvars, c[(k / m, k % m)]))
                .collect(),
        }
    }

    pub fn from_entries(m: usize, entries: Vec<PolyScalarField>) -> Self {
        assert_eq!(entries.len(), m * m);
        let nvars = entries[0].nvars();
        assert!(entries.iter().all(|e| e.nvars() == nvars));
        Self { m, nvars, entries }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn entry(&self, r: usize, c: usize) -> &PolyScalarField {
        &self.entries[r * self.m + c]
    }

    pub fn entries(&self) -> &[PolyScalarField] {
        &self.entries
    }

    pub fn degree(&self) -> u32 {
        self.entries.iter().map(PolyScalarField::degree).max().unwrap_or(0)
    }

    fn zip(&self, other: &Self, f: impl Fn(&PolyScalarField, &PolyScalarField) -> PolyScalarField) -> Self {
        assert_eq!(self.m, other.m);
        Self {
            m: self.m,
            nvars: self.nvars,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| f(a, b)).collect(),
        }
    }

    fn map(&self, f: impl Fn(&PolyScalarField) -> PolyScalarField) -> Self {
        Self {
            m: self.m,
            nvars: self.nvars,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a.sub(b))
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|e| e.scale(s))
    }

    pub fn scale_by(&self, p: &PolyScalarField) -> Self {
        self.map(|e| e.mul(p))
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.m, other.m);
        let m = self.m;
        let entries = (0..m * m)
            .map(|k| {
                let (r, c) = (k / m, k % m);
                (0..m).fold(PolyScalarField::zero(self.nvars), |acc, j| {
                    acc.add(&self.entry(r, j).mul(other.entry(j, c)))
                })
            })
            .collect();
        Self {
            m,
            nvars: self.nvars,
            entries,
        }
    }

    pub fn derivative(&self, i: usize) -> Self {
        self.map(|e| e.derivative(i))
    }

    pub fn eval(&self, x: &[f64]) -> Mat {
        Mat::from_fn(self.m, self.m, |r, c| self.entry(r, c).eval(x))
    }

    pub fn eval_jet2(&self, x: &[f64]) -> Jet<Mat> {
        let jets: Vec<Jet<f64>> = self.entries.iter().map(|e| e.eval_jet2(x)).collect();
        Jet::from_entries(self.m, self.m, &jets)
    }

    pub fn compose_affine(&self, m: &Mat, b: &[f64]) -> Self {
        self.map(|e| e.compose_affine(m, b))
    }

    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.max_coeff_diff(b))
            .fold(0.0, f64::max)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.entries.iter().map(|e| e.max_abs_coeff()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(n: usize, i: usize) -> PolyScalarField {
        PolyScalarField::var(n, i)
    }

    #[test]
    fn graded_lex_ordering() {
        let p = PolyScalarField::from_terms(
            2,
            [
                (vec![0, 2], 1.0),
                (vec![1, 0], 2.0),
                (vec![0, 0], 3.0),
                (vec![2, 0], 4.0),
            ],
        );
        let order: Vec<Vec<u32>> = p.terms().map(|(e, _)| e.0.clone()).collect();
        assert_eq!(order, vec![vec![0, 0], vec![1, 0], vec![2, 0], vec![0, 2]]);
    }

    #[test]
    fn duplicates_merge_and_cancel() {
        let p = PolyScalarField::from_terms(2, [(vec![1, 0], 2.0), (vec![1, 0], -2.0), (vec![0, 1], 1.0)]);
        assert_eq!(p.terms().count(), 1);
        assert!(x(2, 0).sub(&x(2, 0)).is_zero());
    }

    #[test]
    fn monomial_jet() {
        // x1² at (3, 0)
        let p = PolyScalarField::from_terms(2, [(vec![2, 0], 1.0)]);
        let j = p.eval_jet2(&[3.0, 0.0]);
        assert_eq!(j.value, 9.0);
        assert_eq!(j.grad, vec![6.0, 0.0]);
        assert_eq!(j.hess.unwrap(), vec![2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_jet_is_flat() {
        let j = PolyMatrixField::constant(&Mat::from_element(2, 2, 1.5), 3).eval_jet2(&[0.1, 0.2, 0.3]);
        assert!(j.grad.iter().all(|g| g.norm() == 0.0));
        assert!(j.hess.unwrap().iter().all(|g| g.norm() == 0.0));
    }

    #[test]
    fn mixed_partials() {
        // x y³ + 2 x² y
        let p = PolyScalarField::from_terms(2, [(vec![1, 3], 1.0), (vec![2, 1], 2.0)]);
        let j = p.eval_jet2(&[1.5, -0.5]);
        let (xv, yv) = (1.5f64, -0.5f64);
        assert!((j.grad[0] - (yv.powi(3) + 4.0 * xv * yv)).abs() < 1e-14);
        assert!((j.grad[1] - (3.0 * xv * yv * yv + 2.0 * xv * xv)).abs() < 1e-14);
        assert!((j.hess_at(0, 1).unwrap() - (3.0 * yv * yv + 4.0 * xv)).abs() < 1e-14);
        assert!((j.hess_at(1, 1).unwrap() - 6.0 * xv * yv).abs() < 1e-14);
        assert_eq!(j.hess_at(0, 1), j.hess_at(1, 0));
    }

    #[test]
    fn affine_composition_evaluates_consistently() {
        let p = PolyScalarField::from_terms(2, [(vec![2, 1], 1.0), (vec![0, 1], -3.0), (vec![0, 0], 0.5)]);
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 0.3]);
        let b = [0.2, -1.0];
        let q = p.compose_affine(&m, &b);
        let y = [0.7, -0.4];
        let xx = [
            m[(0, 0)] * y[0] + m[(0, 1)] * y[1] + b[0],
            m[(1, 0)] * y[0] + m[(1, 1)] * y[1] + b[1],
        ];
        assert!((q.eval(&y) - p.eval(&xx)).abs() < 1e-13);
        assert!(q.degree() <= p.degree());
    }

    #[test]
    fn matrix_product_and_derivative() {
        let n = 2;
        let mut e = vec![PolyScalarField::zero(n); 4];
        e[0] = PolyScalarField::constant(n, 1.0);
        e[1] = x(n, 0);
        e[3] = PolyScalarField::constant(n, 1.0);
        let p = PolyMatrixField::from_entries(2, e);
        let mut ei = vec![PolyScalarField::zero(n); 4];
        ei[0] = PolyScalarField::constant(n, 1.0);
        ei[1] = x(n, 0).scale(-1.0);
        ei[3] = PolyScalarField::constant(n, 1.0);
        let pi = PolyMatrixField::from_entries(2, ei);
        assert_eq!(p.mul(&pi).max_coeff_diff(&PolyMatrixField::identity(2, n)), 0.0);
        assert_eq!(
            pi.derivative(0).eval(&[0.0, 0.0]),
            Mat::from_row_slice(2, 2, &[0.0, -1.0, 0.0, 0.0])
        );
    }
}
