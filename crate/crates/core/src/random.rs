//! Seeded random instances: covectors for the sampling checks, and symbols,
//! gauges and operators for trials and tests.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::field::{Chart, GaugeTransform, OperatorSpec, PolyMatrixField, PolyScalarField};
use crate::kernel::{Mat, SymbolPoint};

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniformly distributed point on the unit sphere in `Rⁿ`.
pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Matrix with independent standard normal entries.
pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| normal(rng))
}

/// `id + spread · N`, redrawn until its condition number is below 10.
pub fn random_near_identity<R: Rng + ?Sized>(rng: &mut R, k: usize, spread: f64) -> Mat {
    loop {
        let p = Mat::identity(k, k) + random_matrix(rng, k, k) * spread;
        if crate::kernel::condition_number(&p) < 10.0 {
            return p;
        }
    }
}

/// Symbol with independent standard normal entries; general with
/// probability one whenever `(n, m)` admits general symbols.
pub fn random_symbol<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> SymbolPoint {
    SymbolPoint {
        components: (0..n).map(|_| random_matrix(rng, m, m)).collect(),
    }
}

/// Polynomial with every monomial of degree ≤ `degree`, coefficients drawn
/// from `N(0, scale[d]²)` for monomials of degree `d`.
pub fn random_poly<R: Rng + ?Sized>(rng: &mut R, nvars: usize, scale: &[f64]) -> PolyScalarField {
    let degree = scale.len().saturating_sub(1) as u32;
    let mut terms = Vec::new();
    let mut exp = vec![0u32; nvars];
    loop {
        let d: u32 = exp.iter().sum();
        if d <= degree && scale[d as usize] != 0.0 {
            terms.push((exp.clone(), scale[d as usize] * normal(rng)));
        }
        // odometer over exponents 0..=degree
        let mut k = 0;
        while k < nvars {
            exp[k] += 1;
            if exp[k] <= degree {
                break;
            }
            exp[k] = 0;
            k += 1;
        }
        if k == nvars {
            return PolyScalarField::from_terms(nvars, terms);
        }
    }
}

pub fn random_matrix_field<R: Rng + ?Sized>(rng: &mut R, nvars: usize, m: usize, scale: &[f64]) -> PolyMatrixField {
    PolyMatrixField::from_entries(m, (0..m * m).map(|_| random_poly(rng, nvars, scale)).collect())
}

/// Quadratic operator whose symbol is a mild perturbation of a random
/// constant symbol and whose lower-order term varies at unit rate.
pub fn random_operator<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize, chart: Chart) -> OperatorSpec {
    let a = (0..n)
        .map(|_| random_matrix_field(rng, n, m, &[1.0, 0.2, 0.05]))
        .collect();
    let b = random_matrix_field(rng, n, m, &[1.0, 1.0, 0.2]);
    OperatorSpec::new(a, b, chart).expect("n, m >= 2 and matching shapes")
}

/// `P = id + N` with `N` strictly upper triangular and affine in `x`, so
/// `P⁻¹` is polynomial.
pub fn random_unipotent<R: Rng + ?Sized>(rng: &mut R, nvars: usize, m: usize, spread: f64) -> GaugeTransform {
    let mut e = vec![PolyScalarField::zero(nvars); m * m];
    for r in 0..m {
        for c in r + 1..m {
            e[r * m + c] = random_poly(rng, nvars, &[spread, spread]);
        }
    }
    GaugeTransform::unipotent(PolyMatrixField::from_entries(m, e)).expect("strictly upper triangular")
}
