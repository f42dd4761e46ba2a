//! Connections determined by an operator.
//!
//! The symbol's metric `G = g⁻¹` on `T` has a Levi-Civita connection; with it
//! the covariant differential of the symbol is an `End(E) ⊗ End(T)` tensor.
//! A bundle connection is minimal when that differential is orthogonal to
//! every `[β, σ]` with `β ∈ sl(E) ⊗ T*`; minimal connections form a line
//! `ω + id ⊗ λ`, and requiring the subsymbol to be `g`-orthogonal to the
//! symbol picks one point on it, the associated connection.
//!
//! Everything is computed pointwise on 1-jets, so curvature needs no
//! numerical differentiation.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::field::OperatorSpec;
use crate::kernel::{commutator, sl_basis, Jet, Mat, SymbolPoint};
use crate::symbol::{det_threshold, Coframe};
use crate::tolerances::Tolerances;

/// 2-jets of the symbol and of both metrics at a point.
#[derive(Debug, Clone)]
pub struct SymbolJets {
    pub sigma: Vec<Jet<Mat>>,
    /// `g^{ij} = Tr(σ_i σ_j)`.
    pub g: Jet<Mat>,
    /// `G = g⁻¹`, the metric on `T`.
    pub metric: Jet<Mat>,
}

impl SymbolJets {
    pub fn new(sigma: Vec<Jet<Mat>>, tol: &Tolerances) -> Result<Self> {
        let n = sigma.len();
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(sigma[i].trace_product(&sigma[j]));
            }
        }
        let g = Jet::from_entries(n, n, &entries);
        let det = g.value.determinant();
        let thr = det_threshold(&g.value, tol);
        if !(det.abs() > thr) {
            return Err(Error::DegenerateMetric { det, tol: thr });
        }
        let metric = g.matinv().map_err(|_| Error::DegenerateMetric { det, tol: thr })?;
        Ok(Self { sigma, g, metric })
    }

    pub fn at(op: &OperatorSpec, x: &[f64], tol: &Tolerances) -> Result<Self> {
        Self::new(op.symbol_jets(x)?, tol)
    }

    pub fn n(&self) -> usize {
        self.sigma.len()
    }

    pub fn m(&self) -> usize {
        self.sigma[0].rows()
    }

    pub fn symbol(&self) -> SymbolPoint {
        SymbolPoint {
            components: self.sigma.iter().map(|s| s.value.clone()).collect(),
        }
    }

    /// 1-jets of the symbol components.
    pub fn sigma1(&self) -> Vec<Jet<Mat>> {
        self.sigma.iter().map(Jet::truncate).collect()
    }
}

/// `Γ^k_ij` with 1-jets.
#[derive(Debug, Clone)]
pub struct Christoffel {
    pub n: usize,
    gamma: Vec<Jet<f64>>,
}

impl Christoffel {
    pub fn get(&self, k: usize, i: usize, j: usize) -> &Jet<f64> {
        &self.gamma[(k * self.n + i) * self.n + j]
    }

    pub fn zero(n: usize) -> Self {
        Self {
            n,
            gamma: vec![Jet::constant(0.0, n, 1); n * n * n],
        }
    }
}

/// Christoffel symbols of a metric on `T` given as a 2-jet:
/// `Γ^k_ij = ½ G^{kl}(∂ᵢG_jl + ∂ⱼG_il − ∂_l G_ij)`.
pub fn levi_civita(metric: &Jet<Mat>) -> Result<Christoffel> {
    let n = metric.rows();
    let inv = metric.truncate().matinv()?;
    let d: Vec<Jet<Mat>> = (0..n).map(|i| metric.partial(i)).collect();
    // lowered[(l, i, j)] = ½(∂ᵢG_jl + ∂ⱼG_il − ∂_l G_ij)
    let mut lowered = Vec::with_capacity(n * n * n);
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                let v = d[i]
                    .entry(j, l)
                    .add(&d[j].entry(i, l))
                    .sub(&d[l].entry(i, j))
                    .scale(0.5);
                lowered.push(v);
            }
        }
    }
    let mut gamma = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut acc = Jet::constant(0.0, n, 1);
                for l in 0..n {
                    acc = acc.add(&inv.entry(k, l).mul(&lowered[(l * n + i) * n + j]));
                }
                gamma.push(acc);
            }
        }
    }
    // enforce exact symmetry in the lower pair
    for k in 0..n {
        for i in 0..n {
            for j in i + 1..n {
                let a = (k * n + i) * n + j;
                let b = (k * n + j) * n + i;
                let avg = gamma[a].add(&gamma[b]).scale(0.5);
                gamma[a] = avg.clone();
                gamma[b] = avg;
            }
        }
    }
    Ok(Christoffel { n, gamma })
}

/// `∇_k G_ij`, which vanishes for the Levi-Civita connection of `G`.
pub fn metric_compatibility_residual(metric: &Jet<Mat>, gamma: &Christoffel) -> f64 {
    let n = metric.rows();
    let g = &metric.value;
    let mut worst = 0.0f64;
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut r = metric.grad[k][(i, j)];
                for l in 0..n {
                    r -= gamma.get(l, k, i).value * g[(l, j)] + gamma.get(l, k, j).value * g[(i, l)];
                }
                worst = worst.max(r.abs());
            }
        }
    }
    worst
}

/// `c_ij = ∂ⱼσᵢ + [ωⱼ, σᵢ] + Σ_k Γ^i_jk σ_k`, stored row-major in `(i, j)`.
#[derive(Debug, Clone)]
pub struct CovDiffSigma {
    pub n: usize,
    pub c: Vec<Jet<Mat>>,
}

impl CovDiffSigma {
    pub fn get(&self, i: usize, j: usize) -> &Jet<Mat> {
        &self.c[i * self.n + j]
    }
}

/// Needs 2-jets of `σ`; `ω` and `Γ` are 1-jets.
pub fn cov_diff_sigma(sigma: &[Jet<Mat>], omega: &[Jet<Mat>], gamma: &Christoffel) -> CovDiffSigma {
    let n = sigma.len();
    let s1: Vec<Jet<Mat>> = sigma.iter().map(Jet::truncate).collect();
    let mut c = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut v = sigma[i].partial(j).add(&omega[j].commutator(&s1[i]));
            for (k, sk) in s1.iter().enumerate() {
                v = v.add(&gamma.get(i, j, k).times(sk));
            }
            c.push(v);
        }
    }
    CovDiffSigma { n, c }
}

/// `D_ij = Tr c_ij`, independent of the bundle connection.
pub fn d_operator(c: &CovDiffSigma) -> Mat {
    Mat::from_fn(c.n, c.n, |i, j| c.get(i, j).value.trace())
}

#[derive(Debug, Clone)]
pub struct MinimalConnection {
    /// Traceless `αⱼ` with 1-jets.
    pub alpha: Vec<Jet<Mat>>,
    /// `min |eig| / max |eig|` of the Gram matrix.
    pub gram_ratio: f64,
    /// Positive and negative eigenvalue counts of the Gram matrix.
    pub gram_signature: (usize, usize),
}

/// Solves `Σⱼ Tr((c_lj + [αⱼ, σ_l]) [β, σⱼ]) = 0` for every `l` and every
/// `β ∈ sl(E)`, the stationarity condition of `‖c + [α, σ]‖²` in the
/// pairing `(T, S) = Σ Tr(T_ij S_ji)`.
///
/// That pairing is the invariant one and is indefinite, so the system is
/// symmetric but not definite; it is accepted when the smallest
/// eigenvalue magnitude is not negligible against the largest.
pub fn minimal_connection(sigma: &[Jet<Mat>], c: &CovDiffSigma, tol: &Tolerances) -> Result<MinimalConnection> {
    let n = sigma.len();
    let m = sigma[0].rows();
    let basis = sl_basis(m);
    let nb = basis.len();
    let dim = sigma[0].dim();
    let s1: Vec<Jet<Mat>> = sigma.iter().map(Jet::truncate).collect();
    // k[l][q] = [β_q, σ_l]
    let k: Vec<Vec<Jet<Mat>>> = s1
        .iter()
        .map(|s| {
            basis
                .iter()
                .map(|b| Jet::constant(b.clone(), dim, 1).commutator(s))
                .collect()
        })
        .collect();
    let size = n * nb;
    let mut gram_entries = vec![Jet::constant(0.0, dim, 1); size * size];
    let mut rhs_entries = Vec::with_capacity(size);
    for l in 0..n {
        for p in 0..nb {
            let row = l * nb + p;
            for j in 0..n {
                for q in 0..nb {
                    let col = j * nb + q;
                    if col < row {
                        continue;
                    }
                    let v = k[l][q].trace_product(&k[j][p]);
                    gram_entries[col * size + row] = v.clone();
                    gram_entries[row * size + col] = v;
                }
            }
            let mut r = Jet::constant(0.0, dim, 1);
            for j in 0..n {
                r = r.sub(&c.get(l, j).truncate().trace_product(&k[j][p]));
            }
            rhs_entries.push(r);
        }
    }
    let gram = Jet::from_entries(size, size, &gram_entries);
    let rhs = Jet::from_entries(size, 1, &rhs_entries);
    let eig = SymmetricEigen::new(gram.value.clone());
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    let top = abs.iter().fold(0.0f64, |a, v| a.max(*v));
    let bottom = abs.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    let gram_ratio = if top > 0.0 { bottom / top } else { 0.0 };
    if !(gram_ratio >= tol.gram) {
        return Err(Error::SingularGram { min_eig: gram_ratio });
    }
    let pos = eig.eigenvalues.iter().filter(|v| **v > 0.0).count();
    let coeffs = gram
        .linsolve(&rhs)
        .map_err(|_| Error::SingularGram { min_eig: gram_ratio })?;
    let alpha = (0..n)
        .map(|j| {
            let mut a = Jet::constant(Mat::zeros(m, m), dim, 1);
            for (q, b) in basis.iter().enumerate() {
                let cq = coeffs.entry(j * nb + q, 0);
                a = a.add(&cq.times(&Jet::constant(b.clone(), dim, 1)));
            }
            a
        })
        .collect();
    Ok(MinimalConnection {
        alpha,
        gram_ratio,
        gram_signature: (pos, size - pos),
    })
}

/// Largest `|Σⱼ Tr((c_lj + [αⱼ, σ_l]) [β, σⱼ])|` over slots and basis
/// elements, relative to the scale of the terms.
pub fn normal_equation_residual(sigma: &SymbolPoint, c: &[Mat], alpha: &[Mat]) -> f64 {
    let n = sigma.n();
    let s = &sigma.components;
    let mut worst = 0.0f64;
    for b in sl_basis(sigma.m()) {
        for l in 0..n {
            let mut r = 0.0;
            let mut scale = 0.0;
            for j in 0..n {
                let t = &c[l * n + j] + commutator(&alpha[j], &s[l]);
                let kb = commutator(&b, &s[j]);
                r += crate::kernel::trace_of_product(&t, &kb);
                scale += t.norm() * kb.norm();
            }
            worst = worst.max(r.abs() / scale.max(f64::MIN_POSITIVE));
        }
    }
    worst
}

/// The associated connection `ω = α + id ⊗ λ` and subsymbol `σ₀` with
/// `Tr(σ₀ σ_θ) = 0` for every covector `θ`.
#[derive(Debug, Clone)]
pub struct AssociatedConnection {
    pub omega: Vec<Jet<Mat>>,
    pub sigma0: Jet<Mat>,
    pub lambda: Vec<Jet<f64>>,
    pub alpha: Vec<Jet<Mat>>,
    pub gram_ratio: f64,
    pub gram_signature: (usize, usize),
}

impl AssociatedConnection {
    pub fn omega_values(&self) -> Vec<Mat> {
        self.omega.iter().map(|w| w.value.clone()).collect()
    }
}

/// From symbol jets and the 2-jet (or 1-jet) of `B`.
pub fn associated_from_jets(sj: &SymbolJets, b: &Jet<Mat>, tol: &Tolerances) -> Result<AssociatedConnection> {
    let n = sj.n();
    let m = sj.m();
    let gamma = levi_civita(&sj.metric)?;
    let zero: Vec<Jet<Mat>> = (0..n).map(|_| Jet::constant(Mat::zeros(m, m), n, 1)).collect();
    let c = cov_diff_sigma(&sj.sigma, &zero, &gamma);
    let min = minimal_connection(&sj.sigma, &c, tol)?;
    let s1 = sj.sigma1();
    let mut s0 = b.truncate();
    for (s, a) in s1.iter().zip(&min.alpha) {
        s0 = s0.sub(&s.mul(a));
    }
    let t_entries: Vec<Jet<f64>> = s1.iter().map(|s| s0.trace_product(s)).collect();
    let t = Jet::from_entries(n, 1, &t_entries);
    let lam = sj.metric.truncate().mul(&t);
    let lambda: Vec<Jet<f64>> = (0..n).map(|i| lam.entry(i, 0)).collect();
    let id = Jet::constant(Mat::identity(m, m), n, 1);
    let omega = min
        .alpha
        .iter()
        .zip(&lambda)
        .map(|(a, l)| a.add(&l.times(&id)))
        .collect();
    let mut sigma0 = s0;
    for (s, l) in s1.iter().zip(&lambda) {
        sigma0 = sigma0.sub(&l.times(s));
    }
    Ok(AssociatedConnection {
        omega,
        sigma0,
        lambda,
        alpha: min.alpha,
        gram_ratio: min.gram_ratio,
        gram_signature: min.gram_signature,
    })
}

pub fn associated_connection(op: &OperatorSpec, x: &[f64], tol: &Tolerances) -> Result<AssociatedConnection> {
    let sj = SymbolJets::at(op, x, tol)?;
    associated_from_jets(&sj, &op.b_jet(x)?, tol)
}

/// Curvature, its trace, and trace-free part; all `n×n` arrays indexed
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureChern {
    pub r: Vec<Mat>,
    pub ch: Mat,
    pub r0: Vec<Mat>,
}

/// `R_ij = ∂ᵢωⱼ − ∂ⱼωᵢ + [ωᵢ, ωⱼ]` from 1-jets.
pub fn curvature_chern(omega: &[Jet<Mat>]) -> CurvatureChern {
    let n = omega.len();
    let m = omega[0].rows();
    let mut r = vec![Mat::zeros(m, m); n * n];
    let mut ch = Mat::zeros(n, n);
    let mut r0 = vec![Mat::zeros(m, m); n * n];
    for i in 0..n {
        for j in i + 1..n {
            let rij = &omega[j].grad[i] - &omega[i].grad[j] + commutator(&omega[i].value, &omega[j].value);
            let t = rij.trace();
            let rij0 = &rij - Mat::identity(m, m) * (t / m as f64);
            ch[(i, j)] = t;
            ch[(j, i)] = -t;
            r[j * n + i] = -&rij;
            r0[j * n + i] = -&rij0;
            r[i * n + j] = rij;
            r0[i * n + j] = rij0;
        }
    }
    CurvatureChern { r, ch, r0 }
}

/// `ch(e_a, e_b)` on the invariant frame.
pub fn chern_coefficients(ch: &Mat, cf: &Coframe) -> Mat {
    cf.frame.transpose() * ch * &cf.frame
}
