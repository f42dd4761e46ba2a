//! Pointwise invariant theory of a symbol `σ ∈ End(E) ⊗ T`.
//!
//! From the trace tensors of orders one to three we get the vector `χ`, the
//! bivector `g` on `T*`, and the cubic tensors `h₁, h₂`. When the symbol is in
//! general position these determine a coframe on `T` that is invariant under
//! `GL(E) × GL(T)`; the symbol's components in that coframe are then
//! invariant up to simultaneous conjugation, so trace words in them are
//! scalar invariants.

use std::collections::BTreeMap;

use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{
    commutator, condition_number, enumerate_trace_words, numeric_rank, singular_values, sl_basis, symbol_contract,
    trace_of_product, trace_word_eval, Mat, SymbolPoint, TensorK, TraceWord,
};
use crate::random::unit_vector;
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricPoint {
    /// `g^{ij} = Tr(σ_i σ_j)`, a form on covectors.
    pub g: Mat,
    /// Its inverse, the induced form on vectors.
    pub g_inv: Mat,
    /// Counts of positive and negative eigenvalues of `g`.
    pub signature: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HTensors {
    pub h1: TensorK,
    pub h2: TensorK,
    pub hs: TensorK,
    pub ha: TensorK,
    pub h_tilde: Mat,
    /// Operator on covector components with `h̃(θ, θ') = g(ĥθ, θ')`.
    pub h_hat: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coframe {
    /// Rows are the covectors `e*_1 … e*_n` in chart components.
    pub costar: Mat,
    /// Columns are the dual vectors `e_1 … e_n`.
    pub frame: Mat,
    /// Condition number of the row-normalized coframe matrix.
    pub cond: f64,
    /// For m = 2, the sign of `g⁻¹(e₂, e₂)`; `+1` otherwise.
    pub e2_norm_sign: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarietyCheck {
    pub proper: bool,
    pub witness: Option<Vec<f64>>,
    pub max_disc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZetaCheck {
    pub nonvanishing: bool,
    pub landed: usize,
    pub min_zeta: f64,
    pub failing: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub dims_ok: bool,
    pub chi_nonzero: bool,
    pub g_nondegenerate: bool,
    pub coframe_independent: bool,
    pub sigma_variety_proper: bool,
    pub zeta_nonvanishing: bool,
    pub m2_chi_pairing_nonzero: bool,
    pub general: bool,
    pub seed: u64,
    pub diagnostics: BTreeMap<String, f64>,
}

/// Trace invariants keyed by canonical word, in enumeration order.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantVector {
    pub entries: Vec<(TraceWord, f64)>,
}

impl InvariantVector {
    pub fn get(&self, label: &str) -> Option<f64> {
        self.entries.iter().find(|(w, _)| w.label() == label).map(|(_, v)| *v)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `χ_i = Tr σ_i`.
pub fn chi_vector(sigma: &SymbolPoint) -> Vec<f64> {
    sigma.components.iter().map(|c| c.trace()).collect()
}

pub fn gram_of(sigma: &SymbolPoint) -> Mat {
    let n = sigma.n();
    let mut g = Mat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = trace_of_product(&sigma.components[i], &sigma.components[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

pub fn signature(sym: &Mat) -> (usize, usize) {
    let eig = SymmetricEigen::new(sym.clone());
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cut = 1e-12 * top;
    let p = eig.eigenvalues.iter().filter(|&&v| v > cut).count();
    let q = eig.eigenvalues.iter().filter(|&&v| v < -cut).count();
    (p, q)
}

/// Threshold below which `det g` counts as zero.
pub fn det_threshold(g: &Mat, tol: &Tolerances) -> f64 {
    let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    tol.det_rel * scale.powi(g.nrows() as i32)
}

pub fn metric_g(sigma: &SymbolPoint, tol: &Tolerances) -> Result<MetricPoint> {
    let g = gram_of(sigma);
    let det = g.determinant();
    let thr = det_threshold(&g, tol);
    if !(det.abs() > thr) {
        return Err(Error::DegenerateMetric { det, tol: thr });
    }
    let g_inv = g
        .clone()
        .try_inverse()
        .ok_or(Error::DegenerateMetric { det, tol: thr })?;
    let signature = signature(&g);
    Ok(MetricPoint { g, g_inv, signature })
}

/// `χ̂ = g⁻¹ χ`, the covector with `g(χ̂, ·) = χ`.
pub fn chi_hat(sigma: &SymbolPoint, metric: &MetricPoint) -> Vec<f64> {
    let chi = nalgebra::DVector::from_vec(chi_vector(sigma));
    (&metric.g_inv * chi).iter().copied().collect()
}

pub fn h_tensors(sigma: &SymbolPoint, metric: &MetricPoint, chi_hat: &[f64]) -> HTensors {
    let n = sigma.n();
    let s = &sigma.components;
    let mut h1 = TensorK::zeros(3, n);
    let mut h2 = TensorK::zeros(3, n);
    for a in 0..n {
        for b in 0..n {
            let ab = &s[a] * &s[b];
            let ba = &s[b] * &s[a];
            for c in 0..n {
                h1.set(&[a, b, c], trace_of_product(&ab, &s[c]));
                h2.set(&[a, b, c], trace_of_product(&ba, &s[c]));
            }
        }
    }
    let mut hs = TensorK::zeros(3, n);
    let mut ha = TensorK::zeros(3, n);
    for k in 0..h1.data.len() {
        hs.data[k] = 0.5 * (h1.data[k] + h2.data[k]);
        ha.data[k] = 0.5 * (h1.data[k] - h2.data[k]);
    }
    let mut h_tilde = Mat::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            h_tilde[(a, b)] = (0..n).map(|c| hs.get(&[a, b, c]) * chi_hat[c]).sum();
        }
    }
    let h_hat = &metric.g_inv * &h_tilde;
    HTensors {
        h1,
        h2,
        hs,
        ha,
        h_tilde,
        h_hat,
    }
}

fn row_normalized_cond(c: &Mat) -> f64 {
    let mut r = c.clone();
    for i in 0..r.nrows() {
        let norm = r.row(i).norm();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        r.row_mut(i).scale_mut(1.0 / norm);
    }
    condition_number(&r)
}

/// Canonical coframe of a symbol with `χ ≠ 0` and nondegenerate `g`.
///
/// For m ≥ 3 the covectors are the chain `χ̂, ĥχ̂, ĥ²χ̂, …`. For m = 2 (and
/// n = 2) the frame is `e₁ = χ` and `e₂` the `g⁻¹`-unit vector orthogonal to
/// it, signed so that `det(e₁, e₂) > 0`.
pub fn invariant_coframe(sigma: &SymbolPoint, tol: &Tolerances) -> Result<Coframe> {
    let n = sigma.n();
    let chi = chi_vector(sigma);
    if chi.iter().all(|c| *c == 0.0) {
        return Err(Error::ChiVanishes);
    }
    let metric = metric_g(sigma, tol)?;
    if sigma.m() == 2 {
        if n != 2 {
            return Err(Error::NotGeneral(format!(
                "the m = 2 frame is defined only for n = 2 (got n = {n})"
            )));
        }
        let gi = &metric.g_inv;
        let u = [
            gi[(0, 0)] * chi[0] + gi[(0, 1)] * chi[1],
            gi[(1, 0)] * chi[0] + gi[(1, 1)] * chi[1],
        ];
        let pairing = chi[0] * u[0] + chi[1] * u[1];
        let w = [-u[1], u[0]];
        let ww = w[0] * (gi[(0, 0)] * w[0] + gi[(0, 1)] * w[1]) + w[1] * (gi[(1, 0)] * w[0] + gi[(1, 1)] * w[1]);
        if pairing == 0.0 || ww == 0.0 {
            return Err(Error::DependentCoframe { cond: f64::INFINITY });
        }
        let k = pairing.signum() / ww.abs().sqrt();
        let frame = Mat::from_row_slice(2, 2, &[chi[0], k * w[0], chi[1], k * w[1]]);
        let costar = frame
            .clone()
            .try_inverse()
            .ok_or(Error::DependentCoframe { cond: f64::INFINITY })?;
        let cond = row_normalized_cond(&costar);
        if !(cond <= tol.coframe_cond) {
            return Err(Error::DependentCoframe { cond });
        }
        return Ok(Coframe {
            costar,
            frame,
            cond,
            e2_norm_sign: ww.signum(),
        });
    }
    let ch = chi_hat(sigma, &metric);
    let h = h_tensors(sigma, &metric, &ch);
    let mut costar = Mat::zeros(n, n);
    let mut cur = nalgebra::DVector::from_vec(ch);
    for k in 0..n {
        costar.row_mut(k).copy_from(&cur.transpose());
        cur = &h.h_hat * cur;
    }
    let cond = row_normalized_cond(&costar);
    if !(cond <= tol.coframe_cond) {
        return Err(Error::DependentCoframe { cond });
    }
    let frame = costar.clone().try_inverse().ok_or(Error::DependentCoframe { cond })?;
    Ok(Coframe {
        costar,
        frame,
        cond,
        e2_norm_sign: 1.0,
    })
}

/// `Π_{i<j} |λ_i − λ_j|²` over the complex eigenvalues.
pub fn discriminant_abs(a: &Mat) -> f64 {
    let ev = a.clone().complex_eigenvalues();
    let mut d = 1.0;
    for i in 0..ev.len() {
        for j in i + 1..ev.len() {
            d *= (ev[i] - ev[j]).norm_sqr();
        }
    }
    d
}

fn normalized_disc(sigma: &SymbolPoint, theta: &[f64]) -> f64 {
    let m = sigma.m() as i32;
    let s = sigma.scale();
    if s == 0.0 {
        return 0.0;
    }
    let st = symbol_contract(sigma, theta).expect("covector length matches");
    discriminant_abs(&st) / s.powi(m * (m - 1))
}

/// Whether `σ_θ` has simple spectrum for some sampled unit covector.
pub fn sigma_variety_proper(sigma: &SymbolPoint, samples: usize, seed: u64, tol: &Tolerances) -> VarietyCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    let mut witness = None;
    for _ in 0..samples.max(1) {
        let theta = unit_vector(&mut rng, sigma.n());
        let d = normalized_disc(sigma, &theta);
        if d > best {
            best = d;
            if d > tol.disc {
                witness = Some(theta);
            }
        }
    }
    VarietyCheck {
        proper: witness.is_some(),
        witness,
        max_disc: best,
    }
}

/// Samples unit covectors off the discriminant variety and checks that the
/// bivector `ζ_θ(θ₁, θ₂) = h_a(θ₁, θ₂, θ)` is nonzero at each of them.
///
/// `h_a(θ₁, θ₂, θ₃) = ½ Tr([σ_θ₁, σ_θ₂] σ_θ₃)` is a 3-form, identically zero
/// when n = 2; there the test is on `[σ_θ, σ_θ']` for `θ' ⟂ θ`, the
/// non-commutativity that makes the stabilizer scalar.
pub fn zeta_nonvanishing(
    sigma: &SymbolPoint,
    ha: &TensorK,
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<ZetaCheck> {
    let n = sigma.n();
    let s3 = sigma.scale().powi(3);
    // offset the stream so the draws differ from the variety check
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut landed = 0;
    let mut min_zeta = f64::INFINITY;
    let mut failing = Vec::new();
    for _ in 0..samples {
        let theta = unit_vector(&mut rng, n);
        if normalized_disc(sigma, &theta) <= tol.disc {
            continue;
        }
        landed += 1;
        let mut zmax = 0.0f64;
        if n == 2 {
            // h_a is totally antisymmetric and so vanishes for n = 2; test the
            // commutator [σ_θ, σ_θ'] with θ' ⟂ θ instead.
            let a = symbol_contract(sigma, &theta).expect("covector length matches");
            let b = symbol_contract(sigma, &[-theta[1], theta[0]]).expect("covector length matches");
            zmax = commutator(&a, &b).abs().max();
        } else {
            for i in 0..n {
                for j in 0..n {
                    let z: f64 = (0..n).map(|k| ha.get(&[i, j, k]) * theta[k]).sum();
                    zmax = zmax.max(z.abs());
                }
            }
        }
        let z = if s3 > 0.0 { zmax / s3 } else { 0.0 };
        min_zeta = min_zeta.min(z);
        if z <= tol.zeta {
            failing.push(theta);
        }
    }
    if landed == 0 {
        return Err(Error::Precondition(
            "no sampled covector lies off the discriminant variety".into(),
        ));
    }
    if landed * 2 < samples {
        return Err(Error::InsufficientSamples {
            landed,
            requested: samples,
        });
    }
    Ok(ZetaCheck {
        nonvanishing: failing.is_empty(),
        landed,
        min_zeta,
        failing,
    })
}

/// Runs every general-position test and reports each verdict separately.
pub fn general_position(sigma: &SymbolPoint, tol: &Tolerances, seed: u64) -> RegularityReport {
    let n = sigma.n();
    let m = sigma.m();
    let mut diag = BTreeMap::new();
    let dims_ok = n >= 2 && m >= 2 && n <= m * m && (m != 2 || n == 2);
    let scale = sigma.scale();
    let chi = chi_vector(sigma);
    let chi_norm = chi.iter().map(|c| c * c).sum::<f64>().sqrt();
    diag.insert("chi_norm".into(), chi_norm);
    let chi_nonzero = chi_norm > 1e-12 * scale * m as f64;

    let metric = metric_g(sigma, tol);
    let g = gram_of(sigma);
    diag.insert("det_g".into(), g.determinant());
    let g_nondegenerate = metric.is_ok();

    let mut m2_pairing = false;
    let mut coframe_ok = false;
    if let Ok(metric) = &metric {
        let ch = chi_hat(sigma, metric);
        let pairing: f64 = ch.iter().zip(&chi).map(|(a, b)| a * b).sum();
        diag.insert("chi_hat_pairing".into(), pairing);
        let pscale = chi_norm * chi_norm * metric.g_inv.norm();
        m2_pairing = pscale > 0.0 && pairing.abs() > 1e-12 * pscale;
        if chi_nonzero && dims_ok {
            match invariant_coframe(sigma, tol) {
                Ok(cf) => {
                    coframe_ok = true;
                    diag.insert("coframe_cond".into(), cf.cond);
                    diag.insert("e2_norm_sign".into(), cf.e2_norm_sign);
                }
                Err(Error::DependentCoframe { cond }) => {
                    diag.insert("coframe_cond".into(), cond);
                }
                Err(_) => {}
            }
        }
    }

    let variety = sigma_variety_proper(sigma, tol.samples, seed, tol);
    diag.insert("max_discriminant".into(), variety.max_disc);
    let mut zeta_ok = false;
    if variety.proper {
        let h1 = h_tensors_plain(sigma);
        if let Ok(z) = zeta_nonvanishing(sigma, &h1, tol.samples, seed, tol) {
            diag.insert("min_zeta".into(), z.min_zeta);
            zeta_ok = z.nonvanishing;
        }
    }

    let general = dims_ok
        && chi_nonzero
        && g_nondegenerate
        && if m == 2 {
            m2_pairing && coframe_ok && variety.proper
        } else {
            coframe_ok && variety.proper && zeta_ok
        };
    RegularityReport {
        dims_ok,
        chi_nonzero,
        g_nondegenerate,
        coframe_independent: coframe_ok,
        sigma_variety_proper: variety.proper,
        zeta_nonvanishing: zeta_ok,
        m2_chi_pairing_nonzero: m2_pairing,
        general,
        seed,
        diagnostics: diag,
    }
}

/// `h_a` without needing a metric.
fn h_tensors_plain(sigma: &SymbolPoint) -> TensorK {
    let n = sigma.n();
    let s = &sigma.components;
    let mut ha = TensorK::zeros(3, n);
    for a in 0..n {
        for b in 0..n {
            let comm = commutator(&s[a], &s[b]);
            for c in 0..n {
                ha.set(&[a, b, c], 0.5 * trace_of_product(&comm, &s[c]));
            }
        }
    }
    ha
}

/// Components `σ̃_i = σ_{e*_i}` in the invariant frame.
pub fn frame_decompose(sigma: &SymbolPoint, cf: &Coframe) -> SymbolPoint {
    let n = sigma.n();
    let comps = (0..n)
        .map(|i| {
            let row: Vec<f64> = cf.costar.row(i).iter().copied().collect();
            symbol_contract(sigma, &row).expect("coframe matches symbol dimension")
        })
        .collect();
    SymbolPoint { components: comps }
}

/// Candidate basic invariants of the symbol as trace words in the frame
/// components.
pub fn basic_invariant_candidates(n: usize, m: usize) -> Vec<TraceWord> {
    let mut out = Vec::new();
    let pow = |l: u8, e: usize| std::iter::repeat_n(l, e);
    for k in 1..=n as u8 {
        for i in 1..=m {
            out.push(TraceWord::new(pow(k, i).collect()));
        }
    }
    let pair_targets: Vec<u8> = if n == 2 { vec![2] } else { (2..=n as u8).collect() };
    for &k in &pair_targets {
        for i in 1..m {
            for j in 1..m {
                out.push(TraceWord::new(pow(1, i).chain(pow(k, j)).collect()));
            }
        }
    }
    for k in 3..=n as u8 {
        for j in 1..m {
            out.push(TraceWord::new([1, 2].into_iter().chain(pow(k, j)).collect()));
        }
    }
    dedup_keep_first(out)
}

/// Candidate invariants involving the subsymbol: `Tr σ₀ⁱ`, `Tr(σ₀ⁱ σ̃_kʲ)` and
/// `Tr(σ₀ σ̃_k σ̃_l)`. `Tr(σ₀ σ̃_k)` is omitted because it vanishes for the
/// associated connection.
pub fn sigma0_candidates(n: usize, m: usize) -> Vec<TraceWord> {
    let mut out = Vec::new();
    let pow = |l: u8, e: usize| std::iter::repeat_n(l, e);
    for i in 1..=m {
        out.push(TraceWord::new(pow(0, i).collect()));
    }
    for k in 1..=n as u8 {
        for i in 1..m {
            for j in 1..m {
                if i == 1 && j == 1 {
                    continue;
                }
                out.push(TraceWord::new(pow(0, i).chain(pow(k, j)).collect()));
            }
        }
    }
    for k in 1..=n as u8 {
        for l in k + 1..=n as u8 {
            out.push(TraceWord::new(vec![0, k, l]));
        }
    }
    dedup_keep_first(out)
}

fn dedup_keep_first(words: Vec<TraceWord>) -> Vec<TraceWord> {
    let mut seen = std::collections::HashSet::new();
    words.into_iter().filter(|w| seen.insert(w.clone())).collect()
}

/// Default word-length bound `2^m − 1`.
pub fn default_max_len(m: usize) -> usize {
    (1usize << m) - 1
}

/// Every trace word up to `max_len` in `{σ₀?, σ̃₁ … σ̃ₙ}`.
pub fn invariant_vector(frame: &SymbolPoint, sigma0: Option<&Mat>, max_len: usize) -> InvariantVector {
    let n = frame.n();
    let m = frame.m();
    let mut operands = Vec::with_capacity(n + 1);
    operands.push(sigma0.cloned().unwrap_or_else(|| Mat::zeros(m, m)));
    operands.extend(frame.components.iter().cloned());
    let first = if sigma0.is_some() { 0 } else { 1 };
    let alphabet: Vec<u8> = (first..=n as u8).collect();
    let entries = enumerate_trace_words(&alphabet, max_len)
        .into_iter()
        .map(|w| {
            let v = trace_word_eval(&operands, &w).expect("letters within operand range");
            (w, v)
        })
        .collect();
    InvariantVector { entries }
}

/// `ν = (n − 1)(m² − n − 1)`.
pub fn orbit_codimension(n: usize, m: usize) -> i64 {
    let (n, m) = (n as i64, m as i64);
    (n - 1) * (m * m - n - 1)
}

/// Matrix of the linearized `gl(E) ⊕ gl(T)` action `(A, B) ↦ ([A, σ_i] + Σ_j B_ij σ_j)_i`.
pub fn action_matrix(sigma: &SymbolPoint) -> Mat {
    let n = sigma.n();
    let m = sigma.m();
    let mut out = Mat::zeros(n * m * m, m * m + n * n);
    let mut col = 0;
    for a in 0..m {
        for b in 0..m {
            let mut e = Mat::zeros(m, m);
            e[(a, b)] = 1.0;
            for i in 0..n {
                let c = commutator(&e, &sigma.components[i]);
                for (r, v) in c.iter().enumerate() {
                    out[(i * m * m + r, col)] = *v;
                }
            }
            col += 1;
        }
    }
    for i in 0..n {
        for j in 0..n {
            for (r, v) in sigma.components[j].iter().enumerate() {
                out[(i * m * m + r, col)] = *v;
            }
            col += 1;
        }
    }
    out
}

/// Returns `(ν, n m² − rank)` where the rank is that of [`action_matrix`].
pub fn verify_codimension(sigma: &SymbolPoint) -> (i64, i64) {
    let n = sigma.n();
    let m = sigma.m();
    let rank = numeric_rank(&action_matrix(sigma), 1e-9);
    (orbit_codimension(n, m), (n * m * m) as i64 - rank as i64)
}

/// Smallest singular value, relative to the largest, of the map
/// `α ↦ ([α, σ_i])_i` restricted to traceless `α`.
pub fn commutant_gap(sigma: &SymbolPoint) -> f64 {
    let n = sigma.n();
    let m = sigma.m();
    let basis = sl_basis(m);
    let mut a = Mat::zeros(n * m * m, basis.len());
    for (col, b) in basis.iter().enumerate() {
        for i in 0..n {
            let c = commutator(b, &sigma.components[i]);
            for (r, v) in c.iter().enumerate() {
                a[(i * m * m + r, col)] = *v;
            }
        }
    }
    let sv = singular_values(&a);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
        _ => 0.0,
    }
}
