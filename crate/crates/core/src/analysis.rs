//! The full pointwise pipeline on 1-jets: invariant coframe, frame
//! components of the symbol, associated connection, curvature, and the
//! scalar invariants with their differentials.

use crate::connection::{
    associated_from_jets, chern_coefficients, curvature_chern, AssociatedConnection, CurvatureChern, SymbolJets,
};
use crate::error::{Error, Result};
use crate::field::OperatorSpec;
use crate::kernel::words::trace_word_eval_jet;
use crate::kernel::{Jet, Mat, SymbolPoint, TraceWord};
use crate::symbol::{invariant_coframe, Coframe};
use crate::tolerances::Tolerances;

/// Rows of the invariant coframe as a 1-jet, matching [`invariant_coframe`].
pub fn coframe_jet(sj: &SymbolJets) -> Result<Jet<Mat>> {
    let n = sj.n();
    let dim = n;
    let s1 = sj.sigma1();
    let metric = sj.metric.truncate();
    let chi_entries: Vec<Jet<f64>> = s1.iter().map(Jet::trace).collect();
    let chi = Jet::from_entries(n, 1, &chi_entries);
    let u = metric.mul(&chi);
    if sj.m() == 2 {
        if n != 2 {
            return Err(Error::NotGeneral(format!(
                "the m = 2 frame is defined only for n = 2 (got n = {n})"
            )));
        }
        let pairing = chi.transpose().mul(&u).entry(0, 0);
        let w = Jet::from_entries(2, 1, &[u.entry(1, 0).neg(), u.entry(0, 0)]);
        let mut ww = w.transpose().mul(&metric).mul(&w).entry(0, 0);
        if pairing.value == 0.0 || ww.value == 0.0 {
            return Err(Error::DependentCoframe { cond: f64::INFINITY });
        }
        if ww.value < 0.0 {
            ww = ww.neg();
        }
        let k = ww.sqrt()?.recip()?.scale(pairing.value.signum());
        let e2 = k.times(&w);
        let frame = Jet::from_entries(
            2,
            2,
            &[chi.entry(0, 0), e2.entry(0, 0), chi.entry(1, 0), e2.entry(1, 0)],
        );
        return frame.matinv().map_err(|e| match e {
            Error::Singular { cond } => Error::DependentCoframe { cond },
            other => other,
        });
    }
    // ĥ = G h̃ with h̃_ab = Σ_c hs_abc χ̂_c
    let mut ht = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            let sym = s1[a].mul(&s1[b]).add(&s1[b].mul(&s1[a])).scale(0.5);
            let mut acc = Jet::constant(0.0, dim, 1);
            for c in 0..n {
                acc = acc.add(&sym.trace_product(&s1[c]).mul(&u.entry(c, 0)));
            }
            ht.push(acc);
        }
    }
    let h_hat = metric.mul(&Jet::from_entries(n, n, &ht));
    let mut rows = Vec::with_capacity(n);
    let mut cur = u;
    for _ in 0..n {
        rows.push(cur.clone());
        cur = h_hat.mul(&cur);
    }
    let entries: Vec<Jet<f64>> = (0..n)
        .flat_map(|k| (0..n).map(move |i| (k, i)))
        .map(|(k, i)| rows[k].entry(i, 0))
        .collect();
    Ok(Jet::from_entries(n, n, &entries))
}

/// Everything the model layer needs at one chart point.
#[derive(Debug, Clone)]
pub struct PointAnalysis {
    pub x: Vec<f64>,
    /// The point lies outside the operator's chart; values are still valid
    /// polynomial evaluations.
    pub outside_chart: bool,
    pub coframe: Coframe,
    pub costar: Jet<Mat>,
    /// `σ̃_i = Σ_k e*_i(∂_k) σ_k` as 1-jets.
    pub frame_sigma: Vec<Jet<Mat>>,
    pub connection: AssociatedConnection,
    pub curvature: CurvatureChern,
    /// `ch(e_a, e_b)`.
    pub ch_frame: Mat,
}

impl PointAnalysis {
    /// Word operands: slot 0 is `σ₀`, slot `i` is `σ̃_i`.
    pub fn operands(&self) -> Vec<Jet<Mat>> {
        std::iter::once(self.connection.sigma0.clone())
            .chain(self.frame_sigma.iter().cloned())
            .collect()
    }

    pub fn frame_symbol(&self) -> SymbolPoint {
        SymbolPoint {
            components: self.frame_sigma.iter().map(|s| s.value.clone()).collect(),
        }
    }

    pub fn invariants(&self, words: &[TraceWord]) -> Result<Vec<Jet<f64>>> {
        let ops = self.operands();
        words.iter().map(|w| trace_word_eval_jet(&ops, w)).collect()
    }
}

pub fn analyze_point(op: &OperatorSpec, x: &[f64], tol: &Tolerances) -> Result<PointAnalysis> {
    let sj = SymbolJets::at(op, x, tol)?;
    let coframe = invariant_coframe(&sj.symbol(), tol)?;
    let costar = coframe_jet(&sj)?;
    let s1 = sj.sigma1();
    let n = op.n;
    let frame_sigma = (0..n)
        .map(|i| {
            let mut acc = Jet::constant(Mat::zeros(op.m, op.m), n, 1);
            for (k, sk) in s1.iter().enumerate() {
                acc = acc.add(&costar.entry(i, k).times(sk));
            }
            acc
        })
        .collect();
    let connection = associated_from_jets(&sj, &op.b_jet(x)?, tol)?;
    let curvature = curvature_chern(&connection.omega);
    let ch_frame = chern_coefficients(&curvature.ch, &coframe);
    Ok(PointAnalysis {
        x: x.to_vec(),
        outside_chart: !op.chart.contains(x),
        coframe,
        costar,
        frame_sigma,
        connection,
        curvature,
        ch_frame,
    })
}
