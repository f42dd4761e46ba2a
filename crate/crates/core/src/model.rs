//! Natural coordinates, models and the equivalence test.
//!
//! An operator is regular where n of its scalar invariants have independent
//! differentials; those invariants are then coordinates `a`, and every other
//! invariant, together with the Chern form written in the `a` coordinates, is
//! a function of them. The table of those functions over a chart is the
//! model. Two operators are compared by matching their tables at equal `a`.

use serde::{Deserialize, Serialize};

use crate::analysis::{analyze_point, PointAnalysis};
use crate::error::{Error, Result};
use crate::field::{apply_gauge, Chart, GaugeTransform, OperatorSpec};
use crate::kernel::{singular_values, Jet, Mat, TraceWord};
use crate::par::{par_map, Exec};
use crate::symbol::{basic_invariant_candidates, general_position, sigma0_candidates, RegularityReport};
use crate::tolerances::Tolerances;

pub const SCHEMA: &str = "opgeom-model/1";

/// Relative score band treated as a tie during coordinate selection.
pub const SELECTION_TIE: f64 = 0.05;

/// Every invariant the selection may draw from, symbol words first.
pub fn candidate_words(n: usize, m: usize) -> Vec<TraceWord> {
    let mut w = basic_invariant_candidates(n, m);
    w.extend(sigma0_candidates(n, m));
    w
}

/// Unit gradient, or zero if the gradient is negligible against the value.
fn unit_row(j: &Jet<f64>) -> Vec<f64> {
    let norm = j.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm <= 1e-8 * j.value.abs().max(1.0) {
        vec![0.0; j.grad.len()]
    } else {
        j.grad.iter().map(|g| g / norm).collect()
    }
}

fn min_singular(rows: &[&[f64]], n: usize) -> f64 {
    let m = Mat::from_fn(rows.len(), n, |r, c| rows[r][c]);
    singular_values(&m).last().copied().unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorRegularity {
    pub x: Vec<f64>,
    pub symbol: RegularityReport,
    pub pipeline_error: Option<String>,
    /// Numeric rank of the unit differentials of all candidate invariants.
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub regular: bool,
}

pub fn operator_regularity(op: &OperatorSpec, x: &[f64], tol: &Tolerances, seed: u64) -> Result<OperatorRegularity> {
    let sigma = op.symbol_at(x)?;
    let symbol = general_position(&sigma, tol, seed);
    let mut out = OperatorRegularity {
        x: x.to_vec(),
        symbol,
        pipeline_error: None,
        rank: 0,
        singular_values: Vec::new(),
        regular: false,
    };
    if !out.symbol.general {
        return Ok(out);
    }
    let jets = match analyze_point(op, x, tol).and_then(|pa| pa.invariants(&candidate_words(op.n, op.m))) {
        Ok(j) => j,
        Err(e) => {
            out.pipeline_error = Some(e.to_string());
            return Ok(out);
        }
    };
    let rows: Vec<Vec<f64>> = jets.iter().map(unit_row).collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let sv = singular_values(&Mat::from_fn(refs.len(), op.n, |r, c| refs[r][c]));
    out.rank = sv.iter().filter(|s| **s > tol.rank).count();
    out.singular_values = sv;
    out.regular = out.rank >= op.n;
    Ok(out)
}

/// Coordinate keys `a₁ … aₙ` and the remaining tracked invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantSelection {
    pub coordinate: Vec<TraceWord>,
    pub dependent: Vec<TraceWord>,
}

impl InvariantSelection {
    /// Coordinates as given, every other candidate as dependent.
    pub fn with_coordinates(coordinate: Vec<TraceWord>, n: usize, m: usize) -> Self {
        let dependent = candidate_words(n, m)
            .into_iter()
            .filter(|w| !coordinate.contains(w))
            .collect();
        Self { coordinate, dependent }
    }

    pub fn n(&self) -> usize {
        self.coordinate.len()
    }

    pub fn coordinate_labels(&self) -> Vec<String> {
        self.coordinate.iter().map(TraceWord::label).collect()
    }

    pub fn dependent_labels(&self) -> Vec<String> {
        self.dependent.iter().map(TraceWord::label).collect()
    }

    /// Labels of the entries of `F`: dependent invariants, then `ch(e_i, e_j)`.
    pub fn f_labels(&self) -> Vec<String> {
        let mut out = self.dependent_labels();
        out.extend(upper_pairs(self.n()).map(|(i, j)| format!("ch(e{},e{})", i + 1, j + 1)));
        out
    }

    /// Labels of the Chern entries in invariant coordinates.
    pub fn ch_labels(&self) -> Vec<String> {
        upper_pairs(self.n())
            .map(|(i, j)| format!("ch(a{},a{})", i + 1, j + 1))
            .collect()
    }
}

fn upper_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Per-point data used by selection: unit gradients of every candidate.
fn candidate_rows(
    op: &OperatorSpec,
    x: &[f64],
    words: &[TraceWord],
    tol: &Tolerances,
    seed: u64,
) -> Option<Vec<Vec<f64>>> {
    let sigma = op.symbol_at(x).ok()?;
    if !general_position(&sigma, tol, seed).general {
        return None;
    }
    let jets = analyze_point(op, x, tol).ok()?.invariants(words).ok()?;
    Some(jets.iter().map(unit_row).collect())
}

/// Greedy choice of `n` coordinate invariants: each step adds the candidate
/// that maximizes the mean over grid points of the smallest singular value
/// of the selected unit differentials. Scores within `SELECTION_TIE` of the
/// best count as ties and go to the earliest candidate, which keeps the
/// choice stable when the grid is refined.
pub fn select_natural_coordinates(
    op: &OperatorSpec,
    grid: usize,
    tol: &Tolerances,
    seed: u64,
    exec: Exec,
) -> Result<InvariantSelection> {
    let n = op.n;
    let words = candidate_words(n, op.m);
    let points = op.chart.grid(grid);
    let per_point = par_map(exec, &points, |x| candidate_rows(op, x, &words, tol, seed));
    let valid: Vec<&Vec<Vec<f64>>> = per_point.iter().flatten().collect();
    if (valid.len() as f64) < tol.regular_fraction * points.len() as f64 || valid.is_empty() {
        return Err(Error::TooFewSamples {
            regular: valid.len(),
            total: points.len(),
        });
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    for _ in 0..n {
        let scores: Vec<Option<f64>> = (0..words.len())
            .map(|c| {
                if chosen.contains(&c) {
                    return None;
                }
                let total: f64 = valid
                    .iter()
                    .map(|rows| {
                        let sel: Vec<&[f64]> = chosen
                            .iter()
                            .chain(std::iter::once(&c))
                            .map(|&k| rows[k].as_slice())
                            .collect();
                        min_singular(&sel, n)
                    })
                    .sum();
                Some(total / valid.len() as f64)
            })
            .collect();
        let top = scores.iter().flatten().copied().fold(0.0, f64::max);
        let c = scores
            .iter()
            .position(|s| s.is_some_and(|s| s >= (1.0 - SELECTION_TIE) * top))
            .expect("more candidates than coordinates");
        chosen.push(c);
    }
    let ok = valid
        .iter()
        .filter(|rows| {
            let sel: Vec<&[f64]> = chosen.iter().map(|&k| rows[k].as_slice()).collect();
            min_singular(&sel, n) > tol.rank
        })
        .count();
    let coverage = ok as f64 / points.len() as f64;
    if coverage < tol.selection_fraction {
        return Err(Error::RankDeficient { n, coverage });
    }
    Ok(InvariantSelection::with_coordinates(
        chosen.iter().map(|&k| words[k].clone()).collect(),
        n,
        op.m,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub a: Vec<f64>,
    #[serde(rename = "F")]
    pub f: Vec<f64>,
    pub ch: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejected {
    pub x: Vec<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hull {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub n: usize,
    pub m: usize,
    pub chart: Chart,
    pub grid: usize,
    pub seed: u64,
    pub selection: InvariantSelection,
    pub tolerances: Tolerances,
    pub samples: Vec<Sample>,
    pub rejected: Vec<Rejected>,
    pub hull: Hull,
}

fn sample_at(pa: &PointAnalysis, sel: &InvariantSelection, tol: &Tolerances) -> std::result::Result<Sample, String> {
    let n = sel.n();
    let coord = pa.invariants(&sel.coordinate).map_err(|e| e.to_string())?;
    let dep = pa.invariants(&sel.dependent).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<f64>> = coord.iter().map(unit_row).collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let smin = min_singular(&refs, n);
    if !(smin > tol.rank) {
        return Err(format!(
            "coordinate differentials dependent (min singular value {smin:e})"
        ));
    }
    let jac = Mat::from_fn(n, n, |r, c| coord[r].grad[c]);
    let jinv = jac.try_inverse().ok_or("coordinate Jacobian singular")?;
    // ch = Σ ch_ij dxⁱ∧dxʲ with dx = J⁻¹ da
    let ch_a = jinv.transpose() * &pa.curvature.ch * &jinv;
    let mut f: Vec<f64> = dep.iter().map(|j| j.value).collect();
    f.extend(upper_pairs(n).map(|(i, j)| pa.ch_frame[(i, j)]));
    let sample = Sample {
        x: pa.x.clone(),
        a: coord.iter().map(|j| j.value).collect(),
        f,
        ch: upper_pairs(n).map(|(i, j)| ch_a[(i, j)]).collect(),
    };
    let finite = sample
        .a
        .iter()
        .chain(&sample.f)
        .chain(&sample.ch)
        .all(|v| v.is_finite());
    if finite {
        Ok(sample)
    } else {
        Err("non-finite invariant".into())
    }
}

/// Runs the full pipeline at each grid point and tabulates `(a, F, ch)`.
pub fn build_model(
    op: &OperatorSpec,
    grid: usize,
    selection: &InvariantSelection,
    tol: &Tolerances,
    seed: u64,
    exec: Exec,
) -> Result<Model> {
    if selection.n() != op.n {
        return Err(Error::DimensionMismatch {
            expected: op.n,
            got: selection.n(),
        });
    }
    let points = op.chart.grid(grid);
    let results = par_map(exec, &points, |x| -> std::result::Result<Sample, String> {
        let sigma = op.symbol_at(x).map_err(|e| e.to_string())?;
        if !general_position(&sigma, tol, seed).general {
            return Err("symbol not in general position".into());
        }
        let pa = analyze_point(op, x, tol).map_err(|e| e.to_string())?;
        sample_at(&pa, selection, tol)
    });
    let mut samples = Vec::new();
    let mut rejected = Vec::new();
    for (x, r) in points.iter().zip(results) {
        match r {
            Ok(s) => samples.push(s),
            Err(reason) => rejected.push(Rejected { x: x.clone(), reason }),
        }
    }
    if samples.is_empty() || (samples.len() as f64) < tol.regular_fraction * points.len() as f64 {
        return Err(Error::TooFewSamples {
            regular: samples.len(),
            total: points.len(),
        });
    }
    let n = op.n;
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for s in &samples {
        for k in 0..n {
            lo[k] = lo[k].min(s.a[k]);
            hi[k] = hi[k].max(s.a[k]);
        }
    }
    Ok(Model {
        n,
        m: op.m,
        chart: op.chart.clone(),
        grid,
        seed,
        selection: selection.clone(),
        tolerances: tol.clone(),
        samples,
        rejected,
        hull: Hull { lo, hi },
    })
}

impl Model {
    /// The same model read with `e₂ ↦ −e₂` (m = 2 only): every word changes
    /// sign with the parity of its `σ̃₂` count, `ch(e₁,e₂)` flips, and Chern
    /// entries in `a` coordinates pick up the signs of both coordinates.
    pub fn flip_e2(&self) -> Model {
        let parity = |w: &TraceWord| if w.count(2) % 2 == 1 { -1.0 } else { 1.0 };
        let sa: Vec<f64> = self.selection.coordinate.iter().map(parity).collect();
        let mut sf: Vec<f64> = self.selection.dependent.iter().map(parity).collect();
        sf.extend(upper_pairs(self.n).map(|(i, j)| if i == 1 || j == 1 { -1.0 } else { 1.0 }));
        let sc: Vec<f64> = upper_pairs(self.n).map(|(i, j)| sa[i] * sa[j]).collect();
        let mut out = self.clone();
        for s in &mut out.samples {
            s.a.iter_mut().zip(&sa).for_each(|(v, k)| *v *= k);
            s.f.iter_mut().zip(&sf).for_each(|(v, k)| *v *= k);
            s.ch.iter_mut().zip(&sc).for_each(|(v, k)| *v *= k);
        }
        for k in 0..self.n {
            if sa[k] < 0.0 {
                out.hull.lo[k] = -self.hull.hi[k];
                out.hull.hi[k] = -self.hull.lo[k];
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyOffense {
    pub key: String,
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceVerdict {
    pub equivalent: bool,
    pub distance: f64,
    pub coverage: f64,
    pub matched: usize,
    pub total: usize,
    /// The second model was read with the opposite `e₂` sign.
    pub flipped: bool,
    pub reason: Option<String>,
    pub details: Vec<KeyOffense>,
}

fn compare_oriented(m1: &Model, m2: &Model, tol: &Tolerances) -> Result<EquivalenceVerdict> {
    let n = m1.n;
    let a_scale: Vec<f64> = (0..n)
        .map(|k| m1.samples.iter().fold(1.0f64, |acc, s| acc.max(s.a[k].abs())))
        .collect();
    let slack: Vec<f64> = a_scale.iter().map(|s| tol.match_gap * s).collect();
    let overlap =
        (0..n).all(|k| m1.hull.lo[k] <= m2.hull.hi[k] + slack[k] && m2.hull.lo[k] <= m1.hull.hi[k] + slack[k]);
    if !overlap {
        return Err(Error::EmptyOverlap);
    }
    let nf = m1.samples[0].f.len();
    let nc = m1.samples[0].ch.len();
    let key_scale: Vec<f64> = (0..nf + nc)
        .map(|k| {
            m1.samples.iter().fold(1.0f64, |acc, s| {
                let v = if k < nf { s.f[k] } else { s.ch[k - nf] };
                acc.max(v.abs())
            })
        })
        .collect();
    let disc = |s1: &Sample, s2: &Sample, k: usize| {
        let (u, v) = if k < nf {
            (s1.f[k], s2.f[k])
        } else {
            (s1.ch[k - nf], s2.ch[k - nf])
        };
        (u - v).abs() / key_scale[k]
    };
    let mut worst = vec![0.0f64; nf + nc];
    let mut matched = 0;
    let mut fallback = f64::INFINITY;
    for s1 in &m1.samples {
        let inside = (0..n).all(|k| s1.a[k] >= m2.hull.lo[k] - slack[k] && s1.a[k] <= m2.hull.hi[k] + slack[k]);
        if !inside {
            continue;
        }
        let gap = |s2: &Sample| {
            (0..n)
                .map(|k| (s1.a[k] - s2.a[k]).abs() / a_scale[k])
                .fold(0.0, f64::max)
        };
        let Some((g, s2)) = m2
            .samples
            .iter()
            .map(|s2| (gap(s2), s2))
            .min_by(|x, y| x.0.total_cmp(&y.0))
        else {
            continue;
        };
        let d = (0..nf + nc).map(|k| disc(s1, s2, k)).fold(0.0, f64::max);
        if g <= tol.match_gap {
            matched += 1;
            for (k, w) in worst.iter_mut().enumerate() {
                *w = w.max(disc(s1, s2, k));
            }
        } else {
            fallback = fallback.min(d.max(g));
        }
    }
    let total = m1.samples.len();
    let coverage = matched as f64 / total as f64;
    let distance = if matched > 0 {
        worst.iter().copied().fold(0.0, f64::max)
    } else {
        fallback
    };
    let labels: Vec<String> = m1
        .selection
        .f_labels()
        .into_iter()
        .chain(m1.selection.ch_labels())
        .collect();
    let mut details: Vec<KeyOffense> = labels
        .into_iter()
        .zip(&worst)
        .filter(|(_, w)| **w > tol.equiv)
        .map(|(key, w)| KeyOffense { key, worst: *w })
        .collect();
    details.sort_by(|x, y| y.worst.total_cmp(&x.worst));
    let equivalent = matched > 0 && distance <= tol.equiv && coverage >= tol.coverage;
    let reason = if equivalent {
        None
    } else if coverage < tol.coverage {
        Some(format!("only {matched} of {total} samples matched"))
    } else {
        Some(format!("distance {distance:e} exceeds {:e}", tol.equiv))
    };
    Ok(EquivalenceVerdict {
        equivalent,
        distance,
        coverage,
        matched,
        total,
        flipped: false,
        reason,
        details,
    })
}

/// Matches every sample of `m1` inside `m2`'s hull to its nearest neighbour
/// in `a` and compares `F` and `ch` there. Models with different keys are
/// not equivalent; models whose hulls miss each other give `EmptyOverlap`.
pub fn compare_models(m1: &Model, m2: &Model, tol: &Tolerances) -> Result<EquivalenceVerdict> {
    let mismatch = |reason: String| EquivalenceVerdict {
        equivalent: false,
        distance: f64::INFINITY,
        coverage: 0.0,
        matched: 0,
        total: m1.samples.len(),
        flipped: false,
        reason: Some(reason),
        details: Vec::new(),
    };
    if m1.n != m2.n || m1.m != m2.m {
        return Ok(mismatch(format!(
            "dimension mismatch: ({}, {}) vs ({}, {})",
            m1.n, m1.m, m2.n, m2.m
        )));
    }
    if m1.selection != m2.selection {
        return Ok(mismatch("key-mismatch".into()));
    }
    if m1.samples.is_empty() || m2.samples.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    let direct = compare_oriented(m1, m2, tol);
    if m1.m != 2 {
        return direct;
    }
    let flipped = compare_oriented(m1, &m2.flip_e2(), tol).map(|mut v| {
        v.flipped = true;
        v
    });
    match (direct, flipped) {
        (Ok(a), Ok(b)) => Ok(
            if b.equivalent && !a.equivalent || (a.equivalent == b.equivalent && b.distance < a.distance) {
                b
            } else {
                a
            },
        ),
        (Ok(a), Err(_)) => Ok(a),
        (Err(_), Ok(b)) => Ok(b),
        (Err(e), Err(_)) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtlasVerdict {
    pub equivalent: bool,
    pub inconclusive: bool,
    pub charts: Vec<Option<EquivalenceVerdict>>,
}

/// Chart-by-chart comparison of two ordered lists of models.
pub fn compare_atlases(a1: &[Model], a2: &[Model], tol: &Tolerances) -> Result<AtlasVerdict> {
    if a1.len() != a2.len() {
        return Err(Error::InvalidSpec(format!(
            "atlases have {} and {} charts",
            a1.len(),
            a2.len()
        )));
    }
    let mut charts = Vec::with_capacity(a1.len());
    for (m1, m2) in a1.iter().zip(a2) {
        charts.push(match compare_models(m1, m2, tol) {
            Ok(v) => Some(v),
            Err(Error::EmptyOverlap) => None,
            Err(e) => return Err(e),
        });
    }
    let inconclusive = charts.iter().any(Option::is_none);
    let equivalent = !inconclusive && charts.iter().flatten().all(|v| v.equivalent);
    Ok(AtlasVerdict {
        equivalent,
        inconclusive,
        charts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub points: usize,
    pub compared: usize,
    /// Points where either operator failed the pipeline.
    pub skipped: Vec<Vec<f64>>,
    pub frame_sigma: f64,
    pub omega: f64,
    pub sigma0: f64,
    pub invariants: f64,
    pub ch: f64,
}

impl AuditReport {
    pub fn worst_scalar(&self) -> f64 {
        self.invariants.max(self.ch)
    }
}

fn rel(a: &Mat, b: &Mat) -> f64 {
    (a - b).amax() / a.amax().max(b.amax()).max(1.0)
}

/// Compares the pipeline for `op` and `g · op` point by point: frame
/// components, connection and subsymbol transform by conjugation (plus
/// `P ∂P⁻¹` for the connection), scalar invariants and Chern coefficients
/// stay fixed. All residuals are relative to `max(1, |value|)`.
pub fn naturality_audit(
    op: &OperatorSpec,
    g: &GaugeTransform,
    grid: usize,
    tol: &Tolerances,
    exec: Exec,
) -> Result<AuditReport> {
    let op2 = apply_gauge(op, g)?;
    let words = candidate_words(op.n, op.m);
    let points = op.chart.grid(grid);
    let per = par_map(exec, &points, |x| -> Option<[f64; 5]> {
        let p1 = analyze_point(op, x, tol).ok()?;
        let p2 = analyze_point(&op2, x, tol).ok()?;
        let p = g.p.eval(x);
        let pi = g.p_inv.eval(x);
        let conj = |m: &Mat| &p * m * &pi;
        let fs = p1
            .frame_sigma
            .iter()
            .zip(&p2.frame_sigma)
            .map(|(a, b)| rel(&conj(&a.value), &b.value))
            .fold(0.0, f64::max);
        let om = (0..op.n)
            .map(|k| {
                let want = conj(&p1.connection.omega[k].value) + &p * g.p_inv.derivative(k).eval(x);
                rel(&want, &p2.connection.omega[k].value)
            })
            .fold(0.0, f64::max);
        let s0 = rel(&conj(&p1.connection.sigma0.value), &p2.connection.sigma0.value);
        let v1 = p1.invariants(&words).ok()?;
        let v2 = p2.invariants(&words).ok()?;
        let inv = v1
            .iter()
            .zip(&v2)
            .map(|(a, b)| (a.value - b.value).abs() / a.value.abs().max(b.value.abs()).max(1.0))
            .fold(0.0, f64::max);
        let ch = rel(&p1.curvature.ch, &p2.curvature.ch).max(rel(&p1.ch_frame, &p2.ch_frame));
        Some([fs, om, s0, inv, ch])
    });
    let mut rep = AuditReport {
        points: points.len(),
        compared: 0,
        skipped: Vec::new(),
        frame_sigma: 0.0,
        omega: 0.0,
        sigma0: 0.0,
        invariants: 0.0,
        ch: 0.0,
    };
    for (x, r) in points.iter().zip(per) {
        match r {
            Some([fs, om, s0, inv, ch]) => {
                rep.compared += 1;
                rep.frame_sigma = rep.frame_sigma.max(fs);
                rep.omega = rep.omega.max(om);
                rep.sigma0 = rep.sigma0.max(s0);
                rep.invariants = rep.invariants.max(inv);
                rep.ch = rep.ch.max(ch);
            }
            None => rep.skipped.push(x.clone()),
        }
    }
    Ok(rep)
}

/// Model file layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct KeyFile {
    label: String,
    word: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SelectionFile {
    coordinate_keys: Vec<KeyFile>,
    dependent_keys: Vec<KeyFile>,
    #[serde(rename = "F_labels")]
    f_labels: Vec<String>,
    ch_labels: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    schema: String,
    n: usize,
    m: usize,
    chart: Hull,
    grid: usize,
    seed: u64,
    selection: SelectionFile,
    tolerances: Tolerances,
    hull: Hull,
    samples: Vec<Sample>,
    rejected: Vec<Rejected>,
}

fn keys_to_file(words: &[TraceWord]) -> Vec<KeyFile> {
    words
        .iter()
        .map(|w| KeyFile {
            label: w.label(),
            word: w.letters().to_vec(),
        })
        .collect()
}

fn keys_from_file(keys: &[KeyFile], n: usize) -> Result<Vec<TraceWord>> {
    keys.iter()
        .map(|k| {
            if k.word.is_empty() || k.word.iter().any(|l| *l as usize > n) {
                return Err(Error::Parse(format!("invalid key word {:?}", k.word)));
            }
            let w = TraceWord::new(k.word.clone());
            if w.label() != k.label {
                return Err(Error::Parse(format!(
                    "key label {} does not match its word {}",
                    k.label,
                    w.label()
                )));
            }
            Ok(w)
        })
        .collect()
}

impl InvariantSelection {
    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string(&self.to_file())
    }

    fn to_file(&self) -> SelectionFile {
        SelectionFile {
            coordinate_keys: keys_to_file(&self.coordinate),
            dependent_keys: keys_to_file(&self.dependent),
            f_labels: self.f_labels(),
            ch_labels: self.ch_labels(),
        }
    }

    fn from_file(f: &SelectionFile, n: usize) -> Result<Self> {
        let sel = Self {
            coordinate: keys_from_file(&f.coordinate_keys, n)?,
            dependent: keys_from_file(&f.dependent_keys, n)?,
        };
        if sel.coordinate.len() != n {
            return Err(Error::Parse(format!(
                "expected {n} coordinate keys, got {}",
                sel.coordinate.len()
            )));
        }
        if sel.coordinate.iter().any(|w| sel.dependent.contains(w)) {
            return Err(Error::Parse("coordinate and dependent keys overlap".into()));
        }
        Ok(sel)
    }
}

impl Model {
    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string(&ModelFile {
            schema: SCHEMA.into(),
            n: self.n,
            m: self.m,
            chart: Hull {
                lo: self.chart.lo.clone(),
                hi: self.chart.hi.clone(),
            },
            grid: self.grid,
            seed: self.seed,
            selection: self.selection.to_file(),
            tolerances: self.tolerances.clone(),
            hull: self.hull.clone(),
            samples: self.samples.clone(),
            rejected: self.rejected.clone(),
        })
    }

    pub fn from_json(text: &str) -> Result<Model> {
        let f: ModelFile = serde_json::from_str(text)?;
        if f.schema != SCHEMA {
            return Err(Error::Parse(format!("unsupported model schema {:?}", f.schema)));
        }
        let selection = InvariantSelection::from_file(&f.selection, f.n)?;
        let nf = selection.dependent.len() + f.n * (f.n - 1) / 2;
        let nc = f.n * (f.n - 1) / 2;
        for s in &f.samples {
            if s.x.len() != f.n || s.a.len() != f.n || s.f.len() != nf || s.ch.len() != nc {
                return Err(Error::Parse("sample record has the wrong shape".into()));
            }
        }
        if f.hull.lo.len() != f.n || f.hull.hi.len() != f.n {
            return Err(Error::Parse("hull has the wrong dimension".into()));
        }
        Ok(Model {
            n: f.n,
            m: f.m,
            chart: Chart::new(f.chart.lo, f.chart.hi)?,
            grid: f.grid,
            seed: f.seed,
            selection,
            tolerances: f.tolerances,
            samples: f.samples,
            rejected: f.rejected,
            hull: f.hull,
        })
    }
}

/// Parses either a single model or a JSON array of models (an atlas).
pub fn parse_models(text: &str) -> Result<Vec<Model>> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    match v {
        serde_json::Value::Array(items) => items.iter().map(|i| Model::from_json(&i.to_string())).collect(),
        _ => Ok(vec![Model::from_json(text)?]),
    }
}

pub fn parse_selection(text: &str, n: usize) -> Result<InvariantSelection> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    // accept a model file or a bare selection block
    let block = v.get("selection").cloned().unwrap_or(v);
    let f: SelectionFile = serde_json::from_value(block)?;
    InvariantSelection::from_file(&f, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{apply_affine_diffeo, AffineDiffeo, PolyMatrixField, PolyScalarField};
    use crate::random::{random_matrix, random_near_identity};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn chart(n: usize) -> Chart {
        Chart::new(vec![-0.5; n], vec![0.5; n]).unwrap()
    }

    fn random_op<R: Rng>(rng: &mut R, n: usize, m: usize) -> OperatorSpec {
        let field = |rng: &mut R, lin: f64| {
            let base = random_matrix(rng, m, m);
            let entries = (0..m * m)
                .map(|k| {
                    let mut terms = vec![(vec![0; n], base[(k / m, k % m)])];
                    for i in 0..n {
                        let mut e = vec![0; n];
                        e[i] = 1;
                        terms.push((e, lin * rng.random_range(-1.0..1.0)));
                    }
                    PolyScalarField::from_terms(n, terms)
                })
                .collect();
            PolyMatrixField::from_entries(m, entries)
        };
        let a = (0..n).map(|_| field(rng, 0.2)).collect();
        let b = field(rng, 1.0);
        OperatorSpec::new(a, b, chart(n)).unwrap()
    }

    /// `A¹ = diag(1, 0)`, `A² = [[0,1],[1,0]]`, `B = [[0, x₁], [−x₁, x₂]]`.
    fn coordinate_example() -> OperatorSpec {
        let n = 2;
        let c = |v: f64| PolyScalarField::constant(n, v);
        let z = || PolyScalarField::zero(n);
        let x1 = PolyScalarField::var(n, 0);
        let x2 = PolyScalarField::var(n, 1);
        OperatorSpec::new(
            vec![
                PolyMatrixField::from_entries(2, vec![c(1.0), z(), z(), z()]),
                PolyMatrixField::from_entries(2, vec![z(), c(1.0), c(1.0), z()]),
            ],
            PolyMatrixField::from_entries(2, vec![z(), x1.clone(), x1.scale(-1.0), x2]),
            Chart::new(vec![0.1, 0.1], vec![1.0, 1.0]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn constant_op_is_not_regular() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let a: Vec<Mat> = (0..2).map(|_| random_matrix(&mut rng, 3, 3)).collect();
        let op = OperatorSpec::constant(&a, &random_matrix(&mut rng, 3, 3), chart(2)).unwrap();
        let r = operator_regularity(&op, &[0.0, 0.0], &tol(), 0).unwrap();
        assert!(r.symbol.general);
        assert_eq!(r.rank, 0);
        assert!(!r.regular);
        assert!(matches!(
            select_natural_coordinates(&op, 3, &tol(), 0, Exec::Sequential),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn diagonal_b_example_has_rank_one() {
        let n = 2;
        let c = |v: f64| PolyScalarField::constant(n, v);
        let z = || PolyScalarField::zero(n);
        let op = OperatorSpec::new(
            vec![
                PolyMatrixField::from_entries(2, vec![c(1.0), z(), z(), z()]),
                PolyMatrixField::from_entries(2, vec![z(), c(1.0), c(1.0), z()]),
            ],
            PolyMatrixField::from_entries(
                2,
                vec![PolyScalarField::var(n, 0), z(), z(), PolyScalarField::var(n, 1)],
            ),
            chart(2),
        )
        .unwrap();
        // σ₀ of the associated connection is diag(0, x₂): only x₂ is visible
        let r = operator_regularity(&op, &[0.2, 0.3], &tol(), 0).unwrap();
        assert!(r.symbol.general);
        assert_eq!(r.rank, 1);
        assert!(!r.regular);
    }

    #[test]
    fn non_general_symbol_is_not_regular() {
        let a = [Mat::identity(2, 2), Mat::identity(2, 2) * 2.0];
        let op = OperatorSpec::constant(&a, &Mat::zeros(2, 2), chart(2)).unwrap();
        let r = operator_regularity(&op, &[0.0, 0.0], &tol(), 0).unwrap();
        assert!(!r.symbol.general);
        assert!(!r.regular);
    }

    #[test]
    fn coordinate_example_selects_linear_invariants() {
        let op = coordinate_example();
        let r = operator_regularity(&op, &[0.4, 0.6], &tol(), 0).unwrap();
        assert!(r.regular);
        let sel = select_natural_coordinates(&op, 5, &tol(), 0, Exec::Sequential).unwrap();
        assert_eq!(
            sel.coordinate_labels(),
            vec!["Tr(σ₀)".to_string(), "Tr(σ₀σ̃₁σ̃₂)".to_string()]
        );
        let pa = analyze_point(&op, &[0.4, 0.6], &tol()).unwrap();
        let v = pa.invariants(&sel.coordinate).unwrap();
        assert!((v[0].value - 0.6).abs() < 1e-12);
        assert!((v[1].value + 0.4 / 2f64.sqrt()).abs() < 1e-12);
        let fine = select_natural_coordinates(&op, 9, &tol(), 0, Exec::Sequential).unwrap();
        assert_eq!(fine, sel);
    }

    #[test]
    fn selection_stable_under_refinement() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let op = random_op(&mut rng, 2, 3);
        let coarse = select_natural_coordinates(&op, 8, &tol(), 0, Exec::Parallel).unwrap();
        let fine = select_natural_coordinates(&op, 16, &tol(), 0, Exec::Parallel).unwrap();
        assert_eq!(coarse, fine);
    }

    #[test]
    fn single_point_model() {
        let op = coordinate_example();
        let sel =
            InvariantSelection::with_coordinates(vec![TraceWord::new(vec![0]), TraceWord::new(vec![0, 1, 2])], 2, 2);
        let m = build_model(&op, 1, &sel, &tol(), 0, Exec::Sequential).unwrap();
        assert_eq!(m.samples.len(), 1);
        assert_eq!(m.hull.lo, m.hull.hi);
        let v = compare_models(&m, &m, &tol()).unwrap();
        assert!(v.equivalent);
        assert_eq!(v.distance, 0.0);
    }

    #[test]
    fn model_is_reflexive_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let op = random_op(&mut rng, 2, 3);
        let sel = select_natural_coordinates(&op, 6, &tol(), 0, Exec::Parallel).unwrap();
        let m1 = build_model(&op, 6, &sel, &tol(), 0, Exec::Parallel).unwrap();
        let m2 = build_model(&op, 6, &sel, &tol(), 0, Exec::Sequential).unwrap();
        assert_eq!(m1.to_json().unwrap(), m2.to_json().unwrap());
        let v = compare_models(&m1, &m1, &tol()).unwrap();
        assert!(v.equivalent && v.distance == 0.0 && v.coverage == 1.0);
        let back = Model::from_json(&m1.to_json().unwrap()).unwrap();
        assert_eq!(back, m1);
    }

    #[test]
    fn functional_dependence_within_a_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let op = random_op(&mut rng, 2, 3);
        let sel = select_natural_coordinates(&op, 7, &tol(), 0, Exec::Parallel).unwrap();
        let m = build_model(&op, 7, &sel, &tol(), 0, Exec::Parallel).unwrap();
        // duplicate every point through a second model on the same grid
        let m2 = build_model(&op, 7, &sel, &tol(), 0, Exec::Sequential).unwrap();
        for s in &m.samples {
            for t in &m2.samples {
                let gap = s.a.iter().zip(&t.a).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                if gap <= 1e-9 {
                    let d = s.f.iter().zip(&t.f).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                    assert!(d <= 1e-6);
                }
            }
        }
    }

    fn unipotent<R: Rng>(rng: &mut R, n: usize, m: usize) -> GaugeTransform {
        let mut e = vec![PolyScalarField::zero(n); m * m];
        for r in 0..m {
            for c in r + 1..m {
                let mut terms: Vec<(Vec<u32>, f64)> = vec![(vec![0; n], rng.random_range(-0.5..0.5))];
                for i in 0..n {
                    let mut ex = vec![0; n];
                    ex[i] = 1;
                    terms.push((ex, rng.random_range(-0.5..0.5)));
                }
                e[r * m + c] = PolyScalarField::from_terms(n, terms);
            }
        }
        GaugeTransform::unipotent(PolyMatrixField::from_entries(m, e)).unwrap()
    }

    #[test]
    fn gauge_pair_equivalent_and_perturbed_pair_not() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for m in [2, 3] {
            let op = random_op(&mut rng, 2, m);
            let g = unipotent(&mut rng, 2, m);
            let op2 = apply_gauge(&op, &g).unwrap();
            let sel = select_natural_coordinates(&op, 6, &tol(), 0, Exec::Parallel).unwrap();
            let m1 = build_model(&op, 6, &sel, &tol(), 0, Exec::Parallel).unwrap();
            let m2 = build_model(&op2, 6, &sel, &tol(), 0, Exec::Parallel).unwrap();
            let v = compare_models(&m1, &m2, &tol()).unwrap();
            assert!(v.equivalent, "m={m}: {v:?}");
            assert!(v.distance <= 1e-6);
            let v = compare_models(&m2, &m1, &tol()).unwrap();
            assert!(v.equivalent);

            let mut op3 = op.clone();
            let mut e11 = Mat::zeros(m, m);
            e11[(0, 0)] = 0.1;
            op3.b = op3.b.add(&PolyMatrixField::constant(&e11, 2));
            let m3 = build_model(&op3, 6, &sel, &tol(), 0, Exec::Parallel).unwrap();
            match compare_models(&m1, &m3, &tol()) {
                Ok(v) => assert!(!v.equivalent && v.distance > 1e3 * tol().equiv, "m={m}: {v:?}"),
                Err(Error::EmptyOverlap) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn affine_model_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        for m in [2, 3] {
            let op = random_op(&mut rng, 2, m);
            // axis scalings with translation map grid cell centres to cell centres
            for l in [[1.5, 0.5], [-2.0, 1.0]] {
                let phi = AffineDiffeo::new(
                    Mat::from_diagonal(&nalgebra::DVector::from_vec(l.to_vec())),
                    vec![0.3, -0.1],
                )
                .unwrap();
                let op2 = apply_affine_diffeo(&op, &phi).unwrap();
                let sel = select_natural_coordinates(&op, 5, &tol(), 0, Exec::Parallel).unwrap();
                let m1 = build_model(&op, 5, &sel, &tol(), 0, Exec::Parallel).unwrap();
                let raw = build_model(&op2, 5, &sel, &tol(), 0, Exec::Parallel).unwrap();
                // orientation-reversing maps flip e₂ when m = 2
                let m2 = if m == 2 && l[0] * l[1] < 0.0 {
                    raw.flip_e2()
                } else {
                    raw.clone()
                };
                assert_eq!(m1.samples.len(), m2.samples.len());
                for s in &m1.samples {
                    let y = phi.apply(&s.x);
                    let t = m2
                        .samples
                        .iter()
                        .find(|t| t.x.iter().zip(&y).all(|(u, v)| (u - v).abs() < 1e-9))
                        .expect("image point sampled");
                    let close =
                        |u: &[f64], v: &[f64]| u.iter().zip(v).all(|(p, q)| (p - q).abs() <= 1e-8 * p.abs().max(1.0));
                    assert!(
                        close(&s.a, &t.a) && close(&s.f, &t.f) && close(&s.ch, &t.ch),
                        "m={m} l={l:?}"
                    );
                }
                let v = compare_models(&m1, &raw, &tol()).unwrap();
                assert!(v.equivalent);
                assert_eq!(v.flipped, m == 2 && l[0] * l[1] < 0.0);
            }
        }
    }

    #[test]
    fn key_mismatch_and_disjoint_hulls() {
        let op = coordinate_example();
        let sel =
            InvariantSelection::with_coordinates(vec![TraceWord::new(vec![0]), TraceWord::new(vec![0, 1, 2])], 2, 2);
        let other =
            InvariantSelection::with_coordinates(vec![TraceWord::new(vec![0, 1, 2]), TraceWord::new(vec![0])], 2, 2);
        let m1 = build_model(&op, 4, &sel, &tol(), 0, Exec::Sequential).unwrap();
        let m2 = build_model(&op, 4, &other, &tol(), 0, Exec::Sequential).unwrap();
        let v = compare_models(&m1, &m2, &tol()).unwrap();
        assert!(!v.equivalent);
        assert_eq!(v.reason.as_deref(), Some("key-mismatch"));

        let mut far = op.clone();
        far.chart = Chart::new(vec![5.0, 5.0], vec![6.0, 6.0]).unwrap();
        let m3 = build_model(&far, 4, &sel, &tol(), 0, Exec::Sequential).unwrap();
        assert!(matches!(compare_models(&m1, &m3, &tol()), Err(Error::EmptyOverlap)));
        let atlas = compare_atlases(&[m1.clone(), m1.clone()], &[m1.clone(), m3], &tol()).unwrap();
        assert!(atlas.inconclusive && !atlas.equivalent);
        let atlas = compare_atlases(std::slice::from_ref(&m1), std::slice::from_ref(&m1), &tol()).unwrap();
        assert!(atlas.equivalent);
    }

    #[test]
    fn audit_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let op = random_op(&mut rng, 2, 3);
        let id = naturality_audit(&op, &GaugeTransform::identity(3, 2), 4, &tol(), Exec::Parallel).unwrap();
        assert_eq!(id.compared, 16);
        assert_eq!([id.frame_sigma, id.omega, id.sigma0, id.invariants, id.ch], [0.0; 5]);
        let k = GaugeTransform::constant(&random_near_identity(&mut rng, 3, 0.5), 2).unwrap();
        let r = naturality_audit(&op, &k, 4, &tol(), Exec::Parallel).unwrap();
        assert!(
            r.frame_sigma.max(r.omega).max(r.sigma0).max(r.worst_scalar()) <= 1e-10,
            "{r:?}"
        );
        let u = unipotent(&mut rng, 2, 3);
        let r = naturality_audit(&op, &u, 4, &tol(), Exec::Parallel).unwrap();
        assert!(r.worst_scalar() <= 1e-8, "{r:?}");
        assert!(r.omega <= 1e-8);
    }

    #[test]
    fn model_file_validation() {
        let op = coordinate_example();
        let sel =
            InvariantSelection::with_coordinates(vec![TraceWord::new(vec![0]), TraceWord::new(vec![0, 1, 2])], 2, 2);
        let m = build_model(&op, 3, &sel, &tol(), 0, Exec::Sequential).unwrap();
        let text = m.to_json().unwrap();
        assert!(text.contains("\"schema\": \"opgeom-model/1\""));
        assert!(Model::from_json(&text.replace("opgeom-model/1", "opgeom-model/9")).is_err());
        assert!(Model::from_json(&text.replace("Tr(σ₀)", "Tr(σ₀²)")).is_err());
        assert_eq!(parse_selection(&text, 2).unwrap(), sel);
        assert_eq!(parse_models(&format!("[{text}]")).unwrap(), vec![m]);
    }
}
