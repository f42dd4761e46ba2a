//! First-order operators `Δs = Σ Aⁱ ∂ᵢ s + B s` on a box chart, and the
//! gauge and affine actions on them.

use crate::error::{Error, Result};
use crate::field::poly::{PolyMatrixField, PolyScalarField};
use crate::kernel::{Jet, Mat, SymbolPoint};

/// Closed coordinate box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Chart {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidSpec("chart needs lo < hi in every coordinate".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| a <= v && v <= b)
    }

    /// Centres of the `resⁿ` cells of a uniform subdivision, ordered with the
    /// last coordinate varying fastest. Every point is at least half a cell
    /// away from the boundary.
    pub fn grid(&self, res: usize) -> Vec<Vec<f64>> {
        let n = self.dim();
        let total = res.pow(n as u32);
        (0..total)
            .map(|mut k| {
                let mut x = vec![0.0; n];
                for i in (0..n).rev() {
                    let t = (k % res) as f64 + 0.5;
                    k /= res;
                    x[i] = self.lo[i] + t * (self.hi[i] - self.lo[i]) / res as f64;
                }
                x
            })
            .collect()
    }

    pub fn intersects(&self, other: &Chart) -> bool {
        (0..self.dim()).all(|i| self.lo[i] <= other.hi[i] && other.lo[i] <= self.hi[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    pub n: usize,
    pub m: usize,
    pub a: Vec<PolyMatrixField>,
    pub b: PolyMatrixField,
    pub chart: Chart,
}

impl OperatorSpec {
    pub fn new(a: Vec<PolyMatrixField>, b: PolyMatrixField, chart: Chart) -> Result<Self> {
        let n = a.len();
        let m = b.m();
        if n < 2 || m < 2 {
            return Err(Error::InvalidSpec(format!("need n, m >= 2, got n={n}, m={m}")));
        }
        if chart.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: chart.dim(),
            });
        }
        for f in a.iter().chain(std::iter::once(&b)) {
            if f.m() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: f.m(),
                });
            }
            if f.nvars() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: f.nvars(),
                });
            }
        }
        Ok(Self { n, m, a, b, chart })
    }

    /// Constant-coefficient operator on the given chart.
    pub fn constant(a: &[Mat], b: &Mat, chart: Chart) -> Result<Self> {
        let n = a.len();
        Self::new(
            a.iter().map(|ai| PolyMatrixField::constant(ai, n)).collect(),
            PolyMatrixField::constant(b, n),
            chart,
        )
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn symbol_at(&self, x: &[f64]) -> Result<SymbolPoint> {
        self.check_point(x)?;
        Ok(SymbolPoint {
            components: self.a.iter().map(|f| f.eval(x)).collect(),
        })
    }

    /// 2-jets of each symbol component.
    pub fn symbol_jets(&self, x: &[f64]) -> Result<Vec<Jet<Mat>>> {
        self.check_point(x)?;
        Ok(self.a.iter().map(|f| f.eval_jet2(x)).collect())
    }

    pub fn b_jet(&self, x: &[f64]) -> Result<Jet<Mat>> {
        self.check_point(x)?;
        Ok(self.b.eval_jet2(x))
    }

    /// Subsymbol with respect to the chart-flat connection: `B(x)`.
    pub fn subsymbol_flat(&self, x: &[f64]) -> Result<Mat> {
        self.check_point(x)?;
        Ok(self.b.eval(x))
    }

    /// Subsymbol with respect to `∇ = d + ω`: `B − Σ Aⁱ ωᵢ`.
    pub fn subsymbol(&self, x: &[f64], omega: &[Mat]) -> Result<Mat> {
        if omega.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: omega.len(),
            });
        }
        let mut s = self.subsymbol_flat(x)?;
        for (f, w) in self.a.iter().zip(omega) {
            s -= f.eval(x) * w;
        }
        Ok(s)
    }

    /// Largest coefficient difference over all fields; charts must agree.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        if self.n != other.n || self.m != other.m {
            return f64::INFINITY;
        }
        self.a
            .iter()
            .zip(&other.a)
            .map(|(p, q)| p.max_coeff_diff(q))
            .fold(self.b.max_coeff_diff(&other.b), f64::max)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.a
            .iter()
            .map(|f| f.max_abs_coeff())
            .fold(self.b.max_abs_coeff(), f64::max)
    }
}

/// Polynomial change of frame `s ↦ P s`, stored with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeTransform {
    pub p: PolyMatrixField,
    pub p_inv: PolyMatrixField,
}

impl GaugeTransform {
    /// Rejects pairs whose product differs from the identity by more than
    /// round-off in any coefficient.
    pub fn new(p: PolyMatrixField, p_inv: PolyMatrixField) -> Result<Self> {
        if p.m() != p_inv.m() || p.nvars() != p_inv.nvars() {
            return Err(Error::DimensionMismatch {
                expected: p.m(),
                got: p_inv.m(),
            });
        }
        let id = PolyMatrixField::identity(p.m(), p.nvars());
        let scale = 1.0_f64.max(p.max_abs_coeff() * p_inv.max_abs_coeff());
        let residual = p.mul(&p_inv).max_coeff_diff(&id).max(p_inv.mul(&p).max_coeff_diff(&id));
        if residual > 1e-12 * scale {
            return Err(Error::InvalidGauge { residual });
        }
        Ok(Self { p, p_inv })
    }

    pub fn identity(m: usize, nvars: usize) -> Self {
        let id = PolyMatrixField::identity(m, nvars);
        Self {
            p: id.clone(),
            p_inv: id,
        }
    }

    pub fn constant(p: &Mat, nvars: usize) -> Result<Self> {
        let p_inv = p.clone().try_inverse().ok_or(Error::Singular { cond: f64::INFINITY })?;
        Self::new(
            PolyMatrixField::constant(p, nvars),
            PolyMatrixField::constant(&p_inv, nvars),
        )
    }

    /// `id + N` with `N` strictly upper triangular; the inverse is the
    /// terminating series `Σ (−N)^k`.
    pub fn unipotent(n_upper: PolyMatrixField) -> Result<Self> {
        let m = n_upper.m();
        let nvars = n_upper.nvars();
        for r in 0..m {
            for c in 0..=r {
                if !n_upper.entry(r, c).is_zero() {
                    return Err(Error::InvalidGauge {
                        residual: n_upper.entry(r, c).max_abs_coeff(),
                    });
                }
            }
        }
        let id = PolyMatrixField::identity(m, nvars);
        let neg = n_upper.scale(-1.0);
        let mut inv = id.clone();
        let mut pow = id.clone();
        for _ in 1..m {
            pow = pow.mul(&neg);
            inv = inv.add(&pow);
        }
        Self::new(id.add(&n_upper), inv)
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &GaugeTransform) -> GaugeTransform {
        GaugeTransform {
            p: self.p.mul(&first.p),
            p_inv: first.p_inv.mul(&self.p_inv),
        }
    }

    pub fn inverse(&self) -> GaugeTransform {
        GaugeTransform {
            p: self.p_inv.clone(),
            p_inv: self.p.clone(),
        }
    }
}

/// `y = L x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineDiffeo {
    pub l: Mat,
    pub c: Vec<f64>,
    l_inv: Mat,
}

impl AffineDiffeo {
    pub fn new(l: Mat, c: Vec<f64>) -> Result<Self> {
        if l.nrows() != l.ncols() || l.nrows() != c.len() {
            return Err(Error::DimensionMismatch {
                expected: l.nrows(),
                got: c.len(),
            });
        }
        let det = l.determinant();
        let scale = l.norm().powi(l.nrows() as i32).max(f64::MIN_POSITIVE);
        if det.abs() <= 1e-12 * scale {
            return Err(Error::SingularAffine { det });
        }
        let l_inv = l.clone().try_inverse().ok_or(Error::SingularAffine { det })?;
        Ok(Self { l, c, l_inv })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(Mat::identity(n, n), vec![0.0; n]).unwrap()
    }

    pub fn l_inv(&self) -> &Mat {
        &self.l_inv
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.c.len())
            .map(|j| self.c[j] + (0..x.len()).map(|i| self.l[(j, i)] * x[i]).sum::<f64>())
            .collect()
    }

    pub fn inverse(&self) -> AffineDiffeo {
        let c: Vec<f64> = (0..self.c.len())
            .map(|j| -(0..self.c.len()).map(|i| self.l_inv[(j, i)] * self.c[i]).sum::<f64>())
            .collect();
        AffineDiffeo {
            l: self.l_inv.clone(),
            c,
            l_inv: self.l.clone(),
        }
    }

    /// Bounding box of the image of a box.
    pub fn image_chart(&self, chart: &Chart) -> Chart {
        let n = chart.dim();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for corner in 0..(1usize << n) {
            let x: Vec<f64> = (0..n)
                .map(|i| if corner >> i & 1 == 1 { chart.hi[i] } else { chart.lo[i] })
                .collect();
            for (j, y) in self.apply(&x).into_iter().enumerate() {
                lo[j] = lo[j].min(y);
                hi[j] = hi[j].max(y);
            }
        }
        Chart { lo, hi }
    }
}

/// `PΔP⁻¹`: `A′ⁱ = P Aⁱ P⁻¹`, `B′ = P B P⁻¹ + Σ P Aⁱ ∂ᵢP⁻¹`.
pub fn apply_gauge(op: &OperatorSpec, g: &GaugeTransform) -> Result<OperatorSpec> {
    if g.p.m() != op.m || g.p.nvars() != op.n {
        return Err(Error::DimensionMismatch {
            expected: op.m,
            got: g.p.m(),
        });
    }
    let a: Vec<PolyMatrixField> = op.a.iter().map(|ai| g.p.mul(ai).mul(&g.p_inv)).collect();
    let mut b = g.p.mul(&op.b).mul(&g.p_inv);
    for (i, ai) in op.a.iter().enumerate() {
        b = b.add(&g.p.mul(ai).mul(&g.p_inv.derivative(i)));
    }
    OperatorSpec::new(a, b, op.chart.clone())
}

/// Pushforward along `y = Lx + c`.
pub fn apply_affine_diffeo(op: &OperatorSpec, phi: &AffineDiffeo) -> Result<OperatorSpec> {
    if phi.c.len() != op.n {
        return Err(Error::DimensionMismatch {
            expected: op.n,
            got: phi.c.len(),
        });
    }
    let inv = phi.inverse();
    let pulled: Vec<PolyMatrixField> = op.a.iter().map(|f| f.compose_affine(&inv.l, &inv.c)).collect();
    let a = (0..op.n)
        .map(|j| {
            (0..op.n).fold(PolyMatrixField::zero(op.m, op.n), |acc, i| {
                acc.add(&pulled[i].scale(phi.l[(j, i)]))
            })
        })
        .collect();
    let b = op.b.compose_affine(&inv.l, &inv.c);
    OperatorSpec::new(a, b, phi.image_chart(&op.chart))
}

/// `Δ = Σ σⁱ(∂ᵢ + ωᵢ) + σ₀`.
pub fn compose_operator(
    sigma: &[PolyMatrixField],
    omega: &[PolyMatrixField],
    sigma0: &PolyMatrixField,
    chart: Chart,
) -> Result<OperatorSpec> {
    if sigma.len() != omega.len() {
        return Err(Error::DimensionMismatch {
            expected: sigma.len(),
            got: omega.len(),
        });
    }
    let b = sigma
        .iter()
        .zip(omega)
        .fold(sigma0.clone(), |acc, (s, w)| acc.add(&s.mul(w)));
    OperatorSpec::new(sigma.to_vec(), b, chart)
}

/// Flat decomposition: symbol, zero connection, subsymbol `B`.
pub fn decompose_flat(op: &OperatorSpec) -> (Vec<PolyMatrixField>, Vec<PolyMatrixField>, PolyMatrixField) {
    (
        op.a.clone(),
        vec![PolyMatrixField::zero(op.m, op.n); op.n],
        op.b.clone(),
    )
}

/// Scalar polynomial from `(exponent, coefficient)` pairs; shorthand for tests
/// and generators.
pub fn poly(n: usize, terms: &[(&[u32], f64)]) -> PolyScalarField {
    PolyScalarField::from_terms(n, terms.iter().map(|(e, c)| (e.to_vec(), *c)))
}
