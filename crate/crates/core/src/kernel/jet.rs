//! Truncated Taylor jets (value, gradient and optionally Hessian) of scalar
//! and matrix fields at a point.
//!
//! Every operation propagates derivatives by the Leibniz rule, so composites
//! of `+`, `·`, inverse and linear solves are exact up to round-off for
//! polynomial inputs. A jet whose `hess` is `None` is a 1-jet; binary
//! operations return the lower of the two orders.

use nalgebra::LU;

use super::{condition_number, Mat};
use crate::error::{Error, Result};

/// Values a jet can carry: reals and dense matrices.
pub trait JetValue: Clone {
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn scale(&self, s: f64) -> Self;
    fn zero_like(&self) -> Self;
}

impl JetValue for f64 {
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
    fn zero_like(&self) -> Self {
        0.0
    }
}

impl JetValue for Mat {
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
    fn zero_like(&self) -> Self {
        Mat::zeros(self.nrows(), self.ncols())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jet<T> {
    pub value: T,
    pub grad: Vec<T>,
    /// Row-major n×n, symmetric by construction.
    pub hess: Option<Vec<T>>,
}

impl<T: JetValue> Jet<T> {
    /// A constant field; `order` is 1 or 2.
    pub fn constant(value: T, n: usize, order: usize) -> Self {
        let z = value.zero_like();
        Self {
            grad: vec![z.clone(); n],
            hess: (order >= 2).then(|| vec![z; n * n]),
            value,
        }
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn order(&self) -> usize {
        if self.hess.is_some() {
            2
        } else {
            1
        }
    }

    pub fn hess_at(&self, i: usize, j: usize) -> Option<&T> {
        let n = self.dim();
        self.hess.as_ref().map(|h| &h[i * n + j])
    }

    /// Drops the Hessian.
    pub fn truncate(&self) -> Self {
        Self {
            value: self.value.clone(),
            grad: self.grad.clone(),
            hess: None,
        }
    }

    /// The 1-jet of `∂_k f`. Requires a 2-jet.
    pub fn partial(&self, k: usize) -> Jet<T> {
        let n = self.dim();
        let h = self.hess.as_ref().expect("partial derivative jet needs a 2-jet");
        Jet {
            value: self.grad[k].clone(),
            grad: (0..n).map(|j| h[k * n + j].clone()).collect(),
            hess: None,
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(&T, &T) -> T) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self {
            value: f(&self.value, &other.value),
            grad: self.grad.iter().zip(&other.grad).map(|(a, b)| f(a, b)).collect(),
            hess: match (&self.hess, &other.hess) {
                (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| f(x, y)).collect()),
                _ => None,
            },
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a.sub(b))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            value: self.value.scale(s),
            grad: self.grad.iter().map(|g| g.scale(s)).collect(),
            hess: self.hess.as_ref().map(|h| h.iter().map(|x| x.scale(s)).collect()),
        }
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    /// Product with Leibniz propagation; operand order is preserved, so
    /// this is correct for non-commuting values.
    pub fn mul(&self, other: &Self) -> Self {
        self.product_with(other, |a, b| a.mul(b))
    }

    fn product_with<U: JetValue, V: JetValue>(&self, other: &Jet<U>, f: impl Fn(&T, &U) -> V) -> Jet<V> {
        let n = self.dim();
        debug_assert_eq!(n, other.dim());
        let (a, b) = (&self.value, &other.value);
        let value = f(a, b);
        let grad: Vec<V> = (0..n).map(|i| f(&self.grad[i], b).add(&f(a, &other.grad[i]))).collect();
        let hess = match (&self.hess, &other.hess) {
            (Some(ha), Some(hb)) => {
                let mut h: Vec<Option<V>> = vec![None; n * n];
                for i in 0..n {
                    for j in i..n {
                        let v = f(&ha[i * n + j], b)
                            .add(&f(&self.grad[i], &other.grad[j]))
                            .add(&f(&self.grad[j], &other.grad[i]))
                            .add(&f(a, &hb[i * n + j]));
                        h[j * n + i] = Some(v.clone());
                        h[i * n + j] = Some(v);
                    }
                }
                Some(h.into_iter().map(Option::unwrap).collect())
            }
            _ => None,
        };
        Jet { value, grad, hess }
    }

    pub fn map<U: JetValue>(&self, f: impl Fn(&T) -> U) -> Jet<U> {
        Jet {
            value: f(&self.value),
            grad: self.grad.iter().map(&f).collect(),
            hess: self.hess.as_ref().map(|h| h.iter().map(&f).collect()),
        }
    }

    pub fn sum<'a>(items: impl IntoIterator<Item = &'a Jet<T>>, n: usize, zero: T, order: usize) -> Jet<T>
    where
        T: 'a,
    {
        items
            .into_iter()
            .fold(Jet::constant(zero, n, order), |acc, x| acc.add(x))
    }
}

impl Jet<f64> {
    /// Scalar times any jet value.
    pub fn times<T: JetValue>(&self, other: &Jet<T>) -> Jet<T> {
        self.product_with(other, |s, t| t.scale(*s))
    }

    pub fn recip(&self) -> Result<Jet<f64>> {
        let v = self.value;
        if v == 0.0 {
            return Err(Error::Singular { cond: f64::INFINITY });
        }
        // f = 1/v, f' = -1/v², f'' = 2/v³
        Ok(self.compose(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v)))
    }

    pub fn sqrt(&self) -> Result<Jet<f64>> {
        let v = self.value;
        if v <= 0.0 {
            return Err(Error::Precondition(format!("sqrt of non-positive jet value {v}")));
        }
        let r = v.sqrt();
        Ok(self.compose(r, 0.5 / r, -0.25 / (r * v)))
    }

    /// Chain rule through a scalar function with the given value and first
    /// two derivatives at `self.value`.
    fn compose(&self, f0: f64, f1: f64, f2: f64) -> Jet<f64> {
        let n = self.dim();
        Jet {
            value: f0,
            grad: self.grad.iter().map(|g| f1 * g).collect(),
            hess: self.hess.as_ref().map(|h| {
                let mut out = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] = f1 * h[i * n + j] + f2 * self.grad[i] * self.grad[j];
                    }
                }
                out
            }),
        }
    }
}

impl Jet<Mat> {
    pub fn rows(&self) -> usize {
        self.value.nrows()
    }

    pub fn trace(&self) -> Jet<f64> {
        self.map(|m| m.trace())
    }

    pub fn transpose(&self) -> Jet<Mat> {
        self.map(|m| m.transpose())
    }

    pub fn entry(&self, r: usize, c: usize) -> Jet<f64> {
        self.map(|m| m[(r, c)])
    }

    /// `Tr(A B)` without forming the product jets.
    pub fn trace_product(&self, other: &Jet<Mat>) -> Jet<f64> {
        self.product_with(other, crate::kernel::trace_of_product)
    }

    pub fn commutator(&self, other: &Jet<Mat>) -> Jet<Mat> {
        self.mul(other).sub(&other.mul(self))
    }

    /// Assembles a matrix jet from row-major scalar entry jets.
    pub fn from_entries(rows: usize, cols: usize, entries: &[Jet<f64>]) -> Jet<Mat> {
        assert_eq!(entries.len(), rows * cols);
        let n = entries[0].dim();
        let order = entries.iter().map(|e| e.order()).min().unwrap_or(1);
        let pick = |f: &dyn Fn(&Jet<f64>) -> f64| Mat::from_fn(rows, cols, |r, c| f(&entries[r * cols + c]));
        Jet {
            value: pick(&|e| e.value),
            grad: (0..n).map(|k| pick(&|e| e.grad[k])).collect(),
            hess: (order >= 2).then(|| (0..n * n).map(|k| pick(&|e| e.hess.as_ref().unwrap()[k])).collect()),
        }
    }

    /// Inverse with derivatives from differentiating `M · M⁻¹ = id`.
    pub fn matinv(&self) -> Result<Jet<Mat>> {
        let cond = condition_number(&self.value);
        let inv = match self.value.clone().try_inverse() {
            Some(inv) if cond < SINGULAR_COND => inv,
            _ => return Err(Error::Singular { cond }),
        };
        let n = self.dim();
        let grad: Vec<Mat> = self.grad.iter().map(|g| -(&inv * g * &inv)).collect();
        let hess = self.hess.as_ref().map(|h| {
            let mut out = vec![Mat::zeros(0, 0); n * n];
            for i in 0..n {
                for j in i..n {
                    let v = -(&inv * &h[i * n + j] * &inv)
                        + &inv * &self.grad[i] * &inv * &self.grad[j] * &inv
                        + &inv * &self.grad[j] * &inv * &self.grad[i] * &inv;
                    out[j * n + i] = v.clone();
                    out[i * n + j] = v;
                }
            }
            out
        });
        Ok(Jet { value: inv, grad, hess })
    }

    /// Solves `K x = b` (b may have several columns) with derivatives from
    /// differentiating the identity `K x = b`.
    pub fn linsolve(&self, b: &Jet<Mat>) -> Result<Jet<Mat>> {
        let cond = condition_number(&self.value);
        if !(cond < SINGULAR_COND) {
            return Err(Error::Singular { cond });
        }
        let lu = LU::new(self.value.clone());
        let solve = |rhs: &Mat| lu.solve(rhs).ok_or(Error::Singular { cond });
        let n = self.dim();
        let x = solve(&b.value)?;
        let mut grad = Vec::with_capacity(n);
        for i in 0..n {
            grad.push(solve(&(&b.grad[i] - &self.grad[i] * &x))?);
        }
        let hess = match (&self.hess, &b.hess) {
            (Some(hk), Some(hb)) => {
                let mut out = vec![Mat::zeros(0, 0); n * n];
                for i in 0..n {
                    for j in i..n {
                        let rhs =
                            &hb[i * n + j] - &hk[i * n + j] * &x - &self.grad[i] * &grad[j] - &self.grad[j] * &grad[i];
                        let v = solve(&rhs)?;
                        out[j * n + i] = v.clone();
                        out[i * n + j] = v;
                    }
                }
                Some(out)
            }
            _ => None,
        };
        Ok(Jet { value: x, grad, hess })
    }
}

/// Condition number beyond which a jet inverse or solve is reported singular.
pub const SINGULAR_COND: f64 = 1e13;

#[cfg(test)]
mod tests {
    use super::*;

    /// A 2-jet of a quadratic matrix field `M0 + Σ x_k M_k + Σ x_k x_l M_kl`
    /// at a point, built by hand.
    fn quad_jet(m0: &Mat, lin: &[Mat], quad: &[Vec<Mat>], x: &[f64]) -> (Jet<Mat>, impl Fn(&[f64]) -> Mat) {
        let n = x.len();
        let eval = {
            let (m0, lin, quad) = (m0.clone(), lin.to_vec(), quad.to_vec());
            move |p: &[f64]| {
                let mut v = m0.clone();
                for k in 0..p.len() {
                    v += &lin[k] * p[k];
                    for l in 0..p.len() {
                        v += &quad[k][l] * (p[k] * p[l]);
                    }
                }
                v
            }
        };
        let value = eval(x);
        let grad = (0..n)
            .map(|k| {
                let mut g = lin[k].clone();
                for l in 0..n {
                    g += (&quad[k][l] + &quad[l][k]) * x[l];
                }
                g
            })
            .collect();
        let hess = (0..n * n)
            .map(|ij| {
                let (i, j) = (ij / n, ij % n);
                &quad[i][j] + &quad[j][i]
            })
            .collect();
        (
            Jet {
                value,
                grad,
                hess: Some(hess),
            },
            eval,
        )
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn rand_mat(r: usize, c: usize, seed: &mut u64) -> Mat {
        Mat::from_fn(r, c, |_, _| lcg(seed))
    }

    fn fd_check(jet: &Jet<Mat>, f: &dyn Fn(&[f64]) -> Mat, x: &[f64], tol: f64) {
        let h = 1e-4;
        let n = x.len();
        let scale = jet.value.norm().max(1.0);
        for k in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            let g = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((&g - &jet.grad[k]).norm() <= tol * scale, "grad {k}");
            for l in 0..n {
                let mut xpp = x.to_vec();
                let mut xpm = x.to_vec();
                let mut xmp = x.to_vec();
                let mut xmm = x.to_vec();
                xpp[k] += h;
                xpp[l] += h;
                xpm[k] += h;
                xpm[l] -= h;
                xmp[k] -= h;
                xmp[l] += h;
                xmm[k] -= h;
                xmm[l] -= h;
                let hkl = (f(&xpp) - f(&xpm) - f(&xmp) + f(&xmm)) / (4.0 * h * h);
                let jh = jet.hess_at(k, l).unwrap();
                assert!((&hkl - jh).norm() <= 1e3 * tol * scale, "hess {k}{l}");
            }
        }
    }

    #[test]
    fn constants_have_zero_derivatives() {
        let a = Jet::constant(Mat::identity(2, 2) * 3.0, 3, 2);
        let b = Jet::constant(Mat::from_element(2, 2, 1.5), 3, 2);
        let p = a.mul(&b);
        assert!(p.grad.iter().all(|g| g.norm() == 0.0));
        assert!(p.hess.unwrap().iter().all(|h| h.norm() == 0.0));
    }

    #[test]
    fn inverse_at_identity() {
        let g = Mat::from_row_slice(2, 2, &[0.3, -1.0, 2.0, 0.5]);
        let j = Jet {
            value: Mat::identity(2, 2),
            grad: vec![g.clone()],
            hess: None,
        };
        let inv = j.matinv().unwrap();
        assert!((&inv.grad[0] + &g).norm() < 1e-15);
    }

    #[test]
    fn singular_inverse_reports_condition() {
        let j = Jet::constant(Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]), 2, 2);
        assert!(matches!(j.matinv(), Err(Error::Singular { .. })));
    }

    #[test]
    fn products_and_inverse_match_finite_differences() {
        let mut seed = 7u64;
        let x = [0.3, -0.2, 0.4];
        let n = 3;
        let mk = |seed: &mut u64| {
            let m0 = rand_mat(3, 3, seed) + Mat::identity(3, 3) * 4.0;
            let lin: Vec<Mat> = (0..n).map(|_| rand_mat(3, 3, seed)).collect();
            let quad: Vec<Vec<Mat>> = (0..n)
                .map(|_| (0..n).map(|_| rand_mat(3, 3, seed) * 0.5).collect())
                .collect();
            quad_jet(&m0, &lin, &quad, &x)
        };
        let (ja, fa) = mk(&mut seed);
        let (jb, fb) = mk(&mut seed);
        let prod = ja.mul(&jb).add(&jb.scale(2.0));
        fd_check(&prod, &|p| fa(p) * fb(p) + fb(p) * 2.0, &x, 1e-6);
        let inv = ja.matinv().unwrap();
        fd_check(&inv, &|p| fa(p).try_inverse().unwrap(), &x, 1e-6);
        let comp = inv.mul(&jb).sub(&jb.mul(&inv));
        fd_check(
            &comp,
            &|p| {
                let i = fa(p).try_inverse().unwrap();
                &i * fb(p) - fb(p) * &i
            },
            &x,
            1e-6,
        );
    }

    #[test]
    fn linsolve_matches_finite_differences_5x5() {
        let mut seed = 99u64;
        let x = [0.1, 0.25];
        let n = 2;
        let k0 = rand_mat(5, 5, &mut seed) + Mat::identity(5, 5) * 5.0;
        let lin: Vec<Mat> = (0..n).map(|_| rand_mat(5, 5, &mut seed)).collect();
        let quad: Vec<Vec<Mat>> = (0..n)
            .map(|_| (0..n).map(|_| rand_mat(5, 5, &mut seed)).collect())
            .collect();
        let (jk, fk) = quad_jet(&k0, &lin, &quad, &x);
        let b0 = rand_mat(5, 1, &mut seed);
        let blin: Vec<Mat> = (0..n).map(|_| rand_mat(5, 1, &mut seed)).collect();
        let bquad: Vec<Vec<Mat>> = (0..n)
            .map(|_| (0..n).map(|_| rand_mat(5, 1, &mut seed)).collect())
            .collect();
        let (jb, fb) = quad_jet(&b0, &blin, &bquad, &x);
        let sol = jk.linsolve(&jb).unwrap();
        fd_check(&sol, &|p| fk(p).lu().solve(&fb(p)).unwrap(), &x, 1e-6);
    }

    #[test]
    fn scalar_functions() {
        let j = Jet {
            value: 4.0,
            grad: vec![1.0, 2.0],
            hess: Some(vec![0.5, 0.0, 0.0, 1.0]),
        };
        let r = j.sqrt().unwrap();
        assert_eq!(r.value, 2.0);
        assert!((r.grad[1] - 0.5).abs() < 1e-15);
        let inv = j.recip().unwrap();
        assert!((inv.grad[0] + 1.0 / 16.0).abs() < 1e-15);
        // d²(1/v)/dx0² = -v''/v² + 2 v'^2/v³
        assert!((inv.hess_at(0, 0).unwrap() - (-0.5 / 16.0 + 2.0 / 64.0)).abs() < 1e-15);
    }

    #[test]
    fn partial_reads_hessian_row() {
        let j = Jet {
            value: 1.0,
            grad: vec![2.0, 3.0],
            hess: Some(vec![4.0, 5.0, 5.0, 6.0]),
        };
        let p = j.partial(1);
        assert_eq!(p.value, 3.0);
        assert_eq!(p.grad, vec![5.0, 6.0]);
    }
}
