//! Gauss–Hermite rules for expectations under the standard normal law.
//!
//! Nodes and weights come from the Golub–Welsch eigenproblem on the Jacobi
//! matrix of the probabilists' Hermite polynomials, so weights sum to one and
//! `sum w_i f(z_i)` approximates `E[f(Z)]` with `Z ~ N(0, 1)`. An `n`-point
//! rule is exact for polynomials of degree `2n - 1`.
//!
//! Gauss–Legendre rules for cell averages are built the same way.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParams("quadrature order must be at least 1".into()));
        }
        let mut pairs = golub_welsch(order, |k| (k as f64).sqrt());
        // symmetrize: the exact rule is symmetric about zero
        for i in 0..order / 2 {
            let j = order - 1 - i;
            let z = 0.5 * (pairs[j].0 - pairs[i].0);
            let w = 0.5 * (pairs[i].1 + pairs[j].1);
            pairs[i] = (-z, w);
            pairs[j] = (z, w);
        }
        if order % 2 == 1 {
            pairs[order / 2].0 = 0.0;
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Ok(GaussHermite {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `E[f(Z)]` for a standard normal `Z`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }

    /// `E[f(Z)]` for a standard normal vector `Z` in `dim` dimensions
    /// using the tensor-product rule.
    pub fn expect_tensor(&self, dim: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
        let q = self.order();
        let total = q.pow(dim as u32);
        let mut z = vec![0.0; dim];
        let mut acc = 0.0;
        for flat in 0..total {
            let mut rem = flat;
            let mut w = 1.0;
            for zk in z.iter_mut() {
                let i = rem % q;
                rem /= q;
                *zk = self.nodes[i];
                w *= self.weights[i];
            }
            acc += w * f(&z);
        }
        acc
    }
}

fn golub_welsch(order: usize, offdiag: impl Fn(usize) -> f64) -> Vec<(f64, f64)> {
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let b = offdiag(k);
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Gauss–Legendre rule on `[-1, 1]` with weights normalized to one, so
/// `sum w_i f(x_i)` is the mean of `f`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParams("quadrature order must be at least 1".into()));
        }
        let pairs = golub_welsch(order, |k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        });
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Ok(GaussLegendre {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        })
    }

    /// Mean of `f` over the box `[lo, hi]` by the tensor rule.
    pub fn box_average(&self, lo: &[f64], hi: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
        let d = lo.len();
        let q = self.nodes.len();
        let mut x = vec![0.0; d];
        let mut acc = 0.0;
        for flat in 0..q.pow(d as u32) {
            let mut rem = flat;
            let mut w = 1.0;
            for k in 0..d {
                let i = rem % q;
                rem /= q;
                x[k] = 0.5 * (lo[k] + hi[k]) + 0.5 * (hi[k] - lo[k]) * self.nodes[i];
                w *= self.weights[i];
            }
            acc += w * f(&x);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let gl = GaussLegendre::new(4).unwrap();
        // mean of x^6 on [0, 2] is 2^6 / 7
        let m = gl.box_average(&[0.0], &[2.0], |x| x[0].powi(6));
        assert!((m - 64.0 / 7.0).abs() < 1e-12);
        let m2 = gl.box_average(&[0.0, 1.0], &[1.0, 3.0], |x| x[0] * x[1] * x[1]);
        assert!((m2 - 0.5 * 13.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn reproduces_gaussian_moments() {
        let gh = GaussHermite::new(20).unwrap();
        let moments = [1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0, 0.0, 105.0];
        for (k, &m) in moments.iter().enumerate() {
            let got = gh.expect(|z| z.powi(k as i32));
            assert!((got - m).abs() < 1e-10 * m.max(1.0), "moment {k}: {got}");
        }
    }

    #[test]
    fn small_rules_are_exact() {
        let gh = GaussHermite::new(2).unwrap();
        assert!((gh.nodes[1] - 1.0).abs() < 1e-14);
        assert!((gh.weights[0] - 0.5).abs() < 1e-14);
        let gh3 = GaussHermite::new(3).unwrap();
        assert!((gh3.nodes[2] - 3f64.sqrt()).abs() < 1e-13);
        assert!((gh3.weights[1] - 2.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn tensor_rule_factorizes() {
        let gh = GaussHermite::new(6).unwrap();
        let v = gh.expect_tensor(2, |z| z[0] * z[0] * z[1] * z[1] + z[0]);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_zero_order() {
        assert!(GaussHermite::new(0).is_err());
    }
}
