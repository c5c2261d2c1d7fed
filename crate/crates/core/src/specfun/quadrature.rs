//! Gauss–Hermite quadrature against the standard normal density.
//!
//! Nodes are the eigenvalues of the Jacobi matrix of the probabilists'
//! Hermite polynomials (Golub–Welsch), polished by Newton steps on the
//! orthonormal three-term recurrence. Weights come from the Christoffel
//! function `1 / Σ_k p_k(x)²`, which keeps the tiny tail weights accurate.

use crate::{invalid, Error, Result};

/// Largest supported rule.
pub const MAX_KNOTS: usize = 256;

/// Knots and probability weights; `Σ w_i f(k_i) ≈ E_{ω~N(0,1)} f(ω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    knots: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// The same rule integrating against `N(0, 2γ)`, the spectral density of
    /// the Gaussian kernel `exp(-γ r²)`: knots are scaled by `√(2γ)`.
    pub fn rescaled(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return invalid(format!("bandwidth must be positive, got {gamma}"));
        }
        let s = (2.0 * gamma).sqrt();
        Ok(Self { knots: self.knots.iter().map(|k| k * s).collect(), weights: self.weights.clone() })
    }

    /// `Σ w_i f(k_i)`, accumulated over mirrored knot pairs from the tails
    /// inward so odd integrands cancel exactly.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let u = self.knots.len();
        let mut acc = 0.0;
        for i in 0..u / 2 {
            let j = u - 1 - i;
            acc += self.weights[i] * f(self.knots[i]) + self.weights[j] * f(self.knots[j]);
        }
        if u % 2 == 1 {
            acc += self.weights[u / 2] * f(self.knots[u / 2]);
        }
        acc
    }

    /// Index pairs `(i, mirror)` covering the non-negative knots, with the
    /// combined weight of `±k`. Exploits the exact symmetry of the rule.
    pub(crate) fn half(&self) -> Vec<(f64, f64)> {
        let u = self.knots.len();
        let mut out = Vec::with_capacity(u / 2 + 1);
        for i in (u / 2)..u {
            let k = self.knots[i];
            let w = if k == 0.0 { self.weights[i] } else { 2.0 * self.weights[i] };
            out.push((k, w));
        }
        out
    }
}

/// Eigenvalues of a symmetric tridiagonal matrix (implicit QL with Wilkinson
/// shifts). `off[i]` couples `diag[i]` and `diag[i+1]`.
fn tridiagonal_eigenvalues(mut diag: Vec<f64>, off: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&off[..n - 1]);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::Numerical("tridiagonal QL did not converge".into()));
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(diag)
}

/// Orthonormal probabilists' Hermite values `p_{u-1}(x), p_u(x)` and
/// `Σ_{k<u} p_k(x)²`.
fn hermite_orthonormal(u: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sumsq = 0.0;
    for k in 0..u {
        sumsq += cur * cur;
        let kf = k as f64;
        let next = (x * cur - kf.sqrt() * prev) / (kf + 1.0).sqrt();
        prev = cur;
        cur = next;
    }
    (prev, cur, sumsq)
}

/// `u`-point Gauss–Hermite rule for the standard normal weight, exact for
/// polynomials of degree `2u - 1`. Equivalent to the physicists' rule with
/// knots multiplied by `√2` and weights divided by `√π`.
pub fn gauss_hermite(u: usize) -> Result<QuadratureRule> {
    if u == 0 || u > MAX_KNOTS {
        return invalid(format!("Gauss-Hermite rule needs 1 <= u <= {MAX_KNOTS}, got {u}"));
    }
    if u == 1 {
        return Ok(QuadratureRule { knots: vec![0.0], weights: vec![1.0] });
    }
    let off: Vec<f64> = (1..u).map(|k| (k as f64).sqrt()).collect();
    let mut x = tridiagonal_eigenvalues(vec![0.0; u], &off)?;
    x.sort_by(f64::total_cmp);
    for xi in x.iter_mut() {
        for _ in 0..10 {
            let (pm1, pu, _) = hermite_orthonormal(u, *xi);
            // p_u' = √u p_{u-1}
            let step = pu / ((u as f64).sqrt() * pm1);
            *xi -= step;
            if step.abs() <= 1e-16 * xi.abs().max(1.0) {
                break;
            }
        }
    }
    let mut w: Vec<f64> = x.iter().map(|&xi| 1.0 / hermite_orthonormal(u, xi).2).collect();
    for i in 0..u / 2 {
        let j = u - 1 - i;
        let k = 0.5 * (x[j] - x[i]);
        x[i] = -k;
        x[j] = k;
        let wm = 0.5 * (w[i] + w[j]);
        w[i] = wm;
        w[j] = wm;
    }
    if u % 2 == 1 {
        x[u / 2] = 0.0;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(QuadratureRule { knots: x, weights: w })
}
