//! Isotropic target distributions: density, score, characteristic function
//! and sampler.

use std::f64::consts::PI;

use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

use crate::batch::{dot, fill_unit_vector, norm};
use crate::specfun::{ln_bessel_k, ln_gamma};
use crate::{invalid, unsupported, Error, Result, RngState, SampleBatch};

/// Degrees of freedom used when a Student-t prior is requested without one.
pub const DEFAULT_STUDENT_NU: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorKind {
    /// `N(0, σ² I)`.
    Gaussian { sigma: f64 },
    /// Density `∝ exp(-‖x‖/σ)`.
    Laplace { sigma: f64 },
    /// Multivariate Student-t with `ν` degrees of freedom and scale `σ`.
    StudentT { nu: f64, sigma: f64 },
    /// Uniform distribution on the unit sphere `S^{d-1}`.
    UniformSphere,
}

/// An isotropic prior on `R^d` (or `S^{d-1}`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub kind: PriorKind,
    pub d: usize,
}

/// A score vector plus a flag for inputs where the score is not defined and
/// a subgradient (zero) was used.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub value: Vec<f64>,
    pub degenerate: bool,
}

impl PriorSpec {
    pub fn new(kind: PriorKind, d: usize) -> Result<Self> {
        let p = Self { kind, d };
        p.validate()?;
        Ok(p)
    }

    pub fn gaussian(d: usize, sigma: f64) -> Result<Self> {
        Self::new(PriorKind::Gaussian { sigma }, d)
    }

    pub fn laplace(d: usize, sigma: f64) -> Result<Self> {
        Self::new(PriorKind::Laplace { sigma }, d)
    }

    pub fn student_t(d: usize, nu: f64, sigma: f64) -> Result<Self> {
        Self::new(PriorKind::StudentT { nu, sigma }, d)
    }

    pub fn uniform_sphere(d: usize) -> Result<Self> {
        Self::new(PriorKind::UniformSphere, d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return invalid("prior dimension must be >= 1");
        }
        let check_sigma = |s: f64| {
            if s > 0.0 && s.is_finite() {
                Ok(())
            } else {
                invalid(format!("sigma must be positive and finite, got {s}"))
            }
        };
        match self.kind {
            PriorKind::Gaussian { sigma } | PriorKind::Laplace { sigma } => check_sigma(sigma),
            PriorKind::StudentT { nu, sigma } => {
                if !(nu > 2.0) || !nu.is_finite() {
                    return invalid(format!("Student-t needs nu > 2, got {nu}"));
                }
                check_sigma(sigma)
            }
            PriorKind::UniformSphere => {
                if self.d < 2 {
                    return invalid("uniform sphere prior needs d >= 2");
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            PriorKind::Gaussian { .. } => "gaussian",
            PriorKind::Laplace { .. } => "laplace",
            PriorKind::StudentT { .. } => "student-t",
            PriorKind::UniformSphere => "sphere",
        }
    }

    /// Scale parameter σ (1 for the sphere).
    pub fn sigma(&self) -> f64 {
        match self.kind {
            PriorKind::Gaussian { sigma } | PriorKind::Laplace { sigma } | PriorKind::StudentT { sigma, .. } => sigma,
            PriorKind::UniformSphere => 1.0,
        }
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.d {
            return invalid(format!("point has dimension {}, prior has d={}", v.len(), self.d));
        }
        Ok(())
    }

    /// `∇_x log p(x)`. The uniform sphere has the zero (tangent) score. The
    /// Laplace score at the origin is the zero subgradient, flagged as
    /// degenerate.
    pub fn score(&self, x: &[f64]) -> Result<Score> {
        self.check_dim(x)?;
        let mut value = vec![0.0; self.d];
        let degenerate = self.score_into(x, &mut value);
        Ok(Score { value, degenerate })
    }

    /// Writes the score into `out`; returns the degenerate flag.
    pub(crate) fn score_into(&self, x: &[f64], out: &mut [f64]) -> bool {
        match self.kind {
            PriorKind::Gaussian { sigma } => {
                let s = -1.0 / (sigma * sigma);
                out.iter_mut().zip(x).for_each(|(o, v)| *o = s * v);
                false
            }
            PriorKind::Laplace { sigma } => {
                let r = norm(x);
                if r == 0.0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    return true;
                }
                let s = -1.0 / (sigma * r);
                out.iter_mut().zip(x).for_each(|(o, v)| *o = s * v);
                false
            }
            PriorKind::StudentT { nu, sigma } => {
                let s = -(nu + self.d as f64) / (nu * sigma * sigma + dot(x, x));
                out.iter_mut().zip(x).for_each(|(o, v)| *o = s * v);
                false
            }
            PriorKind::UniformSphere => {
                out.iter_mut().for_each(|o| *o = 0.0);
                false
            }
        }
    }

    /// `H v` where `H = ∇_x s(x)` is the (symmetric) score Jacobian.
    pub(crate) fn score_jacobian_apply(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        match self.kind {
            PriorKind::Gaussian { sigma } => {
                let s = -1.0 / (sigma * sigma);
                out.iter_mut().zip(v).for_each(|(o, a)| *o = s * a);
            }
            PriorKind::Laplace { sigma } => {
                // -(I - x̂x̂ᵀ) / (σ‖x‖)
                let r = norm(x);
                if r == 0.0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    return;
                }
                let proj = dot(x, v) / (r * r);
                let s = -1.0 / (sigma * r);
                for ((o, a), b) in out.iter_mut().zip(v).zip(x) {
                    *o = s * (a - proj * b);
                }
            }
            PriorKind::StudentT { nu, sigma } => {
                // -(ν+d) [I/A - 2xxᵀ/A²],  A = νσ² + ‖x‖²
                let a = nu * sigma * sigma + dot(x, x);
                let c = nu + self.d as f64;
                let xv = dot(x, v);
                for ((o, vi), xi) in out.iter_mut().zip(v).zip(x) {
                    *o = -c * (vi / a - 2.0 * xi * xv / (a * a));
                }
            }
            PriorKind::UniformSphere => out.iter_mut().for_each(|o| *o = 0.0),
        }
    }

    /// Characteristic function `E exp(i ωᵀX)` (real for these symmetric laws).
    pub fn cf_full(&self, omega: &[f64]) -> Result<f64> {
        self.check_dim(omega)?;
        let w2 = dot(omega, omega);
        match self.kind {
            PriorKind::Gaussian { sigma } => Ok((-0.5 * sigma * sigma * w2).exp()),
            PriorKind::Laplace { sigma } => Ok((1.0 + sigma * sigma * w2).powf(-(self.d as f64 + 1.0) / 2.0)),
            PriorKind::StudentT { nu, sigma } => Ok(student_cf(nu, sigma, w2.sqrt())),
            PriorKind::UniformSphere => unsupported("the sphere prior has no ambient characteristic function here"),
        }
    }

    /// Per-slice target CF used by the finite-sliced MMD regularizer:
    /// Gaussian `exp(-σ²ω²/2)`, Laplace `1/(1 + σ²ω²)`.
    ///
    /// The Laplace form is the one-dimensional Laplace CF. It is not the CF
    /// of a projection of the `d`-dimensional isotropic Laplace for `d > 1`;
    /// see [`PriorSpec::cf_slice_projected`] for that.
    pub fn cf_slice(&self, omega: f64) -> Result<f64> {
        match self.kind {
            PriorKind::Gaussian { sigma } => Ok((-0.5 * sigma * sigma * omega * omega).exp()),
            PriorKind::Laplace { sigma } => Ok(1.0 / (1.0 + sigma * sigma * omega * omega)),
            _ => unsupported(format!("no per-slice CF for the {} prior", self.name())),
        }
    }

    /// CF of the projection `θᵀX` for any unit `θ`, i.e. `cf_full(ω θ)`.
    /// Laplace gives `(1 + σ²ω²)^{-(d+1)/2}`.
    pub fn cf_slice_projected(&self, omega: f64) -> Result<f64> {
        let w2 = omega * omega;
        match self.kind {
            PriorKind::Gaussian { sigma } => Ok((-0.5 * sigma * sigma * w2).exp()),
            PriorKind::Laplace { sigma } => Ok((1.0 + sigma * sigma * w2).powf(-(self.d as f64 + 1.0) / 2.0)),
            PriorKind::StudentT { nu, sigma } => Ok(student_cf(nu, sigma, omega.abs())),
            PriorKind::UniformSphere => unsupported("no projected CF for the sphere prior"),
        }
    }

    /// `n` independent draws.
    pub fn sample(&self, n: usize, rng: &RngState) -> Result<SampleBatch> {
        self.validate()?;
        if n == 0 {
            return invalid("sample size must be >= 1");
        }
        let d = self.d;
        let mut r = rng.rng();
        let mut data = vec![0.0; n * d];
        match self.kind {
            PriorKind::Gaussian { sigma } => {
                data.iter_mut().for_each(|v| { let z: f64 = StandardNormal.sample(&mut r); *v = sigma * z });
            }
            PriorKind::Laplace { sigma } => {
                let radius = Gamma::new(d as f64, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                for row in data.chunks_exact_mut(d) {
                    fill_unit_vector(&mut r, row);
                    let rad: f64 = radius.sample(&mut r);
                    row.iter_mut().for_each(|v| *v *= rad);
                }
            }
            PriorKind::StudentT { nu, sigma } => {
                let chi = ChiSquared::new(nu).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                for row in data.chunks_exact_mut(d) {
                    row.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut r));
                    let w: f64 = chi.sample(&mut r);
                    let s = sigma / (w / nu).sqrt();
                    row.iter_mut().for_each(|v| *v *= s);
                }
            }
            PriorKind::UniformSphere => {
                for row in data.chunks_exact_mut(d) {
                    fill_unit_vector(&mut r, row);
                }
            }
        }
        SampleBatch::new(data, n, d)
    }

    /// `log p(x)` including the normalizing constant.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let d = self.d as f64;
        let r2 = dot(x, x);
        match self.kind {
            PriorKind::Gaussian { sigma } => Ok(-0.5 * d * (2.0 * PI * sigma * sigma).ln() - r2 / (2.0 * sigma * sigma)),
            PriorKind::Laplace { sigma } => {
                // Γ(d/2) / (2 π^{d/2} σ^d Γ(d))
                let ln_c = ln_gamma(d / 2.0) - 2f64.ln() - d / 2.0 * PI.ln() - d * sigma.ln() - ln_gamma(d);
                Ok(ln_c - r2.sqrt() / sigma)
            }
            PriorKind::StudentT { nu, sigma } => {
                let ln_c = ln_gamma((nu + d) / 2.0) - ln_gamma(nu / 2.0) - d / 2.0 * (nu * PI).ln() - d * sigma.ln();
                Ok(ln_c - (nu + d) / 2.0 * (r2 / (nu * sigma * sigma)).ln_1p())
            }
            PriorKind::UniformSphere => unsupported("log_density is not defined for the sphere prior"),
        }
    }
}

/// `K_{ν/2}(w) w^{ν/2} / (Γ(ν/2) 2^{ν/2-1})` with `w = √ν σ ‖ω‖`; 1 at `ω = 0`.
fn student_cf(nu: f64, sigma: f64, wnorm: f64) -> f64 {
    if wnorm == 0.0 {
        return 1.0;
    }
    let w = nu.sqrt() * sigma * wnorm;
    let h = nu / 2.0;
    match ln_bessel_k(h, w) {
        Ok(lk) => (lk + h * w.ln() - ln_gamma(h) - (h - 1.0) * 2f64.ln()).exp(),
        Err(_) => 0.0,
    }
}
