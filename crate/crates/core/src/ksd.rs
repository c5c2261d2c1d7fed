//! Kernel Stein discrepancy estimators.
//!
//! For a radial base kernel `k(x, y) = f(‖x - y‖²)` and target score `s`,
//! the Langevin Stein kernel is
//!
//! `k_s(x, y) = f·s(x)ᵀs(y) + 2f'·(x - y)ᵀ(s(y) - s(x)) - 2d f' - 4f''‖x - y‖²`,
//!
//! whose expectation under the target vanishes. [`ksd_u_statistic`] averages
//! it over sample pairs; [`ksd_spectral_1d`] computes the same V-statistic in
//! one dimension through the Stein-modified characteristic function;
//! [`sliced_ksd_analytic`] averages the one-dimensional Gaussian-prior Stein
//! kernel over every slice in closed form.

use std::time::Instant;

use crate::batch::{dot, sq_dist};
use crate::mmd::{finite, Statistic};
use crate::pairwise::{jackknife_se, pair_mean, pair_sums, PairSums};
use crate::specfun::{kummer_half_d_deriv, kummer_m, kummer_three_halves, KummerMode, QuadratureRule};
use crate::{invalid, unsupported, DiscrepancyEstimate, KernelSpec, PriorKind, PriorSpec, Result, SampleBatch};

/// Base kernel plus target prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteinKernelSpec {
    pub base: KernelSpec,
    pub prior: PriorSpec,
}

/// A Stein-kernel value and whether a degenerate (subgradient) score was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteinEval {
    pub value: f64,
    pub degenerate: bool,
}

impl SteinKernelSpec {
    pub fn new(base: KernelSpec, prior: PriorSpec) -> Result<Self> {
        let s = Self { base, prior };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.prior.validate()?;
        if !self.base.supports_derivatives() {
            return unsupported(format!("Stein kernels need a Gaussian or IMQ base, got {}", self.base.name()));
        }
        if self.prior.kind == PriorKind::UniformSphere {
            return unsupported("ambient Stein kernels do not apply on the sphere; use vmf_stein_ksd");
        }
        Ok(())
    }

    /// `k_s(x, y)` given precomputed scores.
    pub(crate) fn pair(&self, x: &[f64], y: &[f64], sx: &[f64], sy: &[f64]) -> f64 {
        let t = sq_dist(x, y);
        let [f, f1, f2, _] = self.base.radial_derivs(t);
        let mut ss = 0.0;
        let mut us = 0.0;
        for k in 0..x.len() {
            ss += sx[k] * sy[k];
            us += (x[k] - y[k]) * (sy[k] - sx[k]);
        }
        f * ss + 2.0 * f1 * us - 2.0 * x.len() as f64 * f1 - 4.0 * f2 * t
    }

    /// `∇_x k_s(x, y)` accumulated into `out` with weight `scale`.
    pub(crate) fn pair_grad_x(&self, x: &[f64], y: &[f64], sx: &[f64], sy: &[f64], scale: f64, out: &mut [f64], work: &mut Vec<f64>) {
        let d = x.len();
        let t = sq_dist(x, y);
        let [f, f1, f2, f3] = self.base.radial_derivs(t);
        let mut ss = 0.0;
        let mut us = 0.0;
        for k in 0..d {
            ss += sx[k] * sy[k];
            us += (x[k] - y[k]) * (sy[k] - sx[k]);
        }
        // work = [H sy | H u]
        work.resize(2 * d, 0.0);
        let (h_sy, h_u) = work.split_at_mut(d);
        self.prior.score_jacobian_apply(x, sy, h_sy);
        let u: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        self.prior.score_jacobian_apply(x, &u, h_u);
        let du = 2.0 * f1 * ss + 4.0 * f2 * us - 8.0 * f3 * t - 8.0 * f2 - 4.0 * d as f64 * f2;
        for k in 0..d {
            let g = du * u[k] + f * h_sy[k] + 2.0 * f1 * ((sy[k] - sx[k]) - h_u[k]);
            out[k] += scale * g;
        }
    }
}

/// `k_s(x, y)`.
pub fn stein_kernel_eval(s: &SteinKernelSpec, x: &[f64], y: &[f64]) -> Result<SteinEval> {
    s.validate()?;
    if x.len() != s.prior.d || y.len() != s.prior.d {
        return invalid(format!("points must have dimension {}", s.prior.d));
    }
    let sx = s.prior.score(x)?;
    let sy = s.prior.score(y)?;
    Ok(SteinEval { value: s.pair(x, y, &sx.value, &sy.value), degenerate: sx.degenerate || sy.degenerate })
}

fn scores(prior: &PriorSpec, x: &SampleBatch) -> (Vec<f64>, bool) {
    let mut out = vec![0.0; x.n() * x.d()];
    let mut degenerate = false;
    for (row, o) in x.rows().zip(out.chunks_exact_mut(x.d())) {
        degenerate |= prior.score_into(row, o);
    }
    (out, degenerate)
}

/// Unbiased `KSD²` U-statistic `Σ_{i≠j} k_s(x_i, x_j) / (n(n-1))`.
pub fn ksd_u_statistic(s: &SteinKernelSpec, x: &SampleBatch) -> Result<DiscrepancyEstimate> {
    ksd_statistic(s, x, Statistic::U)
}

pub fn ksd_statistic(s: &SteinKernelSpec, x: &SampleBatch, stat: Statistic) -> Result<DiscrepancyEstimate> {
    let t0 = Instant::now();
    s.validate()?;
    if x.d() != s.prior.d {
        return invalid(format!("samples have d={}, prior has d={}", x.d(), s.prior.d));
    }
    if x.n() < 2 {
        return invalid("KSD needs at least 2 samples");
    }
    let d = x.d();
    let (sc, degenerate) = scores(&s.prior, x);
    if degenerate {
        log::warn!("KSD: score undefined at some samples; zero subgradient used");
    }
    let srow = |i: usize| &sc[i * d..(i + 1) * d];
    let sums = pair_sums(x.n(), |i, j| Ok(s.pair(x.row(i), x.row(j), srow(i), srow(j))))?;
    let diag = (stat == Statistic::V)
        .then(|| (0..x.n()).map(|i| s.pair(x.row(i), x.row(i), srow(i), srow(i))).collect::<Vec<_>>());
    let value = pair_mean(&sums, diag.as_deref());
    let se = jackknife_se(&sums, diag.as_deref(), None);
    let name = format!("ksd-{}", stat.tag());
    Ok(DiscrepancyEstimate::new(&name, x.n(), d, finite(value, &name)?, t0).with_se(se))
}

/// One-dimensional target scores used on slices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Score1d {
    /// `-u/σ²`.
    Gaussian { sigma: f64 },
    /// `-sign(u)/σ`, zero at the origin.
    Laplace { sigma: f64 },
}

impl Score1d {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Self::Gaussian { sigma } => -u / (sigma * sigma),
            Self::Laplace { sigma } => {
                if u == 0.0 {
                    0.0
                } else {
                    -u.signum() / sigma
                }
            }
        }
    }

    /// `ds/du` (zero almost everywhere for Laplace).
    pub fn deriv(&self, _u: f64) -> f64 {
        match *self {
            Self::Gaussian { sigma } => -1.0 / (sigma * sigma),
            Self::Laplace { .. } => 0.0,
        }
    }

    /// The one-dimensional score of a Gaussian or Laplace prior's scale.
    pub fn for_prior(p: &PriorSpec) -> Result<Self> {
        match p.kind {
            PriorKind::Gaussian { sigma } => Ok(Self::Gaussian { sigma }),
            PriorKind::Laplace { sigma } => Ok(Self::Laplace { sigma }),
            _ => unsupported(format!("no one-dimensional score for the {} prior", p.name())),
        }
    }

    fn validate(&self) -> Result<()> {
        let (Self::Gaussian { sigma } | Self::Laplace { sigma }) = *self;
        if sigma > 0.0 && sigma.is_finite() {
            Ok(())
        } else {
            invalid(format!("sigma must be positive, got {sigma}"))
        }
    }
}

/// Sums `Σ_u w_u [(mean Re_u)² + (mean Im_u)²]` over a bandwidth-scaled
/// symmetric rule, where `Re = s cos(ωu) - ω sin(ωu)` and
/// `Im = s sin(ωu) + ω cos(ωu)`. The transform at `-ω` is the conjugate of
/// the one at `ω`, so mirrored knots share one pass: with
/// `A = mean s cos`, `B = mean sin`, `C = mean s sin`, `D = mean cos`,
/// each knot contributes `(A - ωB)² + (C + ωD)²`.
pub(crate) fn stein_cf_error_1d(us: &[f64], s: &[f64], scaled: &QuadratureRule) -> f64 {
    let n = us.len() as f64;
    let mut acc = 0.0;
    for (w, weight) in scaled.half() {
        let (mut a, mut b, mut c, mut dd) = (0.0, 0.0, 0.0, 0.0);
        for (&u, &si) in us.iter().zip(s) {
            let (sn, cs) = (w * u).sin_cos();
            a += si * cs;
            b += sn;
            c += si * sn;
            dd += cs;
        }
        a /= n;
        b /= n;
        c /= n;
        dd /= n;
        acc += weight * ((a - w * b).powi(2) + (c + w * dd).powi(2));
    }
    acc
}

/// One-dimensional spectral KSD (V-form): the squared modulus of the
/// Stein-modified empirical CF integrated against the Gaussian kernel's
/// spectral density, with knots `√(2γ)·k_u`.
pub fn ksd_spectral_1d(score: Score1d, x1: &SampleBatch, gamma: f64, rule: &QuadratureRule) -> Result<DiscrepancyEstimate> {
    let t0 = Instant::now();
    score.validate()?;
    let xs = x1.as_1d()?;
    if rule.is_empty() {
        return invalid("quadrature rule is empty");
    }
    let scaled = rule.rescaled(gamma)?;
    let s: Vec<f64> = xs.iter().map(|&u| score.eval(u)).collect();
    let value = stein_cf_error_1d(xs, &s, &scaled);
    Ok(DiscrepancyEstimate::new("ksd-spectral-1d", x1.n(), 1, finite(value, "spectral KSD")?, t0)
        .with_slices(0, rule.len(), 0))
}

/// Options for [`sliced_ksd_analytic_with`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SlicedKsdOptions {
    /// Evaluation of `M(1/2; d/2; ·)`.
    pub mode: KummerMode,
    /// Experimental: replace `M(3/2; d/2+1; -c)` by `(1 + 4c/(2d-1))^{-3/2}`.
    pub three_halves_surrogate: bool,
    pub statistic: Statistic,
}

/// Pairs closer than this are treated as coincident.
pub const COINCIDENT_TOL: f64 = 1e-12;

/// Analytic sliced-KSD pair term and (optionally) its gradient in `x`.
pub(crate) struct SlicedKsdPair {
    pub gamma: f64,
    pub sigma: f64,
    pub d: usize,
    pub opts: SlicedKsdOptions,
}

impl SlicedKsdPair {
    fn m32(&self, c: f64) -> Result<(f64, f64)> {
        let d = self.d as f64;
        if self.opts.three_halves_surrogate {
            let alpha = 4.0 / (2.0 * d - 1.0);
            let v = kummer_three_halves(c, self.d, true)?;
            Ok((v, -1.5 * alpha * v / (1.0 + alpha * c)))
        } else {
            let v = kummer_m(1.5, d / 2.0 + 1.0, -c)?;
            let dv = -3.0 / (d + 2.0) * kummer_m(2.5, d / 2.0 + 2.0, -c)?;
            Ok((v, dv))
        }
    }

    /// Slice average of the 1-D Stein kernel at `u = v`: `2γ + ‖x‖²/(dσ⁴)`.
    pub fn diag(&self, x: &[f64]) -> f64 {
        2.0 * self.gamma + dot(x, x) / (self.d as f64 * self.sigma.powi(4))
    }

    /// `None` for coincident pairs.
    pub fn value(&self, x: &[f64], y: &[f64]) -> Result<Option<f64>> {
        let r2 = sq_dist(x, y);
        if r2.sqrt() < COINCIDENT_TOL {
            return Ok(None);
        }
        let d = self.d as f64;
        let g = self.gamma;
        let s4 = self.sigma.powi(4);
        let c = g * r2;
        let (m12, _) = kummer_half_d_deriv(c, self.d, self.opts.mode)?;
        let (m32, _) = if self.opts.three_halves_surrogate {
            (kummer_three_halves(c, self.d, true)?, 0.0)
        } else {
            (kummer_three_halves(c, self.d, false)?, 0.0)
        };
        let (mut a, mut b, mut q) = (0.0, 0.0, 0.0);
        for k in 0..x.len() {
            let delta = x[k] - y[k];
            a += delta * x[k];
            b += delta * y[k];
            q += x[k] * y[k];
        }
        let p = a * b / r2;
        let k1 = 2.0 * g / (self.sigma * self.sigma) + 4.0 * g * g;
        Ok(Some(2.0 * g * m12 + (p * m32 / d + (q - p) * (m12 - m32 / d) / (d - 1.0)) / s4 - k1 * r2 * m32 / d))
    }

    /// Adds `scale · ∇_x h(x, y)` to `out`; coincident pairs contribute 0.
    pub fn grad_x(&self, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) -> Result<()> {
        let r2 = sq_dist(x, y);
        if r2.sqrt() < COINCIDENT_TOL {
            return Ok(());
        }
        let d = self.d as f64;
        let g = self.gamma;
        let s4 = self.sigma.powi(4);
        let c = g * r2;
        let (m12, m12c) = kummer_half_d_deriv(c, self.d, self.opts.mode)?;
        let (m32, m32c) = self.m32(c)?;
        let (mut a, mut b, mut q) = (0.0, 0.0, 0.0);
        for k in 0..x.len() {
            let delta = x[k] - y[k];
            a += delta * x[k];
            b += delta * y[k];
            q += x[k] * y[k];
        }
        let p = a * b / r2;
        let k1 = 2.0 * g / (self.sigma * self.sigma) + 4.0 * g * g;
        let mix = m12 - m32 / d;
        let mixc = m12c - m32c / d;
        // Coefficients of ∇c = 2γΔ, ∇p, y, and Δ.
        let dc = 2.0 * g * m12c + (p * m32c / d + (q - p) * mixc / (d - 1.0)) / s4 - k1 * r2 * m32c / d;
        let dp = (m32 / d - mix / (d - 1.0)) / s4;
        let dq = mix / ((d - 1.0) * s4);
        let dr2 = -k1 * m32 / d;
        for k in 0..x.len() {
            let delta = x[k] - y[k];
            let grad_p = (b * (x[k] + delta) + a * y[k]) / r2 - 2.0 * a * b * delta / (r2 * r2);
            let gk = dc * 2.0 * g * delta + dp * grad_p + dq * y[k] + dr2 * 2.0 * delta;
            out[k] += scale * gk;
        }
        Ok(())
    }
}

/// Sliced KSD² to `N(0, σ² I_d)` with the Gaussian kernel, averaged over
/// all directions in closed form (U-statistic, exact Kummer factors).
pub fn sliced_ksd_analytic(gamma: f64, sigma: f64, x: &SampleBatch, mode: KummerMode) -> Result<DiscrepancyEstimate> {
    sliced_ksd_analytic_with(gamma, sigma, x, SlicedKsdOptions { mode, ..Default::default() })
}

/// Per pair, with `ê = (x - x')/‖x - x'‖`, `p = (êᵀx)(êᵀx')`,
/// `M₁ = M(1/2; d/2; -γr²)`, `M₃ = M(3/2; d/2+1; -γr²)`:
///
/// `2γM₁ + [p M₃/d + (xᵀx' - p)(M₁ - M₃/d)/(d-1)]/σ⁴ - (2γ/σ² + 4γ²) r² M₃/d`.
///
/// Coincident pairs (distance below [`COINCIDENT_TOL`]) are dropped from
/// the U-statistic and the average renormalized; a warning is logged. The
/// V-statistic evaluates them at `u = v` on every slice, which gives the
/// direction-free value `2γ + ‖x‖²/(dσ⁴)` (also the limit of the pair term).
pub fn sliced_ksd_analytic_with(gamma: f64, sigma: f64, x: &SampleBatch, opts: SlicedKsdOptions) -> Result<DiscrepancyEstimate> {
    let t0 = Instant::now();
    for (name, v) in [("gamma", gamma), ("sigma", sigma)] {
        if !(v > 0.0) || !v.is_finite() {
            return invalid(format!("{name} must be positive, got {v}"));
        }
    }
    if x.n() < 2 {
        return invalid("sliced KSD needs at least 2 samples");
    }
    let d = x.d();
    if d < 2 {
        return invalid("analytic slicing needs d >= 2");
    }
    if opts.mode == KummerMode::ImqApprox && d < 4 {
        return invalid(format!("ImqApprox needs d >= 4, got {d}"));
    }
    let pair = SlicedKsdPair { gamma, sigma, d, opts };
    // The V-form gives coincident pairs their exact value, which equals the
    // diagonal term; the U-form drops them.
    let v_form = opts.statistic == Statistic::V;
    let sums = pair_sums(x.n(), |i, j| {
        Ok(pair.value(x.row(i), x.row(j))?.unwrap_or(if v_form { pair.diag(x.row(i)) } else { 0.0 }))
    })?;
    let name = format!("sliced-ksd-analytic-{}", opts.statistic.tag());
    let (value, se) = match opts.statistic {
        Statistic::V => {
            let diag: Vec<f64> = x.rows().map(|r| pair.diag(r)).collect();
            (pair_mean(&sums, Some(&diag)), jackknife_se(&sums, Some(&diag), None))
        }
        Statistic::U => {
            let counts = coincident_counts(x);
            match counts {
                None => (pair_mean(&sums, None), jackknife_se(&sums, None, None)),
                Some((excluded, per_row)) => {
                    log::warn!("sliced KSD: {excluded} coincident pairs excluded from the U-statistic");
                    renormalized(&sums, excluded, &per_row)?
                }
            }
        }
    };
    Ok(DiscrepancyEstimate::new(&name, x.n(), d, finite(value, &name)?, t0).with_se(se))
}

/// Number of coincident pairs and per-row counts, or `None` if there are none.
fn coincident_counts(x: &SampleBatch) -> Option<(usize, Vec<usize>)> {
    let mut per_row = vec![0usize; x.n()];
    let mut total = 0;
    for i in 0..x.n() {
        for j in (i + 1)..x.n() {
            if sq_dist(x.row(i), x.row(j)).sqrt() < COINCIDENT_TOL {
                per_row[i] += 1;
                per_row[j] += 1;
                total += 1;
            }
        }
    }
    (total > 0).then_some((total, per_row))
}

fn renormalized(sums: &PairSums, excluded: usize, per_row: &[usize]) -> Result<(f64, Option<f64>)> {
    let n = sums.n;
    let all = n * (n - 1) / 2;
    let valid = all - excluded;
    if valid == 0 {
        return invalid("all sample pairs coincide; sliced KSD is undefined");
    }
    let value = sums.total / valid as f64;
    if n < 3 {
        return Ok((value, None));
    }
    let loo: Vec<f64> = (0..n)
        .map(|k| {
            let pairs_k = (n - 1) - per_row[k];
            let remaining = valid - pairs_k;
            if remaining == 0 {
                value
            } else {
                (sums.total - sums.rows[k]) / remaining as f64
            }
        })
        .collect();
    let nf = n as f64;
    let m = loo.iter().sum::<f64>() / nf;
    let var = (nf - 1.0) / nf * loo.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    Ok((value, Some(var.sqrt())))
}

/// Closed forms of the vMF-kernel Stein kernel against the uniform sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VmfSteinForm {
    /// `e^{κt}[(d-1)t(κt + d - 1) - κ(1 - t²)(κt + d)]`, from the intrinsic
    /// sphere divergence. Has zero mean under the uniform law.
    #[default]
    Intrinsic,
    /// `κ e^{κt}[κt³ + t² - κt + d - 2]`, an alternative closed form that
    /// omits the curvature term of the sphere divergence; its mean under the
    /// uniform law is not zero.
    Published,
}

/// Stein kernel of `exp(κ xᵀy)` on `S^{d-1}` as a function of `t = xᵀy`.
pub fn vmf_stein_kernel(kappa: f64, d: usize, t: f64, form: VmfSteinForm) -> f64 {
    (kappa * t).exp() * vmf_poly(kappa, d as f64, t, form).0
}

/// Polynomial factor `P(t)` (kernel is `e^{κt} P(t)`) and `P'(t)`.
pub(crate) fn vmf_poly(kappa: f64, d: f64, t: f64, form: VmfSteinForm) -> (f64, f64) {
    match form {
        VmfSteinForm::Intrinsic => {
            let p = (d - 1.0) * t * (kappa * t + d - 1.0) - kappa * (1.0 - t * t) * (kappa * t + d);
            let dp = 2.0 * (d - 1.0) * kappa * t + (d - 1.0).powi(2) - kappa * kappa
                + 3.0 * kappa * kappa * t * t
                + 2.0 * kappa * d * t;
            (p, dp)
        }
        VmfSteinForm::Published => {
            let q = kappa * t.powi(3) + t * t - kappa * t + d - 2.0;
            let dq = 3.0 * kappa * t * t + 2.0 * t - kappa;
            (kappa * q, kappa * dq)
        }
    }
}

/// Stein-kernel U/V statistic on sphere data against the uniform law.
pub fn vmf_stein_ksd(kappa: f64, x: &SampleBatch, form: VmfSteinForm, stat: Statistic) -> Result<DiscrepancyEstimate> {
    let t0 = Instant::now();
    if !(kappa > 0.0) || !kappa.is_finite() {
        return invalid(format!("kappa must be positive, got {kappa}"));
    }
    if x.n() < 2 || x.d() < 2 {
        return invalid("vMF Stein KSD needs n >= 2 and d >= 2");
    }
    x.require_sphere()?;
    let d = x.d() as f64;
    // e^{κt} = e^κ e^{κ(t-1)}; the common factor is applied at the end.
    let h = |t: f64| (kappa * (t - 1.0)).exp() * vmf_poly(kappa, d, t, form).0;
    let sums = pair_sums(x.n(), |i, j| Ok(h(dot(x.row(i), x.row(j)).clamp(-1.0, 1.0))))?;
    let diag = (stat == Statistic::V).then(|| vec![h(1.0); x.n()]);
    let scale = kappa.exp();
    let value = pair_mean(&sums, diag.as_deref()) * scale;
    let se = jackknife_se(&sums, diag.as_deref(), None).map(|s| s * scale);
    let name = format!("vmf-ksd-{}", stat.tag());
    Ok(DiscrepancyEstimate::new(&name, x.n(), x.d(), finite(value, &name)?, t0).with_se(se))
}
