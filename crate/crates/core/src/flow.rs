//! Particle gradient flows on the alignment + `λ·Ω` objective.
//!
//! A batch of particles stands in for the embeddings of a self-supervised
//! encoder. Each step optionally forms noisy views of every particle (for
//! the alignment term), evaluates the regularizer `Ω` on the pooled views,
//! and moves every particle against `n·λ·∇Ω`. The `n` factor makes the step
//! size per particle independent of the batch size, since each particle's
//! share of `∇Ω` scales like `1/n`.

use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::batch::{dot, fill_unit_vector, norm, sq_dist};
use crate::ksd::{sliced_ksd_analytic_with, vmf_poly, vmf_stein_ksd, SlicedKsdOptions, SlicedKsdPair};
use crate::mmd::{mmd_gaussian_closed_form, mmd_kummer_analytic_sliced, mmd_vmf_sphere_energy, vmf_cross_term};
use crate::sliced::{sliced_reg, sliced_reg_fixed, sliced_reg_value_grad};
use crate::specfun::kummer_half_d_deriv;
use crate::{
    invalid, sample_directions, unsupported, DirectionSet, DiscrepancyEstimate, Error, KernelSpec, KummerMode, PriorKind,
    PriorSpec, Result, RngState, SampleBatch, SlicedRegSpec, Statistic, SteinKernelSpec, VmfSteinForm,
};

/// Which estimator serves as `Ω`.
#[derive(Debug, Clone, PartialEq)]
pub enum RegularizerKind {
    /// Gaussian-kernel MMD² to the Gaussian prior, closed form.
    Bhep { gamma: f64 },
    /// Analytic infinitely-sliced Gaussian MMD² to the Gaussian prior.
    KummerMmd { gamma: f64, mode: KummerMode },
    /// Finite-slice MMDReg or KSDReg; directions are redrawn every step.
    Sliced(SlicedRegSpec),
    /// Kernel Stein discrepancy with the flow's prior.
    Ksd { base: KernelSpec },
    /// Analytic infinitely-sliced KSD to the Gaussian prior.
    SlicedKsdAnalytic { gamma: f64, mode: KummerMode },
    /// vMF-kernel MMD² to the uniform sphere.
    VmfMmd { kappa: f64 },
    /// vMF-kernel Stein discrepancy to the uniform sphere.
    VmfKsd { kappa: f64, form: VmfSteinForm },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    /// Flows require [`Statistic::V`]; finite-slice kinds ignore it.
    pub statistic: Statistic,
}

impl RegularizerSpec {
    /// V-form regularizer, the form used inside losses.
    pub fn v(kind: RegularizerKind) -> Self {
        Self { kind, statistic: Statistic::V }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            RegularizerKind::Bhep { .. } => "bhep",
            RegularizerKind::KummerMmd { .. } => "kummer-mmd",
            RegularizerKind::Sliced(ref s) => match s.family {
                crate::SliceFamily::MmdReg => "sliced-mmd",
                crate::SliceFamily::KsdReg => "sliced-ksd",
            },
            RegularizerKind::Ksd { .. } => "ksd",
            RegularizerKind::SlicedKsdAnalytic { .. } => "sliced-ksd-analytic",
            RegularizerKind::VmfMmd { .. } => "vmf-mmd",
            RegularizerKind::VmfKsd { .. } => "vmf-ksd",
        }
    }

    /// Checks the regularizer against the prior it is used with.
    pub fn validate(&self, prior: &PriorSpec) -> Result<()> {
        prior.validate()?;
        let sphere = prior.kind == PriorKind::UniformSphere;
        match &self.kind {
            RegularizerKind::Bhep { .. } | RegularizerKind::KummerMmd { .. } | RegularizerKind::SlicedKsdAnalytic { .. } => {
                if !matches!(prior.kind, PriorKind::Gaussian { .. }) {
                    return unsupported(format!("{} needs a Gaussian prior, got {}", self.name(), prior.name()));
                }
            }
            RegularizerKind::Sliced(s) => {
                s.validate()?;
                if s.prior.d != prior.d {
                    return invalid(format!("sliced spec has d={}, prior has d={}", s.prior.d, prior.d));
                }
            }
            RegularizerKind::Ksd { base } => {
                SteinKernelSpec::new(*base, *prior)?;
            }
            RegularizerKind::VmfMmd { .. } | RegularizerKind::VmfKsd { .. } => {
                if !sphere {
                    return unsupported(format!("{} needs the uniform sphere prior", self.name()));
                }
            }
        }
        Ok(())
    }

    /// One evaluation of `Ω` with fresh directions from `rng` where needed.
    /// The vMF MMD includes its constant, so it is the full MMD².
    pub fn evaluate(&self, z: &SampleBatch, prior: &PriorSpec, rng: &RngState) -> Result<DiscrepancyEstimate> {
        self.validate(prior)?;
        let dirs = match &self.kind {
            RegularizerKind::Sliced(s) => Some(sample_directions(s.slices, z.d(), rng)?),
            _ => None,
        };
        let mut e = self.evaluate_fixed(z, prior, dirs.as_ref())?;
        if let RegularizerKind::Sliced(s) = &self.kind {
            e = DiscrepancyEstimate { seed: rng.seed, slices: s.slices, ..e };
        }
        Ok(e)
    }

    fn evaluate_fixed(&self, z: &SampleBatch, prior: &PriorSpec, dirs: Option<&DirectionSet>) -> Result<DiscrepancyEstimate> {
        let stat = self.statistic;
        match &self.kind {
            RegularizerKind::Bhep { gamma } => mmd_gaussian_closed_form(*gamma, prior.sigma(), z, stat),
            RegularizerKind::KummerMmd { gamma, mode } => mmd_kummer_analytic_sliced(*gamma, prior.sigma(), z, *mode, stat),
            RegularizerKind::Sliced(s) => match dirs {
                Some(d) => sliced_reg_fixed(s, z, d),
                None => sliced_reg(s, z, &RngState::new(0)),
            },
            RegularizerKind::Ksd { base } => crate::ksd::ksd_statistic(&SteinKernelSpec::new(*base, *prior)?, z, stat),
            RegularizerKind::SlicedKsdAnalytic { gamma, mode } => {
                let opts = SlicedKsdOptions { mode: *mode, statistic: stat, ..Default::default() };
                sliced_ksd_analytic_with(*gamma, prior.sigma(), z, opts)
            }
            RegularizerKind::VmfMmd { kappa } => {
                let e = mmd_vmf_sphere_energy(*kappa, z, stat)?;
                let c = vmf_cross_term(*kappa, z.d())?;
                Ok(DiscrepancyEstimate { value: e.value - c, estimator: format!("vmf-mmd-{}", stat.tag()), ..e })
            }
            RegularizerKind::VmfKsd { kappa, form } => vmf_stein_ksd(*kappa, z, *form, stat),
        }
    }

    /// `Ω` and its gradient (added into `grad`, row-major like `z.data()`).
    pub(crate) fn value_grad(&self, z: &SampleBatch, prior: &PriorSpec, dirs: Option<&DirectionSet>, grad: &mut [f64]) -> Result<()> {
        let (n, d) = (z.n(), z.d());
        let stat = self.statistic;
        match &self.kind {
            RegularizerKind::Bhep { gamma } => {
                let g = *gamma;
                let s2 = prior.sigma().powi(2);
                let a = 1.0 + 2.0 * g * s2;
                let pref = a.powf(-(d as f64) / 2.0);
                pair_grad(z, stat, grad, |i, j, out| {
                    let (x, y) = (z.row(i), z.row(j));
                    let h = (-g * sq_dist(x, y)).exp();
                    for k in 0..d {
                        out[k] += -2.0 * g * (x[k] - y[k]) * h;
                    }
                    Ok(())
                }, |_, _| Ok(()))?;
                unary_grad(z, -2.0, grad, |x, out| {
                    let u = pref * (-g * dot(x, x) / a).exp();
                    for k in 0..d {
                        out[k] += u * (-2.0 * g * x[k] / a);
                    }
                    Ok(())
                })
            }
            RegularizerKind::KummerMmd { gamma, mode } => {
                let (g, mode) = (*gamma, *mode);
                let s2 = prior.sigma().powi(2);
                let a = 1.0 + 2.0 * g * s2;
                pair_grad(z, stat, grad, |i, j, out| {
                    let (x, y) = (z.row(i), z.row(j));
                    let (_, dm) = kummer_half_d_deriv(g * sq_dist(x, y), d, mode)?;
                    for k in 0..d {
                        out[k] += dm * 2.0 * g * (x[k] - y[k]);
                    }
                    Ok(())
                }, |_, _| Ok(()))?;
                unary_grad(z, -2.0, grad, |x, out| {
                    let (_, dm) = kummer_half_d_deriv(g * dot(x, x) / a, d, mode)?;
                    for k in 0..d {
                        out[k] += dm * 2.0 * g * x[k] / (a * a.sqrt());
                    }
                    Ok(())
                })
            }
            RegularizerKind::Sliced(s) => {
                let dirs = dirs.ok_or_else(|| Error::InvalidArgument("sliced gradient needs directions".into()))?;
                sliced_reg_value_grad(s, z, dirs, grad).map(|_| ())
            }
            RegularizerKind::Ksd { base } => {
                let s = SteinKernelSpec::new(*base, *prior)?;
                let mut sc = vec![0.0; n * d];
                for (row, o) in z.rows().zip(sc.chunks_exact_mut(d)) {
                    prior.score_into(row, o);
                }
                let score_of = |i: usize| &sc[i * d..(i + 1) * d];
                pair_grad(z, stat, grad, |i, j, out| {
                    let (x, y) = (z.row(i), z.row(j));
                    s.pair_grad_x(x, y, score_of(i), score_of(j), 1.0, out, &mut Vec::new());
                    Ok(())
                }, |i, out| {
                    let x = z.row(i);
                    s.pair_grad_x(x, x, score_of(i), score_of(i), 2.0, out, &mut Vec::new());
                    Ok(())
                })
            }
            RegularizerKind::SlicedKsdAnalytic { gamma, mode } => {
                let pair = SlicedKsdPair {
                    gamma: *gamma,
                    sigma: prior.sigma(),
                    d,
                    opts: SlicedKsdOptions { mode: *mode, statistic: stat, ..Default::default() },
                };
                let s4 = prior.sigma().powi(4);
                pair_grad(z, stat, grad, |i, j, out| pair.grad_x(z.row(i), z.row(j), 1.0, out), |i, out| {
                    let x = z.row(i);
                    for k in 0..d {
                        out[k] += 2.0 * x[k] / (d as f64 * s4);
                    }
                    Ok(())
                })
            }
            RegularizerKind::VmfMmd { kappa } => {
                let kp = *kappa;
                // Scaled by e^κ like the estimator.
                pair_grad(z, stat, grad, |i, j, out| {
                    let (x, y) = (z.row(i), z.row(j));
                    let e = (kp * (dot(x, y) - 1.0)).exp() * kp.exp();
                    for k in 0..d {
                        out[k] += kp * y[k] * e;
                    }
                    Ok(())
                }, |i, out| {
                    let x = z.row(i);
                    for k in 0..d {
                        out[k] += 2.0 * kp * x[k] * kp.exp();
                    }
                    Ok(())
                })
            }
            RegularizerKind::VmfKsd { kappa, form } => {
                let (kp, form) = (*kappa, *form);
                let df = d as f64;
                let dh = |t: f64| {
                    let (p, dp) = vmf_poly(kp, df, t, form);
                    kp.exp() * (kp * (t - 1.0)).exp() * (kp * p + dp)
                };
                pair_grad(z, stat, grad, |i, j, out| {
                    let (x, y) = (z.row(i), z.row(j));
                    let h1 = dh(dot(x, y).clamp(-1.0, 1.0));
                    for k in 0..d {
                        out[k] += h1 * y[k];
                    }
                    Ok(())
                }, |i, out| {
                    let x = z.row(i);
                    let h1 = dh(1.0);
                    for k in 0..d {
                        out[k] += 2.0 * h1 * x[k];
                    }
                    Ok(())
                })
            }
        }
    }
}

/// Adds the gradient of a pair mean: `coef·(2 Σ_{j≠i} ∂₁h(x_i, x_j) + [V] ∇h(x_i, x_i))`
/// with `coef = 1/(n(n-1))` (U) or `1/n²` (V).
fn pair_grad<P, D>(z: &SampleBatch, stat: Statistic, grad: &mut [f64], d1: P, diag: D) -> Result<()>
where
    P: Fn(usize, usize, &mut [f64]) -> Result<()> + Sync,
    D: Fn(usize, &mut [f64]) -> Result<()> + Sync,
{
    let (n, d) = (z.n(), z.d());
    let nf = n as f64;
    let coef = match stat {
        Statistic::U => 1.0 / (nf * (nf - 1.0)),
        Statistic::V => 1.0 / (nf * nf),
    };
    grad.par_chunks_mut(d).enumerate().try_for_each(|(i, g)| -> Result<()> {
        let mut acc = vec![0.0; d];
        for j in 0..n {
            if j != i {
                d1(i, j, &mut acc)?;
            }
        }
        for v in acc.iter_mut() {
            *v *= 2.0;
        }
        if stat == Statistic::V {
            diag(i, &mut acc)?;
        }
        for k in 0..d {
            g[k] += coef * acc[k];
        }
        Ok(())
    })
}

/// Adds the gradient of `scale · (1/n) Σ_i u(x_i)`.
fn unary_grad<U>(z: &SampleBatch, scale: f64, grad: &mut [f64], u: U) -> Result<()>
where
    U: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    let d = z.d();
    let c = scale / z.n() as f64;
    grad.par_chunks_mut(d).enumerate().try_for_each(|(i, g)| -> Result<()> {
        let mut acc = vec![0.0; d];
        u(z.row(i), &mut acc)?;
        for k in 0..d {
            g[k] += c * acc[k];
        }
        Ok(())
    })
}

/// Squared Euclidean distance between two embeddings.
pub fn alignment_loss(za: &[f64], zb: &[f64]) -> Result<f64> {
    if za.len() != zb.len() {
        return invalid(format!("dimension mismatch: {} vs {}", za.len(), zb.len()));
    }
    Ok(sq_dist(za, zb))
}

/// Mean alignment over all view pairs within each group, plus `λ·Ω` on
/// the pooled views. Each group is a batch whose rows are views of one
/// instance.
pub fn ssl_objective(views: &[SampleBatch], lambda: f64, omega: &RegularizerSpec, prior: &PriorSpec, rng: &RngState) -> Result<f64> {
    if views.is_empty() {
        return invalid("no view groups");
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return invalid(format!("lambda must be finite and >= 0, got {lambda}"));
    }
    let d = views[0].d();
    let mut align = 0.0;
    let mut pooled = Vec::new();
    for (l, g) in views.iter().enumerate() {
        if g.n() < 2 {
            return invalid(format!("view group {l} has {} views; at least 2 are needed", g.n()));
        }
        if g.d() != d {
            return invalid(format!("view group {l} has d={}, expected {d}", g.d()));
        }
        let mut acc = 0.0;
        for a in 0..g.n() {
            for b in (a + 1)..g.n() {
                acc += alignment_loss(g.row(a), g.row(b))?;
            }
        }
        align += acc / (g.n() * (g.n() - 1) / 2) as f64;
        pooled.extend_from_slice(g.data());
    }
    align /= views.len() as f64;
    if lambda == 0.0 {
        return Ok(align);
    }
    let n = pooled.len() / d;
    let z = SampleBatch::new(pooled, n, d)?;
    Ok(align + lambda * omega.evaluate(&z, prior, rng)?.value)
}

/// Particles plus optimizer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub particles: SampleBatch,
    /// Views per particle for the alignment term; 1 disables it.
    pub views_per_particle: usize,
    pub step: usize,
    pub lambda: f64,
    pub step_size: f64,
}

impl FlowState {
    pub fn new(particles: SampleBatch, lambda: f64, step_size: f64) -> Result<Self> {
        let s = Self { particles, views_per_particle: 1, step: 0, lambda, step_size };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return invalid(format!("step_size must be positive, got {}", self.step_size));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return invalid(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if self.views_per_particle == 0 {
            return invalid("views_per_particle must be at least 1");
        }
        Ok(())
    }
}

/// Starting configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialDistribution {
    /// Every particle at the origin (or at the first basis vector on the
    /// sphere), plus `1e-3·σ` jitter so that pairwise gradients are nonzero.
    Collapsed,
    /// Draws from the prior.
    Prior,
    /// Tight cluster around the first basis vector, projected to the sphere.
    SphereCluster,
}

pub fn initial_particles(init: InitialDistribution, n: usize, prior: &PriorSpec, rng: &RngState) -> Result<SampleBatch> {
    prior.validate()?;
    let d = prior.d;
    let sphere = prior.kind == PriorKind::UniformSphere;
    let scale = if sphere { 1.0 } else { prior.sigma() };
    let mut r = rng.rng();
    let jittered = |spread: f64, r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        let mut data = vec![0.0; n * d];
        for row in data.chunks_exact_mut(d) {
            for v in row.iter_mut() {
                let e: f64 = StandardNormal.sample(r);
                *v = spread * e;
            }
            if sphere {
                row[0] += 1.0;
                let l = norm(row);
                row.iter_mut().for_each(|v| *v /= l);
            }
        }
        data
    };
    let data = match init {
        InitialDistribution::Prior => return prior.sample(n, rng),
        InitialDistribution::Collapsed => jittered(1e-3 * scale, &mut r),
        InitialDistribution::SphereCluster => {
            if !sphere {
                return invalid("sphere-cluster initialization needs the uniform sphere prior");
            }
            jittered(0.2, &mut r)
        }
    };
    SampleBatch::new(data, n, d)
}

/// How `∇Ω` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    #[default]
    Analytic,
    /// Central differences of the estimator with step `1e-4·scale`.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    /// Log a trajectory row every this many steps (and at the end).
    pub log_every: usize,
    pub gradient: GradientMode,
    /// View jitter in units of the prior scale.
    pub view_jitter: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { log_every: 100, gradient: GradientMode::Analytic, view_jitter: 0.1 }
    }
}

/// One logged checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub objective: f64,
    /// `‖mean particle‖`.
    pub mean_norm: f64,
    /// Mean over coordinates of the per-coordinate variance.
    pub var_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub state: FlowState,
    pub trajectory: Vec<TrajectoryPoint>,
}

pub fn flow_run(initial: FlowState, omega: &RegularizerSpec, prior: &PriorSpec, steps: usize, rng: &RngState) -> Result<FlowResult> {
    flow_run_with(initial, omega, prior, steps, rng, &FlowOptions::default())
}

pub fn flow_run_with(
    initial: FlowState,
    omega: &RegularizerSpec,
    prior: &PriorSpec,
    steps: usize,
    rng: &RngState,
    opts: &FlowOptions,
) -> Result<FlowResult> {
    initial.validate()?;
    omega.validate(prior)?;
    if steps == 0 {
        return invalid("steps must be at least 1");
    }
    if opts.log_every == 0 {
        return invalid("log_every must be at least 1");
    }
    if omega.statistic != Statistic::V && !matches!(omega.kind, RegularizerKind::Sliced(_)) {
        return invalid("flows need the V-form regularizer");
    }
    let mut state = initial;
    let (n, d) = (state.particles.n(), state.particles.d());
    if d != prior.d {
        return invalid(format!("particles have d={d}, prior has d={}", prior.d));
    }
    let sphere = prior.kind == PriorKind::UniformSphere;
    if sphere {
        state.particles.require_sphere()?;
    }
    let scale = if sphere { 1.0 } else { prior.sigma() };
    let v = state.views_per_particle;
    let mut trajectory = Vec::new();
    let mut data = state.particles.data().to_vec();
    for step in 0..=steps {
        let step_rng = rng.split(step as u64);
        // Views: the particles themselves, or jittered copies.
        let views = if v == 1 {
            state.particles.clone()
        } else {
            let mut r = step_rng.split(u64::MAX).rng();
            let mut vd = Vec::with_capacity(n * v * d);
            for row in state.particles.rows() {
                for _ in 0..v {
                    vd.extend(row.iter().map(|&x| x + opts.view_jitter * scale * Distribution::<f64>::sample(&StandardNormal, &mut r)));
                }
            }
            if sphere {
                for row in vd.chunks_exact_mut(d) {
                    let l = norm(row);
                    row.iter_mut().for_each(|x| *x /= l);
                }
            }
            SampleBatch::new(vd, n * v, d)?
        };
        let dirs = match &omega.kind {
            RegularizerKind::Sliced(s) => Some(sample_directions(s.slices, d, &step_rng)?),
            _ => None,
        };
        let log_now = step % opts.log_every == 0 || step == steps;
        if log_now {
            let omega_v = if state.lambda > 0.0 { omega.evaluate_fixed(&views, prior, dirs.as_ref())?.value } else { 0.0 };
            let align = if v > 1 { alignment_mean(&views, v) } else { 0.0 };
            let objective = align + state.lambda * omega_v;
            let (mean_norm, var_mean) = moments(&state.particles);
            if !objective.is_finite() {
                return Err(Error::Diverged { step, msg: format!("objective is {objective}") });
            }
            trajectory.push(TrajectoryPoint { step, objective, mean_norm, var_mean });
        }
        if step == steps {
            break;
        }
        if state.lambda == 0.0 {
            state.step += 1;
            continue;
        }
        let mut grad = vec![0.0; n * v * d];
        match opts.gradient {
            GradientMode::Analytic => omega.value_grad(&views, prior, dirs.as_ref(), &mut grad)?,
            GradientMode::FiniteDifference => fd_grad(omega, &views, prior, dirs.as_ref(), 1e-4 * scale, &mut grad)?,
        }
        let eta = state.step_size * n as f64 * state.lambda;
        for i in 0..n {
            let x = &mut data[i * d..(i + 1) * d];
            let mut g = vec![0.0; d];
            for w in 0..v {
                let gv = &grad[(i * v + w) * d..(i * v + w + 1) * d];
                for k in 0..d {
                    g[k] += gv[k];
                }
            }
            if sphere {
                let radial = dot(&g, x);
                for k in 0..d {
                    g[k] -= radial * x[k];
                }
            }
            for k in 0..d {
                x[k] -= eta * g[k];
            }
            if sphere {
                let l = norm(x);
                x.iter_mut().for_each(|c| *c /= l);
            }
        }
        if let Some(bad) = data.iter().position(|c| !c.is_finite()) {
            return Err(Error::Diverged { step: step + 1, msg: format!("particle {} has a non-finite coordinate", bad / d) });
        }
        state.particles = SampleBatch::new(data.clone(), n, d)?;
        state.step += 1;
    }
    Ok(FlowResult { state, trajectory })
}

fn alignment_mean(views: &SampleBatch, v: usize) -> f64 {
    let groups = views.n() / v;
    let mut total = 0.0;
    for g in 0..groups {
        let mut acc = 0.0;
        for a in 0..v {
            for b in (a + 1)..v {
                acc += sq_dist(views.row(g * v + a), views.row(g * v + b));
            }
        }
        total += acc / (v * (v - 1) / 2) as f64;
    }
    total / groups as f64
}

fn moments(z: &SampleBatch) -> (f64, f64) {
    let var = z.variance();
    (norm(&z.mean()), var.iter().sum::<f64>() / var.len() as f64)
}

/// Central-difference gradient of `Ω` over every coordinate.
pub(crate) fn fd_grad(omega: &RegularizerSpec, z: &SampleBatch, prior: &PriorSpec, dirs: Option<&DirectionSet>, h: f64, grad: &mut [f64]) -> Result<()> {
    let (n, d) = (z.n(), z.d());
    let base = z.data().to_vec();
    let sphere = prior.kind == PriorKind::UniformSphere;
    let eval = |data: Vec<f64>| -> Result<f64> { Ok(omega.evaluate_fixed(&SampleBatch::new(data, n, d)?, prior, dirs)?.value) };
    // On the sphere the perturbed row is retracted, which yields the
    // tangent component of the gradient.
    let bump = |c: usize, delta: f64| {
        let mut v = base.clone();
        v[c] += delta;
        if sphere {
            let row = &mut v[(c / d) * d..(c / d + 1) * d];
            let l = norm(row);
            row.iter_mut().for_each(|x| *x /= l);
        }
        v
    };
    for c in 0..base.len() {
        let (p, m) = (bump(c, h), bump(c, -h));
        grad[c] += (eval(p)? - eval(m)?) / (2.0 * h);
    }
    Ok(())
}

/// Writes the trajectory CSV: `#`-prefixed metadata lines, then
/// `step,objective,mean_norm,var_mean`.
pub fn write_trajectory<W: Write>(mut w: W, meta: &[(&str, String)], rows: &[TrajectoryPoint]) -> Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}: {v}")?;
    }
    writeln!(w, "step,objective,mean_norm,var_mean")?;
    for r in rows {
        writeln!(w, "{},{:.16e},{:.16e},{:.16e}", r.step, r.objective, r.mean_norm, r.var_mean)?;
    }
    Ok(())
}

pub fn save_trajectory(path: &Path, meta: &[(&str, String)], rows: &[TrajectoryPoint]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_trajectory(&mut w, meta, rows)?;
    w.flush()?;
    Ok(())
}

/// Unit vector helper for callers building sphere batches.
pub fn random_unit_vector(d: usize, rng: &RngState) -> Vec<f64> {
    let mut out = vec![0.0; d];
    fill_unit_vector(&mut rng.rng(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::gauss_hermite;
    use crate::{SliceFamily, SliceScoreMode};

    #[test]
    fn alignment_spot_values() {
        assert_eq!(alignment_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(alignment_loss(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert_eq!(alignment_loss(&[3.0], &[0.0]).unwrap(), 9.0);
        assert!(alignment_loss(&[3.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn ssl_objective_examples() {
        let prior = PriorSpec::gaussian(4, 1.0).unwrap();
        let omega = RegularizerSpec::v(RegularizerKind::Bhep { gamma: 0.5 });
        let rng = RngState::new(1);
        let g1 = SampleBatch::from_rows(&[vec![0.0, 0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0, 3.0]]).unwrap();
        let g2 = SampleBatch::from_rows(&[vec![1.0, 0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0], vec![1.0, 1.0, 0.0, 0.0]]).unwrap();
        // (4 + (0 + 1 + 1)/3) / 2
        let v = ssl_objective(&[g1.clone(), g2], 0.0, &omega, &prior, &rng).unwrap();
        assert!((v - (4.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);

        let a = SampleBatch::repeated(&[1.0, 2.0, 0.0, 0.0], 2).unwrap();
        let b = SampleBatch::repeated(&[-1.0, 0.5, 3.0, 0.0], 2).unwrap();
        assert_eq!(ssl_objective(&[a, b], 0.0, &omega, &prior, &rng).unwrap(), 0.0);

        // Collapsed at the origin: V-form BHEP is 1 - 2(1+2γσ²)^{-d/2} + (1+4γσ²)^{-d/2}
        // for every batch size.
        let groups: Vec<SampleBatch> = (0..10).map(|_| SampleBatch::new(vec![0.0; 12], 3, 4).unwrap()).collect();
        let v = ssl_objective(&groups, 2.0, &omega, &prior, &rng).unwrap();
        let want = 1.0 - 2.0 * 2f64.powf(-2.0) + 3f64.powf(-2.0);
        assert!((v - 2.0 * want).abs() < 1e-14, "{v} vs {}", 2.0 * want);
        assert!(want > 0.0);

        let single = SampleBatch::new(vec![0.0; 4], 1, 4).unwrap();
        assert!(ssl_objective(&[single], 1.0, &omega, &prior, &rng).is_err());
    }

    fn regularizers(prior: &PriorSpec) -> Vec<RegularizerSpec> {
        let d = prior.d;
        let mut out = vec![];
        if prior.kind == PriorKind::UniformSphere {
            out.push(RegularizerKind::VmfMmd { kappa: 1.5 });
            out.push(RegularizerKind::VmfKsd { kappa: 1.5, form: VmfSteinForm::Intrinsic });
            out.push(RegularizerKind::VmfKsd { kappa: 0.7, form: VmfSteinForm::Published });
        } else {
            out.push(RegularizerKind::Bhep { gamma: 0.4 });
            out.push(RegularizerKind::KummerMmd { gamma: 0.4, mode: KummerMode::Exact });
            if d >= 4 {
                out.push(RegularizerKind::KummerMmd { gamma: 0.4, mode: KummerMode::ImqApprox });
            }
            out.push(RegularizerKind::Ksd { base: KernelSpec::Gaussian { gamma: 0.4 } });
            out.push(RegularizerKind::Ksd { base: KernelSpec::Imq { alpha: 0.8, beta: 0.5 } });
            out.push(RegularizerKind::SlicedKsdAnalytic { gamma: 0.3, mode: KummerMode::Exact });
            for family in [SliceFamily::MmdReg, SliceFamily::KsdReg] {
                let mut s = SlicedRegSpec::new(family, *prior, 6, gauss_hermite(9).unwrap()).unwrap();
                s.score_mode = SliceScoreMode::ProjectedAmbient;
                out.push(RegularizerKind::Sliced(s));
            }
        }
        let mut all: Vec<RegularizerSpec> = out.iter().cloned().map(RegularizerSpec::v).collect();
        for k in out {
            if !matches!(k, RegularizerKind::Sliced(_)) {
                all.push(RegularizerSpec { kind: k, statistic: Statistic::U });
            }
        }
        all
    }

    /// Analytic gradients agree with central differences of the estimators.
    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut configs = 0;
        for (k, prior) in [PriorSpec::gaussian(4, 1.0).unwrap(), PriorSpec::gaussian(3, 1.4).unwrap(), PriorSpec::uniform_sphere(3).unwrap()]
            .into_iter()
            .enumerate()
        {
            for omega in regularizers(&prior) {
                for rep in 0..4u64 {
                    let seed = 100 * k as u64 + rep;
                    let z = prior.sample(7, &RngState::new(seed)).unwrap();
                    let z = if prior.kind == PriorKind::UniformSphere {
                        z
                    } else {
                        SampleBatch::new(z.data().iter().map(|v| 0.8 * v + 0.3).collect(), 7, prior.d).unwrap()
                    };
                    let dirs = match &omega.kind {
                        RegularizerKind::Sliced(s) => Some(sample_directions(s.slices, prior.d, &RngState::new(seed + 7)).unwrap()),
                        _ => None,
                    };
                    let mut ga = vec![0.0; z.data().len()];
                    omega.value_grad(&z, &prior, dirs.as_ref(), &mut ga).unwrap();
                    if prior.kind == PriorKind::UniformSphere {
                        for (g, x) in ga.chunks_exact_mut(prior.d).zip(z.rows()) {
                            let r = dot(g, x);
                            g.iter_mut().zip(x).for_each(|(a, b)| *a -= r * b);
                        }
                    }
                    let mut gf = vec![0.0; z.data().len()];
                    fd_grad(&omega, &z, &prior, dirs.as_ref(), 1e-5, &mut gf).unwrap();
                    let scale = gf.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    for (a, f) in ga.iter().zip(&gf) {
                        assert!((a - f).abs() <= 1e-5 * scale.max(1e-3), "{omega:?}: {a} vs {f}");
                    }
                    configs += 1;
                }
            }
        }
        assert!(configs >= 50);
    }

    #[test]
    fn zero_lambda_leaves_particles_unchanged() {
        let prior = PriorSpec::gaussian(3, 1.0).unwrap();
        let z = prior.sample(20, &RngState::new(3)).unwrap();
        let st = FlowState::new(z.clone(), 0.0, 0.1).unwrap();
        let r = flow_run(st, &RegularizerSpec::v(RegularizerKind::Bhep { gamma: 0.5 }), &prior, 50, &RngState::new(4)).unwrap();
        assert_eq!(r.state.particles, z);
        assert!(r.trajectory.windows(2).all(|w| w[0].objective == w[1].objective));
    }

    #[test]
    fn collapsed_bhep_flow_reaches_prior_variance() {
        let prior = PriorSpec::gaussian(4, 1.0).unwrap();
        let z = initial_particles(InitialDistribution::Collapsed, 256, &prior, &RngState::new(1)).unwrap();
        let st = FlowState::new(z, 1.0, 0.5).unwrap();
        let r = flow_run(st, &RegularizerSpec::v(RegularizerKind::Bhep { gamma: 0.5 }), &prior, 2000, &RngState::new(2)).unwrap();
        let last = r.trajectory.last().unwrap();
        assert_eq!(last.step, 2000);
        assert!((0.7..=1.3).contains(&last.var_mean), "{last:?}");
        assert!(r.trajectory[0].objective > 100.0 * last.objective);
    }

    #[test]
    fn views_and_finite_difference_mode_run() {
        let prior = PriorSpec::gaussian(2, 1.0).unwrap();
        let z = initial_particles(InitialDistribution::Prior, 12, &prior, &RngState::new(5)).unwrap();
        let mut st = FlowState::new(z, 1.0, 0.2).unwrap();
        st.views_per_particle = 2;
        let omega = RegularizerSpec::v(RegularizerKind::Bhep { gamma: 0.5 });
        let opts = FlowOptions { log_every: 1, ..Default::default() };
        let a = flow_run_with(st.clone(), &omega, &prior, 3, &RngState::new(6), &opts).unwrap();
        let fd = FlowOptions { gradient: GradientMode::FiniteDifference, ..opts };
        let b = flow_run_with(st, &omega, &prior, 3, &RngState::new(6), &fd).unwrap();
        for (x, y) in a.state.particles.data().iter().zip(b.state.particles.data()) {
            assert!((x - y).abs() < 1e-8);
        }
        // Jittered views put a positive alignment term into the objective.
        assert!(a.trajectory[0].objective > 0.0);
    }

    #[test]
    fn sphere_flow_spreads_a_cluster() {
        let prior = PriorSpec::uniform_sphere(3).unwrap();
        let z = initial_particles(InitialDistribution::SphereCluster, 64, &prior, &RngState::new(7)).unwrap();
        let st = FlowState::new(z, 1.0, 0.002).unwrap();
        let omega = RegularizerSpec::v(RegularizerKind::VmfKsd { kappa: 1.0, form: VmfSteinForm::Intrinsic });
        let opts = FlowOptions { log_every: 50, ..Default::default() };
        let r = flow_run_with(st, &omega, &prior, 500, &RngState::new(8), &opts).unwrap();
        assert!(r.state.particles.is_on_sphere(1e-12));
        let norms: Vec<f64> = r.trajectory.iter().map(|p| p.mean_norm).collect();
        assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
        assert!(norms.last().unwrap() < &(0.5 * norms[0]));
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let prior = PriorSpec::gaussian(2, 1.0).unwrap();
        let z = initial_particles(InitialDistribution::Prior, 16, &prior, &RngState::new(9)).unwrap();
        let st = FlowState::new(z, 1.0, 1e300).unwrap();
        let omega = RegularizerSpec::v(RegularizerKind::Ksd { base: KernelSpec::Imq { alpha: 1.0, beta: 0.5 } });
        match flow_run(st, &omega, &prior, 10, &RngState::new(10)) {
            Err(Error::Diverged { step, .. }) => assert!(step >= 1 && step <= 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_configurations() {
        let prior = PriorSpec::gaussian(2, 1.0).unwrap();
        let z = prior.sample(8, &RngState::new(1)).unwrap();
        let st = FlowState::new(z, 1.0, 0.1).unwrap();
        let bhep = RegularizerKind::Bhep { gamma: 0.5 };
        assert!(flow_run(st.clone(), &RegularizerSpec::v(bhep.clone()), &prior, 0, &RngState::new(1)).is_err());
        let u = RegularizerSpec { kind: bhep, statistic: Statistic::U };
        assert!(flow_run(st.clone(), &u, &prior, 5, &RngState::new(1)).is_err());
        let vmf = RegularizerSpec::v(RegularizerKind::VmfMmd { kappa: 1.0 });
        assert!(flow_run(st, &vmf, &prior, 5, &RngState::new(1)).is_err());
        assert!(FlowState::new(prior.sample(2, &RngState::new(1)).unwrap(), 1.0, 0.0).is_err());
    }

    #[test]
    fn trajectory_csv_layout() {
        let rows = [TrajectoryPoint { step: 0, objective: 0.5, mean_norm: 0.0, var_mean: 1.0 / 3.0 }];
        let mut out = Vec::new();
        write_trajectory(&mut out, &[("regularizer", "bhep".into())], &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# regularizer: bhep");
        assert_eq!(lines[1], "step,objective,mean_norm,var_mean");
        let last: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(last[0], "0");
        assert_eq!(last[3].parse::<f64>().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn collapse_scores_above_null() {
        let prior = PriorSpec::gaussian(4, 1.0).unwrap();
        for omega in regularizers(&prior).into_iter().filter(|o| o.statistic == Statistic::V) {
            let collapsed = SampleBatch::repeated(&[0.0; 4], 64).unwrap();
            let c = omega.evaluate(&collapsed, &prior, &RngState::new(1)).unwrap().value;
            let nulls: Vec<f64> = (0..20u64)
                .map(|r| omega.evaluate(&prior.sample(64, &RngState::new(50 + r)).unwrap(), &prior, &RngState::new(90 + r)).unwrap().value)
                .collect();
            let m = nulls.iter().sum::<f64>() / 20.0;
            let sd = (nulls.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 19.0).sqrt();
            assert!(c > m + 5.0 * sd, "{}: collapsed {c} vs null {m} ± {sd}", omega.name());
        }
    }
}
