//! Base kernels, their derivatives and spectral densities.
//!
//! Gaussian and IMQ kernels are radial, `k(x, y) = f(‖x - y‖²)`; the Stein
//! kernels in [`crate::ksd`] are assembled from `f` and its derivatives in
//! `t = r²`, which [`KernelSpec::radial_derivs`] exposes.

use std::f64::consts::PI;

use crate::batch::{dot, norm, sq_dist, SPHERE_TOL};
use crate::specfun::{kummer_half_d, ln_bessel_k, ln_gamma, KummerMode};
use crate::{invalid, unsupported, Error, Result, SampleBatch};

/// A base kernel with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `exp(-γ ‖x - y‖²)`.
    Gaussian { gamma: f64 },
    /// `(1 + α ‖x - y‖²)^{-β}`.
    Imq { alpha: f64, beta: f64 },
    /// `M(1/2; d/2; -γ ‖x - y‖²)`: the Gaussian kernel averaged over all
    /// one-dimensional projections.
    Kummer { gamma: f64, d: usize, mode: KummerMode },
    /// `exp(κ xᵀy)` on the unit sphere.
    Vmf { kappa: f64 },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        invalid(format!("{name} must be positive and finite, got {v}"))
    }
}

impl KernelSpec {
    pub fn gaussian(gamma: f64) -> Result<Self> {
        let k = Self::Gaussian { gamma };
        k.validate()?;
        Ok(k)
    }

    pub fn imq(alpha: f64, beta: f64) -> Result<Self> {
        let k = Self::Imq { alpha, beta };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Gaussian { gamma } => positive("gamma", gamma),
            Self::Imq { alpha, beta } => {
                positive("alpha", alpha)?;
                positive("beta", beta)
            }
            Self::Kummer { gamma, d, mode } => {
                positive("gamma", gamma)?;
                if d == 0 {
                    return invalid("Kummer kernel needs d >= 1");
                }
                if mode == KummerMode::ImqApprox && d < 4 {
                    return invalid(format!("ImqApprox needs d >= 4, got {d}"));
                }
                Ok(())
            }
            Self::Vmf { kappa } => positive("kappa", kappa),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian { .. } => "gaussian",
            Self::Imq { .. } => "imq",
            Self::Kummer { .. } => "kummer",
            Self::Vmf { .. } => "vmf",
        }
    }

    /// `f(t)` and its first three derivatives in `t = r²`, for the radial
    /// kernels that support differentiation.
    pub(crate) fn radial_derivs(&self, t: f64) -> [f64; 4] {
        match *self {
            Self::Gaussian { gamma } => {
                let f = (-gamma * t).exp();
                [f, -gamma * f, gamma * gamma * f, -gamma * gamma * gamma * f]
            }
            Self::Imq { alpha, beta } => {
                let base = 1.0 + alpha * t;
                let f = base.powf(-beta);
                let f1 = -alpha * beta * f / base;
                let f2 = -alpha * (beta + 1.0) * f1 / base;
                let f3 = -alpha * (beta + 2.0) * f2 / base;
                [f, f1, f2, f3]
            }
            _ => unreachable!("radial_derivs on a non-differentiable kernel"),
        }
    }

    pub(crate) fn supports_derivatives(&self) -> bool {
        matches!(self, Self::Gaussian { .. } | Self::Imq { .. })
    }

    /// Evaluation without argument checks; inputs are trusted.
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match *self {
            Self::Gaussian { gamma } => Ok((-gamma * sq_dist(x, y)).exp()),
            Self::Imq { alpha, beta } => Ok((1.0 + alpha * sq_dist(x, y)).powf(-beta)),
            Self::Kummer { gamma, d, mode } => kummer_half_d(gamma * sq_dist(x, y), d, mode),
            Self::Vmf { kappa } => Ok((kappa * dot(x, y)).exp()),
        }
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return invalid(format!("point dimensions differ: {} vs {}", x.len(), y.len()));
    }
    if x.is_empty() {
        return invalid("points must have dimension >= 1");
    }
    Ok(())
}

/// `k(x, y)`.
pub fn kernel_eval(k: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    k.validate()?;
    check_pair(x, y)?;
    match *k {
        KernelSpec::Kummer { d, .. } if d != x.len() => {
            invalid(format!("Kummer kernel built for d={d}, points have d={}", x.len()))
        }
        KernelSpec::Vmf { .. } => {
            for p in [x, y] {
                if (norm(p) - 1.0).abs() > SPHERE_TOL {
                    return invalid(format!("vMF kernel needs unit vectors, got norm {}", norm(p)));
                }
            }
            k.eval_unchecked(x, y)
        }
        _ => k.eval_unchecked(x, y),
    }
}

/// `∇_x k(x, y)` for Gaussian and IMQ kernels.
pub fn kernel_grad_x(k: &KernelSpec, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    k.validate()?;
    check_pair(x, y)?;
    if !k.supports_derivatives() {
        return unsupported(format!("kernel_grad_x is not available for the {} kernel", k.name()));
    }
    let t = sq_dist(x, y);
    let f1 = k.radial_derivs(t)[1];
    Ok(x.iter().zip(y).map(|(a, b)| 2.0 * f1 * (a - b)).collect())
}

/// `tr(∇_x ∇_yᵀ k(x, y))` for Gaussian and IMQ kernels.
///
/// For the IMQ kernel this is the full trace
/// `2αβd(1+αr²)^{-(β+1)} - 4α²β(β+1)r²(1+αr²)^{-(β+2)}`.
pub fn kernel_trace_hessian(k: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    k.validate()?;
    check_pair(x, y)?;
    if !k.supports_derivatives() {
        return unsupported(format!("kernel_trace_hessian is not available for the {} kernel", k.name()));
    }
    let t = sq_dist(x, y);
    let [_, f1, f2, _] = k.radial_derivs(t);
    Ok(-2.0 * x.len() as f64 * f1 - 4.0 * f2 * t)
}

/// Spectral density `ρ(ω)` with `k(x, y) = ∫ ρ(ω) e^{iωᵀ(x-y)} dω`.
///
/// Gaussian: `(4πγ)^{-d/2} exp(-‖ω‖²/(4γ))`. IMQ:
/// `2^{1-β} / (Γ(β) (2πα)^{d/2}) · w^ν K_ν(w)` with `w = ‖ω‖/√α`,
/// `ν = β - d/2`. At `ω = 0` the IMQ density is finite only for `β > d/2`.
pub fn spectral_density(k: &KernelSpec, omega: &[f64]) -> Result<f64> {
    k.validate()?;
    if omega.is_empty() {
        return invalid("frequency must have dimension >= 1");
    }
    let d = omega.len() as f64;
    let w2 = dot(omega, omega);
    match *k {
        KernelSpec::Gaussian { gamma } => {
            Ok((4.0 * PI * gamma).powf(-d / 2.0) * (-w2 / (4.0 * gamma)).exp())
        }
        KernelSpec::Imq { alpha, beta } => {
            let nu = beta - d / 2.0;
            let ln_pref = (1.0 - beta) * 2f64.ln() - ln_gamma(beta) - d / 2.0 * (2.0 * PI * alpha).ln();
            if w2 == 0.0 {
                if nu > 0.0 {
                    // w^ν K_ν(w) → 2^{ν-1} Γ(ν)
                    return Ok((ln_pref + (nu - 1.0) * 2f64.ln() + ln_gamma(nu)).exp());
                }
                return Err(Error::Range(format!(
                    "IMQ spectral density diverges at 0 for beta={beta} <= d/2={}",
                    d / 2.0
                )));
            }
            let w = (w2 / alpha).sqrt();
            // K_ν = K_{-ν}
            let ln_k = ln_bessel_k(nu.abs(), w)?;
            Ok((ln_pref + nu * w.ln() + ln_k).exp())
        }
        _ => unsupported(format!("spectral density is not available for the {} kernel", k.name())),
    }
}

/// Median of pairwise squared distances, the usual scale for the "median
/// heuristic" bandwidth `γ = 1 / median`. A convenience, not a recommended
/// default.
pub fn median_sq_distance(x: &SampleBatch) -> Result<f64> {
    if x.n() < 2 {
        return invalid("median heuristic needs at least two points");
    }
    let mut d2 = Vec::with_capacity(x.n() * (x.n() - 1) / 2);
    for i in 0..x.n() {
        for j in (i + 1)..x.n() {
            d2.push(sq_dist(x.row(i), x.row(j)));
        }
    }
    d2.sort_by(f64::total_cmp);
    let m = d2.len();
    Ok(if m % 2 == 1 { d2[m / 2] } else { 0.5 * (d2[m / 2 - 1] + d2[m / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::gauss_hermite;
    use crate::RngState;
    use proptest::prelude::*;
    use rand::Rng;

    const G: KernelSpec = KernelSpec::Gaussian { gamma: 1.0 };

    #[test]
    fn eval_spot_values() {
        assert_eq!(kernel_eval(&G, &[0.3, -1.0], &[0.3, -1.0]).unwrap(), 1.0);
        let imq = KernelSpec::imq(1.0, 0.5).unwrap();
        assert!((kernel_eval(&imq, &[3f64.sqrt()], &[0.0]).unwrap() - 0.5).abs() < 1e-15);
        let kum = KernelSpec::Kummer { gamma: 1.0, d: 2, mode: KummerMode::Exact };
        let v = kernel_eval(&kum, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((v - 0.645_035_270_449_150).abs() < 1e-13);
        let vmf = KernelSpec::Vmf { kappa: 2.0 };
        assert!((kernel_eval(&vmf, &[1.0, 0.0], &[1.0, 0.0]).unwrap() - 2f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn eval_errors() {
        assert!(kernel_eval(&G, &[0.0], &[0.0, 1.0]).is_err());
        let kum = KernelSpec::Kummer { gamma: 1.0, d: 3, mode: KummerMode::Exact };
        assert!(kernel_eval(&kum, &[0.0, 0.0], &[1.0, 0.0]).is_err());
        let vmf = KernelSpec::Vmf { kappa: 1.0 };
        assert!(kernel_eval(&vmf, &[2.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::imq(1.0, -1.0).is_err());
    }

    #[test]
    fn gradient_spot_values() {
        let g = kernel_grad_x(&KernelSpec::Gaussian { gamma: 0.5 }, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((g[0] + (-0.5f64).exp()).abs() < 1e-15 && g[1] == 0.0);
        let g = kernel_grad_x(&KernelSpec::imq(1.0, 1.0).unwrap(), &[2.0], &[0.0]).unwrap();
        assert!((g[0] + 0.16).abs() < 1e-15);
        assert!(kernel_grad_x(&G, &[1.0, 2.0], &[1.0, 2.0]).unwrap().iter().all(|&v| v == 0.0));
        let kum = KernelSpec::Kummer { gamma: 1.0, d: 1, mode: KummerMode::Exact };
        assert!(matches!(kernel_grad_x(&kum, &[1.0], &[0.0]), Err(Error::Unsupported(_))));
        assert!(matches!(
            kernel_trace_hessian(&KernelSpec::Vmf { kappa: 1.0 }, &[1.0], &[1.0]),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn trace_spot_values() {
        let th = kernel_trace_hessian(&KernelSpec::Gaussian { gamma: 0.5 }, &[0.0; 4], &[0.0; 4]).unwrap();
        assert!((th - 4.0).abs() < 1e-15);
        let th = kernel_trace_hessian(&G, &[1.0], &[0.0]).unwrap();
        assert!((th + 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        let th = kernel_trace_hessian(&KernelSpec::imq(1.0, 0.5).unwrap(), &[0.0; 2], &[0.0; 2]).unwrap();
        assert!((th - 2.0).abs() < 1e-15);
    }

    fn random_kernel(rng: &mut impl Rng) -> KernelSpec {
        if rng.random::<bool>() {
            KernelSpec::Gaussian { gamma: rng.random_range(0.05..2.0) }
        } else {
            KernelSpec::Imq { alpha: rng.random_range(0.1..2.0), beta: rng.random_range(0.2..2.0) }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = RngState::new(21).rng();
        let h = 1e-5;
        for _ in 0..200 {
            let k = random_kernel(&mut rng);
            let d = rng.random_range(1..5);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = kernel_grad_x(&k, &x, &y).unwrap();
            let gy = kernel_grad_x(&k, &y, &x).unwrap();
            for c in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += h;
                xm[c] -= h;
                let fd = (kernel_eval(&k, &xp, &y).unwrap() - kernel_eval(&k, &xm, &y).unwrap()) / (2.0 * h);
                assert!((fd - g[c]).abs() < 1e-6, "{k:?}: {fd} vs {}", g[c]);
                // ∇_y k(x, y) = ∇_x k(y, x) = -∇_x k(x, y)
                assert!((gy[c] + g[c]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn trace_matches_finite_differences() {
        let mut rng = RngState::new(22).rng();
        let h = 1e-4;
        for _ in 0..100 {
            let k = random_kernel(&mut rng);
            let d = rng.random_range(1..5);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
            let y: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
            let mut fd = 0.0;
            for c in 0..d {
                let shifted = |sx: f64, sy: f64| {
                    let mut xs = x.clone();
                    let mut ys = y.clone();
                    xs[c] += sx;
                    ys[c] += sy;
                    kernel_eval(&k, &xs, &ys).unwrap()
                };
                fd += (shifted(h, h) - shifted(h, -h) - shifted(-h, h) + shifted(-h, -h)) / (4.0 * h * h);
            }
            let th = kernel_trace_hessian(&k, &x, &y).unwrap();
            assert!((fd - th).abs() < 1e-4, "{k:?}: {fd} vs {th}");
        }
    }

    /// Symmetric Jacobi eigenvalue sweep; test-only.
    fn min_eigenvalue(mut a: Vec<Vec<f64>>) -> f64 {
        let n = a.len();
        for _ in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[p][q] * a[p][q];
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[i][i]).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn gram_matrices_are_psd() {
        let mut rng = RngState::new(23).rng();
        let d = 3;
        let pts: Vec<Vec<f64>> = (0..30).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let sphere: Vec<Vec<f64>> = pts.iter().map(|p| { let n = norm(p); p.iter().map(|v| v / n).collect() }).collect();
        let kernels = [
            (KernelSpec::Gaussian { gamma: 0.7 }, &pts),
            (KernelSpec::Imq { alpha: 1.0, beta: 0.5 }, &pts),
            (KernelSpec::Kummer { gamma: 0.7, d, mode: KummerMode::Exact }, &pts),
            (KernelSpec::Vmf { kappa: 1.5 }, &sphere),
        ];
        for (k, p) in kernels {
            let gram: Vec<Vec<f64>> =
                p.iter().map(|a| p.iter().map(|b| kernel_eval(&k, a, b).unwrap()).collect()).collect();
            let m = min_eigenvalue(gram);
            assert!(m >= -1e-8, "{k:?}: min eigenvalue {m}");
        }
    }

    #[test]
    fn kummer_kernel_is_slice_average() {
        let rs = RngState::new(31);
        for &d in &[2usize, 4, 16] {
            let mut rng = rs.split(d as u64).rng();
            let gamma = 0.8;
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let dirs = crate::sample_directions(100_000, d, &rs.split(100 + d as u64)).unwrap();
            let vals: Vec<f64> = dirs.rows().map(|t| (-gamma * dot(t, &diff).powi(2)).exp()).collect();
            let m = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / m;
            let se = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt();
            let exact = kernel_eval(&KernelSpec::Kummer { gamma, d, mode: KummerMode::Exact }, &x, &y).unwrap();
            assert!((mean - exact).abs() < 3.0 * se, "d={d}: MC {mean} ± {se} vs {exact}");
        }
    }

    #[test]
    fn gaussian_spectral_density() {
        let rho = spectral_density(&KernelSpec::Gaussian { gamma: 0.25 }, &[0.0]).unwrap();
        assert!((rho - 1.0 / PI.sqrt()).abs() < 1e-15);
        // ρ for γ = 1 is the N(0, 2) density: integrate with a rule scaled by √2.
        let rule = gauss_hermite(64).unwrap().rescaled(1.0).unwrap();
        let k = KernelSpec::Gaussian { gamma: 1.0 };
        let normal_pdf = |w: f64| (-w * w / 4.0).exp() / (4.0 * PI).sqrt();
        let mass = rule.integrate(|w| spectral_density(&k, &[w]).unwrap() / normal_pdf(w));
        assert!((mass - 1.0).abs() < 1e-8);
        let cf = rule.integrate(|w| (0.5 * w).cos() * spectral_density(&k, &[w]).unwrap() / normal_pdf(w));
        assert!((cf - (-0.25f64).exp()).abs() < 1e-6);
    }

    /// `∫_{-∞}^{∞} ρ(ω) cos(ωt) dω` for a 1-D density by Simpson on a wide
    /// truncated range.
    fn bochner_1d(k: &KernelSpec, t: f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let f = |w: f64| spectral_density(k, &[w]).unwrap() * (w * t).cos();
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
        }
        2.0 * acc * h / 3.0
    }

    #[test]
    fn imq_spectral_density_bochner() {
        // β > d/2 so the density is finite at 0; heavy tails decay like
        // exp(-|ω|/√α), integrate on [0, 60].
        for &(alpha, beta) in &[(1.0, 1.0), (0.5, 1.5), (2.0, 0.8)] {
            let k = KernelSpec::Imq { alpha, beta };
            for &t in &[0.0, 0.5, 1.7] {
                let got = bochner_1d(&k, t, 0.0, 60.0 * alpha.sqrt(), 400_000);
                let want = (1.0 + alpha * t * t).powf(-beta);
                assert!((got - want).abs() < 1e-6, "alpha={alpha} beta={beta} t={t}: {got} vs {want}");
            }
        }
        assert!(matches!(
            spectral_density(&KernelSpec::Imq { alpha: 1.0, beta: 0.5 }, &[0.0]),
            Err(Error::Range(_))
        ));
        assert!(spectral_density(&KernelSpec::Imq { alpha: 1.0, beta: 0.5 }, &[0.3]).unwrap() > 0.0);
    }

    #[test]
    fn imq_density_limit_is_continuous() {
        let k = KernelSpec::Imq { alpha: 1.3, beta: 2.0 };
        let at0 = spectral_density(&k, &[0.0, 0.0]).unwrap();
        let near = spectral_density(&k, &[1e-7, 0.0]).unwrap();
        assert!((at0 - near).abs() < 1e-9 * at0);
    }

    #[test]
    fn median_distance() {
        let b = SampleBatch::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(median_sq_distance(&b).unwrap(), 4.0);
    }

    proptest! {
        #[test]
        fn radial_kernels_bounded(gamma in 0.01f64..5.0, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let v = kernel_eval(&KernelSpec::Gaussian { gamma }, &[a], &[b]).unwrap();
            prop_assert!(v > 0.0 && v <= 1.0);
            let v = kernel_eval(&KernelSpec::Kummer { gamma, d: 5, mode: KummerMode::Exact }, &[a, 0.0, 0.0, 0.0, b], &[b, 0.0, 0.0, 0.0, a]).unwrap();
            prop_assert!(v > 0.0 && v <= 1.0);
        }
    }
}
