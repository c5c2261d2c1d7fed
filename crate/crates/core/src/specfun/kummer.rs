//! Kummer's confluent hypergeometric function `M(a; b; z)` for `z <= 0`.
//!
//! For `z = -x` the Kummer transformation `M(a;b;-x) = e^{-x} M(b-a; b; x)`
//! turns the alternating Taylor series into one with non-negative terms when
//! `b >= a`, which is the case for every parameter pair used by the
//! estimators. The running sum is rescaled to stay finite, so arguments of
//! order `10^4` need no special handling. For large `x` the algebraic
//! asymptotic expansion is used whenever it converges to full precision.

use crate::{invalid, Error, Result};

use super::ln_gamma;

/// Relative accuracy target for `|z| <= 50`.
pub const KUMMER_REL_TOL_MODERATE: f64 = 1e-10;
/// Relative accuracy target for `|z| <= 10^4`.
pub const KUMMER_REL_TOL_WIDE: f64 = 1e-6;

/// Above this `|z|` the asymptotic expansion is tried first.
const ASYMPTOTIC_MIN_X: f64 = 1000.0;

/// How `M(1/2; d/2; -c)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KummerMode {
    /// Series / asymptotic evaluation of the hypergeometric function.
    #[default]
    Exact,
    /// The inverse-multiquadric surrogate `(1 + 4c/(2d-3))^{-1/2}`, `d >= 4`.
    ImqApprox,
}

/// `M(a; b; z)` for `b > 0` and `z <= 0`.
///
/// Accuracy targets ([`KUMMER_REL_TOL_MODERATE`], [`KUMMER_REL_TOL_WIDE`])
/// hold for `b >= a`; smaller `b` is evaluated but may lose precision to
/// cancellation at large `|z|`.
pub fn kummer_m(a: f64, b: f64, z: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && z.is_finite()) {
        return invalid(format!("kummer_m arguments must be finite: a={a}, b={b}, z={z}"));
    }
    if b <= 0.0 {
        return invalid(format!("kummer_m needs b > 0, got {b}"));
    }
    if z > 0.0 {
        return invalid(format!("kummer_m supports z <= 0 only, got {z}"));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let x = -z;
    let c = b - a;
    let terminating = c <= 0.0 && c.fract() == 0.0;
    if x > ASYMPTOTIC_MIN_X && !terminating {
        if let Some(v) = asymptotic(a, b, x) {
            return Ok(v);
        }
    }
    if c >= 0.0 {
        transformed_series(c, b, x)
    } else if x <= 700.0 {
        Ok(signed_series(c, b, x) * (-x).exp())
    } else {
        Err(Error::Numerical(format!(
            "kummer_m({a}, {b}, {z}): no stable evaluation for b < a at this argument"
        )))
    }
}

/// `e^{-x} M(c; b; x)` for `c >= 0`, summing the positive series with a
/// rescaled accumulator.
fn transformed_series(c: f64, b: f64, x: f64) -> Result<f64> {
    const RESCALE: f64 = 1e250;
    let ln_rescale = RESCALE.ln();
    let max_terms = 100_000 + (20.0 * x) as usize;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut log_scale = 0.0f64;
    let mut k = 1usize;
    loop {
        let kf = k as f64;
        let ratio = (c + kf - 1.0) / (b + kf - 1.0) * x / kf;
        term *= ratio;
        sum += term;
        if sum > RESCALE {
            sum /= RESCALE;
            term /= RESCALE;
            log_scale += ln_rescale;
        }
        if term == 0.0 || (term <= sum * 1e-17 && ratio < 0.9) {
            break;
        }
        k += 1;
        if k > max_terms {
            return Err(Error::Numerical(format!(
                "kummer series did not converge (c={c}, b={b}, x={x})"
            )));
        }
    }
    if log_scale == 0.0 && x < 700.0 {
        Ok(sum * (-x).exp())
    } else {
        Ok((sum.ln() + log_scale - x).exp())
    }
}

fn signed_series(c: f64, b: f64, x: f64) -> f64 {
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for k in 1..100_000usize {
        let kf = k as f64;
        term *= (c + kf - 1.0) / (b + kf - 1.0) * x / kf;
        sum += term;
        if term.abs() <= sum.abs() * 1e-17 && kf > x {
            break;
        }
    }
    sum
}

/// `Γ(b)/Γ(b-a) x^{-a} Σ_s (a)_s (a-b+1)_s / s! x^{-s}`, or `None` if the
/// series starts growing before it reaches double precision.
fn asymptotic(a: f64, b: f64, x: f64) -> Option<f64> {
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut converged = false;
    for s in 0..500usize {
        let sf = s as f64;
        let next = term * (a + sf) * (a - b + 1.0 + sf) / ((sf + 1.0) * x);
        if next.abs() > term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() <= sum.abs() * 1e-17 {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    let (lg_bma, sign) = libm::lgamma_r(b - a);
    let ln_pref = ln_gamma(b) - lg_bma - a * x.ln();
    Some(sign as f64 * ln_pref.exp() * sum)
}

/// `M(1/2; d/2; -c)`, exactly or through the IMQ surrogate.
pub fn kummer_half_d(c: f64, d: usize, mode: KummerMode) -> Result<f64> {
    if !(c >= 0.0) || !c.is_finite() {
        return invalid(format!("kummer_half_d needs finite c >= 0, got {c}"));
    }
    if d == 0 {
        return invalid("kummer_half_d needs d >= 1");
    }
    match mode {
        KummerMode::Exact => kummer_m(0.5, d as f64 / 2.0, -c),
        KummerMode::ImqApprox => {
            if d < 4 {
                return invalid(format!("ImqApprox needs d >= 4, got {d}"));
            }
            Ok(imq_half(c, d))
        }
    }
}

fn imq_half(c: f64, d: usize) -> f64 {
    let alpha = 4.0 / (2.0 * d as f64 - 3.0);
    (1.0 + alpha * c).powf(-0.5)
}

/// `M(1/2; d/2; -c)` and its derivative in `c`.
pub(crate) fn kummer_half_d_deriv(c: f64, d: usize, mode: KummerMode) -> Result<(f64, f64)> {
    match mode {
        KummerMode::Exact => {
            let v = kummer_half_d(c, d, mode)?;
            let dv = -kummer_m(1.5, d as f64 / 2.0 + 1.0, -c)? / d as f64;
            Ok((v, dv))
        }
        KummerMode::ImqApprox => {
            let v = kummer_half_d(c, d, mode)?;
            let alpha = 4.0 / (2.0 * d as f64 - 3.0);
            Ok((v, -0.5 * alpha * v * v * v))
        }
    }
}

/// `M(3/2; d/2+1; -c)`, exactly or through the surrogate
/// `(1 + 4c/(2d-1))^{-3/2}` which matches its large-`c` tail.
pub(crate) fn kummer_three_halves(c: f64, d: usize, surrogate: bool) -> Result<f64> {
    if surrogate {
        let alpha = 4.0 / (2.0 * d as f64 - 1.0);
        Ok((1.0 + alpha * c).powf(-1.5))
    } else {
        kummer_m(1.5, d as f64 / 2.0 + 1.0, -c)
    }
}
