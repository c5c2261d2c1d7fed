use std::f64::consts::PI;

use super::{kummer_m, ln_gamma};
use crate::{invalid, Result};

/// Surface area of the unit sphere `S^{d-1}` in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * (h * PI.ln() - ln_gamma(h)).exp()
}

/// `∫_{S^{d-1}} exp(-c θ_1²) dθ = (2π^{d/2}/Γ(d/2)) M(1/2; d/2; -c)`.
pub fn j1(c: f64, d: usize) -> Result<f64> {
    if d < 2 {
        return invalid(format!("j1 needs d >= 2, got {d}"));
    }
    if c < 0.0 {
        return invalid(format!("j1 needs c >= 0, got {c}"));
    }
    Ok(sphere_area(d) * kummer_m(0.5, d as f64 / 2.0, -c)?)
}

/// `∫_{S^{d-1}} θ_1² exp(-c θ_1²) dθ = (π^{d/2}/Γ(d/2+1)) M(3/2; d/2+1; -c)`.
pub fn j2(c: f64, d: usize) -> Result<f64> {
    if d < 2 {
        return invalid(format!("j2 needs d >= 2, got {d}"));
    }
    if c < 0.0 {
        return invalid(format!("j2 needs c >= 0, got {c}"));
    }
    let h = d as f64 / 2.0;
    let pref = (h * PI.ln() - ln_gamma(h + 1.0)).exp();
    Ok(pref * kummer_m(1.5, h + 1.0, -c)?)
}
