//! Special functions: Kummer's confluent hypergeometric function, modified
//! Bessel functions, the gamma function, Gauss–Hermite quadrature and the
//! Gaussian-weighted sphere integrals `j1`/`j2`.

mod bessel;
mod kummer;
mod quadrature;
mod sphere;

pub use bessel::{bessel_i, bessel_k, ln_bessel_i, ln_bessel_k};
pub use kummer::{
    kummer_half_d, kummer_m, KummerMode, KUMMER_REL_TOL_MODERATE, KUMMER_REL_TOL_WIDE,
};
pub(crate) use kummer::{kummer_half_d_deriv, kummer_three_halves};
pub use quadrature::{gauss_hermite, QuadratureRule, MAX_KNOTS};
pub use sphere::{j1, j2, sphere_area};

/// Gamma function.
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Natural log of `|Γ(x)|`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}
