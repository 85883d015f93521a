//! Scalar calculus for the uniform single-spin measure on the circle:
//! log moment generating function G, the magnetization map M and its
//! inverse, and the Legendre-transform entropy S.

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::vec2::Vec2;
use std::f64::consts::TAU;

/// Quadrature tolerance for the angle integrals.
const QUAD_TOL: f64 = 1e-13;
/// Points with |m| >= 1 - DOMAIN_MARGIN are treated as out of domain.
pub const DOMAIN_MARGIN: f64 = 1e-12;
/// Above this tilt the quadrature loses relative accuracy and the
/// large-argument expansions take over.
const ASYMPTOTIC_TILT: f64 = 2000.0;

/// Zeroth and first angular moments of the tilted circle measure,
/// scaled by e^{-x}: ((1/2pi) int e^{x(cos t - 1)}, same with cos t).
///
/// The max exponent is subtracted inside the integrand, so no tilt can
/// overflow; for large x the integration window shrinks to the peak.
fn tilted_moments(x: f64) -> (f64, f64) {
    let theta_max = if x > 30.0 {
        // beyond this angle the integrand is below 1e-82
        (380.0 / x).sqrt().min(std::f64::consts::PI)
    } else {
        std::f64::consts::PI
    };
    let m0 = 2.0 * integrate(&|t: f64| (x * (t.cos() - 1.0)).exp(), 0.0, theta_max, QUAD_TOL) / TAU;
    let m1 = 2.0
        * integrate(&|t: f64| t.cos() * (x * (t.cos() - 1.0)).exp(), 0.0, theta_max, QUAD_TOL)
        / TAU;
    (m0, m1)
}

/// G(h) = log of the mgf of the uniform circle measure at tilt h.
/// Depends on h only through its 2-norm.
pub fn log_mgf(h: Vec2) -> f64 {
    let x = h.norm();
    if x == 0.0 {
        return 0.0;
    }
    if x >= ASYMPTOTIC_TILT {
        // G(x) = x - log sqrt(2 pi x) + log(1 + 1/8x + 9/128x^2 + 75/1024x^3)
        let u = 1.0 / x;
        let tail = u * (0.125 + u * (0.0703125 + u * 0.0732421875));
        return x - 0.5 * (TAU * x).ln() + tail.ln_1p();
    }
    let (m0, _) = tilted_moments(x);
    x + m0.ln()
}

/// R(x): radial magnetization response at tilt x >= 0, the ratio of the
/// first to the zeroth angular moment of the tilted circle measure.
pub fn bessel_ratio(x: f64) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::NegativeTilt(x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x >= ASYMPTOTIC_TILT {
        let u = 1.0 / x;
        return Ok(1.0 - u * (0.5 + u * (0.125 + u * 0.125)));
    }
    let (m0, m1) = tilted_moments(x);
    Ok(m1 / m0)
}

/// dR/dx, from the variance identity R'(x) = 1 - R^2 - R/x.
pub fn bessel_ratio_deriv(x: f64) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::NegativeTilt(x));
    }
    if x < 1e-8 {
        // R(x) = x/2 - x^3/16 + ...
        return Ok(0.5 - 3.0 / 16.0 * x * x);
    }
    if x >= ASYMPTOTIC_TILT {
        // direct expansion; 1 - R^2 - R/x cancels catastrophically here
        let u = 1.0 / x;
        return Ok(u * u * (0.5 + u * (0.25 + u * 0.375)));
    }
    let r = bessel_ratio(x)?;
    Ok(1.0 - r * r - r / x)
}

/// M(h) = R(|h|) h_hat, the gradient of G.
pub fn magnetization(h: Vec2) -> Vec2 {
    let x = h.norm();
    if x == 0.0 {
        return Vec2::ZERO;
    }
    h.unit() * bessel_ratio(x).expect("nonnegative by construction")
}

/// Radial inverse: the tilt t >= 0 with R(t) = rho, for rho in [0, 1).
///
/// Newton iteration seeded at 2 rho / (1 - rho^2), with a bisection
/// fallback on the bracket [0, 10 - 20 log(1 - rho)].
pub fn inverse_tilt(rho: f64, tol: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::OutOfDomain(rho));
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0_f64;
    // R saturates like 1 - 1/(2t), so the root sits near 1/(2(1-rho));
    // double defensively until R(hi) clears the target.
    let mut hi = 10.0 + 2.0 / (1.0 - rho);
    while bessel_ratio(hi)? < rho {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::OutOfDomain(rho));
        }
    }
    let mut t = 2.0 * rho / (1.0 - rho * rho);
    for _ in 0..200 {
        let f = bessel_ratio(t)? - rho;
        // accept either a small residual or a collapsed bracket; close to
        // saturation R is flat and the residual stalls at quadrature noise
        if f.abs() <= tol || hi - lo <= 1e-12 * (1.0 + t) {
            return Ok(t);
        }
        if f > 0.0 {
            hi = hi.min(t);
        } else {
            lo = lo.max(t);
        }
        let df = bessel_ratio_deriv(t)?;
        let next = t - f / df;
        t = if next.is_finite() && next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NoConvergence { iters: 200, residual: (bessel_ratio(t)? - rho).abs() })
}

/// h with M(h) = m, for |m| < 1.
pub fn inverse_magnetization(m: Vec2, tol: f64) -> Result<Vec2> {
    let rho = m.norm();
    if rho >= 1.0 - DOMAIN_MARGIN {
        return Err(Error::OutOfDomain(rho));
    }
    Ok(m.unit() * inverse_tilt(rho, tol)?)
}

const ENTROPY_SOLVE_TOL: f64 = 1e-12;

/// S(m) = inf_h (G(h) - m . h); nonpositive, zero at the origin.
pub fn entropy(m: Vec2) -> Result<f64> {
    let h = inverse_magnetization(m, ENTROPY_SOLVE_TOL)?;
    Ok(log_mgf(h) - m.dot(h))
}

/// grad S(m) = -M^{-1}(m).
pub fn grad_entropy(m: Vec2) -> Result<Vec2> {
    Ok(-inverse_magnetization(m, ENTROPY_SOLVE_TOL)?)
}
