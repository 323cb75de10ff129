//! Influence-function derivative used to downweight outlier intervals.
//!
//! The weight applied to an inter-event interval is `phi'` evaluated at the
//! interval's compensator increment minus one. `phi'` peaks at 1 when the
//! increment equals its unit mean, decays smoothly, and vanishes outside a
//! compact window, so intervals that are far too full or far too empty are
//! ignored by the fitting loop. Arguments below the mean are mapped to the
//! positive side through a level-set reflection of `(1+x)e^{-x-1}`, which
//! makes the weight unbiased for standard-exponential increments.

use crate::error::{Error, Result};
use crate::quad;

/// Shape of the influence derivative: breakpoint `a` and support endpoint `b`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InfluenceShape {
    /// Breakpoint where the rational segment hands over to the quadratic tail.
    pub a: f64,
    /// Support endpoint; the weight is zero past it.
    pub b: f64,
}

impl Default for InfluenceShape {
    fn default() -> Self {
        Self { a: 1.0, b: 23.0 / 3.0 }
    }
}

impl InfluenceShape {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && 0.0 < a && a < b) {
            return Err(Error::Config(format!(
                "influence shape requires 0 < a < b, got a={a}, b={b}"
            )));
        }
        Ok(Self { a, b })
    }

    /// Value of the rational branch at the breakpoint, `phi'(a)`.
    fn value_at_a(&self) -> f64 {
        (1.0 + self.a) / (1.0 + self.a + self.a * self.a / 2.0)
    }
}

/// Positive scale parameters for the two branches of the scaled weight.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RhoPair {
    /// Scale applied (after reflection) to negative arguments.
    pub rho1: f64,
    /// Scale applied to nonnegative arguments.
    pub rho2: f64,
}

impl Default for RhoPair {
    fn default() -> Self {
        Self { rho1: 1.0, rho2: 1.0 }
    }
}

impl RhoPair {
    pub fn new(rho1: f64, rho2: f64) -> Result<Self> {
        if !(rho1.is_finite() && rho2.is_finite() && rho1 > 0.0 && rho2 > 0.0) {
            return Err(Error::Config(format!(
                "rho scales must be positive, got ({rho1}, {rho2})"
            )));
        }
        Ok(Self { rho1, rho2 })
    }

    pub fn uniform(rho: f64) -> Result<Self> {
        Self::new(rho, rho)
    }

    /// Both components multiplied by `factor`, each capped at `cap`.
    pub fn scaled(self, factor: f64, cap: f64) -> Self {
        Self {
            rho1: (self.rho1 * factor).min(cap),
            rho2: (self.rho2 * factor).min(cap),
        }
    }
}

fn check_argument(x: f64) -> Result<()> {
    if !x.is_finite() && x != f64::INFINITY {
        return Err(Error::Domain(format!("non-finite weight argument {x}")));
    }
    if x < -1.0 {
        return Err(Error::Domain(format!(
            "weight argument {x} below -1 (compensator increments cannot fall below -1)"
        )));
    }
    Ok(())
}

/// `phi'` on the nonnegative axis for a given shape. No domain checks.
fn phi_prime_pos(x: f64, shape: &InfluenceShape) -> f64 {
    if x <= shape.a {
        (1.0 + x) / (1.0 + x + x * x / 2.0)
    } else if x <= shape.b {
        let t = (shape.b - x) / (shape.b - shape.a);
        shape.value_at_a() * t * t
    } else {
        0.0
    }
}

/// Influence derivative with the default shape (`a = 1`, `b = 23/3`).
///
/// Defined for `x >= -1`; negative arguments are reflected to the positive
/// axis along the level sets of `(1+x)e^{-x-1}` first.
pub fn phi_prime(x: f64) -> Result<f64> {
    phi_prime_shaped(x, &InfluenceShape::default())
}

/// `phi_prime` with an explicit shape.
pub fn phi_prime_shaped(x: f64, shape: &InfluenceShape) -> Result<f64> {
    check_argument(x)?;
    if x >= 0.0 {
        Ok(phi_prime_pos(x, shape))
    } else {
        let xr = reflect_negative(x)?;
        if xr.is_infinite() {
            Ok(0.0)
        } else {
            Ok(phi_prime_pos(xr, shape))
        }
    }
}

/// Level value the reflection preserves.
fn level(x: f64) -> f64 {
    (x + 1.0) * (-x - 1.0).exp()
}

/// Maps `x` in [-1, 0) to the `x' >= 0` with `(x'+1)e^{-x'-1} = (x+1)e^{-x-1}`.
///
/// `x = 0` maps to 0 and `x = -1` maps to `+inf` (the level value 0 is only
/// attained in the limit; callers treat the sentinel as weight zero). The map
/// `g(u) = (1+u)e^{-u-1}` is strictly decreasing on `u >= 0`, so the root is
/// unique; a Newton iteration with a guarded bisection bracket finds it to
/// absolute tolerance 1e-12.
pub fn reflect_negative(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("non-finite reflection argument {x}")));
    }
    if !(-1.0..=0.0).contains(&x) {
        return Err(Error::Domain(format!(
            "reflection argument {x} outside [-1, 0]"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let target = level(x);
    // Denormal levels correspond to roots past ~700; short-circuit to the
    // sentinel rather than root-find against them.
    if target < 1e-300 {
        return Ok(f64::INFINITY);
    }
    // Bracket [lo, hi] with g(lo) > target > g(hi). g(0) = e^{-1} >= target.
    let g = |u: f64| level(u) - target;
    let mut lo = 0.0f64;
    let mut hi = 50.0f64;
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::Numerical(
                "reflection bracket expansion failed".into(),
            ));
        }
    }
    // g'(u) = -u e^{-u-1}; flat at u = 0, so guard Newton with the bracket.
    let mut u = (-x).max(lo.min(hi));
    if !(lo..=hi).contains(&u) {
        u = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let gu = g(u);
        if gu > 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let du = -u * (-u - 1.0).exp();
        let next = if du.abs() > 1e-300 {
            u - gu / du
        } else {
            f64::NAN
        };
        let next = if next.is_finite() && next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
        if (next - u).abs() <= 1e-12 {
            return Ok(next);
        }
        u = next;
    }
    if (hi - lo).abs() <= 1e-9 {
        return Ok(0.5 * (lo + hi));
    }
    Err(Error::Numerical(format!(
        "reflection root finder did not converge for x = {x}"
    )))
}

/// Two-sided scaled influence derivative: `phi'(x / rho2)` for `x >= 0`,
/// `phi'(x' / rho1)` for `x` in [-1, 0) with `x'` the reflection of `x`.
pub fn phi_prime_scaled(x: f64, rho: &RhoPair) -> Result<f64> {
    phi_prime_scaled_shaped(x, rho, &InfluenceShape::default())
}

pub fn phi_prime_scaled_shaped(x: f64, rho: &RhoPair, shape: &InfluenceShape) -> Result<f64> {
    check_argument(x)?;
    if x >= 0.0 {
        Ok(phi_prime_pos(x / rho.rho2, shape))
    } else {
        let xr = reflect_negative(x)?;
        if xr.is_infinite() {
            Ok(0.0)
        } else {
            Ok(phi_prime_pos(xr / rho.rho1, shape))
        }
    }
}

/// Numerical check of the unbiasedness identity
/// `E[(X-1) phi'(X-1)] = 0` for `X ~ Exp(1)`.
///
/// Returns the composite Gauss-Legendre quadrature of the integrand over
/// `[0, b+1]` (it vanishes identically beyond); used as a built-in self-test.
pub fn catoni_unbiasedness_residual(quadrature_points: usize) -> Result<f64> {
    if quadrature_points < 100 {
        return Err(Error::Config(
            "unbiasedness residual needs at least 100 quadrature points".into(),
        ));
    }
    let shape = InfluenceShape::default();
    let b = shape.b;
    // 64 nodes per unit panel; quadrature_points caps the total just in case
    // an absurd shape is configured.
    let per_unit = 64.min(quadrature_points);
    let f = |x: f64| {
        let w = phi_prime_shaped(x - 1.0, &shape).unwrap_or(0.0);
        (x - 1.0) * w * (-x).exp()
    };
    Ok(quad::integrate_composite(f, 0.0, b + 1.0, per_unit))
}
