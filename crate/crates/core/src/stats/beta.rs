//! Regularized incomplete beta function and its inverse.

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 100_000;

/// Arguments above this use Stirling's series with the leading terms
/// combined analytically.
const STIRLING_MIN: f64 = 15.0;

/// `ln Γ(x) − [(x − ½) ln x − x + ½ ln 2π]` for `x ≥ STIRLING_MIN`.
fn stirling_tail(x: f64) -> f64 {
    let r = 1.0 / x;
    let r2 = r * r;
    r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 / 1680.0)))
}

/// `ln Γ(a) − ln Γ(a + b)` for large `a`.
fn ln_gamma_ratio(a: f64, b: f64) -> f64 {
    -(a - 0.5) * (b / a).ln_1p() - b * (a + b).ln() + b + stirling_tail(a) - stirling_tail(a + b)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    if a >= STIRLING_MIN {
        libm::lgamma(b) + ln_gamma_ratio(a, b)
    } else if b >= STIRLING_MIN {
        libm::lgamma(a) + ln_gamma_ratio(b, a)
    } else {
        libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
    }
}

/// `ln[x^a (1−x)^b / B(a, b)]`, kept accurate when both shapes are large
/// by expanding around the mean `a/(a+b)`.
fn ln_front(x: f64, a: f64, b: f64) -> f64 {
    if a >= STIRLING_MIN && b >= STIRLING_MIN {
        let x0 = a / (a + b);
        let y0 = b / (a + b);
        a * ((x - x0) / x0).ln_1p() + b * (((1.0 - x) - y0) / y0).ln_1p()
            + 0.5 * (a * b / (a + b)).ln()
            - 0.5 * (2.0 * std::f64::consts::PI).ln()
            - (stirling_tail(a) + stirling_tail(b) - stirling_tail(a + b))
    } else {
        a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b)
    }
}

/// Continued fraction for `I_x(a, b)` (modified Lentz), valid for
/// `x < (a + 1)/(a + b + 2)`.
fn beta_cf(x: f64, a: f64, b: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITER,
        context: "incomplete beta continued fraction",
    })
}

fn check_shape(a: f64, b: f64) -> Result<()> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("beta shape parameters ({a}, {b}) must be positive")));
    }
    Ok(())
}

/// `I_x(a, b)`, the regularized incomplete beta function.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    check_shape(a, b)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("incomplete beta argument {x} outside [0,1]")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(x);
    }
    let ln_front = ln_front(x, a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(ln_front.exp() * beta_cf(x, a, b)? / a)
    } else {
        Ok(1.0 - ln_front.exp() * beta_cf(1.0 - x, b, a)? / b)
    }
}

/// `x` with `I_x(a, b) = p`, by Newton iteration safeguarded with bisection.
pub fn inverse_reg_inc_beta(p: f64, a: f64, b: f64) -> Result<f64> {
    check_shape(a, b)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0,1]")));
    }
    if p == 0.0 || p == 1.0 {
        return Ok(p);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x = (a / (a + b)).clamp(1e-12, 1.0 - 1e-12);
    for _ in 0..200 {
        let f = reg_inc_beta(x, a, b)? - p;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let ln_pdf = ln_front(x, a, b) - x.ln() - (-x).ln_1p();
        let step = f / ln_pdf.exp();
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.max(1e-300) || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::NonConvergence {
        iterations: 200,
        context: "inverse incomplete beta",
    })
}
