//! Averages over the Gaussian run-to-run phase.
//!
//! All click statistics depend on the run phase only through `e^{2iφ}`, so
//! they are π-periodic. Narrow distributions use Gauss–Hermite quadrature
//! with order escalation; wide ones (where Hermite nodes cannot resolve the
//! oscillations) use the trapezoid rule over one period with wrapped-normal
//! weights, which is spectrally accurate for periodic integrands.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Target relative change between successive quadrature orders.
pub const REL_TOL: f64 = 1e-10;
const ABS_FLOOR: f64 = 1e-18;
const ROUNDOFF: f64 = 1e-14;

const HERMITE_ORDERS: [usize; 5] = [21, 41, 81, 161, 321];
const PERIODIC_ORDERS: [usize; 6] = [16, 32, 64, 128, 256, 512];
const WIDE_SIGMA: f64 = 1.0;

/// Nodes and weights of the physicists' Gauss–Hermite rule (weight `e^{−x²}`).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let pim4 = PI.powf(-0.25);
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / j as f64).sqrt() * p2 - ((j as f64 - 1.0) / j as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Successive results agree to `REL_TOL`, or to round-off of the largest
/// integrand value seen in any component (`scale`). The components are
/// computed jointly, so a tiny one carries the absolute round-off of the
/// largest.
fn converged<const N: usize>(old: &[f64; N], new: &[f64; N], scale: &[f64; N]) -> bool {
    let floor = ABS_FLOOR.max(ROUNDOFF * scale.iter().fold(0.0f64, |m, v| m.max(*v)));
    old.iter()
        .zip(new)
        .all(|(a, b)| (a - b).abs() <= REL_TOL * b.abs() + floor)
}

fn hermite_rule<const N: usize, F>(sigma: f64, n: usize, f: &F) -> Result<([f64; N], [f64; N])>
where
    F: Fn(f64) -> Result<[f64; N]>,
{
    let (x, w) = gauss_hermite(n);
    let mut acc = [0.0; N];
    let mut mag = [0.0f64; N];
    let width = sigma * std::f64::consts::SQRT_2;
    for (xi, wi) in x.iter().zip(&w) {
        let v = f(width * xi)?;
        for ((a, m), vi) in acc.iter_mut().zip(mag.iter_mut()).zip(v) {
            *a += wi * vi;
            *m = m.max(vi.abs());
        }
    }
    let norm = PI.sqrt();
    Ok((acc.map(|a| a / norm), mag))
}

/// Trapezoid rule on [−π/2, π/2) with wrapped-normal weights truncated to
/// the rule's band limit.
fn periodic_rule<const N: usize, F>(sigma: f64, n: usize, f: &F) -> Result<([f64; N], [f64; N])>
where
    F: Fn(f64) -> Result<[f64; N]>,
{
    let mut acc = [0.0; N];
    let mut mag = [0.0f64; N];
    let kmax = n / 2 - 1;
    let damp: Vec<f64> = (1..=kmax)
        .map(|k| (-2.0 * (k * k) as f64 * sigma * sigma).exp())
        .collect();
    for j in 0..n {
        let phi = -PI / 2.0 + (j as f64 + 0.5) * PI / n as f64;
        let w = (1.0
            + 2.0
                * damp
                    .iter()
                    .enumerate()
                    .map(|(k, d)| d * (2.0 * (k + 1) as f64 * phi).cos())
                    .sum::<f64>())
            / n as f64;
        let v = f(phi)?;
        for ((a, m), vi) in acc.iter_mut().zip(mag.iter_mut()).zip(v) {
            *a += w * vi;
            *m = m.max(vi.abs());
        }
    }
    Ok((acc, mag))
}

/// `E[f(φ)]` for `φ ~ N(0, σ²)` and a π-periodic vector-valued `f`.
pub fn gaussian_phase_average<const N: usize, F>(sigma: f64, f: F) -> Result<[f64; N]>
where
    F: Fn(f64) -> Result<[f64; N]>,
{
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("phase spread {sigma}")));
    }
    if sigma == 0.0 {
        return f(0.0);
    }
    if sigma < WIDE_SIGMA {
        let (mut prev, _) = hermite_rule(sigma, HERMITE_ORDERS[0], &f)?;
        for &n in &HERMITE_ORDERS[1..] {
            let (next, mag) = hermite_rule(sigma, n, &f)?;
            if converged(&prev, &next, &mag) {
                return Ok(next);
            }
            prev = next;
        }
    }
    let (mut prev, _) = periodic_rule(sigma, PERIODIC_ORDERS[0], &f)?;
    for &n in &PERIODIC_ORDERS[1..] {
        let (next, mag) = periodic_rule(sigma, n, &f)?;
        if converged(&prev, &next, &mag) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NonConvergence {
        iterations: PERIODIC_ORDERS.len(),
        context: "phase average",
    })
}
