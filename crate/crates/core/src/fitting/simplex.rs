//! Nelder–Mead simplex minimization.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_iter: usize,
    /// Stop when the spread of function values across the simplex falls
    /// below `f_tol·(|f_best| + f_tol)` or the simplex diameter below `x_tol`.
    pub f_tol: f64,
    pub x_tol: f64,
    /// Initial step along each coordinate.
    pub step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_iter: 10_000,
            f_tol: 1e-15,
            x_tol: 1e-10,
            step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Minimizes `f` from `start`. Non-finite values count as +∞.
pub fn nelder_mead<F>(f: F, start: &[f64], opts: SimplexOptions) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut pts: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += if p[i] != 0.0 { opts.step * p[i].abs().max(1.0) } else { opts.step };
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p)).collect();

    for iter in 0..opts.max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = vals[n] - vals[0];
        let diameter = pts[1..]
            .iter()
            .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol * (vals[0].abs() + opts.f_tol) || diameter <= opts.x_tol {
            return Ok(Minimum {
                x: pts[0].clone(),
                value: vals[0],
                iterations: iter,
            });
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let x = along(-0.5);
                let v = eval(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = eval(&x);
                (x, v)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    let p: Vec<f64> = pts[i].iter().zip(&pts[0]).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    vals[i] = eval(&p);
                    pts[i] = p;
                }
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        context: "simplex minimization",
    })
}

/// Runs [`nelder_mead`] from each start and keeps the best converged result.
pub fn multistart<F>(f: F, starts: &[Vec<f64>], opts: SimplexOptions) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let runs: Vec<Result<Minimum>> = starts.par_iter().map(|s| nelder_mead(&f, s, opts)).collect();
    let mut best: Option<Minimum> = None;
    let mut last_err = None;
    for r in runs {
        match r {
            Ok(m) => {
                if best.as_ref().is_none_or(|b| m.value < b.value) {
                    best = Some(m);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| {
        last_err.unwrap_or(Error::Degenerate("no starting points".into()))
    })
}
