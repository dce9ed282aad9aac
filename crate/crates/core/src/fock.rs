//! Brute-force click statistics from the truncated photon-number expansion.
//!
//! The pairing matrix factors as `M = tanh g · U` with `U` unitary, so the
//! state is a product of two pair sources: `|n₁, n₂⟩` on the rotated Alice
//! modes `c_k† = Σ_j U_jk A_j†` paired with `|n₁, n₂⟩` on (B, B⊥), each
//! term weighted by `(1−λ)·tanh^{n₁+n₂} g`. Alice's rotated Fock states are
//! expanded into her detector modes with exact binomial amplitudes. Both
//! sides' detectors are diagonal in photon number, so probabilities are
//! plain sums over the expansion.

use num_complex::Complex64;

use crate::analytic::schmidt_matrix;
use crate::error::{Error, Result};
use crate::model::{PatternDistribution, Settings};

/// Hard cap on photons per pair mode.
pub const N_MAX_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockTruncation {
    /// Starting maximum photon number per Schmidt pair.
    pub n_max: usize,
    /// Largest acceptable discarded probability.
    pub tolerance: f64,
}

impl Default for FockTruncation {
    fn default() -> Self {
        FockTruncation {
            n_max: 6,
            tolerance: 1e-12,
        }
    }
}

impl FockTruncation {
    /// Probability mass outside `n₁, n₂ ≤ n_max`.
    pub fn tail(n_max: usize, lambda: f64) -> f64 {
        let x = lambda.powi(n_max as i32 + 1);
        x * (2.0 - x)
    }

    /// Smallest cutoff reached by doubling `n_max` (capped at [`N_MAX_CAP`])
    /// whose tail meets the tolerance.
    pub fn resolve(&self, lambda: f64) -> Result<usize> {
        if lambda == 0.0 {
            return Ok(self.n_max.min(N_MAX_CAP));
        }
        let mut n = self.n_max.min(N_MAX_CAP);
        loop {
            let tail = Self::tail(n, lambda);
            if tail <= self.tolerance {
                return Ok(n);
            }
            let next = (2 * n).min(N_MAX_CAP);
            if next == n {
                return Err(Error::Truncation { n_max: n, tail });
            }
            n = next;
        }
    }
}

fn binomials(n: usize) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..=n {
        c[i][0] = 1.0;
        for j in 1..=i {
            c[i][j] = c[i - 1][j - 1] + if j < i { c[i - 1][j] } else { 0.0 };
        }
    }
    c
}

fn click_prob(n: usize, eta: f64, p_dc: f64) -> f64 {
    1.0 - (1.0 - p_dc) * (1.0 - eta).powi(n as i32)
}

/// Pattern probabilities at fixed run phase by direct summation.
///
/// `eta` holds per-detector efficiencies in pattern order (A, A⊥, B, B⊥).
/// The result is not renormalized: it falls short of one by at most the
/// truncation tail.
pub fn oracle_pattern_probs(
    settings: &Settings,
    g: f64,
    eta: [f64; 4],
    p_dc: f64,
    phi: f64,
    trunc: FockTruncation,
) -> Result<PatternDistribution> {
    let m = schmidt_matrix(settings, phi, g);
    let t = m.tanh_g();
    let lambda = t * t;
    let n_max = trunc.resolve(lambda)?;
    let u = if t > 0.0 {
        m.entries().map(|row| row.map(|z| z / t))
    } else {
        [[1.0.into(), 0.0.into()], [0.0.into(), 1.0.into()]]
    };

    let binom = binomials(2 * n_max);
    let fact: Vec<f64> = (0..=2 * n_max)
        .scan(1.0, |f, k| {
            if k > 0 {
                *f *= k as f64;
            }
            Some(*f)
        })
        .collect();
    let pow = |z: Complex64, k: usize| z.powi(k as i32);

    let mut probs = [0.0; 16];
    for n1 in 0..=n_max {
        for n2 in 0..=n_max {
            let weight = (1.0 - lambda).powi(2) * lambda.powi((n1 + n2) as i32);
            if weight == 0.0 {
                continue;
            }
            let bob = [
                click_prob(n1, eta[2], p_dc),
                click_prob(n2, eta[3], p_dc),
            ];
            let total = n1 + n2;
            let norm = (fact[n1] * fact[n2]).sqrt();
            for mph in 0..=total {
                let mut amp = Complex64::new(0.0, 0.0);
                for i in mph.saturating_sub(n2)..=mph.min(n1) {
                    let j = mph - i;
                    amp += binom[n1][i]
                        * binom[n2][j]
                        * pow(u[0][0], i)
                        * pow(u[1][0], n1 - i)
                        * pow(u[0][1], j)
                        * pow(u[1][1], n2 - j);
                }
                let p_alice = amp.norm_sqr() * fact[mph] * fact[total - mph] / (norm * norm);
                if p_alice == 0.0 {
                    continue;
                }
                let alice = [
                    click_prob(mph, eta[0], p_dc),
                    click_prob(total - mph, eta[1], p_dc),
                ];
                let q = [alice[0], alice[1], bob[0], bob[1]];
                for (c, p) in probs.iter_mut().enumerate() {
                    let mut v = weight * p_alice;
                    for (k, qk) in q.iter().enumerate() {
                        v *= if c & (1 << (3 - k)) != 0 { *qk } else { 1.0 - qk };
                    }
                    *p += v;
                }
            }
        }
    }
    Ok(PatternDistribution::from_raw(probs))
}
