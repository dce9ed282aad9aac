//! Generating-function kernel of the four-mode squeezed state.
//!
//! For detected modes (A, A⊥) and (B, B⊥) the state is
//! `(1−λ) exp[(A†, A⊥†) M (B†, B⊥†)ᵀ] |0⟩` and
//!
//! ```text
//! E[∏ xᵢ^{nᵢ}] = (1−λ)² / det(I − M†·diag(x_A, x_A⊥)·M·diag(x_B, x_B⊥))
//! ```
//!
//! Click probabilities differ from one another by amounts of order λη, so
//! everything here works with the deficit `G − 1` computed from the
//! perturbation of the determinant, never as a difference of two numbers
//! close to one.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{ClickPattern, PatternDistribution, Settings};

type C2 = [[Complex64; 2]; 2];

/// Pairing matrix between Alice's and Bob's detected modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchmidtMatrix {
    m: C2,
    tanh_g: f64,
}

/// Builds the pairing matrix for the given settings and run phase `phi`.
///
/// With ψ_A = φ_s + φ and ψ_B = φ_a − φ,
///
/// ```text
/// M = tanh g · [ C_α S_β e^{−iψ_B} − S_α C_β e^{−iψ_A}    −C_α C_β − S_α S_β e^{−iψ_A} e^{iψ_B} ]
///              [ C_α C_β + S_α S_β e^{iψ_A} e^{−iψ_B}      C_α S_β e^{iψ_B} − S_α C_β e^{iψ_A}  ]
/// ```
///
/// which equals `tanh g · U_A(α, ψ_A) · J · U_B(β, ψ_B)ᵀ` with `J = [[0, −1], [1, 0]]`
/// and unitary local rotations, so both singular values are `tanh g`.
pub fn schmidt_matrix(settings: &Settings, phi: f64, g: f64) -> SchmidtMatrix {
    let t = g.tanh();
    let (sa, ca) = settings.alpha.sin_cos();
    let (sb, cb) = settings.beta.sin_cos();
    let ea = Complex64::from_polar(1.0, settings.phi_s + phi);
    let eb = Complex64::from_polar(1.0, settings.phi_a - phi);
    let m = [
        [
            ca * sb * eb.conj() - sa * cb * ea.conj(),
            -ca * cb - sa * sb * ea.conj() * eb,
        ],
        [
            ca * cb + sa * sb * ea * eb.conj(),
            ca * sb * eb - sa * cb * ea,
        ],
    ];
    SchmidtMatrix {
        m: m.map(|row| row.map(|z| z * t)),
        tanh_g: t,
    }
}

impl SchmidtMatrix {
    pub fn entries(&self) -> &C2 {
        &self.m
    }

    pub fn tanh_g(&self) -> f64 {
        self.tanh_g
    }

    pub fn lambda(&self) -> f64 {
        self.tanh_g * self.tanh_g
    }

    /// Singular values, largest first.
    pub fn singular_values(&self) -> [f64; 2] {
        let m = &self.m;
        // Eigenvalues of M†M from its entries; the gap stays accurate when
        // the two singular values coincide.
        let a = m[0][0].norm_sqr() + m[1][0].norm_sqr();
        let d = m[0][1].norm_sqr() + m[1][1].norm_sqr();
        let b = m[0][0].conj() * m[0][1] + m[1][0].conj() * m[1][1];
        let gap = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).norm();
        let s1 = (0.5 * (a + d) + gap).sqrt();
        let s2 = if s1 > 0.0 { det / s1 } else { 0.0 };
        [s1, s2]
    }
}

/// Per-mode survival factors `x = 1 − η` in the order (A, A⊥, B, B⊥).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttenuationVector([f64; 4]);

impl AttenuationVector {
    pub fn new(x: [f64; 4]) -> Result<Self> {
        if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("attenuation factor {v} outside [0,1]")));
        }
        Ok(AttenuationVector(x))
    }

    pub fn as_array(&self) -> &[f64; 4] {
        &self.0
    }
}

fn mul(a: &C2, b: &C2) -> C2 {
    let mut c = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn adjoint(a: &C2) -> C2 {
    [
        [a[0][0].conj(), a[1][0].conj()],
        [a[0][1].conj(), a[1][1].conj()],
    ]
}

/// `G − 1` for losses `y = 1 − x` (order A, A⊥, B, B⊥).
///
/// Writing `K = M†M`, `W = M†·diag(y_A)·M` and `Y_B = diag(y_B)`:
/// `I − M†X_A M X_B = (I − K) + K·Y_B + W·(I − Y_B)`, so the determinant is
/// `det(I − K) + δ` with δ linear-plus-quadratic in the small matrix
/// `Δ = K·Y_B + W·(I − Y_B)`.
fn deficit(m: &SchmidtMatrix, y: &[f64; 4]) -> Result<f64> {
    if y.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let md = adjoint(&m.m);
    let k = mul(&md, &m.m);
    let ya = [[y[0].into(), 0.0.into()], [0.0.into(), y[1].into()]];
    let w = mul(&md, &mul(&ya, &m.m));
    let mut delta = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            delta[i][j] = k[i][j] * y[2 + j] + w[i][j] * (1.0 - y[2 + j]);
        }
    }
    let b = [
        [Complex64::new(1.0, 0.0) - k[0][0], -k[0][1]],
        [-k[1][0], Complex64::new(1.0, 0.0) - k[1][1]],
    ];
    let d = b[0][0] * delta[1][1] + delta[0][0] * b[1][1]
        - b[0][1] * delta[1][0]
        - delta[0][1] * b[1][0]
        + (delta[0][0] * delta[1][1] - delta[0][1] * delta[1][0]);
    let lam = m.lambda();
    let norm = (1.0 - lam) * (1.0 - lam);
    let det = norm + d.re;
    if !(det > norm * 1e-300) || !det.is_finite() {
        return Err(Error::SingularDeterminant(det));
    }
    Ok(-d.re / det)
}

/// Generating function `E[∏ xᵢ^{n̂ᵢ}]` of the four detected photon numbers.
pub fn noclick_generating(m: &SchmidtMatrix, x: &AttenuationVector) -> Result<f64> {
    let y = x.0.map(|v| 1.0 - v);
    Ok(1.0 + deficit(m, &y)?)
}

/// Click statistics of the four detectors for one fixed state.
///
/// Stores `G_S − 1` for every subset S of detectors, where `G_S` is the
/// generating function with `xᵢ = 1 − ηᵢ` on S and 1 elsewhere.
#[derive(Debug, Clone, Copy)]
pub struct ClickModel {
    deficits: [f64; 16],
    p_dc: f64,
}

impl ClickModel {
    /// `eta` holds per-detector efficiencies in pattern order (A, A⊥, B, B⊥).
    pub fn new(m: &SchmidtMatrix, eta: [f64; 4], p_dc: f64) -> Result<Self> {
        let mut deficits = [0.0; 16];
        for (s, h) in deficits.iter_mut().enumerate() {
            let y = std::array::from_fn(|i| {
                if s & (1 << (3 - i)) != 0 {
                    eta[i]
                } else {
                    0.0
                }
            });
            *h = deficit(m, &y)?;
        }
        Ok(ClickModel { deficits, p_dc })
    }

    /// Probability that every detector in `click` fires and none in `silent`
    /// does; the remaining detectors are unconstrained.
    ///
    /// Inclusion–exclusion over no-click subsets: with `q = 1 − p_dc` and
    /// `Q_S = q^{|S|} G_S`, the event probability is
    /// `Σ_{T⊆click} (−1)^{|T|} Q_{silent ∪ T}`; the constant part of every
    /// `G_S` sums to `q^{|silent|} p_dc^{|click|}` exactly.
    pub fn event(&self, click: u8, silent: u8) -> f64 {
        debug_assert_eq!(click & silent, 0);
        let q = 1.0 - self.p_dc;
        let n_click = click.count_ones() as i32;
        let n_silent = silent.count_ones() as i32;
        let mut acc = 0.0;
        let mut t = click;
        loop {
            let k = t.count_ones() as i32;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * q.powi(k) * self.deficits[(silent | t) as usize];
            if t == 0 {
                break;
            }
            t = (t - 1) & click;
        }
        q.powi(n_silent) * (self.p_dc.powi(n_click) + acc)
    }

    /// Probabilities of the 16 complete patterns.
    pub fn patterns(&self) -> [f64; 16] {
        std::array::from_fn(|c| {
            let c = ClickPattern::from_index(c).bits();
            self.event(c, !c & 0xF)
        })
    }
}

/// Pattern distribution at fixed run phase `phi`.
pub fn pattern_probs_fixed_phase(
    settings: &Settings,
    g: f64,
    eta: [f64; 4],
    p_dc: f64,
    phi: f64,
) -> Result<PatternDistribution> {
    let m = schmidt_matrix(settings, phi, g);
    PatternDistribution::new(ClickModel::new(&m, eta, p_dc)?.patterns())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn zero_settings_give_antidiagonal() {
        let g = 0.2;
        let m = schmidt_matrix(&Settings::default(), 0.0, g);
        let e = m.entries();
        let t = g.tanh();
        assert!(e[0][0].norm() < 1e-15 && e[1][1].norm() < 1e-15);
        assert!(close(e[0][1].re, -t, 1e-15) && close(e[1][0].re, t, 1e-15));
    }

    #[test]
    fn vacuum_matrix_is_zero() {
        let s = Settings {
            alpha: 0.3,
            phi_s: 1.0,
            beta: -0.7,
            phi_a: 0.2,
        };
        let m = schmidt_matrix(&s, 0.4, 0.0);
        assert!(m.entries().iter().flatten().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn singular_values_equal_tanh() {
        let m = schmidt_matrix(&Settings::new(FRAC_PI_4, FRAC_PI_8), 0.0, 0.1);
        let [s1, s2] = m.singular_values();
        assert!(close(s1, 0.1f64.tanh(), 1e-12) && close(s2, 0.1f64.tanh(), 1e-12));
    }

    #[test]
    fn generating_function_normalization_and_vacuum() {
        let m = schmidt_matrix(&Settings::new(0.4, -0.2), 0.7, 0.25);
        let one = AttenuationVector::new([1.0; 4]).unwrap();
        assert_eq!(noclick_generating(&m, &one).unwrap(), 1.0);
        let vac = schmidt_matrix(&Settings::new(0.4, -0.2), 0.7, 0.0);
        let x = AttenuationVector::new([0.3, 0.5, 0.1, 0.9]).unwrap();
        assert!(close(noclick_generating(&vac, &x).unwrap(), 1.0, 1e-15));
    }

    #[test]
    fn single_detector_marginal_matches_closed_form() {
        let g: f64 = 0.047;
        let lam = g.tanh().powi(2);
        let eta_a = 0.1;
        let m = schmidt_matrix(&Settings::default(), 0.0, g);
        let x = AttenuationVector::new([1.0 - eta_a, 1.0, 1.0, 1.0]).unwrap();
        let got = noclick_generating(&m, &x).unwrap();
        let expected = (1.0 - lam) / (1.0 - lam * (1.0 - eta_a));
        assert!(close(got, expected, 1e-12));
    }

    #[test]
    fn attenuation_out_of_range() {
        assert!(AttenuationVector::new([1.1, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn vacuum_without_dark_counts_never_clicks() {
        let d = pattern_probs_fixed_phase(&Settings::default(), 0.0, [0.5; 4], 0.0, 0.0).unwrap();
        assert_eq!(d.prob(ClickPattern::from_index(0)), 1.0);
    }

    #[test]
    fn vacuum_dark_counts_are_independent() {
        let q = 0.013;
        let d = pattern_probs_fixed_phase(&Settings::new(0.3, 0.1), 0.0, [0.5; 4], q, 0.2).unwrap();
        let want = PatternDistribution::independent([q; 4]);
        for c in ClickPattern::all() {
            assert!(close(d.prob(c), want.prob(c), 1e-14 * want.prob(c)));
        }
    }

    #[test]
    fn silent_pair_matches_product_of_thermal_marginals() {
        // Both Alice detectors silent: two independent thermal modes.
        let g: f64 = 0.3;
        let lam = g.tanh().powi(2);
        let (eta, p) = (0.4, 0.01);
        let m = schmidt_matrix(&Settings::new(0.5, 1.1), 0.3, g);
        let cm = ClickModel::new(&m, [eta, eta, 0.2, 0.2], p).unwrap();
        let got = cm.event(0, 0b1100);
        let single = (1.0 - lam) / (1.0 - lam * (1.0 - eta));
        assert!(close(got, (1.0 - p).powi(2) * single * single, 1e-14));
    }
}
