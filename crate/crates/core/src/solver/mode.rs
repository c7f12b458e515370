use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fundamental guided mode of a 1D permittivity cross-section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeProfile {
    /// Real transverse profile, normalized so that `Σ φ² Δ = 1`.
    pub profile: Vec<f64>,
    /// Eigenvalue `β²` of the discrete transverse operator.
    pub beta_sq: f64,
    /// Effective index `β / ω`.
    pub n_eff: f64,
    /// Propagation constant of the discrete 1D lattice along x:
    /// `cos(KΔ) = 1 − β²Δ²/2`.
    pub k_lattice: f64,
    pub omega: f64,
    pub spacing: f64,
}

impl ModeProfile {
    /// Discrete energy-flux factor `sin(KΔ)/Δ`; tends to `β` as `Δ → 0`.
    pub fn power_factor(&self) -> f64 {
        (self.k_lattice * self.spacing).sin() / self.spacing
    }
}

/// Number of eigenvalues of the symmetric tridiagonal matrix `(d, e)` that are
/// strictly greater than `x`.
fn count_above(d: &[f64], off: f64, x: f64) -> usize {
    // Sturm sequence on (x I - T); negative pivots count eigenvalues above x.
    let mut count = 0;
    let mut q = 1.0;
    for (i, &di) in d.iter().enumerate() {
        let coupling = if i == 0 { 0.0 } else { off * off / q };
        q = x - di - coupling;
        if q == 0.0 {
            q = -f64::EPSILON * (x.abs() + 1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solve the Thomas system `(T − σ I) v = rhs` for constant off-diagonal.
fn thomas(d: &[f64], off: f64, shift: f64, rhs: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut c = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut denom = d[0] - shift;
    c[0] = off / denom;
    g[0] = rhs[0] / denom;
    for i in 1..n {
        denom = d[i] - shift - off * c[i - 1];
        c[i] = off / denom;
        g[i] = (rhs[i] - off * g[i - 1]) / denom;
    }
    let mut v = vec![0.0; n];
    v[n - 1] = g[n - 1];
    for i in (0..n - 1).rev() {
        v[i] = g[i] - c[i] * v[i + 1];
    }
    v
}

/// Fundamental mode of the cross-section `eps` (one value per cell) at angular
/// frequency `omega`. Both ends are held at zero.
///
/// Fails with [`Error::Mode`] when the largest eigenvalue is not above the
/// light line of the outermost material, i.e. nothing is guided.
pub fn slab_mode(eps: &[f64], omega: f64, spacing: f64) -> Result<ModeProfile> {
    if eps.len() < 3 {
        return Err(Error::Mode(format!("cross-section of {} cells is too short", eps.len())));
    }
    if !(omega > 0.0 && spacing > 0.0) || eps.iter().any(|e| !e.is_finite()) {
        return Err(Error::Mode("non-finite or non-positive mode parameters".into()));
    }
    let h2 = spacing * spacing;
    let off = 1.0 / h2;
    let d: Vec<f64> = eps.iter().map(|&e| -2.0 / h2 + omega * omega * e).collect();

    // Gershgorin bounds
    let mut lo = d.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0 * off;
    let mut hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 2.0 * off;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_above(&d, off, mid) >= 1 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    let beta_sq = 0.5 * (lo + hi);

    let edge = eps[0].max(eps[eps.len() - 1]);
    let cutoff = omega * omega * edge;
    if beta_sq <= cutoff {
        return Err(Error::Mode(format!(
            "no guided mode: β² = {beta_sq:.6} does not exceed the cladding light line {cutoff:.6}"
        )));
    }
    if beta_sq * h2 >= 4.0 {
        return Err(Error::Mode("grid too coarse to propagate the mode".into()));
    }

    // inverse iteration just above the top eigenvalue keeps T - σI negative definite
    let shift = beta_sq + 1e-9 * beta_sq.abs().max(off);
    let n = eps.len();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    for _ in 0..6 {
        let w = thomas(&d, off, shift, &v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.into_iter().map(|x| x / norm).collect();
    }
    let scale = (v.iter().map(|x| x * x).sum::<f64>() * spacing).sqrt();
    let peak = v.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    let sign = if peak < 0.0 { -1.0 } else { 1.0 };
    let profile: Vec<f64> = v.iter().map(|x| sign * x / scale).collect();

    let k_lattice = (1.0 - beta_sq * h2 / 2.0).acos() / spacing;
    Ok(ModeProfile {
        profile,
        beta_sq,
        n_eff: beta_sq.sqrt() / omega,
        k_lattice,
        omega,
        spacing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn slab(n_clad: usize, n_core: usize, core: f64, clad: f64) -> Vec<f64> {
        let mut e = vec![clad; n_clad];
        e.extend(std::iter::repeat(core).take(n_core));
        e.extend(std::iter::repeat(clad).take(n_clad));
        e
    }

    #[test]
    fn sturm_count_matches_known_spectrum() {
        // eigenvalues of tridiag(1, -2, 1) of size n are -2 + 2 cos(kπ/(n+1))
        let n = 10;
        let d = vec![-2.0; n];
        let eig: Vec<f64> = (1..=n).map(|k| -2.0 + 2.0 * (k as f64 * PI / (n as f64 + 1.0)).cos()).collect();
        for x in [-3.9, -2.0, -0.5, 0.0] {
            let expected = eig.iter().filter(|&&l| l > x).count();
            assert_eq!(count_above(&d, 1.0, x), expected, "x = {x}");
        }
    }

    #[test]
    fn mode_is_normalized_and_even() {
        let eps = slab(60, 18, 12.085, 2.085);
        let m = slab_mode(&eps, 2.0 * PI / 1.55, 0.025).unwrap();
        let norm: f64 = m.profile.iter().map(|x| x * x * 0.025).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        let n = m.profile.len();
        for i in 0..n / 2 {
            assert!((m.profile[i] - m.profile[n - 1 - i]).abs() < 1e-8);
        }
        assert!(m.profile.iter().all(|&x| x > -1e-12), "fundamental mode has no nodes");
        assert!(m.n_eff > 2.085f64.sqrt() && m.n_eff < 12.085f64.sqrt());
    }

    #[test]
    fn eigen_residual_is_small() {
        let eps = slab(40, 15, 12.085, 2.085);
        let (w, h) = (2.0 * PI / 1.55, 0.03);
        let m = slab_mode(&eps, w, h).unwrap();
        let p = &m.profile;
        let mut worst = 0.0f64;
        for i in 0..p.len() {
            let left = if i > 0 { p[i - 1] } else { 0.0 };
            let right = if i + 1 < p.len() { p[i + 1] } else { 0.0 };
            let tv = (left - 2.0 * p[i] + right) / (h * h) + w * w * eps[i] * p[i];
            worst = worst.max((tv - m.beta_sq * p[i]).abs());
        }
        assert!(worst / m.beta_sq < 1e-8, "relative residual {worst}");
    }

    #[test]
    fn uniform_medium_has_no_guided_mode() {
        let eps = vec![2.085; 50];
        assert!(matches!(slab_mode(&eps, 2.0 * PI / 1.55, 0.03), Err(Error::Mode(_))));
    }

    #[test]
    fn lattice_constant_tends_to_beta() {
        let eps = slab(60, 30, 12.085, 2.085);
        let m = slab_mode(&eps, 2.0 * PI / 1.55, 0.015).unwrap();
        let beta = m.beta_sq.sqrt();
        assert!((m.k_lattice - beta) / beta < 0.01);
        assert!((m.power_factor() - beta) / beta < 0.01);
    }
}
