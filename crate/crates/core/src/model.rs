//! Physical parameters, derived rates and stability of the linearized dynamics.

use std::f64::consts::PI;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the mechanical bath couples in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrownianNoise {
    /// Damping and noise on the momentum only.
    #[default]
    Momentum,
    /// Damping γ/2 and noise √γ on both quadratures.
    Symmetric,
}

/// All rates in rad/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega_m: f64,
    pub kappa: f64,
    pub gamma_m: f64,
    pub g: f64,
    pub delta: f64,
    pub n_th: f64,
    pub eta: f64,
    #[serde(default)]
    pub brownian: BrownianNoise,
}

impl SystemParams {
    /// ω_m/2π = 1 MHz, κ = 10 ω_m, Q = 1e8, n_th = 1e4, resonant drive, no coupling.
    pub fn baseline() -> Self {
        let omega_m = 2.0 * PI * 1e6;
        SystemParams {
            omega_m,
            kappa: 10.0 * omega_m,
            gamma_m: omega_m / 1e8,
            g: 0.0,
            delta: 0.0,
            n_th: 1e4,
            eta: 1.0,
            brownian: BrownianNoise::Momentum,
        }
    }

    /// Sets g so that the quantum cooperativity equals `c_q`.
    pub fn with_cq(mut self, c_q: f64) -> Self {
        self.g = coupling_for_cq(c_q, self.kappa, self.gamma_m, self.n_th);
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn q_factor(&self) -> f64 {
        self.omega_m / self.gamma_m
    }

    /// Largest rate in the problem, used to scale tolerances.
    pub fn max_rate(&self) -> f64 {
        self.omega_m
            .max(self.kappa)
            .max(self.gamma_m)
            .max(self.g)
            .max(self.delta.abs())
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.omega_m,
            self.kappa,
            self.gamma_m,
            self.g,
            self.delta,
            self.n_th,
            self.eta,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::contract("parameters must be finite"));
        }
        if !(self.omega_m > 0.0 && self.kappa > 0.0 && self.gamma_m > 0.0) {
            return Err(Error::contract("omega_m, kappa and gamma_m must be positive"));
        }
        if self.g < 0.0 {
            return Err(Error::contract("g must be non-negative"));
        }
        if self.n_th < 0.0 {
            return Err(Error::contract("n_th must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::contract("eta must lie in [0, 1]"));
        }
        Ok(())
    }
}

pub fn coupling_for_cq(c_q: f64, kappa: f64, gamma_m: f64, n_th: f64) -> f64 {
    (c_q * kappa * gamma_m * (n_th + 1.0) / 4.0).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DerivedRates {
    pub gamma_ro: f64,
    pub gamma_th: f64,
    pub c_q: f64,
    pub c_cl: f64,
    pub q_factor: f64,
}

pub fn derive_rates(p: &SystemParams) -> DerivedRates {
    let c_cl = 4.0 * p.g * p.g / (p.kappa * p.gamma_m);
    DerivedRates {
        gamma_ro: 4.0 * p.g * p.g / p.kappa,
        gamma_th: p.gamma_m * (p.n_th + 0.5),
        c_q: c_cl / (p.n_th + 1.0),
        c_cl,
        q_factor: p.q_factor(),
    }
}

/// Drift of (x_m, p_m, x_c, p_c).
pub fn drift_matrix(p: &SystemParams) -> Matrix4<f64> {
    let (gx, gp) = match p.brownian {
        BrownianNoise::Momentum => (0.0, p.gamma_m),
        BrownianNoise::Symmetric => (0.5 * p.gamma_m, 0.5 * p.gamma_m),
    };
    let h = 0.5 * p.kappa;
    let g2 = 2.0 * p.g;
    #[rustfmt::skip]
    let a = Matrix4::new(
        -gx,        p.omega_m, 0.0,      0.0,
        -p.omega_m, -gp,       -g2,      0.0,
        0.0,        0.0,       -h,       -p.delta,
        -g2,        0.0,       p.delta,  -h,
    );
    a
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub drift_eigen_real_parts: [f64; 4],
    /// Matching imaginary parts, used to place quadrature panels.
    pub drift_eigen_imag_parts: [f64; 4],
    pub stable: bool,
    pub margin: f64,
    pub routh_hurwitz_stable: bool,
    pub diagnostic: Option<String>,
}

impl StabilityReport {
    pub fn require_stable(&self) -> Result<()> {
        if self.stable {
            Ok(())
        } else {
            let max_real_part = self
                .drift_eigen_real_parts
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            Err(Error::Unstable { max_real_part })
        }
    }
}

pub fn check_stability(p: &SystemParams) -> StabilityReport {
    let a = drift_matrix(p);
    let eig = a.complex_eigenvalues();
    let mut pairs: Vec<(f64, f64)> = eig.iter().map(|z| (z.re, z.im)).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let re = [pairs[0].0, pairs[1].0, pairs[2].0, pairs[3].0];
    let im = [pairs[0].1, pairs[1].1, pairs[2].1, pairs[3].1];
    let tol = 1e-12 * p.max_rate();
    let stable = re.iter().all(|&r| r < -tol);
    let margin = re.iter().map(|r| r.abs()).fold(f64::INFINITY, f64::min);
    let rh = routh_hurwitz(&characteristic_polynomial(&a));
    let diagnostic = (rh != stable).then(|| {
        format!(
            "eigenvalue test says stable={stable} but Routh-Hurwitz says stable={rh} (margin {margin:e} rad/s)"
        )
    });
    StabilityReport {
        drift_eigen_real_parts: re,
        drift_eigen_imag_parts: im,
        stable,
        margin,
        routh_hurwitz_stable: rh,
        diagnostic,
    }
}

/// Coefficients [a1, a2, a3, a4] of det(λI − A) = λ⁴ + a1 λ³ + a2 λ² + a3 λ + a4
/// (Faddeev–LeVerrier).
pub fn characteristic_polynomial(a: &Matrix4<f64>) -> [f64; 4] {
    let mut coeffs = [0.0; 4];
    let mut m = Matrix4::identity();
    for k in 1..=4 {
        let am = a * m;
        let c = -am.trace() / k as f64;
        coeffs[k - 1] = c;
        m = am + Matrix4::identity() * c;
    }
    coeffs
}

/// Hurwitz conditions for a monic quartic.
pub fn routh_hurwitz(c: &[f64; 4]) -> bool {
    let [a1, a2, a3, a4] = *c;
    let h2 = a1 * a2 - a3;
    let h3 = a3 * h2 - a1 * a1 * a4;
    a1 > 0.0 && a3 > 0.0 && a4 > 0.0 && h2 > 0.0 && h3 > 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_coupling_gives_unit_cooperativity() {
        let mut p = SystemParams::baseline();
        p.g = 2.0 * PI * 15.8e3;
        let r = derive_rates(&p);
        assert!((r.c_q - 1.0).abs() < 5e-3, "c_q = {}", r.c_q);
        assert!((r.c_cl / r.c_q - (p.n_th + 1.0)).abs() < 1e-9);
    }

    #[test]
    fn zero_coupling_and_zero_occupation() {
        let mut p = SystemParams::baseline();
        let r = derive_rates(&p);
        assert_eq!(r.gamma_ro, 0.0);
        assert_eq!(r.c_q, 0.0);
        p.n_th = 0.0;
        p.g = 1e4;
        let r = derive_rates(&p);
        assert_eq!(r.gamma_th, p.gamma_m / 2.0);
        assert!((r.c_q - 4.0 * p.g * p.g / (p.kappa * p.gamma_m)).abs() <= 1e-12 * r.c_q);
    }

    #[test]
    fn drift_entries() {
        let p = SystemParams::baseline().with_cq(1.0);
        let a = drift_matrix(&p);
        assert_eq!(a[(1, 2)], -2.0 * p.g);
        assert_eq!(a[(3, 0)], -2.0 * p.g);
        assert!((a.trace() + p.gamma_m + p.kappa).abs() <= 1e-12 * p.kappa);
        let mut s = p;
        s.brownian = BrownianNoise::Symmetric;
        assert!((drift_matrix(&s).trace() + p.gamma_m + p.kappa).abs() <= 1e-12 * p.kappa);
    }

    #[test]
    fn decoupled_drift_is_block_diagonal() {
        let p = SystemParams::baseline();
        let a = drift_matrix(&p);
        for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3), (2, 0), (2, 1), (3, 0), (3, 1)] {
            assert_eq!(a[(i, j)], 0.0);
        }
        assert_eq!(a[(2, 2)], -p.kappa / 2.0);
        assert_eq!(a[(3, 3)], -p.kappa / 2.0);
    }

    #[test]
    fn decoupled_eigenvalues() {
        let mut p = SystemParams::baseline();
        p.gamma_m = 1e-3 * p.omega_m;
        let r = check_stability(&p);
        assert!(r.stable && r.routh_hurwitz_stable);
        let mut re = r.drift_eigen_real_parts;
        re.sort_by(f64::total_cmp);
        assert!((re[0] + p.kappa / 2.0).abs() < 1e-9 * p.kappa);
        assert!((re[1] + p.kappa / 2.0).abs() < 1e-9 * p.kappa);
        assert!((re[2] + p.gamma_m / 2.0).abs() < 1e-6 * p.gamma_m);
        assert!((re[3] + p.gamma_m / 2.0).abs() < 1e-6 * p.gamma_m);
    }

    #[test]
    fn blue_detuning_with_strong_coupling_is_unstable() {
        let mut p = SystemParams::baseline();
        p.gamma_m = 1e-4 * p.omega_m;
        p.kappa = 0.5 * p.omega_m;
        p.delta = p.omega_m;
        p.g = 0.2 * p.omega_m;
        let r = check_stability(&p);
        assert!(!r.stable);
        assert!(!r.routh_hurwitz_stable);
        assert!(r.require_stable().is_err());
    }

    #[test]
    fn validation() {
        let mut p = SystemParams::baseline();
        assert!(p.validate().is_ok());
        p.eta = 1.5;
        assert!(p.validate().is_err());
        p.eta = 1.0;
        p.gamma_m = 0.0;
        assert!(p.validate().is_err());
    }
}
