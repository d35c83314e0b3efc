//! Frequency-domain solution of the Langevin equations.
//!
//! Fourier convention h(ω) = ∫ dt/√(2π) e^{iωt} h(t), so d/dt → −iω.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{check_stability, derive_rates, BrownianNoise, SystemParams};
use crate::quadrature::Anchored;

/// (ω_m − ω)(ω_m + ω) − iωγ_m, formed without cancellation near ±ω_m.
fn mech_denominator(w: Anchored, p: &SystemParams, extra: f64) -> C64 {
    let re = -w.minus(p.omega_m) * w.plus(p.omega_m) + extra;
    C64::new(re, -w.value() * p.gamma_m)
}

/// Mechanical susceptibility ω_m/(ω_m² − ω² − iωγ_m).
pub fn chi_m(omega: impl Into<Anchored>, p: &SystemParams) -> C64 {
    p.omega_m / mech_denominator(omega.into(), p, 0.0)
}

/// Mechanical response of the configured Brownian-noise model.
fn chi_mech(w: Anchored, p: &SystemParams) -> C64 {
    match p.brownian {
        BrownianNoise::Momentum => p.omega_m / mech_denominator(w, p, 0.0),
        BrownianNoise::Symmetric => {
            p.omega_m / mech_denominator(w, p, 0.25 * p.gamma_m * p.gamma_m)
        }
    }
}

/// Optical susceptibility √κ/(κ/2 − iω).
pub fn chi_opt(omega: impl Into<Anchored>, p: &SystemParams) -> C64 {
    let w = omega.into().value();
    p.kappa.sqrt() / C64::new(0.5 * p.kappa, -w)
}

/// Reflection phase (κ/2 + iω)/(κ/2 − iω).
pub fn refl_phase(omega: impl Into<Anchored>, p: &SystemParams) -> C64 {
    let w = omega.into().value();
    C64::new(0.5 * p.kappa, w) / C64::new(0.5 * p.kappa, -w)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoiseFactors {
    pub s: C64,
    pub b: C64,
    pub t: C64,
}

impl NoiseFactors {
    /// |B|² + |T|².
    pub fn d(&self) -> f64 {
        self.b.norm_sqr() + self.t.norm_sqr()
    }
}

pub(crate) fn noise_factors_unchecked(w: Anchored, p: &SystemParams) -> NoiseFactors {
    let xo = chi_opt(w, p);
    let xm = chi_m(w, p);
    NoiseFactors {
        s: refl_phase(w, p),
        b: 2.0 * p.g * p.g * xo * xo * xm,
        t: 2.0 * p.g * (p.gamma_m * (p.n_th + 0.5)).sqrt() * xo * xm,
    }
}

/// Shot-noise, back-action and thermal prefactors of the resonant-drive output.
pub fn noise_factors_exact(omega: impl Into<Anchored>, p: &SystemParams) -> Result<NoiseFactors> {
    if p.delta != 0.0 {
        return Err(Error::contract(
            "exact noise factors require zero detuning; use the covariance route",
        ));
    }
    Ok(noise_factors_unchecked(omega.into(), p))
}

/// Large-κ limit of the noise factors.
pub fn noise_factors_adiabatic(omega: impl Into<Anchored>, p: &SystemParams) -> NoiseFactors {
    let r = derive_rates(p);
    let xm = chi_m(omega, p);
    NoiseFactors {
        s: C64::new(1.0, 0.0),
        b: 2.0 * r.gamma_ro * xm,
        t: 2.0 * (r.gamma_ro * r.gamma_th).sqrt() * xm,
    }
}

/// Column order of [`TransferMatrix::m`].
pub const X_IN: usize = 0;
pub const P_IN: usize = 1;
/// Bath noise driving the mechanical momentum.
pub const XI_P: usize = 2;
/// Bath noise driving the mechanical position (symmetric model only).
pub const XI_X: usize = 3;

/// Maps (x_in, p_in, ξ_p, ξ_x) to (x_out, p_out) at one frequency. With
/// momentum-only Brownian noise the ξ_x column is identically zero and the
/// remaining three columns are the usual (x_in, p_in, ξ) transfer matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TransferMatrix {
    pub m: [[C64; 4]; 2],
}

impl TransferMatrix {
    pub fn optical(&self) -> [[C64; 2]; 2] {
        [[self.m[0][0], self.m[0][1]], [self.m[1][0], self.m[1][1]]]
    }
}

/// Symmetrized input spectral densities per unit bandwidth, matching the
/// columns of [`TransferMatrix`].
pub fn input_densities(p: &SystemParams) -> [f64; 4] {
    let th = p.n_th + 0.5;
    [0.5, 0.5, th, th]
}

/// Output transfer matrix for arbitrary detuning. The mechanics is eliminated
/// first, leaving a 2×2 cavity system; this keeps ω_m² − ω² exact near the
/// mechanical peaks where a direct 4×4 inverse would lose ~log10(Q) digits.
pub fn transfer_unchecked(omega: impl Into<Anchored>, p: &SystemParams) -> TransferMatrix {
    let w = omega.into();
    let a = C64::new(0.5 * p.kappa, -w.value());
    let ap = C64::new(0.5 * p.kappa, w.value());
    let chi = chi_mech(w, p);
    let sk = p.kappa.sqrt();
    let g = p.g;
    let delta = p.delta;
    let shifted = delta + 4.0 * g * g * chi;
    let det = a * a + delta * shifted;
    // Bath noise enters the momentum equation as N = c_p ξ_p + c_x ξ_x.
    let (c_p, c_x) = match p.brownian {
        BrownianNoise::Momentum => (C64::new((2.0 * p.gamma_m).sqrt(), 0.0), C64::new(0.0, 0.0)),
        BrownianNoise::Symmetric => {
            let s = p.gamma_m.sqrt();
            (
                C64::new(s, 0.0),
                s * C64::new(0.5 * p.gamma_m, -w.value()) / p.omega_m,
            )
        }
    };
    // κa/det − 1 written without cancellation.
    let diag = (a * ap - delta * shifted) / det;
    let xn = 2.0 * sk * delta * g * chi / det;
    let pn = -2.0 * sk * a * g * chi / det;
    TransferMatrix {
        m: [
            [diag, -p.kappa * delta / det, xn * c_p, xn * c_x],
            [p.kappa * shifted / det, diag, pn * c_p, pn * c_x],
        ],
    }
}

/// Output transfer matrix; refuses unstable parameter sets.
pub fn transfer_detuned(omega: impl Into<Anchored>, p: &SystemParams) -> Result<TransferMatrix> {
    p.validate()?;
    check_stability(p).require_stable()?;
    Ok(transfer_unchecked(omega, p))
}
