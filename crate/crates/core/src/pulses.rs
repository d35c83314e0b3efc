//! Early and late temporal modes: exponentially decaying envelopes demodulated
//! at the mechanical frequency.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::quadrature::{integrate, resonant_layout, Anchored, Feature, Panel, Tolerance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Early,
    Late,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    /// Bandwidth Γ (rad/s).
    pub gamma: f64,
    /// Separation between the two supports (s).
    pub t_sep: f64,
    /// Rotation applied to the late mode, f_L → f_L e^{iφ}.
    pub phi: f64,
}

impl PulseParams {
    pub fn new(gamma: f64, t_sep: f64, phi: f64) -> Self {
        PulseParams { gamma, t_sep, phi }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::contract("pulse bandwidth must be positive"));
        }
        if !(self.t_sep >= 0.0 && self.t_sep.is_finite()) {
            return Err(Error::contract("pulse separation must be non-negative"));
        }
        if !self.phi.is_finite() {
            return Err(Error::contract("phi must be finite"));
        }
        Ok(())
    }
}

/// Mode function in time. θ(0) = 1 at the support edges.
pub fn mode_time(which: Which, t: f64, p: &SystemParams, pulse: &PulseParams) -> C64 {
    let half = 0.5 * pulse.t_sep;
    let norm = (2.0 * pulse.gamma).sqrt();
    match which {
        Which::Early if -t - half >= 0.0 => {
            norm * (pulse.gamma * (t + half)).exp() * C64::from_polar(1.0, -p.omega_m * t)
        }
        Which::Late if t - half >= 0.0 => {
            norm * (-pulse.gamma * (t - half)).exp() * C64::from_polar(1.0, p.omega_m * t)
        }
        _ => C64::new(0.0, 0.0),
    }
}

/// Fourier transform of [`mode_time`]: Lorentzians centred at +ω_m (early)
/// and −ω_m (late).
pub fn mode_freq(
    which: Which,
    omega: impl Into<Anchored>,
    p: &SystemParams,
    pulse: &PulseParams,
) -> C64 {
    let w = omega.into();
    let amp = (pulse.gamma / PI).sqrt();
    let half = 0.5 * pulse.t_sep;
    match which {
        Which::Early => {
            let d = w.minus(p.omega_m);
            amp * C64::from_polar(1.0, -d * half) / C64::new(pulse.gamma, d)
        }
        Which::Late => {
            let s = w.plus(p.omega_m);
            amp * C64::from_polar(1.0, s * half) / C64::new(pulse.gamma, -s)
        }
    }
}

/// Filter applied to a_out(ω) when forming the mode operator,
/// r_j = ∫ dω F_j(ω) a_out(ω), including the late-mode rotation.
pub fn extraction_kernel(which: Which, w: Anchored, p: &SystemParams, pulse: &PulseParams) -> C64 {
    let f = mode_freq(which, w.neg(), p, pulse);
    match which {
        Which::Early => f,
        Which::Late => f * C64::from_polar(1.0, pulse.phi),
    }
}

fn support_panels(which: Which, pulse: &PulseParams) -> Vec<Panel> {
    let half = 0.5 * pulse.t_sep;
    let w = 1.0 / pulse.gamma;
    let mut edges = vec![0.0, 0.25 * w];
    while *edges.last().unwrap() < 100.0 * w {
        let next = edges.last().unwrap() * 2.0;
        edges.push(next);
    }
    let sign = match which {
        Which::Early => -1.0,
        Which::Late => 1.0,
    };
    edges
        .windows(2)
        .map(|e| {
            let (a, b) = (sign * e[0], sign * e[1]);
            Panel::finite(sign * half, a.min(b), a.max(b))
        })
        .collect()
}

/// ∫ f_i(t) f_j*(t) dt by quadrature over the mode supports.
pub fn overlap(i: Which, j: Which, p: &SystemParams, pulse: &PulseParams) -> Result<C64> {
    pulse.validate()?;
    let mut panels = support_panels(i, pulse);
    if j != i {
        panels.extend(support_panels(j, pulse));
    }
    let tol = Tolerance {
        abs: 1e-13,
        rel: 1e-13,
        ..Tolerance::default()
    };
    let est = integrate(
        "mode overlap",
        |t| {
            let v = mode_time(i, t.value(), p, pulse) * mode_time(j, t.value(), p, pulse).conj();
            [v.re, v.im]
        },
        &panels,
        tol,
    )?;
    Ok(C64::new(est.value[0], est.value[1]))
}

/// ∫ f̃_i(ω) f̃_j*(ω) dω, equal to [`overlap`] by Plancherel.
pub fn overlap_freq(i: Which, j: Which, p: &SystemParams, pulse: &PulseParams) -> Result<C64> {
    pulse.validate()?;
    let extras: Vec<f64> = [1.0, 3.0, 10.0]
        .iter()
        .flat_map(|k| [k * pulse.gamma, -k * pulse.gamma])
        .collect();
    let feats = [
        Feature::new(p.omega_m, pulse.gamma).with_extra(extras.clone()),
        Feature::new(-p.omega_m, pulse.gamma).with_extra(extras),
    ];
    let outer = 100.0 * p.omega_m.max(pulse.gamma);
    let est = integrate(
        "mode overlap (frequency domain)",
        |w| {
            let v = mode_freq(i, w, p, pulse) * mode_freq(j, w, p, pulse).conj();
            [v.re, v.im]
        },
        &resonant_layout(&feats, outer),
        Tolerance {
            abs: 1e-12,
            rel: 1e-12,
            ..Tolerance::default()
        },
    )?;
    Ok(C64::new(est.value[0], est.value[1]))
}
