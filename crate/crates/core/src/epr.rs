//! EPR-variance of the early/late pair: exact quadrature, matrix form and
//! the large-κ closed form, plus the optimizers over φ and Γ.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_stability, derive_rates, SystemParams};
use crate::pulses::{extraction_kernel, PulseParams, Which};
use crate::quadrature::{integrate, resonant_layout, Anchored, Feature, Panel, Tolerance};
use crate::spectral::noise_factors_unchecked;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExactQuadrature,
    MatrixForm,
    ClosedForm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ExactQuadrature => "exact_quadrature",
            Method::MatrixForm => "matrix_form",
            Method::ClosedForm => "closed_form",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EprResult {
    pub value: f64,
    pub phi_used: f64,
    pub gamma_used: f64,
    pub method: Method,
    /// value < 2, no tolerance band.
    pub entangled: bool,
    /// 2 − value.
    pub margin: f64,
    /// Quadrature error estimate (zero for the closed form).
    pub abs_error: f64,
    /// Closed form only: bandwidth outside its derivation's validity range.
    pub domain_warning: bool,
}

impl EprResult {
    fn new(value: f64, pulse: &PulseParams, method: Method, abs_error: f64) -> Self {
        EprResult {
            value,
            phi_used: pulse.phi,
            gamma_used: pulse.gamma,
            method,
            entangled: value < 2.0,
            margin: 2.0 - value,
            abs_error,
            domain_warning: false,
        }
    }
}

/// Beam-splitter loss applied to an ideal-detection EPR-variance.
pub fn apply_efficiency(value: f64, eta: f64) -> f64 {
    eta * value + 2.0 * (1.0 - eta)
}

pub(crate) fn epr_tolerance() -> Tolerance {
    Tolerance {
        abs: 1e-10,
        rel: 1e-12,
        max_panels: 400_000,
    }
}

/// Panels for spectral integrals: resonances at ±ω_m (widths γ_m/2 and Γ),
/// the cavity scale around zero, and any extra poles supplied by the caller.
pub(crate) fn spectral_layout(p: &SystemParams, pulse: &PulseParams, poles: &[(f64, f64)]) -> Vec<Panel> {
    let wide = pulse.gamma.max(p.gamma_m);
    let extras: Vec<f64> = [1.0, 3.0, 10.0]
        .iter()
        .flat_map(|k| [k * wide, -k * wide])
        .collect();
    let narrow = (0.5 * p.gamma_m).min(pulse.gamma);
    let mut feats = vec![
        Feature::new(p.omega_m, narrow).with_extra(extras.clone()),
        Feature::new(-p.omega_m, narrow).with_extra(extras),
        Feature::new(0.0, 0.25 * p.omega_m.min(0.5 * p.kappa)),
    ];
    for &(center, width) in poles {
        feats.push(Feature::new(center, width.min(pulse.gamma)));
    }
    let outer = 100.0 * p.kappa.max(p.omega_m).max(pulse.gamma).max(p.delta.abs());
    resonant_layout(&feats, outer)
}

fn check_resonant(p: &SystemParams, pulse: &PulseParams) -> Result<()> {
    p.validate()?;
    pulse.validate()?;
    if p.delta != 0.0 {
        return Err(Error::contract(
            "the EPR evaluators require zero detuning; use the covariance route for delta != 0",
        ));
    }
    check_stability(p).require_stable()
}

struct Pointwise {
    d: f64,
    p: C64,
    fe: C64,
    fl: C64,
    fe_m: C64,
    fl_m: C64,
}

fn pointwise(w: Anchored, p: &SystemParams, pulse: &PulseParams) -> Pointwise {
    let nf = noise_factors_unchecked(w, p);
    let s_minus = nf.s.conj();
    Pointwise {
        d: nf.d(),
        p: s_minus * nf.b,
        fe: extraction_kernel(Which::Early, w, p, pulse),
        fl: extraction_kernel(Which::Late, w, p, pulse),
        fe_m: extraction_kernel(Which::Early, w.neg(), p, pulse),
        fl_m: extraction_kernel(Which::Late, w.neg(), p, pulse),
    }
}

/// Intra-mode excess noise and inter-mode correlation density at one frequency.
fn densities(q: &Pointwise) -> (f64, C64) {
    let intra = (q.fe.norm_sqr() + q.fl.norm_sqr()) * (2.0 * q.d - 2.0 * q.p.im);
    let pair = q.fe_m * q.fl + q.fl_m * q.fe;
    (intra, pair * C64::new(-q.d, 0.0) + pair * C64::new(0.0, 1.0) * q.p)
}

/// Exact EPR-variance at the pulse's own φ, by adaptive quadrature.
pub fn epr_exact(p: &SystemParams, pulse: &PulseParams) -> Result<EprResult> {
    check_resonant(p, pulse)?;
    let raw = exact_raw(p, pulse)?;
    let value = apply_efficiency(raw.0, p.eta);
    Ok(EprResult::new(value, pulse, Method::ExactQuadrature, p.eta * raw.1))
}

fn exact_raw(p: &SystemParams, pulse: &PulseParams) -> Result<(f64, f64)> {
    let rot = C64::from_polar(1.0, pulse.phi);
    let layout = spectral_layout(p, pulse, &[]);
    let base = PulseParams { phi: 0.0, ..*pulse };
    let est = integrate(
        "exact EPR-variance",
        |w| {
            let q = pointwise(w, p, &base);
            let (intra, inter) = densities(&q);
            [intra + 2.0 * (rot * inter).re]
        },
        &layout,
        epr_tolerance(),
    )?;
    Ok((2.0 + est.value[0], est.error[0]))
}

/// Intra-mode excess and the inter-mode correlator c = ⟨r_L r_E + r_E r_L⟩ at
/// φ = 0, so that Δ(φ) = 2 + intra + 2 Re(e^{iφ} c).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correlators {
    pub intra: f64,
    pub c: C64,
}

impl Correlators {
    pub fn value_at(&self, phi: f64) -> f64 {
        2.0 + self.intra + 2.0 * (C64::from_polar(1.0, phi) * self.c).re
    }
}

pub fn correlators(p: &SystemParams, pulse: &PulseParams) -> Result<Correlators> {
    check_resonant(p, pulse)?;
    let base = PulseParams { phi: 0.0, ..*pulse };
    let est = integrate(
        "inter-mode correlator",
        |w| {
            let q = pointwise(w, p, &base);
            let (intra, inter) = densities(&q);
            [intra, inter.re, inter.im]
        },
        &spectral_layout(p, pulse, &[]),
        epr_tolerance(),
    )?;
    Ok(Correlators {
        intra: est.value[0],
        c: C64::new(est.value[1], est.value[2]),
    })
}

/// M(ω) acting on v = (F_E(ω), F_L*(−ω), F_E*(ω), F_L(−ω)).
pub fn matrix_m(omega: impl Into<Anchored>, p: &SystemParams) -> [[C64; 4]; 4] {
    let w = omega.into();
    let nf = noise_factors_unchecked(w, p);
    let d = nf.d();
    let pp = nf.s.conj() * nf.b;
    let (pr, pi) = (pp.re, pp.im);
    let z = C64::new(0.0, 0.0);
    let c = |re: f64, im: f64| C64::new(re, im);
    [
        [c(d - pi, 0.0), c(-d, -pr), z, z],
        [c(-d, pr), c(d + pi, 0.0), z, z],
        [z, z, c(d - pi, 0.0), c(-d, pr)],
        [z, z, c(-d, -pr), c(d + pi, 0.0)],
    ]
}

/// 2 + ∫ v† M v dω.
pub fn epr_matrix_form(p: &SystemParams, pulse: &PulseParams) -> Result<EprResult> {
    check_resonant(p, pulse)?;
    let est = integrate(
        "matrix-form EPR-variance",
        |w| {
            let m = matrix_m(w, p);
            let fe = extraction_kernel(Which::Early, w, p, pulse);
            let fl_m = extraction_kernel(Which::Late, w.neg(), p, pulse);
            let v = [fe, fl_m.conj(), fe.conj(), fl_m];
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..4 {
                let mut row = C64::new(0.0, 0.0);
                for j in 0..4 {
                    row += m[i][j] * v[j];
                }
                acc += v[i].conj() * row;
            }
            [acc.re]
        },
        &spectral_layout(p, pulse, &[]),
        epr_tolerance(),
    )?;
    let value = apply_efficiency(2.0 + est.value[0], p.eta);
    Ok(EprResult::new(value, pulse, Method::MatrixForm, p.eta * est.error[0]))
}

/// Terms of the closed form: value = 2 + auto + cross.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClosedFormTerms {
    /// Back-action and thermal auto-correlations (intra minus inter).
    pub auto: f64,
    /// Shot-noise × back-action cross-correlation.
    pub cross: f64,
}

pub fn closed_form_terms(p: &SystemParams, pulse: &PulseParams) -> ClosedFormTerms {
    let r = derive_rates(p);
    let gm = p.gamma_m;
    let lead = p.eta * 4.0 * r.gamma_ro / (pulse.gamma + 0.5 * gm);
    let x = pulse.gamma * (-gm * pulse.t_sep / 2.0).exp() / (pulse.gamma + 0.5 * gm) * pulse.phi.cos();
    ClosedFormTerms {
        auto: lead * 2.0 * (r.gamma_ro + r.gamma_th) / gm * (1.0 - x),
        cross: -lead * x,
    }
}

/// Bandwidth above which the closed form's derivation no longer applies.
pub fn closed_form_gamma_limit(p: &SystemParams) -> f64 {
    let r = derive_rates(p);
    0.1 * p.omega_m / (p.n_th * (r.c_q + 1.0)).sqrt()
}

pub fn epr_closed_form(p: &SystemParams, pulse: &PulseParams) -> EprResult {
    let t = closed_form_terms(p, pulse);
    let mut res = EprResult::new(2.0 + t.auto + t.cross, pulse, Method::ClosedForm, 0.0);
    res.domain_warning = pulse.gamma > closed_form_gamma_limit(p);
    res
}

/// Γ_opt = 2(Γ_ro + Γ_th) + γ_m/2.
pub fn gamma_opt(p: &SystemParams) -> f64 {
    let r = derive_rates(p);
    2.0 * (r.gamma_ro + r.gamma_th) + 0.5 * p.gamma_m
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhiChoice {
    pub phi: f64,
    pub degenerate: bool,
}

/// φ minimizing 2 Re(e^{iφ} c): π − arg c, wrapped to (−π, π].
pub fn optimize_phi(c: C64) -> PhiChoice {
    if c.norm() == 0.0 {
        return PhiChoice {
            phi: 0.0,
            degenerate: true,
        };
    }
    let mut phi = PI - c.arg();
    if phi > PI {
        phi -= 2.0 * PI;
    }
    PhiChoice {
        phi,
        degenerate: false,
    }
}

pub fn evaluate(p: &SystemParams, pulse: &PulseParams, method: Method) -> Result<EprResult> {
    match method {
        Method::ExactQuadrature => epr_exact(p, pulse),
        Method::MatrixForm => epr_matrix_form(p, pulse),
        Method::ClosedForm => Ok(epr_closed_form(p, pulse)),
    }
}

/// Evaluates at the analytically optimal φ for this Γ.
pub fn evaluate_at_optimal_phi(p: &SystemParams, gamma: f64, t_sep: f64, method: Method) -> Result<EprResult> {
    let mut pulse = PulseParams::new(gamma, t_sep, 0.0);
    if method != Method::ClosedForm {
        let c = correlators(p, &pulse)?;
        pulse.phi = optimize_phi(c.c).phi;
    }
    evaluate(p, &pulse, method)
}

/// Golden-section search on ln Γ after bracketing around Γ_opt.
pub fn minimize_scalar_log<F>(what: &str, mut f: F, seed: f64, lo: f64, hi: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (xlo, xhi) = (lo.ln(), hi.ln());
    if !(xlo < xhi) {
        return Err(Error::BracketFailure(format!("{what}: empty search interval")));
    }
    let x0 = seed.ln().clamp(xlo, xhi);
    let mut eval = |x: f64| f(x.exp());
    let step = std::f64::consts::LN_2;
    let mut a = (x0 - step).max(xlo);
    let mut b = x0;
    let mut c = (x0 + step).min(xhi);
    if b <= a || c <= b {
        b = 0.5 * (a + c);
    }
    let (mut fa, mut fb, mut fc) = (eval(a)?, eval(b)?, eval(c)?);
    let mut grow = 2.0 * step;
    let mut guard = 0;
    while !(fb <= fa && fb <= fc) {
        guard += 1;
        if guard > 100 {
            return Err(Error::BracketFailure(what.to_string()));
        }
        if fa < fc {
            if a <= xlo {
                return Err(Error::BracketFailure(format!("{what}: minimum below lower bound")));
            }
            (c, fc) = (b, fb);
            (b, fb) = (a, fa);
            a = (a - grow).max(xlo);
            fa = eval(a)?;
        } else {
            if c >= xhi {
                return Err(Error::BracketFailure(format!("{what}: minimum above upper bound")));
            }
            (a, fa) = (b, fb);
            (b, fb) = (c, fc);
            c = (c + grow).min(xhi);
            fc = eval(c)?;
        }
        grow *= 1.6;
    }
    let _ = (fa, fc);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo_x, mut hi_x) = (a, c);
    let mut x1 = hi_x - r * (hi_x - lo_x);
    let mut x2 = lo_x + r * (hi_x - lo_x);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    let mut best = (b, fb);
    for _ in 0..60 {
        if f1 < best.1 {
            best = (x1, f1);
        }
        if f2 < best.1 {
            best = (x2, f2);
        }
        if f1 <= f2 {
            hi_x = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi_x - r * (hi_x - lo_x);
            f1 = eval(x1)?;
        } else {
            lo_x = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo_x + r * (hi_x - lo_x);
            f2 = eval(x2)?;
        }
    }
    for (x, fx) in [(x1, f1), (x2, f2)] {
        if fx < best.1 {
            best = (x, fx);
        }
    }
    Ok((best.0.exp(), best.1))
}

/// Minimizes the EPR-variance over Γ ∈ [γ_m, 0.1 κ] at the optimal φ for each Γ.
pub fn minimize_over_gamma(p: &SystemParams, method: Method, t_sep: f64, eta: f64) -> Result<EprResult> {
    let p = SystemParams { eta, ..*p };
    p.validate()?;
    if method != Method::ClosedForm {
        check_resonant(&p, &PulseParams::new(gamma_opt(&p), t_sep, 0.0))?;
    }
    let objective = |gamma: f64| -> Result<f64> {
        let pulse = PulseParams::new(gamma, t_sep, 0.0);
        match method {
            Method::ClosedForm => Ok(epr_closed_form(&p, &pulse).value),
            _ => {
                let c = correlators(&p, &pulse)?;
                let raw = c.value_at(optimize_phi(c.c).phi);
                Ok(apply_efficiency(raw, p.eta))
            }
        }
    };
    let (gamma, _) = minimize_scalar_log(
        "EPR-variance over pulse bandwidth",
        objective,
        gamma_opt(&p),
        p.gamma_m,
        0.1 * p.kappa,
    )?;
    evaluate_at_optimal_phi(&p, gamma, t_sep, method)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn light() -> SystemParams {
        let mut p = SystemParams::baseline();
        p.omega_m = 1.0;
        p.kappa = 10.0;
        p.gamma_m = 1e-4;
        p.n_th = 10.0;
        p
    }

    #[test]
    fn shot_noise_without_coupling() {
        let p = SystemParams::baseline();
        let pulse = PulseParams::new(2.0 * PI * 400.0, 0.0, 0.3);
        assert!((epr_exact(&p, &pulse).unwrap().value - 2.0).abs() < 1e-9);
        assert!((epr_matrix_form(&p, &pulse).unwrap().value - 2.0).abs() < 1e-9);
        for eta in [0.0, 0.3, 1.0] {
            let q = p.with_eta(eta);
            assert_eq!(epr_closed_form(&q, &pulse).value, 2.0);
        }
        let m = matrix_m(0.7, &p);
        assert!(m.iter().flatten().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn m_is_hermitian() {
        let p = SystemParams::baseline().with_cq(3.0);
        for w in [-2.0, -1.0, 0.5, 1.0 + 1e-9, 7.0] {
            let m = matrix_m(w * p.omega_m, &p);
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(m[i][j], m[j][i].conj());
                }
            }
        }
    }

    #[test]
    fn closed_form_main_result() {
        for cq in [0.1, 1.0, 10.0] {
            let p = SystemParams::baseline().with_cq(cq);
            let pulse = PulseParams::new(gamma_opt(&p), 0.0, 0.0);
            let v = epr_closed_form(&p, &pulse).value;
            assert!((v - (1.0 + 1.0 / (cq + 1.0))).abs() < 1e-10, "{cq}: {v}");
        }
        let p = SystemParams::baseline().with_cq(10.0).with_eta(0.8);
        let v = epr_closed_form(&p, &PulseParams::new(gamma_opt(&p), 0.0, 0.0)).value;
        assert!((v - (2.0 - 0.8 * 10.0 / 11.0)).abs() < 1e-10);
    }

    #[test]
    fn gamma_opt_values() {
        let mut p = SystemParams::baseline();
        p.n_th = 0.0;
        assert!((gamma_opt(&p) - 1.5 * p.gamma_m).abs() < 1e-15 * p.gamma_m.max(1.0));
        let p = SystemParams::baseline().with_cq(1.0);
        let hz = gamma_opt(&p) / (2.0 * PI);
        assert!((hz - 400.0).abs() < 2.0, "{hz}");
    }

    #[test]
    fn phi_choice() {
        assert_eq!(optimize_phi(C64::new(-2.0, 0.0)).phi, 0.0);
        assert!((optimize_phi(C64::new(0.0, 1.5)).phi - PI / 2.0).abs() < 1e-15);
        let d = optimize_phi(C64::new(0.0, 0.0));
        assert!(d.degenerate && d.phi == 0.0);
    }

    #[test]
    fn detuning_is_rejected() {
        let p = light().with_cq(1.0).with_delta(0.1);
        let pulse = PulseParams::new(0.01, 0.0, 0.0);
        assert!(matches!(epr_exact(&p, &pulse), Err(Error::ContractViolation(_))));
        assert!(matches!(epr_matrix_form(&p, &pulse), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn exact_and_matrix_forms_agree() {
        let p = light().with_cq(2.0);
        for (g, phi) in [(0.003, 0.0), (0.02, 1.0), (0.3, -2.0)] {
            let pulse = PulseParams::new(g, 5.0, phi);
            let a = epr_exact(&p, &pulse).unwrap().value;
            let b = epr_matrix_form(&p, &pulse).unwrap().value;
            assert!((a - b).abs() < 1e-7, "{a} {b}");
        }
    }

    #[test]
    fn correlators_reproduce_phi_dependence() {
        let p = light().with_cq(1.0);
        let pulse = PulseParams::new(0.01, 2.0, 0.0);
        let c = correlators(&p, &pulse).unwrap();
        for phi in [0.0, 0.7, 2.5] {
            let v = epr_exact(&p, &PulseParams { phi, ..pulse }).unwrap().value;
            assert!((v - c.value_at(phi)).abs() < 1e-8);
        }
    }

    #[test]
    fn closed_form_minimizer() {
        let p = SystemParams::baseline().with_cq(1.0);
        let r = minimize_over_gamma(&p, Method::ClosedForm, 0.0, 1.0).unwrap();
        assert!((r.gamma_used / gamma_opt(&p) - 1.0).abs() < 1e-3);
        assert!((r.value - 1.5).abs() < 1e-9);
    }

    #[test]
    fn bracket_failure_is_reported() {
        let r = minimize_scalar_log("monotone", |x| Ok(x), 1.0, 0.5, 10.0);
        assert!(matches!(r, Err(Error::BracketFailure(_))));
    }
}
