//! Covariance matrix of the early/late pair and Gaussian entanglement
//! diagnostics.
//!
//! Ordering is (x_E, p_E, x_L, p_L) and the vacuum is the identity,
//! Ξ_ij = ⟨O_i O_j + O_j O_i⟩. The ordering (x_L, p_L, x_E, p_E) is reached
//! with [`CovarianceMatrix4::swap_modes`].

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::epr::{epr_tolerance, gamma_opt, minimize_scalar_log, spectral_layout};
use crate::error::{Error, Result};
use crate::model::{check_stability, SystemParams};
use crate::pulses::{mode_freq, PulseParams, Which};
use crate::quadrature::{integrate, Anchored};
use crate::spectral::{input_densities, transfer_unchecked};

/// Absolute floor for positivity tests; scaled up for large entries.
pub const PHYSICALITY_TOL: f64 = 1e-8;
/// Relative tolerance for unit symplectic eigenvalues.
pub const UNIT_EIGENVALUE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovarianceMatrix4 {
    xi: Matrix4<f64>,
}

const UPPER: [(usize, usize); 10] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

impl CovarianceMatrix4 {
    /// Symmetrizes the input so that Ξ = Ξᵀ holds exactly.
    pub fn new(m: Matrix4<f64>) -> Self {
        CovarianceMatrix4 {
            xi: (m + m.transpose()) * 0.5,
        }
    }

    pub fn from_upper(entries: [f64; 10]) -> Self {
        let mut m = Matrix4::zeros();
        for (&(i, j), &v) in UPPER.iter().zip(entries.iter()) {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        CovarianceMatrix4 { xi: m }
    }

    pub fn upper(&self) -> [f64; 10] {
        UPPER.map(|(i, j)| self.xi[(i, j)])
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.xi
    }

    pub fn vacuum() -> Self {
        CovarianceMatrix4 {
            xi: Matrix4::identity(),
        }
    }

    /// Both modes thermal with mean occupation `nbar`.
    pub fn thermal(nbar: f64) -> Self {
        CovarianceMatrix4 {
            xi: Matrix4::identity() * (2.0 * nbar + 1.0),
        }
    }

    /// Two-mode squeezed vacuum, Ξ = [[c I, −s Z], [−s Z, c I]] with
    /// c = cosh 2r, s = sinh 2r, Z = diag(1, −1).
    pub fn two_mode_squeezed(r: f64) -> Self {
        let (c, s) = ((2.0 * r).cosh(), (2.0 * r).sinh());
        #[rustfmt::skip]
        let m = Matrix4::new(
            c,   0.0, -s,  0.0,
            0.0, c,   0.0, s,
            -s,  0.0, c,   0.0,
            0.0, s,   0.0, c,
        );
        CovarianceMatrix4 { xi: m }
    }

    /// S Ξ Sᵀ.
    pub fn transformed(&self, s: &Matrix4<f64>) -> Self {
        CovarianceMatrix4::new(s * self.xi * s.transpose())
    }

    /// Momentum sign flip on the late mode.
    pub fn partial_transpose(&self) -> Self {
        let p = Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, -1.0));
        CovarianceMatrix4 {
            xi: p * self.xi * p,
        }
    }

    /// Exchanges the early and late blocks.
    pub fn swap_modes(&self) -> Self {
        let mut m = Matrix4::zeros();
        let perm = [2, 3, 0, 1];
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] = self.xi[(perm[i], perm[j])];
            }
        }
        CovarianceMatrix4 { xi: m }
    }

    /// Beam-splitter loss: η Ξ + (1 − η) I.
    pub fn with_efficiency(&self, eta: f64) -> Self {
        CovarianceMatrix4 {
            xi: self.xi * eta + Matrix4::identity() * (1.0 - eta),
        }
    }

    fn tolerance(&self) -> f64 {
        PHYSICALITY_TOL * self.xi.amax().max(1.0)
    }

    /// Smallest eigenvalue of Ξ + i x σ.
    pub fn uncertainty_min_eig(&self, x: f64) -> f64 {
        let s = sigma();
        let h = Matrix4::from_fn(|i, j| C64::new(self.xi[(i, j)], x * s[(i, j)]));
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn is_physical(&self) -> bool {
        self.uncertainty_min_eig(1.0) >= -self.tolerance()
    }

    pub fn require_physical(&self) -> Result<()> {
        let min_eig = self.uncertainty_min_eig(1.0);
        if min_eig >= -self.tolerance() {
            Ok(())
        } else {
            Err(Error::Unphysical { min_eig })
        }
    }
}

pub fn sigma() -> Matrix4<f64> {
    #[rustfmt::skip]
    let s = Matrix4::new(
        0.0,  1.0, 0.0,  0.0,
        -1.0, 0.0, 0.0,  0.0,
        0.0,  0.0, 0.0,  1.0,
        0.0,  0.0, -1.0, 0.0,
    );
    s
}

#[derive(Serialize, Deserialize)]
struct CovarianceJson {
    ordering: String,
    normalization: String,
    entries: [f64; 10],
}

const ORDERING: &str = "x_E,p_E,x_L,p_L";
const ORDERING_SWAPPED: &str = "x_L,p_L,x_E,p_E";
const NORMALIZATION: &str = "vacuum_identity";

impl Serialize for CovarianceMatrix4 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CovarianceJson {
            ordering: ORDERING.into(),
            normalization: NORMALIZATION.into(),
            entries: self.upper(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CovarianceMatrix4 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = CovarianceJson::deserialize(d)?;
        if j.normalization != NORMALIZATION {
            return Err(D::Error::custom(format!("unsupported normalization {}", j.normalization)));
        }
        let cov = CovarianceMatrix4::from_upper(j.entries);
        match j.ordering.as_str() {
            ORDERING => Ok(cov),
            ORDERING_SWAPPED => Ok(cov.swap_modes()),
            other => Err(D::Error::custom(format!("unsupported ordering {other}"))),
        }
    }
}

/// Inter-mode correlator ⟨r_L r_E + r_E r_L⟩ at φ = 0.
pub fn correlator(cov: &CovarianceMatrix4) -> C64 {
    let m = cov.matrix();
    0.5 * C64::new(m[(0, 2)] - m[(1, 3)], m[(0, 3)] + m[(1, 2)])
}

/// EPR-variance Var(x_E + x_L^φ) + Var(p_E − p_L^φ) where the late mode is
/// rotated as r_L → e^{iφ} r_L.
pub fn duan_value(cov: &CovarianceMatrix4, phi: f64) -> f64 {
    let m = cov.matrix();
    let c = correlator(cov);
    0.5 * m.trace() + 2.0 * (C64::from_polar(1.0, phi) * c).re
}

/// φ minimizing [`duan_value`] and the minimum.
pub fn optimal_duan(cov: &CovarianceMatrix4) -> (f64, f64) {
    let phi = crate::epr::optimize_phi(correlator(cov)).phi;
    (phi, duan_value(cov, phi))
}

/// X with tr(X Ξ) = duan_value(Ξ, φ).
pub fn duan_matrix(phi: f64) -> Matrix4<f64> {
    let (c, s) = (phi.cos(), phi.sin());
    let u = Vector4::new(1.0, 0.0, c, -s);
    let v = Vector4::new(0.0, 1.0, -s, -c);
    (u * u.transpose() + v * v.transpose()) * 0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PptVerdict {
    SeparableConsistent,
    Entangled,
}

pub fn ppt_check(cov: &CovarianceMatrix4) -> Result<PptVerdict> {
    cov.require_physical()?;
    let pt = cov.partial_transpose();
    Ok(if pt.uncertainty_min_eig(1.0) < -pt.tolerance() {
        PptVerdict::Entangled
    } else {
        PptVerdict::SeparableConsistent
    })
}

/// Williamson decomposition of a positive-definite Ξ: returns S⁻¹ with
/// S⁻¹ Ξ S⁻ᵀ = diag(ν₁, ν₁, ν₂, ν₂), ν₁ ≤ ν₂, and S symplectic.
pub fn williamson(m: &Matrix4<f64>) -> Option<(Matrix4<f64>, [f64; 2])> {
    let eig = m.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return None;
    }
    let v = &eig.eigenvectors;
    let inv_sqrt = v * Matrix4::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt())) * v.transpose();
    let b = inv_sqrt * sigma() * inv_sqrt;
    // iB is Hermitian with eigenvalues ±1/ν.
    let k = b.map(|x| C64::new(0.0, x));
    let ke = k.symmetric_eigen();
    let mut pos: Vec<(f64, usize)> = ke
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &mu)| (mu, i))
        .collect();
    pos.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut q = Matrix4::zeros();
    let mut nu = [0.0; 2];
    for (mode, &(mu, idx)) in pos.iter().take(2).enumerate() {
        if !(mu > 0.0) {
            return None;
        }
        let z = ke.eigenvectors.column(idx) * C64::new(2f64.sqrt(), 0.0);
        for r in 0..4 {
            q[(r, 2 * mode)] = z[r].im;
            q[(r, 2 * mode + 1)] = z[r].re;
        }
        nu[mode] = 1.0 / mu;
    }
    let d_half = Matrix4::from_diagonal(&Vector4::new(nu[0], nu[0], nu[1], nu[1]).map(f64::sqrt));
    Some((d_half * q.transpose() * inv_sqrt, nu))
}

/// Symplectic eigenvalues (ascending) of Ξ, or of Ξ^Γ when `transposed`.
pub fn symplectic_spectrum(cov: &CovarianceMatrix4, transposed: bool) -> [f64; 2] {
    let c = if transposed {
        cov.partial_transpose()
    } else {
        *cov
    };
    if let Some((_, nu)) = williamson(c.matrix()) {
        return nu;
    }
    // Not positive definite: absolute eigenvalues of σΞ, paired.
    let mut ev: Vec<f64> = (sigma() * c.matrix())
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .collect();
    ev.sort_by(f64::total_cmp);
    [0.5 * (ev[0] + ev[1]), 0.5 * (ev[2] + ev[3])]
}

pub fn log_negativity(cov: &CovarianceMatrix4) -> Result<f64> {
    cov.require_physical()?;
    let nu = symplectic_spectrum(cov, true);
    Ok((-nu[0].ln()).max(0.0))
}

/// Number of modes with non-unit symplectic eigenvalue.
pub fn symplectic_rank(cov: &CovarianceMatrix4) -> Result<u8> {
    cov.require_physical()?;
    let nu = symplectic_spectrum(cov, false);
    Ok(nu.iter().filter(|&&n| (n - 1.0).abs() > UNIT_EIGENVALUE_TOL).count() as u8)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShotNoiseReport {
    pub physical_at_x: bool,
    pub ppt_at_x: bool,
}

/// Uncertainty and PPT tests with the symplectic form scaled by `x`, as
/// happens when the shot-noise reference is mis-calibrated.
pub fn shot_noise_sensitivity(cov: &CovarianceMatrix4, x: f64) -> ShotNoiseReport {
    let pt = cov.partial_transpose();
    ShotNoiseReport {
        physical_at_x: cov.uncertainty_min_eig(x) >= -cov.tolerance(),
        ppt_at_x: pt.uncertainty_min_eig(x) >= -pt.tolerance(),
    }
}

/// Rotation by θ followed by squeezing e^{∓s} on one mode.
pub fn single_mode_symplectic(theta: f64, s: f64) -> Matrix2<f64> {
    let (c, sn) = (theta.cos(), theta.sin());
    Matrix2::new((-s).exp(), 0.0, 0.0, s.exp()) * Matrix2::new(c, sn, -sn, c)
}

pub fn local_symplectic(theta_e: f64, s_e: f64, theta_l: f64, s_l: f64) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0)
        .copy_from(&single_mode_symplectic(theta_e, s_e));
    m.fixed_view_mut::<2, 2>(2, 2)
        .copy_from(&single_mode_symplectic(theta_l, s_l));
    m
}

/// Two-mode squeezer with the sign convention of
/// [`CovarianceMatrix4::two_mode_squeezed`].
pub fn two_mode_squeezer(r: f64) -> Matrix4<f64> {
    let (c, s) = (r.cosh(), r.sinh());
    #[rustfmt::skip]
    let m = Matrix4::new(
        c,   0.0, -s,  0.0,
        0.0, c,   0.0, s,
        -s,  0.0, c,   0.0,
        0.0, s,   0.0, c,
    );
    m
}

pub fn beam_splitter(theta: f64) -> Matrix4<f64> {
    let (c, s) = (theta.cos(), theta.sin());
    #[rustfmt::skip]
    let m = Matrix4::new(
        c,   0.0, s,   0.0,
        0.0, c,   0.0, s,
        -s,  0.0, c,   0.0,
        0.0, -s,  0.0, c,
    );
    m
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WitnessResult {
    /// tr(X Ξ); every separable state gives at least 2.
    pub value: f64,
    pub x_matrix: [[f64; 4]; 4],
    pub family: String,
    pub converged: bool,
}

const FAMILY_LOCAL: &str =
    "EPR-variance after local symplectic maps (rotation and squeeze per mode), optimal phi";
const FAMILY_PPT: &str = "partial-transpose certificate: least symplectic mode of Xi^T_B";

fn local_duan(cov: &CovarianceMatrix4, x: &[f64; 4]) -> (f64, Matrix4<f64>, f64) {
    let m = local_symplectic(x[0], x[1], x[2], x[3]);
    let t = cov.transformed(&m);
    let (phi, value) = optimal_duan(&t);
    (value, m, phi)
}

fn golden_min<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Smallest second-moment witness value. Cyclic golden-section descent over
/// the local-symplectic family is compared with the witness built from the
/// partial-transpose Williamson decomposition, and the lower one returned.
pub fn optimal_witness(cov: &CovarianceMatrix4) -> Result<WitnessResult> {
    cov.require_physical()?;
    let mut x = [0.0; 4];
    let mut best = local_duan(cov, &x).0;
    let windows = [std::f64::consts::FRAC_PI_2, 2.0, std::f64::consts::FRAC_PI_2, 2.0];
    let mut converged = false;
    for _sweep in 0..200 {
        let start = best;
        for k in 0..4 {
            let probe = |v: f64| {
                let mut y = x;
                y[k] = v;
                local_duan(cov, &y).0
            };
            let (v, fv) = golden_min(probe, x[k] - windows[k], x[k] + windows[k], 60);
            if fv < best {
                best = fv;
                x[k] = v;
            }
        }
        if start - best <= 1e-13 * best.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    let (_, m, phi) = local_duan(cov, &x);
    let x_local = m.transpose() * duan_matrix(phi) * m;
    let mut chosen = (x_local, FAMILY_LOCAL);

    let pt = cov.partial_transpose();
    if let Some((s_inv, _)) = williamson(pt.matrix()) {
        let rows = s_inv.fixed_rows::<2>(0).into_owned();
        let y = rows.transpose() * rows;
        let p = Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, -1.0));
        let x_ppt = p * y * p;
        if (x_ppt * cov.matrix()).trace() < (chosen.0 * cov.matrix()).trace() {
            chosen = (x_ppt, FAMILY_PPT);
        }
    }
    let xm = (chosen.0 + chosen.0.transpose()) * 0.5;
    let value = (xm * cov.matrix()).trace();
    let mut x_matrix = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            x_matrix[i][j] = xm[(i, j)];
        }
    }
    Ok(WitnessResult {
        value,
        x_matrix,
        family: chosen.1.to_string(),
        converged,
    })
}

/// Fourier transforms of the real quadrature weights of one mode:
/// x_j = ∫ (Re f x_out − Im f p_out) dt, p_j = ∫ (Im f x_out + Re f p_out) dt.
fn quadrature_weights(which: Which, w: Anchored, p: &SystemParams, pulse: &PulseParams) -> [[C64; 2]; 2] {
    let f = mode_freq(which, w, p, pulse);
    let fm = mode_freq(which, w.neg(), p, pulse).conj();
    let re = (f + fm) * 0.5;
    let im = (f - fm) * C64::new(0.0, -0.5);
    [[re, -im], [im, re]]
}

/// All ten second moments of the early/late pair from frequency integrals of
/// the output spectral density, for any stable detuning.
pub fn covariance_from_spectra(p: &SystemParams, pulse: &PulseParams) -> Result<CovarianceMatrix4> {
    p.validate()?;
    pulse.validate()?;
    let report = check_stability(p);
    report.require_stable()?;
    let poles: Vec<(f64, f64)> = (0..4)
        .map(|k| (-report.drift_eigen_imag_parts[k], report.drift_eigen_real_parts[k].abs()))
        .collect();
    let layout = spectral_layout(p, pulse, &poles);
    let sigma_in = input_densities(p);
    let est = integrate(
        "covariance assembly",
        |w| {
            let h = transfer_unchecked(w, p);
            // Output density minus the vacuum part, R = H Σ H† − I/2.
            let mut r = [[C64::new(0.0, 0.0); 2]; 2];
            for i in 0..2 {
                for k in 0..2 {
                    let mut acc = C64::new(0.0, 0.0);
                    for j in 0..4 {
                        acc += h.m[i][j] * h.m[k][j].conj() * sigma_in[j];
                    }
                    r[i][k] = acc;
                }
                r[i][i] -= 0.5;
            }
            let e = quadrature_weights(Which::Early, w, p, pulse);
            let l = quadrature_weights(Which::Late, w, p, pulse);
            let wts = [e[0], e[1], l[0], l[1]];
            let mut out = [0.0; 10];
            for (n, &(a, b)) in UPPER.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..2 {
                    for k in 0..2 {
                        acc += wts[a][i].conj() * r[i][k] * wts[b][k];
                    }
                }
                out[n] = 2.0 * acc.re;
            }
            out
        },
        &layout,
        epr_tolerance(),
    )?;
    let mut entries = est.value;
    for (n, &(i, j)) in UPPER.iter().enumerate() {
        if i == j {
            entries[n] += 1.0;
        }
    }
    Ok(CovarianceMatrix4::from_upper(entries).with_efficiency(p.eta))
}

/// Result of a pulse-bandwidth search on the assembled covariance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovarianceOptimum {
    pub gamma: f64,
    pub value: f64,
    /// EPR-variance phase at `gamma` (also reported for the witness search).
    pub phi: f64,
    pub cov: CovarianceMatrix4,
}

fn search_gamma<F>(what: &str, p: &SystemParams, t_sep: f64, score: F) -> Result<CovarianceOptimum>
where
    F: Fn(&CovarianceMatrix4) -> Result<f64>,
{
    let eval = |gamma: f64| covariance_from_spectra(p, &PulseParams::new(gamma, t_sep, 0.0));
    let (gamma, _) = minimize_scalar_log(what, |g| score(&eval(g)?), gamma_opt(p), p.gamma_m, 0.1 * p.kappa)?;
    let cov = eval(gamma)?;
    let (phi, _) = optimal_duan(&cov);
    Ok(CovarianceOptimum {
        gamma,
        value: score(&cov)?,
        phi,
        cov,
    })
}

/// EPR-variance at the optimal φ, minimized over Γ; valid at any stable detuning.
pub fn minimize_duan_over_gamma(p: &SystemParams, t_sep: f64) -> Result<CovarianceOptimum> {
    search_gamma("EPR-variance over pulse bandwidth", p, t_sep, |c| Ok(optimal_duan(c).1))
}

/// Optimal witness minimized over Γ.
pub fn minimize_witness_over_gamma(p: &SystemParams, t_sep: f64) -> Result<CovarianceOptimum> {
    search_gamma("optimal witness over pulse bandwidth", p, t_sep, |c| Ok(optimal_witness(c)?.value))
}
