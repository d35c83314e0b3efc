//! Time-domain oracle: stochastic integration of the Langevin equations,
//! synthetic output records, matched-filter pulse extraction and covariance
//! estimation with jackknife errors.
//!
//! Noise increments have variance dt/2 per input quadrature and
//! (n_th + 1/2) dt for the bath, so second moments of the classical
//! simulation equal the symmetrized quantum ones.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, Matrix4, SMatrix, SVector, Vector4};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::CovarianceMatrix4;
use crate::model::{check_stability, drift_matrix, BrownianNoise, SystemParams};
use crate::pulses::{PulseParams, Which};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exact discretization of the linear SDE over each step.
    #[default]
    ExactStep,
    EulerMaruyama,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Sampled from the stationary covariance.
    #[default]
    Stationary,
    /// All quadratures zero.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Step (s).
    pub dt: f64,
    /// Recorded duration after burn-in (s).
    pub t_total: f64,
    pub seed: u64,
    /// Discarded transient (s); `None` uses [`default_burn_in`].
    pub burn_in: Option<f64>,
    pub scheme: Scheme,
    pub init: InitialState,
}

impl SimConfig {
    pub fn new(dt: f64, t_total: f64, seed: u64) -> Self {
        SimConfig {
            dt,
            t_total,
            seed,
            burn_in: None,
            scheme: Scheme::default(),
            init: InitialState::default(),
        }
    }

    pub fn burn_in_for(&self, p: &SystemParams) -> f64 {
        self.burn_in.unwrap_or_else(|| default_burn_in(p))
    }
}

/// 5/min(γ_m (n_th + 1), κ).
pub fn default_burn_in(p: &SystemParams) -> f64 {
    5.0 / (p.gamma_m * (p.n_th + 1.0)).min(p.kappa)
}

/// Largest admissible step.
pub fn max_step(p: &SystemParams) -> f64 {
    0.05 * (1.0 / p.kappa).min(1.0 / p.omega_m)
}

/// Step-averaged output quadratures; sample n covers [n dt, (n+1) dt).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub dt: f64,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

impl OutputRecord {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.len() as f64
    }

    /// Averages consecutive pairs of samples: the record at step 2 dt.
    pub fn coarsened(&self) -> OutputRecord {
        let n = self.len() / 2;
        let avg = |v: &[f64]| (0..n).map(|k| 0.5 * (v[2 * k] + v[2 * k + 1])).collect();
        OutputRecord {
            dt: 2.0 * self.dt,
            x: avg(&self.x),
            p: avg(&self.p),
        }
    }

    /// CSV with columns t, x_out, p_out (t at the step midpoint).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
        w.write_record(["t", "x_out", "p_out"]).map_err(io)?;
        for k in 0..self.len() {
            let t = (k as f64 + 0.5) * self.dt;
            w.write_record(&[
                format!("{t:.16e}"),
                format!("{:.16e}", self.x[k]),
                format!("{:.16e}", self.p[k]),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Noise loading of (x_m, p_m, x_c, p_c) on unit Wiener processes
/// (x_in, p_in, ξ_p, ξ_x).
fn noise_matrix(p: &SystemParams) -> Matrix4<f64> {
    let mut b = Matrix4::zeros();
    let vac = (0.5 * p.kappa).sqrt();
    let th = (p.n_th + 0.5).sqrt();
    b[(2, 0)] = vac;
    b[(3, 1)] = vac;
    match p.brownian {
        BrownianNoise::Momentum => b[(1, 2)] = (2.0 * p.gamma_m).sqrt() * th,
        BrownianNoise::Symmetric => {
            b[(1, 2)] = p.gamma_m.sqrt() * th;
            b[(0, 3)] = p.gamma_m.sqrt() * th;
        }
    }
    b
}

/// Stationary covariance V of the intracavity state, A V + V Aᵀ + B Bᵀ = 0.
/// Classical normalization: the quantum Ξ of the state is 2V.
pub fn stationary_state_covariance(p: &SystemParams) -> Result<Matrix4<f64>> {
    check_stability(p).require_stable()?;
    let a = drift_matrix(p);
    let b = noise_matrix(p);
    let q = b * b.transpose();
    let mut lhs = DMatrix::<f64>::zeros(16, 16);
    let mut rhs = DMatrix::<f64>::zeros(16, 1);
    // vec(V) column-major: index i + 4 j.
    for i in 0..4 {
        for j in 0..4 {
            let row = i + 4 * j;
            for k in 0..4 {
                lhs[(row, k + 4 * j)] += a[(i, k)];
                lhs[(row, i + 4 * k)] += a[(j, k)];
            }
            rhs[(row, 0)] = -q[(i, j)];
        }
    }
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::contract("singular Lyapunov system"))?;
    let v = Matrix4::from_fn(|i, j| sol[(i + 4 * j, 0)]);
    Ok((v + v.transpose()) * 0.5)
}

/// Symmetric square root by eigen-decomposition with negative rounding
/// residue clipped.
fn psd_sqrt<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    let e = DMatrix::from_column_slice(N, N, m.as_slice()).symmetric_eigen();
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let r = e.eigenvectors * d;
    SMatrix::<f64, N, N>::from_column_slice(r.as_slice())
}

/// One-step propagator for the augmented state (s, ∫y dt).
struct Stepper {
    scheme: Scheme,
    dt: f64,
    /// Exact: deterministic map of s into (s', ΔY).
    phi: SMatrix<f64, 6, 4>,
    /// Exact: noise factor, L Lᵀ = Q.
    chol: SMatrix<f64, 6, 6>,
    a: Matrix4<f64>,
    b: Matrix4<f64>,
    sk: f64,
}

impl Stepper {
    fn new(p: &SystemParams, dt: f64, scheme: Scheme) -> Self {
        let a = drift_matrix(p);
        let b = noise_matrix(p);
        let sk = p.kappa.sqrt();
        let mut phi = SMatrix::<f64, 6, 4>::zeros();
        let mut chol = SMatrix::<f64, 6, 6>::zeros();
        if scheme == Scheme::ExactStep {
            let mut at = SMatrix::<f64, 6, 6>::zeros();
            at.fixed_view_mut::<4, 4>(0, 0).copy_from(&a);
            at[(4, 2)] = sk;
            at[(5, 3)] = sk;
            let mut bt = SMatrix::<f64, 6, 4>::zeros();
            bt.fixed_view_mut::<4, 4>(0, 0).copy_from(&b);
            bt[(4, 0)] = -(0.5f64).sqrt();
            bt[(5, 1)] = -(0.5f64).sqrt();
            // Van Loan: exp([[−A, BBᵀ], [0, Aᵀ]] dt).
            let mut m = DMatrix::<f64>::zeros(12, 12);
            for i in 0..6 {
                for j in 0..6 {
                    m[(i, j)] = -at[(i, j)] * dt;
                    m[(6 + i, 6 + j)] = at[(j, i)] * dt;
                }
            }
            let bb = bt * bt.transpose();
            for i in 0..6 {
                for j in 0..6 {
                    m[(i, 6 + j)] = bb[(i, j)] * dt;
                }
            }
            let e = m.exp();
            let f22t = SMatrix::<f64, 6, 6>::from_fn(|i, j| e[(6 + j, 6 + i)]);
            let f12 = SMatrix::<f64, 6, 6>::from_fn(|i, j| e[(i, 6 + j)]);
            let q = f22t * f12;
            let q = (q + q.transpose()) * 0.5;
            phi = f22t.fixed_view::<6, 4>(0, 0).into_owned();
            chol = psd_sqrt(&q);
        }
        Stepper {
            scheme,
            dt,
            phi,
            chol,
            a,
            b,
            sk,
        }
    }

    /// Advances `s` by one step and returns the step-averaged output.
    fn step<R: Rng>(&self, s: &mut Vector4<f64>, rng: &mut R) -> (f64, f64) {
        match self.scheme {
            Scheme::ExactStep => {
                let xi = SVector::<f64, 6>::from_fn(|_, _| rng.sample(StandardNormal));
                let z = self.phi * *s + self.chol * xi;
                *s = Vector4::new(z[0], z[1], z[2], z[3]);
                (z[4] / self.dt, z[5] / self.dt)
            }
            Scheme::EulerMaruyama => {
                let sd = self.dt.sqrt();
                let dw = Vector4::from_fn(|_, _| sd * rng.sample::<f64, _>(StandardNormal));
                let h = (0.5f64).sqrt();
                let y = (
                    self.sk * s[2] - h * dw[0] / self.dt,
                    self.sk * s[3] - h * dw[1] / self.dt,
                );
                *s += self.a * *s * self.dt + self.b * dw;
                y
            }
        }
    }
}

fn check_sim(p: &SystemParams, cfg: &SimConfig) -> Result<()> {
    p.validate()?;
    check_stability(p).require_stable()?;
    let limit = max_step(p);
    if !(cfg.dt > 0.0) || cfg.dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepSize { dt: cfg.dt, limit });
    }
    if !(cfg.t_total > 0.0) {
        return Err(Error::contract("record duration must be positive"));
    }
    Ok(())
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Offset separating vacuum-mixing streams from dynamics streams.
const VACUUM_STREAM: u64 = 1 << 40;

fn initial_state<R: Rng>(p: &SystemParams, init: InitialState, rng: &mut R) -> Result<Vector4<f64>> {
    Ok(match init {
        InitialState::Zero => Vector4::zeros(),
        InitialState::Stationary => {
            let l = psd_sqrt(&stationary_state_covariance(p)?);
            l * Vector4::from_fn(|_, _| rng.sample(StandardNormal))
        }
    })
}

/// One output record; `stream` selects an independent random stream.
pub fn simulate_record(p: &SystemParams, cfg: &SimConfig, stream: u64) -> Result<OutputRecord> {
    check_sim(p, cfg)?;
    let stepper = Stepper::new(p, cfg.dt, cfg.scheme);
    simulate_with(p, cfg, &stepper, stream)
}

fn simulate_with(p: &SystemParams, cfg: &SimConfig, stepper: &Stepper, stream: u64) -> Result<OutputRecord> {
    let mut rng = rng_for(cfg.seed, stream);
    let mut s = initial_state(p, cfg.init, &mut rng)?;
    let burn = (cfg.burn_in_for(p) / cfg.dt).ceil() as usize;
    for _ in 0..burn {
        stepper.step(&mut s, &mut rng);
    }
    let n = (cfg.t_total / cfg.dt).round() as usize;
    let mut rec = OutputRecord {
        dt: cfg.dt,
        x: Vec::with_capacity(n),
        p: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let (x, q) = stepper.step(&mut s, &mut rng);
        rec.x.push(x);
        rec.p.push(q);
    }
    Ok(rec)
}

/// Mixes a record with independent vacuum at transmissivity η.
pub fn mix_with_vacuum(rec: &OutputRecord, eta: f64, seed: u64, stream: u64) -> OutputRecord {
    let mut rng = rng_for(seed, VACUUM_STREAM + stream);
    let sd = (0.5 / rec.dt).sqrt();
    let (a, b) = (eta.sqrt(), (1.0 - eta).sqrt());
    let mut mix = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&y| a * y + b * sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let x = mix(&rec.x);
    let p = mix(&rec.p);
    OutputRecord { dt: rec.dt, x, p }
}

/// ∫ f(t) dt over [t0, t1] for an envelope √(2Γ) e^{±Γ(t − edge)} e^{∓iω_m t}.
fn envelope_integral(which: Which, t0: f64, t1: f64, omega_m: f64, pulse: &PulseParams) -> C64 {
    let half = 0.5 * pulse.t_sep;
    let g = pulse.gamma;
    let norm = (2.0 * g).sqrt();
    match which {
        Which::Early => {
            let t1 = t1.min(-half);
            if t1 <= t0 {
                return C64::new(0.0, 0.0);
            }
            let k = C64::new(g, -omega_m);
            let prim = |t: f64| (C64::new(g * (t + half), 0.0)).exp() * C64::from_polar(1.0, -omega_m * t) / k;
            norm * (prim(t1) - prim(t0))
        }
        Which::Late => {
            let t0 = t0.max(half);
            if t1 <= t0 {
                return C64::new(0.0, 0.0);
            }
            let k = C64::new(-g, omega_m);
            let prim = |t: f64| (C64::new(-g * (t - half), 0.0)).exp() * C64::from_polar(1.0, omega_m * t) / k;
            norm * (prim(t1) - prim(t0))
        }
    }
}

/// Truncation of each envelope, in units of 1/Γ.
pub const TRUNCATION: f64 = 10.0;

/// Record length needed to extract one pulse pair.
pub fn required_duration(pulse: &PulseParams) -> f64 {
    pulse.t_sep + 2.0 * TRUNCATION / pulse.gamma
}

/// Per-sample filter weights w_n = ∫_{step n} f(t − center) dt.
fn filter_weights(which: Which, rec_dt: f64, n: usize, center: f64, omega_m: f64, pulse: &PulseParams) -> Vec<(usize, C64)> {
    let half = 0.5 * pulse.t_sep;
    let cut = TRUNCATION / pulse.gamma;
    let (lo, hi) = match which {
        Which::Early => (center - half - cut, center - half),
        Which::Late => (center + half, center + half + cut),
    };
    let k0 = ((lo / rec_dt).floor().max(0.0)) as usize;
    let k1 = (((hi / rec_dt).ceil()) as usize).min(n);
    (k0..k1)
        .map(|k| {
            let t0 = (k as f64 * rec_dt).max(lo) - center;
            let t1 = ((k + 1) as f64 * rec_dt).min(hi) - center;
            (k, envelope_integral(which, t0, t1, omega_m, pulse))
        })
        .collect()
}

/// Matched filter r_j = ∫ f_j(t − center) a_out(t) dt with the record taken
/// piecewise constant; envelopes are cut at 10/Γ.
pub fn extract_pulses_at(
    rec: &OutputRecord,
    p: &SystemParams,
    pulse: &PulseParams,
    center: f64,
) -> Result<(C64, C64)> {
    pulse.validate()?;
    let half = 0.5 * pulse.t_sep + TRUNCATION / pulse.gamma;
    let available = rec.duration();
    if center - half < -1e-12 * available || center + half > available * (1.0 + 1e-12) {
        return Err(Error::InsufficientRecord {
            needed: 2.0 * half,
            available,
        });
    }
    let mut out = [C64::new(0.0, 0.0); 2];
    for (slot, which) in [Which::Early, Which::Late].into_iter().enumerate() {
        let w = filter_weights(which, rec.dt, rec.len(), center, p.omega_m, pulse);
        let mut acc = C64::new(0.0, 0.0);
        for (k, wk) in w {
            acc += wk * C64::new(rec.x[k], rec.p[k]);
        }
        out[slot] = acc * std::f64::consts::FRAC_1_SQRT_2;
    }
    let rot = C64::from_polar(1.0, pulse.phi);
    Ok((out[0], out[1] * rot))
}

/// [`extract_pulses_at`] centred on the record.
pub fn extract_pulses(rec: &OutputRecord, p: &SystemParams, pulse: &PulseParams) -> Result<(C64, C64)> {
    extract_pulses_at(rec, p, pulse, 0.5 * rec.duration())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    pub samples: Vec<(C64, C64)>,
    pub n_traj: usize,
    pub dt: f64,
    pub t_total: f64,
    pub seed: u64,
    pub burn_in: f64,
    pub eta: f64,
}

/// Simulates `n_traj` independent records (trajectory k uses stream k) and
/// extracts one pulse pair from each. The record length defaults to the
/// pulse support when `cfg.t_total` is not positive. Detection loss η < 1 is
/// applied by mixing each record with vacuum.
pub fn run_ensemble(p: &SystemParams, pulse: &PulseParams, cfg: &SimConfig, n_traj: usize) -> Result<TrajectoryEnsemble> {
    pulse.validate()?;
    if n_traj < 2 {
        return Err(Error::InsufficientSamples { have: n_traj, need: 2 });
    }
    let mut cfg = *cfg;
    let need = required_duration(pulse);
    if !(cfg.t_total > 0.0) {
        cfg.t_total = (need / cfg.dt).ceil() * cfg.dt;
    }
    check_sim(p, &cfg)?;
    let stepper = Stepper::new(p, cfg.dt, cfg.scheme);
    let samples = (0..n_traj as u64)
        .into_par_iter()
        .map(|k| {
            let rec = simulate_with(p, &cfg, &stepper, k)?;
            let rec = if p.eta < 1.0 {
                mix_with_vacuum(&rec, p.eta, cfg.seed, k)
            } else {
                rec
            };
            extract_pulses(&rec, p, pulse)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryEnsemble {
        samples,
        n_traj,
        dt: cfg.dt,
        t_total: cfg.t_total,
        seed: cfg.seed,
        burn_in: cfg.burn_in_for(p),
        eta: p.eta,
    })
}

fn quadratures(s: &(C64, C64)) -> Vector4<f64> {
    let r = std::f64::consts::SQRT_2;
    Vector4::new(r * s.0.re, r * s.0.im, r * s.1.re, r * s.1.im)
}

/// Leave-one-out jackknife of a statistic of the covariance estimate.
pub fn jackknife<F>(ens: &TrajectoryEnsemble, stat: F) -> Result<(f64, f64)>
where
    F: Fn(&Matrix4<f64>) -> f64,
{
    let (full, loo) = covariance_with_leave_one_out(ens)?;
    let value = stat(&full);
    let n = loo.len() as f64;
    let vals: Vec<f64> = loo.iter().map(&stat).collect();
    let mean = vals.iter().sum::<f64>() / n;
    let var = (n - 1.0) / n * vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    Ok((value, var.sqrt()))
}

fn covariance_with_leave_one_out(ens: &TrajectoryEnsemble) -> Result<(Matrix4<f64>, Vec<Matrix4<f64>>)> {
    let n = ens.samples.len();
    if n < 100 {
        return Err(Error::InsufficientSamples { have: n, need: 100 });
    }
    let qs: Vec<Vector4<f64>> = ens.samples.iter().map(quadratures).collect();
    let mut s1 = Vector4::zeros();
    let mut s2 = Matrix4::zeros();
    for q in &qs {
        s1 += q;
        s2 += q * q.transpose();
    }
    let xi = |s1: &Vector4<f64>, s2: &Matrix4<f64>, m: f64| {
        let mean = s1 / m;
        (s2 - mean * mean.transpose() * m) * (2.0 / (m - 1.0))
    };
    let nf = n as f64;
    let full = xi(&s1, &s2, nf);
    let loo = qs
        .iter()
        .map(|q| xi(&(s1 - q), &(s2 - q * q.transpose()), nf - 1.0))
        .collect();
    Ok((full, loo))
}

/// Sample covariance (vacuum = identity) with elementwise jackknife errors.
pub fn estimate_covariance(ens: &TrajectoryEnsemble) -> Result<(CovarianceMatrix4, Matrix4<f64>)> {
    let (full, loo) = covariance_with_leave_one_out(ens)?;
    let n = loo.len() as f64;
    let mut mean = Matrix4::zeros();
    for m in &loo {
        mean += m;
    }
    mean /= n;
    let mut var = Matrix4::zeros();
    for m in &loo {
        let d = m - mean;
        var += d.component_mul(&d);
    }
    let se = (var * ((n - 1.0) / n)).map(f64::sqrt);
    Ok((CovarianceMatrix4::new(full), se))
}

impl TrajectoryEnsemble {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let s = serde_json::to_string(self).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
    }
}
