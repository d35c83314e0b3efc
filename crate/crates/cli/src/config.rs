//! Flat key-value configuration. Every key is optional in each layer; layers
//! are merged as command line > file > built-in default.

use std::f64::consts::PI;
use std::path::Path;

use optoent::model::{coupling_for_cq, BrownianNoise, SystemParams};
use optoent::{Error, Result};
use serde::{Deserialize, Serialize};

/// One configuration layer. Rates are ordinary frequencies (Hz), i.e. the
/// angular rate divided by 2π.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub omega_m_hz: Option<f64>,
    pub kappa_over_omega_m: Option<f64>,
    pub q_factor: Option<f64>,
    pub n_th: Option<f64>,
    pub g_hz: Option<f64>,
    pub c_q: Option<f64>,
    pub delta_over_kappa: Option<f64>,
    pub eta: Option<f64>,
    pub brownian: Option<BrownianNoise>,
    /// Pulse bandwidth Γ/2π; absent means "minimize over Γ".
    pub gamma_hz: Option<f64>,
    pub t_sep_s: Option<f64>,
    /// Late-pulse phase; absent means the optimal phase.
    pub phi: Option<f64>,
    pub n_traj: Option<usize>,
    pub seed: Option<u64>,
    pub dt_s: Option<f64>,
    pub burn_in_s: Option<f64>,
    /// Refuse Monte Carlo runs needing more integration steps than this.
    pub mc_max_steps: Option<f64>,
}

/// Coupling as given by the user.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coupling {
    GHz(f64),
    Cq(f64),
}

/// Fully resolved settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub params: SystemParams,
    pub coupling: Coupling,
    pub gamma: Option<f64>,
    pub t_sep: f64,
    pub phi: Option<f64>,
    pub n_traj: usize,
    pub seed: u64,
    pub dt: Option<f64>,
    pub burn_in: Option<f64>,
    pub mc_max_steps: f64,
}

pub const DEFAULT_N_TRAJ: usize = 2000;
pub const DEFAULT_MC_MAX_STEPS: f64 = 1e10;

impl ConfigLayer {
    /// Built-in defaults: the baseline device at unit cooperativity.
    pub fn defaults() -> Self {
        ConfigLayer {
            omega_m_hz: Some(1e6),
            kappa_over_omega_m: Some(10.0),
            q_factor: Some(1e8),
            n_th: Some(1e4),
            c_q: Some(1.0),
            delta_over_kappa: Some(0.0),
            eta: Some(1.0),
            brownian: Some(BrownianNoise::Momentum),
            t_sep_s: Some(0.0),
            n_traj: Some(DEFAULT_N_TRAJ),
            seed: Some(0),
            mc_max_steps: Some(DEFAULT_MC_MAX_STEPS),
            ..Default::default()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let layer: ConfigLayer = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        layer.check_coupling()?;
        Ok(layer)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn check_coupling(&self) -> Result<()> {
        if self.g_hz.is_some() && self.c_q.is_some() {
            return Err(Error::Config("give either g_hz or c_q, not both".into()));
        }
        Ok(())
    }

    /// Fills every unset key of `self` from `lower`. The coupling is a single
    /// slot: if this layer sets g_hz or c_q, neither is taken from `lower`.
    pub fn over(self, lower: &ConfigLayer) -> Result<ConfigLayer> {
        self.check_coupling()?;
        let own_coupling = self.g_hz.is_some() || self.c_q.is_some();
        let (g_hz, c_q) = if own_coupling {
            (self.g_hz, self.c_q)
        } else {
            (lower.g_hz, lower.c_q)
        };
        Ok(ConfigLayer {
            omega_m_hz: self.omega_m_hz.or(lower.omega_m_hz),
            kappa_over_omega_m: self.kappa_over_omega_m.or(lower.kappa_over_omega_m),
            q_factor: self.q_factor.or(lower.q_factor),
            n_th: self.n_th.or(lower.n_th),
            g_hz,
            c_q,
            delta_over_kappa: self.delta_over_kappa.or(lower.delta_over_kappa),
            eta: self.eta.or(lower.eta),
            brownian: self.brownian.or(lower.brownian),
            gamma_hz: self.gamma_hz.or(lower.gamma_hz),
            t_sep_s: self.t_sep_s.or(lower.t_sep_s),
            phi: self.phi.or(lower.phi),
            n_traj: self.n_traj.or(lower.n_traj),
            seed: self.seed.or(lower.seed),
            dt_s: self.dt_s.or(lower.dt_s),
            burn_in_s: self.burn_in_s.or(lower.burn_in_s),
            mc_max_steps: self.mc_max_steps.or(lower.mc_max_steps),
        })
    }

    /// Merges command line, optional file and defaults, then resolves.
    pub fn layered(cli: ConfigLayer, file: Option<ConfigLayer>) -> Result<Config> {
        let base = ConfigLayer::defaults();
        let lower = match file {
            Some(f) => f.over(&base)?,
            None => base,
        };
        cli.over(&lower)?.resolve()
    }

    pub fn resolve(&self) -> Result<Config> {
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| Error::Config(format!("missing key {key}")));
        let omega_m = 2.0 * PI * need(self.omega_m_hz, "omega_m_hz")?;
        let kappa = omega_m * need(self.kappa_over_omega_m, "kappa_over_omega_m")?;
        let q = need(self.q_factor, "q_factor")?;
        if !(q > 0.0) {
            return Err(Error::Config("q_factor must be positive".into()));
        }
        let gamma_m = omega_m / q;
        let n_th = need(self.n_th, "n_th")?;
        let coupling = match (self.g_hz, self.c_q) {
            (Some(g), None) => Coupling::GHz(g),
            (None, Some(c)) => Coupling::Cq(c),
            (None, None) => return Err(Error::Config("missing key g_hz or c_q".into())),
            (Some(_), Some(_)) => return Err(Error::Config("give either g_hz or c_q, not both".into())),
        };
        let g = match coupling {
            Coupling::GHz(g) => 2.0 * PI * g,
            Coupling::Cq(c) => {
                if !(c >= 0.0) {
                    return Err(Error::Config("c_q must be non-negative".into()));
                }
                coupling_for_cq(c, kappa, gamma_m, n_th)
            }
        };
        let params = SystemParams {
            omega_m,
            kappa,
            gamma_m,
            g,
            delta: kappa * need(self.delta_over_kappa, "delta_over_kappa")?,
            n_th,
            eta: need(self.eta, "eta")?,
            brownian: self.brownian.unwrap_or_default(),
        };
        params.validate()?;
        let gamma = self.gamma_hz.map(|v| 2.0 * PI * v);
        if let Some(g) = gamma {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::Config("gamma_hz must be positive".into()));
            }
        }
        let t_sep = need(self.t_sep_s, "t_sep_s")?;
        if !(t_sep >= 0.0) {
            return Err(Error::Config("t_sep_s must be non-negative".into()));
        }
        Ok(Config {
            params,
            coupling,
            gamma,
            t_sep,
            phi: self.phi,
            n_traj: self.n_traj.unwrap_or(DEFAULT_N_TRAJ),
            seed: self.seed.unwrap_or(0),
            dt: self.dt_s,
            burn_in: self.burn_in_s,
            mc_max_steps: self.mc_max_steps.unwrap_or(DEFAULT_MC_MAX_STEPS),
        })
    }
}
