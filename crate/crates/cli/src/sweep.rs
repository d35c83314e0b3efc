//! One-axis parameter sweeps and the figure presets.

use std::f64::consts::PI;

use optoent::epr::{
    correlators, epr_closed_form, evaluate, gamma_opt, minimize_over_gamma, optimize_phi, EprResult, Method,
};
use optoent::gaussian::{
    covariance_from_spectra, duan_value, log_negativity, minimize_duan_over_gamma, minimize_witness_over_gamma,
    optimal_duan, optimal_witness, ppt_check, CovarianceMatrix4, PptVerdict,
};
use optoent::model::derive_rates;
use optoent::montecarlo::{jackknife, max_step, required_duration, run_ensemble, SimConfig};
use optoent::pulses::PulseParams;
use optoent::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Config, ConfigLayer};
use crate::table::{Cell, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// g/2π (Hz).
    G,
    CQ,
    /// Fixed pulse bandwidth Γ/2π (Hz); no minimization over Γ.
    Gamma,
    NTh,
    /// δ/κ.
    Delta,
    Eta,
    /// Seconds.
    TSep,
}

impl std::str::FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "g" => Axis::G,
            "c_q" => Axis::CQ,
            "gamma" => Axis::Gamma,
            "n_th" => Axis::NTh,
            "delta" => Axis::Delta,
            "eta" => Axis::Eta,
            "t_sep" => Axis::TSep,
            _ => return Err(format!("unknown axis {s:?}")),
        })
    }
}

impl Axis {
    fn apply(self, layer: &ConfigLayer, v: f64) -> ConfigLayer {
        let mut l = layer.clone();
        match self {
            Axis::G => {
                l.g_hz = Some(v);
                l.c_q = None;
            }
            Axis::CQ => {
                l.c_q = Some(v);
                l.g_hz = None;
            }
            Axis::Gamma => l.gamma_hz = Some(v),
            Axis::NTh => l.n_th = Some(v),
            Axis::Delta => l.delta_over_kappa = Some(v),
            Axis::Eta => l.eta = Some(v),
            Axis::TSep => l.t_sep_s = Some(v),
        }
        l
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Points {
    List(Vec<f64>),
    Range {
        min: f64,
        max: f64,
        count: usize,
        spacing: Spacing,
    },
}

impl Points {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            Points::List(v) => v.clone(),
            &Points::Range {
                min,
                max,
                count,
                spacing,
            } => {
                if count == 0 {
                    return Err(Error::contract("sweep range needs at least one point"));
                }
                if spacing == Spacing::Log && !(min > 0.0 && max > 0.0) {
                    return Err(Error::contract("log spacing needs positive bounds"));
                }
                (0..count)
                    .map(|k| {
                        let t = if count == 1 { 0.0 } else { k as f64 / (count - 1) as f64 };
                        match spacing {
                            Spacing::Linear => min + t * (max - min),
                            Spacing::Log => (min.ln() + t * (max.ln() - min.ln())).exp(),
                        }
                    })
                    .collect()
            }
        };
        if v.is_empty() {
            return Err(Error::contract("sweep has no points"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::contract("sweep points must be finite"));
        }
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMethod {
    ClosedForm,
    Exact,
    MatrixForm,
    Witness,
    Montecarlo,
}

impl std::str::FromStr for SweepMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "closed_form" => SweepMethod::ClosedForm,
            "exact" => SweepMethod::Exact,
            "matrix_form" => SweepMethod::MatrixForm,
            "witness" => SweepMethod::Witness,
            "montecarlo" => SweepMethod::Montecarlo,
            _ => return Err(format!("unknown method {s:?}")),
        })
    }
}

impl SweepMethod {
    fn columns(self) -> &'static [&'static str] {
        match self {
            SweepMethod::ClosedForm => &["closed_form", "closed_form_gamma_hz", "closed_form_entangled"],
            SweepMethod::Exact => &["exact", "exact_gamma_hz", "exact_phi", "exact_entangled"],
            SweepMethod::MatrixForm => &[
                "matrix_form",
                "matrix_form_gamma_hz",
                "matrix_form_phi",
                "matrix_form_entangled",
            ],
            SweepMethod::Witness => &["witness", "witness_gamma_hz", "log_negativity", "ppt_entangled"],
            SweepMethod::Montecarlo => &[
                "montecarlo",
                "montecarlo_se",
                "montecarlo_gamma_hz",
                "montecarlo_entangled",
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: Axis,
    pub points: Points,
    pub methods: Vec<SweepMethod>,
}

impl SweepSpec {
    fn methods(&self) -> Result<Vec<SweepMethod>> {
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        if m.is_empty() {
            return Err(Error::contract("sweep needs at least one method"));
        }
        Ok(m)
    }

    pub fn columns(&self) -> Result<Vec<String>> {
        let mut cols: Vec<String> = ["axis_value", "c_q", "g_hz"].iter().map(|s| s.to_string()).collect();
        for m in self.methods()? {
            cols.extend(m.columns().iter().map(|s| s.to_string()));
        }
        cols.push("error".into());
        Ok(cols)
    }
}

const HZ: f64 = 1.0 / (2.0 * PI);

fn entangled(v: f64) -> Cell {
    if v.is_finite() {
        Cell::Bool(v < 2.0)
    } else {
        Cell::Empty
    }
}

fn epr_cells(r: &EprResult, with_phi: bool) -> Vec<Cell> {
    let mut c = vec![Cell::num(r.value), Cell::num(r.gamma_used * HZ)];
    if with_phi {
        c.push(Cell::num(r.phi_used));
    }
    c.push(entangled(r.value));
    c
}

fn at_fixed_gamma(cfg: &Config, gamma: f64, method: Method) -> Result<EprResult> {
    let mut pulse = PulseParams::new(gamma, cfg.t_sep, 0.0);
    pulse.phi = match cfg.phi {
        Some(phi) => phi,
        None if method == Method::ClosedForm => 0.0,
        None => optimize_phi(correlators(&cfg.params, &pulse)?.c).phi,
    };
    evaluate(&cfg.params, &pulse, method)
}

/// (value, Γ, φ) for the unit-weight EPR-variance; uses the closed-form
/// evaluators at δ = 0 and the assembled covariance otherwise.
fn exact_point(cfg: &Config, method: Method) -> Result<EprResult> {
    let p = &cfg.params;
    if p.delta == 0.0 || method != Method::ExactQuadrature {
        return match cfg.gamma {
            Some(g) => at_fixed_gamma(cfg, g, method),
            None => match cfg.phi {
                None => minimize_over_gamma(p, method, cfg.t_sep, p.eta),
                Some(_) => Err(Error::contract("a fixed phi needs a fixed gamma_hz")),
            },
        };
    }
    let (gamma, value, phi) = match cfg.gamma {
        Some(g) => {
            let cov = covariance_from_spectra(p, &PulseParams::new(g, cfg.t_sep, 0.0))?;
            let phi = cfg.phi.unwrap_or_else(|| optimal_duan(&cov).0);
            (g, duan_value(&cov, phi), phi)
        }
        None => {
            let o = minimize_duan_over_gamma(p, cfg.t_sep)?;
            (o.gamma, o.value, o.phi)
        }
    };
    Ok(EprResult {
        value,
        phi_used: phi,
        gamma_used: gamma,
        method: Method::ExactQuadrature,
        entangled: value < 2.0,
        margin: 2.0 - value,
        abs_error: f64::NAN,
        domain_warning: false,
    })
}

fn witness_point(cfg: &Config) -> Result<(f64, f64, CovarianceMatrix4)> {
    match cfg.gamma {
        Some(g) => {
            let cov = covariance_from_spectra(&cfg.params, &PulseParams::new(g, cfg.t_sep, 0.0))?;
            Ok((optimal_witness(&cov)?.value, g, cov))
        }
        None => {
            let o = minimize_witness_over_gamma(&cfg.params, cfg.t_sep)?;
            Ok((o.value, o.gamma, o.cov))
        }
    }
}

/// Duan value and jackknife error from a simulated ensemble.
pub fn montecarlo_point(cfg: &Config, gamma: f64, phi: Option<f64>) -> Result<(f64, f64)> {
    let p = &cfg.params;
    let pulse = PulseParams::new(gamma, cfg.t_sep, 0.0);
    let phi = match phi {
        Some(phi) => phi,
        None => optimal_duan(&covariance_from_spectra(p, &pulse)?).0,
    };
    let dt = cfg.dt.unwrap_or_else(|| max_step(p));
    let mut sim = SimConfig::new(dt, 0.0, cfg.seed);
    sim.burn_in = cfg.burn_in;
    let steps = cfg.n_traj as f64 * (sim.burn_in_for(p) + required_duration(&pulse)) / dt;
    if steps > cfg.mc_max_steps {
        return Err(Error::contract(format!(
            "Monte Carlo needs {steps:.3e} integration steps, above the limit {:.3e} (mc_max_steps)",
            cfg.mc_max_steps
        )));
    }
    let ens = run_ensemble(p, &pulse, &sim, cfg.n_traj)?;
    jackknife(&ens, |m| duan_value(&CovarianceMatrix4::new(*m), phi))
}

fn blank(m: SweepMethod) -> Vec<Cell> {
    vec![Cell::Empty; m.columns().len()]
}

fn evaluate_row(layer: &ConfigLayer, at: Option<(Axis, f64)>, methods: &[SweepMethod]) -> (Vec<Cell>, Vec<Error>) {
    let (mut row, layer) = match at {
        Some((axis, v)) => (vec![Cell::num(v)], axis.apply(layer, v)),
        None => (vec![Cell::Empty], layer.clone()),
    };
    let cfg = match layer.resolve() {
        Ok(c) => c,
        Err(e) => {
            row.extend([Cell::Empty, Cell::Empty]);
            for &m in methods {
                row.extend(blank(m));
            }
            row.push(Cell::Text(e.to_string()));
            return (row, vec![e]);
        }
    };
    row.push(Cell::num(derive_rates(&cfg.params).c_q));
    row.push(Cell::num(cfg.params.g * HZ));
    let mut errors: Vec<String> = Vec::new();
    let mut failures = Vec::new();
    let mut epr_choice: Option<(f64, f64)> = None;
    for &m in methods {
        let cells = match m {
            SweepMethod::ClosedForm => {
                let r = if cfg.params.delta != 0.0 {
                    Err(Error::contract("closed form requires zero detuning"))
                } else {
                    match cfg.gamma {
                        Some(g) => Ok(epr_closed_form(&cfg.params, &PulseParams::new(g, cfg.t_sep, 0.0))),
                        None => minimize_over_gamma(&cfg.params, Method::ClosedForm, cfg.t_sep, cfg.params.eta),
                    }
                };
                r.map(|r| epr_cells(&r, false))
            }
            SweepMethod::Exact => exact_point(&cfg, Method::ExactQuadrature).map(|r| {
                epr_choice = Some((r.gamma_used, r.phi_used));
                epr_cells(&r, true)
            }),
            SweepMethod::MatrixForm => exact_point(&cfg, Method::MatrixForm).map(|r| {
                epr_choice.get_or_insert((r.gamma_used, r.phi_used));
                epr_cells(&r, true)
            }),
            SweepMethod::Witness => witness_point(&cfg).and_then(|(value, g, cov)| {
                let ppt = ppt_check(&cov)?;
                Ok(vec![
                    Cell::num(value),
                    Cell::num(g * HZ),
                    Cell::num(log_negativity(&cov)?),
                    Cell::Bool(ppt == PptVerdict::Entangled),
                ])
            }),
            SweepMethod::Montecarlo => {
                let (gamma, phi) = match (cfg.gamma, epr_choice) {
                    (Some(g), _) => (g, cfg.phi),
                    (None, Some((g, phi))) => (g, Some(phi)),
                    (None, None) => (gamma_opt(&cfg.params), cfg.phi),
                };
                montecarlo_point(&cfg, gamma, phi).map(|(v, se)| {
                    vec![Cell::num(v), Cell::num(se), Cell::num(gamma * HZ), entangled(v)]
                })
            }
        };
        match cells {
            Ok(c) => row.extend(c),
            Err(e) => {
                errors.push(format!("{}: {e}", m.columns()[0]));
                failures.push(e);
                row.extend(blank(m));
            }
        }
    }
    row.push(if errors.is_empty() {
        Cell::Empty
    } else {
        Cell::Text(errors.join("; "))
    });
    (row, failures)
}

/// Evaluates every sweep point; rows keep the input order and failures are
/// reported in the `error` column. `jobs` bounds the worker count.
pub fn run_sweep(base: &ConfigLayer, spec: &SweepSpec, jobs: usize) -> Result<Table> {
    let points = spec.points.values()?;
    let methods = spec.methods()?;
    let mut table = Table::new(spec.columns()?);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::contract(format!("thread pool: {e}")))?;
    table.rows = pool.install(|| {
        points
            .par_iter()
            .map(|&v| evaluate_row(base, Some((spec.axis, v)), &methods).0)
            .collect()
    });
    Ok(table)
}

/// Single evaluation without a sweep axis (`axis_value` left empty). Also
/// returns the per-method failures recorded in the `error` column.
pub fn run_point(layer: &ConfigLayer, methods: &[SweepMethod]) -> Result<(Table, Vec<Error>)> {
    let spec = SweepSpec {
        axis: Axis::Eta,
        points: Points::List(vec![0.0]),
        methods: methods.to_vec(),
    };
    let methods = spec.methods()?;
    let mut table = Table::new(spec.columns()?);
    let (row, failures) = evaluate_row(layer, None, &methods);
    table.rows.push(row);
    Ok((table, failures))
}

pub const FIGURES: [&str; 4] = ["fig4", "fig5", "fig6", "fig7"];

/// Series of a figure preset: configuration overrides on the baseline and
/// the sweep to run. `count` overrides the number of points per series.
pub fn figure_preset(name: &str, count: Option<usize>) -> Result<Vec<(ConfigLayer, SweepSpec)>> {
    let base = ConfigLayer::defaults();
    let range = |min: f64, max: f64, n: usize, spacing| Points::Range {
        min,
        max,
        count: count.unwrap_or(n),
        spacing,
    };
    use SweepMethod::*;
    let with_cq = |c: f64| ConfigLayer {
        c_q: Some(c),
        ..base.clone()
    };
    Ok(match name {
        "fig4" => vec![(
            base.clone(),
            SweepSpec {
                axis: Axis::CQ,
                points: range(1e-2, 1e2, 21, Spacing::Log),
                methods: vec![ClosedForm, Exact, Witness],
            },
        )],
        "fig5" => [0.1, 1.0, 10.0]
            .iter()
            .map(|&c| {
                (
                    with_cq(c),
                    SweepSpec {
                        axis: Axis::Gamma,
                        points: range(1e1, 1e5, 25, Spacing::Log),
                        methods: vec![ClosedForm, Exact, Witness],
                    },
                )
            })
            .collect(),
        "fig6" => vec![(
            ConfigLayer {
                g_hz: Some(15.8e3),
                c_q: None,
                ..base.clone()
            },
            SweepSpec {
                axis: Axis::NTh,
                points: range(1e2, 1e6, 21, Spacing::Log),
                methods: vec![ClosedForm, Exact, Witness],
            },
        )],
        "fig7" => [0.1, 1.0, 10.0]
            .iter()
            .map(|&c| {
                (
                    with_cq(c),
                    SweepSpec {
                        axis: Axis::Delta,
                        points: range(-1.0, 0.0, 11, Spacing::Linear),
                        methods: vec![Exact, Witness],
                    },
                )
            })
            .collect(),
        _ => return Err(Error::contract(format!("unknown figure {name:?} (fig4, fig5, fig6, fig7)"))),
    })
}

/// Runs all series of a preset into one table.
pub fn run_figure(name: &str, count: Option<usize>, jobs: usize) -> Result<Table> {
    let mut table = Table::default();
    for (layer, spec) in figure_preset(name, count)? {
        table.extend(run_sweep(&layer, &spec, jobs)?)?;
    }
    Ok(table)
}
