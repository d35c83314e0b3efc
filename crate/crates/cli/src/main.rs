use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use optoent::gaussian::{optimal_duan, covariance_from_spectra, CovarianceMatrix4};
use optoent::model::{check_stability, BrownianNoise};
use optoent::montecarlo::{
    estimate_covariance, jackknife, max_step, required_duration, run_ensemble, simulate_record, SimConfig,
};
use optoent::pulses::PulseParams;
use optoent::spectral::transfer_detuned;
use optoent::epr::gamma_opt;
use optoent::{Error, Result};
use optoent_cli::config::{Config, ConfigLayer};
use optoent_cli::sweep::{run_figure, run_point, run_sweep, Axis, Points, Spacing, SweepMethod, SweepSpec};
use optoent_cli::table::{Cell, Format, Table};

#[derive(Parser)]
#[command(name = "optoent", version, about = "EPR-variance and entanglement of optomechanical output pulses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one parameter point.
    Epr {
        #[command(flatten)]
        params: ParamArgs,
        /// Comma-separated: closed_form, exact, matrix_form, witness, montecarlo.
        #[arg(long, value_delimiter = ',', default_value = "exact")]
        methods: Vec<SweepMethod>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Sweep one parameter.
    Sweep {
        #[command(flatten)]
        params: ParamArgs,
        /// g (Hz), c_q, gamma (Hz), n_th, delta (units of kappa), eta, t_sep (s).
        #[arg(long)]
        axis: Axis,
        /// Explicit comma-separated points.
        #[arg(long, value_delimiter = ',', conflicts_with = "range")]
        points: Option<Vec<f64>>,
        /// min,max,count
        #[arg(long, value_delimiter = ',', num_args = 1)]
        range: Option<Vec<f64>>,
        #[arg(long, default_value = "linear", value_parser = parse_spacing)]
        spacing: Spacing,
        #[arg(long, value_delimiter = ',', default_value = "exact")]
        methods: Vec<SweepMethod>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Reproduce a figure preset (fig4, fig5, fig6, fig7).
    Figure {
        name: String,
        /// Points per series.
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Time-domain simulation of the pulse covariance.
    Montecarlo {
        #[command(flatten)]
        params: ParamArgs,
        /// Write the first trajectory's output record as CSV.
        #[arg(long)]
        dump_record: Option<PathBuf>,
        /// Write the sampled pulse amplitudes as JSON.
        #[arg(long)]
        ensemble_json: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Drift-matrix eigenvalues and stability verdict (JSON).
    Stability {
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Output transfer functions on a frequency grid (CSV).
    DumpTransfer {
        #[command(flatten)]
        params: ParamArgs,
        /// Lower frequency omega/2pi (Hz).
        #[arg(long, default_value_t = -5e6, allow_negative_numbers = true)]
        f_min_hz: f64,
        #[arg(long, default_value_t = 5e6, allow_negative_numbers = true)]
        f_max_hz: f64,
        #[arg(long, default_value_t = 1001)]
        count: usize,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn parse_spacing(s: &str) -> std::result::Result<Spacing, String> {
    match s {
        "linear" => Ok(Spacing::Linear),
        "log" => Ok(Spacing::Log),
        _ => Err(format!("unknown spacing {s:?} (linear or log)")),
    }
}

fn parse_brownian(s: &str) -> std::result::Result<BrownianNoise, String> {
    match s {
        "momentum" => Ok(BrownianNoise::Momentum),
        "symmetric" => Ok(BrownianNoise::Symmetric),
        _ => Err(format!("unknown bath coupling {s:?} (momentum or symmetric)")),
    }
}

/// Flags mirror the configuration keys.
#[derive(Args, Clone, Debug, Default)]
struct ParamArgs {
    /// TOML file with configuration keys; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    omega_m_hz: Option<f64>,
    #[arg(long)]
    kappa_over_omega_m: Option<f64>,
    #[arg(long)]
    q_factor: Option<f64>,
    #[arg(long)]
    n_th: Option<f64>,
    #[arg(long, conflicts_with = "c_q")]
    g_hz: Option<f64>,
    #[arg(long)]
    c_q: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    delta_over_kappa: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, value_parser = parse_brownian)]
    brownian: Option<BrownianNoise>,
    /// Pulse bandwidth Gamma/2pi; omitted means minimize over Gamma.
    #[arg(long)]
    gamma_hz: Option<f64>,
    #[arg(long)]
    t_sep_s: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    phi: Option<f64>,
    #[arg(long)]
    n_traj: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt_s: Option<f64>,
    #[arg(long)]
    burn_in_s: Option<f64>,
    #[arg(long)]
    mc_max_steps: Option<f64>,
}

impl ParamArgs {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            omega_m_hz: self.omega_m_hz,
            kappa_over_omega_m: self.kappa_over_omega_m,
            q_factor: self.q_factor,
            n_th: self.n_th,
            g_hz: self.g_hz,
            c_q: self.c_q,
            delta_over_kappa: self.delta_over_kappa,
            eta: self.eta,
            brownian: self.brownian,
            gamma_hz: self.gamma_hz,
            t_sep_s: self.t_sep_s,
            phi: self.phi,
            n_traj: self.n_traj,
            seed: self.seed,
            dt_s: self.dt_s,
            burn_in_s: self.burn_in_s,
            mc_max_steps: self.mc_max_steps,
        }
    }

    /// Merged layer (flags over file over defaults).
    fn merged(&self) -> Result<ConfigLayer> {
        let base = ConfigLayer::defaults();
        let lower = match &self.config {
            Some(path) => ConfigLayer::from_file(path)?.over(&base)?,
            None => base,
        };
        self.layer().over(&lower)
    }

    fn resolved(&self) -> Result<Config> {
        self.merged()?.resolve()
    }
}

#[derive(Args, Clone, Debug)]
struct OutArgs {
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Omit the generation-time metadata line.
    #[arg(long)]
    no_timestamp: bool,
    /// Worker threads for sweep points.
    #[arg(long)]
    jobs: Option<usize>,
}

impl OutArgs {
    fn jobs(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    fn write(&self, table: &Table) -> Result<()> {
        let stamp = (!self.no_timestamp).then(|| {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            format!("unix_time={secs} optoent {}", env!("CARGO_PKG_VERSION"))
        });
        match &self.output {
            Some(path) => table.emit(self.format, stamp.as_deref(), path),
            None => {
                let bytes = table.encode(self.format, stamp.as_deref())?;
                std::io::stdout()
                    .write_all(&bytes)
                    .map_err(|e| Error::io("<stdout>", e))
            }
        }
    }
}

fn sweep_points(points: Option<Vec<f64>>, range: Option<Vec<f64>>, spacing: Spacing) -> Result<Points> {
    match (points, range) {
        (Some(p), None) => Ok(Points::List(p)),
        (None, Some(r)) => {
            if r.len() != 3 || r[2] < 1.0 || r[2].fract() != 0.0 {
                return Err(Error::Config("--range takes min,max,count".into()));
            }
            Ok(Points::Range {
                min: r[0],
                max: r[1],
                count: r[2] as usize,
                spacing,
            })
        }
        _ => Err(Error::Config("give --points or --range".into())),
    }
}

const UPPER_NAMES: [&str; 10] = [
    "xi_xe_xe", "xi_xe_pe", "xi_xe_xl", "xi_xe_pl", "xi_pe_pe", "xi_pe_xl", "xi_pe_pl", "xi_xl_xl", "xi_xl_pl",
    "xi_pl_pl",
];

fn montecarlo(params: &ParamArgs, dump_record: Option<&Path>, ensemble_json: Option<&Path>) -> Result<Table> {
    let cfg = params.resolved()?;
    let p = &cfg.params;
    let gamma = cfg.gamma.unwrap_or_else(|| gamma_opt(p));
    let pulse = PulseParams::new(gamma, cfg.t_sep, 0.0);
    let spectral = covariance_from_spectra(p, &pulse)?;
    let (phi_opt, _) = optimal_duan(&spectral);
    let phi = cfg.phi.unwrap_or(phi_opt);
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
    if let Some(path) = dump_record {
        let rec_cfg = SimConfig {
            t_total: ens.t_total,
            ..sim
        };
        simulate_record(p, &rec_cfg, 0)?.write_csv(path)?;
    }
    if let Some(path) = ensemble_json {
        ens.write_json(path)?;
    }
    let (cov, se) = estimate_covariance(&ens)?;
    let (duan, duan_se) = jackknife(&ens, |m| optoent::gaussian::duan_value(&CovarianceMatrix4::new(*m), phi))?;
    let mut columns: Vec<String> = [
        "gamma_hz", "phi", "montecarlo", "montecarlo_se", "spectral", "n_traj", "seed", "dt_s", "burn_in_s",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let spectral_at_phi = optoent::gaussian::duan_value(&spectral, phi);
    let mut row = vec![
        Cell::num(gamma / (2.0 * std::f64::consts::PI)),
        Cell::num(phi),
        Cell::num(duan),
        Cell::num(duan_se),
        Cell::num(spectral_at_phi),
        Cell::Num(ens.n_traj as f64),
        Cell::Num(ens.seed as f64),
        Cell::num(ens.dt),
        Cell::num(ens.burn_in),
    ];
    let upper = cov.upper();
    let se_upper = CovarianceMatrix4::new(se).upper();
    for (k, name) in UPPER_NAMES.iter().enumerate() {
        columns.push(name.to_string());
        columns.push(format!("{name}_se"));
        row.push(Cell::num(upper[k]));
        row.push(Cell::num(se_upper[k]));
    }
    Ok(Table {
        columns,
        rows: vec![row],
    })
}

fn dump_transfer(params: &ParamArgs, f_min: f64, f_max: f64, count: usize) -> Result<Table> {
    let cfg = params.resolved()?;
    if count < 2 || !(f_max > f_min) {
        return Err(Error::contract("need count >= 2 and f_max_hz > f_min_hz"));
    }
    let outs = ["x", "p"];
    let ins = ["x_in", "p_in", "xi_p", "xi_x"];
    let mut columns = vec!["omega".to_string()];
    for o in outs {
        for i in ins {
            columns.push(format!("re_{o}_{i}"));
            columns.push(format!("im_{o}_{i}"));
        }
    }
    let mut table = Table::new(columns);
    for k in 0..count {
        let f = f_min + (f_max - f_min) * k as f64 / (count - 1) as f64;
        let w = 2.0 * std::f64::consts::PI * f;
        let h = transfer_detuned(w, &cfg.params)?;
        let mut row = vec![Cell::num(w)];
        for r in &h.m {
            for z in r {
                row.push(Cell::num(z.re));
                row.push(Cell::num(z.im));
            }
        }
        table.rows.push(row);
    }
    Ok(table)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Epr { params, methods, out } => {
            let layer = params.merged()?;
            layer.resolve()?;
            let (table, failures) = run_point(&layer, &methods)?;
            out.write(&table)?;
            match failures.into_iter().next() {
                Some(e) => Err(e),
                None => Ok(()),
            }
        }
        Command::Sweep {
            params,
            axis,
            points,
            range,
            spacing,
            methods,
            out,
        } => {
            let spec = SweepSpec {
                axis,
                points: sweep_points(points, range, spacing)?,
                methods,
            };
            out.write(&run_sweep(&params.merged()?, &spec, out.jobs())?)
        }
        Command::Figure { name, count, out } => out.write(&run_figure(&name, count, out.jobs())?),
        Command::Montecarlo {
            params,
            dump_record,
            ensemble_json,
            out,
        } => out.write(&montecarlo(&params, dump_record.as_deref(), ensemble_json.as_deref())?),
        Command::Stability { params } => {
            let cfg = params.resolved()?;
            let report = check_stability(&cfg.params);
            let s = serde_json::to_string_pretty(&report).map_err(|e| Error::contract(e.to_string()))?;
            println!("{s}");
            Ok(())
        }
        Command::DumpTransfer {
            params,
            f_min_hz,
            f_max_hz,
            count,
            out,
        } => out.write(&dump_transfer(&params, f_min_hz, f_max_hz, count)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
