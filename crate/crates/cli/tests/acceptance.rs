//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use optoent::epr::{
    apply_efficiency, correlators, epr_closed_form, epr_exact, epr_matrix_form, gamma_opt, minimize_over_gamma,
    optimize_phi, Method,
};
use optoent::gaussian::*;
use optoent::model::SystemParams;
use optoent::montecarlo::{jackknife, max_step, run_ensemble, SimConfig};
use optoent::pulses::{overlap, PulseParams, Which};
use optoent::spectral::{chi_m, chi_opt, refl_phase, transfer_detuned};
use optoent_cli::sweep::{figure_preset, run_figure, run_sweep};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative deviation allowed from 1 + 1/(c_q + 1).
const MAIN_RESULT_REL: f64 = 0.02;
const MAIN_RESULT_SECONDS: f64 = 60.0;
/// Allowed relative distance of the Γ-minimizer from 2(Γ_ro+Γ_th)+γ_m/2.
const GAMMA_OPT_REL: f64 = 0.2;
/// Relative to max(1, |value|); closed-form values reach ~1e8 away from φ = 0.
const LOSS_LAW_REL: f64 = 1e-12;
const SIGMAS: f64 = 3.0;
/// Slack for "non-increasing" and "not above 2" on quadrature output.
const QUADRATURE_TOL: f64 = 1e-8;
const TRIANGLE_ABS: f64 = 1e-6;
const TMS_ABS: f64 = 1e-10;
const ORTHONORMAL_ABS: f64 = 1e-8;
const CLOSED_FORM_REL: f64 = 1e-12;
const MC_TRAJ: usize = 10_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cheap(c_q: f64) -> SystemParams {
    let mut p = SystemParams::baseline();
    p.omega_m = 1.0;
    p.kappa = 4.0;
    p.gamma_m = 0.05;
    p.n_th = 5.0;
    p.with_cq(c_q)
}

/// Monte Carlo EPR-variance at Γ_opt and the analytic φ, with jackknife error,
/// against the quadrature evaluator at η = 1.
fn mc_vs_exact(p: &SystemParams, seed: u64) -> (f64, f64, f64) {
    let gamma = gamma_opt(p);
    let p1 = p.with_eta(1.0);
    let mut pulse = PulseParams::new(gamma, 0.0, 0.0);
    pulse.phi = optimize_phi(correlators(&p1, &pulse).unwrap().c).phi;
    let exact = epr_exact(&p1, &pulse).unwrap().value;
    let ens = run_ensemble(p, &PulseParams::new(gamma, 0.0, 0.0), &SimConfig::new(max_step(p), 0.0, seed), MC_TRAJ)
        .unwrap();
    let (v, se) = jackknife(&ens, |m| duan_value(&CovarianceMatrix4::new(*m), pulse.phi)).unwrap();
    (v, se, exact)
}

fn main_result() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for c in [0.1, 0.5, 1.0] {
        let t = Instant::now();
        let r = minimize_over_gamma(&SystemParams::baseline().with_cq(c), Method::ExactQuadrature, 0.0, 1.0).unwrap();
        let secs = t.elapsed().as_secs_f64();
        let want = 1.0 + 1.0 / (c + 1.0);
        let rel = (r.value / want - 1.0).abs();
        ok &= rel <= MAIN_RESULT_REL && secs < MAIN_RESULT_SECONDS;
        parts.push(format!("c_q={c}: {:.5} vs {want:.5} ({:.2}%, {secs:.1}s)", r.value, 100.0 * rel));
    }
    outcome(ok, parts.join("; "))
}

fn optimal_bandwidth() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for c in [0.1, 0.5, 1.0] {
        let p = SystemParams::baseline().with_cq(c);
        let r = minimize_over_gamma(&p, Method::ExactQuadrature, 0.0, 1.0).unwrap();
        let ratio = r.gamma_used / gamma_opt(&p);
        ok &= (ratio - 1.0).abs() <= GAMMA_OPT_REL;
        parts.push(format!("c_q={c}: Gamma/Gamma_opt = {ratio:.3}"));
    }
    outcome(ok, parts.join("; "))
}

fn loss_law() -> Outcome {
    let mut worst: f64 = 0.0;
    for c in [0.01, 0.1, 1.0, 10.0, 100.0] {
        let p = SystemParams::baseline().with_cq(c);
        for g in [0.3, 1.0, 3.0] {
            for phi in [0.0, 0.4] {
                let pulse = PulseParams::new(g * gamma_opt(&p), 0.0, phi);
                let one = epr_closed_form(&p, &pulse).value;
                for eta in [0.0, 0.25, 0.5, 0.8, 1.0] {
                    let v = epr_closed_form(&p.with_eta(eta), &pulse).value;
                    let want = apply_efficiency(one, eta);
                    worst = worst.max((v - want).abs() / want.abs().max(1.0));
                }
            }
        }
    }
    let p = cheap(1.0).with_eta(0.5);
    let (mc, se, exact) = mc_vs_exact(&p, 303);
    let want = apply_efficiency(exact, 0.5);
    let ok = worst <= LOSS_LAW_REL && (mc - want).abs() <= SIGMAS * se;
    outcome(
        ok,
        format!("closed-form max relative deviation {worst:.1e}; Monte Carlo eta=0.5: {mc:.4} ± {se:.4} vs law {want:.4}"),
    )
}

fn breakdown_and_witness() -> Outcome {
    let t = run_figure("fig4", None, 1).unwrap();
    let cq = t.values("c_q").unwrap();
    let exact = t.values("exact").unwrap();
    let wit = t.values("witness").unwrap();
    let all: Option<Vec<f64>> = wit.iter().copied().collect();
    let Some(w) = all else {
        return outcome(false, "witness column has missing values".into());
    };
    let exceeds = cq
        .iter()
        .zip(&exact)
        .filter(|(c, _)| c.is_some_and(|c| (10.0 - 1e-9..=100.0 + 1e-9).contains(&c)))
        .filter_map(|(_, e)| *e)
        .fold(f64::NEG_INFINITY, f64::max);
    let below = w.iter().all(|&v| v < 2.0);
    let monotone = w.windows(2).all(|x| x[1] <= x[0] + QUADRATURE_TOL);
    outcome(
        exceeds > 2.0 && below && monotone,
        format!(
            "max exact on c_q in [10,100] = {exceeds:.3}; witness {:.5} -> {:.5}, all < 2: {below}, non-increasing: {monotone}",
            w[0],
            w[w.len() - 1]
        ),
    )
}

fn low_cooperativity() -> Outcome {
    let p = SystemParams::baseline().with_cq(0.1);
    let r = minimize_over_gamma(&p, Method::ExactQuadrature, 0.0, 1.0).unwrap();
    let cov = covariance_from_spectra(&p, &PulseParams::new(r.gamma_used, 0.0, 0.0)).unwrap();
    let ppt = ppt_check(&cov).unwrap();
    outcome(
        r.value < 2.0 && ppt == PptVerdict::Entangled,
        format!("exact minimum {:.5}, PPT verdict {ppt:?}", r.value),
    )
}

fn detuning(notes: &mut Vec<String>) -> Outcome {
    let mut result = outcome(false, "c_q=10 series not found".into());
    for (layer, spec) in figure_preset("fig7", None).unwrap() {
        let t = run_sweep(&layer, &spec, 1).unwrap();
        let d = t.values("axis_value").unwrap();
        let e = t.values("exact").unwrap();
        let c = layer.c_q.unwrap();
        let max = e.iter().flatten().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let missing = e.iter().filter(|v| v.is_none()).count();
        if (c - 10.0).abs() < 1e-12 {
            let at = |x: f64| {
                d.iter()
                    .position(|v| v.is_some_and(|v| (v - x).abs() < 1e-9))
                    .and_then(|k| e[k])
            };
            let (Some(e3), Some(e0)) = (at(-0.3), at(0.0)) else {
                return outcome(false, "missing delta points".into());
            };
            result = outcome(
                e3 < e0 && max <= 2.0 + QUADRATURE_TOL && missing == 0,
                format!("c_q=10: {e3:.4} at -0.3 kappa vs {e0:.4} at 0; max over sweep {max:.4}"),
            );
        } else {
            notes.push(format!(
                "fig7 c_q={c}: max EPR-variance over delta in [-kappa, 0] = {max:.6} ({})",
                if max <= 2.0 + QUADRATURE_TOL { "not above 2" } else { "above 2" }
            ));
        }
    }
    result
}

fn evaluator_triangle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let mut p = SystemParams::baseline();
        p.kappa = p.omega_m * 10f64.powf(rng.random_range(0.7..1.7));
        p.gamma_m = p.omega_m / 10f64.powf(rng.random_range(6.0..9.0));
        p.n_th = 10f64.powf(rng.random_range(2.0..5.0));
        p.eta = rng.random_range(0.5..=1.0);
        let p = p.with_cq(10f64.powf(rng.random_range(-2.0..2.0)));
        let gamma = gamma_opt(&p) * 10f64.powf(rng.random_range(-0.5..0.5));
        let pulse = PulseParams::new(gamma, rng.random_range(0.0..5.0) / gamma, rng.random_range(-PI..PI));
        let a = epr_exact(&p, &pulse).unwrap().value;
        let b = epr_matrix_form(&p, &pulse).unwrap().value;
        worst = worst.max((a - b).abs());
    }
    let mut ok = worst <= TRIANGLE_ABS;
    let mut parts = vec![format!("exact vs matrix form, 50 sets: max |diff| {worst:.1e}")];
    for (k, c) in [0.1, 1.0, 10.0].into_iter().enumerate() {
        let (mc, se, exact) = mc_vs_exact(&cheap(c), 100 + k as u64);
        ok &= (mc - exact).abs() <= SIGMAS * se;
        parts.push(format!("MC c_q={c}: {mc:.4} ± {se:.4} vs {exact:.4}"));
    }
    outcome(ok, parts.join("; "))
}

fn gaussian_oracles() -> Outcome {
    let mut worst: f64 = 0.0;
    for r in [0.1, 0.5, 1.0] {
        let cov = CovarianceMatrix4::two_mode_squeezed(r);
        let nu = symplectic_spectrum(&cov, true);
        worst = worst
            .max((optimal_duan(&cov).1 - 2.0 * (-2.0 * r).exp()).abs())
            .max((log_negativity(&cov).unwrap() - 2.0 * r).abs())
            .max((nu[0] - (-2.0 * r).exp()).abs())
            .max((nu[1] - (2.0 * r).exp()).abs());
    }
    outcome(worst <= TMS_ABS, format!("max deviation {worst:.1e} over r in {{0.1, 0.5, 1.0}}"))
}

fn shot_noise() -> Outcome {
    let v = CovarianceMatrix4::vacuum();
    let hi = shot_noise_sensitivity(&v, 1.01);
    let lo = shot_noise_sensitivity(&v, 0.99);
    outcome(
        !hi.physical_at_x && !hi.ppt_at_x && lo.physical_at_x && lo.ppt_at_x,
        format!("x=1.01: {hi:?}; x=0.99: {lo:?}"),
    )
}

fn cli_output(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_optoent")).args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn property_suites() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;

    let mut p = SystemParams::baseline();
    p.omega_m = 1.0;
    let mut ortho: f64 = 0.0;
    for gamma in [0.01, 0.2, 3.0] {
        for t in [0.0, 1.0, 10.0] {
            let pulse = PulseParams::new(gamma, t / gamma, 0.0);
            for (i, j, want) in [(Which::Early, Which::Early, 1.0), (Which::Late, Which::Late, 1.0), (Which::Early, Which::Late, 0.0)] {
                ortho = ortho.max((overlap(i, j, &p, &pulse).unwrap() - want).norm());
            }
        }
    }
    ok &= ortho <= ORTHONORMAL_ABS;
    parts.push(format!("orthonormality {ortho:.1e}"));

    let mut reality: f64 = 0.0;
    let mut closed: f64 = 0.0;
    for c in [0.1, 3.0, 30.0] {
        for delta in [0.0, -0.2, -0.9] {
            let q = SystemParams::baseline().with_cq(c);
            let q = q.with_delta(delta * q.kappa);
            for w in [0.3, 0.999, 1.0, 1.7, 25.0] {
                let w = w * q.omega_m;
                let a = transfer_detuned(w, &q).unwrap();
                let b = transfer_detuned(-w, &q).unwrap();
                for i in 0..2 {
                    for j in 0..4 {
                        reality = reality.max((a.m[i][j].conj() - b.m[i][j]).norm() / a.m[i][j].norm().max(1.0));
                    }
                }
                if delta == 0.0 {
                    let (s, xo, xm) = (refl_phase(w, &q), chi_opt(w, &q), chi_m(w, &q));
                    let want = [
                        (a.m[0][0], s),
                        (a.m[1][1], s),
                        (a.m[1][0], 4.0 * q.g * q.g * xo * xo * xm),
                        (a.m[1][2], -2.0 * q.g * (2.0 * q.gamma_m).sqrt() * xo * xm),
                    ];
                    for (got, w) in want {
                        closed = closed.max((got - w).norm() / w.norm());
                    }
                }
            }
        }
    }
    ok &= reality <= 1e-12 && closed <= CLOSED_FORM_REL;
    parts.push(format!("transfer reality {reality:.1e}; resonant closed form {closed:.1e}"));

    let s = local_symplectic(0.3, 0.2, -1.1, -0.4) * two_mode_squeezer(0.7) * beam_splitter(0.5);
    let cov = CovarianceMatrix4::new(s * CovarianceMatrix4::thermal(1.5).matrix() * s.transpose());
    let inv = cov.partial_transpose().partial_transpose() == cov;
    ok &= inv;
    parts.push(format!("partial-transpose involution {inv}"));

    let sweep = [
        "sweep", "--axis", "c_q", "--range", "0.01,100,7", "--spacing", "log", "--methods", "closed_form,exact",
        "--no-timestamp",
    ];
    let mc = [
        "montecarlo", "--omega-m-hz", "0.15915494309189535", "--kappa-over-omega-m", "4", "--q-factor", "20",
        "--n-th", "5", "--c-q", "1", "--n-traj", "200", "--seed", "9", "--no-timestamp",
    ];
    let det = cli_output(&sweep) == cli_output(&sweep) && cli_output(&mc) == cli_output(&mc);
    ok &= det;
    parts.push(format!("CLI byte-identical reruns {det}"));
    outcome(ok, parts.join("; "))
}

fn main() {
    let mut notes = Vec::new();
    type Check<'a> = Box<dyn FnOnce() -> Outcome + 'a>;
    let mut checks: Vec<(&str, Check)> = vec![
        ("main result at low cooperativity", Box::new(main_result)),
        ("optimal bandwidth", Box::new(optimal_bandwidth)),
        ("detection-loss law", Box::new(loss_law)),
        ("high-cooperativity breakdown and witness", Box::new(breakdown_and_witness)),
        ("entanglement at c_q = 0.1", Box::new(low_cooperativity)),
    ];
    checks.push(("detuning", Box::new(|| detuning(&mut notes))));
    checks.extend::<Vec<(&str, Check)>>(vec![
        ("evaluator triangle", Box::new(evaluator_triangle)),
        ("Gaussian diagnostics oracles", Box::new(gaussian_oracles)),
        ("shot-noise sensitivity", Box::new(shot_noise)),
        ("property suites", Box::new(property_suites)),
    ]);
    let mut failed = 0;
    for (k, (name, check)) in checks.into_iter().enumerate() {
        let t = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {} [{:.1}s]",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    for n in notes {
        println!("note: {n}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
