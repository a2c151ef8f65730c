//! The subcommands. Each one computes its results, then writes every output
//! file from a single thread so the bytes depend only on config and seed.

use std::fmt::Write as _;
use std::path::Path;

use kfp_core::analysis::{
    convergence_study, envelope_check, l2_error, linf_error, nested_domain_study, poincare_check, LevelError,
    GAUSSIAN_L1, GAUSSIAN_LINF,
};
use kfp_core::analytic::{exact_solution, kernel_lq_norm, kernel_lq_norm_quadrature};
use kfp_core::mesh::{Formulation, TriMesh};
use kfp_core::solvers::{run, RunConfig, Trajectory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{config_to_string, parse_reals, Command, Invocation};
use crate::output::{errors_csv, format_real, norms_csv, write_atomic, write_grids};
use crate::CliError;

/// The initial data used by every command: `exp(-v^2 - x^2)`.
pub fn gaussian(v: f64, x: f64) -> f64 {
    (-v * v - x * x).exp()
}

pub fn execute(inv: &Invocation) -> Result<(), CliError> {
    let dir = inv.out_dir();
    let cfg = &inv.config;
    match &inv.command {
        Command::Run => run_command(&dir, cfg),
        Command::Convergence { levels } => convergence_command(&dir, cfg, &parse_reals("levels", levels)?),
        Command::Compare => compare_command(&dir, cfg),
        Command::Norms => norms_command(&dir, cfg),
        Command::KernelCheck => kernel_check_command(&dir, cfg),
        Command::PoincareCheck { trials, t_grid } => {
            poincare_command(&dir, cfg, *trials, &parse_reals("t-grid", t_grid)?)
        }
        Command::NestedDomains { scales, inner, h } => {
            nested_command(&dir, cfg, &parse_reals("scales", scales)?, *inner, *h)
        }
    }
}

fn pass_fail(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn report_header(title: &str, cfg: &RunConfig) -> String {
    let mut s = format!("{title}\n\n[config]\n");
    s.push_str(&config_to_string(cfg));
    s.push('\n');
    s
}

fn finish_report(dir: &Path, report: &str) -> Result<(), CliError> {
    write_atomic(&dir.join("report.txt"), report)?;
    print!("{report}");
    Ok(())
}

/// Errors of the final state of `traj` against the closed-form solution
/// from the Gaussian initial data.
pub fn final_errors(cfg: &RunConfig, traj: &Trajectory) -> Result<LevelError, CliError> {
    let last = traj.last();
    let (form, time) = (last.form, last.time);
    let exact = move |a: f64, b: f64| exact_solution(form, time, a, b);
    Ok(LevelError {
        h: cfg.domain.width_v() / cfg.n as f64,
        n: cfg.n,
        dt: cfg.dt,
        time,
        l2_error: l2_error(last, &exact)?,
        linf_error: linf_error(last, &exact),
        order: None,
    })
}

/// Writes `norms.csv`, a one-row `errors.csv` and, when snapshots are
/// enabled, the `.grid` files of `traj`. Returns the final errors.
pub fn emit_run(dir: &Path, cfg: &RunConfig, traj: &Trajectory) -> Result<LevelError, CliError> {
    let errors = final_errors(cfg, traj)?;
    write_atomic(&dir.join("norms.csv"), &norms_csv(&traj.norms))?;
    write_atomic(&dir.join("errors.csv"), &errors_csv(std::slice::from_ref(&errors)))?;
    if cfg.snapshot_stride > 0 {
        write_grids(dir, &traj.snapshots)?;
    }
    Ok(errors)
}

fn run_summary(s: &mut String, traj: &Trajectory, errors: &LevelError) {
    let _ = writeln!(s, "steps = {}", traj.steps);
    let _ = writeln!(s, "final time = {}", format_real(errors.time));
    let _ = writeln!(s, "solver iterations = {}", traj.solver_iterations);
    let _ = writeln!(s, "l2 error = {}", format_real(errors.l2_error));
    let _ = writeln!(s, "linf error = {}", format_real(errors.linf_error));
    for w in &traj.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
}

fn run_command(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let traj = run(cfg, &gaussian)?;
    let errors = emit_run(dir, cfg, &traj)?;
    let mut report = report_header(&format!("run ({})", cfg.form), cfg);
    run_summary(&mut report, &traj, &errors);
    finish_report(dir, &report)
}

fn convergence_command(dir: &Path, cfg: &RunConfig, hs: &[f64]) -> Result<(), CliError> {
    let s_end = cfg.horizon.ln_1p();
    let study = convergence_study(cfg, hs, s_end)?;
    write_atomic(&dir.join("errors.csv"), &errors_csv(&study.levels))?;
    let mut report = report_header("self-similar mesh convergence", cfg);
    let _ = writeln!(report, "s_end = {}", format_real(s_end));
    let _ = writeln!(
        report,
        "fit: error = {} * h^{}",
        format_real(study.fit.coefficient),
        format_real(study.fit.exponent)
    );
    let _ = writeln!(report, "fit residual = {}", format_real(study.fit.residual));
    finish_report(dir, &report)
}

fn compare_command(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let mut report = report_header("final errors of the three formulations", cfg);
    for form in Formulation::ALL {
        let run_cfg = RunConfig { form, ..cfg.clone() };
        let traj = run(&run_cfg, &gaussian)?;
        let errors = final_errors(&run_cfg, &traj)?;
        let _ = writeln!(report, "[{form}]");
        run_summary(&mut report, &traj, &errors);
        report.push('\n');
        rows.push((form, errors));
    }
    let mut table = String::from("form,time,l2_error,linf_error\n");
    for (form, e) in &rows {
        let _ = writeln!(
            table,
            "{form},{},{},{}",
            format_real(e.time),
            format_real(e.l2_error),
            format_real(e.linf_error)
        );
    }
    let levels: Vec<LevelError> = rows.into_iter().map(|(_, e)| e).collect();
    write_atomic(&dir.join("errors.csv"), &errors_csv(&levels))?;
    write_atomic(&dir.join("compare.csv"), &table)?;
    finish_report(dir, &report)
}

fn norms_command(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let traj = run(cfg, &gaussian)?;
    let errors = emit_run(dir, cfg, &traj)?;
    let mut report = report_header(&format!("norm time series ({})", cfg.form), cfg);
    run_summary(&mut report, &traj, &errors);

    let linf: Vec<f64> = traj.norms.iter().map(|r| r.linf).collect();
    let (peak_at, peak) = linf
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, x)| if x > acc.1 { (k, x) } else { acc });
    let interior_peak = peak > linf[0] && peak > linf[linf.len() - 1];
    let _ = writeln!(
        report,
        "linf peak = {} at time {}",
        format_real(peak),
        format_real(traj.norms[peak_at].time)
    );
    let _ = writeln!(report, "interior linf maximum: {}", pass_fail(interior_peak));
    if cfg.form == Formulation::SelfSimilar {
        let ok = envelope_check(&traj.norms, GAUSSIAN_L1, GAUSSIAN_LINF);
        let _ = writeln!(report, "linf envelope (5% slack): {}", pass_fail(ok));
    }
    finish_report(dir, &report)
}

fn kernel_check_command(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let mut table = String::from("t,q,closed_form,quadrature,relative_difference\n");
    let mut worst: f64 = 0.0;
    for t in [0.5, 1.0, 2.0] {
        for q in [1.0, 2.0, 3.0, f64::INFINITY] {
            let closed = kernel_lq_norm(t, q)?;
            let quad = kernel_lq_norm_quadrature(t, q)?;
            let rel = (quad - closed).abs() / closed;
            worst = worst.max(rel);
            let _ = writeln!(
                table,
                "{},{},{},{},{}",
                format_real(t),
                format_real(q),
                format_real(closed),
                format_real(quad),
                format_real(rel)
            );
        }
    }
    write_atomic(&dir.join("kernel.csv"), &table)?;
    let mut report = report_header("kernel L^q norms: closed form against quadrature", cfg);
    let _ = writeln!(report, "worst relative difference = {}", format_real(worst));
    let _ = writeln!(report, "agreement to 1e-6: {}", pass_fail(worst <= 1e-6));
    finish_report(dir, &report)
}

fn poincare_command(dir: &Path, cfg: &RunConfig, trials: usize, ts: &[f64]) -> Result<(), CliError> {
    let mesh = TriMesh::structured(cfg.domain, cfg.n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut table = String::from("t,worst_ratio\n");
    let mut worst: f64 = 0.0;
    for &t in ts {
        let r = poincare_check(&mesh, t, trials, &mut rng)?;
        worst = worst.max(r);
        let _ = writeln!(table, "{},{}", format_real(t), format_real(r));
    }
    write_atomic(&dir.join("poincare.csv"), &table)?;
    let mut report = report_header("directional Poincare inequality", cfg);
    let _ = writeln!(report, "trials per time = {trials}");
    let _ = writeln!(report, "worst ratio = {}", format_real(worst));
    let _ = writeln!(report, "ratio <= 1: {}", pass_fail(worst <= 1.0));
    finish_report(dir, &report)
}

fn nested_command(dir: &Path, cfg: &RunConfig, scales: &[f64], inner: f64, h: f64) -> Result<(), CliError> {
    let study = nested_domain_study(cfg, scales, inner, h)?;
    let mut table = String::from("scale_a,scale_b,l2_discrepancy\n");
    for (a, b, d) in &study.discrepancies {
        let _ = writeln!(table, "{},{},{}", format_real(*a), format_real(*b), format_real(*d));
    }
    write_atomic(&dir.join("nested.csv"), &table)?;
    let mut report = report_header("nested-domain study", cfg);
    let _ = writeln!(report, "inner half-width = {}", format_real(inner));
    let _ = writeln!(report, "element size = {}", format_real(h));
    for w in &study.warnings {
        let _ = writeln!(report, "warning: {w}");
    }
    let _ = writeln!(report, "strictly decreasing: {}", pass_fail(study.strictly_decreasing()));
    finish_report(dir, &report)
}
