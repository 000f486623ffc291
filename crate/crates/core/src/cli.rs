//! Command-line front end: one subcommand per experiment, each reading a
//! [`RunConfig`] and writing CSV tables and JSON reports into `--out`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::blowup::{analyze_run, conservative_bounds, AnalysisOptions, Scenario};
use crate::config::RunConfig;
use crate::dynamics::{Controls, Model, Run, RunStatus};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::lagrangian::{
    characteristics_of, density_residuals, eulerian_force_at_labels, integral_identities, tilde_f,
    verify_density_invariant,
};
use crate::littlewood_paley::{block_norms, block_weight, besov_norm, sobolev_norm, DyadicPartition};
use crate::picard::{picard_iterate, uniform_bound_check, PicardSettings};

/// Exit status for a run stopped by the slope threshold.
pub const EXIT_BLOWUP: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bfamily", version, about = "Two-component b-family experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Suppress progress messages on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve the system and write fields and diagnostics.
    Simulate(CommonArgs),
    /// Run the successive-approximation scheme and tabulate its gaps.
    Picard(CommonArgs),
    /// Track characteristics along a simulated run.
    Characteristics(CommonArgs),
    /// Littlewood-Paley block norms and the Besov norm of one field.
    Besov(CommonArgs),
    /// Wave-breaking criterion, Riccati bound and slope trace.
    Blowup(CommonArgs),
}

impl Command {
    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a)
            | Command::Picard(a)
            | Command::Characteristics(a)
            | Command::Besov(a)
            | Command::Blowup(a) => a,
        }
    }
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let args = cli.command.common();
    let result = RunConfig::load(&args.config).and_then(|cfg| {
        fs::create_dir_all(&args.out)?;
        match &cli.command {
            Command::Simulate(a) => cmd_simulate(&cfg, &a.out, a.quiet),
            Command::Picard(a) => cmd_picard(&cfg, &a.out, a.quiet),
            Command::Characteristics(a) => cmd_characteristics(&cfg, &a.out, a.quiet),
            Command::Besov(a) => cmd_besov(&cfg, &a.out, a.quiet),
            Command::Blowup(a) => cmd_blowup(&cfg, &a.out, a.quiet),
        }
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Seventeen significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn note(quiet: bool, msg: &str) {
    if !quiet {
        eprintln!("{msg}");
    }
}

fn simulate_from(cfg: &RunConfig, controls: &Controls) -> Result<(Grid, Model, Run)> {
    let grid = cfg.grid()?;
    let params = cfg.resolved_params()?;
    let model = Model::new(&grid, params);
    let init = cfg.initial_state(&grid)?;
    let run = model.simulate(&init, cfg.time.t_end, controls)?;
    Ok((grid, model, run))
}

fn status_code(status: &RunStatus) -> i32 {
    match status {
        RunStatus::Completed => 0,
        RunStatus::BlowupThreshold { .. } => EXIT_BLOWUP,
        RunStatus::NumericalFailure { .. } => 1,
    }
}

fn field_rows(grid: &Grid, u: &Field, rho: &Field) -> Vec<Vec<String>> {
    let ux = u.derivative();
    (0..grid.n())
        .map(|i| {
            vec![
                fmt_num(grid.node(i)),
                fmt_num(u.values()[i]),
                fmt_num(rho.values()[i]),
                fmt_num(ux.values()[i]),
            ]
        })
        .collect()
}

/// `simulate`: `fields_<index>.csv`, `diagnostics.csv`, `report.json`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path, quiet: bool) -> Result<i32> {
    let clock = Instant::now();
    let (grid, _, run) = simulate_from(cfg, &cfg.controls())?;
    let traj = &run.trajectory;
    for (idx, (u, rho)) in traj.u.values().iter().zip(traj.rho.values()).enumerate() {
        write_table(
            &out.join(format!("fields_{idx}.csv")),
            &["x", "u", "rho", "ux"],
            field_rows(&grid, u, rho),
        )?;
    }
    write_table(
        &out.join("diagnostics.csv"),
        &["t", "E1", "E2", "mass", "min_ux", "max_ux", "u_inf"],
        run.diagnostics.iter().map(|d| {
            [d.t, d.e1, d.e2, d.mass, d.min_ux, d.max_ux, d.u_inf]
                .iter()
                .map(|v| fmt_num(*v))
                .collect()
        }),
    )?;
    let report = json!({
        "status": run.status,
        "steps": run.steps,
        "snapshots": traj.len(),
        "snapshot_times": traj.times(),
        "wall_time_s": clock.elapsed().as_secs_f64(),
        "config": cfg,
    });
    write_json(&out.join("report.json"), &report)?;
    note(quiet, &format!("simulate: {:?} after {} steps", run.status, run.steps));
    Ok(status_code(&run.status))
}

/// `picard`: `picard.csv` (one row per iterate) and `picard_report.json`.
pub fn cmd_picard(cfg: &RunConfig, out: &Path, quiet: bool) -> Result<i32> {
    let clock = Instant::now();
    let grid = cfg.grid()?;
    let params = cfg.resolved_params()?;
    let init = cfg.initial_state(&grid)?;
    let spec = cfg.besov_spec()?;
    let settings = PicardSettings {
        n_max: cfg.picard.n_max,
        t_end: cfg.time.t_end,
        cfl_safety: cfg.time.cfl_safety,
        p: spec.p,
        r: spec.r,
    };
    let run = picard_iterate(&init.u, &init.rho, params, settings)?;
    let bound = uniform_bound_check(&run, &init.u, &init.rho)?;
    write_table(
        &out.join("picard.csv"),
        &["n", "gap_u", "gap_rho", "gap_sup", "max_norm"],
        run.records.iter().map(|r| {
            vec![
                r.n.to_string(),
                fmt_num(r.gap_u),
                fmt_num(r.gap_rho),
                fmt_num(r.gap_sup),
                fmt_num(r.norms.iter().copied().fold(0.0, f64::max)),
            ]
        }),
    )?;
    let report = json!({
        "outcome": run.outcome,
        "settings": run.settings,
        "mesh_steps": run.times.len() - 1,
        "bound": {
            "initial_norm": bound.initial_norm,
            "fitted_c": bound.fitted_c,
            "holds": bound.holds,
            "finite": bound.finite,
            "late_growth": bound.late_growth,
        },
        "wall_time_s": clock.elapsed().as_secs_f64(),
        "config": cfg,
    });
    write_json(&out.join("picard_report.json"), &report)?;
    note(quiet, &format!("picard: {} iterates, {:?}", run.records.len(), run.outcome));
    Ok(0)
}

/// `characteristics`: `characteristics.csv` and `characteristics_report.json`.
///
/// The flow is integrated against every solver step; rows are written for
/// every `sample_every`-th step.
pub fn cmd_characteristics(cfg: &RunConfig, out: &Path, quiet: bool) -> Result<i32> {
    let clock = Instant::now();
    let controls = Controls {
        sample_every: 1,
        ..cfg.controls()
    };
    let (_, model, run) = simulate_from(cfg, &controls)?;
    let params = model.params();
    let traj = &run.trajectory;
    let ens = characteristics_of(traj, params.k3, cfg.characteristics.substeps)?;
    let residuals = density_residuals(&ens, traj.rho.value(0));
    let invariant = verify_density_invariant(&ens, traj.rho.value(0));
    let identities = integral_identities(&ens);

    let every = cfg.time.sample_every;
    let last = ens.len() - 1;
    let mut rows = Vec::new();
    for k in (0..ens.len()).filter(|&k| k % every == 0 || k == last) {
        for j in 0..ens.labels() {
            rows.push(vec![
                fmt_num(ens.times[k]),
                fmt_num(ens.xi[j]),
                fmt_num(ens.y[k][j]),
                fmt_num(ens.y_xi[k][j]),
                fmt_num(ens.u[k][j]),
                fmt_num(ens.v[k][j]),
                fmt_num(residuals[k][j]),
            ]);
        }
    }
    write_table(
        &out.join("characteristics.csv"),
        &["t", "xi", "y", "y_xi", "U", "V", "invariant_error"],
        rows,
    )?;

    let force_check = if params.k3 == 1.0 {
        let f = tilde_f(&ens, last, &params)?;
        let eul = eulerian_force_at_labels(
            &ens,
            last,
            &model.force(traj.u.value(last), traj.rho.value(last)),
        );
        Some(f.iter().zip(&eul).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    } else {
        None
    };
    let report = json!({
        "status": run.status,
        "invariant_max_error": invariant.max_error,
        "jacobian_route_gap": ens.jacobian_route_gap(),
        "min_jacobian": ens.min_jacobian(),
        "labels_ordered": ens.labels_ordered(),
        "integral_identities": identities,
        "lagrangian_force_vs_eulerian": force_check,
        "wall_time_s": clock.elapsed().as_secs_f64(),
        "config": cfg,
    });
    write_json(&out.join("characteristics_report.json"), &report)?;
    note(quiet, &format!("characteristics: invariant error {:.3e}", invariant.max_error));
    Ok(0)
}

fn read_field_csv(path: &Path, column: &str, grid: &Grid) -> Result<Field> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::Config(format!("{} has no column `{column}`", path.display())))?;
    let xcol = headers.iter().position(|h| h == "x");
    let mut values = Vec::with_capacity(grid.n());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Config(format!("bad number in row {} of {}", i + 1, path.display())))
        };
        if let Some(xc) = xcol {
            if i < grid.n() && (parse(xc)? - grid.node(i)).abs() > 1e-9 * grid.length() {
                return Err(Error::Config(format!("row {} of {} is off the grid", i + 1, path.display())));
            }
        }
        values.push(parse(col)?);
    }
    if values.len() != grid.n() {
        return Err(Error::Config(format!(
            "{} has {} rows, the grid has {} nodes",
            path.display(),
            values.len(),
            grid.n()
        )));
    }
    Field::new(grid, values)
}

/// `besov`: `besov.json`, also printed on stdout.
pub fn cmd_besov(cfg: &RunConfig, out: &Path, quiet: bool) -> Result<i32> {
    let grid = cfg.grid()?;
    let spec = cfg.besov_spec()?;
    let field = match &cfg.besov.field {
        Some(path) => read_field_csv(path, cfg.besov.column.as_deref().unwrap_or("u"), &grid)?,
        None => cfg.init.u.sample(&grid)?,
    };
    let part = DyadicPartition::new(&grid);
    let blocks: Vec<_> = block_norms(&field, spec.p, &part)
        .into_iter()
        .enumerate()
        .map(|(idx, norm)| {
            let j = idx as i32 - 1;
            json!({ "j": j, "lp_norm": norm, "weighted": block_weight(j, spec.s) * norm })
        })
        .collect();
    let report = json!({
        "s": spec.s,
        "p": if spec.p.is_infinite() { json!("inf") } else { json!(spec.p) },
        "r": if spec.r.is_infinite() { json!("inf") } else { json!(spec.r) },
        "j_max": part.j_max(),
        "besov_norm": besov_norm(&field, spec, &part),
        "sobolev_norm": sobolev_norm(&field, spec.s),
        "unity_residual": part.unity_residual(),
        "blocks": blocks,
    });
    write_json(&out.join("besov.json"), &report)?;
    // a closed stdout (e.g. piped into `head`) is not an error for the run
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&report)?);
    note(quiet, "besov: done");
    Ok(0)
}

/// `blowup`: `blowup_report.json` and `m_trace.csv` with Riccati overlays.
pub fn cmd_blowup(cfg: &RunConfig, out: &Path, quiet: bool) -> Result<i32> {
    let clock = Instant::now();
    let (_, model, run) = simulate_from(cfg, &cfg.controls())?;
    let params = model.params();
    let opts = AnalysisOptions {
        n: cfg.monitors.energy_n,
        b_form: cfg.monitors.b_form,
        m_bound: cfg.monitors.m_bound,
    };
    let report = analyze_run(&run, &params, opts)?;
    let bounds = conservative_bounds(&run.trajectory, opts.n)?;
    let (inf_cmp, sup_cmp) = report.overlays();
    write_table(
        &out.join("m_trace.csv"),
        &[
            "t",
            "m",
            "x_min",
            "sup_ux",
            "x_max",
            "u_inf",
            "dm_dt",
            "riccati_rhs",
            "riccati_from_m0",
            "riccati_from_sup0",
        ],
        report.m_trace.iter().map(|s| {
            [
                s.t,
                s.m,
                s.x_min,
                s.sup,
                s.x_max,
                s.u_inf,
                s.dm_dt,
                s.riccati_rhs,
                inf_cmp.eval(s.t),
                sup_cmp.eval(s.t),
            ]
            .iter()
            .map(|v| fmt_num(*v))
            .collect()
        }),
    )?;
    let body = json!({
        "n": report.n,
        "E_n0": report.e_n0,
        "M": report.m,
        "M_measured": report.m_measured,
        "rho0_L1": report.rho0_l1,
        "b_form": report.b_form,
        "B": report.b,
        "criterion_met": report.criterion.met,
        "criterion": report.criterion,
        "m0": report.m0,
        "sup0": report.sup0,
        "T0_bound": report.t0_bound,
        "T0_bound_sup": report.t0_bound_sup,
        "observed": report.observed,
        "scenario": report.scenario,
        "discrepancy": report.discrepancy,
        "run_status": run.status,
        "conservative_bounds": bounds,
        "wall_time_s": clock.elapsed().as_secs_f64(),
        "config": cfg,
    });
    write_json(&out.join("blowup_report.json"), &body)?;
    let summary = match &report.scenario {
        Scenario::ThresholdCrossed { side, t } => format!("threshold crossed ({side:?}) at t = {t:.6e}"),
        Scenario::NoCrossing { t_end } => format!("no crossing up to t = {t_end:.6e}"),
        Scenario::NumericalFailure { t } => format!("numerical failure at t = {t:.6e}"),
    };
    note(quiet, &format!("blowup: B = {:.6e}, {summary}", report.b));
    if let Some(d) = &report.discrepancy {
        note(quiet, d);
    }
    Ok(status_code(&run.status))
}
