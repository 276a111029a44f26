//! `tentflow` — command-line harness for the spectral laboratory.

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tentflow_cli::config::{ExperimentConfig, OutputFormat};
use tentflow_cli::emit;
use tentflow_cli::experiments::run_experiment;

use tentflow::bilinear::{
    desimon_check, maxreg_tent_check, pointwise_bound_check, r_tent_check, schur_check,
    z_tent_check,
};
use tentflow::corpus::{generate_field_with_spectrum, space_time_vector, FieldKind, TimeProfile};
use tentflow::field::FieldData;
use tentflow::geom::Ball;
use tentflow::probes::{offdiag_probe, oseen_kernel_check, OpFamily};
use tentflow::solver::{
    besov_norm, bmo_minus1_norm, caloric_extend, div_residual, picard_solve, residual,
    smallness_search, SolverStatus,
};
use tentflow::tent::x_norm;

#[derive(Parser)]
#[command(
    name = "tentflow",
    version,
    about = "Deterministic verification harness for the periodic mild-solution laboratory"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Overrides {
    /// Configuration file: flat `key = value` lines
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Grid points per axis (power of two)
    #[arg(long, global = true, value_name = "N")]
    grid_size: Option<usize>,
    /// Spatial dimension (2 or 3)
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Box side length
    #[arg(long = "box", global = true, value_name = "L")]
    box_len: Option<f64>,
    /// Base random seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when omitted)
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Output format
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one named verification experiment; exits 0 iff every check passes
    Verify {
        /// Experiment name (an unknown name lists the available ones)
        experiment: String,
    },
    /// Report the critical and solution-space norms of a velocity field
    Norms {
        /// Field kind: random, taylor-green, gradient, solenoidal
        #[arg(long, default_value = "solenoidal")]
        kind: String,
    },
    /// Decompose a space-time corpus field into atoms
    Decompose,
    /// Run the fixed-point solver; exits 0 iff the iteration converges
    Solve {
        /// Field kind for the initial data direction
        #[arg(long, default_value = "solenoidal")]
        kind: String,
        /// Data amplitude in units of the critical norm
        #[arg(long)]
        amplitude: Option<f64>,
        /// Bisect for the largest converging amplitude instead of solving once
        #[arg(long)]
        search: bool,
    },
    /// Run one operator probe and print its report
    Probe {
        /// One of: contraction, maximal-regularity, scale-adapted, tail,
        /// pointwise, schur, offdiag, oseen
        op: String,
    },
}

fn assemble_config(overrides: &Overrides) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &overrides.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(n) = overrides.grid_size {
        cfg.grid_size = n;
    }
    if let Some(d) = overrides.dim {
        cfg.dim = d;
    }
    if let Some(l) = overrides.box_len {
        cfg.box_len = l;
    }
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if let Some(o) = &overrides.out {
        cfg.out = Some(o.clone());
    }
    if let Some(f) = overrides.format {
        cfg.format = f;
    }
    Ok(cfg)
}

/// Flatten a JSON document into `metric,value` rows (arrays by index,
/// objects by dotted path), for the CSV rendering of non-experiment output.
fn flatten_json(prefix: &str, value: &serde_json::Value, rows: &mut Vec<(String, String)>) {
    match value {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_json(&key, v, rows);
            }
        }
        serde_json::Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten_json(&format!("{prefix}.{i}"), v, rows);
            }
        }
        leaf => rows.push((prefix.to_string(), leaf.to_string())),
    }
}

/// Print or write a serializable document in the configured format.
fn emit_document<T: Serialize>(doc: &T, out: Option<&Path>, format: OutputFormat) -> anyhow::Result<()> {
    let text = match format {
        OutputFormat::Json => serde_json::to_string_pretty(doc)? + "\n",
        OutputFormat::Csv => {
            let value = serde_json::to_value(doc)?;
            let mut rows = Vec::new();
            flatten_json("", &value, &mut rows);
            let mut s = String::from("metric,value\n");
            for (k, v) in rows {
                s.push_str(&format!("{k},{v}\n"));
            }
            s
        }
    };
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_kind(kind: &str) -> anyhow::Result<FieldKind> {
    kind.parse::<FieldKind>().map_err(|e| anyhow!(e))
}

fn cmd_verify(cfg: &ExperimentConfig, experiment: &str) -> anyhow::Result<bool> {
    let report = run_experiment(experiment, cfg)?;
    let verdict = if report.overall_pass { "PASS" } else { "FAIL" };
    eprintln!(
        "{experiment}: {verdict} ({} checks, {} failing)",
        report.checks.len(),
        report.checks.iter().filter(|c| !c.pass).count()
    );
    emit::emit(&report, cfg.out.as_deref(), cfg.format)?;
    Ok(report.overall_pass)
}

#[derive(Serialize)]
struct NormsOut {
    kind: String,
    seed: u64,
    l2: f64,
    divergence_residual: f64,
    bmo_minus1: f64,
    besov: f64,
    caloric_x_norm: f64,
}

fn cmd_norms(cfg: &ExperimentConfig, kind: &str) -> anyhow::Result<()> {
    let grid = cfg.grid()?;
    let u0 = generate_field_with_spectrum(
        &grid,
        parse_kind(kind)?,
        cfg.seed,
        cfg.spectrum(grid.dim()),
    );
    let times = cfg.times(&grid);
    let family = cfg.family(&grid);
    let ext = caloric_extend(&u0, &times)?;
    let doc = NormsOut {
        kind: kind.to_string(),
        seed: cfg.seed,
        l2: u0.l2_norm(),
        divergence_residual: div_residual(&u0),
        bmo_minus1: bmo_minus1_norm(&u0, &times, &family)?,
        besov: besov_norm(&u0, &times)?,
        caloric_x_norm: x_norm(&ext, &family)?,
    };
    emit_document(&doc, cfg.out.as_deref(), cfg.format)
}

#[derive(Serialize)]
struct DecomposeOut {
    seed: u64,
    atom_count: usize,
    levels_used: usize,
    fallback_used: bool,
    lambda_sum: f64,
    snorm_l1: f64,
    lambda_ratio: Option<f64>,
    measure_ratio_min: Option<f64>,
    reconstruction_error: f64,
    atoms: Vec<tentflow::atoms::AtomSummary>,
}

fn cmd_decompose(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let grid = cfg.grid()?;
    let times = cfg.times(&grid);
    let g = space_time_vector(&grid, &times, TimeProfile::InverseSqrt, cfg.seed)?;
    let d = tentflow::atoms::atomic_decompose(&g, cfg.gamma, cfg.level_cap)?;
    let w = tentflow::quad::TimeQuadrature::from_times(&times).full_weights();
    let rec_err = tentflow::bilinear::st_l2(&d.reconstruct()?.sub(&g), &w)
        / tentflow::bilinear::st_l2(&g, &w);
    let doc = DecomposeOut {
        seed: cfg.seed,
        atom_count: d.atoms.len(),
        levels_used: d.levels_used,
        fallback_used: d.fallback_used,
        lambda_sum: d.lambda_sum,
        snorm_l1: d.snorm_l1,
        lambda_ratio: d.lambda_ratio(),
        measure_ratio_min: d.measure_ratio_min,
        reconstruction_error: rec_err,
        atoms: d.summary(),
    };
    emit_document(&doc, cfg.out.as_deref(), cfg.format)
}

#[derive(Serialize)]
struct SolveOut {
    kind: String,
    seed: u64,
    amplitude: f64,
    status: SolverStatus,
    iterations: usize,
    tail_contraction: Option<f64>,
    update_residuals: Vec<f64>,
    fixed_point_residual: f64,
    x_norm: f64,
}

#[derive(Serialize)]
struct SearchOut {
    kind: String,
    seed: u64,
    smallness_threshold: f64,
}

fn cmd_solve(
    cfg: &ExperimentConfig,
    kind: &str,
    amplitude: Option<f64>,
    search: bool,
) -> anyhow::Result<bool> {
    let grid = cfg.grid()?;
    let scfg = cfg.solver_config(&grid)?;
    let direction = generate_field_with_spectrum(
        &grid,
        parse_kind(kind)?,
        cfg.seed,
        cfg.spectrum(grid.dim()),
    );
    if search {
        let eps = smallness_search(&direction, &scfg)?;
        let doc = SearchOut {
            kind: kind.to_string(),
            seed: cfg.seed,
            smallness_threshold: eps,
        };
        emit_document(&doc, cfg.out.as_deref(), cfg.format)?;
        return Ok(true);
    }
    let amplitude = amplitude.unwrap_or(cfg.amplitude);
    let b = bmo_minus1_norm(&direction, &scfg.times, &scfg.family)?;
    if !(b > 0.0) {
        bail!("direction field has zero critical norm; pick another kind or seed");
    }
    let u0 = direction.scaled(amplitude / b);
    let (u, trace) = picard_solve(&u0, &scfg)?;
    let doc = SolveOut {
        kind: kind.to_string(),
        seed: cfg.seed,
        amplitude,
        status: trace.status,
        iterations: trace.residuals.len(),
        tail_contraction: trace.tail_contraction(),
        update_residuals: trace.residuals.clone(),
        fixed_point_residual: residual(&u, &u0, &scfg)?,
        x_norm: x_norm(&u, &scfg.family)?,
    };
    let converged = trace.status == SolverStatus::Converged;
    eprintln!(
        "solve: {} after {} iterations",
        if converged { "converged" } else { "did not converge" },
        doc.iterations
    );
    emit_document(&doc, cfg.out.as_deref(), cfg.format)?;
    Ok(converged)
}

fn cmd_probe(cfg: &ExperimentConfig, op: &str) -> anyhow::Result<()> {
    let grid = cfg.grid()?;
    let family = cfg.family(&grid);
    let pc = cfg.probe_config()?;
    let doc: serde_json::Value = match op {
        "contraction" => serde_json::to_value(desimon_check(&grid, &pc)?)?,
        "maximal-regularity" => serde_json::to_value(maxreg_tent_check(&grid, &pc, &family)?)?,
        "scale-adapted" => serde_json::to_value(z_tent_check(&grid, &pc, &family)?)?,
        "tail" => serde_json::to_value(r_tent_check(&grid, &pc, &family)?)?,
        "pointwise" => serde_json::to_value(pointwise_bound_check(&grid, &pc, &family)?)?,
        "schur" => serde_json::to_value(schur_check(&grid, cfg.samples_per_octave, cfg.beta)?)?,
        "offdiag" => {
            let h = grid.spacing();
            let e = Ball { center: vec![0; grid.dim()], radius: 3.0 * h };
            let f = Ball { center: vec![grid.size() / 2; grid.dim()], radius: 3.0 * h };
            let d = grid.torus_dist(&e.center, &f.center);
            let times: Vec<f64> = (0..=4).map(|i| d * d / (4.0 * 2f64.powi(i))).collect();
            serde_json::to_value(offdiag_probe(
                grid,
                &e,
                &f,
                &times,
                OpFamily::LaplaceHeat,
                4,
                cfg.seed,
            )?)?
        }
        "oseen" => {
            let t = (4.0 * grid.spacing()).powi(2);
            let n = grid.size();
            let points: Vec<Vec<usize>> = (1..=6)
                .map(|i| {
                    let mut p = vec![0; grid.dim()];
                    p[0] = (i * n / 16) % n;
                    p
                })
                .collect();
            serde_json::to_value(oseen_kernel_check(grid, t, &points)?)?
        }
        other => bail!(
            "unknown probe '{other}'; available: contraction, maximal-regularity, \
             scale-adapted, tail, pointwise, schur, offdiag, oseen"
        ),
    };
    emit_document(&doc, cfg.out.as_deref(), cfg.format)
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let cfg = assemble_config(&cli.overrides)?;
    match &cli.cmd {
        Cmd::Verify { experiment } => cmd_verify(&cfg, experiment),
        Cmd::Norms { kind } => cmd_norms(&cfg, kind).map(|()| true),
        Cmd::Decompose => cmd_decompose(&cfg).map(|()| true),
        Cmd::Solve { kind, amplitude, search } => cmd_solve(&cfg, kind, *amplitude, *search),
        Cmd::Probe { op } => cmd_probe(&cfg, op).map(|()| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_take_precedence() {
        let o = Overrides {
            config: None,
            grid_size: Some(16),
            dim: Some(3),
            box_len: Some(1.0),
            seed: Some(99),
            out: None,
            format: Some(OutputFormat::Csv),
        };
        let cfg = assemble_config(&o).unwrap();
        assert_eq!(cfg.grid_size, 16);
        assert_eq!(cfg.dim, 3);
        assert_eq!(cfg.box_len, 1.0);
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.format, OutputFormat::Csv);
    }

    #[test]
    fn flattening_walks_arrays_and_objects() {
        let v = serde_json::json!({"a": {"b": 1.5}, "c": [true, "x"]});
        let mut rows = Vec::new();
        flatten_json("", &v, &mut rows);
        assert_eq!(
            rows,
            vec![
                ("a.b".to_string(), "1.5".to_string()),
                ("c.0".to_string(), "true".to_string()),
                ("c.1".to_string(), "\"x\"".to_string()),
            ]
        );
    }
}
