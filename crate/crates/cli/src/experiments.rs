//! Named verification experiments.
//!
//! Each experiment bundles the library checks for one verified statement
//! into a [`RunReport`]: a list of `(check, value, bound, pass)` rows,
//! optional `(scale, value)` curves, and per-stage wall-clock timings.
//! A report passes overall exactly when every row passes.
//!
//! Conventions:
//!
//! * every row is a one-sided comparison; rows named `*-drift` carry the
//!   symmetric refinement spread `max(r, 1/r)` of a quantity measured on
//!   the base grid and on the doubled grid, so a bound of `2.0` means
//!   "within a factor of two either way";
//! * rows whose mathematical content is only "this quantity is finite" use
//!   the ceiling [`FINITE_CEILING`] as the bound — a non-finite value (or
//!   an absurdly large one) fails it;
//! * boolean outcomes are encoded as `0.0` (good) / `1.0` (bad) against a
//!   bound of `0.0`;
//! * all values are independent of thread scheduling: reductions are
//!   either sequential or max/min folds over deterministically ordered
//!   collections. Timings are wall-clock and excluded from that guarantee.

use crate::config::ExperimentConfig;
use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use tentflow::atoms::{
    a2star_apply, atom_validate, atomic_decompose, calm_apply, indicator_atom,
    molecule_scaling_slopes,
};
use tentflow::bilinear::{
    a2_apply, decomposition_check, desimon_check, duhamel_a, maxreg_tent_check,
    pointwise_bound_check, r_tent_check, schur_check, st_l2, z_tent_check, A2Route, GradedScheme,
    ProbeConfig,
};
use tentflow::corpus::{
    generate_field, generate_field_with_spectrum, space_time_tensor, space_time_vector,
    FieldKind, TimeProfile,
};
use tentflow::field::{
    divergence, st_inner, FieldData, SpaceTimeField, TensorField, VectorField,
};
use tentflow::geom::{Ball, BallFamily};
use tentflow::grid::{Grid, TimeGrid};
use tentflow::ops::{heat_evolve, leray_project, project_div};
use tentflow::probes::{offdiag_probe, OpFamily};
use tentflow::quad::TimeQuadrature;
use tentflow::solver::{
    bmo_minus1_norm, caloric_extend, picard_solve, residual, scaling_transform, smallness_search,
    SolverStatus,
};
use tentflow::tent::{
    carleson_embedding_check, pairing_check, square_function, stopping_set_fractions, x_norm,
    CheckOutcome,
};
use tentflow::{Error, Result};

/// Bound used by rows that only assert finiteness of a measured ratio.
pub const FINITE_CEILING: f64 = 1e6;

/// One verified inequality: `pass` is `value <= bound` (or `value >= bound`
/// for rows built with [`ReportBuilder::check_ge`]; the direction is part
/// of the row's definition, the serialized form keeps only the outcome).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CheckRow {
    pub check: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

/// One point of a named curve (e.g. defect versus panel count).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CurvePoint {
    pub scale: f64,
    pub value: f64,
}

/// A named `(scale, value)` table attached to a report.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Curve {
    pub name: String,
    pub points: Vec<CurvePoint>,
}

/// Wall-clock seconds of one stage of an experiment.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// Full outcome of one experiment run.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunReport {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub checks: Vec<CheckRow>,
    pub curves: Vec<Curve>,
    pub timings: Vec<Timing>,
    pub overall_pass: bool,
}

/// Accumulates rows, curves and timings; [`ReportBuilder::finish`] orders
/// the rows and curves by name and computes the overall verdict.
struct ReportBuilder {
    experiment: String,
    config: ExperimentConfig,
    checks: Vec<CheckRow>,
    curves: Vec<Curve>,
    timings: Vec<Timing>,
}

impl ReportBuilder {
    fn new(experiment: &str, config: &ExperimentConfig) -> Self {
        ReportBuilder {
            experiment: experiment.to_string(),
            config: config.clone(),
            checks: Vec::new(),
            curves: Vec::new(),
            timings: Vec::new(),
        }
    }

    /// Row passing when `value <= bound` (false for non-finite values).
    fn check_le(&mut self, name: &str, value: f64, bound: f64) {
        self.checks.push(CheckRow {
            check: name.to_string(),
            value,
            bound,
            pass: value <= bound,
        });
    }

    /// Row passing when `value >= bound` and finite.
    fn check_ge(&mut self, name: &str, value: f64, bound: f64) {
        self.checks.push(CheckRow {
            check: name.to_string(),
            value,
            bound,
            pass: value.is_finite() && value >= bound,
        });
    }

    fn curve(&mut self, name: &str, points: Vec<(f64, f64)>) {
        self.curves.push(Curve {
            name: name.to_string(),
            points: points
                .into_iter()
                .map(|(scale, value)| CurvePoint { scale, value })
                .collect(),
        });
    }

    /// Run a closure as a named, timed stage.
    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self)?;
        self.timings.push(Timing {
            stage: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    fn finish(mut self) -> RunReport {
        self.checks.sort_by(|a, b| a.check.cmp(&b.check));
        self.curves.sort_by(|a, b| a.name.cmp(&b.name));
        let overall_pass = !self.checks.is_empty() && self.checks.iter().all(|c| c.pass);
        RunReport {
            experiment: self.experiment,
            config: self.config,
            checks: self.checks,
            curves: self.curves,
            timings: self.timings,
            overall_pass,
        }
    }
}

/// Symmetric spread `max(r, 1/r)` of a refinement ratio `r = fine/coarse`;
/// non-finite or non-positive inputs propagate to a failing value.
fn spread(coarse: f64, fine: f64) -> f64 {
    if !(coarse > 0.0) || !fine.is_finite() {
        return f64::INFINITY;
    }
    let r = fine / coarse;
    r.max(1.0 / r)
}

fn outcome_ratio(outcome: CheckOutcome) -> f64 {
    outcome.ratio().unwrap_or(f64::NAN)
}

/// The doubled grid used by refinement-drift stages.
fn refined(grid: &Grid) -> Result<Grid> {
    Grid::new(grid.dim(), 2 * grid.size(), grid.box_len())
}

type Runner = fn(&ExperimentConfig, &mut ReportBuilder) -> Result<()>;

const EXPERIMENTS: &[(&str, Runner)] = &[
    ("leray-idempotence", run_leray_idempotence),
    ("semigroup", run_semigroup),
    ("maximal-regularity", run_maximal_regularity),
    ("decomposition-identity", run_decomposition_identity),
    ("quadrature-oracle", run_quadrature_oracle),
    ("tent-boundedness", run_tent_boundedness),
    ("carleson-embedding", run_carleson_embedding),
    ("atomic-decomposition", run_atomic_decomposition),
    ("molecules", run_molecules),
    ("solver", run_solver),
    ("scaling", run_scaling),
    ("off-diagonal", run_off_diagonal),
];

/// Names of all experiments, in canonical order.
pub fn available() -> Vec<&'static str> {
    EXPERIMENTS.iter().map(|(n, _)| *n).collect()
}

/// Run one named experiment under the given configuration.
pub fn run_experiment(name: &str, config: &ExperimentConfig) -> Result<RunReport> {
    let Some((_, runner)) = EXPERIMENTS.iter().find(|(n, _)| *n == name) else {
        return Err(Error::UnknownExperiment {
            name: name.to_string(),
            available: available().join(", "),
        });
    };
    let mut builder = ReportBuilder::new(name, config);
    runner(config, &mut builder)?;
    Ok(builder.finish())
}

// ---------------------------------------------------------------------------
// projection + semigroup algebra
// ---------------------------------------------------------------------------

/// The divergence-free projection annihilates divergences and is idempotent
/// on a random corpus, in dimensions 2 and 3.
fn run_leray_idempotence(cfg: &ExperimentConfig, rb: &mut ReportBuilder) -> Result<()> {
    for dim in [2usize, 3] {
        // the 3D pass caps the resolution so both dimensions stay cheap
        let size = if dim == 2 { cfg.grid_size } else { cfg.grid_size.min(32) };
        let grid = Grid::new(dim, size, cfg.box_len)?;
        let exp = cfg.spectrum(dim);
        rb.stage(&format!("corpus-dim{dim}"), |rb| {
            let mut worst_div = 0.0f64;
            let mut worst_idem = 0.0f64;
            for i in 0..cfg.corpus_size {
                let v = generate_field_with_spectrum(
                    &grid,
                    FieldKind::Random,
                    cfg.seed + i as u64,
                    exp,
                );
                let p = leray_project(&v);
                let scale = p.l2_norm();
                worst_div = worst_div.max(divergence(&p).l2_norm() / scale);
                worst_idem = worst_idem.max(leray_project(&p).sub(&p).l2_norm() / scale);
            }
            rb.check_le(&format!("divergence-dim{dim}"), worst_div, 1e-10);
            rb.check_le(&format!("idempotence-dim{dim}"), worst_idem, 1e-10);
            Ok(())
        })?;
    }
    Ok(())
}

/// The heat flow composes exactly across time splits and commutes with the
/// divergence-free projection.
fn run_semigroup(cfg: &ExperimentConfig, rb: &mut ReportBuilder) -> Result<()> {
    let grid = cfg.grid()?;
    let h2 = grid.spacing() * grid.spacing();
    let l2 = grid.box_len() * grid.box_len();
    let pairs = [(h2, h2), (h2, 8.0 * h2), (0.01 * l2, 0.02 * l2)];
    rb.stage("corpus", |rb| {
        let mut worst_law = 0.0f64;
        let mut worst_comm = 0.0f64;
        for i in 0..cfg.corpus_size {
            let u = generate_field_with_spectrum(
                &grid,
                FieldKind::Random,
                cfg.seed + i as u64,
                cfg.spectrum(grid.dim()),
            );
            let scale = u.l2_norm();
            for &(t, s) in &pairs {
                let two_step = heat_evolve(&heat_evolve(&u, t)?, s)?;
                let one_step = heat_evolve(&u, t + s)?;
                worst_law = worst_law.max(two_step.sub(&one_step).l2_norm() / scale);
                let pu = heat_evolve(&leray_project(&u), t)?;
                let up = leray_project(&heat_evolve(&u, t)?);
                worst_comm = worst_comm.max(pu.sub(&up).l2_norm() / scale);
            }
        }
        rb.check_le("composition-law", worst_law, 1e-12);
        rb.check_le("projection-commutation", worst_comm, 1e-12);
        Ok(())
    })
}

/// The maximal-regularity operator contracts the space-time `L^2` norm of
/// velocity-like histories within the theoretical margin.
fn run_maximal_regularity(cfg: &ExperimentConfig, rb: &mut ReportBuilder) -> Result<()> {
    let grid = cfg.grid()?;
    // the contraction criterion is a statement about the densely sampled
    // operator, so this probe uses the full sample rate
    let pc = ProbeConfig {
        corpus_size: cfg.corpus_size,
        seed: cfg.seed,
        samples_per_octave: cfg.samples_per_octave,
        scheme: cfg.probe_scheme()?,
    };
    rb.stage("probe", |rb| {
        let rep = desimon_check(&grid, &pc)?;
        rb.check_le("st-l2-ratio", rep.max_ratio, 2.05);
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// quadrature and splitting
// ---------------------------------------------------------------------------

/// The three-piece splitting of the source-response operator reproduces it
/// to quadrature accuracy, and the defect halves when panels double.
fn run_decomposition_identity(cfg: &ExperimentConfig, rb: &mut ReportBuilder) -> Result<()> {
    let grid = cfg.grid()?;
    // the defect statement is per-history and per-time; the probe sample
    // rate keeps the three-quadrature comparison affordable at the pinned
    // panel counts
    let times = TimeGrid::for_grid(&grid, cfg.probe_samples_per_octave).times();
    let base = cfg.scheme()?;
    let doubled = GradedScheme::new(2 * cfg.panels)?;
    let members = 2usize;
    rb.stage("defects", |rb| {
        let mut worst = 0.0f64;
        let mut worst_ratio = 0.0f64;
        for i in 0..members {
            let alpha = space_time_tensor(&grid, &times, TimeProfile::Inverse, cfg.seed + i as u64)?;
            let d1 = decomposition_check(&alpha, base)?;
            let d2 = decomposition_check(&alpha, doubled)?;
            worst = worst.max(d1);
            worst_ratio = worst_ratio.max(d2 / d1);
        }
        rb.check_le("splitting-defect", worst, 1e-3);
        rb.check_le("panel-doubling-ratio", worst_ratio, 0.5);
        Ok(())
    })
}

/// A single-mode source with a constant-in-time profile, together with its
/// closed-form response. Every tensor component carries a distinct generic
/// value so the projected divergence of the source cannot vanish.
fn single_mode_source(
    grid: &Grid,
    mode: &[i64],
    times: &[f64],
) -> Result<(SpaceTimeField<TensorField>, TensorField, f64)> {
    let n = grid.size() as i64;
    let mut t = TensorField::zeros(*grid);
    let pos: Vec<usize> = mode.iter().map(|&m| m.rem_euclid(n) as usize).collect();
    let neg: Vec<usize> = mode.iter().map(|&m| (-m).rem_euclid(n) as usize).collect();
    for (c, comp) in t.components_mut().iter_mut().enumerate() {
        let z = Complex64::new(0.3 + 0.1 * c as f64, 0.7 - 0.2 * c as f64);
        comp[IxDyn(&pos)] = z;
        comp[IxDyn(&neg)] = z.conj();
    }
    let base = 2.0 * std::f64::consts::PI / grid.box_len();
    let lam: f64 = mode.iter().map(|&m| (m as f64 * base).powi(2)).sum();
    let slices: Vec<TensorField> = times.iter().map(|_| t.clone()).collect();
    Ok((SpaceTimeField::new(times.to_vec(), slices)?, t, lam))
}

/// Worst relative error of the graded quadrature against the closed-form
/// response of a constant single-mode source.
fn single_mode_defect(
    grid: &Grid,
    mode: &[i64],
    times: &[f64],
    scheme: GradedScheme,
) -> Result<f64> {
    let (alpha, t0, lam) = single_mode_source(grid, mode, times)?;
    let response = duhamel_a(&alpha, scheme)?;
    let direction = project_div(&t0);
    if !(direction.l2_norm() > 0.0) {
        return Err(Error::BadParameter {
            what: "single-mode oracle",
            detail: format!("mode {mode:?} has no divergence-free response"),
        });
    }
    let mut worst = 0.0f64;
    for (j, &t) in times.iter().enumerate() {
        let expected = direction.scaled((1.0 - (-t * lam).exp()) / lam);
        let err = response.slice(j).sub(&expected).l2_norm() / expected.l2_norm();
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Closed-form oracle for the source-response quadrature: a constant
/// single-mode source integrates exactly in closed form, and the graded
/// scheme must match it at the configured panel count; a defect-versus-
/// panels curve exposes the convergence order.
fn run_quadrature_oracle(cfg: &ExperimentConfig, rb: &mut ReportBuilder) -> Result<()> {
    let grid = cfg.grid()?;
    let times = cfg.times(&grid);
    let dim = grid.dim();
    let axis: Vec<i64> = (0..dim).map(|i| if i == 0 { 1 } else { 0 }).collect();
    let diagonal: Vec<i64> = vec![1; dim];
    let scheme = cfg.scheme()?;
    rb.stage("closed-form", |rb| {
        let e_axis = single_mode_defect(&grid, &axis, &times, scheme)?;
        let e_diag = single_mode_defect(&grid, &diagonal, &times, scheme)?;
        rb.check_le("closed-form-error-axis-mode", e_axis, 1e-6);
        rb.check_le("closed-form-error-diagonal-mode", e_diag, 1e-6);
        Ok(())
    })?;
    rb.stage("convergence-curve", |rb| {
        // the curve only exhibits the convergence order, so it can use the
        // sparser probe sampling
        let curve_times = TimeGrid::for_grid(&grid, cfg.probe_samples_per_octave).times();
        let mut points = Vec::new();
        for panels in [8usize, 16, 32, 64] {
            let defect =
                single_mode_defect(&grid, &diagonal, &curve_times, GradedScheme::new(panels)?)?;
            points.push((panels as f64, defect));
        }
        rb.curve("defect-vs-panels", points);
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// operator-norm probes
// ---------------------------------------------------------------------------

/// Tent-norm and pointwise envelopes of the splitting operators stay finite
/// on a random corpus and drift by at most a factor of two under grid
/// refinement.
fn run_tent_boundedness(cfg: &ExperimentConfig, rb: &mut ReportBuilder) -> Result<()> {
    let coarse = cfg.grid()?;
    let fine = refined(&coarse)?;
    let pc = cfg.probe_config()?;
    let probes: [(&str, fn(&Grid, &ProbeConfig, &BallFamily) -> Result<tentflow::bilinear::OperatorNormReport>); 3] = [
        ("maximal-regularity", maxreg_tent_check),
        ("scale-adapted", z_tent_check),
        ("tail", r_tent_check),
    ];
    for (name, probe) in probes {
        rb.stage(name, |rb| {
            let lo = probe(&coarse, &pc, &BallFamily::standard(&coarse))?;
            let hi = probe(&fine, &pc, &BallFamily::standard(&fine))?;
            rb.check_le(&format!("{name}-ratio"), lo.max_ratio, FINITE_CEILING);
            rb.check_le(&format!("{name}-drift"), spread(lo.max_ratio, hi.max_ratio), 2.0);
            Ok(())
        })?;
    }
    rb.stage("pointwise", |rb| {
        let lo = pointwise_bound_check(&coarse, &pc, &BallFamily::standard(&coarse))?;
        let hi = pointwise_bound_check(&fine, &pc, &BallFamily::standard(&fine))?;
        rb.check_le("pointwise-sup-ratio", lo.max_sup_ratio, FINITE_CEILING);
        rb.check_le("pointwise-sup-drift", spread(lo.max_sup_ratio, hi.max_sup_ratio), 2.0);
        rb.check_le("pointwise-tent-ratio", lo.max_tent_ratio, FINITE_CEILING);
        rb.check_le(
            "pointwise-tent-drift",
            spread(lo.max_tent_ratio, hi.max_tent_ratio),
            2.0,
        );
        Ok(())
    })
}

/// Carleson-embedding and duality-pairing measurements on one grid.
struct EmbeddingSample {
    embedding: f64,
    pairing: f64,
    cauchy_schwarz: f64,
}

fn embedding_sample(cfg: &ExperimentConfig, grid: &Grid) -> Result<EmbeddingSample> {
    let times = cfg.times(grid);
    let family = cfg.family(grid);
    let h = space_time_vector(grid, &times, TimeProfile::InverseSqrt, cfg.seed)?;
    let g = space_time_vector(grid, &times, TimeProfile::InverseSqrt, cfg.seed + 1)?;
    let mu: Vec<ArrayD<f64>> = g
        .slices()
        .iter()
        .map(|s| s.magnitude_physical().mapv(|v| v * v))
        .collect();
    let embedding = outcome_ratio(carleson_embedding_check(&h, &mu, &family)?);
    let pairing = outcome_ratio(pairing_check(&h, &g, &family)?);
    // Cauchy–Schwarz on cone counts: the plain mass pairing against the
    // product of the two square functions
    let w = TimeQuadrature::from_times(&times).full_weights();
    let hn = grid.cell_volume();
    let mut num = 0.0f64;
    for (j, (hs, gs)) in h.slices().iter().zip(g.slices()).enumerate() {
        let hm = hs.magnitude_physical();
        let gm = gs.magnitude_physical();
        let dot: f64 = hm.iter().zip(gm.iter()).map(|(&a, &b)| a * b).sum();
        num += w[j] * dot * hn;
    }
    let sh = square_function(&h, None);
    let sg = square_function(&g, None);
    let den: f64 = sh.iter().zip(sg.iter()).map(|(&a, &b)| a * b).sum::<f64>() * hn;
    Ok(EmbeddingSample {
        embedding,
        pairing,
        cauchy_schwarz: num / den,
    })
}

/// The Carleson embedding and the cone-duality pairing produce finite,
/// refinement-stable comparison constants, and the pointwise
/// Cauchy–Schwarz step of the pairing never exceeds one.
fn run_carleson_embedding(cfg: &ExperimentConfig, rb: &mut ReportBuilder) -> Result<()> {
    let coarse = cfg.grid()?;
    let fine = refined(&coarse)?;
    let lo = rb.stage("base-grid", |_| embedding_sample(cfg, &coarse))?;
    let hi = rb.stage("refined-grid", |_| embedding_sample(cfg, &fine))?;
    rb.check_le("embedding-ratio", lo.embedding, FINITE_CEILING);
    rb.check_le("embedding-drift", spread(lo.embedding, hi.embedding), 1.2);
    rb.check_le("pairing-ratio", lo.pairing, FINITE_CEILING);
    rb.check_le("pairing-drift", spread(lo.pairing, hi.pairing), 1.2);
    rb.check_le(
        "cauchy-schwarz-ratio",
        lo.cauchy_schwarz.max(hi.cauchy_schwarz),
        1.0 + 1e-10,
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// atomic decomposition and molecules
// ---------------------------------------------------------------------------

fn lambda_ratio_at(cfg: &ExperimentConfig, grid: &Grid) -> Result<f64> {
    let times = TimeGrid::for_grid(grid, cfg.probe_samples_per_octave).times();
    let g = space_time_vector(grid, &times, TimeProfile::InverseSqrt, cfg.seed)?;
    let d = atomic_decompose(&g, cfg.gamma, cfg.level_cap)?;
    Ok(d.lambda_ratio().unwrap_or(f64::NAN))
}

/// The atomic decomposition reconstructs its input exactly, produces only
/// valid atoms, keeps the coefficient sum comparable to the square-function
/// mass (stably under refinement), and its stopping sets nearly fill every
/// probe ball at a large stopping constant.
fn run_atomic_decomposition(cfg: &ExperimentConfig, rb: &mut ReportBuilder) -> Result<()> {
    let grid = cfg.grid()?;
    let times = TimeGrid::for_grid(&grid, cfg.probe_samples_per_octave).times();
    let g = space_time_vector(&grid, &times, TimeProfile::InverseSqrt, cfg.seed)?;
    let d = rb.stage("decompose", |_| atomic_decompose(&g, cfg.gamma, cfg.level_cap))?;

    rb.stage("validate", |rb| {
        let w = TimeQuadrature::from_times(&times).full_weights();
        let rec = d.reconstruct()?;
        let err = st_l2(&rec.sub(&g), &w) / st_l2(&g, &w);
        rb.check_le("reconstruction-error", err, 1e-10);
        let failures = d
            .atoms
            .iter()
            .filter(|a| !atom_validate(&grid, &times, a).pass)
            .count();
        rb.check_le("atom-failures", failures as f64, 0.0);
        let ratio = d.lambda_ratio().unwrap_or(f64::NAN);
        rb.check_le("lambda-ratio-upper", ratio, 100.0);
        rb.check_le("lambda-ratio-lower", 1.0 / ratio, 100.0);
        Ok(())
    })?;

    rb.stage("refinement", |rb| {
        let coarse_ratio = d.lambda_ratio().unwrap_or(f64::NAN);
        let fine_ratio = lambda_ratio_at(cfg, &refined(&grid)?)?;
        rb.check_le("lambda-refinement-drift", spread(coarse_ratio, fine_ratio), 2.0);
        Ok(())
    })?;

    rb.stage("stopping-sets", |rb| {
        let nu = 3f64.powi(grid.dim() as i32) * cfg.nu_factor;
        let fractions = stopping_set_fractions(&g, nu, &cfg.family(&grid))?;
        let min_fraction = fractions
            .iter()
            .map(|b| b.value)
            .fold(f64::INFINITY, f64::min);
        rb.check_ge("stopping-fraction-min", min_fraction, 0.99);
        Ok(())
    })
}

/// Images of indicator atoms under the composed averaging operator are
/// molecules: mean-zero, energy-bounded, and with the predicted scaling of
/// their weighted and plain integrals across atom radii.
fn run_molecules(cfg: &ExperimentConfig, rb: &mut ReportBuilder) -> Result<()> {
    let grid = cfg.grid()?;
    let times = cfg.times(&grid);
    let l = grid.box_len();
    let radii = [l / 8.0, l / 16.0, l / 32.0];
    let labels = ["eighth", "sixteenth", "thirtysecond"];
    let center = vec![grid.size() / 2; grid.dim()];
    let hn = grid.cell_volume();
    rb.stage("atom-images", |rb| {
        for (&r, label) in radii.iter().zip(labels) {
            let ball = Ball { center: center.clone(), radius: r };
            let a = indicator_atom(&grid, &times, &ball)?;
            let m = calm_apply(&a)?;
            let l1 = m.magnitude_physical().sum() * hn;
            let worst_mean = m
                .to_physical()
                .iter()
                .map(|comp| (comp.sum() * hn).norm())
                .fold(0.0, f64::max);
            rb.check_le(&format!("mean-residual-{label}"), worst_mean / l1, 1e-10);
            let energy_ratio = m.l2_norm().powi(2) * ball.measure(&grid) * 2.0;
            rb.check_le(&format!("energy-ratio-{label}"), energy_ratio, 1.0 + 1e-3);
        }
        Ok(())
    })?;
    rb.stage("scaling-slopes", |rb| {
        let n = grid.dim() as f64;
        let q = cfg.q;
        let b = 2.0 * (q - 1.0) / q;
        let (s_weighted, s_plain) = molecule_scaling_slopes(&grid, &times, &radii, q)?;
        let predicted_weighted = n * (q * b + 1.0 - q);
        let predicted_plain = n * (1.0 - q);
        rb.check_le(
            "weighted-slope-deviation",
            (s_weighted - predicted_weighted).abs(),
            0.5,
        );
        rb.check_le("plain-slope-deviation", (s_plain - predicted_plain).abs(), 0.5);
        rb.curve(
            "slopes",
            vec![(1.0, s_weighted), (2.0, s_plain)],
        );
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// solver, scaling, kernel decay
// ---------------------------------------------------------------------------

fn bool_row(ok: bool) -> f64 {
    if ok {
        0.0
    } else {
        1.0
    }
}

/// Fixed-point iteration for the mild formulation: trivial data converges
/// immediately, the cellular vortex follows the pure heat flow, random
/// small data contracts below the measured smallness threshold, and the
/// smooth-piece aggregate satisfies its duality identity.
fn run_solver(cfg: &ExperimentConfig, rb: &mut ReportBuilder) -> Result<()> {
    let grid = cfg.grid()?;
    let scfg = cfg.solver_config(&grid)?;
    let family = &scfg.family;

    rb.stage("trivial-data", |rb| {
        let zero = VectorField::zeros(grid);
        let (_, trace) = picard_solve(&zero, &scfg)?;
        rb.check_le("trivial-converged", bool_row(trace.status == SolverStatus::Converged), 0.0);
        rb.check_le(
            "trivial-residual",
            trace.residuals.last().copied().unwrap_or(f64::NAN),
            cfg.tol,
        );
        Ok(())
    })?;

    rb.stage("cellular-vortex", |rb| {
        let tg = generate_field(&grid, FieldKind::TaylorGreen, 0);
        let (u, _) = picard_solve(&tg, &scfg)?;
        let ext = caloric_extend(&tg, &scfg.times)?;
        let dev = x_norm(&u.sub(&ext), family)? / x_norm(&ext, family)?;
        rb.check_le("vortex-deviation", dev, 1e-6);
        Ok(())
    })?;

    let direction = generate_field_with_spectrum(
        &grid,
        FieldKind::Solenoidal,
        cfg.seed,
        cfg.spectrum(grid.dim()),
    );
    // The bisection needs only converged/diverged verdicts, so it runs with
    // the probe sample rate and a loose tolerance; the half-threshold datum
    // below is then re-solved under the full configuration.
    let search_cfg = tentflow::solver::SolverConfig {
        times: TimeGrid::for_grid(&grid, cfg.probe_samples_per_octave).times(),
        tol: cfg.tol.max(1e-6),
        family: cfg.family(&grid),
        ..scfg.clone()
    };
    let eps = rb.stage("smallness-search", |_| smallness_search(&direction, &search_cfg))?;
    rb.check_le("smallness-threshold", eps, FINITE_CEILING);

    rb.stage("small-data", |rb| {
        let b = bmo_minus1_norm(&direction, &scfg.times, family)?;
        let u0 = direction.scaled(0.5 * eps / b);
        let (u, trace) = picard_solve(&u0, &scfg)?;
        rb.check_le(
            "small-data-converged",
            bool_row(trace.status == SolverStatus::Converged),
            0.0,
        );
        rb.check_le(
            "small-data-contraction",
            trace.tail_contraction().unwrap_or(f64::NAN),
            0.5,
        );
        rb.check_le("small-data-residual", residual(&u, &u0, &scfg)?, 2.0 * cfg.tol);
        rb.curve(
            "picard-residuals",
            trace
                .residuals
                .iter()
                .enumerate()
                .map(|(i, &r)| (i as f64, r))
                .collect(),
        );
        Ok(())
    })?;

    rb.stage("duality", |rb| {
        let alpha =
            space_time_tensor(&grid, &scfg.times, TimeProfile::Inverse, cfg.seed + 2)?;
        let g = space_time_vector(&grid, &scfg.times, TimeProfile::InverseSqrt, cfg.seed + 3)?;
        let w = TimeQuadrature::from_times(&scfg.times).full_weights();
        let lhs = st_inner(&a2_apply(&alpha, scfg.scheme, A2Route::GridSamples)?, &g, &w);
        let rhs = st_inner(&alpha, &a2star_apply(&g)?, &w);
        rb.check_le("duality-gap", (lhs - rhs).norm() / lhs.norm(), 1e-6);
        Ok(())
    })
}

/// The solution norm is invariant under the parabolic rescaling of data,
/// box, and times; the rescaling itself round-trips exactly.
fn run_scaling(cfg: &ExperimentConfig, rb: &mut ReportBuilder) -> Result<()> {
    let grid = cfg.grid()?;
    let times = cfg.times(&grid);
    let family = cfg.family(&grid);
    rb.stage("rescale", |rb| {
        let mut worst_dev = 0.0f64;
        let mut worst_rt = 0.0f64;
        for i in 0..3u64 {
            let dir = generate_field_with_spectrum(
                &grid,
                FieldKind::Solenoidal,
                cfg.seed + i,
                cfg.spectrum(grid.dim()),
            );
            let u = caloric_extend(&dir, &times)?;
            let v = scaling_transform(&u, cfg.lambda)?;
            let xu = x_norm(&u, &family)?;
            let xv = x_norm(&v, &BallFamily::standard(v.grid()))?;
            worst_dev = worst_dev.max((xv / xu - 1.0).abs());
            let back = scaling_transform(&v, 1.0 / cfg.lambda)?;
            worst_rt = worst_rt.max(back.max_coeff_diff(&u));
        }
        rb.check_le("norm-invariance-deviation", worst_dev, 0.05);
        rb.check_le("round-trip-error", worst_rt, 0.0);
        Ok(())
    })
}

/// Localized inputs decay across separated regions at the kernel-predicted
/// order, and the two-time kernel passes its weighted Schur test with a
/// refinement-stable constant under the pointwise envelope.
fn run_off_diagonal(cfg: &ExperimentConfig, rb: &mut ReportBuilder) -> Result<()> {
    let grid = cfg.grid()?;
    rb.stage("separated-balls", |rb| {
        let h = grid.spacing();
        let e = Ball { center: vec![0; grid.dim()], radius: 3.0 * h };
        let f = Ball { center: vec![grid.size() / 2; grid.dim()], radius: 3.0 * h };
        let d = grid.torus_dist(&e.center, &f.center);
        let times: Vec<f64> = (0..=4).map(|i| d * d / (4.0 * 2f64.powi(i))).collect();
        let rep = offdiag_probe(grid, &e, &f, &times, OpFamily::LaplaceHeat, 4, cfg.seed)?;
        rb.check_ge("fitted-order", rep.fitted_order, 2.0);
        rb.curve(
            "offdiag-ratio",
            rep.rows.iter().map(|r| (r.scale, r.ratio)).collect(),
        );
        Ok(())
    })?;
    rb.stage("schur-test", |rb| {
        let lo = schur_check(&grid, cfg.samples_per_octave, cfg.beta)?;
        let fine = refined(&grid)?;
        let hi = schur_check(&fine, cfg.samples_per_octave, cfg.beta)?;
        let bound_lo = (lo.sup_row * lo.sup_col).sqrt();
        let bound_hi = (hi.sup_row * hi.sup_col).sqrt();
        rb.check_le("schur-bound", bound_lo, FINITE_CEILING);
        rb.check_le("schur-refinement-drift", spread(bound_lo, bound_hi), 2.0);
        rb.check_le(
            "kernel-envelope-ratio",
            lo.kernel_ratio_max.max(hi.kernel_ratio_max),
            1.0 + 1e-12,
        );
        rb.curve(
            "schur-bound-vs-size",
            vec![
                (grid.size() as f64, bound_lo),
                (fine.size() as f64, bound_hi),
            ],
        );
        Ok(())
    })
}
