//! Fixed-point solver for the mild formulation on the periodic box.
//!
//! The solved equation is `u = e^{t Laplacian} u_0 - B(u, u)` with the
//! quadratic response `B` of [`crate::bilinear`]. The module provides the
//! caloric extension of initial data, the critical-norm diagnostics
//! attached to it (the tent-norm realization of the `BMO^{-1}` norm, the
//! Besov-type envelope `max sqrt(t) |e^{t Laplacian} u_0|`, and a
//! ball-oscillation norm), Picard iteration with a divergence-detecting
//! trace, the fixed-point residual, an empirical smallness-threshold
//! search, and the parabolic rescaling that the critical norms are
//! invariant under.

use crate::bilinear::{bilinear_b, GradedScheme};
use crate::error::{Error, Result};
use crate::field::{divergence, FieldData, SpaceTimeField, VectorField};
use crate::geom::BallFamily;
use crate::grid::{Grid, TimeGrid};
use crate::ops::{heat_evolve, leray_project};
use crate::tent::{tent_norm, x_norm};
use rayon::prelude::*;
use serde::Serialize;

/// Relative divergence residual `|div u| / |u|` (zero field gives zero).
pub fn div_residual(u0: &VectorField) -> f64 {
    let scale = u0.l2_norm();
    if scale == 0.0 {
        return 0.0;
    }
    divergence(u0).l2_norm() / scale
}

/// Caloric extension `t -> e^{t Laplacian} u_0` over the sample times.
///
/// Initial data whose relative divergence exceeds `1e-10` are Leray-projected
/// first; callers that want to surface this as a warning can test
/// [`div_residual`] themselves beforehand.
pub fn caloric_extend(u0: &VectorField, times: &[f64]) -> Result<SpaceTimeField<VectorField>> {
    let clean;
    let u0 = if div_residual(u0) > 1e-10 {
        clean = leray_project(u0);
        &clean
    } else {
        u0
    };
    let slices: Result<Vec<VectorField>> =
        times.par_iter().map(|&t| heat_evolve(u0, t)).collect();
    SpaceTimeField::new(times.to_vec(), slices?)
}

/// Tent-norm realization of the critical negative-regularity norm: the
/// quadratic tent norm of the caloric extension, with the mean mode removed
/// first (the mean is a conserved constant, not part of the homogeneous
/// space).
pub fn bmo_minus1_norm(u0: &VectorField, times: &[f64], family: &BallFamily) -> Result<f64> {
    let mut v = u0.clone();
    v.set_mean_zero();
    let ext = caloric_extend(&v, times)?;
    Ok(tent_norm(&ext, 2.0, family)?.value)
}

/// Besov-type envelope `max_t sqrt(t) |e^{t Laplacian} u_0|_inf` over the
/// sample times, mean mode removed as in [`bmo_minus1_norm`].
pub fn besov_norm(u0: &VectorField, times: &[f64]) -> Result<f64> {
    let mut v = u0.clone();
    v.set_mean_zero();
    let ext = caloric_extend(&v, times)?;
    Ok(ext
        .times()
        .iter()
        .zip(ext.slices())
        .map(|(&t, s)| t.sqrt() * s.linf_norm())
        .fold(0.0f64, f64::max))
}

/// Ball-oscillation norm: the largest, over the family balls, of the ball
/// average of `|v - v_B|`, where `v_B` is the per-component ball average.
pub fn bmo_norm<F: FieldData>(v: &F, family: &BallFamily) -> Result<f64> {
    let grid = *v.grid();
    let balls = &family.balls;
    if balls.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let phys = v.to_physical();
    let flat: Vec<Vec<num_complex::Complex64>> = phys
        .iter()
        .map(|a| a.iter().copied().collect())
        .collect();
    let worst = balls
        .par_iter()
        .map(|ball| {
            let mut members = Vec::new();
            let mut idx = vec![0usize; grid.dim()];
            for flat_idx in 0..grid.cell_count() {
                grid.unflatten(flat_idx, &mut idx);
                if ball.contains(&grid, &idx) {
                    members.push(flat_idx);
                }
            }
            if members.is_empty() {
                return 0.0;
            }
            let inv = 1.0 / members.len() as f64;
            let means: Vec<num_complex::Complex64> = flat
                .iter()
                .map(|comp| members.iter().map(|&i| comp[i]).sum::<num_complex::Complex64>() * inv)
                .collect();
            members
                .iter()
                .map(|&i| {
                    flat.iter()
                        .zip(&means)
                        .map(|(comp, &m)| (comp[i] - m).norm_sqr())
                        .sum::<f64>()
                        .sqrt()
                })
                .sum::<f64>()
                * inv
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// Termination state of a Picard run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SolverStatus {
    Converged,
    Diverged,
    MaxIters,
}

/// Per-iteration record of a Picard run.
#[derive(Clone, Debug, Serialize)]
pub struct PicardTrace {
    /// `x_norm` of each iterate, starting with the caloric extension.
    pub x_norms: Vec<f64>,
    /// `x_norm(u_{k+1} - u_k)` per update.
    pub residuals: Vec<f64>,
    /// `residuals[k] / residuals[k-1]` where both are defined and finite.
    pub contraction_ratios: Vec<f64>,
    pub status: SolverStatus,
}

impl PicardTrace {
    /// Largest contraction ratio after the first update (the early ratios
    /// reflect the transient, not the asymptotic contraction).
    pub fn tail_contraction(&self) -> Option<f64> {
        if self.contraction_ratios.len() < 2 {
            return None;
        }
        Some(
            self.contraction_ratios[1..]
                .iter()
                .copied()
                .fold(0.0, f64::max),
        )
    }
}

/// Parameters of a Picard run.
#[derive(Clone, Debug, Serialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Convergence tolerance on the X-norm update residual.
    pub tol: f64,
    pub scheme: GradedScheme,
    pub times: Vec<f64>,
    #[serde(skip)]
    pub family: BallFamily,
    pub seed: u64,
}

impl SolverConfig {
    /// Defaults for a grid: 30 iterations, tolerance `1e-8`, the default
    /// graded scheme, four samples per octave from the cell scale to the
    /// box scale, and the standard ball family.
    pub fn for_grid(grid: &Grid) -> Self {
        SolverConfig {
            max_iters: 30,
            tol: 1e-8,
            scheme: GradedScheme::default(),
            times: TimeGrid::for_grid(grid, 4).times(),
            family: BallFamily::standard(grid),
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::BadParameter {
                what: "picard iterations",
                detail: "need at least one iteration".into(),
            });
        }
        if !(self.tol > 0.0) {
            return Err(Error::NonPositive {
                what: "picard tolerance",
                value: self.tol,
            });
        }
        Ok(())
    }
}

/// Picard iteration `u^{k+1} = e^{t Laplacian} u_0 - B(u^k, u^k)` starting
/// from the caloric extension.
///
/// Divergence is declared after three consecutive residual increases or on
/// the first non-finite norm; the returned trace always ends at the last
/// finite iterate.
pub fn picard_solve(
    u0: &VectorField,
    config: &SolverConfig,
) -> Result<(SpaceTimeField<VectorField>, PicardTrace)> {
    config.validate()?;
    let base = caloric_extend(u0, &config.times)?;
    let mut trace = PicardTrace {
        x_norms: vec![x_norm(&base, &config.family)?],
        residuals: Vec::new(),
        contraction_ratios: Vec::new(),
        status: SolverStatus::MaxIters,
    };
    let mut current = base.clone();
    let mut growth_streak = 0usize;
    for _ in 0..config.max_iters {
        let mut next = base.clone();
        next.axpy(
            num_complex::Complex64::new(-1.0, 0.0),
            &bilinear_b(&current, &current, config.scheme)?,
        );
        let residual = x_norm(&next.sub(&current), &config.family)?;
        let norm = x_norm(&next, &config.family)?;
        if !residual.is_finite() || !norm.is_finite() {
            trace.status = SolverStatus::Diverged;
            return Ok((current, trace));
        }
        if let Some(&prev) = trace.residuals.last() {
            trace.contraction_ratios.push(residual / prev);
            if residual > prev {
                growth_streak += 1;
            } else {
                growth_streak = 0;
            }
        }
        trace.residuals.push(residual);
        trace.x_norms.push(norm);
        current = next;
        if residual <= config.tol {
            trace.status = SolverStatus::Converged;
            return Ok((current, trace));
        }
        if growth_streak >= 3 {
            trace.status = SolverStatus::Diverged;
            return Ok((current, trace));
        }
    }
    Ok((current, trace))
}

/// Fixed-point defect `x_norm(u - e^{t Laplacian} u_0 + B(u, u))`.
pub fn residual(
    u: &SpaceTimeField<VectorField>,
    u0: &VectorField,
    config: &SolverConfig,
) -> Result<f64> {
    let mut defect = u.sub(&caloric_extend(u0, &config.times)?);
    defect.axpy(
        num_complex::Complex64::new(1.0, 0.0),
        &bilinear_b(u, u, config.scheme)?,
    );
    x_norm(&defect, &config.family)
}

/// Largest amplitude (to two fractional bits of its base-2 logarithm) at
/// which Picard iteration converges along a fixed direction, searched by
/// bisection over `[2^-20, 2^4]`.
///
/// The direction is normalized to unit [`bmo_minus1_norm`] first; a
/// direction with vanishing norm is rejected. If even the bracket top
/// converges (or the bracket bottom diverges) that boundary is returned.
pub fn smallness_search(direction: &VectorField, config: &SolverConfig) -> Result<f64> {
    config.validate()?;
    let family = &config.family;
    let b = bmo_minus1_norm(direction, &config.times, family)?;
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::DegenerateDirection);
    }
    let unit = direction.scaled(1.0 / b);
    let converges = |amp: f64| -> Result<bool> {
        let (_, trace) = picard_solve(&unit.scaled(amp), config)?;
        Ok(trace.status == SolverStatus::Converged)
    };
    let (mut lo, mut hi) = (-20.0f64, 4.0f64); // log2 amplitudes
    if converges(hi.exp2())? {
        return Ok(hi.exp2());
    }
    if !converges(lo.exp2())? {
        return Ok(lo.exp2());
    }
    while hi - lo > 0.25 {
        let mid = 0.5 * (lo + hi);
        if converges(mid.exp2())? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo.exp2())
}

/// Parabolic rescaling `u_lam(t, x) = lam * u(lam^2 t, lam x)` onto the box
/// `L / lam`: the spectral coefficients are carried over mode-for-mode
/// (scaled by `lam`) and the sample times are relabeled `t / lam^2`.
///
/// `lam` must be a (possibly negative) power of two whose magnitude divides
/// the grid size, so the transform is invertible on the same mode set.
pub fn scaling_transform(
    u: &SpaceTimeField<VectorField>,
    lam: f64,
) -> Result<SpaceTimeField<VectorField>> {
    let grid = *u.grid();
    let log = lam.log2();
    if !(lam > 0.0) || (log - log.round()).abs() > 1e-12 {
        return Err(Error::BadScale(lam));
    }
    let steps = log.round().abs() as u32;
    let factor = 1usize << steps;
    if grid.size() % factor != 0 {
        return Err(Error::BadScale(lam));
    }
    let new_grid = Grid::new(grid.dim(), grid.size(), grid.box_len() / lam)?;
    let times: Vec<f64> = u.times().iter().map(|&t| t / (lam * lam)).collect();
    let slices: Vec<VectorField> = u
        .slices()
        .iter()
        .map(|s| {
            let comps = s.components().iter().map(|c| c * lam).collect();
            VectorField::from_components(new_grid, comps)
        })
        .collect();
    SpaceTimeField::new(times, slices)
}
