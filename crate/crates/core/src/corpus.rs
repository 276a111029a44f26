//! Deterministic test-field generation.
//!
//! Random fields are built mode-by-mode from a seeded stream over a fixed
//! list of integer modes (a cube capped at 21 per axis in 2D, 10 in 3D, and
//! never beyond the de-aliasing cutoff). Because the mode list and draw
//! order do not depend on the grid size, the same seed produces the *same*
//! field on a refined grid — refinement studies then measure only the
//! discretization of the functionals, not a change of input.
//!
//! Space-time stacks modulate each mode `m` in time through its diffusion
//! scale `lam = |k(m)|^2`, mimicking the two decay classes the solver
//! theory distinguishes: velocity-like fields decaying as
//! `(1 + t*lam)^{-1/2}` (with a mild logarithmic oscillation) and
//! quadratic/forcing-like fields decaying as `(1 + t*lam)^{-1}`.

use crate::error::{Error, Result};
use crate::field::{gradient, FieldData, ScalarField, SpaceTimeField, TensorField, VectorField};
use crate::grid::Grid;
use crate::ops::leray_project;
use ndarray::IxDyn;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    /// Independent random spectrum per component.
    Random,
    /// The classical cellular vortex (divergence-free; in 2D its nonlinear
    /// term is an exact gradient).
    TaylorGreen,
    /// Gradient of a random scalar (curl-free, killed by Leray projection).
    Gradient,
    /// Random field projected onto divergence-free fields.
    Solenoidal,
}

impl std::str::FromStr for FieldKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(FieldKind::Random),
            "taylor-green" => Ok(FieldKind::TaylorGreen),
            "gradient" => Ok(FieldKind::Gradient),
            "solenoidal" => Ok(FieldKind::Solenoidal),
            other => Err(Error::UnknownFieldKind(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeProfile {
    /// `(1 + t*lam)^{-1/2}` with a logarithmic phase oscillation.
    InverseSqrt,
    /// `(1 + t*lam)^{-1}`.
    Inverse,
}

/// Per-axis cap of the fixed mode cube (before the de-aliasing cutoff).
fn base_cutoff(dim: usize) -> i64 {
    if dim == 2 {
        21
    } else {
        10
    }
}

/// Fixed-order list of canonical modes: one representative per
/// conjugate pair `{m, -m}`, zero mode excluded, lexicographic order.
fn canonical_modes(grid: &Grid) -> Vec<Vec<i64>> {
    let cutoff = base_cutoff(grid.dim()).min(grid.dealias_cutoff());
    let dim = grid.dim();
    let mut modes = Vec::new();
    let mut m = vec![-cutoff; dim];
    'outer: loop {
        if m.iter().any(|&x| x != 0) {
            let neg: Vec<i64> = m.iter().map(|&x| -x).collect();
            if m[..] > neg[..] {
                modes.push(m.clone());
            }
        }
        for ax in (0..dim).rev() {
            m[ax] += 1;
            if m[ax] <= cutoff {
                continue 'outer;
            }
            m[ax] = -cutoff;
        }
        break;
    }
    modes
}

fn mode_index(grid: &Grid, m: &[i64]) -> IxDyn {
    let n = grid.size() as i64;
    let idx: Vec<usize> = m.iter().map(|&x| x.rem_euclid(n) as usize).collect();
    IxDyn(&idx)
}

fn mode_lambda(grid: &Grid, m: &[i64]) -> f64 {
    let base = 2.0 * std::f64::consts::PI / grid.box_len();
    m.iter().map(|&x| (x as f64 * base).powi(2)).sum()
}

/// Default spectral decay exponent: amplitudes fall off as `|k|^{-(n+1)/2}`.
pub fn default_spectrum_exp(dim: usize) -> f64 {
    (dim as f64 + 1.0) / 2.0
}

/// Spectral amplitude `|k|^{-exp}`.
fn spectrum_weight(grid: &Grid, m: &[i64], exp: f64) -> f64 {
    let lam = mode_lambda(grid, m);
    lam.sqrt().powf(-exp)
}

fn fill_random<F: FieldData>(grid: &Grid, seed: u64, exp: f64) -> F {
    let modes = canonical_modes(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = F::zeros(*grid);
    for comp in out.components_mut() {
        for m in &modes {
            let w = spectrum_weight(grid, m, exp);
            let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * w;
            comp[mode_index(grid, m)] = z;
            let neg: Vec<i64> = m.iter().map(|&x| -x).collect();
            comp[mode_index(grid, &neg)] = z.conj();
        }
    }
    out
}

fn taylor_green(grid: &Grid) -> VectorField {
    let b = 2.0 * std::f64::consts::PI / grid.box_len();
    let shape = IxDyn(&grid.shape());
    let comps: Vec<_> = match grid.dim() {
        2 => {
            let u0 = ndarray::ArrayD::from_shape_fn(shape.clone(), |ix| {
                let (x, y) = (grid.coordinate(ix[0]) * b, grid.coordinate(ix[1]) * b);
                Complex64::new(x.sin() * y.cos(), 0.0)
            });
            let u1 = ndarray::ArrayD::from_shape_fn(shape, |ix| {
                let (x, y) = (grid.coordinate(ix[0]) * b, grid.coordinate(ix[1]) * b);
                Complex64::new(-x.cos() * y.sin(), 0.0)
            });
            vec![u0, u1]
        }
        3 => {
            let u0 = ndarray::ArrayD::from_shape_fn(shape.clone(), |ix| {
                let (x, y, z) = (
                    grid.coordinate(ix[0]) * b,
                    grid.coordinate(ix[1]) * b,
                    grid.coordinate(ix[2]) * b,
                );
                Complex64::new(x.sin() * y.cos() * z.cos(), 0.0)
            });
            let u1 = ndarray::ArrayD::from_shape_fn(shape.clone(), |ix| {
                let (x, y, z) = (
                    grid.coordinate(ix[0]) * b,
                    grid.coordinate(ix[1]) * b,
                    grid.coordinate(ix[2]) * b,
                );
                Complex64::new(-x.cos() * y.sin() * z.cos(), 0.0)
            });
            let u2 = ndarray::ArrayD::zeros(shape);
            vec![u0, u1, u2]
        }
        _ => unreachable!(),
    };
    VectorField::from_physical(*grid, comps)
}

/// Generate a deterministic static velocity-type field with the default
/// spectral decay.
pub fn generate_field(grid: &Grid, kind: FieldKind, seed: u64) -> VectorField {
    generate_field_with_spectrum(grid, kind, seed, default_spectrum_exp(grid.dim()))
}

/// Generate a deterministic static velocity-type field whose random
/// amplitudes decay as `|k|^{-spectrum_exp}`. The exponent is ignored for
/// the (deterministic) cellular vortex.
pub fn generate_field_with_spectrum(
    grid: &Grid,
    kind: FieldKind,
    seed: u64,
    spectrum_exp: f64,
) -> VectorField {
    match kind {
        FieldKind::Random => fill_random(grid, seed, spectrum_exp),
        FieldKind::TaylorGreen => taylor_green(grid),
        FieldKind::Gradient => {
            let phi: ScalarField = fill_random(grid, seed, spectrum_exp);
            gradient(&phi)
        }
        FieldKind::Solenoidal => leray_project(&fill_random(grid, seed, spectrum_exp)),
    }
}

fn profile_value(profile: TimeProfile, t: f64, lam: f64, omega: f64) -> f64 {
    let r = 1.0 + t * lam;
    match profile {
        TimeProfile::InverseSqrt => (omega * r.ln()).cos() / r.sqrt(),
        TimeProfile::Inverse => 1.0 / r,
    }
}

fn fill_space_time<F: FieldData>(
    grid: &Grid,
    times: &[f64],
    profile: TimeProfile,
    seed: u64,
) -> Result<SpaceTimeField<F>> {
    let modes = canonical_modes(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // per component: (mode, base coefficient, oscillation rate, lambda)
    let count = F::component_count(grid.dim());
    let mut draws: Vec<Vec<(usize, Complex64, f64, f64)>> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut per = Vec::with_capacity(modes.len());
        for (mi, m) in modes.iter().enumerate() {
            let w = spectrum_weight(grid, m, default_spectrum_exp(grid.dim()));
            let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * w;
            let omega = rng.gen_range(-2.0..2.0);
            per.push((mi, z, omega, mode_lambda(grid, m)));
        }
        draws.push(per);
    }
    let index_pairs: Vec<(IxDyn, IxDyn)> = modes
        .iter()
        .map(|m| {
            let neg: Vec<i64> = m.iter().map(|&x| -x).collect();
            (mode_index(grid, m), mode_index(grid, &neg))
        })
        .collect();
    let mut slices = Vec::with_capacity(times.len());
    for &t in times {
        let mut slice = F::zeros(*grid);
        for (ci, comp) in slice.components_mut().iter_mut().enumerate() {
            for &(mi, z, omega, lam) in &draws[ci] {
                let p = profile_value(profile, t, lam, omega);
                let v = z * p;
                comp[index_pairs[mi].0.clone()] = v;
                comp[index_pairs[mi].1.clone()] = v.conj();
            }
        }
        slices.push(slice);
    }
    SpaceTimeField::new(times.to_vec(), slices)
}

/// Deterministic space-time vector field (e.g. a mock velocity history).
pub fn space_time_vector(
    grid: &Grid,
    times: &[f64],
    profile: TimeProfile,
    seed: u64,
) -> Result<SpaceTimeField<VectorField>> {
    fill_space_time(grid, times, profile, seed)
}

/// Deterministic space-time tensor field (e.g. a mock momentum flux).
pub fn space_time_tensor(
    grid: &Grid,
    times: &[f64],
    profile: TimeProfile,
    seed: u64,
) -> Result<SpaceTimeField<TensorField>> {
    fill_space_time(grid, times, profile, seed)
}
