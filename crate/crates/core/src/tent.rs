//! Parabolic tent-space functionals on the discrete torus.
//!
//! A space-time field `F(t, y)` sampled on a geometric time grid carries
//! several norms built from parabolic geometry:
//!
//! * cylinder tent norms `T^{infty,p}`: sup over probe balls `B(c, R)` of
//!   the averaged integral of `|F|^p` over the cylinder `B x [0, R^2]`;
//! * the nontangential maximal function `N(F)(x)`: sup of `|F(t, y)|` over
//!   the parabolic cone `d(y, x) <= sqrt(t)`, whose `L^1` norm is the
//!   `T^{1,infty}` norm;
//! * the conical square function `S(F)(x)` and its `L^1` norm (`T^{1,2}`);
//! * the Carleson functional `C(mu)(x)`: sup over probe balls containing
//!   `x` of the tent mass `mu(tent(B)) / |B|`, where `tent(B(c, r))` is the
//!   radial region `d(y, c) + sqrt(t) <= r`;
//! * stopping heights comparing truncated square functions against the
//!   Carleson functional, and the duality pairing checks built from them.
//!
//! Space integrals use the cell measure `h^n`; time integrals use the
//! trapezoid-in-log quadrature of [`TimeQuadrature`] so that every
//! functional is an exact weighted sum over the samples.

use crate::error::{Error, Result};
use crate::field::{FieldData, SpaceTimeField};
use crate::geom::{ball_count, disk_offsets, resolve, Ball, BallConvolver, BallFamily};
use crate::grid::Grid;
use crate::quad::TimeQuadrature;
use ndarray::ArrayD;
use rayon::prelude::*;
use serde::Serialize;

/// Outcome of a ratio check whose denominator can legitimately vanish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CheckOutcome {
    Ratio(f64),
    Vacuous,
}

impl CheckOutcome {
    pub fn ratio(self) -> Option<f64> {
        match self {
            CheckOutcome::Ratio(r) => Some(r),
            CheckOutcome::Vacuous => None,
        }
    }
}

/// One probe ball together with the value a functional took on it.
#[derive(Debug, Clone, Serialize)]
pub struct BallValue {
    pub ball: Ball,
    pub value: f64,
}

/// Result of a tent-norm evaluation: the norm, the maximizing ball, and the
/// full per-ball table.
#[derive(Debug, Clone, Serialize)]
pub struct TentNormReport {
    pub p: f64,
    pub value: f64,
    pub argmax: Ball,
    pub table: Vec<BallValue>,
}

fn validate_family(family: &BallFamily) -> Result<()> {
    if family.balls.is_empty() {
        return Err(Error::EmptyFamily);
    }
    Ok(())
}

fn validate_nonempty<F: FieldData>(u: &SpaceTimeField<F>) -> Result<()> {
    if u.is_empty() {
        return Err(Error::BadParameter {
            what: "space-time field",
            detail: "no time slices".into(),
        });
    }
    Ok(())
}

/// Physical magnitudes `|F_j(y)|` of every slice.
fn magnitudes<F: FieldData>(u: &SpaceTimeField<F>) -> Vec<ArrayD<f64>> {
    u.slices().iter().map(|s| s.magnitude_physical()).collect()
}

/// The `T^{infty,p}` tent norm: `value^p` is the sup over the probe family
/// of `(1/|B|) int_{B x [0, R^2]} |F|^p dy dt`.
pub fn tent_norm<F: FieldData>(
    u: &SpaceTimeField<F>,
    p: f64,
    family: &BallFamily,
) -> Result<TentNormReport> {
    validate_family(family)?;
    validate_nonempty(u)?;
    if p <= 0.0 {
        return Err(Error::BadParameter {
            what: "tent norm exponent",
            detail: format!("p = {p} must be positive"),
        });
    }
    let grid = *u.grid();
    let quad = TimeQuadrature::from_times(u.times());
    let mags: Vec<ArrayD<f64>> = magnitudes(u)
        .into_iter()
        .map(|m| if (p - 1.0).abs() < 1e-15 { m } else { m.mapv(|v| v.powf(p)) })
        .collect();
    let conv = BallConvolver::new(grid);
    // For each probe radius, collapse the time integral first (the weights
    // depend only on the radius), then take one ball convolution.
    let mut per_radius: Vec<(f64, ArrayD<f64>, usize)> = Vec::new();
    for radius in family.radii() {
        let w = quad.weights_to(radius * radius);
        let mut collapsed = ArrayD::<f64>::zeros(mags[0].raw_dim());
        for (mag, &wj) in mags.iter().zip(&w) {
            if wj != 0.0 {
                collapsed.zip_mut_with(mag, |c, &m| *c += wj * m);
            }
        }
        let sums = conv.disk_sums(&collapsed, radius);
        per_radius.push((radius, sums, ball_count(&grid, radius)));
    }
    let mut table = Vec::with_capacity(family.balls.len());
    let mut best: Option<(f64, Ball)> = None;
    for ball in &family.balls {
        let (_, sums, count) = per_radius
            .iter()
            .find(|(r, _, _)| (*r - ball.radius).abs() <= 1e-12 * ball.radius)
            .expect("family radius list covers every ball");
        let flat = grid.flatten(&ball.center);
        let avg = (sums.as_slice().unwrap()[flat] / *count as f64).max(0.0);
        let value = avg.powf(1.0 / p);
        table.push(BallValue { ball: ball.clone(), value });
        if best.as_ref().map_or(true, |(v, _)| value > *v) {
            best = Some((value, ball.clone()));
        }
    }
    let (value, argmax) = best.unwrap();
    Ok(TentNormReport { p, value, argmax, table })
}

/// Solution-space norm: `max_t sqrt(t) sup |u|  +  tent_norm(u, 2)`.
pub fn x_norm<F: FieldData>(u: &SpaceTimeField<F>, family: &BallFamily) -> Result<f64> {
    validate_nonempty(u)?;
    let sup = u
        .times()
        .iter()
        .zip(u.slices())
        .map(|(&t, s)| t.sqrt() * s.linf_norm())
        .fold(0.0f64, f64::max);
    Ok(sup + tent_norm(u, 2.0, family)?.value)
}

/// Forcing-space norm: `max_t t sup |alpha|  +  tent_norm(alpha, 1)`.
pub fn y_norm<F: FieldData>(alpha: &SpaceTimeField<F>, family: &BallFamily) -> Result<f64> {
    validate_nonempty(alpha)?;
    let sup = alpha
        .times()
        .iter()
        .zip(alpha.slices())
        .map(|(&t, s)| t * s.linf_norm())
        .fold(0.0f64, f64::max);
    Ok(sup + tent_norm(alpha, 1.0, family)?.value)
}

fn wrap(i: i64, n: i64) -> usize {
    let mut v = i;
    if v >= n {
        v -= n;
    } else if v < 0 {
        v += n;
    }
    v as usize
}

/// Nontangential maximal function `N(u)(x) = sup { |u(t,y)| : d(y,x) <= sqrt(t) }`.
pub fn nontangential_max<F: FieldData>(u: &SpaceTimeField<F>) -> ArrayD<f64> {
    let grid = *u.grid();
    let mags = magnitudes(u);
    let radii: Vec<f64> = u.times().iter().map(|t| t.sqrt()).collect();
    // suffix[j](y) = max over j' >= j of |u_{j'}(y)|: a point y at distance
    // d from x contributes to N(x) through every slice with sqrt(t_j) >= d.
    let mut suffix: Vec<Vec<f64>> = Vec::with_capacity(mags.len());
    let mut running: Option<Vec<f64>> = None;
    for mag in mags.iter().rev() {
        let flat = mag.as_slice().unwrap();
        let next = match &running {
            None => flat.to_vec(),
            Some(prev) => flat.iter().zip(prev).map(|(&a, &b)| a.max(b)).collect(),
        };
        suffix.push(next.clone());
        running = Some(next);
    }
    suffix.reverse();
    // Offsets of the widest cone slice, each tagged with the first slice
    // index whose cone radius reaches it.
    let offsets: Vec<(usize, Vec<i64>)> = disk_offsets(&grid, *radii.last().unwrap())
        .into_iter()
        .filter_map(|(off, dist)| {
            let jmin = radii.partition_point(|&r| r < dist * (1.0 - 1e-12));
            (jmin < radii.len()).then_some((jmin, off))
        })
        .collect();
    let n = grid.size() as i64;
    let dim = grid.dim();
    let row_len = grid.cell_count() / grid.size();
    let mut out = vec![0.0f64; grid.cell_count()];
    out.par_chunks_mut(row_len).enumerate().for_each(|(i0, row)| {
        for (jmin, off) in &offsets {
            let suf = &suffix[*jmin];
            let s0 = wrap(i0 as i64 + off[0], n);
            match dim {
                2 => {
                    let base = s0 * grid.size();
                    for i1 in 0..grid.size() {
                        let s1 = wrap(i1 as i64 + off[1], n);
                        let v = suf[base + s1];
                        if v > row[i1] {
                            row[i1] = v;
                        }
                    }
                }
                3 => {
                    for i1 in 0..grid.size() {
                        let s1 = wrap(i1 as i64 + off[1], n);
                        let base = (s0 * grid.size() + s1) * grid.size();
                        let out_base = i1 * grid.size();
                        for i2 in 0..grid.size() {
                            let s2 = wrap(i2 as i64 + off[2], n);
                            let v = suf[base + s2];
                            if v > row[out_base + i2] {
                                row[out_base + i2] = v;
                            }
                        }
                    }
                }
                _ => unreachable!("grid dimension is validated at construction"),
            }
        }
    });
    ArrayD::from_shape_vec(mags[0].raw_dim(), out).unwrap()
}

/// `T^{1,infty}` norm: `L^1` norm of the nontangential maximal function.
pub fn t1inf_norm<F: FieldData>(u: &SpaceTimeField<F>) -> f64 {
    let grid = *u.grid();
    nontangential_max(u).sum() * grid.cell_volume()
}

/// Conical square function
/// `S(u)(x)^2 = int_{cone(x)} |u(t,y)|^2 dy dt / t^{n/2}`, optionally
/// truncated to heights `sqrt(t) <= height` (same weights, fewer terms).
pub fn square_function<F: FieldData>(u: &SpaceTimeField<F>, height: Option<f64>) -> ArrayD<f64> {
    let grid = *u.grid();
    let quad = TimeQuadrature::from_times(u.times());
    let w = quad.full_weights();
    let conv = BallConvolver::new(grid);
    let mut acc = ArrayD::<f64>::zeros(ndarray::IxDyn(&grid.shape()));
    let hn = grid.cell_volume();
    let half_dim = grid.dim() as f64 / 2.0;
    for (j, (&t, slice)) in u.times().iter().zip(u.slices()).enumerate() {
        let st = t.sqrt();
        if let Some(cap) = height {
            if st > cap * (1.0 + 1e-12) {
                break;
            }
        }
        let mag2 = slice.magnitude_physical().mapv(|v| v * v);
        let sums = conv.disk_sums(&mag2, st);
        let factor = w[j] * hn / t.powf(half_dim);
        acc.zip_mut_with(&sums, |a, &s| *a += factor * s);
    }
    acc.mapv(|v| v.max(0.0).sqrt())
}

/// `T^{1,2}` norm: `L^1` norm of the conical square function.
pub fn t12_norm<F: FieldData>(u: &SpaceTimeField<F>) -> f64 {
    let grid = *u.grid();
    square_function(u, None).sum() * grid.cell_volume()
}

/// Carleson functional of a nonnegative space-time density:
/// `C(mu)(x) = sup { mu(tent(B)) / |B| : B in family, x in B }`, with the
/// radial tent `tent(B(c, r)) = {(t, y) : d(y, c) + sqrt(t) <= r}`.
pub fn carleson_functional(
    grid: &Grid,
    times: &[f64],
    mu: &[ArrayD<f64>],
    family: &BallFamily,
) -> Result<ArrayD<f64>> {
    validate_family(family)?;
    if times.is_empty() || times.len() != mu.len() {
        return Err(Error::BadParameter {
            what: "carleson density",
            detail: format!("{} times vs {} slices", times.len(), mu.len()),
        });
    }
    let npts = grid.cell_count();
    for m in mu {
        if m.len() != npts {
            return Err(Error::GridMismatch);
        }
    }
    let quad = TimeQuadrature::from_times(times);
    let nt = times.len();
    // Per-point sample and prefix tables, point-major for cache locality.
    let mut samples = vec![0.0f64; npts * nt];
    for (j, m) in mu.iter().enumerate() {
        let flat = m.as_slice().unwrap();
        for (y, &v) in flat.iter().enumerate() {
            samples[y * nt + j] = v;
        }
    }
    let prefixes: Vec<f64> = (0..npts)
        .into_par_iter()
        .flat_map_iter(|y| quad.prefix(&samples[y * nt..(y + 1) * nt]).into_iter())
        .collect();
    // Offsets per radius, shared across balls.
    let radii = family.radii();
    let offsets_by_radius: Vec<(f64, Vec<(Vec<i64>, f64)>)> =
        radii.iter().map(|&r| (r, disk_offsets(grid, r))).collect();
    let hn = grid.cell_volume();
    // Tent mass of every family ball.
    let masses: Vec<f64> = family
        .balls
        .par_iter()
        .map(|ball| {
            let offs = &offsets_by_radius
                .iter()
                .find(|(r, _)| (*r - ball.radius).abs() <= 1e-12 * ball.radius)
                .expect("family radius list covers every ball")
                .1;
            let mut mass = 0.0;
            for (off, dist) in offs {
                let y = resolve(grid, &ball.center, off);
                let depth = ball.radius - dist;
                if depth <= 0.0 {
                    continue;
                }
                let t_end = depth * depth;
                mass += quad.eval_from_prefix(
                    &prefixes[y * nt..(y + 1) * nt],
                    &samples[y * nt..(y + 1) * nt],
                    t_end,
                );
            }
            mass * hn
        })
        .collect();
    // Distribute ball averages to members: C(x) = max over balls containing x.
    let mut out = vec![0.0f64; npts];
    for (ball, &mass) in family.balls.iter().zip(&masses) {
        let offs = &offsets_by_radius
            .iter()
            .find(|(r, _)| (*r - ball.radius).abs() <= 1e-12 * ball.radius)
            .unwrap()
            .1;
        let val = mass / (offs.len() as f64 * hn);
        for (off, _) in offs {
            let x = resolve(grid, &ball.center, off);
            if val > out[x] {
                out[x] = val;
            }
        }
    }
    Ok(ArrayD::from_shape_vec(ndarray::IxDyn(&grid.shape()), out).unwrap())
}

/// `C_2(F) = sqrt(C(|F|^2))`, the functional dual to the square function.
pub fn c2_functional<F: FieldData>(
    u: &SpaceTimeField<F>,
    family: &BallFamily,
) -> Result<ArrayD<f64>> {
    validate_nonempty(u)?;
    let mu: Vec<ArrayD<f64>> =
        magnitudes(u).into_iter().map(|m| m.mapv(|v| v * v)).collect();
    let c = carleson_functional(u.grid(), u.times(), &mu, family)?;
    Ok(c.mapv(|v| v.max(0.0).sqrt()))
}

/// Space-time integral `int int |H| dmu` against the quadrature weights.
fn st_mass_against<F: FieldData>(h: &SpaceTimeField<F>, mu: &[ArrayD<f64>]) -> f64 {
    let grid = *h.grid();
    let quad = TimeQuadrature::from_times(h.times());
    let w = quad.full_weights();
    let hn = grid.cell_volume();
    let mut total = 0.0;
    for ((slice, m), &wj) in h.slices().iter().zip(mu).zip(&w) {
        let mag = slice.magnitude_physical();
        let dot: f64 = mag.iter().zip(m.iter()).map(|(&a, &b)| a * b).sum();
        total += wj * dot * hn;
    }
    total
}

/// Carleson embedding check: the ratio
/// `int int |H| dmu  /  int N(H) C(mu) dx`, vacuous when the denominator
/// vanishes.
pub fn carleson_embedding_check(
    h: &SpaceTimeField<crate::field::VectorField>,
    mu: &[ArrayD<f64>],
    family: &BallFamily,
) -> Result<CheckOutcome> {
    validate_nonempty(h)?;
    if mu.len() != h.len() {
        return Err(Error::BadParameter {
            what: "carleson density",
            detail: format!("{} slices vs {} field slices", mu.len(), h.len()),
        });
    }
    let grid = *h.grid();
    let num = st_mass_against(h, mu);
    let nh = nontangential_max(h);
    let cmu = carleson_functional(&grid, h.times(), mu, family)?;
    let den: f64 =
        nh.iter().zip(cmu.iter()).map(|(&a, &b)| a * b).sum::<f64>() * grid.cell_volume();
    if den <= 0.0 {
        return Ok(CheckOutcome::Vacuous);
    }
    Ok(CheckOutcome::Ratio(num / den))
}

/// Stopping height `h(x)`: the largest sampled height `sqrt(t_j)` such that
/// the truncated square function stays below `nu * C_2(F)(x)`; zero when
/// even the lowest slice exceeds the threshold.
pub fn stopping_height<F: FieldData>(
    u: &SpaceTimeField<F>,
    nu: f64,
    family: &BallFamily,
) -> Result<ArrayD<f64>> {
    validate_nonempty(u)?;
    if nu <= 0.0 {
        return Err(Error::NonPositive { what: "stopping constant", value: nu });
    }
    let grid = *u.grid();
    let mu: Vec<ArrayD<f64>> =
        magnitudes(u).into_iter().map(|m| m.mapv(|v| v * v)).collect();
    let carl = carleson_functional(&grid, u.times(), &mu, family)?;
    let thr2 = carl.mapv(|v| nu * nu * v.max(0.0));
    let quad = TimeQuadrature::from_times(u.times());
    let w = quad.full_weights();
    let conv = BallConvolver::new(grid);
    let hn = grid.cell_volume();
    let half_dim = grid.dim() as f64 / 2.0;
    let mut acc = ArrayD::<f64>::zeros(ndarray::IxDyn(&grid.shape()));
    let mut height = ArrayD::<f64>::zeros(ndarray::IxDyn(&grid.shape()));
    for (j, (&t, mag2)) in u.times().iter().zip(&mu).enumerate() {
        let st = t.sqrt();
        let sums = conv.disk_sums(mag2, st);
        let factor = w[j] * hn / t.powf(half_dim);
        acc.zip_mut_with(&sums, |a, &s| *a += factor * s);
        let acc_flat = acc.as_slice().unwrap();
        let thr_flat = thr2.as_slice().unwrap();
        let h_flat = height.as_slice_mut().unwrap();
        for ((&a, &th), hv) in acc_flat.iter().zip(thr_flat).zip(h_flat.iter_mut()) {
            if a <= th * (1.0 + 1e-12) {
                *hv = st;
            }
        }
    }
    Ok(height)
}

/// For every family ball, the fraction of its points whose stopping height
/// reaches the ball radius. The stopping-time argument needs this fraction
/// to stay near one for a large threshold constant.
pub fn stopping_set_fractions<F: FieldData>(
    u: &SpaceTimeField<F>,
    nu: f64,
    family: &BallFamily,
) -> Result<Vec<BallValue>> {
    validate_family(family)?;
    let grid = *u.grid();
    let height = stopping_height(u, nu, family)?;
    let h_flat = height.as_slice().unwrap();
    let mut out = Vec::with_capacity(family.balls.len());
    for ball in &family.balls {
        let offs = disk_offsets(&grid, ball.radius);
        let total = offs.len();
        let mut good = 0usize;
        for (off, _) in &offs {
            let x = resolve(&grid, &ball.center, off);
            if h_flat[x] >= ball.radius * (1.0 - 1e-12) {
                good += 1;
            }
        }
        out.push(BallValue { ball: ball.clone(), value: good as f64 / total as f64 });
    }
    Ok(out)
}

/// Duality pairing check: the ratio
/// `int int |F| |G|  /  int C_2(F) S(G) dx`, vacuous when the denominator
/// vanishes.
pub fn pairing_check<F: FieldData, G: FieldData>(
    f: &SpaceTimeField<F>,
    g: &SpaceTimeField<G>,
    family: &BallFamily,
) -> Result<CheckOutcome> {
    validate_nonempty(f)?;
    validate_nonempty(g)?;
    let grid = *f.grid();
    let mu_g: Vec<ArrayD<f64>> = magnitudes(g);
    let num = st_mass_against(f, &mu_g);
    let c2f = c2_functional(f, family)?;
    let sg = square_function(g, None);
    let den: f64 =
        c2f.iter().zip(sg.iter()).map(|(&a, &b)| a * b).sum::<f64>() * grid.cell_volume();
    if den <= 0.0 {
        return Ok(CheckOutcome::Vacuous);
    }
    Ok(CheckOutcome::Ratio(num / den))
}

/// Discrete maximal average over the probe family:
/// `M(v)(x) = max over family balls containing x of the ball average of |v|`.
pub fn hl_maximal(grid: &Grid, values: &ArrayD<f64>, family: &BallFamily) -> Result<ArrayD<f64>> {
    validate_family(family)?;
    if values.len() != grid.cell_count() {
        return Err(Error::GridMismatch);
    }
    let conv = BallConvolver::new(*grid);
    let abs = values.mapv(f64::abs);
    let mut out = vec![0.0f64; grid.cell_count()];
    for radius in family.radii() {
        let sums = conv.disk_sums(&abs, radius);
        let sums_flat = sums.as_slice().unwrap();
        let offs = disk_offsets(grid, radius);
        let count = offs.len() as f64;
        for ball in family.balls.iter().filter(|b| (b.radius - radius).abs() <= 1e-12 * radius) {
            let avg = sums_flat[grid.flatten(&ball.center)] / count;
            for (off, _) in &offs {
                let x = resolve(grid, &ball.center, off);
                if avg > out[x] {
                    out[x] = avg;
                }
            }
        }
    }
    Ok(ArrayD::from_shape_vec(ndarray::IxDyn(&grid.shape()), out).unwrap())
}
