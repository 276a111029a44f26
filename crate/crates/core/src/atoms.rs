//! Constructive atomic decomposition of space-time fields, Hardy-space
//! norms, and molecule validation.
//!
//! A (parabolic) atom is a space-time field `a` supported in the radial tent
//! of some ball `B` with `‖a‖_{L²(space-time)} ≤ |B|^{−1/2}`. The
//! decomposition writes a space-time field `G` as `Σ λ_j a_j` exactly:
//!
//! 1. level sets `O_k = {S(G) > 2^k}` of the conical square function,
//!    from the top level down;
//! 2. enlarged sets `O*_k = O_k ∪ {M 1_{O_k} > γ}`, where `M` is the
//!    maximal average over probe balls containing the point with radii
//!    taken from the sampled cone heights — so that leaving the tent of
//!    `O*_{k+1}` certifies that a definite fraction of the local ball lies
//!    outside `O_{k+1}`;
//! 3. a Whitney decomposition of each `O*_k` into dyadic cubes with
//!    enclosing balls `B_j^k`;
//! 4. regions `Δ_j^k = tent(B_j^k) ∩ ((0,∞)×Q_j^k) ∩
//!    (tent(O*_k) \ tent(O*_{k+1}))`, which partition the space-time
//!    support of `G`; the piece of `G` on each region, normalized, is one
//!    atom.
//!
//! Mass at heights beyond the reach of in-torus balls (or left over when
//! the level cap is hit) goes to a single fallback atom on a ball large
//! enough that its tent contains the whole space-time slab.

use crate::error::{Error, Result};
use crate::field::{
    grad_vector, FieldData, ScalarField, SpaceTimeField, TensorField, VectorField,
};
use crate::geom::{ball_count, disk_offsets, resolve, Ball, BallConvolver};
use crate::grid::Grid;
use crate::ops::{heat_evolve, leray_project};
use crate::quad::TimeQuadrature;
use crate::tent::{nontangential_max, square_function, t1inf_norm, CheckOutcome};
use crate::whitney::whitney_decompose;
use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;
use serde::Serialize;

/// Default dilation threshold for the enlarged level sets.
pub const DEFAULT_GAMMA: f64 = 0.25;
/// Default cap on the number of processed levels.
pub const DEFAULT_LEVEL_CAP: usize = 24;

/// Fraction of a probe ball that a single overlapping ball of equal radius
/// can fail to cover (measured on the discrete lattice); the dilation
/// threshold must stay below one minus this deficit.
pub fn overlap_deficit(dim: usize) -> f64 {
    match dim {
        2 => 0.609,
        _ => 0.6875,
    }
}

/// Admissible upper bound for the dilation threshold γ.
pub fn gamma_upper_bound(dim: usize) -> f64 {
    1.0 - overlap_deficit(dim)
}

/// One space-time sample belonging to an atom: slice index, flattened cell,
/// and the (vector) value of the atom there.
#[derive(Debug, Clone)]
pub struct AtomEntry {
    pub slice: usize,
    pub cell: usize,
    pub value: Vec<Complex64>,
}

/// A normalized piece of the decomposed field, supported in the tent of its
/// ball.
#[derive(Debug, Clone)]
pub struct Atom {
    pub ball: Ball,
    pub lambda: f64,
    pub level: i32,
    pub entries: Vec<AtomEntry>,
}

/// Manifest row for an atom (entries elided).
#[derive(Debug, Clone, Serialize)]
pub struct AtomSummary {
    pub ball: Ball,
    pub lambda: f64,
    pub level: i32,
    pub region_size: usize,
}

/// Result of decomposing a space-time field into atoms.
#[derive(Debug, Clone)]
pub struct AtomicDecomposition {
    pub grid: Grid,
    pub times: Vec<f64>,
    pub atoms: Vec<Atom>,
    pub lambda_sum: f64,
    pub snorm_l1: f64,
    pub levels_used: usize,
    pub gamma: f64,
    pub fallback_used: bool,
    /// Smallest sampled value of `|B(y,√t) ∩ B_j ∩ O_{k+1}^c| / t^{n/2}`
    /// over atom entries; the construction guarantees at least `1 − γ`.
    pub measure_ratio_min: Option<f64>,
}

impl AtomicDecomposition {
    pub fn summary(&self) -> Vec<AtomSummary> {
        self.atoms
            .iter()
            .map(|a| AtomSummary {
                ball: a.ball.clone(),
                lambda: a.lambda,
                level: a.level,
                region_size: a.entries.len(),
            })
            .collect()
    }

    /// Ratio `Σ λ / ‖S(G)‖_{L¹}` (None when the input was zero).
    pub fn lambda_ratio(&self) -> Option<f64> {
        (self.snorm_l1 > 0.0).then(|| self.lambda_sum / self.snorm_l1)
    }

    /// Sum `Σ λ_j a_j` as a dense space-time field; equals the decomposed
    /// field exactly.
    pub fn reconstruct(&self) -> Result<SpaceTimeField<VectorField>> {
        let shape = IxDyn(&self.grid.shape());
        let dim = self.grid.dim();
        let mut phys: Vec<Vec<ArrayD<Complex64>>> = (0..self.times.len())
            .map(|_| (0..dim).map(|_| ArrayD::zeros(shape.clone())).collect())
            .collect();
        for atom in &self.atoms {
            for e in &atom.entries {
                for (c, &v) in e.value.iter().enumerate() {
                    phys[e.slice][c].as_slice_mut().unwrap()[e.cell] += atom.lambda * v;
                }
            }
        }
        let slices: Vec<VectorField> = phys
            .into_iter()
            .map(|p| VectorField::from_physical(self.grid, p))
            .collect();
        SpaceTimeField::new(self.times.clone(), slices)
    }
}

/// Validation outcome for a single atom.
#[derive(Debug, Clone, Serialize)]
pub struct AtomCheck {
    pub support_ok: bool,
    pub l2_value: f64,
    pub l2_bound: f64,
    pub pass: bool,
}

/// Check the two defining properties of an atom: support inside the radial
/// tent of its ball, and space-time `L²` norm at most `|B|^{−1/2}`.
pub fn atom_validate(grid: &Grid, times: &[f64], atom: &Atom) -> AtomCheck {
    let quad = TimeQuadrature::from_times(times);
    let w = quad.full_weights();
    let hn = grid.cell_volume();
    let center_phys: Vec<f64> = atom
        .ball
        .center
        .iter()
        .map(|&c| c as f64 * grid.spacing())
        .collect();
    let mut support_ok = true;
    let mut l2sq = 0.0;
    let mut idx = vec![0usize; grid.dim()];
    for e in &atom.entries {
        grid.unflatten(e.cell, &mut idx);
        let d = grid.torus_dist_to(&idx, &center_phys);
        if d + times[e.slice].sqrt() > atom.ball.radius * (1.0 + 1e-12) {
            support_ok = false;
        }
        let mag2: f64 = e.value.iter().map(|v| v.norm_sqr()).sum();
        l2sq += w[e.slice] * hn * mag2;
    }
    let l2_value = l2sq.sqrt();
    let l2_bound = 1.0 / atom.ball.measure(grid).sqrt();
    let pass = support_ok && l2_value <= l2_bound * (1.0 + 1e-10);
    AtomCheck { support_ok, l2_value, l2_bound, pass }
}

/// The atom as a dense space-time field (not scaled by λ).
pub fn atom_field(
    grid: &Grid,
    times: &[f64],
    atom: &Atom,
) -> Result<SpaceTimeField<VectorField>> {
    let shape = IxDyn(&grid.shape());
    let dim = grid.dim();
    let mut phys: Vec<Vec<ArrayD<Complex64>>> = (0..times.len())
        .map(|_| (0..dim).map(|_| ArrayD::zeros(shape.clone())).collect())
        .collect();
    for e in &atom.entries {
        for (c, &v) in e.value.iter().enumerate() {
            phys[e.slice][c].as_slice_mut().unwrap()[e.cell] += v;
        }
    }
    let slices: Vec<VectorField> =
        phys.into_iter().map(|p| VectorField::from_physical(*grid, p)).collect();
    SpaceTimeField::new(times.to_vec(), slices)
}

/// A normalized indicator atom: constant on the radial tent of the ball,
/// zero elsewhere, scaled so the space-time `L²` norm equals `|B|^{−1/2}`
/// exactly.
pub fn indicator_atom(
    grid: &Grid,
    times: &[f64],
    ball: &Ball,
) -> Result<SpaceTimeField<VectorField>> {
    let quad = TimeQuadrature::from_times(times);
    let w = quad.full_weights();
    let hn = grid.cell_volume();
    let offs = disk_offsets(grid, ball.radius);
    let mut members: Vec<Vec<usize>> = Vec::with_capacity(times.len());
    let mut volume = 0.0;
    for (j, &t) in times.iter().enumerate() {
        let reach = ball.radius - t.sqrt();
        let cells: Vec<usize> = offs
            .iter()
            .filter(|(_, d)| *d <= reach * (1.0 + 1e-12))
            .map(|(off, _)| resolve(grid, &ball.center, off))
            .collect();
        volume += w[j] * hn * cells.len() as f64;
        members.push(cells);
    }
    if volume <= 0.0 {
        return Err(Error::BadParameter {
            what: "indicator atom ball",
            detail: format!(
                "tent of radius {} contains no sample at or above the first time slice",
                ball.radius
            ),
        });
    }
    let v = 1.0 / (ball.measure(grid) * volume).sqrt();
    let shape = IxDyn(&grid.shape());
    let dim = grid.dim();
    let slices: Vec<VectorField> = members
        .iter()
        .map(|cells| {
            let mut comp0 = ArrayD::<Complex64>::zeros(shape.clone());
            let flat = comp0.as_slice_mut().unwrap();
            for &c in cells {
                flat[c] = Complex64::new(v, 0.0);
            }
            let mut comps = vec![comp0];
            for _ in 1..dim {
                comps.push(ArrayD::zeros(shape.clone()));
            }
            VectorField::from_physical(*grid, comps)
        })
        .collect();
    SpaceTimeField::new(times.to_vec(), slices)
}

/// Enlarged level set `O ∪ {M 1_O > γ}` where `M` is the maximal ball
/// average over the given radii (balls containing the point).
fn enlarge_level_set(
    grid: &Grid,
    conv: &BallConvolver,
    o: &ArrayD<bool>,
    radii: &[f64],
    gamma: f64,
) -> ArrayD<bool> {
    let mut star = o.clone();
    let total = grid.cell_count();
    for &r in radii {
        if star.iter().filter(|&&b| b).count() == total {
            break;
        }
        let counts = conv.mask_counts(o, r);
        let v = ball_count(grid, r) as f64;
        let thr = gamma * v;
        let high = counts.mapv(|c| c > thr + 1e-7);
        if !high.iter().any(|&b| b) {
            continue;
        }
        let edt2 = crate::geom::torus_edt_sq(grid, &high);
        let r2 = r * r * (1.0 + 1e-12);
        star.zip_mut_with(&edt2, |s, &d2| *s = *s || d2 <= r2);
    }
    star
}

struct LevelContext {
    /// squared distance to the complement of the current enlarged set
    tent_edt2: ArrayD<f64>,
    /// the raw level set (for the measure lower bound)
    level_set: ArrayD<bool>,
}

/// Decompose a space-time field into atoms. `gamma` is the dilation
/// threshold (admissible range depends on the dimension); `level_cap`
/// bounds the number of processed levels, with leftovers collected by the
/// fallback atom.
pub fn atomic_decompose(
    g: &SpaceTimeField<VectorField>,
    gamma: f64,
    level_cap: usize,
) -> Result<AtomicDecomposition> {
    let grid = *g.grid();
    let times = g.times().to_vec();
    if times.is_empty() {
        return Err(Error::BadParameter {
            what: "space-time field",
            detail: "no time slices".into(),
        });
    }
    let gmax = gamma_upper_bound(grid.dim());
    if !(gamma > 0.0 && gamma < gmax) {
        return Err(Error::BadParameter {
            what: "dilation threshold",
            detail: format!("gamma = {gamma} outside (0, {gmax})"),
        });
    }
    if level_cap == 0 {
        return Err(Error::BadParameter {
            what: "level cap",
            detail: "must be at least 1".into(),
        });
    }
    let quad = TimeQuadrature::from_times(&times);
    let w = quad.full_weights();
    let hn = grid.cell_volume();
    let dim = grid.dim();
    let npts = grid.cell_count();
    let nt = times.len();
    let s_arr = square_function(g, None);
    let snorm_l1 = s_arr.sum() * hn;
    let phys: Vec<Vec<ArrayD<Complex64>>> = g.slices().iter().map(|s| s.to_physical()).collect();
    let mag2: Vec<Vec<f64>> = phys
        .iter()
        .map(|comps| {
            let mut m = vec![0.0f64; npts];
            for comp in comps {
                for (mv, &cv) in m.iter_mut().zip(comp.as_slice().unwrap()) {
                    *mv += cv.norm_sqr();
                }
            }
            m
        })
        .collect();
    let total_nonzero: usize =
        mag2.iter().map(|m| m.iter().filter(|&&v| v > 0.0).count()).sum();
    let mut decomp = AtomicDecomposition {
        grid,
        times: times.clone(),
        atoms: Vec::new(),
        lambda_sum: 0.0,
        snorm_l1,
        levels_used: 0,
        gamma,
        fallback_used: false,
        measure_ratio_min: None,
    };
    if total_nonzero == 0 {
        return Ok(decomp);
    }
    let radii: Vec<f64> = times.iter().map(|t| t.sqrt()).collect();
    let conv = BallConvolver::new(grid);
    let smax = s_arr.iter().cloned().fold(0.0f64, f64::max);
    let mut k = smax.log2().floor() as i32;
    let mut prev: Option<LevelContext> = None;
    let mut assigned = vec![vec![false; npts]; nt];
    let mut assigned_count = 0usize;
    let half_dim = dim as f64 / 2.0;
    let mut ratio_min = f64::INFINITY;
    // Membership of (t_j, y) in the tent of the previous (higher) level's
    // enlarged set; entries outside it and inside the current tent form the
    // current shell.
    let in_prev_tent = |prev: &Option<LevelContext>, y: usize, t: f64| -> bool {
        prev.as_ref()
            .map_or(false, |p| p.tent_edt2.as_slice().unwrap()[y] >= t * (1.0 - 1e-12))
    };
    // Lower bound witness: |B(y,√t) ∩ B_atom ∩ (previous level set)^c| / t^{n/2}.
    let spot_ratio = |prev: &Option<LevelContext>,
                      ball: &Ball,
                      y_idx: &[usize],
                      j: usize|
     -> f64 {
        let st = radii[j];
        let ball_center_phys: Vec<f64> =
            ball.center.iter().map(|&c| c as f64 * grid.spacing()).collect();
        let mut count = 0usize;
        let mut idx = vec![0usize; dim];
        for (off, _) in disk_offsets(&grid, st) {
            let z = resolve(&grid, y_idx, &off);
            grid.unflatten(z, &mut idx);
            if grid.torus_dist_to(&idx, &ball_center_phys) > ball.radius * (1.0 + 1e-12) {
                continue;
            }
            let in_level = prev
                .as_ref()
                .map_or(false, |p| p.level_set.as_slice().unwrap()[z]);
            if !in_level {
                count += 1;
            }
        }
        count as f64 * hn / times[j].powf(half_dim)
    };
    loop {
        decomp.levels_used += 1;
        let over_cap = decomp.levels_used > level_cap;
        let threshold = 2.0f64.powi(k);
        let o_k = s_arr.mapv(|s| s > threshold);
        let inside = o_k.iter().filter(|&&b| b).count();
        if !over_cap && inside == 0 {
            k -= 1;
            decomp.levels_used -= 1;
            continue;
        }
        let o_star = if over_cap {
            ArrayD::from_elem(IxDyn(&grid.shape()), true)
        } else {
            enlarge_level_set(&grid, &conv, &o_k, &radii, gamma)
        };
        let star_inside = o_star.iter().filter(|&&b| b).count();
        if over_cap || star_inside == npts {
            // Fallback: one atom on a ball whose tent holds the whole slab.
            let tmax = *times.last().unwrap();
            let l = grid.box_len();
            let ball = Ball {
                center: vec![0; dim],
                radius: tmax.sqrt() + (dim as f64).sqrt() * l / 2.0 + grid.spacing(),
            };
            let mut entries = Vec::new();
            let mut mu = 0.0;
            for j in 0..nt {
                for y in 0..npts {
                    if assigned[j][y] || mag2[j][y] == 0.0 {
                        continue;
                    }
                    mu += w[j] * hn * mag2[j][y];
                    entries.push((j, y));
                }
            }
            if mu > 0.0 {
                let bmeas = ball.measure(&grid);
                let scale = 1.0 / (bmeas * mu).sqrt();
                let lambda = (bmeas * mu).sqrt();
                let mut idx = vec![0usize; dim];
                for (pos, &(j, y)) in entries.iter().enumerate() {
                    if pos % (entries.len() / 3 + 1) == 0 {
                        grid.unflatten(y, &mut idx);
                        ratio_min = ratio_min.min(spot_ratio(&prev, &ball, &idx, j));
                    }
                }
                let atom_entries: Vec<AtomEntry> = entries
                    .iter()
                    .map(|&(j, y)| AtomEntry {
                        slice: j,
                        cell: y,
                        value: (0..dim)
                            .map(|c| phys[j][c].as_slice().unwrap()[y] * scale)
                            .collect(),
                    })
                    .collect();
                decomp.lambda_sum += lambda;
                decomp.atoms.push(Atom { ball, lambda, level: k, entries: atom_entries });
                decomp.fallback_used = true;
            }
            break;
        }
        let complement = o_star.mapv(|b| !b);
        let tent_edt2 = crate::geom::torus_edt_sq(&grid, &complement);
        let cover = whitney_decompose(&grid, &o_star)?;
        let tent_flat = tent_edt2.as_slice().unwrap();
        for wc in &cover.cubes {
            let ball = wc.ball.clone();
            let center_phys: Vec<f64> =
                ball.center.iter().map(|&c| c as f64 * grid.spacing()).collect();
            let cells = wc.cube.cells(&grid);
            let mut idx = vec![0usize; dim];
            let cell_dists: Vec<f64> = cells
                .iter()
                .map(|&c| {
                    grid.unflatten(c, &mut idx);
                    grid.torus_dist_to(&idx, &center_phys)
                })
                .collect();
            let mut region: Vec<(usize, usize)> = Vec::new();
            let mut mu = 0.0;
            for (j, (&t, &st)) in times.iter().zip(&radii).enumerate() {
                for (&y, &d) in cells.iter().zip(&cell_dists) {
                    if tent_flat[y] < t * (1.0 - 1e-12)
                        || in_prev_tent(&prev, y, t)
                        || d + st > ball.radius * (1.0 + 1e-12)
                    {
                        continue;
                    }
                    debug_assert!(!assigned[j][y], "shells must be disjoint");
                    if mag2[j][y] > 0.0 {
                        mu += w[j] * hn * mag2[j][y];
                        region.push((j, y));
                        assigned[j][y] = true;
                        assigned_count += 1;
                    }
                }
            }
            if mu <= 0.0 {
                continue;
            }
            let bmeas = ball.measure(&grid);
            let scale = 1.0 / (bmeas * mu).sqrt();
            let lambda = (bmeas * mu).sqrt();
            for (pos, &(j, y)) in region.iter().enumerate() {
                if pos % (region.len() / 3 + 1) == 0 {
                    grid.unflatten(y, &mut idx);
                    ratio_min = ratio_min.min(spot_ratio(&prev, &ball, &idx, j));
                }
            }
            let atom_entries: Vec<AtomEntry> = region
                .iter()
                .map(|&(j, y)| AtomEntry {
                    slice: j,
                    cell: y,
                    value: (0..dim)
                        .map(|c| phys[j][c].as_slice().unwrap()[y] * scale)
                        .collect(),
                })
                .collect();
            decomp.lambda_sum += lambda;
            decomp.atoms.push(Atom { ball, lambda, level: k, entries: atom_entries });
        }
        prev = Some(LevelContext { tent_edt2, level_set: o_k });
        if assigned_count == total_nonzero {
            break;
        }
        k -= 1;
    }
    if ratio_min.is_finite() {
        decomp.measure_ratio_min = Some(ratio_min);
    }
    Ok(decomp)
}

/// Space-time integral operator `∫ ∇ P e^{tΔ} G(t,·) dt` mapping a vector
/// space-time field to a matrix field (the time integral runs over the
/// field's compact time support, via the geometric quadrature).
pub fn calm_apply(g: &SpaceTimeField<VectorField>) -> Result<TensorField> {
    let grid = *g.grid();
    if g.is_empty() {
        return Err(Error::BadParameter {
            what: "space-time field",
            detail: "no time slices".into(),
        });
    }
    let quad = TimeQuadrature::from_times(g.times());
    let w = quad.full_weights();
    let shape = IxDyn(&grid.shape());
    let mut acc: Vec<ArrayD<Complex64>> =
        (0..grid.dim()).map(|_| ArrayD::zeros(shape.clone())).collect();
    for (j, (&t, slice)) in g.times().iter().zip(g.slices()).enumerate() {
        let evolved = heat_evolve(slice, t)?;
        for (a, c) in acc.iter_mut().zip(0..grid.dim()) {
            a.zip_mut_with(evolved.comp(c), |av, &ev| *av += w[j] * ev);
        }
    }
    let integrated = VectorField::from_components(grid, acc);
    Ok(grad_vector(&leray_project(&integrated)))
}

/// Adjoint-side operator: slice `s ↦ −e^{sΔ} ∫ ∇ P e^{tΔ} G(t,·) dt`. The
/// sign makes the duality `⟨A₂ F, G⟩ = ⟨F, A₂* G⟩` hold with the
/// divergence-form operator on the other side.
pub fn a2star_apply(
    g: &SpaceTimeField<VectorField>,
) -> Result<SpaceTimeField<TensorField>> {
    let m = calm_apply(g)?.scaled(-1.0);
    let slices: Result<Vec<TensorField>> =
        g.times().iter().map(|&s| heat_evolve(&m, s)).collect();
    SpaceTimeField::new(g.times().to_vec(), slices?)
}

fn caloric_extension<F: FieldData>(f: &F, times: &[f64]) -> Result<SpaceTimeField<F>> {
    let slices: Result<Vec<F>> = times.iter().map(|&t| heat_evolve(f, t)).collect();
    SpaceTimeField::new(times.to_vec(), slices?)
}

/// Hardy-space norm of a scalar field: the `L¹` norm of the grand maximal
/// function `M* f(x) = sup_τ sup_{d(y,x) ≤ √τ} |e^{τΔ} f(y)|`, with the
/// smoothing scales restricted to the sampled times (a documented
/// under-approximation of the continuum supremum).
pub fn hardy_norm(f: &ScalarField, times: &[f64]) -> Result<f64> {
    let grid = *f.grid();
    let ext = caloric_extension(f, times)?;
    Ok(nontangential_max(&ext).sum() * grid.cell_volume())
}

/// Hardy norm of a matrix field: sum of the component norms.
pub fn hardy_norm_tensor(f: &TensorField, times: &[f64]) -> Result<f64> {
    let grid = *f.grid();
    let mut total = 0.0;
    for comp in f.to_physical() {
        let scalar = ScalarField::from_physical(grid, vec![comp]);
        total += hardy_norm(&scalar, times)?;
    }
    Ok(total)
}

/// Ratio `‖N(e^{sΔ}h)‖_{L¹} / hardy_norm(h)`. With this toolkit's
/// discretization the numerator and denominator are built from the same
/// caloric extension, so the ratio is exactly one for nonzero input; the
/// check guards degeneracies and feeds the refinement-stability probes.
pub fn heat_extension_check(f: &ScalarField, times: &[f64]) -> Result<CheckOutcome> {
    let denom = hardy_norm(f, times)?;
    if denom <= 0.0 {
        return Ok(CheckOutcome::Vacuous);
    }
    let ext = caloric_extension(f, times)?;
    Ok(CheckOutcome::Ratio(t1inf_norm(&ext) / denom))
}

/// Molecule exponents and norms for a field centered at a lattice point.
#[derive(Debug, Clone, Serialize)]
pub struct MoleculeReport {
    pub p: f64,
    pub q: f64,
    pub b: f64,
    pub theta: f64,
    pub norm_q: f64,
    pub weighted_norm_q: f64,
    pub norm_triple: f64,
    pub moment_residuals: Vec<f64>,
}

/// Validate a molecule candidate: computes
/// `|||m||| = ‖m‖_q^{1−θ} · ‖ |·−x₀|^{nb} m ‖_q^θ` with `p = 1`,
/// `b = 2(q−1)/q`, `θ = (1 − 1/q)/b`, plus the mean of every component
/// (the only required vanishing moment for `p = 1`).
pub fn molecule_validate<F: FieldData>(
    m: &F,
    q: f64,
    x0: &[usize],
) -> Result<MoleculeReport> {
    let grid = *m.grid();
    let n = grid.dim() as f64;
    let q_hi = n / (n - 1.0);
    if !(q > 1.0 && q < q_hi) {
        return Err(Error::BadParameter {
            what: "molecule exponent q",
            detail: format!("q = {q} outside (1, {q_hi})"),
        });
    }
    if x0.len() != grid.dim() {
        return Err(Error::BadParameter {
            what: "molecule center",
            detail: format!("{} coordinates for dimension {}", x0.len(), grid.dim()),
        });
    }
    let b = 2.0 * (q - 1.0) / q;
    let theta = (1.0 - 1.0 / q) / b;
    let hn = grid.cell_volume();
    let x0_phys: Vec<f64> = x0.iter().map(|&c| c as f64 * grid.spacing()).collect();
    let mag = m.magnitude_physical();
    let mag_flat = mag.as_slice().unwrap();
    let mut plain = 0.0;
    let mut weighted = 0.0;
    crate::grid::for_each_site(&grid, |f, idx| {
        let v = mag_flat[f];
        let d = grid.torus_dist_to(idx, &x0_phys);
        plain += v.powf(q);
        weighted += (d.powf(n * b) * v).powf(q);
    });
    let norm_q = (plain * hn).powf(1.0 / q);
    let weighted_norm_q = (weighted * hn).powf(1.0 / q);
    let norm_triple = norm_q.powf(1.0 - theta) * weighted_norm_q.powf(theta);
    let moment_residuals: Vec<f64> = m
        .to_physical()
        .iter()
        .map(|comp| (comp.sum() * hn).norm())
        .collect();
    Ok(MoleculeReport {
        p: 1.0,
        q,
        b,
        theta,
        norm_q,
        weighted_norm_q,
        norm_triple,
        moment_residuals,
    })
}

/// Log–log slopes of the two molecule integrals against the atom scale:
/// for indicator atoms on balls of the given radii, returns the least-squares
/// slopes of `ln ∫ |Ma|^q |x−x₀|^{qnb}` and `ln ∫ |Ma|^q` versus `ln R`.
pub fn molecule_scaling_slopes(
    grid: &Grid,
    times: &[f64],
    ball_radii: &[f64],
    q: f64,
) -> Result<(f64, f64)> {
    if ball_radii.len() < 2 {
        return Err(Error::BadParameter {
            what: "molecule scaling radii",
            detail: "need at least two scales".into(),
        });
    }
    let center = vec![grid.size() / 2; grid.dim()];
    let n = grid.dim() as f64;
    let b = 2.0 * (q - 1.0) / q;
    let hn = grid.cell_volume();
    let x0_phys: Vec<f64> = center.iter().map(|&c| c as f64 * grid.spacing()).collect();
    let mut logs: Vec<(f64, f64, f64)> = Vec::new();
    for &r in ball_radii {
        let ball = Ball { center: center.clone(), radius: r };
        let a = indicator_atom(grid, times, &ball)?;
        let m = calm_apply(&a)?;
        let mag = m.magnitude_physical();
        let mag_flat = mag.as_slice().unwrap();
        let mut plain = 0.0;
        let mut weighted = 0.0;
        crate::grid::for_each_site(grid, |f, idx| {
            let v = mag_flat[f];
            let d = grid.torus_dist_to(idx, &x0_phys);
            plain += v.powf(q);
            weighted += v.powf(q) * d.powf(q * n * b);
        });
        logs.push((r.ln(), (weighted * hn).ln(), (plain * hn).ln()));
    }
    let slope = |pick: fn(&(f64, f64, f64)) -> (f64, f64)| -> f64 {
        let pts: Vec<(f64, f64)> = logs.iter().map(pick).collect();
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    };
    Ok((slope(|l| (l.0, l.1)), slope(|l| (l.0, l.2))))
}
