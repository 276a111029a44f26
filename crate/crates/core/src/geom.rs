//! Discrete geometry on the periodic lattice: balls, ball families, fast
//! ball sums, and exact Euclidean distance transforms with wrap-around.
//!
//! All distances are torus distances (minimal image) in physical units.

use crate::fft;
use crate::grid::Grid;
use ndarray::{ArrayD, Axis, IxDyn};
use num_complex::Complex64;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::Mutex;

/// Lattice offsets of the closed ball of the given radius around any center:
/// per axis the offset runs over one full residue system, so every lattice
/// point is listed at most once even when the ball wraps around the torus.
/// Each entry is `(offset_in_cells, physical_distance)`.
pub fn disk_offsets(grid: &Grid, radius: f64) -> Vec<(Vec<i64>, f64)> {
    let n = grid.size() as i64;
    let h = grid.spacing();
    let dim = grid.dim();
    let r2 = radius * radius * (1.0 + 1e-12);
    let mut out = Vec::new();
    let mut offset = vec![-(n / 2); dim];
    'outer: loop {
        let d2: f64 = offset.iter().map(|&o| (o as f64 * h).powi(2)).sum();
        if d2 <= r2 {
            out.push((offset.clone(), d2.sqrt()));
        }
        for ax in (0..dim).rev() {
            offset[ax] += 1;
            if offset[ax] < n / 2 {
                continue 'outer;
            }
            offset[ax] = -(n / 2);
        }
        break;
    }
    out
}

/// Number of lattice points in a closed ball (center-independent).
pub fn ball_count(grid: &Grid, radius: f64) -> usize {
    disk_offsets(grid, radius).len()
}

/// Wrap `center + offset` onto the lattice and return the flat index.
pub fn resolve(grid: &Grid, center: &[usize], offset: &[i64]) -> usize {
    let n = grid.size() as i64;
    let mut flat = 0usize;
    for ax in 0..grid.dim() {
        let idx = (center[ax] as i64 + offset[ax]).rem_euclid(n) as usize;
        flat = flat * grid.size() + idx;
    }
    flat
}

/// A closed lattice ball.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ball {
    pub center: Vec<usize>,
    pub radius: f64,
}

impl Ball {
    pub fn count(&self, grid: &Grid) -> usize {
        ball_count(grid, self.radius)
    }

    /// Discrete measure `count * h^n`.
    pub fn measure(&self, grid: &Grid) -> f64 {
        self.count(grid) as f64 * grid.cell_volume()
    }

    pub fn contains(&self, grid: &Grid, idx: &[usize]) -> bool {
        grid.torus_dist(&self.center, idx) <= self.radius * (1.0 + 1e-12)
    }
}

/// The standard probing family: centers on a coarse sublattice (stride
/// `N/16`, at least 1) and dyadic radii `2h, 4h, ...` up to half the box.
#[derive(Clone, Debug)]
pub struct BallFamily {
    pub balls: Vec<Ball>,
}

impl BallFamily {
    pub fn standard(grid: &Grid) -> Self {
        let stride = (grid.size() / 16).max(1);
        let mut radii = Vec::new();
        let mut r = 2.0 * grid.spacing();
        while r <= grid.box_len() / 2.0 * (1.0 + 1e-12) {
            radii.push(r);
            r *= 2.0;
        }
        let per_axis: Vec<usize> = (0..grid.size()).step_by(stride).collect();
        let mut balls = Vec::new();
        let dim = grid.dim();
        let mut idx = vec![0usize; dim];
        'outer: loop {
            let center: Vec<usize> = idx.iter().map(|&i| per_axis[i]).collect();
            for &radius in &radii {
                balls.push(Ball { center: center.clone(), radius });
            }
            for ax in (0..dim).rev() {
                idx[ax] += 1;
                if idx[ax] < per_axis.len() {
                    continue 'outer;
                }
                idx[ax] = 0;
            }
            break;
        }
        BallFamily { balls }
    }

    /// Distinct radii, ascending.
    pub fn radii(&self) -> Vec<f64> {
        let mut r: Vec<f64> = Vec::new();
        for b in &self.balls {
            if !r.iter().any(|&x| (x - b.radius).abs() < 1e-12 * b.radius) {
                r.push(b.radius);
            }
        }
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        r
    }
}

/// FFT-based summation over balls: `out(x) = sum_{d(y,x) <= r} values(y)`
/// for every lattice point `x` at once. Kernel transforms are cached per
/// radius.
pub struct BallConvolver {
    grid: Grid,
    kernels: Mutex<HashMap<u64, ArrayD<Complex64>>>,
}

impl BallConvolver {
    pub fn new(grid: Grid) -> Self {
        BallConvolver { grid, kernels: Mutex::new(HashMap::new()) }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn kernel(&self, radius: f64) -> ArrayD<Complex64> {
        let key = radius.to_bits();
        if let Some(k) = self.kernels.lock().unwrap().get(&key) {
            return k.clone();
        }
        let mut ind = ArrayD::<Complex64>::zeros(IxDyn(&self.grid.shape()));
        let zero = vec![0usize; self.grid.dim()];
        {
            let flat = ind.as_slice_mut().expect("contiguous");
            for (off, _) in disk_offsets(&self.grid, radius) {
                flat[resolve(&self.grid, &zero, &off)] = Complex64::new(1.0, 0.0);
            }
        }
        // store the unnormalized transform of the indicator
        fft::analyze(&mut ind);
        let scale = self.grid.cell_count() as f64;
        ind.mapv_inplace(|z| z * scale);
        self.kernels.lock().unwrap().insert(key, ind.clone());
        ind
    }

    /// Sum of `values` over the closed ball of radius `r` around every point.
    pub fn disk_sums(&self, values: &ArrayD<f64>, radius: f64) -> ArrayD<f64> {
        let mut buf = values.mapv(|v| Complex64::new(v, 0.0));
        fft::analyze(&mut buf);
        let kernel = self.kernel(radius);
        buf.zip_mut_with(&kernel, |b, k| *b *= k);
        fft::synthesize(&mut buf);
        buf.mapv(|z| z.re)
    }

    /// Ball counts of a 0/1 mask, rounded back to exact integers.
    pub fn mask_counts(&self, mask: &ArrayD<bool>, radius: f64) -> ArrayD<f64> {
        let values = mask.mapv(|m| if m { 1.0 } else { 0.0 });
        let mut sums = self.disk_sums(&values, radius);
        sums.mapv_inplace(|v| v.round().max(0.0));
        sums
    }
}

/// One-dimensional squared-distance transform (lower envelope of parabolas).
/// `f` holds per-site squared offsets (`INFINITY` = no site); `out[q]` gets
/// `min_p (q - p)^2 + f[p]`.
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v: Vec<usize> = Vec::new(); // parabola roots
    let mut z: Vec<f64> = Vec::new(); // left edge of each parabola's interval
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        let mut s = f64::NEG_INFINITY;
        while let Some(&p) = v.last() {
            let fp = f[p] + (p * p) as f64;
            s = (fq - fp) / (2.0 * (q as f64 - p as f64));
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
                s = f64::NEG_INFINITY;
            } else {
                break;
            }
        }
        z.push(if v.is_empty() { f64::NEG_INFINITY } else { s });
        v.push(q);
    }
    if v.is_empty() {
        out[..n].fill(f64::INFINITY);
        return;
    }
    let mut k = 0usize;
    for q in 0..n {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k] as f64;
        out[q] = (q as f64 - p) * (q as f64 - p) + f[v[k]];
    }
}

/// Exact squared torus distance (physical units) from every lattice point to
/// the nearest point where `sources` is true. All-false input gives
/// `INFINITY` everywhere.
pub fn torus_edt_sq(grid: &Grid, sources: &ArrayD<bool>) -> ArrayD<f64> {
    let mut d = sources.mapv(|s| if s { 0.0 } else { f64::INFINITY });
    let n = grid.size();
    let mut tripled = vec![f64::INFINITY; 3 * n];
    let mut result = vec![0.0f64; 3 * n];
    for ax in 0..grid.dim() {
        for mut lane in d.lanes_mut(Axis(ax)) {
            for i in 0..n {
                let val = lane[i];
                tripled[i] = val;
                tripled[i + n] = val;
                tripled[i + 2 * n] = val;
            }
            edt_1d(&tripled, &mut result);
            for i in 0..n {
                lane[i] = result[n + i];
            }
        }
    }
    let h2 = grid.spacing() * grid.spacing();
    d.mapv_inplace(|v| v * h2);
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::for_each_site;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn disk_offsets_match_brute_force() {
        let grid = Grid::new(2, 16, 2.0).unwrap();
        for radius in [0.0, 0.3, 0.61, 0.99, 1.4, 5.0] {
            let offs = disk_offsets(&grid, radius);
            // brute force: count lattice points within torus distance of origin
            let mut count = 0;
            let origin = vec![0usize, 0];
            for_each_site(&grid, |_, idx| {
                if grid.torus_dist(&origin, idx) <= radius * (1.0 + 1e-12) {
                    count += 1;
                }
            });
            assert_eq!(offs.len(), count, "radius {radius}");
            // no duplicate lattice points
            let mut flats: Vec<usize> =
                offs.iter().map(|(o, _)| resolve(&grid, &origin, o)).collect();
            flats.sort_unstable();
            flats.dedup();
            assert_eq!(flats.len(), offs.len());
        }
        // radius beyond the torus diameter covers everything exactly once
        let all = disk_offsets(&grid, 100.0);
        assert_eq!(all.len(), grid.cell_count());
    }

    #[test]
    fn ball_convolver_matches_direct_sums() {
        let grid = Grid::new(2, 16, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let values = ArrayD::from_shape_fn(IxDyn(&grid.shape()), |_| rng.gen_range(-1.0..1.0));
        let conv = BallConvolver::new(grid);
        for radius in [0.13, 0.4, 0.9] {
            let sums = conv.disk_sums(&values, radius);
            let offs = disk_offsets(&grid, radius);
            let vals_flat = values.as_slice().unwrap();
            for_each_site(&grid, |flat, idx| {
                let direct: f64 =
                    offs.iter().map(|(o, _)| vals_flat[resolve(&grid, idx, o)]).sum();
                let got = sums.as_slice().unwrap()[flat];
                assert_relative_eq!(got, direct, epsilon = 1e-10, max_relative = 1e-10);
            });
        }
    }

    #[test]
    fn mask_counts_are_exact_integers() {
        let grid = Grid::new(2, 16, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mask = ArrayD::from_shape_fn(IxDyn(&grid.shape()), |_| rng.gen_bool(0.3));
        let conv = BallConvolver::new(grid);
        let counts = conv.mask_counts(&mask, 0.5);
        let offs = disk_offsets(&grid, 0.5);
        for_each_site(&grid, |flat, idx| {
            let direct = offs
                .iter()
                .filter(|(o, _)| mask.as_slice().unwrap()[resolve(&grid, idx, o)])
                .count() as f64;
            assert_eq!(counts.as_slice().unwrap()[flat], direct);
        });
    }

    fn edt_brute(grid: &Grid, sources: &ArrayD<bool>) -> ArrayD<f64> {
        let mut out = ArrayD::from_elem(IxDyn(&grid.shape()), f64::INFINITY);
        let src: Vec<Vec<usize>> = {
            let mut v = Vec::new();
            for_each_site(grid, |_, idx| {
                if sources[IxDyn(idx)] {
                    v.push(idx.to_vec());
                }
            });
            v
        };
        for_each_site(grid, |_, idx| {
            let mut best = f64::INFINITY;
            for s in &src {
                let d = grid.torus_dist(idx, s);
                best = best.min(d * d);
            }
            out[IxDyn(idx)] = best;
        });
        out
    }

    #[test]
    fn edt_matches_brute_force_2d() {
        let grid = Grid::new(2, 16, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for density in [0.05, 0.3, 0.9] {
            let sources =
                ArrayD::from_shape_fn(IxDyn(&grid.shape()), |_| rng.gen_bool(density));
            let fast = torus_edt_sq(&grid, &sources);
            let slow = edt_brute(&grid, &sources);
            for (a, b) in fast.iter().zip(slow.iter()) {
                assert_relative_eq!(a, b, epsilon = 1e-10, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn edt_matches_brute_force_3d() {
        let grid = Grid::new(3, 8, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sources = ArrayD::from_shape_fn(IxDyn(&grid.shape()), |_| rng.gen_bool(0.1));
        let fast = torus_edt_sq(&grid, &sources);
        let slow = edt_brute(&grid, &sources);
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn edt_handles_degenerate_masks() {
        let grid = Grid::new(2, 8, 1.0).unwrap();
        let none = ArrayD::from_elem(IxDyn(&grid.shape()), false);
        assert!(torus_edt_sq(&grid, &none).iter().all(|d| d.is_infinite()));
        let all = ArrayD::from_elem(IxDyn(&grid.shape()), true);
        assert!(torus_edt_sq(&grid, &all).iter().all(|&d| d == 0.0));
    }

    #[test]
    fn standard_family_covers_dyadic_radii() {
        let grid = Grid::new(2, 64, 2.0 * std::f64::consts::PI).unwrap();
        let fam = BallFamily::standard(&grid);
        let radii = fam.radii();
        let h = grid.spacing();
        assert_relative_eq!(radii[0], 2.0 * h);
        assert_relative_eq!(*radii.last().unwrap(), grid.box_len() / 2.0);
        assert_eq!(radii.len(), 5);
        // stride-4 sublattice in each axis
        assert_eq!(fam.balls.len(), 16 * 16 * 5);
    }
}
