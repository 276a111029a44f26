//! Uniform periodic grids: the spatial torus `[0, L)^n` sampled on `N^n`
//! lattice points, and geometric time grids for parabolic quantities.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Spatial discretization of the torus `[0, L)^n`.
///
/// Frequencies are indexed in FFT order: index `i` along an axis carries the
/// integer mode `m = i` for `i < N/2` and `m = i - N` otherwise, with
/// wavenumber `k = 2*pi*m / L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    size: usize,
    box_len: f64,
}

impl Grid {
    pub fn new(dim: usize, size: usize, box_len: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::BadDimension(dim));
        }
        if size < 8 || !size.is_power_of_two() {
            return Err(Error::BadGridSize(size));
        }
        if !(box_len > 0.0) || !box_len.is_finite() {
            return Err(Error::NonPositive { what: "box length", value: box_len });
        }
        Ok(Grid { dim, size, box_len })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn box_len(&self) -> f64 {
        self.box_len
    }

    /// Lattice spacing `h = L / N`.
    pub fn spacing(&self) -> f64 {
        self.box_len / self.size as f64
    }

    /// Total number of lattice points `N^n`.
    pub fn cell_count(&self) -> usize {
        self.size.pow(self.dim as u32)
    }

    /// Volume of one lattice cell, `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.size; self.dim]
    }

    /// Integer mode carried by FFT index `i` along one axis.
    pub fn mode(&self, i: usize) -> i64 {
        debug_assert!(i < self.size);
        if i < self.size / 2 {
            i as i64
        } else {
            i as i64 - self.size as i64
        }
    }

    /// Wavenumber `2*pi*m / L` for FFT index `i` along one axis.
    pub fn wavenumber(&self, i: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.mode(i) as f64 / self.box_len
    }

    /// All per-axis wavenumbers in FFT index order.
    pub fn axis_wavenumbers(&self) -> Vec<f64> {
        (0..self.size).map(|i| self.wavenumber(i)).collect()
    }

    /// Largest integer mode kept by the 2/3 de-aliasing rule.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.size / 3) as i64
    }

    /// Physical coordinate of lattice index `i` along one axis.
    pub fn coordinate(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    /// Minimal-image displacement for an index offset along one axis, in
    /// lattice cells.
    pub fn min_image_cells(&self, offset: usize) -> usize {
        offset.min(self.size - offset)
    }

    /// Torus distance between two lattice points given as multi-indices.
    pub fn torus_dist(&self, a: &[usize], b: &[usize]) -> f64 {
        let h = self.spacing();
        let mut d2 = 0.0;
        for ax in 0..self.dim {
            let o = (a[ax] + self.size - b[ax]) % self.size;
            let c = self.min_image_cells(o) as f64 * h;
            d2 += c * c;
        }
        d2.sqrt()
    }

    /// Torus distance from a lattice point to an arbitrary physical point.
    pub fn torus_dist_to(&self, idx: &[usize], point: &[f64]) -> f64 {
        let mut d2 = 0.0;
        for ax in 0..self.dim {
            let mut d = (self.coordinate(idx[ax]) - point[ax]).abs() % self.box_len;
            if d > self.box_len / 2.0 {
                d = self.box_len - d;
            }
            d2 += d * d;
        }
        d2.sqrt()
    }

    /// Decompose a flat row-major index into a multi-index.
    pub fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        for ax in (0..self.dim).rev() {
            out[ax] = flat % self.size;
            flat /= self.size;
        }
    }

    /// Flatten a multi-index (row-major, last axis contiguous).
    pub fn flatten(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for ax in 0..self.dim {
            flat = flat * self.size + idx[ax];
        }
        flat
    }
}

/// Visit every lattice site of `grid` as `(flat, multi)` in row-major order.
pub fn for_each_site(grid: &Grid, mut f: impl FnMut(usize, &[usize])) {
    let n = grid.dim();
    let size = grid.size();
    let mut idx = vec![0usize; n];
    let total = grid.cell_count();
    for flat in 0..total {
        f(flat, &idx);
        // odometer increment on the last axis
        for ax in (0..n).rev() {
            idx[ax] += 1;
            if idx[ax] < size {
                break;
            }
            idx[ax] = 0;
        }
    }
}

/// Geometric time grid `t_j = t_min * ratio^j`, `j = 0..count`.
///
/// The default for a given spatial grid starts at the diffusive cell scale
/// `(L/N)^2`, places four samples per octave, and ends at the box scale
/// `L^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_min: f64,
    ratio: f64,
    count: usize,
}

impl TimeGrid {
    pub fn new(t_min: f64, ratio: f64, count: usize) -> Result<Self> {
        if !(t_min > 0.0) {
            return Err(Error::NonPositive { what: "t_min", value: t_min });
        }
        if !(ratio > 1.0) {
            return Err(Error::NonPositive { what: "time ratio - 1", value: ratio - 1.0 });
        }
        if count == 0 {
            return Err(Error::NonPositive { what: "time sample count", value: 0.0 });
        }
        Ok(TimeGrid { t_min, ratio, count })
    }

    /// Samples per octave `spo`, spanning `[ (L/N)^2, L^2 ]`.
    pub fn for_grid(grid: &Grid, spo: usize) -> Self {
        let t_min = grid.spacing() * grid.spacing();
        let t_max = grid.box_len() * grid.box_len();
        Self::spanning(t_min, t_max, spo)
    }

    /// Geometric grid from `t_min` to (at least) `t_max` with `spo` samples
    /// per octave.
    pub fn spanning(t_min: f64, t_max: f64, spo: usize) -> Self {
        let ratio = 2f64.powf(1.0 / spo as f64);
        let octaves = (t_max / t_min).log2();
        let count = (octaves * spo as f64).round() as usize + 1;
        TimeGrid { t_min, ratio, count }
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.time(self.count - 1)
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t_min * self.ratio.powi(j as i32)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.count).map(|j| self.time(j)).collect()
    }

    /// Index of the largest sample `<= t` (None if `t < t_min`).
    pub fn floor_index(&self, t: f64) -> Option<usize> {
        if t < self.t_min {
            return None;
        }
        let j = ((t / self.t_min).ln() / self.ratio.ln()).floor() as usize;
        let j = j.min(self.count - 1);
        // guard against rounding at sample boundaries
        if self.time(j) > t * (1.0 + 1e-12) {
            if j == 0 {
                None
            } else {
                Some(j - 1)
            }
        } else if j + 1 < self.count && self.time(j + 1) <= t * (1.0 + 1e-12) {
            Some(j + 1)
        } else {
            Some(j)
        }
    }

    /// Same grid with every time multiplied by `factor` (parabolic rescale).
    pub fn scaled(&self, factor: f64) -> Self {
        TimeGrid { t_min: self.t_min * factor, ratio: self.ratio, count: self.count }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(Grid::new(1, 64, 1.0).is_err());
        assert!(Grid::new(4, 64, 1.0).is_err());
        assert!(Grid::new(2, 48, 1.0).is_err());
        assert!(Grid::new(2, 4, 1.0).is_err());
        assert!(Grid::new(2, 64, 0.0).is_err());
        assert!(Grid::new(2, 64, -1.0).is_err());
        assert!(Grid::new(3, 32, 2.0 * std::f64::consts::PI).is_ok());
    }

    #[test]
    fn grid_spacing_and_modes() {
        let g = Grid::new(2, 64, 2.0 * std::f64::consts::PI).unwrap();
        assert_relative_eq!(g.spacing(), 2.0 * std::f64::consts::PI / 64.0);
        // mode layout: 0..31, then -32..-1
        assert_eq!(g.mode(0), 0);
        assert_eq!(g.mode(31), 31);
        assert_eq!(g.mode(32), -32);
        assert_eq!(g.mode(63), -1);
        // largest per-axis wavenumber magnitude is (N/2) * 2*pi/L = 32 here
        let kmax = (0..64).map(|i| g.wavenumber(i).abs()).fold(0.0, f64::max);
        assert_relative_eq!(kmax, 32.0, max_relative = 1e-12);
    }

    #[test]
    fn torus_distance_uses_minimal_image() {
        let g = Grid::new(2, 64, 2.0 * std::f64::consts::PI).unwrap();
        let h = g.spacing();
        assert_relative_eq!(g.torus_dist(&[0, 0], &[63, 0]), h);
        assert_relative_eq!(g.torus_dist(&[0, 0], &[32, 0]), 32.0 * h);
        assert_relative_eq!(g.torus_dist(&[2, 3], &[2, 3]), 0.0);
    }

    #[test]
    fn time_grid_spans_diffusive_to_box_scale() {
        let g = Grid::new(2, 64, 2.0 * std::f64::consts::PI).unwrap();
        let tg = TimeGrid::for_grid(&g, 4);
        assert_relative_eq!(tg.t_min(), g.spacing().powi(2));
        // 12 octaves from (L/64)^2 to L^2, 4 samples each, plus the start
        assert_eq!(tg.count(), 49);
        assert_relative_eq!(tg.t_max(), g.box_len().powi(2), max_relative = 1e-9);
    }

    #[test]
    fn floor_index_brackets_times() {
        let tg = TimeGrid::new(0.01, 2f64.powf(0.25), 20).unwrap();
        assert_eq!(tg.floor_index(0.005), None);
        assert_eq!(tg.floor_index(0.01), Some(0));
        let t5 = tg.time(5);
        assert_eq!(tg.floor_index(t5), Some(5));
        assert_eq!(tg.floor_index(t5 * 1.01), Some(5));
        assert_eq!(tg.floor_index(1e9), Some(19));
    }
}
