//! Whitney-type decomposition of a proper subset of the discrete torus.
//!
//! Given a nonempty proper subset `O` of grid points, the decomposition
//! partitions `O` into disjoint periodic dyadic cubes whose size is
//! comparable to their distance from the complement:
//!
//! ```text
//! diam(Q) <= dist(Q, O^c) <= 4 * diam(Q)
//! ```
//!
//! with the discrete convention `diam(Q) = sqrt(n) * h * side / 2` (half the
//! circumscribed diameter of the continuum box spanned by the cube's cells).
//! Cubes are selected greedily from the largest dyadic side down; a cube is
//! taken when it lies entirely inside `O`, none of its cells is covered yet,
//! and its distance to the complement is at least its diameter. Because
//! dyadic blocks are nested or disjoint, a selected cube whose distance
//! exceeded four diameters would force its parent block to have been
//! admissible and uncovered earlier, so the upper bound holds exactly; and
//! any point of `O` is at distance at least one spacing `h >= diam(singleton)`
//! from the complement, so the leftover singletons are always admissible and
//! the cubes cover `O` exactly.
//!
//! Each cube carries an enclosing ball centered at the cube with radius
//! `7 * diam(Q)`. That coefficient is sized so that for any subset shaped
//! like a tent over `O` the parabolic region above the cube fits inside the
//! tent of the ball: a point `y` in the cube has
//! `dist(y, O^c) <= dist(Q, O^c) + diam_pts(Q) <= 4*diam + 2*diam`, so
//! heights reach at most `6 * diam`, and `y` sits within `diam` of the ball
//! center.

use crate::error::{Error, Result};
use crate::geom::Ball;
use crate::grid::Grid;
use ndarray::ArrayD;
use serde::Serialize;

/// Ball radius in units of the cube diameter.
pub const WHITNEY_BALL_FACTOR: f64 = 7.0;

/// A periodic dyadic cube: the lattice block `[anchor, anchor + side)` in
/// every axis, with `side` a power of two dividing the grid size and
/// `anchor` a multiple of `side`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DyadicCube {
    pub anchor: Vec<usize>,
    pub side: usize,
}

impl DyadicCube {
    /// Discrete diameter convention: half the circumscribed diameter of the
    /// continuum box of `side^n` cells.
    pub fn diam(&self, grid: &Grid) -> f64 {
        (grid.dim() as f64).sqrt() * grid.spacing() * self.side as f64 / 2.0
    }

    /// Lattice point closest to the cube center (rounded down on even sides).
    pub fn center(&self) -> Vec<usize> {
        self.anchor.iter().map(|&a| a + (self.side - 1) / 2).collect()
    }

    /// Flattened indices of all cells in the cube.
    pub fn cells(&self, grid: &Grid) -> Vec<usize> {
        let dim = grid.dim();
        let mut out = Vec::with_capacity(self.side.pow(dim as u32));
        let mut offset = vec![0usize; dim];
        loop {
            let idx: Vec<usize> =
                self.anchor.iter().zip(&offset).map(|(&a, &o)| a + o).collect();
            out.push(grid.flatten(&idx));
            // mixed-radix increment over [0, side)^dim
            let mut axis = dim;
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                offset[axis] += 1;
                if offset[axis] < self.side {
                    break;
                }
                offset[axis] = 0;
            }
        }
    }

    pub fn contains(&self, idx: &[usize]) -> bool {
        self.anchor
            .iter()
            .zip(idx)
            .all(|(&a, &i)| i >= a && i < a + self.side)
    }
}

/// One selected cube with its enclosing ball and measured distance to the
/// complement.
#[derive(Debug, Clone, Serialize)]
pub struct WhitneyCube {
    pub cube: DyadicCube,
    pub ball: Ball,
    pub dist: f64,
}

/// A full decomposition: disjoint dyadic cubes whose union is the input set.
#[derive(Debug, Clone, Serialize)]
pub struct WhitneyCover {
    pub cubes: Vec<WhitneyCube>,
}

impl WhitneyCover {
    /// Total number of covered cells.
    pub fn cell_count(&self) -> usize {
        let dim_pow = |c: &WhitneyCube, d: u32| c.cube.side.pow(d);
        self.cubes
            .iter()
            .map(|c| dim_pow(c, c.cube.anchor.len() as u32))
            .sum()
    }
}

/// Decompose a nonempty proper subset of the torus into Whitney cubes.
pub fn whitney_decompose(grid: &Grid, o: &ArrayD<bool>) -> Result<WhitneyCover> {
    if o.len() != grid.cell_count() {
        return Err(Error::GridMismatch);
    }
    let inside = o.iter().filter(|&&b| b).count();
    if inside == 0 || inside == grid.cell_count() {
        return Err(Error::BadDomain);
    }
    let complement = o.mapv(|b| !b);
    let edt2 = crate::geom::torus_edt_sq(grid, &complement);
    let edt2_flat = edt2.as_slice().unwrap();
    let o_flat = o.as_slice().unwrap();
    let n = grid.size();
    let dim = grid.dim();
    let mut covered = vec![false; grid.cell_count()];
    let mut cubes = Vec::new();
    let mut side = n;
    while side >= 1 {
        let blocks_per_axis = n / side;
        let mut block = vec![0usize; dim];
        'blocks: loop {
            let anchor: Vec<usize> = block.iter().map(|&b| b * side).collect();
            let cube = DyadicCube { anchor, side };
            let cells = cube.cells(grid);
            let mut min_d2 = f64::INFINITY;
            let mut admissible = true;
            for &c in &cells {
                if !o_flat[c] || covered[c] {
                    admissible = false;
                    break;
                }
                if edt2_flat[c] < min_d2 {
                    min_d2 = edt2_flat[c];
                }
            }
            let diam = cube.diam(grid);
            if admissible && min_d2 >= diam * diam * (1.0 - 1e-12) {
                for &c in &cells {
                    covered[c] = true;
                }
                let ball = Ball {
                    center: cube.center(),
                    radius: WHITNEY_BALL_FACTOR * diam,
                };
                cubes.push(WhitneyCube { cube, ball, dist: min_d2.sqrt() });
            }
            // advance block counter
            let mut axis = dim;
            loop {
                if axis == 0 {
                    break 'blocks;
                }
                axis -= 1;
                block[axis] += 1;
                if block[axis] < blocks_per_axis {
                    break;
                }
                block[axis] = 0;
            }
        }
        if side == 1 {
            break;
        }
        side /= 2;
    }
    debug_assert!(
        covered.iter().zip(o_flat).all(|(&c, &m)| c == m),
        "whitney cubes must cover the input set exactly"
    );
    Ok(WhitneyCover { cubes })
}
