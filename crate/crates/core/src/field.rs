//! Scalar, vector, and tensor fields on a periodic grid, stored as Fourier
//! coefficients, plus space-time stacks of such fields.
//!
//! The canonical in-memory representation is spectral: component `c` holds
//! coefficients `c_m` so that the physical field is
//! `f(x) = sum_m c_m e^{i k(m) . x}` with `k(m) = 2*pi*m / L`. Real fields
//! correspond to Hermitian-symmetric coefficient arrays.

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::Grid;
use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;

/// Common storage and spectral plumbing for scalar/vector/tensor fields.
pub trait FieldData: Clone {
    fn grid(&self) -> &Grid;
    fn components(&self) -> &[ArrayD<Complex64>];
    fn components_mut(&mut self) -> &mut [ArrayD<Complex64>];
    fn from_components(grid: Grid, comps: Vec<ArrayD<Complex64>>) -> Self;
    /// Number of components for a field over an `dim`-dimensional grid.
    fn component_count(dim: usize) -> usize;

    fn zeros(grid: Grid) -> Self {
        let shape = IxDyn(&grid.shape());
        let comps = (0..Self::component_count(grid.dim()))
            .map(|_| ArrayD::zeros(shape.clone()))
            .collect();
        Self::from_components(grid, comps)
    }

    /// `self += a * other`.
    fn axpy(&mut self, a: Complex64, other: &Self) {
        for (dst, src) in self.components_mut().iter_mut().zip(other.components()) {
            dst.zip_mut_with(src, |d, s| *d += a * s);
        }
    }

    fn scale(&mut self, a: f64) {
        for c in self.components_mut() {
            c.mapv_inplace(|z| z * a);
        }
    }

    fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(Complex64::new(1.0, 0.0), other);
        out
    }

    fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other);
        out
    }

    /// Project onto real fields: `c(m) <- (c(m) + conj(c(-m))) / 2`.
    fn hermitian_symmetrize(&mut self) {
        let size = self.grid().size();
        let dim = self.grid().dim();
        for comp in self.components_mut() {
            let orig = comp.clone();
            for (ix, v) in comp.indexed_iter_mut() {
                let mut refl = vec![0usize; dim];
                for ax in 0..dim {
                    refl[ax] = (size - ix[ax]) % size;
                }
                let mirrored = orig[IxDyn(&refl)];
                *v = (*v + mirrored.conj()) * 0.5;
            }
        }
    }

    /// Physical samples of every component (row-major arrays of size `N^n`).
    fn to_physical(&self) -> Vec<ArrayD<Complex64>> {
        self.components()
            .iter()
            .map(|c| {
                let mut p = c.clone();
                fft::synthesize(&mut p);
                p
            })
            .collect()
    }

    /// Build from physical samples (the inverse of [`FieldData::to_physical`]).
    fn from_physical(grid: Grid, mut phys: Vec<ArrayD<Complex64>>) -> Self {
        for p in &mut phys {
            fft::analyze(p);
        }
        Self::from_components(grid, phys)
    }

    /// Pointwise Euclidean magnitude over components, sampled in physical
    /// space: `|f|(x) = sqrt(sum_c |f_c(x)|^2)`.
    fn magnitude_physical(&self) -> ArrayD<f64> {
        let phys = self.to_physical();
        let mut out = ArrayD::<f64>::zeros(phys[0].raw_dim());
        for p in &phys {
            out.zip_mut_with(p, |o, z| *o += z.norm_sqr());
        }
        out.mapv_inplace(f64::sqrt);
        out
    }

    /// `L^2` norm over the box: `sqrt( L^n * sum_m |c_m|^2 )` summed over
    /// components (Parseval).
    fn l2_norm(&self) -> f64 {
        let vol = self.grid().box_len().powi(self.grid().dim() as i32);
        let s: f64 = self
            .components()
            .iter()
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum();
        (vol * s).sqrt()
    }

    /// `L^2` inner product `integral conj(f) . g dx` via Parseval.
    fn l2_inner(&self, other: &Self) -> Complex64 {
        let vol = self.grid().box_len().powi(self.grid().dim() as i32);
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, b) in self.components().iter().zip(other.components()) {
            for (x, y) in a.iter().zip(b.iter()) {
                acc += x.conj() * y;
            }
        }
        acc * vol
    }

    /// Max over lattice points of the pointwise magnitude.
    fn linf_norm(&self) -> f64 {
        self.magnitude_physical().iter().cloned().fold(0.0, f64::max)
    }

    /// Largest coefficient-wise difference `max_m |a_m - b_m|` over components.
    fn max_coeff_diff(&self, other: &Self) -> f64 {
        self.components()
            .iter()
            .zip(other.components())
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }

    /// Zero every coefficient whose integer mode exceeds the 2/3 cutoff on
    /// any axis.
    fn dealias(&mut self) {
        let grid = *self.grid();
        let cutoff = grid.dealias_cutoff();
        for comp in self.components_mut() {
            for (ix, v) in comp.indexed_iter_mut() {
                for ax in 0..grid.dim() {
                    if grid.mode(ix[ax]).abs() > cutoff {
                        *v = Complex64::new(0.0, 0.0);
                        break;
                    }
                }
            }
        }
    }
}

macro_rules! field_type {
    ($name:ident, $count:expr, $doc:literal) => {
        #[doc = $doc]
        #[derive(Clone, Debug)]
        pub struct $name {
            grid: Grid,
            comps: Vec<ArrayD<Complex64>>,
        }

        impl FieldData for $name {
            fn grid(&self) -> &Grid {
                &self.grid
            }
            fn components(&self) -> &[ArrayD<Complex64>] {
                &self.comps
            }
            fn components_mut(&mut self) -> &mut [ArrayD<Complex64>] {
                &mut self.comps
            }
            fn from_components(grid: Grid, comps: Vec<ArrayD<Complex64>>) -> Self {
                let count = <Self as FieldData>::component_count(grid.dim());
                assert_eq!(comps.len(), count, "component count mismatch");
                let shape = grid.shape();
                for c in &comps {
                    assert_eq!(c.shape(), &shape[..], "component shape mismatch");
                }
                Self { grid, comps }
            }
            fn component_count(dim: usize) -> usize {
                let f: fn(usize) -> usize = $count;
                f(dim)
            }
        }
    };
}

field_type!(ScalarField, |_| 1, "A single complex-coefficient field.");
field_type!(VectorField, |d| d, "A field with one component per space dimension.");
field_type!(
    TensorField,
    |d| d * d,
    "A matrix-valued field; component `(i, j)` is stored at index `i*dim + j`."
);

impl ScalarField {
    pub fn coeffs(&self) -> &ArrayD<Complex64> {
        &self.comps[0]
    }

    pub fn coeffs_mut(&mut self) -> &mut ArrayD<Complex64> {
        &mut self.comps[0]
    }

    /// Mean over the box (the zero-mode coefficient).
    pub fn mean(&self) -> Complex64 {
        self.comps[0][IxDyn(&vec![0; self.grid.dim()])]
    }

    pub fn set_mean_zero(&mut self) {
        let dim = self.grid.dim();
        self.comps[0][IxDyn(&vec![0; dim])] = Complex64::new(0.0, 0.0);
    }
}

impl VectorField {
    pub fn comp(&self, i: usize) -> &ArrayD<Complex64> {
        &self.comps[i]
    }

    pub fn comp_mut(&mut self, i: usize) -> &mut ArrayD<Complex64> {
        &mut self.comps[i]
    }

    /// Integral of the field over the box (zero-mode coefficients times
    /// volume), one entry per component.
    pub fn mean_coeffs(&self) -> Vec<Complex64> {
        let zero = IxDyn(&vec![0; self.grid.dim()]);
        self.comps.iter().map(|c| c[zero.clone()]).collect()
    }

    pub fn set_mean_zero(&mut self) {
        let zero = IxDyn(&vec![0; self.grid.dim()]);
        for c in &mut self.comps {
            c[zero.clone()] = Complex64::new(0.0, 0.0);
        }
    }
}

impl TensorField {
    pub fn entry(&self, i: usize, j: usize) -> &ArrayD<Complex64> {
        &self.comps[i * self.grid.dim() + j]
    }
}

/// Wavenumber for derivative multipliers: identical to the grid wavenumber
/// except that the unpaired Nyquist mode is dropped (its first derivative has
/// no consistent real representative).
pub fn derivative_wavenumber(grid: &Grid, i: usize) -> f64 {
    if i == grid.size() / 2 {
        0.0
    } else {
        grid.wavenumber(i)
    }
}

fn apply_ik(grid: &Grid, src: &ArrayD<Complex64>, axis: usize) -> ArrayD<Complex64> {
    let table: Vec<Complex64> = (0..grid.size())
        .map(|i| Complex64::new(0.0, derivative_wavenumber(grid, i)))
        .collect();
    let mut out = src.clone();
    for (ix, v) in out.indexed_iter_mut() {
        *v *= table[ix[axis]];
    }
    out
}

/// First partial derivative of a scalar field along `axis`.
pub fn partial(f: &ScalarField, axis: usize) -> ScalarField {
    ScalarField::from_components(*f.grid(), vec![apply_ik(f.grid(), f.coeffs(), axis)])
}

/// Gradient of a scalar field.
pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = *f.grid();
    let comps = (0..grid.dim()).map(|ax| apply_ik(&grid, f.coeffs(), ax)).collect();
    VectorField::from_components(grid, comps)
}

/// Divergence of a vector field.
pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = *v.grid();
    let mut acc = ArrayD::zeros(IxDyn(&grid.shape()));
    for ax in 0..grid.dim() {
        let d = apply_ik(&grid, v.comp(ax), ax);
        acc.zip_mut_with(&d, |a, b| *a += b);
    }
    ScalarField::from_components(grid, vec![acc])
}

/// Full gradient of a vector field: entry `(i, j)` holds `d_j v_i`.
pub fn grad_vector(v: &VectorField) -> TensorField {
    let grid = *v.grid();
    let dim = grid.dim();
    let mut comps = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            comps.push(apply_ik(&grid, v.comp(i), j));
        }
    }
    TensorField::from_components(grid, comps)
}

/// Row-wise divergence of a tensor field: output component `i` is
/// `sum_j d_j T_{ij}`.
pub fn divergence_tensor(t: &TensorField) -> VectorField {
    let grid = *t.grid();
    let dim = grid.dim();
    let mut comps = Vec::with_capacity(dim);
    for i in 0..dim {
        let mut acc = ArrayD::zeros(IxDyn(&grid.shape()));
        for j in 0..dim {
            let d = apply_ik(&grid, t.entry(i, j), j);
            acc.zip_mut_with(&d, |a, b| *a += b);
        }
        comps.push(acc);
    }
    VectorField::from_components(grid, comps)
}

/// Pointwise outer product `(u tensor v)_{ij} = u_i v_j`, computed in
/// physical space with the 2/3 de-aliasing rule applied to inputs and output.
pub fn tensor_product(u: &VectorField, v: &VectorField) -> Result<TensorField> {
    if u.grid() != v.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = *u.grid();
    let dim = grid.dim();
    let mut uc = u.clone();
    let mut vc = v.clone();
    uc.dealias();
    vc.dealias();
    let up = uc.to_physical();
    let vp = vc.to_physical();
    let mut comps = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            let mut prod = up[i].clone();
            prod.zip_mut_with(&vp[j], |a, b| *a *= b);
            fft::analyze(&mut prod);
            comps.push(prod);
        }
    }
    let mut out = TensorField::from_components(grid, comps);
    out.dealias();
    Ok(out)
}

/// A field sampled on a time grid.
#[derive(Clone, Debug)]
pub struct SpaceTimeField<F: FieldData> {
    times: Vec<f64>,
    slices: Vec<F>,
}

impl<F: FieldData> SpaceTimeField<F> {
    pub fn new(times: Vec<f64>, slices: Vec<F>) -> Result<Self> {
        if times.len() != slices.len() || times.is_empty() {
            return Err(Error::TimeGridMismatch);
        }
        if times.windows(2).any(|w| w[1] <= w[0]) || times[0] <= 0.0 {
            return Err(Error::TimeGridMismatch);
        }
        let g = *slices[0].grid();
        if slices.iter().any(|s| *s.grid() != g) {
            return Err(Error::GridMismatch);
        }
        Ok(SpaceTimeField { times, slices })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn slices(&self) -> &[F] {
        &self.slices
    }

    pub fn slices_mut(&mut self) -> &mut [F] {
        &mut self.slices
    }

    pub fn slice(&self, j: usize) -> &F {
        &self.slices[j]
    }

    pub fn grid(&self) -> &Grid {
        self.slices[0].grid()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn map_slices(&self, f: impl Fn(usize, &F) -> F) -> Self {
        let slices = self.slices.iter().enumerate().map(|(j, s)| f(j, s)).collect();
        SpaceTimeField { times: self.times.clone(), slices }
    }

    pub fn axpy(&mut self, a: Complex64, other: &Self) {
        assert_eq!(self.times.len(), other.times.len(), "time grid mismatch");
        for (dst, src) in self.slices.iter_mut().zip(&other.slices) {
            dst.axpy(a, src);
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other);
        out
    }

    /// Largest coefficient difference over all slices and components.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        self.slices
            .iter()
            .zip(&other.slices)
            .map(|(a, b)| a.max_coeff_diff(b))
            .fold(0.0, f64::max)
    }

    /// Largest pointwise magnitude over all slices (physical space).
    pub fn sup_linf(&self) -> f64 {
        self.slices.iter().map(|s| s.linf_norm()).fold(0.0, f64::max)
    }
}

/// Space-time pairing `integral integral conj(F) . G dx w(t) dt` with the
/// supplied per-slice weights (spatial integral computed via Parseval).
pub fn st_inner<F: FieldData>(
    a: &SpaceTimeField<F>,
    b: &SpaceTimeField<F>,
    weights: &[f64],
) -> Complex64 {
    assert_eq!(a.len(), b.len(), "time grid mismatch");
    assert_eq!(a.len(), weights.len(), "weight count mismatch");
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..a.len() {
        acc += a.slice(j).l2_inner(b.slice(j)) * weights[j];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid2() -> Grid {
        Grid::new(2, 16, 2.0 * std::f64::consts::PI).unwrap()
    }

    /// Oracle: centered finite differences converge to the spectral
    /// derivative for a smooth low-mode field.
    #[test]
    fn spectral_derivative_matches_finite_differences() {
        let grid = Grid::new(2, 64, 2.0 * std::f64::consts::PI).unwrap();
        let n = grid.size();
        let h = grid.spacing();
        // f(x) = sin(2 x0) * cos(3 x1)
        let phys = ArrayD::from_shape_fn(IxDyn(&grid.shape()), |ix| {
            let x0 = ix[0] as f64 * h;
            let x1 = ix[1] as f64 * h;
            Complex64::new((2.0 * x0).sin() * (3.0 * x1).cos(), 0.0)
        });
        let f = ScalarField::from_physical(grid, vec![phys.clone()]);
        let df = partial(&f, 0);
        let dphys = df.to_physical().remove(0);
        // 4th-order centered stencil
        let mut max_err = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let at = |ii: i64| phys[IxDyn(&[ii.rem_euclid(n as i64) as usize, j])].re;
                let fd = (8.0 * (at(i as i64 + 1) - at(i as i64 - 1))
                    - (at(i as i64 + 2) - at(i as i64 - 2)))
                    / (12.0 * h);
                let sp = dphys[IxDyn(&[i, j])].re;
                max_err = max_err.max((fd - sp).abs());
            }
        }
        // 4th-order error ~ h^4 * |f^(5)| ~ (2pi/64)^4 * 32
        assert!(max_err < 5e-3, "stencil vs spectral derivative: {max_err}");
    }

    #[test]
    fn derivative_is_exact_on_single_modes() {
        let grid = grid2();
        let mut f = ScalarField::zeros(grid);
        f.coeffs_mut()[IxDyn(&[3, 14])] = Complex64::new(1.0, 0.5); // m = (3, -2)
        let d0 = partial(&f, 0);
        let d1 = partial(&f, 1);
        let ik0 = Complex64::new(0.0, 3.0);
        let ik1 = Complex64::new(0.0, -2.0);
        assert!((d0.coeffs()[IxDyn(&[3, 14])] - ik0 * Complex64::new(1.0, 0.5)).norm() < 1e-15);
        assert!((d1.coeffs()[IxDyn(&[3, 14])] - ik1 * Complex64::new(1.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn hermitian_symmetrization_gives_real_samples() {
        let grid = grid2();
        let mut f = ScalarField::zeros(grid);
        f.coeffs_mut()[IxDyn(&[1, 2])] = Complex64::new(0.7, -0.3);
        f.coeffs_mut()[IxDyn(&[5, 9])] = Complex64::new(-0.2, 1.1);
        f.hermitian_symmetrize();
        let phys = f.to_physical().remove(0);
        let max_im = phys.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        assert!(max_im < 1e-14, "imaginary residue {max_im}");
    }

    #[test]
    fn parseval_matches_physical_quadrature() {
        let grid = grid2();
        let mut f = ScalarField::zeros(grid);
        f.coeffs_mut()[IxDyn(&[2, 3])] = Complex64::new(0.5, 0.25);
        f.coeffs_mut()[IxDyn(&[0, 0])] = Complex64::new(1.0, 0.0);
        f.hermitian_symmetrize();
        let spectral = f.l2_norm();
        let phys = f.to_physical().remove(0);
        let cellsum: f64 = phys.iter().map(|z| z.norm_sqr()).sum();
        let quadrature = (cellsum * grid.cell_volume()).sqrt();
        assert_relative_eq!(spectral, quadrature, max_relative = 1e-12);
    }

    /// Oracle: product of two single trig modes expands into the exact sum
    /// and difference modes.
    #[test]
    fn tensor_product_matches_trig_identity() {
        let grid = grid2();
        // u = (cos(x0), 0), v = (cos(2 x0), 0)
        let mut u = VectorField::zeros(grid);
        u.comp_mut(0)[IxDyn(&[1, 0])] = Complex64::new(0.5, 0.0);
        u.comp_mut(0)[IxDyn(&[15, 0])] = Complex64::new(0.5, 0.0);
        let mut v = VectorField::zeros(grid);
        v.comp_mut(0)[IxDyn(&[2, 0])] = Complex64::new(0.5, 0.0);
        v.comp_mut(0)[IxDyn(&[14, 0])] = Complex64::new(0.5, 0.0);
        let t = tensor_product(&u, &v).unwrap();
        // cos a * cos b = (cos(a+b) + cos(a-b)) / 2: modes 3 and 1, weight 1/4
        let e = t.entry(0, 0);
        assert_relative_eq!(e[IxDyn(&[3, 0])].re, 0.25, epsilon = 1e-14);
        assert_relative_eq!(e[IxDyn(&[1, 0])].re, 0.25, epsilon = 1e-14);
        assert_relative_eq!(e[IxDyn(&[13, 0])].re, 0.25, epsilon = 1e-14);
        assert_relative_eq!(e[IxDyn(&[15, 0])].re, 0.25, epsilon = 1e-14);
        let other: f64 = t.entry(0, 1).iter().chain(t.entry(1, 1)).map(|z| z.norm()).sum();
        assert!(other < 1e-15);
    }

    #[test]
    fn dealias_zeroes_high_modes_only() {
        let grid = grid2(); // N = 16, cutoff 5
        let mut f = ScalarField::zeros(grid);
        f.coeffs_mut()[IxDyn(&[5, 0])] = Complex64::new(1.0, 0.0);
        f.coeffs_mut()[IxDyn(&[6, 0])] = Complex64::new(1.0, 0.0);
        f.coeffs_mut()[IxDyn(&[0, 10])] = Complex64::new(1.0, 0.0); // m1 = -6
        f.dealias();
        assert_eq!(f.coeffs()[IxDyn(&[5, 0])], Complex64::new(1.0, 0.0));
        assert_eq!(f.coeffs()[IxDyn(&[6, 0])], Complex64::new(0.0, 0.0));
        assert_eq!(f.coeffs()[IxDyn(&[0, 10])], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn divergence_of_gradient_is_laplacian() {
        let grid = grid2();
        let mut f = ScalarField::zeros(grid);
        f.coeffs_mut()[IxDyn(&[2, 5])] = Complex64::new(1.0, -1.0);
        let lap = divergence(&gradient(&f));
        // -|k|^2 with k = (2, 5)
        let expect = Complex64::new(1.0, -1.0) * (-(4.0 + 25.0));
        assert!((lap.coeffs()[IxDyn(&[2, 5])] - expect).norm() < 1e-12);
    }

    #[test]
    fn space_time_field_validates_times() {
        let grid = grid2();
        let s = VectorField::zeros(grid);
        assert!(SpaceTimeField::new(vec![0.1, 0.2], vec![s.clone(), s.clone()]).is_ok());
        assert!(SpaceTimeField::new(vec![0.2, 0.1], vec![s.clone(), s.clone()]).is_err());
        assert!(SpaceTimeField::new(vec![0.1], vec![s.clone(), s.clone()]).is_err());
        assert!(SpaceTimeField::new(vec![0.0, 0.1], vec![s.clone(), s]).is_err());
    }
}
