//! Fourier-multiplier operators: heat semigroup, Leray projection, and the
//! projected-divergence kernels used by the Duhamel integrals.
//!
//! Every operator acts mode-by-mode. Pure exponential factors
//! `e^{-tau |k|^2}` are applied through per-axis tables (one `exp` per axis
//! index instead of one per mode), which keeps the quadrature inner loops
//! cheap.

use crate::error::{Error, Result};
use crate::field::{divergence_tensor, FieldData, TensorField, VectorField};
use crate::grid::Grid;
use ndarray::ArrayD;
use num_complex::Complex64;

/// Per-axis table `exp(-tau * k_i^2)` in FFT index order.
pub fn axis_heat_table(grid: &Grid, tau: f64) -> Vec<f64> {
    (0..grid.size())
        .map(|i| {
            let k = grid.wavenumber(i);
            (-tau * k * k).exp()
        })
        .collect()
}

/// Multiply every coefficient by the product of per-axis table values.
fn apply_axis_table(grid: &Grid, comp: &mut ArrayD<Complex64>, table: &[f64]) {
    let n = grid.size();
    let data = comp.as_slice_mut().expect("contiguous");
    match grid.dim() {
        2 => {
            let mut f = 0;
            for i0 in 0..n {
                let t0 = table[i0];
                for i1 in 0..n {
                    data[f] *= t0 * table[i1];
                    f += 1;
                }
            }
        }
        3 => {
            let mut f = 0;
            for i0 in 0..n {
                let t0 = table[i0];
                for i1 in 0..n {
                    let t01 = t0 * table[i1];
                    for i2 in 0..n {
                        data[f] *= t01 * table[i2];
                        f += 1;
                    }
                }
            }
        }
        _ => unreachable!("grid dimension is validated at construction"),
    }
}

/// Heat semigroup `e^{t Laplacian}` for `t >= 0`.
pub fn heat_evolve<F: FieldData>(f: &F, t: f64) -> Result<F> {
    if t < 0.0 {
        return Err(Error::NonPositive { what: "heat time", value: t });
    }
    let grid = *f.grid();
    let mut out = f.clone();
    if t == 0.0 {
        return Ok(out);
    }
    let table = axis_heat_table(&grid, t);
    for comp in out.components_mut() {
        apply_axis_table(&grid, comp, &table);
    }
    Ok(out)
}

/// Multiply by `-|k|^2` (the Laplacian).
pub fn laplacian<F: FieldData>(f: &F) -> F {
    let grid = *f.grid();
    let mut out = f.clone();
    scalar_multiplier(&grid, &mut out, |lam| -lam);
    out
}

/// `Laplacian e^{t Laplacian}` in one pass: multiplier `-|k|^2 e^{-t|k|^2}`.
pub fn heat_laplace<F: FieldData>(f: &F, t: f64) -> Result<F> {
    if t < 0.0 {
        return Err(Error::NonPositive { what: "heat time", value: t });
    }
    let grid = *f.grid();
    let mut out = f.clone();
    let table = axis_heat_table(&grid, t);
    let ksq: Vec<f64> = (0..grid.size())
        .map(|i| {
            let k = grid.wavenumber(i);
            k * k
        })
        .collect();
    let n = grid.size();
    for comp in out.components_mut() {
        let data = comp.as_slice_mut().expect("contiguous");
        match grid.dim() {
            2 => {
                let mut f = 0;
                for i0 in 0..n {
                    for i1 in 0..n {
                        data[f] *= -(ksq[i0] + ksq[i1]) * table[i0] * table[i1];
                        f += 1;
                    }
                }
            }
            3 => {
                let mut f = 0;
                for i0 in 0..n {
                    for i1 in 0..n {
                        for i2 in 0..n {
                            data[f] *= -(ksq[i0] + ksq[i1] + ksq[i2])
                                * table[i0]
                                * table[i1]
                                * table[i2];
                            f += 1;
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    Ok(out)
}

/// Apply a real scalar multiplier `g(|k|^2)` to every component.
pub fn scalar_multiplier<F: FieldData>(grid: &Grid, f: &mut F, g: impl Fn(f64) -> f64) {
    let n = grid.size();
    let ksq: Vec<f64> = (0..n)
        .map(|i| {
            let k = grid.wavenumber(i);
            k * k
        })
        .collect();
    for comp in f.components_mut() {
        let data = comp.as_slice_mut().expect("contiguous");
        match grid.dim() {
            2 => {
                let mut fl = 0;
                for i0 in 0..n {
                    for i1 in 0..n {
                        data[fl] *= g(ksq[i0] + ksq[i1]);
                        fl += 1;
                    }
                }
            }
            3 => {
                let mut fl = 0;
                for i0 in 0..n {
                    for i1 in 0..n {
                        for i2 in 0..n {
                            data[fl] *= g(ksq[i0] + ksq[i1] + ksq[i2]);
                            fl += 1;
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
    }
}

/// Leray projection onto divergence-free fields: per mode
/// `P(k) = I - k k^T / |k|^2`, with `P(0) = I`.
pub fn leray_project(v: &VectorField) -> VectorField {
    let grid = *v.grid();
    let n = grid.size();
    let kt: Vec<f64> = grid.axis_wavenumbers();
    let mut out = v.clone();
    match grid.dim() {
        2 => {
            let v0: Vec<Complex64> = v.comp(0).as_slice().unwrap().to_vec();
            let v1: Vec<Complex64> = v.comp(1).as_slice().unwrap().to_vec();
            let (head, tail) = out.components_mut().split_at_mut(1);
            let o0 = head[0].as_slice_mut().unwrap();
            let o1 = tail[0].as_slice_mut().unwrap();
            let mut f = 0;
            for i0 in 0..n {
                let k0 = kt[i0];
                for i1 in 0..n {
                    let k1 = kt[i1];
                    let lam = k0 * k0 + k1 * k1;
                    if lam > 0.0 {
                        let dot = (v0[f] * k0 + v1[f] * k1) / lam;
                        o0[f] = v0[f] - dot * k0;
                        o1[f] = v1[f] - dot * k1;
                    }
                    f += 1;
                }
            }
        }
        3 => {
            let v0: Vec<Complex64> = v.comp(0).as_slice().unwrap().to_vec();
            let v1: Vec<Complex64> = v.comp(1).as_slice().unwrap().to_vec();
            let v2: Vec<Complex64> = v.comp(2).as_slice().unwrap().to_vec();
            let comps = out.components_mut();
            let (c0, rest) = comps.split_at_mut(1);
            let (c1, c2) = rest.split_at_mut(1);
            let o0 = c0[0].as_slice_mut().unwrap();
            let o1 = c1[0].as_slice_mut().unwrap();
            let o2 = c2[0].as_slice_mut().unwrap();
            let mut f = 0;
            for i0 in 0..n {
                let k0 = kt[i0];
                for i1 in 0..n {
                    let k1 = kt[i1];
                    for i2 in 0..n {
                        let k2 = kt[i2];
                        let lam = k0 * k0 + k1 * k1 + k2 * k2;
                        if lam > 0.0 {
                            let dot = (v0[f] * k0 + v1[f] * k1 + v2[f] * k2) / lam;
                            o0[f] = v0[f] - dot * k0;
                            o1[f] = v1[f] - dot * k1;
                            o2[f] = v2[f] - dot * k2;
                        }
                        f += 1;
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    out
}

/// `P (ik . T)`: divergence of a tensor followed by Leray projection.
pub fn project_div(t: &TensorField) -> VectorField {
    leray_project(&divergence_tensor(t))
}

/// Smoothed projected divergence `e^{tau Laplacian} P (ik . T)`, `tau > 0`.
pub fn pdiv_apply(t: &TensorField, tau: f64) -> Result<VectorField> {
    if tau <= 0.0 {
        return Err(Error::NonPositive { what: "smoothing time", value: tau });
    }
    heat_evolve(&project_div(t), tau)
}

/// The scale-adapted kernel
/// `T_s = P ik sqrt(s) psi(s |k|^2)` with `psi(r) = -(1 - e^{-2r}) / r`
/// extended continuously by `psi(0) = -2`.
pub fn ts_apply(t: &TensorField, s: f64) -> Result<VectorField> {
    if s <= 0.0 {
        return Err(Error::NonPositive { what: "kernel scale", value: s });
    }
    let grid = *t.grid();
    let mut out = project_div(t);
    let rs = s.sqrt();
    scalar_multiplier(&grid, &mut out, |lam| {
        let r = s * lam;
        rs * psi(r)
    });
    Ok(out)
}

/// `psi(r) = -(1 - e^{-2r}) / r`, with a series branch near `r = 0`.
pub fn psi(r: f64) -> f64 {
    if r < 1e-6 {
        -2.0 + 2.0 * r - (4.0 / 3.0) * r * r
    } else {
        -(1.0 - (-2.0 * r).exp()) / r
    }
}

/// The two-time kernel `K_{t,s} = e^{-(t+s)|k|^2} P ik s^{-1/2}` (`s > 0`,
/// `t >= 0`).
pub fn kts_apply(t_field: &TensorField, t: f64, s: f64) -> Result<VectorField> {
    if s <= 0.0 {
        return Err(Error::NonPositive { what: "kernel scale", value: s });
    }
    let mut out = heat_evolve(&project_div(t_field), t + s)?;
    out.scale(1.0 / s.sqrt());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{divergence, gradient, ScalarField};
    use crate::grid::for_each_site;
    use approx::assert_relative_eq;
    use ndarray::IxDyn;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vector(grid: Grid, seed: u64) -> VectorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cutoff = grid.dealias_cutoff();
        let mut v = VectorField::zeros(grid);
        for c in v.components_mut() {
            for (ix, z) in c.indexed_iter_mut() {
                let ok = (0..grid.dim()).all(|ax| grid.mode(ix[ax]).abs() <= cutoff);
                if ok {
                    *z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            }
        }
        v.hermitian_symmetrize();
        v
    }

    /// Oracle: the heat flow equals convolution with the periodized Gaussian,
    /// evaluated by direct summation in physical space.
    #[test]
    fn heat_matches_periodized_gaussian_convolution() {
        let grid = Grid::new(2, 32, 2.0 * std::f64::consts::PI).unwrap();
        let l = grid.box_len();
        let n = grid.size();
        let h = grid.spacing();
        let t = 0.1;
        // smooth low-mode field
        let mut f = ScalarField::zeros(grid);
        f.coeffs_mut()[IxDyn(&[1, 2])] = Complex64::new(0.4, -0.1);
        f.coeffs_mut()[IxDyn(&[3, 0])] = Complex64::new(-0.2, 0.3);
        f.hermitian_symmetrize();
        let evolved = heat_evolve(&f, t).unwrap().to_physical().remove(0);

        let fp = f.to_physical().remove(0);
        // periodized Gaussian kernel sampled on the lattice
        let kernel = ArrayD::from_shape_fn(IxDyn(&grid.shape()), |ix| {
            let mut acc = 0.0;
            for m0 in -2i64..=2 {
                for m1 in -2i64..=2 {
                    let z0 = ix[0] as f64 * h + m0 as f64 * l;
                    let z1 = ix[1] as f64 * h + m1 as f64 * l;
                    acc += (-(z0 * z0 + z1 * z1) / (4.0 * t)).exp();
                }
            }
            acc / (4.0 * std::f64::consts::PI * t)
        });
        let mut max_err = 0.0f64;
        for_each_site(&grid, |_, x| {
            let mut conv = 0.0;
            for_each_site(&grid, |_, y| {
                let dz = [
                    (x[0] + n - y[0]) % n,
                    (x[1] + n - y[1]) % n,
                ];
                conv += kernel[IxDyn(&dz)] * fp[IxDyn(y)].re;
            });
            conv *= h * h;
            max_err = max_err.max((conv - evolved[IxDyn(x)].re).abs());
        });
        assert!(max_err < 1e-9, "heat vs Gaussian convolution: {max_err}");
    }

    #[test]
    fn heat_semigroup_property() {
        let grid = Grid::new(2, 32, 2.0 * std::f64::consts::PI).unwrap();
        let v = random_vector(grid, 11);
        let two_step = heat_evolve(&heat_evolve(&v, 0.3).unwrap(), 0.7).unwrap();
        let one_step = heat_evolve(&v, 1.0).unwrap();
        assert!(two_step.max_coeff_diff(&one_step) < 1e-14);
        // identity at t = 0
        assert!(heat_evolve(&v, 0.0).unwrap().max_coeff_diff(&v) == 0.0);
        assert!(heat_evolve(&v, -0.1).is_err());
    }

    #[test]
    fn leray_is_idempotent_divergence_free_and_kills_gradients() {
        for (dim, size) in [(2usize, 32usize), (3, 16)] {
            let grid = Grid::new(dim, size, 2.0 * std::f64::consts::PI).unwrap();
            let v = random_vector(grid, 5 + dim as u64);
            let pv = leray_project(&v);
            let ppv = leray_project(&pv);
            let scale = v.l2_norm();
            assert!(pv.max_coeff_diff(&ppv) < 1e-13 * scale, "idempotence dim {dim}");
            let div = divergence(&pv);
            assert!(div.l2_norm() < 1e-12 * scale, "solenoidal dim {dim}");
            // gradients are annihilated
            let mut phi = ScalarField::zeros(grid);
            phi.coeffs_mut()[IxDyn(&vec![2; dim])] = Complex64::new(1.0, 0.4);
            phi.hermitian_symmetrize();
            let killed = leray_project(&gradient(&phi));
            assert!(killed.l2_norm() < 1e-13, "gradient kill dim {dim}");
            // self-adjointness
            let w = random_vector(grid, 99 + dim as u64);
            let a = pv.l2_inner(&w);
            let b = v.l2_inner(&leray_project(&w));
            assert!((a - b).norm() < 1e-10 * scale * w.l2_norm());
        }
    }

    #[test]
    fn heat_commutes_with_projection() {
        let grid = Grid::new(3, 16, 2.0 * std::f64::consts::PI).unwrap();
        let v = random_vector(grid, 21);
        let a = heat_evolve(&leray_project(&v), 0.4).unwrap();
        let b = leray_project(&heat_evolve(&v, 0.4).unwrap());
        assert!(a.max_coeff_diff(&b) < 1e-13 * v.l2_norm());
    }

    #[test]
    fn heat_laplace_is_time_derivative_of_heat_flow() {
        let grid = Grid::new(2, 32, 2.0 * std::f64::consts::PI).unwrap();
        let v = random_vector(grid, 31);
        let t = 0.25;
        let exact = heat_laplace(&v, t).unwrap();
        let eps = 1e-5;
        let plus = heat_evolve(&v, t + eps).unwrap();
        let minus = heat_evolve(&v, t - eps).unwrap();
        let mut fd = plus.sub(&minus);
        fd.scale(1.0 / (2.0 * eps));
        assert!(fd.max_coeff_diff(&exact) < 1e-6 * v.l2_norm());
        // and agrees with Laplacian composed with heat
        let composed = laplacian(&heat_evolve(&v, t).unwrap());
        assert!(composed.max_coeff_diff(&exact) < 1e-13 * v.l2_norm());
    }

    #[test]
    fn ts_kernel_single_mode_closed_form() {
        let grid = Grid::new(2, 16, 2.0 * std::f64::consts::PI).unwrap();
        // T holding a single mode in entry (0,1): divergence contracts the
        // second index, so div T = (i k_1 c, 0) at that mode
        let mut t_field = TensorField::zeros(grid);
        let c = Complex64::new(0.8, -0.5);
        {
            let comps = t_field.components_mut();
            comps[1][IxDyn(&[2, 3])] = c; // entry (0, 1), mode m = (2, 3)
        }
        let s = 0.07;
        let out = ts_apply(&t_field, s).unwrap();
        let (k0, k1) = (2.0, 3.0);
        let lam = k0 * k0 + k1 * k1;
        let div0 = Complex64::new(0.0, k1) * c;
        // project (div0, 0) orthogonally to k
        let dot = div0 * k0 / lam;
        let p0 = div0 - dot * k0;
        let p1 = -dot * k1;
        let factor = s.sqrt() * psi(s * lam);
        assert!((out.comp(0)[IxDyn(&[2, 3])] - p0 * factor).norm() < 1e-14);
        assert!((out.comp(1)[IxDyn(&[2, 3])] - p1 * factor).norm() < 1e-14);
    }

    #[test]
    fn psi_series_branch_is_continuous() {
        // compare series and direct formula on both sides of the threshold;
        // the evaluation points straddle the branch so closely that the
        // slope of psi contributes nothing at this tolerance
        let r_lo: f64 = 1e-6 * (1.0 - 1e-12);
        let r_hi: f64 = 1e-6 * (1.0 + 1e-12);
        let below = psi(r_lo);
        let above = -(1.0 - (-2.0 * r_hi).exp()) / r_hi;
        assert_relative_eq!(below, above, max_relative = 1e-9);
        assert_relative_eq!(psi(0.0), -2.0);
        // analytic value at a moderate argument
        assert_relative_eq!(psi(1.0), -(1.0 - (-2.0f64).exp()), max_relative = 1e-14);
    }

    #[test]
    fn kts_kernel_matches_heat_of_projected_divergence() {
        let grid = Grid::new(2, 16, 2.0 * std::f64::consts::PI).unwrap();
        let mut t_field = TensorField::zeros(grid);
        t_field.components_mut()[2][IxDyn(&[1, 4])] = Complex64::new(0.3, 0.9);
        let (t, s) = (0.2, 0.45);
        let out = kts_apply(&t_field, t, s).unwrap();
        let mut expect = heat_evolve(&project_div(&t_field), t + s).unwrap();
        expect.scale(1.0 / s.sqrt());
        assert!(out.max_coeff_diff(&expect) < 1e-15);
        assert!(kts_apply(&t_field, 0.1, 0.0).is_err());
    }
}
