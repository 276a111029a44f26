//! Multi-dimensional FFTs on row-major complex arrays, with a per-thread
//! plan cache.
//!
//! Convention: `inverse` (synthesis) sums coefficients against `e^{+i k x}`
//! with no scale factor; `forward` (analysis) applies the conjugate transform
//! and divides by the number of points, so that analysis-then-synthesis is
//! the identity and coefficient `c_0` is the mean of the samples.

use ndarray::{ArrayD, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cache| {
        cache
            .borrow_mut()
            .entry((len, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    })
}

fn transform_along_axes(data: &mut ArrayD<Complex64>, inverse: bool) {
    let ndim = data.ndim();
    for ax in 0..ndim {
        let len = data.shape()[ax];
        let fft = plan(len, inverse);
        let mut lane_buf = vec![Complex64::new(0.0, 0.0); len];
        for mut lane in data.lanes_mut(Axis(ax)) {
            // lanes along non-contiguous axes need a scratch copy
            for (dst, src) in lane_buf.iter_mut().zip(lane.iter()) {
                *dst = *src;
            }
            fft.process(&mut lane_buf);
            for (dst, src) in lane.iter_mut().zip(lane_buf.iter()) {
                *dst = *src;
            }
        }
    }
}

/// Physical samples -> Fourier coefficients (normalized by `1/N^n`).
pub fn analyze(data: &mut ArrayD<Complex64>) {
    let total: usize = data.len();
    transform_along_axes(data, false);
    let scale = 1.0 / total as f64;
    data.mapv_inplace(|z| z * scale);
}

/// Fourier coefficients -> physical samples (unscaled synthesis).
pub fn synthesize(data: &mut ArrayD<Complex64>) {
    transform_along_axes(data, true);
}
