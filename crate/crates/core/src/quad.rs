//! Quadrature in time on geometric (or general increasing) sample grids.
//!
//! The rule integrates `f` over `[0, T]` from samples `f_j = f(t_j)` as
//!
//! * a rectangle `t_0 * f_0` for the unresolved head `[0, t_0]`,
//! * the trapezoid rule in `ln t` on each interval `[t_j, t_{j+1}]`
//!   (exact for integrands proportional to `1/t`),
//! * a rectangle `(T - t_J) * f_J` for a partial final interval.
//!
//! Prefix sums make every truncation `Q(f; t_j)` available in one pass,
//! which the cone/tent functionals rely on.

use crate::grid::TimeGrid;

#[derive(Clone, Debug)]
pub struct TimeQuadrature {
    times: Vec<f64>,
    /// `g_j`: coefficient of `f_j` in the cumulative sum through sample `j`.
    g: Vec<f64>,
    /// `l_j`: the left half-weight of interval `[t_j, t_{j+1}]` (0 for the
    /// last sample); subtracting `l_j * f_j` from the cumulative sum gives
    /// the integral truncated exactly at `t_j`.
    l: Vec<f64>,
}

impl TimeQuadrature {
    pub fn from_times(times: &[f64]) -> Self {
        assert!(!times.is_empty() && times[0] > 0.0, "need positive increasing times");
        assert!(times.windows(2).all(|w| w[1] > w[0]), "need positive increasing times");
        let m = times.len();
        let mut l = vec![0.0; m];
        let mut r = vec![0.0; m]; // right half-weight of the interval ending at j
        for j in 0..m - 1 {
            let half_log = 0.5 * (times[j + 1] / times[j]).ln();
            l[j] = half_log * times[j];
            r[j + 1] = half_log * times[j + 1];
        }
        let mut g = vec![0.0; m];
        for j in 0..m {
            g[j] = r[j] + l[j];
        }
        g[0] += times[0]; // head rectangle [0, t_0]
        TimeQuadrature { times: times.to_vec(), g, l }
    }

    pub fn from_grid(tg: &TimeGrid) -> Self {
        Self::from_times(&tg.times())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Weights `w_j` with `Q(f; T) = sum_j w_j f_j` for the full span
    /// `T = t_last`.
    pub fn full_weights(&self) -> Vec<f64> {
        self.weights_to(*self.times.last().unwrap())
    }

    /// Weights for integration over `[0, T]`; samples beyond `T` get zero.
    pub fn weights_to(&self, t_end: f64) -> Vec<f64> {
        let mut w = vec![0.0; self.times.len()];
        if t_end <= 0.0 {
            return w;
        }
        if t_end < self.times[0] {
            w[0] = t_end; // head rectangle only, sampled at t_0
            return w;
        }
        let j_end = self.floor_index(t_end);
        for j in 0..j_end {
            w[j] = self.g[j];
        }
        w[j_end] = self.g[j_end] - self.l[j_end] + (t_end - self.times[j_end]);
        w
    }

    /// Largest sample index with `t_j <= t` (requires `t >= t_0`), robust to
    /// rounding at sample boundaries.
    pub fn floor_index(&self, t: f64) -> usize {
        let scaled = t * (1.0 + 1e-12);
        match self.times.binary_search_by(|s| s.partial_cmp(&scaled).unwrap()) {
            Ok(j) => j,
            Err(0) => panic!("time {t} below first sample {}", self.times[0]),
            Err(j) => j - 1,
        }
    }

    /// `Q(f; T)` for one sample vector.
    pub fn eval(&self, samples: &[f64], t_end: f64) -> f64 {
        let w = self.weights_to(t_end);
        samples.iter().zip(&w).map(|(f, w)| f * w).sum()
    }

    /// All truncations at sample points: `out[j] = Q(f; t_j)`.
    pub fn prefix(&self, samples: &[f64]) -> Vec<f64> {
        assert_eq!(samples.len(), self.times.len());
        let mut out = vec![0.0; samples.len()];
        let mut cum = 0.0;
        for j in 0..samples.len() {
            cum += self.g[j] * samples[j];
            out[j] = cum - self.l[j] * samples[j];
        }
        out
    }

    /// `Q(f; T)` from a precomputed prefix vector (shared across many `T`).
    pub fn eval_from_prefix(&self, prefix: &[f64], samples: &[f64], t_end: f64) -> f64 {
        if t_end <= 0.0 {
            return 0.0;
        }
        if t_end < self.times[0] {
            return t_end * samples[0];
        }
        let j = self.floor_index(t_end);
        let t_end = t_end.min(*self.times.last().unwrap());
        prefix[j] + (t_end - self.times[j]) * samples[j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn geometric(t0: f64, spo: usize, count: usize) -> Vec<f64> {
        let r = 2f64.powf(1.0 / spo as f64);
        (0..count).map(|j| t0 * r.powi(j as i32)).collect()
    }

    #[test]
    fn exact_for_inverse_time_between_samples() {
        let times = geometric(0.01, 4, 30);
        let q = TimeQuadrature::from_times(&times);
        let samples: Vec<f64> = times.iter().map(|t| 1.0 / t).collect();
        // the log-trapezoid part integrates c/t exactly; subtract the head
        let a = q.eval(&samples, times[25]);
        let b = q.eval(&samples, times[3]);
        assert_relative_eq!(a - b, (times[25] / times[3]).ln(), max_relative = 1e-12);
    }

    #[test]
    fn prefix_matches_direct_evaluation() {
        let times = geometric(0.02, 3, 17);
        let q = TimeQuadrature::from_times(&times);
        let samples: Vec<f64> = times.iter().map(|t| (1.0 + t).recip().sin() + 2.0).collect();
        let prefix = q.prefix(&samples);
        for j in 0..times.len() {
            assert_relative_eq!(prefix[j], q.eval(&samples, times[j]), max_relative = 1e-13);
        }
        // partial tail between samples 5 and 6
        let t_mid = (times[5] * times[6]).sqrt();
        assert_relative_eq!(
            q.eval_from_prefix(&prefix, &samples, t_mid),
            q.eval(&samples, t_mid),
            max_relative = 1e-13
        );
    }

    /// Oracle: refine samples-per-octave and compare against the analytic
    /// integral of a smooth decaying function.
    #[test]
    fn converges_with_refinement() {
        let t_max = 60.0;
        let exact = 1.0 - (-t_max as f64).exp(); // integral of e^{-t} over [0, t_max]
        let mut errs = Vec::new();
        for spo in [2usize, 4, 8] {
            let count = ((t_max / 1e-4_f64).log2() * spo as f64).ceil() as usize + 1;
            let times = geometric(1e-4, spo, count);
            let q = TimeQuadrature::from_times(&times);
            let samples: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
            errs.push((q.eval(&samples, t_max) - exact).abs());
        }
        assert!(errs[0] < 2e-2);
        // trapezoid: error shrinks about 4x per doubling of sample density
        assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
        assert!(errs[2] < errs[1] / 3.0, "{errs:?}");
    }

    #[test]
    fn head_rectangle_below_first_sample() {
        let times = geometric(0.5, 2, 5);
        let q = TimeQuadrature::from_times(&times);
        let samples = vec![3.0; 5];
        assert_relative_eq!(q.eval(&samples, 0.25), 0.75);
        assert_relative_eq!(q.eval(&samples, 0.5), 1.5);
    }
}
