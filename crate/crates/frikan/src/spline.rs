//! Uniform B-spline bases on a bounded interval.
//!
//! A [`SplineGrid`] covers an interior range `[lo, hi]` with `G` equal
//! intervals and extends the knot vector by `r` extra uniform steps on each
//! side, giving `G + 2r + 1` knots and `G + r` basis functions of degree `r`.
//! Inside the interior range the basis functions are a partition of unity;
//! outside the extended knot span every basis function is zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineGrid {
    lo: f64,
    hi: f64,
    num_intervals: usize,
    order: usize,
    knots: Vec<f64>,
}

impl SplineGrid {
    /// Builds a uniform grid over `[lo, hi]` with `num_intervals` interior
    /// intervals and spline degree `order`.
    pub fn uniform(lo: f64, hi: f64, num_intervals: usize, order: usize) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::invalid(format!(
                "spline range must be finite with lo < hi, got [{lo}, {hi}]"
            )));
        }
        if num_intervals == 0 || order == 0 {
            return Err(Error::invalid(format!(
                "spline grid needs at least one interval and degree >= 1, \
                 got {num_intervals} intervals, degree {order}"
            )));
        }
        let step = (hi - lo) / num_intervals as f64;
        let knots = (0..=num_intervals + 2 * order)
            .map(|i| lo + (i as f64 - order as f64) * step)
            .collect();
        Ok(SplineGrid { lo, hi, num_intervals, order, knots })
    }

    /// Number of basis functions: `G + r`.
    pub fn basis_count(&self) -> usize {
        self.num_intervals + self.order
    }

    pub fn num_intervals(&self) -> usize {
        self.num_intervals
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Interior range the grid was built over.
    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Evaluates every basis function at `x`.
    pub fn basis(&self, x: f64) -> Result<Vec<f64>> {
        if !x.is_finite() {
            return Err(Error::invalid(format!("spline basis input must be finite, got {x}")));
        }
        let mut work = Vec::new();
        let mut out = vec![0.0; self.basis_count()];
        self.basis_into(x, &mut work, &mut out, None);
        Ok(out)
    }

    /// Evaluates every basis function and its first derivative at `x`.
    pub fn basis_with_derivative(&self, x: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if !x.is_finite() {
            return Err(Error::invalid(format!("spline basis input must be finite, got {x}")));
        }
        let mut work = Vec::new();
        let mut values = vec![0.0; self.basis_count()];
        let mut derivs = vec![0.0; self.basis_count()];
        self.basis_into(x, &mut work, &mut values, Some(&mut derivs));
        Ok((values, derivs))
    }

    /// Cox-de Boor recursion over the full basis set, writing values (and
    /// optionally derivatives) into caller-provided slices. `x` must be
    /// finite; out-of-range `x` yields all zeros.
    pub(crate) fn basis_into(
        &self,
        x: f64,
        work: &mut Vec<f64>,
        values: &mut [f64],
        derivs: Option<&mut [f64]>,
    ) {
        let n = self.basis_count();
        debug_assert_eq!(values.len(), n);
        let t = &self.knots;
        let spans = t.len() - 1;
        work.clear();
        work.resize(spans, 0.0);

        // Degree-0 indicators over half-open spans [t_i, t_{i+1}).
        for i in 0..spans {
            if t[i] <= x && x < t[i + 1] {
                work[i] = 1.0;
            }
        }

        // Raise the degree in place: slot i only reads slots i and i+1 of the
        // previous level, so an ascending sweep is safe.
        for d in 1..self.order {
            for i in 0..spans - d {
                let left = (x - t[i]) / (t[i + d] - t[i]) * work[i];
                let right = (t[i + d + 1] - x) / (t[i + d + 1] - t[i + 1]) * work[i + 1];
                work[i] = left + right;
            }
        }

        // Derivatives come from the degree r-1 values before the last raise.
        if let Some(derivs) = derivs {
            debug_assert_eq!(derivs.len(), n);
            let r = self.order as f64;
            for i in 0..n {
                let left = work[i] / (t[i + self.order] - t[i]);
                let right = work[i + 1] / (t[i + self.order + 1] - t[i + 1]);
                derivs[i] = r * (left - right);
            }
        }

        let d = self.order;
        for i in 0..n {
            let left = (x - t[i]) / (t[i + d] - t[i]) * work[i];
            let right = (t[i + d + 1] - x) / (t[i + d + 1] - t[i + 1]) * work[i + 1];
            values[i] = left + right;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_grid_knot_layout() {
        let grid = SplineGrid::uniform(-1.0, 1.0, 5, 3).unwrap();
        assert_eq!(grid.knots().len(), 12);
        assert_eq!(grid.basis_count(), 8);
        let step = 2.0 / 5.0;
        for (i, pair) in grid.knots().windows(2).enumerate() {
            assert_abs_diff_eq!(pair[1] - pair[0], step, epsilon = 1e-12);
            let _ = i;
        }
        assert_abs_diff_eq!(grid.knots()[3], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(grid.knots()[8], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(SplineGrid::uniform(1.0, -1.0, 5, 3).is_err());
        assert!(SplineGrid::uniform(-1.0, 1.0, 0, 3).is_err());
        assert!(SplineGrid::uniform(-1.0, 1.0, 5, 0).is_err());
        assert!(SplineGrid::uniform(f64::NAN, 1.0, 5, 3).is_err());
        let grid = SplineGrid::uniform(-1.0, 1.0, 5, 3).unwrap();
        assert!(grid.basis(f64::NAN).is_err());
        assert!(grid.basis(f64::INFINITY).is_err());
    }

    #[test]
    fn degree_one_hats_match_hand_values() {
        // Knots -2,-1,0,1,2 give three hat functions peaking at -1, 0, 1.
        let grid = SplineGrid::uniform(-1.0, 1.0, 2, 1).unwrap();
        assert_eq!(grid.knots(), &[-2.0, -1.0, 0.0, 1.0, 2.0]);
        let (values, derivs) = grid.basis_with_derivative(-0.5).unwrap();
        assert_abs_diff_eq!(values[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(values[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(values[2], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(derivs[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(derivs[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(derivs[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn partition_of_unity_inside_interior_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let g = rng.random_range(1..=12);
            let r = rng.random_range(1..=4);
            let lo = rng.random_range(-3.0..0.0);
            let hi = lo + rng.random_range(0.5..4.0);
            let grid = SplineGrid::uniform(lo, hi, g, r).unwrap();
            for _ in 0..20 {
                let x = rng.random_range(lo..hi);
                let sum: f64 = grid.basis(x).unwrap().iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12, "sum {sum} at x {x}");
            }
        }
    }

    #[test]
    fn local_support_and_out_of_range() {
        let grid = SplineGrid::uniform(-1.0, 1.0, 5, 3).unwrap();
        let (first, last) = (grid.knots()[0], *grid.knots().last().unwrap());
        for &x in &[first - 0.1, last + 0.1, last + 100.0] {
            assert!(grid.basis(x).unwrap().iter().all(|&b| b == 0.0));
        }
        let x = -0.9;
        let values = grid.basis(x).unwrap();
        for (m, &v) in values.iter().enumerate() {
            let inside = grid.knots()[m] <= x && x <= grid.knots()[m + grid.order() + 1];
            if !inside {
                assert_eq!(v, 0.0, "basis {m} should vanish at {x}");
            }
        }
        for &v in &values {
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..20 {
            let g = rng.random_range(2..=10);
            let r = rng.random_range(1..=4);
            let grid = SplineGrid::uniform(-1.0, 1.0, g, r).unwrap();
            for _ in 0..20 {
                let x = rng.random_range(-0.99..0.99);
                let (_, derivs) = grid.basis_with_derivative(x).unwrap();
                let plus = grid.basis(x + h).unwrap();
                let minus = grid.basis(x - h).unwrap();
                for m in 0..grid.basis_count() {
                    let fd = (plus[m] - minus[m]) / (2.0 * h);
                    assert!(
                        (fd - derivs[m]).abs() <= 1e-5,
                        "basis {m} deriv {} vs fd {fd} at x {x}",
                        derivs[m]
                    );
                }
            }
        }
    }
}
