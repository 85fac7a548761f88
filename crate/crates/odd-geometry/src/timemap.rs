//! Monotone time reparametrizations t(k) = integral of a nonnegative
//! speed factor, and their inverses.
//!
//! This is the piece that turns a desingularized parameter k back into
//! metric time. The factor f is allowed to vanish at isolated points (the
//! locus crossings), which makes t(k) a monotone map with flat *points*
//! but no flat intervals, and the inverse continuous with algebraic
//! branches. Panels are split at the known zeros of f, so each panel
//! integral converges fast; inversion brackets on a precomputed cumulative
//! mesh and bisects with local quadrature, which stays accurate through
//! the flat points where Newton would die.

use crate::error::{OddError, Result};
use crate::quad;
use std::sync::Arc;

/// Knots per panel of the cumulative mesh.
const MESH_PER_PANEL: usize = 64;
/// Negative values of f beyond this are a monotonicity violation.
const NEG_TOL: f64 = 1e-11;

#[derive(Clone)]
pub struct TimeMap {
    f: Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>,
    knots_k: Vec<f64>,
    knots_t: Vec<f64>,
    zeros: Vec<f64>,
    tol: f64,
}

impl std::fmt::Debug for TimeMap {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("TimeMap")
            .field("k_range", &self.k_range())
            .field("t_range", &self.t_range())
            .field("knots", &self.knots_k.len())
            .finish()
    }
}

impl TimeMap {
    /// Build the map for `f` on [k_min, k_max]. `zeros` lists parameter
    /// values where f is known to vanish (panel boundaries); `tol` is the
    /// quadrature tolerance per panel.
    pub fn new(
        f: Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>,
        k_min: f64,
        k_max: f64,
        zeros: &[f64],
        tol: f64,
    ) -> Result<TimeMap> {
        assert!(k_min < k_max, "empty parameter range");
        let mut cuts: Vec<f64> = zeros
            .iter()
            .copied()
            .filter(|z| *z > k_min && *z < k_max)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let mut knots_k = vec![k_min];
        let mut lo = k_min;
        for hi in cuts.into_iter().chain(std::iter::once(k_max)) {
            for i in 1..=MESH_PER_PANEL {
                knots_k.push(lo + (hi - lo) * (i as f64) / (MESH_PER_PANEL as f64));
            }
            lo = hi;
        }

        let mut knots_t = Vec::with_capacity(knots_k.len());
        knots_t.push(0.0);
        let mut acc = 0.0;
        for w in knots_k.windows(2) {
            let fa = f(w[0])?;
            let fb = f(w[1])?;
            if fa < -NEG_TOL || fb < -NEG_TOL {
                return Err(OddError::NotMonotone { a: w[0], b: w[1] });
            }
            let r = quad::integrate(|k| f(k).map(|v| v.max(0.0)), w[0], w[1], tol)?;
            acc += r.value.max(0.0);
            knots_t.push(acc);
        }

        Ok(TimeMap {
            f,
            knots_k,
            knots_t,
            zeros: zeros.to_vec(),
            tol,
        })
    }

    /// The known zeros of the factor, as passed at construction.
    pub fn zeros(&self) -> &[f64] {
        &self.zeros
    }

    /// Offset all times so that t(k_ref) = t_ref.
    pub fn with_time_origin(mut self, k_ref: f64, t_ref: f64) -> TimeMap {
        let shift = t_ref - self.t_of_k(k_ref);
        for t in &mut self.knots_t {
            *t += shift;
        }
        self
    }

    pub fn k_range(&self) -> (f64, f64) {
        (self.knots_k[0], *self.knots_k.last().unwrap())
    }

    pub fn t_range(&self) -> (f64, f64) {
        (self.knots_t[0], *self.knots_t.last().unwrap())
    }

    /// Forward map. Clamps k to the built range.
    pub fn t_of_k(&self, k: f64) -> f64 {
        let (lo, hi) = self.k_range();
        let k = k.clamp(lo, hi);
        let i = self.locate_k(k);
        let base = self.knots_k[i];
        if k == base {
            return self.knots_t[i];
        }
        let extra = quad::integrate(
            |x| (self.f)(x).map(|v| v.max(0.0)),
            base,
            k,
            self.tol,
        )
        .map(|r| r.value)
        .unwrap_or_else(|_| {
            // fall back to linear interpolation on the mesh
            let w = (k - base) / (self.knots_k[i + 1] - base);
            w * (self.knots_t[i + 1] - self.knots_t[i])
        });
        self.knots_t[i] + extra.max(0.0)
    }

    /// Inverse map. Clamps t to the reachable range.
    pub fn k_of_t(&self, t: f64) -> f64 {
        let (t_lo, t_hi) = self.t_range();
        let t = t.clamp(t_lo, t_hi);
        // bracket on the cumulative mesh
        let j = self
            .knots_t
            .partition_point(|&v| v < t)
            .clamp(1, self.knots_t.len() - 1);
        let (mut ka, mut kb) = (self.knots_k[j - 1], self.knots_k[j]);
        let (ta, tb) = (self.knots_t[j - 1], self.knots_t[j]);
        if t <= ta {
            return ka;
        }
        if t >= tb {
            return kb;
        }
        // bisection on t(k) - t with quadrature from the left knot
        let base_k = ka;
        let base_t = ta;
        let mut ga = ta - t; // negative
        for _ in 0..90 {
            let mid = 0.5 * (ka + kb);
            if mid == ka || mid == kb {
                break;
            }
            let tm = base_t
                + quad::integrate(
                    |x| (self.f)(x).map(|v| v.max(0.0)),
                    base_k,
                    mid,
                    self.tol,
                )
                .map(|r| r.value.max(0.0))
                .unwrap_or((tb - ta) * (mid - base_k) / (kb - base_k));
            let g = tm - t;
            if g == 0.0 {
                return mid;
            }
            if (g < 0.0) == (ga < 0.0) {
                ka = mid;
                ga = g;
            } else {
                kb = mid;
            }
        }
        0.5 * (ka + kb)
    }

    /// The speed factor at a parameter value.
    pub fn factor(&self, k: f64) -> Result<f64> {
        (self.f)(k)
    }

    fn locate_k(&self, k: f64) -> usize {
        self.knots_k
            .partition_point(|&v| v <= k)
            .clamp(1, self.knots_k.len() - 1)
            - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_of(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        k_min: f64,
        k_max: f64,
        zeros: &[f64],
    ) -> TimeMap {
        TimeMap::new(Arc::new(move |k| Ok(f(k))), k_min, k_max, zeros, 1e-12).unwrap()
    }

    #[test]
    fn linear_factor_gives_square_root_inverse() {
        // f = |k| on [-1, 1]: t(k) = sgn(k) k^2/2, k(t) = sgn(t) sqrt(2|t|)
        let m = map_of(|k| k.abs(), -1.0, 1.0, &[0.0]).with_time_origin(0.0, 0.0);
        assert!((m.t_of_k(1.0) - 0.5).abs() < 1e-13);
        assert!((m.t_of_k(-1.0) + 0.5).abs() < 1e-13);
        for i in 0..=40 {
            let t = -0.5 + (i as f64) / 40.0;
            let expect = t.signum() * (2.0 * t.abs()).sqrt();
            assert!(
                (m.k_of_t(t) - expect).abs() < 1e-9,
                "t = {t}: {} vs {expect}",
                m.k_of_t(t)
            );
        }
    }

    #[test]
    fn constant_factor_is_affine() {
        let m = map_of(|_| 2.0, 0.0, 3.0, &[]).with_time_origin(0.0, 0.0);
        assert!((m.t_of_k(1.7) - 3.4).abs() < 1e-13);
        assert!((m.k_of_t(3.4) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn round_trip_through_a_flat_point() {
        // f = k^2 has a second order zero: t(k) = k^3/3, cube root inverse
        let m = map_of(|k| k * k, -1.0, 1.0, &[0.0]).with_time_origin(0.0, 0.0);
        for i in 0..=20 {
            let k = -1.0 + (i as f64) / 10.0;
            let t = m.t_of_k(k);
            assert!((t - k * k * k / 3.0).abs() < 1e-13);
            assert!((m.k_of_t(t) - k).abs() < 1e-7, "k = {k}");
        }
    }

    #[test]
    fn negative_factor_is_rejected() {
        let out = TimeMap::new(Arc::new(|k: f64| Ok(k)), -1.0, 1.0, &[], 1e-10);
        assert!(matches!(out, Err(OddError::NotMonotone { .. })));
    }

    #[test]
    fn time_origin_shifts() {
        let m = map_of(|_| 1.0, 0.0, 2.0, &[]).with_time_origin(1.0, 10.0);
        assert!((m.t_of_k(0.0) - 9.0).abs() < 1e-13);
        assert!((m.k_of_t(11.0) - 2.0).abs() < 1e-12);
    }
}
