//! Cubic Hermite interpolation of vector-valued samples.
//!
//! Used to store numerically integrated curve segments: the integrator
//! hands over values and derivatives on its accepted mesh, and the spline
//! reproduces both to the integrator's own order between knots.

use crate::ode::OdeSolution;

#[derive(Clone, Debug)]
pub struct CubicHermite {
    ts: Vec<f64>,
    ys: Vec<Vec<f64>>,
    /// dy/dt at the knots
    ms: Vec<Vec<f64>>,
}

impl CubicHermite {
    /// Knots must be strictly increasing; values and derivatives are one
    /// vector per knot, all of the same dimension.
    pub fn new(ts: Vec<f64>, ys: Vec<Vec<f64>>, ms: Vec<Vec<f64>>) -> CubicHermite {
        assert!(ts.len() >= 2, "need at least two knots");
        assert_eq!(ts.len(), ys.len());
        assert_eq!(ts.len(), ms.len());
        let dim = ys[0].len();
        assert!(ys.iter().all(|y| y.len() == dim));
        assert!(ms.iter().all(|m| m.len() == dim));
        for w in ts.windows(2) {
            assert!(w[0] < w[1], "knots must be strictly increasing");
        }
        CubicHermite { ts, ys, ms }
    }

    /// Sample an integrator's dense output on `n` uniform knots.
    pub fn from_solution(sol: &OdeSolution, n: usize) -> CubicHermite {
        CubicHermite::from_solution_range(sol, sol.t_start(), sol.t_end(), n)
    }

    /// Sample on the integrator's own accepted-step mesh, each step split
    /// into `refine` pieces. Keeps knots dense exactly where the solution
    /// needed small steps, which uniform resampling throws away.
    pub fn from_solution_mesh(sol: &OdeSolution, refine: usize) -> CubicHermite {
        assert!(refine >= 1);
        let mesh = sol.mesh();
        let mut ts: Vec<f64> = Vec::with_capacity(mesh.len() * refine);
        if mesh.len() < 2 {
            return CubicHermite::from_solution(sol, 2);
        }
        for w in mesh.windows(2) {
            for i in 0..refine {
                ts.push(w[0] + (w[1] - w[0]) * (i as f64) / (refine as f64));
            }
        }
        ts.push(*mesh.last().unwrap());
        let forward = ts.last().unwrap() >= ts.first().unwrap();
        if !forward {
            ts.reverse();
        }
        let ys: Vec<Vec<f64>> = ts.iter().map(|&t| sol.eval(t)).collect();
        let ms: Vec<Vec<f64>> = ts.iter().map(|&t| sol.eval_derivative(t)).collect();
        CubicHermite::new(ts, ys, ms)
    }

    /// Mesh-following sampler restricted to [a, b] (in the solution's own
    /// direction of travel).
    pub fn from_solution_mesh_range(sol: &OdeSolution, a: f64, b: f64, refine: usize) -> CubicHermite {
        assert!(refine >= 1);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mut ts: Vec<f64> = vec![lo];
        for &t in sol.mesh().iter() {
            if t > lo && t < hi {
                ts.push(t);
            }
        }
        ts.push(hi);
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|x, y| (*x - *y).abs() < 1e-14 * (hi - lo).max(1e-300));
        if ts.len() < 2 {
            return CubicHermite::from_solution_range(sol, a, b, 2);
        }
        let mut knots: Vec<f64> = Vec::with_capacity(ts.len() * refine);
        for w in ts.windows(2) {
            for i in 0..refine {
                knots.push(w[0] + (w[1] - w[0]) * (i as f64) / (refine as f64));
            }
        }
        knots.push(*ts.last().unwrap());
        let ys: Vec<Vec<f64>> = knots.iter().map(|&t| sol.eval(t)).collect();
        let ms: Vec<Vec<f64>> = knots.iter().map(|&t| sol.eval_derivative(t)).collect();
        CubicHermite::new(knots, ys, ms)
    }

    /// Same, restricted to a subrange of the solution.
    pub fn from_solution_range(sol: &OdeSolution, a: f64, b: f64, n: usize) -> CubicHermite {
        assert!(n >= 2);
        let forward = b >= a;
        let mut ts = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        let mut ms = Vec::with_capacity(n);
        for i in 0..n {
            let t = a + (b - a) * (i as f64) / ((n - 1) as f64);
            ts.push(t);
            ys.push(sol.eval(t));
            ms.push(sol.eval_derivative(t));
        }
        if !forward {
            ts.reverse();
            ys.reverse();
            ms.reverse();
        }
        CubicHermite::new(ts, ys, ms)
    }

    pub fn dim(&self) -> usize {
        self.ys[0].len()
    }

    /// Keep only the first `n` components (same knots).
    pub fn project(&self, n: usize) -> CubicHermite {
        assert!(n >= 1 && n <= self.dim());
        CubicHermite {
            ts: self.ts.clone(),
            ys: self.ys.iter().map(|y| y[..n].to_vec()).collect(),
            ms: self.ms.iter().map(|m| m[..n].to_vec()).collect(),
        }
    }

    pub fn t_range(&self) -> (f64, f64) {
        (self.ts[0], *self.ts.last().unwrap())
    }

    pub fn knots(&self) -> &[f64] {
        &self.ts
    }

    fn segment(&self, t: f64) -> usize {
        let i = self.ts.partition_point(|&k| k <= t);
        i.clamp(1, self.ts.len() - 1) - 1
    }

    /// Evaluate at `t`; outside the knot range the end cubic extrapolates.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let s = self.segment(t);
        let (t0, t1) = (self.ts[s], self.ts[s + 1]);
        let dt = t1 - t0;
        let u = (t - t0) / dt;
        let h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
        let h10 = u * (1.0 - u) * (1.0 - u);
        let h01 = u * u * (3.0 - 2.0 * u);
        let h11 = u * u * (u - 1.0);
        for i in 0..out.len() {
            out[i] = h00 * self.ys[s][i]
                + h10 * dt * self.ms[s][i]
                + h01 * self.ys[s + 1][i]
                + h11 * dt * self.ms[s + 1][i];
        }
    }

    pub fn eval_derivative(&self, t: f64) -> Vec<f64> {
        let s = self.segment(t);
        let (t0, t1) = (self.ts[s], self.ts[s + 1]);
        let dt = t1 - t0;
        let u = (t - t0) / dt;
        let d00 = 6.0 * u * (u - 1.0);
        let d10 = (1.0 - u) * (1.0 - 3.0 * u);
        let d01 = -d00;
        let d11 = u * (3.0 * u - 2.0);
        let mut out = vec![0.0; self.dim()];
        for i in 0..out.len() {
            out[i] = (d00 * self.ys[s][i] + d01 * self.ys[s + 1][i]) / dt
                + d10 * self.ms[s][i]
                + d11 * self.ms[s + 1][i];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_cubics_exactly() {
        // p(t) = t^3 - t, p'(t) = 3t^2 - 1 on a coarse mesh
        let ts: Vec<f64> = vec![-2.0, -0.5, 0.7, 2.0];
        let ys: Vec<Vec<f64>> = ts.iter().map(|&t| vec![t * t * t - t]).collect();
        let ms: Vec<Vec<f64>> = ts.iter().map(|&t| vec![3.0 * t * t - 1.0]).collect();
        let sp = CubicHermite::new(ts, ys, ms);
        for &t in &[-1.9, -1.0, 0.0, 0.3, 1.4, 2.0] {
            assert!((sp.eval(t)[0] - (t * t * t - t)).abs() < 1e-12);
            assert!((sp.eval_derivative(t)[0] - (3.0 * t * t - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolates_knot_data() {
        let sp = CubicHermite::new(
            vec![0.0, 1.0, 2.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]],
            vec![vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
        );
        let y = sp.eval(1.0);
        assert_eq!(y, vec![0.0, 1.0]);
        let d = sp.eval_derivative(1.0);
        assert!((d[0] + 1.0).abs() < 1e-15 && d[1].abs() < 1e-15);
    }

    #[test]
    fn from_solution_tracks_the_integrator() {
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        };
        let sol =
            crate::ode::integrate(&rhs, 0.0, &[1.0, 0.0], 2.0, &Default::default()).unwrap();
        let sp = CubicHermite::from_solution(&sol, 200);
        for &t in &[0.1, 0.77, 1.3, 1.99] {
            assert!((sp.eval(t)[0] - t.cos()).abs() < 1e-7);
            assert!((sp.eval_derivative(t)[0] + t.sin()).abs() < 1e-5);
        }
    }
}
