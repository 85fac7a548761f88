//! Explicit Runge-Kutta integration (Dormand-Prince 5(4)) with dense
//! output and event location.
//!
//! The right-hand side returns a `Result` so vector fields with poles can
//! refuse a point. A failed stage evaluation is treated like an oversized
//! error estimate: the step is rejected and retried smaller. When the step
//! size collapses to the floor the driver stops and reports how far it
//! got; callers near a degenerate locus use that as a stall signal rather
//! than an error.

use crate::error::Result;

pub type Rhs<'a> = dyn Fn(f64, &[f64], &mut [f64]) -> Result<()> + 'a;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
// embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// dense output
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-12,
            h_init: 1e-3,
            h_min: 1e-13,
            h_max: 0.25,
            max_steps: 200_000,
        }
    }
}

/// Why the driver returned.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OdeOutcome {
    /// Reached the requested end time.
    Reached,
    /// An event crossed zero; the solution ends at the event time.
    Event,
    /// The step size hit the floor (stiffness or a pole ahead).
    StepSizeFloor,
    /// The step budget ran out.
    StepBudget,
}

/// One accepted step with the interpolation coefficients for it.
#[derive(Clone, Debug)]
struct DenseStep {
    t0: f64,
    h: f64,
    r: [Vec<f64>; 5],
}

impl DenseStep {
    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        for i in 0..out.len() {
            out[i] = self.r[0][i]
                + s * (self.r[1][i] + s1 * (self.r[2][i] + s * (self.r[3][i] + s1 * self.r[4][i])));
        }
    }

    fn eval_derivative_into(&self, t: f64, out: &mut [f64]) {
        let s = (t - self.t0) / self.h;
        for i in 0..out.len() {
            let d = self.r[1][i]
                + (1.0 - 2.0 * s) * self.r[2][i]
                + (2.0 * s - 3.0 * s * s) * self.r[3][i]
                + (2.0 * s - 6.0 * s * s + 4.0 * s * s * s) * self.r[4][i];
            out[i] = d / self.h;
        }
    }
}

#[derive(Clone, Debug)]
pub struct OdeSolution {
    dim: usize,
    t0: f64,
    t_end: f64,
    y_end: Vec<f64>,
    steps: Vec<DenseStep>,
    pub outcome: OdeOutcome,
    pub n_accepted: usize,
    pub n_rejected: usize,
}

impl OdeSolution {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_start(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn y_end(&self) -> &[f64] {
        &self.y_end
    }

    fn step_for(&self, t: f64) -> &DenseStep {
        debug_assert!(!self.steps.is_empty());
        // steps are contiguous and ordered by t0 (monotone in integration
        // direction); binary search for the containing one
        let forward = self.t_end >= self.t0;
        let idx = self.steps.partition_point(|s| {
            if forward {
                s.t0 + s.h <= t
            } else {
                s.t0 + s.h >= t
            }
        });
        &self.steps[idx.min(self.steps.len() - 1)]
    }

    /// Interpolated state; clamps to the covered time range.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        if self.steps.is_empty() {
            out.copy_from_slice(&self.y_end);
            return;
        }
        let t = clamp_time(t, self.t0, self.t_end);
        self.step_for(t).eval_into(t, out);
    }

    /// Time derivative of the interpolant (not a fresh RHS evaluation).
    pub fn eval_derivative(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        if self.steps.is_empty() {
            return out;
        }
        let t = clamp_time(t, self.t0, self.t_end);
        self.step_for(t).eval_derivative_into(t, &mut out);
        out
    }

    /// Accepted mesh times, including both ends.
    pub fn mesh(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self.steps.iter().map(|s| s.t0).collect();
        ts.push(self.t_end);
        ts
    }
}

fn clamp_time(t: f64, a: f64, b: f64) -> f64 {
    if a <= b {
        t.clamp(a, b)
    } else {
        t.clamp(b, a)
    }
}

#[derive(Clone, Copy)]
pub struct EventSpec<'a> {
    /// Scalar whose zero crossing stops the integration.
    pub function: &'a (dyn Fn(f64, &[f64]) -> f64 + 'a),
    /// Required sign change: -1 falling, +1 rising, 0 either.
    pub direction: i8,
}

#[derive(Clone, Debug)]
pub struct EventHit {
    pub t: f64,
    pub y: Vec<f64>,
}

pub fn integrate(
    rhs: &Rhs,
    t0: f64,
    y0: &[f64],
    t_target: f64,
    opts: &OdeOptions,
) -> Result<OdeSolution> {
    integrate_with_event(rhs, t0, y0, t_target, opts, None).map(|(sol, _)| sol)
}

/// Core driver. With an event the solution is truncated at the located
/// crossing and the hit is returned alongside.
pub fn integrate_with_event(
    rhs: &Rhs,
    t0: f64,
    y0: &[f64],
    t_target: f64,
    opts: &OdeOptions,
    event: Option<&EventSpec>,
) -> Result<(OdeSolution, Option<EventHit>)> {
    let n = y0.len();
    assert!(n > 0, "empty state");
    for v in y0 {
        assert!(v.is_finite(), "initial state must be finite");
    }
    let dir = if t_target >= t0 { 1.0 } else { -1.0 };
    let span = (t_target - t0).abs();

    let mut sol = OdeSolution {
        dim: n,
        t0,
        t_end: t0,
        y_end: y0.to_vec(),
        steps: Vec::new(),
        outcome: OdeOutcome::Reached,
        n_accepted: 0,
        n_rejected: 0,
    };
    if span == 0.0 {
        return Ok((sol, None));
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = opts.h_init.min(opts.h_max).min(span) * dir;
    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];

    // first stage; a pole right at the start is a hard error because no
    // smaller step can help
    rhs(t, &y, &mut k[0])?;

    let mut g_prev = event.map(|e| (e.function)(t, &y));

    loop {
        if sol.n_accepted + sol.n_rejected >= opts.max_steps {
            sol.outcome = OdeOutcome::StepBudget;
            return Ok((sol, None));
        }
        // trim the final step exactly onto the target
        if (t + h - t_target) * dir > 0.0 {
            h = t_target - t;
        }

        match try_step(rhs, t, &y, h, &k[0].clone(), &mut k, &mut ytmp, &mut ynew, opts) {
            StepResult::Accept { err_ratio } => {
                let mut r: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
                for i in 0..n {
                    let dy = ynew[i] - y[i];
                    let bspl = h * k[0][i] - dy;
                    r[0][i] = y[i];
                    r[1][i] = dy;
                    r[2][i] = bspl;
                    r[3][i] = dy - h * k[6][i] - bspl;
                    r[4][i] = h
                        * (D1 * k[0][i]
                            + D3 * k[2][i]
                            + D4 * k[3][i]
                            + D5 * k[4][i]
                            + D6 * k[5][i]
                            + D7 * k[6][i]);
                }
                let step = DenseStep { t0: t, h, r };
                let t_new = t + h;
                sol.n_accepted += 1;

                // event check over the accepted step
                if let (Some(ev), Some(g0)) = (event, g_prev) {
                    let g1 = (ev.function)(t_new, &ynew);
                    let crossed = match ev.direction {
                        d if d > 0 => g0 < 0.0 && g1 >= 0.0,
                        d if d < 0 => g0 > 0.0 && g1 <= 0.0,
                        _ => (g0 < 0.0 && g1 >= 0.0) || (g0 > 0.0 && g1 <= 0.0),
                    };
                    if crossed {
                        let t_hit = locate_event(ev, &step, t, t_new, g0, g1, n);
                        let mut y_hit = vec![0.0; n];
                        step.eval_into(t_hit, &mut y_hit);
                        sol.steps.push(step);
                        sol.t_end = t_hit;
                        sol.y_end = y_hit.clone();
                        sol.outcome = OdeOutcome::Event;
                        return Ok((sol, Some(EventHit { t: t_hit, y: y_hit })));
                    }
                    g_prev = Some(g1);
                }

                sol.steps.push(step);
                t = t_new;
                y.copy_from_slice(&ynew);
                let (head, tail) = k.split_at_mut(6);
                head[0].copy_from_slice(&tail[0]); // FSAL
                sol.t_end = t;
                sol.y_end.copy_from_slice(&y);

                if (t - t_target) * dir >= 0.0 {
                    sol.outcome = OdeOutcome::Reached;
                    return Ok((sol, None));
                }
                let scale = (0.9 * err_ratio.powf(-0.2)).clamp(0.2, 5.0);
                h = (h * scale).clamp(-opts.h_max, opts.h_max);
                if h.abs() < opts.h_min {
                    h = opts.h_min * dir;
                }
            }
            StepResult::Reject { err_ratio } => {
                sol.n_rejected += 1;
                let scale = (0.9 * err_ratio.powf(-0.2)).clamp(0.1, 0.7);
                h *= scale;
                if h.abs() < opts.h_min {
                    sol.outcome = OdeOutcome::StepSizeFloor;
                    return Ok((sol, None));
                }
            }
            StepResult::StageFailed => {
                sol.n_rejected += 1;
                h *= 0.5;
                if h.abs() < opts.h_min {
                    sol.outcome = OdeOutcome::StepSizeFloor;
                    return Ok((sol, None));
                }
            }
        }
    }
}

enum StepResult {
    Accept { err_ratio: f64 },
    Reject { err_ratio: f64 },
    StageFailed,
}

#[allow(clippy::too_many_arguments)]
fn try_step(
    rhs: &Rhs,
    t: f64,
    y: &[f64],
    h: f64,
    k1: &[f64],
    k: &mut [Vec<f64>; 7],
    ytmp: &mut [f64],
    ynew: &mut [f64],
    opts: &OdeOptions,
) -> StepResult {
    let n = y.len();
    k[0].copy_from_slice(k1);

    macro_rules! stage {
        ($c:expr, $idx:expr, $($coef:expr => $kj:expr),+) => {{
            for i in 0..n {
                let mut acc = 0.0;
                $(acc += $coef * k[$kj][i];)+
                ytmp[i] = y[i] + h * acc;
            }
            if rhs(t + $c * h, ytmp, {
                // split borrow: k[$idx] is disjoint from the k[$kj] reads above
                let (_, rest) = k.split_at_mut($idx);
                &mut rest[0]
            })
            .is_err()
            {
                return StepResult::StageFailed;
            }
        }};
    }

    stage!(C2, 1, A21 => 0);
    stage!(C3, 2, A31 => 0, A32 => 1);
    stage!(C4, 3, A41 => 0, A42 => 1, A43 => 2);
    stage!(C5, 4, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
    stage!(1.0, 5, A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);

    for i in 0..n {
        ynew[i] = y[i]
            + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
    }
    {
        let (_, rest) = k.split_at_mut(6);
        if rhs(t + h, ynew, &mut rest[0]).is_err() {
            return StepResult::StageFailed;
        }
    }

    let mut err_sq = 0.0;
    for i in 0..n {
        let e = h
            * (E1 * k[0][i]
                + E3 * k[2][i]
                + E4 * k[3][i]
                + E5 * k[4][i]
                + E6 * k[5][i]
                + E7 * k[6][i]);
        let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
        err_sq += (e / sc) * (e / sc);
    }
    let err_ratio = (err_sq / n as f64).sqrt().max(1e-30);
    if !err_ratio.is_finite() || ynew.iter().any(|v| !v.is_finite()) {
        return StepResult::StageFailed;
    }
    if err_ratio <= 1.0 {
        StepResult::Accept { err_ratio }
    } else {
        StepResult::Reject { err_ratio }
    }
}

/// Bisection on the dense interpolant; the crossing bracket comes from the
/// accepted step ends.
fn locate_event(
    ev: &EventSpec,
    step: &DenseStep,
    mut lo: f64,
    mut hi: f64,
    g_lo: f64,
    _g_hi: f64,
    n: usize,
) -> f64 {
    let mut y = vec![0.0; n];
    let sign_lo = g_lo > 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        step.eval_into(mid, &mut y);
        let g = (ev.function)(mid, &y);
        if (g > 0.0) == sign_lo && g != 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::OddError;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = -y[0];
            Ok(())
        };
        let sol = integrate(&rhs, 0.0, &[1.0], 5.0, &OdeOptions::default()).unwrap();
        assert_eq!(sol.outcome, OdeOutcome::Reached);
        assert!((sol.y_end()[0] - (-5.0f64).exp()).abs() < 1e-9);
        // dense output in the middle
        let mid = sol.eval(2.5)[0];
        assert!((mid - (-2.5f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn harmonic_oscillator_dense_derivative() {
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        };
        let sol = integrate(&rhs, 0.0, &[1.0, 0.0], 3.0, &OdeOptions::default()).unwrap();
        let t = 1.7;
        let y = sol.eval(t);
        let d = sol.eval_derivative(t);
        assert!((y[0] - t.cos()).abs() < 1e-8);
        assert!((d[0] + t.sin()).abs() < 1e-6);
        assert!((d[1] + t.cos()).abs() < 1e-6);
    }

    #[test]
    fn backward_integration() {
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[0];
            Ok(())
        };
        let sol = integrate(&rhs, 0.0, &[1.0], -2.0, &OdeOptions::default()).unwrap();
        assert!((sol.y_end()[0] - (-2.0f64).exp()).abs() < 1e-10);
        let y = sol.eval(-1.0);
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn event_is_located_precisely() {
        // y' = 1, event at y = 2.5
        let rhs = |_t: f64, _y: &[f64], dy: &mut [f64]| {
            dy[0] = 1.0;
            Ok(())
        };
        let ev = EventSpec {
            function: &|_t, y: &[f64]| y[0] - 2.5,
            direction: 1,
        };
        let (sol, hit) =
            integrate_with_event(&rhs, 0.0, &[0.0], 10.0, &OdeOptions::default(), Some(&ev))
                .unwrap();
        let hit = hit.unwrap();
        assert_eq!(sol.outcome, OdeOutcome::Event);
        assert!((hit.t - 2.5).abs() < 1e-10);
        assert!((sol.t_end() - 2.5).abs() < 1e-10);
    }

    #[test]
    fn pole_ahead_collapses_step_size() {
        // y' = 1/(1 - t) declared as a pole at t = 1
        let rhs = |t: f64, _y: &[f64], dy: &mut [f64]| {
            let den = 1.0 - t;
            if den.abs() < 1e-9 {
                return Err(OddError::InvalidArgument {
                    what: "pole".into(),
                });
            }
            dy[0] = 1.0 / den;
            Ok(())
        };
        let sol = integrate(&rhs, 0.0, &[0.0], 2.0, &OdeOptions::default()).unwrap();
        assert_eq!(sol.outcome, OdeOutcome::StepSizeFloor);
        assert!(sol.t_end() < 1.0 && sol.t_end() > 0.97);
    }

    #[test]
    fn tolerances_steer_accuracy() {
        let rhs = |t: f64, _y: &[f64], dy: &mut [f64]| {
            dy[0] = (5.0 * t).sin();
            Ok(())
        };
        let loose = OdeOptions {
            rtol: 1e-4,
            atol: 1e-6,
            ..Default::default()
        };
        let tight = OdeOptions {
            rtol: 1e-12,
            atol: 1e-14,
            ..Default::default()
        };
        let exact = (1.0 - (10.0f64).cos()) / 5.0;
        let y_loose = integrate(&rhs, 0.0, &[0.0], 2.0, &loose).unwrap().y_end()[0];
        let y_tight = integrate(&rhs, 0.0, &[0.0], 2.0, &tight).unwrap().y_end()[0];
        assert!((y_tight - exact).abs() < 1e-11);
        assert!((y_tight - exact).abs() < (y_loose - exact).abs());
    }
}
