//! Geodesics of an ODD metric, integrated through the degeneracy locus.
//!
//! Off the locus the coordinate system x'' = -Gamma(x', x') runs as
//! written; it cannot cross the locus because the coordinate velocity
//! blows up there. Inside the switching band the velocity is rewritten in
//! the orthonormal frame, v = sum a^i E_i. The frame components satisfy
//! a'^k = -a^i a^j w^k_{ji} with w the frame connection, which is
//! antisymmetric in (i, k), so sum (a^k)^2 is a first integral and the
//! a stay bounded across the locus while v and Gamma diverge. The mixed
//! (x, a) system is rescaled by the clearing factor of the frame exactly
//! like a flow and mapped back to geodesic time afterwards.

use crate::connection::{christoffel, Connection};
use crate::curve::{PiecewiseCurve, Segment};
use crate::error::{OddError, Result};
use crate::expr::Expr;
use crate::flow::{build_desing, reduced_clearing, scan_crossings, CrossingEvent, FlowOptions};
use crate::frame::{ensure_budget, orthonormal_frame, Frame};
use crate::metric::OddMetric;
use crate::ode::{self, EventSpec, OdeOptions, OdeOutcome, OdeSolution};
use crate::spline::CubicHermite;

/// Symbolic data for the two geodesic systems of one metric.
///
/// The frame connection is kept as lists of product terms rather than
/// summed expressions. Each term has the pole order it shows; summing
/// first would hide cancellations between terms behind a denominator the
/// clearing factor would then overshoot, and the rescaled system would
/// lose its velocity exactly on the locus.
pub struct GeodesicSystem {
    metric: OddMetric,
    conn: Connection,
    frame: Frame,
    coframe: Vec<Vec<Expr>>,
    /// Summed w^k_{ji} = <nabla_{E_j} E_i, E_k>, indexed [k][j][i].
    omega: Vec<Vec<Vec<Expr>>>,
    /// Clearing factor for the frame and its connection.
    h: Expr,
    /// h E_i, indexed [i][coordinate].
    cleared_frame: Vec<Vec<Expr>>,
    /// Terms summing to h w^k_{ji}, each rescaled before simplification
    /// so that radical cancellations happen per term.
    cleared_omega: Vec<Vec<Vec<Vec<Expr>>>>,
}

impl GeodesicSystem {
    pub fn new(m: &OddMetric) -> Result<GeodesicSystem> {
        let n = m.dim();
        let conn = christoffel(m)?;
        let frame = orthonormal_frame(m)?;
        let coframe = frame.coframe()?;

        // d(theta^m)_l / d(x^u), simplified once.
        let mut dtheta = vec![vec![vec![Expr::zero(); n]; n]; n];
        for (mi, row) in coframe.iter().enumerate() {
            for l in 0..n {
                if row[l].is_const(0.0) {
                    continue;
                }
                for u in 0..n {
                    let d = row[l].diff(u).simplify();
                    ensure_budget(&d)?;
                    dtheta[mi][u][l] = d;
                }
            }
        }

        // Structure coefficients as term lists: [E_a, E_b] = c_{ab}^m E_m
        // with
        //   c_{ab}^m = sum_{u,l} d_u theta^m_l (E_b^u E_a^l - E_a^u E_b^l).
        // This is theta^m applied to the bracket, rewritten through
        // d(theta^m(E_b)) = 0; the rewrite matters because the raw bracket
        // contracted against the coframe cancels its worst poles between
        // terms, while here every term already has the true order.
        let term = |f1: &Expr, f2: &Expr, f3: &Expr, s: f64| -> Option<Expr> {
            if f1.is_const(0.0) || f2.is_const(0.0) || f3.is_const(0.0) {
                return None;
            }
            let p = Expr::mul(f1.clone(), Expr::mul(f2.clone(), f3.clone()));
            Some(if s == 1.0 { p } else { Expr::mul(Expr::num(s), p) })
        };
        let mut c_terms: Vec<Vec<Vec<Vec<Expr>>>> =
            vec![vec![vec![Vec::new(); n]; n]; n];
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                for mi in 0..n {
                    let mut ts = Vec::new();
                    for u in 0..n {
                        for l in 0..n {
                            let d = &dtheta[mi][u][l];
                            if let Some(t) =
                                term(d, &frame.vector(b)[u], &frame.vector(a)[l], 1.0)
                            {
                                ts.push(t);
                            }
                            if let Some(t) =
                                term(d, &frame.vector(a)[u], &frame.vector(b)[l], -1.0)
                            {
                                ts.push(t);
                            }
                        }
                    }
                    c_terms[a][b][mi] = ts;
                }
            }
        }

        // w^k_{ji} = (c_{ji}^k - c_{ik}^j + c_{kj}^i) / 2, kept as terms.
        let mut omega_terms: Vec<Vec<Vec<Vec<Expr>>>> =
            vec![vec![vec![Vec::new(); n]; n]; n];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let mut ts: Vec<Expr> = Vec::new();
                    let half = |e: &Expr, s: f64| Expr::mul(Expr::num(0.5 * s), e.clone());
                    ts.extend(c_terms[j][i][k].iter().map(|e| half(e, 1.0)));
                    ts.extend(c_terms[i][k][j].iter().map(|e| half(e, -1.0)));
                    ts.extend(c_terms[k][j][i].iter().map(|e| half(e, 1.0)));
                    omega_terms[k][j][i] = ts;
                }
            }
        }

        // Summed form for inspection and tests.
        let mut omega = vec![vec![vec![Expr::zero(); n]; n]; n];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let mut acc = Expr::zero();
                    for t in &omega_terms[k][j][i] {
                        acc = Expr::add(acc, t.clone());
                    }
                    let acc = acc.simplify();
                    ensure_budget(&acc)?;
                    omega[k][j][i] = acc;
                }
            }
        }

        // Clearing factor: collect the symbolic denominator powers of the
        // frame and every connection term, then walk the powers back down
        // while everything stays bounded near the locus. The symbolic count
        // overshoots wherever a derivative of |u| left a bounded u/|u|
        // behind, and an overshot factor freezes the rescaled system on the
        // locus instead of carrying it across.
        let mut all: Vec<Expr> = Vec::new();
        for i in 0..n {
            for e in frame.vector(i) {
                if !e.is_const(0.0) {
                    all.push(e.clone());
                }
            }
        }
        for row in omega_terms.iter().flatten().flatten() {
            for t in row.iter() {
                all.push(t.clone());
            }
        }
        let h = reduced_clearing(m, &all).unwrap_or_else(Expr::one);

        let cleared_frame: Vec<Vec<Expr>> = (0..n)
            .map(|i| {
                frame.vector(i)
                    .iter()
                    .map(|e| Expr::mul(h.clone(), e.clone()).simplify())
                    .collect()
            })
            .collect();
        for row in &cleared_frame {
            for e in row {
                ensure_budget(e)?;
            }
        }
        let mut cleared_omega: Vec<Vec<Vec<Vec<Expr>>>> =
            vec![vec![vec![Vec::new(); n]; n]; n];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let ts: Vec<Expr> = omega_terms[k][j][i]
                        .iter()
                        .map(|t| Expr::mul(h.clone(), t.clone()).simplify())
                        .collect();
                    for t in &ts {
                        ensure_budget(t)?;
                    }
                    cleared_omega[k][j][i] = ts;
                }
            }
        }

        Ok(GeodesicSystem {
            metric: m.clone(),
            conn,
            frame,
            coframe,
            omega,
            h,
            cleared_frame,
            cleared_omega,
        })
    }

    pub fn metric(&self) -> &OddMetric {
        &self.metric
    }

    pub fn connection(&self) -> &Connection {
        &self.conn
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn clearing(&self) -> &Expr {
        &self.h
    }

    /// w^k_{ji}.
    pub fn frame_connection(&self, k: usize, j: usize, i: usize) -> &Expr {
        &self.omega[k][j][i]
    }

    /// Frame components of a coordinate velocity: a^i = theta^i_j v^j.
    pub fn frame_components(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let n = self.metric.dim();
        let mut a = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                let th = &self.coframe[i][j];
                if th.is_const(0.0) {
                    continue;
                }
                match th.eval(x).as_finite() {
                    Some(g) if g.is_finite() => acc += g * v[j],
                    _ => {
                        return Err(OddError::InvalidArgument {
                            what: format!("coframe entry ({i},{j}) singular at {x:?}"),
                        })
                    }
                }
            }
            a[i] = acc;
        }
        Ok(a)
    }

    /// Coordinate velocity of frame components: v = a^i E_i(x).
    pub fn coordinate_velocity(&self, x: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let n = self.metric.dim();
        let mut v = vec![0.0; n];
        for i in 0..n {
            if a[i] == 0.0 {
                continue;
            }
            for l in 0..n {
                let e = &self.frame.vector(i)[l];
                if e.is_const(0.0) {
                    continue;
                }
                match e.eval(x).as_finite() {
                    Some(g) if g.is_finite() => v[l] += a[i] * g,
                    _ => {
                        return Err(OddError::InvalidArgument {
                            what: format!("frame vector {i} singular at {x:?}"),
                        })
                    }
                }
            }
        }
        Ok(v)
    }

    /// Right side of the rescaled band system on the state (x | a).
    fn cleared_rhs(&self, z: &[f64], sign: f64, dz: &mut [f64]) -> Result<()> {
        let n = self.metric.dim();
        let (x, a) = z.split_at(n);
        for d in dz.iter_mut() {
            *d = 0.0;
        }
        for i in 0..n {
            if a[i] == 0.0 {
                continue;
            }
            for l in 0..n {
                let e = &self.cleared_frame[i][l];
                if e.is_const(0.0) {
                    continue;
                }
                match e.eval(x).as_finite() {
                    Some(g) if g.is_finite() => dz[l] += sign * a[i] * g,
                    _ => {
                        return Err(OddError::InvalidArgument {
                            what: format!("rescaled frame failed at {x:?}"),
                        })
                    }
                }
            }
        }
        for k in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                for i in 0..n {
                    if a[i] == 0.0 || a[j] == 0.0 {
                        continue;
                    }
                    let mut w = 0.0;
                    for t in &self.cleared_omega[k][j][i] {
                        if t.is_const(0.0) {
                            continue;
                        }
                        match t.eval(x).as_finite() {
                            Some(g) if g.is_finite() => w += g,
                            _ => {
                                return Err(OddError::InvalidArgument {
                                    what: format!("rescaled frame connection failed at {x:?}"),
                                })
                            }
                        }
                    }
                    acc += a[i] * a[j] * w;
                }
            }
            dz[n + k] = -sign * acc;
        }
        Ok(())
    }
}

/// What the geodesic integrator did.
#[derive(Clone, Debug)]
pub struct GeodesicTrace {
    pub crossings: Vec<CrossingEvent>,
    pub raw_segments: usize,
    pub cleared_segments: usize,
    /// Largest observed defect of the geodesic equation on the plain
    /// segments, sampled at the midpoints of the accepted steps and
    /// measured relative to the curvature term (floored at one). The
    /// curvature term grows like a power of the locus distance toward the
    /// band edge, so an absolute defect would mostly restate that growth.
    pub max_residual: f64,
    /// Largest relative change of sum (a^k)^2 across any band passage.
    pub energy_drift: f64,
    /// g(v, v) at the start; conserved along the geodesic.
    pub initial_energy: f64,
    pub ended_at_fold: bool,
    pub reached_time: f64,
}

fn position_hermite(sol: &OdeSolution, n: usize, refine: usize) -> CubicHermite {
    let mesh = sol.mesh();
    let mut ts: Vec<f64> = Vec::new();
    if mesh.len() < 2 {
        ts.push(sol.t_start());
        ts.push(sol.t_end());
    } else {
        for w in mesh.windows(2) {
            for i in 0..refine {
                ts.push(w[0] + (w[1] - w[0]) * (i as f64) / (refine as f64));
            }
        }
        ts.push(*mesh.last().unwrap());
    }
    if ts.last() < ts.first() {
        ts.reverse();
    }
    ts.dedup_by(|a, b| a == b);
    // The velocity block is the exact derivative of the position block.
    let ys: Vec<Vec<f64>> = ts.iter().map(|&t| sol.eval(t)[..n].to_vec()).collect();
    let ms: Vec<Vec<f64>> = ts.iter().map(|&t| sol.eval(t)[n..2 * n].to_vec()).collect();
    CubicHermite::new(ts, ys, ms)
}

/// Integrate the geodesic with initial coordinate velocity `v0` over
/// t in [0, t_end]. The start must lie off the locus.
pub fn geodesic(
    sys: &GeodesicSystem,
    x0: &[f64],
    v0: &[f64],
    t_end: f64,
    opts: &FlowOptions,
) -> Result<(PiecewiseCurve, GeodesicTrace)> {
    let m = sys.metric();
    let n = m.dim();
    assert_eq!(x0.len(), n, "start point arity");
    assert_eq!(v0.len(), n, "start velocity arity");
    if !(t_end > 0.0) {
        return Err(OddError::InvalidArgument {
            what: format!("geodesic horizon must be positive, got {t_end}"),
        });
    }
    if m.locus_distance(x0) == 0.0 {
        return Err(OddError::InvalidArgument {
            what: format!("geodesic start {x0:?} lies on the locus; shooting needs an off-locus point"),
        });
    }

    let delta = opts.switch_distance;
    let raw_opts = OdeOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        ..OdeOptions::default()
    };

    let mut trace = GeodesicTrace {
        crossings: Vec::new(),
        raw_segments: 0,
        cleared_segments: 0,
        max_residual: 0.0,
        energy_drift: 0.0,
        initial_energy: m.inner_at(x0, v0, v0)?,
        ended_at_fold: false,
        reached_time: 0.0,
    };
    let mut segments: Vec<Segment> = Vec::new();
    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();

    while t < t_end * (1.0 - 1e-14) {
        if m.locus_distance(&x) > delta {
            let rhs = |_t: f64, z: &[f64], dz: &mut [f64]| -> Result<()> {
                let (xs, vs) = z.split_at(n);
                let q = sys.conn.eval_quadratic(xs, vs)?;
                dz[..n].copy_from_slice(vs);
                for k in 0..n {
                    dz[n + k] = -q[k];
                }
                Ok(())
            };
            let ev_fn = |_t: f64, z: &[f64]| m.locus_distance(&z[..n]) - delta;
            let ev = EventSpec {
                function: &ev_fn,
                direction: -1,
            };
            let z0: Vec<f64> = x.iter().chain(v.iter()).copied().collect();
            let (sol, hit) = ode::integrate_with_event(&rhs, t, &z0, t_end, &raw_opts, Some(&ev))?;
            match sol.outcome {
                OdeOutcome::StepSizeFloor => {
                    return Err(OddError::StallAtSingularity {
                        point: sol.y_end()[..n].to_vec(),
                        floor: raw_opts.h_min,
                    })
                }
                OdeOutcome::StepBudget => {
                    return Err(OddError::InvalidArgument {
                        what: format!("geodesic exceeded the step budget at t = {}", sol.t_end()),
                    })
                }
                _ => {}
            }
            if sol.t_end() <= t {
                break;
            }
            // Defect of the dense output under the equation itself.
            let mesh = sol.mesh();
            for w in mesh.windows(2) {
                let tm = 0.5 * (w[0] + w[1]);
                let z = sol.eval(tm);
                let dz = sol.eval_derivative(tm);
                if let Ok(q) = sys.conn.eval_quadratic(&z[..n], &z[n..]) {
                    let scale = q.iter().fold(1.0f64, |s, v| s.max(v.abs()));
                    let mut r = 0.0f64;
                    for k in 0..n {
                        r = r.max((dz[n + k] + q[k]).abs());
                    }
                    trace.max_residual = trace.max_residual.max(r / scale);
                }
            }
            segments.push(Segment::Sampled(position_hermite(&sol, n, 4)));
            trace.raw_segments += 1;
            t = sol.t_end();
            x = sol.y_end()[..n].to_vec();
            v = sol.y_end()[n..].to_vec();
            if hit.is_none() {
                break;
            }
            continue;
        }

        // Band passage in frame components.
        let a = sys.frame_components(&x, &v)?;
        let energy_in: f64 = a.iter().map(|c| c * c).sum();
        let mut href = sys.h.eval(&x).as_finite().unwrap_or(0.0);
        if href.abs() < 1e-12 {
            let vdir = sys.coordinate_velocity(&x, &a)?;
            let s = norm(&vdir).max(1e-300);
            let probe: Vec<f64> = x
                .iter()
                .zip(&vdir)
                .map(|(xi, di)| xi + 1e-6 * di / s)
                .collect();
            href = sys.h.eval(&probe).as_finite().unwrap_or(0.0);
        }
        let sign = if href < 0.0 { -1.0 } else { 1.0 };

        let cl_rhs =
            |_k: f64, z: &[f64], dz: &mut [f64]| -> Result<()> { sys.cleared_rhs(z, sign, dz) };
        let mut dz0 = vec![0.0; 2 * n];
        cl_rhs(0.0, &z_of(&x, &a), &mut dz0)?;
        let speed0 = norm(&dz0[..n]);
        if speed0 < 1e-12 {
            return if energy_in < 1e-16 {
                // Zero velocity: the constant curve, not a singularity.
                Err(OddError::InvalidArgument {
                    what: "zero initial velocity in the band".into(),
                })
            } else {
                Err(OddError::TangentPoleContradiction { point: x.clone() })
            };
        }

        let exit_fn = |_k: f64, z: &[f64]| m.locus_distance(&z[..n]) - 1.5 * delta;
        let ev = EventSpec {
            function: &exit_fn,
            direction: 1,
        };
        let cl_opts = OdeOptions {
            rtol: opts.rtol,
            atol: opts.atol,
            h_init: (1e-3 * delta / speed0).clamp(1e-10, 1e-2),
            h_max: f64::INFINITY,
            ..OdeOptions::default()
        };
        let (sol, hit) =
            ode::integrate_with_event(&cl_rhs, 0.0, &z_of(&x, &a), 1e9, &cl_opts, Some(&ev))?;
        match sol.outcome {
            OdeOutcome::StepSizeFloor => {
                return Err(OddError::StallAtSingularity {
                    point: sol.y_end()[..n].to_vec(),
                    floor: cl_opts.h_min,
                })
            }
            OdeOutcome::Reached | OdeOutcome::StepBudget => {
                return Err(OddError::StallAtSingularity {
                    point: sol.y_end()[..n].to_vec(),
                    floor: speed0,
                });
            }
            OdeOutcome::Event => debug_assert!(hit.is_some()),
        }
        let k_end = sol.t_end();

        let full_path = CubicHermite::from_solution_mesh(&sol, 4);
        let mut hits = scan_crossings(&full_path, m);
        if trace.crossings.len() + hits.len() > opts.max_crossings {
            return Err(OddError::InvalidArgument {
                what: format!(
                    "geodesic crossed the locus more than {} times",
                    opts.max_crossings
                ),
            });
        }
        let (seg_full, seg_map, folded) = build_desing(
            &sol,
            &full_path,
            &hits,
            &sys.h,
            sign,
            k_end,
            t,
            t_end,
            opts.quad_tol,
        )?;
        let (_, seg_k_end) = seg_full.t_range();
        hits.retain(|(k, _, _)| *k <= seg_k_end + 1e-12 * k_end);
        for (kc, stratum, point) in &hits {
            trace.crossings.push(CrossingEvent {
                t: seg_map.t_of_k(*kc),
                point: point[..n].to_vec(),
                stratum: stratum.clone(),
            });
        }
        t = seg_map.t_range().1;
        let z_end = seg_full.eval(seg_k_end);
        x = z_end[..n].to_vec();
        let a_end = &z_end[n..];
        let energy_out: f64 = a_end.iter().map(|c| c * c).sum();
        trace.energy_drift = trace
            .energy_drift
            .max((energy_out - energy_in).abs() / energy_in.max(1e-300));
        v = sys.coordinate_velocity(&x, a_end)?;
        segments.push(Segment::Desing {
            path: seg_full.project(n),
            map: seg_map,
        });
        trace.cleared_segments += 1;
        if folded {
            trace.ended_at_fold = true;
            break;
        }
    }

    trace.reached_time = t;
    let marks: Vec<f64> = trace.crossings.iter().map(|c| c.t).collect();
    let curve = PiecewiseCurve::new(segments)?.with_marks(marks);
    Ok((curve, trace))
}

fn z_of(x: &[f64], a: &[f64]) -> Vec<f64> {
    x.iter().chain(a.iter()).copied().collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::metric::Stratum;

    fn euclid(n: usize) -> OddMetric {
        let coords: Vec<String> = (0..n).map(crate::expr::var_name).collect();
        OddMetric::diagonal(coords, vec![Expr::one(); n], vec![], vec![(-2.0, 2.0); n]).unwrap()
    }

    fn line_x2() -> OddMetric {
        OddMetric::new(
            vec!["x".into()],
            vec![parse("x^2", &["x"]).unwrap()],
            vec![Stratum::new(vec![0])],
            vec![(-2.0, 2.0)],
        )
        .unwrap()
    }

    fn r2_cross() -> OddMetric {
        let names = ["x", "y"];
        let e = |s: &str| parse(s, &names).unwrap();
        OddMetric::new(
            vec!["x".into(), "y".into()],
            vec![e("x^2 + y^2"), e("y^2 - x^2"), e("x^2 + y^2")],
            vec![Stratum::new(vec![0]), Stratum::new(vec![1])],
            vec![(-5.0, 5.0), (-5.0, 5.0)],
        )
        .unwrap()
    }

    #[test]
    fn euclidean_geodesics_are_straight_lines() {
        let sys = GeodesicSystem::new(&euclid(3)).unwrap();
        let x0 = [0.1, 0.2, 0.3];
        let v0 = [0.4, -0.2, 0.5];
        let (curve, trace) =
            geodesic(&sys, &x0, &v0, 2.0, &FlowOptions::default()).unwrap();
        for &t in &[0.0, 0.3, 1.1, 2.0] {
            let p = curve.position(t);
            for i in 0..3 {
                assert!((p[i] - (x0[i] + t * v0[i])).abs() < 1e-9, "t={t} i={i}");
            }
        }
        assert!(trace.max_residual < 1e-12, "{}", trace.max_residual);
        assert!(trace.crossings.is_empty());
        assert_eq!(trace.cleared_segments, 0);
    }

    #[test]
    fn line_geodesic_crosses_with_conserved_energy() {
        let m = line_x2();
        let sys = GeodesicSystem::new(&m).unwrap();
        // x2 dx2 with g(v,v) = 1: x(t) = sqrt(1 - 2t), then the odd
        // continuation -sqrt(2(t - 1/2)) past the locus.
        let (curve, trace) =
            geodesic(&sys, &[1.0], &[-1.0], 1.125, &FlowOptions::default()).unwrap();
        assert_eq!(trace.crossings.len(), 1);
        assert!((trace.crossings[0].t - 0.5).abs() < 1e-8, "{:?}", trace.crossings);
        assert!(!trace.ended_at_fold);
        assert!(trace.energy_drift < 1e-9, "{}", trace.energy_drift);
        assert!(trace.max_residual < 1e-6, "{}", trace.max_residual);

        let at = |t: f64| curve.position(t)[0];
        for &t in &[0.1, 0.3, 0.45] {
            let want = (1.0f64 - 2.0 * t).sqrt();
            assert!((at(t) - want).abs() < 1e-7, "x({t}) = {} want {want}", at(t));
        }
        for &t in &[0.55, 0.8, 1.1] {
            let want = -(2.0 * (t - 0.5f64)).sqrt();
            assert!((at(t) - want).abs() < 1e-6, "x({t}) = {} want {want}", at(t));
        }
        for &t in &[0.2, 0.4, 0.7, 1.0] {
            let s = curve.speed(&m, t);
            assert!((s - 1.0).abs() < 1e-7, "speed({t}) = {s}");
        }
        let report = curve.check_odd_regular(&m).unwrap();
        assert!(report.regular, "{report:?}");
    }

    #[test]
    fn cross_geodesic_conserves_energy_through_the_axis() {
        let m = r2_cross();
        let sys = GeodesicSystem::new(&m).unwrap();
        let x0 = [0.6, 1.2];
        let v0 = [0.1, -0.9];
        let e0 = m.inner_at(&x0, &v0, &v0).unwrap();
        let (curve, trace) =
            geodesic(&sys, &x0, &v0, 2.0, &FlowOptions::default()).unwrap();
        assert!(
            !trace.crossings.is_empty(),
            "expected a band passage: {trace:?}"
        );
        assert!(trace.energy_drift < 1e-6, "{}", trace.energy_drift);
        assert!(trace.max_residual < 1e-6, "{}", trace.max_residual);
        assert!((trace.initial_energy - e0).abs() < 1e-14);

        // g(v, v) is a first integral; check it well off the marks.
        for &t in &[0.2, 0.7, 1.4, 1.9] {
            if trace.crossings.iter().any(|c| (c.t - t).abs() < 0.1) {
                continue;
            }
            let p = curve.position(t);
            let vel = curve.velocity(t);
            let e = m.inner_at(&p, &vel, &vel).unwrap();
            assert!((e - e0).abs() < 1e-6 * e0, "t={t}: {e} vs {e0}");
        }
        let report = curve.check_odd_regular(&m).unwrap();
        assert!(report.regular, "{report:?}");

        // A wider band shifts work from the coordinate system to the frame
        // system; the geodesic itself must not move.
        let wide = FlowOptions {
            switch_distance: 0.12,
            ..FlowOptions::default()
        };
        let (c2, _) = geodesic(&sys, &x0, &v0, 2.0, &wide).unwrap();
        for &t in &[0.3, 0.8, 1.3, 1.9] {
            if trace.crossings.iter().any(|c| (c.t - t).abs() < 0.1) {
                continue;
            }
            let (p1, p2) = (curve.position(t), c2.position(t));
            for i in 0..2 {
                assert!((p1[i] - p2[i]).abs() < 1e-5, "t={t}: {p1:?} vs {p2:?}");
            }
        }
    }

    #[test]
    fn frame_connection_is_antisymmetric() {
        for m in [r2_cross(), euclid(3)] {
            let sys = GeodesicSystem::new(&m).unwrap();
            let n = m.dim();
            let pts: Vec<Vec<f64>> = vec![
                vec![0.73; n],
                vec![-0.41; n],
                (0..n).map(|i| 0.3 + 0.37 * i as f64).collect(),
            ];
            for p in pts {
                for k in 0..n {
                    for j in 0..n {
                        for i in 0..n {
                            let w1 = sys.frame_connection(k, j, i).eval(&p).as_finite().unwrap();
                            let w2 = sys.frame_connection(i, j, k).eval(&p).as_finite().unwrap();
                            assert!(
                                (w1 + w2).abs() < 1e-9 * (1.0 + w1.abs()),
                                "({k},{j},{i}) at {p:?}: {w1} + {w2}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn band_width_does_not_change_the_geodesic() {
        let m = line_x2();
        let sys = GeodesicSystem::new(&m).unwrap();
        let narrow = FlowOptions::default();
        let wide = FlowOptions {
            switch_distance: 0.15,
            ..FlowOptions::default()
        };
        let (c1, _) = geodesic(&sys, &[1.0], &[-1.0], 1.125, &narrow).unwrap();
        let (c2, _) = geodesic(&sys, &[1.0], &[-1.0], 1.125, &wide).unwrap();
        for &t in &[0.3, 0.49, 0.7, 1.1] {
            let (a, b) = (c1.position(t)[0], c2.position(t)[0]);
            assert!((a - b).abs() < 1e-6, "t={t}: {a} vs {b}");
        }
    }
}
