//! Curves, their metric speed and length, and the regularity check at
//! locus crossings.
//!
//! A curve is a list of contiguous segments. Three segment kinds cover
//! everything produced or consumed here. Symbolic segments hold closed
//! forms in the parameter with exact derivatives. Sampled segments hold
//! integrator output. Desingularized segments hold a path in an auxiliary
//! parameter k together with the monotone map t(k); that is the shape a
//! locus crossing naturally comes in, since the coordinate velocity in t
//! blows up at the crossing while the path in k stays smooth.
//!
//! `marks` are parameter values where the curve touches the degeneracy
//! locus. Length integration uses them as quadrature breakpoints and the
//! regularity check takes one-sided limits there.

use crate::connection::{neville_from_samples, neville_limit};
use crate::error::{OddError, Result};
use crate::expr::{EvalResult, Expr};
use crate::frame::{orthonormal_frame, Frame};
use crate::metric::OddMetric;
use crate::quad;
use crate::spline::CubicHermite;
use crate::timemap::TimeMap;
use std::sync::Arc;

/// Speeds above this are treated as divergent by the regularity check.
pub const SPEED_BOUND: f64 = 1e6;

#[derive(Clone, Debug)]
pub enum Segment {
    /// Closed-form components of t, with their exact derivatives.
    Symbolic {
        components: Vec<Expr>,
        velocity: Vec<Expr>,
        t0: f64,
        t1: f64,
    },
    /// Interpolated integrator output in metric time.
    Sampled(CubicHermite),
    /// A path y(k) and the time map t(k); the curve is y(k(t)).
    Desing { path: CubicHermite, map: TimeMap },
}

impl Segment {
    /// Build a symbolic segment; the derivatives are taken symbolically.
    pub fn symbolic(components: Vec<Expr>, t0: f64, t1: f64) -> Segment {
        assert!(t0 < t1, "segment needs a nonempty range");
        let velocity = components.iter().map(|c| c.diff(0).simplify()).collect();
        Segment::Symbolic {
            components,
            velocity,
            t0,
            t1,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Segment::Symbolic { components, .. } => components.len(),
            Segment::Sampled(sp) => sp.dim(),
            Segment::Desing { path, .. } => path.dim(),
        }
    }

    pub fn t_range(&self) -> (f64, f64) {
        match self {
            Segment::Symbolic { t0, t1, .. } => (*t0, *t1),
            Segment::Sampled(sp) => sp.t_range(),
            Segment::Desing { map, .. } => map.t_range(),
        }
    }

    /// Position at t. Removable 0/0 forms in symbolic components are
    /// resolved by a symmetric probe around t.
    pub fn position(&self, t: f64) -> Vec<f64> {
        match self {
            Segment::Symbolic { components, .. } => components
                .iter()
                .map(|c| match c.eval(&[t]) {
                    EvalResult::Finite(v) => v,
                    _ => {
                        let d = 1e-12 * (1.0 + t.abs());
                        let a = c.eval(&[t + d]).as_finite().unwrap_or(f64::NAN);
                        let b = c.eval(&[t - d]).as_finite().unwrap_or(f64::NAN);
                        0.5 * (a + b)
                    }
                })
                .collect(),
            Segment::Sampled(sp) => sp.eval(t),
            Segment::Desing { path, map } => path.eval(map.k_of_t(t)),
        }
    }

    /// Coordinate velocity dx/dt. May legitimately be non-finite exactly
    /// at a locus crossing of a desingularized segment.
    pub fn velocity(&self, t: f64) -> Vec<f64> {
        match self {
            Segment::Symbolic { velocity, .. } => velocity
                .iter()
                .map(|c| c.eval(&[t]).as_finite().unwrap_or(f64::INFINITY))
                .collect(),
            Segment::Sampled(sp) => sp.eval_derivative(t),
            Segment::Desing { path, map } => {
                let k = map.k_of_t(t);
                let dy = path.eval_derivative(k);
                let f = map
                    .factor(k)
                    .ok()
                    .filter(|v| v.is_finite())
                    .unwrap_or(f64::NAN);
                dy.into_iter().map(|v| v / f).collect()
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct PiecewiseCurve {
    segments: Vec<Segment>,
    dim: usize,
    marks: Vec<f64>,
}

impl PiecewiseCurve {
    /// Chain segments into a curve. Ranges must be contiguous and the
    /// junction positions must agree.
    pub fn new(segments: Vec<Segment>) -> Result<PiecewiseCurve> {
        assert!(!segments.is_empty(), "curve needs at least one segment");
        let dim = segments[0].dim();
        for s in &segments {
            assert_eq!(s.dim(), dim, "segments must share a dimension");
        }
        for w in segments.windows(2) {
            let (_, e0) = w[0].t_range();
            let (s1, _) = w[1].t_range();
            if (e0 - s1).abs() > 1e-9 * (1.0 + e0.abs()) {
                return Err(OddError::InvalidArgument {
                    what: format!("segment ranges are not contiguous at t = {e0} vs {s1}"),
                });
            }
            let pa = w[0].position(e0);
            let pb = w[1].position(s1);
            let gap: f64 = pa
                .iter()
                .zip(&pb)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if gap > 1e-6 {
                return Err(OddError::InvalidArgument {
                    what: format!("segments disagree at the junction t = {e0}: gap {gap:.3e}"),
                });
            }
        }
        Ok(PiecewiseCurve {
            segments,
            dim,
            marks: Vec::new(),
        })
    }

    pub fn from_symbolic(components: Vec<Expr>, t0: f64, t1: f64) -> Result<PiecewiseCurve> {
        PiecewiseCurve::new(vec![Segment::symbolic(components, t0, t1)])
    }

    pub fn with_marks(mut self, mut marks: Vec<f64>) -> PiecewiseCurve {
        marks.sort_by(f64::total_cmp);
        marks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        self.marks = marks;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn marks(&self) -> &[f64] {
        &self.marks
    }

    pub fn t_range(&self) -> (f64, f64) {
        let (a, _) = self.segments[0].t_range();
        let (_, b) = self.segments.last().unwrap().t_range();
        (a, b)
    }

    fn segment_at(&self, t: f64) -> &Segment {
        let idx = self
            .segments
            .partition_point(|s| s.t_range().1 < t)
            .min(self.segments.len() - 1);
        &self.segments[idx]
    }

    pub fn position(&self, t: f64) -> Vec<f64> {
        let (a, b) = self.t_range();
        self.segment_at(t.clamp(a, b)).position(t.clamp(a, b))
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        let (a, b) = self.t_range();
        self.segment_at(t.clamp(a, b)).velocity(t.clamp(a, b))
    }

    /// Metric speed at t; clamps tiny negative quadratic forms to zero.
    pub fn speed(&self, m: &OddMetric, t: f64) -> f64 {
        let p = self.position(t);
        let v = self.velocity(t);
        match m.inner_at(&p, &v, &v) {
            Ok(q) => q.max(0.0).sqrt(),
            Err(_) => f64::NAN,
        }
    }

    /// Locate locus touch times by sign changes of the stratum
    /// coordinates, then filter to times where a whole stratum vanishes.
    /// Replaces the current marks.
    pub fn detect_marks(self, m: &OddMetric) -> PiecewiseCurve {
        let (a, b) = self.t_range();
        let n_mesh = 4096;
        let mut coords: Vec<usize> = m
            .strata()
            .iter()
            .flat_map(|s| s.vanishing().iter().copied())
            .collect();
        coords.sort_unstable();
        coords.dedup();

        let mut marks = Vec::new();
        for &ci in &coords {
            let mut prev_t = a;
            let mut prev_v = self.position(a)[ci];
            for i in 1..=n_mesh {
                let t = a + (b - a) * (i as f64) / (n_mesh as f64);
                let v = self.position(t)[ci];
                if prev_v == 0.0 || (prev_v < 0.0) != (v < 0.0) {
                    // bisect the sign change
                    let (mut lo, mut hi) = (prev_t, t);
                    let mut flo = prev_v;
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        if mid == lo || mid == hi {
                            break;
                        }
                        let fm = self.position(mid)[ci];
                        if fm == 0.0 {
                            lo = mid;
                            hi = mid;
                            break;
                        }
                        if (fm < 0.0) == (flo < 0.0) {
                            lo = mid;
                            flo = fm;
                        } else {
                            hi = mid;
                        }
                    }
                    let t_hit = 0.5 * (lo + hi);
                    let p = self.position(t_hit);
                    // a touch counts when some whole stratum vanishes there
                    let on_stratum = m
                        .strata()
                        .iter()
                        .any(|s| s.vanishing().iter().all(|&j| p[j].abs() < 1e-7));
                    if on_stratum {
                        marks.push(t_hit);
                    }
                }
                prev_t = t;
                prev_v = v;
            }
        }
        self.with_marks(marks)
    }

    /// Metric length: integral of the speed. Desingularized segments are
    /// integrated in their own parameter, where the integrand vanishes at
    /// crossings instead of blowing up.
    pub fn length(&self, m: &OddMetric, tol: f64) -> Result<f64> {
        let mut total = 0.0;
        for seg in &self.segments {
            total += match seg {
                Segment::Desing { path, map } => {
                    let (k0, k1) = path.t_range();
                    let f = |k: f64| {
                        let p = path.eval(k);
                        let dy = path.eval_derivative(k);
                        m.inner_at(&p, &dy, &dy).map(|q| q.max(0.0).sqrt())
                    };
                    quad::integrate_with_breakpoints(f, k0, k1, tol, map.zeros())?.value
                }
                _ => {
                    let (t0, t1) = seg.t_range();
                    let f = |t: f64| {
                        let p = seg.position(t);
                        let v = seg.velocity(t);
                        m.inner_at(&p, &v, &v).map(|q| q.max(0.0).sqrt())
                    };
                    let breaks: Vec<f64> = self
                        .marks
                        .iter()
                        .copied()
                        .filter(|t| *t > t0 && *t < t1)
                        .collect();
                    quad::integrate_with_breakpoints(f, t0, t1, tol, &breaks)?.value
                }
            };
        }
        Ok(total)
    }

    /// Reparametrize by metric arclength. The result is a desingularized
    /// curve in the new parameter; the original parameter plays the role
    /// of k. Fails with `DegenerateSegment` when the speed vanishes on a
    /// subinterval (no arclength parametrization exists there).
    pub fn reparametrize_by_arclength(
        &self,
        m: &OddMetric,
        tol: f64,
    ) -> Result<PiecewiseCurve> {
        let mut out = Vec::with_capacity(self.segments.len());
        let mut s_origin = 0.0;
        let mut new_marks = Vec::new();
        for seg in &self.segments {
            let (u0, u1, path) = match seg {
                Segment::Desing { path, .. } => {
                    let (k0, k1) = path.t_range();
                    (k0, k1, path.clone())
                }
                _ => {
                    let (t0, t1) = seg.t_range();
                    let n = 600;
                    let ts: Vec<f64> = (0..n)
                        .map(|i| t0 + (t1 - t0) * (i as f64) / ((n - 1) as f64))
                        .collect();
                    let ys: Vec<Vec<f64>> = ts.iter().map(|&t| seg.position(t)).collect();
                    let ms: Vec<Vec<f64>> = ts.iter().map(|&t| seg.velocity(t)).collect();
                    (t0, t1, CubicHermite::new(ts, ys, ms))
                }
            };

            // degenerate subinterval scan: consecutive vanishing speeds
            let mesh = 512;
            let mut zero_run: Option<f64> = None;
            for i in 0..=mesh {
                let u = u0 + (u1 - u0) * (i as f64) / (mesh as f64);
                let p = path.eval(u);
                let du = path.eval_derivative(u);
                let sp = m.inner_at(&p, &du, &du)?.max(0.0).sqrt();
                if sp < 1e-9 {
                    if let Some(start) = zero_run {
                        if (u - start) > (u1 - u0) / (mesh as f64) * 1.5 {
                            return Err(OddError::DegenerateSegment { a: start, b: u });
                        }
                    } else {
                        zero_run = Some(u);
                    }
                } else {
                    zero_run = None;
                }
            }

            let zeros: Vec<f64> = self
                .marks
                .iter()
                .copied()
                .filter(|t| *t > u0 && *t < u1)
                .collect();
            let path_for_map = path.clone();
            let metric = m.clone();
            let speed_of_u = move |u: f64| {
                let p = path_for_map.eval(u);
                let du = path_for_map.eval_derivative(u);
                metric.inner_at(&p, &du, &du).map(|q| q.max(0.0).sqrt())
            };
            let map = TimeMap::new(Arc::new(speed_of_u), u0, u1, &zeros, tol)?
                .with_time_origin(u0, s_origin);
            s_origin = map.t_range().1;
            for z in &zeros {
                new_marks.push(map.t_of_k(*z));
            }
            out.push(Segment::Desing { path, map });
        }
        Ok(PiecewiseCurve::new(out)?.with_marks(new_marks))
    }

    /// Regularity across the marked crossings: one-sided limits of the
    /// metric speed and of the normalized frame components of the
    /// velocity. Off the marks the speed must stay positive.
    pub fn check_odd_regular(&self, m: &OddMetric) -> Result<RegularityReport> {
        let frame = orthonormal_frame(m)?;
        let theta = frame.coframe()?;
        let (t0, t1) = self.t_range();

        let mut mark_reports = Vec::new();
        for &tm in &self.marks {
            let eta_max = 0.1_f64.min(((t1 - tm).min(tm - t0).max(1e-8)).sqrt() * 0.5);
            let nodes: Vec<f64> = (0..5).map(|i| eta_max * 0.4f64.powi(i)).collect();

            let speed_at = |t: f64| -> Result<f64> {
                let v = self.speed(m, t);
                if !v.is_finite() {
                    return Err(OddError::UnboundedSpeed {
                        t,
                        bound: SPEED_BOUND,
                    });
                }
                Ok(v)
            };
            // sample both sides and screen for divergence before
            // extrapolating: a monotone blow-up pattern means the limit
            // does not exist, however small the values still are
            let mut side_limits = [None, None];
            for (slot, side) in [(-1.0f64, 0usize), (1.0, 1)].map(|(s, i)| (i, s)) {
                let mut vals = Vec::with_capacity(nodes.len());
                for &e in &nodes {
                    vals.push(speed_at(tm + side * e * e)?);
                }
                let growing = vals
                    .windows(2)
                    .all(|w| w[1].abs() > 1.3 * w[0].abs() + 1e-12);
                if vals.last().unwrap().abs() > SPEED_BOUND
                    || (growing && vals.last().unwrap().abs() > 20.0 * vals[0].abs().max(1e-9))
                {
                    return Err(OddError::UnboundedSpeed {
                        t: tm,
                        bound: SPEED_BOUND,
                    });
                }
                side_limits[slot] = Some(neville_from_samples(&nodes, &vals));
            }
            let sp_minus = side_limits[0].unwrap();
            let sp_plus = side_limits[1].unwrap();

            let frame_component = |t: f64, i: usize| -> Result<f64> {
                let p = self.position(t);
                let v = self.velocity(t);
                let mut acc = 0.0;
                for j in 0..self.dim {
                    match theta[i][j].eval(&p) {
                        EvalResult::Finite(c) => acc += c * v[j],
                        other => {
                            return Err(OddError::InvalidArgument {
                                what: format!("coframe singular at t = {t}: {other:?}"),
                            })
                        }
                    }
                }
                if !acc.is_finite() {
                    return Err(OddError::UnboundedSpeed {
                        t,
                        bound: SPEED_BOUND,
                    });
                }
                Ok(acc)
            };

            let mut a_minus = Vec::with_capacity(self.dim);
            let mut a_plus = Vec::with_capacity(self.dim);
            for i in 0..self.dim {
                a_minus.push(neville_limit(&|e| frame_component(tm - e * e, i), &nodes)?.0);
                a_plus.push(neville_limit(&|e| frame_component(tm + e * e, i), &nodes)?.0);
            }
            let euclid_dir = |t: f64| -> Vec<f64> {
                let v = self.velocity(t);
                let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / n.max(1e-300)).collect()
            };
            let h_probe = nodes[2] * nodes[2];
            let e_minus = euclid_dir(tm - h_probe);
            let e_plus = euclid_dir(tm + h_probe);

            let normalize = |a: &[f64]| -> Vec<f64> {
                let n: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                a.iter().map(|x| x / n.max(1e-300)).collect()
            };
            let an_minus = normalize(&a_minus);
            let an_plus = normalize(&a_plus);
            let dir_gap: f64 = an_minus
                .iter()
                .zip(&an_plus)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();

            let speed_continuous = (sp_minus.0 - sp_plus.0).abs()
                <= 1e-6 * 1.0_f64.max(sp_minus.0.abs().max(sp_plus.0.abs()));
            let positive = sp_minus.0 > 1e-9 && sp_plus.0 > 1e-9;
            let frame_direction_continuous = dir_gap <= 1e-5;
            mark_reports.push(MarkReport {
                t: tm,
                point: self.position(tm),
                speed_minus: sp_minus.0,
                speed_plus: sp_plus.0,
                frame_minus: a_minus,
                frame_plus: a_plus,
                euclid_minus: e_minus,
                euclid_plus: e_plus,
                speed_continuous,
                frame_direction_continuous,
                regular: speed_continuous && positive && frame_direction_continuous,
            });
        }

        // interior sampling away from the marks
        let mesh = 800;
        let mut min_speed = f64::INFINITY;
        for i in 0..=mesh {
            let t = t0 + (t1 - t0) * (i as f64) / (mesh as f64);
            if self.marks.iter().any(|&tm| (t - tm).abs() < 2e-3 * (t1 - t0).max(1.0)) {
                continue;
            }
            let sp = self.speed(m, t);
            if sp.is_finite() {
                min_speed = min_speed.min(sp);
            }
        }

        let regular = mark_reports.iter().all(|r| r.regular) && min_speed > 1e-9;
        Ok(RegularityReport {
            marks: mark_reports,
            min_interior_speed: min_speed,
            regular,
        })
    }
}

#[derive(Clone, Debug)]
pub struct RegularityReport {
    pub marks: Vec<MarkReport>,
    pub min_interior_speed: f64,
    pub regular: bool,
}

#[derive(Clone, Debug)]
pub struct MarkReport {
    pub t: f64,
    pub point: Vec<f64>,
    pub speed_minus: f64,
    pub speed_plus: f64,
    /// One-sided limits of the frame components of the velocity.
    pub frame_minus: Vec<f64>,
    pub frame_plus: Vec<f64>,
    /// Euclidean unit velocity just before and after (reported, not part
    /// of the verdict: it may be discontinuous for regular curves).
    pub euclid_minus: Vec<f64>,
    pub euclid_plus: Vec<f64>,
    pub speed_continuous: bool,
    pub frame_direction_continuous: bool,
    pub regular: bool,
}

/// Frame bundle for callers that need the frame and coframe of the same
/// metric once.
pub fn frame_pair(m: &OddMetric) -> Result<(Frame, Vec<Vec<Expr>>)> {
    let f = orthonormal_frame(m)?;
    let theta = f.coframe()?;
    Ok((f, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::metric::Stratum;

    fn line_x2() -> OddMetric {
        OddMetric::new(
            vec!["x".into()],
            vec![parse("x^2", &["x"]).unwrap()],
            vec![Stratum::new(vec![0])],
            vec![(-2.0, 2.0)],
        )
        .unwrap()
    }

    /// x(t) = sgn(t) sqrt(|t|), written as t / sqrt(|t|)
    fn sqrt_curve() -> PiecewiseCurve {
        let x = parse("t / sqrt(abs(t))", &["t"]).unwrap();
        PiecewiseCurve::from_symbolic(vec![x], -1.0, 1.0)
            .unwrap()
            .detect_marks(&line_x2())
    }

    #[test]
    fn sqrt_curve_has_constant_half_speed() {
        let m = line_x2();
        let c = sqrt_curve();
        for i in 0..20 {
            let t = -0.95 + 1.9 * (i as f64) / 19.0;
            if t.abs() < 1e-3 {
                continue;
            }
            let s = c.speed(&m, t);
            assert!((s - 0.5).abs() < 1e-10, "t = {t}: speed {s}");
        }
    }

    #[test]
    fn marks_are_detected_at_the_crossing() {
        let c = sqrt_curve();
        assert_eq!(c.marks().len(), 1);
        assert!(c.marks()[0].abs() < 1e-9);
    }

    #[test]
    fn length_through_the_crossing() {
        let m = line_x2();
        let c = sqrt_curve();
        let l = c.length(&m, 1e-12).unwrap();
        assert!((l - 1.0).abs() < 1e-10, "length {l}");
    }

    #[test]
    fn sqrt_curve_is_odd_regular() {
        let m = line_x2();
        let c = sqrt_curve();
        let r = c.check_odd_regular(&m).unwrap();
        assert!(r.regular, "{r:?}");
        let mk = &r.marks[0];
        assert!((mk.speed_minus - 0.5).abs() < 1e-8);
        assert!((mk.speed_plus - 0.5).abs() < 1e-8);
        // frame component of the velocity is +1/2 on both sides
        assert!((mk.frame_minus[0] - 0.5).abs() < 1e-6, "{:?}", mk.frame_minus);
        assert!((mk.frame_plus[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn linear_curve_is_not_regular_at_the_origin() {
        let m = line_x2();
        let c = PiecewiseCurve::from_symbolic(vec![parse("t", &["t"]).unwrap()], -1.0, 1.0)
            .unwrap()
            .detect_marks(&m);
        let r = c.check_odd_regular(&m).unwrap();
        assert!(!r.regular);
        // speed |t| tends to zero from both sides
        assert!(r.marks[0].speed_minus.abs() < 1e-7);
        assert!(r.marks[0].speed_plus.abs() < 1e-7);
    }

    #[test]
    fn quartic_root_curve_has_unbounded_speed() {
        // x = sgn(t) |t|^(1/4): metric speed ~ |t|^(-1/2)/4
        let x = parse("t / sqrt(abs(t) * sqrt(abs(t)))", &["t"]).unwrap();
        let m = line_x2();
        let c = PiecewiseCurve::from_symbolic(vec![x], -1.0, 1.0)
            .unwrap()
            .detect_marks(&m);
        assert!(matches!(
            c.check_odd_regular(&m),
            Err(OddError::UnboundedSpeed { .. })
        ));
    }

    #[test]
    fn arclength_reparametrization_has_unit_speed() {
        let m = line_x2();
        let c = sqrt_curve();
        let r = c.reparametrize_by_arclength(&m, 1e-11).unwrap();
        let (s0, s1) = r.t_range();
        assert!((s1 - s0 - 1.0).abs() < 1e-9, "total arclength {}", s1 - s0);
        for i in 1..20 {
            let s = s0 + (s1 - s0) * (i as f64) / 20.0;
            if r.marks().iter().any(|&mk| (s - mk).abs() < 1e-2) {
                continue;
            }
            let sp = r.speed(&m, s);
            assert!((sp - 1.0).abs() < 1e-6, "s = {s}: speed {sp}");
        }
        // positions match the original curve at matched parameters
        let p = r.position(s0 + 0.75 * (s1 - s0));
        let q = c.position(-1.0 + 2.0 * 0.75);
        assert!((p[0] - q[0]).abs() < 1e-6, "{p:?} vs {q:?}");
    }

    #[test]
    fn constant_curve_cannot_be_reparametrized() {
        let m = line_x2();
        let c =
            PiecewiseCurve::from_symbolic(vec![parse("1 + 0*t", &["t"]).unwrap()], 0.0, 1.0)
                .unwrap();
        assert!(matches!(
            c.reparametrize_by_arclength(&m, 1e-9),
            Err(OddError::DegenerateSegment { .. })
        ));
    }

    #[test]
    fn junction_mismatch_is_rejected() {
        let a = Segment::symbolic(vec![parse("t", &["t"]).unwrap()], 0.0, 1.0);
        let b = Segment::symbolic(vec![parse("t + 5", &["t"]).unwrap()], 1.0, 2.0);
        assert!(PiecewiseCurve::new(vec![a, b]).is_err());
    }
}
