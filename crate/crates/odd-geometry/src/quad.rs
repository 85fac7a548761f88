//! Adaptive quadrature on intervals and boxes.
//!
//! The base rule is the 15-point Kronrod extension of 7-point Gauss. It is
//! an open rule: the endpoints are never evaluated, so integrable endpoint
//! singularities (|x|, 1/sqrt-type) are handled by refinement alone. The
//! adaptive driver keeps a worst-first heap of subintervals. Callers that
//! know where the integrand loses smoothness pass those points as
//! breakpoints; the driver seeds the heap with the induced partition so
//! the rule never straddles a kink.

use crate::error::{OddError, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

// Kronrod-15 abscissae (positive half) and weights, and the embedded
// Gauss-7 weights for abscissae 1, 3, 5, 7 of the list.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

const MAX_INTERVALS: usize = 4096;

#[derive(Clone, Debug)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub evals: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One Gauss-Kronrod pass over [a, b]. Returns (value, error estimate).
fn kronrod15<F>(f: &mut F, a: f64, b: f64, evals: &mut usize) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let fc = f(center)?;
    *evals += 1;
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    let mut resabs = WGK[7] * fc.abs();

    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        fv1[j] = f(center - dx)?;
        fv2[j] = f(center + dx)?;
        *evals += 2;
        let sum = fv1[j] + fv2[j];
        resk += WGK[j] * sum;
        resabs += WGK[j] * (fv1[j].abs() + fv2[j].abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * sum;
        }
    }

    let reskh = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }

    let value = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * 1.0_f64.min((200.0 * err / resasc).powf(1.5));
    }
    let floor = 50.0 * f64::EPSILON * resabs;
    if floor > f64::MIN_POSITIVE {
        err = err.max(floor);
    }
    if !value.is_finite() {
        return Err(OddError::QuadratureFailure {
            tol: 0.0,
            err: f64::INFINITY,
            evals: *evals,
        });
    }
    Ok((value, err))
}

/// Adaptive integral of `f` over [a, b]. The target is
/// `tol * max(1, |integral|)`, so `tol` reads as an absolute tolerance for
/// moderate values and a relative one for large ones.
pub fn integrate<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    integrate_with_breakpoints(&mut f, a, b, tol, &[])
}

/// Same, but the heap starts from the partition of [a, b] induced by the
/// interior breakpoints.
pub fn integrate_with_breakpoints<F>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    breakpoints: &[f64],
) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            abs_error: 0.0,
            evals: 0,
        });
    }
    if a > b {
        let mut r = integrate_with_breakpoints(f, b, a, tol, breakpoints)?;
        r.value = -r.value;
        return Ok(r);
    }

    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|x| *x > a && *x < b)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut evals = 0usize;
    let mut heap = BinaryHeap::new();
    let mut lo = a;
    for hi in cuts.into_iter().chain(std::iter::once(b)) {
        let (v, e) = kronrod15(&mut f, lo, hi, &mut evals)?;
        heap.push(Panel {
            a: lo,
            b: hi,
            value: v,
            error: e,
        });
        lo = hi;
    }

    // Totals are recomputed from the live panel set every round. The
    // incremental alternative (total += children - parent) loses all
    // significance the moment one near-singular panel dwarfs the rest,
    // and can cancel to an exact, plausible-looking zero.
    loop {
        let total: f64 = heap.iter().map(|p| p.value).sum();
        let total_err: f64 = heap.iter().map(|p| p.error).sum();
        if !total.is_finite() || !total_err.is_finite() {
            return Err(OddError::QuadratureFailure {
                tol,
                err: f64::INFINITY,
                evals,
            });
        }
        if total_err <= tol * 1.0_f64.max(total.abs()) {
            return Ok(QuadResult {
                value: total,
                abs_error: total_err,
                evals,
            });
        }
        if heap.len() >= MAX_INTERVALS {
            return Err(OddError::QuadratureFailure {
                tol,
                err: total_err,
                evals,
            });
        }
        let worst = heap.pop().expect("heap cannot be empty here");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval at machine resolution and still over budget
            return Err(OddError::QuadratureFailure {
                tol,
                err: total_err,
                evals,
            });
        }
        let (v1, e1) = kronrod15(&mut f, worst.a, mid, &mut evals)?;
        let (v2, e2) = kronrod15(&mut f, mid, worst.b, &mut evals)?;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
}

/// Iterated integral over a box. `breakpoints[d]` lists known kink
/// positions along coordinate d (typically zeros of stratum coordinates).
/// Inner levels run at a tightened tolerance so their noise stays below
/// the outer rule's resolution.
pub fn integrate_box(
    f: &dyn Fn(&[f64]) -> Result<f64>,
    domain: &[(f64, f64)],
    breakpoints: &[Vec<f64>],
    tol: f64,
) -> Result<QuadResult> {
    assert_eq!(domain.len(), breakpoints.len());
    assert!(!domain.is_empty());
    let evals = std::cell::Cell::new(0usize);
    let mut prefix = Vec::with_capacity(domain.len());
    let r = integrate_box_rec(f, domain, breakpoints, tol, &mut prefix, &evals)?;
    Ok(QuadResult {
        value: r.0,
        abs_error: r.1,
        evals: evals.get(),
    })
}

fn integrate_box_rec(
    f: &dyn Fn(&[f64]) -> Result<f64>,
    domain: &[(f64, f64)],
    breakpoints: &[Vec<f64>],
    tol: f64,
    prefix: &mut Vec<f64>,
    evals: &std::cell::Cell<usize>,
) -> Result<(f64, f64)> {
    let d = prefix.len();
    let (a, b) = domain[d];
    let last = d + 1 == domain.len();
    let r = integrate_with_breakpoints(
        |x| {
            prefix.push(x);
            let out = if last {
                evals.set(evals.get() + 1);
                f(prefix)
            } else {
                integrate_box_rec(f, domain, breakpoints, tol / 8.0, prefix, evals).map(|r| r.0)
            };
            prefix.pop();
            out
        },
        a,
        b,
        tol,
        &breakpoints[d],
    )?;
    Ok((r.value, r.abs_error))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| Ok(x * x * x - 2.0 * x + 1.0), -1.0, 3.0, 1e-12).unwrap();
        // antiderivative x^4/4 - x^2 + x
        assert!((r.value - 16.0).abs() < 1e-12);
        assert_eq!(r.evals, 15);
    }

    #[test]
    fn abs_with_breakpoint_is_exact() {
        let r = integrate_with_breakpoints(|x| Ok(x.abs()), -1.0, 1.0, 1e-12, &[0.0]).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14);
        assert_eq!(r.evals, 30);
    }

    #[test]
    fn abs_without_breakpoint_still_converges() {
        let r = integrate(|x| Ok(x.abs()), -1.0, 1.0, 1e-10).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn inverse_sqrt_endpoint_singularity() {
        // integral of 1/(2 sqrt(x)) on (0, 1] is 1; endpoint never sampled
        let r = integrate(|x| Ok(0.5 / x.sqrt()), 0.0, 1.0, 1e-9).unwrap();
        assert!((r.value - 1.0).abs() < 1e-8, "value {}", r.value);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let r = integrate(|x| Ok(x), 2.0, 0.0, 1e-12).unwrap();
        assert!((r.value + 2.0).abs() < 1e-13);
    }

    #[test]
    fn interior_pole_reports_failure() {
        let out = integrate(|x| Ok(1.0 / (x - 0.3).abs().max(1e-300)), 0.0, 1.0, 1e-8);
        assert!(matches!(out, Err(OddError::QuadratureFailure { .. })));
    }

    #[test]
    fn box_volume_of_product_integrand() {
        // integral of |x| |y| over [-1,1]^2 is 1
        let f = |p: &[f64]| Ok(p[0].abs() * p[1].abs());
        let r = integrate_box(
            &f,
            &[(-1.0, 1.0), (-1.0, 1.0)],
            &[vec![0.0], vec![0.0]],
            1e-10,
        )
        .unwrap();
        assert!((r.value - 1.0).abs() < 1e-10, "value {}", r.value);
    }
}
