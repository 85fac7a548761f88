//! Orthonormal frames and first-order differential operators.
//!
//! The frame comes from symbolic Gram-Schmidt on the coordinate basis.
//! Off the degeneracy locus it is a genuine orthonormal basis; its
//! coefficients are rational-radical expressions whose poles sit exactly
//! on the locus, and that is the point: the frame encodes how vectors
//! must blow up to keep unit length as the metric collapses.
//!
//! Every symbolic product here is simplified immediately. The node budget
//! turns runaway growth into a reported error instead of a hang.

use crate::error::{OddError, Result};
use crate::expr::{EvalResult, Expr};
use crate::metric::OddMetric;
use crate::quad;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Hard cap on simplified expression size for derived quantities.
pub const NODE_BUDGET: usize = 20_000;

pub(crate) fn ensure_budget(e: &Expr) -> Result<()> {
    let nodes = e.node_count();
    if nodes > NODE_BUDGET {
        return Err(OddError::BudgetExceeded {
            nodes,
            budget: NODE_BUDGET,
        });
    }
    Ok(())
}

/// Symmetric inner product of two coordinate vector fields, as an
/// expression.
pub fn inner(m: &OddMetric, u: &[Expr], v: &[Expr]) -> Expr {
    let n = m.dim();
    let mut acc = Expr::zero();
    for i in 0..n {
        for j in 0..n {
            if u[i].is_const(0.0) || v[j].is_const(0.0) || m.entry(i, j).is_const(0.0) {
                continue;
            }
            acc = acc + m.entry(i, j).clone() * u[i].clone() * v[j].clone();
        }
    }
    acc.simplify()
}

/// Determinant of the metric matrix, by cofactor expansion, simplified.
pub fn determinant(m: &OddMetric) -> Expr {
    let n = m.dim();
    let rows: Vec<Vec<Expr>> = (0..n)
        .map(|i| (0..n).map(|j| m.entry(i, j).clone()).collect())
        .collect();
    det_rec(&rows)
}

fn det_rec(rows: &[Vec<Expr>]) -> Expr {
    let n = rows.len();
    if n == 1 {
        return rows[0][0].clone().simplify();
    }
    let mut acc = Expr::zero();
    for j in 0..n {
        if rows[0][j].is_const(0.0) {
            continue;
        }
        let minor: Vec<Vec<Expr>> = rows[1..]
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(c, _)| *c != j)
                    .map(|(_, e)| e.clone())
                    .collect()
            })
            .collect();
        let term = rows[0][j].clone() * det_rec(&minor);
        acc = if j % 2 == 0 { acc + term } else { acc - term };
    }
    acc.simplify()
}

/// Inverse of a square symbolic matrix via the adjugate. The entries
/// divide by the determinant, so they carry poles wherever it vanishes;
/// evaluation there reports a pole rather than a number.
pub fn invert_symbolic(mat: &[Vec<Expr>]) -> Result<Vec<Vec<Expr>>> {
    let n = mat.len();
    assert!(mat.iter().all(|r| r.len() == n), "matrix must be square");
    let rows: Vec<Vec<Expr>> = mat.to_vec();
    let det = det_rec(&rows);
    if det.is_const(0.0) {
        return Err(OddError::InvalidArgument {
            what: "matrix is singular: determinant simplifies to zero".into(),
        });
    }
    ensure_budget(&det)?;
    let mut out = vec![vec![Expr::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            // adjugate: cofactor of (j, i)
            let minor: Vec<Vec<Expr>> = (0..n)
                .filter(|&r| r != j)
                .map(|r| {
                    (0..n)
                        .filter(|&c| c != i)
                        .map(|c| rows[r][c].clone())
                        .collect()
                })
                .collect();
            let cof = if minor.is_empty() {
                Expr::one()
            } else {
                det_rec(&minor)
            };
            let signed = if (i + j) % 2 == 0 { cof } else { cof.neg() };
            let entry = Expr::div(signed, det.clone()).simplify();
            ensure_budget(&entry)?;
            out[i][j] = entry;
        }
    }
    Ok(out)
}

/// The inverse metric as a full symbolic matrix.
pub fn inverse_metric(m: &OddMetric) -> Result<Vec<Vec<Expr>>> {
    let n = m.dim();
    let rows: Vec<Vec<Expr>> = (0..n)
        .map(|i| (0..n).map(|j| m.entry(i, j).clone()).collect())
        .collect();
    invert_symbolic(&rows)
}

/// An orthonormal frame: row i holds the coordinate components of the
/// i-th frame field.
#[derive(Clone, Debug)]
pub struct Frame {
    dim: usize,
    vectors: Vec<Vec<Expr>>,
    /// squared norms of the un-normalized Gram-Schmidt vectors
    norms_sq: Vec<Expr>,
}

impl Frame {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coordinate components of frame field `i`.
    pub fn vector(&self, i: usize) -> &[Expr] {
        &self.vectors[i]
    }

    pub fn vectors(&self) -> &[Vec<Expr>] {
        &self.vectors
    }

    /// Squared norm of the i-th raw Gram-Schmidt vector; its zero set is
    /// where the frame degenerates.
    pub fn norm_sq(&self, i: usize) -> &Expr {
        &self.norms_sq[i]
    }

    /// Evaluate all frame coefficients at a point off the locus.
    pub fn eval_at(&self, point: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![vec![0.0; self.dim]; self.dim];
        for i in 0..self.dim {
            for j in 0..self.dim {
                match self.vectors[i][j].eval(point) {
                    EvalResult::Finite(v) => out[i][j] = v,
                    other => {
                        return Err(OddError::InvalidArgument {
                            what: format!(
                                "frame coefficient ({i},{j}) is singular at {point:?}: {other:?}"
                            ),
                        })
                    }
                }
            }
        }
        Ok(out)
    }

    /// The dual coframe as a matrix: row i holds the components of the
    /// i-th covector in the coordinate cobasis.
    pub fn coframe(&self) -> Result<Vec<Vec<Expr>>> {
        let inv = invert_symbolic(&self.vectors)?;
        // theta^i_j = (M^{-1})_{j i}
        let n = self.dim;
        let mut out = vec![vec![Expr::zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                out[i][j] = inv[j][i].clone();
            }
        }
        Ok(out)
    }
}

/// Gram-Schmidt on the coordinate basis. Fails with `DegenerateFrame`
/// when some intermediate vector has identically vanishing norm (the
/// metric is degenerate on an open set, not just on strata).
pub fn orthonormal_frame(m: &OddMetric) -> Result<Frame> {
    let n = m.dim();
    let mut raw: Vec<Vec<Expr>> = Vec::with_capacity(n);
    let mut norms: Vec<Expr> = Vec::with_capacity(n);

    for i in 0..n {
        let mut u: Vec<Expr> = (0..n)
            .map(|k| if k == i { Expr::one() } else { Expr::zero() })
            .collect();
        for j in 0..i {
            // subtract projection onto the j-th raw vector
            let num = inner(m, &u, &raw[j]);
            if num.is_const(0.0) {
                continue;
            }
            let coef = Expr::div(num, norms[j].clone());
            for k in 0..n {
                if raw[j][k].is_const(0.0) {
                    continue;
                }
                u[k] = (u[k].clone() - coef.clone() * raw[j][k].clone()).simplify();
                ensure_budget(&u[k])?;
            }
        }
        let q = inner(m, &u, &u);
        ensure_budget(&q)?;
        if is_identically_zero(&q, m) {
            return Err(OddError::DegenerateFrame { index: i });
        }
        raw.push(u);
        norms.push(q);
    }

    let mut vectors = Vec::with_capacity(n);
    for i in 0..n {
        let scale = Expr::sqrt(norms[i].clone());
        let mut row = Vec::with_capacity(n);
        for k in 0..n {
            let e = if raw[i][k].is_const(0.0) {
                Expr::zero()
            } else {
                Expr::div(raw[i][k].clone(), scale.clone()).simplify()
            };
            ensure_budget(&e)?;
            row.push(e);
        }
        vectors.push(row);
    }

    Ok(Frame {
        dim: n,
        vectors,
        norms_sq: norms,
    })
}

/// Numeric "is this expression the zero function" test on the metric's
/// own box: a syntactic check would miss unsimplifiable zeros.
fn is_identically_zero(e: &Expr, m: &OddMetric) -> bool {
    if e.is_const(0.0) {
        return true;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x0dd_f4a3);
    let mut all_zero = true;
    for _ in 0..48 {
        let p: Vec<f64> = m
            .domain_box()
            .iter()
            .map(|(lo, hi)| rng.gen_range(*lo..*hi))
            .collect();
        match e.eval(&p) {
            EvalResult::Finite(v) => {
                if v.abs() > 1e-10 {
                    all_zero = false;
                    break;
                }
            }
            _ => {
                all_zero = false;
                break;
            }
        }
    }
    all_zero
}

/// Lower an index: vector components to covector components.
pub fn flat(m: &OddMetric, v: &[Expr]) -> Vec<Expr> {
    let n = m.dim();
    (0..n)
        .map(|i| {
            let mut acc = Expr::zero();
            for j in 0..n {
                if m.entry(i, j).is_const(0.0) || v[j].is_const(0.0) {
                    continue;
                }
                acc = acc + m.entry(i, j).clone() * v[j].clone();
            }
            acc.simplify()
        })
        .collect()
}

/// Raise an index: covector components to vector components. Entries
/// blow up on the locus; that is the correct behavior, not a failure.
pub fn sharp(m: &OddMetric, alpha: &[Expr]) -> Result<Vec<Expr>> {
    let inv = inverse_metric(m)?;
    let n = m.dim();
    Ok((0..n)
        .map(|i| {
            let mut acc = Expr::zero();
            for j in 0..n {
                if inv[i][j].is_const(0.0) || alpha[j].is_const(0.0) {
                    continue;
                }
                acc = acc + inv[i][j].clone() * alpha[j].clone();
            }
            acc.simplify()
        })
        .collect())
}

/// Metric gradient of a scalar: sharp of the differential.
pub fn gradient(m: &OddMetric, f: &Expr) -> Result<Vec<Expr>> {
    let n = m.dim();
    let df: Vec<Expr> = (0..n).map(|i| f.diff(i)).collect();
    sharp(m, &df)
}

/// Density of the metric volume measure: sqrt of the determinant.
pub fn volume_form(m: &OddMetric) -> Expr {
    Expr::sqrt(determinant(m)).simplify()
}

/// Total measure of an axis box (defaults to the metric's own domain).
/// Coordinates that participate in a stratum get a quadrature breakpoint
/// at zero, where the density loses smoothness.
pub fn volume(m: &OddMetric, region: Option<&[(f64, f64)]>, tol: f64) -> Result<f64> {
    let region = region.unwrap_or(m.domain_box());
    assert_eq!(region.len(), m.dim());
    let density = volume_form(m);
    let breakpoints: Vec<Vec<f64>> = (0..m.dim())
        .map(|d| {
            let on_stratum = m.strata().iter().any(|s| s.vanishing().contains(&d));
            if on_stratum {
                vec![0.0]
            } else {
                vec![]
            }
        })
        .collect();
    let f = |p: &[f64]| match density.eval(p) {
        EvalResult::Finite(v) => Ok(v),
        other => Err(OddError::InvalidArgument {
            what: format!("volume density failed at {p:?}: {other:?}"),
        }),
    };
    let r = quad::integrate_box(&f, region, &breakpoints, tol)?;
    Ok(r.value)
}

/// Metric divergence of a vector field: (1/sqrt det) d_i (sqrt det X^i).
pub fn divergence(m: &OddMetric, x: &[Expr]) -> Result<Expr> {
    assert_eq!(x.len(), m.dim());
    let rho = volume_form(m);
    let mut acc = Expr::zero();
    for i in 0..m.dim() {
        if x[i].is_const(0.0) {
            continue;
        }
        let term = (rho.clone() * x[i].clone()).simplify().diff(i);
        acc = acc + term;
    }
    let out = Expr::div(acc.simplify(), rho).simplify();
    ensure_budget(&out)?;
    Ok(out)
}

/// Laplace-Beltrami operator: divergence of the gradient.
pub fn laplacian(m: &OddMetric, f: &Expr) -> Result<Expr> {
    let g = gradient(m, f)?;
    divergence(m, &g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::metric::Stratum;

    fn euclid(n: usize) -> OddMetric {
        let coords: Vec<String> = (0..n).map(|i| crate::expr::var_name(i).to_string()).collect();
        OddMetric::diagonal(
            coords,
            vec![Expr::one(); n],
            vec![],
            vec![(-2.0, 2.0); n],
        )
        .unwrap()
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
        OddMetric::new(
            vec!["x".into(), "y".into()],
            vec![
                parse("x^2 + y^2", &names).unwrap(),
                parse("y^2 - x^2", &names).unwrap(),
                parse("x^2 + y^2", &names).unwrap(),
            ],
            vec![Stratum::new(vec![0]), Stratum::new(vec![1])],
            vec![(-5.0, 5.0); 2],
        )
        .unwrap()
    }

    #[test]
    fn euclidean_frame_is_the_identity() {
        let f = orthonormal_frame(&euclid(3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(f.vector(i)[j].is_const(want), "({i},{j}): {}", f.vector(i)[j]);
            }
        }
    }

    #[test]
    fn line_frame_is_one_over_abs_x() {
        let f = orthonormal_frame(&line_x2()).unwrap();
        let e = &f.vector(0)[0];
        assert_eq!(e.eval(&[2.0]).as_finite(), Some(0.5));
        assert_eq!(e.eval(&[-0.5]).as_finite(), Some(2.0));
        assert!(!e.eval(&[0.0]).is_finite());
    }

    #[test]
    fn cross_frame_matches_the_closed_form() {
        let f = orthonormal_frame(&r2_cross()).unwrap();
        for &(x, y) in &[(1.0f64, 2.0f64), (-0.7, 0.3), (2.0, -1.5), (0.4, 0.9)] {
            let p = [x, y];
            let r = (x * x + y * y).sqrt();
            let e1 = [f.vector(0)[0].eval(&p).as_finite().unwrap(),
                      f.vector(0)[1].eval(&p).as_finite().unwrap()];
            assert!((e1[0] - 1.0 / r).abs() < 1e-13);
            assert!(e1[1].abs() < 1e-13);
            let den = 2.0 * (x * x * y * y * (x * x + y * y)).sqrt();
            let e2 = [f.vector(1)[0].eval(&p).as_finite().unwrap(),
                      f.vector(1)[1].eval(&p).as_finite().unwrap()];
            assert!((e2[0] - (x * x - y * y) / den).abs() < 1e-12, "at {p:?}");
            assert!((e2[1] - (x * x + y * y) / den).abs() < 1e-12, "at {p:?}");
        }
    }

    #[test]
    fn frames_are_orthonormal_off_the_locus() {
        for m in [r2_cross(), line_x2()] {
            let f = orthonormal_frame(&m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for _ in 0..25 {
                let p: Vec<f64> = m
                    .domain_box()
                    .iter()
                    .map(|(lo, hi)| rng.gen_range(*lo..*hi))
                    .collect();
                if m.locus_distance(&p) < 1e-3 {
                    continue;
                }
                let rows = f.eval_at(&p).unwrap();
                for i in 0..m.dim() {
                    for j in 0..m.dim() {
                        let want = if i == j { 1.0 } else { 0.0 };
                        let got = m.inner_at(&p, &rows[i], &rows[j]).unwrap();
                        assert!((got - want).abs() < 1e-10, "({i},{j}) at {p:?}: {got}");
                    }
                }
            }
        }
    }

    #[test]
    fn coframe_is_dual_to_the_frame() {
        let m = r2_cross();
        let f = orthonormal_frame(&m).unwrap();
        let theta = f.coframe().unwrap();
        let p = [1.3, -0.8];
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..2 {
                    acc += theta[i][k].eval(&p).as_finite().unwrap()
                        * f.vector(j)[k].eval(&p).as_finite().unwrap();
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((acc - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_on_an_open_set_is_reported() {
        let m = OddMetric::new(
            vec!["x".into(), "y".into()],
            vec![Expr::one(), Expr::zero(), Expr::zero()],
            vec![],
            vec![(-1.0, 1.0); 2],
        )
        .unwrap();
        assert!(matches!(
            orthonormal_frame(&m),
            Err(OddError::DegenerateFrame { index: 1 })
        ));
    }

    #[test]
    fn gradient_in_flat_space() {
        let m = euclid(2);
        let f = parse("x^2 + y^2", &["x", "y"]).unwrap();
        let g = gradient(&m, &f).unwrap();
        assert_eq!(g[0].eval(&[1.5, -0.5]).as_finite(), Some(3.0));
        assert_eq!(g[1].eval(&[1.5, -0.5]).as_finite(), Some(-1.0));
    }

    #[test]
    fn gradient_scales_by_the_inverse_metric() {
        let m = line_x2();
        let g = gradient(&m, &parse("x", &["x"]).unwrap()).unwrap();
        // g^xx = 1/x^2
        assert!((g[0].eval(&[2.0]).as_finite().unwrap() - 0.25).abs() < 1e-15);
        assert!((g[0].eval(&[-0.5]).as_finite().unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn volume_of_the_line_segment() {
        // density |x| on [-1, 1] integrates to 1
        let m = line_x2();
        let v = volume(&m, Some(&[(-1.0, 1.0)]), 1e-10).unwrap();
        assert!((v - 1.0).abs() < 1e-10, "volume {v}");
    }

    #[test]
    fn volume_form_of_the_cross_metric() {
        let m = r2_cross();
        let rho = volume_form(&m);
        // sqrt(det) = 2|x||y|
        for &(x, y) in &[(1.0, 2.0), (-0.5, 0.25), (3.0, -1.0)] {
            let got = rho.eval(&[x, y]).as_finite().unwrap();
            assert!((got - 2.0 * (x * y).abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_and_laplacian_in_flat_space() {
        let m = euclid(2);
        let names = ["x", "y"];
        let x = vec![parse("x", &names).unwrap(), parse("y", &names).unwrap()];
        let d = divergence(&m, &x).unwrap();
        assert_eq!(d.eval(&[0.3, 0.7]).as_finite(), Some(2.0));
        let lap = laplacian(&m, &parse("x^2 + y^2", &names).unwrap()).unwrap();
        assert_eq!(lap.eval(&[0.4, -0.2]).as_finite(), Some(4.0));
        let harmonic = laplacian(&m, &parse("x*y", &names).unwrap()).unwrap();
        assert_eq!(harmonic.eval(&[0.4, -0.2]).as_finite(), Some(0.0));
    }
}
