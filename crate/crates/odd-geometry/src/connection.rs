//! Christoffel symbols and covariant differentiation.
//!
//! The symbols are computed symbolically from the metric and its inverse,
//! so off the degeneracy locus they are exact; on the locus they carry
//! poles, which evaluation reports as such instead of returning garbage.
//! Torsion freeness is structural: the (i,j) slot and the (j,i) slot of a
//! symbol are the same stored expression, so there is nothing numeric to
//! check. Metric compatibility is checked against finite differences of
//! the metric itself.

use crate::error::{OddError, Result};
use crate::expr::{EvalResult, Expr};
use crate::frame::{ensure_budget, inverse_metric};
use crate::metric::{pack_index, OddMetric};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct Connection {
    metric: OddMetric,
    /// gamma[k] is the packed upper triangle of Γ^k_{ij} over (i,j)
    gamma: Vec<Vec<Expr>>,
}

/// Levi-Civita connection of the metric.
pub fn christoffel(m: &OddMetric) -> Result<Connection> {
    let n = m.dim();
    let inv = inverse_metric(m)?;
    // cache the coordinate derivatives of the entries
    let mut dg = vec![vec![Expr::zero(); n * (n + 1) / 2]; n];
    for l in 0..n {
        for i in 0..n {
            for j in i..n {
                dg[l][pack_index(n, i, j)] = m.entry(i, j).diff(l).simplify();
            }
        }
    }
    let entry_d = |l: usize, i: usize, j: usize| -> &Expr {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        &dg[l][pack_index(n, i, j)]
    };

    let mut gamma = Vec::with_capacity(n);
    for k in 0..n {
        let mut row = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                let mut acc = Expr::zero();
                for l in 0..n {
                    if inv[k][l].is_const(0.0) {
                        continue;
                    }
                    let bracket = entry_d(i, j, l).clone() + entry_d(j, i, l).clone()
                        - entry_d(l, i, j).clone();
                    if bracket.is_const(0.0) {
                        continue;
                    }
                    acc = acc + inv[k][l].clone() * bracket;
                }
                let sym = (Expr::num(0.5) * acc).simplify();
                ensure_budget(&sym)?;
                row.push(sym);
            }
        }
        gamma.push(row);
    }
    Ok(Connection {
        metric: m.clone(),
        gamma,
    })
}

impl Connection {
    pub fn metric(&self) -> &OddMetric {
        &self.metric
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    /// Γ^k_{ij}; the (j,i) query returns the identical expression.
    pub fn symbol(&self, k: usize, i: usize, j: usize) -> &Expr {
        let n = self.dim();
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        &self.gamma[k][pack_index(n, i, j)]
    }

    /// All symbols at a point: out[k][i][j]. Fails on the locus where the
    /// symbols have poles.
    pub fn eval_at(&self, p: &[f64]) -> Result<Vec<Vec<Vec<f64>>>> {
        let n = self.dim();
        let mut out = vec![vec![vec![0.0; n]; n]; n];
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    match self.symbol(k, i, j).eval(p) {
                        EvalResult::Finite(v) => {
                            out[k][i][j] = v;
                            out[k][j][i] = v;
                        }
                        other => {
                            return Err(OddError::InvalidArgument {
                                what: format!(
                                    "christoffel symbol ({k},{i},{j}) is singular at {p:?}: {other:?}"
                                ),
                            })
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// The quadratic form Σ Γ^k_{ij} v^i v^j for each k. `Err` marks a
    /// pole (point on the locus).
    pub fn eval_quadratic(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for k in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                for j in i..n {
                    let s = self.symbol(k, i, j);
                    if s.is_const(0.0) {
                        continue;
                    }
                    match s.eval(p) {
                        EvalResult::Finite(g) => {
                            let w = if i == j { 1.0 } else { 2.0 };
                            acc += w * g * v[i] * v[j];
                        }
                        other => {
                            return Err(OddError::InvalidArgument {
                                what: format!("singular symbol at {p:?}: {other:?}"),
                            })
                        }
                    }
                }
            }
            out[k] = acc;
        }
        Ok(out)
    }

    /// Covariant derivative of the field `y` along the field `x`, both in
    /// coordinate components: (∇_x y)^k = x^i ∂_i y^k + Γ^k_{ij} x^i y^j.
    pub fn covariant_derivative(&self, x: &[Expr], y: &[Expr]) -> Result<Vec<Expr>> {
        let n = self.dim();
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let mut acc = Expr::zero();
            for i in 0..n {
                if x[i].is_const(0.0) {
                    continue;
                }
                let dk = y[k].diff(i);
                if !dk.is_const(0.0) {
                    acc = acc + x[i].clone() * dk;
                }
                for j in 0..n {
                    let s = self.symbol(k, i, j);
                    if s.is_const(0.0) || y[j].is_const(0.0) {
                        continue;
                    }
                    acc = acc + s.clone() * x[i].clone() * y[j].clone();
                }
            }
            let e = acc.simplify();
            ensure_budget(&e)?;
            out.push(e);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct ConnectionCheck {
    /// Sample points that entered the finite-difference comparison.
    pub points: usize,
    /// Worst relative defect of ∂_k g_ij against the Γ reconstruction.
    pub max_metric_defect: f64,
    pub tol: f64,
    pub pass: bool,
    /// Torsion vanishes by shared storage of the (i,j) and (j,i) slots.
    pub torsion_structurally_zero: bool,
}

/// Check metric compatibility numerically: central differences of g
/// against ∂_k g_ij = Γ^l_{ki} g_lj + Γ^l_{kj} g_li at off-locus samples.
pub fn verify_connection(
    conn: &Connection,
    samples: usize,
    seed: u64,
    fd_step: f64,
    tol: f64,
) -> Result<ConnectionCheck> {
    let m = conn.metric();
    let n = m.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = 0;
    let mut worst: f64 = 0.0;

    'outer: while used < samples {
        let p: Vec<f64> = m
            .domain_box()
            .iter()
            .map(|(lo, hi)| rng.gen_range(*lo..*hi))
            .collect();
        // stay away from the locus and from the box walls (central steps)
        if m.locus_distance(&p) < 0.15 {
            continue;
        }
        if p.iter().zip(m.domain_box()).any(|(x, (lo, hi))| {
            *x - fd_step * 2.0 < *lo || *x + fd_step * 2.0 > *hi
        }) {
            continue;
        }
        let gam = match conn.eval_at(&p) {
            Ok(g) => g,
            Err(_) => continue 'outer,
        };
        let g0 = m.matrix_at(&p)?;
        for k in 0..n {
            let mut pp = p.clone();
            pp[k] += fd_step;
            let gp = m.matrix_at(&pp)?;
            pp[k] = p[k] - fd_step;
            let gm = m.matrix_at(&pp)?;
            for i in 0..n {
                for j in 0..n {
                    let fd = (gp[(i, j)] - gm[(i, j)]) / (2.0 * fd_step);
                    let mut formula = 0.0;
                    for l in 0..n {
                        formula += gam[l][k][i] * g0[(l, j)] + gam[l][k][j] * g0[(l, i)];
                    }
                    let defect = (fd - formula).abs() / 1.0_f64.max(formula.abs());
                    worst = worst.max(defect);
                }
            }
        }
        used += 1;
    }

    Ok(ConnectionCheck {
        points: used,
        max_metric_defect: worst,
        tol,
        pass: worst <= tol,
        torsion_structurally_zero: true,
    })
}

/// Polynomial extrapolation to node 0 from samples at the given positive
/// nodes (Neville's tableau). Returns the limit and an error estimate
/// from the last correction.
pub fn neville_from_samples(nodes: &[f64], values: &[f64]) -> (f64, f64) {
    let n = nodes.len();
    assert!(n >= 2, "need at least two nodes to extrapolate");
    assert_eq!(n, values.len());
    let mut tab = values.to_vec();
    let mut prev_best = tab[0];
    let mut correction = f64::INFINITY;
    for level in 1..n {
        for i in 0..(n - level) {
            tab[i] = (nodes[i + level] * tab[i] - nodes[i] * tab[i + 1])
                / (nodes[i + level] - nodes[i]);
        }
        correction = (tab[0] - prev_best).abs();
        prev_best = tab[0];
    }
    (tab[0], correction)
}

/// Polynomial extrapolation of f to node 0 through the given positive
/// nodes.
pub fn neville_limit(f: &dyn Fn(f64) -> Result<f64>, nodes: &[f64]) -> Result<(f64, f64)> {
    let mut vals = Vec::with_capacity(nodes.len());
    for &h in nodes {
        vals.push(f(h)?);
    }
    Ok(neville_from_samples(nodes, &vals))
}

/// Extrapolate f(h) to h = 0 from samples at h, h/10, h/100, h/1000.
pub fn one_sided_limit(f: &dyn Fn(f64) -> Result<f64>, h0: f64) -> Result<(f64, f64)> {
    neville_limit(f, &[h0, h0 / 10.0, h0 / 100.0, h0 / 1000.0])
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

    fn euclid2() -> OddMetric {
        OddMetric::diagonal(
            vec!["x".into(), "y".into()],
            vec![Expr::one(), Expr::one()],
            vec![],
            vec![(-2.0, 2.0); 2],
        )
        .unwrap()
    }

    #[test]
    fn line_symbol_is_one_over_x() {
        let c = christoffel(&line_x2()).unwrap();
        let s = c.symbol(0, 0, 0);
        for &x in &[0.25, 0.5, 2.0, -1.5] {
            let got = s.eval(&[x]).as_finite().unwrap();
            assert!((got - 1.0 / x).abs() <= 1e-12 * (1.0 / x).abs());
        }
        assert!(!s.eval(&[0.0]).is_finite());
    }

    #[test]
    fn flat_symbols_vanish() {
        let c = christoffel(&euclid2()).unwrap();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert!(c.symbol(k, i, j).is_const(0.0));
                }
            }
        }
    }

    #[test]
    fn covariant_derivatives_of_the_line_frame() {
        let m = line_x2();
        let c = christoffel(&m).unwrap();
        let f = crate::frame::orthonormal_frame(&m).unwrap();
        let ddx = vec![Expr::one()];
        let e = f.vector(0).to_vec(); // (1/|x|) d/dx

        let dxdx = c.covariant_derivative(&ddx, &ddx).unwrap();
        let edx = c.covariant_derivative(&e, &ddx).unwrap();
        let dxe = c.covariant_derivative(&ddx, &e).unwrap();
        let ee = c.covariant_derivative(&e, &e).unwrap();

        for &x in &[0.5, -0.5, 1.5, -1.5] {
            let p = [x];
            assert!((dxdx[0].eval(&p).as_finite().unwrap() - 1.0 / x).abs() < 1e-12);
            assert!(
                (edx[0].eval(&p).as_finite().unwrap() - 1.0 / (x * x.abs())).abs() < 1e-12
            );
            assert!(dxe[0].eval(&p).as_finite().unwrap().abs() < 1e-12);
            assert!(ee[0].eval(&p).as_finite().unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn metric_compatibility_holds_on_samples() {
        for m in [euclid2(), line_x2(), r2_cross()] {
            let c = christoffel(&m).unwrap();
            let r = verify_connection(&c, 25, 11, 1e-5, 1e-5).unwrap();
            assert!(r.pass, "defect {}", r.max_metric_defect);
            assert!(r.torsion_structurally_zero);
        }
    }

    #[test]
    fn torsion_queries_share_storage() {
        let c = christoffel(&r2_cross()).unwrap();
        assert!(std::ptr::eq(c.symbol(0, 0, 1), c.symbol(0, 1, 0)));
    }

    #[test]
    fn quadratic_form_matches_direct_sum() {
        let c = christoffel(&r2_cross()).unwrap();
        let p = [1.2, -0.7];
        let v = [0.3, 0.9];
        let gam = c.eval_at(&p).unwrap();
        let q = c.eval_quadratic(&p, &v).unwrap();
        for k in 0..2 {
            let mut want = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    want += gam[k][i][j] * v[i] * v[j];
                }
            }
            assert!((q[k] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn extrapolation_recovers_a_limit() {
        // f(h) = 3 - 2h + h^2 has limit 3
        let f = |h: f64| Ok(3.0 - 2.0 * h + h * h);
        let (v, err) = one_sided_limit(&f, 1e-2).unwrap();
        assert!((v - 3.0).abs() < 1e-12, "value {v}, err {err}");
    }
}
