//! Closed expression trees for the function class the metrics live in:
//! rational expressions over chart coordinates, closed under `sqrt` and
//! `abs` (positive branches only).
//!
//! Differentiation is exact on the tree. Evaluation is total: division by
//! a (numerically) vanishing denominator and square roots of negative
//! arguments do not panic or return NaN, they return tagged
//! [`EvalResult::Pole`] / [`EvalResult::Indeterminate`] values that
//! downstream integrators treat as data.

mod parse;
mod program;
mod simplify;

pub use parse::{parse, ParseError};
pub use program::Program;
pub use simplify::simplify;

use std::fmt;
use std::sync::Arc;

/// Guard width for evaluation: denominators smaller than this in absolute
/// value are treated as vanishing, square-root arguments in `[-EPS_POLE, 0)`
/// are clamped to zero.
pub const EPS_POLE: f64 = 1e-12;

#[derive(Clone, PartialEq)]
pub enum Expr {
    /// Finite constant. Constructors reject NaN and infinities.
    Const(f64),
    /// Chart coordinate by index (0-based).
    Var(usize),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    /// Integer power with a fixed literal exponent (may be negative).
    IntPow(Arc<Expr>, i32),
    Sqrt(Arc<Expr>),
    Abs(Arc<Expr>),
}

/// Outcome of evaluating an expression at a point.
///
/// The `usize` payload is the preorder index of the subexpression that
/// produced the tag; [`Expr::subexpr`] resolves it for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvalResult {
    Finite(f64),
    /// A denominator vanished under a non-vanishing numerator.
    Pole(usize),
    /// 0/0, sqrt of a negative argument, or a NaN intermediate.
    Indeterminate(usize),
}

impl EvalResult {
    pub fn as_finite(self) -> Option<f64> {
        match self {
            EvalResult::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, EvalResult::Finite(_))
    }
}

impl Expr {
    pub fn num(c: f64) -> Expr {
        assert!(c.is_finite(), "expression constants must be finite, got {c}");
        Expr::Const(c)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Arc::new(a), Arc::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Sub(Arc::new(a), Arc::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Arc::new(a), Arc::new(b))
    }

    /// Panics if `b` is the literal zero constant; a vanishing denominator
    /// that is not literally zero is fine and evaluates to a pole.
    pub fn div(a: Expr, b: Expr) -> Expr {
        assert!(
            !matches!(b, Expr::Const(c) if c == 0.0),
            "literal zero denominator"
        );
        Expr::Div(Arc::new(a), Arc::new(b))
    }

    pub fn powi(self, n: i32) -> Expr {
        Expr::IntPow(Arc::new(self), n)
    }

    pub fn sqrt(self) -> Expr {
        Expr::Sqrt(Arc::new(self))
    }

    pub fn abs(self) -> Expr {
        Expr::Abs(Arc::new(self))
    }

    pub fn neg(self) -> Expr {
        Expr::mul(Expr::Const(-1.0), self)
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.node_count() + b.node_count()
            }
            Expr::IntPow(f, _) | Expr::Sqrt(f) | Expr::Abs(f) => 1 + f.node_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.depth().max(b.depth())
            }
            Expr::IntPow(f, _) | Expr::Sqrt(f) | Expr::Abs(f) => 1 + f.depth(),
        }
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
            Expr::IntPow(f, _) | Expr::Sqrt(f) | Expr::Abs(f) => f.max_var(),
        }
    }

    pub fn uses_var(&self, i: usize) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(j) => *j == i,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.uses_var(i) || b.uses_var(i)
            }
            Expr::IntPow(f, _) | Expr::Sqrt(f) | Expr::Abs(f) => f.uses_var(i),
        }
    }

    pub fn is_const(&self, c: f64) -> bool {
        matches!(self, Expr::Const(v) if *v == c)
    }

    /// Resolve a preorder index (as carried by [`EvalResult`]) to the
    /// subexpression it names.
    pub fn subexpr(&self, preorder: usize) -> Option<&Expr> {
        fn walk<'a>(e: &'a Expr, target: usize, next: &mut usize) -> Option<&'a Expr> {
            let id = *next;
            *next += 1;
            if id == target {
                return Some(e);
            }
            match e {
                Expr::Const(_) | Expr::Var(_) => None,
                Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                    walk(a, target, next).or_else(|| walk(b, target, next))
                }
                Expr::IntPow(f, _) | Expr::Sqrt(f) | Expr::Abs(f) => walk(f, target, next),
            }
        }
        let mut next = 0;
        walk(self, preorder, &mut next)
    }

    /// Evaluate at `point` with the default pole guard.
    pub fn eval(&self, point: &[f64]) -> EvalResult {
        self.eval_guarded(point, EPS_POLE)
    }

    /// Evaluate with an explicit pole guard `eps`.
    pub fn eval_guarded(&self, point: &[f64], eps: f64) -> EvalResult {
        let mut next = 0;
        eval_rec(self, point, eps, &mut next)
    }

    /// Exact derivative with respect to coordinate `var`. The result is not
    /// simplified; pass it through [`simplify`] when size matters.
    pub fn diff(&self, var: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(i) => {
                if *i == var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Add(a, b) => Expr::add(a.diff(var), b.diff(var)),
            Expr::Sub(a, b) => Expr::sub(a.diff(var), b.diff(var)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.diff(var), (**b).clone()),
                Expr::mul((**a).clone(), b.diff(var)),
            ),
            Expr::Div(a, b) => Expr::div(
                Expr::sub(
                    Expr::mul(a.diff(var), (**b).clone()),
                    Expr::mul((**a).clone(), b.diff(var)),
                ),
                (**b).clone().powi(2),
            ),
            Expr::IntPow(f, n) => {
                // d f^n = n f^(n-1) f'
                Expr::mul(
                    Expr::mul(Expr::num(f64::from(*n)), (**f).clone().powi(n - 1)),
                    f.diff(var),
                )
            }
            // d sqrt(f) = f' / (2 sqrt(f)); the positive branch throughout.
            Expr::Sqrt(f) => Expr::div(
                f.diff(var),
                Expr::mul(Expr::num(2.0), (**f).clone().sqrt()),
            ),
            // d |f| = f f' / |f|, undefined exactly where f vanishes.
            Expr::Abs(f) => Expr::div(
                Expr::mul((**f).clone(), f.diff(var)),
                (**f).clone().abs(),
            ),
        }
    }

    /// Replace every `Var(i)` by `subs[i]`. Used for restricting metrics to
    /// strata and for composing metric entries with symbolic curves.
    pub fn substitute(&self, subs: &[Expr]) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(i) => subs[*i].clone(),
            Expr::Add(a, b) => Expr::add(a.substitute(subs), b.substitute(subs)),
            Expr::Sub(a, b) => Expr::sub(a.substitute(subs), b.substitute(subs)),
            Expr::Mul(a, b) => Expr::mul(a.substitute(subs), b.substitute(subs)),
            Expr::Div(a, b) => Expr::Div(
                Arc::new(a.substitute(subs)),
                Arc::new(b.substitute(subs)),
            ),
            Expr::IntPow(f, n) => f.substitute(subs).powi(*n),
            Expr::Sqrt(f) => f.substitute(subs).sqrt(),
            Expr::Abs(f) => f.substitute(subs).abs(),
        }
    }

    pub fn simplify(&self) -> Expr {
        simplify(self)
    }

    pub fn compile(&self) -> Program {
        Program::compile(self)
    }
}

fn eval_rec(e: &Expr, point: &[f64], eps: f64, next: &mut usize) -> EvalResult {
    let id = *next;
    *next += 1;
    macro_rules! finite {
        ($sub:expr) => {
            match eval_rec($sub, point, eps, next) {
                EvalResult::Finite(v) => v,
                other => return other,
            }
        };
    }
    let v = match e {
        Expr::Const(c) => *c,
        Expr::Var(i) => point[*i],
        Expr::Add(a, b) => finite!(a) + finite!(b),
        Expr::Sub(a, b) => finite!(a) - finite!(b),
        Expr::Mul(a, b) => finite!(a) * finite!(b),
        Expr::Div(a, b) => {
            let num = finite!(a);
            let den = finite!(b);
            if den.abs() < eps {
                return if num.abs() < eps {
                    EvalResult::Indeterminate(id)
                } else {
                    EvalResult::Pole(id)
                };
            }
            num / den
        }
        Expr::IntPow(f, n) => {
            let v = finite!(f);
            if *n < 0 {
                let den = v.powi(-n);
                if den.abs() < eps {
                    return EvalResult::Pole(id);
                }
                1.0 / den
            } else {
                v.powi(*n)
            }
        }
        Expr::Sqrt(f) => {
            let v = finite!(f);
            if v < -eps {
                return EvalResult::Indeterminate(id);
            }
            v.max(0.0).sqrt()
        }
        Expr::Abs(f) => finite!(f).abs(),
    };
    if v.is_nan() {
        EvalResult::Indeterminate(id)
    } else if v.is_infinite() {
        EvalResult::Pole(id)
    } else {
        EvalResult::Finite(v)
    }
}

/// Total order on expressions used to pick canonical factor orderings in
/// the simplifier. It is structural, not semantic.
pub(crate) fn cmp_expr(a: &Expr, b: &Expr) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    fn rank(e: &Expr) -> u8 {
        match e {
            Expr::Const(_) => 0,
            Expr::Var(_) => 1,
            Expr::Abs(_) => 2,
            Expr::Sqrt(_) => 3,
            Expr::IntPow(..) => 4,
            Expr::Add(..) => 5,
            Expr::Sub(..) => 6,
            Expr::Mul(..) => 7,
            Expr::Div(..) => 8,
        }
    }
    match rank(a).cmp(&rank(b)) {
        Ordering::Equal => {}
        other => return other,
    }
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => x.total_cmp(y),
        (Expr::Var(x), Expr::Var(y)) => x.cmp(y),
        (Expr::Abs(x), Expr::Abs(y)) | (Expr::Sqrt(x), Expr::Sqrt(y)) => cmp_expr(x, y),
        (Expr::IntPow(x, n), Expr::IntPow(y, m)) => {
            cmp_expr(x, y).then(n.cmp(m))
        }
        (Expr::Add(x1, x2), Expr::Add(y1, y2))
        | (Expr::Sub(x1, x2), Expr::Sub(y1, y2))
        | (Expr::Mul(x1, x2), Expr::Mul(y1, y2))
        | (Expr::Div(x1, x2), Expr::Div(y1, y2)) => {
            cmp_expr(x1, y1).then_with(|| cmp_expr(x2, y2))
        }
        _ => unreachable!(),
    }
}

// Operator overloads make frame and fixture construction readable.
macro_rules! impl_binop {
    ($trait:ident, $method:ident, $ctor:ident) => {
        impl std::ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$ctor(self, rhs)
            }
        }
        impl std::ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::$ctor(self.clone(), rhs.clone())
            }
        }
    };
}
impl_binop!(Add, add, add);
impl_binop!(Sub, sub, sub);
impl_binop!(Mul, mul, mul);
impl_binop!(Div, div, div);

// Precedence bands for the printer. `^` binds tightest, then unary minus
// (printed only for products with a literal -1 head), then `*` `/`, then
// `+` `-`.
fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 10,
        Expr::Mul(a, _) if a.is_const(-1.0) => 15,
        Expr::Mul(..) | Expr::Div(..) => 20,
        Expr::IntPow(..) => 30,
        _ => 50,
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, f)
    }
}

fn write_child(e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if precedence(e) < min_prec {
        write!(f, "(")?;
        write_expr(e, f)?;
        write!(f, ")")
    } else {
        write_expr(e, f)
    }
}

fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Const(c) => {
            if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                // The leading minus re-parses through the unary-minus rule.
                write!(f, "-{}", -c)
            } else {
                write!(f, "{c}")
            }
        }
        Expr::Var(i) => write!(f, "{}", var_name(*i)),
        Expr::Add(a, b) => {
            write_child(a, 10, f)?;
            write!(f, " + ")?;
            write_child(b, 11, f)
        }
        Expr::Sub(a, b) => {
            write_child(a, 10, f)?;
            write!(f, " - ")?;
            write_child(b, 11, f)
        }
        Expr::Mul(a, b) if a.is_const(-1.0) => {
            write!(f, "-")?;
            write_child(b, 16, f)
        }
        Expr::Mul(a, b) => {
            write_child(a, 20, f)?;
            write!(f, " * ")?;
            write_child(b, 21, f)
        }
        Expr::Div(a, b) => {
            write_child(a, 20, f)?;
            write!(f, " / ")?;
            write_child(b, 21, f)
        }
        Expr::IntPow(base, n) => {
            write_child(base, 31, f)?;
            write!(f, "^{n}")
        }
        Expr::Sqrt(x) => write!(f, "sqrt({x})"),
        Expr::Abs(x) => write!(f, "abs({x})"),
    }
}

/// Canonical coordinate names used by the printer: x, y, z, w, then x5, x6, …
pub fn var_name(i: usize) -> String {
    match i {
        0 => "x".into(),
        1 => "y".into(),
        2 => "z".into(),
        3 => "w".into(),
        _ => format!("x{}", i + 1),
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::var(0)
    }

    #[test]
    fn eval_basic_arithmetic() {
        // (x^2+y^2)*(x^2+y^2) - (y^2-x^2)*(y^2-x^2) at (1,2) is 16
        let e = parse("(x^2+y^2)*(x^2+y^2) - (y^2-x^2)*(y^2-x^2)", &["x", "y"]).unwrap();
        assert_eq!(e.eval(&[1.0, 2.0]), EvalResult::Finite(16.0));
    }

    #[test]
    fn division_guards() {
        let pole = Expr::div(Expr::one(), x());
        assert!(matches!(pole.eval(&[0.0]), EvalResult::Pole(_)));
        assert_eq!(pole.eval(&[2.0]), EvalResult::Finite(0.5));

        let indet = Expr::div(x(), x());
        assert!(matches!(indet.eval(&[0.0]), EvalResult::Indeterminate(_)));
        assert_eq!(indet.eval(&[3.0]), EvalResult::Finite(1.0));

        // denominator within the guard but numerator above it: pole
        assert!(matches!(pole.eval(&[1e-13]), EvalResult::Pole(_)));
    }

    #[test]
    fn sqrt_clamps_roundoff_but_rejects_negatives() {
        let e = x().sqrt();
        assert_eq!(e.eval(&[-1e-13]), EvalResult::Finite(0.0));
        assert!(matches!(e.eval(&[-1.0]), EvalResult::Indeterminate(_)));
        assert_eq!(e.eval(&[4.0]), EvalResult::Finite(2.0));
    }

    #[test]
    fn negative_intpow_is_a_pole_at_zero() {
        let e = x().powi(-2);
        assert!(matches!(e.eval(&[0.0]), EvalResult::Pole(_)));
        assert_eq!(e.eval(&[2.0]), EvalResult::Finite(0.25));
    }

    #[test]
    fn pole_location_points_at_offending_subexpression() {
        // abs(1/x): the division is preorder node 1
        let e = Expr::div(Expr::one(), x()).abs();
        match e.eval(&[0.0]) {
            EvalResult::Pole(id) => {
                let sub = e.subexpr(id).unwrap();
                assert!(matches!(sub, Expr::Div(..)));
            }
            other => panic!("expected pole, got {other:?}"),
        }
    }

    #[test]
    fn derivative_of_sqrt() {
        let d = x().sqrt().diff(0);
        assert_eq!(d.eval(&[4.0]), EvalResult::Finite(0.25));
        // one-sided blowup at zero shows up as a pole, not NaN
        assert!(!d.eval(&[0.0]).is_finite());
    }

    #[test]
    fn derivative_of_abs_is_sign_off_zero() {
        let d = x().abs().diff(0);
        assert_eq!(d.eval(&[-3.0]), EvalResult::Finite(-1.0));
        assert_eq!(d.eval(&[5.0]), EvalResult::Finite(1.0));
        assert!(!d.eval(&[0.0]).is_finite());
    }

    #[test]
    fn substitute_composes() {
        // g(x) = x^2, substitute x -> t+1
        let g = x().powi(2);
        let t_plus_1 = Expr::add(Expr::var(0), Expr::one());
        let comp = g.substitute(&[t_plus_1]);
        assert_eq!(comp.eval(&[2.0]), EvalResult::Finite(9.0));
    }

    #[test]
    fn display_roundtrips_structure() {
        let e = parse("-x^2 + 3*(y - 2)/x", &["x", "y"]).unwrap();
        let printed = e.to_string();
        let back = parse(&printed, &["x", "y"]).unwrap();
        assert_eq!(back, e);
    }
}
