//! Stack-machine compilation of expression trees.
//!
//! The integrators evaluate the same right-hand sides millions of times;
//! walking the tree dominates. Compiling to a postfix instruction tape
//! keeps the guarded evaluation semantics (identical tags, identical
//! preorder node indices) while evaluating on a flat loop.

use super::{EvalResult, Expr};

#[derive(Clone, Debug)]
enum Instr {
    Const(f64),
    Var { index: usize, node: u32 },
    Add,
    Sub,
    Mul,
    Div { node: u32 },
    IntPow { exp: i32, node: u32 },
    Sqrt { node: u32 },
    Abs,
    Check { node: u32 },
}

#[derive(Clone, Debug)]
pub struct Program {
    instrs: Vec<Instr>,
    stack_need: usize,
}

impl Program {
    pub fn compile(e: &Expr) -> Program {
        let mut instrs = Vec::with_capacity(e.node_count());
        let mut next = 0u32;
        emit(e, &mut instrs, &mut next);
        let mut depth: usize = 0;
        let mut need: usize = 0;
        for i in &instrs {
            match i {
                Instr::Const(_) | Instr::Var { .. } => {
                    depth += 1;
                    need = need.max(depth);
                }
                Instr::Add | Instr::Sub | Instr::Mul | Instr::Div { .. } => depth -= 1,
                _ => {}
            }
        }
        Program { instrs, stack_need: need }
    }

    /// Evaluate reusing `stack` as scratch space.
    pub fn eval_with(&self, point: &[f64], eps: f64, stack: &mut Vec<f64>) -> EvalResult {
        stack.clear();
        stack.reserve(self.stack_need);
        for instr in &self.instrs {
            match instr {
                Instr::Const(c) => stack.push(*c),
                Instr::Var { index, node } => {
                    let v = point[*index];
                    if v.is_nan() {
                        return EvalResult::Indeterminate(*node as usize);
                    }
                    if v.is_infinite() {
                        return EvalResult::Pole(*node as usize);
                    }
                    stack.push(v);
                }
                Instr::Add => {
                    let b = stack.pop().unwrap();
                    *stack.last_mut().unwrap() += b;
                }
                Instr::Sub => {
                    let b = stack.pop().unwrap();
                    *stack.last_mut().unwrap() -= b;
                }
                Instr::Mul => {
                    let b = stack.pop().unwrap();
                    *stack.last_mut().unwrap() *= b;
                }
                Instr::Div { node } => {
                    let den = stack.pop().unwrap();
                    let num = stack.last_mut().unwrap();
                    if den.abs() < eps {
                        return if num.abs() < eps {
                            EvalResult::Indeterminate(*node as usize)
                        } else {
                            EvalResult::Pole(*node as usize)
                        };
                    }
                    *num /= den;
                    if num.is_infinite() {
                        return EvalResult::Pole(*node as usize);
                    }
                }
                Instr::IntPow { exp, node } => {
                    let v = stack.last_mut().unwrap();
                    if *exp < 0 {
                        let den = v.powi(-exp);
                        if den.abs() < eps {
                            return EvalResult::Pole(*node as usize);
                        }
                        *v = 1.0 / den;
                    } else {
                        *v = v.powi(*exp);
                    }
                    if v.is_infinite() {
                        return EvalResult::Pole(*node as usize);
                    }
                }
                Instr::Sqrt { node } => {
                    let v = stack.last_mut().unwrap();
                    if *v < -eps {
                        return EvalResult::Indeterminate(*node as usize);
                    }
                    *v = v.max(0.0).sqrt();
                }
                Instr::Abs => {
                    let v = stack.last_mut().unwrap();
                    *v = v.abs();
                }
                Instr::Check { node } => {
                    let v = *stack.last().unwrap();
                    if v.is_nan() {
                        return EvalResult::Indeterminate(*node as usize);
                    }
                    if v.is_infinite() {
                        return EvalResult::Pole(*node as usize);
                    }
                }
            }
        }
        debug_assert_eq!(stack.len(), 1);
        let v = stack[0];
        if v.is_nan() {
            EvalResult::Indeterminate(0)
        } else if v.is_infinite() {
            EvalResult::Pole(0)
        } else {
            EvalResult::Finite(v)
        }
    }

    pub fn eval(&self, point: &[f64], eps: f64) -> EvalResult {
        let mut stack = Vec::with_capacity(self.stack_need);
        self.eval_with(point, eps, &mut stack)
    }
}

fn emit(e: &Expr, out: &mut Vec<Instr>, next: &mut u32) {
    let node = *next;
    *next += 1;
    match e {
        Expr::Const(c) => out.push(Instr::Const(*c)),
        Expr::Var(i) => out.push(Instr::Var { index: *i, node }),
        Expr::Add(a, b) => {
            emit(a, out, next);
            emit(b, out, next);
            out.push(Instr::Add);
            out.push(Instr::Check { node });
        }
        Expr::Sub(a, b) => {
            emit(a, out, next);
            emit(b, out, next);
            out.push(Instr::Sub);
            out.push(Instr::Check { node });
        }
        Expr::Mul(a, b) => {
            emit(a, out, next);
            emit(b, out, next);
            out.push(Instr::Mul);
            out.push(Instr::Check { node });
        }
        Expr::Div(a, b) => {
            emit(a, out, next);
            emit(b, out, next);
            out.push(Instr::Div { node });
        }
        Expr::IntPow(f, n) => {
            emit(f, out, next);
            out.push(Instr::IntPow { exp: *n, node });
        }
        Expr::Sqrt(f) => {
            emit(f, out, next);
            out.push(Instr::Sqrt { node });
        }
        Expr::Abs(f) => {
            emit(f, out, next);
            out.push(Instr::Abs);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, EPS_POLE};

    #[test]
    fn program_matches_tree_evaluation() {
        let srcs = [
            "(x^2 - y^2)/(2*sqrt(x^2*y^2*(x^2+y^2)))",
            "sqrt(abs(x*y)) + x^-3",
            "1/x",
            "x/x",
        ];
        let points: [[f64; 2]; 5] = [
            [1.0, 1.0],
            [0.5, -2.0],
            [0.0, 1.0],
            [0.0, 0.0],
            [-3.0, 2.0],
        ];
        for src in srcs {
            let e = parse(src, &["x", "y"]).unwrap();
            let prog = Program::compile(&e);
            for p in &points {
                assert_eq!(
                    prog.eval(p, EPS_POLE),
                    e.eval(p),
                    "mismatch on {src} at {p:?}"
                );
            }
        }
    }
}
