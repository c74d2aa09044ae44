//! Numeric evaluation: a direct tree walk plus a compiled stack form for
//! inner integration loops.

use std::collections::HashMap;

use num_traits::ToPrimitive;
use thiserror::Error;

use super::expr::{Expression, Node, UnaryFn};
use super::symbol::Symbol;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unbound symbol `{0}`")]
    UnboundSymbol(Symbol),
    #[error("ln of non-positive value {0}")]
    LogNonPositive(f64),
    #[error("fractional power of negative base {base}")]
    FractionalPowerOfNegative { base: f64 },
    #[error("zero raised to a negative power")]
    ZeroToNegativePower,
}

fn eval_pow(base: f64, exp_int: Option<i32>, exp_f: f64) -> Result<f64, EvalError> {
    match exp_int {
        Some(n) => {
            if base == 0.0 && n < 0 {
                Err(EvalError::ZeroToNegativePower)
            } else {
                Ok(base.powi(n))
            }
        }
        None => {
            if base < 0.0 {
                Err(EvalError::FractionalPowerOfNegative { base })
            } else if base == 0.0 && exp_f < 0.0 {
                Err(EvalError::ZeroToNegativePower)
            } else {
                Ok(base.powf(exp_f))
            }
        }
    }
}

fn eval_func(f: UnaryFn, x: f64) -> Result<f64, EvalError> {
    match f {
        UnaryFn::Sin => Ok(x.sin()),
        UnaryFn::Cos => Ok(x.cos()),
        UnaryFn::Exp => Ok(x.exp()),
        UnaryFn::Ln => {
            if x <= 0.0 {
                Err(EvalError::LogNonPositive(x))
            } else {
                Ok(x.ln())
            }
        }
        UnaryFn::Sqrt => {
            if x < 0.0 {
                Err(EvalError::FractionalPowerOfNegative { base: x })
            } else {
                Ok(x.sqrt())
            }
        }
    }
}

impl Expression {
    /// Evaluate under a symbol binding. Standard floating-point semantics;
    /// domain violations and unbound symbols are reported as errors.
    pub fn evaluate<F>(&self, bind: &F) -> Result<f64, EvalError>
    where
        F: Fn(&Symbol) -> Option<f64>,
    {
        match self.node() {
            Node::Constant(c) => Ok(c.to_f64().unwrap_or_else(|| {
                // Out-of-range exact rationals saturate like their parts.
                let n = c.numer().to_f64().unwrap_or(f64::NAN);
                let d = c.denom().to_f64().unwrap_or(f64::NAN);
                n / d
            })),
            Node::Symbol(s) => bind(s).ok_or_else(|| EvalError::UnboundSymbol(s.clone())),
            Node::Sum(ts) => {
                let mut acc = 0.0;
                for t in ts {
                    acc += t.evaluate(bind)?;
                }
                Ok(acc)
            }
            Node::Product(fs) => {
                let mut acc = 1.0;
                for f in fs {
                    acc *= f.evaluate(bind)?;
                }
                Ok(acc)
            }
            Node::Power(b, e) => {
                let base = b.evaluate(bind)?;
                let exp_int = if e.is_integer() {
                    e.to_integer().to_i32()
                } else {
                    None
                };
                eval_pow(base, exp_int, e.to_f64().unwrap_or(f64::NAN))
            }
            Node::Func(f, a) => eval_func(*f, a.evaluate(bind)?),
        }
    }

    /// Evaluate under an explicit map binding.
    pub fn evaluate_map(&self, bindings: &HashMap<Symbol, f64>) -> Result<f64, EvalError> {
        self.evaluate(&|s: &Symbol| bindings.get(s).copied())
    }

    /// Compile against a slot table for repeated evaluation. Every symbol
    /// in the expression must be present in `slot_of`.
    pub fn compile<F>(&self, slot_of: &F) -> Result<CompiledExpr, EvalError>
    where
        F: Fn(&Symbol) -> Option<usize>,
    {
        let mut ops = Vec::new();
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        compile_node(self, slot_of, &mut ops, &mut depth, &mut max_depth)?;
        Ok(CompiledExpr {
            ops,
            stack_size: max_depth,
        })
    }
}

#[derive(Debug, Clone)]
enum Op {
    Const(f64),
    Load(u32),
    Add,
    Mul,
    PowInt(i32),
    PowFrac(f64),
    Sin,
    Cos,
    Exp,
    Ln,
}

/// A flattened, slot-addressed form of an expression. Evaluation performs
/// no allocation beyond the caller-provided stack.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    ops: Vec<Op>,
    stack_size: usize,
}

fn compile_node<F>(
    e: &Expression,
    slot_of: &F,
    ops: &mut Vec<Op>,
    depth: &mut usize,
    max_depth: &mut usize,
) -> Result<(), EvalError>
where
    F: Fn(&Symbol) -> Option<usize>,
{
    let push = |ops: &mut Vec<Op>, op: Op, depth: &mut usize, max_depth: &mut usize| {
        let delta: isize = match op {
            Op::Const(_) | Op::Load(_) => 1,
            Op::Add | Op::Mul => -1,
            _ => 0,
        };
        ops.push(op);
        *depth = depth.checked_add_signed(delta).expect("stack underflow");
        *max_depth = (*max_depth).max(*depth);
    };
    match e.node() {
        Node::Constant(c) => {
            let v = c.to_f64().unwrap_or(f64::NAN);
            push(ops, Op::Const(v), depth, max_depth);
        }
        Node::Symbol(s) => {
            let slot = slot_of(s).ok_or_else(|| EvalError::UnboundSymbol(s.clone()))?;
            push(ops, Op::Load(slot as u32), depth, max_depth);
        }
        Node::Sum(ts) => {
            for (i, t) in ts.iter().enumerate() {
                compile_node(t, slot_of, ops, depth, max_depth)?;
                if i > 0 {
                    push(ops, Op::Add, depth, max_depth);
                }
            }
        }
        Node::Product(fs) => {
            for (i, f) in fs.iter().enumerate() {
                compile_node(f, slot_of, ops, depth, max_depth)?;
                if i > 0 {
                    push(ops, Op::Mul, depth, max_depth);
                }
            }
        }
        Node::Power(b, exp) => {
            compile_node(b, slot_of, ops, depth, max_depth)?;
            let op = match exp.is_integer().then(|| exp.to_integer().to_i32()).flatten() {
                Some(n) => Op::PowInt(n),
                None => Op::PowFrac(exp.to_f64().unwrap_or(f64::NAN)),
            };
            push(ops, op, depth, max_depth);
        }
        Node::Func(f, a) => {
            compile_node(a, slot_of, ops, depth, max_depth)?;
            let op = match f {
                UnaryFn::Sin => Op::Sin,
                UnaryFn::Cos => Op::Cos,
                UnaryFn::Exp => Op::Exp,
                UnaryFn::Ln => Op::Ln,
                UnaryFn::Sqrt => Op::PowFrac(0.5),
            };
            push(ops, op, depth, max_depth);
        }
    }
    Ok(())
}

impl CompiledExpr {
    pub fn stack_size(&self) -> usize {
        self.stack_size.max(1)
    }

    /// Evaluate against the slot values using the caller's stack buffer;
    /// the buffer is cleared on entry and must have any capacity.
    pub fn eval_with(&self, slots: &[f64], stack: &mut Vec<f64>) -> Result<f64, EvalError> {
        stack.clear();
        for op in &self.ops {
            match op {
                Op::Const(v) => stack.push(*v),
                Op::Load(i) => stack.push(slots[*i as usize]),
                Op::Add => {
                    let b = stack.pop().expect("stack");
                    let a = stack.last_mut().expect("stack");
                    *a += b;
                }
                Op::Mul => {
                    let b = stack.pop().expect("stack");
                    let a = stack.last_mut().expect("stack");
                    *a *= b;
                }
                Op::PowInt(n) => {
                    let a = stack.last_mut().expect("stack");
                    *a = eval_pow(*a, Some(*n), *n as f64)?;
                }
                Op::PowFrac(x) => {
                    let a = stack.last_mut().expect("stack");
                    *a = eval_pow(*a, None, *x)?;
                }
                Op::Sin => {
                    let a = stack.last_mut().expect("stack");
                    *a = a.sin();
                }
                Op::Cos => {
                    let a = stack.last_mut().expect("stack");
                    *a = a.cos();
                }
                Op::Exp => {
                    let a = stack.last_mut().expect("stack");
                    *a = a.exp();
                }
                Op::Ln => {
                    let a = stack.last_mut().expect("stack");
                    *a = eval_func(UnaryFn::Ln, *a)?;
                }
            }
        }
        Ok(stack.pop().expect("compiled expression left empty stack"))
    }

    /// Convenience evaluation with a fresh stack.
    pub fn eval(&self, slots: &[f64]) -> Result<f64, EvalError> {
        let mut stack = Vec::with_capacity(self.stack_size());
        self.eval_with(slots, &mut stack)
    }
}
