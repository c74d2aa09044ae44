//! Canonicalization: flattening, like-term folding, power collection, and
//! distribution into an expanded polynomial over atomic factors.
//!
//! The normal form is a sum of terms, each an exact rational coefficient
//! times a product of atomic powers. Atoms are symbols, function
//! applications, and irreducible powers (non-integer exponents, or sums
//! raised beyond the expansion limit). Products of sums distribute;
//! positive integer powers of sums expand. Identities that fall outside
//! this rational-polynomial structure (trigonometric, exponential) are
//! deliberately not rewritten.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, Pow, Signed, ToPrimitive, Zero};

use super::expr::{Expression, Node, UnaryFn};

/// Positive integer powers of sums are expanded up to this exponent;
/// beyond it the power is kept as an atomic factor.
pub(crate) const SUM_POW_EXPAND_LIMIT: u32 = 8;

/// Canonical sum of arbitrary expressions.
pub(crate) fn add_exprs(terms: Vec<Expression>) -> Expression {
    let mut constant = BigRational::zero();
    let mut by_key: BTreeMap<Expression, BigRational> = BTreeMap::new();
    let mut stack = terms;
    while let Some(t) = stack.pop() {
        match t.node() {
            Node::Sum(ts) => stack.extend(ts.iter().cloned()),
            Node::Constant(c) => constant += c,
            _ => {
                let (c, key) = t.split_coefficient();
                *by_key.entry(key).or_insert_with(BigRational::zero) += c;
            }
        }
    }

    let mut out: Vec<Expression> = Vec::with_capacity(by_key.len() + 1);
    for (key, c) in by_key {
        if c.is_zero() {
            continue;
        }
        out.push(scale(key, c));
    }
    if !constant.is_zero() {
        out.push(Expression::constant(constant));
    }
    match out.len() {
        0 => Expression::zero(),
        1 => out.into_iter().next().unwrap(),
        _ => Expression::raw(Node::Sum(out)),
    }
}

/// `c * key` where `key` carries no leading constant.
fn scale(key: Expression, c: BigRational) -> Expression {
    if c.is_one() {
        return key;
    }
    match key.node() {
        Node::Product(fs) => {
            let mut factors = Vec::with_capacity(fs.len() + 1);
            factors.push(Expression::constant(c));
            factors.extend(fs.iter().cloned());
            Expression::raw(Node::Product(factors))
        }
        _ => Expression::raw(Node::Product(vec![Expression::constant(c), key])),
    }
}

/// Canonical product of arbitrary expressions.
pub(crate) fn mul_exprs(factors: Vec<Expression>) -> Expression {
    let mut b = ProductBuilder::new();
    for f in factors {
        b.insert(f, BigRational::one());
    }
    b.finish()
}

/// Canonical power with an exact rational exponent.
pub(crate) fn pow_expr(base: Expression, exp: BigRational) -> Expression {
    if exp.is_zero() {
        return Expression::one();
    }
    if exp.is_one() {
        return base;
    }
    let mut b = ProductBuilder::new();
    b.insert(base, exp);
    b.finish()
}

/// Canonical function application. `sqrt` normalizes to the 1/2 power so
/// the power rules apply to it uniformly.
pub(crate) fn func_expr(f: UnaryFn, arg: Expression) -> Expression {
    match f {
        UnaryFn::Sqrt => pow_expr(arg, BigRational::new(1.into(), 2.into())),
        _ => Expression::raw(Node::Func(f, arg)),
    }
}

/// Exact `c^exp` when the exponent is a small integer and the result is
/// defined; `None` otherwise.
fn const_int_pow(c: &BigRational, exp: &BigRational) -> Option<BigRational> {
    if !exp.is_integer() {
        return None;
    }
    let n = exp.to_integer().to_i32()?;
    if c.is_zero() && n < 0 {
        return None;
    }
    Some(Pow::pow(c, n))
}

fn small_positive_int(exp: &BigRational) -> Option<u32> {
    if !exp.is_integer() || !exp.is_positive() {
        return None;
    }
    let n = exp.to_integer().to_u32()?;
    (2..=SUM_POW_EXPAND_LIMIT).contains(&n).then_some(n)
}

/// Accumulates a product as `coeff * prod(base^exp)`, then rebuilds the
/// canonical expression, distributing over any sum factors.
struct ProductBuilder {
    coeff: BigRational,
    zero: bool,
    map: BTreeMap<Expression, BigRational>,
}

impl ProductBuilder {
    fn new() -> Self {
        ProductBuilder {
            coeff: BigRational::one(),
            zero: false,
            map: BTreeMap::new(),
        }
    }

    /// Merge `f^outer` into the accumulator, decomposing wherever the power
    /// laws hold exactly: integer powers distribute over products and
    /// compose through nested powers; everything else is atomic.
    fn insert(&mut self, f: Expression, outer: BigRational) {
        if self.zero || outer.is_zero() {
            return;
        }
        match f.node() {
            Node::Constant(c) => self.insert_const(c.clone(), outer),
            Node::Product(fs) => {
                if outer.is_integer() {
                    for sub in fs {
                        self.insert(sub.clone(), outer.clone());
                    }
                } else {
                    self.bump(f.clone(), outer);
                }
            }
            Node::Power(b, e) => {
                if outer.is_integer() {
                    self.insert(b.clone(), e * &outer);
                } else {
                    self.bump(f.clone(), outer);
                }
            }
            _ => self.bump(f.clone(), outer),
        }
    }

    fn insert_const(&mut self, c: BigRational, outer: BigRational) {
        if c.is_one() {
            return;
        }
        if c.is_zero() {
            if outer.is_positive() {
                self.zero = true;
            } else {
                // 0 to a negative power: kept unevaluated; surfaces as a
                // domain error when numerically evaluated.
                self.bump(Expression::zero(), outer);
            }
            return;
        }
        match const_int_pow(&c, &outer) {
            Some(v) => self.coeff *= v,
            None => self.bump(Expression::constant(c), outer),
        }
    }

    fn bump(&mut self, base: Expression, by: BigRational) {
        *self.map.entry(base).or_insert_with(BigRational::zero) += by;
    }

    fn finish(mut self) -> Expression {
        // Exponent accumulation can leave entries whose power laws now
        // apply (for example two half powers of a product summing to an
        // integer power); re-insert those until the map is stable.
        loop {
            if self.zero {
                return Expression::zero();
            }
            let reducible: Vec<Expression> = self
                .map
                .iter()
                .filter(|(b, e)| {
                    !e.is_zero()
                        && e.is_integer()
                        && matches!(b.node(), Node::Product(_) | Node::Power(..))
                })
                .map(|(b, _)| b.clone())
                .collect();
            if reducible.is_empty() {
                break;
            }
            for b in reducible {
                if let Some(e) = self.map.remove(&b) {
                    self.insert(b, e);
                }
            }
        }

        let mut coeff = self.coeff;
        let mut plain: Vec<Expression> = Vec::new();
        let mut sum_factors: Vec<Vec<Expression>> = Vec::new();

        for (base, exp) in std::mem::take(&mut self.map) {
            if exp.is_zero() {
                continue;
            }
            match base.node() {
                Node::Sum(ts) => {
                    if exp.is_one() {
                        sum_factors.push(ts.clone());
                    } else if let Some(n) = small_positive_int(&exp) {
                        sum_factors.push(expand_sum_pow(ts, n));
                    } else {
                        plain.push(Expression::raw(Node::Power(base.clone(), exp)));
                    }
                }
                Node::Constant(c) => match const_int_pow(c, &exp) {
                    Some(v) => coeff *= v,
                    None => plain.push(Expression::raw(Node::Power(base.clone(), exp))),
                },
                _ => {
                    if exp.is_one() {
                        plain.push(base);
                    } else {
                        plain.push(Expression::raw(Node::Power(base, exp)));
                    }
                }
            }
        }

        if coeff.is_zero() {
            return Expression::zero();
        }
        let head = assemble(coeff, plain);
        if sum_factors.is_empty() {
            return head;
        }

        // Distribute over the sum factors term by term.
        let mut acc = vec![head];
        for terms in sum_factors {
            let mut next = Vec::with_capacity(acc.len() * terms.len());
            for a in &acc {
                for t in &terms {
                    next.push(mul_exprs(vec![a.clone(), t.clone()]));
                }
            }
            acc = next;
        }
        add_exprs(acc)
    }
}

/// Build the product node from a folded coefficient and sorted atomic
/// factors (map iteration order is already the factor order).
fn assemble(coeff: BigRational, factors: Vec<Expression>) -> Expression {
    if factors.is_empty() {
        return Expression::constant(coeff);
    }
    if coeff.is_one() {
        if factors.len() == 1 {
            return factors.into_iter().next().unwrap();
        }
        return Expression::raw(Node::Product(factors));
    }
    let mut all = Vec::with_capacity(factors.len() + 1);
    all.push(Expression::constant(coeff));
    all.extend(factors);
    Expression::raw(Node::Product(all))
}

/// Terms of `(t_1 + ... + t_k)^n` for `n >= 2` via repeated distribution.
fn expand_sum_pow(terms: &[Expression], n: u32) -> Vec<Expression> {
    let mut acc: Vec<Expression> = terms.to_vec();
    for _ in 1..n {
        let mut next = Vec::with_capacity(acc.len() * terms.len());
        for a in &acc {
            for t in terms {
                next.push(mul_exprs(vec![a.clone(), t.clone()]));
            }
        }
        acc = next;
    }
    acc
}
