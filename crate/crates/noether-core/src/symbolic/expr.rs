//! Immutable expression trees in canonical form.
//!
//! Every `Expression` built through the public constructors is canonical:
//! sums and products are flattened, like terms and like factors folded,
//! rational constants reduced exactly, and children sorted under a
//! deterministic total order. Canonical form is what makes structural
//! equality meaningful for polynomial identities.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{One, Zero};

use super::canon;
use super::symbol::{Symbol, SymbolKind};

/// Unary functions admitted in expressions. `Sqrt` is accepted as input
/// syntax but normalized to a rational power of 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UnaryFn {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
}

impl UnaryFn {
    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Exp => "exp",
            UnaryFn::Ln => "ln",
            UnaryFn::Sqrt => "sqrt",
        }
    }
}

/// Raw tree node. The variant order fixes the node ordering used when
/// sorting sums and products, ahead of the recursive comparison.
#[derive(Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) enum Node {
    Constant(BigRational),
    Symbol(Symbol),
    /// Base raised to an exact rational exponent. Canonical powers never
    /// carry exponent 0 or 1.
    Power(Expression, BigRational),
    Func(UnaryFn, Expression),
    /// Flattened product; a canonical product holds at most one constant
    /// factor (first) and at least two factors overall.
    Product(Vec<Expression>),
    /// Flattened sum; a canonical sum holds at most one constant term
    /// (last) and at least two terms overall.
    Sum(Vec<Expression>),
}

/// Immutable symbolic expression. Cheap to clone; safe to share across
/// threads.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Expression {
    node: Arc<Node>,
}

impl Expression {
    pub(crate) fn raw(node: Node) -> Self {
        Expression {
            node: Arc::new(node),
        }
    }

    pub(crate) fn node(&self) -> &Node {
        &self.node
    }

    // ----- constructors ---------------------------------------------------

    pub fn zero() -> Self {
        Expression::raw(Node::Constant(BigRational::zero()))
    }

    pub fn one() -> Self {
        Expression::raw(Node::Constant(BigRational::one()))
    }

    pub fn integer(n: i64) -> Self {
        Expression::raw(Node::Constant(BigRational::from_integer(n.into())))
    }

    /// Exact rational constant. Panics if `den == 0`.
    pub fn rational(num: i64, den: i64) -> Self {
        assert!(den != 0, "rational constant with zero denominator");
        Expression::raw(Node::Constant(BigRational::new(num.into(), den.into())))
    }

    pub fn constant(value: BigRational) -> Self {
        Expression::raw(Node::Constant(value))
    }

    pub fn symbol(sym: Symbol) -> Self {
        Expression::raw(Node::Symbol(sym))
    }

    /// Canonical sum of the given expressions.
    pub fn sum<I: IntoIterator<Item = Expression>>(terms: I) -> Self {
        canon::add_exprs(terms.into_iter().collect())
    }

    /// Canonical product of the given expressions.
    pub fn product<I: IntoIterator<Item = Expression>>(factors: I) -> Self {
        canon::mul_exprs(factors.into_iter().collect())
    }

    /// Canonical power with an exact rational exponent.
    pub fn pow(&self, exp: BigRational) -> Self {
        canon::pow_expr(self.clone(), exp)
    }

    pub fn powi(&self, exp: i64) -> Self {
        self.pow(BigRational::from_integer(exp.into()))
    }

    pub fn sqrt(&self) -> Self {
        self.pow(BigRational::new(1.into(), 2.into()))
    }

    pub fn recip(&self) -> Self {
        self.powi(-1)
    }

    pub fn sin(&self) -> Self {
        canon::func_expr(UnaryFn::Sin, self.clone())
    }

    pub fn cos(&self) -> Self {
        canon::func_expr(UnaryFn::Cos, self.clone())
    }

    pub fn exp(&self) -> Self {
        canon::func_expr(UnaryFn::Exp, self.clone())
    }

    pub fn ln(&self) -> Self {
        canon::func_expr(UnaryFn::Ln, self.clone())
    }

    pub fn func(f: UnaryFn, arg: Expression) -> Self {
        canon::func_expr(f, arg)
    }

    // ----- queries --------------------------------------------------------

    /// The exact constant value, if this expression is a constant.
    pub fn as_constant(&self) -> Option<&BigRational> {
        match self.node() {
            Node::Constant(c) => Some(c),
            _ => None,
        }
    }

    /// True when the canonical form is the constant zero.
    pub fn is_const_zero(&self) -> bool {
        matches!(self.node(), Node::Constant(c) if c.is_zero())
    }

    pub fn is_const_one(&self) -> bool {
        matches!(self.node(), Node::Constant(c) if c.is_one())
    }

    /// Every symbol appearing in the expression, in deterministic order.
    pub fn symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<Symbol>) {
        match self.node() {
            Node::Constant(_) => {}
            Node::Symbol(s) => {
                out.insert(s.clone());
            }
            Node::Power(b, _) => b.collect_symbols(out),
            Node::Func(_, a) => a.collect_symbols(out),
            Node::Product(es) | Node::Sum(es) => {
                for e in es {
                    e.collect_symbols(out);
                }
            }
        }
    }

    pub fn contains_symbol(&self, sym: &Symbol) -> bool {
        match self.node() {
            Node::Constant(_) => false,
            Node::Symbol(s) => s == sym,
            Node::Power(b, _) => b.contains_symbol(sym),
            Node::Func(_, a) => a.contains_symbol(sym),
            Node::Product(es) | Node::Sum(es) => es.iter().any(|e| e.contains_symbol(sym)),
        }
    }

    pub fn contains_kind(&self, kind: SymbolKind) -> bool {
        match self.node() {
            Node::Constant(_) => false,
            Node::Symbol(s) => s.kind() == kind,
            Node::Power(b, _) => b.contains_kind(kind),
            Node::Func(_, a) => a.contains_kind(kind),
            Node::Product(es) | Node::Sum(es) => es.iter().any(|e| e.contains_kind(kind)),
        }
    }

    /// True when the expression contains an acceleration placeholder.
    pub fn contains_placeholder(&self) -> bool {
        self.contains_kind(SymbolKind::Acceleration)
            || self.contains_kind(SymbolKind::DeviationAcceleration)
    }

    /// Re-derive the canonical form bottom-up. Identity on expressions
    /// produced by the public constructors; idempotent everywhere.
    pub fn simplify(&self) -> Expression {
        match self.node() {
            Node::Constant(_) | Node::Symbol(_) => self.clone(),
            Node::Power(b, e) => canon::pow_expr(b.simplify(), e.clone()),
            Node::Func(f, a) => canon::func_expr(*f, a.simplify()),
            Node::Product(es) => canon::mul_exprs(es.iter().map(|e| e.simplify()).collect()),
            Node::Sum(es) => canon::add_exprs(es.iter().map(|e| e.simplify()).collect()),
        }
    }

    /// Split into `(coefficient, rest)` such that `self = coefficient * rest`
    /// and `rest` carries no leading constant.
    pub(crate) fn split_coefficient(&self) -> (BigRational, Expression) {
        match self.node() {
            Node::Constant(c) => (c.clone(), Expression::one()),
            Node::Product(fs) => match fs[0].node() {
                Node::Constant(c) => {
                    let rest: Vec<Expression> = fs[1..].to_vec();
                    let rest = if rest.len() == 1 {
                        rest.into_iter().next().unwrap()
                    } else {
                        Expression::raw(Node::Product(rest))
                    };
                    (c.clone(), rest)
                }
                _ => (BigRational::one(), self.clone()),
            },
            _ => (BigRational::one(), self.clone()),
        }
    }

}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

// ----- operator sugar -------------------------------------------------------

impl std::ops::Add for Expression {
    type Output = Expression;
    fn add(self, rhs: Expression) -> Expression {
        Expression::sum([self, rhs])
    }
}

impl std::ops::Add for &Expression {
    type Output = Expression;
    fn add(self, rhs: &Expression) -> Expression {
        Expression::sum([self.clone(), rhs.clone()])
    }
}

impl std::ops::Sub for Expression {
    type Output = Expression;
    fn sub(self, rhs: Expression) -> Expression {
        Expression::sum([self, -rhs])
    }
}

impl std::ops::Sub for &Expression {
    type Output = Expression;
    fn sub(self, rhs: &Expression) -> Expression {
        self.clone() - rhs.clone()
    }
}

impl std::ops::Mul for Expression {
    type Output = Expression;
    fn mul(self, rhs: Expression) -> Expression {
        Expression::product([self, rhs])
    }
}

impl std::ops::Mul for &Expression {
    type Output = Expression;
    fn mul(self, rhs: &Expression) -> Expression {
        Expression::product([self.clone(), rhs.clone()])
    }
}

/// Division is multiplication by the reciprocal power. Dividing by an
/// expression that canonicalizes to zero yields an unevaluatable power that
/// surfaces as a domain error at evaluation time.
impl std::ops::Div for Expression {
    type Output = Expression;
    fn div(self, rhs: Expression) -> Expression {
        Expression::product([self, rhs.recip()])
    }
}

impl std::ops::Div for &Expression {
    type Output = Expression;
    fn div(self, rhs: &Expression) -> Expression {
        self.clone() / rhs.clone()
    }
}

impl std::ops::Neg for Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        Expression::product([Expression::integer(-1), self])
    }
}

impl std::ops::Neg for &Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        -self.clone()
    }
}

impl From<Symbol> for Expression {
    fn from(sym: Symbol) -> Self {
        Expression::symbol(sym)
    }
}

impl From<i64> for Expression {
    fn from(n: i64) -> Self {
        Expression::integer(n)
    }
}
