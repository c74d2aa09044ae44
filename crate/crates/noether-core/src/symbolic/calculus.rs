//! Partial differentiation, total time derivative, and substitution.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::One;
use thiserror::Error;

use super::expr::{Expression, Node, UnaryFn};
use super::symbol::{Symbol, SymbolKind};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TotalDerivativeError {
    #[error("expression already contains acceleration placeholders")]
    ContainsPlaceholder,
}

impl Expression {
    /// Partial derivative with respect to `sym`, treating every other
    /// symbol as independent. The result is canonical.
    pub fn differentiate(&self, sym: &Symbol) -> Expression {
        match self.node() {
            Node::Constant(_) => Expression::zero(),
            Node::Symbol(s) => {
                if s == sym {
                    Expression::one()
                } else {
                    Expression::zero()
                }
            }
            Node::Sum(ts) => Expression::sum(ts.iter().map(|t| t.differentiate(sym))),
            Node::Product(fs) => {
                // Leibniz rule over the flattened factor list.
                let mut terms = Vec::with_capacity(fs.len());
                for (i, fi) in fs.iter().enumerate() {
                    let mut factors = Vec::with_capacity(fs.len());
                    factors.push(fi.differentiate(sym));
                    for (j, fj) in fs.iter().enumerate() {
                        if j != i {
                            factors.push(fj.clone());
                        }
                    }
                    terms.push(Expression::product(factors));
                }
                Expression::sum(terms)
            }
            Node::Power(b, e) => {
                // d(b^e) = e * b^(e-1) * db
                let lowered = b.pow(e - BigRational::one());
                Expression::product([
                    Expression::constant(e.clone()),
                    lowered,
                    b.differentiate(sym),
                ])
            }
            Node::Func(f, a) => {
                let da = a.differentiate(sym);
                let outer = match f {
                    UnaryFn::Sin => a.cos(),
                    UnaryFn::Cos => -a.sin(),
                    UnaryFn::Exp => a.exp(),
                    UnaryFn::Ln => a.recip(),
                    // Canonical expressions never contain Sqrt nodes, but a
                    // raw tree may; the power rule applies after lowering.
                    UnaryFn::Sqrt => {
                        return a
                            .pow(BigRational::new(1.into(), 2.into()))
                            .differentiate(sym)
                    }
                };
                Expression::product([outer, da])
            }
        }
    }

    /// Total derivative along the time evolution: coordinates advance with
    /// their velocities, deviations with theirs, and velocity dependence
    /// introduces fresh acceleration placeholders `dd(q)` / `dd(eps(q))`.
    /// Expressions free of velocities acquire no placeholders.
    pub fn total_time_derivative(&self) -> Result<Expression, TotalDerivativeError> {
        if self.contains_placeholder() {
            return Err(TotalDerivativeError::ContainsPlaceholder);
        }
        let mut terms = vec![self.differentiate(&Symbol::time())];
        for sym in self.symbols() {
            let rate = match sym.kind() {
                SymbolKind::Coordinate => sym.with_kind(SymbolKind::Velocity),
                SymbolKind::Velocity => sym.with_kind(SymbolKind::Acceleration),
                SymbolKind::Deviation => sym.with_kind(SymbolKind::DeviationVelocity),
                SymbolKind::DeviationVelocity => {
                    sym.with_kind(SymbolKind::DeviationAcceleration)
                }
                _ => continue,
            };
            terms.push(Expression::symbol(rate) * self.differentiate(&sym));
        }
        Ok(Expression::sum(terms))
    }

    /// Replace symbols by expressions, re-canonicalizing bottom-up.
    pub fn substitute(&self, map: &BTreeMap<Symbol, Expression>) -> Expression {
        if map.is_empty() {
            return self.clone();
        }
        match self.node() {
            Node::Constant(_) => self.clone(),
            Node::Symbol(s) => map.get(s).cloned().unwrap_or_else(|| self.clone()),
            Node::Sum(ts) => Expression::sum(ts.iter().map(|t| t.substitute(map))),
            Node::Product(fs) => Expression::product(fs.iter().map(|f| f.substitute(map))),
            Node::Power(b, e) => b.substitute(map).pow(e.clone()),
            Node::Func(f, a) => Expression::func(*f, a.substitute(map)),
        }
    }

    /// Substitute a single symbol.
    pub fn substitute_one(&self, sym: &Symbol, value: &Expression) -> Expression {
        let mut map = BTreeMap::new();
        map.insert(sym.clone(), value.clone());
        self.substitute(&map)
    }
}
