//! Rendering to the expression grammar. Parsing a rendered canonical
//! expression yields the identical expression back.

use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Signed};

use super::expr::{Expression, Node};

/// Surrounding syntactic context, loosest to tightest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ctx {
    Sum,
    Product,
    PowerBase,
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_expr(f, self, Ctx::Sum)
    }
}

fn fmt_expr(f: &mut fmt::Formatter<'_>, e: &Expression, ctx: Ctx) -> fmt::Result {
    match e.node() {
        Node::Constant(c) => {
            let plain = c.is_integer() && !c.is_negative();
            if plain || ctx == Ctx::Sum {
                fmt_rational(f, c)
            } else {
                write!(f, "(")?;
                fmt_rational(f, c)?;
                write!(f, ")")
            }
        }
        Node::Symbol(s) => write!(f, "{s}"),
        Node::Func(func, arg) => {
            write!(f, "{}(", func.name())?;
            fmt_expr(f, arg, Ctx::Sum)?;
            write!(f, ")")
        }
        Node::Power(base, exp) => {
            // A power base that is itself a power needs parentheses:
            // `^` is right-associative when reparsed.
            if ctx == Ctx::PowerBase {
                write!(f, "(")?;
            }
            fmt_expr(f, base, Ctx::PowerBase)?;
            if exp.is_integer() && !exp.is_negative() {
                write!(f, "^{}", exp.numer())?;
            } else {
                write!(f, "^(")?;
                fmt_rational(f, exp)?;
                write!(f, ")")?;
            }
            if ctx == Ctx::PowerBase {
                write!(f, ")")?;
            }
            Ok(())
        }
        Node::Product(_) => {
            if ctx >= Ctx::PowerBase {
                write!(f, "(")?;
                fmt_signed_term(f, e)?;
                write!(f, ")")
            } else {
                fmt_signed_term(f, e)
            }
        }
        Node::Sum(terms) => {
            if ctx > Ctx::Sum {
                write!(f, "(")?;
            }
            for (i, t) in terms.iter().enumerate() {
                let (c, key) = t.split_coefficient();
                if i == 0 {
                    if c.is_negative() {
                        write!(f, "-")?;
                    }
                } else if c.is_negative() {
                    write!(f, " - ")?;
                } else {
                    write!(f, " + ")?;
                }
                fmt_scaled(f, &c.abs(), &key)?;
            }
            if ctx > Ctx::Sum {
                write!(f, ")")?;
            }
            Ok(())
        }
    }
}

/// A product (or any term) with its sign rendered in front.
fn fmt_signed_term(f: &mut fmt::Formatter<'_>, e: &Expression) -> fmt::Result {
    let (c, key) = e.split_coefficient();
    if c.is_negative() {
        write!(f, "-")?;
    }
    fmt_scaled(f, &c.abs(), &key)
}

/// `coeff * key` with a non-negative coefficient and a coefficient-free key.
fn fmt_scaled(f: &mut fmt::Formatter<'_>, coeff: &BigRational, key: &Expression) -> fmt::Result {
    if key.is_const_one() {
        return fmt_rational(f, coeff);
    }
    if !coeff.is_one() {
        if coeff.is_integer() {
            fmt_rational(f, coeff)?;
        } else {
            write!(f, "(")?;
            fmt_rational(f, coeff)?;
            write!(f, ")")?;
        }
        write!(f, "*")?;
    }
    match key.node() {
        Node::Product(factors) => {
            for (i, factor) in factors.iter().enumerate() {
                if i > 0 {
                    write!(f, "*")?;
                }
                fmt_expr(f, factor, Ctx::Product)?;
            }
            Ok(())
        }
        _ => fmt_expr(f, key, Ctx::Product),
    }
}

fn fmt_rational(f: &mut fmt::Formatter<'_>, r: &BigRational) -> fmt::Result {
    if r.is_integer() {
        write!(f, "{}", r.numer())
    } else {
        write!(f, "{}/{}", r.numer(), r.denom())
    }
}
