//! Property-based tests over randomly generated raw expression trees.

use std::collections::HashMap;

use num_rational::BigRational;
use proptest::prelude::*;

use super::expr::{Expression, Node, UnaryFn};
use super::symbol::Symbol;
use super::zero::ZeroTestConfig;

fn symbol_pool() -> Vec<Symbol> {
    vec![
        Symbol::time(),
        Symbol::coordinate("q", 0),
        Symbol::velocity("q", 0),
        Symbol::deviation("q", 0),
        Symbol::deviation_velocity("q", 0),
        Symbol::coordinate("r", 1),
        Symbol::parameter("a"),
        Symbol::parameter("b"),
    ]
}

fn leaf() -> impl Strategy<Value = Expression> {
    prop_oneof![
        (-6i64..=6, 1i64..=4).prop_map(|(n, d)| Expression::raw(Node::Constant(
            BigRational::new(n.into(), d.into())
        ))),
        (0usize..symbol_pool().len())
            .prop_map(|i| Expression::raw(Node::Symbol(symbol_pool()[i].clone()))),
    ]
}

fn exponent() -> impl Strategy<Value = BigRational> {
    prop_oneof![
        (-2i64..=3).prop_map(|n| BigRational::from_integer(n.into())),
        Just(BigRational::new(1.into(), 2.into())),
        Just(BigRational::new((-1).into(), 2.into())),
        Just(BigRational::new(3.into(), 2.into())),
    ]
}

fn func() -> impl Strategy<Value = UnaryFn> {
    prop_oneof![
        Just(UnaryFn::Sin),
        Just(UnaryFn::Cos),
        Just(UnaryFn::Exp),
        Just(UnaryFn::Ln),
        Just(UnaryFn::Sqrt),
    ]
}

/// Raw, usually non-canonical trees.
fn raw_expr() -> impl Strategy<Value = Expression> {
    leaf().prop_recursive(4, 48, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4)
                .prop_map(|es| Expression::raw(Node::Sum(es))),
            prop::collection::vec(inner.clone(), 2..4)
                .prop_map(|es| Expression::raw(Node::Product(es))),
            (inner.clone(), exponent())
                .prop_map(|(b, e)| Expression::raw(Node::Power(b, e))),
            (func(), inner).prop_map(|(f, a)| Expression::raw(Node::Func(f, a))),
        ]
    })
}

fn binding_in(lo: f64, hi: f64, seed: u64, e: &Expression) -> HashMap<Symbol, f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    e.symbols()
        .into_iter()
        .map(|s| {
            let magnitude = rng.random_range(lo..=hi);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            (s, sign * magnitude)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Canonicalization is idempotent.
    #[test]
    fn simplify_is_idempotent(e in raw_expr()) {
        let once = e.simplify();
        let twice = once.simplify();
        prop_assert_eq!(once, twice);
    }
}

proptest! {
    /// Canonicalization preserves numeric value wherever both the raw and
    /// canonical forms evaluate to finite numbers.
    #[test]
    fn simplify_preserves_value(e in raw_expr(), seed in 0u64..1000) {
        let simplified = e.simplify();
        let binding = binding_in(0.05, 1.0, seed, &e);
        let raw_val = e.evaluate_map(&binding);
        let simp_val = simplified.evaluate_map(&binding);
        if let (Ok(a), Ok(b)) = (raw_val, simp_val) {
            prop_assume!(a.is_finite() && b.is_finite());
            prop_assume!(a.abs() < 1e9 && b.abs() < 1e9);
            let scale = a.abs().max(b.abs()).max(1.0);
            prop_assert!(
                (a - b).abs() <= 1e-9 * scale,
                "raw {a} vs canonical {b} for {e} -> {simplified}"
            );
        }
    }

    /// Symbolic partial derivatives agree with central finite differences
    /// away from singular points.
    #[test]
    fn differentiate_matches_finite_differences(e in raw_expr(), seed in 0u64..1000) {
        const H: f64 = 1e-6;
        let e = e.simplify();
        let syms: Vec<Symbol> = e.symbols().into_iter().collect();
        prop_assume!(!syms.is_empty());
        // Bind away from zero so negative powers stay well conditioned.
        let mut binding = binding_in(0.25, 1.0, seed, &e);
        for s in &syms {
            let grad = e.differentiate(s);
            let exact = match grad.evaluate_map(&binding) {
                Ok(v) if v.is_finite() => v,
                _ => continue,
            };
            let center = binding[s];
            binding.insert(s.clone(), center + H);
            let hi = e.evaluate_map(&binding);
            binding.insert(s.clone(), center - H);
            let lo = e.evaluate_map(&binding);
            binding.insert(s.clone(), center);
            let (Ok(hi), Ok(lo)) = (hi, lo) else { continue };
            // Large magnitudes amplify cancellation noise beyond the
            // stated tolerance; those points prove nothing either way.
            prop_assume!(hi.abs() < 1e3 && lo.abs() < 1e3);
            let fd = (hi - lo) / (2.0 * H);
            let rel = (fd - exact).abs() / exact.abs().max(1.0);
            prop_assert!(
                rel < 1e-6,
                "d/d{s} of {e}: symbolic {exact}, finite difference {fd}, rel {rel:.3e}"
            );
        }
    }

    /// Product rule: d(a*b) - (da*b + a*db) vanishes.
    #[test]
    fn differentiate_satisfies_leibniz(a in raw_expr(), b in raw_expr()) {
        let (a, b) = (a.simplify(), b.simplify());
        let s = Symbol::coordinate("q", 0);
        let lhs = (&a * &b).differentiate(&s);
        let rhs = a.differentiate(&s) * b.clone() + a.clone() * b.differentiate(&s);
        let diff = lhs - rhs;
        if let Ok(verdict) = diff.is_zero(&ZeroTestConfig::default()) {
            prop_assert!(verdict.is_zero(), "leibniz residual {:?}", verdict);
        }
    }

    /// The total time derivative distributes over sums.
    #[test]
    fn total_derivative_commutes_with_sums(a in raw_expr(), b in raw_expr()) {
        let (a, b) = (a.simplify(), b.simplify());
        let joint = (&a + &b).total_time_derivative().unwrap();
        let split = a.total_time_derivative().unwrap() + b.total_time_derivative().unwrap();
        let diff = joint - split;
        if let Ok(verdict) = diff.is_zero(&ZeroTestConfig::default()) {
            prop_assert!(verdict.is_zero(), "residual {:?}", verdict);
        }
    }
}
