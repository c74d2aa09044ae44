//! Construction of the prolonged density and the derivation of the
//! equations of motion and variational equations.
//!
//! The prolonged density extends a Lagrangian to the tangent bundle of its
//! solution space: it is linear in the deviations and deviation velocities,
//! and extremalizing its action reproduces both the original equations of
//! motion and their linearization. The two variational derivations here —
//! term-by-term from the linearized equations, and the Euler-Lagrange
//! operator applied to the prolonged density — must agree, and the test
//! corpus checks that they do.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::SystemDef;
use crate::symbolic::{Expression, Symbol};

pub use crate::dynamics::assemble_ode;

/// Symbolic acceleration elimination solves the mass-matrix system in
/// closed form up to this dimension; larger systems defer elimination to
/// the numeric right-hand side.
pub const MAX_SYMBOLIC_N: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DerivationError {
    #[error("singular mass matrix: the velocity Hessian of `{system}` has symbolically zero determinant")]
    SingularMassMatrix { system: String },
    #[error(
        "symbolic acceleration elimination supports at most {MAX_SYMBOLIC_N} coordinates; `{system}` has {n}"
    )]
    TooManyCoordinates { system: String, n: usize },
}

/// The prolonged density: linear in `(eps, d(eps))`, free of acceleration
/// placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct ProlongedDensity {
    pub gamma: Expression,
}

/// Implicit second-order equations: one residual per coordinate, affine in
/// the acceleration placeholders, together with the symmetric mass matrix
/// multiplying them.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitOde {
    pub residuals: Vec<Expression>,
    pub mass: Vec<Vec<Expression>>,
}

/// gamma = sum_a [ dL/dq^a * eps^a + dL/dv^a * d(eps^a) ].
pub fn prolong(sys: &SystemDef) -> ProlongedDensity {
    let l = sys.lagrangian();
    let mut terms = Vec::with_capacity(2 * sys.n());
    for i in 0..sys.n() {
        terms.push(l.differentiate(&sys.coord(i)) * Expression::symbol(sys.deviation(i)));
        terms.push(
            l.differentiate(&sys.velocity(i)) * Expression::symbol(sys.deviation_velocity(i)),
        );
    }
    ProlongedDensity {
        gamma: Expression::sum(terms),
    }
}

/// The velocity Hessian `M_ab = d2L/dv^a dv^b`.
pub fn mass_matrix(sys: &SystemDef) -> Vec<Vec<Expression>> {
    let l = sys.lagrangian();
    (0..sys.n())
        .map(|a| {
            let dva = l.differentiate(&sys.velocity(a));
            (0..sys.n())
                .map(|b| dva.differentiate(&sys.velocity(b)))
                .collect()
        })
        .collect()
}

/// Equations of motion: residual_a = D(dL/dv^a) - dL/dq^a, affine in the
/// acceleration placeholders `dd(q)`.
pub fn euler_lagrange(sys: &SystemDef) -> ImplicitOde {
    let l = sys.lagrangian();
    let residuals = (0..sys.n())
        .map(|a| {
            let momentum = l.differentiate(&sys.velocity(a));
            let dt = momentum
                .total_time_derivative()
                .expect("lagrangian is placeholder-free by construction");
            dt - l.differentiate(&sys.coord(a))
        })
        .collect();
    ImplicitOde {
        residuals,
        mass: mass_matrix(sys),
    }
}

/// Variational equations assembled term by term from the linearization of
/// the equations of motion, still carrying acceleration placeholders in
/// the time-derivative coefficients.
pub(crate) fn variational_raw(sys: &SystemDef) -> ImplicitOde {
    let l = sys.lagrangian();
    let n = sys.n();
    let mass = mass_matrix(sys);
    let mut residuals = Vec::with_capacity(n);
    for a in 0..n {
        let dva = l.differentiate(&sys.velocity(a));
        let dqa = l.differentiate(&sys.coord(a));
        let mut terms = Vec::new();
        for b in 0..n {
            let eps_b = Expression::symbol(sys.deviation(b));
            let w_b = Expression::symbol(sys.deviation_velocity(b));
            let acc_b = Expression::symbol(sys.deviation_acceleration(b));

            // d2L/dv^a dq^b and its mirror d2L/dq^a dv^b.
            let l_va_qb = dva.differentiate(&sys.coord(b));
            let l_qa_vb = dqa.differentiate(&sys.velocity(b));

            let mass_rate = mass[a][b]
                .total_time_derivative()
                .expect("mass entries are placeholder-free");
            let coupling = l_va_qb
                .total_time_derivative()
                .expect("second derivatives of L are placeholder-free");

            terms.push(&mass[a][b] * &acc_b);
            terms.push((mass_rate + l_va_qb.clone() - l_qa_vb) * w_b);
            terms.push((coupling - dqa.differentiate(&sys.coord(b))) * eps_b);
        }
        residuals.push(Expression::sum(terms));
    }
    ImplicitOde { residuals, mass }
}

/// Variational equations with the base accelerations eliminated through
/// the equations of motion (for small systems; larger ones keep the
/// placeholders for numeric evaluation).
pub fn variational_equations_direct(sys: &SystemDef) -> Result<ImplicitOde, DerivationError> {
    let raw = variational_raw(sys);
    eliminate_base_accelerations(sys, raw)
}

/// Variational equations as the Euler-Lagrange operator of the prolonged
/// density with respect to the coordinates:
/// residual_a = D(dgamma/dv^a) - dgamma/dq^a.
pub fn variational_equations_via_gamma(sys: &SystemDef) -> Result<ImplicitOde, DerivationError> {
    let gamma = prolong(sys).gamma;
    let n = sys.n();
    let residuals = (0..n)
        .map(|a| {
            let dva = gamma.differentiate(&sys.velocity(a));
            let dt = dva
                .total_time_derivative()
                .expect("prolonged density is placeholder-free");
            dt - gamma.differentiate(&sys.coord(a))
        })
        .collect();
    let raw = ImplicitOde {
        residuals,
        mass: mass_matrix(sys),
    };
    eliminate_base_accelerations(sys, raw)
}

fn eliminate_base_accelerations(
    sys: &SystemDef,
    raw: ImplicitOde,
) -> Result<ImplicitOde, DerivationError> {
    if sys.n() > MAX_SYMBOLIC_N {
        return Ok(raw);
    }
    let accel = solved_accelerations(sys)?;
    let map: BTreeMap<Symbol, Expression> = (0..sys.n())
        .map(|i| (sys.acceleration(i), accel[i].clone()))
        .collect();
    Ok(ImplicitOde {
        residuals: raw.residuals.iter().map(|r| r.substitute(&map)).collect(),
        mass: raw.mass,
    })
}

/// Closed-form accelerations from the equations of motion: the solution of
/// `M * dd(q) = -r` where `r` is the placeholder-free part of the
/// Euler-Lagrange residuals.
pub(crate) fn solved_accelerations(sys: &SystemDef) -> Result<Vec<Expression>, DerivationError> {
    let n = sys.n();
    if n > MAX_SYMBOLIC_N {
        return Err(DerivationError::TooManyCoordinates {
            system: sys.name().to_string(),
            n,
        });
    }
    let el = euler_lagrange(sys);
    let zero_accel: BTreeMap<Symbol, Expression> = (0..n)
        .map(|i| (sys.acceleration(i), Expression::zero()))
        .collect();
    let rhs: Vec<Expression> = el
        .residuals
        .iter()
        .map(|r| -r.substitute(&zero_accel))
        .collect();
    solve_linear_symbolic(&el.mass, &rhs).ok_or_else(|| DerivationError::SingularMassMatrix {
        system: sys.name().to_string(),
    })
}

/// Substitution of the on-shell accelerations: `dd(q)` from the equations
/// of motion and `dd(eps(q))` from the variational equations.
#[derive(Debug, Clone)]
pub struct OnShell {
    substitution: BTreeMap<Symbol, Expression>,
    accel: Vec<Expression>,
    dev_accel: Vec<Expression>,
}

pub fn on_shell(sys: &SystemDef) -> Result<OnShell, DerivationError> {
    let n = sys.n();
    let accel = solved_accelerations(sys)?;
    let accel_map: BTreeMap<Symbol, Expression> = (0..n)
        .map(|i| (sys.acceleration(i), accel[i].clone()))
        .collect();

    let raw = variational_raw(sys);
    let zero_dev_accel: BTreeMap<Symbol, Expression> = (0..n)
        .map(|i| (sys.deviation_acceleration(i), Expression::zero()))
        .collect();
    let rhs: Vec<Expression> = raw
        .residuals
        .iter()
        .map(|r| -r.substitute(&zero_dev_accel).substitute(&accel_map))
        .collect();
    let dev_accel =
        solve_linear_symbolic(&raw.mass, &rhs).ok_or_else(|| DerivationError::SingularMassMatrix {
            system: sys.name().to_string(),
        })?;

    let mut substitution = accel_map;
    for i in 0..n {
        substitution.insert(sys.deviation_acceleration(i), dev_accel[i].clone());
    }
    Ok(OnShell {
        substitution,
        accel,
        dev_accel,
    })
}

impl OnShell {
    /// Replace every acceleration placeholder by its solved expression.
    pub fn eliminate(&self, e: &Expression) -> Expression {
        e.substitute(&self.substitution)
    }

    pub fn accelerations(&self) -> &[Expression] {
        &self.accel
    }

    pub fn deviation_accelerations(&self) -> &[Expression] {
        &self.dev_accel
    }
}

/// Cramer solve over expressions. `None` when the determinant is
/// symbolically zero.
fn solve_linear_symbolic(m: &[Vec<Expression>], rhs: &[Expression]) -> Option<Vec<Expression>> {
    let n = rhs.len();
    let det = determinant(m, n);
    if det.is_const_zero() {
        return None;
    }
    let inv_det = det.recip();
    let mut out = Vec::with_capacity(n);
    for col in 0..n {
        let mut replaced: Vec<Vec<Expression>> = m.to_vec();
        for (row, r) in rhs.iter().enumerate() {
            replaced[row][col] = r.clone();
        }
        out.push(determinant(&replaced, n) * inv_det.clone());
    }
    Some(out)
}

fn determinant(m: &[Vec<Expression>], n: usize) -> Expression {
    match n {
        0 => Expression::one(),
        1 => m[0][0].clone(),
        2 => &m[0][0] * &m[1][1] - &m[0][1] * &m[1][0],
        _ => {
            let mut terms = Vec::with_capacity(n);
            for col in 0..n {
                let minor: Vec<Vec<Expression>> = (1..n)
                    .map(|row| {
                        (0..n)
                            .filter(|c| *c != col)
                            .map(|c| m[row][c].clone())
                            .collect()
                    })
                    .collect();
                let cofactor = determinant(&minor, n - 1);
                let signed = if col % 2 == 0 {
                    m[0][col].clone()
                } else {
                    -&m[0][col]
                };
                terms.push(signed * cofactor);
            }
            Expression::sum(terms)
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::symbolic::{Symbol, ZeroTestConfig};

    fn system(name: &str, coords: &[&str], params: &[(&str, f64)], l: Expression) -> SystemDef {
        SystemDef::new(
            name,
            coords.iter().map(|c| c.to_string()).collect(),
            params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            l,
        )
        .unwrap()
    }

    fn oscillator() -> SystemDef {
        let v = Expression::symbol(Symbol::velocity("q", 0));
        let q = Expression::symbol(Symbol::coordinate("q", 0));
        let omega = Expression::symbol(Symbol::parameter("omega"));
        let half = Expression::rational(1, 2);
        system(
            "oscillator",
            &["q"],
            &[("omega", 1.0)],
            half.clone() * v.powi(2) - half * omega.powi(2) * q.powi(2),
        )
    }

    fn unit_oscillator() -> SystemDef {
        let v = Expression::symbol(Symbol::velocity("q", 0));
        let q = Expression::symbol(Symbol::coordinate("q", 0));
        let half = Expression::rational(1, 2);
        system(
            "unit_oscillator",
            &["q"],
            &[],
            half.clone() * v.powi(2) - half * q.powi(2),
        )
    }

    fn pendulum() -> SystemDef {
        let v = Expression::symbol(Symbol::velocity("q", 0));
        let q = Expression::symbol(Symbol::coordinate("q", 0));
        system(
            "pendulum",
            &["q"],
            &[],
            Expression::rational(1, 2) * v.powi(2) + q.cos(),
        )
    }

    #[test]
    fn prolong_unit_oscillator() {
        let sys = unit_oscillator();
        let gamma = prolong(&sys).gamma;
        let v = Expression::symbol(sys.velocity(0));
        let q = Expression::symbol(sys.coord(0));
        let eps = Expression::symbol(sys.deviation(0));
        let w = Expression::symbol(sys.deviation_velocity(0));
        assert_eq!(gamma, v * w - q * eps);
    }

    #[test]
    fn prolong_constant_mass_pair() {
        // L = 1/2 m_ab v^a v^b - U(q2) with constant symmetric mass.
        let v1 = Expression::symbol(Symbol::velocity("q1", 0));
        let v2 = Expression::symbol(Symbol::velocity("q2", 1));
        let q2 = Expression::symbol(Symbol::coordinate("q2", 1));
        let m11 = Expression::symbol(Symbol::parameter("m11"));
        let m12 = Expression::symbol(Symbol::parameter("m12"));
        let m22 = Expression::symbol(Symbol::parameter("m22"));
        let k = Expression::symbol(Symbol::parameter("k"));
        let half = Expression::rational(1, 2);
        let l = half.clone() * (&m11 * &v1.powi(2) + &m22 * &v2.powi(2))
            + &m12 * &(&v1 * &v2)
            - half.clone() * k.clone() * q2.powi(2);
        let sys = system(
            "pair",
            &["q1", "q2"],
            &[("m11", 1.0), ("m12", 0.25), ("m22", 1.0), ("k", 1.0)],
            l,
        );

        let w1 = Expression::symbol(sys.deviation_velocity(0));
        let w2 = Expression::symbol(sys.deviation_velocity(1));
        let eps2 = Expression::symbol(sys.deviation(1));
        let expected = &m11 * &(&v1 * &w1)
            + &m12 * &(&v1 * &w2)
            + &m12 * &(&v2 * &w1)
            + &m22 * &(&v2 * &w2)
            - &k * &(&q2 * &eps2);
        assert_eq!(prolong(&sys).gamma, expected);
    }

    #[test]
    fn prolong_velocity_only_lagrangian() {
        let sys = system(
            "drift",
            &["q"],
            &[],
            Expression::symbol(Symbol::velocity("q", 0)),
        );
        let w = Expression::symbol(sys.deviation_velocity(0));
        assert_eq!(prolong(&sys).gamma, w);
    }

    #[test]
    fn euler_lagrange_oscillator() {
        let sys = oscillator();
        let el = euler_lagrange(&sys);
        let a = Expression::symbol(sys.acceleration(0));
        let q = Expression::symbol(sys.coord(0));
        let omega = Expression::symbol(Symbol::parameter("omega"));
        assert_eq!(el.residuals[0], a + omega.powi(2) * q);
        assert_eq!(el.mass[0][0], Expression::one());
    }

    #[test]
    fn euler_lagrange_free_particle() {
        let v = Expression::symbol(Symbol::velocity("q", 0));
        let sys = system("free", &["q"], &[], Expression::rational(1, 2) * v.powi(2));
        let el = euler_lagrange(&sys);
        assert_eq!(
            el.residuals[0],
            Expression::symbol(sys.acceleration(0))
        );
    }

    #[test]
    fn euler_lagrange_uniform_field() {
        let v = Expression::symbol(Symbol::velocity("q", 0));
        let q = Expression::symbol(Symbol::coordinate("q", 0));
        let g = Expression::symbol(Symbol::parameter("g"));
        let sys = system(
            "field",
            &["q"],
            &[("g", 9.8)],
            Expression::rational(1, 2) * v.powi(2) - g.clone() * q,
        );
        let el = euler_lagrange(&sys);
        assert_eq!(
            el.residuals[0],
            Expression::symbol(sys.acceleration(0)) + g
        );
    }

    #[test]
    fn variational_direct_oscillator() {
        let sys = oscillator();
        let var = variational_equations_direct(&sys).unwrap();
        let b = Expression::symbol(sys.deviation_acceleration(0));
        let eps = Expression::symbol(sys.deviation(0));
        let omega = Expression::symbol(Symbol::parameter("omega"));
        assert_eq!(var.residuals[0], b + omega.powi(2) * eps);
    }

    #[test]
    fn variational_direct_gauge_equivalent_free_particle() {
        // L = 1/2 v^2 + q v differs from the free particle by a total
        // derivative; the mixed second derivatives cancel.
        let v = Expression::symbol(Symbol::velocity("q", 0));
        let q = Expression::symbol(Symbol::coordinate("q", 0));
        let sys = system(
            "gauge_free",
            &["q"],
            &[],
            Expression::rational(1, 2) * v.powi(2) + q * v,
        );
        let var = variational_equations_direct(&sys).unwrap();
        assert_eq!(
            var.residuals[0],
            Expression::symbol(sys.deviation_acceleration(0))
        );
    }

    #[test]
    fn variational_direct_pendulum() {
        let sys = pendulum();
        let var = variational_equations_direct(&sys).unwrap();
        let b = Expression::symbol(sys.deviation_acceleration(0));
        let eps = Expression::symbol(sys.deviation(0));
        let q = Expression::symbol(sys.coord(0));
        assert_eq!(var.residuals[0], b + q.cos() * eps);
    }

    #[test]
    fn via_gamma_matches_direct_on_simple_systems() {
        for sys in [oscillator(), pendulum()] {
            let direct = variational_equations_direct(&sys).unwrap();
            let via = variational_equations_via_gamma(&sys).unwrap();
            assert_eq!(direct.residuals, via.residuals, "system {}", sys.name());
        }
    }

    #[test]
    fn dual_derivation_with_velocity_dependent_mass() {
        // L = 1/2 v^2 + 1/6 v^3 has mass 1 + v, exercising acceleration
        // elimination inside the derivative coefficients.
        let v = Expression::symbol(Symbol::velocity("q", 0));
        let sys = system(
            "cubic",
            &["q"],
            &[],
            Expression::rational(1, 2) * v.powi(2) + Expression::rational(1, 6) * v.powi(3),
        );
        let direct = variational_equations_direct(&sys).unwrap();
        let via = variational_equations_via_gamma(&sys).unwrap();
        let diff = &direct.residuals[0] - &via.residuals[0];
        assert!(
            diff.is_zero(&ZeroTestConfig::default()).unwrap().is_zero(),
            "difference {diff}"
        );
    }

    #[test]
    fn dual_derivation_with_position_dependent_mass() {
        let v = Expression::symbol(Symbol::velocity("q", 0));
        let q = Expression::symbol(Symbol::coordinate("q", 0));
        let mass = Expression::one() + q.powi(2);
        let sys = system(
            "position_mass",
            &["q"],
            &[],
            Expression::rational(1, 2) * (mass * v.powi(2) - q.powi(2)),
        );
        let direct = variational_equations_direct(&sys).unwrap();
        let via = variational_equations_via_gamma(&sys).unwrap();
        let diff = &direct.residuals[0] - &via.residuals[0];
        assert!(
            diff.is_zero(&ZeroTestConfig::default()).unwrap().is_zero(),
            "difference {diff}"
        );
    }

    #[test]
    fn euler_lagrange_recovered_from_gamma_deviation_slots() {
        // The Euler-Lagrange operator of gamma with respect to eps^a
        // reproduces the equations of motion exactly.
        for sys in [oscillator(), pendulum()] {
            let gamma = prolong(&sys).gamma;
            let el = euler_lagrange(&sys);
            for a in 0..sys.n() {
                let d_w = gamma.differentiate(&sys.deviation_velocity(a));
                let lhs = d_w.total_time_derivative().unwrap()
                    - gamma.differentiate(&sys.deviation(a));
                assert_eq!(lhs, el.residuals[a]);
            }
        }
    }

    #[test]
    fn gamma_is_degree_one_in_deviation_block() {
        let sys = pendulum();
        let gamma = prolong(&sys).gamma;
        let lambda = Expression::symbol(Symbol::parameter("lambda"));
        let mut scale = BTreeMap::new();
        scale.insert(
            sys.deviation(0),
            &lambda * &Expression::symbol(sys.deviation(0)),
        );
        scale.insert(
            sys.deviation_velocity(0),
            &lambda * &Expression::symbol(sys.deviation_velocity(0)),
        );
        let scaled = gamma.substitute(&scale);
        assert!((scaled - lambda * gamma).is_const_zero());
    }

    #[test]
    fn variational_residuals_are_linear_in_tangent_block() {
        let sys = pendulum();
        let var = variational_equations_direct(&sys).unwrap();
        for r in &var.residuals {
            for s in [
                sys.deviation(0),
                sys.deviation_velocity(0),
                sys.deviation_acceleration(0),
            ] {
                let second = r.differentiate(&s).differentiate(&s);
                assert!(second.is_const_zero());
            }
        }
    }

    #[test]
    fn degenerate_lagrangians_are_rejected() {
        let q = Expression::symbol(Symbol::coordinate("q", 0));
        let sys = system("degenerate", &["q"], &[], q);
        assert!(matches!(
            variational_equations_direct(&sys),
            Err(DerivationError::SingularMassMatrix { .. })
        ));
        let v = Expression::symbol(Symbol::velocity("q", 0));
        let sys = system("linear_velocity", &["q"], &[], v);
        assert!(matches!(
            on_shell(&sys),
            Err(DerivationError::SingularMassMatrix { .. })
        ));
    }

    #[test]
    fn mass_matrix_is_symmetric() {
        let v1 = Expression::symbol(Symbol::velocity("a", 0));
        let v2 = Expression::symbol(Symbol::velocity("b", 1));
        let a = Expression::symbol(Symbol::coordinate("a", 0));
        let l = Expression::rational(1, 2) * (v1.powi(2) + v2.powi(2))
            + a.sin() * v1 * v2;
        let sys = system("coupled", &["a", "b"], &[], l);
        let m = mass_matrix(&sys);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(m[i][j], m[j][i]);
            }
        }
    }

    #[test]
    fn on_shell_solves_oscillator_accelerations() {
        let sys = unit_oscillator();
        let shell = on_shell(&sys).unwrap();
        let q = Expression::symbol(sys.coord(0));
        let eps = Expression::symbol(sys.deviation(0));
        assert_eq!(shell.accelerations()[0], -&q);
        assert_eq!(shell.deviation_accelerations()[0], -&eps);
    }
}
