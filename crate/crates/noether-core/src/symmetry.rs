//! Symmetry verification and conserved charges.
//!
//! A generator is checked against the prolonged density through the
//! infinitesimal invariance criterion: the residual of the generated
//! vector field acting on the density (plus the time-dilation and gauge
//! terms) must vanish identically. Zero-verdict generators yield an
//! extended charge from the prolonged density; generators whose `(xi,
//! zeta)` part is also a symmetry of the Lagrangian additionally yield
//! the classical charge, giving two conserved quantities per symmetry.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{Generator, SystemDef};
use crate::prolongation::{on_shell, DerivationError, ProlongedDensity};
use crate::symbolic::{
    Expression, Symbol, SymbolKind, Witness, ZeroTestConfig, ZeroTestError, ZeroVerdict,
};

#[derive(Debug, Error)]
pub enum SymmetryError {
    #[error("generator `{generator}` does not fit system `{system}` ({expected} coordinates, generator carries {got})")]
    Mismatch {
        system: String,
        generator: String,
        expected: usize,
        got: usize,
    },
    #[error("`{generator}` is not a symmetry: the invariance residual is non-zero (value {value:.6e} at a witness binding)")]
    NotASymmetry {
        generator: String,
        value: f64,
        witness: Witness,
    },
    #[error("classical charges need an eps-independent (xi, zeta); `{generator}` depends on deviations")]
    EpsDependent { generator: String },
    #[error("gamma-gradient charges need xi = 0 and constant zeta and eta; `{generator}` does not qualify")]
    NotIgnorableTranslation { generator: String },
    #[error(transparent)]
    ZeroTest(#[from] ZeroTestError),
    #[error(transparent)]
    Derivation(#[from] DerivationError),
}

/// Outcome of the invariance check. The verdict is exactly the zero test
/// applied to the residual under the same configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub residual: Expression,
    pub verdict: ZeroVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargeKind {
    Classical,
    Extended,
}

/// A named conserved quantity. Classical charges live on the base state;
/// extended charges involve the deviation block as well. `verified` is
/// false only for charges forced out of a non-symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct Charge {
    pub name: String,
    pub kind: ChargeKind,
    pub expr: Expression,
    pub verified: bool,
}

impl Charge {
    /// Wrap an arbitrary expression as an unverified monitored quantity.
    pub fn unverified(name: &str, kind: ChargeKind, expr: Expression) -> Charge {
        Charge {
            name: name.to_string(),
            kind,
            expr,
            verified: false,
        }
    }
}

fn check_fit(sys: &SystemDef, g: &Generator) -> Result<(), SymmetryError> {
    if g.zeta().len() != sys.n() || g.eta().len() != sys.n() {
        return Err(SymmetryError::Mismatch {
            system: sys.name().to_string(),
            generator: g.name().to_string(),
            expected: sys.n(),
            got: g.zeta().len(),
        });
    }
    Ok(())
}

fn dt(e: &Expression) -> Expression {
    e.total_time_derivative()
        .expect("generator data and densities are placeholder-free")
}

/// Invariance residual of the prolonged density under a generator:
/// the prolonged vector field applied to gamma, plus `gamma * D(xi)`,
/// minus the gauge rate. Zero (symbolically or numerically) means the
/// generator is a symmetry.
pub fn check_invariance(
    sys: &SystemDef,
    gamma: &ProlongedDensity,
    g: &Generator,
    cfg: &ZeroTestConfig,
) -> Result<InvarianceReport, SymmetryError> {
    check_fit(sys, g)?;
    let residual = invariance_residual(sys, &gamma.gamma, g, true);
    let verdict = residual.is_zero(cfg)?;
    Ok(InvarianceReport { residual, verdict })
}

/// Shared residual construction. With `extended` the deviation slots
/// participate (density = gamma); without, the eta terms are dropped and
/// the density is the Lagrangian restricted to `(xi, zeta)`.
fn invariance_residual(
    sys: &SystemDef,
    density: &Expression,
    g: &Generator,
    extended: bool,
) -> Expression {
    let xi = g.xi();
    let d_xi = dt(xi);
    let mut terms = Vec::new();
    terms.push(xi * &density.differentiate(&Symbol::time()));
    for i in 0..sys.n() {
        let zeta = &g.zeta()[i];
        let v = Expression::symbol(sys.velocity(i));
        terms.push(zeta * &density.differentiate(&sys.coord(i)));
        terms.push((dt(zeta) - &v * &d_xi) * density.differentiate(&sys.velocity(i)));
        if extended {
            let eta = &g.eta()[i];
            let w = Expression::symbol(sys.deviation_velocity(i));
            terms.push(eta * &density.differentiate(&sys.deviation(i)));
            terms.push(
                (dt(eta) - &w * &d_xi) * density.differentiate(&sys.deviation_velocity(i)),
            );
        }
    }
    terms.push(density * &d_xi);
    if let Some(gauge) = effective_gauge(g, extended) {
        terms.push(-gauge
            .total_time_derivative()
            .expect("gauge terms are placeholder-free"));
    }
    Expression::sum(terms)
}

/// The gauge used by the classical route is the generator's gauge with the
/// deviation block set to zero; the extended route uses it as written.
fn effective_gauge(g: &Generator, extended: bool) -> Option<Expression> {
    let gauge = g.gauge()?;
    if extended {
        return Some(gauge.clone());
    }
    let mut zeroed = BTreeMap::new();
    for s in gauge.symbols() {
        if matches!(
            s.kind(),
            SymbolKind::Deviation | SymbolKind::DeviationVelocity
        ) {
            zeroed.insert(s, Expression::zero());
        }
    }
    Some(gauge.substitute(&zeroed))
}

/// The extended conserved charge of a zero-verdict generator:
/// `tau = gamma*xi + dgamma/dv^a (zeta^a - v^a xi)
///      + dgamma/dw^a (eta^a - w^a xi) - gauge`.
pub fn extended_charge(
    sys: &SystemDef,
    gamma: &ProlongedDensity,
    g: &Generator,
    cfg: &ZeroTestConfig,
) -> Result<Charge, SymmetryError> {
    let report = check_invariance(sys, gamma, g, cfg)?;
    match report.verdict {
        ZeroVerdict::NonZero(witness) => Err(SymmetryError::NotASymmetry {
            generator: g.name().to_string(),
            value: witness.value,
            witness,
        }),
        _ => Ok(extended_charge_unchecked(sys, gamma, g, true)),
    }
}

/// The would-be extended charge without the symmetry precondition; the
/// result is tagged unverified unless the caller vouches for it.
pub fn extended_charge_unchecked(
    sys: &SystemDef,
    gamma: &ProlongedDensity,
    g: &Generator,
    verified: bool,
) -> Charge {
    let xi = g.xi();
    let gamma = &gamma.gamma;
    let mut terms = vec![gamma * xi];
    for i in 0..sys.n() {
        let v = Expression::symbol(sys.velocity(i));
        let w = Expression::symbol(sys.deviation_velocity(i));
        terms.push(
            gamma.differentiate(&sys.velocity(i)) * (&g.zeta()[i] - &(&v * xi)),
        );
        terms.push(
            gamma.differentiate(&sys.deviation_velocity(i)) * (&g.eta()[i] - &(&w * xi)),
        );
    }
    if let Some(gauge) = g.gauge() {
        terms.push(-gauge);
    }
    Charge {
        name: format!("{}_extended", g.name()),
        kind: ChargeKind::Extended,
        expr: Expression::sum(terms),
        verified,
    }
}

/// The classical conserved charge of a generator whose `(xi, zeta)` part
/// is an eps-independent symmetry of the Lagrangian itself:
/// `c = L*xi + dL/dv^a (zeta^a - v^a xi) - gauge|_{eps=w=0}`.
pub fn classical_charge(
    sys: &SystemDef,
    g: &Generator,
    cfg: &ZeroTestConfig,
) -> Result<Charge, SymmetryError> {
    check_fit(sys, g)?;
    let eps_dependent = std::iter::once(g.xi())
        .chain(g.zeta())
        .any(|e| e.contains_kind(SymbolKind::Deviation));
    if eps_dependent {
        return Err(SymmetryError::EpsDependent {
            generator: g.name().to_string(),
        });
    }
    let residual = invariance_residual(sys, sys.lagrangian(), g, false);
    if let ZeroVerdict::NonZero(witness) = residual.is_zero(cfg)? {
        return Err(SymmetryError::NotASymmetry {
            generator: g.name().to_string(),
            value: witness.value,
            witness,
        });
    }

    let l = sys.lagrangian();
    let xi = g.xi();
    let mut terms = vec![l * xi];
    for i in 0..sys.n() {
        let v = Expression::symbol(sys.velocity(i));
        terms.push(l.differentiate(&sys.velocity(i)) * (&g.zeta()[i] - &(&v * xi)));
    }
    if let Some(gauge) = effective_gauge(g, false) {
        terms.push(-gauge);
    }
    Ok(Charge {
        name: format!("{}_classical", g.name()),
        kind: ChargeKind::Classical,
        expr: Expression::sum(terms),
        verified: true,
    })
}

/// For an ignorable-style translation (`xi = 0`, constant `zeta` and
/// `eta`), the velocity-gradient component `sum_a dgamma/dv^a zeta^a` of
/// the extended charge is conserved on its own.
pub fn gamma_gradient_charge(
    sys: &SystemDef,
    gamma: &ProlongedDensity,
    g: &Generator,
) -> Result<Charge, SymmetryError> {
    check_fit(sys, g)?;
    let constant_shifts = g
        .zeta()
        .iter()
        .chain(g.eta())
        .all(|e| e.as_constant().is_some());
    if !g.xi().is_const_zero() || !constant_shifts {
        return Err(SymmetryError::NotIgnorableTranslation {
            generator: g.name().to_string(),
        });
    }
    let terms: Vec<Expression> = (0..sys.n())
        .map(|i| gamma.gamma.differentiate(&sys.velocity(i)) * g.zeta()[i].clone())
        .collect();
    Ok(Charge {
        name: format!("{}_gamma_gradient", g.name()),
        kind: ChargeKind::Extended,
        expr: Expression::sum(terms),
        verified: true,
    })
}

/// Total time derivative of a charge with all accelerations eliminated
/// through the equations of motion and the variational equations. Zero
/// under the zero test certifies conservation symbolically.
pub fn charge_rate_on_shell(
    sys: &SystemDef,
    charge: &Charge,
) -> Result<Expression, SymmetryError> {
    let shell = on_shell(sys)?;
    let rate = charge
        .expr
        .total_time_derivative()
        .expect("charges are placeholder-free");
    Ok(shell.eliminate(&rate))
}
