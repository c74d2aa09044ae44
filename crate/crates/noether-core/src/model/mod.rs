//! System definitions: the text format describing coordinates, parameters,
//! the Lagrangian, and symmetry generators, plus initial-state files.

mod lexer;
mod parser;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::symbolic::{Expression, Symbol, SymbolKind};

pub use parser::parse_system;

/// Words with fixed meaning in the definition language; none may be used
/// as a coordinate, parameter, system, or generator name.
pub const RESERVED_WORDS: &[&str] = &[
    "system",
    "coords",
    "param",
    "lagrangian",
    "generator",
    "xi",
    "zeta",
    "eta",
    "gauge",
    "t",
    "d",
    "dd",
    "eps",
    "sin",
    "cos",
    "exp",
    "ln",
    "sqrt",
];

pub fn is_reserved(word: &str) -> bool {
    RESERVED_WORDS.contains(&word)
}

/// A parse or validation failure with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct Diagnostic {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl Diagnostic {
    pub fn new(line: u32, col: u32, message: impl Into<String>) -> Self {
        Diagnostic {
            line,
            col,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

/// A named system: ordered coordinates, numeric parameter bindings, and
/// the Lagrangian over `{t, q, d(q), parameters}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemDef {
    name: String,
    coords: Vec<String>,
    params: BTreeMap<String, f64>,
    lagrangian: Expression,
}

impl SystemDef {
    pub fn new(
        name: &str,
        coords: Vec<String>,
        params: BTreeMap<String, f64>,
        lagrangian: Expression,
    ) -> Result<Self, Diagnostic> {
        let at = |msg: String| Diagnostic::new(1, 1, msg);
        if coords.is_empty() {
            return Err(at("a system needs at least one coordinate".into()));
        }
        for (i, c) in coords.iter().enumerate() {
            if is_reserved(c) {
                return Err(at(format!("`{c}` is a reserved word")));
            }
            if coords[..i].contains(c) {
                return Err(at(format!("duplicate coordinate `{c}`")));
            }
        }
        for p in params.keys() {
            if is_reserved(p) {
                return Err(at(format!("`{p}` is a reserved word")));
            }
            if coords.contains(p) {
                return Err(at(format!(
                    "parameter `{p}` clashes with a coordinate name"
                )));
            }
        }
        let sys = SystemDef {
            name: name.to_string(),
            coords,
            params,
            lagrangian,
        };
        if let Some(msg) = validate_lagrangian_symbols(&sys, &sys.lagrangian) {
            return Err(at(msg));
        }
        Ok(sys)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of coordinates.
    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn coord_index(&self, name: &str) -> Option<usize> {
        self.coords.iter().position(|c| c == name)
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn lagrangian(&self) -> &Expression {
        &self.lagrangian
    }

    pub fn coord(&self, i: usize) -> Symbol {
        Symbol::coordinate(&self.coords[i], i as u32)
    }

    pub fn velocity(&self, i: usize) -> Symbol {
        Symbol::velocity(&self.coords[i], i as u32)
    }

    pub fn deviation(&self, i: usize) -> Symbol {
        Symbol::deviation(&self.coords[i], i as u32)
    }

    pub fn deviation_velocity(&self, i: usize) -> Symbol {
        Symbol::deviation_velocity(&self.coords[i], i as u32)
    }

    pub fn acceleration(&self, i: usize) -> Symbol {
        Symbol::acceleration(&self.coords[i], i as u32)
    }

    pub fn deviation_acceleration(&self, i: usize) -> Symbol {
        Symbol::deviation_acceleration(&self.coords[i], i as u32)
    }

    /// Parameter symbols bound to their numeric values.
    pub fn param_bindings(&self) -> HashMap<Symbol, f64> {
        self.params
            .iter()
            .map(|(name, value)| (Symbol::parameter(name), *value))
            .collect()
    }
}

/// One symmetry's infinitesimal data: time shift `xi`, per-coordinate
/// shifts `zeta`, per-coordinate deviation shifts `eta`, and an optional
/// gauge term for quasi-invariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    name: String,
    xi: Expression,
    zeta: Vec<Expression>,
    eta: Vec<Expression>,
    gauge: Option<Expression>,
}

impl Generator {
    pub fn new(
        sys: &SystemDef,
        name: &str,
        xi: Expression,
        zeta: Vec<Expression>,
        eta: Vec<Expression>,
        gauge: Option<Expression>,
    ) -> Result<Self, Diagnostic> {
        let at = |msg: String| Diagnostic::new(1, 1, msg);
        if zeta.len() != sys.n() || eta.len() != sys.n() {
            return Err(at(format!(
                "generator `{name}` must carry one zeta and eta entry per coordinate"
            )));
        }
        for e in std::iter::once(&xi).chain(&zeta).chain(&eta) {
            if let Some(msg) = validate_generator_symbols(sys, e) {
                return Err(at(msg));
            }
        }
        if let Some(g) = &gauge {
            if let Some(msg) = validate_gauge_symbols(sys, g) {
                return Err(at(msg));
            }
        }
        Ok(Generator {
            name: name.to_string(),
            xi,
            zeta,
            eta,
            gauge,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn xi(&self) -> &Expression {
        &self.xi
    }

    pub fn zeta(&self) -> &[Expression] {
        &self.zeta
    }

    pub fn eta(&self) -> &[Expression] {
        &self.eta
    }

    pub fn gauge(&self) -> Option<&Expression> {
        self.gauge.as_ref()
    }
}

/// Combined initial state for one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CoordInit {
    pub q: f64,
    pub v: f64,
    pub eps: f64,
    pub w: f64,
}

/// Initial data for the combined base + tangent system; one entry per
/// coordinate, in coordinate order.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub t0: f64,
    pub coords: Vec<CoordInit>,
}

impl InitialState {
    /// Flat state vector in the layout `[q.., v.., eps.., w..]`.
    pub fn state_vector(&self) -> Vec<f64> {
        let n = self.coords.len();
        let mut y = vec![0.0; 4 * n];
        for (i, c) in self.coords.iter().enumerate() {
            y[i] = c.q;
            y[n + i] = c.v;
            y[2 * n + i] = c.eps;
            y[3 * n + i] = c.w;
        }
        y
    }
}

/// Reasons an expression is rejected in a given position.
fn symbol_restriction(e: &Expression, forbidden: &[(SymbolKind, &str)]) -> Option<String> {
    for (kind, msg) in forbidden {
        if e.contains_kind(*kind) {
            return Some((*msg).to_string());
        }
    }
    None
}

pub(crate) fn validate_lagrangian_symbols(sys: &SystemDef, e: &Expression) -> Option<String> {
    symbol_restriction(
        e,
        &[
            (
                SymbolKind::Deviation,
                "lagrangian must not depend on deviations",
            ),
            (
                SymbolKind::DeviationVelocity,
                "lagrangian must not depend on deviation velocities",
            ),
            (
                SymbolKind::Acceleration,
                "acceleration placeholders are not allowed in system definitions",
            ),
            (
                SymbolKind::DeviationAcceleration,
                "acceleration placeholders are not allowed in system definitions",
            ),
        ],
    )
    .or_else(|| check_symbols_belong(sys, e))
}

pub(crate) fn validate_generator_symbols(sys: &SystemDef, e: &Expression) -> Option<String> {
    symbol_restriction(
        e,
        &[
            (
                SymbolKind::Velocity,
                "velocity dependence forbidden in generators",
            ),
            (
                SymbolKind::DeviationVelocity,
                "velocity dependence forbidden in generators",
            ),
            (
                SymbolKind::Acceleration,
                "acceleration placeholders are not allowed in system definitions",
            ),
            (
                SymbolKind::DeviationAcceleration,
                "acceleration placeholders are not allowed in system definitions",
            ),
        ],
    )
    .or_else(|| check_symbols_belong(sys, e))
}

pub(crate) fn validate_gauge_symbols(sys: &SystemDef, e: &Expression) -> Option<String> {
    symbol_restriction(
        e,
        &[
            (
                SymbolKind::Acceleration,
                "acceleration placeholders are not allowed in system definitions",
            ),
            (
                SymbolKind::DeviationAcceleration,
                "acceleration placeholders are not allowed in system definitions",
            ),
        ],
    )
    .or_else(|| check_symbols_belong(sys, e))
}

/// Every symbol must reference this system's coordinates and parameters.
fn check_symbols_belong(sys: &SystemDef, e: &Expression) -> Option<String> {
    for s in e.symbols() {
        let ok = match s.kind() {
            SymbolKind::Time => true,
            SymbolKind::Parameter => sys.params.contains_key(s.name()),
            _ => sys
                .coord_index(s.name())
                .is_some_and(|i| Some(i as u32) == s.index()),
        };
        if !ok {
            return Some(match s.kind() {
                SymbolKind::Parameter => format!("unknown parameter `{}`", s.name()),
                _ => format!("unknown coordinate `{}`", s.name()),
            });
        }
    }
    None
}

/// Render a system and its generators back to definition-language text.
/// Reparsing the result yields a structurally identical definition.
pub fn render_system(sys: &SystemDef, gens: &[Generator]) -> String {
    use std::fmt::Write;

    let mut out = String::new();
    writeln!(out, "system {}", sys.name()).unwrap();
    writeln!(out, "coords {}", sys.coords().join(" ")).unwrap();
    for (name, value) in sys.params() {
        writeln!(out, "param {name} = {value}").unwrap();
    }
    writeln!(out, "lagrangian {}", sys.lagrangian()).unwrap();
    for g in gens {
        writeln!(out).unwrap();
        writeln!(out, "generator {}", g.name()).unwrap();
        if !g.xi().is_const_zero() {
            writeln!(out, "xi = {}", g.xi()).unwrap();
        }
        for (i, z) in g.zeta().iter().enumerate() {
            if !z.is_const_zero() {
                writeln!(out, "zeta {} = {z}", sys.coords()[i]).unwrap();
            }
        }
        for (i, e) in g.eta().iter().enumerate() {
            // An omitted eta defaults to zeta, so only divergent entries
            // need rendering.
            if e != &g.zeta()[i] {
                writeln!(out, "eta {} = {e}", sys.coords()[i]).unwrap();
            }
        }
        if let Some(gauge) = g.gauge() {
            writeln!(out, "gauge = {gauge}").unwrap();
        }
    }
    out
}

/// Parse an initial-state file: a JSON object with the starting time `t0`
/// and, per coordinate name, an array `[q0, v0, eps0, w0]` whose trailing
/// entries default to zero.
pub fn parse_initial_state(text: &str, sys: &SystemDef) -> Result<InitialState, Diagnostic> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| {
        Diagnostic::new(e.line() as u32, e.column() as u32, format!("syntax error: {e}"))
    })?;
    let at = |msg: String| Diagnostic::new(1, 1, msg);
    let obj = value
        .as_object()
        .ok_or_else(|| at("initial state must be an object".into()))?;

    let t0 = obj
        .get("t0")
        .ok_or_else(|| at("missing `t0`".into()))?
        .as_f64()
        .ok_or_else(|| at("non-numeric value for `t0`".into()))?;

    for key in obj.keys() {
        if key != "t0" && sys.coord_index(key).is_none() {
            return Err(at(format!("unknown coordinate `{key}`")));
        }
    }

    let mut coords = Vec::with_capacity(sys.n());
    for name in sys.coords() {
        let entry = obj
            .get(name)
            .ok_or_else(|| at(format!("missing coordinate `{name}`")))?;
        let arr = entry
            .as_array()
            .ok_or_else(|| at(format!("coordinate `{name}` must be an array")))?;
        if arr.len() > 4 {
            return Err(at(format!(
                "coordinate `{name}` takes at most 4 entries [q0, v0, eps0, w0]"
            )));
        }
        let mut vals = [0.0; 4];
        for (i, v) in arr.iter().enumerate() {
            vals[i] = v
                .as_f64()
                .ok_or_else(|| at(format!("non-numeric value for coordinate `{name}`")))?;
        }
        coords.push(CoordInit {
            q: vals[0],
            v: vals[1],
            eps: vals[2],
            w: vals[3],
        });
    }
    Ok(InitialState { t0, coords })
}
