//! Symbol identities for the quantities expressions are built from.

use std::fmt;
use std::sync::Arc;

/// Role a symbol plays within a system.
///
/// The declaration order fixes the deterministic symbol ordering used by
/// canonical forms: velocity-bearing symbols sort ahead of configuration
/// symbols, parameters after both, and acceleration placeholders last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SymbolKind {
    /// The independent variable `t`.
    Time,
    /// Generalized velocity `d(q)` of a coordinate.
    Velocity,
    /// Velocity `d(eps(q))` of a deviation.
    DeviationVelocity,
    /// Generalized coordinate.
    Coordinate,
    /// Deviation `eps(q)` paired with a coordinate.
    Deviation,
    /// Named constant bound to a numeric value at evaluation time.
    Parameter,
    /// Acceleration placeholder `dd(q)` introduced by total time derivatives.
    /// Never user-nameable.
    Acceleration,
    /// Deviation-acceleration placeholder `dd(eps(q))`. Never user-nameable.
    DeviationAcceleration,
}

impl SymbolKind {
    /// Placeholders stand for second derivatives that only the equations of
    /// motion can resolve.
    pub fn is_placeholder(self) -> bool {
        matches!(
            self,
            SymbolKind::Acceleration | SymbolKind::DeviationAcceleration
        )
    }
}

/// An atomic named quantity. `(kind, name)` identifies a symbol within a
/// system; coordinate-derived kinds carry the index of their coordinate.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol {
    kind: SymbolKind,
    name: Arc<str>,
    index: Option<u32>,
}

impl Symbol {
    fn new(kind: SymbolKind, name: &str, index: Option<u32>) -> Self {
        Symbol {
            kind,
            name: Arc::from(name),
            index,
        }
    }

    pub fn time() -> Self {
        Symbol::new(SymbolKind::Time, "t", None)
    }

    pub fn coordinate(name: &str, index: u32) -> Self {
        Symbol::new(SymbolKind::Coordinate, name, Some(index))
    }

    pub fn velocity(name: &str, index: u32) -> Self {
        Symbol::new(SymbolKind::Velocity, name, Some(index))
    }

    pub fn deviation(name: &str, index: u32) -> Self {
        Symbol::new(SymbolKind::Deviation, name, Some(index))
    }

    pub fn deviation_velocity(name: &str, index: u32) -> Self {
        Symbol::new(SymbolKind::DeviationVelocity, name, Some(index))
    }

    pub fn parameter(name: &str) -> Self {
        Symbol::new(SymbolKind::Parameter, name, None)
    }

    pub fn acceleration(name: &str, index: u32) -> Self {
        Symbol::new(SymbolKind::Acceleration, name, Some(index))
    }

    pub fn deviation_acceleration(name: &str, index: u32) -> Self {
        Symbol::new(SymbolKind::DeviationAcceleration, name, Some(index))
    }

    pub fn kind(&self) -> SymbolKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn index(&self) -> Option<u32> {
        self.index
    }

    pub fn is_placeholder(&self) -> bool {
        self.kind.is_placeholder()
    }

    /// Rebuild this symbol with a different coordinate-derived kind,
    /// keeping name and index. Panics if `self` carries no index.
    pub(crate) fn with_kind(&self, kind: SymbolKind) -> Symbol {
        debug_assert!(self.index.is_some());
        Symbol {
            kind,
            name: self.name.clone(),
            index: self.index,
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SymbolKind::Time | SymbolKind::Coordinate | SymbolKind::Parameter => {
                write!(f, "{}", self.name)
            }
            SymbolKind::Velocity => write!(f, "d({})", self.name),
            SymbolKind::Deviation => write!(f, "eps({})", self.name),
            SymbolKind::DeviationVelocity => write!(f, "d(eps({}))", self.name),
            SymbolKind::Acceleration => write!(f, "dd({})", self.name),
            SymbolKind::DeviationAcceleration => write!(f, "dd(eps({}))", self.name),
        }
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}
