//! Command output documents. Each document serializes to JSON for the
//! structured format and renders one field per line as text; the two
//! formats mirror each other exactly.

use std::fmt;

use noether_core::dynamics::DriftReport;
use noether_core::symbolic::{Witness, ZeroVerdict};
use noether_core::verify::PropertyResult;
use serde::Serialize;

#[derive(Serialize)]
pub struct DeriveDoc {
    pub system: String,
    pub coords: Vec<String>,
    pub gamma: String,
    pub mass_matrix: Vec<Vec<String>>,
    pub euler_lagrange: Vec<String>,
    pub variational: Vec<String>,
}

impl fmt::Display for DeriveDoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "system: {}", self.system)?;
        writeln!(f, "coords: {}", self.coords.join(" "))?;
        writeln!(f, "gamma: {}", self.gamma)?;
        for (i, row) in self.mass_matrix.iter().enumerate() {
            for (j, entry) in row.iter().enumerate() {
                writeln!(f, "mass[{i}][{j}]: {entry}")?;
            }
        }
        for (c, r) in self.coords.iter().zip(&self.euler_lagrange) {
            writeln!(f, "euler_lagrange[{c}]: {r}")?;
        }
        for (c, r) in self.coords.iter().zip(&self.variational) {
            writeln!(f, "variational[{c}]: {r}")?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
pub struct WitnessEntry {
    pub symbol: String,
    pub value: f64,
}

#[derive(Serialize)]
pub struct CheckEntry {
    pub generator: String,
    pub residual: String,
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<WitnessEntry>>,
}

impl CheckEntry {
    pub fn new(generator: &str, residual: String, verdict: &ZeroVerdict) -> Self {
        let witness = match verdict {
            ZeroVerdict::NonZero(Witness { binding, .. }) => Some(
                binding
                    .iter()
                    .map(|(s, v)| WitnessEntry {
                        symbol: s.to_string(),
                        value: *v,
                    })
                    .collect(),
            ),
            _ => None,
        };
        let witness_value = match verdict {
            ZeroVerdict::NonZero(w) => Some(w.value),
            _ => None,
        };
        CheckEntry {
            generator: generator.to_string(),
            residual,
            verdict: verdict.label().to_string(),
            witness_value,
            witness,
        }
    }
}

#[derive(Serialize)]
pub struct CheckDoc {
    pub system: String,
    pub reports: Vec<CheckEntry>,
}

impl fmt::Display for CheckDoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "system: {}", self.system)?;
        for r in &self.reports {
            writeln!(f, "generator: {}", r.generator)?;
            writeln!(f, "  residual: {}", r.residual)?;
            writeln!(f, "  verdict: {}", r.verdict)?;
            if let Some(value) = r.witness_value {
                writeln!(f, "  witness value: {value:.6e}")?;
            }
            if let Some(witness) = &r.witness {
                for w in witness {
                    writeln!(f, "  witness {} = {:.17}", w.symbol, w.value)?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
pub struct ChargeEntry {
    pub generator: String,
    pub name: String,
    pub kind: String,
    pub expression: String,
    pub verified: bool,
}

#[derive(Serialize)]
pub struct ChargeDoc {
    pub system: String,
    pub charges: Vec<ChargeEntry>,
}

impl fmt::Display for ChargeDoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "system: {}", self.system)?;
        for c in &self.charges {
            writeln!(f, "charge: {}", c.name)?;
            writeln!(f, "  generator: {}", c.generator)?;
            writeln!(f, "  kind: {}", c.kind)?;
            writeln!(f, "  expression: {}", c.expression)?;
            if !c.verified {
                writeln!(f, "  unverified: true")?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
pub struct SimulateDoc {
    pub system: String,
    pub t_end: f64,
    pub dt: f64,
    pub tolerance: f64,
    pub drift: Vec<DriftReport>,
    pub passed: bool,
}

impl fmt::Display for SimulateDoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "system: {}", self.system)?;
        writeln!(f, "t_end: {}", self.t_end)?;
        writeln!(f, "dt: {}", self.dt)?;
        writeln!(f, "tolerance: {:.3e}", self.tolerance)?;
        for d in &self.drift {
            writeln!(
                f,
                "charge {}: initial {:.6e}, max drift {:.3e}, relative drift {:.3e}",
                d.charge, d.initial, d.max_drift, d.relative_drift
            )?;
        }
        writeln!(f, "passed: {}", self.passed)?;
        Ok(())
    }
}

#[derive(Serialize)]
pub struct VerifyDoc {
    pub seed: u64,
    pub results: Vec<PropertyResult>,
    pub passed: bool,
}

impl fmt::Display for VerifyDoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed: {}", self.seed)?;
        for r in &self.results {
            writeln!(
                f,
                "[{}] {} / {}: {}",
                if r.passed { "pass" } else { "FAIL" },
                r.system,
                r.property,
                r.detail
            )?;
        }
        writeln!(f, "passed: {}", self.passed)?;
        Ok(())
    }
}
