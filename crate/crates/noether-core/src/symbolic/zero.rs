//! Randomized zero testing for expressions the canonicalizer cannot decide.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::eval::EvalError;
use super::expr::Expression;
use super::symbol::Symbol;

/// Fixed default seed for the randomized zero test; every verdict reported
/// by the toolkit is reproducible from it.
pub const DEFAULT_SEED: u64 = 0x6e6f_6574_6865_7221;

/// Default number of random trial bindings.
pub const DEFAULT_TRIALS: usize = 100;

/// Default magnitude tolerance for a numeric zero verdict.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Maximum redraws of a single trial binding after a domain error.
const MAX_REDRAWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroTestConfig {
    pub trials: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for ZeroTestConfig {
    fn default() -> Self {
        ZeroTestConfig {
            trials: DEFAULT_TRIALS,
            tol: DEFAULT_TOL,
            seed: DEFAULT_SEED,
        }
    }
}

impl ZeroTestConfig {
    pub fn with_seed(seed: u64) -> Self {
        ZeroTestConfig {
            seed,
            ..Default::default()
        }
    }
}

/// A binding at which the expression evaluated away from zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub binding: Vec<(Symbol, f64)>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ZeroVerdict {
    /// The canonical form is the constant zero.
    SymbolicZero,
    /// Every random trial evaluated within tolerance of zero.
    NumericallyZero,
    /// Some trial evaluated away from zero; the witness records it.
    NonZero(Witness),
}

impl ZeroVerdict {
    pub fn is_zero(&self) -> bool {
        !matches!(self, ZeroVerdict::NonZero(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            ZeroVerdict::SymbolicZero => "symbolic-zero",
            ZeroVerdict::NumericallyZero => "numerically-zero",
            ZeroVerdict::NonZero(_) => "non-zero",
        }
    }
}

#[derive(Debug, Error)]
pub enum ZeroTestError {
    #[error("trial {trial} exhausted {MAX_REDRAWS} redraws; last failure: {source}")]
    PersistentDomainError { trial: usize, source: EvalError },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

impl Expression {
    /// Three-way zero test: symbolic when the canonical form is literally
    /// zero, otherwise randomized evaluation at `trials` bindings drawn
    /// uniformly from [-1, 1] per symbol under a deterministic seed.
    /// Domain errors redraw the trial, up to `MAX_REDRAWS` times each.
    pub fn is_zero(&self, cfg: &ZeroTestConfig) -> Result<ZeroVerdict, ZeroTestError> {
        if cfg.trials == 0 {
            return Err(ZeroTestError::InvalidConfig("trials must be at least 1"));
        }
        if !(cfg.tol > 0.0) {
            return Err(ZeroTestError::InvalidConfig("tol must be positive"));
        }
        if self.is_const_zero() {
            return Ok(ZeroVerdict::SymbolicZero);
        }
        let symbols: Vec<Symbol> = self.symbols().into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut binding: HashMap<Symbol, f64> = HashMap::with_capacity(symbols.len());
        for trial in 0..cfg.trials {
            let mut redraws = 0;
            let value = loop {
                binding.clear();
                for s in &symbols {
                    binding.insert(s.clone(), rng.random_range(-1.0..=1.0));
                }
                match self.evaluate_map(&binding) {
                    Ok(v) => break v,
                    Err(e) => {
                        redraws += 1;
                        if redraws > MAX_REDRAWS {
                            return Err(ZeroTestError::PersistentDomainError {
                                trial,
                                source: e,
                            });
                        }
                    }
                }
            };
            if !(value.abs() <= cfg.tol) {
                let mut pairs: Vec<(Symbol, f64)> = symbols
                    .iter()
                    .map(|s| (s.clone(), binding[s]))
                    .collect();
                pairs.sort_by(|a, b| a.0.cmp(&b.0));
                return Ok(ZeroVerdict::NonZero(Witness {
                    binding: pairs,
                    value,
                }));
            }
        }
        Ok(ZeroVerdict::NumericallyZero)
    }

    /// Zero test under the default configuration.
    pub fn is_zero_default(&self) -> Result<ZeroVerdict, ZeroTestError> {
        self.is_zero(&ZeroTestConfig::default())
    }
}
