//! The bundled example systems used by the verification suite and the
//! command-line `verify` subcommand. Each entry pairs a definition file
//! with an initial state for the combined base + tangent system.

use crate::model::{parse_system, Generator, InitialState, SystemDef};

#[derive(Debug, Clone, Copy)]
pub struct CorpusEntry {
    pub name: &'static str,
    pub definition: &'static str,
    pub initial_state: &'static str,
}

pub const CORPUS: &[CorpusEntry] = &[
    CorpusEntry {
        name: "free_particle",
        definition: include_str!("../corpus/free_particle.ndl"),
        initial_state: include_str!("../corpus/free_particle.init.json"),
    },
    CorpusEntry {
        name: "oscillator",
        definition: include_str!("../corpus/oscillator.ndl"),
        initial_state: include_str!("../corpus/oscillator.init.json"),
    },
    CorpusEntry {
        name: "pendulum",
        definition: include_str!("../corpus/pendulum.ndl"),
        initial_state: include_str!("../corpus/pendulum.init.json"),
    },
    CorpusEntry {
        name: "ignorable",
        definition: include_str!("../corpus/ignorable.ndl"),
        initial_state: include_str!("../corpus/ignorable.init.json"),
    },
    CorpusEntry {
        name: "central_potential",
        definition: include_str!("../corpus/central_potential.ndl"),
        initial_state: include_str!("../corpus/central_potential.init.json"),
    },
];

pub fn names() -> Vec<&'static str> {
    CORPUS.iter().map(|e| e.name).collect()
}

pub fn entry(name: &str) -> Option<&'static CorpusEntry> {
    CORPUS.iter().find(|e| e.name == name)
}

/// Parse a bundled system. Panics only if the bundled files are broken,
/// which the test suite rules out.
pub fn load(name: &str) -> Option<(SystemDef, Vec<Generator>)> {
    let e = entry(name)?;
    Some(parse_system(e.definition).expect("bundled corpus definitions parse"))
}

pub fn initial_state(name: &str, sys: &SystemDef) -> Option<InitialState> {
    let e = entry(name)?;
    Some(
        crate::model::parse_initial_state(e.initial_state, sys)
            .expect("bundled corpus initial states parse"),
    )
}
