//! Symbolic and numeric toolkit for finite-dimensional Lagrangian systems.
//!
//! Given a Lagrangian, the crate constructs the tangent-space prolonged
//! density, derives the equations of motion and the variational (Jacobi)
//! equations along two independent routes, verifies continuous symmetries
//! in infinitesimal form, builds the classical and extended conserved
//! charges they generate, and certifies charge conservation numerically
//! along integrated trajectories.
//!
//! Module map:
//! - [`symbolic`]: expression trees, differentiation, canonical forms,
//!   evaluation, randomized zero testing.
//! - [`model`]: the system-definition language and initial-state files.
//! - [`prolongation`]: the prolonged density and both derivations of the
//!   variational equations, plus the explicit first-order assembly.
//! - [`symmetry`]: invariance residuals and conserved charges.
//! - [`dynamics`]: fixed-step integration, drift monitoring, and the
//!   finite-difference tangent oracle.
//! - [`corpus`]: the bundled example systems.
//! - [`verify`]: the property suite run by the `verify` command.

pub mod corpus;
pub mod dynamics;
pub mod model;
pub mod prolongation;
pub mod symbolic;
pub mod symmetry;
pub mod verify;
