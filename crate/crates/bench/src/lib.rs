//! Experiment runner for the manifold augmented Lagrangian solvers: builds
//! sparse PCA and sparse CCA instances, runs a solver, writes CSV traces and
//! JSON summaries, and compares traces by objective gap.

pub mod compare;
pub mod config;
pub mod error;
pub mod runner;
pub mod trace;
