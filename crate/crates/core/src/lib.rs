//! Pilot-wave (de Broglie–Bohm) dynamics on configuration-space grids.
//!
//! The crate evolves wave functions with the Schrödinger equation, moves
//! configuration points along the guidance flow, samples quantum-equilibrium
//! ensembles, models pointer measurements, and bundles canonical experiments
//! as reproducible scenarios with statistical checks.

pub mod cli;
pub mod derivatives;
pub mod equilibrium;
pub mod grid;
pub mod guidance;
pub mod io;
pub mod measurement;
pub mod propagator;
pub mod scenarios;

pub use grid::{make_grid, Configuration, Grid, GridError, ParticleSystem, WaveFunction};
