//! Experiment driver: dataset generation, training, evaluation grids,
//! ablations, edge-probability sweeps and training-curve plots.

pub mod commands;
pub mod config;
pub mod plot;
