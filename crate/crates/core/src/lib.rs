//! Path following for a two-wheeled walker with brake-only steering.

pub mod analysis;
pub mod cli;
pub mod controller;
pub mod path;
pub mod simulator;
pub mod vehicle;
