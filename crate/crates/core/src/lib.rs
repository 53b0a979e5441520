pub mod augment;
pub mod cli;
pub mod data;
pub mod diagnose;
pub mod eval;
pub mod geometry;
pub mod models;
pub mod nn;
pub mod train;
