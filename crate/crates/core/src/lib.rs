pub mod cad;
pub mod dataset;
pub mod decoder;
pub mod diffusion;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod numerics;

#[cfg(test)]
mod fixtures;
