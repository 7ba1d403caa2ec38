pub mod analysis;
pub mod config;
pub mod dataset;
pub mod geometry;
pub mod model;
pub mod pipeline;
pub mod prompting;
pub mod specialists;
