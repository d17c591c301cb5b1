pub mod anchor;
pub mod config;
pub mod continuous;
pub mod diagnostics;
pub mod distance;
pub mod engine;
pub mod error;
pub mod gp;
pub mod inversion;
pub mod output;
pub mod seed;
pub mod tasks;
pub mod trust_region;
pub mod types;
pub mod vae;
