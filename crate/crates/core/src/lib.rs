pub mod error;
pub mod grid;
pub mod model;
pub mod operator;
pub mod dynamics;
pub mod spectral;
pub mod entropy;
pub mod analytics;
pub mod config;
pub mod io;
pub mod run;
pub mod cli;

pub use error::{Error, Result};
pub use grid::Grid;
pub use model::{
    build_named_kernel, gamma_at, validate_kernel, DivisionLaw, FeatureSet, GrowthLaw, Kernel,
    KernelReport, Model, NamedKernel,
};
