//! Semimartingale local time, the local time-space integral and stochastic
//! differential equations involving local time, on uniform time grids.

pub mod calculus;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod localtime;
pub mod ltspace;
pub mod measure;
pub mod pathsim;
pub mod quad;
pub mod rng;
pub mod sdelt;
pub mod stats;

pub use error::{Error, Result};
pub use localtime::{local_time_field, local_time_occupation, local_time_tanaka, LocalTimeField, SideConvention};
pub use measure::{BVFunction, Density, RadonMeasure, Rect};
pub use pathsim::{SamplePath, TimeGrid};
pub use rng::RngStream;
pub use sdelt::{solve_sdelt, validate_spec, SdeltSpec};
