pub mod calibration;
pub mod charfn;
pub mod cli;
pub mod cone;
pub mod config;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod linalg;
pub mod mc;
pub mod operators;
pub mod report;
pub mod sampling;
pub mod selftest;
pub mod star;
pub mod testfn;
pub mod util;

pub use cone::ConeModel;
pub use error::{ConeError, Result};
pub use linalg::{Matrix, Point};
pub use mc::{McConfig, McEstimate};
