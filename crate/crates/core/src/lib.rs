//! Quantum-speed-limit estimation for driven multilevel ladders of avoided
//! crossings, by Krotov optimal control.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod krotov;
pub mod linalg;
pub mod model;
pub mod protocols;
pub mod qsl;

pub use error::{QslError, Result};
