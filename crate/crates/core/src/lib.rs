// SPDX-License-Identifier: MIT OR Apache-2.0

#![forbid(unsafe_code)]

pub mod bounds;
pub mod detect;
pub mod error;
pub mod harness;
pub mod io;
pub mod signal;
pub mod solver1d;
pub mod solvernd;

pub use error::{Error, Result};
