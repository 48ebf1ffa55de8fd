//! Event-triggered resilient filtering for 2-D shift-varying Fornasini-Marchesini systems
//! with asynchronous measurement delays and binary bit-flip channels.

pub mod eds;
pub mod error;
pub mod etm;
pub mod filter;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod pipeline;
pub mod reconstruct;
pub mod rng;
pub mod scenario;
pub mod system;

pub use error::{Error, Result};
