//! Private location intersection with Paillier encryption.
//!
//! A client encrypts the bit vector of spatio-temporal grid cells it visited;
//! the server raises each ciphertext to its own bit and rerandomizes, so the
//! client learns the intersection (or only its size) and the server learns
//! nothing.

pub mod bench;
pub mod exec;
pub mod grid;
pub mod paillier;
pub mod psi;
pub mod service;

pub use exec::Execution;
