//! Network service: query server, key-exchange directory, decryption server
//! and the matching blocking client.

mod client;
pub mod config;
pub mod frame;
pub mod ledger;
mod server;
pub mod wire;

use thiserror::Error;

pub use client::{Client, QueryOutcome};
pub use config::{Role, ServerConfig};
pub use server::{Server, ServerSettings};

use crate::grid::GridError;
use crate::paillier::PaillierError;
use crate::psi::ProtocolError;
use wire::{ErrorCode, WireError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("server closed the connection")]
    Closed,
    #[error("server error {}: {message}", code.as_str())]
    Server { code: ErrorCode, message: String },
    #[error("unexpected {0} reply")]
    Unexpected(&'static str),
}
