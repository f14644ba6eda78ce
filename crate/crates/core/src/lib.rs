//! Locating a party from singlet-correlated qubits.
//!
//! Alice holds halves of `N` singlets, measures them along her unknown
//! vertical axis and announces the results. Bob then holds `N` qubits, each
//! aligned or anti-aligned with that axis, and must estimate it. The crate
//! simulates the protocol and provides Bob's local estimators and a see-saw
//! optimizer for collective measurements. It also has a Monte Carlo benchmark
//! harness and a framed wire protocol so the two parties can run as separate
//! processes.

// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bloch;
pub mod channel;
pub mod estimators;
pub mod experiments;
pub mod linalg;
pub mod numfmt;
pub mod protocol;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(linalg::LinalgError),
    #[error("size limit: {0}")]
    SizeLimit(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error(transparent)]
    Channel(#[from] channel::ChannelError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub use bloch::{Direction, SphereGrid, Spin};
pub use estimators::{Povm, SeesawConfig, Strategy};
pub use protocol::{Pattern, ProtocolConfig, Transcript};
