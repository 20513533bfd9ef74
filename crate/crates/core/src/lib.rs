//! Worst-case robust linear precoding for multi-cell, multi-user MISO downlinks
//! whose base stations only know their channels up to a norm-bounded error.
//!
//! The crate is organised bottom-up:
//!
//! * [`instance`]: problem data, random instances, persistence.
//! * [`worst_case`]: closed-form worst-case SINR/MSE/SLINR evaluations and
//!   the perturbation-search oracle.
//! * [`conic`]: a small real cone-program IR, complex embedding and the
//!   robust-constraint (S-lemma) LMI builders, solved through Clarabel.
//! * [`maxmin`], [`sumrate`], [`distributed`], [`baselines`]: the design
//!   algorithms.
//! * [`harness`]: experiment sweeps, CSV/JSON output and SVG figures.

// Links the system OpenBLAS used by the PSD cone in the conic backend.
extern crate openblas_src;

pub mod baselines;
pub mod conic;
pub mod distributed;
pub mod error;
pub mod harness;
pub mod instance;
pub mod linalg;
pub mod maxmin;
pub mod sumrate;
pub mod worst_case;

pub use error::{Error, Result};
pub use instance::{EqualizerSet, NetworkConfig, NetworkInstance, PerturbationSet, PrecoderSet};
