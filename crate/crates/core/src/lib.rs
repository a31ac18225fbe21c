//! Agent-based macroeconomic simulator calibrated from a Social Accounting
//! Matrix.
//!
//! A SAM is parsed ([`sam`]), turned into monthly targets and technical
//! coefficients ([`calibration`]), and used to deploy an economy of
//! households, firms, banks, a government, a central bank and an external
//! sector ([`engine`]). The resulting flows are recorded in a double-entry
//! ledger from which a computed SAM and reports are produced
//! ([`accounting`]).

pub mod accounting;
pub mod agents;
pub mod calibration;
pub mod config;
pub mod engine;
pub mod error;
pub mod manifest;
pub mod markets;
pub mod rng;
pub mod sam;
pub mod synth;

pub use calibration::Calibration;
pub use config::SimConfig;
pub use engine::{run, RunResult, World};
pub use manifest::Manifest;
pub use error::{SamError, SimError};
pub use sam::SamTable;
