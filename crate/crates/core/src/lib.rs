//! Federated learning simulator built around a split parameter vector.
//!
//! A model's flat parameter vector is cut at a layer boundary into a
//! *generic* prefix (feature extraction) and a *specific* suffix
//! (classification head). Strategies differ only in which slice clients
//! send to the server:
//!
//! - [`Strategy::FedAvg`] shares the whole vector,
//! - [`Strategy::Hdafl`] shares the generic slice and keeps the head private,
//! - [`Strategy::LgComplement`] shares the head and keeps the extractor private.
//!
//! Modules:
//!
//! - [`nn`]: dense / ReLU / conv1d / flatten layers with hand-written backprop.
//! - [`data`]: synthetic generators, partitioners and the CSV dataset format.
//! - [`federation`]: the server/client round protocol.
//! - [`metrics`]: evaluation, byte accounting and per-round CSV export.

pub mod data;
pub mod federation;
pub mod metrics;
pub mod nn;
pub mod seed;

pub use federation::Strategy;
