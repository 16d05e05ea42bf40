//! Deterministic discrete-event simulator for secured position location and
//! tracking in a mobile ad hoc cluster.
//!
//! Nodes verify each other with a chained-key challenge protocol, detected
//! malicious nodes are tracked by pairs of friendly references using
//! sectored beams and two-way ranging, and references are switched when a
//! pair loses range, zone lock, a free sector, or mutual trust.

pub mod channel;
pub mod config;
pub mod crypto;
pub mod engine;
pub mod geometry;
pub mod metrics;
pub mod mobility;
pub mod protocol;
pub mod scenarios;
