//! Packet-size side-channel analysis for encrypted instant-messaging traffic.
//!
//! Encrypted messaging services leak a surprising amount through the sizes and
//! directions of the packets they emit. This crate contains everything needed
//! to measure that leakage end to end:
//!
//! - [`trace`]: packet records, ground-truth labels, datasets and preprocessing.
//! - [`ingest`]: classic pcap parsing and the canonical newline-delimited JSON
//!   dataset format.
//! - [`simulator`]: deterministic size models for iMessage (iOS and OSX),
//!   WhatsApp, Viber and Telegram, and a labeled trace generator.
//! - [`features`]: `(length, direction)` vocabularies, binary and count
//!   feature vectors, and instance sampling.
//! - [`classifiers`]: binomial and multinomial naive Bayes, the payload-length
//!   lookup table, and least-squares length regression.
//! - [`evaluation`]: stratified k-fold cross-validation, confusion matrices,
//!   accuracy sweeps over the number of observed packets, and regression error.
//! - [`countermeasures`]: padding transforms, overhead accounting and
//!   before/after attack comparisons.

pub mod classifiers;
pub mod countermeasures;
pub mod evaluation;
pub mod features;
pub mod ingest;
pub mod rng;
pub mod simulator;
pub mod trace;

pub use trace::{
    Action, Dataset, Direction, Label, LabeledTrace, Language, Metadata, Os, PacketRecord,
    Service,
};
