//! Raman spectrum classification toolkit.
//!
//! The crate covers the full path from RRUFF text exports to trained
//! classifiers: ingestion ([`ingest`]), fixed-grid preprocessing
//! ([`preprocess`]), peak-feature baselines ([`classical`]), a small
//! reverse-mode autodiff engine ([`nn`]), the network architectures
//! ([`models`]) and seeded experiment protocols ([`experiments`]).

pub mod classical;
pub mod experiments;
pub mod fsutil;
pub mod ingest;
pub mod models;
pub mod nn;
pub mod par;
pub mod preprocess;
