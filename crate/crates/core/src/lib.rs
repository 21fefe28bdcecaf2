//! Ensemble band selection for hyperspectral leaf reflectance.
//!
//! The crate turns a few thousand narrow reflectance wavelengths into a
//! handful of 10/20/40 nm bands that best separate low and high nitrogen
//! leaves. Stages: ingestion and nitrogen split ([`dataset`]), correlation
//! windowing ([`windowing`]), six base rankers ([`rankers`]), recursive
//! ranker elimination ([`ensemble`]), band clustering ([`bandcluster`]) and
//! QDA evaluation ([`classify`]), tied together by [`pipeline`]. A synthetic
//! generator ([`synthgen`]) provides data with known informative bands.

pub mod artifacts;
pub mod bandcluster;
pub mod classify;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod pipeline;
pub mod rankers;
pub mod seed;
pub mod synthgen;
pub mod windowing;

pub use error::{Error, Result};
pub use features::FeatureMatrix;
