//! Gear-stratified dynamic radiance fields.
//!
//! A scene is a set of planar-factorized 4D feature volumes, one per motion
//! "gear", sharing their spatial planes. A learned scalar gear field picks the
//! volume (and the temporal resolution and sampling density) used at each
//! space-time point. The model also renders a semantic embedding, which is
//! what click-prompted tracking decodes masks from.

pub mod cli;
pub mod error;
pub mod field;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod numeric;
pub mod render;
pub mod rle;
pub mod semantic;
pub mod service;
pub mod track;
pub mod train;

pub use error::{Error, Result};
