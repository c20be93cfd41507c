//! Spatial defocusing through an electrically tunable lens (ETL) swept in
//! sync with a high-speed projector.
//!
//! The lens sweeps its optical power periodically. A projector lights each
//! part of a real scene only while the lens power makes that part look sharp
//! (focus regions) or blurred (blur regions). The modules cover the whole
//! chain:
//!
//! - [`optics`]: paraxial ray-transfer model of the eye behind the lens and
//!   the closed-form blur-circle diameter.
//! - [`blur_range`]: depth-of-field limits, blur borders and the least lens
//!   power that blurs an object.
//! - [`etl`], [`wavedb`], [`schedule`]: lens response, the waveform database
//!   and projector slot scheduling.
//! - [`seam`]: magnification by the lens and seam feathering.
//! - [`scene`], [`render`], [`measure`]: layered scenes, the perceived-image
//!   simulator and blur-circle measurement.
//! - [`pipeline`], [`experiments`]: end-to-end planning and simulated bench
//!   experiments.
//!
//! Lengths are millimetres and powers mm⁻¹ throughout; [`units`] converts
//! diopters.

pub mod blur_range;
pub mod error;
pub mod etl;
pub mod experiments;
pub mod image;
pub mod measure;
pub mod optics;
pub mod pipeline;
pub mod psf;
pub mod render;
pub mod root;
pub mod scene;
pub mod schedule;
pub mod seam;
pub mod units;
pub mod wavedb;

pub use error::{Error, Result};
