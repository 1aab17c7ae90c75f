//! Creative-fatigue detection for advertising performance series.
//!
//! Daily series are cut into adjacent windows, each window is normalized to
//! the unit square and summarised by its truncated path signature, and
//! boundaries where neighbouring signatures differ unusually are reported as
//! change points. Around that core sit a wastage model, a seeded synthetic
//! benchmark generator, reference detectors, and an evaluation harness.

#![forbid(unsafe_code)]

pub mod baselines;
pub mod detector;
pub mod error;
pub mod eval;
pub mod io;
pub mod regression;
pub mod sigcore;
pub mod synth;
pub mod wastage;
pub mod windowing;

pub use detector::{
    detect, distance_series, ChangePoint, ChangePointReport, DetectorConfig, Segment, Trend,
};
pub use error::{Error, Result};
pub use sigcore::{FeatureMode, NormalizedPath, TensorSeq};
pub use windowing::{Metric, SeriesPoint, TimeSeries};

/// Version tag carried by every serialized report.
pub const SCHEMA_VERSION: u32 = 1;
