//! Analysis toolkit for high-frequency air-pollutant sensor records.
//!
//! The crate turns raw ADC logs into calibrated, uniformly sampled series and
//! runs the statistical diagnostics on them: distribution fits, correlograms,
//! autoregressive fits with delayed residual maps, spectra, and a pipeline
//! that bundles all of these into a report.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod armodel;
pub mod correlation;
pub mod distribution;
pub mod drm;
pub mod ingest;
pub mod pipeline;
pub mod render;
pub mod resample;
pub mod series;
pub mod spectral;
pub mod synth;

pub use pipeline::{run_pipeline, PipelineConfig, PipelineError, Report};
pub use render::{emit_report, Format};
pub use series::{QualityFlag, SeriesError, UniformSeries, Unit};
