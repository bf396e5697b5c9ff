//! Semi-classical signal analysis (SCSA) of photoplethysmogram pulses and a
//! cuff-less blood-pressure estimation pipeline built around it.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`ingest`] loads PPG/ABP records, cuts analysis windows and applies the
//!   physiological exclusion rules.
//! * [`preprocess`] is the filtering chain (zero-phase Chebyshev-II band-pass,
//!   z-score, polynomial detrend, Hampel, Savitzky-Golay).
//! * [`fiducials`] finds beats with AMPD and marks per-pulse landmarks.
//! * [`scsa`] decomposes a pulse with the Schrödinger operator, reconstructs it
//!   from the negative spectrum and picks the semi-classical parameter by
//!   error feedback.
//! * [`features`] turns a pulse into the 38-slot feature vector and derives
//!   BP targets from the arterial waveform.
//! * [`regression`] holds gradient-boosted trees, nested cross-validation,
//!   error metrics and AAMI/BHS grading.
//! * [`noise`] is the noise stress harness.
//! * [`pipeline`] wires the stages together over files on disk.

pub mod analysis;
pub mod config;
pub mod features;
pub mod fiducials;
pub mod ingest;
pub mod noise;
pub mod pipeline;
pub mod preprocess;
pub mod regression;
pub mod scsa;
pub mod stats;
pub mod synth;
