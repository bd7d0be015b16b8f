//! Quantum-efficiency analysis of single two-level emitters from saturation
//! measurements.
//!
//! The crate models a resonantly driven molecule with triplet shelving and a
//! calibrated detection chain, generates synthetic measurement records
//! (frequency scans, raster maps, photon time-tag streams), fits them, and
//! extracts two independent effective quantum-efficiency estimates:
//!
//! * **saturation counts** — from the detected count rate at full saturation,
//!   inverted through the detection-chain calibration;
//! * **saturation power** — from the power needed to saturate the zero-phonon
//!   line, inverted through the saturation-power relation.
//!
//! Both estimates are lower bounds on the true quantum efficiency; they are
//! entangled with the (unknown) out-of-plane dipole angle in different ways,
//! which is what makes their joint distribution informative.
//!
//! Modules follow the data flow: [`physics`] (closed-form forward model) →
//! [`simulator`] (synthetic records with Poisson noise) → [`fitkit`]
//! (nonlinear least squares) → [`pipeline`] (QE extraction and ensemble
//! statistics).

// Guards are written as `!(x > 0.0)` on purpose: the negated form also
// rejects NaN, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod fitkit;
pub mod physics;
pub mod pipeline;
pub mod simulator;

pub use physics::{DetectionChain, EmitterParams, EnvironmentParams, PhysicsError};
pub use pipeline::{EnsembleReport, Measured, MoleculeResult};
pub use simulator::{BeamProfile, NoiseMode, PhotonRecord, RasterMap, ScanSeries};
