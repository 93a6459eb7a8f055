//! Desk-scale reproduction of a two-step power analysis against Kyber's
//! decryption: simulate Hamming-weight leakage of the point-wise
//! multiplication, recover NTT-domain secret coefficients by correlation,
//! then complete each 128-coefficient key group with a lattice attack that
//! tolerates a handful of wrong inputs.
//!
//! The crate is organized bottom-up:
//!
//! * [`params`], [`ntt`], [`poly`], [`matrix`]: exact ring arithmetic shared
//!   by the simulated device and the attacker's hypothesis builder.
//! * [`leakage`], [`trace`]: the trace simulator and its binary file format.
//! * [`stats`], [`cpa`]: correlation machinery and per-call key extraction.
//! * [`lattice`]: the embedding, reduction and trial-and-error recovery.
//! * [`harness`]: seeded end-to-end experiments, sweeps and calibration.

pub mod cpa;
pub mod harness;
pub mod lattice;
pub mod leakage;
pub mod matrix;
pub mod ntt;
pub mod params;
pub mod poly;
pub mod rng;
pub mod stats;
pub mod trace;
