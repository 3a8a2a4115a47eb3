//! Synthesis, certification and routing verification for shift connection
//! schedules of oblivious reconfigurable networks.
//!
//! * [`model`]: schedules, distributions, demands, the `orns/v1` file format.
//! * [`fourier`]: window generating polynomials and their Fourier vectors.
//! * [`certifier`]: the Fourier 2-norm universality test, the base-schedule
//!   2H-norm test and the Markov-matrix test for permutation schedules.
//! * [`generators`]: random, convolution and derandomized schedules.
//! * [`discrepancy`]: balanced ±1 colorings with small ℓ∞ discrepancy.
//! * [`routing`]: spray protocols, VLB with leakage, edge-load accounting.
//! * [`multiclass`]: feasibility arithmetic for simultaneous traffic classes.

pub mod certifier;
pub mod discrepancy;
pub mod error;
pub mod fourier;
pub mod generators;
pub mod model;
pub mod multiclass;
pub mod routing;

pub use error::{Error, Result};
pub use model::{
    lstar, parse_schedule, serialize_schedule, DemandSpec, Direction, FourierVector, GroupDistribution, PermSchedule,
    Schedule, ShiftSchedule, SprayConfig, StartSet,
};
