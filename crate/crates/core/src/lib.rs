//! CRB-rate tradeoff characterization for multi-antenna multicast ISAC.
//!
//! The crate computes the boundary of the region of simultaneously
//! achievable (sensing CRB, multicast rate) pairs for a base station with
//! `N_t` transmit / `N_r` receive antennas serving `K` single-antenna users
//! while estimating an extended target's response matrix:
//!
//! * [`endpoints`]: the CRB-minimizing (isotropic) and rate-maximizing points;
//! * [`covariance`]: CRB-constrained rate maximization over the full transmit
//!   covariance, solved in the Lagrange dual with an ellipsoid method and
//!   semi-closed-form primal recovery;
//! * [`beamforming`]: a single information beam plus dedicated sensing
//!   covariance, solved by successive convex approximation;
//! * [`estimator`]: Monte Carlo check of the CRB against least-squares
//!   estimation of the target response;
//! * [`sweep`]: threshold sweeps and user-count sweeps producing CSV output.

// Negated comparisons are deliberate: they reject NaN inputs.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamforming;
pub mod covariance;
pub mod ellipsoid;
pub mod endpoints;
pub mod error;
pub mod estimator;
pub mod hermitian;
pub mod model;
pub mod par;
pub mod sweep;

pub use error::{Error, Result};
pub use hermitian::{ComplexMatrix, ComplexVector, EvdResult, HermitianMatrix};
pub use model::{
    beamforming_rate, crb_trace, generate_channels, generate_rayleigh_channels, multicast_rate, per_user_snr, sinr_with_sensing,
    ChannelModel, ChannelSet, CrPoint, SystemConfig, TransmitCovariance,
};
