//! Geometry-based user scheduling for large-array uplink systems.
//!
//! The crate is organised around five pieces:
//!
//! - [`gscm`]: scenario generation (users, clusters, visibility regions) and
//!   synthesis of the multi-antenna channel from cluster geometry.
//! - [`rx`]: channel covariance, MMSE pilot-based estimation, zero-forcing
//!   reception, sum-rate and ergodic capacity.
//! - [`scheduler`]: the user–cluster pathloss matrix, geometry-based greedy
//!   selection (GUS), the full-CSI greedy baseline (GWC) and random selection.
//! - [`localization`]: Cramér–Rao bounds for delay and angles, single-bounce
//!   geometric inversion and CRLB-scaled perturbation of the pathloss matrix.
//! - [`harness`]: seeded Monte-Carlo experiments, CSV output and config files.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gscm;
pub mod harness;
pub mod localization;
pub mod rx;
pub mod scheduler;
pub mod seed;

pub use error::{Error, Result};
pub use gscm::{
    channel_matrix, cluster_attenuation, generate_scenario, mpc_amplitudes, path_loss_nlos,
    steering_vector, vr_gain, ChannelMatrix, Cluster, LinkGains, MpcDraw, Scenario, ScenarioConfig,
};
pub use localization::{
    crlb, field_pattern, perturb_and_rebuild, solve_cluster_distance, Crlb, CrlbParams,
    PerturbedGeometry,
};
pub use rx::{
    channel_covariance, ergodic_capacity, mmse_estimate, noise_power, sum_rate, zf_weights,
    PilotConfig, PowerConfig, RateMode, ZfReceiver,
};
pub use scheduler::{
    build_v_matrix, correlation_metric, estimation_load, gus_select, gwc_select, random_select,
    GusVariant, ScheduleResult, VMatrix,
};

/// Complex sample type used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Boltzmann constant as used for the receiver noise floor, J/K.
pub const BOLTZMANN: f64 = 1.381e-23;
