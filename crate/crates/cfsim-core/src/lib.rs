//! Cell-free massive MIMO link-level simulation and power control.
//!
//! A network of `M` single-antenna access points (APs) jointly serves `K`
//! single-antenna devices over a shared time-frequency resource. The library
//! covers the full simulation chain:
//!
//! - [`netgen`]: geometry, three-slope path loss, correlated shadowing.
//! - [`channel`]: random unit-norm pilots, Rayleigh fading, received pilots.
//! - [`estimator`]: per-AP LMMSE channel estimation and its statistics.
//! - [`ul_sinr`]: uplink SINR engines (exact MMSE receiver, MR baseline,
//!   two large-system approximations) and Monte-Carlo rates.
//! - [`ul_power`]: uplink max-min and target-rate power control, energy
//!   efficiency, interference-function probes.
//! - [`dl_sinr`]: downlink conjugate-beamforming SINR closed forms.
//! - [`dl_power`]: downlink max-min power control via bisection over
//!   second-order cone feasibility, plus fixed-power and uniform variants.
//! - [`mlp`]: a small neural network predicting per-AP downlink power from
//!   large-scale statistics, trained with Levenberg-Marquardt.
//! - [`harness`]: experiment recipes, deterministic seeding, CSV/JSON output.
//!
//! All randomness flows through explicit 64-bit seeds; identical inputs give
//! bit-identical outputs.

pub mod channel;
pub mod dl_power;
pub mod dl_sinr;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod mlp;
pub mod netgen;
pub mod rng;
pub mod ul_power;
pub mod ul_sinr;

pub use channel::{ChannelDraw, PilotSet, ReceivedPilots};
pub use dl_power::{BisectionResult, FixedPowerResult};
pub use dl_sinr::DlPowerMatrix;
pub use error::{Error, Result};
pub use estimator::{EstimationResult, LmmseEstimator};
pub use harness::{ExperimentId, ExperimentSpec, ReportBundle};
pub use mlp::{MlpModel, TrainingSet};
pub use netgen::{NetworkConfig, NetworkRealization, ShadowModel};
pub use ul_power::{ControlWeights, PcResult};
pub use ul_sinr::{DMatrix, RmState, UlPowerVector};
