//! Online mirror descent over occupancy measures for episodic linear mixture
//! MDPs with adversarial full-information rewards, paired with a
//! variance-aware value-targeted regression estimator for the unknown kernel.

// NaN-rejecting guards are negated comparisons on purpose; loops index
// several parallel arrays
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod harness;
pub mod instances;
pub mod linalg;
pub mod mdp;
pub mod omd;
pub mod projection;
pub mod verify;
pub mod vtr;

pub use error::{Error, Result};
pub use mdp::{
    LinearMixtureModel, OccupancyMeasure, RewardFunction, StochasticPolicy, SupportLayout,
    Trajectory, ValueTable,
};
pub use projection::{ConfidenceSet, ConstraintPiece, DykstraConfig, FeasibleSet, MirrorMap};
