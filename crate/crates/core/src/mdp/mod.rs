//! Linear mixture MDPs, policies, occupancy measures and exact evaluation.

mod layout;
mod model;
mod occupancy;
mod policy;
mod reward;
mod trajectory;
mod values;

pub use layout::{SupportLayout, MAX_SUPPORT};
pub use model::{LinearMixtureModel, ModelDocument, KERNEL_SUM_TOL, NORM_TOL};
pub use occupancy::{
    occupancy_of_policy, occupancy_to_policy, occupancy_to_policy_and_transition,
    occupancy_with_entry_kernel, occupancy_with_kernel, InducedModel, OccupancyMeasure,
    OccupancyResiduals,
};
pub use policy::{StochasticPolicy, POLICY_SUM_TOL};
pub use reward::{RewardFunction, REWARD_TOL};
pub use trajectory::{sample_episode, sample_index, sample_path, Trajectory};
pub use values::{best_hindsight_policy, optimal_values, policy_values, ValueTable};
