//! Imitation-guided reinforcement learning on small grids.
//!
//! An imitation policy is behavior-cloned from shortest-path demonstrations
//! and calibrated once. A tabular soft-Q agent learns online while a
//! controller picks, at each step, between the imitation action and the RL
//! action. The conformal modes compare the two policies' prediction-set sizes;
//! the IBRL baselines compare Q-values.

pub mod controller;
pub mod env;
pub mod expert;
pub mod policy;
pub mod runner;
pub mod softq;

pub use controller::{kl_guided_loss, select_action, Decision, DecisionInput, Draws, EpsilonSchedule, Mode, Provenance};
pub use env::{Action, Cell, EpisodeState, GridEnv, Outcome, StepResult, Variant, MAX_STEPS, N_ACTIONS};
pub use expert::{generate_expert_demos, Demo};
pub use policy::{behavior_clone, calibrate_il, policy_uncertainty, CategoricalPolicy, IlCalibration, POLICY_FLOOR};
pub use runner::{imitation_prior, run_gridworld, run_with_prior, EpisodeStats, GridworldConfig, GridworldRun, ImitationPrior};
pub use softq::{ReplayBuffer, SoftQAgent, SoftQConfig, Transition};
