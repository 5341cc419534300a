//! Training and evaluation library for studying how enforcing group
//! invariance in a learned representation affects robustness under shifts of
//! the label-attribute association.
//!
//! The pieces:
//!
//! - [`domain`]: examples, datasets, joint (y, v) specifications, CSV I/O.
//! - [`kernelmmd`]: RBF kernel, squared-MMD V-statistics (plain, weighted,
//!   label-conditional), and balancing weights.
//! - [`synthgen`]: an anti-causal Gaussian generator with a closed-form
//!   Bayes-optimal scorer, subsampling to a target joint, stratified splits.
//! - [`predictor`]: the representation-plus-sigmoid-head model with analytic
//!   gradients and JSON checkpoints.
//! - [`train`]: minibatch SGD under four objectives (plain, marginal-MMD,
//!   conditional-MMD, weighted-marginal-MMD penalized).
//! - [`modelselect`]: cross-fold invariance testing and grid selection.
//! - [`metrics`]: risk, subgroup decomposition, AUROC, fairness gaps,
//!   robustness over a shift family, bootstrap uncertainty.
//! - [`seeding`]: one root seed, purpose-derived streams everywhere.
//!
//! All randomness is derived from explicit seeds; every public entry point is
//! bit-reproducible given the same inputs.

pub mod domain;
pub mod error;
pub mod kernelmmd;
pub mod metrics;
pub mod modelselect;
pub mod numeric;
pub mod predictor;
pub mod seeding;
pub mod synthgen;
pub mod train;

pub use domain::{cell_table, Dataset, Example, JointSpec, Score};
pub use error::{Error, Result};
pub use kernelmmd::{balancing_weights, BalancingWeights, KernelConfig};
pub use predictor::{Arch, Checkpoint, Predictor};
pub use synthgen::{OracleScorer, SynthConfig};
pub use train::{Objective, TrainConfig};
