//! Seed-based verification of machine unlearning, at desk scale.
//!
//! Users blend secret seed patterns into their training samples, the server
//! jointly trains a classifier and a self-supervised reconstruction head on
//! the uploaded data, and users later apply a small verifier network to the
//! model's reconstructions to decide whether their samples were learned and
//! then unlearned. The crate also ships exact and approximate unlearning
//! benchmarks (naive retraining, sharded retraining, gradient-ascent
//! forgetting) and the backdoor/membership-inference baselines they are
//! compared against.
//!
//! Everything is deterministic: all randomness flows from 64-bit seeds
//! through a counter-based RNG, and training uses fixed reduction and
//! shuffle orders, so identical seeds give bit-identical models.

mod bytes;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod joint;
pub mod nn;
pub mod rng;
pub mod seeding;
pub mod tensor;
pub mod unlearning;
pub mod verifier;

pub use error::{Error, Result};
pub use tensor::Tensor;

pub use data::{Dataset, EraseRequest, EraseGranularity, UserPartition};
pub use joint::{Classifier, JointWeights, PrimaryModel, SeededModel, TrainReport};
pub use nn::{Activation, DenseLayer, Mlp, SgdConfig};
pub use seeding::{Placement, Seed, SeedMask, SeededView};
pub use unlearning::{BackdoorSpec, ShardedModel, UnlearnTrace};
pub use verifier::{VerificationDataset, VerificationOutcome, VerifierModel};
