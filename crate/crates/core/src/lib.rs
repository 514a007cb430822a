//! Probabilistic social choice functions, profile embeddings, preservation
//! search, and a small MLP harness that learns rules from embedded profiles.

pub mod cli;
pub mod embeddings;
pub mod error;
pub mod experiments;
pub mod losses;
pub mod nn;
pub mod preservation;
pub mod profiles;
pub mod rules;
pub mod seed;

pub use embeddings::{embed, features, normalize, EmbeddingKind, EmbeddingMatrix};
pub use error::{Error, Result};
pub use losses::{l1_loss, participation_loss, sd_loss, stochastically_dominates, LossValue};
pub use nn::MlpModel;
pub use preservation::{check_pair, search_counterexample, PreservationViolation};
pub use profiles::{generate_impartial_culture, Ballot, Candidate, Profile};
pub use rules::{apply_rule, Lottery, RuleId, SocialChoice};
