//! Knowledge-augmented password guessing.
//!
//! A fourth-order backoff Markov generator whose next-character distribution
//! is mixed, at every step, with a distribution aggregated from the top-k
//! nearest entries of an external knowledge store. On top of the generator
//! sit a Monte Carlo strength meter, a dynamic update loop that feeds cracked
//! passwords back into the store, an evaluation harness and an HTTP scoring
//! service.
//!
//! The usual flow:
//!
//! ```no_run
//! use kapg::{Alphabet, FusionPolicy, GuessConfig, KnowledgeStore, MarkovModel};
//! use kapg::guesser::Guesser;
//! use kapg::fusion::FusedModel;
//!
//! let alphabet = Alphabet::printable();
//! let model = MarkovModel::train(&alphabet, &["password1", "iloveyou"]).unwrap();
//! let store = KnowledgeStore::build(&alphabet, &[("lovely".to_string(), 1.0)], 10).unwrap();
//! let scorer = FusedModel::new(&model, &store, FusionPolicy::default());
//! let mut guesser = Guesser::new(scorer, GuessConfig::default());
//! let guesses: Vec<String> = guesser.stream(7).take(5).collect();
//! ```

pub mod alphabet;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod dpg;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod guesser;
pub mod knowledge;
pub mod markov;
pub mod persist;
pub mod service;
pub mod strength;

pub use alphabet::{Alphabet, Symbol, Window};
pub use corpus::{LengthBounds, Password};
pub use error::{Error, Result};
pub use fusion::{FusedDistribution, FusedModel, FusionPolicy, LambdaMode};
pub use guesser::GuessConfig;
pub use knowledge::KnowledgeStore;
pub use markov::MarkovModel;
pub use strength::{Bucket, MonteCarloRank, StrengthReport};
