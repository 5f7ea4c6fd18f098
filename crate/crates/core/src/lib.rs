//! Training of connectome-driven foraging agents with a hybrid of evolutionary
//! search and mesh-adaptive direct search.
//!
//! The crate is organised bottom-up:
//!
//! * [`connectome`] loads the biological network prior and defines genomes.
//! * [`neural_sim`] advances the no-leak integrate-and-fire network.
//! * [`environment`] runs a foraging episode and scores it.
//! * [`mads`] is the derivative-free local optimizer over weight subsets.
//! * [`evolution`] holds selection, crossover, mutation and the regularizer.
//! * [`pipelines`] combines the pieces into the training strategies.
//! * [`harness`] drives runs and sweeps and writes every output file.

pub mod connectome;
pub mod environment;
pub mod error;
pub mod evolution;
pub mod harness;
pub mod mads;
pub mod neural_sim;
pub mod pipelines;
pub mod seed;

pub use connectome::{Connectome, Genome, NeuronId, RoleSets, Synapse, SynapseKind};
pub use environment::{EnvConfig, EpisodeResult, FoodLayout, MotorParams, Task, WormState};
pub use error::{Error, Result};
pub use neural_sim::{NetworkState, SimParams};
pub use evolution::{EvoConfig, Fitness, Individual};
pub use mads::{MadsConfig, MeshPolarity};
pub use pipelines::{Budget, InitMode, PipelineKind, RunRecord, TrainConfig, Trainer};
