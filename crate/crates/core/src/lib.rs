//! Backbone discovery for fully connected feed-forward networks.
//!
//! A backbone is a connected, layer-spanning subgraph of hidden neurons that
//! frequently co-activates for a concept: a class predicted correctly, a
//! class predicted incorrectly, or one direction of a confusion pair. This
//! crate turns instances into transactions of their most influential neurons,
//! mines weighted backbones from the transaction tables, compares them
//! against exact desk-scale solvers, and applies them to misprediction
//! flagging, prediction correction, and activation-maximization rendering.
//!
//! The pipeline, end to end:
//!
//! 1. [`net`] runs forward passes that capture hidden activations and turns
//!    them into per-neuron influence; [`transact`] routes each instance's
//!    top-influence neuron set into concept-labeled tables.
//! 2. [`miner`] enumerates maximal frequent neuron sets; [`backbone`] finds
//!    the max-minsup seed pattern and grows the backbone by F-score
//!    thresholding, reporting coverage and overlap.
//! 3. [`oracle`] solves the strict and relaxed covering problems exactly on
//!    small universes and enumerates Pareto fronts; [`clb`] generates
//!    tag-selection instances from 3SAT formulas.
//! 4. [`applic`] uses backbones as a predictor and an error detector;
//!    [`viz`] renders virtual instances that maximally activate a backbone.

pub mod applic;
pub mod backbone;
mod bits;
pub mod clb;
pub mod data;
pub mod error;
pub mod miner;
pub mod net;
pub mod oracle;
pub mod train;
pub mod transact;
pub mod viz;

pub use backbone::{Backbone, CollectiveBackbone};
pub use data::LabeledDataset;
pub use error::{Error, Result};
pub use net::{LayeredNet, NeuronId};
pub use transact::{ConceptId, Transaction, TransactionTable};
