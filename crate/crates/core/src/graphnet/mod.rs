//! Graph construction, attention encoder, edge decoder, training and weights.
//!
//! Encoder: two attention layers (`d_in → hidden → latent`) with an ELU between
//! them. Each layer projects node features per head, scores every ordered pair
//! with `a·LeakyReLU(p_i + p_j)`, normalizes over all nodes including the node
//! itself, and averages the heads. Decoder: a two-layer perceptron on
//! `[z_i ‖ z_j]` followed by the logistic function.

pub mod encoding;
pub mod gradcheck;
pub mod io;
pub mod model;
mod probs;
pub mod train;


pub use encoding::{initial_graph, positional_encode, InitialGraph, NodeFeatures, PositionalEncoder, PositionalEncoderConfig};
pub use io::{load_weights, save_weights};
pub use model::{bce_loss, decode_edges, encode, gat_layer, predict, ModelConfig, ModelParams};
pub use probs::DependencyProbabilities;
pub use train::{train, train_on_dataset, EdgeMetrics, TrainConfig, TrainReport};
