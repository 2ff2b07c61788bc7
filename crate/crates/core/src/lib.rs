//! Geodesic-augmented graph neural networks.
//!
//! One message-passing pass produces node embeddings; shortest-path
//! (geodesic) structure between node pairs is then pooled on top of those
//! embeddings to build node, edge and graph representations without
//! re-running the network per query.

pub mod bench;
pub mod config;
pub mod error;
pub mod expressiveness;
pub mod geodesic;
pub mod gnn;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod pooling;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{GdgnnError, Result};
pub use graph::{Graph, GraphCollection, NodeId};
pub use tensor::Matrix;
