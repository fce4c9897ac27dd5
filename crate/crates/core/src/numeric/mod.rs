//! Dense linear algebra, spectral routines, shortest paths and the seeded PRNG.

mod eigh;
mod graph;
mod matrix;
mod rng;

pub use eigh::{eigh_symmetric, SymmetricEigen};
pub use graph::{shortest_paths, WeightedGraph};
pub use matrix::{axpy, dot, norm, squared_distance, Matrix};
pub use rng::Rng;
