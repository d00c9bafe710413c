//! Genetic programming on flattened prefix-order trees.
//!
//! Genomes are byte strings: one opcode per node, children following their
//! parent depth-first, so subtrees are contiguous and crossover is a byte
//! splice. Populations live in a fixed pool of equal-sized buffers whose
//! lifetime is driven by birth queues; children are evaluated from a recipe
//! (mother, site, fragment) before any bytes are written, and only children
//! that win a place as a parent are ever built.

pub mod bench;
pub mod breed;
pub mod engine;
pub mod error;
pub mod eval;
pub mod incremental;
pub mod ops;
pub mod pool;
pub mod report;
pub mod runspec;
pub mod suite;
pub mod tree;

pub use error::{Error, Result};
