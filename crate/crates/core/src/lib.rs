//! Adaptive multiresolution solver for stiff reaction-diffusion systems.
//!
//! The mesh is a graded quad-tree or oct-tree whose nodes are addressed by
//! 64-bit Morton keys ([`morton`]) and stored in interval blocks ([`blocks`]).
//! Time stepping uses Strang splitting ([`splitting`]): per-cell stiff
//! reaction with Radau IIA ([`radau`]) and per-species diffusion with a
//! stabilized explicit order-4 scheme ([`rock4`]) on an assembled finite-volume
//! Laplacian ([`diffusion`]).
//!
//! Runs are described by a [`config::RunConfig`], write [`snapshot`] files and
//! summarise their timings with [`report`].

pub mod blocks;
pub mod config;
pub mod diffusion;
pub mod error;
pub mod morton;
pub mod models;
pub mod mr;
pub mod radau;
pub mod report;
pub mod rock4;
pub mod snapshot;
pub mod splitting;

pub use error::*;
pub use morton::{CellGeometry, Dim, NodeKey, Tag};
