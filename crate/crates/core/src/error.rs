use std::path::PathBuf;

use thiserror::Error;

use crate::morton::NodeKey;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MortonError {
    #[error("level {level} exceeds the key capacity of {cap} levels")]
    LevelCap { level: u8, cap: u8 },
    #[error("coordinate {coord} on axis {axis} does not fit in {level} binary digits")]
    CoordinateRange { axis: usize, coord: u32, level: u8 },
    #[error("abscissa has more significant digits than level {level} allows")]
    AbscissaWidth { level: u8 },
    #[error("the root node has no parent")]
    RootParent,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlockError {
    #[error("abscissa {abscissa:#018x} lies outside every block interval")]
    Coverage { abscissa: u64 },
    #[error("key {0:?} is not stored in the collection")]
    NotFound(NodeKey),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MrError {
    #[error("grading violation: node {node:?} needs missing stencil cell {missing:?}")]
    Grading { node: NodeKey, missing: NodeKey },
    #[error("invalid multiresolution configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Morton(#[from] MortonError),
    #[error(transparent)]
    Block(#[from] BlockError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("Newton iteration failed after {reductions} step reductions at t = {t}")]
    StiffFailure { t: f64, reductions: usize },
    #[error("non-finite value in the right-hand side at t = {t}")]
    NonFinite { t: f64 },
    #[error("step size underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("invalid integration interval {0}")]
    Interval(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RockError {
    #[error("dt*rho = {required} exceeds the largest stability interval {available}; use {substeps} substeps")]
    NeedsSubsteps {
        required: f64,
        available: f64,
        substeps: usize,
    },
    #[error("unsupported stage count {0}")]
    StageCount(usize),
    #[error("non-finite value produced during the stabilized step")]
    NonFinite,
    #[error("step size {h} underflows at t = {t} under the error control")]
    StepTooSmall { t: f64, h: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("vector length {got} does not match matrix dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("mesh is not graded: leaves {a:?} and {b:?} differ by more than one level")]
    Grading { a: NodeKey, b: NodeKey },
    #[error("compact format needs a constant diffusion coefficient")]
    VariableCoefficient,
    #[error("coefficient {value} in row {row} matches none of the three line types")]
    Format { row: usize, value: f64 },
    #[error(transparent)]
    Block(#[from] BlockError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("conflicting settings: {0}")]
    Conflict(String),
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("{path}: {reason}")]
    Read { path: PathBuf, reason: String },
}

impl ConfigError {
    pub fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("refusing to write a snapshot with no leaves")]
    Empty,
}

/// Failure of one phase of the time loop.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("reaction failed at leaf {key:?}: {source}")]
    Reaction { key: NodeKey, source: OdeError },
    #[error("diffusion failed for species {species}: {source}")]
    Diffusion { species: usize, source: RockError },
    #[error("adaptation failed: {0}")]
    Adaptation(#[from] MrError),
    #[error("assembly failed: {0}")]
    Assembly(#[from] DiffusionError),
    #[error("model `{0}` is not implemented")]
    Unsupported(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}
