use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("cannot normalize a zero or non-finite vector")]
    DegenerateVector,
    #[error("unsupported derivative order {0}, at most 3 is supported")]
    UnsupportedOrder(usize),
    #[error("harmonic index out of range: degree {degree}, index {index}")]
    HarmonicIndex { degree: usize, index: usize },
    #[error("separation is undefined for fewer than two points")]
    TooFewPoints,
    #[error("argument {0} is outside the domain")]
    Domain(f64),
    #[error("kernel degree must be at least 2, got {0}")]
    KernelDegree(usize),
    #[error("expected between 1 and 3 rotation generators, got {0}")]
    GeneratorCount(usize),
    #[error("atoms {first} and {second} share a location")]
    DuplicateAtoms { first: usize, second: usize },
    #[error("nodes {first} and {second} coincide, the interpolation system is degenerate")]
    DuplicateNodes { first: usize, second: usize },
    #[error("sign at node {index} is {value}, expected +1 or -1")]
    InvalidSign { index: usize, value: f64 },
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(
        "interpolation system is numerically singular (condition estimate {condition:e}); \
         closest nodes {first} and {second} are {distance} rad apart"
    )]
    IllPosed {
        condition: f64,
        first: usize,
        second: usize,
        distance: f64,
    },
    #[error("{nodes} nodes exceed degree {degree}, the product certificate needs s <= N")]
    Sparsity { nodes: usize, degree: usize },
    #[error("grid has {grid} points, at least {needed} are required")]
    GridTooSmall { grid: usize, needed: usize },
    #[error("node set is empty")]
    EmptyNodes,
    #[error("invalid solver options: {0}")]
    InvalidOptions(&'static str),
    #[error("matrix is singular to working precision")]
    Singular,
}

pub type Result<T> = core::result::Result<T, Error>;
