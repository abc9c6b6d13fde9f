//! Recovery of Dirac ensembles on the unit sphere from their projection onto
//! spherical-harmonic spaces.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only numerics:
//!
//! * [`geometry`]: points, tangent frames, rotation generators, grids.
//! * [`harmonics`]: Legendre polynomials, a real orthonormal harmonic basis,
//!   projection kernels and the forward moment operator.
//! * [`kernel`]: the smoothed band-limited kernel `F_N` and its rotational
//!   derivatives.
//! * [`certificate`]: the interpolating dual polynomial and its validation.
//! * [`recovery`]: discretized total-variation minimization.
//!
//! File formats and the command line driver live in the companion
//! `sphere-superres-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod certificate;
pub mod error;
pub mod geometry;
pub mod harmonics;
pub mod kernel;
pub mod linalg;
pub mod recovery;

pub use error::{Error, Result};
pub use geometry::SpherePoint;
pub use harmonics::{DiracEnsemble, MomentVector};
pub use kernel::KernelTable;
