//! Spectral collocation solver for elliptic PDEs on curved triangulated
//! surfaces, built around a hierarchical Poincare-Steklov (HPS) merge of
//! per-element solution operators, plus IMEX-BDF time stepping for surface
//! reaction-diffusion systems.
//!
//! The pipeline:
//!
//! 1. [`ref_basis`]: degree-n nodal basis on the reference simplex
//!    (orthonormal Dubiner modes, interpolation nodes, differentiation
//!    matrices).
//! 2. [`surface_geom`]: flat triangle meshes lifted to a curved surface by
//!    closest-point projection; per-element metric and tangential
//!    differentiation matrices.
//! 3. [`leaf_ops`]: dense collocation of the PDE on one element; interior
//!    solution operator and Dirichlet-to-Neumann map.
//! 4. [`merge_tree`]: pairwise merge of element operators up a binary tree,
//!    giving a direct solver that is cheap to re-solve for new data.
//! 5. [`timestep`]: IMEX-BDF(1..4) integrators that reuse one factorization
//!    per species for an entire simulation.

pub mod error;
pub mod field;
pub mod leaf_ops;
pub mod merge_tree;
pub mod ref_basis;
pub mod sph;
pub mod surface_geom;
pub mod timestep;

pub use error::{Error, Result};
