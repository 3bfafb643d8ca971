//! Finite-volume simulation and structural diagnostics for degenerate
//! quasilinear reaction-diffusion systems
//!
//! ```text
//! ∂t u_i − ∇·(D_i(x,t) Φ(u) ∇u_i) = f_i(x, t, u)
//! ```
//!
//! on rectangular boxes in one or two dimensions, with zero-flux or Robin
//! boundaries. Alongside the explicit, positivity-preserving integrator the
//! crate provides L^p-energy functionals, runtime monitors for mass and
//! energy inequalities, a sampling auditor for structural hypotheses and
//! ready-made SEIRD epidemic models.

// Negated comparisons are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod expr;
pub mod grid;
pub mod integrator;
pub mod model;
pub mod numerics;
pub mod sampling;
pub mod seird;
pub mod snapshot;

pub use error::{Error, Result};
pub use grid::{BoundarySpec, Field, Grid};
pub use model::{Coefficient, DiffusionTensor, Phi, ReactionSystem, StructuralParams};
