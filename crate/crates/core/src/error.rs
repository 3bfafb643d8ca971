use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("reaction evaluation produced a non-finite value at x={x:?}, t={t}, u={u:?}")]
    NonFiniteReaction { x: Vec<f64>, t: f64, u: Vec<f64> },

    #[error("density factor Φ(u) = {value} is invalid (negative or non-finite) at u={u:?}")]
    InvalidPhi { value: f64, u: Vec<f64> },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("diffusion assembly failed at cell {cell}: {reason}")]
    Assembly { cell: usize, reason: String },

    #[error(
        "required time step {required:.3e} is below dt_min {dt_min:.3e} at t = {t}; \
         use a coarser grid, a smaller dt_min, or enable reaction regularization (eps > 0)"
    )]
    Stiffness { required: f64, dt_min: f64, t: f64 },

    #[error(
        "step rejected at t = {t} (dt = {dt:.3e}): species {species} at cell {cell} \
         reached {value:.3e}, below the clamp tolerance {tolerance:.3e}"
    )]
    StepRejected {
        t: f64,
        dt: f64,
        species: usize,
        cell: usize,
        value: f64,
        tolerance: f64,
    },

    #[error("integration failed at t = {t}: {source}")]
    Integration {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("theta selection failed for species {species}: {condition}")]
    Selection { species: usize, condition: String },

    #[error("expression error: {0}")]
    Expr(String),

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
