//! Pointwise description of a quasilinear reaction-diffusion system
//!
//! ```text
//! ∂t u_i − ∇·(D_i(x,t) Φ(u) ∇u_i) = f_i(x, t, u),   i = 1..m
//! ```
//!
//! A [`ReactionSystem`] bundles the per-species diffusion tensors `D_i`, the
//! density factor `Φ`, the reaction vector `f` and the structural constants a
//! model author claims for it ([`StructuralParams`]). Everything here is a pure
//! function of its inputs; systems are immutable once built and can be shared
//! across threads.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Space-time scalar field `(x, t) ↦ value`.
pub type ScalarFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
/// Density factor `u ↦ Φ(u)`.
pub type PhiFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Reaction vector `(x, t, u) ↦ f`, written into the output slice.
pub type ReactionFn = Arc<dyn Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync>;
/// Source term of a passive (non-diffusing, uncoupled) per-cell ODE.
pub type PassiveFn = Arc<dyn Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    Field(ScalarFn),
}

impl Coefficient {
    pub fn field(f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Field(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Field(f) => f(x, t),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Coefficient::Constant(c) => Some(*c),
            Coefficient::Field(_) => None,
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::Field(_) => write!(f, "Field(..)"),
        }
    }
}

impl From<f64> for Coefficient {
    fn from(c: f64) -> Self {
        Coefficient::Constant(c)
    }
}

/// Per-species diffusion tensor `D_i(x, t)`.
///
/// Full tensors are representable so that configurations can be validated,
/// but the two-point flux discretization only accepts diagonal ones.
#[derive(Clone, Debug)]
pub enum DiffusionTensor {
    Isotropic(Coefficient),
    Diagonal(Vec<Coefficient>),
    Full(Vec<Vec<Coefficient>>),
}

impl DiffusionTensor {
    pub fn isotropic(c: impl Into<Coefficient>) -> Self {
        DiffusionTensor::Isotropic(c.into())
    }

    /// True when every off-diagonal entry is the constant zero.
    pub fn is_diagonal(&self) -> bool {
        match self {
            DiffusionTensor::Isotropic(_) | DiffusionTensor::Diagonal(_) => true,
            DiffusionTensor::Full(rows) => rows.iter().enumerate().all(|(i, row)| {
                row.iter()
                    .enumerate()
                    .all(|(j, c)| i == j || matches!(c, Coefficient::Constant(v) if *v == 0.0))
            }),
        }
    }

    /// Diagonal entry for `axis`.
    #[inline]
    pub fn axis(&self, axis: usize, x: &[f64], t: f64) -> f64 {
        match self {
            DiffusionTensor::Isotropic(c) => c.eval(x, t),
            DiffusionTensor::Diagonal(d) => d[axis.min(d.len() - 1)].eval(x, t),
            DiffusionTensor::Full(rows) => rows[axis][axis].eval(x, t),
        }
    }

    /// Constant diagonal entry for `axis`, if the entry does not vary.
    pub fn constant_axis(&self, axis: usize) -> Option<f64> {
        match self {
            DiffusionTensor::Isotropic(c) => c.as_constant(),
            DiffusionTensor::Diagonal(d) => d[axis.min(d.len() - 1)].as_constant(),
            DiffusionTensor::Full(rows) => rows[axis][axis].as_constant(),
        }
    }

    /// Dense `dim × dim` matrix at `(x, t)`.
    pub fn matrix(&self, dim: usize, x: &[f64], t: f64) -> DMatrix<f64> {
        match self {
            DiffusionTensor::Isotropic(c) => DMatrix::identity(dim, dim) * c.eval(x, t),
            DiffusionTensor::Diagonal(d) => {
                DMatrix::from_fn(dim, dim, |i, j| if i == j { d[i.min(d.len() - 1)].eval(x, t) } else { 0.0 })
            }
            DiffusionTensor::Full(rows) => DMatrix::from_fn(dim, dim, |i, j| rows[i][j].eval(x, t)),
        }
    }
}

/// Density factor Φ: R_+^m → R_+.
#[derive(Clone)]
pub enum Phi {
    /// Semilinear mode, Φ ≡ c.
    Constant(f64),
    /// Φ(u) = Σ u_i.
    TotalPopulation,
    Custom(PhiFn),
}

impl Phi {
    pub fn custom(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Phi::Custom(Arc::new(f))
    }

    #[inline]
    fn raw(&self, u: &[f64]) -> f64 {
        match self {
            Phi::Constant(c) => *c,
            Phi::TotalPopulation => u.iter().sum(),
            Phi::Custom(f) => f(u),
        }
    }
}

impl fmt::Debug for Phi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phi::Constant(c) => write!(f, "Constant({c})"),
            Phi::TotalPopulation => write!(f, "TotalPopulation"),
            Phi::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// An uncoupled per-cell ODE `∂t d = source(x, t, u)`, e.g. the deceased
/// compartment of the epidemic models. It neither diffuses nor feeds back.
#[derive(Clone)]
pub struct PassiveSpecies {
    pub name: String,
    pub source: PassiveFn,
}

impl fmt::Debug for PassiveSpecies {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PassiveSpecies").field("name", &self.name).finish_non_exhaustive()
    }
}

/// Structural constants claimed for a system; the assumption checker audits
/// them by sampling.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructuralParams {
    /// Degeneracy exponent: Φ(u) ≥ M u_i^b.
    pub b: f64,
    /// Lower Φ constant M.
    pub m_lower: f64,
    /// Upper Φ exponent π: Φ(u) ≤ M̃ (1 + Σ u_i^π).
    pub pi_exp: f64,
    /// Upper Φ constant M̃.
    pub m_upper: f64,
    /// Order of the intermediate sums.
    pub r: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    /// Polynomial growth exponent.
    pub l: f64,
    /// Mass-control weights.
    pub c: Vec<f64>,
    /// Lower-triangular intermediate-sum matrix, row-major.
    pub a: Vec<Vec<f64>>,
}

impl StructuralParams {
    /// Neutral claims for an `m`-species system: identity matrix, unit
    /// weights, Φ bounds for a constant factor.
    pub fn neutral(m: usize) -> Self {
        StructuralParams {
            b: 0.0,
            m_lower: 1.0,
            pi_exp: 1.0,
            m_upper: 1.0,
            r: 1.0,
            k1: 0.0,
            k2: 0.0,
            k3: 1.0,
            k4: 1.0,
            l: 1.0,
            c: vec![1.0; m],
            a: identity_rows(m),
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.b >= 0.0) {
            problems.push(format!("b must be ≥ 0 (got {})", self.b));
        }
        if !(self.m_lower > 0.0) {
            problems.push(format!("M must be > 0 (got {})", self.m_lower));
        }
        if !(self.pi_exp > 0.0) {
            problems.push(format!("π must be > 0 (got {})", self.pi_exp));
        }
        if !(self.m_upper > 0.0) {
            problems.push(format!("M̃ must be > 0 (got {})", self.m_upper));
        }
        if !(self.r > 0.0) {
            problems.push(format!("r must be > 0 (got {})", self.r));
        }
        if !(self.k3 > 0.0) {
            problems.push(format!("K3 must be > 0 (got {})", self.k3));
        }
        if !(self.k4 > 0.0) {
            problems.push(format!("K4 must be > 0 (got {})", self.k4));
        }
        if !(self.l > 0.0) {
            problems.push(format!("l must be > 0 (got {})", self.l));
        }
        if self.c.len() != m {
            problems.push(format!("c has {} entries, expected {m}", self.c.len()));
        } else if let Some(bad) = self.c.iter().find(|c| !(**c > 0.0)) {
            problems.push(format!("mass weights must be positive (got {bad})"));
        }
        if self.a.len() != m || self.a.iter().any(|row| row.len() != m) {
            problems.push(format!("A must be {m}×{m}"));
        } else {
            for (i, row) in self.a.iter().enumerate() {
                for (j, &a) in row.iter().enumerate() {
                    if j > i && a != 0.0 {
                        problems.push(format!("A must be lower triangular (a[{i}][{j}] = {a})"));
                    } else if j == i && !(a > 0.0) {
                        problems.push(format!("A must have a positive diagonal (a[{i}][{i}] = {a})"));
                    } else if j < i && !(a >= 0.0) {
                        problems.push(format!("A must be nonnegative (a[{i}][{j}] = {a})"));
                    }
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

pub fn identity_rows(m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Full specification of one PDE system.
#[derive(Clone)]
pub struct ReactionSystem {
    label: String,
    names: Vec<String>,
    diffusion: Vec<DiffusionTensor>,
    phi: Phi,
    reactions: ReactionFn,
    structural: StructuralParams,
    passive: Option<PassiveSpecies>,
}

impl fmt::Debug for ReactionSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReactionSystem")
            .field("label", &self.label)
            .field("names", &self.names)
            .field("diffusion", &self.diffusion)
            .field("phi", &self.phi)
            .field("structural", &self.structural)
            .field("passive", &self.passive)
            .finish_non_exhaustive()
    }
}

impl ReactionSystem {
    pub fn new(
        names: Vec<String>,
        diffusion: Vec<DiffusionTensor>,
        phi: Phi,
        reactions: ReactionFn,
        structural: StructuralParams,
    ) -> Result<Self> {
        let m = names.len();
        if m == 0 {
            return Err(Error::Config("a system needs at least one species".into()));
        }
        if diffusion.len() != m {
            return Err(Error::Config(format!(
                "{} diffusion tensors given for {m} species",
                diffusion.len()
            )));
        }
        structural.validate(m)?;
        Ok(ReactionSystem {
            label: "custom".into(),
            names,
            diffusion,
            phi,
            reactions,
            structural,
            passive: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_passive(mut self, passive: PassiveSpecies) -> Self {
        self.passive = Some(passive);
        self
    }

    pub fn with_structural(mut self, structural: StructuralParams) -> Result<Self> {
        structural.validate(self.m())?;
        self.structural = structural;
        Ok(self)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn m(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn diffusion(&self) -> &[DiffusionTensor] {
        &self.diffusion
    }

    pub fn phi(&self) -> &Phi {
        &self.phi
    }

    pub fn structural(&self) -> &StructuralParams {
        &self.structural
    }

    pub fn passive(&self) -> Option<&PassiveSpecies> {
        self.passive.as_ref()
    }

    /// Rejects tensors the two-point flux scheme cannot represent.
    pub fn require_diagonal_diffusion(&self) -> Result<()> {
        for (name, d) in self.names.iter().zip(&self.diffusion) {
            if !d.is_diagonal() {
                return Err(Error::Config(format!(
                    "species '{name}' has a non-diagonal diffusion tensor; the two-point flux \
                     discretization supports diagonal tensors only"
                )));
            }
        }
        Ok(())
    }

    /// Writes `f(x, t, u)` into `out`, failing on any non-finite component.
    pub fn evaluate_reactions(&self, x: &[f64], t: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        (self.reactions)(x, t, u, out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteReaction { x: x.to_vec(), t, u: u.to_vec() })
        }
    }

    pub fn reactions_at(&self, x: &[f64], t: f64, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.m()];
        self.evaluate_reactions(x, t, u, &mut out)?;
        Ok(out)
    }

    #[inline]
    pub fn evaluate_phi(&self, u: &[f64]) -> Result<f64> {
        let v = self.phi.raw(u);
        if v >= 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InvalidPhi { value: v, u: u.to_vec() })
        }
    }
}

/// `f_i / (1 + eps Σ_j |f_j|)`, the bounded reactions of the regularized system.
pub fn regularize_reactions(f: &[f64], eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Contract(format!("regularization parameter must be positive (got {eps})")));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract(format!("cannot regularize non-finite reactions {f:?}")));
    }
    let mut out = f.to_vec();
    regularize_in_place(&mut out, eps);
    Ok(out)
}

#[inline]
pub(crate) fn regularize_in_place(f: &mut [f64], eps: f64) {
    let total: f64 = f.iter().map(|v| v.abs()).sum();
    let denom = 1.0 + eps * total;
    for v in f.iter_mut() {
        *v /= denom;
    }
}

/// `a·c/n` for components `a, c` of a total `n`, with the value 0 at `n = 0`.
///
/// Since `a, c ≤ n` the result never exceeds `min(a, c)`.
pub fn singular_ratio(a: f64, c: f64, n: f64) -> Result<f64> {
    if a < 0.0 || c < 0.0 || n < 0.0 {
        return Err(Error::Contract(format!("singular_ratio needs nonnegative inputs (a={a}, c={c}, n={n})")));
    }
    let tol = 1e-12 * n.max(1.0);
    if a > n + tol || c > n + tol {
        return Err(Error::Contract(format!(
            "singular_ratio needs a, c ≤ n (a={a}, c={c}, n={n})"
        )));
    }
    Ok(ratio_of_parts(a, c, n))
}

#[inline]
pub(crate) fn ratio_of_parts(a: f64, c: f64, n: f64) -> f64 {
    if n > 0.0 {
        (a * c / n).min(a).min(c)
    } else {
        0.0
    }
}

/// `A0·a·c/(n + δ)`, the smooth replacement of the singular ratio.
#[inline]
pub fn delta_regularized_ratio(a: f64, c: f64, n: f64, delta: f64, a0: f64) -> f64 {
    a0 * a * c / (n + delta)
}
