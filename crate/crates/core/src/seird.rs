//! SEIRD epidemic models with population-dependent diffusion.
//!
//! Species are `u = (s, e, i, r)` with total living population
//! `n = s + e + i + r`; every compartment diffuses with rate `ν_z n`. The
//! infection terms are evaluated in the expanded form
//!
//! ```text
//! (1 − A0/n) β si = β si − A0 β (si/n)
//! ```
//!
//! so the apparent singularity at `n = 0` never reaches floating point. The
//! deceased compartment `d` is an optional passive per-cell ODE.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::{
    delta_regularized_ratio, ratio_of_parts, Coefficient, DiffusionTensor, PassiveSpecies, Phi, ReactionSystem,
    StructuralParams,
};
use crate::sampling::{AuditBox, Sampler};

pub const SPECIES: [&str; 4] = ["s", "e", "i", "r"];

/// Contact-rate response `β(z, n)` with its declared linear growth constant
/// `c`, i.e. `β(z, n) ≤ c (1 + z + n)`.
#[derive(Clone)]
pub struct Response {
    pub label: String,
    pub f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub growth: f64,
}

impl Response {
    pub fn new(label: impl Into<String>, growth: f64, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Response { label: label.into(), f: Arc::new(f), growth }
    }
}

impl fmt::Debug for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Response({}, c = {})", self.label, self.growth)
    }
}

#[derive(Clone, Debug)]
pub struct SeirdParams {
    pub alpha: Coefficient,
    pub mu: Coefficient,
    pub sigma: Coefficient,
    pub phi_e: Coefficient,
    pub phi_r: Coefficient,
    pub phi_d: Coefficient,
    pub beta_i: Coefficient,
    pub beta_e: Coefficient,
    pub a0: f64,
    /// Diffusion rates `(ν_s, ν_e, ν_i, ν_r)`.
    pub nu: [Coefficient; 4],
    pub beta_i_response: Option<Response>,
    pub beta_e_response: Option<Response>,
    pub include_deceased: bool,
    /// Space-time region on which varying rates are sampled for suprema.
    pub region: AuditBox,
}

impl Default for SeirdParams {
    fn default() -> Self {
        SeirdParams {
            alpha: 0.01.into(),
            mu: 0.02.into(),
            sigma: 0.5.into(),
            phi_e: 0.1.into(),
            phi_r: 0.1.into(),
            phi_d: 0.02.into(),
            beta_i: 1.0.into(),
            beta_e: 0.5.into(),
            a0: 0.0,
            nu: [0.05.into(), 0.05.into(), 0.01.into(), 0.05.into()],
            beta_i_response: None,
            beta_e_response: None,
            include_deceased: false,
            region: AuditBox::unit(10.0),
        }
    }
}

impl SeirdParams {
    /// Every rate equal to `rate`, unit diffusion, the given `A0`.
    pub fn uniform(rate: f64, a0: f64) -> Self {
        let c = Coefficient::Constant(rate);
        SeirdParams {
            alpha: c.clone(),
            mu: c.clone(),
            sigma: c.clone(),
            phi_e: c.clone(),
            phi_r: c.clone(),
            phi_d: c.clone(),
            beta_i: c.clone(),
            beta_e: c,
            a0,
            nu: [1.0.into(), 1.0.into(), 1.0.into(), 1.0.into()],
            ..SeirdParams::default()
        }
    }

    fn rates(&self) -> [(&'static str, &Coefficient); 8] {
        [
            ("alpha", &self.alpha),
            ("mu", &self.mu),
            ("sigma", &self.sigma),
            ("phi_e", &self.phi_e),
            ("phi_r", &self.phi_r),
            ("phi_d", &self.phi_d),
            ("beta_i", &self.beta_i),
            ("beta_e", &self.beta_e),
        ]
    }

    fn sample_points(&self) -> Vec<(Vec<f64>, f64)> {
        let mut pts = Sampler::new(0).space_time(&self.region, 256);
        let dims = self.region.extent.len();
        for mask in 0..1usize << dims {
            let x: Vec<f64> = (0..dims).map(|d| if mask >> d & 1 == 1 { self.region.extent[d] } else { 0.0 }).collect();
            pts.push((x.clone(), 0.0));
            pts.push((x, self.region.t_max));
        }
        pts
    }

    /// Supremum of a coefficient over the sample points.
    fn sup(&self, c: &Coefficient, pts: &[(Vec<f64>, f64)]) -> f64 {
        match c.as_constant() {
            Some(v) => v,
            None => pts.iter().map(|(x, t)| c.eval(x, *t)).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Collects every invalid rate; fields are checked on the sample points.
    pub fn validate(&self) -> Result<()> {
        let pts = self.sample_points();
        let mut problems = Vec::new();
        for (name, c) in self.rates() {
            let bad = match c.as_constant() {
                Some(v) => (!(v >= 0.0) || !v.is_finite()).then_some(v),
                None => pts.iter().map(|(x, t)| c.eval(x, *t)).find(|v| !(*v >= 0.0) || !v.is_finite()),
            };
            if let Some(v) = bad {
                problems.push(format!("rate {name} must be finite and ≥ 0 (got {v})"));
            }
        }
        for (z, nu) in SPECIES.iter().zip(&self.nu) {
            let low = match nu.as_constant() {
                Some(v) => v,
                None => pts.iter().map(|(x, t)| nu.eval(x, *t)).fold(f64::INFINITY, f64::min),
            };
            if !(low > 0.0) || !low.is_finite() {
                problems.push(format!("diffusion rate nu_{z} must be positive (minimum {low})"));
            }
        }
        if !(self.a0 >= 0.0) || !self.a0.is_finite() {
            problems.push(format!("A0 must be finite and ≥ 0 (got {})", self.a0));
        }
        for r in [&self.beta_i_response, &self.beta_e_response].into_iter().flatten() {
            if !(r.growth > 0.0) {
                problems.push(format!("response {} needs a positive growth constant", r.label));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    fn k1(&self, pts: &[(Vec<f64>, f64)]) -> f64 {
        match (self.alpha.as_constant(), self.mu.as_constant()) {
            (Some(a), Some(m)) => a - m,
            _ => pts
                .iter()
                .map(|(x, t)| self.alpha.eval(x, *t) - self.mu.eval(x, *t))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Mortality {
    /// `−φ_d i`.
    Linear,
    /// `−φ_d n i`.
    Quadratic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Ratio {
    Singular,
    Delta(f64),
}

/// Positive floor keeping derived constants valid when all rates vanish.
const CONSTANT_FLOOR: f64 = 1e-9;

fn build(params: &SeirdParams, mortality: Mortality, ratio: Ratio, label: &str) -> Result<ReactionSystem> {
    params.validate()?;
    let pts = params.sample_points();
    let sup = |c: &Coefficient| params.sup(c, &pts);
    let (alpha, sigma, rec) = (sup(&params.alpha), sup(&params.sigma), sup(&params.phi_e) + sup(&params.phi_r));
    let hetero = params.beta_i_response.is_some() || params.beta_e_response.is_some();
    let a0 = params.a0;

    let structural = if !hetero {
        let beta = sup(&params.beta_i) + sup(&params.beta_e);
        // Row bounds: f_s ≤ αn + A0(β_i+β_e)s, f_s+f_e ≤ αn, f_i ≤ σe, f_r ≤ (φ_e+φ_r)n.
        let k3 = (alpha + a0 * beta).max(sigma).max(rec).max(CONSTANT_FLOOR);
        // n ≤ 2(1+Σu²) and si, se ≤ Σu²/2.
        let k4 = (2.0 * (alpha + a0 * beta)).max(beta / 2.0).max(sigma).max(2.0 * rec).max(CONSTANT_FLOOR);
        seird_structural(params.k1(&pts), k3, 1.0, k4, 2.0)
    } else {
        let c = params.beta_i_response.as_ref().map_or_else(|| sup(&params.beta_i), |r| r.growth)
            + params.beta_e_response.as_ref().map_or_else(|| sup(&params.beta_e), |r| r.growth);
        // With β(z, n) ≤ c(1+z+n) the first row is quadratic unless A0 = 0.
        let (k3, r) = if a0 > 0.0 {
            ((2.0 * alpha + 9.0 * a0 * c).max(sigma).max(2.0 * rec), 2.0)
        } else {
            (alpha.max(sigma).max(rec), 1.0)
        };
        let k4 = (4.0 * alpha + 36.0 * a0 * c).max(48.0 * c).max(sigma).max(4.0 * rec);
        seird_structural(params.k1(&pts), k3.max(CONSTANT_FLOOR), r, k4.max(CONSTANT_FLOOR), 3.0)
    };

    let p = params.clone();
    let reactions = Arc::new(move |x: &[f64], t: f64, u: &[f64], out: &mut [f64]| {
        let (s, e, i, r) = (u[0], u[1], u[2], u[3]);
        let n = s + e + i + r;
        let bi = match &p.beta_i_response {
            Some(resp) => (resp.f)(i, n),
            None => p.beta_i.eval(x, t),
        };
        let be = match &p.beta_e_response {
            Some(resp) => (resp.f)(e, n),
            None => p.beta_e.eval(x, t),
        };
        let (q_si, q_se) = match ratio {
            Ratio::Singular => (p.a0 * ratio_of_parts(s, i, n), p.a0 * ratio_of_parts(s, e, n)),
            Ratio::Delta(d) => (delta_regularized_ratio(s, i, n, d, p.a0), delta_regularized_ratio(s, e, n, d, p.a0)),
        };
        let infect_i = bi * s * i - bi * q_si;
        let infect_e = be * s * e - be * q_se;
        let (alpha, mu) = (p.alpha.eval(x, t), p.mu.eval(x, t));
        let (sigma, phi_e, phi_r, phi_d) = (p.sigma.eval(x, t), p.phi_e.eval(x, t), p.phi_r.eval(x, t), p.phi_d.eval(x, t));
        let death = match mortality {
            Mortality::Linear => phi_d * i,
            Mortality::Quadratic => phi_d * n * i,
        };
        out[0] = alpha * n - infect_i - infect_e - mu * s;
        out[1] = infect_i + infect_e - sigma * e - phi_e * e - mu * e;
        out[2] = sigma * e - death - phi_r * i - mu * i;
        out[3] = phi_r * i + phi_e * e - mu * r;
    });

    let diffusion = params.nu.iter().map(|nu| DiffusionTensor::Isotropic(nu.clone())).collect();
    let mut sys = ReactionSystem::new(
        SPECIES.iter().map(|s| s.to_string()).collect(),
        diffusion,
        Phi::TotalPopulation,
        reactions,
        structural,
    )?
    .with_label(label);
    if params.include_deceased {
        let phi_d = params.phi_d.clone();
        sys = sys.with_passive(PassiveSpecies {
            name: "d".into(),
            source: Arc::new(move |x, t, u| {
                let i = u[2];
                match mortality {
                    Mortality::Linear => phi_d.eval(x, t) * i,
                    Mortality::Quadratic => phi_d.eval(x, t) * (u[0] + u[1] + u[2] + u[3]) * i,
                }
            }),
        });
    }
    Ok(sys)
}

fn seird_structural(k1: f64, k3: f64, r: f64, k4: f64, l: f64) -> StructuralParams {
    StructuralParams {
        b: 1.0,
        m_lower: 1.0,
        pi_exp: 1.0,
        m_upper: 1.0,
        r,
        k1,
        k2: 0.0,
        k3,
        k4,
        l,
        c: vec![1.0; 4],
        a: vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ],
    }
}

fn reject_responses(params: &SeirdParams, preset: &str) -> Result<()> {
    if params.beta_i_response.is_some() || params.beta_e_response.is_some() {
        return Err(Error::Config(format!(
            "contact-rate response functions require the heterogeneous preset, not {preset}"
        )));
    }
    Ok(())
}

/// Mortality `−φ_d i` in the infected equation.
pub fn build_seird_original(params: &SeirdParams) -> Result<ReactionSystem> {
    reject_responses(params, "seird_original")?;
    build(params, Mortality::Linear, Ratio::Singular, "seird_original")
}

/// Mortality `−φ_d n i` in the infected equation.
pub fn build_seird_quadratic(params: &SeirdParams) -> Result<ReactionSystem> {
    reject_responses(params, "seird_quadratic")?;
    build(params, Mortality::Quadratic, Ratio::Singular, "seird_quadratic")
}

/// Quadratic mortality with the smooth infection factor `1 − A0/(n + δ)`.
pub fn build_seird_delta(params: &SeirdParams, delta: f64) -> Result<ReactionSystem> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Config(format!("delta must be positive (got {delta})")));
    }
    reject_responses(params, "seird_delta")?;
    build(params, Mortality::Quadratic, Ratio::Delta(delta), "seird_delta")
}

/// Quadratic mortality with space-time rates and optional contact-rate
/// responses `β_i(i, n)`, `β_e(e, n)`.
pub fn build_seird_heterogeneous(params: &SeirdParams) -> Result<ReactionSystem> {
    build(params, Mortality::Quadratic, Ratio::Singular, "seird_hetero")
}

/// Heat equation `∂t u = Δu`: one species, Φ ≡ 1, no reactions.
pub fn heat_system() -> ReactionSystem {
    ReactionSystem::new(
        vec!["u".into()],
        vec![DiffusionTensor::isotropic(1.0)],
        Phi::Constant(1.0),
        Arc::new(|_, _, _, out: &mut [f64]| out[0] = 0.0),
        StructuralParams::neutral(1),
    )
    .expect("heat system is valid")
    .with_label("heat")
}

/// `1 + cos(πx)` on the first axis.
pub fn heat_initial(grid: &Grid) -> Field {
    Field::from_fn(grid, 1, |_, x| 1.0 + (PI * x[0]).cos())
}

/// `1 + e^{−π²t} cos(πx)`, the solution on `[0, 1]` from [`heat_initial`].
pub fn heat_exact(x: f64, t: f64) -> f64 {
    1.0 + (-PI * PI * t).exp() * (PI * x).cos()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum InitialProfile {
    /// `(s, e, i, r) = (1, 0, 0, 0)`.
    Homogeneous,
    /// Susceptible background 1 plus an infected Gaussian of the given mass.
    GaussianSpot { center: Vec<f64>, width: f64, mass: f64 },
    /// Two infected Gaussians placed symmetrically about the `x` mid-plane.
    TwoCluster { width: f64, mass: f64 },
}

impl InitialProfile {
    pub fn default_spot(grid: &Grid) -> InitialProfile {
        InitialProfile::GaussianSpot {
            center: grid.extents().iter().map(|l| l / 2.0).collect(),
            width: 0.05 * grid.extent(0),
            mass: 0.01 * grid.measure(),
        }
    }
}

fn gaussian(x: &[f64], center: &[f64], width: f64, mass: f64) -> f64 {
    let dim = x.len() as i32;
    let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
    mass * (-r2 / (2.0 * width * width)).exp() / (2.0 * PI * width * width).powf(dim as f64 / 2.0)
}

pub fn seird_initial_profiles(profile: &InitialProfile, grid: &Grid) -> Result<Field> {
    match profile {
        InitialProfile::Homogeneous => Ok(Field::from_fn(grid, 4, |k, _| if k == 0 { 1.0 } else { 0.0 })),
        InitialProfile::GaussianSpot { center, width, mass } => {
            if center.len() != grid.dim() || !(*width > 0.0) || !(*mass >= 0.0) {
                return Err(Error::Config(format!(
                    "gaussian spot needs a {}-dimensional centre, positive width and nonnegative mass",
                    grid.dim()
                )));
            }
            Ok(Field::from_fn(grid, 4, |k, x| match k {
                0 => 1.0,
                2 => gaussian(x, center, *width, *mass),
                _ => 0.0,
            }))
        }
        InitialProfile::TwoCluster { width, mass } => {
            if !(*width > 0.0) || !(*mass >= 0.0) {
                return Err(Error::Config("two-cluster profile needs positive width and nonnegative mass".into()));
            }
            let lx = grid.extent(0);
            let mid: Vec<f64> = grid.extents().iter().map(|l| l / 2.0).collect();
            let mut left = mid.clone();
            left[0] = 0.25 * lx;
            let mut right = mid;
            right[0] = 0.75 * lx;
            let mut field = Field::from_fn(grid, 4, |k, x| match k {
                0 => 1.0,
                2 => gaussian(x, &left, *width, mass / 2.0) + gaussian(x, &right, *width, mass / 2.0),
                _ => 0.0,
            });
            // Copy the left half onto the right so the data is mirror-exact.
            let src = field.clone();
            for c in 0..grid.cells() {
                let (i, j) = grid.coords(c);
                if 2 * i >= grid.nx() {
                    let mirror = grid.index(grid.nx() - 1 - i, j);
                    for k in 0..4 {
                        field.species_mut(k)[c] = src.get(k, mirror);
                    }
                }
            }
            Ok(field)
        }
    }
}
