//! Turns a validated configuration into the objects the solver works on.

use std::sync::Arc;

use qrd_core::expr::Expr;
use qrd_core::model::{DiffusionTensor, Phi};
use qrd_core::sampling::AuditBox;
use qrd_core::seird::{
    build_seird_delta, build_seird_heterogeneous, build_seird_original, build_seird_quadratic, heat_initial,
    heat_system, seird_initial_profiles, InitialProfile, Response, SeirdParams,
};
use qrd_core::{BoundarySpec, Coefficient, Error, Field, Grid, ReactionSystem, Result};

use crate::config::{
    CustomSpec, InitialSpec, ModelSpec, RunConfig, SeirdRates, SeirdVariant, RESPONSE_VARS, SPACE_TIME_VARS,
    SPACE_VARS,
};

/// Everything needed to run one configuration.
pub struct Setup {
    pub sys: ReactionSystem,
    pub grid: Grid,
    pub bc: BoundarySpec,
    pub u0: Field,
    /// Region for audits and weight selection: `[0, U]^m` over the domain
    /// and `[0, T]`.
    pub region: AuditBox,
    /// Rate set of the heterogeneous preset, for the rate-specific checks.
    pub hetero: Option<SeirdParams>,
}

pub fn build(cfg: &RunConfig) -> Result<Setup> {
    build_on(cfg, cfg.grid.build()?)
}

/// Builds the run on a different grid (used by refinement studies).
pub fn build_on(cfg: &RunConfig, grid: Grid) -> Result<Setup> {
    let region = AuditBox::new(cfg.audit.u_max, grid.extents().to_vec(), cfg.time.t_end)?;
    let (sys, hetero) = match &cfg.model {
        ModelSpec::Seird { variant, rates, include_deceased } => {
            let params = seird_params(rates, *include_deceased, &region)?;
            let sys = match variant {
                SeirdVariant::Original => build_seird_original(&params)?,
                SeirdVariant::Quadratic => build_seird_quadratic(&params)?,
                SeirdVariant::Delta(d) => build_seird_delta(&params, *d)?,
                SeirdVariant::Heterogeneous => build_seird_heterogeneous(&params)?,
            };
            let hetero = (*variant == SeirdVariant::Heterogeneous).then_some(params);
            (sys, hetero)
        }
        ModelSpec::Heat => (heat_system(), None),
        ModelSpec::Custom(spec) => (custom_system(spec)?, None),
    };
    sys.require_diagonal_diffusion()?;
    cfg.boundary.validate(sys.m())?;
    let u0 = initial_field(&cfg.initial, &grid)?;
    if u0.m() != sys.m() {
        return Err(Error::Config(format!("initial data has {} species, the model {}", u0.m(), sys.m())));
    }
    if let Some(v) = u0.data().iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Config(format!("initial data must be finite and nonnegative (found {v})")));
    }
    Ok(Setup { sys, grid, bc: cfg.boundary.clone(), u0, region, hetero })
}

fn compile(source: &str, vars: &[&str]) -> Result<Expr> {
    Expr::compile(source, vars)
}

/// A rate in `x, y, t`; constants stay constants.
fn coefficient(source: &str) -> Result<Coefficient> {
    let e = compile(source, &SPACE_TIME_VARS)?;
    Ok(match e.as_constant() {
        Some(v) => Coefficient::Constant(v),
        None => Coefficient::field(move |x, t| e.eval(&[x[0], x.get(1).copied().unwrap_or(0.0), t])),
    })
}

fn seird_params(rates: &SeirdRates, include_deceased: bool, region: &AuditBox) -> Result<SeirdParams> {
    let response = |label: &str, source: &Option<String>| -> Result<Option<Response>> {
        source
            .as_ref()
            .map(|s| {
                let e = compile(s, &RESPONSE_VARS)?;
                Ok(Response::new(format!("{label} = {s}"), rates.response_growth, move |z, n| e.eval(&[z, n])))
            })
            .transpose()
    };
    let params = SeirdParams {
        alpha: coefficient(&rates.alpha)?,
        mu: coefficient(&rates.mu)?,
        sigma: coefficient(&rates.sigma)?,
        phi_e: coefficient(&rates.phi_e)?,
        phi_r: coefficient(&rates.phi_r)?,
        phi_d: coefficient(&rates.phi_d)?,
        beta_i: coefficient(&rates.beta_i)?,
        beta_e: coefficient(&rates.beta_e)?,
        a0: rates.a0,
        nu: [
            coefficient(&rates.nu[0])?,
            coefficient(&rates.nu[1])?,
            coefficient(&rates.nu[2])?,
            coefficient(&rates.nu[3])?,
        ],
        beta_i_response: response("beta_i", &rates.beta_i_response)?,
        beta_e_response: response("beta_e", &rates.beta_e_response)?,
        include_deceased,
        region: region.clone(),
    };
    params.validate()?;
    Ok(params)
}

fn custom_system(spec: &CustomSpec) -> Result<ReactionSystem> {
    let m = spec.species.len();
    let mut vars: Vec<&str> = spec.species.iter().map(String::as_str).collect();
    vars.extend(SPACE_TIME_VARS);
    let reactions = spec.reactions.iter().map(|s| compile(s, &vars)).collect::<Result<Vec<_>>>()?;
    if reactions.len() != m {
        return Err(Error::Config(format!("{} reactions declared for {m} species", reactions.len())));
    }
    let f = move |x: &[f64], t: f64, u: &[f64], out: &mut [f64]| {
        let mut buf = Vec::with_capacity(m + 3);
        buf.extend_from_slice(u);
        buf.extend([x[0], x.get(1).copied().unwrap_or(0.0), t]);
        for (o, e) in out.iter_mut().zip(&reactions) {
            *o = e.eval(&buf);
        }
    };

    let phi = if spec.phi == "total" {
        Phi::TotalPopulation
    } else {
        let e = compile(&spec.phi, &vars[..m])?;
        match e.as_constant() {
            Some(c) => Phi::Constant(c),
            None => Phi::custom(move |u| e.eval(u)),
        }
    };

    let coeffs = |list: &[String]| list.iter().map(|s| coefficient(s)).collect::<Result<Vec<_>>>();
    let dx = coeffs(&spec.diffusion)?;
    let dy = spec.diffusion_y.as_deref().map(coeffs).transpose()?;
    let dxy = spec.diffusion_xy.as_deref().map(coeffs).transpose()?;
    let diffusion = (0..m)
        .map(|k| match (&dy, &dxy) {
            (None, None) => DiffusionTensor::Isotropic(dx[k].clone()),
            (Some(dy), None) => DiffusionTensor::Diagonal(vec![dx[k].clone(), dy[k].clone()]),
            (dy, Some(dxy)) => {
                let yy = dy.as_ref().map_or(dx[k].clone(), |d| d[k].clone());
                DiffusionTensor::Full(vec![vec![dx[k].clone(), dxy[k].clone()], vec![dxy[k].clone(), yy]])
            }
        })
        .collect();

    Ok(ReactionSystem::new(spec.species.clone(), diffusion, phi, Arc::new(f), spec.structural.clone())?
        .with_label("custom"))
}

pub fn initial_field(spec: &InitialSpec, grid: &Grid) -> Result<Field> {
    let spot = InitialProfile::default_spot(grid);
    let (d_center, d_width, d_mass) = match &spot {
        InitialProfile::GaussianSpot { center, width, mass } => (center.clone(), *width, *mass),
        _ => unreachable!("default_spot is a gaussian spot"),
    };
    match spec {
        InitialSpec::Homogeneous => seird_initial_profiles(&InitialProfile::Homogeneous, grid),
        InitialSpec::Spot { center, width, mass } => seird_initial_profiles(
            &InitialProfile::GaussianSpot {
                center: center.clone().unwrap_or(d_center),
                width: width.unwrap_or(d_width),
                mass: mass.unwrap_or(d_mass),
            },
            grid,
        ),
        InitialSpec::TwoCluster { width, mass } => seird_initial_profiles(
            &InitialProfile::TwoCluster { width: width.unwrap_or(d_width), mass: mass.unwrap_or(d_mass) },
            grid,
        ),
        InitialSpec::Heat => Ok(heat_initial(grid)),
        InitialSpec::Expr(values) => {
            let exprs = values.iter().map(|s| compile(s, &SPACE_VARS)).collect::<Result<Vec<_>>>()?;
            Ok(Field::from_fn(grid, exprs.len(), |k, x| exprs[k].eval(&[x[0], x.get(1).copied().unwrap_or(0.0)])))
        }
    }
}
