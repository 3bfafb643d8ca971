//! Runtime diagnostics: weight selection for the energy functional, mass and
//! norm functionals, and monitors that test the mass and energy inequalities
//! along a computed trajectory.

use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{assemble_b_tilde, lp_energy, min_eigenvalue, EnergyConfig};
use crate::error::{Error, Result};
use crate::grid::{discrete_weighted_dirichlet, Field, Grid};
use crate::integrator::{Observer, SimState};
use crate::model::{regularize_in_place, ReactionSystem};
use crate::numerics::pairwise_sum;
use crate::sampling::{AuditBox, Sampler};

/// `Σ_i c_i ∫ u_i`.
pub fn mass_functional(field: &Field, grid: &Grid, c: &[f64]) -> f64 {
    (0..field.m()).map(|k| c[k] * pairwise_sum(field.species(k)) * grid.cell_volume()).sum()
}

pub fn species_masses(field: &Field, grid: &Grid) -> Vec<f64> {
    (0..field.m()).map(|k| pairwise_sum(field.species(k)) * grid.cell_volume()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Norm {
    Lp(f64),
    Inf,
}

/// Per-species volume-weighted norms.
pub fn norms(field: &Field, grid: &Grid, norm: Norm) -> Vec<f64> {
    (0..field.m())
        .map(|k| {
            let u = field.species(k);
            match norm {
                Norm::Inf => u.iter().fold(0.0f64, |a, v| a.max(v.abs())),
                Norm::Lp(p) => {
                    let powered: Vec<f64> = u.iter().map(|v| v.abs().powf(p)).collect();
                    (pairwise_sum(&powered) * grid.cell_volume()).powf(1.0 / p)
                }
            }
        })
        .collect()
}

/// Parameters of the weight search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaSearch {
    pub p: u32,
    pub region: AuditBox,
    /// Space-time locations at which diffusion matrices are sampled.
    pub xt_samples: usize,
    /// State samples for the domination check.
    pub u_samples: usize,
    pub seed: u64,
}

impl ThetaSearch {
    pub fn new(p: u32, region: AuditBox) -> ThetaSearch {
        ThetaSearch { p, region, xt_samples: 16, u_samples: 4096, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaSelection {
    pub theta: Vec<f64>,
    /// Constant implied by the claimed intermediate-sum bound and the weights.
    pub k_certified: f64,
    /// Largest observed ratio `Σ ω_k f_k / (1 + Σ u^r)` over the samples.
    pub k_fitted: f64,
    pub min_eigenvalue: f64,
    pub samples_checked: usize,
}

const THETA_MAX_EXP: i32 = 40;

/// Solves `Aᵀ w = ω` by back substitution (`A` lower triangular).
fn cone_coefficients(a: &[Vec<f64>], omega: &[f64]) -> Vec<f64> {
    let m = omega.len();
    let mut w = vec![0.0; m];
    for k in (0..m).rev() {
        let tail: f64 = (k + 1..m).map(|l| a[l][k] * w[l]).sum();
        w[k] = (omega[k] - tail) / a[k][k];
    }
    w
}

fn trailing_min_eigenvalue(theta: &[f64], sys: &ReactionSystem, from: usize, xt: &[(Vec<f64>, f64)]) -> Result<f64> {
    let mut min = f64::INFINITY;
    for (x, t) in xt {
        let full = assemble_b_tilde(theta, sys, x, *t)?;
        let n = x.len();
        let size = full.nrows() - from * n;
        let sub = full.view((from * n, from * n), (size, size)).into_owned();
        min = min.min(min_eigenvalue(&sub));
    }
    Ok(min)
}

/// Chooses energy weights inductively from the last species to the first.
///
/// `θ_m` starts at 1; each `θ_i` is the smallest power of two (at least 1)
/// for which the trailing diffusion block matrix is positive definite at the
/// sampled locations and the weighted reactions `Σ θ_k^{2β_k+1} f_k` lie in
/// the cone spanned by the rows of the claimed intermediate-sum matrix `A`
/// (nonnegative coefficients `w = A^{-T} ω`) for every `|β| = p − 1`. The
/// chosen value is doubled as a safety margin before moving on, so the
/// margin never invalidates the cone condition of earlier components.
///
/// The claimed bound `Σ_{j≤i} a_ij f_j ≤ K3 (1 + Σ u^r)` then gives
/// `Σ ω_k f_k ≤ K3 Σ w_i (1 + Σ u^r)`, which is verified on samples.
pub fn select_theta(sys: &ReactionSystem, search: &ThetaSearch) -> Result<ThetaSelection> {
    sys.require_diagonal_diffusion()?;
    let m = sys.m();
    let st = sys.structural();
    let probe = EnergyConfig::new(search.p, vec![1.0; m])?;
    let sampler = Sampler::new(search.seed);
    let mut xt = sampler.space_time(&search.region, search.xt_samples.max(1));
    xt.push((vec![0.0; search.region.extent.len()], 0.0));
    xt.push((search.region.extent.clone(), search.region.t_max));

    let mut theta = vec![1.0; m];
    for i in (0..m).rev() {
        let mut found = false;
        let mut last_failure = String::new();
        for e in 0..=THETA_MAX_EXP {
            theta[i] = 2f64.powi(e);
            let eig = trailing_min_eigenvalue(&theta, sys, i, &xt)?;
            if !(eig > 0.0) {
                last_failure = format!("diffusion block matrix not positive definite (min eigenvalue {eig:.3e})");
                continue;
            }
            let cone_ok = probe.order_p1.indices.iter().all(|beta| {
                let omega: Vec<f64> = theta.iter().zip(beta).map(|(t, b)| t.powi(2 * *b as i32 + 1)).collect();
                let w = cone_coefficients(&st.a, &omega);
                w[i] >= -1e-12 * omega.iter().fold(1.0f64, |a, v| a.max(*v))
            });
            if !cone_ok {
                last_failure = "weighted reactions not dominated by the intermediate sums".into();
                continue;
            }
            found = true;
            break;
        }
        if !found {
            return Err(Error::Selection {
                species: i,
                condition: format!("{last_failure} up to θ = 2^{THETA_MAX_EXP}"),
            });
        }
        theta[i] *= 2.0;
    }

    let cfg = EnergyConfig::new(search.p, theta.clone())?;
    let min_eig = trailing_min_eigenvalue(&theta, sys, 0, &xt)?;
    let weight_rows: Vec<(Vec<f64>, f64)> = cfg
        .order_p1
        .indices
        .iter()
        .map(|beta| {
            let omega = cfg.omega(beta);
            let wsum = cone_coefficients(&st.a, &omega).iter().sum::<f64>();
            (omega, wsum)
        })
        .collect();
    let k_certified = st.k3 * weight_rows.iter().map(|(_, w)| *w).fold(0.0, f64::max);

    let mut points = sampler.interior(&search.region, m, search.u_samples);
    points.extend(sampler.corners(&search.region, m));
    let mut k_fitted = 0.0f64;
    let mut f = vec![0.0; m];
    for pt in &points {
        sys.evaluate_reactions(&pt.x, pt.t, &pt.u, &mut f)?;
        let growth = 1.0 + pt.u.iter().map(|v| v.powf(st.r)).sum::<f64>();
        let scale = 1.0 + f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (omega, _) in &weight_rows {
            let s: f64 = omega.iter().zip(&f).map(|(w, f)| w * f).sum();
            let wscale = scale * omega.iter().fold(1.0f64, |a, v| a.max(*v));
            if s > k_certified * growth + 1e-9 * wscale {
                return Err(Error::Selection {
                    species: 0,
                    condition: format!(
                        "sampled intermediate-sum domination fails at u = {:?}: {s:.6e} > {:.6e}",
                        pt.u,
                        k_certified * growth
                    ),
                });
            }
            k_fitted = k_fitted.max(s / growth);
        }
    }
    Ok(ThetaSelection { theta, k_certified, k_fitted, min_eigenvalue: min_eig, samples_checked: points.len() })
}

/// Energy-balance quantities of one state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergySample {
    pub t: f64,
    /// ℒ_p.
    pub energy: f64,
    /// `Σ_k ∫ u_k^{b+p−2} |∇u_k|²`.
    pub dissipation: f64,
    /// `Σ_k ∫ u_k^{p−1+r}`.
    pub growth: f64,
    /// `∫ ∇ℋ_p(u) · f(u)`, the reaction contribution to dℒ_p/dt.
    pub reaction_power: f64,
}

/// Evaluates energy samples for one energy order.
#[derive(Clone, Debug)]
pub struct DissipationMonitor {
    pub cfg: EnergyConfig,
    /// Conservative dissipation constant.
    pub alpha_hat: f64,
    b: f64,
    r: f64,
    eps: f64,
}

impl DissipationMonitor {
    /// `α̂ = λ_min · M · 4p(p−1)/(b+p)²`, with `λ_min` the smallest eigenvalue
    /// of the diffusion block matrix over `xt` and `M` the lower Φ constant.
    pub fn new(sys: &ReactionSystem, cfg: EnergyConfig, xt: &[(Vec<f64>, f64)], eps: f64) -> Result<Self> {
        let st = sys.structural();
        let mut lambda = f64::INFINITY;
        for (x, t) in xt {
            lambda = lambda.min(min_eigenvalue(&assemble_b_tilde(&cfg.theta, sys, x, *t)?));
        }
        let p = cfg.p as f64;
        let alpha_hat = lambda.max(0.0) * st.m_lower * 4.0 * p * (p - 1.0) / ((st.b + p) * (st.b + p));
        Ok(DissipationMonitor { cfg, alpha_hat, b: st.b, r: st.r, eps })
    }

    pub fn sample(&self, sys: &ReactionSystem, grid: &Grid, u: &Field, t: f64) -> Result<EnergySample> {
        let p = self.cfg.p as f64;
        let m = u.m();
        let dissipation = (0..m).map(|k| discrete_weighted_dirichlet(grid, u, k, self.b + p - 2.0)).sum();
        let g_exp = p - 1.0 + self.r;
        let growth_cells: Vec<f64> = (0..u.cells())
            .map(|c| (0..m).map(|k| u.get(k, c).powf(g_exp)).sum())
            .collect();
        let dim = grid.dim();
        let power_cells: Vec<f64> = (0..u.cells())
            .into_par_iter()
            .map_init(
                || (vec![0.0; m], vec![0.0; m]),
                |(buf, f), c| -> Result<f64> {
                    u.cell_into(c, buf);
                    let x = grid.center(c);
                    sys.evaluate_reactions(&x[..dim], t, buf, f)?;
                    if self.eps > 0.0 {
                        regularize_in_place(f, self.eps);
                    }
                    Ok(self.cfg.directional_derivative(buf, f))
                },
            )
            .collect::<Result<_>>()?;
        let vol = grid.cell_volume();
        Ok(EnergySample {
            t,
            energy: lp_energy(u, grid, &self.cfg),
            dissipation,
            growth: pairwise_sum(&growth_cells) * vol,
            reaction_power: pairwise_sum(&power_cells) * vol,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DissipationReport {
    pub p: u32,
    pub alpha_hat: f64,
    /// Fitted reaction constant: the largest interval ratio of reaction power
    /// to `growth + 1`.
    pub c_hat: f64,
    /// One residual per checkpoint interval.
    pub residuals: Vec<f64>,
    pub tolerances: Vec<f64>,
    pub satisfied: Vec<bool>,
    pub fraction_satisfied: f64,
    /// Intervals on which ℒ_p increased beyond [`ENERGY_ROUNDOFF`].
    pub energy_increases: usize,
    /// Empirical rate σ of `ℒ_p ≈ A e^{−σt}`, see [`fit_decay_rate`].
    /// Informational only; nothing is checked against it.
    pub decay_rate: Option<f64>,
}

/// Relative tolerance of the dissipation residual.
pub const DISSIPATION_TOLERANCE: f64 = 1e-6;

/// Relative evaluation accuracy of ℒ_p. Large weights make ℒ_p dominated by a
/// nearly constant term, so genuine changes can fall below a few ulps.
pub const ENERGY_ROUNDOFF: f64 = 1e-13;

/// Least-squares slope of `−ln ℒ_p` against `t` over the samples with a
/// positive energy. `None` with fewer than two such samples or no time spread.
pub fn fit_decay_rate(samples: &[EnergySample]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        samples.iter().filter(|s| s.energy > 0.0 && s.energy.is_finite()).map(|s| (s.t, s.energy.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mt, ml) = pts.iter().fold((0.0, 0.0), |(a, b), (t, l)| (a + t / n, b + l / n));
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), (t, l)| (a + (t - mt) * (l - ml), b + (t - mt) * (t - mt)));
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// Per-interval residual of
/// `ℒ_p′ + α̂ Σ∫u^{b+p−2}|∇u|² ≤ Ĉ (Σ∫u^{p−1+r} + 1)`
/// with time averages taken by the trapezoid rule.
pub fn dissipation_residuals(samples: &[EnergySample], p: u32, alpha_hat: f64) -> Result<DissipationReport> {
    if samples.len() < 3 {
        return Err(Error::Contract(format!("the dissipation monitor needs ≥ 3 checkpoints (got {})", samples.len())));
    }
    let intervals: Vec<(f64, f64, f64, f64)> = samples
        .windows(2)
        .map(|w| {
            let dt = w[1].t - w[0].t;
            let de = (w[1].energy - w[0].energy) / dt;
            let diss = 0.5 * (w[0].dissipation + w[1].dissipation);
            let growth = 0.5 * (w[0].growth + w[1].growth) + 1.0;
            let power = 0.5 * (w[0].reaction_power + w[1].reaction_power);
            (de, diss, growth, power)
        })
        .collect();
    let c_hat = intervals.iter().map(|(_, _, g, pw)| (pw / g).max(0.0)).fold(0.0, f64::max);
    let mut residuals = Vec::with_capacity(intervals.len());
    let mut tolerances = Vec::with_capacity(intervals.len());
    let mut satisfied = Vec::with_capacity(intervals.len());
    for (de, diss, growth, _) in &intervals {
        let res = de + alpha_hat * diss - c_hat * growth;
        let scale = 1.0 + de.abs().max(alpha_hat * diss).max(c_hat * growth);
        let tol = DISSIPATION_TOLERANCE * scale;
        residuals.push(res);
        tolerances.push(tol);
        satisfied.push(res <= tol);
    }
    let ok = satisfied.iter().filter(|s| **s).count();
    Ok(DissipationReport {
        p,
        alpha_hat,
        c_hat,
        fraction_satisfied: ok as f64 / satisfied.len() as f64,
        energy_increases: samples
            .windows(2)
            .filter(|w| w[1].energy - w[0].energy > ENERGY_ROUNDOFF * w[0].energy.abs())
            .count(),
        decay_rate: fit_decay_rate(samples),
        residuals,
        tolerances,
        satisfied,
    })
}

/// Convenience wrapper over stored checkpoint states.
pub fn dissipation_monitor(
    sys: &ReactionSystem,
    grid: &Grid,
    states: &[SimState],
    cfg: &EnergyConfig,
    xt: &[(Vec<f64>, f64)],
) -> Result<DissipationReport> {
    let monitor = DissipationMonitor::new(sys, cfg.clone(), xt, 0.0)?;
    let samples = states
        .iter()
        .map(|s| monitor.sample(sys, grid, &s.u, s.t))
        .collect::<Result<Vec<_>>>()?;
    dissipation_residuals(&samples, cfg.p, monitor.alpha_hat)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MassReport {
    pub satisfied: Vec<bool>,
    pub fraction_satisfied: f64,
    /// Largest excess of the weighted mass over its bound.
    pub worst_excess: f64,
}

/// Checks `Σc∫u(t+Δ) ≤ Σc∫u(t) + Δ (sup K1·Σ∫u + K2|Ω|) + slack` for each
/// checkpoint pair, where the supremum is taken over the two endpoints.
pub fn mass_control_monitor(
    times: &[f64],
    weighted: &[f64],
    totals: &[f64],
    k1: f64,
    k2: f64,
    measure: f64,
) -> MassReport {
    let mut satisfied = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for k in 1..times.len() {
        let dt = times[k] - times[k - 1];
        let sup = (k1 * totals[k - 1]).max(k1 * totals[k]);
        let bound = weighted[k - 1] + dt * (sup + k2 * measure);
        let scale = 1.0 + weighted[k - 1].abs().max(weighted[k].abs());
        let excess = weighted[k] - bound;
        worst = worst.max(excess);
        satisfied.push(excess <= 1e-8 * scale);
    }
    let ok = satisfied.iter().filter(|s| **s).count();
    MassReport { fraction_satisfied: ok as f64 / satisfied.len().max(1) as f64, satisfied, worst_excess: worst }
}

/// One row of the diagnostic time series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesRow {
    pub t: f64,
    pub masses: Vec<f64>,
    pub weighted_mass: f64,
    pub linf: Vec<f64>,
    pub energies: Vec<f64>,
    pub clamp_mass: f64,
    pub passive_total: Option<f64>,
}

/// Observer that records the diagnostic series at every checkpoint.
pub struct Recorder<'a> {
    sys: &'a ReactionSystem,
    grid: &'a Grid,
    monitors: Vec<DissipationMonitor>,
    pub rows: Vec<SeriesRow>,
    pub energy_samples: Vec<Vec<EnergySample>>,
}

impl<'a> Recorder<'a> {
    pub fn new(sys: &'a ReactionSystem, grid: &'a Grid, monitors: Vec<DissipationMonitor>) -> Self {
        let n = monitors.len();
        Recorder { sys, grid, monitors, rows: Vec::new(), energy_samples: vec![Vec::new(); n] }
    }

    pub fn orders(&self) -> Vec<u32> {
        self.monitors.iter().map(|m| m.cfg.p).collect()
    }

    pub fn dissipation_reports(&self) -> Result<Vec<DissipationReport>> {
        self.monitors
            .iter()
            .zip(&self.energy_samples)
            .map(|(m, s)| dissipation_residuals(s, m.cfg.p, m.alpha_hat))
            .collect()
    }

    pub fn mass_report(&self) -> MassReport {
        let st = self.sys.structural();
        let times: Vec<f64> = self.rows.iter().map(|r| r.t).collect();
        let weighted: Vec<f64> = self.rows.iter().map(|r| r.weighted_mass).collect();
        let totals: Vec<f64> = self.rows.iter().map(|r| r.masses.iter().sum()).collect();
        mass_control_monitor(&times, &weighted, &totals, st.k1, st.k2, self.grid.measure())
    }
}

impl Observer for Recorder<'_> {
    fn observe(&mut self, state: &SimState) -> Result<()> {
        let mut energies = Vec::with_capacity(self.monitors.len());
        for (monitor, store) in self.monitors.iter().zip(self.energy_samples.iter_mut()) {
            let s = monitor.sample(self.sys, self.grid, &state.u, state.t)?;
            energies.push(s.energy);
            store.push(s);
        }
        let masses = species_masses(&state.u, self.grid);
        self.rows.push(SeriesRow {
            t: state.t,
            weighted_mass: mass_functional(&state.u, self.grid, &self.sys.structural().c),
            masses,
            linf: norms(&state.u, self.grid, Norm::Inf),
            energies,
            clamp_mass: state.total_clamp_mass(),
            passive_total: state.passive.as_ref().map(|d| pairwise_sum(d) * self.grid.cell_volume()),
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundarySpec;
    use crate::integrator::{integrate, RunOptions, StepControl};
    use crate::model::{DiffusionTensor, Phi, StructuralParams};
    use std::sync::Arc;

    fn system(d: &[f64], phi: Phi, st: StructuralParams, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> ReactionSystem {
        ReactionSystem::new(
            (0..d.len()).map(|k| format!("u{k}")).collect(),
            d.iter().map(|v| DiffusionTensor::isotropic(*v)).collect(),
            phi,
            Arc::new(move |_, _, u, out: &mut [f64]| f(u, out)),
            st,
        )
        .unwrap()
    }

    #[test]
    fn mass_functional_examples() {
        let g = Grid::new_2d(4, 4, 1.0, 1.0).unwrap();
        let f = Field::from_fn(&g, 4, |_, _| 1.0);
        assert!((mass_functional(&f, &g, &[1.0; 4]) - 4.0).abs() < 1e-14);
        let c = [0.5, 1.0, 2.0, 3.0];
        let f2 = Field::from_fn(&g, 4, |k, x| x[0] + k as f64);
        let doubled: Vec<f64> = c.iter().map(|v| 2.0 * v).collect();
        assert!((mass_functional(&f2, &g, &doubled) - 2.0 * mass_functional(&f2, &g, &c)).abs() < 1e-13);
    }

    #[test]
    fn norm_examples() {
        let g = Grid::new_2d(8, 4, 2.0, 1.5).unwrap();
        let c = Field::from_fn(&g, 1, |_, _| 0.7);
        assert!((norms(&c, &g, Norm::Lp(3.0))[0] - 0.7 * 3f64.powf(1.0 / 3.0)).abs() < 1e-14);
        assert_eq!(norms(&c, &g, Norm::Inf)[0], 0.7);
        assert_eq!(norms(&Field::zeros(2, 32), &g, Norm::Lp(2.0)), vec![0.0, 0.0]);
        let g1 = Grid::new_1d(100, 1.0).unwrap();
        let lin = Field::from_fn(&g1, 1, |_, x| x[0]);
        assert!((norms(&lin, &g1, Norm::Lp(2.0))[0] - 3f64.powf(-0.5)).abs() < g1.h(0));
    }

    #[test]
    fn dissipative_single_species_gets_theta_two() {
        let st = StructuralParams { k3: 1e-12, ..StructuralParams::neutral(1) };
        let sys = system(&[1.0], Phi::Constant(1.0), st, |u, out| out[0] = -u[0].powi(3));
        let sel = select_theta(&sys, &ThetaSearch::new(2, AuditBox::unit(10.0))).unwrap();
        assert_eq!(sel.theta, vec![2.0]);
        assert_eq!(sel.k_fitted, 0.0);
    }

    #[test]
    fn equal_diffusion_pair() {
        let sys = system(&[1.0, 1.0], Phi::Constant(1.0), StructuralParams::neutral(2), |_, out| out.fill(0.0));
        let sel = select_theta(&sys, &ThetaSearch::new(2, AuditBox::unit(10.0))).unwrap();
        assert_eq!(sel.theta, vec![2.0, 2.0]);
        assert!((sel.min_eigenvalue - 3.0).abs() < 1e-12);
    }

    #[test]
    fn chemical_pair_needs_the_triangular_matrix() {
        let mut st = StructuralParams::neutral(2);
        st.a = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        st.k3 = 1e-9;
        let sys = system(&[1.0, 0.5], Phi::Constant(1.0), st, |u, out| {
            out[0] = -u[0] * u[1];
            out[1] = u[0] * u[1];
        });
        let sel = select_theta(&sys, &ThetaSearch::new(3, AuditBox::unit(10.0))).unwrap();
        // The cone condition forces θ_1 ≥ θ_2^{2p−1} = 2^5 before the margin.
        assert_eq!(sel.theta, vec![64.0, 2.0]);
        assert!(sel.k_fitted <= sel.k_certified);

        let wrong = system(&[1.0, 0.5], Phi::Constant(1.0), StructuralParams::neutral(2), |u, out| {
            out[0] = -u[0] * u[1];
            out[1] = u[0] * u[1];
        });
        assert!(matches!(select_theta(&wrong, &ThetaSearch::new(2, AuditBox::unit(10.0))), Err(Error::Selection { .. })));
    }

    #[test]
    fn decay_rate_recovers_an_exponential() {
        let sample = |t: f64, energy: f64| EnergySample { t, energy, dissipation: 0.0, growth: 0.0, reaction_power: 0.0 };
        let samples: Vec<_> = (0..20).map(|k| k as f64 * 0.25).map(|t| sample(t, 3.0 * (-0.7 * t).exp())).collect();
        assert!((fit_decay_rate(&samples).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(fit_decay_rate(&[sample(0.0, 1.0), sample(1.0, 0.0)]), None);
    }

    #[test]
    fn cone_back_substitution() {
        let a = vec![vec![1.0, 0.0, 0.0], vec![2.0, 1.0, 0.0], vec![0.0, 3.0, 2.0]];
        let omega = [10.0, 8.0, 4.0];
        let w = cone_coefficients(&a, &omega);
        // Check Aᵀ w = ω.
        for k in 0..3 {
            let s: f64 = (0..3).map(|l| a[l][k] * w[l]).sum();
            assert!((s - omega[k]).abs() < 1e-12);
        }
    }

    fn diffusion_run(p: u32) -> DissipationReport {
        let sys = system(&[0.05, 0.04, 0.03, 0.02], Phi::TotalPopulation, StructuralParams::neutral(4), |_, out| out.fill(0.0));
        let g = Grid::new_2d(16, 16, 1.0, 1.0).unwrap();
        let u0 = Field::from_fn(&g, 4, |k, x| {
            let r2 = (x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2);
            (1.0 + k as f64) * 0.2 + (-r2 * 30.0).exp()
        });
        let cfg = EnergyConfig::new(p, vec![2.0; 4]).unwrap();
        let xt = vec![(vec![0.5, 0.5], 0.0)];
        let monitor = DissipationMonitor::new(&sys, cfg, &xt, 0.0).unwrap();
        let mut rec = Recorder::new(&sys, &g, vec![monitor]);
        let opts = RunOptions::new(1.0).with_checkpoints(21);
        integrate(&sys, &g, &u0, &BoundarySpec::NeumannZeroFlux, &StepControl::default(), &opts, &mut [&mut rec]).unwrap();
        rec.dissipation_reports().unwrap().remove(0)
    }

    #[test]
    fn pure_diffusion_energy_decays() {
        for p in [2, 3] {
            let rep = diffusion_run(p);
            assert_eq!(rep.energy_increases, 0, "p = {p}");
            assert_eq!(rep.c_hat, 0.0);
            assert_eq!(rep.fraction_satisfied, 1.0, "p = {p}: {:?}", rep.residuals);
        }
    }

    #[test]
    fn constant_state_has_constant_energy() {
        let sys = system(&[1.0, 1.0], Phi::TotalPopulation, StructuralParams::neutral(2), |_, out| out.fill(0.0));
        let g = Grid::new_1d(10, 1.0).unwrap();
        let cfg = EnergyConfig::new(3, vec![2.0, 2.0]).unwrap();
        let monitor = DissipationMonitor::new(&sys, cfg, &[(vec![0.5], 0.0)], 0.0).unwrap();
        let mut rec = Recorder::new(&sys, &g, vec![monitor]);
        let u0 = Field::from_fn(&g, 2, |k, _| 1.0 + k as f64);
        let opts = RunOptions::new(0.5).with_checkpoints(5);
        integrate(&sys, &g, &u0, &BoundarySpec::NeumannZeroFlux, &StepControl::default(), &opts, &mut [&mut rec]).unwrap();
        let e: Vec<f64> = rec.energy_samples[0].iter().map(|s| s.energy).collect();
        assert!(e.iter().all(|v| *v == e[0]));
    }

    #[test]
    fn mass_monitor_detects_growth() {
        let times = [0.0, 1.0, 2.0];
        let rep = mass_control_monitor(&times, &[1.0, 0.9, 0.8], &[1.0, 0.9, 0.8], 0.0, 0.0, 1.0);
        assert_eq!(rep.fraction_satisfied, 1.0);
        let rep = mass_control_monitor(&times, &[1.0, 1.1, 1.0], &[1.0, 1.1, 1.0], 0.0, 0.0, 1.0);
        assert_eq!(rep.satisfied, vec![false, true]);
        // Exponential decay at the claimed rate satisfies the sign-aware bound.
        let m: Vec<f64> = times.iter().map(|t| (-0.1f64 * t).exp()).collect();
        assert_eq!(mass_control_monitor(&times, &m, &m, -0.1, 0.0, 1.0).fraction_satisfied, 1.0);
    }
}
