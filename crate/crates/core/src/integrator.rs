//! Explicit Euler time stepping with a positivity-preserving step bound.
//!
//! A step is `u ← u + dt (L(u) + f(u))` where `L` is the finite-volume
//! diffusion operator. With `γ + ρ ≤ 1` the update is a nonnegative
//! combination of old values: the diffusion part is limited to a fraction `γ`
//! of each cell's value by the CFL bound and the reaction part to a fraction
//! `ρ` by the positivity cap. Residual round-off negatives are clamped to zero
//! and booked in a per-species ledger.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{apply_diffusion_into, BoundarySpec, DiffusionWorkspace, Field, Grid};
use crate::model::{regularize_in_place, ReactionSystem};
use crate::numerics::pairwise_sum;

/// Relative size of negatives that are clamped rather than rejected.
pub const CLAMP_TOLERANCE: f64 = 1e-13;

/// Cell count above which reaction evaluation fans out over threads.
const PARALLEL_CELLS: usize = 2048;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepControl {
    /// CFL safety factor γ ∈ (0, 1].
    pub gamma: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Fraction ρ of a cell value a reaction step may remove.
    pub rho: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { gamma: 0.9, dt_min: 1e-12, dt_max: 0.1, rho: 0.1 }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            problems.push(format!("gamma must lie in (0, 1] (got {})", self.gamma));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            problems.push(format!("rho must lie in (0, 1] (got {})", self.rho));
        }
        if !(self.dt_min > 0.0) || !(self.dt_min <= self.dt_max) || !self.dt_max.is_finite() {
            problems.push(format!(
                "need 0 < dt_min ≤ dt_max < ∞ (got dt_min = {}, dt_max = {})",
                self.dt_min, self.dt_max
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub u: Field,
    pub t: f64,
    pub steps: u64,
    pub dt_last: f64,
    /// Volume-weighted mass removed by clamping, per species.
    pub clamp_mass: Vec<f64>,
    /// Cell values of the passive compartment, when the system has one.
    pub passive: Option<Vec<f64>>,
}

impl SimState {
    pub fn new(sys: &ReactionSystem, grid: &Grid, u: Field) -> Result<SimState> {
        if u.m() != sys.m() || u.cells() != grid.cells() {
            return Err(Error::Contract(format!(
                "initial field is {}×{}, system and grid need {}×{}",
                u.m(),
                u.cells(),
                sys.m(),
                grid.cells()
            )));
        }
        if u.min() < 0.0 {
            return Err(Error::Contract(format!("initial data must be nonnegative (min {})", u.min())));
        }
        let passive = sys.passive().map(|_| vec![0.0; grid.cells()]);
        Ok(SimState { clamp_mass: vec![0.0; u.m()], u, t: 0.0, steps: 0, dt_last: 0.0, passive })
    }

    pub fn total_clamp_mass(&self) -> f64 {
        self.clamp_mass.iter().sum()
    }
}

/// Right-hand side pieces of one state, reused across step retries.
struct Rates {
    diffusion: Field,
    reaction: Field,
    kmax: f64,
}

/// Per-run buffers and precomputed geometry.
struct Stepper<'a> {
    sys: &'a ReactionSystem,
    grid: &'a Grid,
    bc: &'a BoundarySpec,
    eps: f64,
    centers: Vec<[f64; 2]>,
    ws: DiffusionWorkspace,
    cell_major: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(sys: &'a ReactionSystem, grid: &'a Grid, bc: &'a BoundarySpec, eps: f64) -> Result<Self> {
        sys.require_diagonal_diffusion()?;
        bc.validate(sys.m())?;
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::Config(format!("eps must be finite and ≥ 0 (got {eps})")));
        }
        Ok(Stepper {
            sys,
            grid,
            bc,
            eps,
            centers: (0..grid.cells()).map(|c| grid.center(c)).collect(),
            ws: DiffusionWorkspace::default(),
            cell_major: vec![0.0; sys.m() * grid.cells()],
        })
    }

    fn rates(&mut self, state: &SimState) -> Result<Rates> {
        let (m, cells) = (self.sys.m(), self.grid.cells());
        let mut diffusion = Field::zeros(m, cells);
        let kmax = apply_diffusion_into(self.sys, self.grid, &state.u, state.t, self.bc, &mut self.ws, &mut diffusion)?;

        let (sys, u, t, eps, dim) = (self.sys, &state.u, state.t, self.eps, self.grid.dim());
        let centers = &self.centers;
        let eval = |buf: &mut Vec<f64>, (c, out): (usize, &mut [f64])| -> Result<()> {
            u.cell_into(c, buf);
            sys.evaluate_reactions(&centers[c][..dim], t, buf, out)?;
            if eps > 0.0 {
                regularize_in_place(out, eps);
            }
            Ok(())
        };
        if cells >= PARALLEL_CELLS {
            self.cell_major
                .par_chunks_mut(m)
                .enumerate()
                .try_for_each_init(|| vec![0.0; m], eval)?;
        } else {
            let mut buf = vec![0.0; m];
            for item in self.cell_major.chunks_mut(m).enumerate() {
                eval(&mut buf, item)?;
            }
        }
        let mut reaction = Field::zeros(m, cells);
        for k in 0..m {
            let dst = reaction.species_mut(k);
            for (c, v) in dst.iter_mut().enumerate() {
                *v = self.cell_major[c * m + k];
            }
        }
        Ok(Rates { diffusion, reaction, kmax })
    }

    /// Largest admissible step for the given rates.
    fn admissible_dt(&self, state: &SimState, rates: &Rates, control: &StepControl) -> Result<f64> {
        let mut rate = 0.0;
        for &h in self.grid.spacings() {
            rate += 2.0 * rates.kmax / (h * h) + self.bc.max_robin() / h;
        }
        let mut dt = if rate > 0.0 { (control.gamma / rate).min(control.dt_max) } else { control.dt_max };

        // Reaction positivity: dt·f_i ≥ −ρ u_i − τ, τ half the clamp tolerance.
        let tau = 0.5 * CLAMP_TOLERANCE * state.u.max_abs().max(1.0);
        let mut cap = f64::INFINITY;
        for (uk, fk) in state.u.data().iter().zip(rates.reaction.data()) {
            if *fk < 0.0 {
                cap = cap.min((control.rho * uk + tau) / -fk);
            }
        }
        while dt > cap && dt >= control.dt_min {
            dt *= 0.5;
        }
        if dt < control.dt_min {
            return Err(Error::Stiffness { required: dt.min(cap), dt_min: control.dt_min, t: state.t });
        }
        Ok(dt)
    }

    fn advance(&self, state: &SimState, rates: &Rates, dt: f64) -> Result<SimState> {
        let (m, cells) = (state.u.m(), state.u.cells());
        let tol = CLAMP_TOLERANCE * state.u.max_abs().max(1.0);
        let vol = self.grid.cell_volume();
        let mut next = state.clone();
        for k in 0..m {
            let (u, l, f) = (state.u.species(k), rates.diffusion.species(k), rates.reaction.species(k));
            let out = next.u.species_mut(k);
            for c in 0..cells {
                let v = u[c] + dt * (l[c] + f[c]);
                if v >= 0.0 {
                    out[c] = v;
                } else if v > -tol {
                    out[c] = 0.0;
                    next.clamp_mass[k] += -v * vol;
                } else {
                    return Err(Error::StepRejected { t: state.t, dt, species: k, cell: c, value: v, tolerance: tol });
                }
            }
        }
        if let (Some(passive), Some(d)) = (self.sys.passive(), next.passive.as_mut()) {
            let mut buf = vec![0.0; m];
            for (c, dc) in d.iter_mut().enumerate() {
                state.u.cell_into(c, &mut buf);
                *dc += dt * (passive.source)(&self.centers[c][..self.grid.dim()], state.t, &buf);
            }
        }
        next.t = state.t + dt;
        next.steps += 1;
        next.dt_last = dt;
        Ok(next)
    }
}

/// Largest explicit step that keeps the update nonnegative at `state`.
pub fn stable_dt(
    sys: &ReactionSystem,
    grid: &Grid,
    state: &SimState,
    bc: &BoundarySpec,
    control: &StepControl,
    eps: f64,
) -> Result<f64> {
    control.validate()?;
    let mut stepper = Stepper::new(sys, grid, bc, eps)?;
    let rates = stepper.rates(state)?;
    stepper.admissible_dt(state, &rates, control)
}

/// One explicit Euler step of length `dt`; reactions are regularized when
/// `eps > 0`.
pub fn step(
    sys: &ReactionSystem,
    grid: &Grid,
    state: &SimState,
    dt: f64,
    eps: f64,
    bc: &BoundarySpec,
) -> Result<SimState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Contract(format!("step length must be positive (got {dt})")));
    }
    let mut stepper = Stepper::new(sys, grid, bc, eps)?;
    let rates = stepper.rates(state)?;
    stepper.advance(state, &rates, dt)
}

/// Receives the state at every checkpoint.
pub trait Observer {
    fn observe(&mut self, state: &SimState) -> Result<()>;
}

impl<F: FnMut(&SimState) -> Result<()>> Observer for F {
    fn observe(&mut self, state: &SimState) -> Result<()> {
        self(state)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOptions {
    pub t_end: f64,
    /// Reaction regularization parameter.
    pub eps: f64,
    /// Shift the initial data by `eps` as well (the regularized problem).
    pub shift_initial: bool,
    /// Number of equally spaced checkpoints, both endpoints included.
    pub checkpoints: usize,
    /// Keep a copy of the state at every checkpoint.
    pub keep_states: bool,
}

impl RunOptions {
    pub fn new(t_end: f64) -> Self {
        RunOptions { t_end, eps: 0.0, shift_initial: true, checkpoints: 200, keep_states: false }
    }

    pub fn with_checkpoints(mut self, n: usize) -> Self {
        self.checkpoints = n;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn without_initial_shift(mut self) -> Self {
        self.shift_initial = false;
        self
    }

    pub fn keeping_states(mut self) -> Self {
        self.keep_states = true;
        self
    }

    pub fn checkpoint_times(&self) -> Vec<f64> {
        let n = self.checkpoints;
        (0..n)
            .map(|k| if k + 1 == n { self.t_end } else { self.t_end * k as f64 / (n - 1) as f64 })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub final_state: SimState,
    /// States at the checkpoints when requested.
    pub states: Vec<SimState>,
    pub checkpoint_times: Vec<f64>,
    pub steps: u64,
    pub rejected_steps: u64,
    /// Smallest cell value seen at any checkpoint.
    pub min_value: f64,
    pub initial_mass: f64,
}

impl RunResult {
    pub fn clamp_mass(&self) -> f64 {
        self.final_state.total_clamp_mass()
    }
}

/// Advances `u0` to `t_end`, landing exactly on every checkpoint.
pub fn integrate(
    sys: &ReactionSystem,
    grid: &Grid,
    u0: &Field,
    bc: &BoundarySpec,
    control: &StepControl,
    opts: &RunOptions,
    observers: &mut [&mut dyn Observer],
) -> Result<RunResult> {
    control.validate()?;
    if !(opts.t_end > 0.0) || !opts.t_end.is_finite() {
        return Err(Error::Config(format!("T must be positive (got {})", opts.t_end)));
    }
    if opts.checkpoints < 2 {
        return Err(Error::Config("at least two checkpoints are required".into()));
    }
    let mut stepper = Stepper::new(sys, grid, bc, opts.eps)?;
    let initial = if opts.eps > 0.0 && opts.shift_initial { u0.shifted(opts.eps) } else { u0.clone() };
    let mut state = SimState::new(sys, grid, initial)?;
    let initial_mass = pairwise_sum(state.u.data()) * grid.cell_volume();

    let times = opts.checkpoint_times();
    let mut states = Vec::new();
    let mut min_value = f64::INFINITY;
    let mut rejected = 0u64;

    let mut record = |state: &SimState, observers: &mut [&mut dyn Observer]| -> Result<()> {
        min_value = min_value.min(state.u.min());
        for o in observers.iter_mut() {
            o.observe(state)?;
        }
        if opts.keep_states {
            states.push(state.clone());
        }
        Ok(())
    };
    record(&state, observers)?;

    for &target in &times[1..] {
        while state.t < target {
            let wrap = |t: f64| move |e: Error| Error::Integration { t, source: Box::new(e) };
            let rates = stepper.rates(&state).map_err(wrap(state.t))?;
            let remaining = target - state.t;
            let mut dt = match stepper.admissible_dt(&state, &rates, control) {
                Ok(dt) => dt,
                // A short landing step may still be admissible below dt_min.
                Err(Error::Stiffness { .. }) if remaining < control.dt_min => remaining,
                Err(e) => return Err(wrap(state.t)(e)),
            };
            let landing = dt >= remaining * (1.0 - 1e-12);
            if landing {
                dt = remaining;
            }
            let mut next = loop {
                match stepper.advance(&state, &rates, dt) {
                    Ok(next) => break next,
                    Err(Error::StepRejected { .. }) if dt * 0.5 >= control.dt_min => {
                        rejected += 1;
                        dt *= 0.5;
                    }
                    Err(e) => return Err(wrap(state.t)(e)),
                }
            };
            if landing && next.dt_last == remaining {
                next.t = target;
            }
            state = next;
        }
        record(&state, observers)?;
    }
    drop(record);

    Ok(RunResult {
        steps: state.steps,
        final_state: state,
        states,
        checkpoint_times: times,
        rejected_steps: rejected,
        min_value,
        initial_mass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsilonGap {
    pub eps_coarse: f64,
    pub eps_fine: f64,
    /// Space-time L² distance of the two solutions.
    pub gap: f64,
}

/// Runs every regularization level (in parallel) and reports the space-time
/// L² distance between consecutive levels. The checkpoints of all runs fall
/// on the same times, so no interpolation is needed.
///
/// Only the reactions are regularized; all levels start from the same `u0`
/// so the gaps measure the effect of the bounded nonlinearity alone.
pub fn epsilon_sweep(
    sys: &ReactionSystem,
    grid: &Grid,
    u0: &Field,
    bc: &BoundarySpec,
    control: &StepControl,
    t_end: f64,
    checkpoints: usize,
    eps_list: &[f64],
) -> Result<Vec<EpsilonGap>> {
    if eps_list.len() < 2 {
        return Err(Error::Config("an epsilon sweep needs at least two levels".into()));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) || eps_list.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::Config(format!("eps levels must be ≥ 0 and strictly decreasing (got {eps_list:?})")));
    }
    let runs: Vec<RunResult> = eps_list
        .par_iter()
        .map(|&eps| {
            let opts = RunOptions::new(t_end).with_checkpoints(checkpoints).with_eps(eps).without_initial_shift().keeping_states();
            integrate(sys, grid, u0, bc, control, &opts, &mut [])
        })
        .collect::<Result<_>>()?;

    let vol = grid.cell_volume();
    let gaps = runs
        .windows(2)
        .zip(eps_list.windows(2))
        .map(|(pair, eps)| {
            let (a, b) = (&pair[0], &pair[1]);
            let sq: Vec<f64> = a
                .states
                .iter()
                .zip(&b.states)
                .map(|(sa, sb)| {
                    let d: Vec<f64> = sa.u.data().iter().zip(sb.u.data()).map(|(x, y)| (x - y) * (x - y)).collect();
                    pairwise_sum(&d) * vol
                })
                .collect();
            let times = &a.checkpoint_times;
            let integral: f64 = (1..sq.len()).map(|k| 0.5 * (sq[k] + sq[k - 1]) * (times[k] - times[k - 1])).sum();
            EpsilonGap { eps_coarse: eps[0], eps_fine: eps[1], gap: integral.sqrt() }
        })
        .collect();
    Ok(gaps)
}
