//! Structured finite-volume mesh and the two-point flux discretization of
//! `∇·(D_i Φ(u) ∇u_i)` on boxes in one or two dimensions.
//!
//! Cells are indexed row-major with `x` fastest: `c = j·n_x + i`. Face
//! diffusivities use the arithmetic mean of Φ over the two neighbours, so
//! the flux only vanishes where both neighbours are degenerate.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ReactionSystem;
use crate::numerics::pairwise_sum_by;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    dim: usize,
    n: [usize; 2],
    extent: [f64; 2],
    h: [f64; 2],
}

impl Grid {
    pub fn new_1d(nx: usize, lx: f64) -> Result<Grid> {
        Self::build(1, [nx, 1], [lx, 1.0])
    }

    pub fn new_2d(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Grid> {
        Self::build(2, [nx, ny], [lx, ly])
    }

    /// `n` and `extent` hold one entry per dimension.
    pub fn new(n: &[usize], extent: &[f64]) -> Result<Grid> {
        match (n, extent) {
            ([nx], [lx]) => Self::new_1d(*nx, *lx),
            ([nx, ny], [lx, ly]) => Self::new_2d(*nx, *ny, *lx, *ly),
            _ => Err(Error::Config(format!(
                "grid needs matching cell counts and extents for 1 or 2 dimensions (got {n:?}, {extent:?})"
            ))),
        }
    }

    fn build(dim: usize, n: [usize; 2], extent: [f64; 2]) -> Result<Grid> {
        for axis in 0..dim {
            if n[axis] < 2 {
                return Err(Error::Config(format!("grid needs at least 2 cells per axis (axis {axis} has {})", n[axis])));
            }
            if !(extent[axis] > 0.0) || !extent[axis].is_finite() {
                return Err(Error::Config(format!("grid extent must be positive (axis {axis}: {})", extent[axis])));
            }
        }
        let h = [extent[0] / n[0] as f64, if dim == 2 { extent[1] / n[1] as f64 } else { 1.0 }];
        Ok(Grid { dim, n, extent, h })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nx(&self) -> usize {
        self.n[0]
    }

    pub fn ny(&self) -> usize {
        self.n[1]
    }

    pub fn counts(&self) -> &[usize] {
        &self.n[..self.dim]
    }

    pub fn cells(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn h(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    pub fn spacings(&self) -> &[f64] {
        &self.h[..self.dim]
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.extent[axis]
    }

    pub fn extents(&self) -> &[f64] {
        &self.extent[..self.dim]
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[..self.dim].iter().product()
    }

    /// |Ω|.
    pub fn measure(&self) -> f64 {
        self.extent[..self.dim].iter().product()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n[0] + i
    }

    #[inline]
    pub fn coords(&self, c: usize) -> (usize, usize) {
        (c % self.n[0], c / self.n[0])
    }

    /// Cell centre; only the first `dim` entries are meaningful.
    #[inline]
    pub fn center(&self, c: usize) -> [f64; 2] {
        let (i, j) = self.coords(c);
        [(i as f64 + 0.5) * self.h[0], (j as f64 + 0.5) * self.h[1]]
    }

    /// Same grid with every axis refined by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Grid> {
        let n: Vec<usize> = self.counts().iter().map(|n| n * factor).collect();
        Grid::new(&n, self.extents())
    }
}

/// Cell-averaged values for all species, species-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    m: usize,
    cells: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(m: usize, cells: usize) -> Field {
        Field { m, cells, data: vec![0.0; m * cells] }
    }

    pub fn from_data(m: usize, cells: usize, data: Vec<f64>) -> Result<Field> {
        if data.len() != m * cells {
            return Err(Error::Contract(format!(
                "field data has {} values, expected {m}×{cells}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("field value {pos} is not finite")));
        }
        Ok(Field { m, cells, data })
    }

    /// Samples `init(species, centre)` at cell centres.
    pub fn from_fn(grid: &Grid, m: usize, init: impl Fn(usize, &[f64]) -> f64) -> Field {
        let cells = grid.cells();
        let mut data = Vec::with_capacity(m * cells);
        for k in 0..m {
            for c in 0..cells {
                let x = grid.center(c);
                data.push(init(k, &x[..grid.dim()]));
            }
        }
        Field { m, cells, data }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn species(&self, k: usize) -> &[f64] {
        &self.data[k * self.cells..(k + 1) * self.cells]
    }

    #[inline]
    pub fn species_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.cells..(k + 1) * self.cells]
    }

    #[inline]
    pub fn get(&self, k: usize, c: usize) -> f64 {
        self.data[k * self.cells + c]
    }

    /// Copies the state vector of cell `c` into `buf`.
    #[inline]
    pub fn cell_into(&self, c: usize, buf: &mut [f64]) {
        for (k, b) in buf.iter_mut().enumerate().take(self.m) {
            *b = self.data[k * self.cells + c];
        }
    }

    pub fn cell(&self, c: usize) -> Vec<f64> {
        let mut buf = vec![0.0; self.m];
        self.cell_into(c, &mut buf);
        buf
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    pub fn shifted(&self, delta: f64) -> Field {
        Field { m: self.m, cells: self.cells, data: self.data.iter().map(|v| v + delta).collect() }
    }

    /// Mirror image about the mid-plane normal to `axis`.
    pub fn reflected(&self, grid: &Grid, axis: usize) -> Field {
        let mut out = self.clone();
        for k in 0..self.m {
            for c in 0..self.cells {
                let (i, j) = grid.coords(c);
                let src = if axis == 0 {
                    grid.index(grid.nx() - 1 - i, j)
                } else {
                    grid.index(i, grid.ny() - 1 - j)
                };
                out.data[k * self.cells + c] = self.data[k * self.cells + src];
            }
        }
        out
    }

    /// Block averages onto a grid coarser by `factor` along every axis.
    pub fn coarsened(&self, fine: &Grid, factor: usize) -> Result<Field> {
        if factor == 0 || fine.counts().iter().any(|n| n % factor != 0) {
            return Err(Error::Contract(format!("cannot coarsen {:?} by {factor}", fine.counts())));
        }
        let nxc = fine.nx() / factor;
        let nyc = if fine.dim() == 2 { fine.ny() / factor } else { 1 };
        let fy = if fine.dim() == 2 { factor } else { 1 };
        let cells = nxc * nyc;
        let mut data = vec![0.0; self.m * cells];
        let weight = 1.0 / (factor * fy) as f64;
        for k in 0..self.m {
            for jc in 0..nyc {
                for ic in 0..nxc {
                    let mut acc = 0.0;
                    for dj in 0..fy {
                        for di in 0..factor {
                            acc += self.get(k, fine.index(ic * factor + di, jc * fy + dj));
                        }
                    }
                    data[k * cells + jc * nxc + ic] = acc * weight;
                }
            }
        }
        Ok(Field { m: self.m, cells, data })
    }
}

/// Boundary condition applied to every species.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum BoundarySpec {
    /// `(D_i Φ ∇u_i)·η = 0`.
    NeumannZeroFlux,
    /// `(D_i Φ ∇u_i)·η + α_i u_i = 0`, one coefficient per species.
    Robin(Vec<f64>),
}

impl BoundarySpec {
    pub fn validate(&self, m: usize) -> Result<()> {
        if let BoundarySpec::Robin(alpha) = self {
            if alpha.len() != m {
                return Err(Error::Config(format!("Robin boundary needs {m} coefficients, got {}", alpha.len())));
            }
            if let Some(a) = alpha.iter().find(|a| !(**a >= 0.0) || !a.is_finite()) {
                return Err(Error::Config(format!("Robin coefficients must be finite and ≥ 0 (got {a})")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn robin_coefficient(&self, k: usize) -> f64 {
        match self {
            BoundarySpec::NeumannZeroFlux => 0.0,
            BoundarySpec::Robin(a) => a[k],
        }
    }

    pub fn max_robin(&self) -> f64 {
        match self {
            BoundarySpec::NeumannZeroFlux => 0.0,
            BoundarySpec::Robin(a) => a.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// `d_i(x_face, t) · ½(Φ(u_left) + Φ(u_right))` for the face normal to `axis`.
pub fn face_diffusivity(
    sys: &ReactionSystem,
    u_left: &[f64],
    u_right: &[f64],
    x_face: &[f64],
    t: f64,
    species: usize,
    axis: usize,
) -> Result<f64> {
    let phi = 0.5 * (sys.evaluate_phi(u_left)? + sys.evaluate_phi(u_right)?);
    let d = sys.diffusion()[species].axis(axis, x_face, t);
    if !(d >= 0.0) || !d.is_finite() {
        return Err(Error::Assembly {
            cell: usize::MAX,
            reason: format!("diffusion coefficient {d} of species {species} at {x_face:?} is not ≥ 0"),
        });
    }
    Ok(d * phi)
}

/// Reusable buffers for repeated operator applications on one grid.
#[derive(Debug, Default)]
pub struct DiffusionWorkspace {
    phi: Vec<f64>,
    kx: Vec<f64>,
    ky: Vec<f64>,
    buf: Vec<f64>,
}

/// `∇·(D_i Φ(u) ∇u_i)` as cell averages for every species.
pub fn apply_diffusion_operator(
    sys: &ReactionSystem,
    grid: &Grid,
    field: &Field,
    t: f64,
    bc: &BoundarySpec,
) -> Result<Field> {
    let mut out = Field::zeros(field.m(), field.cells());
    let mut ws = DiffusionWorkspace::default();
    apply_diffusion_into(sys, grid, field, t, bc, &mut ws, &mut out)?;
    Ok(out)
}

/// In-place variant of [`apply_diffusion_operator`]. Returns the largest face
/// diffusivity encountered, which bounds the explicit time step.
pub fn apply_diffusion_into(
    sys: &ReactionSystem,
    grid: &Grid,
    field: &Field,
    t: f64,
    bc: &BoundarySpec,
    ws: &mut DiffusionWorkspace,
    out: &mut Field,
) -> Result<f64> {
    let m = field.m();
    let cells = grid.cells();
    if m != sys.m() || field.cells() != cells || out.m() != m || out.cells() != cells {
        return Err(Error::Contract("field shape does not match system and grid".into()));
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let two_d = grid.dim() == 2;

    ws.phi.resize(cells, 0.0);
    ws.buf.resize(m, 0.0);
    for c in 0..cells {
        field.cell_into(c, &mut ws.buf);
        ws.phi[c] = sys.evaluate_phi(&ws.buf).map_err(|e| Error::Assembly { cell: c, reason: e.to_string() })?;
    }

    let hx2 = 1.0 / (grid.h(0) * grid.h(0));
    let hy2 = if two_d { 1.0 / (grid.h(1) * grid.h(1)) } else { 0.0 };
    let (hx, hy) = (grid.h(0), grid.h(1));
    let mut kmax = 0.0f64;

    for k in 0..m {
        let tensor = &sys.diffusion()[k];
        let alpha = bc.robin_coefficient(k);

        // x-faces: between (i, j) and (i + 1, j), stored at j·(nx − 1) + i.
        ws.kx.resize((nx - 1) * ny, 0.0);
        let dx_const = tensor.constant_axis(0);
        for j in 0..ny {
            for i in 0..nx - 1 {
                let d = match dx_const {
                    Some(d) => d,
                    None => tensor.axis(0, &[(i + 1) as f64 * hx, (j as f64 + 0.5) * hy][..grid.dim()], t),
                };
                let c = grid.index(i, j);
                let kf = d * 0.5 * (ws.phi[c] + ws.phi[c + 1]);
                if !(kf >= 0.0) || !kf.is_finite() {
                    return Err(Error::Assembly {
                        cell: c,
                        reason: format!("face diffusivity {kf} of species {k} on axis 0 is not finite and ≥ 0"),
                    });
                }
                kmax = kmax.max(kf);
                ws.kx[j * (nx - 1) + i] = kf;
            }
        }
        // y-faces: between (i, j) and (i, j + 1), stored at j·nx + i.
        if two_d {
            ws.ky.resize(nx * (ny - 1), 0.0);
            let dy_const = tensor.constant_axis(1);
            for j in 0..ny - 1 {
                for i in 0..nx {
                    let d = match dy_const {
                        Some(d) => d,
                        None => tensor.axis(1, &[(i as f64 + 0.5) * hx, (j + 1) as f64 * hy], t),
                    };
                    let c = grid.index(i, j);
                    let kf = d * 0.5 * (ws.phi[c] + ws.phi[c + nx]);
                    if !(kf >= 0.0) || !kf.is_finite() {
                        return Err(Error::Assembly {
                            cell: c,
                            reason: format!("face diffusivity {kf} of species {k} on axis 1 is not finite and ≥ 0"),
                        });
                    }
                    kmax = kmax.max(kf);
                    ws.ky[j * nx + i] = kf;
                }
            }
        }

        let u = field.species(k);
        let o = out.species_mut(k);
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                let up = u[c];
                let west = if i > 0 {
                    ws.kx[j * (nx - 1) + i - 1] * (u[c - 1] - up) * hx2
                } else {
                    -alpha * up / hx
                };
                let east = if i + 1 < nx {
                    ws.kx[j * (nx - 1) + i] * (u[c + 1] - up) * hx2
                } else {
                    -alpha * up / hx
                };
                let mut acc = west + east;
                if two_d {
                    let south = if j > 0 { ws.ky[(j - 1) * nx + i] * (u[c - nx] - up) * hy2 } else { -alpha * up / hy };
                    let north = if j + 1 < ny { ws.ky[j * nx + i] * (u[c + nx] - up) * hy2 } else { -alpha * up / hy };
                    acc += south + north;
                }
                if !acc.is_finite() {
                    return Err(Error::Assembly { cell: c, reason: format!("non-finite divergence for species {k}") });
                }
                o[c] = acc;
            }
        }
    }
    Ok(kmax)
}

/// `Σ_{boundary faces} u_i · |face|`, using the adjacent cell value as the
/// trace (first order).
pub fn boundary_trace_integral(grid: &Grid, field: &Field, species: usize) -> f64 {
    let u = field.species(species);
    let (nx, ny) = (grid.nx(), grid.ny());
    if grid.dim() == 1 {
        return u[0] + u[nx - 1];
    }
    let (hx, hy) = (grid.h(0), grid.h(1));
    let vertical = pairwise_sum_by(ny, |j| u[grid.index(0, j)] + u[grid.index(nx - 1, j)]) * hy;
    let horizontal = pairwise_sum_by(nx, |i| u[grid.index(i, 0)] + u[grid.index(i, ny - 1)]) * hx;
    vertical + horizontal
}

/// `Σ_{interior faces} u_face^w |∇u|² |K|` with face-centred gradients and
/// `u_face` the mean of the two neighbours: the discrete `∫ u^w |∇u|²`.
pub fn discrete_weighted_dirichlet(grid: &Grid, field: &Field, species: usize, w: f64) -> f64 {
    let u = field.species(species);
    let (nx, ny) = (grid.nx(), grid.ny());
    let vol = grid.cell_volume();
    let weight = |a: f64, b: f64| {
        if w == 0.0 {
            1.0
        } else {
            (0.5 * (a + b)).max(0.0).powf(w)
        }
    };
    let hx = grid.h(0);
    let x_part = pairwise_sum_by(ny, |j| {
        let mut acc = 0.0;
        for i in 0..nx - 1 {
            let (a, b) = (u[grid.index(i, j)], u[grid.index(i + 1, j)]);
            let g = (b - a) / hx;
            acc += weight(a, b) * g * g;
        }
        acc
    });
    let y_part = if grid.dim() == 2 {
        let hy = grid.h(1);
        pairwise_sum_by(ny - 1, |j| {
            let mut acc = 0.0;
            for i in 0..nx {
                let (a, b) = (u[grid.index(i, j)], u[grid.index(i, j + 1)]);
                let g = (b - a) / hy;
                acc += weight(a, b) * g * g;
            }
            acc
        })
    } else {
        0.0
    };
    (x_part + y_part) * vol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Coefficient, DiffusionTensor, Phi, StructuralParams};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn system(m: usize, phi: Phi, d: f64) -> ReactionSystem {
        ReactionSystem::new(
            (0..m).map(|k| format!("u{k}")).collect(),
            (0..m).map(|_| DiffusionTensor::isotropic(d)).collect(),
            phi,
            Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0)),
            StructuralParams::neutral(m),
        )
        .unwrap()
    }

    fn weighted_total(grid: &Grid, f: &Field, k: usize) -> f64 {
        f.species(k).iter().sum::<f64>() * grid.cell_volume()
    }

    #[test]
    fn grid_geometry() {
        let g = Grid::new_2d(4, 5, 2.0, 3.0).unwrap();
        assert_eq!(g.cells(), 20);
        assert!((g.cell_volume() * 20.0 - g.measure()).abs() < 1e-14);
        assert_eq!(g.measure(), 6.0);
        assert_eq!(g.center(g.index(1, 2)), [0.75, 1.5]);
        assert!(Grid::new_1d(1, 1.0).is_err());
        assert!(Grid::new_2d(4, 4, 1.0, -1.0).is_err());
    }

    #[test]
    fn face_diffusivity_examples() {
        let heat = system(1, Phi::Constant(1.0), 1.0);
        assert_eq!(face_diffusivity(&heat, &[0.3], &[7.0], &[0.5], 0.0, 0, 0).unwrap(), 1.0);
        let nu_s = 0.7;
        let seird_like = system(4, Phi::TotalPopulation, nu_s);
        let left = [1.0, 0.5, 0.25, 0.25];
        let right = [0.0; 4];
        assert_eq!(face_diffusivity(&seird_like, &left, &right, &[0.5], 0.0, 0, 0).unwrap(), nu_s * 1.0);
        assert_eq!(face_diffusivity(&seird_like, &right, &right, &[0.5], 0.0, 0, 0).unwrap(), 0.0);
        let a = face_diffusivity(&seird_like, &left, &right, &[0.5], 0.0, 2, 0).unwrap();
        let b = face_diffusivity(&seird_like, &right, &left, &[0.5], 0.0, 2, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn negative_diffusivity_is_rejected() {
        let mut sys = system(1, Phi::Constant(1.0), 1.0);
        sys = ReactionSystem::new(
            vec!["u".into()],
            vec![DiffusionTensor::Isotropic(Coefficient::field(|x, _| x[0] - 0.5))],
            Phi::Constant(1.0),
            Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0)),
            sys.structural().clone(),
        )
        .unwrap();
        let g = Grid::new_1d(8, 1.0).unwrap();
        let f = Field::from_fn(&g, 1, |_, x| x[0]);
        assert!(matches!(
            apply_diffusion_operator(&sys, &g, &f, 0.0, &BoundarySpec::NeumannZeroFlux),
            Err(Error::Assembly { .. })
        ));
    }

    #[test]
    fn constant_field_is_stationary() {
        let sys = system(4, Phi::TotalPopulation, 0.3);
        let g = Grid::new_2d(6, 5, 1.0, 2.0).unwrap();
        let f = Field::from_fn(&g, 4, |k, _| 0.5 + k as f64);
        let out = apply_diffusion_operator(&sys, &g, &f, 0.0, &BoundarySpec::NeumannZeroFlux).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cosine_consistency_is_second_order() {
        let sys = system(1, Phi::Constant(1.0), 1.0);
        let err = |n: usize| {
            let g = Grid::new_1d(n, 1.0).unwrap();
            let f = Field::from_fn(&g, 1, |_, x| (PI * x[0]).cos());
            let out = apply_diffusion_operator(&sys, &g, &f, 0.0, &BoundarySpec::NeumannZeroFlux).unwrap();
            (0..n)
                .map(|c| (out.get(0, c) + PI * PI * (PI * g.center(c)[0]).cos()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(32), err(64), err(128));
        let r1 = (e1 / e2).log2();
        let r2 = (e2 / e3).log2();
        assert!(e3 < 2e-3, "max error {e3}");
        assert!((1.8..=2.2).contains(&r1) && (1.8..=2.2).contains(&r2), "rates {r1} {r2}");
    }

    #[test]
    fn neumann_fluxes_telescope() {
        let sys = system(2, Phi::TotalPopulation, 1.3);
        let g = Grid::new_2d(9, 7, 1.0, 1.5).unwrap();
        let f = Field::from_fn(&g, 2, |k, x| 1.0 + (3.0 * x[0] + k as f64).sin() * x[1]);
        let out = apply_diffusion_operator(&sys, &g, &f, 0.0, &BoundarySpec::NeumannZeroFlux).unwrap();
        for k in 0..2 {
            let total = weighted_total(&g, &out, k);
            assert!(total.abs() <= 1e-12 * f.max_abs() * g.measure(), "species {k}: {total}");
        }
    }

    #[test]
    fn robin_flux_accounting() {
        let sys = system(1, Phi::Constant(1.0), 1.0);
        let g = Grid::new_1d(50, 1.0).unwrap();
        let f = Field::from_fn(&g, 1, |_, _| 1.0);
        let bc = BoundarySpec::Robin(vec![1.0]);
        let out = apply_diffusion_operator(&sys, &g, &f, 0.0, &bc).unwrap();
        assert!((weighted_total(&g, &out, 0) + 2.0).abs() < 1e-12);

        let g2 = Grid::new_2d(12, 10, 1.0, 2.0).unwrap();
        let f2 = Field::from_fn(&g2, 1, |_, x| 1.0 + x[0] * x[1]);
        let bc2 = BoundarySpec::Robin(vec![0.7]);
        let out2 = apply_diffusion_operator(&sys, &g2, &f2, 0.0, &bc2).unwrap();
        let expected = -0.7 * boundary_trace_integral(&g2, &f2, 0);
        assert!((weighted_total(&g2, &out2, 0) - expected).abs() < 1e-12);
    }

    #[test]
    fn trace_integral_examples() {
        let g = Grid::new_1d(64, 1.0).unwrap();
        assert_eq!(boundary_trace_integral(&g, &Field::from_fn(&g, 1, |_, _| 1.0), 0), 2.0);
        let lin = Field::from_fn(&g, 1, |_, x| x[0]);
        assert!((boundary_trace_integral(&g, &lin, 0) - 1.0).abs() <= g.h(0));
        let sq = Grid::new_2d(16, 16, 1.0, 1.0).unwrap();
        let one = Field::from_fn(&sq, 1, |_, _| 1.0);
        assert!((boundary_trace_integral(&sq, &one, 0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn weighted_dirichlet_examples() {
        let g = Grid::new_1d(200, 1.0).unwrap();
        let c = Field::from_fn(&g, 1, |_, _| 3.0);
        assert_eq!(discrete_weighted_dirichlet(&g, &c, 0, 2.0), 0.0);
        let lin = Field::from_fn(&g, 1, |_, x| x[0]);
        assert!((discrete_weighted_dirichlet(&g, &lin, 0, 0.0) - 1.0).abs() <= 2.0 * g.h(0));
        assert!((discrete_weighted_dirichlet(&g, &lin, 0, 1.0) - 0.5).abs() <= 2.0 * g.h(0));
    }

    #[test]
    fn reflection_commutes_exactly() {
        let sys = system(2, Phi::TotalPopulation, 0.9);
        let g = Grid::new_2d(7, 6, 1.0, 1.0).unwrap();
        let f = Field::from_fn(&g, 2, |k, x| (1.0 + k as f64) * (x[0] * 3.1).exp() * (1.0 + x[1] * x[1]));
        for bc in [BoundarySpec::NeumannZeroFlux, BoundarySpec::Robin(vec![0.3, 1.1])] {
            let direct = apply_diffusion_operator(&sys, &g, &f, 0.0, &bc).unwrap();
            for axis in 0..2 {
                let mirrored = apply_diffusion_operator(&sys, &g, &f.reflected(&g, axis), 0.0, &bc).unwrap();
                assert_eq!(mirrored, direct.reflected(&g, axis));
            }
        }
    }

    #[test]
    fn coarsening_averages_blocks() {
        let g = Grid::new_2d(4, 4, 1.0, 1.0).unwrap();
        let f = Field::from_fn(&g, 1, |_, x| x[0]);
        let c = f.coarsened(&g, 2).unwrap();
        assert_eq!(c.cells(), 4);
        assert!((c.get(0, 0) - 0.25).abs() < 1e-15 && (c.get(0, 1) - 0.75).abs() < 1e-15);
        assert!(f.coarsened(&g, 3).is_err());
    }
}
