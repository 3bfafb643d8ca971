//! L^p energy functionals built from all degree-`p` monomials:
//!
//! ```text
//! ℋ_p[u] = Σ_{|β|=p} (p, β) θ^{β²} u^β,      ℒ_p[u] = ∫_Ω ℋ_p[u] dx
//! ```
//!
//! with `(p, β) = p!/(β_1!⋯β_m!)`, `θ^{β²} = Π θ_i^{β_i²}` and `0^0 = 1`.
//! For positive weights ℒ_p is equivalent to `Σ_i ‖u_i‖_p^p`.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::ReactionSystem;
use crate::numerics::pairwise_sum;

/// Default upper limit on the energy order.
pub const DEFAULT_P_CAP: u32 = 8;

/// `p! / Π β_i!` with overflow checking.
pub fn multinomial_coeff(p: u32, beta: &[u32]) -> Result<u64> {
    if beta.iter().map(|b| *b as u64).sum::<u64>() != p as u64 {
        return Err(Error::Contract(format!("multi-index {beta:?} does not have order {p}")));
    }
    // Product of binomials C(β_1+…+β_k, β_k); each factor is exact.
    let mut total = 1u64;
    let mut partial = 0u64;
    for &b in beta {
        for j in 1..=b as u64 {
            partial += 1;
            total = total
                .checked_mul(partial)
                .ok_or_else(|| Error::Config(format!("multinomial coefficient of order {p} overflows 64 bits")))?
                / j;
        }
    }
    Ok(total)
}

/// All `β ∈ Z_+^m` with `|β| = p`, in descending lexicographic order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiIndexSet {
    pub m: usize,
    pub p: u32,
    pub indices: Vec<Vec<u32>>,
    pub coeffs: Vec<u64>,
}

impl MultiIndexSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn enumerate_multi_indices(m: usize, p: u32) -> Result<MultiIndexSet> {
    if m == 0 {
        return Err(Error::Contract("multi-indices need m ≥ 1".into()));
    }
    fn fill(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for b in (0..=left).rev() {
            cur[pos] = b;
            fill(pos + 1, left - b, cur, out);
        }
    }
    let mut indices = Vec::new();
    fill(0, p, &mut vec![0; m], &mut indices);
    let coeffs = indices.iter().map(|b| multinomial_coeff(p, b)).collect::<Result<_>>()?;
    Ok(MultiIndexSet { m, p, indices, coeffs })
}

/// Π θ_i^{β_i²}.
fn theta_square_power(theta: &[f64], beta: &[u32]) -> f64 {
    theta.iter().zip(beta).map(|(t, b)| t.powi((b * b) as i32)).product()
}

/// u^β with 0^0 = 1.
#[inline]
fn monomial(u: &[f64], beta: &[u32]) -> f64 {
    u.iter().zip(beta).map(|(x, b)| x.powi(*b as i32)).product()
}

/// Energy order, weights and everything derived from them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyConfig {
    pub p: u32,
    pub theta: Vec<f64>,
    pub order_p: MultiIndexSet,
    pub order_p1: MultiIndexSet,
    pub order_p2: MultiIndexSet,
    pub c_low: f64,
    pub c_high: f64,
    /// `(p, β) θ^{β²}` for each `|β| = p`.
    weights_p: Vec<f64>,
    /// `p!/β! · θ^{β²}` for each `|β| = p − 1`.
    weights_p1: Vec<f64>,
}

impl EnergyConfig {
    pub fn new(p: u32, theta: Vec<f64>) -> Result<EnergyConfig> {
        Self::with_cap(p, theta, DEFAULT_P_CAP)
    }

    pub fn with_cap(p: u32, theta: Vec<f64>, cap: u32) -> Result<EnergyConfig> {
        if p < 2 {
            return Err(Error::Config(format!("energy order p must be ≥ 2 (got {p})")));
        }
        if p > cap {
            return Err(Error::Config(format!("energy order p = {p} exceeds the cap {cap}")));
        }
        if theta.is_empty() || theta.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::Config(format!("energy weights θ must be positive and finite (got {theta:?})")));
        }
        let m = theta.len();
        let order_p = enumerate_multi_indices(m, p)?;
        let order_p1 = enumerate_multi_indices(m, p - 1)?;
        let order_p2 = enumerate_multi_indices(m, p - 2)?;
        let weights_p: Vec<f64> = order_p
            .indices
            .iter()
            .zip(&order_p.coeffs)
            .map(|(b, c)| *c as f64 * theta_square_power(&theta, b))
            .collect();
        // p!/β! for |β| = p−1 equals p·(p−1, β).
        let weights_p1 = order_p1
            .indices
            .iter()
            .zip(&order_p1.coeffs)
            .map(|(b, c)| p as f64 * *c as f64 * theta_square_power(&theta, b))
            .collect();
        let p2 = (p * p) as i32;
        let c_low = theta.iter().map(|t| t.powi(p2)).fold(f64::INFINITY, f64::min);
        let max_weight = order_p.indices.iter().map(|b| theta_square_power(&theta, b)).fold(0.0, f64::max);
        let c_high = max_weight * (m as f64).powi(p as i32 - 1);
        Ok(EnergyConfig { p, theta, order_p, order_p1, order_p2, c_low, c_high, weights_p, weights_p1 })
    }

    pub fn m(&self) -> usize {
        self.theta.len()
    }

    /// Reaction-side weights `ω_k(β) = θ_k^{2β_k+1}`.
    pub fn omega(&self, beta: &[u32]) -> Vec<f64> {
        self.theta.iter().zip(beta).map(|(t, b)| t.powi(2 * *b as i32 + 1)).collect()
    }

    /// `Σ_{|β|=p−1} (p!/β!) θ^{β²} u^β Σ_j θ_j^{2β_j+1} v_j`, the chain-rule
    /// derivative of ℋ_p at `u` in direction `v`.
    pub fn directional_derivative(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (beta, w) in self.order_p1.indices.iter().zip(&self.weights_p1) {
            let inner: f64 = self.theta.iter().zip(beta).zip(v).map(|((t, b), v)| t.powi(2 * *b as i32 + 1) * v).sum();
            acc += w * monomial(u, beta) * inner;
        }
        acc
    }
}

/// ℋ_p at one state vector.
pub fn hp_pointwise(u: &[f64], cfg: &EnergyConfig) -> f64 {
    cfg.order_p
        .indices
        .iter()
        .zip(&cfg.weights_p)
        .map(|(beta, w)| w * monomial(u, beta))
        .sum()
}

fn per_cell<F: Fn(&[f64]) -> f64 + Sync>(field: &Field, f: F) -> Vec<f64> {
    let m = field.m();
    (0..field.cells())
        .into_par_iter()
        .map_init(|| vec![0.0; m], |buf, c| {
            field.cell_into(c, buf);
            f(buf)
        })
        .collect()
}

/// ℒ_p = ∫ ℋ_p, a volume-weighted pairwise sum over cells.
pub fn lp_energy(field: &Field, grid: &Grid, cfg: &EnergyConfig) -> f64 {
    pairwise_sum(&per_cell(field, |u| hp_pointwise(u, cfg))) * grid.cell_volume()
}

/// `(c_low, c_high)` with `c_low Σ u_i^p ≤ ℋ_p(u) ≤ c_high Σ u_i^p`.
pub fn lp_equivalence_bounds(cfg: &EnergyConfig) -> (f64, f64) {
    (cfg.c_low, cfg.c_high)
}

/// Largest cellwise mismatch between the finite difference of ℋ_p over
/// `[t, t + dt]` and the chain-rule expression evaluated at time `t`. The
/// mismatch is the Taylor remainder and therefore O(dt).
pub fn derivative_identity_check(before: &Field, after: &Field, dt: f64, cfg: &EnergyConfig) -> f64 {
    let m = before.m();
    let mut ua = vec![0.0; m];
    let mut ub = vec![0.0; m];
    let mut v = vec![0.0; m];
    let mut worst = 0.0f64;
    for c in 0..before.cells() {
        before.cell_into(c, &mut ua);
        after.cell_into(c, &mut ub);
        for k in 0..m {
            v[k] = (ub[k] - ua[k]) / dt;
        }
        let lhs = (hp_pointwise(&ub, cfg) - hp_pointwise(&ua, cfg)) / dt;
        let rhs = cfg.directional_derivative(&ua, &v);
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}

fn diffusion_blocks(sys: &ReactionSystem, dim: usize, x: &[f64], t: f64) -> Result<Vec<DMatrix<f64>>> {
    sys.diffusion()
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let mat = d.matrix(dim, x, t);
            let asym = (&mat - mat.transpose()).abs().max();
            if asym > 1e-12 * (1.0 + mat.abs().max()) {
                return Err(Error::Contract(format!("diffusion tensor of species {k} is not symmetric at {x:?}")));
            }
            Ok(mat)
        })
        .collect()
}

/// `mN × mN` matrix with blocks `θ_k² D_k` on the diagonal and `½(D_k + D_l)`
/// off it. Positive definiteness of this matrix is equivalent to that of the
/// β-dependent matrix in [`assemble_b`], which it congruently scales.
pub fn assemble_b_tilde(theta: &[f64], sys: &ReactionSystem, x: &[f64], t: f64) -> Result<DMatrix<f64>> {
    assemble(theta, sys, x, t, None)
}

/// `B(β)` with blocks `½ C_kl(β)(D_k + D_l)`, where `C_kk = θ_k^{4β_k+4}` and
/// `C_kl = θ_k^{2β_k+1} θ_l^{2β_l+1}`.
pub fn assemble_b(beta: &[u32], theta: &[f64], sys: &ReactionSystem, x: &[f64], t: f64) -> Result<DMatrix<f64>> {
    assemble(theta, sys, x, t, Some(beta))
}

fn assemble(theta: &[f64], sys: &ReactionSystem, x: &[f64], t: f64, beta: Option<&[u32]>) -> Result<DMatrix<f64>> {
    let m = theta.len();
    if m != sys.m() {
        return Err(Error::Contract(format!("θ has {m} entries for a system of {} species", sys.m())));
    }
    let n = x.len();
    let d = diffusion_blocks(sys, n, x, t)?;
    let scale: Vec<f64> = match beta {
        Some(b) => theta.iter().zip(b).map(|(t, b)| t.powi(2 * *b as i32 + 1)).collect(),
        None => vec![1.0; m],
    };
    let mut out = DMatrix::zeros(m * n, m * n);
    for k in 0..m {
        for l in 0..m {
            let block = if k == l { &d[k] * (theta[k] * theta[k]) } else { (&d[k] + &d[l]) * 0.5 };
            let s = scale[k] * scale[l];
            out.view_mut((k * n, l * n), (n, n)).copy_from(&(block * s));
        }
    }
    Ok(out)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(mat: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(mat.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PdReport {
    pub positive_definite: bool,
    pub min_eigenvalue: f64,
}

/// Positive definiteness of the diffusion block matrix at every sampled
/// `(x, t)`; `beta` must have order `p − 2`.
pub fn check_pd(cfg: &EnergyConfig, sys: &ReactionSystem, beta: &[u32], samples: &[(Vec<f64>, f64)]) -> Result<PdReport> {
    if beta.len() != cfg.m() || beta.iter().sum::<u32>() + 2 != cfg.p {
        return Err(Error::Contract(format!("β = {beta:?} does not have order p − 2 = {}", cfg.p - 2)));
    }
    let mut min = f64::INFINITY;
    for (x, t) in samples {
        min = min.min(min_eigenvalue(&assemble_b_tilde(&cfg.theta, sys, x, *t)?));
    }
    Ok(PdReport { positive_definite: min > 0.0, min_eigenvalue: min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiffusionTensor, Phi, StructuralParams};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn diffusion_system(d: &[f64]) -> ReactionSystem {
        ReactionSystem::new(
            (0..d.len()).map(|k| format!("u{k}")).collect(),
            d.iter().map(|v| DiffusionTensor::isotropic(*v)).collect(),
            Phi::TotalPopulation,
            Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0)),
            StructuralParams::neutral(d.len()),
        )
        .unwrap()
    }

    fn binomial(n: u64, k: u64) -> u64 {
        (1..=k).fold(1, |acc, j| acc * (n + 1 - j) / j)
    }

    #[test]
    fn multinomial_examples() {
        assert_eq!(multinomial_coeff(3, &[1, 2]).unwrap(), 3);
        assert_eq!(multinomial_coeff(2, &[2, 0, 0, 0]).unwrap(), 1);
        let set = enumerate_multi_indices(4, 3).unwrap();
        assert_eq!(set.coeffs.iter().sum::<u64>(), 64);
        assert_eq!(multinomial_coeff(20, &[20]).unwrap(), 1);
        assert_eq!(multinomial_coeff(20, &[10, 10]).unwrap(), 184_756);
        assert_eq!(multinomial_coeff(20, &[1; 20]).unwrap(), 2_432_902_008_176_640_000);
        assert!(matches!(multinomial_coeff(21, &[1; 21]), Err(Error::Config(_))));
        assert!(multinomial_coeff(3, &[1, 1]).is_err());
    }

    #[test]
    fn enumeration_examples() {
        assert_eq!(enumerate_multi_indices(2, 2).unwrap().indices, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(enumerate_multi_indices(4, 2).unwrap().len(), 10);
        assert_eq!(enumerate_multi_indices(1, 5).unwrap().indices, vec![vec![5]]);
        assert_eq!(enumerate_multi_indices(3, 0).unwrap().indices, vec![vec![0, 0, 0]]);
    }

    #[test]
    fn enumeration_counts_and_order() {
        for m in 1..=5usize {
            for p in 0..=6u32 {
                let set = enumerate_multi_indices(m, p).unwrap();
                assert_eq!(set.len() as u64, binomial(p as u64 + m as u64 - 1, m as u64 - 1));
                assert_eq!(set.coeffs.iter().sum::<u64>(), (m as u64).pow(p));
                assert!(set.indices.windows(2).all(|w| w[0] > w[1]), "not strictly descending");
            }
        }
    }

    #[test]
    fn hp_examples() {
        let cfg = EnergyConfig::new(2, vec![1.0, 1.0]).unwrap();
        assert_eq!(hp_pointwise(&[1.0, 1.0], &cfg), 4.0);
        let (t1, t2, u1, u2) = (1.7, 2.3, 0.4, 1.9);
        let cfg = EnergyConfig::new(2, vec![t1, t2]).unwrap();
        let explicit = t1.powi(4) * u1 * u1 + 2.0 * t1 * t2 * u1 * u2 + t2.powi(4) * u2 * u2;
        assert!((hp_pointwise(&[u1, u2], &cfg) - explicit).abs() < 1e-12 * explicit);
        assert_eq!(hp_pointwise(&[0.0, 0.0], &cfg), 0.0);
    }

    #[test]
    fn bounds_examples() {
        let cfg = EnergyConfig::new(3, vec![1.0; 4]).unwrap();
        assert_eq!(lp_equivalence_bounds(&cfg), (1.0, 16.0));
        let one = EnergyConfig::new(3, vec![1.5]).unwrap();
        let c = 1.5f64.powi(9);
        assert_eq!(lp_equivalence_bounds(&one), (c, c));
    }

    #[test]
    fn lp_energy_examples() {
        let g = Grid::new_1d(50, 1.0).unwrap();
        let cfg = EnergyConfig::new(2, vec![1.3, 0.8]).unwrap();
        assert_eq!(lp_energy(&Field::zeros(2, 50), &g, &cfg), 0.0);
        let single = EnergyConfig::new(3, vec![1.2]).unwrap();
        let f = Field::from_fn(&g, 1, |_, x| 1.0 + x[0]);
        let direct: f64 = f.species(0).iter().map(|u| u.powi(3)).sum::<f64>() * g.cell_volume();
        assert!((lp_energy(&f, &g, &single) - 1.2f64.powi(9) * direct).abs() < 1e-12 * direct * 6.0);
        let unit = EnergyConfig::new(4, vec![1.0, 1.0]).unwrap();
        let f2 = Field::from_fn(&g, 2, |k, x| if k == 0 { x[0] } else { 1.0 - x[0] * x[0] });
        let quad: f64 = (0..50).map(|c| (f2.get(0, c) + f2.get(1, c)).powi(4)).sum::<f64>() * g.cell_volume();
        assert!((lp_energy(&f2, &g, &unit) - quad).abs() < 1e-12 * quad);
    }

    #[test]
    fn pd_examples() {
        let samples = vec![(vec![0.5], 0.0)];
        let one = diffusion_system(&[0.3]);
        let cfg = EnergyConfig::new(2, vec![1.0]).unwrap();
        let r = check_pd(&cfg, &one, &[0], &samples).unwrap();
        assert!(r.positive_definite && (r.min_eigenvalue - 0.3).abs() < 1e-15);

        let two = diffusion_system(&[1.0, 1.0]);
        let r = check_pd(&EnergyConfig::new(2, vec![1.0, 1.0]).unwrap(), &two, &[0, 0], &samples).unwrap();
        assert!(!r.positive_definite && r.min_eigenvalue.abs() < 1e-14);
        let r = check_pd(&EnergyConfig::new(2, vec![2.0, 2.0]).unwrap(), &two, &[0, 0], &samples).unwrap();
        assert!(r.positive_definite && (r.min_eigenvalue - 3.0).abs() < 1e-12);

        let d = 1.0 + 2f64.powi(-10);
        let r = check_pd(&EnergyConfig::new(2, vec![d, d]).unwrap(), &two, &[0, 0], &samples).unwrap();
        assert!(r.positive_definite);
        assert!(check_pd(&cfg, &one, &[1], &samples).is_err());
    }

    #[test]
    fn b_is_a_congruent_scaling_of_b_tilde() {
        let sys = diffusion_system(&[0.2, 1.0, 0.7]);
        let theta = [2.0, 1.5, 1.1];
        let x = [0.3, 0.6];
        let bt = assemble_b_tilde(&theta, &sys, &x, 0.0).unwrap();
        for beta in enumerate_multi_indices(3, 2).unwrap().indices {
            let b = assemble_b(&beta, &theta, &sys, &x, 0.0).unwrap();
            assert!((&b - b.transpose()).abs().max() < 1e-12);
            let a: Vec<f64> = theta.iter().zip(&beta).map(|(t, b)| t.powi(2 * *b as i32 + 1)).collect();
            let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(6, a.iter().flat_map(|v| [*v, *v])));
            let expect = &diag * &bt * &diag;
            assert!((&b - &expect).abs().max() <= 1e-12 * expect.abs().max());
            assert_eq!(min_eigenvalue(&b) > 0.0, min_eigenvalue(&bt) > 0.0);
            // Diagonal blocks are θ_k^{4β_k+4} D_k.
            assert!((b[(0, 0)] - theta[0].powi(4 * beta[0] as i32 + 4) * 0.2).abs() < 1e-12 * b[(0, 0)]);
        }
    }

    #[test]
    fn chain_rule_single_species() {
        let cfg = EnergyConfig::new(2, vec![1.7]).unwrap();
        let (u, v) = (0.8, -0.3);
        assert!((cfg.directional_derivative(&[u], &[v]) - 2.0 * 1.7f64.powi(4) * u * v).abs() < 1e-12);
        let g = Grid::new_1d(3, 1.0).unwrap();
        let f = Field::from_fn(&g, 1, |_, x| x[0]);
        assert_eq!(derivative_identity_check(&f, &f, 0.1, &cfg), 0.0);
    }

    #[test]
    fn derivative_discrepancy_is_first_order() {
        let g = Grid::new_2d(6, 6, 1.0, 1.0).unwrap();
        let cfg = EnergyConfig::new(3, vec![1.5, 1.2, 1.0]).unwrap();
        let u = Field::from_fn(&g, 3, |k, x| 1.0 + 0.5 * ((k + 1) as f64 * x[0] + x[1]).sin());
        let rate = Field::from_fn(&g, 3, |k, x| (x[0] - 0.5) * (k as f64 - 1.0) + 0.3);
        let advance = |dt: f64| {
            let data = u.data().iter().zip(rate.data()).map(|(a, r)| a + dt * r).collect();
            Field::from_data(3, g.cells(), data).unwrap()
        };
        let d1 = derivative_identity_check(&u, &advance(1e-3), 1e-3, &cfg);
        let d2 = derivative_identity_check(&u, &advance(5e-4), 5e-4, &cfg);
        assert!((1.5..=2.5).contains(&(d1 / d2)), "{}", d1 / d2);
    }

    proptest! {
        #[test]
        fn unit_weights_give_the_multinomial_power(u in prop::collection::vec(0f64..10.0, 1..5), p in 2u32..6) {
            let cfg = EnergyConfig::new(p, vec![1.0; u.len()]).unwrap();
            let expect = u.iter().sum::<f64>().powi(p as i32);
            prop_assert!((hp_pointwise(&u, &cfg) - expect).abs() <= 1e-12 * expect.max(1e-300));
        }

        #[test]
        fn equivalence_sandwich(u in prop::collection::vec(0f64..5.0, 1..5), seed in 0u64..1000, p in 2u32..5) {
            let theta: Vec<f64> = (0..u.len()).map(|k| 1.0 + 2.0 * crate::sampling::halton(seed + k as u64 + 1, 3)).collect();
            let cfg = EnergyConfig::new(p, theta).unwrap();
            let sum_p: f64 = u.iter().map(|x| x.powi(p as i32)).sum();
            let h = hp_pointwise(&u, &cfg);
            prop_assert!(cfg.c_low * sum_p <= h * (1.0 + 1e-12));
            prop_assert!(h <= cfg.c_high * sum_p * (1.0 + 1e-12));
        }

        #[test]
        fn pd_is_monotone_in_theta(
            d in prop::collection::vec(0.05f64..2.0, 2..5),
            base in prop::collection::vec(0.5f64..3.0, 4),
            bump in prop::collection::vec(1.0f64..3.0, 4),
        ) {
            let m = d.len();
            let sys = diffusion_system(&d);
            let samples = vec![(vec![0.5, 0.5], 0.0)];
            let theta: Vec<f64> = base[..m].to_vec();
            let bigger: Vec<f64> = theta.iter().zip(&bump).map(|(t, b)| t * b).collect();
            let beta = vec![0; m];
            let small = check_pd(&EnergyConfig::new(2, theta).unwrap(), &sys, &beta, &samples).unwrap();
            let large = check_pd(&EnergyConfig::new(2, bigger).unwrap(), &sys, &beta, &samples).unwrap();
            prop_assert!(!small.positive_definite || large.positive_definite);
        }

        #[test]
        fn energy_is_monotone_in_each_component(u in prop::collection::vec(0f64..5.0, 1..5), k in 0usize..4, delta in 0f64..2.0) {
            let cfg = EnergyConfig::new(3, vec![1.3; u.len()]).unwrap();
            let mut v = u.clone();
            let k = k % u.len();
            v[k] += delta;
            prop_assert!(hp_pointwise(&v, &cfg) >= hp_pointwise(&u, &cfg));
        }
    }
}
