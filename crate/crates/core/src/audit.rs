//! Sampling auditor for the structural hypotheses of a [`ReactionSystem`].
//!
//! The hypotheses are inequalities over all of `R_+^m`; sampling can only
//! certify them on a bounded box, so a passing check reports
//! [`Verdict::PassedOnBox`] and never claims a proof. Every violation carries
//! the sample point at which it was observed, and re-evaluating the system at
//! that point reproduces it.
//!
//! Local Lipschitz continuity of the reactions is assumed rather than
//! audited: no finite sample bounds a Lipschitz modulus.

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::ReactionSystem;
use crate::sampling::{AuditBox, SamplePoint, Sampler};
use crate::seird::SeirdParams;

/// Absolute tolerance on exact-zero structure, relative to the sample scale.
pub const ZERO_TOLERANCE: f64 = 1e-12;
/// Slack on inequalities, relative to the sample scale.
pub const SLACK_TOLERANCE: f64 = 1e-9;
/// Largest polynomial degree tried when searching the smallest passing `l`.
pub const MAX_GROWTH_DEGREE: u32 = 12;

#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub point: SamplePoint,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Witness {
    /// `lhs − rhs`; positive beyond the tolerance for a genuine violation.
    pub fn excess(&self) -> f64 {
        self.lhs - self.rhs
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    PassedOnBox,
    Violated { witness: Box<Witness> },
    NotApplicable { reason: String },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::PassedOnBox)
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            Verdict::Violated { witness } => Some(witness),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::PassedOnBox => "passed_on_box",
            Verdict::Violated { .. } => "violated",
            Verdict::NotApplicable { .. } => "not_applicable",
        }
    }
}

/// Sample budget; the same seed always yields the same points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleBudget {
    pub interior: usize,
    pub per_face: usize,
    pub seed: u64,
}

impl Default for SampleBudget {
    fn default() -> Self {
        SampleBudget { interior: 4096, per_face: 1000, seed: 0 }
    }
}

/// A single inequality `lhs ≤ rhs` observed at a sample.
struct Observation {
    lhs: f64,
    rhs: f64,
    detail: String,
}

/// Scans all observations and keeps the worst one exceeding `tol`.
/// Non-finite left-hand sides count as violations.
fn judge<F>(points: &[SamplePoint], tol: f64, observe: F) -> Verdict
where
    F: Fn(&SamplePoint) -> Vec<Observation> + Sync,
{
    let worst = points
        .par_iter()
        .flat_map_iter(|p| observe(p).into_iter().map(move |o| (p, o)))
        .filter(|(_, o)| !(o.lhs <= o.rhs + tol))
        .map(|(p, o)| {
            let excess = if o.lhs.is_finite() { o.lhs - o.rhs } else { f64::INFINITY };
            (excess, p, o)
        })
        .reduce_with(|a, b| if b.0 > a.0 { b } else { a });
    match worst {
        None => Verdict::PassedOnBox,
        Some((_, p, o)) => Verdict::Violated {
            witness: Box::new(Witness { point: p.clone(), lhs: o.lhs, rhs: o.rhs, tolerance: tol, detail: o.detail }),
        },
    }
}

fn reactions(sys: &ReactionSystem, p: &SamplePoint) -> std::result::Result<Vec<f64>, String> {
    sys.reactions_at(&p.x, p.t, &p.u).map_err(|e| e.to_string())
}

/// `1 + max |f|` over the points; failed evaluations are ignored here and
/// reported by the check itself.
fn reaction_scale(sys: &ReactionSystem, points: &[SamplePoint]) -> f64 {
    1.0 + points
        .par_iter()
        .filter_map(|p| reactions(sys, p).ok())
        .map(|f| f.iter().fold(0.0f64, |a, v| a.max(v.abs())))
        .reduce(|| 0.0, f64::max)
}

fn failure(msg: String) -> Vec<Observation> {
    vec![Observation { lhs: f64::NAN, rhs: 0.0, detail: msg }]
}

/// Interior, corner and face samples of the box.
pub fn box_samples(bx: &AuditBox, m: usize, budget: &SampleBudget) -> Vec<SamplePoint> {
    let sampler = Sampler::new(budget.seed);
    let mut pts = sampler.interior(bx, m, budget.interior);
    pts.extend(sampler.corners(bx, m));
    for i in 0..m {
        pts.extend(sampler.face(bx, m, i, budget.per_face));
    }
    for small in shrunken(bx) {
        pts.extend(sampler.interior(&small, m, budget.interior / 4));
    }
    pts
}

/// Sub-boxes `[0, U·10^-k]^m`, k = 1..3: structure near the degenerate
/// corner `u = 0` is invisible to uniform samples of a large box.
fn shrunken(bx: &AuditBox) -> impl Iterator<Item = AuditBox> + '_ {
    (1..=3).map(|k| bx.with_u_max(bx.u_max * 10f64.powi(-k)))
}

fn face_samples(bx: &AuditBox, m: usize, face: usize, budget: &SampleBudget) -> Vec<SamplePoint> {
    let sampler = Sampler::new(budget.seed);
    let mut pts = sampler.face(bx, m, face, budget.per_face);
    pts.extend(sampler.face_corners(bx, m, face));
    for small in shrunken(bx) {
        pts.extend(sampler.face(&small, m, face, budget.per_face / 4));
    }
    pts
}

/// `f_i ≥ 0` on every face `{u_i = 0}` of `[0, U]^m`.
pub fn check_quasi_positivity(sys: &ReactionSystem, bx: &AuditBox, budget: &SampleBudget) -> Verdict {
    let m = sys.m();
    let faces: Vec<Vec<SamplePoint>> = (0..m).map(|i| face_samples(bx, m, i, budget)).collect();
    let all: Vec<SamplePoint> = faces.iter().flatten().cloned().collect();
    let tol = ZERO_TOLERANCE * reaction_scale(sys, &all);
    let verdicts: Vec<Verdict> = faces
        .iter()
        .enumerate()
        .map(|(i, pts)| {
            judge(pts, tol, |p| match reactions(sys, p) {
                Ok(f) => vec![Observation { lhs: 0.0, rhs: f[i], detail: format!("f_{} < 0 on the face u_{} = 0", i + 1, i + 1) }],
                Err(e) => failure(e),
            })
        })
        .collect();
    worst_of(verdicts)
}

fn worst_of(verdicts: Vec<Verdict>) -> Verdict {
    verdicts
        .into_iter()
        .filter(|v| !v.passed())
        .max_by(|a, b| {
            let ea = a.witness().map_or(f64::NEG_INFINITY, |w| w.excess());
            let eb = b.witness().map_or(f64::NEG_INFINITY, |w| w.excess());
            ea.total_cmp(&eb)
        })
        .unwrap_or(Verdict::PassedOnBox)
}

/// `Σ c_i f_i ≤ K1 Σ u_i + K2`.
pub fn check_mass_control(
    sys: &ReactionSystem,
    c: &[f64],
    k1: f64,
    k2: f64,
    bx: &AuditBox,
    budget: &SampleBudget,
) -> Result<Verdict> {
    if c.len() != sys.m() || c.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Config(format!("mass weights must be {} positive numbers (got {c:?})", sys.m())));
    }
    let pts = box_samples(bx, sys.m(), budget);
    let tol = SLACK_TOLERANCE * reaction_scale(sys, &pts);
    Ok(judge(&pts, tol, |p| match reactions(sys, p) {
        Ok(f) => {
            let lhs = f.iter().zip(c).map(|(f, c)| f * c).sum();
            let rhs = k1 * p.u.iter().sum::<f64>() + k2;
            vec![Observation { lhs, rhs, detail: "weighted reaction sum exceeds K1 Σu + K2".into() }]
        }
        Err(e) => failure(e),
    }))
}

/// `Σ_{j ≤ i} a_ij f_j ≤ K3 (1 + Σ u_k^r)` for every row `i`.
pub fn check_intermediate_sum(
    sys: &ReactionSystem,
    a: &[Vec<f64>],
    r: f64,
    k3: f64,
    bx: &AuditBox,
    budget: &SampleBudget,
) -> Result<Verdict> {
    let m = sys.m();
    if a.len() != m || a.iter().any(|row| row.len() != m) {
        return Err(Error::Config(format!("intermediate-sum matrix must be {m}×{m}")));
    }
    for (i, row) in a.iter().enumerate() {
        if !(row[i] > 0.0) || row[..i].iter().any(|v| !(*v >= 0.0)) || row[i + 1..].iter().any(|v| *v != 0.0) {
            return Err(Error::Config(format!(
                "intermediate-sum matrix row {} must be lower triangular with a positive diagonal and nonnegative entries",
                i + 1
            )));
        }
    }
    let pts = box_samples(bx, m, budget);
    let tol = SLACK_TOLERANCE * reaction_scale(sys, &pts);
    Ok(judge(&pts, tol, |p| match reactions(sys, p) {
        Ok(f) => {
            let rhs = k3 * (1.0 + p.u.iter().map(|u| u.powf(r)).sum::<f64>());
            a.iter()
                .enumerate()
                .map(|(i, row)| Observation {
                    lhs: row[..=i].iter().zip(&f).map(|(a, f)| a * f).sum(),
                    rhs,
                    detail: format!("intermediate sum of row {} exceeds K3 (1 + Σu^r)", i + 1),
                })
                .collect()
        }
        Err(e) => failure(e),
    }))
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthVerdict {
    pub verdict: Verdict,
    /// Smallest integer degree passing with the same `K4`, if any up to
    /// [`MAX_GROWTH_DEGREE`].
    pub smallest_l: Option<u32>,
}

/// `f_i ≤ K4 (1 + Σ u^l)` for every `i`.
pub fn check_polynomial_growth(sys: &ReactionSystem, l: f64, k4: f64, bx: &AuditBox, budget: &SampleBudget) -> GrowthVerdict {
    let pts = box_samples(bx, sys.m(), budget);
    let tol = SLACK_TOLERANCE * reaction_scale(sys, &pts);
    let values: Vec<std::result::Result<Vec<f64>, String>> = pts.par_iter().map(|p| reactions(sys, p)).collect();
    let index: Vec<SamplePoint> = pts
        .iter()
        .enumerate()
        .map(|(k, p)| SamplePoint { x: p.x.clone(), t: k as f64, u: p.u.clone() })
        .collect();
    let run = |deg: f64| {
        let v = judge(&index, tol, |q| match &values[q.t as usize] {
            Ok(f) => {
                let rhs = k4 * (1.0 + q.u.iter().map(|u| u.powf(deg)).sum::<f64>());
                f.iter()
                    .enumerate()
                    .map(|(i, fi)| Observation { lhs: *fi, rhs, detail: format!("f_{} exceeds K4 (1 + Σu^l)", i + 1) })
                    .collect()
            }
            Err(e) => failure(e.clone()),
        });
        // Restore the real time coordinate of the witness.
        match v {
            Verdict::Violated { mut witness } => {
                witness.point = pts[witness.point.t as usize].clone();
                Verdict::Violated { witness }
            }
            other => other,
        }
    };
    let verdict = run(l);
    let smallest_l = (1..=MAX_GROWTH_DEGREE).find(|d| run(*d as f64).passed());
    GrowthVerdict { verdict, smallest_l }
}

/// `M u_i^b ≤ Φ(u) ≤ M̃ (1 + Σ u^π)` for every `i`.
pub fn check_phi_bounds(
    sys: &ReactionSystem,
    b: f64,
    m_lower: f64,
    pi_exp: f64,
    m_upper: f64,
    bx: &AuditBox,
    budget: &SampleBudget,
) -> Verdict {
    let pts = box_samples(bx, sys.m(), budget);
    let scale = 1.0
        + pts
            .par_iter()
            .filter_map(|p| sys.evaluate_phi(&p.u).ok())
            .reduce(|| 0.0, f64::max);
    let tol = SLACK_TOLERANCE * scale;
    judge(&pts, tol, |p| match sys.evaluate_phi(&p.u) {
        Ok(phi) => {
            let mut obs: Vec<Observation> = p
                .u
                .iter()
                .enumerate()
                .map(|(i, u)| Observation {
                    lhs: m_lower * u.powf(b),
                    rhs: phi,
                    detail: format!("Φ(u) < M u_{}^b", i + 1),
                })
                .collect();
            obs.push(Observation {
                lhs: phi,
                rhs: m_upper * (1.0 + p.u.iter().map(|u| u.powf(pi_exp)).sum::<f64>()),
                detail: "Φ(u) > M̃ (1 + Σu^π)".into(),
            });
            obs
        }
        Err(e) => failure(e.to_string()),
    })
}

/// Which a-priori bound feeds the admissible range of `r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BoundMode {
    /// Mass control alone.
    Mass,
    /// A uniform `L^∞(0,T; L^a)` bound, `a ≥ 1`.
    LinfLa { a: Ratio64 },
    /// An `L^q(0,T; L^q)` bound, `q > 1`.
    LqLq { q: Ratio64 },
}

/// Exact rational with a readable serialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Ratio64(pub Ratio<i64>);

impl Ratio64 {
    pub fn integer(v: i64) -> Self {
        Ratio64(Ratio::from_integer(v))
    }

    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den == 0 {
            return Err(Error::Config("rational with zero denominator".into()));
        }
        Ok(Ratio64(Ratio::new(num, den)))
    }

    /// Exact conversion for dyadic and short decimal values, else the best
    /// approximation with a bounded denominator.
    pub fn from_f64(v: f64) -> Result<Self> {
        Ratio::<i64>::approximate_float(v)
            .map(Ratio64)
            .ok_or_else(|| Error::Config(format!("{v} has no rational representation")))
    }

    pub fn to_f64(self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl std::fmt::Display for Ratio64 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Ratio64 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

/// Strict upper bound on the intermediate-sum order `r` for the given mode,
/// degeneracy exponent `b` and space dimension `N`.
pub fn admissible_r_bound(b: Ratio64, dim: u32, mode: BoundMode) -> Result<Ratio64> {
    if dim == 0 {
        return Err(Error::Config("space dimension must be at least 1".into()));
    }
    if b.0 < Ratio::from_integer(0) {
        return Err(Error::Config(format!("b must be ≥ 0 (got {b})")));
    }
    let n = Ratio::from_integer(dim as i64);
    let one = Ratio::from_integer(1);
    let two = Ratio::from_integer(2);
    let bound = match mode {
        BoundMode::Mass => one + b.0 + two / n,
        BoundMode::LinfLa { a } => {
            if a.0 < one {
                return Err(Error::Config(format!("the L^a exponent must satisfy a ≥ 1 (got {a})")));
            }
            one + b.0 + two * a.0 / n
        }
        BoundMode::LqLq { q } => {
            if q.0 <= one {
                return Err(Error::Config(format!("the L^q exponent must satisfy q > 1 (got {q})")));
            }
            one + n / (n + two) * b.0 + two * q.0 / (n + two)
        }
    };
    Ok(Ratio64(bound))
}

/// Convex functions `h_i` for the entropy-type conditions.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntropyFunction {
    /// `z log z − z + μ z`.
    Entropy { mu: f64 },
    /// `z^k`.
    Power { k: f64 },
    /// Piecewise-linear interpolation of `(z, h)` pairs with a declared
    /// convexity flag.
    Table { z: Vec<f64>, h: Vec<f64>, convex: bool },
}

impl EntropyFunction {
    pub fn value(&self, z: f64) -> f64 {
        match self {
            EntropyFunction::Entropy { mu } => {
                if z == 0.0 {
                    0.0
                } else {
                    z * z.ln() - z + mu * z
                }
            }
            EntropyFunction::Power { k } => z.powf(*k),
            EntropyFunction::Table { z: zs, h, .. } => {
                let k = segment(zs, z);
                let w = (z - zs[k]) / (zs[k + 1] - zs[k]);
                h[k] + w * (h[k + 1] - h[k])
            }
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            EntropyFunction::Entropy { mu } => z.ln() + mu,
            EntropyFunction::Power { k } => k * z.powf(k - 1.0),
            EntropyFunction::Table { z: zs, h, .. } => {
                let k = segment(zs, z);
                (h[k + 1] - h[k]) / (zs[k + 1] - zs[k])
            }
        }
    }

    /// Whether `h'` is defined and finite at `z`.
    fn in_domain(&self, z: f64) -> bool {
        match self {
            EntropyFunction::Entropy { .. } => z > 0.0,
            EntropyFunction::Power { k } => z > 0.0 || *k >= 1.0,
            EntropyFunction::Table { z: zs, .. } => z >= zs[0] && z <= zs[zs.len() - 1],
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            EntropyFunction::Entropy { mu } if !mu.is_finite() => Err(Error::Config("entropy μ must be finite".into())),
            EntropyFunction::Power { k } if !(*k > 0.0) => Err(Error::Config(format!("power exponent must be positive (got {k})"))),
            EntropyFunction::Table { z, h, .. } => {
                if z.len() < 2 || z.len() != h.len() || z.windows(2).any(|w| !(w[1] > w[0])) {
                    Err(Error::Config("entropy table needs ≥ 2 points with strictly increasing z".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

fn segment(zs: &[f64], z: f64) -> usize {
    zs.partition_point(|v| *v <= z).saturating_sub(1).min(zs.len() - 2)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyInputs {
    pub h: Vec<EntropyFunction>,
    pub k5: f64,
    pub k6: f64,
    /// `K7` of the transformed intermediate sums; `None` skips that check.
    pub k7: Option<f64>,
    pub r: f64,
    pub a: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EntropyReport {
    pub convexity: Verdict,
    pub dissipation: Verdict,
    pub intermediate_sums: Verdict,
}

impl EntropyReport {
    pub fn passed(&self) -> bool {
        self.convexity.passed() && self.dissipation.passed() && !matches!(self.intermediate_sums, Verdict::Violated { .. })
    }
}

pub fn check_entropy_conditions(
    sys: &ReactionSystem,
    inputs: &EntropyInputs,
    bx: &AuditBox,
    budget: &SampleBudget,
) -> Result<EntropyReport> {
    let m = sys.m();
    if inputs.h.len() != m {
        return Err(Error::Config(format!("need {m} entropy functions (got {})", inputs.h.len())));
    }
    for h in &inputs.h {
        h.validate()?;
    }

    // Second differences on a uniform grid of each h's domain within [0, U].
    const STEPS: usize = 2000;
    let mut convex_pts = Vec::new();
    let mut convex_obs = Vec::new();
    for (i, h) in inputs.h.iter().enumerate() {
        if let EntropyFunction::Table { convex: false, z, .. } = h {
            let mut u = vec![0.0; m];
            u[i] = z[0];
            convex_pts.push(SamplePoint { x: bx.extent.iter().map(|_| 0.0).collect(), t: 0.0, u });
            convex_obs.push((i, f64::NAN, format!("h_{} is declared non-convex", i + 1)));
            continue;
        }
        let (lo, hi) = match h {
            EntropyFunction::Table { z, .. } => (z[0], z[z.len() - 1]),
            _ => (0.0, bx.u_max),
        };
        let dz = (hi - lo) / STEPS as f64;
        let scale = 1.0 + (0..=STEPS).map(|k| h.value(lo + k as f64 * dz).abs()).fold(0.0, f64::max);
        for k in 1..STEPS {
            let z = lo + k as f64 * dz;
            let second = h.value(z - dz) - 2.0 * h.value(z) + h.value(z + dz);
            let mut u = vec![0.0; m];
            u[i] = z;
            convex_pts.push(SamplePoint { x: bx.extent.iter().map(|_| 0.0).collect(), t: 0.0, u });
            convex_obs.push((i, second / scale, format!("second difference of h_{} is negative", i + 1)));
        }
    }
    let tagged: Vec<SamplePoint> = convex_pts
        .iter()
        .enumerate()
        .map(|(k, p)| SamplePoint { x: p.x.clone(), t: k as f64, u: p.u.clone() })
        .collect();
    let convexity = match judge(&tagged, ZERO_TOLERANCE, |p| {
        let (_, second, detail) = &convex_obs[p.t as usize];
        vec![Observation { lhs: 0.0, rhs: *second, detail: detail.clone() }]
    }) {
        Verdict::Violated { mut witness } => {
            witness.point.t = 0.0;
            Verdict::Violated { witness }
        }
        other => other,
    };

    let pts: Vec<SamplePoint> = box_samples(bx, m, budget)
        .into_iter()
        .filter(|p| p.u.iter().zip(&inputs.h).all(|(u, h)| h.in_domain(*u)))
        .collect();
    let transformed = |p: &SamplePoint| -> std::result::Result<(Vec<f64>, f64), String> {
        let f = reactions(sys, p)?;
        let g: Vec<f64> = f.iter().zip(&p.u).zip(&inputs.h).map(|((f, u), h)| h.derivative(*u) * f).collect();
        let hsum = p.u.iter().zip(&inputs.h).map(|(u, h)| h.value(*u)).sum();
        Ok((g, hsum))
    };
    let scale = 1.0
        + pts
            .par_iter()
            .filter_map(|p| transformed(p).ok())
            .map(|(g, _)| g.iter().fold(0.0f64, |a, v| a.max(v.abs())))
            .reduce(|| 0.0, f64::max);
    let tol = SLACK_TOLERANCE * scale;
    let dissipation = judge(&pts, tol, |p| match transformed(p) {
        Ok((g, hsum)) => vec![Observation {
            lhs: g.iter().sum(),
            rhs: inputs.k5 * hsum + inputs.k6,
            detail: "∇H·F exceeds K5 ΣH + K6".into(),
        }],
        Err(e) => failure(e),
    });
    let intermediate_sums = match inputs.k7 {
        None => Verdict::NotApplicable { reason: "no K7 declared".into() },
        Some(k7) => {
            if inputs.a.len() != m || inputs.a.iter().any(|row| row.len() != m) {
                return Err(Error::Config(format!("entropy intermediate-sum matrix must be {m}×{m}")));
            }
            judge(&pts, tol, |p| match transformed(p) {
                Ok((g, hsum)) => {
                    let rhs = k7 * (hsum + 1.0).max(0.0).powf(inputs.r);
                    inputs
                        .a
                        .iter()
                        .enumerate()
                        .map(|(i, row)| Observation {
                            lhs: row[..=i].iter().zip(&g).map(|(a, g)| a * g).sum(),
                            rhs,
                            detail: format!("transformed intermediate sum of row {} exceeds K7 (ΣH + 1)^r", i + 1),
                        })
                        .collect()
                }
                Err(e) => failure(e),
            })
        }
    };
    Ok(EntropyReport { convexity, dissipation, intermediate_sums })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// Global existence from mass control, zero-flux boundary.
    MassControl,
    /// Global existence from a uniform `L^a` bound.
    UniformLa,
    /// Global existence from an `L^q(L^q)` bound.
    SpaceTimeLq,
    /// Global existence from entropy-type conditions.
    Entropy,
    /// Global existence with Robin boundary conditions.
    Robin,
}

impl Theorem {
    pub fn id(self) -> &'static str {
        match self {
            Theorem::MassControl => "mass_control",
            Theorem::UniformLa => "uniform_la",
            Theorem::SpaceTimeLq => "space_time_lq",
            Theorem::Entropy => "entropy",
            Theorem::Robin => "robin",
        }
    }
}

/// A declared a-priori estimate `‖u_i‖ ≤ F(T)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct APriori {
    pub mode: BoundMode,
    /// Whether `sup_T F(T) < ∞`.
    pub bounded_in_time: bool,
}

/// Everything [`theorem_applicability`] needs besides the verdicts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApplicabilityInputs {
    pub b: f64,
    pub dim: u32,
    pub r: f64,
    pub k1: f64,
    pub k2: f64,
    pub robin: bool,
    pub apriori: Option<APriori>,
    /// `(K5, K6)` when entropy conditions were audited and passed.
    pub entropy: Option<(f64, f64)>,
}

/// Verdicts of the common hypotheses.
#[derive(Clone, Debug, Serialize)]
pub struct HypothesisVerdicts {
    pub phi_bounds: Verdict,
    pub quasi_positivity: Verdict,
    pub mass_control: Verdict,
    pub intermediate_sum: Verdict,
    pub polynomial_growth: Verdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct Applicability {
    pub theorem: Option<Theorem>,
    pub r_bound: Option<Ratio64>,
    pub r_margin: Option<f64>,
    pub uniform_in_time: bool,
    pub reason: String,
}

pub fn theorem_applicability(v: &HypothesisVerdicts, inputs: &ApplicabilityInputs) -> Result<Applicability> {
    let common = [
        ("Φ bounds", &v.phi_bounds),
        ("quasi-positivity", &v.quasi_positivity),
        ("intermediate sum", &v.intermediate_sum),
        ("polynomial growth", &v.polynomial_growth),
    ];
    let failing: Vec<&str> = common.iter().filter(|(_, v)| !v.passed()).map(|(n, _)| *n).collect();
    if !failing.is_empty() {
        return Ok(Applicability {
            theorem: None,
            r_bound: None,
            r_margin: None,
            uniform_in_time: false,
            reason: format!("not passed on the box: {}", failing.join(", ")),
        });
    }
    let b = Ratio64::from_f64(inputs.b)?;
    let mass_uniform = |k1: f64, k2: f64| {
        if k1 < 0.0 {
            (true, format!("K1 = {k1} < 0"))
        } else if k1 == 0.0 && k2 == 0.0 {
            (true, "K1 = K2 = 0".to_string())
        } else {
            (false, format!("K1 = {k1}, K2 = {k2} allows mass growth"))
        }
    };

    let mut candidates: Vec<(Theorem, BoundMode, Box<dyn Fn() -> (bool, String)>)> = Vec::new();
    let (k1, k2) = (inputs.k1, inputs.k2);
    if v.mass_control.passed() {
        let th = if inputs.robin { Theorem::Robin } else { Theorem::MassControl };
        candidates.push((th, BoundMode::Mass, Box::new(move || mass_uniform(k1, k2))));
    }
    if let Some(ap) = inputs.apriori {
        let th = match (inputs.robin, ap.mode) {
            (true, _) => Theorem::Robin,
            (false, BoundMode::LinfLa { .. }) => Theorem::UniformLa,
            (false, BoundMode::LqLq { .. }) => Theorem::SpaceTimeLq,
            (false, BoundMode::Mass) => Theorem::MassControl,
        };
        candidates.push((
            th,
            ap.mode,
            Box::new(move || {
                if ap.bounded_in_time {
                    (true, "declared a-priori bound is uniform in time".into())
                } else {
                    (false, "declared a-priori bound may grow in time".into())
                }
            }),
        ));
    }
    if let (Some((k5, k6)), false) = (inputs.entropy, inputs.robin) {
        candidates.push((
            Theorem::Entropy,
            BoundMode::Mass,
            Box::new(move || {
                if k5 < 0.0 {
                    (true, format!("K5 = {k5} < 0"))
                } else if k5 == 0.0 && k6 == 0.0 {
                    (true, "K5 = K6 = 0".into())
                } else {
                    (false, format!("K5 = {k5}, K6 = {k6} allows entropy growth"))
                }
            }),
        ));
    }

    let mut best: Option<Applicability> = None;
    for (th, mode, uniform) in candidates {
        let bound = admissible_r_bound(b, inputs.dim, mode)?;
        let margin = bound.to_f64() - inputs.r;
        let lower_ok = if th == Theorem::Robin { inputs.r >= 0.0 } else { inputs.r >= 1.0 };
        if margin <= 0.0 || !lower_ok {
            continue;
        }
        let (uniform_in_time, why) = uniform();
        let app = Applicability {
            theorem: Some(th),
            r_bound: Some(bound),
            r_margin: Some(margin),
            uniform_in_time,
            reason: format!("r = {} < {bound}; {why}", inputs.r),
        };
        let better = match &best {
            None => true,
            Some(cur) => uniform_in_time && !cur.uniform_in_time,
        };
        if better {
            best = Some(app);
        }
    }
    Ok(best.unwrap_or(Applicability {
        theorem: None,
        r_bound: None,
        r_margin: None,
        uniform_in_time: false,
        reason: "no admissible combination of bounds and intermediate-sum order".into(),
    }))
}

#[derive(Clone, Debug, Serialize)]
pub struct HeterogeneousReport {
    /// Linear growth of the contact-rate responses.
    pub growth: Verdict,
    /// Positive lower bounds of the diffusion rates.
    pub ellipticity: Verdict,
    pub lambda: [f64; 4],
    /// Common bound on the remaining rates.
    pub boundedness: Verdict,
    pub rate_bound: f64,
}

impl HeterogeneousReport {
    pub fn passed(&self) -> bool {
        self.growth.passed() && self.ellipticity.passed() && self.boundedness.passed()
    }
}

/// Space-time points: Halton samples plus a regular 33-point lattice per axis
/// at both ends of the time interval.
fn space_time_points(region: &AuditBox, budget: &SampleBudget) -> Vec<(Vec<f64>, f64)> {
    const LATTICE: usize = 33;
    let mut pts = Sampler::new(budget.seed).space_time(region, 512);
    let dims = region.extent.len();
    let total = LATTICE.pow(dims as u32);
    for k in 0..total {
        let mut rest = k;
        let x: Vec<f64> = (0..dims)
            .map(|d| {
                let j = rest % LATTICE;
                rest /= LATTICE;
                region.extent[d] * j as f64 / (LATTICE - 1) as f64
            })
            .collect();
        pts.push((x.clone(), 0.0));
        pts.push((x, region.t_max));
    }
    pts
}

/// Audits the contact-rate responses, diffusion lower bounds and rate
/// bounds of a SEIRD parameter set on `[0, U]^4` times its region.
pub fn check_heterogeneous_rates(params: &SeirdParams, u_max: f64, budget: &SampleBudget) -> HeterogeneousReport {
    let region = params.region.with_u_max(u_max);
    let xt = space_time_points(&region, budget);
    let mut states = box_samples(&region, 4, budget);
    states.truncate(budget.interior + 16 * 2usize.pow(region.extent.len() as u32 + 1));

    let growth_points: Vec<SamplePoint> = states
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let (x, t) = &xt[k % xt.len()];
            SamplePoint { x: x.clone(), t: *t, u: p.u.clone() }
        })
        .collect();
    let rates = [(&params.beta_i_response, &params.beta_i, 2usize, "β_i"), (&params.beta_e_response, &params.beta_e, 1, "β_e")];
    let scale = 1.0
        + growth_points
            .iter()
            .flat_map(|p| {
                let n: f64 = p.u.iter().sum();
                rates.iter().map(move |(resp, coef, z, _)| match resp {
                    Some(r) => (r.f)(p.u[*z], n).abs(),
                    None => coef.eval(&p.x, p.t).abs(),
                })
            })
            .fold(0.0, f64::max);
    let growth = judge(&growth_points, SLACK_TOLERANCE * scale, |p| {
        let n: f64 = p.u.iter().sum();
        rates
            .iter()
            .flat_map(|(resp, coef, z, name)| {
                let z = p.u[*z];
                let (value, c) = match resp {
                    Some(r) => ((r.f)(z, n), r.growth),
                    None => {
                        let v = coef.eval(&p.x, p.t);
                        (v, v)
                    }
                };
                [
                    Observation { lhs: value, rhs: c * (1.0 + z + n), detail: format!("{name} exceeds c (1 + z + n)") },
                    Observation { lhs: 0.0, rhs: value, detail: format!("{name} is negative") },
                ]
            })
            .collect()
    });

    let mut lambda = [f64::INFINITY; 4];
    let mut worst: Option<(usize, f64, (Vec<f64>, f64))> = None;
    for (z, nu) in params.nu.iter().enumerate() {
        for (x, t) in &xt {
            let v = nu.eval(x, *t);
            if !(v >= lambda[z]) {
                lambda[z] = v;
            }
            if !(v > 0.0) && worst.as_ref().is_none_or(|w| v < w.1) {
                worst = Some((z, v, (x.clone(), *t)));
            }
        }
    }
    let ellipticity = match worst {
        None => Verdict::PassedOnBox,
        Some((z, v, (x, t))) => Verdict::Violated {
            witness: Box::new(Witness {
                point: SamplePoint { x, t, u: vec![0.0; 4] },
                lhs: 0.0,
                rhs: v,
                tolerance: 0.0,
                detail: format!("diffusion rate of species {} is not positive", z + 1),
            }),
        },
    };

    let sum_rates = |x: &[f64], t: f64| {
        [&params.alpha, &params.mu, &params.sigma, &params.phi_e, &params.phi_d, &params.phi_r]
            .iter()
            .map(|c| c.eval(x, t))
            .sum::<f64>()
    };
    let rate_bound = xt.iter().map(|(x, t)| sum_rates(x, *t)).fold(0.0, f64::max);
    let boundedness = match xt.iter().find(|(x, t)| !sum_rates(x, *t).is_finite()) {
        None => Verdict::PassedOnBox,
        Some((x, t)) => Verdict::Violated {
            witness: Box::new(Witness {
                point: SamplePoint { x: x.clone(), t: *t, u: vec![0.0; 4] },
                lhs: sum_rates(x, *t),
                rhs: f64::MAX,
                tolerance: 0.0,
                detail: "rates are unbounded".into(),
            }),
        },
    };
    HeterogeneousReport { growth, ellipticity, lambda, boundedness, rate_bound }
}

/// Options of a full audit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditOptions {
    pub bx: AuditBox,
    pub budget: SampleBudget,
    pub dim: u32,
    pub robin: bool,
    pub apriori: Option<APriori>,
    pub entropy: Option<EntropyInputs>,
}

impl AuditOptions {
    pub fn new(bx: AuditBox) -> Self {
        let dim = bx.extent.len() as u32;
        AuditOptions { bx, budget: SampleBudget::default(), dim, robin: false, apriori: None, entropy: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub system: String,
    pub bx: AuditBox,
    pub verdicts: HypothesisVerdicts,
    pub smallest_l: Option<u32>,
    pub entropy: Option<EntropyReport>,
    /// Strict upper bounds on `r` under mass control, for reference.
    pub r_bound_mass: Ratio64,
    pub applicability: Applicability,
    pub notes: Vec<String>,
}

impl AuditReport {
    /// All audited hypotheses passed on the box.
    pub fn all_passed(&self) -> bool {
        let v = &self.verdicts;
        [&v.phi_bounds, &v.quasi_positivity, &v.mass_control, &v.intermediate_sum, &v.polynomial_growth]
            .iter()
            .all(|v| v.passed())
            && self.entropy.as_ref().is_none_or(|e| e.passed())
    }

    /// `(name, verdict)` in a fixed order.
    pub fn named_verdicts(&self) -> Vec<(&'static str, &Verdict)> {
        let v = &self.verdicts;
        let mut out = vec![
            ("phi_bounds", &v.phi_bounds),
            ("quasi_positivity", &v.quasi_positivity),
            ("mass_control", &v.mass_control),
            ("intermediate_sum", &v.intermediate_sum),
            ("polynomial_growth", &v.polynomial_growth),
        ];
        if let Some(e) = &self.entropy {
            out.push(("entropy_convexity", &e.convexity));
            out.push(("entropy_dissipation", &e.dissipation));
            out.push(("entropy_intermediate_sums", &e.intermediate_sums));
        }
        out
    }
}

/// Runs every check against the system's declared structural constants.
/// The checks are independent and run concurrently.
pub fn audit_system(sys: &ReactionSystem, opts: &AuditOptions) -> Result<AuditReport> {
    let s = sys.structural();
    let (bx, budget) = (&opts.bx, &opts.budget);
    let ((phi_bounds, quasi_positivity), ((mass_control, intermediate_sum), growth)) = rayon::join(
        || {
            rayon::join(
                || check_phi_bounds(sys, s.b, s.m_lower, s.pi_exp, s.m_upper, bx, budget),
                || check_quasi_positivity(sys, bx, budget),
            )
        },
        || {
            rayon::join(
                || {
                    (
                        check_mass_control(sys, &s.c, s.k1, s.k2, bx, budget),
                        check_intermediate_sum(sys, &s.a, s.r, s.k3, bx, budget),
                    )
                },
                || check_polynomial_growth(sys, s.l, s.k4, bx, budget),
            )
        },
    );
    let verdicts = HypothesisVerdicts {
        phi_bounds,
        quasi_positivity,
        mass_control: mass_control?,
        intermediate_sum: intermediate_sum?,
        polynomial_growth: growth.verdict,
    };
    let entropy = opts.entropy.as_ref().map(|e| check_entropy_conditions(sys, e, bx, budget)).transpose()?;
    let entropy_pair = match (&entropy, &opts.entropy) {
        (Some(rep), Some(inp)) if rep.passed() => Some((inp.k5, inp.k6)),
        _ => None,
    };
    let applicability = theorem_applicability(
        &verdicts,
        &ApplicabilityInputs {
            b: s.b,
            dim: opts.dim,
            r: s.r,
            k1: s.k1,
            k2: s.k2,
            robin: opts.robin,
            apriori: opts.apriori,
            entropy: entropy_pair,
        },
    )?;
    Ok(AuditReport {
        system: sys.label().to_string(),
        bx: bx.clone(),
        verdicts,
        smallest_l: growth.smallest_l,
        entropy,
        r_bound_mass: admissible_r_bound(Ratio64::from_f64(s.b)?, opts.dim, BoundMode::Mass)?,
        applicability,
        notes: vec!["local Lipschitz continuity of the reactions is assumed, not audited".into()],
    })
}
