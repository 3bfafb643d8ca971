//! Deterministic sample sets over a state box `[0, U]^m` times a space-time
//! box `Ω × [0, T]`.
//!
//! Points come from a scrambled-start Halton sequence (the seed selects the
//! starting index), supplemented by box corners and dedicated samples on the
//! faces `{u_i = 0}`. Everything is reproducible from the seed alone.

use serde::Serialize;

use crate::error::{Error, Result};

const PRIMES: [u32; 24] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89];

/// Radical inverse of `index` in `base`.
pub fn halton(mut index: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += f * (index % b) as f64;
        index /= b;
        f *= inv;
    }
    out
}

fn splitmix(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The region on which an audit certifies its verdicts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditBox {
    /// Upper corner `U` of the state box `[0, U]^m`.
    pub u_max: f64,
    /// Spatial extents; the space box is `Π [0, L_k]`.
    pub extent: Vec<f64>,
    pub t_max: f64,
}

impl AuditBox {
    pub fn new(u_max: f64, extent: Vec<f64>, t_max: f64) -> Result<AuditBox> {
        if !(u_max > 0.0) || !u_max.is_finite() {
            return Err(Error::Config(format!("audit box U must be positive (got {u_max})")));
        }
        if extent.is_empty() || extent.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Config(format!("audit space box must have positive extents (got {extent:?})")));
        }
        if !(t_max >= 0.0) {
            return Err(Error::Config(format!("audit time horizon must be ≥ 0 (got {t_max})")));
        }
        Ok(AuditBox { u_max, extent, t_max })
    }

    /// Unit square, unit time, state box `[0, U]^m`.
    pub fn unit(u_max: f64) -> AuditBox {
        AuditBox { u_max, extent: vec![1.0, 1.0], t_max: 1.0 }
    }

    pub fn with_u_max(&self, u_max: f64) -> AuditBox {
        AuditBox { u_max, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplePoint {
    pub x: Vec<f64>,
    pub t: f64,
    pub u: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Sampler {
    offset: u64,
}

impl Sampler {
    pub fn new(seed: u64) -> Sampler {
        Sampler { offset: 1 + splitmix(seed) % 1_000_003 }
    }

    /// Coordinate `d` of Halton point `k`.
    fn coord(&self, k: usize, d: usize) -> f64 {
        halton(self.offset + k as u64, PRIMES[d % PRIMES.len()])
    }

    /// `count` points spread over the whole box.
    pub fn interior(&self, bx: &AuditBox, m: usize, count: usize) -> Vec<SamplePoint> {
        (0..count).map(|k| self.point(bx, m, k, None)).collect()
    }

    /// `count` points on the face `{u_face = 0}`.
    pub fn face(&self, bx: &AuditBox, m: usize, face: usize, count: usize) -> Vec<SamplePoint> {
        (0..count).map(|k| self.point(bx, m, k, Some(face))).collect()
    }

    fn point(&self, bx: &AuditBox, m: usize, k: usize, zero: Option<usize>) -> SamplePoint {
        let u = (0..m)
            .map(|i| if Some(i) == zero { 0.0 } else { bx.u_max * self.coord(k, i) })
            .collect();
        let x = bx.extent.iter().enumerate().map(|(d, l)| l * self.coord(k, m + d)).collect();
        let t = bx.t_max * self.coord(k, m + bx.extent.len());
        SamplePoint { x, t, u }
    }

    /// Corners of `[0, U]^m` (all of them for `m ≤ 12`, else the origin, the
    /// far corner and the coordinate vertices) at the corners of the
    /// space-time box.
    pub fn corners(&self, bx: &AuditBox, m: usize) -> Vec<SamplePoint> {
        let states: Vec<Vec<f64>> = if m <= 12 {
            (0..1usize << m)
                .map(|mask| (0..m).map(|i| if mask >> i & 1 == 1 { bx.u_max } else { 0.0 }).collect())
                .collect()
        } else {
            let mut v = vec![vec![0.0; m], vec![bx.u_max; m]];
            for i in 0..m {
                let mut e = vec![0.0; m];
                e[i] = bx.u_max;
                v.push(e);
            }
            v
        };
        let dims = bx.extent.len();
        let mut places = Vec::new();
        for mask in 0..1usize << dims {
            let x: Vec<f64> = (0..dims).map(|d| if mask >> d & 1 == 1 { bx.extent[d] } else { 0.0 }).collect();
            places.push((x.clone(), 0.0));
            if bx.t_max > 0.0 {
                places.push((x, bx.t_max));
            }
        }
        let mut out = Vec::with_capacity(states.len() * places.len());
        for u in &states {
            for (x, t) in &places {
                out.push(SamplePoint { x: x.clone(), t: *t, u: u.clone() });
            }
        }
        out
    }

    /// Corners restricted to the face `{u_face = 0}`.
    pub fn face_corners(&self, bx: &AuditBox, m: usize, face: usize) -> Vec<SamplePoint> {
        self.corners(bx, m).into_iter().filter(|p| p.u[face] == 0.0).collect()
    }

    /// `count` space-time locations.
    pub fn space_time(&self, bx: &AuditBox, count: usize) -> Vec<(Vec<f64>, f64)> {
        let dims = bx.extent.len();
        (0..count)
            .map(|k| {
                let x = (0..dims).map(|d| bx.extent[d] * self.coord(k, d)).collect();
                (x, bx.t_max * self.coord(k, dims))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_values() {
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(2, 2), 0.25);
        assert_eq!(halton(3, 2), 0.75);
        assert!((halton(1, 3) - 1.0 / 3.0).abs() < 1e-15);
        assert!((halton(5, 3) - 7.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn points_stay_in_the_box() {
        let bx = AuditBox::new(10.0, vec![2.0, 3.0], 5.0).unwrap();
        let s = Sampler::new(7);
        for p in s.interior(&bx, 4, 500).iter().chain(&s.face(&bx, 4, 2, 100)).chain(&s.corners(&bx, 4)) {
            assert!(p.u.iter().all(|u| (0.0..=10.0).contains(u)));
            assert!(p.x[0] <= 2.0 && p.x[1] <= 3.0 && p.t <= 5.0);
        }
        assert!(s.face(&bx, 4, 2, 50).iter().all(|p| p.u[2] == 0.0));
        assert_eq!(s.corners(&bx, 4).len(), 16 * 8);
        assert_eq!(s.face_corners(&bx, 4, 1).len(), 8 * 8);
    }

    #[test]
    fn seeds_are_reproducible_and_distinct() {
        let bx = AuditBox::unit(1.0);
        assert_eq!(Sampler::new(3).interior(&bx, 2, 10), Sampler::new(3).interior(&bx, 2, 10));
        assert_ne!(Sampler::new(3).interior(&bx, 2, 10), Sampler::new(4).interior(&bx, 2, 10));
    }
}
