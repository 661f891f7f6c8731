use num::{BigRational, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open axis-aligned box `(lo, hi]` in `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfOpenBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl HalfOpenBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Geometry(format!(
                "box corners must have equal nonzero dimension, got {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::Geometry(format!("box coordinate {i} is not finite")));
            }
            if a > b {
                return Err(Error::Geometry(format!("box has lo > hi on axis {i}: {a} > {b}")));
            }
        }
        Ok(HalfOpenBox { lo, hi })
    }

    /// The box `(0 ∧ x, 0 ∨ x]` spanned by the origin and `x`.
    pub fn from_origin(x: &[f64]) -> Result<Self> {
        HalfOpenBox::new(
            x.iter().map(|&v| v.min(0.0)).collect(),
            x.iter().map(|&v| v.max(0.0)).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    /// Volume in exact rational arithmetic; every f64 is a dyadic rational.
    pub fn volume_exact(&self) -> BigRational {
        let mut v = BigRational::from_integer(1.into());
        for (a, b) in self.lo.iter().zip(&self.hi) {
            let side = BigRational::from_float(*b).expect("finite")
                - BigRational::from_float(*a).expect("finite");
            v *= side;
        }
        v
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(a, b)| a >= b)
    }

    pub fn intersect(&self, o: &HalfOpenBox) -> Option<HalfOpenBox> {
        let lo: Vec<f64> = self.lo.iter().zip(&o.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&o.hi).map(|(a, b)| a.min(*b)).collect();
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            None
        } else {
            Some(HalfOpenBox { lo, hi })
        }
    }

    /// Disjoint boxes covering `self \ o`, produced by slab splitting.
    pub fn subtract(&self, o: &HalfOpenBox) -> Vec<HalfOpenBox> {
        let Some(cut) = self.intersect(o) else {
            return vec![self.clone()];
        };
        let mut out = Vec::new();
        let mut rest = self.clone();
        for axis in 0..self.dim() {
            if rest.lo[axis] < cut.lo[axis] {
                let mut slab = rest.clone();
                slab.hi[axis] = cut.lo[axis];
                out.push(slab);
                rest.lo[axis] = cut.lo[axis];
            }
            if cut.hi[axis] < rest.hi[axis] {
                let mut slab = rest.clone();
                slab.lo[axis] = cut.hi[axis];
                out.push(slab);
                rest.hi[axis] = cut.hi[axis];
            }
        }
        out
    }

    pub fn translate(&self, p: &[f64]) -> HalfOpenBox {
        HalfOpenBox {
            lo: self.lo.iter().zip(p).map(|(a, b)| a + b).collect(),
            hi: self.hi.iter().zip(p).map(|(a, b)| a + b).collect(),
        }
    }

    /// Image under `x -> O x + p` where `O` is a signed permutation given as
    /// `(target axis, sign)` per source axis.
    pub(crate) fn signed_permute(&self, perm: &[(usize, f64)], p: &[f64]) -> HalfOpenBox {
        let d = self.dim();
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for (src, &(dst, sign)) in perm.iter().enumerate() {
            let (a, b) = if sign > 0.0 {
                (self.lo[src], self.hi[src])
            } else {
                (-self.hi[src], -self.lo[src])
            };
            lo[dst] = a + p[dst];
            hi[dst] = b + p[dst];
        }
        HalfOpenBox { lo, hi }
    }
}

/// Rewrites an arbitrary list of boxes as pairwise disjoint boxes with the
/// same union. Empty boxes are dropped.
pub fn normalize(boxes: &[HalfOpenBox]) -> Vec<HalfOpenBox> {
    let mut parts: Vec<HalfOpenBox> = Vec::new();
    for b in boxes {
        if b.is_empty() {
            continue;
        }
        let mut pending = vec![b.clone()];
        for existing in &parts {
            pending = pending.iter().flat_map(|p| p.subtract(existing)).collect();
            if pending.is_empty() {
                break;
            }
        }
        parts.extend(pending.into_iter().filter(|p| !p.is_empty()));
    }
    parts
}

pub fn total_volume_exact(parts: &[HalfOpenBox]) -> BigRational {
    parts
        .iter()
        .fold(BigRational::zero(), |acc, b| acc + b.volume_exact())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(lo: &[f64], hi: &[f64]) -> HalfOpenBox {
        HalfOpenBox::new(lo.to_vec(), hi.to_vec()).unwrap()
    }

    #[test]
    fn subtract_partitions_the_difference() {
        let a = bx(&[0.0, 0.0], &[3.0, 3.0]);
        let b = bx(&[1.0, 1.0], &[2.0, 2.0]);
        let pieces = a.subtract(&b);
        let area: f64 = pieces.iter().map(HalfOpenBox::volume).sum();
        assert_eq!(area, 8.0);
        for (i, p) in pieces.iter().enumerate() {
            assert!(p.intersect(&b).is_none());
            for q in &pieces[i + 1..] {
                assert!(p.intersect(q).is_none());
            }
        }
    }

    #[test]
    fn normalize_removes_overlap() {
        let parts = normalize(&[bx(&[0.0], &[1.0]), bx(&[0.5], &[1.5])]);
        let total: f64 = parts.iter().map(HalfOpenBox::volume).sum();
        assert_eq!(total, 1.5);
    }

    #[test]
    fn rejects_inverted_and_nonfinite() {
        assert!(HalfOpenBox::new(vec![1.0], vec![0.0]).is_err());
        assert!(HalfOpenBox::new(vec![0.0], vec![f64::INFINITY]).is_err());
        assert!(HalfOpenBox::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn origin_box_handles_negative_coordinates() {
        let b = HalfOpenBox::from_origin(&[-2.0, 3.0]).unwrap();
        assert_eq!(b.lo(), &[-2.0, 0.0]);
        assert_eq!(b.hi(), &[0.0, 3.0]);
        assert_eq!(b.volume(), 6.0);
    }
}
