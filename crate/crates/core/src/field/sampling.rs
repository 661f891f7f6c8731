//! Path simulation of the planar field `x -> W_{(0, x]}` under one
//! representing measure: independent centred Gaussian cell masses, summed
//! over rectangles.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{HalfOpenBox, Region};
use crate::oracle::{path_rng, McEstimate, MIN_PATHS};
use crate::sublinear::GParams;

/// Most cells a lattice may have.
pub const MAX_CELLS: usize = 1_000_000;

/// Uniform lattice on `[0, extent_1] x [0, extent_2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub extent: [f64; 2],
    pub counts: [usize; 2],
}

impl Lattice {
    pub fn new(extent: [f64; 2], counts: [usize; 2]) -> Result<Self> {
        if extent.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidParams("lattice extent must be positive".into()));
        }
        if counts.contains(&0) {
            return Err(Error::InvalidParams("lattice needs at least one cell per axis".into()));
        }
        match counts[0].checked_mul(counts[1]) {
            Some(c) if c <= MAX_CELLS => Ok(Lattice { extent, counts }),
            _ => Err(Error::InvalidParams(format!(
                "lattice has {} x {} cells, above the cap of {MAX_CELLS}",
                counts[0], counts[1]
            ))),
        }
    }

    pub fn cells(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn spacing(&self) -> [f64; 2] {
        [self.extent[0] / self.counts[0] as f64, self.extent[1] / self.counts[1] as f64]
    }

    pub fn cell_area(&self) -> f64 {
        let h = self.spacing();
        h[0] * h[1]
    }

    /// Lattice node coordinates for node `(i, j)`, `0 <= i <= counts[0]`.
    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.spacing();
        [i as f64 * h[0], j as f64 * h[1]]
    }

    /// Index of the node at `x`, which must lie on the lattice.
    pub fn node_index(&self, x: [f64; 2]) -> Result<(usize, usize)> {
        let h = self.spacing();
        let mut out = [0usize; 2];
        for k in 0..2 {
            let p = x[k] / h[k];
            let r = p.round();
            if (p - r).abs() > 1e-9 || r < 0.0 || r > self.counts[k] as f64 {
                return Err(Error::InvalidInput(format!("point {x:?} is not a lattice node")));
            }
            out[k] = r as usize;
        }
        Ok((out[0], out[1]))
    }
}

/// Variance per unit area for each cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellPolicy {
    Constant(f64),
    /// Row-major over cells, first axis slowest.
    PerCell(Vec<f64>),
}

impl CellPolicy {
    fn variances(&self, lattice: &Lattice, p: &GParams) -> Result<Vec<f64>> {
        let v = match self {
            CellPolicy::Constant(s) => vec![*s; lattice.cells()],
            CellPolicy::PerCell(v) if v.len() == lattice.cells() => v.clone(),
            CellPolicy::PerCell(v) => {
                return Err(Error::InvalidInput(format!(
                    "policy has {} cells, lattice has {}",
                    v.len(),
                    lattice.cells()
                )))
            }
        };
        let slack = 1e-12 * p.sigma_hi_sq.max(1.0);
        if v.iter().any(|&s| !(s >= p.sigma_lo_sq - slack && s <= p.sigma_hi_sq + slack)) {
            return Err(Error::InvalidParams("cell variance outside the ambiguity interval".into()));
        }
        Ok(v)
    }
}

/// One sampled field on the lattice nodes, row-major with
/// `counts[1] + 1` nodes per row. Values on the axes are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeField {
    pub lattice: Lattice,
    pub values: Vec<f64>,
}

impl LatticeField {
    fn generate(lattice: &Lattice, sd: &[f64], rng: &mut impl Rng) -> LatticeField {
        let (n1, n2) = (lattice.counts[0], lattice.counts[1]);
        let row = n2 + 1;
        let mut values = vec![0.0; (n1 + 1) * row];
        for i in 1..=n1 {
            let mut acc = 0.0;
            for j in 1..=n2 {
                acc += sd[(i - 1) * n2 + (j - 1)] * rng.sample::<f64, _>(StandardNormal);
                values[i * row + j] = values[(i - 1) * row + j] + acc;
            }
        }
        LatticeField { lattice: *lattice, values }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.lattice.counts[1] + 1) + j]
    }
}

fn cell_sd(lattice: &Lattice, policy: &CellPolicy, p: &GParams) -> Result<Vec<f64>> {
    let area = lattice.cell_area();
    Ok(policy.variances(lattice, p)?.iter().map(|s| (s * area).sqrt()).collect())
}

/// Runs `stat` on `paths` independent fields; path `i` uses stream `i` of
/// `seed`. Results come back in path order.
pub fn map_paths<T: Send>(
    lattice: &Lattice,
    policy: &CellPolicy,
    p: &GParams,
    paths: usize,
    seed: u64,
    stat: impl Fn(&LatticeField) -> T + Sync,
) -> Result<Vec<T>> {
    let sd = cell_sd(lattice, policy, p)?;
    Ok((0..paths as u64)
        .into_par_iter()
        .map(|i| stat(&LatticeField::generate(lattice, &sd, &mut path_rng(seed, i))))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub lattice: Lattice,
    pub paths: Vec<LatticeField>,
}

/// One CSV row of a sampled path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub x1: f64,
    pub x2: f64,
    pub value: f64,
    pub path_id: usize,
}

impl PathEnsemble {
    pub fn rows(&self) -> impl Iterator<Item = PathRow> + '_ {
        let (n1, n2) = (self.lattice.counts[0], self.lattice.counts[1]);
        self.paths.iter().enumerate().flat_map(move |(id, f)| {
            (0..=n1).flat_map(move |i| {
                (0..=n2).map(move |j| {
                    let x = self.lattice.node(i, j);
                    PathRow { x1: x[0], x2: x[1], value: f.at(i, j), path_id: id }
                })
            })
        })
    }
}

pub fn sample_paths(lattice: &Lattice, policy: &CellPolicy, p: &GParams, paths: usize, seed: u64) -> Result<PathEnsemble> {
    if paths == 0 {
        return Err(Error::InvalidParams("at least one path is required".into()));
    }
    Ok(PathEnsemble {
        lattice: *lattice,
        paths: map_paths(lattice, policy, p, paths, seed, Clone::clone)?,
    })
}

/// Measure of the symmetric difference of `(0, x]` and `(0, y]`, which is
/// the variance of `W_y - W_x` per unit volatility.
pub fn increment_measure(x: [f64; 2], y: [f64; 2]) -> Result<f64> {
    let bx = Region::from_box(HalfOpenBox::from_origin(&x)?);
    let by = Region::from_box(HalfOpenBox::from_origin(&y)?);
    Ok(by.difference(&bx)?.measure() + bx.difference(&by)?.measure())
}

/// Monte-Carlo `E|W_y - W_x|^power` for each pair of lattice nodes.
pub fn increment_moments(
    lattice: &Lattice,
    policy: &CellPolicy,
    p: &GParams,
    pairs: &[([f64; 2], [f64; 2])],
    power: i32,
    paths: usize,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    if paths < MIN_PATHS {
        return Err(Error::InvalidParams(format!("at least {MIN_PATHS} paths are required, got {paths}")));
    }
    let idx = pairs
        .iter()
        .map(|(x, y)| Ok((lattice.node_index(*x)?, lattice.node_index(*y)?)))
        .collect::<Result<Vec<_>>>()?;
    let samples = map_paths(lattice, policy, p, paths, seed, |f| {
        idx.iter()
            .map(|&((a, b), (c, d))| (f.at(c, d) - f.at(a, b)).abs().powi(power))
            .collect::<Vec<f64>>()
    })?;
    Ok((0..pairs.len())
        .map(|k| {
            let column: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            McEstimate::from_samples(&column)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub exponent: f64,
    /// `(delta, root-mean-square increment)` per scale.
    pub scales: Vec<(f64, f64)>,
}

/// Log-log slope of the root-mean-square diagonal increment
/// `|W_{x + delta (1, 1)} - W_x|` against `delta`, over all lattice nodes
/// and paths, for `delta` equal to 1, 2, 4, ... lattice steps.
pub fn holder_exponent(ensemble: &PathEnsemble, levels: usize) -> Result<HolderEstimate> {
    let lat = ensemble.lattice;
    let (n1, n2) = (lat.counts[0], lat.counts[1]);
    if lat.spacing()[0] != lat.spacing()[1] {
        return Err(Error::InvalidInput("Hölder estimate needs a square lattice".into()));
    }
    let h = lat.spacing()[0];
    let mut scales = Vec::new();
    for level in 0..levels {
        let k = 1usize << level;
        if k > n1.min(n2) {
            break;
        }
        let mut acc = Vec::new();
        for f in &ensemble.paths {
            for i in 0..=(n1 - k) {
                for j in 0..=(n2 - k) {
                    let d = f.at(i + k, j + k) - f.at(i, j);
                    acc.push(d * d);
                }
            }
        }
        let ms = crate::oracle::pairwise_sum(&acc) / acc.len() as f64;
        scales.push((k as f64 * h, ms.sqrt()));
    }
    if scales.len() < 2 {
        return Err(Error::InvalidInput("need at least two scales for a slope".into()));
    }
    let pts: Vec<(f64, f64)> = scales.iter().map(|(d, r)| (d.ln(), r.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(HolderEstimate { exponent: sxy / sxx, scales })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_cap_is_enforced() {
        assert!(Lattice::new([1.0, 1.0], [1001, 1000]).is_err());
        assert!(Lattice::new([1.0, 1.0], [1000, 1000]).is_ok());
    }

    #[test]
    fn symmetric_difference_measure() {
        assert_eq!(increment_measure([1.0, 1.0], [2.0, 3.0]).unwrap(), 5.0);
        // general position: (0,2]x(0,1] vs (0,1]x(0,2]
        assert_eq!(increment_measure([2.0, 1.0], [1.0, 2.0]).unwrap(), 2.0);
    }

    #[test]
    fn variance_matches_area() {
        let p = GParams::new(1.0, 2.0).unwrap();
        let lat = Lattice::new([2.0, 2.0], [4, 4]).unwrap();
        let est = increment_moments(&lat, &CellPolicy::Constant(2.0), &p, &[([0.0, 0.0], [1.5, 1.0])], 2, 20_000, 2)
            .unwrap();
        assert!(est[0].contains(2.0 * 1.5), "{:?}", est[0]);
    }

    #[test]
    fn ensemble_is_reproducible_and_zero_on_axes() {
        let p = GParams::new(1.0, 2.0).unwrap();
        let lat = Lattice::new([1.0, 1.0], [3, 3]).unwrap();
        let a = sample_paths(&lat, &CellPolicy::Constant(1.0), &p, 4, 9).unwrap();
        let b = sample_paths(&lat, &CellPolicy::Constant(1.0), &p, 4, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.rows().filter(|r| r.x1 == 0.0 || r.x2 == 0.0).all(|r| r.value == 0.0));
        assert_eq!(a.rows().count(), 4 * 16);
    }
}
