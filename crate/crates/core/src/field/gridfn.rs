use num::{BigRational, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::HalfOpenBox;
use crate::quadrature::GaussLegendre;

/// Piecewise-constant function on a rectilinear grid of half-open cells,
/// zero outside its support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    /// Strictly increasing cell boundaries per axis.
    breaks: Vec<Vec<f64>>,
    /// Cell values, row-major with the last axis fastest.
    values: Vec<f64>,
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Overlaps `(i, j, length)` between the cells of two partitions of a line.
fn overlaps(a: &[f64], b: &[f64]) -> Vec<(usize, usize, f64, f64)> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i + 1 < a.len() && j + 1 < b.len() {
        let lo = a[i].max(b[j]);
        let hi = a[i + 1].min(b[j + 1]);
        if hi > lo {
            out.push((i, j, lo, hi));
        }
        if a[i + 1] < b[j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

impl GridFunction {
    pub fn new(breaks: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if breaks.is_empty() {
            return Err(Error::InvalidInput("grid function needs at least one axis".into()));
        }
        for (k, axis) in breaks.iter().enumerate() {
            if axis.len() < 2 {
                return Err(Error::InvalidInput(format!("axis {k} needs at least one cell")));
            }
            if axis.iter().any(|v| !v.is_finite()) || axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidInput(format!("axis {k} breaks must be finite and strictly increasing")));
            }
        }
        let cells: usize = breaks.iter().map(|b| b.len() - 1).product();
        if values.len() != cells {
            return Err(Error::InvalidInput(format!("expected {cells} cell values, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid function value".into()));
        }
        Ok(GridFunction { breaks, values })
    }

    fn uniform_breaks(lo: &[f64], hi: &[f64], counts: &[usize]) -> Result<Vec<Vec<f64>>> {
        if lo.len() != hi.len() || lo.len() != counts.len() {
            return Err(Error::InvalidInput("lo, hi and counts must have equal length".into()));
        }
        Ok(lo
            .iter()
            .zip(hi)
            .zip(counts)
            .map(|((&a, &b), &n)| (0..=n).map(|i| a + (b - a) * i as f64 / n.max(1) as f64).collect())
            .collect())
    }

    pub fn uniform(lo: &[f64], hi: &[f64], counts: &[usize], values: Vec<f64>) -> Result<Self> {
        GridFunction::new(GridFunction::uniform_breaks(lo, hi, counts)?, values)
    }

    /// `a * 1_B`.
    pub fn scaled_indicator(b: &HalfOpenBox, a: f64) -> Result<Self> {
        let breaks = b.lo().iter().zip(b.hi()).map(|(&l, &h)| vec![l, h]).collect();
        GridFunction::new(breaks, vec![a])
    }

    pub fn indicator(b: &HalfOpenBox) -> Result<Self> {
        GridFunction::scaled_indicator(b, 1.0)
    }

    /// Cell averages of `f`, the `L^2` projection onto the grid.
    pub fn from_cell_averages(
        lo: &[f64],
        hi: &[f64],
        counts: &[usize],
        order: usize,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let breaks = GridFunction::uniform_breaks(lo, hi, counts)?;
        let rule = GaussLegendre::new(order)?;
        let shell = GridFunction::new(breaks, vec![0.0; counts.iter().product()])?;
        let values = (0..shell.cell_count())
            .map(|c| {
                let (a, b) = shell.cell_bounds(c);
                rule.box_average(&a, &b, &f)
            })
            .collect();
        GridFunction::new(shell.breaks, values)
    }

    /// Values of `f` at cell midpoints.
    pub fn from_midpoints(lo: &[f64], hi: &[f64], counts: &[usize], f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        GridFunction::from_cell_averages(lo, hi, counts, 1, f)
    }

    pub fn dim(&self) -> usize {
        self.breaks.len()
    }

    pub fn breaks(&self) -> &[Vec<f64>] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell_count(&self) -> usize {
        self.values.len()
    }

    fn counts(&self) -> Vec<usize> {
        self.breaks.iter().map(|b| b.len() - 1).collect()
    }

    fn cell_index(&self, mut flat: usize) -> Vec<usize> {
        let counts = self.counts();
        let mut idx = vec![0; counts.len()];
        for k in (0..counts.len()).rev() {
            idx[k] = flat % counts[k];
            flat /= counts[k];
        }
        idx
    }

    pub fn cell_bounds(&self, flat: usize) -> (Vec<f64>, Vec<f64>) {
        let idx = self.cell_index(flat);
        let lo = idx.iter().zip(&self.breaks).map(|(&i, b)| b[i]).collect();
        let hi = idx.iter().zip(&self.breaks).map(|(&i, b)| b[i + 1]).collect();
        (lo, hi)
    }

    pub fn support(&self) -> HalfOpenBox {
        HalfOpenBox::new(
            self.breaks.iter().map(|b| b[0]).collect(),
            self.breaks.iter().map(|b| *b.last().expect("nonempty")).collect(),
        )
        .expect("breaks are increasing")
    }

    /// Value at `x` (zero outside the support; cells are `(lo, hi]`).
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut flat = 0;
        for (b, &xi) in self.breaks.iter().zip(x) {
            if xi <= b[0] || xi > *b.last().expect("nonempty") {
                return 0.0;
            }
            let i = b.partition_point(|&v| v < xi) - 1;
            flat = flat * (b.len() - 1) + i;
        }
        self.values[flat]
    }

    pub fn scale(&self, a: f64) -> GridFunction {
        GridFunction {
            breaks: self.breaks.clone(),
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    /// Splits every cell into `k` equal parts per axis.
    pub fn refine(&self, k: usize) -> GridFunction {
        let k = k.max(1);
        let breaks: Vec<Vec<f64>> = self
            .breaks
            .iter()
            .map(|b| {
                let mut out = vec![b[0]];
                for w in b.windows(2) {
                    for s in 1..=k {
                        out.push(if s == k { w[1] } else { w[0] + (w[1] - w[0]) * s as f64 / k as f64 });
                    }
                }
                out
            })
            .collect();
        let shell = GridFunction {
            values: vec![0.0; breaks.iter().map(|b| b.len() - 1).product()],
            breaks,
        };
        let values = (0..shell.cell_count())
            .map(|c| {
                let (a, b) = shell.cell_bounds(c);
                let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
                self.eval(&mid)
            })
            .collect();
        GridFunction { values, ..shell }
    }

    /// `sum_i c_i f_i` on the common refinement of the grids.
    pub fn linear_combination(terms: &[(f64, &GridFunction)]) -> Result<GridFunction> {
        let d = terms
            .first()
            .map(|t| t.1.dim())
            .ok_or_else(|| Error::InvalidInput("empty linear combination".into()))?;
        if terms.iter().any(|t| t.1.dim() != d) {
            return Err(Error::InvalidInput("grid functions must share one dimension".into()));
        }
        let breaks: Vec<Vec<f64>> = (0..d)
            .map(|k| {
                let mut all: Vec<f64> = terms.iter().flat_map(|t| t.1.breaks[k].iter().copied()).collect();
                all.sort_by(f64::total_cmp);
                all.dedup();
                all
            })
            .collect();
        let shell = GridFunction {
            values: vec![0.0; breaks.iter().map(|b| b.len() - 1).product()],
            breaks,
        };
        let values = (0..shell.cell_count())
            .map(|c| {
                let (a, b) = shell.cell_bounds(c);
                let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
                terms.iter().map(|(w, f)| w * f.eval(&mid)).sum()
            })
            .collect();
        Ok(GridFunction { values, ..shell })
    }

    /// Sum over overlapping cell pairs of `combine(v_a, v_b, overlap box)`.
    fn pair_sum<T: Clone + Zero>(
        &self,
        other: &GridFunction,
        weight: impl Fn(f64, f64, &[(f64, f64)]) -> T,
    ) -> Result<T> {
        if self.dim() != other.dim() {
            return Err(Error::InvalidInput("grid functions must share one dimension".into()));
        }
        let per_axis: Vec<Vec<(usize, usize, f64, f64)>> = self
            .breaks
            .iter()
            .zip(&other.breaks)
            .map(|(a, b)| overlaps(a, b))
            .collect();
        let (ca, cb) = (self.counts(), other.counts());
        let mut acc = T::zero();
        let mut pos = vec![0usize; self.dim()];
        if per_axis.iter().any(Vec::is_empty) {
            return Ok(acc);
        }
        let mut sides = vec![(0.0, 0.0); self.dim()];
        loop {
            let (mut fa, mut fb) = (0usize, 0usize);
            for k in 0..self.dim() {
                let (i, j, lo, hi) = per_axis[k][pos[k]];
                fa = fa * ca[k] + i;
                fb = fb * cb[k] + j;
                sides[k] = (lo, hi);
            }
            let (va, vb) = (self.values[fa], other.values[fb]);
            if va != 0.0 && vb != 0.0 {
                acc = acc + weight(va, vb, &sides);
            }
            let mut k = self.dim();
            loop {
                if k == 0 {
                    return Ok(acc);
                }
                k -= 1;
                pos[k] += 1;
                if pos[k] < per_axis[k].len() {
                    break;
                }
                pos[k] = 0;
            }
        }
    }

    /// `<f, g>_{L^2}`.
    pub fn inner(&self, other: &GridFunction) -> Result<f64> {
        self.pair_sum(other, |a, b, sides| a * b * sides.iter().map(|(l, h)| h - l).product::<f64>())
    }

    /// `<f, g>_{L^2}` in exact rational arithmetic.
    pub fn inner_exact(&self, other: &GridFunction) -> Result<BigRational> {
        self.pair_sum(other, |a, b, sides| {
            let mut v = rational(a) * rational(b);
            for (l, h) in sides {
                v *= rational(*h) - rational(*l);
            }
            v
        })
    }

    pub fn norm_sq(&self) -> f64 {
        (0..self.cell_count())
            .map(|c| {
                let (a, b) = self.cell_bounds(c);
                let vol: f64 = a.iter().zip(&b).map(|(x, y)| y - x).product();
                self.values[c] * self.values[c] * vol
            })
            .sum()
    }

    pub fn norm_sq_exact(&self) -> BigRational {
        self.inner_exact(self).expect("same dimension")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(lo: &[f64], hi: &[f64]) -> HalfOpenBox {
        HalfOpenBox::new(lo.to_vec(), hi.to_vec()).unwrap()
    }

    #[test]
    fn indicator_norm_is_measure() {
        let f = GridFunction::scaled_indicator(&bx(&[0.0, 0.0], &[1.0, 2.0]), 3.0).unwrap();
        assert_eq!(f.norm_sq(), 18.0);
        assert_eq!(f.norm_sq_exact(), BigRational::from_integer(18.into()));
    }

    #[test]
    fn inner_product_across_grids() {
        let f = GridFunction::uniform(&[0.0], &[1.0], &[2], vec![1.0, 2.0]).unwrap();
        let g = GridFunction::uniform(&[0.25], &[1.25], &[1], vec![4.0]).unwrap();
        // overlap (0.25, 0.5] at 1*4 and (0.5, 1] at 2*4
        assert_eq!(f.inner(&g).unwrap(), 0.25 * 4.0 + 0.5 * 8.0);
        assert_eq!(f.inner(&g).unwrap(), g.inner(&f).unwrap());
    }

    #[test]
    fn refinement_and_combination_preserve_values() {
        let f = GridFunction::uniform(&[0.0, 0.0], &[1.0, 1.0], &[2, 2], vec![1.0, -1.0, 2.0, 0.5]).unwrap();
        let r = f.refine(3);
        assert_eq!(r.cell_count(), 36);
        assert!((r.norm_sq() - f.norm_sq()).abs() < 1e-14);
        let g = GridFunction::indicator(&bx(&[0.25, 0.25], &[0.75, 0.75])).unwrap();
        let h = GridFunction::linear_combination(&[(2.0, &f), (-1.0, &g)]).unwrap();
        for x in [[0.1, 0.1], [0.3, 0.3], [0.7, 0.2], [0.9, 0.9]] {
            assert!((h.eval(&x) - (2.0 * f.eval(&x) - g.eval(&x))).abs() < 1e-15);
        }
    }

    #[test]
    fn cell_averages_of_linear_function() {
        let f = GridFunction::from_cell_averages(&[0.0], &[1.0], &[4], 2, |x| x[0]).unwrap();
        assert_eq!(f.values(), &[0.125, 0.375, 0.625, 0.875]);
    }
}
