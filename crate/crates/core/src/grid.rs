//! Tensor-product lattices shared by the PDE and dynamic-programming
//! engines.
//!
//! A lattice has up to a handful of axes, each symmetric about zero with
//! `2 * half + 1` nodes. Axes carry a diffusion coefficient: positive for
//! coordinates driven by the noise, zero for passive coordinates that only
//! parametrize the payoff. Both engines evolve
//! `d/dtau u = G(sum_a c_a d^2 u / dx_a^2)`, the PDE with an explicit
//! monotone scheme and the oracle by backward induction over a finite set
//! of volatilities.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::GaussHermite;
use crate::sublinear::GParams;

#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub half: usize,
    pub h: f64,
    /// Diffusion coefficient; zero for passive axes.
    pub c: f64,
}

impl Axis {
    pub fn new(half: usize, h: f64, c: f64) -> Self {
        Axis { half, h, c }
    }

    pub fn len(&self) -> usize {
        2 * self.half + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, k: usize) -> f64 {
        (k as f64 - self.half as f64) * self.h
    }

    pub fn radius(&self) -> f64 {
        self.half as f64 * self.h
    }

    pub fn is_active(&self) -> bool {
        self.c > 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorGrid {
    pub axes: Vec<Axis>,
    strides: Vec<usize>,
    len: usize,
}

/// Lattices above this size are refused.
pub const MAX_NODES: usize = 20_000_000;

const PAR_THRESHOLD: usize = 8192;

impl TensorGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        let mut strides = vec![1; axes.len()];
        let mut len = 1usize;
        for (i, a) in axes.iter().enumerate().rev() {
            if !(a.h > 0.0) || !a.h.is_finite() {
                return Err(Error::InvalidParams(format!("axis {i} spacing must be positive, got {}", a.h)));
            }
            strides[i] = len;
            len = len
                .checked_mul(a.len())
                .filter(|&l| l <= MAX_NODES)
                .ok_or_else(|| Error::InvalidParams(format!("lattice exceeds {MAX_NODES} nodes")))?;
        }
        Ok(TensorGrid { axes, strides, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims()];
        for (i, s) in self.strides.iter().enumerate() {
            out[i] = flat / s;
            flat %= s;
        }
        out
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&k, a)| a.coord(k))
            .collect()
    }

    /// Node values of `f` evaluated at every lattice point.
    pub fn tabulate(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> Vec<f64> {
        let eval = |flat: usize| f(&self.coords(flat));
        if self.len >= PAR_THRESHOLD {
            (0..self.len).into_par_iter().map(eval).collect()
        } else {
            (0..self.len).map(eval).collect()
        }
    }

    fn on_active_boundary(&self, idx: &[usize]) -> bool {
        idx.iter()
            .zip(&self.axes)
            .any(|(&k, a)| a.is_active() && (k == 0 || k == 2 * a.half))
    }

    /// Largest stable explicit step: `1 / (2 sigma_hi_sq sum_a c_a / h_a^2)`
    /// with the factor two of the monotonicity margin.
    pub fn cfl_limit(&self, params: &GParams) -> f64 {
        let rate: f64 = self.axes.iter().map(|a| a.c / (a.h * a.h)).sum();
        if rate == 0.0 || params.sigma_hi_sq == 0.0 {
            f64::INFINITY
        } else {
            1.0 / (2.0 * params.sigma_hi_sq * rate)
        }
    }

    /// Value at the node whose active coordinates are zero, for every
    /// combination of passive coordinates. Returns the passive sub-lattice
    /// values in row-major order.
    pub fn active_origin_slice(&self, values: &[f64]) -> Vec<f64> {
        let passive: Vec<usize> = (0..self.dims()).filter(|&a| !self.axes[a].is_active()).collect();
        let count: usize = passive.iter().map(|&a| self.axes[a].len()).product();
        let mut out = Vec::with_capacity(count);
        let mut idx: Vec<usize> = self.axes.iter().map(|a| a.half).collect();
        for flat in 0..count {
            let mut rem = flat;
            for &a in passive.iter().rev() {
                let n = self.axes[a].len();
                idx[a] = rem % n;
                rem /= n;
            }
            out.push(values[self.flat_index(&idx)]);
        }
        out
    }
}

/// Explicit monotone scheme `u <- u + dt G(sum_a c_a D_a^2 u)` run for
/// `steps` steps. Nodes on the boundary of any active axis keep their
/// initial values.
pub fn evolve_pde(grid: &TensorGrid, values: &mut Vec<f64>, params: &GParams, dt: f64, steps: usize) -> Result<()> {
    let limit = grid.cfl_limit(params);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, limit });
    }
    let active: Vec<(usize, f64)> = grid
        .axes
        .iter()
        .enumerate()
        .filter(|(_, a)| a.is_active())
        .map(|(i, a)| (grid.stride(i), a.c / (a.h * a.h)))
        .collect();
    if active.is_empty() || steps == 0 {
        return Ok(());
    }
    let interior: Vec<bool> = (0..grid.len())
        .map(|flat| !grid.on_active_boundary(&grid.multi_index(flat)))
        .collect();
    let mut next = values.clone();
    let step = |u: &[f64], flat: usize| -> f64 {
        if !interior[flat] {
            return u[flat];
        }
        let centre = u[flat];
        let mut lap = 0.0;
        for &(stride, w) in &active {
            lap += w * (u[flat + stride] - 2.0 * centre + u[flat - stride]);
        }
        centre + dt * params.g(lap)
    };
    for _ in 0..steps {
        if grid.len() >= PAR_THRESHOLD {
            let u = &values[..];
            next.par_iter_mut().enumerate().for_each(|(flat, out)| *out = step(u, flat));
        } else {
            for (flat, out) in next.iter_mut().enumerate() {
                *out = step(values, flat);
            }
        }
        std::mem::swap(values, &mut next);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("PDE time stepping".into()));
    }
    Ok(())
}

/// Four-point Lagrange stencil at fractional lattice position `p` on
/// `[0, n - 1]`; outside the lattice a linear extrapolation from the two
/// edge nodes is used.
pub fn cubic_stencil(p: f64, n: usize) -> ([usize; 4], [f64; 4]) {
    debug_assert!(n >= 2);
    let last = (n - 1) as f64;
    if p < 0.0 || p > last || n < 4 {
        let (i0, i1) = if p < 0.0 || n < 4 && p < last * 0.5 {
            (0, 1)
        } else {
            (n - 2, n - 1)
        };
        let (i0, i1) = if n < 4 && p >= 0.0 && p <= last {
            let i = (p.floor() as usize).min(n - 2);
            (i, i + 1)
        } else {
            (i0, i1)
        };
        let t = p - i0 as f64;
        return ([i0, i1, i1, i1], [1.0 - t, t, 0.0, 0.0]);
    }
    let base = (p.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let x = p - base as f64;
    let w = [
        -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0,
        x * (x - 2.0) * (x - 3.0) / 2.0,
        -x * (x - 1.0) * (x - 3.0) / 2.0,
        x * (x - 1.0) * (x - 2.0) / 6.0,
    ];
    ([base, base + 1, base + 2, base + 3], w)
}

/// Banded operator `v -> E[v(x + s Z)]` along one axis, assembled from a
/// Gauss–Hermite rule and cubic interpolation.
#[derive(Clone, Debug)]
struct AxisKernel {
    /// Per node: (first index, weights).
    rows: Vec<(usize, Vec<f64>)>,
}

impl AxisKernel {
    fn new(axis: &Axis, shift_scale: f64, rule: &GaussHermite) -> Self {
        let n = axis.len();
        let rows = (0..n)
            .map(|k| {
                let mut dense: Vec<(usize, f64)> = Vec::new();
                for (&z, &w) in rule.nodes.iter().zip(&rule.weights) {
                    let p = k as f64 + shift_scale * z / axis.h;
                    let (idx, wts) = cubic_stencil(p, n);
                    for (i, wt) in idx.iter().zip(wts) {
                        if wt != 0.0 {
                            dense.push((*i, w * wt));
                        }
                    }
                }
                let lo = dense.iter().map(|d| d.0).min().unwrap_or(k);
                let hi = dense.iter().map(|d| d.0).max().unwrap_or(k);
                let mut band = vec![0.0; hi - lo + 1];
                for (i, w) in dense {
                    band[i - lo] += w;
                }
                (lo, band)
            })
            .collect();
        AxisKernel { rows }
    }

    fn apply(&self, grid: &TensorGrid, axis: usize, src: &[f64], dst: &mut [f64]) {
        let stride = grid.stride(axis);
        let n = grid.axes[axis].len();
        let block = stride * n;
        let line = |flat: usize| -> f64 {
            let k = (flat / stride) % n;
            let base = flat - k * stride;
            let (lo, band) = &self.rows[k];
            let mut acc = 0.0;
            for (j, w) in band.iter().enumerate() {
                acc += w * src[base + (lo + j) * stride];
            }
            acc
        };
        let _ = block;
        if grid.len() >= PAR_THRESHOLD {
            dst.par_iter_mut().enumerate().for_each(|(flat, out)| *out = line(flat));
        } else {
            for (flat, out) in dst.iter_mut().enumerate() {
                *out = line(flat);
            }
        }
    }
}

/// Backward induction `v <- max_{s2 in controls} E[v(x + sqrt(s2 c dtau) Z)]`
/// over `steps` steps of length `dtau`, with the expectation taken on each
/// active axis by Gauss–Hermite quadrature. One volatility is shared by all
/// axes within a step.
pub fn evolve_dp(
    grid: &TensorGrid,
    values: &mut Vec<f64>,
    controls: &[f64],
    dtau: f64,
    steps: usize,
    rule: &GaussHermite,
) -> Result<()> {
    let active: Vec<usize> = (0..grid.dims()).filter(|&a| grid.axes[a].is_active()).collect();
    if active.is_empty() || steps == 0 {
        return Ok(());
    }
    if controls.is_empty() {
        return Err(Error::InvalidParams("control grid is empty".into()));
    }
    let kernels: Vec<Vec<AxisKernel>> = controls
        .iter()
        .map(|&s2| {
            active
                .iter()
                .map(|&a| {
                    let axis = &grid.axes[a];
                    AxisKernel::new(axis, (s2 * axis.c * dtau).sqrt(), rule)
                })
                .collect()
        })
        .collect();
    let mut best = vec![0.0; grid.len()];
    let mut work = vec![0.0; grid.len()];
    let mut scratch = vec![0.0; grid.len()];
    for _ in 0..steps {
        for (ci, per_axis) in kernels.iter().enumerate() {
            work.copy_from_slice(values);
            for (kernel, &a) in per_axis.iter().zip(&active) {
                kernel.apply(grid, a, &work, &mut scratch);
                std::mem::swap(&mut work, &mut scratch);
            }
            if ci == 0 {
                best.copy_from_slice(&work);
            } else {
                for (b, w) in best.iter_mut().zip(&work) {
                    if *w > *b {
                        *b = *w;
                    }
                }
            }
        }
        std::mem::swap(values, &mut best);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dynamic programming recursion".into()));
    }
    Ok(())
}

/// Tensor cubic interpolation of lattice values at an arbitrary point.
pub fn interpolate(grid: &TensorGrid, values: &[f64], x: &[f64]) -> f64 {
    let d = grid.dims();
    let stencils: Vec<([usize; 4], [f64; 4])> = grid
        .axes
        .iter()
        .zip(x)
        .map(|(a, &xi)| {
            let p = xi / a.h + a.half as f64;
            // exact hits skip interpolation along that axis
            let r = p.round();
            if (p - r).abs() < 1e-9 && r >= 0.0 && r <= (a.len() - 1) as f64 {
                let i = r as usize;
                ([i, i, i, i], [1.0, 0.0, 0.0, 0.0])
            } else {
                cubic_stencil(p, a.len())
            }
        })
        .collect();
    let mut acc = 0.0;
    let total = 4usize.pow(d as u32);
    for combo in 0..total {
        let mut rem = combo;
        let mut w = 1.0;
        let mut flat = 0;
        for (axis, (idx, wts)) in stencils.iter().enumerate() {
            let j = rem % 4;
            rem /= 4;
            w *= wts[j];
            if w == 0.0 {
                break;
            }
            flat += idx[j] * grid.stride(axis);
        }
        if w != 0.0 {
            acc += w * values[flat];
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(lo: f64, hi: f64) -> GParams {
        GParams::new(lo, hi).unwrap()
    }

    #[test]
    fn stencil_reproduces_cubics() {
        let n = 11;
        let f = |x: f64| 0.5 * x * x * x - x * x + 3.0;
        let vals: Vec<f64> = (0..n).map(|i| f(i as f64)).collect();
        for p in [0.0, 0.3, 4.7, 8.9, 9.5, 10.0] {
            let (idx, w) = cubic_stencil(p, n);
            let v: f64 = idx.iter().zip(w).map(|(i, w)| w * vals[*i]).sum();
            assert!((v - f(p)).abs() < 1e-10, "p = {p}: {v} vs {}", f(p));
        }
        // linear extrapolation outside
        let (idx, w) = cubic_stencil(11.0, n);
        let v: f64 = idx.iter().zip(w).map(|(i, w)| w * vals[*i]).sum();
        assert!((v - (2.0 * vals[10] - vals[9])).abs() < 1e-10);
    }

    #[test]
    fn pde_preserves_constants_exactly() {
        let grid = TensorGrid::new(vec![Axis::new(20, 0.1, 1.0), Axis::new(20, 0.1, 1.0)]).unwrap();
        let mut v = vec![3.25; grid.len()];
        let p = params(0.5, 2.0);
        let dt = grid.cfl_limit(&p);
        evolve_pde(&grid, &mut v, &p, dt, 50).unwrap();
        assert!(v.iter().all(|&x| x == 3.25));
    }

    #[test]
    fn pde_rejects_cfl_violation() {
        let grid = TensorGrid::new(vec![Axis::new(20, 0.1, 1.0)]).unwrap();
        let mut v = vec![0.0; grid.len()];
        let p = params(0.5, 2.0);
        let dt = 2.0 * grid.cfl_limit(&p);
        assert!(matches!(evolve_pde(&grid, &mut v, &p, dt, 1), Err(Error::Cfl { .. })));
    }

    #[test]
    fn pde_quadratic_is_exact() {
        // central differences are exact on quadratics, so each step adds
        // dt * sigma_hi_sq exactly away from the boundary
        let grid = TensorGrid::new(vec![Axis::new(100, 0.08, 1.0)]).unwrap();
        let mut v = grid.tabulate(|x| x[0] * x[0]);
        let p = params(1.0, 2.0);
        let steps = 40;
        let dt = 0.25 * grid.cfl_limit(&p);
        evolve_pde(&grid, &mut v, &p, dt, steps).unwrap();
        let centre = v[100];
        assert!((centre - 2.0 * dt * steps as f64).abs() < 1e-12);
    }

    #[test]
    fn dp_on_quadratic_telescopes() {
        let grid = TensorGrid::new(vec![Axis::new(200, 0.06, 1.0)]).unwrap();
        let mut v = grid.tabulate(|x| x[0] * x[0]);
        let rule = GaussHermite::new(20).unwrap();
        evolve_dp(&grid, &mut v, &[0.5, 1.5], 0.01, 100, &rule).unwrap();
        assert!((v[200] - 1.5).abs() < 1e-9, "{}", v[200]);
    }

    #[test]
    fn passive_axes_do_not_diffuse() {
        let grid = TensorGrid::new(vec![Axis::new(10, 0.5, 0.0), Axis::new(40, 0.1, 1.0)]).unwrap();
        let mut v = grid.tabulate(|x| x[0] * x[1] * x[1]);
        let p = params(1.0, 1.0);
        let steps = 200;
        let dt = 0.005;
        evolve_pde(&grid, &mut v, &p, dt, steps).unwrap();
        let slice = grid.active_origin_slice(&v);
        for (k, s) in slice.iter().enumerate() {
            let a = grid.axes[0].coord(k);
            assert!((s - a).abs() < 1e-4 * (1.0 + a.abs()), "{s} vs {a}");
        }
    }

    #[test]
    fn interpolation_hits_nodes_exactly() {
        let grid = TensorGrid::new(vec![Axis::new(5, 0.3, 1.0), Axis::new(4, 0.25, 0.0)]).unwrap();
        let v = grid.tabulate(|x| x[0].sin() + x[1] * x[1]);
        let probe = [0.6, -0.5];
        let want = 0.6f64.sin() + 0.25;
        assert!((interpolate(&grid, &v, &probe) - want).abs() < 1e-14);
        let off = interpolate(&grid, &v, &[0.45, 0.125]);
        assert!((off - (0.45f64.sin() + 0.015625)).abs() < 1e-3);
    }
}
