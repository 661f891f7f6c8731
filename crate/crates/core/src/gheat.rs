//! Finite-dimensional G-normal expectations through the G-heat equation.
//!
//! A law with Gram matrix `Lambda = L L^T` is pushed to standard
//! coordinates `x = L z`, where the equation becomes
//! `d/dt v = G(Laplacian_z v)` with `v(0, z) = phi(L z)`. The expectation is
//! `v(t, 0)`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{gram_matrix, GramLaw, Region};
use crate::grid::{evolve_pde, Axis, TensorGrid};
use crate::phi::{Expr, TestFunction};
use crate::sublinear::{Expectation, GParams, SublinearValue};

/// Largest reduced dimension handled by the PDE engine.
pub const PDE_DIM_CAP: usize = 3;
/// Eigenvalues below `RANK_THRESHOLD * trace` are dropped.
pub const RANK_THRESHOLD: f64 = 1e-12;
/// Eigenvalues below `-NEGATIVE_EIGEN_THRESHOLD * trace` are rejected.
pub const NEGATIVE_EIGEN_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedProblem {
    /// `n x r` factor with `L L^T = Lambda`.
    pub factor: DMatrix<f64>,
    pub rank: usize,
    pub phi_reduced: TestFunction,
    pub params: GParams,
    pub horizon: f64,
}

/// Factors the Gram matrix and rewrites `phi` in the reduced coordinates.
pub fn reduce(law: &GramLaw, phi: &TestFunction, t: f64) -> Result<ReducedProblem> {
    let n = law.dim();
    if phi.arity() > n {
        return Err(Error::InvalidInput(format!(
            "payoff uses {} variables but the law has dimension {n}",
            phi.arity()
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParams(format!("horizon must be nonnegative, got {t}")));
    }
    let factor = factorize(&law.lambda)?;
    let rank = factor.ncols();
    let subs: Vec<Expr> = (0..n)
        .map(|i| Expr::sum((0..rank).map(|k| Expr::scale(factor[(i, k)], Expr::var(k)))))
        .collect();
    let phi_reduced = TestFunction::from_expr(phi.expr().substitute(&subs)).with_arity(rank);
    Ok(ReducedProblem {
        factor,
        rank,
        phi_reduced,
        params: law.params,
        horizon: t,
    })
}

/// `L` with `L L^T = lambda`, columns ordered by decreasing eigenvalue and
/// signed so that their largest entry is positive.
pub fn factorize(lambda: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = lambda.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let trace = lambda.trace();
    let eig = SymmetricEigen::new(lambda.clone());
    let scale = trace.abs().max(f64::MIN_POSITIVE);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut cols = Vec::new();
    for &k in &order {
        let ev = eig.eigenvalues[k];
        if ev < -NEGATIVE_EIGEN_THRESHOLD * scale {
            return Err(Error::NotPsd { eigenvalue: ev });
        }
        if ev <= RANK_THRESHOLD * scale {
            continue;
        }
        let mut v = eig.eigenvectors.column(k).into_owned();
        let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < 0.0 {
            v = -v;
        }
        cols.push(v * ev.sqrt());
    }
    Ok(if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    })
}

fn deserialize_dt<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Dt {
        Fixed(f64),
        Tag(String),
    }
    match Option::<Dt>::deserialize(d)? {
        None => Ok(None),
        Some(Dt::Fixed(v)) => Ok(Some(v)),
        Some(Dt::Tag(s)) if s == "auto" => Ok(None),
        Some(Dt::Tag(s)) => Err(serde::de::Error::custom(format!("dt must be a number or \"auto\", got {s:?}"))),
    }
}

/// User-facing discretization knobs; unset fields are derived.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridOptions {
    /// Truncation radius in units of `sigma_hi * sqrt(t)`.
    pub radius_mult: f64,
    /// Explicit spacing; overrides `cells`.
    pub h: Option<f64>,
    /// Nodes per half-axis; defaults depend on the dimension.
    pub cells: Option<usize>,
    /// Explicit time step; `None` or `"auto"` picks the CFL limit.
    #[serde(deserialize_with = "deserialize_dt")]
    pub dt: Option<f64>,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            radius_mult: 8.0,
            h: None,
            cells: None,
            dt: None,
        }
    }
}

impl GridOptions {
    pub fn with_cells(cells: usize) -> Self {
        GridOptions {
            cells: Some(cells),
            ..Default::default()
        }
    }

    pub fn default_cells(dim: usize) -> usize {
        match dim {
            0 | 1 => 400,
            2 => 160,
            _ => 48,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Half-width of the cube in every reduced coordinate.
    pub radius: f64,
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
}

impl GridSpec {
    /// Resolves options for an `r`-dimensional problem on `[0, t]`.
    pub fn resolve(opts: &GridOptions, r: usize, params: &GParams, t: f64) -> Result<GridSpec> {
        if !(opts.radius_mult > 0.0) {
            return Err(Error::InvalidParams(format!("radius_mult must be positive, got {}", opts.radius_mult)));
        }
        let width = opts.radius_mult * params.sigma_hi() * t.sqrt();
        if width == 0.0 || r == 0 {
            return Ok(GridSpec { radius: 0.0, h: 0.0, dt: t, steps: 0 });
        }
        let (half, h) = match opts.h {
            Some(h) if h > 0.0 && h.is_finite() => ((width / h).ceil().max(1.0) as usize, h),
            Some(h) => return Err(Error::InvalidParams(format!("grid spacing must be positive, got {h}"))),
            None => {
                let cells = opts.cells.unwrap_or_else(|| GridOptions::default_cells(r));
                if cells == 0 {
                    return Err(Error::InvalidParams("cells must be positive".into()));
                }
                (cells, width / cells as f64)
            }
        };
        let limit = h * h / (2.0 * r as f64 * params.sigma_hi_sq);
        let (dt, steps) = match opts.dt {
            None => {
                let steps = (t / limit * (1.0 - 1e-12)).ceil().max(1.0) as usize;
                (t / steps as f64, steps)
            }
            Some(dt) => {
                if !(dt > 0.0) {
                    return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
                }
                if dt > limit {
                    return Err(Error::Cfl { dt, limit });
                }
                let steps = (t / dt).round() as usize;
                if steps == 0 || (steps as f64 * dt - t).abs() > 1e-12 * t.max(1.0) {
                    return Err(Error::InvalidParams(format!("dt = {dt} does not divide the horizon {t}")));
                }
                (t / steps as f64, steps)
            }
        };
        Ok(GridSpec {
            radius: half as f64 * h,
            h,
            dt,
            steps,
        })
    }

    pub fn half(&self) -> usize {
        if self.h == 0.0 {
            0
        } else {
            (self.radius / self.h).round() as usize
        }
    }

    pub fn descriptor(&self) -> String {
        format!("R={:.6} h={:.6e} dt={:.6e} N={}", self.radius, self.h, self.dt, self.steps)
    }
}

fn run_scheme(phi: &TestFunction, r: usize, params: &GParams, gs: &GridSpec) -> Result<f64> {
    if r == 0 || gs.steps == 0 || params.sigma_hi_sq == 0.0 {
        return Ok(phi.eval(&vec![0.0; phi.arity().max(r)]));
    }
    let half = gs.half();
    let grid = TensorGrid::new(vec![Axis::new(half, gs.h, 1.0); r])?;
    let mut u = grid.tabulate(|z| phi.eval(z));
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial payoff".into()));
    }
    evolve_pde(&grid, &mut u, params, gs.dt, gs.steps)?;
    let centre = grid.flat_index(&vec![half; r]);
    Ok(u[centre])
}

/// Upper value from the explicit scheme and lower value from the same
/// scheme applied to `-phi`.
pub fn solve(rp: &ReducedProblem, gs: &GridSpec) -> Result<SublinearValue> {
    if rp.rank > PDE_DIM_CAP {
        return Err(Error::DimensionTooLarge { dim: rp.rank, cap: PDE_DIM_CAP });
    }
    let neg = rp.phi_reduced.negated();
    let (up, down) = rayon::join(
        || run_scheme(&rp.phi_reduced, rp.rank, &rp.params, gs),
        || run_scheme(&neg, rp.rank, &rp.params, gs),
    );
    Ok(SublinearValue::new(up?, -down?))
}

/// Upper value only.
pub fn solve_upper(rp: &ReducedProblem, gs: &GridSpec) -> Result<f64> {
    if rp.rank > PDE_DIM_CAP {
        return Err(Error::DimensionTooLarge { dim: rp.rank, cap: PDE_DIM_CAP });
    }
    run_scheme(&rp.phi_reduced, rp.rank, &rp.params, gs)
}

/// Reduces, resolves the grid and solves.
pub fn expect_law(law: &GramLaw, phi: &TestFunction, t: f64, opts: &GridOptions) -> Result<(SublinearValue, GridSpec)> {
    let rp = reduce(law, phi, t)?;
    let gs = GridSpec::resolve(opts, rp.rank, &rp.params, t)?;
    Ok((solve(&rp, &gs)?, gs))
}

/// `E[phi(W_{A_1}, ..., W_{A_n})]` at horizon `t`.
pub fn finite_dim_expectation(
    regions: &[Region],
    phi: &TestFunction,
    t: f64,
    p: GParams,
    opts: &GridOptions,
) -> Result<SublinearValue> {
    let law = gram_matrix(regions, p)?;
    expect_law(&law, phi, t, opts).map(|(v, _)| v)
}

/// PDE-backed upper expectation for a fixed law, usable with the axiom
/// harness.
#[derive(Clone, Debug)]
pub struct GHeatExpectation {
    pub law: GramLaw,
    pub horizon: f64,
    pub options: GridOptions,
}

impl GHeatExpectation {
    pub fn new(law: GramLaw, horizon: f64, options: GridOptions) -> Self {
        GHeatExpectation { law, horizon, options }
    }
}

impl Expectation for GHeatExpectation {
    fn expect(&self, phi: &Expr) -> Result<f64> {
        let phi = TestFunction::from_expr(phi.clone());
        let rp = reduce(&self.law, &phi, self.horizon)?;
        let gs = GridSpec::resolve(&self.options, rp.rank, &rp.params, self.horizon)?;
        solve_upper(&rp, &gs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HalfOpenBox;

    fn law(m: &[f64], n: usize, lo: f64, hi: f64) -> GramLaw {
        GramLaw::from_matrix(DMatrix::from_row_slice(n, n, m), GParams::new(lo, hi).unwrap()).unwrap()
    }

    fn tf(s: &str) -> TestFunction {
        TestFunction::parse(s).unwrap()
    }

    #[test]
    fn factor_of_diagonal() {
        let l = factorize(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])).unwrap();
        assert_eq!(l.ncols(), 2);
        let back = &l * l.transpose();
        assert!((back[(0, 0)] - 1.0).abs() < 1e-14 && (back[(1, 1)] - 2.0).abs() < 1e-14);
        assert!((l[(1, 0)] - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn repeated_region_drops_rank() {
        let lw = law(&[1.0, 1.0, 1.0, 1.0], 2, 1.0, 2.0);
        let rp = reduce(&lw, &tf("x1*x2"), 1.0).unwrap();
        assert_eq!(rp.rank, 1);
        assert!((rp.factor[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((rp.factor[(1, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(rp.phi_reduced.arity(), 1);
    }

    #[test]
    fn nested_factor_reproduces_gram() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 4.0]);
        let l = factorize(&m).unwrap();
        assert_eq!(l.ncols(), 2);
        assert!((&l * l.transpose() - m).abs().max() < 1e-10);
    }

    #[test]
    fn rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(factorize(&m), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn odd_payoff_vanishes() {
        let (v, _) = expect_law(&law(&[2.0], 1, 1.0, 3.0), &tf("x1"), 1.0, &GridOptions::default()).unwrap();
        assert!(v.upper.abs() < 1e-6 && v.lower.abs() < 1e-6);
    }

    #[test]
    fn second_moment_at_coarse_spacing() {
        // h = 0.02 R
        let opts = GridOptions::with_cells(50);
        let (v, _) = expect_law(&law(&[1.5], 1, 0.5, 2.0), &tf("x1^2"), 1.0, &opts).unwrap();
        assert!((v.upper - 3.0).abs() < 0.005 * 3.0, "{v:?}");
        assert!((v.lower - 0.75).abs() < 0.005 * 0.75, "{v:?}");
    }

    #[test]
    fn region_second_moment() {
        let a = Region::from_box(HalfOpenBox::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap());
        let v = finite_dim_expectation(&[a], &tf("x1*x1"), 1.0, GParams::new(1.0, 1.5).unwrap(), &GridOptions::default())
            .unwrap();
        assert!((v.upper - 3.0).abs() < 0.015, "{v:?}");
    }

    #[test]
    fn disjoint_cross_moment_vanishes() {
        let lw = law(&[1.0, 0.0, 0.0, 2.0], 2, 0.5, 2.0);
        let (v, _) = expect_law(&lw, &tf("x1*x2"), 1.0, &GridOptions::default()).unwrap();
        let tol = 5e-3 * 2f64.sqrt();
        assert!(v.upper.abs() < tol && v.lower.abs() < tol, "{v:?}");
    }

    #[test]
    fn additivity_defect_vanishes() {
        let lw = law(&[1.0, 0.0, 1.0, 0.0, 2.0, 2.0, 1.0, 2.0, 3.0], 3, 0.5, 2.0);
        let (v, _) = expect_law(&lw, &tf("(x1 + x2 - x3)^2"), 1.0, &GridOptions::default()).unwrap();
        assert!(v.upper.abs() < 1e-6 && v.lower.abs() < 1e-6, "{v:?}");
    }

    #[test]
    fn dt_auto_and_explicit() {
        let opts: GridOptions = serde_json::from_str(r#"{"radius_mult": 8, "dt": "auto"}"#).unwrap();
        let p = GParams::new(1.0, 2.0).unwrap();
        let gs = GridSpec::resolve(&opts, 1, &p, 1.0).unwrap();
        assert!(gs.dt <= gs.h * gs.h / 4.0);
        assert!((gs.dt * gs.steps as f64 - 1.0).abs() < 1e-12);
        let bad = GridOptions { h: Some(0.1), dt: Some(0.1), ..Default::default() };
        assert!(matches!(GridSpec::resolve(&bad, 1, &p, 1.0), Err(Error::Cfl { .. })));
    }

    #[test]
    fn dimension_cap() {
        let lw = law(&[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0], 4, 1.0, 1.0);
        let rp = reduce(&lw, &tf("x1*x4"), 1.0).unwrap();
        let gs = GridSpec::resolve(&GridOptions::default(), 4, &lw.params, 1.0).unwrap();
        assert!(matches!(solve(&rp, &gs), Err(Error::DimensionTooLarge { dim: 4, cap: 3 })));
    }

    #[test]
    fn zero_volatility_is_the_payoff() {
        let (v, _) = expect_law(&law(&[1.0], 1, 0.0, 0.0), &tf("x1^2 + 3"), 1.0, &GridOptions::default()).unwrap();
        assert_eq!(v, SublinearValue::exact(3.0));
    }
}
