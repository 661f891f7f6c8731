//! Layered spatial-temporal noise.
//!
//! A [`LayeredModel`] cuts time into layers `[t_k, t_{k+1})` and space into
//! disjoint cells. The increment over layer `k` and cell `j` is the
//! variable `x_{k m + j + 1}` of a payoff (layer-major order). Within a
//! layer the increments form a G-normal vector with diagonal Gram matrix
//! `(t_{k+1} - t_k) diag(lambda_1, ..., lambda_m)`; each layer is
//! independent of the earlier ones.
//!
//! Expectations are computed by backward recursion: the last layer is
//! integrated out with earlier variables frozen, the result becomes the
//! payoff of the remaining layers, and so on. A payoff that is at most
//! quadratic in the layer being integrated is handled symbolically; anything
//! else is tabulated on a lattice over the variables it touches.

mod integral;
mod quadratic;

use std::collections::BTreeSet;
use std::fmt;

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::geometry::{intersect_measure, Region};
use crate::gheat::PDE_DIM_CAP;
use crate::grid::{evolve_dp, evolve_pde, interpolate, Axis, TensorGrid};
use crate::phi::{Expr, TestFunction};
use crate::quadrature::GaussHermite;
use crate::sublinear::{GParams, SublinearValue};

pub use integral::{
    bohner_integral, conditional_axiom_suite, integral_property_suite, ito_integral, ito_integral_between, m2_norm,
    ordering_witness, temporal_gaussian_witness, SimpleAdaptedProcess, Witness,
};
pub use quadratic::{decompose, Quadratic};

#[derive(Clone, Debug)]
pub struct LayeredModel {
    times: Vec<f64>,
    cells: Vec<Region>,
    measures: Vec<f64>,
    params: GParams,
}

impl LayeredModel {
    /// `times` starts at zero and increases strictly; `cells` are pairwise
    /// disjoint with positive finite measure.
    pub fn new(times: Vec<f64>, cells: Vec<Region>, params: GParams) -> Result<Self> {
        params.validate()?;
        if params.sigma_hi_sq == 0.0 {
            return Err(Error::InvalidParams("the layered model needs sigma_hi_sq > 0".into()));
        }
        if times.len() < 2 {
            return Err(Error::InvalidInput("at least one time layer is required".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidInput(format!("times must start at 0, got {}", times[0])));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidInput(format!("times must increase strictly: {} then {}", w[0], w[1])));
        }
        if cells.is_empty() {
            return Err(Error::InvalidInput("at least one cell is required".into()));
        }
        let measures: Vec<f64> = cells.iter().map(Region::measure).collect();
        for (j, &m) in measures.iter().enumerate() {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::Geometry(format!("cell {} has measure {m}", j + 1)));
            }
        }
        for a in 0..cells.len() {
            for b in a + 1..cells.len() {
                let overlap = intersect_measure(&cells[a], &cells[b])?;
                if overlap > 0.0 {
                    return Err(Error::Geometry(format!(
                        "cells {} and {} overlap with measure {overlap}",
                        a + 1,
                        b + 1
                    )));
                }
            }
        }
        Ok(LayeredModel {
            times,
            cells,
            measures,
            params,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn cells(&self) -> &[Region] {
        &self.cells
    }

    pub fn measures(&self) -> &[f64] {
        &self.measures
    }

    pub fn params(&self) -> &GParams {
        &self.params
    }

    pub fn layers(&self) -> usize {
        self.times.len() - 1
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Number of increment variables.
    pub fn dim(&self) -> usize {
        self.layers() * self.cell_count()
    }

    /// 0-based index of the increment over layer `layer` and cell `cell`.
    pub fn var(&self, layer: usize, cell: usize) -> usize {
        layer * self.cell_count() + cell
    }

    pub fn layer_of(&self, var: usize) -> usize {
        var / self.cell_count()
    }

    pub fn cell_of(&self, var: usize) -> usize {
        var % self.cell_count()
    }

    pub fn layer_length(&self, layer: usize) -> f64 {
        self.times[layer + 1] - self.times[layer]
    }

    /// Second-moment scale `(t_{k+1} - t_k) lambda_j` of a variable.
    pub fn variance(&self, var: usize) -> f64 {
        self.layer_length(self.layer_of(var)) * self.measures[self.cell_of(var)]
    }

    pub fn layer_vars(&self, layer: usize) -> BTreeSet<usize> {
        (0..self.cell_count()).map(|j| self.var(layer, j)).collect()
    }

    /// Layers whose increments are known at time `t`.
    pub fn known_layers(&self, t: f64) -> usize {
        self.times.windows(2).take_while(|w| w[1] <= t).count()
    }

    fn check_vars(&self, vars: &BTreeSet<usize>) -> Result<()> {
        match vars.iter().next_back() {
            Some(&v) if v >= self.dim() => Err(Error::InvalidInput(format!(
                "variable x{} is beyond the {} increments of the model",
                v + 1,
                self.dim()
            ))),
            _ => Ok(()),
        }
    }
}

/// Lattice values of a function of a few increments, interpolated with
/// tensor cubics between nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    vars: Vec<usize>,
    grid: TensorGrid,
    values: Vec<f64>,
}

impl Table {
    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn grid(&self) -> &TensorGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let sub: Vec<f64> = self.vars.iter().map(|&v| x[v]).collect();
        interpolate(&self.grid, &self.values, &sub)
    }

    fn negate(&mut self) {
        for v in &mut self.values {
            *v = -*v;
        }
    }
}

/// A payoff of the layer increments: a symbolic part plus tabulated parts.
#[derive(Clone, Debug, PartialEq)]
pub struct CylinderFunctional {
    expr: Expr,
    tables: Vec<Table>,
}

impl CylinderFunctional {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(Self::symbolic(TestFunction::parse(text)?.expr().clone()))
    }

    pub fn symbolic(expr: Expr) -> Self {
        CylinderFunctional { expr, tables: Vec::new() }
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn is_symbolic(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn variables(&self) -> BTreeSet<usize> {
        let mut vars = self.expr.variables();
        for t in &self.tables {
            vars.extend(t.vars.iter().copied());
        }
        vars
    }

    /// `x` holds every increment of the model in layer-major order.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.expr.eval(x) + self.tables.iter().map(|t| t.eval(x)).sum::<f64>()
    }

    pub fn as_constant(&self) -> Option<f64> {
        if self.tables.is_empty() {
            self.expr.as_const()
        } else {
            None
        }
    }

    pub fn negated(&self) -> Self {
        let mut out = CylinderFunctional {
            expr: Expr::neg(self.expr.clone()),
            tables: self.tables.clone(),
        };
        out.tables.iter_mut().for_each(Table::negate);
        out
    }
}

impl From<Expr> for CylinderFunctional {
    fn from(e: Expr) -> Self {
        CylinderFunctional::symbolic(e)
    }
}

impl fmt::Display for CylinderFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.expr)?;
        for t in &self.tables {
            let names: Vec<String> = t.vars.iter().map(|v| format!("x{}", v + 1)).collect();
            write!(f, " + table({})", names.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpacetimeOptions {
    /// Lattice engine for layers that are not handled symbolically. Only
    /// `cells` and `radius_mult` of the engine's settings are used; the time
    /// step follows from the lattice.
    pub engine: Engine,
    /// Integrate payoffs that are at most quadratic in a layer in closed
    /// form.
    pub symbolic: bool,
}

impl Default for SpacetimeOptions {
    fn default() -> Self {
        SpacetimeOptions {
            engine: Engine::default(),
            symbolic: true,
        }
    }
}

impl SpacetimeOptions {
    pub fn numeric(engine: Engine) -> Self {
        SpacetimeOptions { engine, symbolic: false }
    }

    /// Nodes per half-axis when the engine leaves it unset. The counts
    /// are multiples of one another, so coarser lattices are sub-lattices
    /// of finer ones.
    pub fn default_cells(dim: usize) -> usize {
        match dim {
            0 | 1 => 192,
            2 => 96,
            _ => 48,
        }
    }

    fn cells(&self, dim: usize) -> usize {
        let set = match &self.engine {
            Engine::Pde(o) => o.cells,
            Engine::Oracle(s) => s.cells,
        };
        set.unwrap_or_else(|| Self::default_cells(dim))
    }

    /// Spacing along `var` of a lattice whose nodes belong to every lattice
    /// the recursion may build for that variable.
    pub fn common_spacing(&self, model: &LayeredModel, var: usize) -> f64 {
        self.radius_mult() * (model.params.sigma_hi_sq * model.variance(var)).sqrt() / self.cells(PDE_DIM_CAP) as f64
    }

    fn radius_mult(&self) -> f64 {
        match &self.engine {
            Engine::Pde(o) => o.radius_mult,
            Engine::Oracle(s) => s.radius_mult,
        }
    }
}

/// Splits a sum into the terms free of `active` and the rest.
fn split_measurable(e: &Expr, active: &BTreeSet<usize>) -> (Expr, Expr) {
    if e.variables().is_disjoint(active) {
        return (e.clone(), Expr::Const(0.0));
    }
    match e {
        Expr::Add(a, b) => {
            let (ma, ra) = split_measurable(a, active);
            let (mb, rb) = split_measurable(b, active);
            (Expr::add(ma, mb), Expr::add(ra, rb))
        }
        Expr::Sub(a, b) => {
            let (ma, ra) = split_measurable(a, active);
            let (mb, rb) = split_measurable(b, active);
            (Expr::sub(ma, mb), Expr::sub(ra, rb))
        }
        Expr::Neg(a) => {
            let (m, r) = split_measurable(a, active);
            (Expr::neg(m), Expr::neg(r))
        }
        // a known factor distributes over the split of the other one
        Expr::Mul(a, b) if a.variables().is_disjoint(active) => {
            let (m, r) = split_measurable(b, active);
            (Expr::mul((**a).clone(), m), Expr::mul((**a).clone(), r))
        }
        Expr::Mul(a, b) if b.variables().is_disjoint(active) => {
            let (m, r) = split_measurable(a, active);
            (Expr::mul(m, (**b).clone()), Expr::mul(r, (**b).clone()))
        }
        _ => (Expr::Const(0.0), e.clone()),
    }
}

/// Closed form of the layer integral of a payoff at most quadratic in the
/// layer variables: only the diagonal quadratic coefficients survive.
fn integrate_symbolic(model: &LayeredModel, e: &Expr, active: &BTreeSet<usize>) -> Option<Expr> {
    let q = decompose(e, active)?;
    let s = Expr::sum(
        q.quad
            .iter()
            .filter(|((j, l), _)| j == l)
            .map(|((j, _), c)| Expr::scale(model.variance(*j), c.clone())),
    );
    let p = model.params;
    let curvature = if let Some(s) = s.as_const() {
        Expr::Const(2.0 * p.g(s))
    } else if s.is_nonneg() {
        Expr::scale(p.sigma_hi_sq, s)
    } else if s.is_nonpos() {
        Expr::scale(p.sigma_lo_sq, s)
    } else {
        Expr::sub(
            Expr::scale(p.sigma_hi_sq, Expr::max(s.clone(), Expr::Const(0.0))),
            Expr::scale(p.sigma_lo_sq, Expr::max(Expr::neg(s), Expr::Const(0.0))),
        )
    };
    Some(Expr::add(q.constant, curvature))
}

/// Tabulates `expr + tables` on a lattice over their variables, runs the
/// engine over the active axes for unit time and keeps the slice where the
/// active coordinates vanish.
fn integrate_numeric(
    model: &LayeredModel,
    expr: &Expr,
    tables: &[Table],
    active: &BTreeSet<usize>,
    opts: &SpacetimeOptions,
) -> Result<CylinderFunctional> {
    let mut vars = expr.variables();
    for t in tables {
        vars.extend(t.vars.iter().copied());
    }
    let vars: Vec<usize> = vars.into_iter().collect();
    if vars.len() > PDE_DIM_CAP {
        return Err(Error::DimensionTooLarge {
            dim: vars.len(),
            cap: PDE_DIM_CAP,
        });
    }
    let cells = opts.cells(vars.len());
    if cells == 0 {
        return Err(Error::InvalidParams("cells must be positive".into()));
    }
    let mult = opts.radius_mult();
    if !(mult > 0.0) {
        return Err(Error::InvalidParams(format!("radius_mult must be positive, got {mult}")));
    }
    let p = model.params;
    let axes: Vec<Axis> = vars
        .iter()
        .map(|&v| {
            let var = model.variance(v);
            let width = mult * (p.sigma_hi_sq * var).sqrt();
            Axis::new(cells, width / cells as f64, if active.contains(&v) { var } else { 0.0 })
        })
        .collect();
    let grid = TensorGrid::new(axes)?;
    let n = model.dim();
    let payoff = CylinderFunctional {
        expr: expr.clone(),
        tables: tables.to_vec(),
    };
    let mut values = grid.tabulate(|z| {
        let mut x = vec![0.0; n];
        for (&v, &zi) in vars.iter().zip(z) {
            x[v] = zi;
        }
        payoff.eval(&x)
    });
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("layer payoff".into()));
    }
    match &opts.engine {
        Engine::Pde(_) => {
            let limit = grid.cfl_limit(&p);
            let steps = (limit.recip() * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            evolve_pde(&grid, &mut values, &p, 1.0 / steps as f64, steps)?;
        }
        Engine::Oracle(spec) => {
            if spec.steps == 0 {
                return Err(Error::InvalidParams("dp steps must be at least 1".into()));
            }
            let controls = spec.control_grid(&p)?;
            let rule = GaussHermite::new(spec.quad_order)?;
            evolve_dp(&grid, &mut values, &controls, 1.0 / spec.steps as f64, spec.steps, &rule)?;
        }
    }
    let kept: Vec<usize> = vars.iter().copied().filter(|v| !active.contains(v)).collect();
    let slice = grid.active_origin_slice(&values);
    if kept.is_empty() {
        return Ok(CylinderFunctional::symbolic(Expr::Const(slice[0])));
    }
    let passive_axes: Vec<Axis> = grid.axes.iter().filter(|a| !a.is_active()).cloned().collect();
    Ok(CylinderFunctional {
        expr: Expr::Const(0.0),
        tables: vec![Table {
            vars: kept,
            grid: TensorGrid::new(passive_axes)?,
            values: slice,
        }],
    })
}

/// Integrates the increments of one layer out of `f`, leaving a functional
/// of the other layers.
pub fn integrate_layer(
    model: &LayeredModel,
    f: &CylinderFunctional,
    layer: usize,
    opts: &SpacetimeOptions,
) -> Result<CylinderFunctional> {
    if layer >= model.layers() {
        return Err(Error::InvalidInput(format!(
            "layer {} does not exist in a model with {} layers",
            layer + 1,
            model.layers()
        )));
    }
    let active = model.layer_vars(layer);
    let (measurable, rest) = split_measurable(&f.expr, &active);
    let (hit, kept): (Vec<Table>, Vec<Table>) = f
        .tables
        .iter()
        .cloned()
        .partition(|t| t.vars.iter().any(|v| active.contains(v)));
    let mut out = CylinderFunctional {
        expr: measurable,
        tables: kept,
    };
    if rest.as_const() == Some(0.0) && hit.is_empty() {
        return Ok(f.clone());
    }
    let symbolic = if opts.symbolic && hit.is_empty() {
        integrate_symbolic(model, &rest, &active)
    } else {
        None
    };
    let integrated = match symbolic {
        Some(e) => CylinderFunctional::symbolic(e),
        None => integrate_numeric(model, &rest, &hit, &active, opts)?,
    };
    out.expr = Expr::add(out.expr, integrated.expr);
    out.tables.extend(integrated.tables);
    Ok(out)
}

fn check_functional(model: &LayeredModel, f: &CylinderFunctional) -> Result<()> {
    model.check_vars(&f.variables())
}

/// Upper expectation with the layers integrated out in the given order.
/// The defining order is back to front; other orders are exposed to
/// exhibit that the construction is not symmetric in time.
pub fn upper_expectation_in_order(
    model: &LayeredModel,
    f: &CylinderFunctional,
    order: &[usize],
    opts: &SpacetimeOptions,
) -> Result<f64> {
    check_functional(model, f)?;
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..model.layers()).collect::<Vec<_>>() {
        return Err(Error::InvalidInput("order must list every layer exactly once".into()));
    }
    let mut cur = f.clone();
    for &k in order {
        cur = integrate_layer(model, &cur, k, opts)?;
    }
    cur.as_constant()
        .ok_or_else(|| Error::InvalidInput("recursion did not reduce to a constant".into()))
}

pub fn upper_expectation(model: &LayeredModel, f: &CylinderFunctional, opts: &SpacetimeOptions) -> Result<f64> {
    let order: Vec<usize> = (0..model.layers()).rev().collect();
    upper_expectation_in_order(model, f, &order, opts)
}

/// Upper value of `f` and lower value `-E[-f]`.
pub fn expectation(model: &LayeredModel, f: &CylinderFunctional, opts: &SpacetimeOptions) -> Result<SublinearValue> {
    let neg = f.negated();
    let (up, down) = rayon::join(
        || upper_expectation(model, f, opts),
        || upper_expectation(model, &neg, opts),
    );
    Ok(SublinearValue::new(up?, -down?))
}

/// Conditional expectation given the increments known at time `t`.
///
/// Layers starting at or after `t` are integrated out. A layer straddling
/// `t` is integrated out too when `f` ignores it; otherwise the query is
/// refused, since the increment is only partly known.
pub fn conditional_expectation(
    model: &LayeredModel,
    f: &CylinderFunctional,
    t: f64,
    opts: &SpacetimeOptions,
) -> Result<CylinderFunctional> {
    check_functional(model, f)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("conditioning time must be finite and nonnegative, got {t}")));
    }
    let known = model.known_layers(t);
    if known < model.layers() && model.times[known] < t {
        let straddled = model.layer_vars(known);
        if !f.variables().is_disjoint(&straddled) {
            return Err(Error::InvalidInput(format!(
                "t = {t} lies inside layer [{}, {}) whose increments the payoff uses",
                model.times[known],
                model.times[known + 1]
            )));
        }
    }
    let mut cur = f.clone();
    for k in (known..model.layers()).rev() {
        cur = integrate_layer(model, &cur, k, opts)?;
    }
    Ok(cur)
}
