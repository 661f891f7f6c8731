//! Reference engine: the upper expectation as a maximum over piecewise
//! constant volatility scenarios, computed by backward dynamic
//! programming, plus Monte-Carlo estimates under one fixed scenario.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GramLaw;
use crate::gheat::{reduce, PDE_DIM_CAP};
use crate::grid::{evolve_dp, Axis, TensorGrid};
use crate::phi::{Expr, TestFunction};
use crate::quadrature::GaussHermite;
use crate::sublinear::{Expectation, GParams, SublinearValue};

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.5758293035489004;

pub const MIN_PATHS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpSpec {
    pub steps: usize,
    #[serde(alias = "quad")]
    pub quad_order: usize,
    /// Volatility grid; `None` means the two endpoints.
    pub controls: Option<Vec<f64>>,
    /// Lattice nodes per half-axis; defaults depend on the dimension.
    pub cells: Option<usize>,
    /// Lattice half-width in standard deviations at `sigma_hi`.
    pub radius_mult: f64,
}

impl Default for DpSpec {
    fn default() -> Self {
        DpSpec {
            steps: 200,
            quad_order: 20,
            controls: None,
            cells: None,
            radius_mult: 10.0,
        }
    }
}

impl DpSpec {
    pub fn with_steps(steps: usize) -> Self {
        DpSpec { steps, ..Default::default() }
    }

    pub fn default_cells(dim: usize) -> usize {
        match dim {
            0 | 1 => 800,
            2 => 150,
            _ => 40,
        }
    }

    pub fn control_grid(&self, p: &GParams) -> Result<Vec<f64>> {
        let grid = match &self.controls {
            None if p.sigma_lo_sq == p.sigma_hi_sq => vec![p.sigma_hi_sq],
            None => vec![p.sigma_lo_sq, p.sigma_hi_sq],
            Some(c) => c.clone(),
        };
        if grid.is_empty() {
            return Err(Error::InvalidParams("control grid is empty".into()));
        }
        let slack = 1e-12 * p.sigma_hi_sq.max(1.0);
        for &s in &grid {
            if !(s >= p.sigma_lo_sq - slack && s <= p.sigma_hi_sq + slack) {
                return Err(Error::InvalidParams(format!(
                    "control {s} outside [{}, {}]",
                    p.sigma_lo_sq, p.sigma_hi_sq
                )));
            }
        }
        Ok(grid)
    }

    /// Endpoints plus `interior` evenly spaced interior points.
    pub fn with_interior_controls(mut self, p: &GParams, interior: usize) -> Self {
        let mut c = vec![p.sigma_lo_sq];
        for k in 1..=interior {
            let w = k as f64 / (interior + 1) as f64;
            c.push(p.sigma_lo_sq + w * (p.sigma_hi_sq - p.sigma_lo_sq));
        }
        c.push(p.sigma_hi_sq);
        self.controls = Some(c);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParams("dp steps must be at least 1".into()));
        }
        if self.quad_order < 2 {
            return Err(Error::InvalidParams("quadrature order must be at least 2".into()));
        }
        if !(self.radius_mult > 0.0) {
            return Err(Error::InvalidParams("radius_mult must be positive".into()));
        }
        Ok(())
    }

    pub fn descriptor(&self, dim: usize) -> String {
        format!(
            "dp N={} q={} cells={} radius_mult={}",
            self.steps,
            self.quad_order,
            self.cells.unwrap_or_else(|| DpSpec::default_cells(dim)),
            self.radius_mult
        )
    }
}

/// `v_0(0)` of the recursion `v_N = phi`,
/// `v_k(x) = max_{s2} E[v_{k+1}(x + sqrt(s2 dt lambda) Z)]`, with
/// independent coordinates of variance weights `lambda_weights`.
pub fn dp_upper_expectation(
    phi: &TestFunction,
    lambda_weights: &[f64],
    t: f64,
    p: &GParams,
    spec: &DpSpec,
) -> Result<f64> {
    spec.validate()?;
    p.validate()?;
    let r = lambda_weights.len();
    if phi.arity() > r {
        return Err(Error::InvalidInput(format!(
            "payoff uses {} variables but only {r} weights were given",
            phi.arity()
        )));
    }
    if r > PDE_DIM_CAP {
        return Err(Error::DimensionTooLarge { dim: r, cap: PDE_DIM_CAP });
    }
    if lambda_weights.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidParams("variance weights must be finite and nonnegative".into()));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParams(format!("horizon must be nonnegative, got {t}")));
    }
    let controls = spec.control_grid(p)?;
    if t == 0.0 || p.sigma_hi_sq == 0.0 || lambda_weights.iter().all(|&l| l == 0.0) {
        return Ok(phi.eval(&vec![0.0; r]));
    }
    let active = lambda_weights.iter().filter(|&&l| l > 0.0).count();
    let cells = spec.cells.unwrap_or_else(|| DpSpec::default_cells(active));
    let axes: Vec<Axis> = lambda_weights
        .iter()
        .map(|&l| {
            if l > 0.0 {
                let width = spec.radius_mult * (p.sigma_hi_sq * t * l).sqrt();
                Axis::new(cells, width / cells as f64, l)
            } else {
                Axis::new(0, 1.0, 0.0)
            }
        })
        .collect();
    let grid = TensorGrid::new(axes)?;
    let mut v = grid.tabulate(|x| phi.eval(x));
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("terminal payoff".into()));
    }
    let rule = GaussHermite::new(spec.quad_order)?;
    evolve_dp(&grid, &mut v, &controls, t / spec.steps as f64, spec.steps, &rule)?;
    let centre: Vec<usize> = grid.axes.iter().map(|a| a.half).collect();
    Ok(v[grid.flat_index(&centre)])
}

/// Upper and lower values of a general law, through the same Gram
/// reduction the PDE engine uses.
pub fn dp_expect_law(law: &GramLaw, phi: &TestFunction, t: f64, spec: &DpSpec) -> Result<SublinearValue> {
    let rp = reduce(law, phi, t)?;
    let ones = vec![1.0; rp.rank];
    let neg = rp.phi_reduced.negated();
    let (up, down) = rayon::join(
        || dp_upper_expectation(&rp.phi_reduced, &ones, t, &law.params, spec),
        || dp_upper_expectation(&neg, &ones, t, &law.params, spec),
    );
    Ok(SublinearValue::new(up?, -down?))
}

/// Values for each step count in `steps`.
pub fn dp_convergence(
    phi: &TestFunction,
    lambda_weights: &[f64],
    t: f64,
    p: &GParams,
    spec: &DpSpec,
    steps: &[usize],
) -> Result<Vec<(usize, f64)>> {
    steps
        .iter()
        .map(|&n| {
            let s = DpSpec { steps: n, ..spec.clone() };
            dp_upper_expectation(phi, lambda_weights, t, p, &s).map(|v| (n, v))
        })
        .collect()
}

/// DP-backed upper expectation for a fixed law.
#[derive(Clone, Debug)]
pub struct DpExpectation {
    pub law: GramLaw,
    pub horizon: f64,
    pub spec: DpSpec,
}

impl Expectation for DpExpectation {
    fn expect(&self, phi: &Expr) -> Result<f64> {
        let phi = TestFunction::from_expr(phi.clone());
        let rp = reduce(&self.law, &phi, self.horizon)?;
        dp_upper_expectation(&rp.phi_reduced, &vec![1.0; rp.rank], self.horizon, &self.law.params, &self.spec)
    }
}

/// Volatility per time step and region; a concrete scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaPolicy {
    pub steps: usize,
    pub regions: usize,
    /// Row-major `steps x regions`.
    pub variances: Vec<f64>,
}

impl SigmaPolicy {
    pub fn new(steps: usize, regions: usize, variances: Vec<f64>) -> Result<Self> {
        if steps == 0 || regions == 0 || variances.len() != steps * regions {
            return Err(Error::InvalidInput(format!(
                "policy needs {steps} x {regions} variances, got {}",
                variances.len()
            )));
        }
        Ok(SigmaPolicy { steps, regions, variances })
    }

    pub fn constant(steps: usize, regions: usize, s2: f64) -> Result<Self> {
        SigmaPolicy::new(steps, regions, vec![s2; steps * regions])
    }

    /// Uniform random variances in `[sigma_lo_sq, sigma_hi_sq]`. With
    /// `shared` every region gets the same draw within a step.
    pub fn random(steps: usize, regions: usize, p: &GParams, shared: bool, seed: u64) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut v = Vec::with_capacity(steps * regions);
        for _ in 0..steps {
            let mut draw = || p.sigma_lo_sq + rng.random::<f64>() * (p.sigma_hi_sq - p.sigma_lo_sq);
            if shared {
                let s = draw();
                v.extend(std::iter::repeat_n(s, regions));
            } else {
                for _ in 0..regions {
                    v.push(draw());
                }
            }
        }
        SigmaPolicy::new(steps, regions, v)
    }

    pub fn get(&self, step: usize, region: usize) -> f64 {
        self.variances[step * self.regions + region]
    }

    /// Whether each step uses one variance for all regions. Only such
    /// policies are dominated by the upper expectation of a joint law.
    pub fn is_region_uniform(&self) -> bool {
        self.variances
            .chunks(self.regions)
            .all(|row| row.iter().all(|&s| s == row[0]))
    }

    pub fn validate(&self, p: &GParams) -> Result<()> {
        let slack = 1e-12 * p.sigma_hi_sq.max(1.0);
        for &s in &self.variances {
            if !(s >= p.sigma_lo_sq - slack && s <= p.sigma_hi_sq + slack) {
                return Err(Error::InvalidParams(format!(
                    "policy variance {s} outside [{}, {}]",
                    p.sigma_lo_sq, p.sigma_hi_sq
                )));
            }
        }
        Ok(())
    }
}

/// Sum in a fixed binary-tree order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Independent random stream for one path.
pub fn path_rng(seed: u64, path: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    /// Half-width of the 99% confidence interval.
    pub half_width: f64,
    pub paths: usize,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> McEstimate {
        let n = samples.len() as f64;
        let mean = pairwise_sum(samples) / n;
        let dev: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if samples.len() > 1 { pairwise_sum(&dev) / (n - 1.0) } else { 0.0 };
        McEstimate {
            estimate: mean,
            half_width: Z99 * (var / n).sqrt(),
            paths: samples.len(),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.estimate - v).abs() <= self.half_width
    }
}

/// Monte-Carlo mean of `phi(X)` where
/// `X_j = sum_k sqrt(s2_{k,j} dt lambda_j) Z_{k,j}` under `policy`.
/// Path `i` draws from stream `i` of `seed`, so the result does not depend
/// on scheduling.
pub fn mc_lower_bound(
    phi: &TestFunction,
    lambda_weights: &[f64],
    policy: &SigmaPolicy,
    t: f64,
    p: &GParams,
    paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    if paths < MIN_PATHS {
        return Err(Error::InvalidParams(format!("at least {MIN_PATHS} paths are required, got {paths}")));
    }
    if policy.regions != lambda_weights.len() {
        return Err(Error::InvalidInput(format!(
            "policy has {} regions but {} weights were given",
            policy.regions,
            lambda_weights.len()
        )));
    }
    if phi.arity() > lambda_weights.len() {
        return Err(Error::InvalidInput("payoff arity exceeds the number of regions".into()));
    }
    policy.validate(p)?;
    let dt = t / policy.steps as f64;
    // per-region standard deviation of the total increment; independent
    // Gaussian steps add in variance
    let scale: Vec<f64> = (0..policy.regions)
        .map(|j| {
            let var: f64 = (0..policy.steps).map(|k| policy.get(k, j) * dt * lambda_weights[j]).sum();
            var.sqrt()
        })
        .collect();
    let samples: Vec<f64> = (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let x: Vec<f64> = scale.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect();
            phi.eval(&x)
        })
        .collect();
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Monte-Carlo sample".into()));
    }
    Ok(McEstimate::from_samples(&samples))
}
