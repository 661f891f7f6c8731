//! Stochastic and deterministic integrals of simple adapted processes,
//! together with the property suites for integrals and conditional
//! expectations.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{
    conditional_expectation, upper_expectation, upper_expectation_in_order, CylinderFunctional, LayeredModel,
    SpacetimeOptions,
};
use crate::error::{Error, Result};
use crate::geometry::GramLaw;
use crate::oracle::path_rng;
use crate::phi::{Expr, TestFunction};
use crate::report::Report;

/// Tolerance for identities the recursion reproduces exactly.
pub const EXACT_TOL: f64 = 1e-8;
/// Tolerance for identities that go through lattice recursions.
pub const RECURSION_TOL: f64 = 1e-3;

const POINTS: u64 = 16;

/// `f(s, x) = sum_{k,j} X_{kj} 1_{A_j}(x) 1_{[t_k, t_{k+1})}(s)` where
/// `X_{kj}` may only depend on increments of layers before `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimpleAdaptedProcess {
    coefficients: Vec<Vec<Expr>>,
}

impl SimpleAdaptedProcess {
    /// `coefficients[k][j]` multiplies the increment of layer `k` over
    /// cell `j`.
    pub fn new(model: &LayeredModel, coefficients: Vec<Vec<Expr>>) -> Result<Self> {
        if coefficients.len() != model.layers() || coefficients.iter().any(|row| row.len() != model.cell_count()) {
            return Err(Error::InvalidInput(format!(
                "process needs a {} x {} coefficient array",
                model.layers(),
                model.cell_count()
            )));
        }
        for (k, row) in coefficients.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if let Some(&v) = c.variables().iter().find(|&&v| v >= model.var(k, 0)) {
                    return Err(Error::NotAdapted(format!(
                        "coefficient of layer {} cell {} uses x{}, an increment of layer {}",
                        k + 1,
                        j + 1,
                        v + 1,
                        model.layer_of(v) + 1
                    )));
                }
            }
        }
        Ok(SimpleAdaptedProcess { coefficients })
    }

    pub fn parse<S: AsRef<str>>(model: &LayeredModel, rows: &[Vec<S>]) -> Result<Self> {
        let coefficients = rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|s| TestFunction::parse(s.as_ref()).map(|f| f.expr().clone()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(model, coefficients)
    }

    pub fn constant(model: &LayeredModel, c: f64) -> Self {
        SimpleAdaptedProcess {
            coefficients: vec![vec![Expr::Const(c); model.cell_count()]; model.layers()],
        }
    }

    /// Indicator of all time times one cell.
    pub fn cell_indicator(model: &LayeredModel, cell: usize) -> Self {
        let row: Vec<Expr> = (0..model.cell_count())
            .map(|j| Expr::Const(if j == cell { 1.0 } else { 0.0 }))
            .collect();
        SimpleAdaptedProcess {
            coefficients: vec![row; model.layers()],
        }
    }

    pub fn coefficient(&self, layer: usize, cell: usize) -> &Expr {
        &self.coefficients[layer][cell]
    }

    pub fn coefficients(&self) -> &[Vec<Expr>] {
        &self.coefficients
    }

    /// `alpha f` on layers from `from` on, `f` before. Adapted when
    /// `alpha` only uses layers before `from`.
    pub fn scaled_from(&self, model: &LayeredModel, alpha: &Expr, from: usize) -> Result<Self> {
        let coefficients = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(k, row)| {
                row.iter()
                    .map(|c| if k >= from { Expr::mul(alpha.clone(), c.clone()) } else { c.clone() })
                    .collect()
            })
            .collect();
        Self::new(model, coefficients)
    }
}

/// `sum_{from <= k < to} sum_j X_{kj} W([t_k, t_{k+1}) x A_j)`.
pub fn ito_integral_between(model: &LayeredModel, f: &SimpleAdaptedProcess, from: usize, to: usize) -> CylinderFunctional {
    let to = to.min(model.layers());
    let terms = (from..to).flat_map(|k| {
        (0..model.cell_count()).map(move |j| Expr::mul(f.coefficients[k][j].clone(), Expr::var(model.var(k, j))))
    });
    CylinderFunctional::symbolic(Expr::sum(terms))
}

pub fn ito_integral(model: &LayeredModel, f: &SimpleAdaptedProcess) -> CylinderFunctional {
    ito_integral_between(model, f, 0, model.layers())
}

/// `sum_{k,j} X_{kj} (t_{k+1} - t_k) lambda_j`.
pub fn bohner_integral(model: &LayeredModel, f: &SimpleAdaptedProcess) -> CylinderFunctional {
    weighted_sum(model, f, |c| c.clone())
}

fn weighted_sum(model: &LayeredModel, f: &SimpleAdaptedProcess, map: impl Fn(&Expr) -> Expr) -> CylinderFunctional {
    let terms = (0..model.layers()).flat_map(|k| (0..model.cell_count()).map(move |j| (k, j)));
    CylinderFunctional::symbolic(Expr::sum(
        terms.map(|(k, j)| Expr::scale(model.variance(model.var(k, j)), map(&f.coefficients[k][j]))),
    ))
}

/// `sum_{k,j} X_{kj}^2 (t_{k+1} - t_k) lambda_j`.
fn energy(model: &LayeredModel, f: &SimpleAdaptedProcess) -> CylinderFunctional {
    weighted_sum(model, f, |c| Expr::pow(c.clone(), 2))
}

/// `(E[sum X_{kj}^2 (t_{k+1} - t_k) lambda_j])^(1/2)`.
pub fn m2_norm(model: &LayeredModel, f: &SimpleAdaptedProcess, opts: &SpacetimeOptions) -> Result<f64> {
    Ok(upper_expectation(model, &energy(model, f), opts)?.max(0.0).sqrt())
}

/// Increment vectors drawn at the upper volatility, clipped to three
/// standard deviations and rounded to lattice nodes, so that tabulated
/// functionals are compared where they are computed rather than where
/// they are interpolated.
fn sample_points(model: &LayeredModel, opts: &SpacetimeOptions, seed: u64, count: u64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let mut rng = path_rng(seed, i);
            (0..model.dim())
                .map(|v| {
                    let z: f64 = rng.sample(StandardNormal);
                    let x = z.clamp(-3.0, 3.0) * (model.params().sigma_hi_sq * model.variance(v)).sqrt();
                    let h = opts.common_spacing(model, v);
                    (x / h).round() * h
                })
                .collect()
        })
        .collect()
}

fn max_abs_diff(points: &[Vec<f64>], a: impl Fn(&[f64]) -> f64, b: impl Fn(&[f64]) -> f64) -> f64 {
    points.iter().map(|x| (a(x) - b(x)).abs()).fold(0.0, f64::max)
}

fn max_excess(points: &[Vec<f64>], a: impl Fn(&[f64]) -> f64, b: impl Fn(&[f64]) -> f64) -> f64 {
    points.iter().map(|x| a(x) - b(x)).fold(f64::NEG_INFINITY, f64::max)
}

/// Zero mean, `L^2` domination, interval additivity, left-linearity,
/// vanishing conditional expectation of forward integrals, the martingale
/// identity, the tower property and the adaptedness gate, on a model with
/// at least two layers.
pub fn integral_property_suite(
    model: &LayeredModel,
    f: &SimpleAdaptedProcess,
    opts: &SpacetimeOptions,
) -> Result<Report> {
    let n = model.layers();
    if n < 2 {
        return Err(Error::InvalidInput("the integral suite needs at least two layers".into()));
    }
    let mut r = Report::new("stochastic-integral");
    let exact_tol = if opts.symbolic { EXACT_TOL } else { RECURSION_TOL };
    let points = sample_points(model, opts, 0x1f0, POINTS);
    let whole = ito_integral(model, f);
    let sigma_hi_sq = model.params().sigma_hi_sq;

    let up = upper_expectation(model, &whole, opts)?;
    let down = -upper_expectation(model, &whole.negated(), opts)?;
    r.approx("zero mean (upper)", up, 0.0, exact_tol);
    r.approx("zero mean (lower)", down, 0.0, exact_tol);

    let square = CylinderFunctional::symbolic(Expr::pow(whole.expr().clone(), 2));
    let lhs = upper_expectation(model, &square, opts)?;
    let rhs = sigma_hi_sq * upper_expectation(model, &energy(model, f), opts)?;
    r.at_most("L2 domination", lhs, rhs, RECURSION_TOL);

    let s = 1;
    let t_s = model.times()[s];
    let head = ito_integral_between(model, f, 0, s);
    let tail = ito_integral_between(model, f, s, n);
    r.approx(
        "interval additivity",
        max_abs_diff(&points, |x| whole.eval(x), |x| head.eval(x) + tail.eval(x)),
        0.0,
        EXACT_TOL,
    );

    let alpha = Expr::max(
        Expr::min(Expr::var(model.var(s - 1, 0)), Expr::Const(1.0)),
        Expr::Const(-1.0),
    );
    let scaled = f.scaled_from(model, &alpha, s)?;
    let scaled_tail = ito_integral_between(model, &scaled, s, n);
    r.approx(
        "left linearity",
        max_abs_diff(&points, |x| scaled_tail.eval(x), |x| alpha.eval(x) * tail.eval(x)),
        0.0,
        EXACT_TOL,
    );

    for (name, g) in [("forward integral", tail.clone()), ("negated forward integral", tail.negated())] {
        let psi = conditional_expectation(model, &g, t_s, opts)?;
        r.approx(
            format!("vanishing conditional expectation ({name})"),
            max_abs_diff(&points, |x| psi.eval(x), |_| 0.0),
            0.0,
            exact_tol,
        );
    }

    let psi = conditional_expectation(model, &whole, t_s, opts)?;
    r.approx(
        "martingale",
        max_abs_diff(&points, |x| psi.eval(x), |x| head.eval(x)),
        0.0,
        RECURSION_TOL,
    );

    if n >= 3 {
        let t_t = model.times()[2];
        let inner = conditional_expectation(model, &square, t_t, opts)?;
        let nested = conditional_expectation(model, &inner, t_s, opts)?;
        let direct = conditional_expectation(model, &square, t_s, opts)?;
        r.approx(
            "tower",
            max_abs_diff(&points, |x| nested.eval(x), |x| direct.eval(x)),
            0.0,
            RECURSION_TOL,
        );
    }

    let mut leaky = f.coefficients.clone();
    leaky[0][0] = Expr::add(leaky[0][0].clone(), Expr::var(model.var(1, 0)));
    let rejected = matches!(SimpleAdaptedProcess::new(model, leaky), Err(Error::NotAdapted(_)));
    r.flag("adaptedness gate", rejected, "a coefficient reading a later increment is refused");
    Ok(r)
}

fn coefficient(rng: &mut impl Rng) -> f64 {
    (rng.random_range(-1.0..1.0f64) * 1000.0).round() / 1000.0
}

/// Random payoff of two past increments and one future increment.
fn template(kind: usize, p1: usize, p2: usize, f: usize, a: f64, b: f64) -> String {
    let (p1, p2, f) = (p1 + 1, p2 + 1, f + 1);
    match kind {
        0 => format!("({a})*x{p1}*x{f}^2 + ({b})*x{p2}*x{f}"),
        1 => format!("max(x{p1} + ({a})*x{f}, ({b})*x{p2})"),
        2 => format!("({a})*abs(x{f} - x{p1}) + ({b})*x{p2}^2"),
        3 => format!("(x{f} + ({a})*x{p1})^3 + ({b})*x{p2}"),
        4 => format!("({a})*min(x{f}^2, 1 + abs(x{p1})) + ({b})*x{p2}*x{f}"),
        _ => format!("({a})*max(x{f}, 0)*x{p1} + ({b})*min(x{f}, x{p2})"),
    }
}

const TEMPLATES: usize = 6;

/// Randomized checks of the conditional expectation on a three-layer,
/// two-cell model: monotonicity, identity on known payoffs,
/// sub-additivity, the split of a known signed factor into positive and
/// negative parts, the tower property, linearity in a summand of certain
/// mean, and invariance under adding a mean-zero-certain term.
pub fn conditional_axiom_suite(
    model: &LayeredModel,
    draws: usize,
    seed: u64,
    opts: &SpacetimeOptions,
) -> Result<Report> {
    if model.layers() != 3 || model.cell_count() != 2 {
        return Err(Error::InvalidInput("the conditional suite runs on a 3-layer, 2-cell model".into()));
    }
    let t1 = model.times()[1];
    let t2 = model.times()[2];
    let points = sample_points(model, opts, seed ^ 0xabc, 4);
    let cond = |s: &str, t: f64| -> Result<CylinderFunctional> {
        conditional_expectation(model, &CylinderFunctional::parse(s)?, t, opts)
    };
    let mut worst = [f64::NEG_INFINITY; 8];
    for d in 0..draws {
        let mut rng = path_rng(seed, d as u64);
        let p1 = rng.random_range(0..4usize);
        let p2 = (p1 + rng.random_range(1..4usize)) % 4;
        let f = 4 + rng.random_range(0..2usize);
        let kx = rng.random_range(0..TEMPLATES);
        let kw = rng.random_range(0..TEMPLATES);
        let (a, b, c, e, alpha) = (
            coefficient(&mut rng),
            coefficient(&mut rng),
            coefficient(&mut rng),
            coefficient(&mut rng),
            coefficient(&mut rng),
        );
        let x = template(kx, p1, p2, f, a, b);
        let w = template(kw, p1, p2, f, c, e);
        let eta = format!("x{} - ({c})", p1 + 1);
        let certain = format!("({eta})*x{}", f + 1);

        let psi_x = cond(&x, t2)?;
        let psi_neg_x = cond(&format!("-({x})"), t2)?;
        let psi_w = cond(&w, t2)?;

        let psi_y = cond(&format!("{x} - abs({w})"), t2)?;
        worst[0] = worst[0].max(max_excess(&points, |z| psi_y.eval(z), |z| psi_x.eval(z)));

        let eta_fn = CylinderFunctional::parse(&eta)?;
        let psi_eta = conditional_expectation(model, &eta_fn, t2, opts)?;
        worst[1] = worst[1].max(max_abs_diff(&points, |z| psi_eta.eval(z), |z| eta_fn.eval(z)));

        let psi_sum = cond(&format!("{x} + {w}"), t2)?;
        worst[2] = worst[2].max(max_excess(&points, |z| psi_sum.eval(z), |z| psi_x.eval(z) + psi_w.eval(z)));

        let psi_prod = cond(&format!("({eta})*({x})"), t2)?;
        worst[3] = worst[3].max(max_abs_diff(
            &points,
            |z| psi_prod.eval(z),
            |z| {
                let h = eta_fn.eval(z);
                h.max(0.0) * psi_x.eval(z) + (-h).max(0.0) * psi_neg_x.eval(z)
            },
        ));

        let nested = conditional_expectation(model, &psi_x, t1, opts)?;
        let direct = cond(&x, t1)?;
        worst[4] = worst[4].max(max_abs_diff(&points, |z| nested.eval(z), |z| direct.eval(z)));

        let psi_c = cond(&certain, t2)?;
        let psi_neg_c = cond(&format!("-({certain})"), t2)?;
        worst[5] = worst[5].max(max_abs_diff(&points, |z| psi_c.eval(z), |z| -psi_neg_c.eval(z)));
        let psi_lin = cond(&format!("{x} + ({alpha})*({certain})"), t2)?;
        worst[6] = worst[6].max(max_abs_diff(
            &points,
            |z| psi_lin.eval(z),
            |z| psi_x.eval(z) + alpha * psi_c.eval(z),
        ));

        let base = upper_expectation(model, &CylinderFunctional::parse(&x)?, opts)?;
        let shifted = upper_expectation(model, &CylinderFunctional::parse(&format!("{x} + {certain}"))?, opts)?;
        worst[7] = worst[7].max((shifted - base).abs());
    }
    let mut r = Report::new("conditional-expectation");
    let note = format!("worst case over {draws} random payoffs");
    r.at_most("monotonicity", worst[0], 0.0, RECURSION_TOL).note = Some(note.clone());
    r.approx("known payoffs are kept", worst[1], 0.0, EXACT_TOL).note = Some(note.clone());
    r.at_most("sub-additivity", worst[2], 0.0, RECURSION_TOL).note = Some(note.clone());
    r.approx("signed factor split", worst[3], 0.0, RECURSION_TOL).note = Some(note.clone());
    r.approx("tower", worst[4], 0.0, RECURSION_TOL).note = Some(note.clone());
    r.approx("certain mean", worst[5], 0.0, RECURSION_TOL).note = Some(note.clone());
    r.approx("linearity in a certain summand", worst[6], 0.0, RECURSION_TOL).note = Some(note.clone());
    r.approx("mean-zero summand leaves the expectation", worst[7], 0.0, RECURSION_TOL).note = Some(note);
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Witness {
    pub payoff: String,
    pub layered: f64,
    pub reference: f64,
    pub gap: f64,
}

impl Witness {
    fn new(payoff: String, layered: f64, reference: f64) -> Self {
        Witness {
            payoff,
            layered,
            reference,
            gap: (layered - reference).abs(),
        }
    }
}

fn first_two_increments(model: &LayeredModel) -> Result<(usize, usize)> {
    if model.layers() < 2 {
        return Err(Error::InvalidInput("witnesses need at least two layers".into()));
    }
    Ok((model.var(0, 0), model.var(1, 0)))
}

/// `x_a^2 - x_b^2` for the first cell over the first two layers, compared
/// with a jointly G-normal pair with the same second-moment scales. The
/// layered value is `(sigma_hi_sq - sigma_lo_sq) v` while the joint one
/// vanishes.
pub fn temporal_gaussian_witness(model: &LayeredModel, opts: &SpacetimeOptions) -> Result<Witness> {
    let (a, b) = first_two_increments(model)?;
    let payoff = Expr::sub(Expr::pow(Expr::var(a), 2), Expr::pow(Expr::var(b), 2));
    let layered = upper_expectation(model, &CylinderFunctional::symbolic(payoff.clone()), opts)?;
    let law = GramLaw::from_matrix(
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![model.variance(a), model.variance(b)])),
        *model.params(),
    )?;
    let reduced = payoff.map_vars(&|v| if v == a { 0 } else { 1 });
    let reference = opts.engine.upper(&law, &TestFunction::from_expr(reduced), 1.0)?;
    Ok(Witness::new(payoff.to_string(), layered, reference))
}

/// `x_a x_b^2` integrated back to front against front to back.
pub fn ordering_witness(model: &LayeredModel, opts: &SpacetimeOptions) -> Result<Witness> {
    let (a, b) = first_two_increments(model)?;
    let payoff = Expr::mul(Expr::var(a), Expr::pow(Expr::var(b), 2));
    let f = CylinderFunctional::symbolic(payoff.clone());
    let backward = upper_expectation(model, &f, opts)?;
    let forward_order: Vec<usize> = (0..model.layers()).collect();
    let forward = upper_expectation_in_order(model, &f, &forward_order, opts)?;
    Ok(Witness::new(payoff.to_string(), backward, forward))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Engine;
    use crate::geometry::{HalfOpenBox, Region};
    use crate::sublinear::GParams;

    fn model(layers: usize) -> LayeredModel {
        let times: Vec<f64> = (0..=layers).map(|k| 0.5 * k as f64).collect();
        let cells = vec![
            Region::from_box(HalfOpenBox::new(vec![0.0], vec![1.0]).unwrap()),
            Region::from_box(HalfOpenBox::new(vec![1.0], vec![3.0]).unwrap()),
        ];
        LayeredModel::new(times, cells, GParams::new(0.25, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn integrals_assemble() {
        let m = model(2);
        let one = SimpleAdaptedProcess::cell_indicator(&m, 0);
        assert_eq!(ito_integral(&m, &one).expr().to_string(), "(x1 + x3)");
        assert_eq!(bohner_integral(&m, &one).as_constant(), Some(1.0));
        let c = SimpleAdaptedProcess::constant(&m, 2.0);
        assert_eq!(bohner_integral(&m, &c).as_constant(), Some(2.0 * 3.0));
        let f = SimpleAdaptedProcess::parse(&m, &[vec!["1", "0"], vec!["x1", "x2^2"]]).unwrap();
        let x = [0.3, -0.7, 1.1, 0.4];
        let ito = ito_integral(&m, &f).eval(&x);
        assert!((ito - (0.3 + 0.3 * 1.1 + 0.49 * 0.4)).abs() < 1e-15);
        let b = bohner_integral(&m, &f).eval(&x);
        assert!((b - (0.5 + 0.3 * 0.5 + 0.49 * 1.0)).abs() < 1e-15);
    }

    #[test]
    fn adaptedness_gate() {
        let m = model(2);
        assert!(SimpleAdaptedProcess::parse(&m, &[vec!["1", "1"], vec!["x1", "x2"]]).is_ok());
        let err = SimpleAdaptedProcess::parse(&m, &[vec!["x3", "1"], vec!["1", "1"]]).unwrap_err();
        assert!(matches!(err, Error::NotAdapted(_)));
        let err = SimpleAdaptedProcess::parse(&m, &[vec!["1", "1"], vec!["x4", "1"]]).unwrap_err();
        assert!(matches!(err, Error::NotAdapted(_)));
    }

    #[test]
    fn suite_passes_for_past_increment_coefficients() {
        let m = model(3);
        let f = SimpleAdaptedProcess::parse(&m, &[vec!["1", "0.5"], vec!["x1", "abs(x2)"], vec!["x3 - x1", "x4"]]).unwrap();
        let r = integral_property_suite(&m, &f, &SpacetimeOptions::default()).unwrap();
        assert!(r.all_passed(), "{:#?}", r.failures().collect::<Vec<_>>());
        let norm = m2_norm(&m, &SimpleAdaptedProcess::constant(&m, 1.0), &SpacetimeOptions::default()).unwrap();
        assert!((norm - 4.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn witnesses_show_gaps() {
        let m = model(2);
        let opts = SpacetimeOptions::default();
        let w = temporal_gaussian_witness(&m, &opts).unwrap();
        assert!((w.layered - 0.75 * 0.5).abs() < 1e-12, "{w:?}");
        assert!(w.reference.abs() < 1e-3 && w.gap > 1e-3, "{w:?}");
        let w = ordering_witness(&m, &opts).unwrap();
        assert!(w.gap > 1e-3 && w.reference == 0.0, "{w:?}");
        let numeric = SpacetimeOptions::numeric(Engine::pde());
        let w2 = ordering_witness(&m, &numeric).unwrap();
        assert!((w2.layered - w.layered).abs() < 1e-3, "{w2:?} {w:?}");
    }

    #[test]
    fn conditional_suite_small() {
        let m = model(3);
        let r = conditional_axiom_suite(&m, 6, 3, &SpacetimeOptions::default()).unwrap();
        assert!(r.all_passed(), "{:#?}", r.failures().collect::<Vec<_>>());
    }
}
