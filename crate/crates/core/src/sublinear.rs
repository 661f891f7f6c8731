//! The scalar generating function `G`, closed-form G-normal moments, and a
//! harness that probes an expectation functional for the four sublinear
//! axioms.

use num::{BigRational, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phi::Expr;
use crate::quadrature::GaussHermite;

/// Variance bounds `0 <= sigma_lo_sq <= sigma_hi_sq` of the volatility
/// ambiguity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GParams {
    pub sigma_lo_sq: f64,
    pub sigma_hi_sq: f64,
}

impl GParams {
    pub fn new(sigma_lo_sq: f64, sigma_hi_sq: f64) -> Result<Self> {
        let p = GParams {
            sigma_lo_sq,
            sigma_hi_sq,
        };
        p.validate()?;
        Ok(p)
    }

    /// No ambiguity: the classical normal law with variance `sigma_sq`.
    pub fn classical(sigma_sq: f64) -> Result<Self> {
        GParams::new(sigma_sq, sigma_sq)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma_lo_sq.is_finite()
            && self.sigma_hi_sq.is_finite()
            && 0.0 <= self.sigma_lo_sq
            && self.sigma_lo_sq <= self.sigma_hi_sq;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "need 0 <= sigma_lo_sq <= sigma_hi_sq, got ({}, {})",
                self.sigma_lo_sq, self.sigma_hi_sq
            )))
        }
    }

    pub fn sigma_hi(&self) -> f64 {
        self.sigma_hi_sq.sqrt()
    }

    pub fn sigma_lo(&self) -> f64 {
        self.sigma_lo_sq.sqrt()
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma_lo_sq == self.sigma_hi_sq
    }

    /// `G(a) = sigma_hi_sq/2 * a^+ - sigma_lo_sq/2 * a^-`.
    #[inline]
    pub fn g(&self, a: f64) -> f64 {
        g_scalar(a, self)
    }

    /// The volatility selected by `G` at `a` (ties at zero use the upper one).
    #[inline]
    pub fn active_variance(&self, a: f64) -> f64 {
        if a >= 0.0 {
            self.sigma_hi_sq
        } else {
            self.sigma_lo_sq
        }
    }

    /// `G` evaluated in exact rational arithmetic.
    pub fn g_exact(&self, a: &BigRational) -> BigRational {
        let half = BigRational::new(1.into(), 2.into());
        let hi = BigRational::from_float(self.sigma_hi_sq).expect("finite");
        let lo = BigRational::from_float(self.sigma_lo_sq).expect("finite");
        if a.is_negative() {
            half * lo * a
        } else if a.is_zero() {
            BigRational::zero()
        } else {
            half * hi * a
        }
    }
}

#[inline]
pub fn g_scalar(a: f64, p: &GParams) -> f64 {
    0.5 * p.sigma_hi_sq * a.max(0.0) - 0.5 * p.sigma_lo_sq * (-a).max(0.0)
}

/// The pair `(E[X], -E[-X])` of upper and lower expectations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SublinearValue {
    pub upper: f64,
    pub lower: f64,
}

impl SublinearValue {
    pub fn new(upper: f64, lower: f64) -> Self {
        SublinearValue { upper, lower }
    }

    pub fn exact(v: f64) -> Self {
        SublinearValue { upper: v, lower: v }
    }

    /// Width of the ambiguity interval; zero iff the value is mean-certain.
    pub fn spread(&self) -> f64 {
        self.upper - self.lower
    }
}

pub fn double_factorial_odd(k: u32) -> f64 {
    // (2k - 1)!!
    (1..=k).map(|i| (2 * i - 1) as f64).product()
}

/// `E[X^{2k}]` and `-E[-X^{2k}]` for `X` G-normal with variance interval
/// `[sigma_lo_sq t, sigma_hi_sq t]`. The payoff is convex so each side is
/// attained at a constant extreme volatility.
pub fn gnormal_even_moment(k: u32, t: f64, p: &GParams) -> Result<SublinearValue> {
    if k == 0 {
        return Err(Error::InvalidParams("moment order k must be at least 1".into()));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParams(format!("horizon must be nonnegative, got {t}")));
    }
    p.validate()?;
    let c = double_factorial_odd(k) * t.powi(k as i32);
    Ok(SublinearValue {
        upper: c * p.sigma_hi_sq.powi(k as i32),
        lower: c * p.sigma_lo_sq.powi(k as i32),
    })
}

/// Anything that assigns an (upper) expectation to a payoff.
pub trait Expectation {
    fn expect(&self, phi: &Expr) -> Result<f64>;
}

/// Classical expectation under i.i.d. `N(0, variance)` coordinates,
/// evaluated by tensor Gauss–Hermite quadrature.
#[derive(Clone, Debug)]
pub struct ClassicalGaussian {
    pub variance: f64,
    pub dim: usize,
    rule: GaussHermite,
}

impl ClassicalGaussian {
    pub fn new(variance: f64, dim: usize, order: usize) -> Result<Self> {
        if !(variance >= 0.0) {
            return Err(Error::InvalidParams(format!("variance must be nonnegative, got {variance}")));
        }
        Ok(ClassicalGaussian {
            variance,
            dim,
            rule: GaussHermite::new(order)?,
        })
    }
}

impl Expectation for ClassicalGaussian {
    fn expect(&self, phi: &Expr) -> Result<f64> {
        let dim = self.dim.max(phi.arity());
        let s = self.variance.sqrt();
        Ok(self.rule.expect_tensor(dim, |z| {
            let x: Vec<f64> = z.iter().map(|v| s * v).collect();
            phi.eval(&x)
        }))
    }
}

/// `allowed(v) = max(abs, rel * max(1, |v|))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    /// For arithmetic identities on closed-form paths.
    pub const CLOSED_FORM: Tolerance = Tolerance { abs: 1e-9, rel: 0.0 };
    /// For values computed by a discretized PDE.
    pub const PDE: Tolerance = Tolerance { abs: 0.0, rel: 1e-2 };

    pub fn allowed(&self, scale: f64) -> f64 {
        self.abs.max(self.rel * scale.abs().max(1.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axiom {
    Monotonicity,
    ConstantPreserving,
    SubAdditivity,
    PositiveHomogeneity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomCheck {
    pub axiom: Axiom,
    /// Largest observed violation magnitude.
    pub worst_violation: f64,
    pub passed: bool,
    pub cases: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub checks: Vec<AxiomCheck>,
}

impl AxiomReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, axiom: Axiom) -> Option<&AxiomCheck> {
        self.checks.iter().find(|c| c.axiom == axiom)
    }
}

/// A pair of payoffs to probe with; constants are probed separately.
#[derive(Clone, Debug, PartialEq)]
pub struct AxiomProbe {
    pub x: Expr,
    pub y: Expr,
}

struct Tally {
    axiom: Axiom,
    worst: f64,
    passed: bool,
    cases: usize,
}

impl Tally {
    fn new(axiom: Axiom) -> Self {
        Tally {
            axiom,
            worst: 0.0,
            passed: true,
            cases: 0,
        }
    }

    /// `violation` is the amount by which the inequality fails (<= 0 is fine).
    fn record(&mut self, violation: f64, allowed: f64) {
        self.cases += 1;
        let v = violation.max(0.0);
        if v.is_nan() || violation.is_nan() {
            self.passed = false;
            self.worst = f64::NAN;
            return;
        }
        self.worst = self.worst.max(v);
        if v > allowed {
            self.passed = false;
        }
    }

    fn finish(self) -> AxiomCheck {
        AxiomCheck {
            axiom: self.axiom,
            worst_violation: self.worst,
            passed: self.passed,
            cases: self.cases,
        }
    }
}

/// Probes monotonicity, constant preservation, sub-additivity and positive
/// homogeneity of `eval`. Violations are reported, never raised; only
/// evaluation failures propagate as errors.
pub fn check_sublinear_axioms(
    eval: &dyn Expectation,
    probes: &[AxiomProbe],
    constants: &[f64],
    tol: Tolerance,
) -> Result<AxiomReport> {
    let mut mono = Tally::new(Axiom::Monotonicity);
    let mut cons = Tally::new(Axiom::ConstantPreserving);
    let mut subadd = Tally::new(Axiom::SubAdditivity);
    let mut homog = Tally::new(Axiom::PositiveHomogeneity);

    for &c in constants {
        let v = eval.expect(&Expr::Const(c))?;
        cons.record((v - c).abs(), tol.allowed(c));
    }

    for probe in probes {
        let ex = eval.expect(&probe.x)?;
        let ey = eval.expect(&probe.y)?;

        // max(X, Y) >= X >= min(X, Y)
        let upper = eval.expect(&Expr::max(probe.x.clone(), probe.y.clone()))?;
        let lower = eval.expect(&Expr::min(probe.x.clone(), probe.y.clone()))?;
        mono.record(ex - upper, tol.allowed(upper));
        mono.record(lower - ex, tol.allowed(ex));

        let sum = eval.expect(&Expr::add(probe.x.clone(), probe.y.clone()))?;
        subadd.record(sum - ex - ey, tol.allowed(ex.abs() + ey.abs()));

        for lambda in [0.0, 0.5, 2.0] {
            let scaled = eval.expect(&Expr::Mul(
                Box::new(Expr::Const(lambda)),
                Box::new(probe.x.clone()),
            ))?;
            homog.record((scaled - lambda * ex).abs(), tol.allowed(lambda * ex));
        }
    }

    Ok(AxiomReport {
        checks: vec![mono.finish(), cons.finish(), subadd.finish(), homog.finish()],
    })
}
