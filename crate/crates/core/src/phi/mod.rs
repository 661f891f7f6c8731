//! Test-function language.
//!
//! Payoffs are expressions over variables `x1..xn` built from constants,
//! `+ - *`, integer powers, `min`, `max`, `abs` and negation. Every such
//! expression is locally Lipschitz with polynomial growth, so the class is
//! closed under everything the expectation engines need.

mod bound;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

use crate::error::Result;

pub use bound::{growth_bound, GrowthBound, Interval};
pub use parse::MAX_POWER;

/// Expression tree. Variables are zero-based internally and printed
/// one-based (`Var(0)` is `x1`).
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Self {
        Expr::Const(c)
    }

    pub fn var(index: usize) -> Self {
        Expr::Var(index)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Pow(a, k) => a.eval(x).powi(*k as i32),
            Expr::Min(a, b) => a.eval(x).min(b.eval(x)),
            Expr::Max(a, b) => a.eval(x).max(b.eval(x)),
            Expr::Abs(a) => a.eval(x).abs(),
        }
    }

    /// Number of variables needed to evaluate: one past the highest index.
    pub fn arity(&self) -> usize {
        self.variables().iter().next_back().map_or(0, |&i| i + 1)
    }

    pub fn variables(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<usize>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(i) => {
                out.insert(*i);
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Abs(a) => a.collect_vars(out),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Rewrites every variable index through `f`.
    pub fn map_vars(&self, f: &impl Fn(usize) -> usize) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(i) => Expr::Var(f(*i)),
            Expr::Neg(a) => Expr::Neg(Box::new(a.map_vars(f))),
            Expr::Add(a, b) => Expr::Add(Box::new(a.map_vars(f)), Box::new(b.map_vars(f))),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.map_vars(f)), Box::new(b.map_vars(f))),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.map_vars(f)), Box::new(b.map_vars(f))),
            Expr::Pow(a, k) => Expr::Pow(Box::new(a.map_vars(f)), *k),
            Expr::Min(a, b) => Expr::Min(Box::new(a.map_vars(f)), Box::new(b.map_vars(f))),
            Expr::Max(a, b) => Expr::Max(Box::new(a.map_vars(f)), Box::new(b.map_vars(f))),
            Expr::Abs(a) => Expr::Abs(Box::new(a.map_vars(f))),
        }
    }

    /// Replaces variable `i` by `subs[i]` for every variable in the tree.
    pub fn substitute(&self, subs: &[Expr]) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(i) => subs[*i].clone(),
            Expr::Neg(a) => Expr::neg(a.substitute(subs)),
            Expr::Add(a, b) => Expr::add(a.substitute(subs), b.substitute(subs)),
            Expr::Sub(a, b) => Expr::sub(a.substitute(subs), b.substitute(subs)),
            Expr::Mul(a, b) => Expr::mul(a.substitute(subs), b.substitute(subs)),
            Expr::Pow(a, k) => Expr::pow(a.substitute(subs), *k),
            Expr::Min(a, b) => Expr::min(a.substitute(subs), b.substitute(subs)),
            Expr::Max(a, b) => Expr::max(a.substitute(subs), b.substitute(subs)),
            Expr::Abs(a) => Expr::abs(a.substitute(subs)),
        }
    }

    /// Canonical form: negated literals folded into constants. This is the
    /// form the parser produces.
    pub fn canonical(&self) -> Expr {
        match self {
            Expr::Neg(a) => match a.canonical() {
                Expr::Const(c) => Expr::Const(-c),
                other => Expr::Neg(Box::new(other)),
            },
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Add(a, b) => Expr::Add(Box::new(a.canonical()), Box::new(b.canonical())),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.canonical()), Box::new(b.canonical())),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.canonical()), Box::new(b.canonical())),
            Expr::Pow(a, k) => Expr::Pow(Box::new(a.canonical()), *k),
            Expr::Min(a, b) => Expr::Min(Box::new(a.canonical()), Box::new(b.canonical())),
            Expr::Max(a, b) => Expr::Max(Box::new(a.canonical()), Box::new(b.canonical())),
            Expr::Abs(a) => Expr::Abs(Box::new(a.canonical())),
        }
    }

    // Simplifying constructors. They fold constants and drop neutral
    // elements so symbolic assembly does not grow trees without bound.

    #[allow(clippy::should_implement_trait)]
    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x + y),
            (Some(0.0), None) => b,
            (None, Some(0.0)) => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x - y),
            (Some(0.0), None) => Expr::neg(b),
            (None, Some(0.0)) => a,
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x * y),
            (Some(0.0), None) => Expr::Const(0.0),
            (None, Some(0.0)) => Expr::Const(0.0),
            (Some(1.0), None) => b,
            (None, Some(1.0)) => a,
            (Some(-1.0), None) => Expr::neg(b),
            (None, Some(-1.0)) => Expr::neg(a),
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, k: u32) -> Expr {
        match (a.as_const(), k) {
            (Some(x), _) => Expr::Const(x.powi(k as i32)),
            (None, 0) => Expr::Const(1.0),
            (None, 1) => a,
            _ => Expr::Pow(Box::new(a), k),
        }
    }

    pub fn min(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x.min(y)),
            _ => Expr::Min(Box::new(a), Box::new(b)),
        }
    }

    pub fn max(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x.max(y)),
            _ => Expr::Max(Box::new(a), Box::new(b)),
        }
    }

    pub fn abs(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(c.abs()),
            other => Expr::Abs(Box::new(other)),
        }
    }

    pub fn scale(c: f64, a: Expr) -> Expr {
        Expr::mul(Expr::Const(c), a)
    }

    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
        terms
            .into_iter()
            .fold(Expr::Const(0.0), Expr::add)
    }

    /// Syntactic proof that the expression is nonnegative everywhere.
    pub fn is_nonneg(&self) -> bool {
        match self {
            Expr::Const(c) => *c >= 0.0,
            Expr::Var(_) => false,
            Expr::Abs(_) => true,
            Expr::Pow(a, k) => k % 2 == 0 || a.is_nonneg(),
            Expr::Neg(a) => a.is_nonpos(),
            Expr::Add(a, b) => a.is_nonneg() && b.is_nonneg(),
            Expr::Sub(a, b) => a.is_nonneg() && b.is_nonpos(),
            Expr::Mul(a, b) => {
                a == b || (a.is_nonneg() && b.is_nonneg()) || (a.is_nonpos() && b.is_nonpos())
            }
            Expr::Max(a, b) => a.is_nonneg() || b.is_nonneg(),
            Expr::Min(a, b) => a.is_nonneg() && b.is_nonneg(),
        }
    }

    /// Syntactic proof that the expression is nonpositive everywhere.
    pub fn is_nonpos(&self) -> bool {
        match self {
            Expr::Const(c) => *c <= 0.0,
            Expr::Var(_) | Expr::Abs(_) => false,
            Expr::Pow(a, k) => k % 2 == 1 && a.is_nonpos(),
            Expr::Neg(a) => a.is_nonneg(),
            Expr::Add(a, b) => a.is_nonpos() && b.is_nonpos(),
            Expr::Sub(a, b) => a.is_nonpos() && b.is_nonneg(),
            Expr::Mul(a, b) => (a.is_nonneg() && b.is_nonpos()) || (a.is_nonpos() && b.is_nonneg()),
            Expr::Max(a, b) => a.is_nonpos() && b.is_nonpos(),
            Expr::Min(a, b) => a.is_nonpos() || b.is_nonpos(),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Abs(a) => 1 + a.node_count(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => 1 + a.node_count() + b.node_count(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "-({a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Pow(a, k) => write!(f, "({a})^{k}"),
            Expr::Min(a, b) => write!(f, "min({a}, {b})"),
            Expr::Max(a, b) => write!(f, "max({a}, {b})"),
            Expr::Abs(a) => write!(f, "abs({a})"),
        }
    }
}

/// A parsed payoff together with its declared arity.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    expr: Expr,
    arity: usize,
}

impl TestFunction {
    pub fn parse(text: &str) -> Result<Self> {
        let expr = parse::parse_expr(text)?;
        Ok(Self::from_expr(expr))
    }

    pub fn from_expr(expr: Expr) -> Self {
        let arity = expr.arity();
        TestFunction { expr, arity }
    }

    /// Widens the arity, e.g. when a payoff ignores trailing variables.
    pub fn with_arity(mut self, arity: usize) -> Self {
        self.arity = self.arity.max(arity);
        self
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Evaluates at `x`; `x` must have at least `arity` entries.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert!(x.len() >= self.arity);
        self.expr.eval(x)
    }

    pub fn growth_bound(&self, radius: f64) -> GrowthBound {
        growth_bound(&self.expr, self.arity, radius)
    }

    pub fn negated(&self) -> Self {
        TestFunction {
            expr: Expr::neg(self.expr.clone()),
            arity: self.arity,
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

impl std::str::FromStr for TestFunction {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        TestFunction::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: &[f64]) -> f64 {
        TestFunction::parse(s).unwrap().eval(x)
    }

    #[test]
    fn evaluates_examples() {
        assert_eq!(ev("x1^2", &[2.0]), 4.0);
        assert_eq!(ev("x1^2", &[3.0]), 9.0);
        assert_eq!(ev("min(x1,x2)", &[1.0, -1.0]), -1.0);
        assert_eq!(ev("abs(x1)^3", &[-2.0]), 8.0);
        assert_eq!(ev("max(x1,0)", &[-0.5]), 0.0);
        assert_eq!(ev("x1*x2", &[3.0, -2.0]), -6.0);
    }

    #[test]
    fn arity_is_highest_index() {
        assert_eq!(TestFunction::parse("x3 + 1").unwrap().arity(), 3);
        assert_eq!(TestFunction::parse("7").unwrap().arity(), 0);
    }

    // Golden catalog: each entry is checked against a hand-written closure.
    #[test]
    fn golden_catalog() {
        type F = fn(&[f64]) -> f64;
        let catalog: Vec<(&str, F)> = vec![
            ("x1", |x| x[0]),
            ("-x1", |x| -x[0]),
            ("x1^2", |x| x[0] * x[0]),
            ("-(x1^2)", |x| -(x[0] * x[0])),
            ("-x1^2", |x| -(x[0] * x[0])),
            ("x1^3", |x| x[0] * x[0] * x[0]),
            ("x1^4", |x| x[0].powi(4)),
            ("x1^6", |x| x[0].powi(6)),
            ("max(x1,0)", |x| x[0].max(0.0)),
            ("-max(x1,0)", |x| -x[0].max(0.0)),
            ("abs(x1)", |x| x[0].abs()),
            ("min(x1^2,4)", |x| (x[0] * x[0]).min(4.0)),
            ("x1*x2", |x| x[0] * x[1]),
            ("(x1+x2-x3)^2", |x| (x[0] + x[1] - x[2]).powi(2)),
            ("2*x1 - 3*x2 + 0.5", |x| 2.0 * x[0] - 3.0 * x[1] + 0.5),
            ("max(x1-1, 0) - max(x1-2, 0)", |x| (x[0] - 1.0).max(0.0) - (x[0] - 2.0).max(0.0)),
            ("abs(x1 - x2)^3", |x| (x[0] - x[1]).abs().powi(3)),
            ("min(max(x1,-1),1)", |x| x[0].clamp(-1.0, 1.0)),
            ("x1*x1*x2 - x2^2", |x| x[0] * x[0] * x[1] - x[1] * x[1]),
            ("1.5e-1 * (x1 + 2)^2", |x| 0.15 * (x[0] + 2.0).powi(2)),
        ];
        let points = [[0.3, -1.2, 2.0], [-2.5, 0.7, -0.1], [1.0, 1.0, 1.0], [0.0, 0.0, 0.0]];
        for (text, f) in catalog {
            let tf = TestFunction::parse(text).unwrap();
            for p in &points {
                let got = tf.eval(p);
                let want = f(p);
                assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{text} at {p:?}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn simplifying_constructors() {
        assert_eq!(Expr::add(Expr::Const(0.0), Expr::var(1)), Expr::var(1));
        assert_eq!(Expr::mul(Expr::Const(0.0), Expr::var(1)), Expr::Const(0.0));
        assert_eq!(Expr::neg(Expr::neg(Expr::var(0))), Expr::var(0));
        assert_eq!(Expr::pow(Expr::Const(2.0), 3), Expr::Const(8.0));
    }

    #[test]
    fn sign_analysis() {
        let sq = TestFunction::parse("(x1 - x2)^2 + 3*abs(x3)").unwrap();
        assert!(sq.expr().is_nonneg());
        let prod = Expr::mul(Expr::var(0), Expr::var(0));
        assert!(prod.is_nonneg());
        assert!(!TestFunction::parse("x1*x2").unwrap().expr().is_nonneg());
        assert!(TestFunction::parse("-(x1^2) - 1").unwrap().expr().is_nonpos());
    }
}
