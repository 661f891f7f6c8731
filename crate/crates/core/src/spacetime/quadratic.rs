//! Splitting an expression into a polynomial of degree at most two in a
//! set of active variables, with coefficients that are arbitrary
//! expressions in the remaining variables.

use std::collections::{BTreeMap, BTreeSet};

use crate::phi::Expr;

#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    pub constant: Expr,
    pub linear: BTreeMap<usize, Expr>,
    /// Keyed by `(j, l)` with `j <= l`.
    pub quad: BTreeMap<(usize, usize), Expr>,
}

fn merge<K: Ord + Copy>(mut a: BTreeMap<K, Expr>, b: BTreeMap<K, Expr>, sign: f64) -> BTreeMap<K, Expr> {
    for (k, v) in b {
        let v = if sign < 0.0 { Expr::neg(v) } else { v };
        let entry = match a.remove(&k) {
            Some(old) => Expr::add(old, v),
            None => v,
        };
        a.insert(k, entry);
    }
    a
}

impl Quadratic {
    fn constant(e: Expr) -> Self {
        Quadratic {
            constant: e,
            linear: BTreeMap::new(),
            quad: BTreeMap::new(),
        }
    }

    pub fn degree(&self) -> usize {
        if !self.quad.is_empty() {
            2
        } else if !self.linear.is_empty() {
            1
        } else {
            0
        }
    }

    fn combine(self, other: Quadratic, sign: f64) -> Quadratic {
        let constant = if sign < 0.0 {
            Expr::sub(self.constant, other.constant)
        } else {
            Expr::add(self.constant, other.constant)
        };
        Quadratic {
            constant,
            linear: merge(self.linear, other.linear, sign),
            quad: merge(self.quad, other.quad, sign),
        }
    }

    fn negate(self) -> Quadratic {
        Quadratic {
            constant: Expr::neg(self.constant),
            linear: self.linear.into_iter().map(|(k, v)| (k, Expr::neg(v))).collect(),
            quad: self.quad.into_iter().map(|(k, v)| (k, Expr::neg(v))).collect(),
        }
    }

    fn scale_by(&self, c: &Expr) -> Quadratic {
        Quadratic {
            constant: Expr::mul(c.clone(), self.constant.clone()),
            linear: self.linear.iter().map(|(k, v)| (*k, Expr::mul(c.clone(), v.clone()))).collect(),
            quad: self.quad.iter().map(|(k, v)| (*k, Expr::mul(c.clone(), v.clone()))).collect(),
        }
    }

    fn times(&self, other: &Quadratic) -> Option<Quadratic> {
        if self.degree() + other.degree() > 2 {
            return None;
        }
        if self.degree() == 0 {
            return Some(other.scale_by(&self.constant));
        }
        if other.degree() == 0 {
            return Some(self.scale_by(&other.constant));
        }
        // both linear
        let mut out = self.scale_by(&other.constant).combine(
            Quadratic {
                constant: Expr::Const(0.0),
                linear: other.linear.iter().map(|(k, v)| (*k, Expr::mul(self.constant.clone(), v.clone()))).collect(),
                quad: BTreeMap::new(),
            },
            1.0,
        );
        out.constant = Expr::mul(self.constant.clone(), other.constant.clone());
        for (&j, a) in &self.linear {
            for (&l, b) in &other.linear {
                let key = (j.min(l), j.max(l));
                let term = Expr::mul(a.clone(), b.clone());
                let entry = match out.quad.remove(&key) {
                    Some(old) => Expr::add(old, term),
                    None => term,
                };
                out.quad.insert(key, entry);
            }
        }
        Some(out)
    }
}

/// `None` when the expression is not a polynomial of degree at most two
/// in `active`.
pub fn decompose(e: &Expr, active: &BTreeSet<usize>) -> Option<Quadratic> {
    if e.variables().is_disjoint(active) {
        return Some(Quadratic::constant(e.clone()));
    }
    match e {
        Expr::Const(_) => unreachable!("constants have no variables"),
        Expr::Var(i) => Some(Quadratic {
            constant: Expr::Const(0.0),
            linear: BTreeMap::from([(*i, Expr::Const(1.0))]),
            quad: BTreeMap::new(),
        }),
        Expr::Neg(a) => decompose(a, active).map(Quadratic::negate),
        Expr::Add(a, b) => Some(decompose(a, active)?.combine(decompose(b, active)?, 1.0)),
        Expr::Sub(a, b) => Some(decompose(a, active)?.combine(decompose(b, active)?, -1.0)),
        Expr::Mul(a, b) => decompose(a, active)?.times(&decompose(b, active)?),
        Expr::Pow(a, k) => {
            let base = decompose(a, active)?;
            match k {
                0 => Some(Quadratic::constant(Expr::Const(1.0))),
                1 => Some(base),
                2 => base.times(&base),
                _ => None,
            }
        }
        Expr::Min(..) | Expr::Max(..) | Expr::Abs(_) => None,
    }
}
