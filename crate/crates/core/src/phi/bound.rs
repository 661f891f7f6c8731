//! Interval bounds on payoff size and slope over a centred box.

use super::Expr;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn hull(&self, o: &Interval) -> Interval {
        Interval::new(self.lo.min(o.lo), self.hi.max(o.hi))
    }

    pub fn add(&self, o: &Interval) -> Interval {
        Interval::new(self.lo + o.lo, self.hi + o.hi)
    }

    pub fn sub(&self, o: &Interval) -> Interval {
        Interval::new(self.lo - o.hi, self.hi - o.lo)
    }

    pub fn neg(&self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }

    pub fn mul(&self, o: &Interval) -> Interval {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        Interval::new(
            c.iter().copied().fold(f64::INFINITY, f64::min),
            c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    }

    pub fn powi(&self, k: u32) -> Interval {
        match k {
            0 => Interval::point(1.0),
            _ if k % 2 == 1 => Interval::new(self.lo.powi(k as i32), self.hi.powi(k as i32)),
            _ => {
                let a = self.lo.abs().powi(k as i32);
                let b = self.hi.abs().powi(k as i32);
                let lo = if self.lo <= 0.0 && self.hi >= 0.0 { 0.0 } else { a.min(b) };
                Interval::new(lo, a.max(b))
            }
        }
    }

    pub fn abs(&self) -> Interval {
        if self.lo >= 0.0 {
            *self
        } else if self.hi <= 0.0 {
            self.neg()
        } else {
            Interval::new(0.0, self.mag())
        }
    }

    pub fn min(&self, o: &Interval) -> Interval {
        Interval::new(self.lo.min(o.lo), self.hi.min(o.hi))
    }

    pub fn max(&self, o: &Interval) -> Interval {
        Interval::new(self.lo.max(o.lo), self.hi.max(o.hi))
    }
}

/// Conservative bounds of a payoff over the cube `[-radius, radius]^n`,
/// which contains the Euclidean ball of the same radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthBound {
    /// Euclidean Lipschitz constant.
    pub lipschitz: f64,
    /// Bound on `|phi|`.
    pub sup: f64,
}

struct Dual {
    value: Interval,
    grad: Vec<Interval>,
}

pub fn growth_bound(expr: &Expr, arity: usize, radius: f64) -> GrowthBound {
    let n = arity.max(expr.arity());
    let d = dual(expr, n, radius.abs());
    let lipschitz = d.grad.iter().map(|g| g.mag().powi(2)).sum::<f64>().sqrt();
    GrowthBound {
        lipschitz,
        sup: d.value.mag(),
    }
}

fn dual(e: &Expr, n: usize, r: f64) -> Dual {
    let zero = || vec![Interval::point(0.0); n];
    match e {
        Expr::Const(c) => Dual {
            value: Interval::point(*c),
            grad: zero(),
        },
        Expr::Var(i) => {
            let mut grad = zero();
            grad[*i] = Interval::point(1.0);
            Dual {
                value: Interval::new(-r, r),
                grad,
            }
        }
        Expr::Neg(a) => {
            let a = dual(a, n, r);
            Dual {
                value: a.value.neg(),
                grad: a.grad.iter().map(Interval::neg).collect(),
            }
        }
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            let (a, b) = (dual(a, n, r), dual(b, n, r));
            let sub = matches!(e, Expr::Sub(..));
            let combine = |x: &Interval, y: &Interval| if sub { x.sub(y) } else { x.add(y) };
            Dual {
                value: combine(&a.value, &b.value),
                grad: a.grad.iter().zip(&b.grad).map(|(x, y)| combine(x, y)).collect(),
            }
        }
        Expr::Mul(a, b) => {
            let (a, b) = (dual(a, n, r), dual(b, n, r));
            Dual {
                value: a.value.mul(&b.value),
                grad: a
                    .grad
                    .iter()
                    .zip(&b.grad)
                    .map(|(da, db)| da.mul(&b.value).add(&a.value.mul(db)))
                    .collect(),
            }
        }
        Expr::Pow(a, k) => {
            let a = dual(a, n, r);
            if *k == 0 {
                return Dual {
                    value: Interval::point(1.0),
                    grad: zero(),
                };
            }
            let outer = a.value.powi(k - 1).mul(&Interval::point(*k as f64));
            Dual {
                value: a.value.powi(*k),
                grad: a.grad.iter().map(|g| outer.mul(g)).collect(),
            }
        }
        Expr::Min(a, b) | Expr::Max(a, b) => {
            let (a, b) = (dual(a, n, r), dual(b, n, r));
            let value = if matches!(e, Expr::Min(..)) {
                a.value.min(&b.value)
            } else {
                a.value.max(&b.value)
            };
            Dual {
                value,
                grad: a.grad.iter().zip(&b.grad).map(|(x, y)| x.hull(y)).collect(),
            }
        }
        Expr::Abs(a) => {
            let a = dual(a, n, r);
            Dual {
                value: a.value.abs(),
                grad: a.grad.iter().map(|g| g.hull(&g.neg())).collect(),
            }
        }
    }
}
