//! The spatial G-white noise: laws of finite families, the defining
//! identities, Kolmogorov consistency of the law family, stochastic
//! integrals of `L^2` functions and path diagnostics.

mod gridfn;
pub mod sampling;

pub use gridfn::GridFunction;
pub use sampling::{
    holder_exponent, increment_measure, increment_moments, sample_paths, CellPolicy, HolderEstimate, Lattice,
    LatticeField, PathEnsemble, PathRow,
};

use nalgebra::{DMatrix, DVector};
use num::{BigRational, Zero};
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, EngineValue};
use crate::error::{Error, Result};
use crate::geometry::{gram_matrix, intersect_measure_exact, GramLaw, Region};
use crate::phi::TestFunction;
use crate::report::Report;
use crate::sublinear::{GParams, Tolerance};

/// Regions together with their joint law at unit horizon.
#[derive(Clone, Debug)]
pub struct FieldLaw {
    pub regions: Vec<Region>,
    pub law: GramLaw,
}

impl FieldLaw {
    pub fn new(regions: Vec<Region>, p: GParams) -> Result<Self> {
        let law = gram_matrix(&regions, p)?;
        Ok(FieldLaw { regions, law })
    }

    pub fn expect(&self, phi: &TestFunction, engine: &Engine) -> Result<EngineValue> {
        engine.expect_law(&self.law, phi, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldTolerances {
    /// Second moments through an engine.
    pub moment: Tolerance,
    /// Signed cross moments must stay below `cross * sqrt(lambda_1 lambda_2)`.
    pub cross: f64,
}

impl Default for FieldTolerances {
    fn default() -> Self {
        FieldTolerances {
            moment: Tolerance::PDE,
            cross: 5e-3,
        }
    }
}

/// `E[(sum_i a_i W_{A_i})^2] = 2 G(a^T Lambda a)` for a G-normal vector;
/// returned as an exact rational when `a^T Lambda a` is.
fn quadratic_form_exact(law: &GramLaw, a: &[f64]) -> Option<BigRational> {
    law.exact.as_ref()?;
    let q = DMatrix::from_fn(a.len(), a.len(), |i, j| a[i] * a[j]);
    Some(law.contract_exact(&q))
}

/// Checks `E[(sum_i a_i W_i)^2] = 0` for a vanishing linear combination.
/// When the Gram contraction is exactly zero the value is `2 G(0) = 0`
/// and no engine runs.
fn vanishing_combination(
    report: &mut Report,
    name: &str,
    law: &GramLaw,
    a: &[f64],
    engine: &Engine,
    tol: &FieldTolerances,
) -> Result<()> {
    if let Some(c) = quadratic_form_exact(law, a) {
        if c.is_zero() {
            let value = law.params.g_exact(&c) * BigRational::from_integer(2.into());
            report
                .exact(format!("{name} upper"), if value.is_zero() { 0.0 } else { f64::NAN }, 0.0)
                .note = Some("Gram contraction is exactly zero".into());
            report.exact(format!("{name} lower"), 0.0, 0.0).note = Some("Gram contraction is exactly zero".into());
            return Ok(());
        }
    }
    let terms: Vec<String> = a
        .iter()
        .enumerate()
        .map(|(i, c)| format!("({c}) * x{}", i + 1))
        .collect();
    let phi = TestFunction::parse(&format!("({})^2", terms.join(" + ")))?;
    let v = engine.expect_law(law, &phi, 1.0)?.value;
    let scale = law.trace();
    report.approx(format!("{name} upper"), v.upper, 0.0, tol.moment.allowed(scale));
    report.approx(format!("{name} lower"), v.lower, 0.0, tol.moment.allowed(scale));
    Ok(())
}

/// Second moments of every region, signed cross moments and additivity of
/// disjoint pairs, and the modularity identity of overlapping box pairs.
pub fn whitenoise_axiom_suite(regions: &[Region], p: GParams, engine: &Engine, tol: &FieldTolerances) -> Result<Report> {
    let mut report = Report::new("whitenoise-axioms");
    let law = gram_matrix(regions, p)?;
    let square = TestFunction::parse("x1^2")?;
    for i in 0..regions.len() {
        let lam = law.lambda[(i, i)];
        let v = engine.expect_law(&law.select(&[i]), &square, 1.0)?.value;
        let up = p.sigma_hi_sq * lam;
        let lo = p.sigma_lo_sq * lam;
        report.approx(format!("A{} second moment upper", i + 1), v.upper, up, tol.moment.allowed(up));
        report.approx(format!("A{} second moment lower", i + 1), v.lower, lo, tol.moment.allowed(lo));
    }
    let cross = TestFunction::parse("x1*x2")?;
    for i in 0..regions.len() {
        for j in i + 1..regions.len() {
            let (a, b) = (&regions[i], &regions[j]);
            let tag = format!("A{}/A{}", i + 1, j + 1);
            let disjoint = match intersect_measure_exact(a, b)? {
                Some(m) => m.is_zero(),
                None => law.lambda[(i, j)] <= 1e-12 * law.lambda[(i, i)].max(law.lambda[(j, j)]).max(1.0),
            };
            if disjoint {
                let pair = law.select(&[i, j]);
                let v = engine.expect_law(&pair, &cross, 1.0)?.value;
                let bound = tol.cross * (law.lambda[(i, i)] * law.lambda[(j, j)]).sqrt();
                report.at_most(format!("{tag} cross moment upper"), v.upper.abs(), bound, 0.0);
                report.at_most(format!("{tag} cross moment lower"), v.lower.abs(), bound, 0.0);
                let union = Region::union(&[a.clone(), b.clone()])?;
                let triple = gram_matrix(&[a.clone(), b.clone(), union], p)?;
                vanishing_combination(&mut report, &format!("{tag} additivity"), &triple, &[1.0, 1.0, -1.0], engine, tol)?;
            } else if matches!((a, b), (Region::Boxes { .. }, Region::Boxes { .. })) {
                let union = Region::union(&[a.clone(), b.clone()])?;
                let meet = a.intersection(b)?;
                let quad = gram_matrix(&[union, meet, a.clone(), b.clone()], p)?;
                vanishing_combination(
                    &mut report,
                    &format!("{tag} modularity"),
                    &quad,
                    &[1.0, 1.0, -1.0, -1.0],
                    engine,
                    tol,
                )?;
            }
        }
    }
    Ok(report)
}

fn exact_gram(regions: &[Region], p: GParams) -> Result<GramLaw> {
    let mut law = gram_matrix(regions, p)?;
    if law.exact.is_none() {
        let n = law.dim();
        law.exact = Some(
            (0..n * n)
                .map(|k| BigRational::from_float(law.lambda[(k / n, k % n)]).expect("finite"))
                .collect(),
        );
    }
    Ok(law)
}

fn check_square(q: &DMatrix<f64>, n: usize) -> Result<()> {
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::InvalidInput(format!("Q must be {n} x {n}, got {} x {}", q.nrows(), q.ncols())));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Q entry".into()));
    }
    Ok(())
}

/// `G` of the law of `regions + [extra]` at the zero-padded `Q` equals `G`
/// of the law of `regions` at `Q`, in exact arithmetic.
pub fn check_compatibility(regions: &[Region], extra: &Region, q: &DMatrix<f64>, p: GParams) -> Result<bool> {
    let n = regions.len();
    check_square(q, n)?;
    let small = exact_gram(regions, p)?;
    let mut all = regions.to_vec();
    all.push(extra.clone());
    let big = exact_gram(&all, p)?;
    let mut padded = DMatrix::zeros(n + 1, n + 1);
    padded.view_mut((0, 0), (n, n)).copy_from(q);
    Ok(big.generating_exact(&padded) == small.generating_exact(q))
}

/// `G` of the law of the permuted family at `Q` equals `G` of the original
/// law at `pi^{-1}(Q)`, in exact arithmetic. `perm[i]` is the original index
/// placed at position `i`.
pub fn check_symmetry(regions: &[Region], perm: &[usize], q: &DMatrix<f64>, p: GParams) -> Result<bool> {
    let n = regions.len();
    check_square(q, n)?;
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&k| k >= n || std::mem::replace(&mut seen[k], true)) {
        return Err(Error::InvalidInput("perm is not a permutation".into()));
    }
    let permuted: Vec<Region> = perm.iter().map(|&k| regions[k].clone()).collect();
    let lhs = exact_gram(&permuted, p)?.generating_exact(q);
    // pi^{-1}(Q): entry (pi(i), pi(j)) carries q_ij
    let mut moved = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            moved[(perm[i], perm[j])] = q[(i, j)];
        }
    }
    let rhs = exact_gram(regions, p)?.generating_exact(&moved);
    Ok(lhs == rhs)
}

/// Law of `(int f_1 dW, ..., int f_k dW)`: Gram matrix of `L^2` inner
/// products, with exact entries.
pub fn spatial_integral_law(fs: &[GridFunction], p: GParams) -> Result<GramLaw> {
    if fs.is_empty() {
        return Err(Error::InvalidInput("at least one integrand is required".into()));
    }
    let n = fs.len();
    let mut exact = vec![BigRational::zero(); n * n];
    for i in 0..n {
        for j in i..n {
            let v = fs[i].inner_exact(&fs[j])?;
            exact[i * n + j] = v.clone();
            exact[j * n + i] = v;
        }
    }
    let lambda = DMatrix::from_fn(n, n, |i, j| num::ToPrimitive::to_f64(&exact[i * n + j]).unwrap_or(f64::NAN));
    let mut law = GramLaw::from_matrix(lambda, p)?;
    law.labels = (1..=n).map(|i| format!("f{i}")).collect();
    law.exact = Some(exact);
    Ok(law)
}

/// Contraction `a^T Lambda a`: the variance parameter of `sum_i a_i X_i`.
pub fn combination_variance_exact(law: &GramLaw, a: &[f64]) -> Option<BigRational> {
    quadratic_form_exact(law, a)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsometryCheck {
    /// `E[|int f dW|^2] = 2 G(||f||^2)` from the law.
    pub lhs: f64,
    /// `sigma_hi_sq ||f||^2`.
    pub rhs: f64,
    /// Equality in exact arithmetic.
    pub exact: bool,
}

pub fn integral_isometry(f: &GridFunction, p: GParams) -> Result<IsometryCheck> {
    let law = spatial_integral_law(std::slice::from_ref(f), p)?;
    let norm = f.norm_sq_exact();
    let two = BigRational::from_integer(2.into());
    let lhs_exact = law.generating_exact(&DMatrix::from_element(1, 1, 1.0)) * two;
    let rhs_exact = BigRational::from_float(p.sigma_hi_sq).expect("finite") * &norm;
    let lhs = 2.0 * law.generating(&DMatrix::from_element(1, 1, 1.0));
    let rhs = p.sigma_hi_sq * num::ToPrimitive::to_f64(&norm).unwrap_or(f64::NAN);
    Ok(IsometryCheck {
        lhs,
        rhs,
        exact: lhs_exact == rhs_exact,
    })
}

/// Upper and lower `E[phi(int f_1 dW, ..., int f_k dW)]`.
pub fn integral_expectation(fs: &[GridFunction], phi: &TestFunction, p: GParams, engine: &Engine) -> Result<EngineValue> {
    let law = spatial_integral_law(fs, p)?;
    engine.expect_law(&law, phi, 1.0)
}

/// `a^T Lambda a` of a law, in floating point.
pub fn combination_variance(law: &GramLaw, a: &[f64]) -> f64 {
    let v = DVector::from_column_slice(a);
    (v.transpose() * &law.lambda * &v)[(0, 0)]
}
