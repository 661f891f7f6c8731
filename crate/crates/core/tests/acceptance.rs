//! End-to-end acceptance checks. Each criterion prints one PASS or FAIL
//! line; the process exits nonzero when any of them fails.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use gfield::engine::Engine;
use gfield::field::{
    check_compatibility, check_symmetry, combination_variance_exact, increment_moments, integral_isometry,
    spatial_integral_law, whitenoise_axiom_suite, CellPolicy, FieldTolerances, GridFunction, Lattice,
};
use gfield::geometry::{gram_matrix, rotation, transform_region, HalfOpenBox, Polygon, Region};
use gfield::gheat::{finite_dim_expectation, GridOptions};
use gfield::oracle::{dp_convergence, mc_lower_bound, DpSpec, SigmaPolicy};
use gfield::phi::TestFunction;
use gfield::report::Report;
use gfield::spacetime::{
    conditional_axiom_suite, integral_property_suite, LayeredModel, SimpleAdaptedProcess, SpacetimeOptions,
};
use gfield::sublinear::{ClassicalGaussian, Expectation, GParams};

const CATALOG: [&str; 8] = ["x1^2", "-(x1^2)", "x1^3", "x1^4", "max(x1, 0)", "-max(x1, 0)", "abs(x1)", "min(x1^2, 4)"];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn tf(s: &str) -> TestFunction {
    TestFunction::parse(s).unwrap()
}

fn params(lo: f64, hi: f64) -> GParams {
    GParams::new(lo, hi).unwrap()
}

fn rect(lo: [f64; 2], hi: [f64; 2]) -> Region {
    Region::from_box(HalfOpenBox::new(lo.to_vec(), hi.to_vec()).unwrap())
}

fn interval(lo: f64, hi: f64) -> Region {
    Region::from_box(HalfOpenBox::new(vec![lo], vec![hi]).unwrap())
}

fn failures(r: &Report) -> String {
    r.failures().map(|c| format!("{} ({} vs {})", c.name, c.observed, c.expected)).collect::<Vec<_>>().join("; ")
}

/// Moments of a single region under the PDE engine at h = R/400.
fn moment_identities() -> Outcome {
    let region = [rect([0.0, 0.0], [1.0, 1.5])];
    let lam = 1.5;
    let opts = GridOptions::with_cells(400);
    let mut worst: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    for (lo, hi) in [(1.0, 1.0), (1.0, 4.0), (0.0, 2.0)] {
        let p = params(lo, hi);
        let start = Instant::now();
        let m2 = finite_dim_expectation(&region, &tf("x1^2"), 1.0, p, &opts).unwrap();
        let m4 = finite_dim_expectation(&region, &tf("x1^4"), 1.0, p, &opts).unwrap();
        let m6 = finite_dim_expectation(&region, &tf("x1^6"), 1.0, p, &opts).unwrap();
        slowest = slowest.max(start.elapsed().as_secs_f64());
        let cases = [
            (m2.upper, hi * lam),
            (m2.lower, lo * lam),
            (m4.upper, 3.0 * hi.powi(2) * lam.powi(2)),
            (m6.upper, 15.0 * hi.powi(3) * lam.powi(3)),
        ];
        for (got, want) in cases {
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    outcome(
        worst <= 5e-3 && slowest < 10.0,
        format!("worst relative error {worst:.2e} (limit 5e-3), slowest case {slowest:.2} s"),
    )
}

/// PDE against the DP oracle, plus the DP step-count table.
fn oracle_equivalence() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= (1e-2 * b.abs()).max(5e-3);
    let mut bad = Vec::new();
    let mut checked = 0;
    for (lo, hi) in [(0.5, 1.0), (1.0, 4.0)] {
        let p = params(lo, hi);
        let law = gram_matrix(&[interval(0.0, 1.0)], p).unwrap();
        for s in CATALOG {
            let a = Engine::pde().expect_law(&law, &tf(s), 1.0).unwrap().value;
            let b = Engine::oracle().expect_law(&law, &tf(s), 1.0).unwrap().value;
            checked += 2;
            if !close(a.upper, b.upper) || !close(a.lower, b.lower) {
                bad.push(format!("{s} at ({lo}, {hi})"));
            }
        }
    }
    let p = params(0.5, 1.0);
    let scenes = [
        ([rect([0.0, 0.0], [1.0, 2.0]), rect([0.5, 0.5], [1.5, 1.5])], "x1*x2"),
        ([rect([0.0, 0.0], [1.0, 1.0]), rect([1.0, 0.0], [2.0, 1.0])], "max(x1, x2)"),
        ([rect([0.0, 0.0], [2.0, 1.0]), rect([0.0, 0.0], [1.0, 1.0])], "(x1 - x2)^2 - abs(x2)"),
    ];
    for (regions, s) in &scenes {
        let law = gram_matrix(regions, p).unwrap();
        let a = Engine::pde().expect_law(&law, &tf(s), 1.0).unwrap().value;
        let b = Engine::oracle().expect_law(&law, &tf(s), 1.0).unwrap().value;
        checked += 2;
        if !close(a.upper, b.upper) || !close(a.lower, b.lower) {
            bad.push(format!("2-D {s}"));
        }
    }

    // step-count table on the payoff whose optimal control switches sign
    let table = dp_convergence(&tf("x1^3"), &[1.0], 1.0, &p, &DpSpec::default(), &[50, 100, 200, 400]).unwrap();
    let deltas: Vec<f64> = table.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let monotone = deltas.iter().all(|d| *d >= 0.0) && deltas.windows(2).all(|w| w[1].abs() < w[0].abs());
    let last = deltas.last().unwrap().abs();
    println!("    DP table for x1^3 at (0.5, 1): {table:?}");
    // every catalog payoff settles at (0.5, 1); (1, 4) is printed only
    let mut settled = true;
    for (lo, hi) in [(0.5, 1.0), (1.0, 4.0)] {
        for s in CATALOG {
            let t = dp_convergence(&tf(s), &[1.0], 1.0, &params(lo, hi), &DpSpec::default(), &[50, 100, 200, 400]).unwrap();
            let d: Vec<f64> = t.windows(2).map(|w| w[1].1 - w[0].1).collect();
            if lo == 0.5 {
                settled &= d[2].abs() < 1e-3;
            }
            let shown: Vec<String> = d.iter().map(|x| format!("{x:+.1e}")).collect();
            println!("    info ({lo}, {hi}) {s:>14}: value {:.6} deltas {}", t[3].1, shown.join(" "));
        }
    }
    outcome(
        bad.is_empty() && monotone && last < 1e-3 && settled,
        format!(
            "{checked} values compared, mismatches {bad:?}; x1^3 table monotone {monotone}, last delta {last:.1e}; \
             whole catalog below 1e-3 at N = 400: {settled}"
        ),
    )
}

/// `E[phi(X)]` for `X ~ N(0, s2)` by composite Simpson on `[-14 sd, 14 sd]`
/// with panel edges on the kinks of the catalog payoffs (0 and +-2), so each
/// panel integrates a smooth function.
fn classical_reference(phi: &TestFunction, s2: f64) -> f64 {
    let sd = s2.sqrt();
    let density = |x: f64| (-x * x / (2.0 * s2)).exp() / (2.0 * PI * s2).sqrt();
    let g = |x: f64| phi.eval(&[x]) * density(x);
    let edges = [-14.0 * sd, -2.0, 0.0, 2.0, 14.0 * sd];
    edges
        .windows(2)
        .map(|w| {
            let n = 200_000;
            let h = (w[1] - w[0]) / n as f64;
            let inner: f64 = (1..n).map(|k| if k % 2 == 1 { 4.0 } else { 2.0 } * g(w[0] + k as f64 * h)).sum();
            (g(w[0]) + inner + g(w[1])) * h / 3.0
        })
        .sum()
}

/// Equal bounds collapse to the classical Gaussian.
fn classical_degeneration() -> Outcome {
    let s2 = 1.5;
    let p = GParams::classical(s2).unwrap();
    let law = gram_matrix(&[interval(0.0, 1.0)], p).unwrap();
    // Gauss-Hermite is exact on polynomials; the kinked payoffs use the
    // panel rule above
    let hermite = ClassicalGaussian::new(s2, 1, 20).unwrap();
    let mut worst: f64 = 0.0;
    let mut hermite_gap: f64 = 0.0;
    let mut outside = Vec::new();
    let policy = SigmaPolicy::constant(1, 1, s2).unwrap();
    for (k, s) in CATALOG.iter().enumerate() {
        let want = classical_reference(&tf(s), s2);
        if !s.contains("max") && !s.contains("min") && !s.contains("abs") {
            hermite_gap = hermite_gap.max((hermite.expect(tf(s).expr()).unwrap() - want).abs());
        }
        let v = Engine::pde().expect_law(&law, &tf(s), 1.0).unwrap().value;
        for got in [v.upper, v.lower] {
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }
        let mc = mc_lower_bound(&tf(s), &[1.0], &policy, 1.0, &p, 100_000, 17 + k as u64).unwrap();
        if !mc.contains(want) {
            outside.push(format!("{s}: {} +- {} vs {want}", mc.estimate, mc.half_width));
        }
    }
    outcome(
        worst <= 1e-3 && hermite_gap <= 1e-9 && outside.is_empty(),
        format!(
            "worst relative PDE error {worst:.2e} (limit 1e-3); Gauss-Hermite vs panel rule on polynomials {hermite_gap:.1e}; \
             Monte-Carlo outside 99% CI: {outside:?}"
        ),
    )
}

fn whitenoise_axioms() -> Outcome {
    let p = params(0.5, 1.0);
    let regions = [
        rect([0.0, 0.0], [1.0, 2.0]),
        rect([1.0, 0.0], [2.0, 1.0]),
        rect([0.5, 0.5], [1.5, 1.5]),
        rect([3.0, 3.0], [3.5, 5.0]),
    ];
    let report = whitenoise_axiom_suite(&regions, p, &Engine::pde(), &FieldTolerances::default()).unwrap();
    let identities: Vec<_> =
        report.checks.iter().filter(|c| c.name.contains("additivity") || c.name.contains("modularity")).collect();
    let gram_level = !identities.is_empty()
        && identities
            .iter()
            .all(|c| c.observed == 0.0 && c.note.as_deref() == Some("Gram contraction is exactly zero"));
    // the same identities checked directly on the exact contraction
    let union = Region::union(&[regions[0].clone(), regions[1].clone()]).unwrap();
    let add = gram_matrix(&[regions[0].clone(), regions[1].clone(), union], p).unwrap();
    let meet = regions[0].intersection(&regions[2]).unwrap();
    let join = Region::union(&[regions[0].clone(), regions[2].clone()]).unwrap();
    let modular = gram_matrix(&[join, meet, regions[0].clone(), regions[2].clone()], p).unwrap();
    let zero = |law, a: &[f64]| combination_variance_exact(law, a).is_some_and(|c| num::Zero::is_zero(&c));
    let direct = zero(&add, &[1.0, 1.0, -1.0]) && zero(&modular, &[1.0, 1.0, -1.0, -1.0]);
    let cross = report.checks.iter().filter(|c| c.name.contains("cross")).count();
    outcome(
        report.all_passed() && gram_level && direct,
        format!(
            "{} rows, {cross} cross moments within 5e-3 sqrt(l1 l2), {} identities exactly zero at Gram level; failures: [{}]",
            report.checks.len(),
            identities.len(),
            failures(&report)
        ),
    )
}

fn random_box(rng: &mut ChaCha12Rng) -> HalfOpenBox {
    let lo = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
    let w = [rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)];
    HalfOpenBox::new(lo.to_vec(), vec![lo[0] + w[0], lo[1] + w[1]]).unwrap()
}

fn random_region(rng: &mut ChaCha12Rng) -> Region {
    let n = rng.random_range(1..=3);
    Region::from_boxes((0..n).map(|_| random_box(rng)).collect()).unwrap()
}

fn consistency() -> Outcome {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let mut bad = 0;
    for _ in 0..1000 {
        let p = {
            let a: f64 = rng.random_range(0.0..2.0);
            params(a, a + rng.random_range(0.0..2.0))
        };
        let n = rng.random_range(1..=4);
        let regions: Vec<Region> = (0..n).map(|_| random_region(&mut rng)).collect();
        let extra = random_region(&mut rng);
        let q = DMatrix::from_fn(n, n, |_, _| rng.random_range(-3.0..3.0));
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let ok = check_compatibility(&regions, &extra, &q, p).unwrap() && check_symmetry(&regions, &perm, &q, p).unwrap();
        bad += usize::from(!ok);
    }
    outcome(bad == 0, format!("{bad} of 1000 random instances failed exact comparison"))
}

fn invariance() -> Outcome {
    let poly = |v: &[[f64; 2]]| Region::from_polygon(Polygon::new(v.to_vec()).unwrap());
    let scenes = [
        (poly(&[[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]), poly(&[[0.5, 0.5], [1.5, 0.5], [1.5, 1.5], [0.5, 1.5]])),
        (poly(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]), poly(&[[1.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0]])),
        (poly(&[[0.0, 0.0], [3.0, 0.0], [1.5, 2.0]]), poly(&[[1.0, -1.0], [2.0, -1.0], [2.0, 3.0], [1.0, 3.0]])),
        (poly(&[[0.0, 0.0], [2.0, 1.0], [1.0, 2.0]]), poly(&[[0.0, 0.0], [-1.0, 0.5], [-0.5, -1.0]])),
        (
            poly(&[[1.0, 0.0], [0.5, 0.866], [-0.5, 0.866], [-1.0, 0.0], [-0.5, -0.866], [0.5, -0.866]]),
            poly(&[[0.0, 0.0], [2.0, 0.0], [2.0, 0.5], [0.0, 0.5]]),
        ),
    ];
    let p = params(0.5, 1.0);
    let opts = GridOptions::default();
    let mut gram_gap: f64 = 0.0;
    let mut value_gap: f64 = 0.0;
    for (a, b) in &scenes {
        let base = [a.clone(), b.clone()];
        let before = gram_matrix(&base, p).unwrap();
        let phi = tf("x1*x2 + max(x1, x2)");
        let v0 = finite_dim_expectation(&base, &phi, 1.0, p, &opts).unwrap();
        for theta in [PI / 6.0, PI / 4.0, 1.0] {
            let o = rotation(theta);
            let shift = [0.7, -1.3];
            let moved = [transform_region(a, &shift, &o).unwrap(), transform_region(b, &shift, &o).unwrap()];
            let after = gram_matrix(&moved, p).unwrap();
            gram_gap = gram_gap.max((&after.lambda - &before.lambda).abs().max());
            let v1 = finite_dim_expectation(&moved, &phi, 1.0, p, &opts).unwrap();
            for (x, y) in [(v0.upper, v1.upper), (v0.lower, v1.lower)] {
                value_gap = value_gap.max((x - y).abs() / x.abs().max(1.0));
            }
        }
    }
    outcome(
        gram_gap <= 1e-9 && value_gap <= 1e-2,
        format!("15 rigid motions; Gram gap {gram_gap:.1e} (limit 1e-9), relative value gap {value_gap:.1e} (limit 1e-2)"),
    )
}

fn isometry() -> Outcome {
    let p = params(0.5, 1.5);
    let simple = [
        GridFunction::indicator(&HalfOpenBox::new(vec![0.0, 0.0], vec![1.0, 3.0]).unwrap()).unwrap(),
        GridFunction::new(vec![vec![0.0, 0.5, 2.0], vec![-1.0, 0.0, 0.25]], vec![1.5, -2.0, 0.125, 3.0]).unwrap(),
        GridFunction::new(vec![vec![-1.0, 0.1, 0.3]], vec![-7.0, 0.5]).unwrap(),
    ];
    let exact = simple.iter().all(|f| integral_isometry(f, p).unwrap().exact);
    // sin(pi x) sin(pi y) on the unit square has squared norm 1/4
    let smooth = |x: &[f64]| (PI * x[0]).sin() * (PI * x[1]).sin();
    let gaps: Vec<f64> = [4, 8, 16]
        .iter()
        .map(|&n| {
            let f = GridFunction::from_cell_averages(&[0.0, 0.0], &[1.0, 1.0], &[n, n], 6, smooth).unwrap();
            (integral_isometry(&f, p).unwrap().lhs - p.sigma_hi_sq * 0.25).abs()
        })
        .collect();
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    outcome(
        exact && decreasing,
        format!("simple functions exact: {exact}; smoothed gaps over 4, 8, 16 cells per axis: {gaps:?}"),
    )
}

fn orthonormal_pair() -> Outcome {
    let p = params(0.5, 1.0);
    let f1 = GridFunction::scaled_indicator(&HalfOpenBox::new(vec![0.0, 0.0], vec![0.25, 1.0]).unwrap(), 2.0).unwrap();
    let f2 = GridFunction::new(vec![vec![1.0, 1.5, 2.0], vec![0.0, 1.0]], vec![1.0, -1.0]).unwrap();
    let integrals = spatial_integral_law(&[f1, f2], p).unwrap();
    let squares = gram_matrix(&[rect([0.0, 0.0], [1.0, 1.0]), rect([5.0, 0.0], [6.0, 1.0])], p).unwrap();
    let same_gram = integrals.exact.is_some() && integrals.exact == squares.exact && integrals.lambda == squares.lambda;
    let engine = Engine::Pde(GridOptions::with_cells(80));
    let mut gap: f64 = 0.0;
    let catalog = ["x1^2", "x1*x2", "max(x1, x2)", "abs(x1 - x2)", "x1^2*x2", "min(x1^2, 4) - x2^4"];
    for s in catalog {
        let a = engine.expect_law(&integrals, &tf(s), 1.0).unwrap().value;
        let b = engine.expect_law(&squares, &tf(s), 1.0).unwrap().value;
        gap = gap.max((a.upper - b.upper).abs()).max((a.lower - b.lower).abs());
    }
    outcome(
        same_gram && gap <= 1e-6,
        format!("identical Gram: {same_gram}; largest value gap over {} payoffs {gap:.1e}", catalog.len()),
    )
}

fn spacetime_model() -> LayeredModel {
    LayeredModel::new(vec![0.0, 0.5, 1.0, 1.5], vec![interval(0.0, 1.0), interval(1.0, 3.0)], params(0.5, 1.0)).unwrap()
}

fn spacetime_suite() -> Outcome {
    let model = spacetime_model();
    let rows: Vec<Vec<String>> = (0..3)
        .map(|k| {
            (0..2)
                .map(|j| if k == 0 { "1".into() } else { format!("x{} + 0.5", model.var(k - 1, j) + 1) })
                .collect()
        })
        .collect();
    let f = SimpleAdaptedProcess::parse(&model, &rows).unwrap();
    let report = integral_property_suite(&model, &f, &SpacetimeOptions::default()).unwrap();
    let tol = |key: &str| report.checks.iter().filter(|c| c.name.contains(key)).map(|c| c.tolerance).fold(0.0, f64::max);
    let pinned = tol("zero mean") <= 1e-8 && tol("L2 domination") <= 1e-3 && tol("martingale") <= 1e-3 && tol("tower") <= 1e-3;
    let mut bad = rows.clone();
    bad[1][0] = format!("x{}", model.var(1, 1) + 1);
    let gate = matches!(SimpleAdaptedProcess::parse(&model, &bad), Err(gfield::Error::NotAdapted(_)));
    outcome(
        report.all_passed() && pinned && gate,
        format!(
            "{} rows on 3 layers x 2 cells, tolerances pinned: {pinned}, non-adapted process rejected: {gate}; failures: [{}]",
            report.checks.len(),
            failures(&report)
        ),
    )
}

fn conditional_axioms() -> Outcome {
    let opts = SpacetimeOptions {
        engine: Engine::Pde(GridOptions::with_cells(32)),
        symbolic: true,
    };
    let report = conditional_axiom_suite(&spacetime_model(), 100, 11, &opts).unwrap();
    let within = report.checks.iter().all(|c| c.tolerance <= 1e-3);
    let worst = report.checks.iter().map(|c| c.violation + c.tolerance).fold(f64::MIN, f64::max);
    outcome(
        report.all_passed() && within,
        format!("{} checks over 100 draws, worst deviation {worst:.1e} (limit 1e-3); failures: [{}]", report.checks.len(), failures(&report)),
    )
}

fn continuity() -> Outcome {
    let hi = 1.5;
    let p = params(0.5, hi);
    let lattice = Lattice::new([2.0, 2.0], [8, 8]).unwrap();
    let pairs: Vec<([f64; 2], [f64; 2])> = vec![
        ([0.0, 0.0], [1.0, 1.0]),
        ([0.5, 0.5], [1.0, 1.0]),
        ([0.25, 0.5], [0.5, 1.0]),
        ([1.0, 1.0], [2.0, 2.0]),
        ([0.5, 1.0], [1.5, 1.25]),
        ([0.0, 1.0], [0.75, 1.5]),
        ([1.25, 0.25], [1.5, 2.0]),
        ([0.25, 0.25], [0.5, 0.5]),
        ([1.0, 0.5], [1.75, 0.75]),
        ([0.75, 1.5], [2.0, 2.0]),
    ];
    let est = increment_moments(&lattice, &CellPolicy::Constant(hi), &p, &pairs, 6, 100_000, 23).unwrap();
    let mut outside = Vec::new();
    for ((x, y), e) in pairs.iter().zip(&est) {
        let want = 15.0 * hi.powi(3) * (y[0] * y[1] - x[0] * x[1]).powi(3);
        if !e.contains(want) {
            outside.push(format!("{x:?}->{y:?}: {} +- {} vs {want}", e.estimate, e.half_width));
        }
    }
    outcome(outside.is_empty(), format!("10 nested pairs at 1e5 paths, outside 99% CI: {outside:?}"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("moment identities", moment_identities),
        ("oracle equivalence", oracle_equivalence),
        ("classical degeneration", classical_degeneration),
        ("white-noise axioms", whitenoise_axioms),
        ("consistency", consistency),
        ("rigid-motion invariance", invariance),
        ("integral isometry", isometry),
        ("orthonormal integrands", orthonormal_pair),
        ("space-time integral suite", spacetime_suite),
        ("conditional expectation axioms", conditional_axioms),
        ("continuity diagnostics", continuity),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let mark = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {mark} {name} ({:.1} s): {}", k + 1, start.elapsed().as_secs_f64(), o.detail);
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
