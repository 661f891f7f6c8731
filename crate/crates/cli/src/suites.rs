//! The property suites behind `check`, on fixed default instances unless
//! the config supplies regions, cells or times.

use nalgebra::DMatrix;

use gfield::engine::Engine;
use gfield::field::{check_compatibility, check_symmetry, integral_isometry, whitenoise_axiom_suite, GridFunction};
use gfield::geometry::{gram_matrix, HalfOpenBox, Region};
use gfield::gheat::{GHeatExpectation, GridOptions};
use gfield::phi::TestFunction;
use gfield::report::Report;
use gfield::spacetime::{
    conditional_axiom_suite, integral_property_suite, ordering_witness, temporal_gaussian_witness, LayeredModel,
    SimpleAdaptedProcess, SpacetimeOptions,
};
use gfield::sublinear::{check_sublinear_axioms, AxiomProbe, Tolerance};

use crate::config::{EngineName, JobConfig};
use crate::CliError;

pub const SUITE_NAMES: [&str; 7] = [
    "sublinear-axioms",
    "whitenoise-axioms",
    "consistency",
    "integral-isometry",
    "stochastic-integral",
    "conditional-expectation",
    "spacetime-witnesses",
];

/// Lattice resolution of the space-time suites when the config leaves it
/// unset; the checks there compare functionals on shared lattice nodes.
const SUITE_CELLS: usize = 32;
const DEFAULT_DRAWS: usize = 20;

fn bx(lo: &[f64], hi: &[f64]) -> Region {
    Region::from_box(HalfOpenBox::new(lo.to_vec(), hi.to_vec()).expect("static box"))
}

fn default_regions() -> Vec<Region> {
    vec![bx(&[0.0, 0.0], &[1.0, 2.0]), bx(&[1.0, 0.0], &[2.0, 1.0]), bx(&[0.5, 0.5], &[1.5, 1.5])]
}

fn default_model(cfg: &JobConfig) -> Result<LayeredModel, CliError> {
    let times = cfg.times.clone().unwrap_or_else(|| vec![0.0, 0.5, 1.0, 1.5]);
    let cells = cfg
        .cells()?
        .unwrap_or_else(|| vec![bx(&[0.0], &[1.0]), bx(&[1.0], &[3.0])]);
    Ok(LayeredModel::new(times, cells, cfg.params()?)?)
}

fn spacetime_options(cfg: &JobConfig, flag: Option<EngineName>) -> SpacetimeOptions {
    let mut engine = cfg.engine(flag, EngineName::Pde);
    match &mut engine {
        Engine::Pde(o) => {
            o.cells.get_or_insert(SUITE_CELLS);
        }
        Engine::Oracle(s) => {
            s.cells.get_or_insert(SUITE_CELLS);
        }
    }
    SpacetimeOptions {
        engine,
        symbolic: cfg.symbolic.unwrap_or(true),
    }
}

fn sublinear_axioms(cfg: &JobConfig, regions: &[Region]) -> Result<Report, CliError> {
    let p = cfg.params()?;
    let law = gram_matrix(&regions[..2.min(regions.len())], p)?;
    let eval = GHeatExpectation::new(law, cfg.horizon()?, cfg.grid.clone().unwrap_or_else(|| GridOptions::with_cells(80)));
    let probe = |x: &str, y: &str| -> Result<AxiomProbe, CliError> {
        Ok(AxiomProbe {
            x: TestFunction::parse(x)?.expr().clone(),
            y: TestFunction::parse(y)?.expr().clone(),
        })
    };
    let probes = vec![
        probe("x1^2", "abs(x2)")?,
        probe("x1^3", "-x1")?,
        probe("max(x1, x2)", "x1*x2")?,
        probe("min(x1, 0)", "x2^2 - 1")?,
    ];
    let tol = cfg.tolerances.axioms.unwrap_or(Tolerance::PDE);
    let axioms = check_sublinear_axioms(&eval, &probes, &[-1.0, 0.0, 2.5], tol)?;
    let mut r = Report::new("sublinear-axioms");
    for c in axioms.checks {
        let name = serde_json::to_value(c.axiom)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        r.flag(name, c.passed, format!("worst violation {:e} over {} cases", c.worst_violation, c.cases));
    }
    Ok(r)
}

fn consistency(cfg: &JobConfig, regions: &[Region]) -> Result<Report, CliError> {
    let p = cfg.params()?;
    let mut r = Report::new("consistency");
    let n = regions.len();
    let q = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { -0.5 });
    let extra = bx(&[-1.0, -1.0], &[0.5, 0.5]);
    r.flag(
        "marginal of an extended family",
        check_compatibility(regions, &extra, &q, p)?,
        "law of the first regions inside a larger family equals their own law",
    );
    let perm: Vec<usize> = (0..n).rev().collect();
    r.flag(
        "permutation",
        check_symmetry(regions, &perm, &q, p)?,
        "relabelling regions permutes the law",
    );
    Ok(r)
}

fn isometry(cfg: &JobConfig) -> Result<Report, CliError> {
    let p = cfg.params()?;
    let mut r = Report::new("integral-isometry");
    let fs = [
        ("indicator", GridFunction::indicator(&HalfOpenBox::new(vec![0.0, 0.0], vec![1.0, 2.0])?)?),
        (
            "signed table",
            GridFunction::new(vec![vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 3.0]], vec![1.0, -2.0, 0.5, 3.0])?,
        ),
        ("line steps", GridFunction::new(vec![vec![0.0, 0.25, 1.0, 2.0]], vec![2.0, -1.0, 0.75])?),
    ];
    for (name, f) in fs {
        let c = integral_isometry(&f, p)?;
        r.approx(name, c.lhs, c.rhs, 1e-12 * c.rhs.abs().max(1.0));
        r.flag(format!("{name} (exact)"), c.exact, "equality in rational arithmetic");
    }
    Ok(r)
}

fn witnesses(model: &LayeredModel, opts: &SpacetimeOptions) -> Result<Report, CliError> {
    let mut r = Report::new("spacetime-witnesses");
    let temporal = temporal_gaussian_witness(model, opts)?;
    r.flag(
        "not jointly G-normal in time",
        temporal.gap > 1e-3,
        format!("{}: layered {} vs joint {}", temporal.payoff, temporal.layered, temporal.reference),
    );
    let order = ordering_witness(model, opts)?;
    r.flag(
        "layer order matters",
        order.gap > 1e-3,
        format!("{}: back to front {} vs front to back {}", order.payoff, order.layered, order.reference),
    );
    Ok(r)
}

pub fn run_suites(
    names: &[String],
    cfg: &JobConfig,
    engine_flag: Option<EngineName>,
    seed_flag: Option<u64>,
) -> Result<Vec<Report>, CliError> {
    if let Some(bad) = names.iter().find(|n| !SUITE_NAMES.contains(&n.as_str())) {
        return Err(CliError::Schema(format!(
            "unknown suite {bad:?}; known suites: {}",
            SUITE_NAMES.join(", ")
        )));
    }
    let regions = cfg.regions()?.unwrap_or_else(default_regions);
    let seed = cfg.seed(seed_flag);
    let mut out = Vec::new();
    for name in names {
        let report = match name.as_str() {
            "sublinear-axioms" => sublinear_axioms(cfg, &regions)?,
            "whitenoise-axioms" => {
                let engine = cfg.engine(engine_flag, EngineName::Pde);
                whitenoise_axiom_suite(&regions, cfg.params()?, &engine, &cfg.tolerances.field)?
            }
            "consistency" => consistency(cfg, &regions)?,
            "integral-isometry" => isometry(cfg)?,
            "stochastic-integral" => {
                let model = default_model(cfg)?;
                let f = match &cfg.process {
                    Some(p) => SimpleAdaptedProcess::parse(&model, &p.coefficients)?,
                    None => past_increment_process(&model)?,
                };
                integral_property_suite(&model, &f, &spacetime_options(cfg, engine_flag))?
            }
            "conditional-expectation" => {
                let model = default_model(cfg)?;
                let draws = cfg.draws.unwrap_or(DEFAULT_DRAWS);
                conditional_axiom_suite(&model, draws, seed, &spacetime_options(cfg, engine_flag))?
            }
            _ => witnesses(&default_model(cfg)?, &spacetime_options(cfg, engine_flag))?,
        };
        out.push(report);
    }
    Ok(out)
}

/// Coefficients built from earlier increments of the same cell.
fn past_increment_process(model: &LayeredModel) -> Result<SimpleAdaptedProcess, CliError> {
    let rows: Vec<Vec<String>> = (0..model.layers())
        .map(|k| {
            (0..model.cell_count())
                .map(|j| {
                    if k == 0 {
                        "1".to_string()
                    } else {
                        format!("x{} + 0.5", model.var(k - 1, j) + 1)
                    }
                })
                .collect()
        })
        .collect();
    Ok(SimpleAdaptedProcess::parse(model, &rows)?)
}
