use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use gfield::engine::Engine;
use gfield::field::{integral_expectation, integral_isometry, sample_paths, FieldLaw, GridFunction, IsometryCheck, PathRow};
use gfield::phi::TestFunction;
use gfield::report::Report;
use gfield::spacetime::{
    bohner_integral, conditional_expectation, expectation, integral_property_suite, ito_integral, m2_norm,
    CylinderFunctional, LayeredModel, SimpleAdaptedProcess, SpacetimeOptions,
};
use gfield::sublinear::SublinearValue;

use crate::config::{EngineName, Format, JobConfig};
use crate::suites::run_suites;
use crate::{Artifact, CliError, ResultRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Expect,
    Oracle,
    Integrate,
    StExpect,
    StIntegral,
    Simulate,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Expect => "expect",
            Command::Oracle => "oracle",
            Command::Integrate => "integrate",
            Command::StExpect => "st-expect",
            Command::StIntegral => "st-integral",
            Command::Simulate => "simulate",
            Command::Check => "check",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Invocation {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub engine: Option<EngineName>,
    /// `check --all`.
    pub all: bool,
    pub timing: bool,
}

struct Ctx<'a> {
    inv: &'a Invocation,
    cfg: JobConfig,
}

impl Ctx<'_> {
    fn row(&self, label: String, value: SublinearValue, engine: &str, grid: String, started: Instant) -> ResultRow {
        let runtime_ms = if self.inv.timing {
            (started.elapsed().as_secs_f64() * 1e6).round() / 1e3
        } else {
            0.0
        };
        ResultRow {
            label,
            value_upper: value.upper,
            value_lower: value.lower,
            engine: engine.into(),
            grid_descriptor: grid,
            runtime_ms,
        }
    }

    /// Path tables default to CSV, everything else to JSON.
    fn format(&self) -> Format {
        self.cfg.output.format.unwrap_or(match self.inv.command {
            Command::Simulate => Format::Csv,
            _ => Format::Json,
        })
    }
}

pub fn run(inv: &Invocation) -> Result<Artifact, CliError> {
    let cfg = match &inv.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            JobConfig::parse(&text)?
        }
        None if inv.command == Command::Check => JobConfig::default(),
        None => return Err(CliError::Schema(format!("{} needs --config", inv.command.name()))),
    };
    if let Some(c) = &cfg.command {
        if c != inv.command.name() {
            return Err(CliError::Schema(format!(
                "config is for command {c:?} but {:?} was invoked",
                inv.command.name()
            )));
        }
    }
    let ctx = Ctx { inv, cfg };
    let format = ctx.format();
    let payload = match inv.command {
        Command::Expect => expect(&ctx, EngineName::Pde)?,
        Command::Oracle => expect(&ctx, EngineName::Oracle)?,
        Command::Integrate => integrate(&ctx)?,
        Command::StExpect => st_expect(&ctx)?,
        Command::StIntegral => st_integral(&ctx)?,
        Command::Simulate => simulate(&ctx)?,
        Command::Check => check(&ctx)?,
    };
    let content = payload.render(format)?;
    let file_name = ctx
        .cfg
        .output
        .file
        .clone()
        .unwrap_or_else(|| format!("{}.{}", inv.command.name(), format.extension()));
    Ok(Artifact { file_name, content })
}

/// What a command produced, before rendering.
enum Payload {
    Rows { command: &'static str, rows: Vec<ResultRow>, extra: serde_json::Value },
    Paths(Vec<PathRow>),
    Document(serde_json::Value),
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string(v).map_err(|e| CliError::Schema(format!("cannot serialize result: {e}")))
}

fn csv_text<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Schema(format!("cannot write csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Schema(format!("cannot write csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::Schema(e.to_string()))
}

fn lines<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&to_json(r)?);
        out.push('\n');
    }
    Ok(out)
}

impl Payload {
    fn render(&self, format: Format) -> Result<String, CliError> {
        match (self, format) {
            (Payload::Rows { command, rows, extra }, Format::Json) => {
                let mut doc = serde_json::json!({ "command": command, "rows": rows });
                if let (Some(obj), serde_json::Value::Object(more)) = (doc.as_object_mut(), extra) {
                    obj.extend(more.clone());
                }
                pretty(&doc)
            }
            (Payload::Rows { rows, .. }, Format::Ldjson) => lines(rows),
            (Payload::Rows { rows, .. }, Format::Csv) => csv_text(rows),
            (Payload::Paths(rows), Format::Csv) => csv_text(rows),
            (Payload::Paths(rows), Format::Ldjson) => lines(rows),
            (Payload::Paths(rows), Format::Json) => pretty(&serde_json::json!({ "command": "simulate", "rows": rows })),
            (Payload::Document(doc), Format::Json) => pretty(doc),
            (Payload::Document(doc), Format::Ldjson) => Ok(format!("{}\n", to_json(doc)?)),
            (Payload::Document(_), Format::Csv) => Err(CliError::Schema("csv output is only available for row results".into())),
        }
    }
}

fn pretty(v: &serde_json::Value) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Schema(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn parse_phi(s: &str) -> Result<TestFunction, CliError> {
    Ok(TestFunction::parse(s)?)
}

fn expect(ctx: &Ctx, fallback: EngineName) -> Result<Payload, CliError> {
    let cfg = &ctx.cfg;
    let p = cfg.params()?;
    let t = cfg.horizon()?;
    let regions = cfg.regions()?.ok_or_else(|| CliError::Schema("missing field `regions`".into()))?;
    let engine = cfg.engine(ctx.inv.engine, fallback);
    let field = FieldLaw::new(regions, p)?;
    let mut rows = Vec::new();
    for s in cfg.phis()? {
        let phi = parse_phi(&s)?;
        if phi.arity() > field.regions.len() {
            return Err(CliError::Schema(format!(
                "payload {s:?} uses {} variables but {} regions were given",
                phi.arity(),
                field.regions.len()
            )));
        }
        let started = Instant::now();
        let v = engine.expect_law(&field.law, &phi, t)?;
        rows.push(ctx.row(s, v.value, &v.engine, v.grid_descriptor, started));
    }
    Ok(Payload::Rows {
        command: ctx.inv.command.name(),
        rows,
        extra: serde_json::json!({}),
    })
}

fn integrate(ctx: &Ctx) -> Result<Payload, CliError> {
    let cfg = &ctx.cfg;
    let p = cfg.params()?;
    let fs: Vec<GridFunction> = cfg
        .f
        .as_ref()
        .ok_or_else(|| CliError::Schema("missing field `f`".into()))?
        .iter()
        .map(|f| f.to_function())
        .collect::<Result<_, _>>()?;
    if fs.is_empty() {
        return Err(CliError::Schema("`f` must list at least one integrand".into()));
    }
    let engine = cfg.engine(ctx.inv.engine, EngineName::Pde);
    let phis = match &cfg.phi {
        Some(_) => cfg.phis()?,
        None => vec!["x1^2".to_string()],
    };
    let mut rows = Vec::new();
    for s in phis {
        let phi = parse_phi(&s)?;
        if phi.arity() > fs.len() {
            return Err(CliError::Schema(format!(
                "payload {s:?} uses {} variables but {} integrands were given",
                phi.arity(),
                fs.len()
            )));
        }
        let started = Instant::now();
        let v = integral_expectation(&fs, &phi, p, &engine)?;
        rows.push(ctx.row(s, v.value, &v.engine, v.grid_descriptor, started));
    }
    let isometry: Vec<IsometryCheck> = fs.iter().map(|f| integral_isometry(f, p)).collect::<Result<_, _>>()?;
    Ok(Payload::Rows {
        command: "integrate",
        rows,
        extra: serde_json::json!({ "isometry": isometry }),
    })
}

fn layered_model(cfg: &JobConfig) -> Result<LayeredModel, CliError> {
    let times = cfg.times.clone().ok_or_else(|| CliError::Schema("missing field `times`".into()))?;
    let cells = cfg.cells()?.ok_or_else(|| CliError::Schema("missing field `cells`".into()))?;
    Ok(LayeredModel::new(times, cells, cfg.params()?)?)
}

fn st_options(ctx: &Ctx) -> SpacetimeOptions {
    SpacetimeOptions {
        engine: ctx.cfg.engine(ctx.inv.engine, EngineName::Pde),
        symbolic: ctx.cfg.symbolic.unwrap_or(true),
    }
}

fn st_descriptor(model: &LayeredModel, opts: &SpacetimeOptions) -> String {
    let cells = match &opts.engine {
        Engine::Pde(o) => o.cells,
        Engine::Oracle(s) => s.cells,
    };
    format!(
        "layers={} cells={} symbolic={} lattice_cells={}",
        model.layers(),
        model.cell_count(),
        opts.symbolic,
        cells.map_or_else(|| "default".to_string(), |c| c.to_string())
    )
}

fn check_arity(model: &LayeredModel, s: &str, f: &CylinderFunctional) -> Result<(), CliError> {
    match f.variables().iter().next_back() {
        Some(&v) if v >= model.dim() => Err(CliError::Schema(format!(
            "payload {s:?} uses x{} but the model has {} increments",
            v + 1,
            model.dim()
        ))),
        _ => Ok(()),
    }
}

fn st_expect(ctx: &Ctx) -> Result<Payload, CliError> {
    let model = layered_model(&ctx.cfg)?;
    let opts = st_options(ctx);
    let mut rows = Vec::new();
    let mut conditionals = Vec::new();
    for s in ctx.cfg.phis()? {
        let f = CylinderFunctional::parse(&s)?;
        check_arity(&model, &s, &f)?;
        let started = Instant::now();
        let v = expectation(&model, &f, &opts)?;
        rows.push(ctx.row(s.clone(), v, opts.engine.name(), st_descriptor(&model, &opts), started));
        if let Some(c) = &ctx.cfg.conditional {
            let psi = conditional_expectation(&model, &f, c.t, &opts)?;
            let mut values = Vec::new();
            for x in &c.points {
                if x.len() != model.dim() {
                    return Err(CliError::Schema(format!(
                        "conditional points need {} coordinates, got {}",
                        model.dim(),
                        x.len()
                    )));
                }
                values.push(psi.eval(x));
            }
            conditionals.push(serde_json::json!({
                "label": s,
                "t": c.t,
                "functional": psi.to_string(),
                "points": c.points,
                "values": values,
            }));
        }
    }
    let extra = if ctx.cfg.conditional.is_some() {
        serde_json::json!({ "conditional": conditionals })
    } else {
        serde_json::json!({})
    };
    Ok(Payload::Rows {
        command: "st-expect",
        rows,
        extra,
    })
}

fn st_integral(ctx: &Ctx) -> Result<Payload, CliError> {
    let model = layered_model(&ctx.cfg)?;
    let opts = st_options(ctx);
    let process = ctx
        .cfg
        .process
        .as_ref()
        .ok_or_else(|| CliError::Schema("missing field `process`".into()))?;
    let f = SimpleAdaptedProcess::parse(&model, &process.coefficients)?;
    let ito = ito_integral(&model, &f);
    let bohner = bohner_integral(&model, &f);
    let descriptor = st_descriptor(&model, &opts);
    let mut rows = Vec::new();
    for (label, g) in [("ito", &ito), ("bohner", &bohner)] {
        let started = Instant::now();
        let v = expectation(&model, g, &opts)?;
        rows.push(ctx.row(label.into(), v, opts.engine.name(), descriptor.clone(), started));
    }
    let norm = m2_norm(&model, &f, &opts)?;
    let report: Report = integral_property_suite(&model, &f, &opts)?;
    Ok(Payload::Rows {
        command: "st-integral",
        rows,
        extra: serde_json::json!({
            "ito_integral": ito.to_string(),
            "bohner_integral": bohner.to_string(),
            "m2_norm": norm,
            "passed": report.all_passed(),
            "report": report,
        }),
    })
}

fn simulate(ctx: &Ctx) -> Result<Payload, CliError> {
    let cfg = &ctx.cfg;
    let p = cfg.params()?;
    let lattice = cfg.lattice.ok_or_else(|| CliError::Schema("missing field `lattice`".into()))?;
    let lattice = gfield::field::Lattice::new(lattice.extent, lattice.counts)?;
    let policy = cfg
        .policy
        .clone()
        .unwrap_or(gfield::field::CellPolicy::Constant(p.sigma_hi_sq));
    let paths = cfg.paths.unwrap_or(1);
    let ensemble = sample_paths(&lattice, &policy, &p, paths, cfg.seed(ctx.inv.seed))?;
    Ok(Payload::Paths(ensemble.rows().collect()))
}

fn check(ctx: &Ctx) -> Result<Payload, CliError> {
    let names: Vec<String> = if ctx.inv.all {
        crate::suites::SUITE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        ctx.cfg
            .suites
            .clone()
            .filter(|v| !v.is_empty())
            .ok_or_else(|| CliError::Schema("check needs --all or a `suites` list".into()))?
    };
    let reports = run_suites(&names, &ctx.cfg, ctx.inv.engine, ctx.inv.seed)?;
    let passed = reports.iter().all(Report::all_passed);
    let summary: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| serde_json::json!({ "suite": r.suite, "passed": r.all_passed(), "checks": r.checks.len() }))
        .collect();
    Ok(Payload::Document(serde_json::json!({
        "command": "check",
        "passed": passed,
        "summary": summary,
        "suites": reports,
    })))
}
