//! JSON job configuration. Every command reads the same schema and uses
//! the fields it needs; unknown fields are rejected.

use serde::{Deserialize, Serialize};

use gfield::engine::Engine;
use gfield::field::{CellPolicy, FieldTolerances, GridFunction, Lattice};
use gfield::geometry::{HalfOpenBox, Region, RegionLiteral};
use gfield::gheat::GridOptions;
use gfield::oracle::DpSpec;
use gfield::sublinear::{GParams, Tolerance};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EngineName {
    Pde,
    Oracle,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Ldjson,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Ldjson => "ldjson",
            Format::Csv => "csv",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub format: Option<Format>,
    /// File name inside the output directory.
    pub file: Option<String>,
}

/// One payload or several.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PhiList {
    One(String),
    Many(Vec<String>),
}

impl PhiList {
    pub fn items(&self) -> Vec<String> {
        match self {
            PhiList::One(s) => vec![s.clone()],
            PhiList::Many(v) => v.clone(),
        }
    }
}

/// A piecewise-constant integrand: either a rectilinear table or the
/// indicator of a box.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum FunctionLiteral {
    Grid { breaks: Vec<Vec<f64>>, values: Vec<f64> },
    Indicator(RegionLiteral),
}

impl FunctionLiteral {
    pub fn to_function(&self) -> Result<GridFunction, CliError> {
        match self {
            FunctionLiteral::Grid { breaks, values } => Ok(GridFunction::new(breaks.clone(), values.clone())?),
            FunctionLiteral::Indicator(RegionLiteral::Box { lo, hi }) => {
                Ok(GridFunction::indicator(&HalfOpenBox::new(lo.clone(), hi.clone())?)?)
            }
            FunctionLiteral::Indicator(_) => Err(CliError::Schema("indicator integrands must be boxes".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessLiteral {
    /// `coefficients[k][j]` multiplies the increment of layer `k + 1` over
    /// cell `j + 1`.
    pub coefficients: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionalLiteral {
    pub t: f64,
    /// Full increment vectors at which the conditional expectation is
    /// reported.
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub field: FieldTolerances,
    pub axioms: Option<Tolerance>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobConfig {
    /// Optional; must match the subcommand when present.
    pub command: Option<String>,
    pub params: Option<GParams>,
    /// Horizon of spatial laws.
    pub t: Option<f64>,
    pub regions: Option<Vec<RegionLiteral>>,
    pub phi: Option<PhiList>,
    pub engine: Option<EngineName>,
    pub grid: Option<GridOptions>,
    pub dp: Option<DpSpec>,
    pub seed: Option<u64>,
    pub output: OutputSpec,
    pub f: Option<Vec<FunctionLiteral>>,
    pub times: Option<Vec<f64>>,
    pub cells: Option<Vec<RegionLiteral>>,
    pub process: Option<ProcessLiteral>,
    pub symbolic: Option<bool>,
    pub conditional: Option<ConditionalLiteral>,
    pub lattice: Option<Lattice>,
    pub policy: Option<CellPolicy>,
    pub paths: Option<usize>,
    pub suites: Option<Vec<String>>,
    pub draws: Option<usize>,
    pub tolerances: Tolerances,
}

pub const DEFAULT_SEED: u64 = 20240611;

impl JobConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| {
            CliError::Schema(format!("config line {} column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn params(&self) -> Result<GParams, CliError> {
        let p = self.params.unwrap_or(GParams {
            sigma_lo_sq: 0.5,
            sigma_hi_sq: 1.0,
        });
        p.validate()?;
        Ok(p)
    }

    pub fn horizon(&self) -> Result<f64, CliError> {
        match self.t {
            None => Ok(1.0),
            Some(t) if t >= 0.0 && t.is_finite() => Ok(t),
            Some(t) => Err(CliError::Schema(format!("t must be finite and nonnegative, got {t}"))),
        }
    }

    pub fn engine(&self, flag: Option<EngineName>, fallback: EngineName) -> Engine {
        match flag.or(self.engine).unwrap_or(fallback) {
            EngineName::Pde => Engine::Pde(self.grid.clone().unwrap_or_default()),
            EngineName::Oracle => Engine::Oracle(self.dp.clone().unwrap_or_default()),
        }
    }

    pub fn phis(&self) -> Result<Vec<String>, CliError> {
        self.phi
            .as_ref()
            .map(PhiList::items)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| CliError::Schema("missing field `phi`".into()))
    }

    pub fn regions(&self) -> Result<Option<Vec<Region>>, CliError> {
        self.regions.as_ref().map(|list| to_regions(list)).transpose()
    }

    pub fn cells(&self) -> Result<Option<Vec<Region>>, CliError> {
        self.cells.as_ref().map(|list| to_regions(list)).transpose()
    }

    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(DEFAULT_SEED)
    }
}

fn to_regions(list: &[RegionLiteral]) -> Result<Vec<Region>, CliError> {
    list.iter()
        .map(|r| r.to_region().map_err(CliError::from))
        .collect()
}
