//! Engine selection shared by the field and space-time modules.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::GramLaw;
use crate::gheat::{expect_law, reduce, solve_upper, GridOptions, GridSpec};
use crate::oracle::{dp_expect_law, dp_upper_expectation, DpSpec};
use crate::phi::TestFunction;
use crate::sublinear::SublinearValue;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Pde(GridOptions),
    Oracle(DpSpec),
}

impl Default for Engine {
    fn default() -> Self {
        Engine::Pde(GridOptions::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineValue {
    pub value: SublinearValue,
    pub engine: String,
    pub grid_descriptor: String,
}

impl Engine {
    pub fn pde() -> Self {
        Engine::default()
    }

    pub fn oracle() -> Self {
        Engine::Oracle(DpSpec::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Engine::Pde(_) => "pde",
            Engine::Oracle(_) => "oracle",
        }
    }

    /// Upper and lower expectation of `phi` under `law` at horizon `t`.
    pub fn expect_law(&self, law: &GramLaw, phi: &TestFunction, t: f64) -> Result<EngineValue> {
        match self {
            Engine::Pde(opts) => {
                let (value, gs) = expect_law(law, phi, t, opts)?;
                Ok(EngineValue {
                    value,
                    engine: self.name().into(),
                    grid_descriptor: gs.descriptor(),
                })
            }
            Engine::Oracle(spec) => {
                let value = dp_expect_law(law, phi, t, spec)?;
                Ok(EngineValue {
                    value,
                    engine: self.name().into(),
                    grid_descriptor: spec.descriptor(law.dim().min(3)),
                })
            }
        }
    }

    /// Upper expectation only; half the work of [`Engine::expect_law`].
    pub fn upper(&self, law: &GramLaw, phi: &TestFunction, t: f64) -> Result<f64> {
        let rp = reduce(law, phi, t)?;
        match self {
            Engine::Pde(opts) => {
                let gs = GridSpec::resolve(opts, rp.rank, &rp.params, t)?;
                solve_upper(&rp, &gs)
            }
            Engine::Oracle(spec) => dp_upper_expectation(&rp.phi_reduced, &vec![1.0; rp.rank], t, &law.params, spec),
        }
    }
}
