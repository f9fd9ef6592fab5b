//! JSON run configuration: grid, problem parameters, weight tables, model
//! selection, and solver options. Unknown keys are rejected for typo safety.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::kirchhoff::{KirchhoffModel, ProblemParams};
use crate::solver::SolveOptions;
use crate::thresholds;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub length: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
}

/// A weight is a constant, an explicit nodal table, or a piecewise-constant
/// table of (x, value) break points (value holds from x to the next break).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum WeightSpec {
    Constant(f64),
    Nodes(Vec<f64>),
    Piecewise(Vec<(f64, f64)>),
}

impl WeightSpec {
    pub fn realize(&self, grid: &Grid) -> Result<Field> {
        match self {
            WeightSpec::Constant(v) => Ok(Field::constant(grid.n(), *v)),
            WeightSpec::Nodes(vals) => {
                if vals.len() != grid.n() {
                    return Err(Error::Config(format!(
                        "weight table has {} nodes, grid has {}",
                        vals.len(),
                        grid.n()
                    )));
                }
                Field::new(vals.clone())
            }
            WeightSpec::Piecewise(table) => {
                if table.is_empty() {
                    return Err(Error::Config("piecewise weight table is empty".into()));
                }
                if table.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(Error::Config(
                        "piecewise break points must be strictly increasing".into(),
                    ));
                }
                let vals = (0..grid.n())
                    .map(|i| {
                        let x = (i as f64 + 1.0) * grid.h();
                        table
                            .iter()
                            .rev()
                            .find(|(bx, _)| *bx <= x)
                            .map(|(_, v)| *v)
                            .unwrap_or(table[0].1)
                    })
                    .collect();
                Field::new(vals)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub f: WeightSpec,
    pub g: WeightSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(tag = "variant", rename_all = "UPPERCASE", deny_unknown_fields)]
pub enum ModelConfig {
    #[default]
    Plain,
    /// Truncation point; defaults to the midpoint of the admissible interval.
    Truncated { k_cut: Option<f64> },
    /// Modification point; defaults to k̂ = b(r-p)/(a(2p-r)).
    Modified { k_hat: Option<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OptionsConfig {
    pub max_iters: usize,
    pub step_init: f64,
    pub residual_tol: f64,
    pub seed: u64,
    pub n_starts: usize,
}

impl Default for OptionsConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        OptionsConfig {
            max_iters: d.max_iters,
            step_init: d.step_init,
            residual_tol: d.residual_tol,
            seed: d.seed,
            n_starts: d.n_starts,
        }
    }
}

fn default_unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub params: ParamsConfig,
    pub weights: WeightsConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub options: OptionsConfig,
    #[serde(rename = "C_star", default = "default_unit")]
    pub c_star: f64,
    #[serde(default = "default_unit")]
    pub theta: f64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<RunConfig> {
        RunConfig::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn validate(&self) -> Result<()> {
        if !(self.c_star > 0.0) || !(self.theta > 0.0) {
            return Err(Error::Config("C_star and theta must be positive".into()));
        }
        if !(self.options.residual_tol > 0.0) {
            return Err(Error::Config("residual_tol must be positive".into()));
        }
        // building realizes grid, weights, and ProblemParams, so all their
        // invariants are enforced at load time
        self.build().map(|_| ())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.length, self.grid.n)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            max_iters: self.options.max_iters,
            step_init: self.options.step_init,
            residual_tol: self.options.residual_tol,
            seed: self.options.seed,
            n_starts: self.options.n_starts,
            c_star: self.c_star,
            theta: self.theta,
        }
    }

    pub fn build(&self) -> Result<(Grid, ProblemParams, KirchhoffModel, SolveOptions)> {
        let grid = self.grid()?;
        let f = self.weights.f.realize(&grid)?;
        let g = self.weights.g.realize(&grid)?;
        let p = self.params.p;
        let params = ProblemParams::new(
            p,
            self.params.q,
            self.params.r,
            self.params.a,
            self.params.b,
            self.params.lambda,
            f,
            g,
        )?;
        let model = match &self.model {
            ModelConfig::Plain => params.plain_model(),
            ModelConfig::Truncated { k_cut } => {
                let k = match k_cut {
                    Some(k) => *k,
                    None => {
                        let (lo, hi) =
                            thresholds::k_cut_interval(p, params.r, params.a, params.b)?;
                        0.5 * (lo + hi)
                    }
                };
                KirchhoffModel::truncated(params.a, params.b, k)
            }
            ModelConfig::Modified { k_hat } => {
                let k = match k_hat {
                    Some(k) => *k,
                    None => thresholds::k_hat(p, params.r, params.a, params.b)?,
                };
                KirchhoffModel::modified(params.a, params.b, k, params.q)
            }
        };
        Ok((grid, params, model, self.solve_options()))
    }
}
