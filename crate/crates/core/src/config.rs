//! Run configuration shared by the CLI and the verification harness.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lebesgue::ExponentSpec;
use crate::measure::DiscreteMeasure;
use crate::operators::{KernelSpec, LambdaSpec, Quadrature, Setting};
use crate::space::{build_space, QuasiMetricSpace, SpaceSpec};
use crate::two_component::{build_glued, glued_measure, GlueSpec, GluedMeasure, TwoComponentSpace};

pub const DEFAULT_FAMILY_SIZE: usize = 50;
pub const DEFAULT_TAU: f64 = 1.1;

/// Measure placed on a space.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeasureSpec {
    /// Quadrature weights of the space family.
    #[default]
    Natural,
    /// Equal weights adding up to `total`.
    Uniform { total: f64 },
    /// Explicit node weights (single-level families only).
    Weights { values: Vec<f64> },
}

impl MeasureSpec {
    pub fn build(&self, space: &QuasiMetricSpace) -> Result<DiscreteMeasure> {
        match self {
            MeasureSpec::Natural => Ok(DiscreteMeasure::natural(space)),
            MeasureSpec::Uniform { total } => {
                if !(*total > 0.0 && total.is_finite()) {
                    return Err(Error::Precondition(format!("uniform measure needs a positive total, got {total}")));
                }
                Ok(DiscreteMeasure::uniform(space.len(), *total))
            }
            MeasureSpec::Weights { values } => DiscreteMeasure::for_space(space, values.clone()),
        }
    }
}

/// A refinement family: one space per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FamilySpec {
    /// `levels` are target node counts.
    Space {
        space: SpaceSpec,
        #[serde(default)]
        measure: MeasureSpec,
        levels: Vec<usize>,
    },
    /// `levels` are subdivision counts of the two components.
    Glue { glue: GlueSpec, levels: Vec<usize> },
}

/// One refinement level.
#[derive(Debug, Clone)]
pub enum Level {
    Plain { space: QuasiMetricSpace, mu: DiscreteMeasure },
    Glued { tc: TwoComponentSpace, gm: GluedMeasure },
}

impl Level {
    pub fn plain(space: QuasiMetricSpace, mu: DiscreteMeasure) -> Result<Self> {
        mu.check_space(&space)?;
        Ok(Level::Plain { space, mu })
    }

    pub fn glued(tc: TwoComponentSpace) -> Self {
        let gm = glued_measure(&tc);
        Level::Glued { tc, gm }
    }

    pub fn setting(&self) -> Setting<'_> {
        match self {
            Level::Plain { space, mu } => Setting::new(space, mu),
            Level::Glued { tc, gm } => Setting::glued(tc, gm),
        }
    }

    pub fn space(&self) -> &QuasiMetricSpace {
        match self {
            Level::Plain { space, .. } => space,
            Level::Glued { tc, .. } => &tc.base,
        }
    }

    pub fn mu(&self) -> &DiscreteMeasure {
        match self {
            Level::Plain { mu, .. } => mu,
            Level::Glued { gm, .. } => &gm.underlying,
        }
    }

    pub fn len(&self) -> usize {
        self.space().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same space carrying a different measure.
    pub fn with_measure(&self, mu: DiscreteMeasure) -> Result<Level> {
        mu.check_space(self.space())?;
        Ok(match self {
            Level::Plain { space, .. } => Level::Plain { space: space.clone(), mu },
            Level::Glued { tc, gm } => Level::Glued { tc: tc.clone(), gm: GluedMeasure { underlying: mu, ..gm.clone() } },
        })
    }
}

impl FamilySpec {
    pub fn levels(&self) -> &[usize] {
        match self {
            FamilySpec::Space { levels, .. } | FamilySpec::Glue { levels, .. } => levels,
        }
    }

    /// Builds every level; node counts must strictly increase.
    pub fn build(&self) -> Result<Vec<Level>> {
        if self.levels().is_empty() {
            return Err(Error::Precondition("a family needs at least one level".into()));
        }
        let mut out: Vec<Level> = Vec::with_capacity(self.levels().len());
        for &l in self.levels() {
            let level = match self {
                FamilySpec::Space { space, measure, .. } => {
                    let s = build_space(&space.at_resolution(l))?;
                    let mu = measure.build(&s)?;
                    Level::plain(s, mu)?
                }
                FamilySpec::Glue { glue, .. } => Level::glued(build_glued(&glue.with_subdivisions(l))?),
            };
            if let Some(prev) = out.last() {
                if level.len() <= prev.len() {
                    return Err(Error::Precondition(format!(
                        "levels must strictly increase in node count ({} then {})",
                        prev.len(),
                        level.len()
                    )));
                }
            }
            out.push(level);
        }
        Ok(out)
    }

    /// Node counts without building the levels, when they are known in closed form.
    pub fn planned_sizes(&self) -> Vec<Option<usize>> {
        match self {
            FamilySpec::Space { space, levels, .. } => levels
                .iter()
                .map(|&l| match space.at_resolution(l) {
                    SpaceSpec::Grid1d { n, .. } => Some(n),
                    SpaceSpec::Grid2d { n, .. } => Some(n * n),
                    SpaceSpec::Cantor { generation } => Some(1 << generation),
                    SpaceSpec::Explicit { n, .. } => Some(n),
                    SpaceSpec::Snowflake { .. } => None,
                })
                .collect(),
            FamilySpec::Glue { levels, .. } => vec![None; levels.len()],
        }
    }
}

/// Everything a `verify` run needs; recorded verbatim in its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: FamilySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Domain exponent; `null` or absent means infinity where allowed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Target exponent; derived from the HLS relation when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<ExponentSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_family_size")]
    pub family_size: usize,
    #[serde(default)]
    pub quadrature: Quadrature,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Extra masses injected at one node by the necessity harness.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_weights: Option<Vec<f64>>,
}

fn default_family_size() -> usize {
    DEFAULT_FAMILY_SIZE
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn alpha(&self) -> Result<f64> {
        self.alpha.ok_or_else(|| Error::Precondition("config needs `alpha`".into()))
    }

    pub fn lambda(&self) -> Result<&LambdaSpec> {
        self.lambda.as_ref().ok_or_else(|| Error::Precondition("config needs `lambda`".into()))
    }

    pub fn p(&self) -> Result<f64> {
        self.p.ok_or_else(|| Error::Precondition("config needs `p`".into()))
    }
}
