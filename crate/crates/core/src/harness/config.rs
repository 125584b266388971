//! JSON experiment configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bayes_engine::CategoricalModel;
use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::metric_space::{build_grid_space, line_points, FiniteMetricSpace, IndexSet};

/// Largest parameter grid a config may declare.
pub const MAX_GRID_SIZE: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Consistency,
    Brittleness,
    CoveringBound,
    GrowingDiameter,
    MisspecificationSlice,
    MetricValidation,
}

/// Evenly spaced grid `lo, ..., hi` with `points` nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub lo: f64,
    #[serde(default = "one")]
    pub hi: f64,
    pub points: usize,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        check_grid_size(self.points)?;
        Ok(line_points(self.lo, self.hi, self.points)
            .map_err(|e| Error::Config(e.to_string()))?
            .into_iter()
            .map(|p| p[0])
            .collect())
    }
}

fn check_grid_size(points: usize) -> Result<()> {
    if points == 0 || points > MAX_GRID_SIZE {
        return Err(Error::Config(format!(
            "grid size {points} outside 1..={MAX_GRID_SIZE}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `P_theta = Bernoulli((theta - lo) / (hi - lo))` on an evenly spaced grid.
    BernoulliGrid {
        #[serde(default)]
        lo: f64,
        #[serde(default = "one")]
        hi: f64,
        points: usize,
    },
    /// Explicit grid coordinates and one likelihood row per grid point.
    Categorical { grid: Vec<Vec<f64>>, rows: Vec<Vec<f64>> },
    /// Two independent coins on `theta1 x theta2` with success probabilities
    /// `theta1` and `base2 + slope2 * theta2`.
    ProductBernoulli {
        theta1: GridSpec,
        theta2: GridSpec,
        #[serde(default = "half")]
        base2: f64,
        #[serde(default = "half")]
        slope2: f64,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<CategoricalModel> {
        let model = match self {
            ModelSpec::BernoulliGrid { lo, hi, points } => {
                let grid = GridSpec { lo: *lo, hi: *hi, points: *points };
                bernoulli_on(&grid)?
            }
            ModelSpec::Categorical { grid, rows } => {
                check_grid_size(grid.len())?;
                let space = build_grid_space(grid).map_err(|e| Error::Config(e.to_string()))?;
                CategoricalModel::new(Arc::new(space), rows.clone()).map_err(|e| Error::Config(e.to_string()))?
            }
            ModelSpec::ProductBernoulli { theta1, theta2, base2, slope2 } => {
                let (a, b) = (theta1.values()?, theta2.values()?);
                check_grid_size(a.len() * b.len())?;
                CategoricalModel::product_bernoulli(&a, &b, *base2, *slope2)
                    .map_err(|e| Error::Config(e.to_string()))?
            }
        };
        model.ensure_injective()?;
        Ok(model)
    }
}

/// Bernoulli model with success probability rescaled linearly from the grid's range to `[0, 1]`.
pub fn bernoulli_on(grid: &GridSpec) -> Result<CategoricalModel> {
    let values = grid.values()?;
    let span = grid.hi - grid.lo;
    if span.is_nan() || span <= 0.0 {
        return Err(Error::Config(format!("Bernoulli grid [{}, {}] is degenerate", grid.lo, grid.hi)));
    }
    let space = build_grid_space(&values.iter().map(|&v| vec![v]).collect::<Vec<_>>())
        .map_err(|e| Error::Config(e.to_string()))?;
    let probs: Vec<f64> = values.iter().map(|v| ((v - grid.lo) / span).clamp(0.0, 1.0)).collect();
    CategoricalModel::bernoulli(Arc::new(space), &probs).map_err(|e| Error::Config(e.to_string()))
}

/// A grid point given by its coordinates; scalars stand for one-dimensional points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Point {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Point {
    pub fn coords(&self) -> Vec<f64> {
        match self {
            Point::Scalar(x) => vec![*x],
            Point::Vector(v) => v.clone(),
        }
    }

    /// Index of the grid node at these coordinates.
    pub fn locate(&self, space: &FiniteMetricSpace, name: &str) -> Result<usize> {
        space
            .locate(&self.coords())
            .ok_or_else(|| Error::Config(format!("{name} = {:?} is not a grid point", self.coords())))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    #[default]
    Uniform,
    Dirac { at: Point },
    Weights { weights: Vec<f64> },
    UniformOn { points: Vec<Point> },
    /// Uniform on the grid points whose `coordinate` equals `value`.
    Slice { coordinate: usize, value: f64 },
}

impl PriorSpec {
    pub fn build(&self, space: &Arc<FiniteMetricSpace>) -> Result<DiscreteMeasure> {
        let config = |e: Error| Error::Config(e.to_string());
        match self {
            PriorSpec::Uniform => Ok(DiscreteMeasure::uniform(space.clone())),
            PriorSpec::Dirac { at } => DiscreteMeasure::dirac(space.clone(), at.locate(space, "prior.at")?).map_err(config),
            PriorSpec::Weights { weights } => DiscreteMeasure::new(space.clone(), weights.clone()).map_err(config),
            PriorSpec::UniformOn { points } => {
                let idx = points
                    .iter()
                    .map(|p| p.locate(space, "prior.points"))
                    .collect::<Result<Vec<_>>>()?;
                let set = IndexSet::new(idx, space.len()).map_err(config)?;
                DiscreteMeasure::uniform_on(space.clone(), &set).map_err(config)
            }
            PriorSpec::Slice { coordinate, value } => {
                let coords = space
                    .coords()
                    .ok_or_else(|| Error::Config("slice prior needs a coordinate grid".into()))?;
                let idx: Vec<usize> = (0..space.len())
                    .filter(|&i| coords[i].get(*coordinate).is_some_and(|c| (c - value).abs() <= 1e-9))
                    .collect();
                if idx.is_empty() {
                    return Err(Error::Config(format!("no grid point has coordinate {coordinate} equal to {value}")));
                }
                let set = IndexSet::new(idx, space.len()).map_err(config)?;
                DiscreteMeasure::uniform_on(space.clone(), &set).map_err(config)
            }
        }
    }
}

/// Scenario parameters. Unused fields are ignored by scenarios that do not need them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    /// Contamination weight of the perturbation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Radius: Prokhorov exceedance level (consistency) or evacuated ball radius (covering).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Slack subtracted from `epsilon` when checking the covering gap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_prime: Option<f64>,
    /// Meta-Prokhorov level above which a brittleness run is flagged brittle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_bar: Option<f64>,
    /// Total variation radius of admissible prior perturbations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Lower bound the misspecification gap must stay above at the final n.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_floor: Option<f64>,
    /// Point the contaminating Dirac sits at.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Point>,
    /// Data generating parameter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<Point>,
    /// Radius of the open ball `U` around `theta_star` for consistency runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neighborhood_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_ladder: Option<Vec<f64>>,
    /// Nested grids for growing-diameter runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grids: Option<Vec<GridSpec>>,
    /// Accept greedy covering numbers on grids too large to solve exactly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allow_inexact: Option<bool>,
    /// Number of random instances in a metric validation sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    /// Largest random space in a metric validation sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_support: Option<usize>,
}

/// Pass/fail rule on one diagnostic, evaluated on its mean over seed groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Criterion {
    pub diagnostic: String,
    /// Sample size to evaluate at; the last scheduled one when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    /// Largest allowed max-minus-min across seed groups.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_spread: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default = "default_schedule")]
    pub schedule: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_seed_groups")]
    pub seed_groups: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub criteria: Vec<Criterion>,
}

pub fn default_schedule() -> Vec<usize> {
    vec![1, 10, 100, 1000, 5000]
}

pub fn default_replicates() -> usize {
    128
}

pub fn default_seed_groups() -> usize {
    4
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.check_shape()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks that do not depend on the scenario.
    pub fn check_shape(&self) -> Result<()> {
        if self.kind != ExperimentKind::MetricValidation {
            if self.schedule.is_empty() {
                return Err(Error::Config("schedule is empty".into()));
            }
            if self.schedule.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config("schedule must be strictly increasing".into()));
            }
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.seed_groups == 0 {
            return Err(Error::Config("seed_groups must be at least 1".into()));
        }
        for c in &self.criteria {
            if c.min.is_none() && c.max.is_none() && c.max_spread.is_none() {
                return Err(Error::Config(format!("criterion on {} sets no bound", c.diagnostic)));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<CategoricalModel> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{:?} runs need a model", self.kind)))?
            .build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_json(
            r#"{"kind": "consistency", "model": {"type": "bernoulli_grid", "points": 11}}"#,
        )
        .unwrap();
        assert_eq!(c.schedule, default_schedule());
        assert_eq!((c.replicates, c.seed_groups, c.seed), (128, 4, 0));
        assert_eq!(c.prior, PriorSpec::Uniform);
        assert_eq!(c.model().unwrap().len(), 11);
    }

    #[test]
    fn shape_errors_are_config_errors() {
        for text in [
            r#"{"kind": "consistency", "schedule": [10, 10]}"#,
            r#"{"kind": "consistency", "schedule": []}"#,
            r#"{"kind": "consistency", "replicates": 0}"#,
            r#"{"kind": "nonsense"}"#,
            r#"{"kind": "consistency", "typo": 1}"#,
            r#"{"kind": "consistency", "criteria": [{"diagnostic": "x"}]}"#,
        ] {
            let err = ExperimentConfig::from_json(text).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{text}");
        }
    }

    #[test]
    fn points_accept_scalars_and_vectors() {
        let s: Arc<FiniteMetricSpace> = Arc::new(crate::metric_space::line_grid(0.0, 1.0, 11).unwrap());
        let p: Point = serde_json::from_str("0.7").unwrap();
        assert_eq!(p.locate(&s, "x").unwrap(), 7);
        let p: Point = serde_json::from_str("[0.3]").unwrap();
        assert_eq!(p.locate(&s, "x").unwrap(), 3);
        let p: Point = serde_json::from_str("0.75").unwrap();
        assert!(p.locate(&s, "x").is_err());
    }

    #[test]
    fn priors_build() {
        let model = ModelSpec::ProductBernoulli {
            theta1: GridSpec { lo: 0.0, hi: 1.0, points: 3 },
            theta2: GridSpec { lo: 0.0, hi: 1.0, points: 2 },
            base2: 0.5,
            slope2: 0.5,
        }
        .build()
        .unwrap();
        let s = model.theta_space();
        let slice = PriorSpec::Slice { coordinate: 1, value: 0.0 }.build(s).unwrap();
        assert_eq!(slice.support().len(), 3);
        assert!(slice.support().iter().all(|&i| s.coords().unwrap()[i][1] == 0.0));
        let d = PriorSpec::Dirac { at: Point::Vector(vec![0.5, 1.0]) }.build(s).unwrap();
        assert_eq!(d.support().len(), 1);
        assert!(PriorSpec::Weights { weights: vec![1.0] }.build(s).is_err());
        assert!(PriorSpec::Slice { coordinate: 1, value: 0.3 }.build(s).is_err());
    }

    #[test]
    fn rescaled_bernoulli_and_limits() {
        let m = bernoulli_on(&GridSpec { lo: 0.0, hi: 4.0, points: 5 }).unwrap();
        assert_eq!(m.row(1), &[0.75, 0.25]);
        assert!(GridSpec { lo: 0.0, hi: 1.0, points: MAX_GRID_SIZE + 1 }.values().is_err());
        // duplicate rows make the model non-identifiable
        let spec = ModelSpec::Categorical {
            grid: vec![vec![0.0], vec![1.0]],
            rows: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        };
        assert!(matches!(spec.build(), Err(Error::Config(_))));
    }
}
