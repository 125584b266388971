//! Scenario runners. Each run is prepared (config resolved and preconditions
//! checked) before any Monte Carlo work starts.

use std::collections::BTreeMap;
use std::time::Instant;

use serde_json::{json, Value};

use super::config::{bernoulli_on, ExperimentConfig, ExperimentKind, ModelSpec};
use super::report::{Checks, Curves, Metadata, Report};
use super::validation::ValidationPlan;
use crate::bayes_engine::{coupled_posterior_laws, paired_distances, posterior_law, CategoricalModel, RngSeed};
use crate::error::{Error, Result};
use crate::measures::{total_variation, DiscreteMeasure};
use crate::metric_space::{Enlargement, IndexSet};
use crate::perturbation_lab::{
    ball_evacuation, covering_number, dirac_contamination, has_kl_support, kl_neighborhood_masses,
    least_mass_center, DEFAULT_KL_LADDER,
};
use crate::prob_metrics::{distances_to, ky_fan_empirical, meta_prokhorov, EmpiricalLaw};

/// Slack for comparisons between two independently computed distances.
pub const DISTANCE_SLACK: f64 = 1e-9;

/// Slack for identities between prior masses.
const MASS_SLACK: f64 = 1e-12;

/// Runs the experiment described by `config`.
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    let start = Instant::now();
    config.check_shape()?;
    let plan = Plan::prepare(config)?;
    let mut out = Outcome {
        summary: BTreeMap::new(),
        flags: BTreeMap::new(),
        curves: Curves::new(config.seed_groups),
        checks: Checks::default(),
    };
    plan.execute(config, &mut out)?;
    let rows = out.curves.into_rows()?;
    let mut report = Report {
        kind: config.kind,
        config: config.clone(),
        summary: out.summary,
        flags: out.flags,
        rows,
        checks: out.checks.into_vec(),
        criteria: Vec::new(),
        metadata: Metadata {
            seed: config.seed,
            seed_groups: config.seed_groups,
            replicates: config.replicates,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_ms: 0,
        },
    };
    plan.finish(&mut report);
    report.evaluate_criteria();
    report.metadata.wall_time_ms = start.elapsed().as_millis() as u64;
    Ok(report)
}

/// Resolves `config` and checks every precondition without sampling.
/// Returns a description of the resolved run.
pub fn validate(config: &ExperimentConfig) -> Result<Value> {
    config.check_shape()?;
    let plan = Plan::prepare(config)?;
    Ok(json!({
        "kind": config.kind,
        "seed": config.seed,
        "schedule": config.schedule,
        "replicates": config.replicates,
        "seed_groups": config.seed_groups,
        "resolved": plan.describe(),
    }))
}

struct Outcome {
    summary: BTreeMap<String, f64>,
    flags: BTreeMap<String, bool>,
    curves: Curves,
    checks: Checks,
}

enum Plan {
    Consistency(ConsistencyPlan),
    Pairs(Vec<PairPlan>),
    Validation(ValidationPlan),
}

impl Plan {
    fn prepare(config: &ExperimentConfig) -> Result<Plan> {
        Ok(match config.kind {
            ExperimentKind::Consistency => Plan::Consistency(ConsistencyPlan::prepare(config)?),
            ExperimentKind::Brittleness => Plan::Pairs(vec![prepare_brittleness(config)?]),
            ExperimentKind::CoveringBound => {
                let model = config.model()?;
                let prior = config.prior.build(model.theta_space())?;
                let allow = config.parameters.allow_inexact.unwrap_or(false);
                Plan::Pairs(vec![prepare_covering(config, model, prior, allow, "")?])
            }
            ExperimentKind::GrowingDiameter => Plan::Pairs(prepare_growing(config)?),
            ExperimentKind::MisspecificationSlice => Plan::Pairs(vec![prepare_misspecification(config)?]),
            ExperimentKind::MetricValidation => Plan::Validation(ValidationPlan::prepare(config)?),
        })
    }

    fn describe(&self) -> Value {
        match self {
            Plan::Consistency(p) => p.describe(),
            Plan::Pairs(ps) => Value::Array(ps.iter().map(PairPlan::describe).collect()),
            Plan::Validation(p) => p.describe(),
        }
    }

    fn execute(&self, config: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
        match self {
            Plan::Consistency(p) => p.execute(config, out),
            Plan::Pairs(ps) => {
                for p in ps {
                    p.execute(config, out)?;
                }
                if ps.len() > 1 {
                    let bounds: Vec<f64> = ps.iter().map(|p| p.summary["bound"]).collect();
                    for w in bounds.windows(2) {
                        out.checks.at_most("bound non-increasing across grids", w[1], w[0]);
                    }
                }
                Ok(())
            }
            Plan::Validation(p) => p.execute(&mut out.summary, &mut out.checks),
        }
    }

    /// Flags that depend on the final row.
    fn finish(&self, report: &mut Report) {
        if let Plan::Pairs(ps) = self {
            for p in ps {
                if let Some(rule) = &p.final_rule {
                    let name = format!("{}meta_prokhorov", p.prefix);
                    let value = report.final_diagnostic(&name).map(|d| d.mean);
                    let flag = value.is_some_and(|v| if rule.above { v > rule.threshold } else { v >= rule.threshold });
                    report.flags.insert(format!("{}{}", p.prefix, rule.flag), flag);
                }
            }
        }
    }
}

fn group_seed(config: &ExperimentConfig, group: usize) -> RngSeed {
    RngSeed::new(config.seed, group as u64)
}

fn require<T: Clone>(value: &Option<T>, name: &str) -> Result<T> {
    value.clone().ok_or_else(|| Error::Config(format!("parameters.{name} is required")))
}

fn unit_interval(value: f64, name: &str) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::Config(format!("{name} = {value} outside [0, 1]")))
    }
}

fn positive(value: f64, name: &str) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Config(format!("{name} = {value} must be positive")))
    }
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

struct ConsistencyPlan {
    model: CategoricalModel,
    prior: DiscreteMeasure,
    theta_star: usize,
    neighborhood: IndexSet,
    radius: f64,
    epsilon: f64,
    ladder: Vec<f64>,
    kl_masses: Vec<f64>,
}

impl ConsistencyPlan {
    fn prepare(config: &ExperimentConfig) -> Result<Self> {
        let model = config.model()?;
        let space = model.theta_space().clone();
        let prior = config.prior.build(&space)?;
        let p = &config.parameters;
        let theta_star = require(&p.theta_star, "theta_star")?.locate(&space, "theta_star")?;
        let radius = positive(p.neighborhood_radius.unwrap_or(0.05), "neighborhood_radius")?;
        let epsilon = positive(p.epsilon.unwrap_or(0.1), "epsilon")?;
        let ladder = p.kl_ladder.clone().unwrap_or_else(|| DEFAULT_KL_LADDER.to_vec());
        let kl_masses = kl_neighborhood_masses(&prior, &model, theta_star, &ladder)
            .map_err(|e| Error::Config(e.to_string()))?;
        if let Some(k) = kl_masses.iter().position(|&m| m == 0.0) {
            return Err(Error::Precondition(format!(
                "prior lacks Kullback-Leibler support at theta_star: its KL neighborhood of radius {} has no mass",
                ladder[k]
            )));
        }
        let neighborhood = space.ball(theta_star, radius, Enlargement::Open);
        Ok(ConsistencyPlan {
            model,
            prior,
            theta_star,
            neighborhood,
            radius,
            epsilon,
            ladder,
            kl_masses,
        })
    }

    fn describe(&self) -> Value {
        json!({
            "grid_size": self.model.len(),
            "theta_star_index": self.theta_star,
            "neighborhood_radius": self.radius,
            "neighborhood_size": self.neighborhood.len(),
            "epsilon": self.epsilon,
            "kl_ladder": self.ladder,
            "kl_neighborhood_masses": self.kl_masses,
        })
    }

    fn execute(&self, config: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
        let target = DiscreteMeasure::dirac(self.model.theta_space().clone(), self.theta_star)?;
        let target_law = EmpiricalLaw::repeated(target.clone(), 1)?;
        out.summary.insert("prior_mass_of_neighborhood".into(), self.prior.mass(&self.neighborhood));
        out.summary.insert("kl_support_smallest_rung_mass".into(), *self.kl_masses.last().expect("ladder is nonempty"));
        for group in 0..config.seed_groups {
            let seed = group_seed(config, group);
            for &n in &config.schedule {
                let law = posterior_law(&self.prior, &self.model, self.theta_star, n, config.replicates, &seed)?;
                let mut masses: Vec<f64> = law.samples().iter().map(|s| s.mass(&self.neighborhood)).collect();
                masses.sort_by(f64::total_cmp);
                let dists = distances_to(&law, &target)?;
                let exceed = dists.distances().iter().filter(|&&d| d > self.epsilon).count() as f64 / dists.len() as f64;
                let ky = ky_fan_empirical(&dists);
                let meta = meta_prokhorov(&law, &target_law)?;

                let c = &mut out.curves;
                c.record(n, "neighborhood_mass_mean", group, masses.iter().sum::<f64>() / masses.len() as f64);
                c.record(n, "neighborhood_mass_median", group, quantile(&masses, 0.5));
                c.record(n, "neighborhood_mass_q10", group, quantile(&masses, 0.1));
                c.record(n, "neighborhood_mass_q90", group, quantile(&masses, 0.9));
                c.record(n, "exceedance_fraction", group, exceed);
                c.record(n, "ky_fan", group, ky);
                c.record(n, "meta_prokhorov", group, meta);
                out.checks.at_most("meta_prokhorov <= ky_fan", meta, ky + DISTANCE_SLACK);
                out.checks.at_most("ky_fan equals meta_prokhorov to a Dirac", (ky - meta).abs(), DISTANCE_SLACK);
            }
        }
        Ok(())
    }
}

/// Decides a flag from the final-n mean of the pair's meta-Prokhorov curve.
struct FinalRule {
    flag: &'static str,
    threshold: f64,
    /// Strictly above `threshold` when true, at least `threshold` otherwise.
    above: bool,
}

/// Two priors whose posterior laws are compared under shared data.
struct PairPlan {
    prefix: String,
    model: CategoricalModel,
    priors: [DiscreteMeasure; 2],
    data_theta: usize,
    summary: BTreeMap<String, f64>,
    flags: BTreeMap<String, bool>,
    /// `(name, value, bound)` instances of `value <= bound` known before sampling.
    prior_checks: Vec<(String, f64, f64)>,
    final_rule: Option<FinalRule>,
}

impl PairPlan {
    fn describe(&self) -> Value {
        json!({
            "prefix": self.prefix,
            "grid_size": self.model.len(),
            "data_theta_index": self.data_theta,
            "summary": self.summary,
            "flags": self.flags,
        })
    }

    fn execute(&self, config: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
        let p = &self.prefix;
        for (k, v) in &self.summary {
            out.summary.insert(format!("{p}{k}"), *v);
        }
        for (k, v) in &self.flags {
            out.flags.insert(format!("{p}{k}"), *v);
        }
        for (name, value, bound) in &self.prior_checks {
            out.checks.at_most(name, *value, *bound);
        }
        let meta_name = format!("{p}meta_prokhorov");
        let ky_name = format!("{p}ky_fan");
        let priors = [&self.priors[0], &self.priors[1]];
        for group in 0..config.seed_groups {
            let seed = group_seed(config, group);
            for &n in &config.schedule {
                let laws = coupled_posterior_laws(&priors, &self.model, self.data_theta, n, config.replicates, &seed)?;
                let meta = meta_prokhorov(&laws[0], &laws[1])?;
                let ky = ky_fan_empirical(&paired_distances(&laws[0], &laws[1])?);
                out.curves.record(n, &meta_name, group, meta);
                out.curves.record(n, &ky_name, group, ky);
                out.checks.at_most("meta_prokhorov <= ky_fan", meta, ky + DISTANCE_SLACK);
            }
        }
        Ok(())
    }
}

/// `alpha < min(delta, rho)` whenever either bound is configured.
fn check_alpha_restriction(config: &ExperimentConfig, alpha: f64) -> Result<()> {
    let p = &config.parameters;
    let bound = p.delta.unwrap_or(f64::INFINITY).min(p.rho.unwrap_or(f64::INFINITY));
    if alpha >= bound {
        return Err(Error::Precondition(format!(
            "alpha = {alpha} must be below min(delta, rho) = {bound}; the perturbation would leave the admissible total variation ball"
        )));
    }
    Ok(())
}

fn prepare_brittleness(config: &ExperimentConfig) -> Result<PairPlan> {
    let model = config.model()?;
    let space = model.theta_space().clone();
    let prior = config.prior.build(&space)?;
    let p = &config.parameters;
    let alpha = unit_interval(require(&p.alpha, "alpha")?, "alpha")?;
    check_alpha_restriction(config, alpha)?;
    let theta = require(&p.theta, "theta")?.locate(&space, "theta")?;
    let theta_star = require(&p.theta_star, "theta_star")?.locate(&space, "theta_star")?;
    let brittle_scale = (space.diameter() / 2.0).min(1.0);
    let epsilon_bar = p.epsilon_bar.unwrap_or(0.8 * brittle_scale);
    if !(epsilon_bar > 0.0 && epsilon_bar < brittle_scale) {
        return Err(Error::Config(format!(
            "epsilon_bar = {epsilon_bar} must lie in (0, min(diameter / 2, 1)) = (0, {brittle_scale})"
        )));
    }

    let perturbed = dirac_contamination(&prior, theta, alpha)?;
    let dirac = DiscreteMeasure::dirac(space.clone(), theta)?;
    let tv = total_variation(&perturbed, &dirac)?;
    let kl_support = has_kl_support(&perturbed, &model, theta_star, &DEFAULT_KL_LADDER)?;
    let summary = BTreeMap::from([
        ("alpha".to_string(), alpha),
        ("tv_prior".to_string(), tv),
        ("limit".to_string(), space.dist(theta_star, theta).min(1.0)),
        ("epsilon_bar".to_string(), epsilon_bar),
        ("diameter".to_string(), space.diameter()),
    ]);
    Ok(PairPlan {
        prefix: String::new(),
        model,
        priors: [perturbed, dirac],
        data_theta: theta_star,
        summary,
        flags: BTreeMap::from([("kl_support".to_string(), kl_support)]),
        prior_checks: vec![("tv_prior <= alpha".to_string(), tv, alpha + MASS_SLACK)],
        final_rule: Some(FinalRule {
            flag: "brittle",
            threshold: epsilon_bar,
            above: true,
        }),
    })
}

fn prepare_covering(
    config: &ExperimentConfig,
    model: CategoricalModel,
    prior: DiscreteMeasure,
    allow_inexact: bool,
    prefix: &str,
) -> Result<PairPlan> {
    let p = &config.parameters;
    let epsilon = positive(require(&p.epsilon, "epsilon")?, "epsilon")?;
    let epsilon_prime = p.epsilon_prime.unwrap_or(0.02);
    let space = model.theta_space().clone();
    let cover = covering_number(&space, 2.0 * epsilon)?;
    if !cover.exact && !allow_inexact {
        return Err(Error::Precondition(format!(
            "covering number of a {}-point grid is only available as a greedy bound; set allow_inexact to accept it",
            space.len()
        )));
    }
    let (theta_star, least_mass) = least_mass_center(&prior, epsilon)?;
    let evacuated = ball_evacuation(&prior, theta_star, epsilon).map_err(|e| match e {
        Error::Precondition(msg) => Error::Config(msg),
        other => other,
    })?;
    let tv = total_variation(&prior, &evacuated)?;
    let inverse = 1.0 / cover.count as f64;
    let bound = p.rho.map_or(inverse, |rho| inverse.min(rho));

    let mut prior_checks = vec![(format!("{prefix}tv_prior <= least_mass"), tv, least_mass + MASS_SLACK)];
    if cover.exact {
        prior_checks.push((format!("{prefix}least_mass <= 1/N"), least_mass, inverse + MASS_SLACK));
    }
    let mut summary = BTreeMap::from([
        ("epsilon".to_string(), epsilon),
        ("gap_target".to_string(), epsilon - epsilon_prime),
        ("covering_count".to_string(), cover.count as f64),
        ("bound".to_string(), bound),
        ("least_mass".to_string(), least_mass),
        ("tv_prior".to_string(), tv),
        ("diameter".to_string(), space.diameter()),
    ]);
    if let Some(coords) = space.coords() {
        for (k, c) in coords[theta_star].iter().enumerate() {
            summary.insert(format!("theta_star[{k}]"), *c);
        }
    }
    Ok(PairPlan {
        prefix: prefix.to_string(),
        model,
        priors: [prior, evacuated],
        data_theta: theta_star,
        summary,
        flags: BTreeMap::from([("covering_exact".to_string(), cover.exact)]),
        prior_checks,
        final_rule: Some(FinalRule {
            flag: "gap_exceeds",
            threshold: epsilon - epsilon_prime,
            above: false,
        }),
    })
}

fn prepare_growing(config: &ExperimentConfig) -> Result<Vec<PairPlan>> {
    if config.model.is_some() {
        return Err(Error::Config(
            "growing_diameter builds a Bernoulli model per grid from parameters.grids; drop the model".into(),
        ));
    }
    let grids = require(&config.parameters.grids, "grids")?;
    if grids.is_empty() {
        return Err(Error::Config("parameters.grids is empty".into()));
    }
    let mut plans = Vec::new();
    let mut previous: Option<Vec<f64>> = None;
    for (k, grid) in grids.iter().enumerate() {
        let model = bernoulli_on(grid)?;
        if let Some(prev) = &previous {
            let space = model.theta_space();
            if let Some(x) = prev.iter().find(|&&x| space.locate(&[x]).is_none()) {
                return Err(Error::Config(format!("grid {k} does not contain point {x} of grid {}", k - 1)));
            }
        }
        previous = Some(grid.values()?);
        let prior = config.prior.build(model.theta_space())?;
        let mut plan = prepare_covering(config, model, prior, true, &format!("g{k}."))?;
        plan.summary.insert("lo".into(), grid.lo);
        plan.summary.insert("hi".into(), grid.hi);
        plans.push(plan);
    }
    Ok(plans)
}

fn prepare_misspecification(config: &ExperimentConfig) -> Result<PairPlan> {
    if !matches!(config.model, Some(ModelSpec::ProductBernoulli { .. })) {
        return Err(Error::Config("misspecification_slice needs a product_bernoulli model".into()));
    }
    let model = config.model()?;
    let space = model.theta_space().clone();
    let coords = space.coords().expect("product grids carry coordinates");
    let slice: Vec<usize> = (0..space.len()).filter(|&i| coords[i][1] == 0.0).collect();
    if slice.is_empty() {
        return Err(Error::Config("theta2 grid must contain 0".into()));
    }
    let prior = config.prior.build(&space)?;
    if prior.support().iter().any(|i| coords[*i][1] != 0.0) {
        return Err(Error::Config("the misspecified prior must be supported on the theta2 = 0 slice".into()));
    }
    let p = &config.parameters;
    let alpha = unit_interval(require(&p.alpha, "alpha")?, "alpha")?;
    check_alpha_restriction(config, alpha)?;
    let theta_star = require(&p.theta_star, "theta_star")?.locate(&space, "theta_star")?;
    let perturbed = dirac_contamination(&prior, theta_star, 1.0 - alpha)?;
    let tv = total_variation(&prior, &perturbed)?;
    let to_slice = slice.iter().map(|&i| space.dist(theta_star, i)).fold(f64::INFINITY, f64::min);

    let mut summary = BTreeMap::from([
        ("alpha".to_string(), alpha),
        ("tv_prior".to_string(), tv),
        ("distance_to_slice".to_string(), to_slice),
    ]);
    let final_rule = p.gap_floor.map(|floor| {
        summary.insert("gap_floor".to_string(), floor);
        FinalRule {
            flag: "gap_bounded",
            threshold: floor,
            above: false,
        }
    });
    Ok(PairPlan {
        prefix: String::new(),
        model,
        priors: [prior, perturbed],
        data_theta: theta_star,
        summary,
        flags: BTreeMap::from([("well_specified".to_string(), to_slice == 0.0)]),
        prior_checks: vec![("tv_prior <= alpha".to_string(), tv, alpha + MASS_SLACK)],
        final_rule,
    })
}
