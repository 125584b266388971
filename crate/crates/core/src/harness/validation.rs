//! Randomized sweep over the metric identities and inequalities.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::config::ExperimentConfig;
use super::report::Checks;
use super::scenarios::DISTANCE_SLACK;
use crate::bayes_engine::RngSeed;
use crate::error::{Error, Result};
use crate::measures::{hellinger, kl_divergence, total_variation, DiscreteMeasure};
use crate::metric_space::{build_grid_space, Enlargement, FiniteMetricSpace, IndexSet};
use crate::prob_metrics::{
    ky_fan_to_dirac, meta_prokhorov, prokhorov, prokhorov_oracle, EmpiricalLaw, ORACLE_SUPPORT_LIMIT,
};

/// Slack for the inequality chains between closed-form metrics.
pub const CHAIN_SLACK: f64 = 1e-12;

/// Stream id of the validation sweep, disjoint from seed-group ids.
const VALIDATION_STREAM: u64 = 1 << 32;

pub(crate) struct ValidationPlan {
    repetitions: usize,
    max_support: usize,
    seed: u64,
}

impl ValidationPlan {
    pub(crate) fn prepare(config: &ExperimentConfig) -> Result<Self> {
        let p = &config.parameters;
        let max_support = p.max_support.unwrap_or(8);
        if !(2..=ORACLE_SUPPORT_LIMIT).contains(&max_support) {
            return Err(Error::Config(format!(
                "max_support = {max_support} outside 2..={ORACLE_SUPPORT_LIMIT}"
            )));
        }
        Ok(ValidationPlan {
            repetitions: p.repetitions.unwrap_or(500),
            max_support,
            seed: config.seed,
        })
    }

    pub(crate) fn describe(&self) -> Value {
        json!({ "repetitions": self.repetitions, "max_support": self.max_support })
    }

    pub(crate) fn execute(&self, summary: &mut BTreeMap<String, f64>, checks: &mut Checks) -> Result<()> {
        let mut rng = RngSeed::new(self.seed, VALIDATION_STREAM).rng();
        let mut worst_oracle = 0.0f64;
        for r in 0..self.repetitions {
            let size = rng.gen_range(2..=self.max_support);
            let space = Arc::new(if r % 2 == 0 {
                random_lattice_space(&mut rng, size)
            } else {
                random_graph_space(&mut rng, size)
            });
            let [a, b, c] = [0, 1, 2].map(|_| random_measure(&mut rng, &space, false));
            let positive = [0, 1].map(|_| random_measure(&mut rng, &space, true));
            let deviation = sweep_instance(&mut rng, &space, [&a, &b, &c], &positive, checks)?;
            worst_oracle = worst_oracle.max(deviation);
        }
        summary.insert("instances".into(), self.repetitions as f64);
        summary.insert("max_oracle_deviation".into(), worst_oracle);
        Ok(())
    }
}

/// Points on a 0.1 lattice in the unit square, so that distance ties are common.
pub fn random_lattice_space(rng: &mut ChaCha8Rng, size: usize) -> FiniteMetricSpace {
    let coords: Vec<Vec<f64>> = (0..size)
        .map(|_| vec![rng.gen_range(0..=10) as f64 / 10.0, rng.gen_range(0..=10) as f64 / 10.0])
        .collect();
    build_grid_space(&coords).expect("lattice coordinates are finite")
}

/// Shortest-path metric of a complete graph with random edge lengths in `(0, 2]`.
#[allow(clippy::needless_range_loop)]
pub fn random_graph_space(rng: &mut ChaCha8Rng, size: usize) -> FiniteMetricSpace {
    let mut d = vec![vec![0.0; size]; size];
    for i in 0..size {
        for j in (i + 1)..size {
            let w = rng.gen_range(1..=40) as f64 / 20.0;
            d[i][j] = w;
            d[j][i] = w;
        }
    }
    for k in 0..size {
        for i in 0..size {
            for j in 0..size {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    FiniteMetricSpace::from_matrix(d).expect("shortest paths form a metric")
}

/// Random probability measure; unless `full`, roughly a third of the points get no mass.
pub fn random_measure(rng: &mut ChaCha8Rng, space: &Arc<FiniteMetricSpace>, full: bool) -> DiscreteMeasure {
    loop {
        let w: Vec<f64> = (0..space.len())
            .map(|_| {
                if !full && rng.gen_bool(1.0 / 3.0) {
                    0.0
                } else {
                    rng.gen_range(0.01..1.0)
                }
            })
            .collect();
        if w.iter().any(|&x| x > 0.0) {
            return DiscreteMeasure::from_unnormalized(space.clone(), w).expect("weights are positive");
        }
    }
}

/// Runs every check on one random instance and returns the oracle deviation.
fn sweep_instance(
    rng: &mut ChaCha8Rng,
    space: &Arc<FiniteMetricSpace>,
    triple: [&DiscreteMeasure; 3],
    positive: &[DiscreteMeasure; 2],
    checks: &mut Checks,
) -> Result<f64> {
    let [a, b, c] = triple;
    let pr = prokhorov(a, b)?;
    let deviation = (pr - prokhorov_oracle(a, b)?).abs();
    checks.at_most("prokhorov matches subset oracle", deviation, DISTANCE_SLACK);

    type Metric = fn(&DiscreteMeasure, &DiscreteMeasure) -> Result<f64>;
    let metrics: [(&str, Metric); 3] = [
        ("total_variation", total_variation),
        ("hellinger", hellinger),
        ("prokhorov", prokhorov),
    ];
    for (name, d) in metrics {
        let (ab, ba, bc, ac) = (d(a, b)?, d(b, a)?, d(b, c)?, d(a, c)?);
        checks.at_most(&format!("{name} symmetric"), (ab - ba).abs(), CHAIN_SLACK);
        checks.at_most(&format!("{name} triangle inequality"), ac, ab + bc + CHAIN_SLACK);
        checks.at_most(&format!("{name} vanishes on the diagonal"), d(a, a)?, 0.0);
    }

    let [p, q] = positive;
    let tv = total_variation(p, q)?;
    let h = hellinger(p, q)?;
    checks.at_most("prokhorov <= total_variation", prokhorov(p, q)?, tv + CHAIN_SLACK);
    checks.at_most("tv^2 / 2 <= kl", 0.5 * tv * tv, kl_divergence(p, q)?.min(kl_divergence(q, p)?) + CHAIN_SLACK);
    checks.at_most("hellinger^2 <= total_variation", h * h, tv + CHAIN_SLACK);
    checks.at_most("total_variation <= sqrt(2) hellinger", tv, std::f64::consts::SQRT_2 * h + CHAIN_SLACK);

    // one-set lower bound on the Prokhorov distance
    let n = space.len();
    let members: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
    let set = IndexSet::new(members, n)?;
    let alpha = rng.gen_range(0.0..1.2);
    let delta = a.mass(&space.enlarge(&set, alpha, Enlargement::Open)?);
    checks.at_most("one-set lower bound", alpha.min(b.mass(&set) - delta), pr + DISTANCE_SLACK);

    let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
    let di = DiscreteMeasure::dirac(space.clone(), i)?;
    let dj = DiscreteMeasure::dirac(space.clone(), j)?;
    checks.holds("dirac pair closed form", prokhorov(&di, &dj)? == space.dist(i, j).min(1.0));

    let samples: Vec<DiscreteMeasure> = (0..rng.gen_range(1..=8)).map(|_| random_measure(rng, space, false)).collect();
    let law = EmpiricalLaw::new(samples)?;
    let ky = ky_fan_to_dirac(&law, &di)?;
    let meta = meta_prokhorov(&law, &EmpiricalLaw::repeated(di, 1)?)?;
    checks.at_most("ky_fan equals meta_prokhorov to a Dirac", (ky - meta).abs(), DISTANCE_SLACK);
    Ok(deviation)
}
