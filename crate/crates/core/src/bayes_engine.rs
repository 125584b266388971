//! Dominated categorical models on gridded parameter spaces, exact Bayes
//! updates, and seeded Monte Carlo sampling of posterior laws.

use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{kl_weights, same_space, DiscreteMeasure, INPUT_MASS_TOLERANCE};
use crate::metric_space::{build_grid_space, FiniteMetricSpace};
use crate::prob_metrics::{prokhorov, EmpiricalLaw, PairedDistanceSample};

/// Likelihood matrix `p(x | theta)` over a finite outcome set and a finite grid.
#[derive(Debug, Clone)]
pub struct CategoricalModel {
    theta_space: Arc<FiniteMetricSpace>,
    lik: Vec<Vec<f64>>,
    log_lik: Vec<Vec<f64>>,
    outcomes: usize,
}

impl CategoricalModel {
    /// One row-stochastic likelihood row per point of `theta_space`.
    pub fn new(theta_space: Arc<FiniteMetricSpace>, lik: Vec<Vec<f64>>) -> Result<Self> {
        if lik.len() != theta_space.len() {
            return Err(Error::InvalidInput(format!(
                "{} likelihood rows for {} parameter points",
                lik.len(),
                theta_space.len()
            )));
        }
        let outcomes = lik[0].len();
        if outcomes < 2 {
            return Err(Error::InvalidInput("a model needs at least two outcomes".into()));
        }
        let mut rows = Vec::with_capacity(lik.len());
        for (i, row) in lik.into_iter().enumerate() {
            if row.len() != outcomes {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} outcomes, expected {outcomes}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidInput(format!("row {i} has a negative or non-finite entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > INPUT_MASS_TOLERANCE {
                return Err(Error::InvalidInput(format!("row {i} sums to {total}, expected 1")));
            }
            rows.push(row.into_iter().map(|p| p / total).collect::<Vec<f64>>());
        }
        let log_lik = rows
            .iter()
            .map(|r| r.iter().map(|p| p.ln()).collect())
            .collect();
        Ok(CategoricalModel {
            theta_space,
            lik: rows,
            log_lik,
            outcomes,
        })
    }

    /// Bernoulli model: outcome 1 has probability `probs[i]` at grid point `i`.
    pub fn bernoulli(theta_space: Arc<FiniteMetricSpace>, probs: &[f64]) -> Result<Self> {
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidInput(format!("Bernoulli probability {p} outside [0, 1]")));
        }
        let rows = probs.iter().map(|&p| vec![1.0 - p, p]).collect();
        Self::new(theta_space, rows)
    }

    /// Bernoulli model on a one-dimensional grid where the coordinate is the
    /// success probability.
    pub fn bernoulli_grid(points: &[f64]) -> Result<Self> {
        let coords: Vec<Vec<f64>> = points.iter().map(|&x| vec![x]).collect();
        let space = Arc::new(build_grid_space(&coords)?);
        Self::bernoulli(space, points)
    }

    /// Two independent Bernoulli factors observed jointly. Grid points are
    /// `(t1, t2)` for `t1` in `theta1`, `t2` in `theta2` (row-major in `t1`);
    /// the first factor succeeds with probability `t1`, the second with
    /// `base2 + slope2 * t2`. Outcome index is `2 * x1 + x2`.
    pub fn product_bernoulli(theta1: &[f64], theta2: &[f64], base2: f64, slope2: f64) -> Result<Self> {
        let mut coords = Vec::with_capacity(theta1.len() * theta2.len());
        let mut rows = Vec::with_capacity(coords.capacity());
        for &t1 in theta1 {
            for &t2 in theta2 {
                let p1 = t1;
                let p2 = base2 + slope2 * t2;
                if !(0.0..=1.0).contains(&p1) || !(0.0..=1.0).contains(&p2) {
                    return Err(Error::InvalidInput(format!(
                        "factor probabilities ({p1}, {p2}) at ({t1}, {t2}) outside [0, 1]"
                    )));
                }
                coords.push(vec![t1, t2]);
                rows.push(vec![
                    (1.0 - p1) * (1.0 - p2),
                    (1.0 - p1) * p2,
                    p1 * (1.0 - p2),
                    p1 * p2,
                ]);
            }
        }
        let space = Arc::new(build_grid_space(&coords)?);
        Self::new(space, rows)
    }

    pub fn theta_space(&self) -> &Arc<FiniteMetricSpace> {
        &self.theta_space
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn row(&self, theta: usize) -> &[f64] {
        &self.lik[theta]
    }

    pub fn len(&self) -> usize {
        self.lik.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lik.is_empty()
    }

    /// First pair of grid points with identical likelihood rows, if any.
    pub fn duplicate_rows(&self) -> Option<(usize, usize)> {
        for i in 0..self.lik.len() {
            for j in (i + 1)..self.lik.len() {
                if self.lik[i] == self.lik[j] {
                    return Some((i, j));
                }
            }
        }
        None
    }

    pub fn ensure_injective(&self) -> Result<()> {
        match self.duplicate_rows() {
            None => Ok(()),
            Some((i, j)) => Err(Error::Config(format!(
                "model is not injective: grid points {i} and {j} share a likelihood row"
            ))),
        }
    }
}

/// `K(P_i || P_j)` between two rows of the model.
pub fn model_kl(model: &CategoricalModel, i: usize, j: usize) -> Result<f64> {
    model.theta_space.check_index(i)?;
    model.theta_space.check_index(j)?;
    Ok(kl_weights(&model.lik[i], &model.lik[j]))
}

/// Seed for one replicate's random stream, derived from a root seed, an
/// experiment id and a replicate id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed {
    pub seed: u64,
    pub experiment: u64,
    pub replicate: u64,
}

impl RngSeed {
    pub fn new(seed: u64, experiment: u64) -> Self {
        RngSeed {
            seed,
            experiment,
            replicate: 0,
        }
    }

    pub fn with_replicate(self, replicate: u64) -> Self {
        RngSeed { replicate, ..self }
    }

    /// ChaCha8 keyed by the root seed, on a stream selected by the ids.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(splitmix64(splitmix64(self.experiment) ^ self.replicate));
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// i.i.d. outcome indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub draws: Vec<usize>,
}

impl Dataset {
    pub fn new(draws: Vec<usize>) -> Self {
        Dataset { draws }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn counts(&self, outcomes: usize) -> Vec<u64> {
        let mut c = vec![0u64; outcomes];
        for &x in &self.draws {
            c[x] += 1;
        }
        c
    }
}

/// `n` draws from the row of `theta`; the first `k` draws do not depend on `n`.
pub fn sample_data(model: &CategoricalModel, theta: usize, n: usize, seed: &RngSeed) -> Result<Dataset> {
    model.theta_space.check_index(theta)?;
    if n == 0 {
        return Ok(Dataset::default());
    }
    let dist = WeightedIndex::new(&model.lik[theta])
        .map_err(|e| Error::Invariant(format!("likelihood row {theta}: {e}")))?;
    let mut rng = seed.rng();
    Ok(Dataset::new((0..n).map(|_| dist.sample(&mut rng)).collect()))
}

/// Exact posterior, accumulated in log space.
pub fn posterior(prior: &DiscreteMeasure, model: &CategoricalModel, data: &Dataset) -> Result<DiscreteMeasure> {
    if !same_space(prior.space(), &model.theta_space) {
        return Err(Error::SpaceMismatch);
    }
    if let Some(&x) = data.draws.iter().find(|&&x| x >= model.outcomes) {
        return Err(Error::InvalidInput(format!(
            "outcome {x} outside a model with {} outcomes",
            model.outcomes
        )));
    }
    if data.is_empty() {
        return Ok(prior.clone());
    }
    let counts = data.counts(model.outcomes);
    let log_post: Vec<f64> = prior
        .weights()
        .iter()
        .zip(&model.log_lik)
        .map(|(&w, row)| {
            if w == 0.0 {
                return f64::NEG_INFINITY;
            }
            let mut acc = w.ln();
            for (&c, &ll) in counts.iter().zip(row) {
                if c > 0 {
                    acc += c as f64 * ll;
                }
            }
            acc
        })
        .collect();
    let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::UndefinedPosterior);
    }
    let weights = log_post.iter().map(|&l| (l - max).exp()).collect();
    DiscreteMeasure::from_unnormalized(prior.space().clone(), weights)
}

/// Posteriors of several priors under `replicates` shared datasets of size `n`
/// drawn at `data_theta`. Entry `k` of the result is the law for `priors[k]`;
/// sample `r` of every law comes from the same dataset.
pub fn coupled_posterior_laws(
    priors: &[&DiscreteMeasure],
    model: &CategoricalModel,
    data_theta: usize,
    n: usize,
    replicates: usize,
    seed: &RngSeed,
) -> Result<Vec<EmpiricalLaw>> {
    if replicates == 0 {
        return Err(Error::InvalidInput("at least one replicate is required".into()));
    }
    model.theta_space.check_index(data_theta)?;
    let per_replicate: Vec<Vec<DiscreteMeasure>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let data = sample_data(model, data_theta, n, &seed.with_replicate(r as u64))?;
            priors.iter().map(|p| posterior(p, model, &data)).collect()
        })
        .collect::<Result<_>>()?;
    (0..priors.len())
        .map(|k| EmpiricalLaw::new(per_replicate.iter().map(|row| row[k].clone()).collect()))
        .collect()
}

/// Monte Carlo law of the posterior of `prior` under data from `data_theta`.
pub fn posterior_law(
    prior: &DiscreteMeasure,
    model: &CategoricalModel,
    data_theta: usize,
    n: usize,
    replicates: usize,
    seed: &RngSeed,
) -> Result<EmpiricalLaw> {
    let mut laws = coupled_posterior_laws(&[prior], model, data_theta, n, replicates, seed)?;
    Ok(laws.remove(0))
}

/// Prokhorov distances between the two posteriors computed from each shared dataset.
pub fn coupled_posterior_distances(
    prior1: &DiscreteMeasure,
    prior2: &DiscreteMeasure,
    model: &CategoricalModel,
    data_theta: usize,
    n: usize,
    replicates: usize,
    seed: &RngSeed,
) -> Result<PairedDistanceSample> {
    let laws = coupled_posterior_laws(&[prior1, prior2], model, data_theta, n, replicates, seed)?;
    paired_distances(&laws[0], &laws[1])
}

/// Prokhorov distance between the `r`-th samples of two laws, for every `r`.
pub fn paired_distances(law1: &EmpiricalLaw, law2: &EmpiricalLaw) -> Result<PairedDistanceSample> {
    if law1.len() != law2.len() {
        return Err(Error::InvalidInput("coupled laws must have equal sample counts".into()));
    }
    let d: Vec<f64> = law1
        .samples()
        .par_iter()
        .zip(law2.samples())
        .map(|(a, b)| prokhorov(a, b))
        .collect::<Result<_>>()?;
    PairedDistanceSample::new(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric_space::line_points;
    use crate::prob_metrics::{ky_fan_empirical, meta_prokhorov};
    use proptest::prelude::*;

    fn two_point() -> CategoricalModel {
        CategoricalModel::bernoulli_grid(&[0.3, 0.7]).unwrap()
    }

    fn grid101() -> CategoricalModel {
        let pts: Vec<f64> = line_points(0.0, 1.0, 101).unwrap().into_iter().map(|p| p[0]).collect();
        CategoricalModel::bernoulli_grid(&pts).unwrap()
    }

    #[test]
    fn model_validation() {
        let s = Arc::new(build_grid_space(&[vec![0.0], vec![1.0]]).unwrap());
        assert!(CategoricalModel::new(s.clone(), vec![vec![1.0], vec![1.0]]).is_err());
        assert!(CategoricalModel::new(s.clone(), vec![vec![0.5, 0.6], vec![0.5, 0.5]]).is_err());
        assert!(CategoricalModel::new(s.clone(), vec![vec![0.5, 0.5]]).is_err());
        let dup = CategoricalModel::new(s, vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(dup.duplicate_rows(), Some((0, 1)));
        assert!(dup.ensure_injective().is_err());
        assert!(grid101().ensure_injective().is_ok());
    }

    #[test]
    fn model_kl_examples() {
        let m = CategoricalModel::bernoulli_grid(&[0.5, 0.75, 0.0, 1.0]).unwrap();
        assert_eq!(model_kl(&m, 1, 1).unwrap(), 0.0);
        // Bernoulli rows [0.5, 0.5] vs [0.25, 0.75]
        let closed_form = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        assert!((model_kl(&m, 0, 1).unwrap() - closed_form).abs() < 1e-15);
        assert_eq!(model_kl(&m, 2, 3).unwrap(), f64::INFINITY);
        assert!(model_kl(&m, 0, 9).is_err());
    }

    #[test]
    fn sampling() {
        let m = CategoricalModel::bernoulli_grid(&[0.0, 0.7]).unwrap();
        let seed = RngSeed::new(11, 0);
        assert!(sample_data(&m, 1, 0, &seed).unwrap().is_empty());
        let zeros = sample_data(&m, 0, 500, &seed).unwrap();
        assert!(zeros.draws.iter().all(|&x| x == 0));
        let big = sample_data(&m, 1, 100_000, &seed).unwrap();
        let freq = big.counts(2)[1] as f64 / 100_000.0;
        assert!((freq - 0.7).abs() <= 0.01, "frequency {freq}");
        assert_eq!(big, sample_data(&m, 1, 100_000, &seed).unwrap());
        let prefix = sample_data(&m, 1, 100, &seed).unwrap();
        assert_eq!(&big.draws[..100], &prefix.draws[..]);
        assert!(sample_data(&m, 2, 5, &seed).is_err());
    }

    #[test]
    fn posterior_examples() {
        let m = two_point();
        let s = m.theta_space().clone();
        let uniform = DiscreteMeasure::uniform(s.clone());
        assert_eq!(posterior(&uniform, &m, &Dataset::default()).unwrap(), uniform);

        let post = posterior(&uniform, &m, &Dataset::new(vec![1])).unwrap();
        assert!((post.weight(0) - 0.3).abs() < 1e-15);
        assert!((post.weight(1) - 0.7).abs() < 1e-15);

        let dirac = DiscreteMeasure::dirac(s.clone(), 1).unwrap();
        let post = posterior(&dirac, &m, &Dataset::new(vec![0, 1, 1, 0, 1])).unwrap();
        assert_eq!(post, dirac);
    }

    #[test]
    fn singular_posterior_is_an_error() {
        let m = CategoricalModel::bernoulli_grid(&[0.0, 0.5]).unwrap();
        let prior = DiscreteMeasure::dirac(m.theta_space().clone(), 0).unwrap();
        assert!(matches!(
            posterior(&prior, &m, &Dataset::new(vec![1])),
            Err(Error::UndefinedPosterior)
        ));
        assert!(posterior(&prior, &m, &Dataset::new(vec![2])).is_err());
    }

    #[test]
    fn long_data_does_not_underflow() {
        let m = grid101();
        let prior = DiscreteMeasure::uniform(m.theta_space().clone());
        let data = sample_data(&m, 70, 100_000, &RngSeed::new(3, 1)).unwrap();
        let post = posterior(&prior, &m, &data).unwrap();
        let total: f64 = post.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(post.weight(70) > 0.5);
    }

    #[test]
    fn posterior_law_examples() {
        let m = grid101();
        let s = m.theta_space().clone();
        let seed = RngSeed::new(5, 2);
        let dirac = DiscreteMeasure::dirac(s.clone(), 20).unwrap();
        let law = posterior_law(&dirac, &m, 70, 50, 8, &seed).unwrap();
        assert!(law.samples().iter().all(|p| *p == dirac));
        let uniform = DiscreteMeasure::uniform(s.clone());
        let law = posterior_law(&uniform, &m, 70, 0, 4, &seed).unwrap();
        assert!(law.samples().iter().all(|p| *p == uniform));
        assert!(posterior_law(&uniform, &m, 70, 5, 0, &seed).is_err());
    }

    #[test]
    fn coupled_distances_examples() {
        let m = grid101();
        let s = m.theta_space().clone();
        let seed = RngSeed::new(9, 0);
        let u = DiscreteMeasure::uniform(s.clone());
        let same = coupled_posterior_distances(&u, &u, &m, 70, 20, 6, &seed).unwrap();
        assert!(same.distances().iter().all(|&d| d == 0.0));
        let a = DiscreteMeasure::dirac(s.clone(), 20).unwrap();
        let b = DiscreteMeasure::dirac(s.clone(), 90).unwrap();
        let d = coupled_posterior_distances(&a, &b, &m, 70, 20, 6, &seed).unwrap();
        assert!(d.distances().iter().all(|&x| (x - 0.7).abs() < 1e-12));
    }

    #[test]
    fn posterior_law_is_thread_count_independent() {
        let m = grid101();
        let u = DiscreteMeasure::uniform(m.theta_space().clone());
        let seed = RngSeed::new(17, 4);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| posterior_law(&u, &m, 30, 200, 16, &seed).unwrap())
        };
        let (a, b) = (run(1), run(4));
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert_eq!(x.weights(), y.weights());
        }
    }

    #[test]
    fn coupled_meta_prokhorov_is_dominated_by_ky_fan() {
        let m = grid101();
        let s = m.theta_space().clone();
        let u = DiscreteMeasure::uniform(s.clone());
        let mixed = crate::perturbation_lab::dirac_contamination(&u, 20, 0.05).unwrap();
        let seed = RngSeed::new(23, 0);
        for n in [1, 30, 300] {
            let laws = coupled_posterior_laws(&[&u, &mixed], &m, 70, n, 12, &seed).unwrap();
            let kf = ky_fan_empirical(&paired_distances(&laws[0], &laws[1]).unwrap());
            let meta = meta_prokhorov(&laws[0], &laws[1]).unwrap();
            assert!(meta <= kf + 1e-9, "n = {n}: {meta} > {kf}");
        }
    }

    proptest! {
        #[test]
        fn posterior_chaining(
            w in prop::collection::vec(0.0f64..1.0, 5),
            d1 in prop::collection::vec(0usize..2, 0..60),
            d2 in prop::collection::vec(0usize..2, 0..60),
        ) {
            prop_assume!(w.iter().sum::<f64>() > 0.0);
            let m = CategoricalModel::bernoulli_grid(&[0.1, 0.3, 0.5, 0.7, 0.9]).unwrap();
            let prior = DiscreteMeasure::from_unnormalized(m.theta_space().clone(), w).unwrap();
            let step = posterior(&posterior(&prior, &m, &Dataset::new(d1.clone())).unwrap(), &m, &Dataset::new(d2.clone())).unwrap();
            let joint: Vec<usize> = d1.into_iter().chain(d2).collect();
            let once = posterior(&prior, &m, &Dataset::new(joint)).unwrap();
            for (a, b) in step.weights().iter().zip(once.weights()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn model_level_pinsker(p in 0.001f64..0.999, q in 0.001f64..0.999) {
            let m = CategoricalModel::bernoulli_grid(&[p, q]).unwrap();
            let tv = crate::measures::tv_weights(m.row(0), m.row(1));
            prop_assert!(model_kl(&m, 0, 1).unwrap() >= 0.5 * tv * tv - 1e-12);
        }
    }
}
