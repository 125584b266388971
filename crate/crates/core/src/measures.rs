//! Discrete probability measures on a [`FiniteMetricSpace`] and the
//! elementary divergences between them.

use std::sync::Arc;

use serde::ser::{Serialize, SerializeSeq, Serializer};

use crate::error::{Error, Result};
use crate::metric_space::{FiniteMetricSpace, IndexSet};

/// Tolerance on total mass after normalization.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Inputs whose mass is further than this from 1 are rejected by [`DiscreteMeasure::new`].
pub const INPUT_MASS_TOLERANCE: f64 = 1e-6;

/// Probability weights over the points of a shared metric space.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    space: Arc<FiniteMetricSpace>,
    weights: Vec<f64>,
}

impl PartialEq for DiscreteMeasure {
    fn eq(&self, other: &Self) -> bool {
        same_space(&self.space, &other.space) && self.weights == other.weights
    }
}

impl Serialize for DiscreteMeasure {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.weights.len()))?;
        for w in &self.weights {
            seq.serialize_element(w)?;
        }
        seq.end()
    }
}

pub(crate) fn same_space(a: &Arc<FiniteMetricSpace>, b: &Arc<FiniteMetricSpace>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl DiscreteMeasure {
    /// Weights that already sum to one (within [`INPUT_MASS_TOLERANCE`]); renormalized.
    pub fn new(space: Arc<FiniteMetricSpace>, weights: Vec<f64>) -> Result<Self> {
        let total = check_weights(&space, &weights)?;
        if (total - 1.0).abs() > INPUT_MASS_TOLERANCE {
            return Err(Error::InvalidInput(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self::normalized(space, weights, total))
    }

    /// Any nonnegative weights with positive total, divided by their sum.
    pub fn from_unnormalized(space: Arc<FiniteMetricSpace>, weights: Vec<f64>) -> Result<Self> {
        let total = check_weights(&space, &weights)?;
        Ok(Self::normalized(space, weights, total))
    }

    fn normalized(space: Arc<FiniteMetricSpace>, mut weights: Vec<f64>, total: f64) -> Self {
        if total != 1.0 {
            for w in &mut weights {
                *w /= total;
            }
        }
        DiscreteMeasure { space, weights }
    }

    /// Unit mass at `index`.
    pub fn dirac(space: Arc<FiniteMetricSpace>, index: usize) -> Result<Self> {
        space.check_index(index)?;
        let mut weights = vec![0.0; space.len()];
        weights[index] = 1.0;
        Ok(DiscreteMeasure { space, weights })
    }

    pub fn uniform(space: Arc<FiniteMetricSpace>) -> Self {
        let n = space.len();
        DiscreteMeasure {
            space,
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// Uniform on `set`, zero elsewhere.
    pub fn uniform_on(space: Arc<FiniteMetricSpace>, set: &IndexSet) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::InvalidInput("uniform measure on an empty set".into()));
        }
        let mut weights = vec![0.0; space.len()];
        for i in set.iter() {
            space.check_index(i)?;
            weights[i] = 1.0;
        }
        Self::from_unnormalized(space, weights)
    }

    pub fn space(&self) -> &Arc<FiniteMetricSpace> {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.weights[index]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Indices carrying positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    pub fn mass(&self, set: &IndexSet) -> f64 {
        set.iter().map(|i| self.weights[i]).sum()
    }

    pub fn ensure_same_space(&self, other: &DiscreteMeasure) -> Result<()> {
        if same_space(&self.space, &other.space) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }
}

fn check_weights(space: &FiniteMetricSpace, weights: &[f64]) -> Result<f64> {
    if weights.len() != space.len() {
        return Err(Error::InvalidInput(format!(
            "{} weights for a space of {} points",
            weights.len(),
            space.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidInput(format!("weight {w} is not a finite nonnegative number")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput("weights have zero total mass".into()));
    }
    Ok(total)
}

/// `sup_A |mu(A) - nu(A)|`, i.e. half the L1 distance.
pub fn total_variation(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    mu.ensure_same_space(nu)?;
    Ok(tv_weights(&mu.weights, &nu.weights))
}

pub(crate) fn tv_weights(p: &[f64], q: &[f64]) -> f64 {
    let l1: f64 = p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum();
    (0.5 * l1).min(1.0)
}

/// Kullback-Leibler divergence `K(mu || nu)` in nats; `+inf` when `mu` is not
/// absolutely continuous with respect to `nu`.
pub fn kl_divergence(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    mu.ensure_same_space(nu)?;
    Ok(kl_weights(&mu.weights, &nu.weights))
}

pub(crate) fn kl_weights(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return f64::INFINITY;
        }
        total += a * (a / b).ln();
    }
    total.max(0.0)
}

/// `sqrt(1/2 * sum (sqrt(mu_i) - sqrt(nu_i))^2)`, in `[0, 1]`.
pub fn hellinger(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    mu.ensure_same_space(nu)?;
    let s: f64 = mu
        .weights
        .iter()
        .zip(&nu.weights)
        .map(|(a, b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    Ok((0.5 * s).sqrt().min(1.0))
}
