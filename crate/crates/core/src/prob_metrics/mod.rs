//! Prokhorov, Ky Fan and second-order Prokhorov metrics.
//!
//! The exact Prokhorov distance on a finite space uses the coupling
//! characterization: `d_Pr(mu, nu) <= eps` iff some coupling puts at most
//! `eps` mass on pairs further apart than `eps`. Writing `f(t)` for one minus
//! the largest mass couplable along pairs with `d <= t`, the distance is
//! `min_k max(t_k, f(t_k))` over the sorted pairwise distances `t_k` (with
//! `t_0 = 0`). Because `t_k` increases and `f` does not, the minimum sits at
//! the crossing, which is found by binary search over warm-started flows.

mod flow;
mod oracle;

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{same_space, DiscreteMeasure};
use crate::metric_space::FiniteMetricSpace;

use flow::CouplingNetwork;
pub use oracle::{prokhorov_oracle, ORACLE_SUPPORT_LIMIT};

/// Masses below this are left out of the flow network. The Prokhorov distance
/// is 1-Lipschitz in total variation, so the answer moves by at most the
/// dropped mass.
pub const FLOW_PRUNE_MASS: f64 = 1e-16;

/// Exact Prokhorov distance between two measures on the same space.
pub fn prokhorov(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    mu.ensure_same_space(nu)?;
    Ok(prokhorov_weights(mu.space(), mu.weights(), nu.weights()))
}

pub(crate) fn prokhorov_weights(space: &FiniteMetricSpace, p: &[f64], q: &[f64]) -> f64 {
    if p == q {
        return 0.0;
    }
    // canonical argument order keeps the result bitwise symmetric
    let ordered = p
        .iter()
        .zip(q)
        .map(|(a, b)| a.total_cmp(b))
        .find(|o| o.is_ne())
        .is_some_and(|o| o.is_gt());
    let (p, q) = if ordered { (q, p) } else { (p, q) };
    let left: Vec<usize> = (0..p.len()).filter(|&i| p[i] > FLOW_PRUNE_MASS).collect();
    let right: Vec<usize> = (0..q.len()).filter(|&j| q[j] > FLOW_PRUNE_MASS).collect();
    let cross: Vec<Vec<f64>> = left
        .iter()
        .map(|&i| right.iter().map(|&j| space.dist(i, j)).collect())
        .collect();

    let mut thresholds: Vec<f64> = cross.iter().flatten().copied().collect();
    thresholds.push(0.0);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let left_mass: Vec<f64> = left.iter().map(|&i| p[i]).collect();
    let right_mass: Vec<f64> = right.iter().map(|&j| q[j]).collect();
    let mut net = CouplingNetwork::new(&left_mass, &right_mass, &cross);

    // Invariant: every index <= lo is infeasible (f(t) > t); `lo_state` is the
    // flow at `thresholds[lo]`. Index `hi` is feasible or the last candidate.
    let mut lo: Option<(usize, f64)> = None;
    let mut lo_state = net.save();
    let mut hi = thresholds.len() - 1;
    let mut hi_deficit: Option<f64> = None;
    let mut start = 0usize;
    while start < hi {
        let mid = start + (hi - start) / 2;
        net.restore(&lo_state);
        let deficit = (1.0 - net.max_flow(thresholds[mid])).max(0.0);
        if deficit <= thresholds[mid] {
            hi = mid;
            hi_deficit = Some(deficit);
        } else {
            lo = Some((mid, deficit));
            lo_state = net.save();
            start = mid + 1;
        }
    }
    let hi_deficit = hi_deficit.unwrap_or_else(|| {
        net.restore(&lo_state);
        (1.0 - net.max_flow(thresholds[hi])).max(0.0)
    });
    let at_hi = thresholds[hi].max(hi_deficit);
    let best = match lo {
        Some((_, lo_deficit)) => at_hi.min(lo_deficit),
        None => at_hi,
    };
    best.clamp(0.0, 1.0)
}

/// Uniformly weighted sample of measures on a common space.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw {
    samples: Vec<DiscreteMeasure>,
}

impl EmpiricalLaw {
    pub fn new(samples: Vec<DiscreteMeasure>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidInput("empirical law needs at least one sample".into()))?;
        if samples.iter().any(|s| !same_space(s.space(), first.space())) {
            return Err(Error::SpaceMismatch);
        }
        Ok(EmpiricalLaw { samples })
    }

    /// `count` copies of one measure.
    pub fn repeated(measure: DiscreteMeasure, count: usize) -> Result<Self> {
        Self::new(vec![measure; count])
    }

    pub fn samples(&self) -> &[DiscreteMeasure] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn space(&self) -> &Arc<FiniteMetricSpace> {
        self.samples[0].space()
    }
}

/// Distances between coupled pairs of random measures, one per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDistanceSample {
    distances: Vec<f64>,
}

impl PairedDistanceSample {
    pub fn new(distances: Vec<f64>) -> Result<Self> {
        if distances.is_empty() {
            return Err(Error::InvalidInput("paired distance sample is empty".into()));
        }
        if let Some(d) = distances.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(Error::InvalidInput(format!("distance {d} is not finite and nonnegative")));
        }
        Ok(PairedDistanceSample { distances })
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }
}

/// Ky Fan distance of the empirical distribution of `sample`:
/// the smallest `eps` with `#{d_i > eps} / N <= eps`.
pub fn ky_fan_empirical(sample: &PairedDistanceSample) -> f64 {
    let mut d = sample.distances.clone();
    d.sort_by(f64::total_cmp);
    let n = d.len() as f64;
    let exceed = |t: f64| (d.len() - d.partition_point(|&x| x <= t)) as f64 / n;
    let mut best = exceed(0.0);
    for &t in &d {
        if t >= best {
            break;
        }
        best = best.min(t.max(exceed(t)));
    }
    best
}

/// Distinct samples of the concatenation `law1 ++ law2`, with the class of
/// each position. Samples are merged only when their weights are bitwise equal.
fn dedup_samples<'a>(laws: &[&'a EmpiricalLaw]) -> (Vec<&'a DiscreteMeasure>, Vec<usize>) {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut distinct = Vec::new();
    let mut class = Vec::new();
    for law in laws {
        for s in &law.samples {
            let key: Vec<u64> = s.weights().iter().map(|w| w.to_bits()).collect();
            let id = *index.entry(key).or_insert_with(|| {
                distinct.push(s);
                distinct.len() - 1
            });
            class.push(id);
        }
    }
    (distinct, class)
}

/// Pairwise Prokhorov distances among `measures`, computed in parallel.
/// The result does not depend on the thread count.
pub fn prokhorov_matrix(measures: &[&DiscreteMeasure]) -> Vec<Vec<f64>> {
    let k = measures.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| ((i + 1)..k).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (measures[i], measures[j]);
            prokhorov_weights(a.space(), a.weights(), b.weights())
        })
        .collect();
    let mut m = vec![vec![0.0; k]; k];
    for (&(i, j), &v) in pairs.iter().zip(&values) {
        m[i][j] = v;
        m[j][i] = v;
    }
    m
}

/// The meta-space whose points are the samples of `law1` followed by those of
/// `law2`, metrized by the Prokhorov distance on the parameter space.
pub fn meta_space(law1: &EmpiricalLaw, law2: &EmpiricalLaw) -> Result<FiniteMetricSpace> {
    if !same_space(law1.space(), law2.space()) {
        return Err(Error::SpaceMismatch);
    }
    let (distinct, class) = dedup_samples(&[law1, law2]);
    let d = prokhorov_matrix(&distinct);
    let dist: Vec<Vec<f64>> = class
        .iter()
        .map(|&a| class.iter().map(|&b| d[a][b]).collect())
        .collect();
    let labels = (0..class.len())
        .map(|i| {
            if i < law1.len() {
                format!("a{i}")
            } else {
                format!("b{}", i - law1.len())
            }
        })
        .collect();
    FiniteMetricSpace::new(labels, dist)
}

/// Prokhorov distance between two empirical laws of measures.
pub fn meta_prokhorov(law1: &EmpiricalLaw, law2: &EmpiricalLaw) -> Result<f64> {
    let space = meta_space(law1, law2)?;
    let (m1, m2) = (law1.len(), law2.len());
    let mut p = vec![0.0; m1 + m2];
    let mut q = vec![0.0; m1 + m2];
    p[..m1].iter_mut().for_each(|w| *w = 1.0 / m1 as f64);
    q[m1..].iter_mut().for_each(|w| *w = 1.0 / m2 as f64);
    Ok(prokhorov_weights(&space, &p, &q))
}

/// Prokhorov distance from each sample of `law` to `target`.
pub fn distances_to(law: &EmpiricalLaw, target: &DiscreteMeasure) -> Result<PairedDistanceSample> {
    if !same_space(law.space(), target.space()) {
        return Err(Error::SpaceMismatch);
    }
    let (distinct, class) = dedup_samples(&[law]);
    let d: Vec<f64> = distinct
        .par_iter()
        .map(|s| prokhorov_weights(s.space(), s.weights(), target.weights()))
        .collect();
    PairedDistanceSample::new(class.iter().map(|&c| d[c]).collect())
}

/// Ky Fan distance between the random measure behind `law` and the constant `target`.
pub fn ky_fan_to_dirac(law: &EmpiricalLaw, target: &DiscreteMeasure) -> Result<f64> {
    Ok(ky_fan_empirical(&distances_to(law, target)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::total_variation;
    use crate::metric_space::{build_grid_space, line_grid, Enlargement, IndexSet};
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> Arc<FiniteMetricSpace> {
        Arc::new(build_grid_space(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap())
    }

    #[test]
    fn prokhorov_of_identical_measures_is_zero() {
        let s = Arc::new(line_grid(0.0, 1.0, 5).unwrap());
        let u = DiscreteMeasure::uniform(s);
        assert_eq!(prokhorov(&u, &u).unwrap(), 0.0);
    }

    #[test]
    fn prokhorov_of_diracs() {
        let s = line(&[0.0, 0.3, 2.3]);
        let d = |i| DiscreteMeasure::dirac(s.clone(), i).unwrap();
        assert_eq!(prokhorov(&d(0), &d(1)).unwrap(), 0.3);
        assert_eq!(prokhorov(&d(1), &d(2)).unwrap(), 1.0);
        assert_eq!(prokhorov(&d(0), &d(1)).unwrap(), prokhorov_oracle(&d(0), &d(1)).unwrap());
    }

    #[test]
    fn mass_deficiency_example() {
        let s = line(&[0.0, 1.0]);
        let a = DiscreteMeasure::new(s.clone(), vec![0.7, 0.3]).unwrap();
        let b = DiscreteMeasure::new(s, vec![0.3, 0.7]).unwrap();
        assert!((prokhorov(&a, &b).unwrap() - 0.4).abs() < 1e-15);
        assert!((prokhorov_oracle(&a, &b).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn prokhorov_rejects_mismatched_spaces() {
        let a = DiscreteMeasure::uniform(line(&[0.0, 1.0]));
        let b = DiscreteMeasure::uniform(line(&[0.0, 2.0]));
        assert!(matches!(prokhorov(&a, &b), Err(Error::SpaceMismatch)));
    }

    #[test]
    fn ky_fan_examples() {
        let s = |v: Vec<f64>| PairedDistanceSample::new(v).unwrap();
        assert_eq!(ky_fan_empirical(&s(vec![0.0; 7])), 0.0);
        assert_eq!(ky_fan_empirical(&s(vec![0.4; 7])), 0.4);
        assert_eq!(ky_fan_empirical(&s(vec![1.0; 3])), 1.0);
        assert_eq!(ky_fan_empirical(&s(vec![5.0; 3])), 1.0);
        // one of four exceeds 0.1, so the infimum is the exceedance 0.25
        assert_eq!(ky_fan_empirical(&s(vec![0.1, 0.1, 0.1, 0.9])), 0.25);
        assert!(PairedDistanceSample::new(vec![]).is_err());
        assert!(PairedDistanceSample::new(vec![-1.0]).is_err());
    }

    #[test]
    fn meta_prokhorov_examples() {
        let s = line_grid(0.0, 1.0, 11).map(Arc::new).unwrap();
        let d = |i| DiscreteMeasure::dirac(s.clone(), i).unwrap();
        let u = DiscreteMeasure::uniform(s.clone());
        let law = EmpiricalLaw::new(vec![u.clone(), d(3), d(3)]).unwrap();
        assert_eq!(meta_prokhorov(&law, &law).unwrap(), 0.0);

        let a = EmpiricalLaw::repeated(d(7), 4).unwrap();
        let b = EmpiricalLaw::repeated(d(2), 4).unwrap();
        assert_eq!(meta_prokhorov(&a, &b).unwrap(), 0.5);

        let target = d(5);
        let single = EmpiricalLaw::repeated(target.clone(), 1).unwrap();
        let kf = ky_fan_to_dirac(&law, &target).unwrap();
        assert!((kf - meta_prokhorov(&law, &single).unwrap()).abs() < 1e-9);
        assert_eq!(ky_fan_to_dirac(&EmpiricalLaw::repeated(target.clone(), 5).unwrap(), &target).unwrap(), 0.0);
    }

    #[test]
    fn meta_space_checks_common_space() {
        let a = EmpiricalLaw::repeated(DiscreteMeasure::uniform(line(&[0.0, 1.0])), 2).unwrap();
        let b = EmpiricalLaw::repeated(DiscreteMeasure::uniform(line(&[0.0, 3.0])), 2).unwrap();
        assert!(matches!(meta_prokhorov(&a, &b), Err(Error::SpaceMismatch)));
        let mixed = vec![
            DiscreteMeasure::uniform(line(&[0.0, 1.0])),
            DiscreteMeasure::uniform(line(&[0.0, 3.0])),
        ];
        assert!(matches!(EmpiricalLaw::new(mixed), Err(Error::SpaceMismatch)));
    }

    fn case() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        (2usize..8).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::vec(0.0f64..1.5, 2), n),
                prop::collection::vec(0.0f64..1.0, n),
                prop::collection::vec(0.0f64..1.0, n),
                prop::collection::vec(0.0f64..1.0, n),
            )
        })
    }

    fn measure(s: &Arc<FiniteMetricSpace>, mut w: Vec<f64>, sparsify: bool) -> DiscreteMeasure {
        if sparsify {
            // zero out small weights to exercise partial supports
            w.iter_mut().for_each(|x| if *x < 0.3 { *x = 0.0 });
        }
        if w.iter().sum::<f64>() == 0.0 {
            w[0] = 1.0;
        }
        DiscreteMeasure::from_unnormalized(s.clone(), w).unwrap()
    }

    proptest! {
        #[test]
        fn matches_oracle((pts, a, b, _) in case(), sparse in any::<bool>()) {
            let s = Arc::new(build_grid_space(&pts).unwrap());
            let mu = measure(&s, a, sparse);
            let nu = measure(&s, b, false);
            let exact = prokhorov(&mu, &nu).unwrap();
            let oracle = prokhorov_oracle(&mu, &nu).unwrap();
            prop_assert!((exact - oracle).abs() <= 1e-9, "flow {exact} vs oracle {oracle}");
        }

        #[test]
        fn prokhorov_is_a_metric_below_tv((pts, a, b, c) in case()) {
            let s = Arc::new(build_grid_space(&pts).unwrap());
            let (a, b, c) = (measure(&s, a, false), measure(&s, b, true), measure(&s, c, false));
            let ab = prokhorov(&a, &b).unwrap();
            prop_assert_eq!(ab, prokhorov(&b, &a).unwrap());
            prop_assert!(prokhorov(&a, &c).unwrap() <= ab + prokhorov(&b, &c).unwrap() + 1e-9);
            prop_assert!(ab <= total_variation(&a, &b).unwrap() + 1e-12);
            prop_assert!(ab <= s.diameter().min(1.0) + 1e-12);
        }

        #[test]
        fn lower_bound_from_a_single_set((pts, a, b, _) in case(), mask in any::<u32>(), alpha in 0.0f64..1.2) {
            let s = Arc::new(build_grid_space(&pts).unwrap());
            let mu = measure(&s, a, false);
            let mu2 = measure(&s, b, true);
            let n = s.len();
            let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let set = IndexSet::new(members, n).unwrap();
            // sup over eps < alpha of mu(B^eps) is mu of the open alpha-enlargement
            let delta = mu.mass(&s.enlarge(&set, alpha, Enlargement::Open).unwrap());
            let bound = alpha.min(mu2.mass(&set) - delta);
            prop_assert!(prokhorov(&mu, &mu2).unwrap() >= bound - 1e-9);
        }

        #[test]
        fn ky_fan_bounds(d in prop::collection::vec(0.0f64..3.0, 1..40)) {
            let max = d.iter().copied().fold(0.0, f64::max);
            let k = ky_fan_empirical(&PairedDistanceSample::new(d).unwrap());
            prop_assert!(k <= 1.0);
            prop_assert!(k <= max);
        }
    }
}
