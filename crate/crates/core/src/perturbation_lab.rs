//! Adversarial prior constructions, Kullback-Leibler support predicates and
//! covering/packing numbers of finite parameter grids.

use crate::bayes_engine::{model_kl, CategoricalModel};
use crate::error::{Error, Result};
use crate::measures::{same_space, DiscreteMeasure};
use crate::metric_space::{Enlargement, FiniteMetricSpace, IndexSet};

/// Largest space on which covering and packing numbers are solved exactly.
pub const EXACT_COVER_LIMIT: usize = 24;

/// Default KL ladder used to decide Kullback-Leibler support on a grid.
pub const DEFAULT_KL_LADDER: [f64; 4] = [1.0, 0.1, 0.01, 0.001];

/// `{theta' : K(theta*, theta') <= eps}`.
#[derive(Debug, Clone, PartialEq)]
pub struct KLNeighborhood {
    pub center: usize,
    pub epsilon: f64,
    pub members: IndexSet,
}

pub fn kl_neighborhood(model: &CategoricalModel, theta_star: usize, epsilon: f64) -> Result<KLNeighborhood> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::InvalidInput(format!("KL radius {epsilon} must be >= 0")));
    }
    model.theta_space().check_index(theta_star)?;
    let mut members = Vec::new();
    for j in 0..model.len() {
        if model_kl(model, theta_star, j)? <= epsilon {
            members.push(j);
        }
    }
    Ok(KLNeighborhood {
        center: theta_star,
        epsilon,
        members: IndexSet::new(members, model.len())?,
    })
}

fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::InvalidInput("KL ladder is empty".into()));
    }
    if ladder.iter().any(|e| e.is_nan() || *e <= 0.0) {
        return Err(Error::InvalidInput("KL ladder values must be positive".into()));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("KL ladder must be strictly decreasing".into()));
    }
    Ok(())
}

/// Prior mass of the KL neighborhood of `theta_star` at each rung of `ladder`.
pub fn kl_neighborhood_masses(
    prior: &DiscreteMeasure,
    model: &CategoricalModel,
    theta_star: usize,
    ladder: &[f64],
) -> Result<Vec<f64>> {
    check_ladder(ladder)?;
    if !same_space(prior.space(), model.theta_space()) {
        return Err(Error::SpaceMismatch);
    }
    ladder
        .iter()
        .map(|&eps| Ok(prior.mass(&kl_neighborhood(model, theta_star, eps)?.members)))
        .collect()
}

/// Whether `prior` charges every KL neighborhood of `theta_star` down to the
/// smallest rung of `ladder`.
pub fn has_kl_support(
    prior: &DiscreteMeasure,
    model: &CategoricalModel,
    theta_star: usize,
    ladder: &[f64],
) -> Result<bool> {
    Ok(kl_neighborhood_masses(prior, model, theta_star, ladder)?
        .iter()
        .all(|&m| m > 0.0))
}

/// `alpha * prior + (1 - alpha) * delta_theta`.
pub fn dirac_contamination(prior: &DiscreteMeasure, theta: usize, alpha: f64) -> Result<DiscreteMeasure> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("mixing weight {alpha} outside [0, 1]")));
    }
    prior.space().check_index(theta)?;
    if alpha == 1.0 {
        return Ok(prior.clone());
    }
    let mut weights: Vec<f64> = prior.weights().iter().map(|w| alpha * w).collect();
    weights[theta] += 1.0 - alpha;
    DiscreteMeasure::from_unnormalized(prior.space().clone(), weights)
}

/// `prior` conditioned on the complement of the open ball `B_eps(theta_star)`.
pub fn ball_evacuation(prior: &DiscreteMeasure, theta_star: usize, epsilon: f64) -> Result<DiscreteMeasure> {
    let space = prior.space();
    space.check_index(theta_star)?;
    let ball = space.ball(theta_star, epsilon, Enlargement::Open);
    let mut weights = prior.weights().to_vec();
    for i in ball.iter() {
        weights[i] = 0.0;
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::Precondition(format!(
            "the open ball of radius {epsilon} around point {theta_star} holds all prior mass"
        )));
    }
    DiscreteMeasure::from_unnormalized(space.clone(), weights)
}

/// Centers of open `epsilon`-balls covering the space.
#[derive(Debug, Clone, PartialEq)]
pub struct CoveringCertificate {
    pub epsilon: f64,
    pub centers: IndexSet,
    pub count: usize,
    /// `false` when `count` is only a greedy upper bound.
    pub exact: bool,
}

/// An `epsilon`-separated set (`d >= epsilon` between distinct members).
#[derive(Debug, Clone, PartialEq)]
pub struct PackingCertificate {
    pub epsilon: f64,
    pub points: IndexSet,
    pub count: usize,
    /// `false` when `count` is only a greedy lower bound.
    pub exact: bool,
}

fn check_radius(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("radius {epsilon} must be > 0")))
    }
}

/// Smallest number of open `epsilon`-balls centered at grid points covering the grid.
pub fn covering_number(space: &FiniteMetricSpace, epsilon: f64) -> Result<CoveringCertificate> {
    check_radius(epsilon)?;
    let n = space.len();
    let greedy = greedy_cover(space, epsilon);
    let (centers, exact) = if n <= EXACT_COVER_LIMIT {
        let balls: Vec<u32> = (0..n)
            .map(|c| space.ball(c, epsilon, Enlargement::Open).iter().fold(0u32, |m, i| m | 1 << i))
            .collect();
        let mut search = CoverSearch {
            balls,
            best: greedy.clone(),
        };
        let full = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
        search.run(full, &mut Vec::new());
        (search.best, true)
    } else {
        (greedy, false)
    };
    let centers = IndexSet::new(centers, n)?;
    let cert = CoveringCertificate {
        epsilon,
        count: centers.len(),
        centers,
        exact,
    };
    let covered = space.enlarge(&cert.centers, epsilon, Enlargement::Open)?;
    if covered.len() != n {
        return Err(Error::Invariant(format!(
            "covering certificate at radius {epsilon} leaves {} points uncovered",
            n - covered.len()
        )));
    }
    Ok(cert)
}

fn greedy_cover(space: &FiniteMetricSpace, epsilon: f64) -> Vec<usize> {
    let n = space.len();
    let mut uncovered = vec![true; n];
    let mut left = n;
    let mut centers = Vec::new();
    while left > 0 {
        let (best, gain) = (0..n)
            .map(|c| {
                let gain = (0..n).filter(|&i| uncovered[i] && space.dist(c, i) < epsilon).count();
                (c, gain)
            })
            .fold((0, 0), |acc, x| if x.1 > acc.1 { x } else { acc });
        debug_assert!(gain > 0);
        for (i, u) in uncovered.iter_mut().enumerate() {
            if *u && space.dist(best, i) < epsilon {
                *u = false;
                left -= 1;
            }
        }
        centers.push(best);
    }
    centers
}

struct CoverSearch {
    balls: Vec<u32>,
    best: Vec<usize>,
}

impl CoverSearch {
    fn run(&mut self, uncovered: u32, chosen: &mut Vec<usize>) {
        if uncovered == 0 {
            if chosen.len() < self.best.len() {
                self.best = chosen.clone();
            }
            return;
        }
        let largest = self.balls.iter().map(|b| (b & uncovered).count_ones()).max().unwrap_or(0);
        if largest == 0 {
            return;
        }
        let lower = uncovered.count_ones().div_ceil(largest) as usize;
        if chosen.len() + lower >= self.best.len() {
            return;
        }
        // branch on the uncovered point with the fewest covering balls
        let target = (0..32)
            .filter(|&e| uncovered >> e & 1 == 1)
            .min_by_key(|&e| self.balls.iter().filter(|b| *b >> e & 1 == 1).count())
            .expect("uncovered is nonzero");
        let mut options: Vec<usize> = (0..self.balls.len())
            .filter(|&c| self.balls[c] >> target & 1 == 1)
            .collect();
        options.sort_by_key(|&c| std::cmp::Reverse((self.balls[c] & uncovered).count_ones()));
        for c in options {
            chosen.push(c);
            self.run(uncovered & !self.balls[c], chosen);
            chosen.pop();
        }
    }
}

/// Largest `epsilon`-packing of the grid.
pub fn packing_number(space: &FiniteMetricSpace, epsilon: f64) -> Result<PackingCertificate> {
    check_radius(epsilon)?;
    let n = space.len();
    let mut greedy: Vec<usize> = Vec::new();
    for i in 0..n {
        if greedy.iter().all(|&j| space.dist(i, j) >= epsilon) {
            greedy.push(i);
        }
    }
    let (points, exact) = if n <= EXACT_COVER_LIMIT {
        let conflicts: Vec<u32> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && space.dist(i, j) < epsilon)
                    .fold(0u32, |m, j| m | 1 << j)
            })
            .collect();
        let mut search = PackingSearch {
            conflicts,
            best: greedy.clone(),
        };
        let all = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
        search.run(all, &mut Vec::new());
        (search.best, true)
    } else {
        (greedy, false)
    };
    let points = IndexSet::new(points, n)?;
    for i in points.iter() {
        for j in points.iter() {
            if i != j && space.dist(i, j) < epsilon {
                return Err(Error::Invariant(format!("packing points {i} and {j} are closer than {epsilon}")));
            }
        }
    }
    Ok(PackingCertificate {
        epsilon,
        count: points.len(),
        points,
        exact,
    })
}

struct PackingSearch {
    conflicts: Vec<u32>,
    best: Vec<usize>,
}

impl PackingSearch {
    fn run(&mut self, candidates: u32, chosen: &mut Vec<usize>) {
        if chosen.len() + candidates.count_ones() as usize <= self.best.len() {
            return;
        }
        if candidates == 0 {
            self.best = chosen.clone();
            return;
        }
        let v = candidates.trailing_zeros() as usize;
        let bit = 1u32 << v;
        chosen.push(v);
        self.run(candidates & !bit & !self.conflicts[v], chosen);
        chosen.pop();
        self.run(candidates & !bit, chosen);
    }
}

/// Grid point whose open `epsilon`-ball carries the least prior mass, and that mass.
///
/// Since the open `epsilon`-balls around a `2 epsilon`-packing are disjoint, the
/// mass is at most `1 / N_{2 epsilon}`; this is re-checked when the covering
/// number is exact.
pub fn least_mass_center(prior: &DiscreteMeasure, epsilon: f64) -> Result<(usize, f64)> {
    check_radius(epsilon)?;
    let space = prior.space();
    let (center, mass) = (0..space.len())
        .map(|c| (c, prior.mass(&space.ball(c, epsilon, Enlargement::Open))))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let cover = covering_number(space, 2.0 * epsilon)?;
    if cover.exact && mass > 1.0 / cover.count as f64 + 1e-12 {
        return Err(Error::Invariant(format!(
            "least ball mass {mass} exceeds 1/N = 1/{}",
            cover.count
        )));
    }
    Ok((center, mass))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::total_variation;
    use crate::metric_space::{build_grid_space, line_grid, line_points};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn line(xs: &[f64]) -> Arc<FiniteMetricSpace> {
        Arc::new(build_grid_space(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap())
    }

    fn bernoulli(count: usize) -> CategoricalModel {
        let pts: Vec<f64> = line_points(0.0, 1.0, count).unwrap().into_iter().map(|p| p[0]).collect();
        CategoricalModel::bernoulli_grid(&pts).unwrap()
    }

    fn bernoulli_kl(p: f64, q: f64) -> f64 {
        let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else if b == 0.0 { f64::INFINITY } else { a * (a / b).ln() };
        term(p, q) + term(1.0 - p, 1.0 - q)
    }

    #[test]
    fn kl_neighborhood_examples() {
        let m = bernoulli(101);
        assert_eq!(kl_neighborhood(&m, 50, 0.0).unwrap().members.members(), &[50]);
        assert_eq!(kl_neighborhood(&m, 50, f64::INFINITY).unwrap().members.len(), 101);

        let nb = kl_neighborhood(&m, 50, 0.02).unwrap();
        let expected: Vec<usize> = (0..101).filter(|&j| bernoulli_kl(0.5, j as f64 / 100.0) <= 0.02).collect();
        assert_eq!(nb.members.members(), &expected[..]);
        assert_eq!((expected[0], *expected.last().unwrap()), (41, 59));
        assert!(nb.members.contains(nb.center));
        assert!(kl_neighborhood(&m, 50, -1.0).is_err());
    }

    #[test]
    fn kl_support_examples() {
        let m = bernoulli(11);
        let s = m.theta_space().clone();
        let ladder = DEFAULT_KL_LADDER;
        let at7 = DiscreteMeasure::dirac(s.clone(), 7).unwrap();
        assert!(has_kl_support(&at7, &m, 7, &ladder).unwrap());
        let at2 = DiscreteMeasure::dirac(s.clone(), 2).unwrap();
        assert!(!has_kl_support(&at2, &m, 7, &ladder).unwrap());
        let mixed = dirac_contamination(&DiscreteMeasure::uniform(s.clone()), 2, 0.01).unwrap();
        assert!(has_kl_support(&mixed, &m, 7, &ladder).unwrap());
        assert!(has_kl_support(&at7, &m, 7, &[0.1, 0.2]).is_err());
        assert!(has_kl_support(&at7, &m, 7, &[]).is_err());
        assert!(has_kl_support(&at7, &m, 7, &[0.1, 0.0]).is_err());
    }

    #[test]
    fn contamination_examples() {
        let s = Arc::new(line_grid(0.0, 1.0, 101).unwrap());
        let u = DiscreteMeasure::uniform(s.clone());
        assert_eq!(dirac_contamination(&u, 20, 0.0).unwrap(), DiscreteMeasure::dirac(s.clone(), 20).unwrap());
        assert_eq!(dirac_contamination(&u, 20, 1.0).unwrap(), u);
        let mixed = dirac_contamination(&u, 20, 0.01).unwrap();
        assert!((mixed.weight(20) - (0.99 + 0.01 / 101.0)).abs() < 1e-15);
        assert!((mixed.weight(20) - 0.990099).abs() < 1e-6);
        assert!((mixed.weight(3) - 0.01 / 101.0).abs() < 1e-15);
        assert!(dirac_contamination(&u, 20, 1.5).is_err());
        assert!(dirac_contamination(&u, 200, 0.5).is_err());
    }

    #[test]
    fn evacuation_examples() {
        let s = line(&[0.0, 0.5, 1.0]);
        let u = DiscreteMeasure::uniform(s.clone());
        let out = ball_evacuation(&u, 0, 0.6).unwrap();
        assert_eq!(out, DiscreteMeasure::dirac(s.clone(), 2).unwrap());

        let far = DiscreteMeasure::new(s.clone(), vec![0.0, 0.5, 0.5]).unwrap();
        assert_eq!(ball_evacuation(&far, 0, 0.3).unwrap(), far);
        assert!(matches!(ball_evacuation(&u, 1, 5.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn covering_examples() {
        let s = line(&[0.0, 1.0, 2.0]);
        assert_eq!(covering_number(&s, 2.5).unwrap().count, 1);
        let c = covering_number(&s, 1.5).unwrap();
        assert_eq!((c.count, c.centers.members()), (1, &[1usize][..]));
        assert_eq!(covering_number(&s, 1.0).unwrap().count, 3);
        assert!(covering_number(&s, 0.0).is_err());
        assert!(covering_number(&s, 1.0).unwrap().exact);
    }

    #[test]
    fn packing_examples() {
        let s = line(&[0.0, 1.0, 2.0]);
        assert_eq!(packing_number(&s, 2.5).unwrap().count, 1);
        assert_eq!(packing_number(&s, 1.0).unwrap().count, 3);
        assert_eq!(packing_number(&s, 1.5).unwrap().count, 2);
        assert!(packing_number(&s, -1.0).is_err());
    }

    #[test]
    fn large_grids_fall_back_to_greedy() {
        let s = line_grid(0.0, 1.0, 101).unwrap();
        let c = covering_number(&s, 0.1).unwrap();
        // open balls of radius 0.1 hold 19 consecutive grid points
        assert_eq!(c.count, 101usize.div_ceil(19));
        assert!(!c.exact);
        assert!(!packing_number(&s, 0.1).unwrap().exact);
    }

    #[test]
    fn least_mass_examples() {
        let s = Arc::new(line_grid(0.0, 1.0, 101).unwrap());
        let u = DiscreteMeasure::uniform(s.clone());
        let (center, mass) = least_mass_center(&u, 0.05).unwrap();
        assert!(center == 0 || center == 100);
        assert!((mass - 5.0 / 101.0).abs() < 1e-12);
        assert!(mass <= 1.0 / covering_number(&s, 0.1).unwrap().count as f64);

        let d = DiscreteMeasure::dirac(s.clone(), 50).unwrap();
        let (center, mass) = least_mass_center(&d, 0.05).unwrap();
        assert_eq!(mass, 0.0);
        assert!(s.dist(center, 50) >= 0.05);

        let sym = Arc::new(line_grid(0.0, 1.0, 21).unwrap());
        let (_, mass) = least_mass_center(&DiscreteMeasure::uniform(sym.clone()), 0.1).unwrap();
        assert!((mass - 2.0 / 21.0).abs() < 1e-12);
        assert_eq!(covering_number(&sym, 0.2).unwrap().count, 3);
    }

    /// Exhaustive minimum cover over all center subsets.
    fn brute_cover(space: &FiniteMetricSpace, eps: f64) -> usize {
        let n = space.len();
        (1u32..(1 << n))
            .filter(|mask| {
                (0..n).all(|i| (0..n).any(|c| mask >> c & 1 == 1 && space.dist(c, i) < eps))
            })
            .map(|m| m.count_ones() as usize)
            .min()
            .unwrap()
    }

    fn brute_packing(space: &FiniteMetricSpace, eps: f64) -> usize {
        let n = space.len();
        (1u32..(1 << n))
            .filter(|mask| {
                (0..n).all(|i| {
                    (0..n).all(|j| i == j || mask >> i & 1 == 0 || mask >> j & 1 == 0 || space.dist(i, j) >= eps)
                })
            })
            .map(|m| m.count_ones() as usize)
            .max()
            .unwrap()
    }

    fn cloud(max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 1..max)
    }

    proptest! {
        #[test]
        fn exact_search_matches_enumeration(pts in cloud(11), eps in 0.05f64..0.8) {
            let s = build_grid_space(&pts).unwrap();
            prop_assert_eq!(covering_number(&s, eps).unwrap().count, brute_cover(&s, eps));
            prop_assert_eq!(packing_number(&s, eps).unwrap().count, brute_packing(&s, eps));
        }

        #[test]
        fn kolmogorov_tikhomirov(pts in cloud(21), eps in 0.02f64..0.6) {
            let s = build_grid_space(&pts).unwrap();
            let n = covering_number(&s, eps).unwrap().count;
            prop_assert!(packing_number(&s, 2.0 * eps).unwrap().count <= n);
            prop_assert!(n <= packing_number(&s, eps).unwrap().count);
        }

        #[test]
        fn evacuation_tv_equals_removed_mass(w in prop::collection::vec(0.0f64..1.0, 9), center in 0usize..9, eps in 0.01f64..0.5) {
            prop_assume!(w.iter().sum::<f64>() > 0.0);
            let s = Arc::new(line_grid(0.0, 1.0, 9).unwrap());
            let prior = DiscreteMeasure::from_unnormalized(s.clone(), w).unwrap();
            let ball = s.ball(center, eps, Enlargement::Open);
            let removed = prior.mass(&ball);
            match ball_evacuation(&prior, center, eps) {
                Ok(out) => {
                    prop_assert!(ball.iter().all(|i| out.weight(i) == 0.0));
                    prop_assert!((total_variation(&out, &prior).unwrap() - removed).abs() < 1e-12);
                }
                Err(_) => prop_assert!((removed - 1.0).abs() < 1e-12),
            }
        }

        #[test]
        fn contamination_stays_close_and_keeps_support(w in prop::collection::vec(0.01f64..1.0, 11), theta in 0usize..11, star in 0usize..11, alpha in 0.0001f64..1.0) {
            let m = bernoulli(11);
            let prior = DiscreteMeasure::from_unnormalized(m.theta_space().clone(), w).unwrap();
            let mixed = dirac_contamination(&prior, theta, alpha).unwrap();
            let dirac = DiscreteMeasure::dirac(m.theta_space().clone(), theta).unwrap();
            prop_assert!(total_variation(&mixed, &dirac).unwrap() <= alpha + 1e-12);
            if has_kl_support(&prior, &m, star, &DEFAULT_KL_LADDER).unwrap() {
                prop_assert!(has_kl_support(&mixed, &m, star, &DEFAULT_KL_LADDER).unwrap());
            }
        }

        #[test]
        fn least_mass_respects_covering_bound(w in prop::collection::vec(0.0f64..1.0, 15), eps in 0.03f64..0.4) {
            prop_assume!(w.iter().sum::<f64>() > 0.0);
            let s = Arc::new(line_grid(0.0, 1.0, 15).unwrap());
            let prior = DiscreteMeasure::from_unnormalized(s.clone(), w).unwrap();
            let (_, mass) = least_mass_center(&prior, eps).unwrap();
            prop_assert!(mass <= 1.0 / covering_number(&s, 2.0 * eps).unwrap().count as f64 + 1e-12);
        }
    }
}
