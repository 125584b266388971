//! Prokhorov distance straight from its definition, by subset enumeration.
//!
//! For a set `A`, the predicate `mu(A) <= nu(A^eps) + eps` with the strict
//! enlargement `A^eps = {x : d(x, A) < eps}` holds on an up-set of `eps`.
//! Between consecutive distance values `D_k < eps <= D_{k+1}` the enlargement
//! is the closed `D_k`-enlargement, so the infimum over that interval is
//! either `D_k` itself or the crossing `mu(A) - nu(closed D_k-enlargement)`.
//! The distance is the largest per-set infimum, taken over both argument orders.

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::metric_space::FiniteMetricSpace;

/// Largest support the enumeration accepts.
pub const ORACLE_SUPPORT_LIMIT: usize = 15;

/// Brute-force Prokhorov distance, exponential in the support size.
pub fn prokhorov_oracle(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    mu.ensure_same_space(nu)?;
    let (sa, sb) = (mu.support(), nu.support());
    for s in [&sa, &sb] {
        if s.len() > ORACLE_SUPPORT_LIMIT {
            return Err(Error::SupportTooLarge {
                size: s.len(),
                limit: ORACLE_SUPPORT_LIMIT,
            });
        }
    }
    let space = mu.space();
    let forward = one_sided(space, &sa, mu.weights(), &sb, nu.weights());
    let backward = one_sided(space, &sb, nu.weights(), &sa, mu.weights());
    Ok(forward.max(backward))
}

/// `inf { eps : mu(A) <= nu(A^eps) + eps for every A within supp(mu) }`
fn one_sided(space: &FiniteMetricSpace, sa: &[usize], wa: &[f64], sb: &[usize], wb: &[f64]) -> f64 {
    let mut levels: Vec<f64> = sa
        .iter()
        .flat_map(|&i| sb.iter().map(move |&j| space.dist(i, j)))
        .collect();
    levels.push(0.0);
    levels.sort_by(f64::total_cmp);
    levels.dedup();

    let mut worst: f64 = 0.0;
    let mut reach: Vec<(f64, f64)> = Vec::with_capacity(sb.len());
    for mask in 1u32..(1u32 << sa.len()) {
        let members: Vec<usize> = (0..sa.len()).filter(|k| mask >> k & 1 == 1).map(|k| sa[k]).collect();
        let mass_a: f64 = members.iter().map(|&i| wa[i]).sum();

        // distance from A to each point of supp(nu), sorted
        reach.clear();
        reach.extend(sb.iter().map(|&j| {
            let r = members.iter().map(|&i| space.dist(i, j)).fold(f64::INFINITY, f64::min);
            (r, wb[j])
        }));
        reach.sort_by(|x, y| x.0.total_cmp(&y.0));

        let mut inf_a = f64::INFINITY;
        let mut covered = 0.0;
        let mut cursor = 0;
        for (k, &level) in levels.iter().enumerate() {
            while cursor < reach.len() && reach[cursor].0 <= level {
                covered += reach[cursor].1;
                cursor += 1;
            }
            let need = mass_a - covered;
            let upper = levels.get(k + 1).copied().unwrap_or(f64::INFINITY);
            if need <= level {
                inf_a = level;
                break;
            }
            if need <= upper {
                inf_a = need;
                break;
            }
        }
        worst = worst.max(inf_a);
    }
    worst
}
