//! Finite metric spaces with ball and enlargement geometry.
//!
//! Parameter grids and meta-spaces (whose points are sampled posteriors) are
//! both represented as a dense, validated distance matrix.

use crate::error::{Error, Result};

/// Slack allowed in the triangle inequality.
pub const TRIANGLE_SLACK: f64 = 1e-9;

/// Euclidean grid distances are rounded to multiples of `1 / GRID_DISTANCE_SCALE`
/// so that ties such as `0.15 - 0.05` compare exactly against decimal radii like `0.1`.
pub const GRID_DISTANCE_SCALE: f64 = 1e12;

/// Whether an enlargement or ball uses `d < eps` or `d <= eps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enlargement {
    /// `{x' : d(x, x') < eps}`
    Open,
    /// `{x' : d(x, x') <= eps}`
    Closed,
}

impl Enlargement {
    #[inline]
    pub fn admits(self, d: f64, eps: f64) -> bool {
        match self {
            Enlargement::Open => d < eps,
            Enlargement::Closed => d <= eps,
        }
    }
}

/// A finite metric space stored as a dense symmetric distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMetricSpace {
    labels: Vec<String>,
    dist: Vec<f64>,
    coords: Option<Vec<Vec<f64>>>,
    n: usize,
}

impl FiniteMetricSpace {
    /// Builds a space from an explicit distance matrix, checking the metric axioms.
    pub fn new(labels: Vec<String>, dist: Vec<Vec<f64>>) -> Result<Self> {
        let n = dist.len();
        if n == 0 {
            return Err(Error::InvalidInput("metric space must have at least one point".into()));
        }
        if labels.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} points",
                labels.len(),
                n
            )));
        }
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in dist.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidInput(format!(
                    "distance row {i} has length {}, expected {n}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        let space = FiniteMetricSpace {
            labels,
            dist: flat,
            coords: None,
            n,
        };
        space.validate()?;
        Ok(space)
    }

    /// Like [`FiniteMetricSpace::new`] with labels `"0"`, `"1"`, ...
    pub fn from_matrix(dist: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (0..dist.len()).map(|i| i.to_string()).collect();
        Self::new(labels, dist)
    }

    /// Checks zero diagonal, symmetry, nonnegativity and the triangle inequality.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if self.dist(i, i) != 0.0 {
                return Err(Error::Invariant(format!("dist[{i}][{i}] = {} != 0", self.dist(i, i))));
            }
            for j in 0..n {
                let d = self.dist(i, j);
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::Invariant(format!("dist[{i}][{j}] = {d} is not a finite nonnegative value")));
                }
                if d != self.dist(j, i) {
                    return Err(Error::Invariant(format!("dist[{i}][{j}] != dist[{j}][{i}]")));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let dij = self.dist(i, j);
                for k in 0..n {
                    let excess = self.dist(i, k) - dij - self.dist(j, k);
                    if excess > TRIANGLE_SLACK {
                        return Err(Error::Invariant(format!(
                            "triangle inequality violated at ({i}, {j}, {k}) by {excess:e}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.dist[i * self.n..(i + 1) * self.n]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Euclidean coordinates, when the space was built from a point cloud.
    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    pub fn check_index(&self, index: usize) -> Result<()> {
        if index < self.n {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index, size: self.n })
        }
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the point with exactly these coordinates (up to `1e-9` per axis).
    pub fn locate(&self, point: &[f64]) -> Option<usize> {
        let coords = self.coords.as_ref()?;
        coords.iter().position(|c| {
            c.len() == point.len() && c.iter().zip(point).all(|(a, b)| (a - b).abs() <= 1e-9)
        })
    }

    /// Ball of radius `eps` around `center`.
    pub fn ball(&self, center: usize, eps: f64, kind: Enlargement) -> IndexSet {
        let members = (0..self.n)
            .filter(|&j| kind.admits(self.dist(center, j), eps))
            .collect();
        IndexSet { members }
    }

    /// The enlargement `A^eps`: points within `eps` of some member of `set`.
    pub fn enlarge(&self, set: &IndexSet, eps: f64, kind: Enlargement) -> Result<IndexSet> {
        if eps.is_nan() || eps < 0.0 {
            return Err(Error::InvalidInput(format!("enlargement radius {eps} must be >= 0")));
        }
        if let Some(&last) = set.members.last() {
            self.check_index(last)?;
        }
        let members = (0..self.n)
            .filter(|&j| set.members.iter().any(|&i| kind.admits(self.dist(i, j), eps)))
            .collect();
        Ok(IndexSet { members })
    }
}

/// Builds the Euclidean metric space on a point cloud.
pub fn build_grid_space(coords: &[Vec<f64>]) -> Result<FiniteMetricSpace> {
    let n = coords.len();
    if n == 0 {
        return Err(Error::InvalidInput("grid must contain at least one point".into()));
    }
    let dim = coords[0].len();
    if let Some((i, c)) = coords.iter().enumerate().find(|(_, c)| c.len() != dim) {
        return Err(Error::InvalidInput(format!(
            "point {i} has dimension {}, expected {dim}",
            c.len()
        )));
    }
    if coords.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("grid coordinates must be finite".into()));
    }
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let sq: f64 = coords[i]
                .iter()
                .zip(&coords[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let d = (sq.sqrt() * GRID_DISTANCE_SCALE).round() / GRID_DISTANCE_SCALE;
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let labels = coords
        .iter()
        .map(|c| {
            let parts: Vec<String> = c.iter().map(|x| format!("{x}")).collect();
            parts.join(",")
        })
        .collect();
    let space = FiniteMetricSpace {
        labels,
        dist,
        coords: Some(coords.to_vec()),
        n,
    };
    space.validate()?;
    Ok(space)
}

/// `count` equispaced points on `[lo, hi]`.
pub fn line_grid(lo: f64, hi: f64, count: usize) -> Result<FiniteMetricSpace> {
    build_grid_space(&line_points(lo, hi, count)?)
}

pub fn line_points(lo: f64, hi: f64, count: usize) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::InvalidInput("grid must contain at least one point".into()));
    }
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(Error::InvalidInput(format!("invalid interval [{lo}, {hi}]")));
    }
    if count == 1 {
        return Ok(vec![vec![lo]]);
    }
    let steps = (count - 1) as f64;
    Ok((0..count)
        .map(|i| vec![lo + (hi - lo) * (i as f64) / steps])
        .collect())
}

/// Sorted set of point indices without duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexSet {
    members: Vec<usize>,
}

impl IndexSet {
    /// Validates `members` against a space of `size` points.
    pub fn new(mut members: Vec<usize>, size: usize) -> Result<Self> {
        members.sort_unstable();
        if let Some(w) = members.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!("duplicate index {}", w[0])));
        }
        if let Some(&last) = members.last() {
            if last >= size {
                return Err(Error::IndexOutOfRange { index: last, size });
            }
        }
        Ok(IndexSet { members })
    }

    pub fn singleton(index: usize) -> Self {
        IndexSet { members: vec![index] }
    }

    pub fn full(size: usize) -> Self {
        IndexSet {
            members: (0..size).collect(),
        }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.members.binary_search(&index).is_ok()
    }

    pub fn is_subset(&self, other: &IndexSet) -> bool {
        self.members.iter().all(|&i| other.contains(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied()
    }
}
