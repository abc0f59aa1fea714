//! Metric spaces, data points and the query-subspace oracle.
//!
//! A [`MetricInstance`] bundles the data set, a distance callback and a
//! [`SubspaceOracle`] describing the set the queries come from. Every distance
//! evaluated through the instance is counted, so query costs can be reported
//! in distance evaluations.

pub(crate) mod subspace;

pub use subspace::{
    AffineFlat, FnOracle, NetRequest, Polyline, Sphere, SubspaceOracle, SubspaceSpec,
    MAX_NET_POINTS,
};

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};

/// Index of a data point; ids are assigned in input order.
pub type PointId = usize;

/// A data point of the instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub id: PointId,
    pub coords: Vec<f64>,
}

/// A symmetric nonnegative distance on coordinate payloads.
pub trait Distance: Send + Sync {
    fn distance(&self, a: &[f64], b: &[f64]) -> f64;
}

impl<F> Distance for F
where
    F: Fn(&[f64], &[f64]) -> f64 + Send + Sync,
{
    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self(a, b)
    }
}

/// The usual L2 distance.
#[derive(Clone, Copy, Debug, Default)]
pub struct Euclidean;

impl Distance for Euclidean {
    #[inline]
    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        euclidean(a, b)
    }
}

#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Distance used by the hierarchical structures; implemented for every
/// element type they are built over.
pub trait Metric<T: ?Sized>: Send + Sync {
    fn distance(&self, a: &T, b: &T) -> f64;
}

/// The data set `P`, the ambient distance and the subspace oracle.
///
/// Immutable after construction. The evaluation counter is atomic so shared
/// readers may query concurrently.
pub struct MetricInstance {
    points: Vec<Point>,
    distance: Arc<dyn Distance>,
    subspace: Arc<dyn SubspaceOracle>,
    evals: AtomicU64,
}

impl fmt::Debug for MetricInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricInstance")
            .field("n", &self.points.len())
            .field("subspace", &self.subspace)
            .finish()
    }
}

impl MetricInstance {
    pub fn new(
        coords: Vec<Vec<f64>>,
        distance: Arc<dyn Distance>,
        subspace: Arc<dyn SubspaceOracle>,
    ) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::EmptyInput);
        }
        let dim = subspace.ambient_dim().unwrap_or(coords[0].len());
        for c in &coords {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.len(),
                });
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(
                    "point coordinates must be finite".into(),
                ));
            }
        }
        let points = coords
            .into_iter()
            .enumerate()
            .map(|(id, coords)| Point { id, coords })
            .collect();
        Ok(Self {
            points,
            distance,
            subspace,
            evals: AtomicU64::new(0),
        })
    }

    /// Euclidean instance over one of the built-in or user oracles.
    pub fn euclidean(coords: Vec<Vec<f64>>, subspace: Arc<dyn SubspaceOracle>) -> Result<Self> {
        Self::new(coords, Arc::new(Euclidean), subspace)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, id: PointId) -> &Point {
        &self.points[id]
    }

    pub fn dim(&self) -> usize {
        self.points[0].coords.len()
    }

    pub fn subspace(&self) -> &Arc<dyn SubspaceOracle> {
        &self.subspace
    }

    /// Counted distance evaluation.
    #[inline]
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.evals.fetch_add(1, Ordering::Relaxed);
        self.distance.distance(a, b)
    }

    /// Distance without touching the counter; used by the verification
    /// oracles so they do not pollute benchmark numbers.
    #[inline]
    pub fn raw_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.distance.distance(a, b)
    }

    pub fn evals(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    pub fn reset_evals(&self) -> u64 {
        self.evals.swap(0, Ordering::Relaxed)
    }

    /// Closest point of the subspace.
    pub fn project(&self, a: &[f64]) -> Vec<f64> {
        self.subspace.project(a)
    }

    /// `d(a, project(a))`; zero for points on the subspace.
    pub fn height(&self, a: &[f64]) -> f64 {
        let base = self.project(a);
        self.distance(a, &base)
    }

    /// An `r`-net of `ball(center, outer)` restricted to the subspace.
    pub fn subspace_net(&self, center: &[f64], outer: f64, inner: f64) -> Result<Vec<Vec<f64>>> {
        self.subspace.net(center, outer, inner)
    }

    /// Samples random triples of data points and returns the first triple
    /// violating symmetry, identity or the triangle inequality.
    pub fn find_axiom_violation<R: Rng>(
        &self,
        triples: usize,
        rng: &mut R,
    ) -> Option<(PointId, PointId, PointId)> {
        let n = self.len();
        let tol = 1e-12;
        for _ in 0..triples {
            let (i, j, k) = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
            let (a, b, c) = (
                &self.points[i].coords,
                &self.points[j].coords,
                &self.points[k].coords,
            );
            let ab = self.raw_distance(a, b);
            let ba = self.raw_distance(b, a);
            let bc = self.raw_distance(b, c);
            let ac = self.raw_distance(a, c);
            let scale = 1.0 + ab + bc;
            if self.raw_distance(a, a) != 0.0
                || ab < 0.0
                || (ab - ba).abs() > tol * scale
                || ac > ab + bc + tol * scale
            {
                return Some((i, j, k));
            }
        }
        None
    }
}

impl Metric<Vec<f64>> for Arc<MetricInstance> {
    #[inline]
    fn distance(&self, a: &Vec<f64>, b: &Vec<f64>) -> f64 {
        MetricInstance::distance(self, a, b)
    }
}

impl Metric<[f64]> for Euclidean {
    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        euclidean(a, b)
    }
}

impl Metric<Vec<f64>> for Euclidean {
    fn distance(&self, a: &Vec<f64>, b: &Vec<f64>) -> f64 {
        euclidean(a, b)
    }
}

impl Metric<f64> for Euclidean {
    fn distance(&self, a: &f64, b: &f64) -> f64 {
        (a - b).abs()
    }
}
