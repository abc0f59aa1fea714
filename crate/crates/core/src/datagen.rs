//! Seeded synthetic instances: data points at controlled heights above a
//! subspace and query streams sampled on the subspace.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{MetricInstance, SubspaceSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SubspaceKind {
    /// Random `k`-flat through the origin; chart coordinates in `[-extent, extent]`.
    Affine { k: usize, extent: f64 },
    /// Sphere of the given radius inside a random `k`-dimensional span.
    Sphere { k: usize, radius: f64 },
    /// Segment from the origin in a random direction.
    Segment { length: f64 },
    /// Random walk with `vertices` vertices and the given total length.
    Polyline { vertices: usize, length: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightDist {
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub ambient_dim: usize,
    pub n: usize,
    #[serde(default)]
    pub queries: usize,
    pub subspace: SubspaceKind,
    pub heights: HeightDist,
    pub seed: u64,
}

pub struct Generated {
    pub instance: Arc<MetricInstance>,
    pub subspace: SubspaceSpec,
    pub points: Vec<Vec<f64>>,
    pub queries: Vec<Vec<f64>>,
    /// Intended height of every data point.
    pub heights: Vec<f64>,
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Removes the components along the given orthonormal vectors.
fn reject(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
    }
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let mut g = gaussian(rng, d);
        if normalize(&mut g) > 1e-9 {
            return g;
        }
    }
}

/// Random unit vector orthogonal to `basis`, if the complement is nonzero.
fn normal(rng: &mut ChaCha8Rng, d: usize, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    if basis.len() >= d {
        return None;
    }
    loop {
        let mut g = gaussian(rng, d);
        reject(&mut g, basis);
        if normalize(&mut g) > 1e-9 {
            return Some(g);
        }
    }
}

fn orthonormal(rng: &mut ChaCha8Rng, d: usize, k: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    while out.len() < k {
        let mut g = gaussian(rng, d);
        reject(&mut g, &out);
        reject(&mut g, &out);
        if normalize(&mut g) > 1e-6 {
            out.push(g);
        }
    }
    out
}

fn axpy(base: &[f64], a: f64, v: &[f64]) -> Vec<f64> {
    base.iter().zip(v).map(|(x, y)| x + a * y).collect()
}

enum Shape {
    Affine { basis: Vec<Vec<f64>>, extent: f64 },
    Sphere { basis: Vec<Vec<f64>>, radius: f64 },
    Curve { vertices: Vec<Vec<f64>>, cumulative: Vec<f64> },
}

impl Shape {
    fn sample(&self, rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        match self {
            Shape::Affine { basis, extent } => {
                let mut p = vec![0.0; d];
                for b in basis {
                    let c: f64 = rng.gen_range(-*extent..=*extent);
                    p = axpy(&p, c, b);
                }
                p
            }
            Shape::Sphere { basis, radius } => {
                let g = unit(rng, basis.len());
                let mut p = vec![0.0; d];
                for (c, b) in g.iter().zip(basis) {
                    p = axpy(&p, radius * c, b);
                }
                p
            }
            Shape::Curve { vertices, cumulative } => {
                let total = *cumulative.last().expect("nonempty");
                let s: f64 = rng.gen_range(0.0..=total);
                let seg = cumulative
                    .windows(2)
                    .position(|w| s <= w[1])
                    .unwrap_or(cumulative.len() - 2);
                let len = cumulative[seg + 1] - cumulative[seg];
                let t = ((s - cumulative[seg]) / len).clamp(0.0, 1.0);
                let (a, b) = (&vertices[seg], &vertices[seg + 1]);
                a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
            }
        }
    }

    /// Unit direction along which moving `h` from `base` gives height `h`.
    fn offset_dir(&self, rng: &mut ChaCha8Rng, base: &[f64], d: usize) -> Option<Vec<f64>> {
        match self {
            Shape::Affine { basis, .. } => normal(rng, d, basis),
            Shape::Sphere { basis, .. } => {
                let mut radial = base.to_vec();
                normalize(&mut radial);
                let mut g = gaussian(rng, d);
                let along = dot(&g, &radial);
                reject(&mut g, basis);
                let mut v = axpy(&g, along.abs(), &radial);
                normalize(&mut v);
                Some(v)
            }
            Shape::Curve { vertices, .. } => {
                // direction of the segment containing base
                let mut dir = None;
                for w in vertices.windows(2) {
                    let mut u: Vec<f64> = w[1].iter().zip(&w[0]).map(|(x, y)| x - y).collect();
                    let len = normalize(&mut u);
                    let rel: Vec<f64> = base.iter().zip(&w[0]).map(|(x, y)| x - y).collect();
                    let t = dot(&rel, &u);
                    let off: f64 = axpy(&rel, -t, &u).iter().map(|x| x * x).sum::<f64>();
                    if t >= -1e-9 && t <= len + 1e-9 && off < 1e-18 {
                        dir = Some(u);
                        break;
                    }
                }
                normal(rng, d, &[dir?])
            }
        }
    }
}

fn validate(spec: &InstanceSpec) -> Result<()> {
    let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
    if spec.ambient_dim == 0 {
        return bad("ambient_dim must be positive");
    }
    if spec.n == 0 {
        return bad("n must be positive");
    }
    let h = spec.heights;
    if !(h.min.is_finite() && h.max.is_finite() && 0.0 <= h.min && h.min <= h.max) {
        return bad("heights need 0 <= min <= max");
    }
    let d = spec.ambient_dim;
    let positive = |x: f64| x.is_finite() && x > 0.0;
    match spec.subspace {
        SubspaceKind::Affine { k, extent } => {
            if k == 0 || k > d || !positive(extent) {
                return bad("affine needs 1 <= k <= ambient_dim and positive extent");
            }
        }
        SubspaceKind::Sphere { k, radius } => {
            if k < 2 || k > d || !positive(radius) {
                return bad("sphere needs 2 <= k <= ambient_dim and positive radius");
            }
        }
        SubspaceKind::Segment { length } => {
            if !positive(length) {
                return bad("segment length must be positive");
            }
        }
        SubspaceKind::Polyline { vertices, length } => {
            if vertices < 2 || !positive(length) {
                return bad("polyline needs at least two vertices and positive length");
            }
        }
    }
    Ok(())
}

/// Deterministic in `spec` including its seed.
pub fn generate(spec: &InstanceSpec) -> Result<Generated> {
    validate(spec)?;
    let d = spec.ambient_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (shape, subspace) = match spec.subspace {
        SubspaceKind::Affine { k, extent } => {
            let basis = orthonormal(&mut rng, d, k);
            let sub = SubspaceSpec::Affine {
                origin: vec![0.0; d],
                basis: basis.clone(),
            };
            (Shape::Affine { basis, extent }, sub)
        }
        SubspaceKind::Sphere { k, radius } => {
            let basis = orthonormal(&mut rng, d, k);
            let sub = SubspaceSpec::Sphere {
                center: vec![0.0; d],
                radius,
                basis: Some(basis.clone()),
            };
            (Shape::Sphere { basis, radius }, sub)
        }
        SubspaceKind::Segment { length } => {
            let u = unit(&mut rng, d);
            let b: Vec<f64> = u.iter().map(|x| x * length).collect();
            let vertices = vec![vec![0.0; d], b.clone()];
            let sub = SubspaceSpec::Segment { a: vec![0.0; d], b };
            (
                Shape::Curve {
                    vertices,
                    cumulative: vec![0.0, length],
                },
                sub,
            )
        }
        SubspaceKind::Polyline { vertices: m, length } => {
            let step = length / (m - 1) as f64;
            let mut vertices = vec![vec![0.0; d]];
            let mut cumulative = vec![0.0];
            for i in 1..m {
                let u = unit(&mut rng, d);
                let next = axpy(&vertices[i - 1], step, &u);
                vertices.push(next);
                cumulative.push(step * i as f64);
            }
            let sub = SubspaceSpec::Polyline {
                vertices: vertices.clone(),
            };
            (Shape::Curve { vertices, cumulative }, sub)
        }
    };
    let oracle = subspace.build()?;
    let mut points = Vec::with_capacity(spec.n);
    let mut heights = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let mut accepted = None;
        for _ in 0..100 {
            let base = shape.sample(&mut rng, d);
            let h = if spec.heights.max > spec.heights.min {
                rng.gen_range(spec.heights.min..=spec.heights.max)
            } else {
                spec.heights.min
            };
            if h == 0.0 {
                accepted = Some((base, 0.0));
                break;
            }
            let Some(dir) = shape.offset_dir(&mut rng, &base, d) else {
                return Err(Error::InvalidSpec(
                    "positive heights need a subspace of lower dimension".into(),
                ));
            };
            let p = axpy(&base, h, &dir);
            let proj = oracle.project(&p);
            let got = crate::metric::euclidean(&p, &proj);
            if (got - h).abs() <= 1e-9 * (1.0 + h) {
                accepted = Some((p, h));
                break;
            }
        }
        let (p, h) = accepted.ok_or_else(|| {
            Error::InvalidSpec("could not place points at the requested heights".into())
        })?;
        points.push(p);
        heights.push(h);
    }
    let queries = (0..spec.queries).map(|_| shape.sample(&mut rng, d)).collect();
    let instance = Arc::new(MetricInstance::euclidean(points.clone(), oracle)?);
    Ok(Generated {
        instance,
        subspace,
        points,
        queries,
        heights,
    })
}
