//! Query subspaces: closest-point projection and net generation.
//!
//! The built-in oracles generate nets on a canonical dyadic grid in chart
//! coordinates, so nets produced for different centers at the same scale share
//! their points exactly. Callers that union many nets (the center set of the
//! AVD structure, the reach sets of the `(1+eps)` structure) rely on this to
//! keep the union small after exact deduplication.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_radii, Error, Result};

/// Upper bound on the size of any single net or net union.
pub const MAX_NET_POINTS: usize = 20_000_000;

/// One `net(center, outer, inner)` call in a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct NetRequest {
    pub center: Vec<f64>,
    pub outer: f64,
    pub inner: f64,
}

/// Oracle for the subspace `M` the queries are drawn from.
///
/// User-supplied oracles are treated as exact: `project` must return the
/// closest point of `M`, and `net` must return points of `M` covering
/// `ball(center, outer) ∩ M` at radius `inner`.
pub trait SubspaceOracle: Send + Sync + fmt::Debug {
    /// Ambient dimension, when the oracle knows it.
    fn ambient_dim(&self) -> Option<usize>;

    fn project(&self, a: &[f64]) -> Vec<f64>;

    fn net(&self, center: &[f64], outer: f64, inner: f64) -> Result<Vec<Vec<f64>>>;

    /// Union of several nets with exact duplicates removed.
    fn net_union(&self, requests: &[NetRequest]) -> Result<Vec<Vec<f64>>> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for req in requests {
            for p in self.net(&req.center, req.outer, req.inner)? {
                if seen.insert(coord_bits(&p)) {
                    out.push(p);
                    if out.len() > MAX_NET_POINTS {
                        return Err(Error::NetTooLarge {
                            limit: MAX_NET_POINTS,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    fn doubling_dim_hint(&self) -> usize;

    /// A random point of `ball(center, radius) ∩ M`, used by covering checks
    /// and query generators. `None` when the oracle cannot sample.
    fn sample_ball(&self, center: &[f64], radius: f64, rng: &mut dyn RngCore) -> Option<Vec<f64>>;

    fn as_affine(&self) -> Option<&AffineFlat> {
        None
    }

    /// Serializable description for built-in oracles.
    fn spec(&self) -> Option<SubspaceSpec> {
        None
    }
}

/// File representation of the built-in oracles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum SubspaceSpec {
    Affine {
        origin: Vec<f64>,
        basis: Vec<Vec<f64>>,
    },
    Sphere {
        center: Vec<f64>,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        basis: Option<Vec<Vec<f64>>>,
    },
    Segment {
        a: Vec<f64>,
        b: Vec<f64>,
    },
    Polyline {
        vertices: Vec<Vec<f64>>,
    },
}

impl SubspaceSpec {
    pub fn build(&self) -> Result<std::sync::Arc<dyn SubspaceOracle>> {
        Ok(match self {
            SubspaceSpec::Affine { origin, basis } => {
                std::sync::Arc::new(AffineFlat::new(origin.clone(), basis.clone())?)
            }
            SubspaceSpec::Sphere {
                center,
                radius,
                basis,
            } => std::sync::Arc::new(Sphere::new(center.clone(), *radius, basis.clone())?),
            SubspaceSpec::Segment { a, b } => {
                std::sync::Arc::new(Polyline::new(vec![a.clone(), b.clone()])?)
            }
            SubspaceSpec::Polyline { vertices } => {
                std::sync::Arc::new(Polyline::new(vertices.clone())?)
            }
        })
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            SubspaceSpec::Affine { origin, .. } => origin.len(),
            SubspaceSpec::Sphere { center, .. } => center.len(),
            SubspaceSpec::Segment { a, .. } => a.len(),
            SubspaceSpec::Polyline { vertices } => vertices.first().map_or(0, Vec::len),
        }
    }
}

pub(crate) fn coord_bits(p: &[f64]) -> Vec<u64> {
    p.iter().map(|x| x.to_bits()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

/// Largest `e` with `2^e <= x`, for finite `x > 0`.
pub(crate) fn floor_log2(x: f64) -> i32 {
    let mut e = x.log2().floor() as i32;
    while pow2(e + 1) <= x {
        e += 1;
    }
    while pow2(e) > x {
        e -= 1;
    }
    e
}

/// Smallest `e` with `2^e >= x`, for finite `x > 0`.
pub(crate) fn ceil_log2(x: f64) -> i32 {
    let mut e = x.log2().ceil() as i32;
    while pow2(e - 1) >= x {
        e -= 1;
    }
    while pow2(e) < x {
        e += 1;
    }
    e
}

fn orthonormalize(vectors: &[Vec<f64>], dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        let scale = norm(v);
        let mut w = v.clone();
        // two passes of Gram-Schmidt keep the chart orthonormal to rounding
        for _ in 0..2 {
            for b in &out {
                let c = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let len = norm(&w);
        if !(len > 1e-9 * scale.max(f64::MIN_POSITIVE)) {
            return Err(Error::InvalidSubspace(
                "basis vectors are linearly dependent".into(),
            ));
        }
        w.iter_mut().for_each(|x| *x /= len);
        out.push(w);
    }
    Ok(out)
}

/// Recursive halving over aligned dyadic cells in `k` chart dimensions.
///
/// Starts from the aligned cells of side `2^J >= 2 * outer` meeting the
/// bounding cube of the ball and splits each surviving cell into its `2^k`
/// children until cells have side `2^leaf_exp`. A cell survives when it may
/// meet the ball and `keep(cell_center, half_diagonal)` holds. Returns leaf
/// cell centers in chart coordinates.
fn dyadic_cells(
    center: &[f64],
    outer: f64,
    leaf_exp: i32,
    keep: impl Fn(&[f64], f64) -> bool,
) -> Result<Vec<Vec<f64>>> {
    let k = center.len();
    if k == 0 {
        return Ok(vec![Vec::new()]);
    }
    let top = ceil_log2(2.0 * outer).max(leaf_exp);
    let side = pow2(top);
    let ranges: Vec<(i64, i64)> = center
        .iter()
        .map(|&c| (((c - outer) / side).floor() as i64, ((c + outer) / side).floor() as i64))
        .collect();
    let mut stack: Vec<(Vec<i64>, i32)> = Vec::new();
    let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        stack.push((idx.clone(), top));
        let mut d = 0;
        loop {
            if d == k {
                break;
            }
            if idx[d] < ranges[d].1 {
                idx[d] += 1;
                break;
            }
            idx[d] = ranges[d].0;
            d += 1;
        }
        if d == k {
            break;
        }
    }
    stack.reverse();

    let sqrt_k = (k as f64).sqrt();
    let mut out = Vec::new();
    let mut cell_center = vec![0.0; k];
    while let Some((idx, exp)) = stack.pop() {
        let side = pow2(exp);
        for (c, &i) in cell_center.iter_mut().zip(&idx) {
            *c = (i as f64 + 0.5) * side;
        }
        let half_diag = 0.5 * side * sqrt_k;
        let dist = cell_center
            .iter()
            .zip(center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist > outer + half_diag || !keep(&cell_center, half_diag) {
            continue;
        }
        if exp <= leaf_exp {
            out.push(cell_center.clone());
            if out.len() > MAX_NET_POINTS {
                return Err(Error::NetTooLarge {
                    limit: MAX_NET_POINTS,
                });
            }
            continue;
        }
        for bits in (0..1u64 << k).rev() {
            let child = idx
                .iter()
                .enumerate()
                .map(|(d, &i)| 2 * i + ((bits >> d) & 1) as i64)
                .collect();
            stack.push((child, exp - 1));
        }
    }
    Ok(out)
}

fn sample_unit_ball(k: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    if k == 0 {
        return Vec::new();
    }
    loop {
        let g: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let len = norm(&g);
        if len > 0.0 {
            let u: f64 = rng.gen::<f64>().powf(1.0 / k as f64);
            return g.into_iter().map(|x| x / len * u).collect();
        }
    }
}

/// An affine flat `origin + span(basis)` with an orthonormal chart.
#[derive(Clone, Debug)]
pub struct AffineFlat {
    origin: Vec<f64>,
    basis: Vec<Vec<f64>>,
}

impl AffineFlat {
    /// The basis is orthonormalized; it must be linearly independent.
    pub fn new(origin: Vec<f64>, basis: Vec<Vec<f64>>) -> Result<Self> {
        let dim = origin.len();
        if dim == 0 {
            return Err(Error::InvalidSubspace("ambient dimension is zero".into()));
        }
        if basis.len() > dim {
            return Err(Error::InvalidSubspace(
                "more basis vectors than ambient dimensions".into(),
            ));
        }
        let basis = orthonormalize(&basis, dim)?;
        Ok(Self { origin, basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Coordinates of the projection of `a` in the chart.
    pub fn chart(&self, a: &[f64]) -> Vec<f64> {
        let rel: Vec<f64> = a.iter().zip(&self.origin).map(|(x, o)| x - o).collect();
        self.basis.iter().map(|b| dot(&rel, b)).collect()
    }

    pub fn chart_point(&self, c: &[f64]) -> Vec<f64> {
        let mut p = self.origin.clone();
        for (ci, b) in c.iter().zip(&self.basis) {
            p.iter_mut().zip(b).for_each(|(x, y)| *x += ci * y);
        }
        p
    }
}

impl SubspaceOracle for AffineFlat {
    fn ambient_dim(&self) -> Option<usize> {
        Some(self.origin.len())
    }

    fn project(&self, a: &[f64]) -> Vec<f64> {
        self.chart_point(&self.chart(a))
    }

    fn net(&self, center: &[f64], outer: f64, inner: f64) -> Result<Vec<Vec<f64>>> {
        check_radii(outer, inner)?;
        let k = self.dim();
        let c = self.chart(center);
        let leaf_exp = floor_log2(2.0 * inner / (k.max(1) as f64).sqrt());
        let cells = dyadic_cells(&c, outer, leaf_exp, |_, _| true)?;
        Ok(cells.iter().map(|cell| self.chart_point(cell)).collect())
    }

    fn doubling_dim_hint(&self) -> usize {
        self.dim()
    }

    fn sample_ball(&self, center: &[f64], radius: f64, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let c = self.chart(center);
        let u = sample_unit_ball(self.dim(), rng);
        let p: Vec<f64> = c.iter().zip(&u).map(|(a, b)| a + radius * b).collect();
        Some(self.chart_point(&p))
    }

    fn as_affine(&self) -> Option<&AffineFlat> {
        Some(self)
    }

    fn spec(&self) -> Option<SubspaceSpec> {
        Some(SubspaceSpec::Affine {
            origin: self.origin.clone(),
            basis: self.basis.clone(),
        })
    }
}

/// The sphere of radius `radius` around `center` inside `center + span(basis)`;
/// without a basis, the full sphere of the ambient space.
///
/// The closest point is not unique at the center itself; there `project`
/// returns `center + radius * basis[0]`.
#[derive(Clone, Debug)]
pub struct Sphere {
    center: Vec<f64>,
    radius: f64,
    basis: Vec<Vec<f64>>,
    explicit_basis: bool,
}

impl Sphere {
    pub fn new(center: Vec<f64>, radius: f64, basis: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let dim = center.len();
        if dim == 0 {
            return Err(Error::InvalidSubspace("ambient dimension is zero".into()));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidSubspace(format!(
                "sphere radius {radius} must be positive"
            )));
        }
        let explicit_basis = basis.is_some();
        let basis = match basis {
            Some(b) => {
                if b.len() < 2 || b.len() > dim {
                    return Err(Error::InvalidSubspace(
                        "sphere basis needs between 2 and ambient-dim vectors".into(),
                    ));
                }
                orthonormalize(&b, dim)?
            }
            None => {
                if dim < 2 {
                    return Err(Error::InvalidSubspace(
                        "sphere needs at least two dimensions".into(),
                    ));
                }
                (0..dim)
                    .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect()
            }
        };
        Ok(Self {
            center,
            radius,
            basis,
            explicit_basis,
        })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    fn chart(&self, a: &[f64]) -> Vec<f64> {
        let rel: Vec<f64> = a.iter().zip(&self.center).map(|(x, o)| x - o).collect();
        self.basis.iter().map(|b| dot(&rel, b)).collect()
    }

    fn chart_point(&self, c: &[f64]) -> Vec<f64> {
        let mut p = self.center.clone();
        for (ci, b) in c.iter().zip(&self.basis) {
            p.iter_mut().zip(b).for_each(|(x, y)| *x += ci * y);
        }
        p
    }

    /// Radial projection in chart coordinates.
    fn snap(&self, c: &[f64]) -> Vec<f64> {
        let len = norm(c);
        if len == 0.0 {
            let mut e = vec![0.0; c.len()];
            e[0] = self.radius;
            e
        } else {
            c.iter().map(|x| x * self.radius / len).collect()
        }
    }
}

impl SubspaceOracle for Sphere {
    fn ambient_dim(&self) -> Option<usize> {
        Some(self.center.len())
    }

    fn project(&self, a: &[f64]) -> Vec<f64> {
        self.chart_point(&self.snap(&self.chart(a)))
    }

    fn net(&self, center: &[f64], outer: f64, inner: f64) -> Result<Vec<Vec<f64>>> {
        check_radii(outer, inner)?;
        let m = self.basis.len();
        let c = self.chart(center);
        // leaf half-diagonal at most inner/2: the snapped cell center is within
        // inner of every sphere point in the cell
        let leaf_exp = floor_log2(inner / (m as f64).sqrt());
        let radius = self.radius;
        let cells = dyadic_cells(&c, outer, leaf_exp, |cell, half_diag| {
            (norm(cell) - radius).abs() <= half_diag
        })?;
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(cells.len());
        for cell in cells {
            let p = self.chart_point(&self.snap(&cell));
            if seen.insert(coord_bits(&p)) {
                out.push(p);
            }
        }
        Ok(out)
    }

    fn doubling_dim_hint(&self) -> usize {
        self.basis.len() - 1
    }

    fn sample_ball(&self, center: &[f64], radius: f64, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let c = self.chart(center);
        for _ in 0..10_000 {
            let u = sample_unit_ball(c.len(), rng);
            let v: Vec<f64> = c.iter().zip(&u).map(|(a, b)| a + radius * b).collect();
            if norm(&v) == 0.0 {
                continue;
            }
            let s = self.snap(&v);
            let d = s.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if d <= radius {
                return Some(self.chart_point(&s));
            }
        }
        None
    }

    fn spec(&self) -> Option<SubspaceSpec> {
        Some(SubspaceSpec::Sphere {
            center: self.center.clone(),
            radius: self.radius,
            basis: self.explicit_basis.then(|| self.basis.clone()),
        })
    }
}

#[derive(Clone, Debug)]
struct Segment {
    start: Vec<f64>,
    end: Vec<f64>,
    dir: Vec<f64>,
    len: f64,
}

impl Segment {
    fn at(&self, t: f64) -> Vec<f64> {
        if t <= 0.0 {
            self.start.clone()
        } else if t >= self.len {
            self.end.clone()
        } else {
            self.start.iter().zip(&self.dir).map(|(s, d)| s + t * d).collect()
        }
    }

    /// Parameter interval of the segment inside `ball(center, radius)`.
    fn ball_interval(&self, center: &[f64], radius: f64) -> Option<(f64, f64)> {
        let w: Vec<f64> = center.iter().zip(&self.start).map(|(c, s)| c - s).collect();
        let tc = dot(&w, &self.dir);
        let perp2 = (dot(&w, &w) - tc * tc).max(0.0);
        let r2 = radius * radius;
        if perp2 > r2 {
            return None;
        }
        let half = (r2 - perp2).sqrt();
        let lo = (tc - half).max(0.0);
        let hi = (tc + half).min(self.len);
        (lo <= hi).then_some((lo, hi))
    }
}

/// A polygonal curve; a segment is the two-vertex case.
#[derive(Clone, Debug)]
pub struct Polyline {
    vertices: Vec<Vec<f64>>,
    segments: Vec<Segment>,
}

impl Polyline {
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::InvalidSubspace(
                "polyline needs at least two vertices".into(),
            ));
        }
        let dim = vertices[0].len();
        if dim == 0 {
            return Err(Error::InvalidSubspace("ambient dimension is zero".into()));
        }
        let mut segments = Vec::with_capacity(vertices.len() - 1);
        for w in vertices.windows(2) {
            if w[1].len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: w[1].len(),
                });
            }
            let diff: Vec<f64> = w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect();
            let len = norm(&diff);
            if !(len > 0.0 && len.is_finite()) {
                return Err(Error::InvalidSubspace(
                    "polyline has a zero-length segment".into(),
                ));
            }
            segments.push(Segment {
                start: w[0].clone(),
                end: w[1].clone(),
                dir: diff.iter().map(|x| x / len).collect(),
                len,
            });
        }
        Ok(Self { vertices, segments })
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.len).sum()
    }

    /// Point at arc-length `s` from the first vertex, clamped to the curve.
    pub fn point_at(&self, mut s: f64) -> Vec<f64> {
        for seg in &self.segments {
            if s <= seg.len {
                return seg.at(s);
            }
            s -= seg.len;
        }
        self.vertices.last().unwrap().clone()
    }

    /// Unit direction of the segment containing arc-length `s`.
    pub fn direction_at(&self, mut s: f64) -> &[f64] {
        for seg in &self.segments {
            if s <= seg.len {
                return &seg.dir;
            }
            s -= seg.len;
        }
        &self.segments.last().unwrap().dir
    }

    /// Grid index ranges `(segment, exponent, kmin, kmax)` of one request.
    fn request_ranges(&self, center: &[f64], outer: f64, inner: f64) -> Vec<(usize, i32, i64, i64)> {
        let exp = floor_log2(2.0 * inner);
        let step = pow2(exp);
        self.segments
            .iter()
            .enumerate()
            .filter_map(|(i, seg)| {
                seg.ball_interval(center, outer).map(|(lo, hi)| {
                    (i, exp, (lo / step).floor() as i64, (hi / step).ceil() as i64)
                })
            })
            .collect()
    }

    fn emit(
        &self,
        ranges: impl IntoIterator<Item = (usize, i32, i64, i64)>,
    ) -> Result<Vec<Vec<f64>>> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (seg, exp, kmin, kmax) in ranges {
            let seg = &self.segments[seg];
            let step = pow2(exp);
            let mut k = kmin;
            while k <= kmax {
                let t = k as f64 * step;
                let p = seg.at(t);
                if seen.insert(coord_bits(&p)) {
                    out.push(p);
                    if out.len() > MAX_NET_POINTS {
                        return Err(Error::NetTooLarge {
                            limit: MAX_NET_POINTS,
                        });
                    }
                }
                if t >= seg.len {
                    break;
                }
                k += 1;
            }
        }
        Ok(out)
    }
}

impl SubspaceOracle for Polyline {
    fn ambient_dim(&self) -> Option<usize> {
        Some(self.vertices[0].len())
    }

    fn project(&self, a: &[f64]) -> Vec<f64> {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for seg in &self.segments {
            let w: Vec<f64> = a.iter().zip(&seg.start).map(|(x, s)| x - s).collect();
            let t = dot(&w, &seg.dir).clamp(0.0, seg.len);
            let p = seg.at(t);
            let d2: f64 = p.iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum();
            if best.as_ref().is_none_or(|(b, _)| d2 < *b) {
                best = Some((d2, p));
            }
        }
        best.unwrap().1
    }

    fn net(&self, center: &[f64], outer: f64, inner: f64) -> Result<Vec<Vec<f64>>> {
        check_radii(outer, inner)?;
        self.emit(self.request_ranges(center, outer, inner))
    }

    /// Merges grid ranges per segment and scale before emitting, so the cost
    /// is proportional to the union rather than the sum of the nets.
    fn net_union(&self, requests: &[NetRequest]) -> Result<Vec<Vec<f64>>> {
        let mut groups: BTreeMap<(usize, i32), Vec<(i64, i64)>> = BTreeMap::new();
        for req in requests {
            check_radii(req.outer, req.inner)?;
            for (seg, exp, lo, hi) in self.request_ranges(&req.center, req.outer, req.inner) {
                groups.entry((seg, exp)).or_default().push((lo, hi));
            }
        }
        let mut merged = Vec::new();
        for ((seg, exp), mut ranges) in groups {
            ranges.sort_unstable();
            let mut cur = ranges[0];
            for &(lo, hi) in &ranges[1..] {
                if lo <= cur.1 + 1 {
                    cur.1 = cur.1.max(hi);
                } else {
                    merged.push((seg, exp, cur.0, cur.1));
                    cur = (lo, hi);
                }
            }
            merged.push((seg, exp, cur.0, cur.1));
        }
        self.emit(merged)
    }

    fn doubling_dim_hint(&self) -> usize {
        1
    }

    fn sample_ball(&self, center: &[f64], radius: f64, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let pieces: Vec<(usize, f64, f64)> = self
            .segments
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.ball_interval(center, radius).map(|(lo, hi)| (i, lo, hi)))
            .collect();
        let total: f64 = pieces.iter().map(|(_, lo, hi)| hi - lo).sum();
        if pieces.is_empty() {
            return None;
        }
        if total == 0.0 {
            let (i, lo, _) = pieces[0];
            return Some(self.segments[i].at(lo));
        }
        let mut u = rng.gen::<f64>() * total;
        for &(i, lo, hi) in &pieces {
            if u <= hi - lo {
                return Some(self.segments[i].at(lo + u));
            }
            u -= hi - lo;
        }
        let (i, _, hi) = *pieces.last().unwrap();
        Some(self.segments[i].at(hi))
    }

    fn spec(&self) -> Option<SubspaceSpec> {
        Some(if self.vertices.len() == 2 {
            SubspaceSpec::Segment {
                a: self.vertices[0].clone(),
                b: self.vertices[1].clone(),
            }
        } else {
            SubspaceSpec::Polyline {
                vertices: self.vertices.clone(),
            }
        })
    }
}

type ProjectFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type NetFn = dyn Fn(&[f64], f64, f64) -> Vec<Vec<f64>> + Send + Sync;

/// Oracle assembled from user callbacks.
pub struct FnOracle {
    project: Box<ProjectFn>,
    net: Box<NetFn>,
    doubling_dim: usize,
    ambient_dim: Option<usize>,
}

impl FnOracle {
    pub fn new(
        project: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        net: impl Fn(&[f64], f64, f64) -> Vec<Vec<f64>> + Send + Sync + 'static,
        doubling_dim: usize,
        ambient_dim: Option<usize>,
    ) -> Self {
        Self {
            project: Box::new(project),
            net: Box::new(net),
            doubling_dim,
            ambient_dim,
        }
    }
}

impl fmt::Debug for FnOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnOracle")
            .field("doubling_dim", &self.doubling_dim)
            .finish()
    }
}

impl SubspaceOracle for FnOracle {
    fn ambient_dim(&self) -> Option<usize> {
        self.ambient_dim
    }

    fn project(&self, a: &[f64]) -> Vec<f64> {
        (self.project)(a)
    }

    fn net(&self, center: &[f64], outer: f64, inner: f64) -> Result<Vec<Vec<f64>>> {
        check_radii(outer, inner)?;
        Ok((self.net)(center, outer, inner))
    }

    fn doubling_dim_hint(&self) -> usize {
        self.doubling_dim
    }

    fn sample_ball(&self, _: &[f64], _: f64, _: &mut dyn RngCore) -> Option<Vec<f64>> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::euclidean;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn covers(net: &[Vec<f64>], x: &[f64], r: f64) -> bool {
        net.iter().any(|p| euclidean(p, x) <= r * (1.0 + 1e-12))
    }

    #[test]
    fn log2_helpers() {
        assert_eq!(floor_log2(1.0), 0);
        assert_eq!(floor_log2(3.9), 1);
        assert_eq!(floor_log2(0.25), -2);
        assert_eq!(ceil_log2(4.0), 2);
        assert_eq!(ceil_log2(4.1), 3);
        assert_eq!(ceil_log2(0.3), -1);
    }

    #[test]
    fn plane_projection() {
        let m = AffineFlat::new(vec![0.0; 3], vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(m.project(&[1.0, 2.0, 7.0]), vec![1.0, 2.0, 0.0]);
        assert_eq!(m.project(&[1.0, 2.0, 0.0]), vec![1.0, 2.0, 0.0]);
    }

    #[test]
    fn affine_rejects_dependent_basis() {
        let err = AffineFlat::new(vec![0.0; 3], vec![vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0]]);
        assert!(matches!(err, Err(Error::InvalidSubspace(_))));
    }

    #[test]
    fn circle_projection_and_singular_center() {
        let m = Sphere::new(vec![0.0, 0.0], 1.0, None).unwrap();
        let p = m.project(&[3.0, 4.0]);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(m.project(&[0.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn net_rejects_bad_radii() {
        let m = Polyline::new(vec![vec![0.0], vec![10.0]]).unwrap();
        assert!(matches!(m.net(&[5.0], 1.0, 0.0), Err(Error::InvalidRadii { .. })));
        assert!(matches!(m.net(&[5.0], 1.0, 2.0), Err(Error::InvalidRadii { .. })));
        assert!(matches!(m.net(&[5.0], 1.0, -1.0), Err(Error::InvalidRadii { .. })));
    }

    #[test]
    fn segment_net_covers_densely_sampled_segment() {
        let m = Polyline::new(vec![vec![0.0], vec![10.0]]).unwrap();
        let net = m.net(&[5.0], 5.0, 1.0).unwrap();
        for i in 0..=10_000 {
            let x = i as f64 / 1000.0;
            assert!(covers(&net, &[x], 1.0), "uncovered {x}");
        }
        assert!(net.iter().all(|p| (0.0..=10.0).contains(&p[0])));
    }

    #[test]
    fn net_with_equal_radii_on_plane() {
        let m = AffineFlat::new(vec![0.0; 3], vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let net = m.net(&[0.0; 3], 2.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x = m.sample_ball(&[0.0; 3], 2.0, &mut rng).unwrap();
            assert!(covers(&net, &x, 2.0));
        }
        assert!(net.iter().all(|p| p[2] == 0.0));
    }

    #[test]
    fn sphere_net_covers_cap() {
        let m = Sphere::new(vec![1.0, -2.0, 0.5], 2.0, None).unwrap();
        let center = m.project(&[5.0, 1.0, 0.0]);
        let net = m.net(&center, 1.5, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let x = m.sample_ball(&center, 1.5, &mut rng).unwrap();
            assert!(covers(&net, &x, 0.2));
        }
        for p in &net {
            assert!((euclidean(p, m.center()) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn polyline_union_equals_union_of_nets() {
        let m = Polyline::new(vec![vec![0.0, 0.0], vec![3.0, 0.0], vec![3.0, 2.0], vec![7.0, 5.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let requests: Vec<NetRequest> = (0..40)
            .map(|_| {
                let s = rng.gen_range(0.0..m.length());
                let inner = rng.gen_range(0.05..0.6);
                NetRequest {
                    center: m.point_at(s),
                    outer: inner * rng.gen_range(1.0..20.0),
                    inner,
                }
            })
            .collect();
        let mut slow: HashSet<Vec<u64>> = HashSet::new();
        for r in &requests {
            for p in m.net(&r.center, r.outer, r.inner).unwrap() {
                slow.insert(coord_bits(&p));
            }
        }
        let fast = m.net_union(&requests).unwrap();
        let fast_set: HashSet<Vec<u64>> = fast.iter().map(|p| coord_bits(p)).collect();
        assert_eq!(fast.len(), fast_set.len());
        assert_eq!(slow, fast_set);
    }

    #[test]
    fn nets_share_grid_points() {
        let m = Polyline::new(vec![vec![0.0, 0.0], vec![8.0, 0.0]]).unwrap();
        let a = m.net(&[2.0, 0.0], 3.0, 0.3).unwrap();
        let b = m.net(&[2.5, 0.0], 3.0, 0.3).unwrap();
        let sa: HashSet<_> = a.iter().map(|p| coord_bits(p)).collect();
        let shared = b.iter().filter(|p| sa.contains(&coord_bits(p))).count();
        assert!(shared + 4 >= b.len());
    }

    #[test]
    fn polyline_projection_picks_nearest_segment() {
        let m = Polyline::new(vec![vec![0.0, 0.0], vec![4.0, 0.0], vec![4.0, 4.0]]).unwrap();
        assert_eq!(m.project(&[1.0, 3.0]), vec![1.0, 0.0]);
        assert_eq!(m.project(&[5.0, 3.0]), vec![4.0, 3.0]);
        assert_eq!(m.project(&[-2.0, -1.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = SubspaceSpec::Segment {
            a: vec![0.0, 1.0],
            b: vec![2.0, 1.0],
        };
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(s, r#"{"kind":"segment","params":{"a":[0.0,1.0],"b":[2.0,1.0]}}"#);
        let back: SubspaceSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.build().unwrap().spec(), Some(spec));
    }
}
