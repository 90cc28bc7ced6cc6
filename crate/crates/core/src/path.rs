//! Sampled paths and their variation norms.
//!
//! A [`SampledPath`] is a continuous path observed on a finite, strictly
//! increasing time grid and interpreted as piecewise linear between samples.
//! All distances are Euclidean.

use crate::error::{Error, Result};

/// Relative tolerance used to match a requested time against grid times.
const GRID_MATCH_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    times: Vec<f64>,
    /// Row-major, `times.len() * dim` entries.
    values: Vec<f64>,
    dim: usize,
}

impl SampledPath {
    /// Builds a path from a flat row-major value buffer.
    pub fn new(times: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPath("dimension must be positive".into()));
        }
        if times.len() < 2 {
            return Err(Error::InvalidPath(format!(
                "a path needs at least 2 grid points, got {}",
                times.len()
            )));
        }
        if values.len() != times.len() * dim {
            return Err(Error::InvalidPath(format!(
                "expected {} values for {} points of dimension {}, got {}",
                times.len() * dim,
                times.len(),
                dim,
                values.len()
            )));
        }
        if let Some(t) = times.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidPath(format!("non-finite time {t}")));
        }
        if let Some(w) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPath(format!(
                "times must be strictly increasing: t[{}] = {} >= t[{}] = {}",
                w,
                times[w],
                w + 1,
                times[w + 1]
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidPath(format!(
                "non-finite value {} at grid index {}",
                values[k],
                k / dim
            )));
        }
        Ok(Self { times, values, dim })
    }

    pub fn from_rows(times: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                what: "path row",
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(times, rows.concat(), dim)
    }

    /// One-dimensional path.
    pub fn scalar(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(times, values, 1)
    }

    pub fn constant(times: Vec<f64>, value: &[f64]) -> Result<Self> {
        let n = times.len();
        Self::new(times, value.repeat(n), value.len())
    }

    /// Uniform grid of `n_points` on `[0, horizon]`.
    pub fn uniform_grid(n_points: usize, horizon: f64) -> Vec<f64> {
        let steps = n_points.saturating_sub(1).max(1) as f64;
        (0..n_points).map(|i| horizon * i as f64 / steps).collect()
    }

    /// Samples `f` on a uniform grid of `[0, horizon]`.
    pub fn from_fn(n_points: usize, horizon: f64, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let times = Self::uniform_grid(n_points, horizon);
        let values: Vec<f64> = times.iter().flat_map(|&t| f(t)).collect();
        Self::new(times, values, dim)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn first(&self) -> &[f64] {
        self.value(0)
    }

    pub fn last(&self) -> &[f64] {
        self.value(self.len() - 1)
    }

    /// Largest time step.
    pub fn mesh(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// Euclidean distance between the samples at grid indices `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclidean(self.value(i), self.value(j))
    }

    pub fn sup_norm(&self) -> f64 {
        self.rows().map(norm).fold(0.0, f64::max)
    }

    /// Grid index of time `t`, matched up to a tiny relative tolerance.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let tol = GRID_MATCH_RTOL * (self.end_time() - self.start_time()).abs().max(t.abs()).max(1.0);
        let pos = self.times.partition_point(|&x| x < t - tol);
        match self.times.get(pos) {
            Some(&x) if (x - t).abs() <= tol => Ok(pos),
            _ => Err(Error::OffGrid { time: t }),
        }
    }

    /// Grid indices of an interval `[s, t]` with `s < t`.
    pub fn interval_indices(&self, s: f64, t: f64) -> Result<(usize, usize)> {
        if !(s < t) {
            return Err(Error::EmptyInterval { start: s, end: t });
        }
        Ok((self.index_of(s)?, self.index_of(t)?))
    }

    /// Linear interpolation at an arbitrary time inside the grid span.
    pub fn interpolate(&self, t: f64) -> Result<Vec<f64>> {
        let (a, b) = (self.start_time(), self.end_time());
        if t < a || t > b {
            return Err(Error::OffGrid { time: t });
        }
        let j = self.times.partition_point(|&x| x <= t).min(self.len() - 1).max(1);
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let w = (t - t0) / (t1 - t0);
        Ok(self
            .value(j - 1)
            .iter()
            .zip(self.value(j))
            .map(|(x0, x1)| x0 + w * (x1 - x0))
            .collect())
    }

    /// Sub-path on the grid interval `[s, t]`.
    pub fn restrict(&self, s: f64, t: f64) -> Result<Self> {
        let (i, j) = self.interval_indices(s, t)?;
        Ok(self.slice(i, j))
    }

    /// Sub-path between grid indices `i < j` (inclusive).
    pub fn slice(&self, i: usize, j: usize) -> Self {
        assert!(i < j && j < self.len(), "slice [{i}, {j}] out of range");
        Self {
            times: self.times[i..=j].to_vec(),
            values: self.values[i * self.dim..(j + 1) * self.dim].to_vec(),
            dim: self.dim,
        }
    }

    /// Joins two paths whose junction (last point of `self`, first of `other`) agrees.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                what: "concatenated path",
                expected: self.dim,
                found: other.dim,
            });
        }
        if self.end_time() != other.start_time() || self.last() != other.first() {
            return Err(Error::InvalidPath(format!(
                "junction mismatch: ({}, {:?}) vs ({}, {:?})",
                self.end_time(),
                self.last(),
                other.start_time(),
                other.first()
            )));
        }
        let mut times = self.times.clone();
        times.extend_from_slice(&other.times[1..]);
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values[self.dim..]);
        Ok(Self {
            times,
            values,
            dim: self.dim,
        })
    }

    /// Inserts `k - 1` equally spaced, linearly interpolated points in every interval.
    pub fn refine(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter {
                name: "refinement factor",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        let n = self.len();
        let mut times = Vec::with_capacity((n - 1) * k + 1);
        let mut values = Vec::with_capacity(((n - 1) * k + 1) * self.dim);
        for i in 0..n - 1 {
            let (t0, t1) = (self.times[i], self.times[i + 1]);
            let (x0, x1) = (self.value(i), self.value(i + 1));
            for m in 0..k {
                let w = m as f64 / k as f64;
                times.push(t0 + w * (t1 - t0));
                values.extend(x0.iter().zip(x1).map(|(a, b)| a + w * (b - a)));
            }
        }
        times.push(self.end_time());
        values.extend_from_slice(self.last());
        Self::new(times, values, self.dim)
    }

    /// Keeps every `stride`-th grid point; `(len - 1)` must be divisible by `stride`.
    pub fn coarsen(&self, stride: usize) -> Result<Self> {
        if stride == 0 || !(self.len() - 1).is_multiple_of(stride) {
            return Err(Error::InvalidParameter {
                name: "coarsening stride",
                value: stride as f64,
                reason: "must be positive and divide the number of intervals",
            });
        }
        let idx: Vec<usize> = (0..self.len()).step_by(stride).collect();
        Ok(self.select(&idx))
    }

    fn select(&self, idx: &[usize]) -> Self {
        Self {
            times: idx.iter().map(|&i| self.times[i]).collect(),
            values: idx.iter().flat_map(|&i| self.value(i).iter().copied()).collect(),
            dim: self.dim,
        }
    }

    /// Applies `f` to every sample, producing a path of dimension `out_dim`.
    pub fn map(&self, out_dim: usize, f: impl Fn(f64, &[f64]) -> Vec<f64>) -> Result<Self> {
        let values: Vec<f64> = self.times.iter().zip(self.rows()).flat_map(|(&t, x)| f(t, x)).collect();
        Self::new(self.times.clone(), values, out_dim)
    }

    /// Stacks components of two paths on a shared grid, `(self, other)`.
    pub fn zip(&self, other: &Self) -> Result<Self> {
        check_same_grid(self, other)?;
        let values: Vec<f64> = self
            .rows()
            .zip(other.rows())
            .flat_map(|(a, b)| a.iter().chain(b).copied())
            .collect();
        Self::new(self.times.clone(), values, self.dim + other.dim)
    }

    /// Pointwise difference on a shared grid.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_same_grid(self, other)?;
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                what: "path difference",
                expected: self.dim,
                found: other.dim,
            });
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Self::new(self.times.clone(), values, self.dim)
    }
}

/// Dyadic ladder of coarsenings of `path`, coarsest first.
///
/// Level `k` of `levels` keeps every `2^(levels - 1 - k)`-th point, so the
/// last level is `path` itself.
pub fn dyadic_ladder(path: &SampledPath, levels: usize) -> Result<Vec<SampledPath>> {
    if levels == 0 {
        return Err(Error::InvalidParameter {
            name: "levels",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    (0..levels).map(|k| path.coarsen(1 << (levels - 1 - k))).collect()
}

pub fn check_same_grid(a: &SampledPath, b: &SampledPath) -> Result<()> {
    if a.times != b.times {
        return Err(Error::GridMismatch(format!(
            "{} points on [{}, {}] vs {} points on [{}, {}]",
            a.len(),
            a.start_time(),
            a.end_time(),
            b.len(),
            b.start_time(),
            b.end_time()
        )));
    }
    Ok(())
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Strictly increasing grid indices, first and last included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub indices: Vec<usize>,
}

impl Partition {
    /// Times of the partition points on `path`'s grid.
    pub fn times(&self, path: &SampledPath) -> Vec<f64> {
        self.indices.iter().map(|&i| path.time(i)).collect()
    }

    /// `Σ ‖X_{t_{k+1}} − X_{t_k}‖^p`, accumulated left to right.
    pub fn power_sum(&self, path: &SampledPath, p: f64) -> f64 {
        self.indices
            .windows(2)
            .fold(0.0, |acc, w| acc + path.distance(w[0], w[1]).powf(p))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationResult {
    pub value: f64,
    /// Indices into the full grid of the path.
    pub optimal_partition: Partition,
    pub p: f64,
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::ExponentBelowOne { p });
    }
    Ok(())
}

/// Grid p-variation of `path` over its whole span.
pub fn p_variation(path: &SampledPath, p: f64) -> Result<VariationResult> {
    check_exponent(p)?;
    Ok(p_variation_indices(path, p, 0, path.len() - 1))
}

/// Grid p-variation over `[s, t]`, both grid times.
pub fn p_variation_over(path: &SampledPath, p: f64, s: f64, t: f64) -> Result<VariationResult> {
    check_exponent(p)?;
    let (i, j) = path.interval_indices(s, t)?;
    Ok(p_variation_indices(path, p, i, j))
}

/// Exact dynamic program `V[j] = max_{i<j} V[i] + ‖X_j − X_i‖^p` over grid indices `lo..=hi`.
///
/// Ties keep the earliest predecessor, which favours coarser partitions.
pub(crate) fn p_variation_indices(path: &SampledPath, p: f64, lo: usize, hi: usize) -> VariationResult {
    let n = hi - lo + 1;
    let mut best = vec![0.0f64; n];
    let mut pred = vec![0usize; n];
    for j in 1..n {
        let mut v = f64::NEG_INFINITY;
        let mut arg = 0;
        for (i, &b) in best[..j].iter().enumerate() {
            let cand = b + path.distance(lo + i, lo + j).powf(p);
            if cand > v {
                v = cand;
                arg = i;
            }
        }
        best[j] = v;
        pred[j] = arg;
    }
    let mut indices = vec![hi];
    let mut j = n - 1;
    while j > 0 {
        j = pred[j];
        indices.push(lo + j);
    }
    indices.reverse();
    VariationResult {
        value: best[n - 1].powf(1.0 / p),
        optimal_partition: Partition { indices },
        p,
    }
}

/// `‖X‖_{p,[0,T]} + sup_t ‖X_t‖`.
pub fn p_variation_norm(path: &SampledPath, p: f64) -> Result<f64> {
    Ok(p_variation(path, p)?.value + path.sup_norm())
}

/// Distance induced by the p-variation norm, `‖X − Y‖` for paths on a shared grid.
pub fn p_variation_metric(a: &SampledPath, b: &SampledPath, p: f64) -> Result<f64> {
    p_variation_norm(&a.sub(b)?, p)
}

/// `max_{s≠t} ‖X_t − X_s‖ / |t − s|^α` over grid pairs.
pub fn holder_norm(path: &SampledPath, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            value: alpha,
            reason: "Hölder exponent must lie in (0, 1]",
        });
    }
    let n = path.len();
    let mut best = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let q = path.distance(i, j) / (path.time(j) - path.time(i)).powf(alpha);
            best = best.max(q);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> SampledPath {
        SampledPath::scalar(vec![0.0, 0.25, 0.5, 0.75, 1.0], vec![0.0, 0.25, 0.5, 0.75, 1.0]).unwrap()
    }

    fn zigzag() -> SampledPath {
        SampledPath::scalar(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn rejects_bad_paths() {
        assert!(SampledPath::scalar(vec![0.0], vec![1.0]).is_err());
        assert!(SampledPath::scalar(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(SampledPath::scalar(vec![0.0, 1.0], vec![1.0, f64::NAN]).is_err());
        assert!(SampledPath::new(vec![0.0, 1.0], vec![1.0, 2.0, 3.0], 2).is_err());
        assert!(SampledPath::from_rows(vec![0.0, 1.0], &[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn monotone_line_has_unit_variation_with_endpoint_partition() {
        let r = p_variation(&line(), 1.5).unwrap();
        assert!((r.value - 1.0).abs() < 1e-15);
        assert_eq!(r.optimal_partition.indices, vec![0, 4]);
    }

    #[test]
    fn constant_path_has_zero_variation() {
        let c = SampledPath::constant(vec![0.0, 0.3, 1.0], &[2.0, -1.0]).unwrap();
        for p in [1.0, 1.3, 2.0, 3.5] {
            assert_eq!(p_variation(&c, p).unwrap().value, 0.0);
        }
    }

    #[test]
    fn zigzag_two_variation() {
        let r = p_variation(&zigzag(), 2.0).unwrap();
        assert!((r.value - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.optimal_partition.indices, vec![0, 1, 2]);
    }

    #[test]
    fn exponent_below_one_is_rejected() {
        let err = p_variation(&line(), 0.5).unwrap_err();
        assert_eq!(err, Error::ExponentBelowOne { p: 0.5 });
        assert!(err.to_string().contains("constant"));
    }

    #[test]
    fn off_grid_interval_is_rejected() {
        assert_eq!(
            p_variation_over(&line(), 1.0, 0.1, 1.0).unwrap_err(),
            Error::OffGrid { time: 0.1 }
        );
        assert!(p_variation_over(&line(), 1.0, 0.5, 0.5).is_err());
        let r = p_variation_over(&zigzag(), 1.0, 0.5, 1.0).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.optimal_partition.indices, vec![1, 2]);
    }

    #[test]
    fn variation_norms() {
        assert!((p_variation_norm(&line(), 1.0).unwrap() - 2.0).abs() < 1e-15);
        let c = SampledPath::constant(vec![0.0, 1.0], &[3.0, 4.0]).unwrap();
        assert_eq!(p_variation_norm(&c, 1.7).unwrap(), 5.0);
        assert!((p_variation_norm(&zigzag(), 2.0).unwrap() - (2f64.sqrt() + 1.0)).abs() < 1e-15);
        assert_eq!(p_variation_metric(&line(), &line(), 1.5).unwrap(), 0.0);
    }

    #[test]
    fn holder_norm_examples() {
        assert!((holder_norm(&line(), 1.0).unwrap() - 1.0).abs() < 1e-15);
        let c = SampledPath::constant(vec![0.0, 0.5, 1.0], &[1.0]).unwrap();
        assert_eq!(holder_norm(&c, 0.5).unwrap(), 0.0);
        let pair = SampledPath::scalar(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(holder_norm(&pair, 0.5).unwrap(), 1.0);
        assert!(holder_norm(&pair, 0.0).is_err());
        assert!(holder_norm(&pair, 1.5).is_err());
    }

    #[test]
    fn refine_restrict_concat() {
        let two = SampledPath::scalar(vec![0.0, 1.0], vec![2.0, 4.0]).unwrap();
        let r = two.refine(2).unwrap();
        assert_eq!(r.times(), &[0.0, 0.5, 1.0]);
        assert_eq!(r.value(1), &[3.0]);
        assert_eq!(line().restrict(0.0, 1.0).unwrap(), line());
        assert_eq!(two.refine(1).unwrap(), two);

        let a = line().restrict(0.0, 0.5).unwrap();
        let b = line().restrict(0.5, 1.0).unwrap();
        assert_eq!(a.concat(&b).unwrap(), line());
        assert!(b.concat(&a).is_err());
        assert!(two.refine(0).is_err());
    }

    #[test]
    fn refining_a_line_keeps_its_variation() {
        for k in 1..6 {
            let r = line().refine(k).unwrap();
            for p in [1.0, 1.5, 2.0] {
                let v = p_variation(&r, p).unwrap().value;
                assert!((v - 1.0).abs() < 1e-12, "k={k} p={p} v={v}");
            }
        }
    }

    #[test]
    fn coarsen_and_ladder() {
        let p = SampledPath::from_fn(9, 1.0, 1, |t| vec![t * t]).unwrap();
        let ladder = dyadic_ladder(&p, 3).unwrap();
        assert_eq!(ladder.iter().map(|l| l.len()).collect::<Vec<_>>(), vec![3, 5, 9]);
        assert_eq!(ladder[2], p);
        assert_eq!(ladder[0].value(1), &[0.25]);
        assert!(p.coarsen(3).is_err());
    }

    #[test]
    fn interpolation_and_grid_lookup() {
        let p = SampledPath::scalar(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!(p.interpolate(2.0).unwrap(), vec![1.0]);
        assert_eq!(p.interpolate(3.0).unwrap(), vec![0.0]);
        assert!(p.interpolate(3.5).is_err());
        assert_eq!(p.index_of(1.0 + 1e-15).unwrap(), 1);
        assert!(p.index_of(1.5).is_err());
        assert_eq!(p.mesh(), 2.0);
    }
}
