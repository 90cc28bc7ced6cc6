//! Method of characteristics for `u(t,x) = φ(x) + Σ_j ∫_0^t F^j(r, x, u, D_x u) dX^j_r`.
//!
//! Characteristics `(a, b, c)` are integrated by Euler from seeds
//! `(x, φ(x), Dφ(x))` on a uniform seed grid. The characteristic map
//! `ā_t` is inverted by Newton on a tensor-product cubic interpolant over
//! that grid, and the solution is assembled as `u = b̄ ∘ ā⁻¹`,
//! `D_x u = c̄ ∘ ā⁻¹`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarObservable;
use crate::path::{euclidean, norm, SampledPath};
use crate::report::{LevelResidual, ResidualReport};
use crate::yde::{NewtonOptions, SolveConfig};

pub const MAX_SEED_DIM: usize = 3;

/// Partial derivatives of every component `F^j` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianPartials {
    /// Row `j` is `F^j_x`.
    pub fx: DMatrix<f64>,
    pub fu: DVector<f64>,
    /// Row `j` is `F^j_p`.
    pub fp: DMatrix<f64>,
}

pub type HamiltonianFn = Arc<dyn Fn(f64, &[f64], f64, &[f64]) -> DVector<f64> + Send + Sync>;
pub type PartialsFn = Arc<dyn Fn(f64, &[f64], f64, &[f64]) -> HamiltonianPartials + Send + Sync>;

/// `F = (F^1, …, F^n)` with `F^j(t, x, u, p)`, `x, p ∈ ℝ^d`, `u ∈ ℝ`.
#[derive(Clone)]
pub struct HamiltonianSpec {
    dim: usize,
    components: usize,
    value: HamiltonianFn,
    partials: Option<PartialsFn>,
    pub fd_step: f64,
}

impl fmt::Debug for HamiltonianSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianSpec")
            .field("dim", &self.dim)
            .field("components", &self.components)
            .field("analytic_partials", &self.partials.is_some())
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

impl HamiltonianSpec {
    pub fn new(
        dim: usize,
        components: usize,
        value: impl Fn(f64, &[f64], f64, &[f64]) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            components,
            value: Arc::new(value),
            partials: None,
            fd_step: crate::field::DEFAULT_FD_STEP,
        }
    }

    pub fn with_partials(
        mut self,
        partials: impl Fn(f64, &[f64], f64, &[f64]) -> HamiltonianPartials + Send + Sync + 'static,
    ) -> Self {
        self.partials = Some(Arc::new(partials));
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        assert!(h > 0.0, "fd_step must be positive");
        self.fd_step = h;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.partials.is_some()
    }

    pub fn value(&self, t: f64, x: &[f64], u: f64, p: &[f64]) -> DVector<f64> {
        let v = (self.value)(t, x, u, p);
        assert_eq!(
            v.len(),
            self.components,
            "hamiltonian returned {} components, expected {}",
            v.len(),
            self.components
        );
        v
    }

    /// Analytic partials, or central differences in each of the `2d + 1` arguments.
    pub fn partials(&self, t: f64, x: &[f64], u: f64, p: &[f64]) -> HamiltonianPartials {
        if let Some(part) = &self.partials {
            return part(t, x, u, p);
        }
        let (n, d) = (self.components, self.dim);
        let step = |v: f64| self.fd_step * v.abs().max(1.0);
        let mut fx = DMatrix::zeros(n, d);
        let mut fp = DMatrix::zeros(n, d);
        let mut xs = x.to_vec();
        let mut ps = p.to_vec();
        for k in 0..d {
            let h = step(x[k]);
            xs[k] = x[k] + h;
            let plus = self.value(t, &xs, u, p);
            xs[k] = x[k] - h;
            let minus = self.value(t, &xs, u, p);
            xs[k] = x[k];
            fx.set_column(k, &((plus - minus) / (2.0 * h)));

            let h = step(p[k]);
            ps[k] = p[k] + h;
            let plus = self.value(t, x, u, &ps);
            ps[k] = p[k] - h;
            let minus = self.value(t, x, u, &ps);
            ps[k] = p[k];
            fp.set_column(k, &((plus - minus) / (2.0 * h)));
        }
        let h = step(u);
        let fu = (self.value(t, x, u + h, p) - self.value(t, x, u - h, p)) / (2.0 * h);
        HamiltonianPartials { fx, fu, fp }
    }
}

/// `F(p) = k·p`, one component.
pub fn transport(k: Vec<f64>) -> HamiltonianSpec {
    let d = k.len();
    let (kv, kp) = (k.clone(), k);
    HamiltonianSpec::new(d, 1, move |_, _, _, p| {
        DVector::from_element(1, kv.iter().zip(p).map(|(a, b)| a * b).sum())
    })
    .with_partials(move |_, _, _, _| HamiltonianPartials {
        fx: DMatrix::zeros(1, d),
        fu: DVector::zeros(1),
        fp: DMatrix::from_row_slice(1, d, &kp),
    })
}

/// `F(p) = |p|² / 2`, one component.
pub fn half_p_squared(d: usize) -> HamiltonianSpec {
    HamiltonianSpec::new(d, 1, |_, _, _, p| DVector::from_element(1, 0.5 * norm(p).powi(2))).with_partials(
        move |_, _, _, p| HamiltonianPartials {
            fx: DMatrix::zeros(1, d),
            fu: DVector::zeros(1),
            fp: DMatrix::from_row_slice(1, d, p),
        },
    )
}

/// `F(u) = u`, one component.
pub fn linear_u(d: usize) -> HamiltonianSpec {
    HamiltonianSpec::new(d, 1, |_, _, u, _| DVector::from_element(1, u)).with_partials(move |_, _, _, _| {
        HamiltonianPartials {
            fx: DMatrix::zeros(1, d),
            fu: DVector::from_element(1, 1.0),
            fp: DMatrix::zeros(1, d),
        }
    })
}

/// `F ≡ 0` with `n` components.
pub fn zero_hamiltonian(d: usize, n: usize) -> HamiltonianSpec {
    HamiltonianSpec::new(d, n, move |_, _, _, _| DVector::zeros(n)).with_partials(move |_, _, _, _| {
        HamiltonianPartials {
            fx: DMatrix::zeros(n, d),
            fu: DVector::zeros(n),
            fp: DMatrix::zeros(n, d),
        }
    })
}

pub const HAMILTONIAN_NAMES: &[&str] = &["transport-k", "burgers-half-p-squared", "linear-u", "zero"];

/// Hamiltonian by name; `param` is the transport speed for `transport-k`.
pub fn hamiltonian_by_name(name: &str, d: usize, param: f64) -> Result<HamiltonianSpec> {
    match name {
        "transport-k" => Ok(transport(vec![param; d])),
        "burgers-half-p-squared" => Ok(half_p_squared(d)),
        "linear-u" => Ok(linear_u(d)),
        "zero" => Ok(zero_hamiltonian(d, 1)),
        _ => Err(Error::UnknownName(format!(
            "hamiltonian '{name}'; known: {}",
            HAMILTONIAN_NAMES.join(", ")
        ))),
    }
}

/// One characteristic: position `a`, value `b` and gradient `c` on the driver grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CharTriple {
    pub a: SampledPath,
    pub b: SampledPath,
    pub c: SampledPath,
    /// Last grid time with a finite state; the triple is frozen afterwards.
    pub lifetime: f64,
}

/// Euler integration of
/// `da = −Σ F^j_p dX^j`, `db = Σ (F^j − F^j_p·c) dX^j`, `dc = Σ (F^j_x + F^j_u c) dX^j`.
pub fn solve_characteristics(
    h: &HamiltonianSpec,
    x: &SampledPath,
    init: (&[f64], f64, &[f64]),
    cfg: &SolveConfig,
) -> Result<CharTriple> {
    let (x0, u0, p0) = init;
    let d = h.dim();
    if x.dim() != h.components() {
        return Err(Error::DimensionMismatch {
            what: "driver dimension vs hamiltonian components",
            expected: h.components(),
            found: x.dim(),
        });
    }
    if x0.len() != d || p0.len() != d {
        return Err(Error::DimensionMismatch {
            what: "characteristic seed",
            expected: d,
            found: x0.len().max(p0.len()),
        });
    }
    if cfg.substeps_per_interval == 0 {
        return Err(Error::InvalidParameter {
            name: "substeps_per_interval",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    let m = cfg.substeps_per_interval;
    let n = x.len();
    let (mut a, mut b, mut c) = (x0.to_vec(), u0, p0.to_vec());
    let mut av = Vec::with_capacity(n * d);
    let mut bv = Vec::with_capacity(n);
    let mut cv = Vec::with_capacity(n * d);
    av.extend_from_slice(&a);
    bv.push(b);
    cv.extend_from_slice(&c);
    let mut alive = n - 1;
    let mut dx = vec![0.0; x.dim()];
    'grid: for i in 0..n - 1 {
        let (t0, t1) = (x.time(i), x.time(i + 1));
        for (k, (lo, hi)) in x.value(i).iter().zip(x.value(i + 1)).enumerate() {
            dx[k] = if m == 1 { hi - lo } else { (hi - lo) / m as f64 };
        }
        for s in 0..m {
            let t = if s == 0 {
                t0
            } else {
                t0 + (s as f64 / m as f64) * (t1 - t0)
            };
            let f = h.value(t, &a, b, &c);
            let part = h.partials(t, &a, b, &c);
            let mut da = vec![0.0; d];
            let mut db = 0.0;
            let mut dc = vec![0.0; d];
            for (j, &dxj) in dx.iter().enumerate() {
                let fp = part.fp.row(j);
                let fp_c: f64 = fp.iter().zip(&c).map(|(p, q)| p * q).sum();
                db += (f[j] - fp_c) * dxj;
                for k in 0..d {
                    da[k] -= fp[k] * dxj;
                    dc[k] += (part.fx[(j, k)] + part.fu[j] * c[k]) * dxj;
                }
            }
            for k in 0..d {
                a[k] += da[k];
                c[k] += dc[k];
            }
            b += db;
            if !(b.is_finite() && a.iter().chain(&c).all(|v| v.is_finite())) {
                alive = i;
                break 'grid;
            }
        }
        av.extend_from_slice(&a);
        bv.push(b);
        cv.extend_from_slice(&c);
    }
    let frozen = (
        av[alive * d..(alive + 1) * d].to_vec(),
        bv[alive],
        cv[alive * d..(alive + 1) * d].to_vec(),
    );
    while bv.len() < n {
        av.extend_from_slice(&frozen.0);
        bv.push(frozen.1);
        cv.extend_from_slice(&frozen.2);
    }
    let times = x.times().to_vec();
    Ok(CharTriple {
        a: SampledPath::new(times.clone(), av, d)?,
        b: SampledPath::new(times.clone(), bv, 1)?,
        c: SampledPath::new(times, cv, d)?,
        lifetime: x.time(alive),
    })
}

/// `(x, φ(x), Dφ(x))`.
pub fn seed_from_initial_data(phi: &ScalarObservable, x: &[f64]) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    if phi.out_dim() != 1 || phi.in_dim() != x.len() {
        return Err(Error::DimensionMismatch {
            what: "initial datum must map the seed space to a scalar",
            expected: x.len(),
            found: phi.in_dim(),
        });
    }
    let grad = phi.jacobian(x);
    Ok((x.to_vec(), phi.value(x)[0], grad.row(0).iter().copied().collect()))
}

/// Uniform tensor grid of seeds, last axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

impl SeedGrid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        let g = Self { lower, upper, counts };
        g.validate(2)?;
        Ok(g)
    }

    /// `count` points per axis on `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64, count: usize) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d], vec![count; d])
    }

    fn validate(&self, min_count: usize) -> Result<()> {
        let d = self.lower.len();
        if d == 0 || d > MAX_SEED_DIM || self.upper.len() != d || self.counts.len() != d {
            return Err(Error::DimensionMismatch {
                what: "seed grid axes (1 to 3 supported)",
                expected: d,
                found: self.upper.len().max(self.counts.len()),
            });
        }
        for k in 0..d {
            if !(self.lower[k] < self.upper[k]) {
                return Err(Error::InvalidParameter {
                    name: "seed grid bounds",
                    value: self.lower[k],
                    reason: "lower must be below upper on every axis",
                });
            }
            if self.counts[k] < min_count {
                return Err(Error::InvalidParameter {
                    name: "seed grid points per axis",
                    value: self.counts[k] as f64,
                    reason: "too few points on an axis",
                });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / (self.counts[axis] - 1) as f64
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.counts[axis] {
            self.upper[axis]
        } else {
            self.lower[axis] + i as f64 * self.spacing(axis)
        }
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = flat % self.counts[k];
            flat /= self.counts[k];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.coord(k, i))
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// Characteristics from every seed, with `det D_x ā_t` and caustic times.
#[derive(Debug, Clone)]
pub struct CharField {
    pub seeds: SeedGrid,
    pub triples: Vec<CharTriple>,
    /// `det D_x ā_t` per seed on the driver grid.
    pub jacobian_det: Vec<Vec<f64>>,
    /// First zero of the determinant, or the seed's lifetime / horizon.
    pub tau: Vec<f64>,
    /// Whether `tau` marks a detected caustic or blow-up rather than the horizon.
    pub terminated: Vec<bool>,
    times: Vec<f64>,
    driver: SampledPath,
}

pub fn build_char_field(
    h: &HamiltonianSpec,
    x: &SampledPath,
    phi: &ScalarObservable,
    seeds: &SeedGrid,
    cfg: &SolveConfig,
) -> Result<CharField> {
    seeds.validate(3)?;
    if seeds.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            what: "seed grid vs hamiltonian space",
            expected: h.dim(),
            found: seeds.dim(),
        });
    }
    let triples = (0..seeds.len())
        .into_par_iter()
        .map(|s| {
            let (x0, u0, p0) = seed_from_initial_data(phi, &seeds.point(s))?;
            solve_characteristics(h, x, (&x0, u0, &p0), cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut field = CharField {
        seeds: seeds.clone(),
        triples,
        jacobian_det: Vec::new(),
        tau: Vec::new(),
        terminated: Vec::new(),
        times: x.times().to_vec(),
        driver: x.clone(),
    };
    field.jacobian_det = (0..seeds.len())
        .into_par_iter()
        .map(|s| {
            (0..x.len())
                .map(|i| field.seed_jacobian(s, |tr| tr.a.value(i)).determinant())
                .collect()
        })
        .collect();
    let horizon = x.end_time();
    let ends: Vec<(f64, bool)> = (0..seeds.len())
        .map(|s| {
            let life = field.triples[s].lifetime;
            match sign_change(&field.times, &field.jacobian_det[s]) {
                Some(t) if t <= life => (t, true),
                _ => (life, life < horizon),
            }
        })
        .collect();
    field.tau = ends.iter().map(|e| e.0).collect();
    field.terminated = ends.iter().map(|e| e.1).collect();
    Ok(field)
}

/// First sign change of `det` from its initial sign, linear in time between grid points.
pub fn caustic_time(times: &[f64], det: &[f64]) -> f64 {
    sign_change(times, det).unwrap_or_else(|| *times.last().expect("non-empty grid"))
}

fn sign_change(times: &[f64], det: &[f64]) -> Option<f64> {
    let sign0 = det[0].signum();
    for i in 0..det.len() - 1 {
        let (d0, d1) = (det[i], det[i + 1]);
        if !d1.is_finite() {
            return Some(times[i]);
        }
        if d1 * sign0 <= 0.0 {
            if d1 == d0 {
                return Some(times[i + 1]);
            }
            return Some(times[i] + d0 / (d0 - d1) * (times[i + 1] - times[i]));
        }
    }
    None
}

impl CharField {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn driver(&self) -> &SampledPath {
        &self.driver
    }

    pub fn dim(&self) -> usize {
        self.seeds.dim()
    }

    /// Whether seed `s` is still before its caustic at time `t`.
    pub fn pre_caustic(&self, s: usize, t: f64) -> bool {
        t < self.tau[s] || !self.terminated[s]
    }

    /// Seed-difference Jacobian of a per-seed quantity at grid index `i`:
    /// central differences inside the grid, one-sided on its faces.
    fn seed_jacobian<'a>(&'a self, s: usize, q: impl Fn(&'a CharTriple) -> &'a [f64]) -> DMatrix<f64> {
        let d = self.dim();
        let idx = self.seeds.multi_index(s);
        let rows = q(&self.triples[s]).len();
        let mut jac = DMatrix::zeros(rows, d);
        for k in 0..d {
            let (lo, hi) = (idx[k].saturating_sub(1), (idx[k] + 1).min(self.seeds.counts[k] - 1));
            let mut il = idx.clone();
            il[k] = lo;
            let mut ih = idx.clone();
            ih[k] = hi;
            let span = (hi - lo) as f64 * self.seeds.spacing(k);
            let (ql, qh) = (
                q(&self.triples[self.seeds.flat_index(&il)]),
                q(&self.triples[self.seeds.flat_index(&ih)]),
            );
            for r in 0..rows {
                jac[(r, k)] = (qh[r] - ql[r]) / span;
            }
        }
        jac
    }

    /// Tensor-product cubic interpolant of `q` at `x`, with its gradient.
    fn interpolate<'a>(
        &'a self,
        x: &[f64],
        q: impl Fn(&'a CharTriple) -> &'a [f64],
    ) -> (DVector<f64>, DMatrix<f64>, Vec<usize>) {
        let d = self.dim();
        let stencils: Vec<Stencil> = (0..d).map(|k| Stencil::new(&self.seeds, k, x[k])).collect();
        let rows = q(&self.triples[0]).len();
        let mut val = DVector::zeros(rows);
        let mut grad = DMatrix::zeros(rows, d);
        let mut nodes = Vec::new();
        let sizes: Vec<usize> = stencils.iter().map(|s| s.len).collect();
        let total: usize = sizes.iter().product();
        let mut idx = vec![0; d];
        for flat in 0..total {
            let mut rem = flat;
            for k in (0..d).rev() {
                idx[k] = rem % sizes[k];
                rem /= sizes[k];
            }
            let node: Vec<usize> = (0..d).map(|k| stencils[k].start + idx[k]).collect();
            let s = self.seeds.flat_index(&node);
            nodes.push(s);
            let qs = q(&self.triples[s]);
            let w: f64 = (0..d).map(|k| stencils[k].w[idx[k]]).product();
            for r in 0..rows {
                val[r] += w * qs[r];
            }
            for g in 0..d {
                let wg: f64 = (0..d)
                    .map(|k| {
                        if k == g {
                            stencils[k].dw[idx[k]]
                        } else {
                            stencils[k].w[idx[k]]
                        }
                    })
                    .product();
                for r in 0..rows {
                    grad[(r, g)] += wg * qs[r];
                }
            }
        }
        (val, grad, nodes)
    }

    fn index(&self, t: f64) -> Result<usize> {
        self.driver.index_of(t)
    }

    /// Newton solve of `ā_t(x) = y` on the interpolated characteristic map.
    pub fn invert_from(&self, i: usize, y: &[f64], seed: &[f64], opts: &NewtonOptions) -> Result<Vec<f64>> {
        let d = self.dim();
        if y.len() != d {
            return Err(Error::DimensionMismatch {
                what: "inversion target",
                expected: d,
                found: y.len(),
            });
        }
        let t = self.times[i];
        let a_at = |x: &[f64]| self.interpolate(x, |tr| tr.a.value(i));
        let mut x = seed.to_vec();
        let (mut img, mut jac, _) = a_at(&x);
        let mut res = euclidean(img.as_slice(), y);
        let mut iterations = 0;
        while res > opts.tol {
            if iterations == opts.max_iter {
                return Err(Error::NewtonFailure {
                    residual: res,
                    iterations,
                });
            }
            iterations += 1;
            let r = DVector::from_iterator(d, img.iter().zip(y).map(|(a, b)| a - b));
            let step = jac.clone().lu().solve(&r).ok_or(Error::Caustic {
                time: t,
                tau: self.min_tau_near(&x),
            })?;
            let mut lambda = 1.0;
            loop {
                let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - lambda * s).collect();
                let clamped: Vec<f64> = cand
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v.clamp(self.seeds.lower[k], self.seeds.upper[k]))
                    .collect();
                let (ci, cj, _) = a_at(&clamped);
                let cr = euclidean(ci.as_slice(), y);
                if cr < res || lambda < 1e-6 {
                    if cr >= res && clamped != cand {
                        return Err(Error::OutOfDomain {
                            what: format!("preimage of {y:?} at t = {t} leaves the seed grid"),
                        });
                    }
                    x = clamped;
                    img = ci;
                    jac = cj;
                    res = cr;
                    break;
                }
                lambda *= 0.5;
            }
        }
        let (_, _, nodes) = a_at(&x);
        if let Some(&s) = nodes.iter().find(|&&s| !self.pre_caustic(s, t)) {
            return Err(Error::Caustic {
                time: t,
                tau: self.tau[s],
            });
        }
        Ok(x)
    }

    fn min_tau_near(&self, x: &[f64]) -> f64 {
        let (_, _, nodes) = self.interpolate(x, |tr| tr.b.value(0));
        nodes.iter().map(|&s| self.tau[s]).fold(f64::INFINITY, f64::min)
    }

    /// Pre-caustic seed whose image at grid index `i` is nearest to `y`.
    pub fn nearest_seed(&self, i: usize, y: &[f64]) -> Result<Vec<f64>> {
        let t = self.times[i];
        (0..self.seeds.len())
            .filter(|&s| self.pre_caustic(s, t))
            .min_by(|&p, &q| {
                euclidean(self.triples[p].a.value(i), y).total_cmp(&euclidean(self.triples[q].a.value(i), y))
            })
            .map(|s| self.seeds.point(s))
            .ok_or(Error::Caustic {
                time: t,
                tau: self.tau.iter().copied().fold(f64::INFINITY, f64::min),
            })
    }

    /// Interpolated `(b̄, c̄, D_x ā)` at seed-space point `x` and grid index `i`.
    fn state_at(&self, i: usize, x: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        let (_, da, _) = self.interpolate(x, |tr| tr.a.value(i));
        let (b, _, _) = self.interpolate(x, |tr| tr.b.value(i));
        let (c, _, _) = self.interpolate(x, |tr| tr.c.value(i));
        (b[0], c.iter().copied().collect(), da)
    }
}

/// `ā_t⁻¹(y)` at grid time `t`, seeded from the nearest pre-caustic characteristic.
pub fn invert_char_map(field: &CharField, t: f64, y: &[f64]) -> Result<Vec<f64>> {
    let i = field.index(t)?;
    let seed = field.nearest_seed(i, y)?;
    field.invert_from(i, y, &seed, &NewtonOptions::default())
}

/// Cubic (or lower, on short axes) Lagrange weights along one axis.
struct Stencil {
    start: usize,
    len: usize,
    w: [f64; 4],
    dw: [f64; 4],
}

impl Stencil {
    fn new(grid: &SeedGrid, axis: usize, x: f64) -> Self {
        let n = grid.counts[axis];
        let len = n.min(4);
        let h = grid.spacing(axis);
        let cell = ((x - grid.lower[axis]) / h).floor() as isize;
        let start = (cell - 1).clamp(0, (n - len) as isize) as usize;
        let nodes: Vec<f64> = (0..len).map(|j| grid.coord(axis, start + j)).collect();
        let mut w = [0.0; 4];
        let mut dw = [0.0; 4];
        for j in 0..len {
            let mut wj = 1.0;
            for l in 0..len {
                if l != j {
                    wj *= (x - nodes[l]) / (nodes[j] - nodes[l]);
                }
            }
            w[j] = wj;
            let mut dj = 0.0;
            for m in 0..len {
                if m == j {
                    continue;
                }
                let mut term = 1.0 / (nodes[j] - nodes[m]);
                for l in 0..len {
                    if l != j && l != m {
                        term *= (x - nodes[l]) / (nodes[j] - nodes[l]);
                    }
                }
                dj += term;
            }
            dw[j] = dj;
        }
        Self { start, len, w, dw }
    }
}

/// `u` and `D_x u` at evaluation points over a set of grid times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionField {
    pub points: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    /// `u[time][point]`; NaN once the point is past its validity time.
    pub u: Vec<Vec<f64>>,
    /// `du[time][point]` is `D_x u`, NaN past validity.
    pub du: Vec<Vec<Vec<f64>>>,
    /// Last assembled time before inversion failed, per point.
    pub valid_until: Vec<f64>,
}

impl SolutionField {
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }
}

/// Preimage, value, gradient and `D_x ā` along one evaluation point, until inversion fails.
struct PointTrace {
    pre: Vec<Vec<f64>>,
    u: Vec<f64>,
    du: Vec<Vec<f64>>,
    da: Vec<DMatrix<f64>>,
}

fn trace_point(field: &CharField, y: &[f64], indices: &[usize], opts: &NewtonOptions) -> PointTrace {
    let mut out = PointTrace {
        pre: Vec::new(),
        u: Vec::new(),
        du: Vec::new(),
        da: Vec::new(),
    };
    let mut warm: Option<Vec<f64>> = None;
    for &i in indices {
        let attempt = match &warm {
            Some(w) => field.invert_from(i, y, w, opts).or_else(|_| {
                let seed = field.nearest_seed(i, y)?;
                field.invert_from(i, y, &seed, opts)
            }),
            None => field
                .nearest_seed(i, y)
                .and_then(|seed| field.invert_from(i, y, &seed, opts)),
        };
        let Ok(x) = attempt else { break };
        let (b, c, da) = field.state_at(i, &x);
        out.u.push(b);
        out.du.push(c);
        out.da.push(da);
        out.pre.push(x.clone());
        warm = Some(x);
    }
    out
}

/// `u(t, y) = b̄_t(ā_t⁻¹(y))` and `D_x u = c̄_t(ā_t⁻¹(y))` on every `every`-th grid time.
pub fn assemble_solution(field: &CharField, points: &[Vec<f64>], every: usize) -> Result<SolutionField> {
    let d = field.dim();
    if every == 0 {
        return Err(Error::InvalidParameter {
            name: "every",
            value: 0.0,
            reason: "time stride must be positive",
        });
    }
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            what: "evaluation point",
            expected: d,
            found: p.len(),
        });
    }
    let n = field.times.len();
    let mut indices: Vec<usize> = (0..n).step_by(every).collect();
    if *indices.last().expect("non-empty") != n - 1 {
        indices.push(n - 1);
    }
    let opts = NewtonOptions::default();
    let traces: Vec<PointTrace> = points
        .par_iter()
        .map(|y| trace_point(field, y, &indices, &opts))
        .collect();
    let times: Vec<f64> = indices.iter().map(|&i| field.times[i]).collect();
    let mut u = vec![vec![f64::NAN; points.len()]; times.len()];
    let mut du = vec![vec![vec![f64::NAN; d]; points.len()]; times.len()];
    let mut valid_until = Vec::with_capacity(points.len());
    for (p, tr) in traces.iter().enumerate() {
        for (k, (v, g)) in tr.u.iter().zip(&tr.du).enumerate() {
            u[k][p] = *v;
            du[k][p].clone_from(g);
        }
        valid_until.push(match tr.u.len() {
            0 => f64::NAN,
            m => times[m - 1],
        });
    }
    Ok(SolutionField {
        points: points.to_vec(),
        times,
        u,
        du,
        valid_until,
    })
}

/// Uniform evaluation grid on a box, last axis varying fastest.
pub fn eval_grid(lower: &[f64], upper: &[f64], counts: &[usize]) -> Result<Vec<Vec<f64>>> {
    let g = SeedGrid::new(lower.to_vec(), upper.to_vec(), counts.to_vec())?;
    Ok(g.points())
}

fn ladder_stride(levels: usize, k: usize) -> usize {
    1 << (levels - 1 - k)
}

fn check_ladder(n_points: usize, levels: usize) -> Result<()> {
    if levels == 0 || !(n_points - 1).is_multiple_of(1 << (levels - 1)) {
        return Err(Error::InvalidParameter {
            name: "levels",
            value: levels as f64,
            reason: "need at least one level and 2^(levels-1) dividing the number of intervals",
        });
    }
    Ok(())
}

/// Ladder of `sup |u(t,x) − φ(x) − Σ_j ∫_0^t F^j(r, x, u, D_x u) dX^j|` over points and
/// pre-validity times, with the integral summed on dyadic coarsenings of the grid.
pub fn pde_residual(
    sol: &SolutionField,
    h: &HamiltonianSpec,
    x: &SampledPath,
    phi: &ScalarObservable,
    levels: usize,
) -> Result<ResidualReport> {
    if sol.times != x.times() {
        return Err(Error::GridMismatch(
            "solution must be assembled on every driver grid time".to_owned(),
        ));
    }
    check_ladder(x.len(), levels)?;
    let per_point: Vec<Vec<f64>> = sol
        .points
        .par_iter()
        .enumerate()
        .map(|(p, y)| {
            let phi_y = phi.value(y)[0];
            let valid = sol.u.iter().take_while(|row| row[p].is_finite()).count();
            (0..levels)
                .map(|k| {
                    let stride = ladder_stride(levels, k);
                    let mut integral = 0.0;
                    let mut worst: f64 = 0.0;
                    let mut i = 0;
                    while i < valid {
                        worst = worst.max((sol.u[i][p] - phi_y - integral).abs());
                        if i + stride >= x.len() {
                            break;
                        }
                        let f = h.value(x.time(i), y, sol.u[i][p], &sol.du[i][p]);
                        for (j, fj) in f.iter().enumerate() {
                            integral += fj * (x.value(i + stride)[j] - x.value(i)[j]);
                        }
                        i += stride;
                    }
                    worst
                })
                .collect()
        })
        .collect();
    Ok(ResidualReport::new(
        (0..levels)
            .map(|k| LevelResidual {
                mesh: x
                    .coarsen(ladder_stride(levels, k))
                    .map(|c| c.mesh())
                    .unwrap_or(f64::NAN),
                residual: per_point.iter().map(|r| r[k]).fold(0.0, f64::max),
            })
            .collect(),
    ))
}

/// Ladder of `sup |ā_t⁻¹(y) − y − Σ_j ∫ Dā_r(ā_r⁻¹(y))⁻¹ F^j_p(r, y, u, D_x u) dX^j|`.
pub fn verify_inverse_flow_equation(
    field: &CharField,
    h: &HamiltonianSpec,
    points: &[Vec<f64>],
    levels: usize,
) -> Result<ResidualReport> {
    let x = field.driver();
    check_ladder(x.len(), levels)?;
    let d = field.dim();
    let all: Vec<usize> = (0..x.len()).collect();
    let opts = NewtonOptions::default();
    let per_point = points
        .par_iter()
        .map(|y| {
            let tr = trace_point(field, y, &all, &opts);
            let valid = tr.pre.len();
            (0..levels)
                .map(|k| {
                    let stride = ladder_stride(levels, k);
                    let mut acc = tr.pre.first().cloned().unwrap_or_default();
                    let mut worst: f64 = 0.0;
                    let mut i = 0;
                    while i < valid {
                        worst = worst.max(euclidean(&tr.pre[i], &acc));
                        if i + stride >= x.len() {
                            break;
                        }
                        let part = h.partials(x.time(i), y, tr.u[i], &tr.du[i]);
                        let inv = tr.da[i].clone().try_inverse().ok_or(Error::SingularJacobian {
                            what: "characteristic map",
                        })?;
                        for j in 0..h.components() {
                            let dxj = x.value(i + stride)[j] - x.value(i)[j];
                            let fp = DVector::from_iterator(d, part.fp.row(j).iter().copied());
                            let v = &inv * fp;
                            for r in 0..d {
                                acc[r] += v[r] * dxj;
                            }
                        }
                        i += stride;
                    }
                    Ok(worst)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport::new(
        (0..levels)
            .map(|k| LevelResidual {
                mesh: x
                    .coarsen(ladder_stride(levels, k))
                    .map(|c| c.mesh())
                    .unwrap_or(f64::NAN),
                residual: per_point.iter().map(|r| r[k]).fold(0.0, f64::max),
            })
            .collect(),
    ))
}

/// Ladder over seed spacings `h·2^(levels−1−k)` of
/// `sup |D_x b̄_t − c̄_t·D_x ā_t|` on interior seeds and pre-caustic times.
pub fn verify_compatibility(field: &CharField, levels: usize) -> Result<ResidualReport> {
    if levels == 0 {
        return Err(Error::InvalidParameter {
            name: "levels",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    let d = field.dim();
    let grid = &field.seeds;
    let out = (0..levels)
        .map(|k| {
            let stride = ladder_stride(levels, k);
            let spacing: Vec<f64> = (0..d).map(|a| grid.spacing(a) * stride as f64).collect();
            let residual = (0..grid.len())
                .into_par_iter()
                .filter_map(|s| {
                    let idx = grid.multi_index(s);
                    let interior = (0..d).all(|a| idx[a] >= stride && idx[a] + stride < grid.counts[a]);
                    interior.then(|| {
                        let neighbours: Vec<(usize, usize)> = (0..d)
                            .map(|a| {
                                let mut lo = idx.clone();
                                lo[a] -= stride;
                                let mut hi = idx.clone();
                                hi[a] += stride;
                                (grid.flat_index(&lo), grid.flat_index(&hi))
                            })
                            .collect();
                        let mut worst: f64 = 0.0;
                        for (i, &t) in field.times.iter().enumerate() {
                            let alive = neighbours
                                .iter()
                                .all(|&(l, h)| field.pre_caustic(l, t) && field.pre_caustic(h, t));
                            if !(alive && field.pre_caustic(s, t)) {
                                break;
                            }
                            let c = field.triples[s].c.value(i);
                            for (a, &(l, h)) in neighbours.iter().enumerate() {
                                let (tl, th) = (&field.triples[l], &field.triples[h]);
                                let db = (th.b.value(i)[0] - tl.b.value(i)[0]) / (2.0 * spacing[a]);
                                let ca: f64 = (0..d)
                                    .map(|r| c[r] * (th.a.value(i)[r] - tl.a.value(i)[r]) / (2.0 * spacing[a]))
                                    .sum();
                                worst = worst.max((db - ca).abs());
                            }
                        }
                        worst
                    })
                })
                .reduce(|| 0.0, f64::max);
            LevelResidual {
                mesh: spacing.iter().copied().fold(0.0, f64::max),
                residual,
            }
        })
        .collect();
    Ok(ResidualReport::new(out))
}
