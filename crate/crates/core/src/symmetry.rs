//! Conserved quantities, point symmetries and infinitesimal symmetries.
//!
//! Algebraic checks evaluate the sufficient conditions `DF·f = 0`,
//! `f∘Φ = DΦ·f` and `[g, f_i] = 0` on sampled points; dynamic checks compare
//! solver trajectories on a dyadic ladder of driver grids. Fields are
//! evaluated at `t = 0` in the algebraic checks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSpec, PointMap, ScalarObservable, SmoothMap};
use crate::integrate::{indefinite_integral, OperatorPath, TagRule};
use crate::path::{dyadic_ladder, euclidean, SampledPath};
use crate::report::{CheckReport, LevelResidual, ResidualReport};
use crate::yde::{euler_run, solve_yde, SolveConfig};

pub const ANALYTIC_TOL: f64 = 1e-8;
pub const FD_TOL: f64 = 1e-4;
pub const DEFAULT_FLOW_TOL: f64 = 1e-6;
pub const DEFAULT_FLOW_STEPS: usize = 1024;

/// Uniform sample points in an axis-aligned box, reproducible from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub count: usize,
    pub seed: u64,
}

impl SampleDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, count: usize, seed: u64) -> Result<Self> {
        let dom = Self {
            lower,
            upper,
            count,
            seed,
        };
        dom.validate()?;
        Ok(dom)
    }

    /// The cube `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64, count: usize, seed: u64) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d], count, seed)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "sample box bounds",
                expected: self.lower.len(),
                found: self.upper.len(),
            });
        }
        if let Some((l, _)) = self.lower.iter().zip(&self.upper).find(|(l, u)| !(l < u)) {
            return Err(Error::InvalidParameter {
                name: "lower",
                value: *l,
                reason: "box bounds must satisfy lower < upper componentwise",
            });
        }
        if self.count == 0 {
            return Err(Error::InvalidParameter {
                name: "count",
                value: 0.0,
                reason: "need at least one sample",
            });
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.count)
            .map(|_| {
                self.lower
                    .iter()
                    .zip(&self.upper)
                    .map(|(&l, &u)| rng.random_range(l..u))
                    .collect()
            })
            .collect()
    }
}

fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { what, expected, found });
    }
    Ok(())
}

fn sampled_check(dom: &SampleDomain, tol: f64, residual: impl Fn(&[f64]) -> f64 + Sync) -> CheckReport {
    let pts = dom.points();
    let res: Vec<f64> = pts.par_iter().map(|p| residual(p)).collect();
    CheckReport::from_samples(pts.into_iter().zip(res), tol).with_seed(dom.seed)
}

fn default_tol(analytic: bool) -> f64 {
    if analytic {
        ANALYTIC_TOL
    } else {
        FD_TOL
    }
}

/// `max_{y, i} ‖DF(y)·f_i(y)‖` over the sample set.
pub fn check_conserved_algebraic(
    obs: &ScalarObservable,
    f: &FieldSpec,
    dom: &SampleDomain,
    tol: Option<f64>,
) -> Result<CheckReport> {
    dom.validate()?;
    check_dim("observable input vs state", f.state_dim(), obs.in_dim())?;
    check_dim("sample box vs state", f.state_dim(), dom.dim())?;
    let tol = tol.unwrap_or_else(|| default_tol(obs.has_analytic_jacobian()));
    Ok(sampled_check(dom, tol, |y| {
        let dfy = obs.jacobian(y) * f.value(0.0, y);
        dfy.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
    }))
}

fn observable_drift(obs: &ScalarObservable, y: &SampledPath) -> f64 {
    let f0 = obs.value(y.first());
    y.rows().map(|r| (obs.value(r) - &f0).norm()).fold(0.0, f64::max)
}

/// Ladder of `sup_t ‖F(Y_t) − F(Y_0)‖` for solves on dyadic coarsenings of `x`.
pub fn check_conserved_trajectory(
    obs: &ScalarObservable,
    f: &FieldSpec,
    x: &SampledPath,
    y0: &[f64],
    cfg: &SolveConfig,
    levels: usize,
) -> Result<ResidualReport> {
    check_dim("observable input vs state", f.state_dim(), obs.in_dim())?;
    let out = dyadic_ladder(x, levels)?
        .par_iter()
        .map(|xl| {
            let y = solve_yde(f, xl, y0, cfg)?;
            Ok(LevelResidual {
                mesh: xl.mesh(),
                residual: observable_drift(obs, &y),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport::new(out))
}

/// `F(Y_0) + Σ_i ∫ (f_i F)(Y) dX^i` on the finest grid, and the ladder of its
/// sup distance to the direct evaluation `F(Y_t)`.
pub fn propagate_observable(
    obs: &ScalarObservable,
    f: &FieldSpec,
    x: &SampledPath,
    y0: &[f64],
    cfg: &SolveConfig,
    levels: usize,
) -> Result<(SampledPath, ResidualReport)> {
    check_dim("observable input vs state", f.state_dim(), obs.in_dim())?;
    let per_level = dyadic_ladder(x, levels)?
        .par_iter()
        .map(|xl| {
            let y = solve_yde(f, xl, y0, cfg)?;
            let rates: Vec<DMatrix<f64>> = y
                .times()
                .iter()
                .zip(y.rows())
                .map(|(&t, r)| obs.jacobian(r) * f.value(t, r))
                .collect();
            let integral = indefinite_integral(
                &OperatorPath::from_matrices(y.times().to_vec(), &rates)?,
                xl,
                TagRule::Left,
            )?;
            let f0 = obs.value(y.first());
            let rhs = integral.map(obs.out_dim(), |_, w| {
                w.iter().zip(f0.iter()).map(|(a, b)| a + b).collect()
            })?;
            let residual = y
                .rows()
                .zip(rhs.rows())
                .map(|(r, w)| euclidean(obs.value(r).as_slice(), w))
                .fold(0.0, f64::max);
            Ok((
                rhs,
                LevelResidual {
                    mesh: xl.mesh(),
                    residual,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (paths, levels): (Vec<_>, Vec<_>) = per_level.into_iter().unzip();
    let rhs = paths.into_iter().next_back().expect("at least one level");
    Ok((rhs, ResidualReport::new(levels)))
}

/// `max_y ‖f(Φ(y)) − DΦ(y)·f(y)‖` over the sample set.
pub fn check_symmetry_map(phi: &PointMap, f: &FieldSpec, dom: &SampleDomain, tol: Option<f64>) -> Result<CheckReport> {
    dom.validate()?;
    check_dim("point map input vs state", f.state_dim(), phi.in_dim())?;
    check_dim("point map output vs state", f.state_dim(), phi.out_dim())?;
    check_dim("sample box vs state", f.state_dim(), dom.dim())?;
    let tol = tol.unwrap_or_else(|| default_tol(phi.has_analytic_jacobian()));
    Ok(sampled_check(dom, tol, |y| {
        let lhs = f.value(0.0, phi.value(y).as_slice());
        let rhs = phi.jacobian(y) * f.value(0.0, y);
        (lhs - rhs).norm()
    }))
}

/// Ladder of `sup_t ‖Φ(Y_t(y0)) − Y_t(Φ(y0))‖`.
pub fn check_symmetry_trajectory(
    phi: &PointMap,
    f: &FieldSpec,
    x: &SampledPath,
    y0: &[f64],
    cfg: &SolveConfig,
    levels: usize,
) -> Result<ResidualReport> {
    check_dim("point map input vs state", f.state_dim(), phi.in_dim())?;
    check_dim("point map output vs state", f.state_dim(), phi.out_dim())?;
    let start = phi.value(y0);
    let out = dyadic_ladder(x, levels)?
        .par_iter()
        .map(|xl| {
            let y = solve_yde(f, xl, y0, cfg)?;
            let image = solve_yde(f, xl, start.as_slice(), cfg)?;
            let residual = y
                .rows()
                .zip(image.rows())
                .map(|(a, b)| euclidean(phi.value(a).as_slice(), b))
                .fold(0.0, f64::max);
            Ok(LevelResidual {
                mesh: xl.mesh(),
                residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport::new(out))
}

fn single_column(what: &'static str, f: &FieldSpec) -> Result<()> {
    check_dim(what, 1, f.driver_dim())?;
    if !f.is_vector_field() {
        return Err(Error::DimensionMismatch {
            what: "vector field output vs state",
            expected: f.in_dim(),
            found: f.out_dim(),
        });
    }
    Ok(())
}

/// `[g, f](y) = Df(y)·g(y) − Dg(y)·f(y)` for single-column fields.
pub fn lie_bracket(g: &FieldSpec, f: &FieldSpec, y: &[f64]) -> Result<DVector<f64>> {
    single_column("bracket operand g columns", g)?;
    single_column("bracket operand f columns", f)?;
    check_dim("bracket operand state dimensions", g.state_dim(), f.state_dim())?;
    check_dim("bracket point", g.state_dim(), y.len())?;
    Ok(bracket(g, f, 0, y))
}

fn bracket(g: &FieldSpec, f: &FieldSpec, i: usize, y: &[f64]) -> DVector<f64> {
    let gy = g.column(0.0, y, 0);
    let fy = f.column(0.0, y, i);
    &f.jacobian(0.0, y)[i] * gy - &g.jacobian(0.0, y)[0] * fy
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfinitesimalOptions {
    /// Bracket tolerance; defaults by Jacobian kind.
    pub algebraic_tol: Option<f64>,
    pub flow_tol: f64,
    /// Euler steps for each flow time of `g`.
    pub flow_steps: usize,
}

impl Default for InfinitesimalOptions {
    fn default() -> Self {
        Self {
            algebraic_tol: None,
            flow_tol: DEFAULT_FLOW_TOL,
            flow_steps: DEFAULT_FLOW_STEPS,
        }
    }
}

/// Time-`s` map of `dY = g(Y) dt` by Euler with `steps` uniform steps, with its Jacobian.
pub fn euler_flow_map(g: &FieldSpec, s: f64, steps: usize) -> Result<PointMap> {
    single_column("flow generator columns", g)?;
    if !(s.is_finite() && s >= 0.0) || steps == 0 {
        return Err(Error::InvalidParameter {
            name: "flow time",
            value: s,
            reason: "flow time must be finite and non-negative with at least one step",
        });
    }
    let d = g.state_dim();
    if s == 0.0 {
        return Ok(SmoothMap::new(d, d, DVector::from_column_slice).with_jacobian(move |_| DMatrix::identity(d, d)));
    }
    let clock = SampledPath::from_fn(steps + 1, s, 1, |t| vec![t])?;
    let cfg = SolveConfig::default();
    let (gv, cv) = (g.clone(), clock.clone());
    let value = move |y: &[f64]| {
        let run = euler_run(&gv, &cv, y, &cfg, false, steps);
        DVector::from_column_slice(&run.states[steps * y.len()..])
    };
    let (gj, cj) = (g.clone(), clock);
    Ok(SmoothMap::new(d, d, value).with_jacobian(move |y| {
        let run = euler_run(&gj, &cj, y, &cfg, true, steps);
        run.jacobians.into_iter().next_back().expect("jacobian per step")
    }))
}

/// Brackets `[g, f_i]` on the sample set, then the symmetry check for the
/// time-`s` flow of `g` at every requested `s`.
pub fn check_infinitesimal_symmetry(
    g: &FieldSpec,
    f: &FieldSpec,
    dom: &SampleDomain,
    flow_times: &[f64],
    opts: &InfinitesimalOptions,
) -> Result<CheckReport> {
    dom.validate()?;
    single_column("infinitesimal generator columns", g)?;
    check_dim("generator vs field state", f.state_dim(), g.state_dim())?;
    check_dim("sample box vs state", g.state_dim(), dom.dim())?;
    if !f.is_vector_field() {
        return Err(Error::DimensionMismatch {
            what: "vector field output vs state",
            expected: f.in_dim(),
            found: f.out_dim(),
        });
    }
    let analytic = g.has_analytic_jacobian() && f.has_analytic_jacobian();
    let tol = opts.algebraic_tol.unwrap_or_else(|| default_tol(analytic));
    let algebraic = sampled_check(dom, tol, |y| {
        (0..f.driver_dim())
            .map(|i| bracket(g, f, i, y).norm())
            .fold(0.0, f64::max)
    });
    let mut worst: Option<CheckReport> = None;
    for &s in flow_times {
        let phi = euler_flow_map(g, s, opts.flow_steps)?;
        let report = check_symmetry_map(&phi, f, dom, Some(opts.flow_tol))?;
        let replace = match &worst {
            None => true,
            Some(w) => !report.pass && w.pass || report.max_residual > w.max_residual || report.max_residual.is_nan(),
        };
        if replace {
            worst = Some(report);
        }
    }
    Ok(match worst {
        Some(w) => algebraic.with_flow_check(w),
        None => algebraic,
    })
}
