//! Euler solver for Young differential equations `dY = Σ_j f_j(t, Y) dX^j`.
//!
//! Sub-stepping splits each driver interval into equal pieces and
//! interpolates the driver linearly; results are reported on the driver grid.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::path::{euclidean, SampledPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub scheme: Scheme,
    pub substeps_per_interval: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Euler,
            substeps_per_interval: 1,
        }
    }
}

impl SolveConfig {
    pub fn with_substeps(substeps_per_interval: usize) -> Self {
        Self {
            substeps_per_interval,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.substeps_per_interval == 0 {
            return Err(Error::InvalidParameter {
                name: "substeps_per_interval",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Absolute tolerance on `‖Y_t(x) − y‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

pub(crate) fn check_field(f: &FieldSpec, x: &SampledPath, y0: &[f64]) -> Result<()> {
    if !f.is_vector_field() {
        return Err(Error::DimensionMismatch {
            what: "vector field output vs state",
            expected: f.in_dim(),
            found: f.out_dim(),
        });
    }
    if f.driver_dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            what: "field driver dimension",
            expected: x.dim(),
            found: f.driver_dim(),
        });
    }
    if y0.len() != f.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "initial condition",
            expected: f.state_dim(),
            found: y0.len(),
        });
    }
    Ok(())
}

/// Raw Euler run up to grid index `upto`.
pub(crate) struct Run {
    /// `(upto + 1) * d` states; frozen at the last finite state after a blow-up.
    pub states: Vec<f64>,
    /// One Jacobian per grid point when requested.
    pub jacobians: Vec<DMatrix<f64>>,
    /// Last grid index with a finite state.
    pub alive_index: usize,
    pub blew_up: bool,
}

pub(crate) fn euler_run(
    f: &FieldSpec,
    x: &SampledPath,
    y0: &[f64],
    cfg: &SolveConfig,
    with_jacobian: bool,
    upto: usize,
) -> Run {
    let d = y0.len();
    let m = cfg.substeps_per_interval;
    let mut states = Vec::with_capacity((upto + 1) * d);
    states.extend_from_slice(y0);
    let mut jacobians = Vec::new();
    let mut jac = DMatrix::<f64>::identity(d, d);
    if with_jacobian {
        jacobians.push(jac.clone());
    }
    let mut y = DVector::from_column_slice(y0);
    let mut dx = DVector::<f64>::zeros(x.dim());
    let mut alive_index = upto;
    let mut blew_up = false;

    'grid: for i in 0..upto {
        let (t0, t1) = (x.time(i), x.time(i + 1));
        for (k, (a, b)) in x.value(i).iter().zip(x.value(i + 1)).enumerate() {
            dx[k] = if m == 1 { b - a } else { (b - a) / m as f64 };
        }
        for s in 0..m {
            let t = if s == 0 {
                t0
            } else {
                t0 + (s as f64 / m as f64) * (t1 - t0)
            };
            let fy = f.value(t, y.as_slice());
            if with_jacobian {
                let mut step = DMatrix::<f64>::identity(d, d);
                for (j, dfj) in f.jacobian(t, y.as_slice()).iter().enumerate() {
                    step += dfj * dx[j];
                }
                jac = step * &jac;
            }
            y += fy * &dx;
            if y.iter().any(|v| !v.is_finite()) || jac.iter().any(|v| !v.is_finite()) {
                alive_index = i;
                blew_up = true;
                break 'grid;
            }
        }
        states.extend_from_slice(y.as_slice());
        if with_jacobian {
            jacobians.push(jac.clone());
        }
    }
    if blew_up {
        let last = states[alive_index * d..(alive_index + 1) * d].to_vec();
        let last_jac = jacobians.last().cloned();
        while states.len() < (upto + 1) * d {
            states.extend_from_slice(&last);
            if let Some(j) = &last_jac {
                jacobians.push(j.clone());
            }
        }
    }
    Run {
        states,
        jacobians,
        alive_index,
        blew_up,
    }
}

/// Euler solution of `dY = f(t, Y) dX` from `y0` on the driver grid.
pub fn solve_yde(f: &FieldSpec, x: &SampledPath, y0: &[f64], cfg: &SolveConfig) -> Result<SampledPath> {
    cfg.validate()?;
    check_field(f, x, y0)?;
    let run = euler_run(f, x, y0, cfg, false, x.len() - 1);
    if run.blew_up {
        return Err(Error::BlowUp {
            last_time: x.time(run.alive_index),
        });
    }
    SampledPath::new(x.times().to_vec(), run.states, y0.len())
}

/// Solutions from a set of initial points together with their Jacobians `D_x Y_t`.
#[derive(Debug, Clone)]
pub struct FlowMap {
    field: FieldSpec,
    driver: SampledPath,
    cfg: SolveConfig,
    pub initial_points: Vec<Vec<f64>>,
    /// Frozen at the last finite state after `alive_until`.
    pub trajectories: Vec<SampledPath>,
    pub jacobians: Vec<Vec<DMatrix<f64>>>,
    pub alive_until: Vec<f64>,
}

pub fn solve_flow(f: &FieldSpec, x: &SampledPath, initial_points: &[Vec<f64>], cfg: &SolveConfig) -> Result<FlowMap> {
    cfg.validate()?;
    if initial_points.is_empty() {
        return Err(Error::InvalidParameter {
            name: "initial_points",
            value: 0.0,
            reason: "need at least one initial point",
        });
    }
    for p in initial_points {
        check_field(f, x, p)?;
    }
    let runs: Vec<Run> = initial_points
        .par_iter()
        .map(|p| euler_run(f, x, p, cfg, true, x.len() - 1))
        .collect();
    let d = f.state_dim();
    let mut trajectories = Vec::with_capacity(runs.len());
    let mut jacobians = Vec::with_capacity(runs.len());
    let mut alive_until = Vec::with_capacity(runs.len());
    for run in runs {
        alive_until.push(x.time(run.alive_index));
        trajectories.push(SampledPath::new(x.times().to_vec(), run.states, d)?);
        jacobians.push(run.jacobians);
    }
    Ok(FlowMap {
        field: f.clone(),
        driver: x.clone(),
        cfg: *cfg,
        initial_points: initial_points.to_vec(),
        trajectories,
        jacobians,
        alive_until,
    })
}

impl FlowMap {
    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    pub fn driver(&self) -> &SampledPath {
        &self.driver
    }

    pub fn config(&self) -> &SolveConfig {
        &self.cfg
    }

    pub fn state_dim(&self) -> usize {
        self.field.state_dim()
    }

    /// `Y_t(x)` and `D_x Y_t(x)` at grid index `index` for an arbitrary start `x`.
    pub fn evaluate(&self, x: &[f64], index: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
        if x.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                what: "flow evaluation point",
                expected: self.state_dim(),
                found: x.len(),
            });
        }
        let run = euler_run(&self.field, &self.driver, x, &self.cfg, true, index);
        if run.blew_up {
            return Err(Error::BlowUp {
                last_time: self.driver.time(run.alive_index),
            });
        }
        let d = x.len();
        let y = run.states[index * d..].to_vec();
        let j = run.jacobians.into_iter().next_back().expect("at least one jacobian");
        Ok((y, j))
    }

    /// `Y_t(x)` at grid index `index`, without the Jacobian.
    pub fn image(&self, x: &[f64], index: usize) -> Result<Vec<f64>> {
        if x.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                what: "flow evaluation point",
                expected: self.state_dim(),
                found: x.len(),
            });
        }
        let run = euler_run(&self.field, &self.driver, x, &self.cfg, false, index);
        if run.blew_up {
            return Err(Error::BlowUp {
                last_time: self.driver.time(run.alive_index),
            });
        }
        Ok(run.states[index * x.len()..].to_vec())
    }

    /// Newton solve of `Y_t(x) = y` at grid index `index`, started from `seed`.
    pub fn invert_from(&self, index: usize, y: &[f64], seed: &[f64], opts: &NewtonOptions) -> Result<Vec<f64>> {
        let mut x = seed.to_vec();
        let (mut img, mut jac) = self.evaluate(&x, index)?;
        let mut res = euclidean(&img, y);
        for _ in 0..opts.max_iter {
            if res <= opts.tol {
                return Ok(x);
            }
            let r = DVector::from_iterator(y.len(), img.iter().zip(y).map(|(a, b)| a - b));
            let step = jac
                .clone()
                .lu()
                .solve(&r)
                .ok_or(Error::SingularJacobian { what: "flow inversion" })?;
            let mut lambda = 1.0;
            loop {
                let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - lambda * s).collect();
                let attempt = self.evaluate(&cand, index);
                match attempt {
                    Ok((ci, cj)) if euclidean(&ci, y) <= res || lambda < 1e-8 => {
                        res = euclidean(&ci, y);
                        x = cand;
                        img = ci;
                        jac = cj;
                        break;
                    }
                    _ if lambda < 1e-8 => {
                        return Err(Error::NewtonFailure {
                            residual: res,
                            iterations: opts.max_iter,
                        })
                    }
                    _ => lambda *= 0.5,
                }
            }
        }
        if res <= opts.tol {
            Ok(x)
        } else {
            Err(Error::NewtonFailure {
                residual: res,
                iterations: opts.max_iter,
            })
        }
    }

    /// Initial point whose image at `index` is nearest to `y`.
    pub fn nearest_seed(&self, index: usize, y: &[f64]) -> &[f64] {
        let t = self.driver.time(index);
        let k = (0..self.initial_points.len())
            .filter(|&k| self.alive_until[k] >= t)
            .min_by(|&a, &b| {
                let da = euclidean(self.trajectories[a].value(index), y);
                let db = euclidean(self.trajectories[b].value(index), y);
                da.total_cmp(&db)
            })
            .unwrap_or(0);
        &self.initial_points[k]
    }
}

/// Solves `Y_t(x) = y` for `x`, seeded from the initial point with the nearest image.
pub fn invert_flow(flow: &FlowMap, t: f64, y: &[f64]) -> Result<Vec<f64>> {
    invert_flow_with(flow, t, y, &NewtonOptions::default())
}

pub fn invert_flow_with(flow: &FlowMap, t: f64, y: &[f64], opts: &NewtonOptions) -> Result<Vec<f64>> {
    let index = flow.driver.index_of(t)?;
    if y.len() != flow.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "flow inversion target",
            expected: flow.state_dim(),
            found: y.len(),
        });
    }
    let seed = flow.nearest_seed(index, y).to_vec();
    flow.invert_from(index, y, &seed, opts)
}

/// Largest absolute deviation between two paths on a shared grid.
pub fn sup_distance(a: &SampledPath, b: &SampledPath) -> f64 {
    a.rows().zip(b.rows()).map(|(u, v)| euclidean(u, v)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{linear_field, rotation_field, scaling_field, zero_field};
    use crate::driver::{gen_fbm, FbmSpec};

    fn smooth_driver(n: usize) -> SampledPath {
        SampledPath::from_fn(n + 1, 1.0, 1, |t| vec![(2.0 * t).sin() + 0.5 * t]).unwrap()
    }

    #[test]
    fn zero_field_keeps_initial_condition() {
        let x = smooth_driver(32);
        let y = solve_yde(&zero_field(2, 1), &x, &[1.0, -3.0], &SolveConfig::default()).unwrap();
        assert!(y.rows().all(|r| r == [1.0, -3.0]));
    }

    #[test]
    fn scalar_linear_field_matches_exponential() {
        let x = smooth_driver(1 << 12);
        let y = solve_yde(&scaling_field(1), &x, &[2.0], &SolveConfig::default()).unwrap();
        let exact = 2.0 * (x.last()[0] - x.first()[0]).exp();
        assert!(((y.last()[0] - exact) / exact).abs() <= 1e-3);
    }

    #[test]
    fn rotation_field_matches_rotation_matrix() {
        let x = smooth_driver(1 << 12);
        let y0 = [1.0, 0.5];
        let y = solve_yde(&rotation_field(), &x, &y0, &SolveConfig::default()).unwrap();
        let th = x.last()[0] - x.first()[0];
        let exact = [th.cos() * y0[0] - th.sin() * y0[1], th.sin() * y0[0] + th.cos() * y0[1]];
        assert!(euclidean(y.last(), &exact) < 1e-3);
    }

    #[test]
    fn euler_is_grid_compositional() {
        let x = gen_fbm(&FbmSpec::new(0.7, 65, 1.0, 3)).unwrap();
        let f = rotation_field();
        let cfg = SolveConfig::with_substeps(3);
        let whole = solve_yde(&f, &x, &[1.0, 0.0], &cfg).unwrap();
        let s = x.time(23);
        let first = solve_yde(&f, &x.restrict(0.0, s).unwrap(), &[1.0, 0.0], &cfg).unwrap();
        let second = solve_yde(&f, &x.restrict(s, 1.0).unwrap(), first.last(), &cfg).unwrap();
        assert_eq!(first.concat(&second).unwrap(), whole);
    }

    #[test]
    fn blow_up_is_reported_with_last_time() {
        let x = SampledPath::from_fn(201, 10.0, 1, |t| vec![t]).unwrap();
        let quad = FieldSpec::autonomous(1, 1, |y| DMatrix::from_element(1, 1, y[0] * y[0]));
        let err = solve_yde(&quad, &x, &[50.0], &SolveConfig::default()).unwrap_err();
        assert!(matches!(err, Error::BlowUp { last_time } if last_time < 10.0));

        let flow = solve_flow(&quad, &x, &[vec![50.0], vec![0.0]], &SolveConfig::default()).unwrap();
        assert!(flow.alive_until[0] < 10.0);
        assert_eq!(flow.alive_until[1], 10.0);
        assert_eq!(flow.trajectories[0].len(), x.len());
    }

    #[test]
    fn dimension_checks() {
        let x = smooth_driver(4);
        assert!(solve_yde(&rotation_field(), &x, &[1.0], &SolveConfig::default()).is_err());
        let two = SampledPath::from_fn(5, 1.0, 2, |t| vec![t, t]).unwrap();
        assert!(solve_yde(&rotation_field(), &two, &[1.0, 0.0], &SolveConfig::default()).is_err());
        assert!(solve_yde(&rotation_field(), &x, &[1.0, 0.0], &SolveConfig::with_substeps(0)).is_err());
    }

    #[test]
    fn flow_of_zero_field_is_identity() {
        let x = smooth_driver(16);
        let flow = solve_flow(
            &zero_field(2, 1),
            &x,
            &[vec![0.0, 1.0], vec![2.0, 2.0]],
            &SolveConfig::default(),
        )
        .unwrap();
        for (k, traj) in flow.trajectories.iter().enumerate() {
            assert!(traj.rows().all(|r| r == flow.initial_points[k].as_slice()));
            assert!(flow.jacobians[k].iter().all(|j| *j == DMatrix::identity(2, 2)));
        }
        let y = [0.3, -0.2];
        assert!(euclidean(&invert_flow(&flow, 1.0, &y).unwrap(), &y) <= 1e-15);
    }

    #[test]
    fn linear_flow_jacobian_is_matrix_exponential() {
        let a = DMatrix::from_row_slice(2, 2, &[-0.5, 1.0, 0.2, 0.3]);
        let x = smooth_driver(1 << 12);
        let flow = solve_flow(
            &linear_field(a.clone()),
            &x,
            &[vec![1.0, 2.0], vec![-3.0, 0.5]],
            &SolveConfig::default(),
        )
        .unwrap();
        let exact = (a * (x.last()[0] - x.first()[0])).exp();
        for jacs in &flow.jacobians {
            assert_eq!(jacs[0], DMatrix::identity(2, 2));
            assert!((jacs.last().unwrap() - &exact).norm() < 1e-3);
        }
    }

    #[test]
    fn rotation_flow_volume_follows_euler_product() {
        // det(I + A dx) = 1 + dx² for the rotation generator A.
        let x = smooth_driver(1 << 12);
        let flow = solve_flow(&rotation_field(), &x, &[vec![1.0, 0.0]], &SolveConfig::default()).unwrap();
        let mut expected = 1.0;
        for (i, j) in flow.jacobians[0].iter().enumerate() {
            if i > 0 {
                let dx = x.value(i)[0] - x.value(i - 1)[0];
                expected *= 1.0 + dx * dx;
            }
            assert!((j.determinant() - expected).abs() < 1e-12);
        }
        assert!(expected - 1.0 < 1e-2);
    }

    #[test]
    fn jacobian_matches_trajectory_differences() {
        let x = gen_fbm(&FbmSpec::new(0.8, 513, 1.0, 5)).unwrap();
        let f = FieldSpec::autonomous(2, 1, |y| DMatrix::from_column_slice(2, 1, &[y[1].sin(), -0.5 * y[0]]))
            .with_jacobian(|_, y| vec![DMatrix::from_row_slice(2, 2, &[0.0, y[1].cos(), -0.5, 0.0])]);
        let h = 1e-5;
        let c = [0.3, 0.7];
        let pts = vec![
            c.to_vec(),
            vec![c[0] + h, c[1]],
            vec![c[0] - h, c[1]],
            vec![c[0], c[1] + h],
            vec![c[0], c[1] - h],
        ];
        let flow = solve_flow(&f, &x, &pts, &SolveConfig::default()).unwrap();
        for i in (0..x.len()).step_by(64) {
            let j = &flow.jacobians[0][i];
            for axis in 0..2 {
                let (p, m) = (&flow.trajectories[1 + 2 * axis], &flow.trajectories[2 + 2 * axis]);
                for r in 0..2 {
                    let fd = (p.value(i)[r] - m.value(i)[r]) / (2.0 * h);
                    assert!((fd - j[(r, axis)]).abs() < 1e-4, "i={i} r={r} axis={axis}");
                }
            }
        }
    }

    #[test]
    fn inverse_of_exponential_flow() {
        let x = smooth_driver(256);
        let pts: Vec<Vec<f64>> = (0..5).map(|k| vec![0.5 + 0.5 * k as f64]).collect();
        let flow = solve_flow(&scaling_field(1), &x, &pts, &SolveConfig::default()).unwrap();
        let idx = 200;
        let t = x.time(idx);
        for y in [0.7, 1.9, 2.6] {
            let xi = invert_flow(&flow, t, &[y]).unwrap();
            let (img, _) = flow.evaluate(&xi, idx).unwrap();
            assert!((img[0] - y).abs() <= 1e-10);
            // The Euler flow is linear in x, so the inverse is y divided by the growth factor.
            let growth = flow.trajectories[0].value(idx)[0] / pts[0][0];
            assert!((xi[0] - y / growth).abs() < 1e-9);
            let closed = y * (-(x.value(idx)[0] - x.value(0)[0])).exp();
            assert!((xi[0] - closed).abs() < 1e-2 * closed);
        }
        assert!(invert_flow(&flow, 0.123456, &[1.0]).is_err());
    }

    #[test]
    fn inverse_round_trip_on_nonlinear_flow() {
        let x = gen_fbm(&FbmSpec::new(0.75, 129, 1.0, 9)).unwrap();
        let f = FieldSpec::autonomous(2, 1, |y| {
            DMatrix::from_column_slice(2, 1, &[0.5 * y[1].cos(), 0.3 * y[0]])
        });
        let pts: Vec<Vec<f64>> = (0..3)
            .flat_map(|i| (0..3).map(move |j| vec![i as f64 - 1.0, j as f64 - 1.0]))
            .collect();
        let flow = solve_flow(&f, &x, &pts, &SolveConfig::default()).unwrap();
        for y in [[0.2, -0.4], [-0.7, 0.9], [0.05, 0.0]] {
            let xi = invert_flow(&flow, 1.0, &y).unwrap();
            let (img, _) = flow.evaluate(&xi, x.len() - 1).unwrap();
            assert!(euclidean(&img, &y) <= 1e-10);
        }
    }
}
