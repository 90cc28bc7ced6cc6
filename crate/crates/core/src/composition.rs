//! Composition of two Young flows and the equation it solves.
//!
//! With `V` solving `dV = f(V) dU` and `Y` the flow of `dY = g(Y) dX`, the
//! composition `Z_t = Y_t(V_t)` solves `dZ = g(Z) dX + (Y_t)_* f(Z) dU`.

use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::path::{check_same_grid, dyadic_ladder, euclidean, SampledPath};
use crate::report::{LevelResidual, ResidualReport};
use crate::yde::{check_field, solve_flow, solve_yde, FlowMap, NewtonOptions, SolveConfig};

/// `z ↦ D_xY_s(Y_s⁻¹(z))·f(Y_s⁻¹(z))` for a flow `Y` at grid index `s`.
#[derive(Debug, Clone)]
pub struct PushforwardField {
    flow: Arc<FlowMap>,
    index: usize,
    field: FieldSpec,
    pub newton: NewtonOptions,
}

/// Pushforward of `f` by the time-`s` map of `flow`; `s` must be a grid time.
pub fn pushforward_field(flow: Arc<FlowMap>, s: f64, f: &FieldSpec) -> Result<PushforwardField> {
    let index = flow.driver().index_of(s)?;
    if f.state_dim() != flow.state_dim() || !f.is_vector_field() {
        return Err(Error::DimensionMismatch {
            what: "pushed-forward field state",
            expected: flow.state_dim(),
            found: f.state_dim(),
        });
    }
    Ok(PushforwardField {
        flow,
        index,
        field: f.clone(),
        newton: NewtonOptions::default(),
    })
}

impl PushforwardField {
    pub fn time(&self) -> f64 {
        self.flow.driver().time(self.index)
    }

    /// Value at `z`, seeding the inversion from the initial point with the nearest image.
    pub fn eval(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        let seed = self.flow.nearest_seed(self.index, z).to_vec();
        self.eval_from(z, &seed).map(|(v, _)| v)
    }

    /// Value at `z` and the preimage `Y_s⁻¹(z)`, Newton started from `seed`.
    pub fn eval_from(&self, z: &[f64], seed: &[f64]) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let x = self.flow.invert_from(self.index, z, seed, &self.newton)?;
        let (_, jac) = self.flow.evaluate(&x, self.index)?;
        Ok((jac * self.field.value(self.time(), &x), x))
    }
}

/// Output of [`compose_flows`] on the finest level plus the refinement ladder.
#[derive(Debug, Clone)]
pub struct Composition {
    /// `Y_t(V_t)` from the two separate solves.
    pub z_comp: SampledPath,
    /// Euler solve of the combined equation.
    pub z_dir: SampledPath,
    /// Ladder of `sup_t ‖Z_comp − Z_dir‖`.
    pub report: ResidualReport,
}

/// Builds `Y ∘ V` and the direct solve of the combined equation on each
/// level of a dyadic ladder of the common `(U, X)` grid.
pub fn compose_flows(
    f: &FieldSpec,
    u: &SampledPath,
    g: &FieldSpec,
    x: &SampledPath,
    y0: &[f64],
    cfg: &SolveConfig,
    levels: usize,
) -> Result<Composition> {
    check_same_grid(u, x)?;
    check_field(f, u, y0)?;
    check_field(g, x, y0)?;
    let us = dyadic_ladder(u, levels)?;
    let xs = dyadic_ladder(x, levels)?;
    let mut out = Vec::with_capacity(levels);
    let mut finest = None;
    for (ul, xl) in us.iter().zip(&xs) {
        let (z_comp, z_dir) = compose_level(f, ul, g, xl, y0, cfg)?;
        let residual = z_comp
            .rows()
            .zip(z_dir.rows())
            .map(|(a, b)| euclidean(a, b))
            .fold(0.0, f64::max);
        out.push(LevelResidual {
            mesh: xl.mesh(),
            residual,
        });
        finest = Some((z_comp, z_dir));
    }
    let (z_comp, z_dir) = finest.expect("at least one level");
    Ok(Composition {
        z_comp,
        z_dir,
        report: ResidualReport::new(out),
    })
}

fn compose_level(
    f: &FieldSpec,
    u: &SampledPath,
    g: &FieldSpec,
    x: &SampledPath,
    y0: &[f64],
    cfg: &SolveConfig,
) -> Result<(SampledPath, SampledPath)> {
    let d = y0.len();
    let v = solve_yde(f, u, y0, cfg)?;
    let flow = Arc::new(solve_flow(g, x, &[y0.to_vec()], cfg)?);
    let images = (0..x.len())
        .into_par_iter()
        .map(|k| flow.image(v.value(k), k))
        .collect::<Result<Vec<_>>>()?;
    let z_comp = SampledPath::new(x.times().to_vec(), images.concat(), d)?;

    // The preimage of the previous step warm-starts the next inversion.
    let warm = Arc::new(Mutex::new(y0.to_vec()));
    let failure: Arc<Mutex<Option<Error>>> = Arc::new(Mutex::new(None));
    let (n1, n2) = (g.driver_dim(), f.driver_dim());
    let times = x.times().to_vec();
    let block = {
        let (g, f, flow, warm, failure) = (g.clone(), f.clone(), flow.clone(), warm.clone(), failure.clone());
        FieldSpec::new(d, n1 + n2, move |t, z| {
            let mut m = DMatrix::zeros(d, n1 + n2);
            m.columns_mut(0, n1).copy_from(&g.value(t, z));
            let index = times
                .partition_point(|&s| s <= t + 1e-12 * t.abs().max(1.0))
                .saturating_sub(1);
            let pf = PushforwardField {
                flow: flow.clone(),
                index,
                field: f.clone(),
                newton: NewtonOptions::default(),
            };
            let seed = warm.lock().expect("warm start lock").clone();
            match pf.eval_from(z, &seed) {
                Ok((val, pre)) => {
                    *warm.lock().expect("warm start lock") = pre;
                    m.columns_mut(n1, n2).copy_from(&val);
                }
                Err(e) => {
                    failure.lock().expect("failure lock").get_or_insert(e);
                    m.fill(f64::NAN);
                }
            }
            m
        })
    };
    let driver = x.zip(u)?;
    let z_dir = solve_yde(&block, &driver, y0, cfg);
    if let Some(e) = failure.lock().expect("failure lock").take() {
        return Err(e);
    }
    Ok((z_comp, z_dir?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{constant_field, rotation_field, scaling_field, zero_field};
    use crate::driver::{gen_fbm, FbmSpec};

    fn smooth(n: usize, f: impl Fn(f64) -> f64) -> SampledPath {
        SampledPath::from_fn(n + 1, 1.0, 1, |t| vec![f(t)]).unwrap()
    }

    fn grid_flow(g: &FieldSpec, x: &SampledPath, pts: &[Vec<f64>]) -> Arc<FlowMap> {
        Arc::new(solve_flow(g, x, pts, &SolveConfig::default()).unwrap())
    }

    #[test]
    fn pushforward_at_time_zero_is_the_field() {
        let x = smooth(64, |t| t.sin());
        let flow = grid_flow(&rotation_field(), &x, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let f = FieldSpec::autonomous(2, 1, |y| DMatrix::from_column_slice(2, 1, &[y[1] * y[1], y[0].cos()]));
        let pf = pushforward_field(flow, 0.0, &f).unwrap();
        for z in [[0.3, -0.2], [1.5, 0.7]] {
            assert!((pf.eval(&z).unwrap() - f.value(0.0, &z)).norm() < 1e-10);
        }
    }

    #[test]
    fn pushforward_under_linear_flow() {
        let x = smooth(128, |t| 0.8 * t);
        let pts: Vec<Vec<f64>> = (1..=4).map(|k| vec![k as f64]).collect();
        let flow = grid_flow(&scaling_field(1), &x, &pts);
        let growth = flow.trajectories[0].last()[0];
        let id = pushforward_field(flow.clone(), 1.0, &scaling_field(1)).unwrap();
        let c = pushforward_field(flow, 1.0, &constant_field(vec![0.3])).unwrap();
        for z in [0.5, 2.0, 3.3] {
            assert!((id.eval(&[z]).unwrap()[(0, 0)] - z).abs() < 1e-9);
            assert!((c.eval(&[z]).unwrap()[(0, 0)] - 0.3 * growth).abs() < 1e-12);
        }
        assert!((growth - 0.8f64.exp()).abs() < 1e-2);
    }

    #[test]
    fn degenerate_compositions_agree() {
        let u = smooth(256, |t| t);
        let x = gen_fbm(&FbmSpec::new(0.8, 257, 1.0, 4)).unwrap();
        let cfg = SolveConfig::default();
        let no_f = compose_flows(&zero_field(2, 1), &u, &rotation_field(), &x, &[1.0, 0.5], &cfg, 3).unwrap();
        assert!(
            no_f.report.levels.iter().all(|l| l.residual == 0.0),
            "{:?}",
            no_f.report
        );
        let direct = solve_yde(&rotation_field(), &x, &[1.0, 0.5], &cfg).unwrap();
        assert_eq!(no_f.z_comp, direct);

        let no_g = compose_flows(&rotation_field(), &u, &zero_field(2, 1), &x, &[1.0, 0.5], &cfg, 3).unwrap();
        assert!(
            no_g.report.levels.iter().all(|l| l.residual < 1e-14),
            "{:?}",
            no_g.report
        );
    }

    #[test]
    fn scalar_linear_composition_converges() {
        let u = smooth(1 << 10, |t| t);
        let x = smooth(1 << 10, |t| 0.25 * (2.0 * std::f64::consts::PI * t).sin());
        let c = compose_flows(
            &scaling_field(1),
            &u,
            &scaling_field(1),
            &x,
            &[1.0],
            &SolveConfig::default(),
            4,
        )
        .unwrap();
        assert!(
            c.report.decrease_factors().iter().all(|&q| q >= 1.3),
            "{:?}",
            c.report.residuals()
        );
        let exact = |k: usize| (u.value(k)[0] + x.value(k)[0] - u.first()[0] - x.first()[0]).exp();
        for k in 0..x.len() {
            assert!((c.z_comp.value(k)[0] - exact(k)).abs() < 5e-3);
            assert!((c.z_dir.value(k)[0] - exact(k)).abs() < 5e-3);
        }
    }

    #[test]
    fn fbm_composition_converges() {
        let u = smooth(1 << 10, |t| t * t);
        let x = gen_fbm(&FbmSpec::new(0.8, (1 << 10) + 1, 1.0, 21)).unwrap();
        let c = compose_flows(
            &scaling_field(1),
            &u,
            &scaling_field(1),
            &x,
            &[0.7],
            &SolveConfig::default(),
            4,
        )
        .unwrap();
        assert!(c.report.converged, "{:?}", c.report.residuals());
    }

    #[test]
    fn grid_and_dimension_checks() {
        let u = smooth(8, |t| t);
        let x = smooth(16, |t| t);
        let cfg = SolveConfig::default();
        assert!(compose_flows(&scaling_field(1), &u, &scaling_field(1), &x, &[1.0], &cfg, 1).is_err());
        assert!(compose_flows(&scaling_field(1), &u, &rotation_field(), &u, &[1.0], &cfg, 1).is_err());
        let flow = grid_flow(&scaling_field(1), &u, &[vec![1.0]]);
        assert!(pushforward_field(flow.clone(), 0.3, &scaling_field(1)).is_err());
        assert!(pushforward_field(flow, 0.5, &rotation_field()).is_err());
    }
}
