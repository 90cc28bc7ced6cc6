//! Change-of-variable, chain-rule and substitution identities as residuals.
//!
//! Each check evaluates both sides of an identity on a dyadic ladder of
//! grids and reports the sup-in-time discrepancy per level.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{FieldSpec, SmoothMap};
use crate::integrate::{indefinite_integral, young_integral, OperatorPath, TagRule};
use crate::path::{check_same_grid, dyadic_ladder, euclidean, norm, SampledPath};
use crate::report::{LevelResidual, ResidualReport};

/// `g_t(x) = g_0(x) + ∫_0^t h_s(x) dZ_s`, given by its parts `(g_0, h)`.
///
/// `h` maps `x ∈ ℝ^d` to `L(ℝ^k, ℝ^m)` for a `k`-dimensional `Z`; `None`
/// means `g` does not depend on time.
#[derive(Debug, Clone)]
pub struct TimeDependentMap {
    pub initial: SmoothMap,
    pub rate: Option<FieldSpec>,
}

impl TimeDependentMap {
    pub fn new(initial: SmoothMap, rate: FieldSpec) -> Result<Self> {
        if rate.in_dim() != initial.in_dim() || rate.out_dim() != initial.out_dim() {
            return Err(Error::DimensionMismatch {
                what: "rate field shape vs initial map",
                expected: initial.out_dim(),
                found: rate.out_dim(),
            });
        }
        Ok(Self {
            initial,
            rate: Some(rate),
        })
    }

    pub fn time_independent(initial: SmoothMap) -> Self {
        Self { initial, rate: None }
    }

    pub fn in_dim(&self) -> usize {
        self.initial.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.initial.out_dim()
    }

    /// `g_{t_k}(x)` and `D_x g_{t_k}(x)` with the `dZ` integral taken as a tagged sum on `z`'s grid.
    pub fn evaluate(&self, z: &SampledPath, k: usize, x: &[f64], tag: TagRule) -> (DVector<f64>, DMatrix<f64>) {
        let mut value = self.initial.value(x);
        let mut jac = self.initial.jacobian(x);
        let Some(h) = &self.rate else {
            return (value, jac);
        };
        if k == 0 {
            return (value, jac);
        }
        let last = if tag == TagRule::Left { k - 1 } else { k };
        let hs: Vec<(DMatrix<f64>, Vec<DMatrix<f64>>)> = (0..=last)
            .map(|l| (h.value(z.time(l), x), h.jacobian(z.time(l), x)))
            .collect();
        for l in 0..k {
            let dz = DVector::from_iterator(z.dim(), z.value(l + 1).iter().zip(z.value(l)).map(|(b, a)| b - a));
            let (hv, hj) = match tag {
                TagRule::Left => hs[l].clone(),
                TagRule::Right => hs[l + 1].clone(),
                TagRule::MidpointTime => (
                    (&hs[l].0 + &hs[l + 1].0) * 0.5,
                    hs[l].1.iter().zip(&hs[l + 1].1).map(|(a, b)| (a + b) * 0.5).collect(),
                ),
            };
            value += hv * &dz;
            for (j, dj) in hj.iter().enumerate() {
                jac += dj * dz[j];
            }
        }
        (value, jac)
    }
}

fn check_levels(levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::InvalidParameter {
            name: "levels",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    Ok(())
}

fn level_stride(levels: usize, k: usize) -> usize {
    1 << (levels - 1 - k)
}

/// Ladder residuals for `g_t(X_t) − g_0(X_0) − ∫ h_s(X_s) dZ_s − ∫ D_x g_s(X_s) dX_s`.
pub fn ito_kunita_residual(
    g: &TimeDependentMap,
    z: &SampledPath,
    x: &SampledPath,
    levels: usize,
    tag: TagRule,
) -> Result<ResidualReport> {
    check_levels(levels)?;
    check_same_grid(z, x)?;
    if x.dim() != g.in_dim() {
        return Err(Error::DimensionMismatch {
            what: "map input vs X dimension",
            expected: g.in_dim(),
            found: x.dim(),
        });
    }
    if let Some(h) = &g.rate {
        if h.driver_dim() != z.dim() {
            return Err(Error::DimensionMismatch {
                what: "rate field columns vs Z dimension",
                expected: h.driver_dim(),
                found: z.dim(),
            });
        }
    }
    let zs = dyadic_ladder(z, levels)?;
    let xs = dyadic_ladder(x, levels)?;
    let out = zs
        .iter()
        .zip(&xs)
        .map(|(zl, xl)| {
            Ok(LevelResidual {
                mesh: xl.mesh(),
                residual: ito_level(g, zl, xl, tag)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport::new(out))
}

fn ito_level(g: &TimeDependentMap, z: &SampledPath, x: &SampledPath, tag: TagRule) -> Result<f64> {
    let n = x.len();
    let m = g.out_dim();
    let evals: Vec<(DVector<f64>, DMatrix<f64>)> = (0..n)
        .into_par_iter()
        .map(|k| g.evaluate(z, k, x.value(k), tag))
        .collect();
    let dg = OperatorPath::from_matrices(
        x.times().to_vec(),
        &evals.iter().map(|e| e.1.clone()).collect::<Vec<_>>(),
    )?;
    let dx_term = indefinite_integral(&dg, x, tag)?;
    let dz_term = match &g.rate {
        Some(h) => {
            let hs: Vec<DMatrix<f64>> = (0..n).map(|i| h.value(x.time(i), x.value(i))).collect();
            indefinite_integral(&OperatorPath::from_matrices(x.times().to_vec(), &hs)?, z, tag)?
        }
        None => SampledPath::constant(x.times().to_vec(), &vec![0.0; m])?,
    };
    let g0 = &evals[0].0;
    Ok((0..n)
        .map(|k| {
            let r: Vec<f64> = (0..m)
                .map(|c| evals[k].0[c] - g0[c] - dz_term.value(k)[c] - dx_term.value(k)[c])
                .collect();
            norm(&r)
        })
        .fold(0.0, f64::max))
}

/// Ladder residuals for `g(Z_t) − g(Z_0) − ∫_0^t Dg(Z_r) dZ_r`.
pub fn chain_rule_residual(g: &SmoothMap, z: &SampledPath, levels: usize, tag: TagRule) -> Result<ResidualReport> {
    check_levels(levels)?;
    if z.dim() != g.in_dim() {
        return Err(Error::DimensionMismatch {
            what: "map input vs Z dimension",
            expected: g.in_dim(),
            found: z.dim(),
        });
    }
    let out = dyadic_ladder(z, levels)?
        .par_iter()
        .map(|zl| {
            Ok(LevelResidual {
                mesh: zl.mesh(),
                residual: chain_rule_level(g, zl, tag)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport::new(out))
}

fn chain_rule_level(g: &SmoothMap, z: &SampledPath, tag: TagRule) -> Result<f64> {
    let jacs: Vec<DMatrix<f64>> = z.rows().map(|r| g.jacobian(r)).collect();
    let w = indefinite_integral(&OperatorPath::from_matrices(z.times().to_vec(), &jacs)?, z, tag)?;
    let g0 = g.value(z.first());
    Ok(z.rows()
        .zip(w.rows())
        .map(|(zr, wr)| {
            let gz = g.value(zr);
            let r: Vec<f64> = (0..gz.len()).map(|c| gz[c] - g0[c] - wr[c]).collect();
            norm(&r)
        })
        .fold(0.0, f64::max))
}

/// `sup_t ‖g(Z_t)‖` on the grid, the scale for relative chain-rule residuals.
pub fn sup_image_norm(g: &SmoothMap, z: &SampledPath) -> f64 {
    z.rows().map(|r| g.value(r).norm()).fold(0.0, f64::max)
}

/// Ladder residuals for `∫_s^t g dY − ∫_s^t g∘f dZ` with `Y = ∫ f dZ` built on each level.
pub fn substitution_residual(
    g: &OperatorPath,
    f: &OperatorPath,
    z: &SampledPath,
    s: f64,
    t: f64,
    levels: usize,
    tag: TagRule,
) -> Result<ResidualReport> {
    check_levels(levels)?;
    let w_dim = f.out_dim(z.dim())?;
    g.out_dim(w_dim)?;
    check_same_grid(g.path(), z)?;
    check_same_grid(f.path(), z)?;
    let gf = g.compose(f)?;
    let out = (0..levels)
        .into_par_iter()
        .map(|k| {
            let stride = level_stride(levels, k);
            let (gl, fl, gfl, zl) = (
                g.coarsen(stride)?,
                f.coarsen(stride)?,
                gf.coarsen(stride)?,
                z.coarsen(stride)?,
            );
            let y = indefinite_integral(&fl, &zl, tag)?;
            let lhs = young_integral(&gl, &y, s, t, tag)?.value;
            let rhs = young_integral(&gfl, &zl, s, t, tag)?.value;
            Ok(LevelResidual {
                mesh: zl.mesh(),
                residual: euclidean(&lhs, &rhs),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport::new(out))
}
