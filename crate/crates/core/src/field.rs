//! Vector fields and smooth maps with analytic or finite-difference derivatives.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type MatrixFn = Arc<dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync>;
/// Per driver column `j`, the Jacobian `D_y f_j` (`out_dim × in_dim`).
pub type ColumnJacobianFn = Arc<dyn Fn(f64, &[f64]) -> Vec<DMatrix<f64>> + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// A possibly time-dependent field `(t, y) ↦ f(t, y) ∈ L(ℝ^n, ℝ^m)`, `y ∈ ℝ^d`.
///
/// For a vector field driving `dY = f(Y) dX` the output and input
/// dimensions agree; column `j` is the field `f_j` paired with driver
/// component `X^j`.
#[derive(Clone)]
pub struct FieldSpec {
    in_dim: usize,
    out_dim: usize,
    driver_dim: usize,
    value: MatrixFn,
    jacobian: Option<ColumnJacobianFn>,
    pub fd_step: f64,
    /// Hölder exponent of the field, informational only.
    pub holder_exponent: Option<f64>,
}

impl fmt::Debug for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldSpec")
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("driver_dim", &self.driver_dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("fd_step", &self.fd_step)
            .field("holder_exponent", &self.holder_exponent)
            .finish()
    }
}

impl FieldSpec {
    /// Time-dependent vector field on `ℝ^state_dim` with `driver_dim` columns.
    pub fn new(
        state_dim: usize,
        driver_dim: usize,
        value: impl Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self::operator(state_dim, state_dim, driver_dim, value)
    }

    pub fn autonomous(
        state_dim: usize,
        driver_dim: usize,
        value: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self::new(state_dim, driver_dim, move |_, y| value(y))
    }

    /// General operator-valued map `ℝ^in_dim → L(ℝ^driver_dim, ℝ^out_dim)`.
    pub fn operator(
        in_dim: usize,
        out_dim: usize,
        driver_dim: usize,
        value: impl Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            in_dim,
            out_dim,
            driver_dim,
            value: Arc::new(value),
            jacobian: None,
            fd_step: DEFAULT_FD_STEP,
            holder_exponent: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        jacobian: impl Fn(f64, &[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        assert!(h > 0.0, "fd_step must be positive");
        self.fd_step = h;
        self
    }

    pub fn with_holder_exponent(mut self, gamma: f64) -> Self {
        self.holder_exponent = Some(gamma);
        self
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn state_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn driver_dim(&self) -> usize {
        self.driver_dim
    }

    pub fn is_vector_field(&self) -> bool {
        self.in_dim == self.out_dim
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn value(&self, t: f64, y: &[f64]) -> DMatrix<f64> {
        let v = (self.value)(t, y);
        assert_eq!(
            v.shape(),
            (self.out_dim, self.driver_dim),
            "field evaluator returned a {:?} matrix, expected {}x{}",
            v.shape(),
            self.out_dim,
            self.driver_dim
        );
        v
    }

    pub fn column(&self, t: f64, y: &[f64], j: usize) -> DVector<f64> {
        self.value(t, y).column(j).into_owned()
    }

    /// `D_y f_j(t, y)` for every column `j`, central differences when no analytic form is set.
    pub fn jacobian(&self, t: f64, y: &[f64]) -> Vec<DMatrix<f64>> {
        if let Some(jac) = &self.jacobian {
            let j = jac(t, y);
            assert_eq!(
                j.len(),
                self.driver_dim,
                "jacobian must have one matrix per driver column"
            );
            return j;
        }
        let mut cols = vec![DMatrix::zeros(self.out_dim, self.in_dim); self.driver_dim];
        let mut yp = y.to_vec();
        for k in 0..self.in_dim {
            let h = self.fd_step * y[k].abs().max(1.0);
            yp[k] = y[k] + h;
            let plus = self.value(t, &yp);
            yp[k] = y[k] - h;
            let minus = self.value(t, &yp);
            yp[k] = y[k];
            for (j, c) in cols.iter_mut().enumerate() {
                for r in 0..self.out_dim {
                    c[(r, k)] = (plus[(r, j)] - minus[(r, j)]) / (2.0 * h);
                }
            }
        }
        cols
    }

    /// Column `j` as a single-driver field.
    pub fn column_field(&self, j: usize) -> FieldSpec {
        assert!(j < self.driver_dim, "column {j} out of range");
        let value = self.value.clone();
        let mut out = FieldSpec::operator(self.in_dim, self.out_dim, 1, move |t, y| {
            value(t, y).columns(j, 1).into_owned()
        });
        if let Some(jac) = self.jacobian.clone() {
            out = out.with_jacobian(move |t, y| vec![jac(t, y).swap_remove(j)]);
        }
        out.fd_step = self.fd_step;
        out.holder_exponent = self.holder_exponent;
        out
    }

    /// Concatenates the columns of several fields on the same state space.
    pub fn hstack(fields: &[FieldSpec]) -> Result<FieldSpec> {
        let first = fields.first().ok_or(Error::InvalidParameter {
            name: "fields",
            value: 0.0,
            reason: "need at least one field to stack",
        })?;
        for f in fields {
            if f.in_dim != first.in_dim || f.out_dim != first.out_dim {
                return Err(Error::DimensionMismatch {
                    what: "stacked field state dimension",
                    expected: first.in_dim,
                    found: f.in_dim,
                });
            }
        }
        let parts: Vec<FieldSpec> = fields.to_vec();
        let n: usize = parts.iter().map(|f| f.driver_dim).sum();
        let out_dim = first.out_dim;
        let value_parts = parts.clone();
        let mut out = FieldSpec::operator(first.in_dim, out_dim, n, move |t, y| {
            let mut m = DMatrix::zeros(out_dim, n);
            let mut c0 = 0;
            for f in &value_parts {
                let v = f.value(t, y);
                m.columns_mut(c0, f.driver_dim).copy_from(&v);
                c0 += f.driver_dim;
            }
            m
        });
        out.fd_step = fields.iter().map(|f| f.fd_step).fold(f64::INFINITY, f64::min);
        if parts.iter().all(FieldSpec::has_analytic_jacobian) {
            out = out.with_jacobian(move |t, y| parts.iter().flat_map(|f| f.jacobian(t, y)).collect());
        }
        Ok(out)
    }

    /// Action on a driver increment: `f(t, y)·dx`.
    pub fn apply(&self, t: f64, y: &[f64], dx: &[f64]) -> DVector<f64> {
        self.value(t, y) * DVector::from_column_slice(dx)
    }
}

/// A smooth map `ℝ^in_dim → ℝ^out_dim` with its Jacobian.
///
/// Serves as observable `F`, point transformation `Φ`, initial datum `φ`
/// and test function `g` in the calculus checks.
#[derive(Clone)]
pub struct SmoothMap {
    in_dim: usize,
    out_dim: usize,
    value: VectorFn,
    jacobian: Option<JacobianFn>,
    pub fd_step: f64,
}

pub type ScalarObservable = SmoothMap;
pub type PointMap = SmoothMap;

impl fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothMap")
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl SmoothMap {
    pub fn new(in_dim: usize, out_dim: usize, value: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static) -> Self {
        Self {
            in_dim,
            out_dim,
            value: Arc::new(value),
            jacobian: None,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    pub fn with_jacobian(mut self, jacobian: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        assert!(h > 0.0, "fd_step must be positive");
        self.fd_step = h;
        self
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn value(&self, y: &[f64]) -> DVector<f64> {
        let v = (self.value)(y);
        assert_eq!(
            v.len(),
            self.out_dim,
            "map evaluator returned {} components, expected {}",
            v.len(),
            self.out_dim
        );
        v
    }

    pub fn jacobian(&self, y: &[f64]) -> DMatrix<f64> {
        if let Some(jac) = &self.jacobian {
            let j = jac(y);
            assert_eq!(j.shape(), (self.out_dim, self.in_dim), "map jacobian has wrong shape");
            return j;
        }
        let mut out = DMatrix::zeros(self.out_dim, self.in_dim);
        let mut yp = y.to_vec();
        for k in 0..self.in_dim {
            let h = self.fd_step * y[k].abs().max(1.0);
            yp[k] = y[k] + h;
            let plus = self.value(&yp);
            yp[k] = y[k] - h;
            let minus = self.value(&yp);
            yp[k] = y[k];
            out.set_column(k, &((plus - minus) / (2.0 * h)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    #[test]
    fn finite_difference_jacobian_matches_analytic() {
        let analytic = builtin::rotation_field();
        let fd = FieldSpec::autonomous(2, 1, |y| DMatrix::from_column_slice(2, 1, &[-y[1], y[0]]));
        let y = [0.3, -1.2];
        let (a, b) = (analytic.jacobian(0.0, &y), fd.jacobian(0.0, &y));
        assert!((&a[0] - &b[0]).norm() < 1e-8);

        let sq = SmoothMap::new(2, 1, |y| DVector::from_element(1, y[0] * y[0] + 3.0 * y[1]));
        let j = sq.jacobian(&[2.0, 5.0]);
        assert!((j[(0, 0)] - 4.0).abs() < 1e-6 && (j[(0, 1)] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn column_extraction_and_stacking() {
        let f = builtin::linear_field(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        let g = builtin::scaling_field(2);
        let stacked = FieldSpec::hstack(&[f.clone(), g.clone()]).unwrap();
        assert_eq!(stacked.driver_dim(), 2);
        assert!(stacked.has_analytic_jacobian());
        let y = [1.0, 2.0];
        let v = stacked.value(0.0, &y);
        assert_eq!(v.column(0), f.value(0.0, &y).column(0));
        assert_eq!(v.column(1), g.value(0.0, &y).column(0));
        let back = stacked.column_field(1);
        assert_eq!(back.value(0.0, &y), g.value(0.0, &y));
        assert_eq!(back.jacobian(0.0, &y), g.jacobian(0.0, &y));
        assert!(FieldSpec::hstack(&[f, builtin::scaling_field(3)]).is_err());
    }
}
