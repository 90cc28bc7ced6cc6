//! Named fields and maps, selectable from the command line and Python.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::{FieldSpec, SmoothMap};

/// `f ≡ 0` with `n` driver columns.
pub fn zero_field(d: usize, n: usize) -> FieldSpec {
    FieldSpec::autonomous(d, n, move |_| DMatrix::zeros(d, n)).with_jacobian(move |_, _| vec![DMatrix::zeros(d, d); n])
}

/// `f(y) = y`, single driver.
pub fn scaling_field(d: usize) -> FieldSpec {
    FieldSpec::autonomous(d, 1, move |y| DMatrix::from_column_slice(d, 1, y))
        .with_jacobian(move |_, _| vec![DMatrix::identity(d, d)])
}

/// `f(y) = A y`, single driver.
pub fn linear_field(a: DMatrix<f64>) -> FieldSpec {
    assert!(a.is_square(), "linear field needs a square matrix");
    let d = a.nrows();
    let ja = a.clone();
    FieldSpec::autonomous(d, 1, move |y| &a * DMatrix::from_column_slice(d, 1, y))
        .with_jacobian(move |_, _| vec![ja.clone()])
}

/// `f(y) = (−y₂, y₁)`.
pub fn rotation_field() -> FieldSpec {
    linear_field(DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]))
}

/// `f ≡ c`, single driver.
pub fn constant_field(c: Vec<f64>) -> FieldSpec {
    let d = c.len();
    FieldSpec::autonomous(d, 1, move |_| DMatrix::from_column_slice(d, 1, &c))
        .with_jacobian(move |_, _| vec![DMatrix::zeros(d, d)])
}

pub fn identity_map(d: usize) -> SmoothMap {
    SmoothMap::new(d, d, DVector::from_column_slice).with_jacobian(move |_| DMatrix::identity(d, d))
}

pub fn linear_map(a: DMatrix<f64>) -> SmoothMap {
    let ja = a.clone();
    SmoothMap::new(a.ncols(), a.nrows(), move |y| &a * DVector::from_column_slice(y)).with_jacobian(move |_| ja.clone())
}

/// Rotation of the plane by `angle`.
pub fn rotation_map(angle: f64) -> SmoothMap {
    let (s, c) = angle.sin_cos();
    linear_map(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]))
}

/// `Φ(y) = y + c`.
pub fn translation_map(c: Vec<f64>) -> SmoothMap {
    let d = c.len();
    SmoothMap::new(d, d, move |y| {
        DVector::from_iterator(d, y.iter().zip(&c).map(|(a, b)| a + b))
    })
    .with_jacobian(move |_| DMatrix::identity(d, d))
}

/// Componentwise `z ↦ z²`.
pub fn square_map(d: usize) -> SmoothMap {
    SmoothMap::new(d, d, move |z| DVector::from_iterator(d, z.iter().map(|v| v * v)))
        .with_jacobian(move |z| DMatrix::from_diagonal(&DVector::from_iterator(d, z.iter().map(|v| 2.0 * v))))
}

/// Componentwise `z ↦ exp(z)`.
pub fn exp_map(d: usize) -> SmoothMap {
    SmoothMap::new(d, d, move |z| DVector::from_iterator(d, z.iter().map(|v| v.exp())))
        .with_jacobian(move |z| DMatrix::from_diagonal(&DVector::from_iterator(d, z.iter().map(|v| v.exp()))))
}

/// `F(y) = |y|²`.
pub fn norm_squared(d: usize) -> SmoothMap {
    SmoothMap::new(d, 1, |y| DVector::from_element(1, y.iter().map(|v| v * v).sum()))
        .with_jacobian(move |y| DMatrix::from_row_slice(1, d, &y.iter().map(|v| 2.0 * v).collect::<Vec<_>>()))
}

/// `F(y) = y_k` (zero-based `k`).
pub fn coordinate(d: usize, k: usize) -> SmoothMap {
    assert!(k < d, "coordinate {k} out of range for dimension {d}");
    SmoothMap::new(d, 1, move |y| DVector::from_element(1, y[k]))
        .with_jacobian(move |_| DMatrix::from_fn(1, d, |_, j| if j == k { 1.0 } else { 0.0 }))
}

/// `φ(x) = Σ sin(x_i)`.
pub fn sine_sum(d: usize) -> SmoothMap {
    SmoothMap::new(d, 1, |x| DVector::from_element(1, x.iter().map(|v| v.sin()).sum()))
        .with_jacobian(move |x| DMatrix::from_row_slice(1, d, &x.iter().map(|v| v.cos()).collect::<Vec<_>>()))
}

/// `φ(x) = c · |x|²`.
pub fn scaled_norm_squared(d: usize, c: f64) -> SmoothMap {
    SmoothMap::new(d, 1, move |x| {
        DVector::from_element(1, c * x.iter().map(|v| v * v).sum::<f64>())
    })
    .with_jacobian(move |x| DMatrix::from_row_slice(1, d, &x.iter().map(|v| 2.0 * c * v).collect::<Vec<_>>()))
}

pub const FIELD_NAMES: &[&str] = &["zero", "scaling", "rotation", "constant"];
pub const MAP_NAMES: &[&str] = &[
    "identity",
    "square",
    "exp",
    "norm-squared",
    "coordinate1",
    "scaling",
    "rotation",
    "translation",
    "sine",
    "neg-half-square",
];

/// Vector field by name. `param` is the constant value for `constant`.
pub fn field_by_name(name: &str, d: usize, param: f64) -> Result<FieldSpec> {
    match name {
        "zero" => Ok(zero_field(d, 1)),
        "scaling" => Ok(scaling_field(d)),
        "rotation" if d == 2 => Ok(rotation_field()),
        "constant" => Ok(constant_field(vec![param; d])),
        _ => Err(unknown(name, d, FIELD_NAMES)),
    }
}

/// Smooth map by name. `param` is the rotation angle, scale factor or shift where relevant.
pub fn map_by_name(name: &str, d: usize, param: f64) -> Result<SmoothMap> {
    match name {
        "identity" => Ok(identity_map(d)),
        "square" => Ok(square_map(d)),
        "exp" => Ok(exp_map(d)),
        "norm-squared" => Ok(norm_squared(d)),
        "coordinate1" => Ok(coordinate(d, 0)),
        "scaling" => Ok(linear_map(DMatrix::identity(d, d) * param)),
        "rotation" if d == 2 => Ok(rotation_map(param)),
        "translation" => Ok(translation_map(vec![param; d])),
        "sine" => Ok(sine_sum(d)),
        "neg-half-square" => Ok(scaled_norm_squared(d, -0.5)),
        _ => Err(unknown(name, d, MAP_NAMES)),
    }
}

fn unknown(name: &str, d: usize, known: &[&str]) -> Error {
    Error::UnknownName(format!("'{name}' for dimension {d}; known: {}", known.join(", ")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_jacobians_agree_with_finite_differences() {
        let y = [0.4, -0.7];
        for m in [
            square_map(2),
            exp_map(2),
            norm_squared(2),
            coordinate(2, 1),
            rotation_map(0.3),
            sine_sum(2),
        ] {
            let fd = SmoothMap::new(m.in_dim(), m.out_dim(), {
                let m = m.clone();
                move |y| m.value(y)
            });
            assert!((m.jacobian(&y) - fd.jacobian(&y)).norm() < 1e-8);
        }
    }

    #[test]
    fn lookup_by_name() {
        assert!(field_by_name("rotation", 2, 0.0).is_ok());
        assert!(field_by_name("rotation", 3, 0.0).is_err());
        assert!(map_by_name("nope", 1, 0.0).unwrap_err().to_string().contains("known"));
        let s = map_by_name("scaling", 2, 2.0).unwrap();
        assert_eq!(s.value(&[1.0, -1.0]).as_slice(), &[2.0, -2.0]);
    }
}
