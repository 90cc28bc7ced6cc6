//! Driving paths: fractional Brownian motion with `H > 1/2` and deterministic test paths.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::SampledPath;

/// Identifies the sampling algorithm; identical seeds reproduce paths only
/// within one version.
pub const GENERATOR_VERSION: &str = "youngflow-fbm/durbin-levinson+chacha8/1";

/// Default cap on the number of fBm grid points.
pub const DEFAULT_FBM_CAP: usize = 1 << 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbmSpec {
    pub hurst: f64,
    pub n_points: usize,
    pub horizon: f64,
    pub seed: u64,
}

impl FbmSpec {
    pub fn new(hurst: f64, n_points: usize, horizon: f64, seed: u64) -> Self {
        Self {
            hurst,
            n_points,
            horizon,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.5 && self.hurst < 1.0) {
            return Err(Error::InvalidParameter {
                name: "hurst",
                value: self.hurst,
                reason: "Hurst index must lie strictly inside (0.5, 1)",
            });
        }
        if self.n_points < 2 {
            return Err(Error::InvalidParameter {
                name: "n_points",
                value: self.n_points as f64,
                reason: "need at least 2 grid points",
            });
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "horizon",
                value: self.horizon,
                reason: "horizon must be positive and finite",
            });
        }
        Ok(())
    }
}

/// Autocovariance of fBm increments over steps of length `dt` at lag `k`.
pub fn increment_autocovariance(hurst: f64, dt: f64, k: usize) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * dt.powf(h2) * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// `R(s,t) = ½(s^{2H} + t^{2H} − |t−s|^{2H})`.
pub fn fbm_covariance(hurst: f64, s: f64, t: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * (s.abs().powf(h2) + t.abs().powf(h2) - (t - s).abs().powf(h2))
}

/// fBm sample with the default size cap.
pub fn gen_fbm(spec: &FbmSpec) -> Result<SampledPath> {
    gen_fbm_capped(spec, DEFAULT_FBM_CAP)
}

/// Exact fBm sample on a uniform grid, starting at 0.
///
/// The increments are `L ε` with `L` the Cholesky factor of their Toeplitz
/// covariance and `ε` i.i.d. standard normals. `L ε` is formed row by row
/// through the Durbin–Levinson recursion, which yields the same factor in
/// O(n²) time and O(n) memory.
pub fn gen_fbm_capped(spec: &FbmSpec, cap: usize) -> Result<SampledPath> {
    spec.validate()?;
    if spec.n_points > cap {
        return Err(Error::ResourceLimit {
            what: "fBm grid",
            requested: spec.n_points,
            cap,
        });
    }
    let m = spec.n_points - 1;
    let dt = spec.horizon / m as f64;
    let gamma: Vec<f64> = (0..m).map(|k| increment_autocovariance(spec.hurst, dt, k)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut noise = || -> f64 { StandardNormal.sample(&mut rng) };

    let mut incr = Vec::with_capacity(m);
    let mut phi: Vec<f64> = Vec::with_capacity(m);
    let mut prev: Vec<f64> = Vec::with_capacity(m);
    let mut v = gamma[0];
    incr.push(v.sqrt() * noise());
    for k in 1..m {
        // φ_{k,k} from the previous prediction coefficients.
        let mut num = gamma[k];
        for j in 1..k {
            num -= phi[j - 1] * gamma[k - j];
        }
        let reflection = num / v;
        prev.clear();
        prev.extend_from_slice(&phi);
        for j in 1..k {
            phi[j - 1] = prev[j - 1] - reflection * prev[k - j - 1];
        }
        phi.push(reflection);
        v *= 1.0 - reflection * reflection;
        if !(v > 0.0) {
            return Err(Error::NotPositiveDefinite { index: k });
        }
        let mean: f64 = (1..=k).map(|j| phi[j - 1] * incr[k - j]).sum();
        incr.push(mean + v.sqrt() * noise());
    }

    let mut values = Vec::with_capacity(spec.n_points);
    let mut acc = 0.0;
    values.push(acc);
    for d in incr {
        acc += d;
        values.push(acc);
    }
    SampledPath::scalar(SampledPath::uniform_grid(spec.n_points, spec.horizon), values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DeterministicKind {
    /// `X_t = t`.
    Linear,
    /// `X_t = t^exponent`.
    Power { exponent: f64 },
    /// `X_t = amplitude · sin(frequency · t)`, angular frequency.
    Sine { frequency: f64, amplitude: f64 },
    /// Piecewise-linear through `(time, value)` vertices, constant outside their span.
    Polygonal { vertices: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicSpec {
    #[serde(flatten)]
    pub kind: DeterministicKind,
    pub n_points: usize,
    pub horizon: f64,
}

impl DeterministicSpec {
    pub fn new(kind: DeterministicKind, n_points: usize, horizon: f64) -> Self {
        Self {
            kind,
            n_points,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(Error::InvalidParameter {
                name: "n_points",
                value: self.n_points as f64,
                reason: "need at least 2 grid points",
            });
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "horizon",
                value: self.horizon,
                reason: "horizon must be positive and finite",
            });
        }
        match &self.kind {
            DeterministicKind::Linear => Ok(()),
            DeterministicKind::Power { exponent } if !(*exponent > 0.0 && exponent.is_finite()) => {
                Err(Error::InvalidParameter {
                    name: "exponent",
                    value: *exponent,
                    reason: "power exponent must be positive",
                })
            }
            DeterministicKind::Power { .. } => Ok(()),
            DeterministicKind::Sine { frequency, amplitude } => {
                if frequency.is_finite() && amplitude.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter {
                        name: "sine parameters",
                        value: frequency * amplitude,
                        reason: "frequency and amplitude must be finite",
                    })
                }
            }
            DeterministicKind::Polygonal { vertices } => {
                if vertices.len() < 2 {
                    return Err(Error::InvalidParameter {
                        name: "polygon vertices",
                        value: vertices.len() as f64,
                        reason: "need at least 2 vertices",
                    });
                }
                if vertices.windows(2).any(|w| !(w[1].0 > w[0].0))
                    || vertices.iter().any(|v| !v.0.is_finite() || !v.1.is_finite())
                {
                    return Err(Error::InvalidParameter {
                        name: "polygon vertices",
                        value: vertices.len() as f64,
                        reason: "vertex times must be finite and strictly increasing",
                    });
                }
                Ok(())
            }
        }
    }

    fn eval(&self, t: f64) -> f64 {
        match &self.kind {
            DeterministicKind::Linear => t,
            DeterministicKind::Power { exponent } => t.powf(*exponent),
            DeterministicKind::Sine { frequency, amplitude } => amplitude * (frequency * t).sin(),
            DeterministicKind::Polygonal { vertices } => {
                let (first, last) = (vertices[0], vertices[vertices.len() - 1]);
                if t <= first.0 {
                    return first.1;
                }
                if t >= last.0 {
                    return last.1;
                }
                let j = vertices.partition_point(|v| v.0 <= t);
                let (a, b) = (vertices[j - 1], vertices[j]);
                a.1 + (t - a.0) / (b.0 - a.0) * (b.1 - a.1)
            }
        }
    }
}

pub fn gen_deterministic(spec: &DeterministicSpec) -> Result<SampledPath> {
    spec.validate()?;
    SampledPath::from_fn(spec.n_points, spec.horizon, 1, |t| vec![spec.eval(t)])
}
