//! Residual ladders and sampled-check reports.

use serde::{Deserialize, Serialize};

/// Floor below which a residual is treated as exactly zero.
pub const ZERO_RESIDUAL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelResidual {
    pub mesh: f64,
    pub residual: f64,
}

/// Residuals on a sequence of grids, coarsest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub levels: Vec<LevelResidual>,
    pub converged: bool,
}

impl ResidualReport {
    pub fn new(levels: Vec<LevelResidual>) -> Self {
        let converged = Self::judge(&levels);
        Self { levels, converged }
    }

    /// Converged when the finest residual vanishes, or when the ladder never
    /// grows by more than 10% and the finest level improves on the coarsest by
    /// at least 30%.
    fn judge(levels: &[LevelResidual]) -> bool {
        let Some(last) = levels.last() else {
            return false;
        };
        if !last.residual.is_finite() {
            return false;
        }
        if last.residual <= ZERO_RESIDUAL {
            return true;
        }
        if levels.len() < 2 {
            return false;
        }
        let steady = levels
            .windows(2)
            .all(|w| w[1].residual <= 1.1 * w[0].residual + ZERO_RESIDUAL);
        steady && last.residual * 1.3 <= levels[0].residual
    }

    pub fn finest(&self) -> f64 {
        self.levels.last().map_or(f64::NAN, |l| l.residual)
    }

    pub fn coarsest(&self) -> f64 {
        self.levels.first().map_or(f64::NAN, |l| l.residual)
    }

    /// `r_k / r_{k+1}` for consecutive levels.
    pub fn decrease_factors(&self) -> Vec<f64> {
        self.levels.windows(2).map(|w| w[0].residual / w[1].residual).collect()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.residual).collect()
    }
}

/// Outcome of a check evaluated on sample points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub max_residual: f64,
    pub arg_max_point: Vec<f64>,
    pub pass: bool,
    pub tol: f64,
    pub samples: usize,
    /// Seed of the sample set, when the points were drawn at random.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub flow_check: Option<Box<CheckReport>>,
}

impl CheckReport {
    /// Folds `(point, residual)` pairs into a report; NaN residuals fail.
    pub fn from_samples<I>(samples: I, tol: f64) -> Self
    where
        I: IntoIterator<Item = (Vec<f64>, f64)>,
    {
        let mut max_residual = 0.0_f64;
        let mut arg_max_point = Vec::new();
        let mut count = 0;
        let mut saw_nan = false;
        for (p, r) in samples {
            count += 1;
            if r.is_nan() {
                if !saw_nan {
                    arg_max_point = p;
                }
                saw_nan = true;
                continue;
            }
            if !saw_nan && (r > max_residual || arg_max_point.is_empty()) {
                max_residual = r;
                arg_max_point = p;
            }
        }
        if saw_nan {
            max_residual = f64::NAN;
        }
        Self {
            max_residual,
            arg_max_point,
            pass: !saw_nan && max_residual <= tol,
            tol,
            samples: count,
            seed: None,
            flow_check: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_flow_check(mut self, flow: CheckReport) -> Self {
        self.pass = self.pass && flow.pass;
        self.flow_check = Some(Box::new(flow));
        self
    }
}
