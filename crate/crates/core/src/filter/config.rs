use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{Matrix, SystemModel};

/// One direction of gain variation: `alpha += beta * h` with `beta` zero-mean of variance
/// `variance`, applied at every cell of step `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Filter step `tau` in `1..=N+1`; step `tau` covers region `S_{tau-1}`.
    pub step: usize,
    pub h: Matrix,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// `(a1, a2)` weights of the second-moment recursion.
    pub a_check: [f64; 2],
    /// `(b1, ..., b6)` weights of the covariance-bound recursions.
    pub b_check: [f64; 6],
    #[serde(default)]
    pub perturbations: Vec<Perturbation>,
}

impl FilterConfig {
    pub fn b(&self, k: usize) -> f64 {
        self.b_check[k - 1]
    }

    /// `1 + b3 + b4`.
    pub fn innovation_weight(&self) -> f64 {
        1.0 + self.b(3) + self.b(4)
    }

    pub fn perturbations_for(&self, step: usize) -> impl Iterator<Item = &Perturbation> {
        self.perturbations.iter().filter(move |p| p.step == step)
    }

    /// Number of filter steps is the channel count `N + 1`.
    pub fn validate(&self, model: &SystemModel) -> Result<()> {
        for (k, a) in self.a_check.iter().enumerate() {
            if !(a.is_finite() && *a > 0.0) {
                return Err(Error::config(format!("filter.a_check[{k}]"), "must be finite and > 0"));
            }
        }
        for (k, b) in self.b_check.iter().enumerate() {
            if !(b.is_finite() && *b > 0.0) {
                return Err(Error::config(format!("filter.b_check[{k}]"), "must be finite and > 0"));
            }
        }
        let steps = model.channel_count();
        for (v, p) in self.perturbations.iter().enumerate() {
            let field = format!("filter.perturbations[{v}]");
            if !(1..=steps).contains(&p.step) {
                return Err(Error::config(format!("{field}.step"), format!("must lie in [1, {steps}]")));
            }
            let cols = (steps - p.step + 1) * model.meas_dim;
            if p.h.shape() != (model.state_dim, cols) {
                return Err(Error::config(
                    format!("{field}.h"),
                    format!("expected {}x{cols}, found {}x{}", model.state_dim, p.h.nrows(), p.h.ncols()),
                ));
            }
            if !(p.variance.is_finite() && p.variance >= 0.0) {
                return Err(Error::config(format!("{field}.variance"), "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

impl Perturbation {
    pub fn new(step: usize, h: DMatrix<f64>, variance: f64) -> Self {
        Perturbation { step, h: Matrix(h), variance }
    }
}
