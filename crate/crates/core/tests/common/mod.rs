#![allow(dead_code)]

use etf2d::eds::{ChannelCodec, CodecConfig};
use etf2d::etm::{EtmChannel, EtmConfig, TriggerMode};
use etf2d::filter::FilterConfig;
use etf2d::scenario::{OutputConfig, ScenarioConfig};
use etf2d::system::{
    BoundaryStats, Channel, Delays, DirectionTerms, Matrix, Nonlinearity, Profile, ShiftVarying, SystemModel, Vector,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn m(rows: usize, cols: usize, v: &[f64]) -> Matrix {
    Matrix(DMatrix::from_row_slice(rows, cols, v))
}

pub fn constant<T>(v: T) -> ShiftVarying<T> {
    ShiftVarying::Constant(v)
}

/// Scalar plant `x = a x_left + a x_up + w_left + w_up`, one delay-free channel `y = x + v`.
pub fn scalar_model(a: f64, q: f64, r: f64, boundary_var: f64) -> SystemModel {
    let terms = DirectionTerms {
        linear: constant(m(1, 1, &[a])),
        lipschitz: constant(0.0),
        noise_gain: constant(m(1, 1, &[1.0])),
    };
    SystemModel {
        state_dim: 1,
        meas_dim: 1,
        nonlinearity: Nonlinearity::Linear,
        horizontal: terms.clone(),
        vertical: terms,
        process_cov: constant(m(1, 1, &[q])),
        channels: vec![Channel {
            output: constant(m(1, 1, &[1.0])),
            noise_cov: constant(m(1, 1, &[r])),
        }],
        delays: Delays(vec![(0, 0)]),
        boundary: BoundaryStats {
            mean_row: Profile::Constant(Vector(DVector::zeros(1))),
            mean_col: Profile::Constant(Vector(DVector::zeros(1))),
            second_moment_row: Profile::Constant(m(1, 1, &[boundary_var])),
            second_moment_col: Profile::Constant(m(1, 1, &[boundary_var])),
        },
        allow_degenerate_noise: true,
    }
}

pub fn etm_channel(varsigma: f64, sigma: f64, rho: f64, alpha: f64, xi0: f64) -> EtmChannel {
    EtmChannel {
        varsigma,
        sigma: vec![sigma],
        rho: vec![rho],
        alpha1: alpha,
        alpha2: alpha,
        xi0,
    }
}

pub fn scenario(model: SystemModel, etm: Vec<EtmChannel>, codec: ChannelCodec, filter: FilterConfig, horizon: usize) -> ScenarioConfig {
    let channels = model.channel_count();
    ScenarioConfig {
        name: "fixture".into(),
        horizon,
        trials: 1,
        seed: 1,
        model,
        etm: EtmConfig {
            mode: TriggerMode::Dynamic,
            channels: etm,
            allow_invalid: false,
        },
        codec: CodecConfig {
            channels: vec![codec; channels],
        },
        filter,
        output: OutputConfig::default(),
        monotonicity: None,
    }
}

/// Random two-state plant with `delays`, stable enough for a 30x30 grid.
pub fn random_model<R: Rng>(rng: &mut R, delays: Delays) -> SystemModel {
    let mut entry = |scale: f64| rng.random_range(-scale..scale);
    let a1 = m(2, 2, &[entry(0.45), entry(0.2), entry(0.2), entry(0.45)]);
    let a2 = m(2, 2, &[entry(0.45), entry(0.2), entry(0.2), entry(0.45)]);
    let q = entry(0.1).abs() + 0.01;
    let channels = (0..delays.len())
        .map(|_| Channel {
            output: constant(m(1, 2, &[entry(1.5), entry(1.5)])),
            noise_cov: constant(m(1, 1, &[entry(0.05).abs() + 0.005])),
        })
        .collect();
    let mean = [entry(1.0), entry(1.0)];
    let second = m(2, 2, &[mean[0] * mean[0] + 0.3, mean[0] * mean[1], mean[0] * mean[1], mean[1] * mean[1] + 0.3]);
    SystemModel {
        state_dim: 2,
        meas_dim: 1,
        nonlinearity: Nonlinearity::SineResidual { scale: 1.0 },
        horizontal: DirectionTerms {
            linear: constant(a1),
            lipschitz: constant(0.05),
            noise_gain: constant(m(2, 2, &[1.0, 0.0, 0.0, 1.0])),
        },
        vertical: DirectionTerms {
            linear: constant(a2),
            lipschitz: constant(0.05),
            noise_gain: constant(m(2, 2, &[1.0, 0.0, 0.0, 1.0])),
        },
        process_cov: constant(m(2, 2, &[q, 0.0, 0.0, q])),
        channels,
        delays,
        boundary: BoundaryStats {
            mean_row: Profile::Constant(Vector(DVector::from_row_slice(&mean))),
            mean_col: Profile::Constant(Vector(DVector::from_row_slice(&mean))),
            second_moment_row: Profile::Constant(second.clone()),
            second_moment_col: Profile::Constant(second),
        },
        allow_degenerate_noise: false,
    }
}

/// Trigger parameters that satisfy the non-negativity conditions.
pub fn random_valid_etm<R: Rng>(rng: &mut R, channels: usize) -> EtmConfig {
    EtmConfig {
        mode: TriggerMode::Dynamic,
        channels: (0..channels)
            .map(|_| {
                let alpha1: f64 = rng.random_range(0.2..0.6);
                let alpha2: f64 = rng.random_range(0.2..0.6);
                let floor = (1.0 / alpha1).max(1.0 / alpha2);
                EtmChannel {
                    varsigma: floor * rng.random_range(1.0..3.0),
                    sigma: vec![rng.random_range(0.05..0.95)],
                    rho: vec![floor * rng.random_range(1.0..3.0)],
                    alpha1,
                    alpha2,
                    xi0: rng.random_range(0.0..1.0),
                }
            })
            .collect(),
        allow_invalid: false,
    }
}

/// Parameters of the one-state, one-channel reference problem.
#[derive(Debug, Clone, Copy)]
pub struct ScalarCase {
    pub a: f64,
    pub q: f64,
    pub r: f64,
    pub boundary_var: f64,
    pub sigma: f64,
    pub rho: f64,
    pub varsigma: f64,
    pub alpha: f64,
    pub xi0: f64,
    pub range: f64,
    pub bits: u32,
    pub crossover: f64,
    pub a_check: [f64; 2],
    pub b_check: [f64; 6],
    pub h: f64,
    pub beta_var: f64,
}

impl ScalarCase {
    pub fn scenario(&self, horizon: usize) -> ScenarioConfig {
        let filter = FilterConfig {
            a_check: self.a_check,
            b_check: self.b_check,
            perturbations: vec![etf2d::filter::Perturbation::new(1, DMatrix::from_element(1, 1, self.h), self.beta_var)],
        };
        scenario(
            scalar_model(self.a, self.q, self.r, self.boundary_var),
            vec![etm_channel(self.varsigma, self.sigma, self.rho, self.alpha, self.xi0)],
            ChannelCodec {
                range: self.range,
                bits: self.bits,
                crossover: self.crossover,
            },
            filter,
            horizon,
        )
    }

    /// Trigger-error bound and updated covariance bound on `[0, horizon]^2`, written out by
    /// hand for the scalar case. Returns row-major `(delta, xi_u)` vectors.
    pub fn reference(&self, horizon: usize) -> (Vec<f64>, Vec<f64>) {
        let w = horizon + 1;
        let at = |i: usize, j: usize| i * w + j;
        let [a1, a2] = self.a_check;
        let [b1, b2, b3, b4, b5, b6] = self.b_check;
        let a2sq = self.a * self.a;
        let mut xbar = vec![0.0; w * w];
        for i in 0..w {
            for j in 0..w {
                xbar[at(i, j)] = if i == 0 || j == 0 {
                    self.boundary_var
                } else {
                    (1.0 + a1) * (1.0 + 1.0 / a2) * a2sq * xbar[at(i, j - 1)]
                        + (1.0 + 1.0 / a1) * (1.0 + 1.0 / a2) * a2sq * xbar[at(i - 1, j)]
                        + 2.0 * self.q
                };
            }
        }
        let ybar: Vec<f64> = xbar.iter().map(|x| x + self.r).collect();
        let mut aux = vec![self.xi0; w * w];
        for i in 1..w {
            for j in 1..w {
                aux[at(i, j)] = self.alpha * (aux[at(i, j - 1)] + aux[at(i - 1, j)])
                    + self.sigma * (ybar[at(i, j - 1)] + ybar[at(i - 1, j)]);
            }
        }
        let delta: Vec<f64> = (0..w * w)
            .map(|c| self.sigma / self.rho * ybar[c] + aux[c] / (self.varsigma * self.rho))
            .collect();

        let p = self.crossover;
        let keep = (1.0 - 2.0 * p).powi(2);
        let step = 2.0 * self.range / ((1u64 << self.bits) - 1) as f64;
        let flips: f64 = (0..self.bits).map(|v| p * (1.0 - p) * (step * (1u64 << v) as f64).powi(2)).sum();
        let weight = 1.0 + b3 + b4;
        let mut xi = vec![0.0; w * w];
        for i in 0..w {
            for j in 0..w {
                let c = at(i, j);
                if i == 0 || j == 0 {
                    xi[c] = self.boundary_var;
                    continue;
                }
                let xp = (1.0 + b1) * (1.0 + 1.0 / b2) * a2sq * xi[at(i, j - 1)]
                    + (1.0 + 1.0 / b1) * (1.0 + 1.0 / b2) * a2sq * xi[at(i - 1, j)]
                    + 2.0 * self.q;
                let theta = 4.0 * p * p * xbar[c] * (1.0 + 1.0 / b3 + b5)
                    + keep * step * step / 4.0
                    + keep * delta[c] * (1.0 + 1.0 / b4 + 1.0 / b5 + b6)
                    + keep * self.r * (1.0 + 1.0 / b6)
                    + flips;
                let f = theta + weight * xp;
                let k = weight * xp / f;
                xi[c] = weight * xp - k * k * f + self.beta_var * self.h * self.h * f;
            }
        }
        (delta, xi)
    }
}

pub const SCALAR: ScalarCase = ScalarCase {
    a: 0.45,
    q: 0.05,
    r: 0.02,
    boundary_var: 0.3,
    sigma: 0.3,
    rho: 2.5,
    varsigma: 2.5,
    alpha: 0.4,
    xi0: 0.1,
    range: 4.0,
    bits: 6,
    crossover: 0.01,
    a_check: [1.0, 1000.0],
    b_check: [1.0, 1000.0, 0.2, 0.3, 50.0, 0.5],
    h: 0.1,
    beta_var: 0.02,
};
