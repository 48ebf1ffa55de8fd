use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::model::{Direction, SystemModel};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridIndex};
use crate::rng::seeded_rng;

/// One realization of the plant and all channels on `[0, horizon]^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub horizon: usize,
    pub states: Grid<DVector<f64>>,
    pub process_noise: Grid<DVector<f64>>,
    /// `measurements[s][(i, j)]` is `None` where channel `s` has not reported yet.
    pub measurements: Vec<Grid<Option<DVector<f64>>>>,
    pub measurement_noise: Vec<Grid<Option<DVector<f64>>>>,
}

impl Trajectory {
    pub fn measurement(&self, s: usize, idx: GridIndex) -> Option<&DVector<f64>> {
        self.measurements[s].get(idx).and_then(|v| v.as_ref())
    }
}

/// `x(i, j) = f1((i, j-1), x_left) + f2((i-1, j), x_up) + B1(i, j-1) w_left + B2(i-1, j) w_up`.
pub fn step_state(
    model: &SystemModel,
    x_left: &DVector<f64>,
    x_up: &DVector<f64>,
    w_left: &DVector<f64>,
    w_up: &DVector<f64>,
    idx: GridIndex,
) -> Result<DVector<f64>> {
    let n = model.state_dim;
    for (name, v) in [("x_left", x_left), ("x_up", x_up), ("w_left", w_left), ("w_up", w_up)] {
        if v.len() != n {
            return Err(Error::config(name, format!("expected length {n}, found {}", v.len())));
        }
    }
    let (left, up) = match (idx.left(), idx.up()) {
        (Some(l), Some(u)) => (l, u),
        _ => return Err(Error::config("idx", format!("{idx} is a boundary cell"))),
    };
    Ok(model.propagate(Direction::Horizontal, left, x_left)
        + model.propagate(Direction::Vertical, up, x_up)
        + model.noise_gain(Direction::Horizontal, left) * w_left
        + model.noise_gain(Direction::Vertical, up) * w_up)
}

/// Square-root factors of every covariance the simulator samples from.
/// Built once per scenario and shared read-only across trials.
#[derive(Debug, Clone)]
pub struct NoisePlan {
    horizon: usize,
    process: Grid<DMatrix<f64>>,
    measurement: Vec<Grid<DMatrix<f64>>>,
    boundary: Grid<Option<DMatrix<f64>>>,
}

impl NoisePlan {
    pub fn new(model: &SystemModel, horizon: usize) -> Result<Self> {
        model.validate(horizon)?;
        let process = factor_grid(horizon, |idx| model.process_cov(idx).clone());
        let measurement = (0..model.channel_count())
            .map(|s| factor_grid(horizon, |idx| model.meas_cov(s, idx).clone()))
            .collect();
        let boundary = Grid::square_from_fn(horizon, |idx| {
            idx.is_boundary()
                .then(|| sqrt_factor(&crate::linalg::symmetrize(&model.boundary_cov(idx))))
        });
        Ok(NoisePlan {
            horizon,
            process,
            measurement,
            boundary,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

fn factor_grid(horizon: usize, cov: impl Fn(GridIndex) -> DMatrix<f64>) -> Grid<DMatrix<f64>> {
    // constant covariances are common; avoid refactorizing identical matrices
    let mut last: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    Grid::square_from_fn(horizon, |idx| {
        let c = cov(idx);
        if let Some((prev, f)) = &last {
            if *prev == c {
                return f.clone();
            }
        }
        let f = sqrt_factor(&c);
        last = Some((c, f.clone()));
        f
    })
}

/// `L` with `L L^T = cov`; Cholesky when definite, symmetric square root otherwise.
pub(crate) fn sqrt_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = cov.clone().cholesky() {
        return ch.l();
    }
    let eig = crate::linalg::symmetrize(cov).symmetric_eigen();
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root)
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, factor: &DMatrix<f64>) -> DVector<f64> {
    let z = DVector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    factor * z
}

/// Samples a trajectory. Noise is Gaussian with the model's covariances; boundary states are
/// Gaussian with mean `x_u` and covariance `Xi - x_u x_u^T`.
pub fn simulate_trajectory(model: &SystemModel, horizon: usize, seed: u64) -> Result<Trajectory> {
    let plan = NoisePlan::new(model, horizon)?;
    let mut rng = seeded_rng(seed);
    simulate_with(model, &plan, &mut rng)
}

/// Same as [`simulate_trajectory`] with a prepared plan and caller-owned RNG stream.
pub fn simulate_with<R: Rng + ?Sized>(
    model: &SystemModel,
    plan: &NoisePlan,
    rng: &mut R,
) -> Result<Trajectory> {
    let horizon = plan.horizon;
    let n = model.state_dim;
    let mut states = Grid::square_from_fn(horizon, |_| DVector::zeros(n));
    for idx in states.indices().filter(|c| c.is_boundary()) {
        let f = plan.boundary[idx].as_ref().expect("boundary factor");
        states[idx] = model.boundary_mean(idx) + gaussian(rng, f);
    }
    let process_noise = Grid::square_from_fn(horizon, |idx| gaussian(rng, &plan.process[idx]));
    for idx in states.indices().filter(|c| !c.is_boundary()) {
        let (left, up) = (idx.left().unwrap(), idx.up().unwrap());
        let x = step_state(
            model,
            &states[left],
            &states[up],
            &process_noise[left],
            &process_noise[up],
            idx,
        )?;
        states[idx] = x;
    }
    let mut measurements = Vec::with_capacity(model.channel_count());
    let mut measurement_noise = Vec::with_capacity(model.channel_count());
    for s in 0..model.channel_count() {
        let (di, dj) = model.delays.get(s);
        let noise = Grid::square_from_fn(horizon, |idx| {
            idx.delayed(di, dj)
                .map(|_| gaussian(rng, &plan.measurement[s][idx]))
        });
        let y = noise.map(|idx, v| {
            v.as_ref().map(|v| {
                let src = idx.delayed(di, dj).expect("noise only where delayed cell exists");
                model.output(s, idx) * &states[src] + v
            })
        });
        measurements.push(y);
        measurement_noise.push(noise);
    }
    Ok(Trajectory {
        horizon,
        states,
        process_noise,
        measurements,
        measurement_noise,
    })
}
