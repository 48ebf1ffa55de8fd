//! The stochastic filter run on one realization, using a precomputed gain schedule.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::bounds::BoundSchedule;
use super::config::FilterConfig;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridIndex};
use crate::reconstruct::StackedMeasurement;
use crate::system::{Direction, SystemModel};

/// `f1((l, k-1), xu_left) + f2((l-1, k), xu_up)`.
pub fn predict(model: &SystemModel, xu_left: &DVector<f64>, xu_up: &DVector<f64>, idx: GridIndex) -> DVector<f64> {
    let l = idx.left().expect("interior cell");
    let u = idx.up().expect("interior cell");
    model.propagate(Direction::Horizontal, l, xu_left) + model.propagate(Direction::Vertical, u, xu_up)
}

/// `xp + (K + alpha)(decoded - C xp)`.
pub fn update_estimate(
    xp: &DVector<f64>,
    k: &DMatrix<f64>,
    alpha: Option<&DMatrix<f64>>,
    decoded: &DVector<f64>,
    c: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    if c.ncols() != xp.len() || c.nrows() != decoded.len() || k.shape() != (xp.len(), decoded.len()) {
        return Err(Error::config(
            "filter",
            format!(
                "gain {}x{}, output {}x{}, state {}, measurement {}",
                k.nrows(),
                k.ncols(),
                c.nrows(),
                c.ncols(),
                xp.len(),
                decoded.len()
            ),
        ));
    }
    let innovation = decoded - c * xp;
    Ok(match alpha {
        Some(a) if a.shape() == k.shape() => xp + (k + a) * innovation,
        Some(a) => {
            return Err(Error::config(
                "filter.perturbations",
                format!("variation is {}x{}, gain is {}x{}", a.nrows(), a.ncols(), k.nrows(), k.ncols()),
            ))
        }
        None => xp + k * innovation,
    })
}

/// `sum_v beta_v H_v` with independent `beta_v ~ N(0, variance_v)`; `None` without directions.
pub fn sample_gain_variation<R: Rng + ?Sized>(cfg: &FilterConfig, step: usize, rng: &mut R) -> Option<DMatrix<f64>> {
    let mut acc: Option<DMatrix<f64>> = None;
    for p in cfg.perturbations_for(step) {
        let beta = p.variance.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let term = &*p.h * beta;
        acc = Some(match acc {
            Some(a) => a + term,
            None => term,
        });
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub predicted: Grid<DVector<f64>>,
    pub updated: Grid<DVector<f64>>,
}

/// Runs the filter over every cell in the schedule's region order. Boundary cells take the
/// boundary mean.
pub fn run_filter<R: Rng + ?Sized>(
    model: &SystemModel,
    cfg: &FilterConfig,
    schedule: &BoundSchedule,
    measurements: &Grid<StackedMeasurement>,
    rng: &mut R,
) -> Result<FilterRun> {
    let n = model.state_dim;
    let mut predicted = Grid::square_from_fn(schedule.horizon, |_| DVector::zeros(n));
    let mut updated = predicted.clone();
    for idx in schedule.order() {
        let cell = schedule.cell(idx);
        match (idx.left(), idx.up(), &cell.gain) {
            (Some(l), Some(u), Some(k)) if !idx.is_boundary() => {
                let xp = predict(model, &updated[l], &updated[u], idx);
                let alpha = sample_gain_variation(cfg, cell.step, rng);
                let meas = &measurements[idx];
                if meas.depth != cell.depth {
                    return Err(Error::Data(format!(
                        "measurement at {idx} has depth {} but the schedule expects {}",
                        meas.depth, cell.depth
                    )));
                }
                updated[idx] = update_estimate(&xp, k, alpha.as_ref(), &meas.values, &cell.c)?;
                predicted[idx] = xp;
            }
            _ => {
                predicted[idx] = model.boundary_mean(idx).clone();
                updated[idx] = predicted[idx].clone();
            }
        }
    }
    Ok(FilterRun { predicted, updated })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn update_values() {
        let k = DMatrix::from_element(1, 1, 0.5);
        let c = DMatrix::from_element(1, 1, 1.0);
        let xp = DVector::from_element(1, 1.0);
        let x = update_estimate(&xp, &k, None, &DVector::from_element(1, 3.0), &c).unwrap();
        assert_eq!(x[0], 2.0);
        let same = update_estimate(&xp, &k, None, &DVector::from_element(1, 1.0), &c).unwrap();
        assert_eq!(same, xp);
        assert!(update_estimate(&xp, &k, None, &DVector::zeros(2), &c).is_err());
    }
}
