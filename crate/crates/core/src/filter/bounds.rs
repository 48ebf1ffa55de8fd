//! Deterministic recursions: second-moment bound, covariance bounds and gain synthesis.

use nalgebra::{DMatrix, DVector};

use super::config::{FilterConfig, Perturbation};
use crate::eds::CodecConfig;
use crate::error::{Error, Result};
use crate::etm::{mean_trigger_error_bound, EtmConfig};
use crate::grid::{Grid, GridIndex};
use crate::linalg::{clip_psd, ensure_psd, ensure_psd_scaled, solve_spd_right, symmetrize, vstack_vectors};
use crate::reconstruct::{partition_regions, stack_sources, stacked_model, RegionPartition};
use crate::system::{Direction, SystemModel};

/// `(1 + w) a^2 tr(p) I + (1 + 1/w) A p A^T` for one direction, evaluated at `at`.
fn spread(model: &SystemModel, dir: Direction, at: GridIndex, p: &DMatrix<f64>, w: f64) -> DMatrix<f64> {
    let n = p.nrows();
    let a = model.residual_lipschitz(dir, at);
    let lin = model.linear(dir, at);
    DMatrix::identity(n, n) * ((1.0 + w) * a * a * p.trace()) + lin * p * lin.transpose() * (1.0 + 1.0 / w)
}

fn two_sided(
    model: &SystemModel,
    left: &DMatrix<f64>,
    up: &DMatrix<f64>,
    idx: GridIndex,
    cross: f64,
    inner: f64,
    what: &str,
) -> Result<DMatrix<f64>> {
    ensure_psd(left, what)?;
    ensure_psd(up, what)?;
    let (l, u) = match (idx.left(), idx.up()) {
        (Some(l), Some(u)) => (l, u),
        _ => return Err(Error::Input(format!("{idx} is a boundary cell"))),
    };
    let out = spread(model, Direction::Horizontal, l, left, inner) * (1.0 + cross)
        + spread(model, Direction::Vertical, u, up, inner) * (1.0 + 1.0 / cross)
        + model.driven_noise_cov(Direction::Horizontal, l)
        + model.driven_noise_cov(Direction::Vertical, u);
    Ok(symmetrize(&out))
}

/// Upper bound on `E[x x^T]` at `idx` from the bounds at its left and upper neighbours.
pub fn second_moment_bound_step(
    cfg: &FilterConfig,
    model: &SystemModel,
    xbar_left: &DMatrix<f64>,
    xbar_up: &DMatrix<f64>,
    idx: GridIndex,
) -> Result<DMatrix<f64>> {
    let [a1, a2] = cfg.a_check;
    two_sided(model, xbar_left, xbar_up, idx, a1, a2, "second-moment bound")
}

/// One-step prediction bound from the updated bounds at the two neighbours.
pub fn bound_predict(
    cfg: &FilterConfig,
    model: &SystemModel,
    xi_left: &DMatrix<f64>,
    xi_up: &DMatrix<f64>,
    idx: GridIndex,
) -> Result<DMatrix<f64>> {
    two_sided(model, xi_left, xi_up, idx, cfg.b(1), cfg.b(2), "update bound")
}

/// Communication constants of a stacked measurement, one entry per stacked component.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedNoise {
    /// Crossover probability.
    pub flip: DVector<f64>,
    /// Truncation bound `step^2 / 4`.
    pub truncation: DVector<f64>,
    /// Decoded-output variance from bit flips.
    pub flip_variance: DVector<f64>,
}

impl StackedNoise {
    pub fn new(codec: &CodecConfig, depth: usize, m: usize) -> Self {
        let per = |f: &dyn Fn(usize) -> f64| DVector::from_fn((depth + 1) * m, |r, _| f(r / m));
        StackedNoise {
            flip: per(&|c| codec.channel(c).crossover),
            truncation: per(&|c| codec.channel(c).truncation_bound()),
            flip_variance: per(&|c| codec.channel(c).flip_variance()),
        }
    }
}

/// Everything the innovation statistics need at one cell besides `Xi_p` and the moment bound.
#[derive(Debug, Clone, Copy)]
pub struct InnovationInputs<'a> {
    pub c: &'a DMatrix<f64>,
    pub r: &'a DMatrix<f64>,
    pub noise: &'a StackedNoise,
    /// Diagonal of the stacked triggering-error bound.
    pub delta: &'a DVector<f64>,
}

/// Returns `(theta, f_check)`, the innovation bound without and with the prediction part.
pub fn innovation_stats(
    cfg: &FilterConfig,
    inputs: InnovationInputs<'_>,
    xi_p: &DMatrix<f64>,
    xbar: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let InnovationInputs { c, r, noise, delta } = inputs;
    let dim = c.nrows();
    if r.shape() != (dim, dim) || noise.flip.len() != dim || delta.len() != dim {
        return Err(Error::Input("stacked dimensions disagree in innovation statistics".into()));
    }
    let (b3, b4, b5, b6) = (cfg.b(3), cfg.b(4), cfg.b(5), cfg.b(6));
    let flip = DMatrix::from_diagonal(&noise.flip);
    let keep = noise.flip.map(|p| 1.0 - 2.0 * p);
    let keep_sq = keep.component_mul(&keep);
    let keep_m = DMatrix::from_diagonal(&keep);

    let theta = &flip * c * xbar * c.transpose() * &flip * (4.0 * (1.0 + 1.0 / b3 + b5))
        + DMatrix::from_diagonal(&keep_sq.component_mul(&noise.truncation))
        + DMatrix::from_diagonal(&keep_sq.component_mul(delta)) * (1.0 + 1.0 / b4 + 1.0 / b5 + b6)
        + &keep_m * r * &keep_m * (1.0 + 1.0 / b6)
        + DMatrix::from_diagonal(&noise.flip_variance);
    let theta = symmetrize(&theta);
    let f_check = symmetrize(&(&theta + c * xi_p * c.transpose() * cfg.innovation_weight()));
    if f_check.clone().cholesky().is_none() {
        return Err(Error::Singular("innovation bound is not positive definite".into()));
    }
    Ok((theta, f_check))
}

/// Bound-minimizing gain `(1 + b3 + b4) Xi_p C^T F^{-1}`.
pub fn gain(cfg: &FilterConfig, xi_p: &DMatrix<f64>, c: &DMatrix<f64>, f_check: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    solve_spd_right(&(xi_p * c.transpose() * cfg.innovation_weight()), f_check, "innovation bound")
}

fn perturbation_term<'a>(perts: impl IntoIterator<Item = &'a Perturbation>, f_check: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    perts.into_iter().fold(DMatrix::zeros(n, n), |acc, p| {
        acc + &*p.h * f_check * p.h.transpose() * p.variance
    })
}

/// Updated bound at the optimal gain, `(1 + b3 + b4) Xi_p - K F K^T + sum beta H F H^T`.
pub fn bound_update<'a>(
    cfg: &FilterConfig,
    perts: impl IntoIterator<Item = &'a Perturbation>,
    xi_p: &DMatrix<f64>,
    k: &DMatrix<f64>,
    f_check: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = xi_p.nrows();
    let prior = xi_p * cfg.innovation_weight();
    let out = symmetrize(&(&prior - k * f_check * k.transpose() + perturbation_term(perts, f_check, n)));
    ensure_psd_scaled(&out, prior.norm(), "update bound")?;
    Ok(clip_psd(out))
}

/// Updated bound at an arbitrary gain,
/// `(1 + b3 + b4)(Xi_p - K C Xi_p - Xi_p C^T K^T) + K F K^T + sum beta H F H^T`.
pub fn general_form<'a>(
    cfg: &FilterConfig,
    perts: impl IntoIterator<Item = &'a Perturbation>,
    xi_p: &DMatrix<f64>,
    c: &DMatrix<f64>,
    k: &DMatrix<f64>,
    f_check: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = xi_p.nrows();
    let kc = k * c * xi_p;
    let out = (xi_p - &kc - kc.transpose()) * cfg.innovation_weight()
        + k * f_check * k.transpose()
        + perturbation_term(perts, f_check, n);
    symmetrize(&out)
}

/// Bounds and gain of one cell. Boundary cells carry the initial covariance and no gain.
#[derive(Debug, Clone, PartialEq)]
pub struct CellBound {
    pub depth: usize,
    /// Filter step `tau = N + 1 - depth`.
    pub step: usize,
    pub c: DMatrix<f64>,
    pub xi_p: DMatrix<f64>,
    pub xi_u: DMatrix<f64>,
    pub theta: Option<DMatrix<f64>>,
    pub f_check: Option<DMatrix<f64>>,
    pub gain: Option<DMatrix<f64>>,
}

/// Gains and bounds over the whole grid, shared by every Monte Carlo trial.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSchedule {
    pub horizon: usize,
    pub partition: RegionPartition,
    pub xbar: Grid<DMatrix<f64>>,
    /// Per channel, diagonal of the mean triggering-error bound at each receipt cell.
    pub delta: Vec<Grid<Option<DVector<f64>>>>,
    pub cells: Grid<CellBound>,
}

impl BoundSchedule {
    /// Cells in processing order: `S_0` row-major, then `S_1`, and so on.
    pub fn order(&self) -> Vec<GridIndex> {
        processing_order(&self.partition)
    }

    pub fn cell(&self, idx: GridIndex) -> &CellBound {
        &self.cells[idx]
    }
}

pub fn processing_order(partition: &RegionPartition) -> Vec<GridIndex> {
    (0..partition.depth_count()).flat_map(|tau| partition.s_region(tau)).collect()
}

/// Second-moment bounds over `[0, horizon]^2`.
pub fn second_moment_bounds(cfg: &FilterConfig, model: &SystemModel, horizon: usize) -> Result<Grid<DMatrix<f64>>> {
    let n = model.state_dim;
    let mut xbar = Grid::square_from_fn(horizon, |_| DMatrix::zeros(n, n));
    for idx in crate::grid::row_major(horizon + 1, horizon + 1) {
        xbar[idx] = match (idx.left(), idx.up()) {
            (Some(l), Some(u)) if !idx.is_boundary() => second_moment_bound_step(cfg, model, &xbar[l], &xbar[u], idx)?,
            _ => symmetrize(model.boundary_second_moment(idx)),
        };
    }
    Ok(xbar)
}

/// Mean triggering-error bounds of every channel from the second-moment bounds.
pub fn trigger_error_bounds(
    model: &SystemModel,
    etm: &EtmConfig,
    xbar: &Grid<DMatrix<f64>>,
) -> Vec<Grid<Option<DVector<f64>>>> {
    (0..model.channel_count())
        .map(|s| {
            let (d, e) = model.delays.get(s);
            let y2 = xbar.map(|idx, _| {
                idx.delayed(d, e).map(|src| {
                    let c = model.output(s, idx);
                    (c * &xbar[src] * c.transpose() + model.meas_cov(s, idx)).diagonal()
                })
            });
            mean_trigger_error_bound(etm, s, &y2)
        })
        .collect()
}

/// Runs all bound recursions at the current cell `(horizon, horizon)`.
pub fn compute_schedule(
    model: &SystemModel,
    etm: &EtmConfig,
    codec: &CodecConfig,
    cfg: &FilterConfig,
    horizon: usize,
) -> Result<BoundSchedule> {
    let partition = partition_regions(&model.delays, horizon, horizon)?;
    let xbar = second_moment_bounds(cfg, model, horizon)?;
    let delta = trigger_error_bounds(model, etm, &xbar);
    let steps = model.channel_count();
    let m = model.meas_dim;
    let noises: Vec<_> = (0..steps).map(|d| StackedNoise::new(codec, d, m)).collect();

    let mut slots: Grid<Option<CellBound>> = Grid::square_from_fn(horizon, |_| None);
    for idx in processing_order(&partition) {
        let depth = partition.state_depth[idx];
        let step = steps - depth;
        let (c, r) = stacked_model(model, depth, idx, horizon)?;
        let bound = match (idx.left(), idx.up()) {
            (Some(l), Some(u)) if !idx.is_boundary() => {
                let prior = |at: GridIndex| {
                    slots[at]
                        .as_ref()
                        .map(|b| &b.xi_u)
                        .ok_or_else(|| Error::Invariant(format!("{at} processed after its successor {idx}")))
                };
                let xi_p = bound_predict(cfg, model, prior(l)?, prior(u)?, idx)?;
                let parts = stack_sources(&model.delays, depth, idx)
                    .into_iter()
                    .map(|(s, at)| {
                        delta[s][at]
                            .clone()
                            .ok_or_else(|| Error::Data(format!("no trigger bound for channel {s} at {at}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let delta_stack = vstack_vectors(&parts);
                let inputs = InnovationInputs {
                    c: &c,
                    r: &r,
                    noise: &noises[depth],
                    delta: &delta_stack,
                };
                let (theta, f_check) = innovation_stats(cfg, inputs, &xi_p, &xbar[idx])?;
                let k = gain(cfg, &xi_p, &c, &f_check)?;
                let xi_u = bound_update(cfg, cfg.perturbations_for(step), &xi_p, &k, &f_check)?;
                CellBound {
                    depth,
                    step,
                    c,
                    xi_p,
                    xi_u,
                    theta: Some(theta),
                    f_check: Some(f_check),
                    gain: Some(k),
                }
            }
            _ => {
                let cov = symmetrize(&model.boundary_cov(idx));
                CellBound {
                    depth,
                    step,
                    c,
                    xi_p: cov.clone(),
                    xi_u: cov,
                    theta: None,
                    f_check: None,
                    gain: None,
                }
            }
        };
        slots[idx] = Some(bound);
    }
    let cells = slots.map(|_, b| b.clone().expect("every cell lies in one region"));
    Ok(BoundSchedule {
        horizon,
        partition,
        xbar,
        delta,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{BoundaryStats, Channel, Delays, DirectionTerms, Matrix, Nonlinearity, Profile, ShiftVarying, Vector};

    fn cfg(a: f64, b: f64) -> FilterConfig {
        FilterConfig {
            a_check: [a, a],
            b_check: [b; 6],
            perturbations: Vec::new(),
        }
    }

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn scalar_model(a: f64, q: f64) -> SystemModel {
        let terms = DirectionTerms {
            linear: ShiftVarying::Constant(Matrix(scalar(a))),
            lipschitz: ShiftVarying::Constant(0.0),
            noise_gain: ShiftVarying::Constant(Matrix(scalar(1.0))),
        };
        SystemModel {
            state_dim: 1,
            meas_dim: 1,
            nonlinearity: Nonlinearity::Linear,
            horizontal: terms.clone(),
            vertical: terms,
            process_cov: ShiftVarying::Constant(Matrix(scalar(q))),
            channels: vec![Channel {
                output: ShiftVarying::Constant(Matrix(scalar(1.0))),
                noise_cov: ShiftVarying::Constant(Matrix(scalar(1.0))),
            }],
            delays: Delays(vec![(0, 0)]),
            boundary: BoundaryStats {
                mean_row: Profile::Constant(Vector(DVector::zeros(1))),
                mean_col: Profile::Constant(Vector(DVector::zeros(1))),
                second_moment_row: Profile::Constant(Matrix(scalar(1.0))),
                second_moment_col: Profile::Constant(Matrix(scalar(1.0))),
            },
            allow_degenerate_noise: true,
        }
    }

    #[test]
    fn scalar_second_moment_step() {
        let model = scalar_model(0.5, 1.0);
        let x = second_moment_bound_step(&cfg(1.0, 1.0), &model, &scalar(1.0), &scalar(1.0), GridIndex::new(1, 1)).unwrap();
        assert!((x[(0, 0)] - 4.0).abs() < 1e-12);
        let zero = scalar_model(0.0, 0.0);
        let x = second_moment_bound_step(&cfg(1.0, 1.0), &zero, &scalar(1.0), &scalar(1.0), GridIndex::new(1, 1)).unwrap();
        assert_eq!(x[(0, 0)], 0.0);
    }

    #[test]
    fn zero_dynamics_predict_is_noise_only() {
        let model = scalar_model(0.0, 0.7);
        let p = bound_predict(&cfg(1.0, 2.0), &model, &scalar(5.0), &scalar(3.0), GridIndex::new(2, 2)).unwrap();
        assert!((p[(0, 0)] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn non_psd_input_rejected() {
        let model = scalar_model(0.5, 1.0);
        let r = bound_predict(&cfg(1.0, 1.0), &model, &scalar(-1.0), &scalar(1.0), GridIndex::new(1, 1));
        assert!(matches!(r, Err(Error::Invariant(_))));
    }

    fn scalar_noise(flip: f64, trunc: f64, var: f64) -> StackedNoise {
        StackedNoise {
            flip: DVector::from_element(1, flip),
            truncation: DVector::from_element(1, trunc),
            flip_variance: DVector::from_element(1, var),
        }
    }

    #[test]
    fn innovation_hand_value() {
        let c = scalar(1.0);
        let r = scalar(1.0);
        let codec = crate::eds::ChannelCodec { range: 0.75, bits: 2, crossover: 0.1 };
        assert!((codec.step() - 0.5).abs() < 1e-15);
        let bsc = codec.flip_variance();
        let noise = scalar_noise(0.1, codec.truncation_bound(), bsc);
        let delta = DVector::from_element(1, 0.2);
        let inputs = InnovationInputs { c: &c, r: &r, noise: &noise, delta: &delta };
        let (theta, f) = innovation_stats(&cfg(1.0, 1.0), inputs, &scalar(0.5), &scalar(4.0)).unwrap();
        let expected = 3.0 * 4.0 * 0.01 * 4.0 + 0.64 * 0.0625 + 4.0 * 0.64 * 0.2 + 2.0 * 0.64 + bsc;
        assert!((theta[(0, 0)] - expected).abs() < 1e-12);
        assert!((f[(0, 0)] - expected - 1.5).abs() < 1e-12);
    }

    #[test]
    fn communication_off_leaves_inflated_noise() {
        let c = scalar(2.0);
        let r = scalar(0.3);
        let noise = scalar_noise(0.0, 0.0, 0.0);
        let delta = DVector::zeros(1);
        let inputs = InnovationInputs { c: &c, r: &r, noise: &noise, delta: &delta };
        let cf = FilterConfig { b_check: [1.0, 1.0, 0.5, 0.25, 1.0, 4.0], ..cfg(1.0, 1.0) };
        let (theta, f) = innovation_stats(&cf, inputs, &scalar(1.0), &scalar(9.0)).unwrap();
        assert!((theta[(0, 0)] - 1.25 * 0.3).abs() < 1e-14);
        assert!((f[(0, 0)] - (1.25 * 0.3 + 1.75 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn scalar_gain() {
        let k = gain(&cfg(1.0, 1.0), &scalar(1.0), &scalar(1.0), &scalar(6.0)).unwrap();
        assert!((k[(0, 0)] - 0.5).abs() < 1e-15);
        let k = gain(&cfg(1.0, 1.0), &scalar(0.0), &scalar(1.0), &scalar(6.0)).unwrap();
        assert_eq!(k[(0, 0)], 0.0);
        assert!(matches!(gain(&cfg(1.0, 1.0), &scalar(1.0), &scalar(1.0), &scalar(0.0)), Err(Error::Singular(_))));
    }

    #[test]
    fn update_matches_general_form_at_optimum() {
        let cf = FilterConfig { b_check: [1.0, 1.0, 0.3, 0.7, 2.0, 0.5], ..cfg(1.0, 1.0) };
        let xi_p = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 1.0]);
        let f = symmetrize(&(DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 0.3]) + &c * &xi_p * c.transpose() * cf.innovation_weight()));
        let k = gain(&cf, &xi_p, &c, &f).unwrap();
        let a = bound_update(&cf, [], &xi_p, &k, &f).unwrap();
        let b = general_form(&cf, [], &xi_p, &c, &k, &f);
        assert!((a - b).amax() < 1e-10);
        assert_eq!(bound_update(&cf, [], &DMatrix::zeros(2, 2), &DMatrix::zeros(2, 2), &f).unwrap(), DMatrix::zeros(2, 2));
        let pert = Perturbation::new(1, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]), 0.1);
        let with = bound_update(&cf, [&pert], &xi_p, &k, &f).unwrap();
        assert!(crate::linalg::min_eigenvalue(&(with - bound_update(&cf, [], &xi_p, &k, &f).unwrap())) >= 0.0);
    }
}
