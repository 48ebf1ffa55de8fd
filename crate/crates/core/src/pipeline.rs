//! One trial end to end (plant, trigger, channel, reconstruction, filter) and the Monte Carlo
//! aggregation over many trials.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::eds::{decode, encode, transmit_bsc, CodecConfig, Codeword};
use crate::error::Result;
use crate::etm::{run_etm, EtmState};
use crate::filter::{compute_schedule, run_filter, BoundSchedule, FilterRun};
use crate::grid::{row_major, Grid, GridIndex};
use crate::linalg::min_eigenvalue;
use crate::reconstruct::reconstruct_sequence;
use crate::rng::trial_rng;
use crate::scenario::ScenarioConfig;
use crate::system::{simulate_with, NoisePlan, SystemModel, Trajectory};

/// Trials per parallel work unit. Fixed so that the summation order, and hence every
/// floating-point result, does not depend on the thread count.
const BLOCK: usize = 64;

/// One encoded component sent at a triggering instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub idx: GridIndex,
    pub channel: usize,
    pub component: usize,
    pub sent: Codeword,
    pub received: Codeword,
    pub clamped: bool,
}

/// Receiver side of every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Communication {
    /// Decoded value held by the receiver wherever the channel reports; zero before the first
    /// transmission.
    pub decoded: Vec<Grid<Option<DVector<f64>>>>,
    pub transmissions: Vec<Transmission>,
    pub clamped: usize,
}

/// Encodes, transmits and decodes every channel at each triggering instant; the receiver
/// holds the last decoded value in between.
pub fn communicate<R: Rng + ?Sized>(
    model: &SystemModel,
    codec: &CodecConfig,
    traj: &Trajectory,
    etm: &EtmState,
    rng: &mut R,
) -> Result<Communication> {
    let m = model.meas_dim;
    let size = traj.horizon + 1;
    let mut held: Vec<DVector<f64>> = vec![DVector::zeros(m); model.channel_count()];
    let mut decoded: Vec<Grid<Option<DVector<f64>>>> =
        (0..model.channel_count()).map(|_| Grid::filled(size, size, None)).collect();
    let mut transmissions = Vec::new();
    let mut clamped = 0;
    for idx in row_major(size, size) {
        for (s, slot) in held.iter_mut().enumerate() {
            let Some(y) = traj.measurement(s, idx) else { continue };
            if etm.triggered[idx] {
                let ch = codec.channel(s);
                for g in 0..m {
                    let enc = encode(ch, y[g], rng)?;
                    let received = transmit_bsc(ch, &enc.code, rng);
                    slot[g] = decode(ch, &received)?;
                    clamped += usize::from(enc.clamped);
                    transmissions.push(Transmission {
                        idx,
                        channel: s,
                        component: g,
                        sent: enc.code,
                        received,
                        clamped: enc.clamped,
                    });
                }
            }
            decoded[s][idx] = Some(slot.clone());
        }
    }
    Ok(Communication {
        decoded,
        transmissions,
        clamped,
    })
}

/// Per-scenario state shared read-only by all trials.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: ScenarioConfig,
    pub plan: NoisePlan,
    pub schedule: BoundSchedule,
}

impl Prepared {
    pub fn new(scenario: ScenarioConfig) -> Result<Self> {
        scenario.validate()?;
        let plan = NoisePlan::new(&scenario.model, scenario.horizon)?;
        let schedule = compute_schedule(
            &scenario.model,
            &scenario.etm,
            &scenario.codec,
            &scenario.filter,
            scenario.horizon,
        )?;
        Ok(Prepared {
            scenario,
            plan,
            schedule,
        })
    }

    pub fn cell_count(&self) -> usize {
        (self.scenario.horizon + 1).pow(2)
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub trial: usize,
    pub trajectory: Trajectory,
    pub etm: EtmState,
    pub communication: Communication,
    pub filter: FilterRun,
}

impl TrialOutput {
    pub fn error(&self, idx: GridIndex) -> DVector<f64> {
        &self.trajectory.states[idx] - &self.filter.updated[idx]
    }
}

pub fn run_trial(prep: &Prepared, trial: usize) -> Result<TrialOutput> {
    let sc = &prep.scenario;
    let mut rng = trial_rng(sc.seed, trial as u64);
    let trajectory = simulate_with(&sc.model, &prep.plan, &mut rng)?;
    let etm = run_etm(&sc.etm, &trajectory, sc.model.meas_dim)?;
    let communication = communicate(&sc.model, &sc.codec, &trajectory, &etm, &mut rng)?;
    let stacked = reconstruct_sequence(
        |c, at| communication.decoded[c].get(at).cloned().flatten(),
        &prep.schedule.partition,
    )?;
    let filter = run_filter(&sc.model, &sc.filter, &prep.schedule, &stacked, &mut rng)?;
    Ok(TrialOutput {
        trial,
        trajectory,
        etm,
        communication,
        filter,
    })
}

/// Running sums over trials.
#[derive(Debug, Clone, PartialEq)]
struct Sums {
    trials: usize,
    error: Grid<DVector<f64>>,
    error_outer: Grid<DMatrix<f64>>,
    state_outer: Grid<DMatrix<f64>>,
    triggers: usize,
    clamped: usize,
}

impl Sums {
    fn zero(horizon: usize, n: usize) -> Self {
        Sums {
            trials: 0,
            error: Grid::square_from_fn(horizon, |_| DVector::zeros(n)),
            error_outer: Grid::square_from_fn(horizon, |_| DMatrix::zeros(n, n)),
            state_outer: Grid::square_from_fn(horizon, |_| DMatrix::zeros(n, n)),
            triggers: 0,
            clamped: 0,
        }
    }

    fn add_trial(&mut self, out: &TrialOutput) {
        self.trials += 1;
        self.triggers += out.etm.trigger_count();
        self.clamped += out.communication.clamped;
        for idx in out.trajectory.states.indices() {
            let e = out.error(idx);
            let x = &out.trajectory.states[idx];
            self.error_outer[idx] += &e * e.transpose();
            self.state_outer[idx] += x * x.transpose();
            self.error[idx] += e;
        }
    }

    fn merge(&mut self, other: Sums) {
        self.trials += other.trials;
        self.triggers += other.triggers;
        self.clamped += other.clamped;
        for idx in other.error.indices() {
            self.error[idx] += &other.error[idx];
            self.error_outer[idx] += &other.error_outer[idx];
            self.state_outer[idx] += &other.state_outer[idx];
        }
    }
}

/// Empirical statistics of a Monte Carlo run.
#[derive(Debug, Clone)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub mean_error: Grid<DVector<f64>>,
    /// `(1/T) sum e e^T` of the updated estimation error.
    pub error_second_moment: Grid<DMatrix<f64>>,
    /// `(1/T) sum x x^T`.
    pub state_second_moment: Grid<DMatrix<f64>>,
    /// Triggering instants per cell, averaged over trials.
    pub trigger_rate: f64,
    pub clamped: usize,
    /// Full outputs of the first `output.export_trials` trials.
    pub exported: Vec<TrialOutput>,
}

pub fn run_monte_carlo(prep: &Prepared, trials: usize) -> Result<MonteCarloSummary> {
    let sc = &prep.scenario;
    let n = sc.model.state_dim;
    let export = sc.output.export_trials.min(trials);
    let blocks: Vec<(usize, usize)> = (0..trials)
        .step_by(BLOCK)
        .map(|start| (start, (start + BLOCK).min(trials)))
        .collect();
    let parts = blocks
        .par_iter()
        .map(|&(start, end)| -> Result<(Sums, Vec<TrialOutput>)> {
            let mut sums = Sums::zero(sc.horizon, n);
            let mut kept = Vec::new();
            for trial in start..end {
                let out = run_trial(prep, trial)?;
                sums.add_trial(&out);
                if trial < export {
                    kept.push(out);
                }
            }
            Ok((sums, kept))
        })
        .collect::<Vec<_>>();
    let mut total = Sums::zero(sc.horizon, n);
    let mut exported = Vec::new();
    for part in parts {
        let (sums, kept) = part?;
        total.merge(sums);
        exported.extend(kept);
    }
    let t = total.trials as f64;
    Ok(MonteCarloSummary {
        trials: total.trials,
        mean_error: total.error.map(|_, v| v / t),
        error_second_moment: total.error_outer.map(|_, m| m / t),
        state_second_moment: total.state_outer.map(|_, m| m / t),
        trigger_rate: total.triggers as f64 / (t * prep.cell_count() as f64),
        clamped: total.clamped,
        exported,
    })
}

/// Worst PSD-dominance margin of a bound over an empirical matrix, relative to the bound's trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dominance {
    /// `min_cells lambda_min(bound - empirical) / tr(bound)`; cells with zero trace count as
    /// `lambda_min` itself.
    pub worst_relative_margin: f64,
    pub worst_cell: GridIndex,
    pub cells_failing: usize,
}

impl Dominance {
    pub fn passes(&self) -> bool {
        self.cells_failing == 0
    }
}

/// Compares `bound(idx)` against `empirical(idx)` at every cell with
/// `lambda_min(bound - empirical) >= -tolerance * tr(bound)`.
pub fn dominance(
    cells: impl IntoIterator<Item = GridIndex>,
    bound: impl Fn(GridIndex) -> DMatrix<f64>,
    empirical: impl Fn(GridIndex) -> DMatrix<f64>,
    tolerance: f64,
) -> Dominance {
    let mut out = Dominance {
        worst_relative_margin: f64::INFINITY,
        worst_cell: GridIndex::new(0, 0),
        cells_failing: 0,
    };
    for idx in cells {
        let b = bound(idx);
        let lmin = min_eigenvalue(&(&b - empirical(idx)));
        let tr = b.trace();
        if lmin < -tolerance * tr {
            out.cells_failing += 1;
        }
        let rel = if tr > 0.0 { lmin / tr } else { lmin };
        if rel < out.worst_relative_margin {
            out.worst_relative_margin = rel;
            out.worst_cell = idx;
        }
    }
    out
}

/// Error-bound and second-moment dominance of a finished run over the interior cells.
///
/// Boundary cells hold the prescribed initial statistics, so bound and truth coincide there
/// and only sampling error separates them from the empirical value.
pub fn check_dominance(prep: &Prepared, mc: &MonteCarloSummary, tolerance: f64) -> (Dominance, Dominance) {
    let cells: Vec<_> = prep.schedule.cells.indices().filter(|c| !c.is_boundary()).collect();
    let err = dominance(
        cells.iter().copied(),
        |idx| prep.schedule.cell(idx).xi_u.clone(),
        |idx| mc.error_second_moment[idx].clone(),
        tolerance,
    );
    let state = dominance(
        cells,
        |idx| prep.schedule.xbar[idx].clone(),
        |idx| mc.state_second_moment[idx].clone(),
        tolerance,
    );
    (err, state)
}
