//! Dynamic event-triggered transmission shared by all channels.
//!
//! Every channel `s` and component `g` carries an internal variable `xi` and a computable
//! over-approximation `xi_check`. A cell becomes a triggering instant when any event generator
//! `varsigma * (sigma y^2 - rho e^2) + xi` is non-positive; all channels then refresh their
//! held value, otherwise the last transmitted value is held.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridIndex};
use crate::system::Trajectory;

/// Triggering parameters of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtmChannel {
    /// Weight `varsigma` of the generator term.
    pub varsigma: f64,
    /// Per-component relative threshold `sigma` in `(0, 1)`.
    pub sigma: Vec<f64>,
    /// Per-component error weight `rho > 0`.
    pub rho: Vec<f64>,
    /// Horizontal decay of the internal variable.
    pub alpha1: f64,
    /// Vertical decay of the internal variable.
    pub alpha2: f64,
    /// Boundary value of the internal variable.
    #[serde(default)]
    pub xi0: f64,
}

impl EtmChannel {
    /// `sigma y^2 - rho (y - y_held)^2`.
    pub fn generator(&self, component: usize, y_cur: f64, y_held: f64) -> f64 {
        let e = y_cur - y_held;
        self.sigma[component] * y_cur * y_cur - self.rho[component] * e * e
    }

    /// Whether the non-negativity conditions on the internal variable hold: every
    /// `rho^g` and `varsigma` at least `1 / alpha1` and `1 / alpha2`.
    pub fn nonnegativity_conditions_hold(&self) -> bool {
        let floor = (1.0 / self.alpha1).max(1.0 / self.alpha2);
        self.rho.iter().all(|&r| r >= floor) && self.varsigma >= floor
    }

    fn check_ranges(&self, field: &str, components: usize) -> Result<()> {
        if self.sigma.len() != components || self.rho.len() != components {
            return Err(Error::config(
                field,
                format!("sigma and rho need {components} entries each"),
            ));
        }
        if !(self.varsigma.is_finite() && self.varsigma > 0.0) {
            return Err(Error::config(format!("{field}.varsigma"), "must be finite and > 0"));
        }
        for (name, a) in [("alpha1", self.alpha1), ("alpha2", self.alpha2)] {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::config(format!("{field}.{name}"), "must lie in (0, 1)"));
            }
        }
        if self.sigma.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
            return Err(Error::config(format!("{field}.sigma"), "entries must lie in (0, 1)"));
        }
        if self.rho.iter().any(|&r| !(r.is_finite() && r > 0.0)) {
            return Err(Error::config(format!("{field}.rho"), "entries must be finite and > 0"));
        }
        if !(self.xi0.is_finite() && self.xi0 >= 0.0) {
            return Err(Error::config(format!("{field}.xi0"), "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TriggerMode {
    /// Dynamic event generator.
    #[default]
    Dynamic,
    /// Transmit at every cell; baseline for comparison.
    Always,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtmConfig {
    #[serde(default)]
    pub mode: TriggerMode,
    pub channels: Vec<EtmChannel>,
    /// Accept parameters that break the non-negativity conditions. Checks that rely on them
    /// are then skipped.
    #[serde(default)]
    pub allow_invalid: bool,
}

impl EtmConfig {
    pub fn channel(&self, s: usize) -> &EtmChannel {
        &self.channels[s]
    }

    pub fn nonnegativity_conditions_hold(&self) -> bool {
        self.channels.iter().all(EtmChannel::nonnegativity_conditions_hold)
    }

    pub fn validate(&self, channel_count: usize, components: usize) -> Result<()> {
        if self.channels.len() != channel_count {
            return Err(Error::config(
                "etm.channels",
                format!("{} entries for {channel_count} channels", self.channels.len()),
            ));
        }
        for (s, ch) in self.channels.iter().enumerate() {
            let field = format!("etm.channels[{s}]");
            ch.check_ranges(&field, components)?;
            if !self.allow_invalid && !ch.nonnegativity_conditions_hold() {
                return Err(Error::config(
                    field,
                    "rho and varsigma must be at least 1/alpha1 and 1/alpha2 \
                     (set etm.allow_invalid = true to override)",
                ));
            }
        }
        Ok(())
    }
}

/// `varsigma (sigma y^2 - rho (y - y_held)^2) + xi`.
pub fn event_fn(ch: &EtmChannel, component: usize, y_cur: f64, y_held: f64, xi: f64) -> f64 {
    ch.varsigma * ch.generator(component, y_cur, y_held) + xi
}

/// Internal-variable recursion `alpha1 xi_left + alpha2 xi_up + h_left + h_up`.
pub fn update_xi(ch: &EtmChannel, xi_left: f64, xi_up: f64, h_left: f64, h_up: f64) -> f64 {
    ch.alpha1 * xi_left + ch.alpha2 * xi_up + h_left + h_up
}

/// Auxiliary-variable recursion `alpha1 xc_left + alpha2 xc_up + sigma (y_left^2 + y_up^2)`,
/// or `anchor` on the row and column of the latest triggering instant.
pub fn update_xi_check(
    ch: &EtmChannel,
    component: usize,
    check_left: f64,
    check_up: f64,
    y_left: f64,
    y_up: f64,
    anchor: Option<f64>,
) -> f64 {
    if let Some(xi) = anchor {
        return xi;
    }
    let s = ch.sigma[component];
    ch.alpha1 * check_left + ch.alpha2 * check_up + s * y_left * y_left + s * y_up * y_up
}

/// Local bound on the triggering-error covariance,
/// `diag_g(sigma/rho y_g^2 + xi_check_g / (varsigma rho))`.
pub fn trigger_error_bound(ch: &EtmChannel, y: &DVector<f64>, xi_check: &[f64]) -> Result<DMatrix<f64>> {
    if xi_check.len() != y.len() || ch.sigma.len() != y.len() {
        return Err(Error::Input("component count mismatch in trigger error bound".into()));
    }
    if let Some(v) = xi_check.iter().find(|v| **v < 0.0 || !v.is_finite()) {
        return Err(Error::Invariant(format!("auxiliary variable is negative ({v})")));
    }
    let diag = DVector::from_fn(y.len(), |g, _| {
        ch.sigma[g] / ch.rho[g] * y[g] * y[g] + xi_check[g] / (ch.varsigma * ch.rho[g])
    });
    Ok(DMatrix::from_diagonal(&diag))
}

/// A component whose generator was non-positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Firing {
    pub idx: GridIndex,
    pub channel: usize,
    pub component: usize,
}

/// Event-trigger state for one pass over the grid.
#[derive(Debug, Clone)]
pub struct EtmState {
    components: usize,
    next: Option<GridIndex>,
    horizon: usize,
    /// `xi[s][g]`.
    pub xi: Vec<Vec<Grid<f64>>>,
    /// `xi_check[s][g]`.
    pub xi_check: Vec<Vec<Grid<f64>>>,
    /// Generator value `h` after the trigger decision at each cell (0 where a channel is silent).
    pub generator: Vec<Vec<Grid<f64>>>,
    pub last_trigger: Option<GridIndex>,
    /// Value currently held by each channel's zero-order hold.
    pub held_now: Vec<Option<DVector<f64>>>,
    /// Held measurement `y_check_s(i, j)` wherever channel `s` reports.
    pub held: Vec<Grid<Option<DVector<f64>>>>,
    pub triggered: Grid<bool>,
    /// Triggering instants in scan order, starting with `(0, 0)`.
    pub trigger_log: Vec<GridIndex>,
    pub firings: Vec<Firing>,
}

impl EtmState {
    pub fn new(cfg: &EtmConfig, horizon: usize, components: usize) -> Self {
        let per_component = |v: f64| -> Vec<Vec<Grid<f64>>> {
            cfg.channels
                .iter()
                .map(|_| (0..components).map(|_| Grid::filled(horizon + 1, horizon + 1, v)).collect())
                .collect()
        };
        EtmState {
            components,
            next: Some(GridIndex::new(0, 0)),
            horizon,
            xi: per_component(0.0),
            xi_check: per_component(0.0),
            generator: per_component(0.0),
            last_trigger: None,
            held_now: vec![None; cfg.channels.len()],
            held: cfg
                .channels
                .iter()
                .map(|_| Grid::filled(horizon + 1, horizon + 1, None))
                .collect(),
            triggered: Grid::filled(horizon + 1, horizon + 1, false),
            trigger_log: Vec::new(),
            firings: Vec::new(),
        }
    }

    pub fn trigger_count(&self) -> usize {
        self.trigger_log.len()
    }

    /// Held measurement of channel `s` at `idx`, if the channel reports there.
    pub fn held_at(&self, s: usize, idx: GridIndex) -> Option<&DVector<f64>> {
        self.held[s].get(idx).and_then(|v| v.as_ref())
    }

    /// `xi_check` components of channel `s` at `idx`.
    pub fn xi_check_at(&self, s: usize, idx: GridIndex) -> Vec<f64> {
        self.xi_check[s].iter().map(|g| g[idx]).collect()
    }

    fn advance(&mut self, idx: GridIndex) {
        let mut n = GridIndex::new(idx.i, idx.j + 1);
        if n.j > self.horizon {
            n = GridIndex::new(idx.i + 1, 0);
        }
        self.next = (n.i <= self.horizon).then_some(n);
    }
}

/// Outcome of scanning one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutcome {
    pub triggered: bool,
    /// Held value per channel after the decision (`None` for channels silent at this cell).
    pub held: Vec<Option<DVector<f64>>>,
}

/// Processes cell `idx`; cells must be visited in row-major order starting at `(0, 0)`.
///
/// `(0, 0)` is always a triggering instant. A channel that has never transmitted holds zero.
pub fn scan_and_trigger(
    cfg: &EtmConfig,
    traj: &Trajectory,
    state: &mut EtmState,
    idx: GridIndex,
) -> Result<ScanOutcome> {
    if state.next != Some(idx) {
        return Err(Error::Invariant(format!(
            "cell {idx} scanned out of order (expected {:?})",
            state.next
        )));
    }
    let m = state.components;
    let channels = cfg.channels.len();

    for (s, ch) in cfg.channels.iter().enumerate() {
        for g in 0..m {
            state.xi[s][g][idx] = match (idx.left(), idx.up()) {
                (Some(l), Some(u)) if !idx.is_boundary() => update_xi(
                    ch,
                    state.xi[s][g][l],
                    state.xi[s][g][u],
                    state.generator[s][g][l],
                    state.generator[s][g][u],
                ),
                _ => ch.xi0,
            };
        }
    }

    let mut fire = match cfg.mode {
        TriggerMode::Always => true,
        TriggerMode::Dynamic => idx == GridIndex::new(0, 0),
    };
    if cfg.mode == TriggerMode::Dynamic {
        for (s, ch) in cfg.channels.iter().enumerate() {
            let Some(y) = traj.measurement(s, idx) else { continue };
            for g in 0..m {
                let held = state.held_now[s].as_ref().map_or(0.0, |h| h[g]);
                if event_fn(ch, g, y[g], held, state.xi[s][g][idx]) <= 0.0 {
                    fire = true;
                    state.firings.push(Firing { idx, channel: s, component: g });
                }
            }
        }
    }

    if fire {
        state.last_trigger = Some(idx);
        state.triggered[idx] = true;
        state.trigger_log.push(idx);
        for s in 0..channels {
            if let Some(y) = traj.measurement(s, idx) {
                state.held_now[s] = Some(y.clone());
            }
        }
    }

    let mut held_out = Vec::with_capacity(channels);
    for (s, ch) in cfg.channels.iter().enumerate() {
        let y = traj.measurement(s, idx);
        let held = y.map(|_| {
            state.held_now[s]
                .clone()
                .unwrap_or_else(|| DVector::zeros(m))
        });
        for g in 0..m {
            state.generator[s][g][idx] = match (y, &held) {
                (Some(y), Some(h)) => ch.generator(g, y[g], h[g]),
                _ => 0.0,
            };
        }
        state.held[s][idx] = held.clone();
        held_out.push(held);
    }

    let on_anchor = state
        .last_trigger
        .is_some_and(|t| t.i == idx.i || t.j == idx.j);
    for (s, ch) in cfg.channels.iter().enumerate() {
        for g in 0..m {
            let value = match (idx.left(), idx.up()) {
                (Some(l), Some(u)) if !idx.is_boundary() => {
                    let y_sq = |c: GridIndex| traj.measurement(s, c).map_or(0.0, |y| y[g]);
                    update_xi_check(
                        ch,
                        g,
                        state.xi_check[s][g][l],
                        state.xi_check[s][g][u],
                        y_sq(l),
                        y_sq(u),
                        on_anchor.then(|| state.xi[s][g][idx]),
                    )
                }
                _ => ch.xi0,
            };
            state.xi_check[s][g][idx] = value;
        }
    }

    state.advance(idx);
    Ok(ScanOutcome {
        triggered: fire,
        held: held_out,
    })
}

/// Runs the mechanism over the whole grid of a trajectory.
pub fn run_etm(cfg: &EtmConfig, traj: &Trajectory, components: usize) -> Result<EtmState> {
    let mut state = EtmState::new(cfg, traj.horizon, components);
    for idx in crate::grid::row_major(traj.horizon + 1, traj.horizon + 1) {
        scan_and_trigger(cfg, traj, &mut state, idx)?;
    }
    Ok(state)
}

/// Worst-case values of the three pointwise invariants over a finished pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtmInvariants {
    /// `min xi` over all channels, components and cells.
    pub min_xi: f64,
    /// `min (xi_check - xi)`.
    pub min_check_gap: f64,
    /// `max (e^2 - delta_gg)`; non-positive when the triggering-error bound holds.
    pub max_bound_excess: f64,
}

impl EtmInvariants {
    pub fn holds(&self) -> bool {
        self.min_xi >= 0.0 && self.min_check_gap >= 0.0 && self.max_bound_excess <= 0.0
    }
}

pub fn check_invariants(cfg: &EtmConfig, traj: &Trajectory, state: &EtmState) -> EtmInvariants {
    let mut out = EtmInvariants {
        min_xi: f64::INFINITY,
        min_check_gap: f64::INFINITY,
        max_bound_excess: f64::NEG_INFINITY,
    };
    for (s, ch) in cfg.channels.iter().enumerate() {
        for g in 0..state.components {
            for (idx, &xi) in state.xi[s][g].iter() {
                out.min_xi = out.min_xi.min(xi);
                out.min_check_gap = out.min_check_gap.min(state.xi_check[s][g][idx] - xi);
                if let (Some(y), Some(h)) = (traj.measurement(s, idx), state.held_at(s, idx)) {
                    let e = y[g] - h[g];
                    let bound = ch.sigma[g] / ch.rho[g] * y[g] * y[g]
                        + state.xi_check[s][g][idx] / (ch.varsigma * ch.rho[g]);
                    out.max_bound_excess = out.max_bound_excess.max(e * e - bound);
                }
            }
        }
    }
    out
}

/// Deterministic bound on `E[e_g^2]` for channel `s` at every reporting cell.
///
/// `second_moment[(i, j)]` must bound `E[y_g(i, j)^2]` componentwise where the channel reports.
/// The auxiliary variable is replaced by its reset-free recursion driven by those bounds,
/// which dominates it pathwise, so the result bounds the mean of the local error bound.
pub fn mean_trigger_error_bound(
    cfg: &EtmConfig,
    s: usize,
    second_moment: &Grid<Option<DVector<f64>>>,
) -> Grid<Option<DVector<f64>>> {
    let ch = cfg.channel(s);
    if cfg.mode == TriggerMode::Always {
        return second_moment.map(|_, v| v.as_ref().map(|v| DVector::zeros(v.len())));
    }
    let m = ch.sigma.len();
    let mut aux = Grid::filled(second_moment.rows(), second_moment.cols(), DVector::from_element(m, ch.xi0));
    let sigma = DVector::from_vec(ch.sigma.clone());
    for idx in second_moment.indices() {
        if let (Some(l), Some(u)) = (idx.left(), idx.up()) {
            let ym = |c: GridIndex| second_moment[c].clone().unwrap_or_else(|| DVector::zeros(m));
            aux[idx] = &aux[l] * ch.alpha1 + &aux[u] * ch.alpha2 + (ym(l) + ym(u)).component_mul(&sigma);
        }
    }
    second_moment.map(|idx, v| {
        v.as_ref().map(|y2| {
            DVector::from_fn(m, |g, _| {
                ch.sigma[g] / ch.rho[g] * y2[g] + aux[idx][g] / (ch.varsigma * ch.rho[g])
            })
        })
    })
}
