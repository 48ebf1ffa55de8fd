//! Verification routines behind the CLI commands.

use nalgebra::DMatrix;
use rand::Rng;

use crate::eds::{decode, encode, ChannelCodec, Codeword};
use crate::error::{Error, Result};
use crate::etm::{check_invariants, run_etm, EtmConfig, EtmInvariants};
use crate::filter::{compute_schedule, BoundSchedule, FilterConfig};
use crate::eds::CodecConfig;
use crate::grid::GridIndex;
use crate::linalg::{min_eigenvalue, PSD_TOLERANCE};
use crate::reconstruct::{check_partition, enumerate_delays, max_residual, partition_regions};
use crate::rng::{seeded_rng, trial_rng};
use crate::system::{simulate_with, Channel, Delays, Matrix, NoisePlan, ShiftVarying, SystemModel};

/// Empirical truncation moments `(mean(q) / step, var(q) / (step^2 / 4))` over `samples`
/// uniform draws on `[-Z, Z]`.
pub fn truncation_moments(codec: &ChannelCodec, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = seeded_rng(seed);
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..samples {
        let y = rng.random_range(-codec.range..=codec.range);
        let q = encode(codec, y, &mut rng)?.level - y;
        sum += q;
        sq += q * q;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = sq / n - mean * mean;
    Ok((mean / codec.step(), var / codec.truncation_bound()))
}

/// Largest deviation of the enumerated decoded mean and variance from `(1 - 2p) level` and the
/// closed-form flip variance, over every level. Exhaustive in the `2^L` flip patterns.
pub fn bsc_enumeration_error(codec: &ChannelCodec) -> Result<(f64, f64)> {
    if codec.bits > 12 {
        return Err(Error::Input(format!("enumeration limited to 12 bits, got {}", codec.bits)));
    }
    let len = codec.bits;
    let words = codec.level_count();
    let p = codec.crossover;
    let prob: Vec<f64> = (0..words)
        .map(|mask| {
            let ones = mask.count_ones() as i32;
            p.powi(ones) * (1.0 - p).powi(len as i32 - ones)
        })
        .collect();
    let target_var = codec.flip_variance();
    let (mut worst_mean, mut worst_var) = (0.0f64, 0.0f64);
    for c in 0..words {
        let level = codec.level(c);
        let target_mean = (1.0 - 2.0 * p) * level;
        let (mut mean, mut var) = (0.0, 0.0);
        for (mask, &w) in prob.iter().enumerate() {
            let d = decode(codec, &Codeword::from_index(c ^ mask as u64, len))?;
            mean += w * d;
            var += w * (d - target_mean) * (d - target_mean);
        }
        worst_mean = worst_mean.max((mean - target_mean).abs());
        worst_var = worst_var.max((var - target_var).abs());
    }
    Ok((worst_mean, worst_var))
}

/// Worst invariants of the event mechanism over `runs` independent trajectories.
pub fn etm_invariants(model: &SystemModel, etm: &EtmConfig, horizon: usize, runs: usize, seed: u64) -> Result<EtmInvariants> {
    let plan = NoisePlan::new(model, horizon)?;
    let mut worst = EtmInvariants {
        min_xi: f64::INFINITY,
        min_check_gap: f64::INFINITY,
        max_bound_excess: f64::NEG_INFINITY,
    };
    for r in 0..runs {
        let mut rng = trial_rng(seed, r as u64);
        let traj = simulate_with(model, &plan, &mut rng)?;
        let state = run_etm(etm, &traj, model.meas_dim)?;
        let inv = check_invariants(etm, &traj, &state);
        worst.min_xi = worst.min_xi.min(inv.min_xi);
        worst.min_check_gap = worst.min_check_gap.min(inv.min_check_gap);
        worst.max_bound_excess = worst.max_bound_excess.max(inv.max_bound_excess);
    }
    Ok(worst)
}

/// Copy of `model` with measurement noise switched off.
pub fn noiseless(model: &SystemModel) -> SystemModel {
    let m = model.meas_dim;
    let mut out = model.clone();
    for ch in &mut out.channels {
        ch.noise_cov = ShiftVarying::Constant(Matrix(DMatrix::zeros(m, m)));
    }
    out.allow_degenerate_noise = true;
    out
}

/// Copy of `model` with the given delays; channel `s` reuses the output of channel
/// `s mod channel_count`.
pub fn with_delays(model: &SystemModel, delays: &Delays) -> SystemModel {
    let mut out = model.clone();
    out.channels = (0..delays.len())
        .map(|s| model.channels[s % model.channel_count()].clone())
        .collect::<Vec<Channel>>();
    out.delays = delays.clone();
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructOutcome {
    pub tuples: usize,
    pub partition_failures: usize,
    pub bijection_failures: usize,
    pub max_residual: f64,
}

impl ReconstructOutcome {
    pub fn passed(&self) -> bool {
        self.partition_failures == 0 && self.bijection_failures == 0 && self.max_residual == 0.0
    }
}

/// Region, bijection and zero-noise residual checks for every admissible delay list with
/// delays up to `max_delay` and at most `max_channels` channels, on `[0, horizon]^2`.
pub fn reconstruct_exhaustive(
    base: &SystemModel,
    max_delay: usize,
    max_channels: usize,
    horizon: usize,
    seed: u64,
) -> Result<ReconstructOutcome> {
    let base = noiseless(base);
    let mut out = ReconstructOutcome {
        tuples: 0,
        partition_failures: 0,
        bijection_failures: 0,
        max_residual: 0.0,
    };
    for (t, delays) in enumerate_delays(max_delay, max_channels).into_iter().enumerate() {
        out.tuples += 1;
        let partition = partition_regions(&delays, horizon, horizon)?;
        let check = check_partition(&partition);
        if !(check.s_disjoint_cover && check.s_matches_depth && check.t_disjoint_cover && check.t_matches_depth) {
            out.partition_failures += 1;
        }
        if !check.bijection {
            out.bijection_failures += 1;
        }
        let model = with_delays(&base, &delays);
        let plan = NoisePlan::new(&model, horizon)?;
        let traj = simulate_with(&model, &plan, &mut trial_rng(seed, t as u64))?;
        out.max_residual = out.max_residual.max(max_residual(&model, &traj, &partition)?);
    }
    Ok(out)
}

/// Rejects trigger parameter pairs that are not ordered so that every error bound of the
/// first set is below that of the second.
pub fn check_trigger_ordering(first: &EtmConfig, second: &EtmConfig) -> Result<()> {
    if first.channels.len() != second.channels.len() {
        return Err(Error::config("monotonicity.channels", "channel counts differ"));
    }
    for (s, (a, b)) in first.channels.iter().zip(&second.channels).enumerate() {
        let field = format!("monotonicity.channels[{s}]");
        let comps = a.sigma.len();
        let ordered = (0..comps).all(|g| a.sigma[g] <= b.sigma[g] && a.rho[g] >= b.rho[g])
            && a.varsigma >= b.varsigma
            && a.alpha1 <= b.alpha1
            && a.alpha2 <= b.alpha2
            && a.xi0 <= b.xi0;
        if !ordered {
            return Err(Error::config(
                field,
                "need sigma and alpha and xi0 no larger, rho and varsigma no smaller than the alternative set",
            ));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityOutcome {
    /// `max (delta^1 - delta^2)` over channels, components and receipt cells.
    pub delta_excess: f64,
    /// `min lambda_min(Xi_u^2 - Xi_u^1) / tr(Xi_u^2)` over the cells of `S_0`.
    pub worst_margin: f64,
    pub worst_cell: GridIndex,
    pub cells: usize,
    /// Both schedules agree exactly on `S_0`.
    pub identical: bool,
}

impl MonotonicityOutcome {
    pub fn passed(&self) -> bool {
        self.delta_excess <= 0.0 && self.worst_margin >= -PSD_TOLERANCE
    }
}

pub fn monotonicity(
    model: &SystemModel,
    first: &EtmConfig,
    second: &EtmConfig,
    codec: &CodecConfig,
    filter: &FilterConfig,
    horizon: usize,
) -> Result<MonotonicityOutcome> {
    check_trigger_ordering(first, second)?;
    let a = compute_schedule(model, first, codec, filter, horizon)?;
    let b = compute_schedule(model, second, codec, filter, horizon)?;
    Ok(compare_schedules(&a, &b))
}

pub fn compare_schedules(a: &BoundSchedule, b: &BoundSchedule) -> MonotonicityOutcome {
    let mut delta_excess = f64::NEG_INFINITY;
    for (da, db) in a.delta.iter().zip(&b.delta) {
        for (idx, va) in da.iter() {
            if let (Some(va), Some(vb)) = (va, &db[idx]) {
                delta_excess = delta_excess.max((va - vb).max());
            }
        }
    }
    let cells = a.partition.s_region(0);
    let mut out = MonotonicityOutcome {
        delta_excess,
        worst_margin: f64::INFINITY,
        worst_cell: GridIndex::new(0, 0),
        cells: cells.len(),
        identical: true,
    };
    for idx in cells {
        let (xa, xb) = (&a.cell(idx).xi_u, &b.cell(idx).xi_u);
        out.identical &= xa == xb;
        let lmin = min_eigenvalue(&(xb - xa));
        let tr = xb.trace();
        let rel = if tr > 0.0 { lmin / tr } else { lmin };
        if rel < out.worst_margin {
            out.worst_margin = rel;
            out.worst_cell = idx;
        }
    }
    out
}

/// `max |y - C x|` over the reconstructed map of one noiseless trajectory of `model`.
pub fn max_residual_noiseless(model: &SystemModel, horizon: usize, seed: u64) -> Result<f64> {
    let model = noiseless(model);
    let partition = partition_regions(&model.delays, horizon, horizon)?;
    let plan = NoisePlan::new(&model, horizon)?;
    let traj = simulate_with(&model, &plan, &mut seeded_rng(seed))?;
    max_residual(&model, &traj, &partition)
}
