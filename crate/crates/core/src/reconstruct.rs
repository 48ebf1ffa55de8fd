//! Re-indexing of delayed channel outputs to state time.
//!
//! At the current cell `(i, j)` channel `c` has reported `y_c(l, k)` for every receipt cell with
//! `l >= d_c, k >= e_c`; that value refers to state `x(l - d_c, k - e_c)`. Grouping by state cell
//! gives a delay-free stacked measurement whose depth falls by one across each S-region.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridIndex};
use crate::linalg::{block_diag, vstack, vstack_vectors};
use crate::system::{Delays, SystemModel, Trajectory};

/// Rectangle `[rows.0, rows.1] x [cols.0, cols.1]`, inclusive; empty when a lower end exceeds
/// the upper one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub rows: (usize, usize),
    pub cols: (usize, usize),
}

impl Rect {
    fn new(rows: (usize, usize), cols: (usize, usize)) -> Self {
        Rect { rows, cols }
    }

    pub fn contains(&self, idx: GridIndex) -> bool {
        (self.rows.0..=self.rows.1).contains(&idx.i) && (self.cols.0..=self.cols.1).contains(&idx.j)
    }

    pub fn cells(&self) -> impl Iterator<Item = GridIndex> + '_ {
        (self.rows.0..=self.rows.1)
            .flat_map(move |l| (self.cols.0..=self.cols.1).map(move |k| GridIndex::new(l, k)))
    }
}

/// Receipt-time region of channel set `{0, ..., s}`: three rectangles around the corner
/// `(d_s, e_s)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TRegion {
    /// `d_s <= l < d_{s+1}`, `e_{s+1} <= k <= j`.
    pub plus: Rect,
    /// `d_s <= l < d_{s+1}`, `e_s <= k < e_{s+1}`.
    pub center: Rect,
    /// `d_{s+1} <= l <= i`, `e_s <= k < e_{s+1}`.
    pub minus: Rect,
}

impl TRegion {
    pub fn contains(&self, idx: GridIndex) -> bool {
        self.plus.contains(idx) || self.center.contains(idx) || self.minus.contains(idx)
    }

    pub fn cells(&self) -> impl Iterator<Item = GridIndex> + '_ {
        self.plus.cells().chain(self.center.cells()).chain(self.minus.cells())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionPartition {
    pub current: GridIndex,
    pub delays: Delays,
    /// `S_tau` as the increments `[0, i_tau] x [0, j_tau]` minus `[0, i_{tau-1}] x [0, j_{tau-1}]`.
    pub s_bounds: Vec<(usize, usize)>,
    pub t_regions: Vec<TRegion>,
    /// Number of channels beyond channel 0 that carry information about each state cell.
    pub state_depth: Grid<usize>,
    /// Number of channels beyond channel 0 that have reported at each receipt cell.
    pub receipt_depth: Grid<usize>,
}

/// `max { c : l + d_c <= i, k + e_c <= j }`.
pub fn state_depth(delays: &Delays, current: GridIndex, cell: GridIndex) -> Option<usize> {
    delays
        .iter()
        .rposition(|(d, e)| cell.i + d <= current.i && cell.j + e <= current.j)
}

/// `max { c : l >= d_c, k >= e_c }`.
pub fn receipt_depth(delays: &Delays, cell: GridIndex) -> Option<usize> {
    delays.iter().rposition(|(d, e)| cell.i >= d && cell.j >= e)
}

impl RegionPartition {
    pub fn depth_count(&self) -> usize {
        self.delays.len()
    }

    /// Region index `tau` of a state cell, with `S_0` the deepest stack.
    pub fn s_region_of(&self, cell: GridIndex) -> Option<usize> {
        self.s_bounds.iter().position(|&(i, j)| cell.i <= i && cell.j <= j)
    }

    /// Cells of `S_tau` in row-major order.
    pub fn s_region(&self, tau: usize) -> Vec<GridIndex> {
        let (i, j) = self.s_bounds[tau];
        let prev = tau.checked_sub(1).map(|t| self.s_bounds[t]);
        Rect::new((0, i), (0, j))
            .cells()
            .filter(|c| prev.is_none_or(|(pi, pj)| c.i > pi || c.j > pj))
            .collect()
    }

    /// Stack depth `N - tau` of each cell in `S_tau`.
    pub fn depth_of_region(&self, tau: usize) -> usize {
        self.depth_count() - 1 - tau
    }
}

/// Builds the S- and T-partitions at the current cell `(i, j)`.
pub fn partition_regions(delays: &Delays, i: usize, j: usize) -> Result<RegionPartition> {
    delays.validate()?;
    let (dn, en) = delays.last();
    if i < dn || j < en {
        return Err(Error::OutOfScope(format!(
            "current cell ({i}, {j}) precedes the largest delay ({dn}, {en})"
        )));
    }
    let n = delays.len() - 1;
    let s_bounds = (0..=n)
        .map(|tau| {
            let (d, e) = delays.get(n - tau);
            (i - d, j - e)
        })
        .collect();
    let t_regions = (0..=n)
        .map(|s| {
            let (d, e) = delays.get(s);
            let (dn, en) = if s < n { delays.get(s + 1) } else { (i + 1, j + 1) };
            // an empty rectangle has its lower end above its upper end; `wrapping_sub` keeps
            // the `d = 0` case from underflowing and lands at usize::MAX, which also reads empty
            let below = |x: usize| x.wrapping_sub(1);
            TRegion {
                plus: if s < n { Rect::new((d, below(dn)), (en, j)) } else { Rect::new((1, 0), (1, 0)) },
                center: Rect::new((d, below(dn).min(i)), (e, below(en).min(j))),
                minus: if s < n { Rect::new((dn, i), (e, below(en))) } else { Rect::new((1, 0), (1, 0)) },
            }
        })
        .collect();
    let current = GridIndex::new(i, j);
    let state_depth = Grid::from_fn(i + 1, j + 1, |c| {
        state_depth(delays, current, c).expect("channel 0 is delay-free")
    });
    let receipt_depth = Grid::from_fn(i + 1, j + 1, |c| {
        receipt_depth(delays, c).expect("channel 0 is delay-free")
    });
    Ok(RegionPartition {
        current,
        delays: delays.clone(),
        s_bounds,
        t_regions,
        state_depth,
        receipt_depth,
    })
}

/// Delay-free stacked measurement of one state cell: block `c` is channel `c` read at
/// `(l + d_c, k + e_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedMeasurement {
    pub depth: usize,
    pub values: DVector<f64>,
}

/// Source `(channel, receipt cell)` of every block, in stacking order.
pub fn stack_sources(delays: &Delays, depth: usize, cell: GridIndex) -> Vec<(usize, GridIndex)> {
    (0..=depth)
        .map(|c| {
            let (d, e) = delays.get(c);
            (c, cell.shifted(d, e))
        })
        .collect()
}

/// Stacks `decoded(c, receipt cell)` over each state cell of the partition.
pub fn reconstruct_sequence<F>(decoded: F, partition: &RegionPartition) -> Result<Grid<StackedMeasurement>>
where
    F: Fn(usize, GridIndex) -> Option<DVector<f64>>,
{
    let mut out = Vec::with_capacity(partition.state_depth.values().len());
    for (cell, &depth) in partition.state_depth.iter() {
        let blocks = stack_sources(&partition.delays, depth, cell)
            .into_iter()
            .map(|(c, at)| {
                decoded(c, at).ok_or_else(|| {
                    Error::Data(format!("channel {c} has no value at receipt cell {at}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(StackedMeasurement {
            depth,
            values: vstack_vectors(&blocks),
        });
    }
    let mut it = out.into_iter();
    Ok(Grid::from_fn(
        partition.state_depth.rows(),
        partition.state_depth.cols(),
        |_| it.next().expect("one entry per cell"),
    ))
}

/// `(C_s(l, k), R_s(l, k))`: block column of output matrices and block diagonal of noise
/// covariances, each read at the receipt cell of its channel.
pub fn stacked_model(
    model: &SystemModel,
    depth: usize,
    cell: GridIndex,
    horizon: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if depth >= model.channel_count() {
        return Err(Error::Input(format!("stack depth {depth} exceeds the channel count")));
    }
    let sources = stack_sources(&model.delays, depth, cell);
    if let Some((c, at)) = sources.iter().find(|(_, at)| at.i > horizon || at.j > horizon) {
        return Err(Error::Data(format!("channel {c} receipt cell {at} lies outside the grid")));
    }
    let cs: Vec<_> = sources.iter().map(|&(c, at)| model.output(c, at).clone()).collect();
    let rs: Vec<_> = sources.iter().map(|&(c, at)| model.meas_cov(c, at).clone()).collect();
    Ok((vstack(&cs), block_diag(&rs)))
}

/// Sources of the original sequence: every `(channel, receipt cell)` in the T-regions.
pub fn original_sources(partition: &RegionPartition) -> Vec<(usize, GridIndex)> {
    let mut out = Vec::new();
    for (s, region) in partition.t_regions.iter().enumerate() {
        for cell in region.cells() {
            out.extend((0..=s).map(|c| (c, cell)));
        }
    }
    out
}

/// Sources consumed by the reconstructed sequence, gathered over the S-regions.
pub fn reconstructed_sources(partition: &RegionPartition) -> Vec<(usize, GridIndex)> {
    let mut out = Vec::new();
    for tau in 0..partition.depth_count() {
        let depth = partition.depth_of_region(tau);
        for cell in partition.s_region(tau) {
            out.extend(stack_sources(&partition.delays, depth, cell));
        }
    }
    out
}

/// Whether two source lists are the same multiset, each source appearing once.
pub fn is_bijection(a: &[(usize, GridIndex)], b: &[(usize, GridIndex)]) -> bool {
    let count = |v: &[(usize, GridIndex)]| {
        let mut m = BTreeMap::new();
        for key in v {
            *m.entry(*key).or_insert(0usize) += 1;
        }
        m
    };
    let (ca, cb) = (count(a), count(b));
    ca == cb && ca.values().all(|&n| n == 1)
}

/// Outcome of the exhaustive partition and bijection checks at one current cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionCheck {
    pub s_disjoint_cover: bool,
    pub s_matches_depth: bool,
    pub t_disjoint_cover: bool,
    pub t_matches_depth: bool,
    pub bijection: bool,
}

impl PartitionCheck {
    pub fn passed(&self) -> bool {
        self.s_disjoint_cover && self.s_matches_depth && self.t_disjoint_cover && self.t_matches_depth && self.bijection
    }
}

pub fn check_partition(partition: &RegionPartition) -> PartitionCheck {
    let (i, j) = (partition.current.i, partition.current.j);
    let rows = i + 1;
    let cols = j + 1;
    let n = partition.depth_count();

    let mut s_hits = Grid::filled(rows, cols, 0usize);
    let mut s_matches = true;
    for tau in 0..n {
        for cell in partition.s_region(tau) {
            match s_hits.get_mut(cell) {
                Some(h) => *h += 1,
                None => s_matches = false,
            }
            s_matches &= partition.state_depth.get(cell) == Some(&partition.depth_of_region(tau));
        }
    }

    let mut t_hits = Grid::filled(rows, cols, 0usize);
    let mut t_matches = true;
    for (s, region) in partition.t_regions.iter().enumerate() {
        for cell in region.cells() {
            match t_hits.get_mut(cell) {
                Some(h) => *h += 1,
                None => t_matches = false,
            }
            t_matches &= partition.receipt_depth.get(cell) == Some(&s);
        }
    }

    PartitionCheck {
        s_disjoint_cover: s_hits.values().iter().all(|&h| h == 1),
        s_matches_depth: s_matches,
        t_disjoint_cover: t_hits.values().iter().all(|&h| h == 1),
        t_matches_depth: t_matches,
        bijection: is_bijection(&original_sources(partition), &reconstructed_sources(partition)),
    }
}

/// Largest `|y_s - C_s x|` entry over the reconstructed map of a trajectory.
/// Exactly zero when the trajectory was simulated without measurement noise.
pub fn max_residual(model: &SystemModel, traj: &Trajectory, partition: &RegionPartition) -> Result<f64> {
    let stacked = reconstruct_sequence(|c, at| traj.measurement(c, at).cloned(), partition)?;
    let mut worst = 0.0f64;
    for (cell, m) in stacked.iter() {
        let (c, _) = stacked_model(model, m.depth, cell, traj.horizon)?;
        let r = &m.values - c * &traj.states[cell];
        worst = worst.max(r.amax());
    }
    Ok(worst)
}

/// Rows `(l, k, region_id, stack_depth)` for export.
pub fn region_rows(partition: &RegionPartition) -> Vec<(usize, usize, usize, usize)> {
    partition
        .state_depth
        .iter()
        .map(|(c, &d)| (c.i, c.j, partition.depth_count() - 1 - d, d))
        .collect()
}

/// Every delay list on `[0, max_delay]^2` with at most `max_channels` channels that passes
/// delay validation.
pub fn enumerate_delays(max_delay: usize, max_channels: usize) -> Vec<Delays> {
    fn extend(cur: &mut Vec<(usize, usize)>, max_delay: usize, max_channels: usize, out: &mut Vec<Delays>) {
        out.push(Delays(cur.clone()));
        if cur.len() == max_channels {
            return;
        }
        let (pi, pj) = *cur.last().expect("starts with (0, 0)");
        for d in (pi + 1).max(pj)..=max_delay {
            for e in d..=max_delay {
                cur.push((d, e));
                extend(cur, max_delay, max_channels, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut vec![(0, 0)], max_delay, max_channels, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delays(d: &[(usize, usize)]) -> Delays {
        Delays(d.to_vec())
    }

    #[test]
    fn single_delay_example() {
        let p = partition_regions(&delays(&[(0, 0), (1, 1)]), 3, 3).unwrap();
        assert_eq!(p.s_bounds, vec![(2, 2), (3, 3)]);
        let s0 = p.s_region(0);
        assert_eq!(s0.len(), 9);
        assert!(s0.iter().all(|c| c.i <= 2 && c.j <= 2));
        let s1 = p.s_region(1);
        assert_eq!(s1.len(), 7);
        assert!(s1.iter().all(|c| c.i == 3 || c.j == 3));
        assert!(check_partition(&p).passed());
    }

    #[test]
    fn delay_free_is_identity() {
        let p = partition_regions(&delays(&[(0, 0)]), 4, 4).unwrap();
        assert_eq!(p.s_region(0).len(), 25);
        let rec = reconstruct_sequence(|_, at| Some(DVector::from_element(1, (at.i * 10 + at.j) as f64)), &p).unwrap();
        for (cell, m) in rec.iter() {
            assert_eq!(m.depth, 0);
            assert_eq!(m.values[0], (cell.i * 10 + cell.j) as f64);
        }
    }

    #[test]
    fn second_block_comes_from_shifted_receipt() {
        let p = partition_regions(&delays(&[(0, 0), (1, 2)]), 4, 5).unwrap();
        let rec = reconstruct_sequence(
            |c, at| Some(DVector::from_element(1, (100 * c + 10 * at.i + at.j) as f64)),
            &p,
        )
        .unwrap();
        let m = &rec[GridIndex::new(1, 1)];
        assert_eq!(m.depth, 1);
        assert_eq!(m.values.as_slice(), &[11.0, 123.0]);
        assert_eq!(rec[GridIndex::new(4, 0)].depth, 0);
    }

    #[test]
    fn startup_corner_is_out_of_scope() {
        assert!(matches!(
            partition_regions(&delays(&[(0, 0), (2, 3)]), 2, 2),
            Err(Error::OutOfScope(_))
        ));
    }

    #[test]
    fn missing_receipt_is_a_data_error() {
        let p = partition_regions(&delays(&[(0, 0), (1, 1)]), 2, 2).unwrap();
        let r = reconstruct_sequence(|c, _| (c == 0).then(|| DVector::zeros(1)), &p);
        assert!(matches!(r, Err(Error::Data(_))));
    }

    #[test]
    fn shifted_source_breaks_bijection() {
        let p = partition_regions(&delays(&[(0, 0), (1, 1), (2, 3)]), 6, 6).unwrap();
        let orig = original_sources(&p);
        let mut rec = reconstructed_sources(&p);
        assert!(is_bijection(&orig, &rec));
        let (c, at) = rec[5];
        rec[5] = (c, at.shifted(0, 1));
        assert!(!is_bijection(&orig, &rec));
    }

    #[test]
    fn enumeration_respects_delay_rules() {
        let all = enumerate_delays(3, 4);
        assert!(all.iter().all(|d| d.validate().is_ok()));
        assert!(all.contains(&delays(&[(0, 0), (1, 1), (2, 2), (3, 3)])));
        assert!(all.contains(&delays(&[(0, 0), (1, 3)])));
    }
}
