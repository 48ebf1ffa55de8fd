use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::GridIndex;

/// Dense matrix that (de)serializes as a list of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix(pub DMatrix<f64>);

impl Deref for Matrix {
    type Target = DMatrix<f64>;
    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl From<DMatrix<f64>> for Matrix {
    fn from(m: DMatrix<f64>) -> Self {
        Matrix(m)
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = self
            .0
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("matrix rows have unequal lengths"));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Ok(Matrix(DMatrix::from_row_slice(nrows, ncols, &flat)))
    }
}

/// Dense column vector that (de)serializes as a flat list.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(pub DVector<f64>);

impl Deref for Vector {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl Serialize for Vector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Vector(DVector::from_vec(Vec::<f64>::deserialize(d)?)))
    }
}

/// A quantity indexed by grid cell: either constant or tabulated as `table[i][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftVarying<T> {
    Constant(T),
    Table(Vec<Vec<T>>),
}

impl<T> ShiftVarying<T> {
    /// Value at `idx`. Tables are checked against the horizon by [`SystemModel::validate`].
    pub fn at(&self, idx: GridIndex) -> &T {
        match self {
            ShiftVarying::Constant(v) => v,
            ShiftVarying::Table(t) => &t[idx.i][idx.j],
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ShiftVarying::Constant(_))
    }

    fn covers(&self, horizon: usize) -> bool {
        match self {
            ShiftVarying::Constant(_) => true,
            ShiftVarying::Table(t) => t.len() > horizon && t.iter().all(|row| row.len() > horizon),
        }
    }

    fn values(&self) -> Box<dyn Iterator<Item = &T> + '_> {
        match self {
            ShiftVarying::Constant(v) => Box::new(std::iter::once(v)),
            ShiftVarying::Table(t) => Box::new(t.iter().flatten()),
        }
    }
}

/// A boundary quantity indexed by a single coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile<T> {
    Constant(T),
    Table(Vec<T>),
}

impl<T> Profile<T> {
    pub fn at(&self, k: usize) -> &T {
        match self {
            Profile::Constant(v) => v,
            Profile::Table(t) => &t[k],
        }
    }

    fn covers(&self, horizon: usize) -> bool {
        match self {
            Profile::Constant(_) => true,
            Profile::Table(t) => t.len() > horizon,
        }
    }
}

/// Which neighbour drives a term: `Horizontal` is `(i, j-1)`, `Vertical` is `(i-1, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Horizontal,
    Vertical,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Horizontal, Direction::Vertical];
}

/// Linearization, residual bound and noise input for one propagation direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionTerms {
    /// Linear part `A(i, j)` of the propagation map.
    pub linear: ShiftVarying<Matrix>,
    /// Bound `a(i, j) >= 0` on the non-linear residual's Lipschitz constant.
    #[serde(default = "zero_lipschitz")]
    pub lipschitz: ShiftVarying<f64>,
    /// Noise input matrix `B(i, j)`.
    pub noise_gain: ShiftVarying<Matrix>,
}

fn zero_lipschitz() -> ShiftVarying<f64> {
    ShiftVarying::Constant(0.0)
}

/// Propagation maps `f(idx, x) = A(idx) x + r(idx, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    /// `r = 0`.
    #[default]
    Linear,
    /// `r(idx, x) = scale * a(idx) * sin(x)` componentwise, `0 <= scale <= 1`.
    /// `sin` is 1-Lipschitz and vanishes at zero, so the sector condition holds with `a(idx)`.
    SineResidual { scale: f64 },
}

/// Measurement channel `s`: `y_s(i, j) = C_s(i, j) x(i - d_s.0, j - d_s.1) + v_s(i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub output: ShiftVarying<Matrix>,
    pub noise_cov: ShiftVarying<Matrix>,
}

/// Per-channel delay pairs, channel 0 first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Delays(pub Vec<(usize, usize)>);

impl Delays {
    /// Checks `0 = d_0 = e_0 < d_1 <= e_1 <= d_2 <= ... <= d_N <= e_N` with `d_s` strictly increasing.
    pub fn validate(&self) -> Result<()> {
        let d = &self.0;
        if d.is_empty() {
            return Err(Error::config("model.delays", "at least one channel is required"));
        }
        if d[0] != (0, 0) {
            return Err(Error::config("model.delays[0]", "channel 0 must be delay-free (0, 0)"));
        }
        for (s, &(di, dj)) in d.iter().enumerate() {
            if di > dj {
                return Err(Error::config(
                    format!("model.delays[{s}]"),
                    format!("row delay {di} exceeds column delay {dj}"),
                ));
            }
            if s > 0 {
                let (pi, pj) = d[s - 1];
                if di <= pi {
                    return Err(Error::config(
                        format!("model.delays[{s}]"),
                        "row delays must be strictly increasing across channels",
                    ));
                }
                if pj > di {
                    return Err(Error::config(
                        format!("model.delays[{s}]"),
                        format!("previous column delay {pj} exceeds row delay {di}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, s: usize) -> (usize, usize) {
        self.0[s]
    }

    /// Largest delay pair `(d_N, e_N)`.
    pub fn last(&self) -> (usize, usize) {
        *self.0.last().expect("validated delays are non-empty")
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = (usize, usize)> + ExactSizeIterator + '_ {
        self.0.iter().copied()
    }
}

/// First and second moments of the boundary states `x(i, 0)` and `x(0, j)`.
/// The corner `(0, 0)` takes the row profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryStats {
    pub mean_row: Profile<Vector>,
    pub mean_col: Profile<Vector>,
    pub second_moment_row: Profile<Matrix>,
    pub second_moment_col: Profile<Matrix>,
}

/// The 2-D plant, its measurement channels and initial statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub state_dim: usize,
    pub meas_dim: usize,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    pub horizontal: DirectionTerms,
    pub vertical: DirectionTerms,
    pub process_cov: ShiftVarying<Matrix>,
    pub channels: Vec<Channel>,
    pub delays: Delays,
    pub boundary: BoundaryStats,
    /// Accept singular (PSD) noise covariances. Only meant for degenerate test fixtures.
    #[serde(default)]
    pub allow_degenerate_noise: bool,
}

impl SystemModel {
    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn terms(&self, dir: Direction) -> &DirectionTerms {
        match dir {
            Direction::Horizontal => &self.horizontal,
            Direction::Vertical => &self.vertical,
        }
    }

    pub fn linear(&self, dir: Direction, idx: GridIndex) -> &DMatrix<f64> {
        self.terms(dir).linear.at(idx)
    }

    pub fn lipschitz(&self, dir: Direction, idx: GridIndex) -> f64 {
        *self.terms(dir).lipschitz.at(idx)
    }

    pub fn noise_gain(&self, dir: Direction, idx: GridIndex) -> &DMatrix<f64> {
        self.terms(dir).noise_gain.at(idx)
    }

    /// `f_dir(idx, x)`.
    pub fn propagate(&self, dir: Direction, idx: GridIndex, x: &DVector<f64>) -> DVector<f64> {
        let lin = self.linear(dir, idx) * x;
        match self.nonlinearity {
            Nonlinearity::Linear => lin,
            Nonlinearity::SineResidual { scale } => {
                let gain = scale * self.lipschitz(dir, idx);
                lin + x.map(f64::sin) * gain
            }
        }
    }

    /// Lipschitz constant of `f_dir(idx, .) - A_dir(idx)`: zero for linear dynamics.
    pub fn residual_lipschitz(&self, dir: Direction, idx: GridIndex) -> f64 {
        match self.nonlinearity {
            Nonlinearity::Linear => 0.0,
            Nonlinearity::SineResidual { scale } => scale * self.lipschitz(dir, idx),
        }
    }

    /// `B Q B^T` evaluated at `idx`.
    pub fn driven_noise_cov(&self, dir: Direction, idx: GridIndex) -> DMatrix<f64> {
        let b = self.noise_gain(dir, idx);
        b * self.process_cov.at(idx).deref() * b.transpose()
    }

    pub fn process_cov(&self, idx: GridIndex) -> &DMatrix<f64> {
        self.process_cov.at(idx)
    }

    pub fn output(&self, s: usize, idx: GridIndex) -> &DMatrix<f64> {
        self.channels[s].output.at(idx)
    }

    pub fn meas_cov(&self, s: usize, idx: GridIndex) -> &DMatrix<f64> {
        self.channels[s].noise_cov.at(idx)
    }

    /// Mean of a boundary state. Panics on interior cells.
    pub fn boundary_mean(&self, idx: GridIndex) -> &DVector<f64> {
        if idx.j == 0 {
            self.boundary.mean_row.at(idx.i)
        } else {
            assert_eq!(idx.i, 0, "{idx} is not a boundary cell");
            self.boundary.mean_col.at(idx.j)
        }
    }

    /// Second moment `E[x x^T]` of a boundary state. Panics on interior cells.
    pub fn boundary_second_moment(&self, idx: GridIndex) -> &DMatrix<f64> {
        if idx.j == 0 {
            self.boundary.second_moment_row.at(idx.i)
        } else {
            assert_eq!(idx.i, 0, "{idx} is not a boundary cell");
            self.boundary.second_moment_col.at(idx.j)
        }
    }

    /// Covariance `E[x x^T] - mean mean^T` of a boundary state.
    pub fn boundary_cov(&self, idx: GridIndex) -> DMatrix<f64> {
        let mean = self.boundary_mean(idx);
        self.boundary_second_moment(idx) - mean * mean.transpose()
    }

    /// Checks dimensions, delay ordering, definiteness and table coverage on `[0, horizon]^2`.
    pub fn validate(&self, horizon: usize) -> Result<()> {
        let n = self.state_dim;
        let m = self.meas_dim;
        if n == 0 || m == 0 {
            return Err(Error::config("model", "state and measurement dimensions must be positive"));
        }
        self.delays.validate()?;
        if self.delays.len() != self.channels.len() {
            return Err(Error::config(
                "model.delays",
                format!("{} delay pairs for {} channels", self.delays.len(), self.channels.len()),
            ));
        }
        let (di, dj) = self.delays.last();
        if horizon < di.max(dj) + 1 {
            return Err(Error::config(
                "horizon",
                format!("horizon {horizon} too small for delays up to ({di}, {dj})"),
            ));
        }
        if let Nonlinearity::SineResidual { scale } = self.nonlinearity {
            if !(0.0..=1.0).contains(&scale) {
                return Err(Error::config("model.nonlinearity", "residual scale must lie in [0, 1]"));
            }
        }
        for (name, terms) in [("horizontal", &self.horizontal), ("vertical", &self.vertical)] {
            check_matrices(&format!("model.{name}.linear"), &terms.linear, horizon, n, n)?;
            check_matrices(&format!("model.{name}.noise_gain"), &terms.noise_gain, horizon, n, n)?;
            if !terms.lipschitz.covers(horizon) {
                return Err(Error::config(format!("model.{name}.lipschitz"), "table does not cover the grid"));
            }
            if terms.lipschitz.values().any(|a| !(a.is_finite() && *a >= 0.0)) {
                return Err(Error::config(format!("model.{name}.lipschitz"), "bounds must be finite and >= 0"));
            }
        }
        check_matrices("model.process_cov", &self.process_cov, horizon, n, n)?;
        for q in self.process_cov.values() {
            check_covariance("model.process_cov", q, self.allow_degenerate_noise)?;
        }
        for (s, ch) in self.channels.iter().enumerate() {
            check_matrices(&format!("model.channels[{s}].output"), &ch.output, horizon, m, n)?;
            check_matrices(&format!("model.channels[{s}].noise_cov"), &ch.noise_cov, horizon, m, m)?;
            for r in ch.noise_cov.values() {
                check_covariance(&format!("model.channels[{s}].noise_cov"), r, self.allow_degenerate_noise)?;
            }
        }
        let b = &self.boundary;
        for (field, ok) in [
            ("model.boundary.mean_row", b.mean_row.covers(horizon)),
            ("model.boundary.mean_col", b.mean_col.covers(horizon)),
            ("model.boundary.second_moment_row", b.second_moment_row.covers(horizon)),
            ("model.boundary.second_moment_col", b.second_moment_col.covers(horizon)),
        ] {
            if !ok {
                return Err(Error::config(field, "profile does not cover the grid"));
            }
        }
        for k in 0..=horizon {
            for idx in [GridIndex::new(k, 0), GridIndex::new(0, k)] {
                if self.boundary_mean(idx).len() != n || self.boundary_second_moment(idx).shape() != (n, n) {
                    return Err(Error::config("model.boundary", format!("wrong dimension at {idx}")));
                }
                let cov = crate::linalg::symmetrize(&self.boundary_cov(idx));
                if !crate::linalg::is_psd(&cov, 1e-12) {
                    return Err(Error::config(
                        "model.boundary",
                        format!("second moment minus mean outer product is not PSD at {idx}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn check_matrices(
    field: &str,
    sv: &ShiftVarying<Matrix>,
    horizon: usize,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if !sv.covers(horizon) {
        return Err(Error::config(field, format!("table does not cover [0, {horizon}]^2")));
    }
    for m in sv.values() {
        if m.shape() != (rows, cols) {
            return Err(Error::config(
                field,
                format!("expected {rows}x{cols}, found {}x{}", m.nrows(), m.ncols()),
            ));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::config(field, "non-finite entry"));
        }
    }
    Ok(())
}

fn check_covariance(field: &str, m: &DMatrix<f64>, allow_degenerate: bool) -> Result<()> {
    if (m - m.transpose()).norm() > 1e-12 * m.norm().max(1.0) {
        return Err(Error::config(field, "covariance must be symmetric"));
    }
    if allow_degenerate {
        if !crate::linalg::is_psd(m, 1e-12) {
            return Err(Error::config(field, "covariance must be positive semidefinite"));
        }
    } else if m.clone().cholesky().is_none() {
        return Err(Error::config(field, "covariance must be positive definite"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_ordering() {
        assert!(Delays(vec![(0, 0)]).validate().is_ok());
        assert!(Delays(vec![(0, 0), (1, 2), (2, 3)]).validate().is_ok());
        assert!(Delays(vec![(0, 1)]).validate().is_err());
        assert!(Delays(vec![(0, 0), (1, 1), (1, 2)]).validate().is_err());
        assert!(Delays(vec![(0, 0), (2, 1)]).validate().is_err());
        assert!(Delays(vec![(0, 0), (1, 3), (2, 3)]).validate().is_err());
    }

    #[test]
    fn matrix_serde_rows() {
        let m: Matrix = serde_json::from_str("[[1.0, 2.0], [3.0, 4.0]]").unwrap();
        assert_eq!(m[(1, 0)], 3.0);
        assert_eq!(serde_json::to_string(&m).unwrap(), "[[1.0,2.0],[3.0,4.0]]");
        assert!(serde_json::from_str::<Matrix>("[[1.0], [3.0, 4.0]]").is_err());
    }
}
