use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;

/// A cell `(i, j)` of the square grid `[0, horizon]^2`.
///
/// The derived `Ord` is row-major lexicographic: `(i, j) < (i, j + 1) < ... < (i + 1, 0)`.
/// This is the linear completion of the 2-D triggering order used by the event mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridIndex {
    pub i: usize,
    pub j: usize,
}

impl GridIndex {
    pub const fn new(i: usize, j: usize) -> Self {
        GridIndex { i, j }
    }

    /// `(i, j - 1)`, the horizontal predecessor.
    pub fn left(self) -> Option<GridIndex> {
        self.j.checked_sub(1).map(|j| GridIndex::new(self.i, j))
    }

    /// `(i - 1, j)`, the vertical predecessor.
    pub fn up(self) -> Option<GridIndex> {
        self.i.checked_sub(1).map(|i| GridIndex::new(i, self.j))
    }

    pub fn is_boundary(self) -> bool {
        self.i == 0 || self.j == 0
    }

    /// Shift by a delay pair, `(i + di, j + dj)`.
    pub fn shifted(self, di: usize, dj: usize) -> GridIndex {
        GridIndex::new(self.i + di, self.j + dj)
    }

    /// Shift back by a delay pair if the result stays non-negative.
    pub fn delayed(self, di: usize, dj: usize) -> Option<GridIndex> {
        Some(GridIndex::new(
            self.i.checked_sub(di)?,
            self.j.checked_sub(dj)?,
        ))
    }
}

impl PartialOrd for GridIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GridIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.i, self.j).cmp(&(other.i, other.j))
    }
}

impl fmt::Display for GridIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

/// Dense storage over `[0, rows) x [0, cols)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Grid {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(GridIndex) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(GridIndex::new(i, j)));
            }
        }
        Grid { rows, cols, data }
    }

    /// Square grid covering `[0, horizon]^2`.
    pub fn square_from_fn(horizon: usize, f: impl FnMut(GridIndex) -> T) -> Self {
        Self::from_fn(horizon + 1, horizon + 1, f)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn contains(&self, idx: GridIndex) -> bool {
        idx.i < self.rows && idx.j < self.cols
    }

    pub fn get(&self, idx: GridIndex) -> Option<&T> {
        if self.contains(idx) {
            Some(&self.data[idx.i * self.cols + idx.j])
        } else {
            None
        }
    }

    pub fn get_mut(&mut self, idx: GridIndex) -> Option<&mut T> {
        if self.contains(idx) {
            Some(&mut self.data[idx.i * self.cols + idx.j])
        } else {
            None
        }
    }

    /// Cells in row-major order.
    pub fn indices(&self) -> impl Iterator<Item = GridIndex> {
        row_major(self.rows, self.cols)
    }

    pub fn iter(&self) -> impl Iterator<Item = (GridIndex, &T)> {
        self.indices().zip(self.data.iter())
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub fn map<U>(&self, mut f: impl FnMut(GridIndex, &T) -> U) -> Grid<U> {
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.iter().map(|(idx, v)| f(idx, v)).collect(),
        }
    }
}

impl<T> std::ops::Index<GridIndex> for Grid<T> {
    type Output = T;

    fn index(&self, idx: GridIndex) -> &T {
        assert!(self.contains(idx), "grid index {idx} out of bounds");
        &self.data[idx.i * self.cols + idx.j]
    }
}

impl<T> std::ops::IndexMut<GridIndex> for Grid<T> {
    fn index_mut(&mut self, idx: GridIndex) -> &mut T {
        assert!(self.contains(idx), "grid index {idx} out of bounds");
        let cols = self.cols;
        &mut self.data[idx.i * cols + idx.j]
    }
}

/// Row-major scan of `[0, rows) x [0, cols)`.
pub fn row_major(rows: usize, cols: usize) -> impl Iterator<Item = GridIndex> {
    (0..rows).flat_map(move |i| (0..cols).map(move |j| GridIndex::new(i, j)))
}
