//! Grid geometry shared by both environments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("grid must be at least 2x2, got {width}x{height}")]
    TooSmall { width: usize, height: usize },
    #[error("cell ({x}, {y}) lies outside a {width}x{height} grid")]
    OutOfBounds {
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },
    #[error("grid shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawGridSpec")]
pub struct GridSpec {
    width: usize,
    height: usize,
}

#[derive(Deserialize)]
struct RawGridSpec {
    width: usize,
    height: usize,
}

impl TryFrom<RawGridSpec> for GridSpec {
    type Error = GridError;

    fn try_from(raw: RawGridSpec) -> Result<Self, Self::Error> {
        GridSpec::new(raw.width, raw.height)
    }
}

impl GridSpec {
    pub fn new(width: usize, height: usize) -> Result<Self, GridError> {
        if width < 2 || height < 2 {
            return Err(GridError::TooSmall { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn square(side: usize) -> Result<Self, GridError> {
        Self::new(side, side)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of cells, |G|.
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn cell(&self, x: usize, y: usize) -> Result<CellIndex, GridError> {
        if x < self.width && y < self.height {
            Ok(CellIndex { x, y })
        } else {
            Err(GridError::OutOfBounds {
                x: x as i64,
                y: y as i64,
                width: self.width,
                height: self.height,
            })
        }
    }

    pub fn check(&self, c: CellIndex) -> Result<CellIndex, GridError> {
        self.cell(c.x, c.y)
    }

    /// Row-major linear index.
    #[inline]
    pub fn index(&self, c: CellIndex) -> usize {
        c.y * self.width + c.x
    }

    #[inline]
    pub fn cell_at(&self, index: usize) -> CellIndex {
        CellIndex {
            x: index % self.width,
            y: index / self.width,
        }
    }

    /// All cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        (0..self.len()).map(move |i| self.cell_at(i))
    }

    pub fn center(&self) -> CellIndex {
        CellIndex {
            x: self.width / 2,
            y: self.height / 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub x: usize,
    pub y: usize,
}

impl CellIndex {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

impl std::fmt::Display for CellIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Displacement {
    pub dx: i32,
    pub dy: i32,
}

impl Displacement {
    pub const STAY: Displacement = Displacement { dx: 0, dy: 0 };

    pub const fn new(dx: i32, dy: i32) -> Self {
        Self { dx, dy }
    }

    pub fn is_stay(&self) -> bool {
        self.dx == 0 && self.dy == 0
    }

    /// Largest coordinate magnitude.
    pub fn reach(&self) -> u32 {
        self.dx.unsigned_abs().max(self.dy.unsigned_abs())
    }
}

/// Dense per-cell values stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    spec: GridSpec,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(spec: GridSpec, value: T) -> Self {
        Self {
            spec,
            data: vec![value; spec.len()],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(spec: GridSpec, data: Vec<T>) -> Result<Self, GridError> {
        if data.len() != spec.len() {
            return Err(GridError::ShapeMismatch {
                expected: (spec.width(), spec.height()),
                actual: (data.len(), 1),
            });
        }
        Ok(Self { spec, data })
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(CellIndex) -> T) -> Self {
        let data = spec.cells().map(&mut f).collect();
        Self { spec, data }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, c: CellIndex) -> &T {
        &self.data[self.spec.index(c)]
    }

    pub fn get_mut(&mut self, c: CellIndex) -> &mut T {
        let i = self.spec.index(c);
        &mut self.data[i]
    }

    pub fn set(&mut self, c: CellIndex, v: T) {
        let i = self.spec.index(c);
        self.data[i] = v;
    }

    pub fn iter(&self) -> impl Iterator<Item = (CellIndex, &T)> + '_ {
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| (self.spec.cell_at(i), v))
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            spec: self.spec,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> Result<(), GridError> {
        if self.spec == other.spec {
            Ok(())
        } else {
            Err(GridError::ShapeMismatch {
                expected: (self.spec.width(), self.spec.height()),
                actual: (other.spec.width(), other.spec.height()),
            })
        }
    }
}

impl<T> std::ops::Index<CellIndex> for Grid<T> {
    type Output = T;

    fn index(&self, c: CellIndex) -> &T {
        self.get(c)
    }
}

impl<T> std::ops::IndexMut<CellIndex> for Grid<T> {
    fn index_mut(&mut self, c: CellIndex) -> &mut T {
        self.get_mut(c)
    }
}

pub fn chebyshev_distance(a: CellIndex, b: CellIndex) -> usize {
    a.x.abs_diff(b.x).max(a.y.abs_diff(b.y))
}

/// Every displacement with both components in `[-max_step, max_step]`,
/// row-major (dy outer, dx inner). The position in this list is the
/// action index of the Q-network output layer.
pub fn displacement_actions(max_step: u32) -> Vec<Displacement> {
    let m = max_step as i32;
    let mut out = Vec::with_capacity(((2 * m + 1) * (2 * m + 1)) as usize);
    for dy in -m..=m {
        for dx in -m..=m {
            out.push(Displacement { dx, dy });
        }
    }
    out
}

/// Cells within Chebyshev distance `radius` of `g`, excluding `g`, clipped
/// at the borders. Row-major order.
pub fn neighborhood(g: CellIndex, radius: usize, grid: GridSpec) -> Vec<CellIndex> {
    let x0 = g.x.saturating_sub(radius);
    let y0 = g.y.saturating_sub(radius);
    let x1 = (g.x + radius).min(grid.width() - 1);
    let y1 = (g.y + radius).min(grid.height() - 1);
    let mut out = Vec::with_capacity((x1 - x0 + 1) * (y1 - y0 + 1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            if x != g.x || y != g.y {
                out.push(CellIndex { x, y });
            }
        }
    }
    out
}

/// `g + d`, each coordinate clamped into the grid.
pub fn clip_move(g: CellIndex, d: Displacement, grid: GridSpec) -> CellIndex {
    let clamp = |v: usize, dv: i32, len: usize| -> usize {
        (v as i64 + dv as i64).clamp(0, len as i64 - 1) as usize
    };
    CellIndex {
        x: clamp(g.x, d.dx, grid.width()),
        y: clamp(g.y, d.dy, grid.height()),
    }
}
