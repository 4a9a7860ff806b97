//! Uniform space-time grids and the discrete fields living on them.
//!
//! All functional-layer operations work on tensor grids: `m_t + 1` equally
//! spaced times on `[0, T]` by `m_y + 1` equally spaced positions on
//! `[-1, 1]`. A [`DensityField`] stores node values in `[0, 1]`, a
//! [`CurrentPath`] stores the integrated boundary current (zero at time
//! zero), and a [`TiltField`] stores a bias potential anchored to zero on the
//! left edge `y = -1`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid needs at least one interval in each direction")]
    TooCoarse,
    #[error("grid horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("value vector has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("density value {value} at node ({i}, {j}) outside [0, 1]")]
    DensityRange { value: f64, i: usize, j: usize },
    #[error("current path must start at zero, got {0}")]
    CurrentOrigin(f64),
    #[error("tilt field must vanish on the edge y = -1 (|H| = {0} found)")]
    TiltBase(f64),
    #[error("non-finite value at node ({i}, {j})")]
    NonFinite { i: usize, j: usize },
    #[error("fields live on different grids")]
    GridMismatch,
}

/// Uniform tensor grid on `[0, T] x [-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    horizon: f64,
    m_t: usize,
    m_y: usize,
}

impl Grid {
    pub fn new(horizon: f64, m_t: usize, m_y: usize) -> Result<Self, GridError> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(GridError::BadHorizon(horizon));
        }
        if m_t == 0 || m_y == 0 {
            return Err(GridError::TooCoarse);
        }
        Ok(Self { horizon, m_t, m_y })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of time intervals.
    pub fn m_t(&self) -> usize {
        self.m_t
    }

    /// Number of space intervals.
    pub fn m_y(&self) -> usize {
        self.m_y
    }

    /// Number of time nodes, `m_t + 1`.
    pub fn nt(&self) -> usize {
        self.m_t + 1
    }

    /// Number of space nodes, `m_y + 1`.
    pub fn ny(&self) -> usize {
        self.m_y + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.m_t as f64
    }

    pub fn dy(&self) -> f64 {
        2.0 / self.m_y as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        if i == self.m_t {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn y(&self, j: usize) -> f64 {
        if j == self.m_y {
            1.0
        } else {
            -1.0 + j as f64 * self.dy()
        }
    }

    pub fn nodes(&self) -> usize {
        self.nt() * self.ny()
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nt() && j < self.ny());
        i * self.ny() + j
    }

    /// Grid with both resolutions doubled.
    pub fn refined(&self) -> Grid {
        Grid {
            horizon: self.horizon,
            m_t: 2 * self.m_t,
            m_y: 2 * self.m_y,
        }
    }
}

fn check_finite(values: &[f64], ny: usize) -> Result<(), GridError> {
    for (k, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(GridError::NonFinite {
                i: k / ny,
                j: k % ny,
            });
        }
    }
    Ok(())
}

/// Density trajectory on a [`Grid`], values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: Grid,
    values: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.nodes() {
            return Err(GridError::LengthMismatch {
                got: values.len(),
                expected: grid.nodes(),
            });
        }
        check_finite(&values, grid.ny())?;
        for (k, &v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(GridError::DensityRange {
                    value: v,
                    i: k / grid.ny(),
                    j: k % grid.ny(),
                });
            }
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Result<Self, GridError> {
        let mut values = Vec::with_capacity(grid.nodes());
        for i in 0..grid.nt() {
            for j in 0..grid.ny() {
                values.push(f(grid.t(i), grid.y(j)));
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest deviation of the edge columns from the reservoir schedules.
    pub fn boundary_mismatch(&self, protocol: &crate::protocol::BoundaryProtocol) -> f64 {
        use crate::protocol::Side;
        let mut worst: f64 = 0.0;
        for i in 0..self.grid.nt() {
            let t = self.grid.t(i);
            worst = worst
                .max((self.get(i, 0) - protocol.density(Side::Left, t)).abs())
                .max((self.get(i, self.grid.m_y()) - protocol.density(Side::Right, t)).abs());
        }
        worst
    }
}

/// Integrated boundary current sampled on the time nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentPath {
    grid: Grid,
    values: Vec<f64>,
}

impl CurrentPath {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.nt() {
            return Err(GridError::LengthMismatch {
                got: values.len(),
                expected: grid.nt(),
            });
        }
        check_finite(&values, grid.nt().max(1))?;
        if values[0] != 0.0 {
            return Err(GridError::CurrentOrigin(values[0]));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        let values = (0..grid.nt()).map(|i| f(grid.t(i))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Forward-difference slope on time interval `i`.
    pub fn slope(&self, i: usize) -> f64 {
        (self.values[i + 1] - self.values[i]) / self.grid.dt()
    }

    /// Path with the same grid whose increments are sign-flipped.
    pub fn reversed(&self) -> CurrentPath {
        CurrentPath {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

/// Bias potential on a [`Grid`], anchored to `H(t, -1) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltField {
    grid: Grid,
    values: Vec<f64>,
}

impl TiltField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.nodes() {
            return Err(GridError::LengthMismatch {
                got: values.len(),
                expected: grid.nodes(),
            });
        }
        check_finite(&values, grid.ny())?;
        for i in 0..grid.nt() {
            let base = values[i * grid.ny()];
            if base.abs() > 1e-12 {
                return Err(GridError::TiltBase(base.abs()));
            }
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Result<Self, GridError> {
        let mut values = Vec::with_capacity(grid.nodes());
        for i in 0..grid.nt() {
            for j in 0..grid.ny() {
                values.push(f(grid.t(i), grid.y(j)));
            }
        }
        Self::new(grid, values)
    }

    pub fn zero(grid: Grid) -> TiltField {
        let values = vec![0.0; grid.nodes()];
        TiltField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value of `H` at time `t` and position `y` by bilinear interpolation.
    pub fn interpolate(&self, t: f64, y: f64) -> f64 {
        let g = &self.grid;
        let ft = ((t / g.dt()).floor() as isize).clamp(0, g.m_t() as isize - 1) as usize;
        let fy = (((y + 1.0) / g.dy()).floor() as isize).clamp(0, g.m_y() as isize - 1) as usize;
        let wt = ((t - g.t(ft)) / g.dt()).clamp(0.0, 1.0);
        let wy = ((y - g.y(fy)) / g.dy()).clamp(0.0, 1.0);
        let h00 = self.get(ft, fy);
        let h01 = self.get(ft, fy + 1);
        let h10 = self.get(ft + 1, fy);
        let h11 = self.get(ft + 1, fy + 1);
        (1.0 - wt) * ((1.0 - wy) * h00 + wy * h01) + wt * ((1.0 - wy) * h10 + wy * h11)
    }

    /// One-sided second-order spatial derivative at the left or right edge,
    /// at time node `i`.
    pub fn edge_gradient(&self, i: usize, right: bool) -> f64 {
        let dy = self.grid.dy();
        let m = self.grid.m_y();
        if right {
            (3.0 * self.get(i, m) - 4.0 * self.get(i, m - 1) + self.get(i, m - 2)) / (2.0 * dy)
        } else {
            (-3.0 * self.get(i, 0) + 4.0 * self.get(i, 1) - self.get(i, 2)) / (2.0 * dy)
        }
    }
}
