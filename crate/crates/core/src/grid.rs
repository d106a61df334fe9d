//! Regular sampling grid and a dense row-major matrix over it.
//!
//! Row `r` samples `y = y_min + r * hy`, column `c` samples `x = x_min + c * hx`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SfsError};

/// A pixel as `(row, col)`.
pub type Pixel = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl GridSpec {
    pub fn new(
        width: usize,
        height: usize,
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    ) -> Result<Self> {
        let spec = GridSpec {
            width,
            height,
            x_min,
            x_max,
            y_min,
            y_max,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Square grid of `n x n` pixels over `[-half, half]^2`.
    pub fn square(n: usize, half: f64) -> Result<Self> {
        Self::new(n, n, -half, half, -half, half)
    }

    /// Unit-spaced grid whose world coordinates equal pixel indices.
    pub fn unit(width: usize, height: usize) -> Result<Self> {
        Self::new(
            width,
            height,
            0.0,
            (width.max(2) - 1) as f64,
            0.0,
            (height.max(2) - 1) as f64,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 3 || self.height < 3 {
            return Err(SfsError::InvalidGrid(format!(
                "grid must be at least 3x3, got {}x{}",
                self.width, self.height
            )));
        }
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(SfsError::InvalidGrid(format!(
                "bad extent x=[{}, {}] y=[{}, {}]",
                self.x_min, self.x_max, self.y_min, self.y_max
            )));
        }
        Ok(())
    }

    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.width - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.height - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, col: usize) -> f64 {
        self.x_min + col as f64 * self.hx()
    }

    pub fn y(&self, row: usize) -> f64 {
        self.y_min + row as f64 * self.hy()
    }

    pub fn world(&self, (row, col): Pixel) -> (f64, f64) {
        (self.x(col), self.y(row))
    }

    /// Pixel nearest to a world point, clamped to the grid.
    pub fn nearest_pixel(&self, x: f64, y: f64) -> Pixel {
        let c = ((x - self.x_min) / self.hx()).round();
        let r = ((y - self.y_min) / self.hy()).round();
        let c = c.clamp(0.0, (self.width - 1) as f64) as usize;
        let r = r.clamp(0.0, (self.height - 1) as f64) as usize;
        (r, c)
    }

    pub fn contains(&self, (row, col): Pixel) -> bool {
        row < self.height && col < self.width
    }

    pub fn index(&self, (row, col): Pixel) -> usize {
        row * self.width + col
    }

    pub fn pixel(&self, index: usize) -> Pixel {
        (index / self.width, index % self.width)
    }

    pub fn on_border(&self, (row, col): Pixel) -> bool {
        row == 0 || col == 0 || row + 1 == self.height || col + 1 == self.width
    }

    /// World distance between two pixel centres.
    pub fn distance(&self, a: Pixel, b: Pixel) -> f64 {
        let dx = (a.1 as f64 - b.1 as f64) * self.hx();
        let dy = (a.0 as f64 - b.0 as f64) * self.hy();
        dx.hypot(dy)
    }

    /// Every pixel on the outer ring, clockwise from the top-left corner.
    pub fn border_pixels(&self) -> Vec<Pixel> {
        let (h, w) = (self.height, self.width);
        let mut out = Vec::with_capacity(2 * (h + w));
        out.extend((0..w).map(|c| (0, c)));
        out.extend((1..h).map(|r| (r, w - 1)));
        out.extend((0..w - 1).rev().map(|c| (h - 1, c)));
        out.extend((1..h - 1).rev().map(|r| (r, 0)));
        out
    }

    /// 4-neighbours in E, N, W, S order. "North" is the previous row.
    pub fn neighbors4(&self, (row, col): Pixel) -> impl Iterator<Item = Pixel> + '_ {
        const OFFSETS: [(isize, isize); 4] = [(0, 1), (-1, 0), (0, -1), (1, 0)];
        OFFSETS
            .iter()
            .filter_map(move |&(dr, dc)| self.offset((row, col), dr, dc))
    }

    /// 8-neighbours in E, N, W, S, NE, NW, SW, SE order.
    pub fn neighbors8(&self, (row, col): Pixel) -> impl Iterator<Item = Pixel> + '_ {
        const OFFSETS: [(isize, isize); 8] = [
            (0, 1),
            (-1, 0),
            (0, -1),
            (1, 0),
            (-1, 1),
            (-1, -1),
            (1, -1),
            (1, 1),
        ];
        OFFSETS
            .iter()
            .filter_map(move |&(dr, dc)| self.offset((row, col), dr, dc))
    }

    fn offset(&self, (row, col): Pixel, dr: isize, dc: isize) -> Option<Pixel> {
        let r = row.checked_add_signed(dr)?;
        let c = col.checked_add_signed(dc)?;
        self.contains((r, c)).then_some((r, c))
    }
}

/// Dense row-major matrix of `height x width` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Field<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Field {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }
}

impl<T> Field<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(SfsError::InvalidInput(format!(
                "buffer of {} values does not fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Field { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Field { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
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

    pub fn get(&self, (row, col): Pixel) -> Option<&T> {
        (row < self.rows && col < self.cols).then(|| &self.data[row * self.cols + col])
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Field<U> {
        Field {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.data.iter()
    }

    /// Iterates `((row, col), &value)` in row-major order.
    pub fn indexed(&self) -> impl Iterator<Item = (Pixel, &T)> {
        let cols = self.cols;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| ((i / cols, i % cols), v))
    }

    pub(crate) fn check_shape(&self, grid: &GridSpec) -> Result<()> {
        if self.rows != grid.height || self.cols != grid.width {
            return Err(SfsError::DimensionMismatch {
                expected_rows: grid.height,
                expected_cols: grid.width,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(())
    }
}

impl<T> std::ops::Index<Pixel> for Field<T> {
    type Output = T;

    fn index(&self, (row, col): Pixel) -> &T {
        debug_assert!(row < self.rows && col < self.cols);
        &self.data[row * self.cols + col]
    }
}

impl<T> std::ops::IndexMut<Pixel> for Field<T> {
    fn index_mut(&mut self, (row, col): Pixel) -> &mut T {
        debug_assert!(row < self.rows && col < self.cols);
        &mut self.data[row * self.cols + col]
    }
}

impl Field<f64> {
    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
