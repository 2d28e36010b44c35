use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err};
use crate::Result;

/// Dense row-major real image. In B-scan images rows are depth bins and
/// columns are A-lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err!(
                "image {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    /// Copy of the `rows x cols` window whose top-left corner is `(row0, col0)`.
    pub fn crop(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<Image> {
        if row0 + rows > self.rows || col0 + cols > self.cols {
            return Err(invalid!(
                "window {rows}x{cols} at ({row0},{col0}) exceeds image {}x{}",
                self.rows,
                self.cols
            ));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in row0..row0 + rows {
            let start = r * self.cols + col0;
            data.extend_from_slice(&self.data[start..start + cols]);
        }
        Ok(Image { rows, cols, data })
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

pub(crate) fn ensure_same_shape(a: &Image, b: &Image) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(shape_err!(
            "image shapes differ: {}x{} vs {}x{}",
            a.rows,
            a.cols,
            b.rows,
            b.cols
        ))
    }
}
