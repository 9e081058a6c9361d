use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A batch of `count` points in `dim`-dimensional Euclidean space, drawn from
/// a single distribution.
///
/// Points are stored column-wise so that each point is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    // dim rows, count columns
    coords: DMatrix<f64>,
}

impl PointSet {
    /// Builds a point set from row-per-point data. All rows must share the
    /// same dimension, every coordinate must be finite, and at least one
    /// point is required.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput {
                context: "point set must contain at least one point",
            });
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(Error::EmptyInput {
                context: "points must have at least one coordinate",
            });
        }
        let mut coords = DMatrix::<f64>::zeros(dim, rows.len());
        for (j, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            for (i, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: "point coordinates",
                    });
                }
                coords[(i, j)] = v;
            }
        }
        Ok(PointSet { coords })
    }

    /// Builds a point set from a dim x count coordinate matrix (points as
    /// columns).
    pub fn from_matrix(coords: DMatrix<f64>) -> Result<Self> {
        if coords.ncols() == 0 || coords.nrows() == 0 {
            return Err(Error::EmptyInput {
                context: "point set must be non-empty",
            });
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "point coordinates",
            });
        }
        Ok(PointSet { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.nrows()
    }

    pub fn len(&self) -> usize {
        self.coords.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false // count >= 1 by construction
    }

    /// The `i`-th point as a contiguous coordinate slice.
    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords.as_slice()[i * d..(i + 1) * d]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.coords
    }

    pub fn iter_points(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// A copy with the `idx`-th point removed. Requires at least two points.
    pub fn remove(&self, idx: usize) -> Result<Self> {
        if self.len() < 2 {
            return Err(Error::EmptyInput {
                context: "cannot remove the only point",
            });
        }
        if idx >= self.len() {
            return Err(Error::invalid(format!(
                "remove index {idx} out of range for {} points",
                self.len()
            )));
        }
        Ok(PointSet {
            coords: self.coords.clone().remove_column(idx),
        })
    }
}
