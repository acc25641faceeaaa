//! Values tabulated on a regular rectangular grid, used by tabulated
//! exponent fields and payoffs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    /// Multilinear interpolation between the surrounding table points.
    Linear,
    /// Value of the nearest table point; produces step functions.
    Nearest,
}

/// A function sampled on a regular grid with `shape[i]` points along axis
/// `i`, starting at `origin[i]` with spacing `spacing[i]`. Values are stored
/// row-major (last axis fastest). Queries outside the table are clamped to
/// its bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularTable<T> {
    origin: Vec<T>,
    spacing: Vec<T>,
    shape: Vec<usize>,
    values: Vec<T>,
    interpolation: Interpolation,
}

impl<T: Real> RegularTable<T> {
    pub fn new(
        origin: Vec<T>,
        spacing: Vec<T>,
        shape: Vec<usize>,
        values: Vec<T>,
        interpolation: Interpolation,
    ) -> Result<Self> {
        let d = origin.len();
        if d == 0 || spacing.len() != d || shape.len() != d {
            return Err(Error::InvalidParameter(
                "table origin, spacing and shape must share one nonzero length".into(),
            ));
        }
        if spacing.iter().any(|&s| !(s > T::zero())) {
            return Err(Error::InvalidParameter("table spacing must be positive".into()));
        }
        if shape.contains(&0) {
            return Err(Error::InvalidParameter("table shape entries must be positive".into()));
        }
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("table values must be finite".into()));
        }
        Ok(Self { origin, spacing, shape, values, interpolation })
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &s)| acc * s + i)
    }

    /// Evaluates the table at `point` (length `dim()`).
    pub fn eval(&self, point: &[T]) -> T {
        let d = self.dim();
        // Fractional coordinate along each axis, clamped to the table.
        let mut base = vec![0usize; d];
        let mut frac = vec![T::zero(); d];
        for i in 0..d {
            let last = (self.shape[i] - 1) as f64;
            let u = ((point[i] - self.origin[i]) / self.spacing[i]).as_f64().clamp(0.0, last);
            match self.interpolation {
                Interpolation::Nearest => base[i] = u.round() as usize,
                Interpolation::Linear => {
                    let b = u.floor().min((last - 1.0).max(0.0));
                    base[i] = b as usize;
                    frac[i] = T::lit(u - b);
                }
            }
        }
        if self.interpolation == Interpolation::Nearest {
            return self.values[self.flat(&base)];
        }
        let mut acc = T::zero();
        let mut idx = vec![0usize; d];
        for corner in 0..(1usize << d) {
            let mut w = T::one();
            for i in 0..d {
                let up = (corner >> i) & 1 == 1;
                if up && self.shape[i] == 1 {
                    w = T::zero();
                    break;
                }
                idx[i] = base[i] + up as usize;
                w = w * if up { frac[i] } else { T::one() - frac[i] };
            }
            if w != T::zero() {
                acc = acc + w * self.values[self.flat(&idx)];
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_reproduces_affine_data() {
        let mut values = Vec::new();
        for i in 0..3 {
            for j in 0..4 {
                values.push(1.0 + 2.0 * i as f64 * 0.5 - 0.25 * j as f64);
            }
        }
        let t = RegularTable::new(vec![0.0, 0.0], vec![0.5, 1.0], vec![3, 4], values, Interpolation::Linear).unwrap();
        let v = t.eval(&[0.3, 2.2]);
        assert!((v - (1.0 + 2.0 * 0.3 - 0.25 * 2.2)).abs() < 1e-14);
        // clamped outside the table
        assert!((t.eval(&[-1.0, 0.0]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nearest_gives_steps() {
        let t = RegularTable::new(vec![-1.0], vec![2.0], vec![2], vec![0.0, 1.0], Interpolation::Nearest).unwrap();
        assert_eq!(t.eval(&[-0.1]), 0.0);
        assert_eq!(t.eval(&[0.1]), 1.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let err = RegularTable::new(vec![0.0], vec![1.0], vec![3], vec![0.0; 2], Interpolation::Linear).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 3, got: 2 });
    }
}
