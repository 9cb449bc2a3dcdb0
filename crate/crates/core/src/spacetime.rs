//! Space-time arrays: one contiguous row of spatial values per time node.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A field sampled at `n_time` time nodes and `n_space` spatial nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTime {
    n_time: usize,
    n_space: usize,
    data: Vec<f64>,
}

impl SpaceTime {
    pub fn zeros(n_time: usize, n_space: usize) -> Self {
        Self {
            n_time,
            n_space,
            data: vec![0.0; n_time * n_space],
        }
    }

    pub fn from_vec(n_time: usize, n_space: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_time * n_space {
            return Err(Error::ShapeMismatch {
                what: "space-time data",
                expected: n_time * n_space,
                found: data.len(),
            });
        }
        Ok(Self { n_time, n_space, data })
    }

    /// Samples `f(n, i)` for every time node `n` and spatial node `i`.
    pub fn from_fn(n_time: usize, n_space: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n_time * n_space);
        for n in 0..n_time {
            for i in 0..n_space {
                data.push(f(n, i));
            }
        }
        Self { n_time, n_space, data }
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.n_space..(n + 1) * self.n_space]
    }

    pub fn row_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.data[n * self.n_space..(n + 1) * self.n_space]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, n: usize, i: usize) -> f64 {
        self.data[n * self.n_space + i]
    }

    pub fn set(&mut self, n: usize, i: usize, v: f64) {
        self.data[n * self.n_space + i] = v;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_time == other.n_time && self.n_space == other.n_space
    }

    pub fn check_shape(&self, what: &'static str, n_time: usize, n_space: usize) -> Result<()> {
        if self.n_time != n_time {
            return Err(Error::ShapeMismatch {
                what,
                expected: n_time,
                found: self.n_time,
            });
        }
        if self.n_space != n_space {
            return Err(Error::ShapeMismatch {
                what,
                expected: n_space,
                found: self.n_space,
            });
        }
        Ok(())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            n_time: self.n_time,
            n_space: self.n_space,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        crate::math::norm_inf(&self.data)
    }

    /// Values of spatial node `i` over time.
    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.n_time).map(|n| self.get(n, i)).collect()
    }
}

/// Nodal time derivative of a space-time field: centered in the interior,
/// one-sided first order at both ends (so a field with two vanishing initial
/// layers has vanishing initial derivative).
pub fn time_derivative(f: &SpaceTime, dt: f64) -> SpaceTime {
    let nt = f.n_time();
    let mut out = SpaceTime::zeros(nt, f.n_space());
    for n in 0..nt {
        let (a, b, s) = if n == 0 {
            (0, 1, 1.0 / dt)
        } else if n == nt - 1 {
            (nt - 2, nt - 1, 1.0 / dt)
        } else {
            (n - 1, n + 1, 0.5 / dt)
        };
        for i in 0..f.n_space() {
            out.set(n, i, s * (f.get(b, i) - f.get(a, i)));
        }
    }
    out
}

/// Nodal time derivative with second-order one-sided differences at both ends.
pub fn time_derivative_second_order(f: &SpaceTime, dt: f64) -> SpaceTime {
    let nt = f.n_time();
    let mut out = SpaceTime::zeros(nt, f.n_space());
    for i in 0..f.n_space() {
        let col = f.column(i);
        let d = crate::geometry::derivative(&col, dt);
        for (n, v) in d.iter().enumerate() {
            out.set(n, i, *v);
        }
    }
    out
}
