//! Banded LU factorization without pivoting.
//!
//! The time-stepping matrices are dominated by the scaled mass term
//! `4/dt^2 M`, so Gaussian elimination in natural order is stable and keeps
//! the band intact. A pivot that collapses relative to the row scale is
//! reported as [`Error::SingularSystem`].

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// LU factors of a square matrix with half-bandwidth `width`.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    width: usize,
    // Row-major band storage: entry (i, j) lives at i * stride + (j + width - i).
    band: Vec<f64>,
}

impl BandLu {
    /// Factorizes `a + diag(shift)` (pass an empty slice for no shift).
    pub fn factor(a: &CsrMatrix, shift: &[f64]) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::ShapeMismatch {
                what: "square matrix",
                expected: n,
                found: a.ncols(),
            });
        }
        let width = a.bandwidth();
        let stride = 2 * width + 1;
        let mut band = vec![0.0; n * stride];
        for (r, c, v) in a.entries() {
            band[r * stride + c + width - r] += v;
        }
        if !shift.is_empty() {
            for (i, s) in shift.iter().enumerate() {
                band[i * stride + width] += s;
            }
        }
        let mut lu = Self { n, width, band };
        lu.eliminate()?;
        Ok(lu)
    }

    fn eliminate(&mut self) -> Result<()> {
        let (n, w) = (self.n, self.width);
        let stride = 2 * w + 1;
        for k in 0..n {
            let row_scale = (0..stride)
                .map(|q| self.band[k * stride + q].abs())
                .fold(0.0, f64::max);
            let pivot = self.band[k * stride + w];
            if !(pivot.abs() > 1e-14 * row_scale) || !pivot.is_finite() {
                return Err(Error::SingularSystem { row: k });
            }
            let last = usize::min(n - 1, k + w);
            for i in k + 1..=last {
                let ik = i * stride + k + w - i;
                let l = self.band[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.band[ik] = l;
                for j in k + 1..=last {
                    let kj = self.band[k * stride + j + w - k];
                    self.band[i * stride + j + w - i] -= l * kj;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, w) = (self.n, self.width);
        let stride = 2 * w + 1;
        for i in 0..n {
            let first = i.saturating_sub(w);
            let mut acc = b[i];
            let row = &self.band[i * stride..(i + 1) * stride];
            for j in first..i {
                acc -= row[j + w - i] * b[j];
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let last = usize::min(n - 1, i + w);
            let row = &self.band[i * stride..(i + 1) * stride];
            let mut acc = b[i];
            for j in i + 1..=last {
                acc -= row[j + w - i] * b[j];
            }
            b[i] = acc / row[w];
        }
    }
}
