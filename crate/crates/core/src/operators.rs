//! Discrete spatial operators.
//!
//! * [`assemble_mapped_operator`]: nodal finite-difference form of the mapped
//!   Laplacian (the expansion with cross and first-order terms).
//! * [`assemble_plain_laplacian`]: the unmapped 5-point stencil.
//! * Plate operators on the interior bottom nodes with hinged ends.
//! * [`NeumannSpectrum`]: fractional powers of the discrete Neumann
//!   Laplacian through its cosine eigenbasis.
//! * [`conormal_trace`]: normal derivatives on the boundary parts.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{apply_stencil, first_derivative_stencil, Edge, MappedCoefficients, ReferenceDomain};
use crate::math::{cos, pow, sin, sqrt};
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Sparse operator on grid-node index spaces.
pub type SparseOperator = CsrMatrix;

/// Vertical spacings `(below, above)` around an interior row.
fn vertical_spacings(dom: &ReferenceDomain, j: usize) -> (f64, f64) {
    (dom.cell_height(j - 1), dom.cell_height(j))
}

/// `factor * D2` at interior nodes, with `D2` the nodal mapped Laplacian
/// `xx f_xx + xz f_xzh + zz f_zhzh + z f_zh`. Boundary rows are empty.
/// Exactly zero coefficients are not stored, so the flat profile reproduces
/// the 5-point stencil entry for entry.
pub fn assemble_mapped_operator(coeffs: &MappedCoefficients, factor: f64) -> SparseOperator {
    let dom = &coeffs.dom;
    let n = dom.n_nodes();
    let mut t = TripletBuilder::new(n, n);
    let dx = dom.dx();
    for j in 1..dom.nz() - 1 {
        let (hb, ha) = vertical_spacings(dom, j);
        for i in 1..dom.nx - 1 {
            let k = dom.node(i, j);
            let q = coeffs.d2[k];
            let mut push = |ii: usize, jj: usize, v: f64| {
                if v != 0.0 {
                    t.add(k, dom.node(ii, jj), factor * v);
                }
            };
            let cxx = q.xx / (dx * dx);
            push(i - 1, j, cxx);
            push(i + 1, j, cxx);
            let czz = 2.0 * q.zz / (hb + ha);
            push(i, j + 1, czz / ha);
            push(i, j - 1, czz / hb);
            let cz = q.z / (ha * hb * (ha + hb));
            push(i, j + 1, cz * hb * hb);
            push(i, j - 1, -cz * ha * ha);
            push(i, j, -2.0 * cxx - czz / ha - czz / hb + cz * (ha * ha - hb * hb));
            let cxz = q.xz / (2.0 * dx * (ha + hb));
            push(i + 1, j + 1, cxz);
            push(i - 1, j - 1, cxz);
            push(i + 1, j - 1, -cxz);
            push(i - 1, j + 1, -cxz);
        }
    }
    t.build()
}

/// `factor *` plain 5-point Laplacian at interior nodes (no mapping at all).
pub fn assemble_plain_laplacian(dom: &ReferenceDomain, factor: f64) -> SparseOperator {
    let n = dom.n_nodes();
    let mut t = TripletBuilder::new(n, n);
    let dx = dom.dx();
    for j in 1..dom.nz() - 1 {
        let (hb, ha) = vertical_spacings(dom, j);
        for i in 1..dom.nx - 1 {
            let k = dom.node(i, j);
            let cxx = 1.0 / (dx * dx);
            let czz = 2.0 / (hb + ha);
            let mut push = |ii: usize, jj: usize, v: f64| t.add(k, dom.node(ii, jj), factor * v);
            push(i - 1, j, cxx);
            push(i + 1, j, cxx);
            push(i, j + 1, czz / ha);
            push(i, j - 1, czz / hb);
            push(i, j, -2.0 * cxx - czz / ha - czz / hb);
        }
    }
    t.build()
}

/// Second difference on the interior plate nodes with `w = 0` at both ends.
pub fn plate_laplacian(dom: &ReferenceDomain) -> SparseOperator {
    let np = dom.n_plate();
    let h2 = dom.dx() * dom.dx();
    let mut t = TripletBuilder::new(np, np);
    for p in 0..np {
        t.add(p, p, -2.0 / h2);
        if p > 0 {
            t.add(p, p - 1, 1.0 / h2);
        }
        if p + 1 < np {
            t.add(p, p + 1, 1.0 / h2);
        }
    }
    t.build()
}

/// Hinged fourth difference: the square of [`plate_laplacian`], which
/// encodes `w = 0` and `w'' = 0` at both plate ends.
pub fn assemble_plate_bilaplacian(dom: &ReferenceDomain) -> Result<SparseOperator> {
    if dom.nx < 5 {
        return Err(Error::GridTooCoarse(alloc::format!(
            "the plate needs at least 5 nodes, got {}",
            dom.nx
        )));
    }
    let lap = plate_laplacian(dom);
    let np = dom.n_plate();
    let mut t = TripletBuilder::new(np, np);
    for p in 0..np {
        for (q, a) in lap.row(p) {
            for (r, b) in lap.row(q) {
                t.add(p, r, a * b);
            }
        }
    }
    Ok(t.build())
}

/// Dense `(-Lap_pl)^gamma` on the plate through the sine eigenbasis of
/// [`plate_laplacian`]; returned row-major.
pub fn plate_fractional_dense(dom: &ReferenceDomain, gamma: f64) -> Vec<f64> {
    let np = dom.n_plate();
    let h = dom.dx();
    let m = np + 1;
    let mut out = vec![0.0; np * np];
    for k in 1..=np {
        let lam = 4.0 / (h * h) * pow(sin(0.5 * k as f64 * PI / m as f64), 2.0);
        let lp = pow(lam, gamma);
        for p in 0..np {
            let vp = sin(k as f64 * PI * (p + 1) as f64 / m as f64);
            for q in 0..np {
                let vq = sin(k as f64 * PI * (q + 1) as f64 / m as f64);
                out[p * np + q] += 2.0 / m as f64 * lp * vp * vq;
            }
        }
    }
    out
}

/// Which interval a fractional operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FractionalDomain {
    /// The Neumann edge in reference coordinates.
    GammaN,
    /// The parameter interval B of the boundary profile.
    B,
    /// The plate.
    GammaPl,
}

/// Exponent and interval of `(-Lap_N + id)^s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalSpec {
    pub s: f64,
    pub domain: FractionalDomain,
    pub length: f64,
}

/// Cosine eigenbasis of the Neumann second difference on a uniform grid.
///
/// With the ghost-node closure `f_{-1} = f_1`, the modes `cos(k pi i/(n-1))`
/// are exact eigenvectors with eigenvalues `(4/h^2) sin^2(k pi/(2(n-1)))`
/// and are orthogonal in the trapezoid inner product. Powers are therefore
/// self-adjoint in that inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct NeumannSpectrum {
    n: usize,
    weights: Vec<f64>,
    eigenvalues: Vec<f64>,
    // modes[k * n + i] = cos(k pi i / (n - 1))
    modes: Vec<f64>,
    norms: Vec<f64>,
}

impl NeumannSpectrum {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 2 || !(length > 0.0) {
            return Err(Error::GridTooCoarse(alloc::format!(
                "fractional operator needs >= 2 nodes and positive length (n = {n}, L = {length})"
            )));
        }
        let h = length / (n - 1) as f64;
        let weights = crate::geometry::trapezoid_weights(n, h);
        let m = (n - 1) as f64;
        let eigenvalues = (0..n)
            .map(|k| 4.0 / (h * h) * pow(sin(0.5 * k as f64 * PI / m), 2.0))
            .collect();
        let mut modes = vec![0.0; n * n];
        for k in 0..n {
            for i in 0..n {
                // reduce the phase to keep the cosine argument small
                let phase = (k * i) % (2 * (n - 1));
                modes[k * n + i] = cos(phase as f64 * PI / m);
            }
        }
        let norms = (0..n)
            .map(|k| (0..n).map(|i| weights[i] * modes[k * n + i] * modes[k * n + i]).sum())
            .collect();
        Ok(Self {
            n,
            weights,
            eigenvalues,
            modes,
            norms,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Trapezoid weights of the grid.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Applies `(-Lap_N + id)^s`.
    pub fn apply(&self, field: &[f64], s: f64) -> Result<Vec<f64>> {
        if field.len() != self.n {
            return Err(Error::ShapeMismatch {
                what: "fractional operand",
                expected: self.n,
                found: field.len(),
            });
        }
        let n = self.n;
        let mut out = vec![0.0; n];
        for k in 0..n {
            let mode = &self.modes[k * n..(k + 1) * n];
            let mut proj = 0.0;
            let mut magnitude = 0.0;
            for i in 0..n {
                let t = self.weights[i] * field[i] * mode[i];
                proj += t;
                magnitude += t.abs();
            }
            // a projection at roundoff level is indistinguishable from zero
            if proj.abs() <= 4.0 * n as f64 * f64::EPSILON * magnitude {
                continue;
            }
            let c = proj / self.norms[k] * pow(self.eigenvalues[k] + 1.0, s);
            for i in 0..n {
                out[i] += c * mode[i];
            }
        }
        Ok(out)
    }

    /// `||(-Lap_N + id)^s f||^2` in the trapezoid inner product.
    pub fn norm_squared(&self, field: &[f64], s: f64) -> Result<f64> {
        let g = self.apply(field, s)?;
        Ok(g.iter().zip(&self.weights).map(|(v, w)| w * v * v).sum())
    }
}

/// Applies `(-Lap_N + id)^s` on the uniform grid described by `spec`.
pub fn fractional_neumann_apply(field: &[f64], spec: &FractionalSpec) -> Result<Vec<f64>> {
    NeumannSpectrum::new(field.len(), spec.length)?.apply(field, spec.s)
}

/// Normal derivative of a nodal field on a boundary part.
///
/// On the Neumann edge the result is the physical normal derivative on the
/// mapped graph, `nu . (M grad f)` with `nu = (-ell', 1)/sigma`, using
/// second-order one-sided differences in `zh`. On the absorbing edges (left
/// column then right column) and on the plate edge it is the plain outward
/// difference.
pub fn conormal_trace(field: &[f64], coeffs: &MappedCoefficients, edge: Edge) -> Result<Vec<f64>> {
    let dom = &coeffs.dom;
    if field.len() != dom.n_nodes() {
        return Err(Error::ShapeMismatch {
            what: "conormal trace field",
            expected: dom.n_nodes(),
            found: field.len(),
        });
    }
    let dx = dom.dx();
    let nx = dom.nx;
    let nz = dom.nz();
    let f = |i: usize, j: usize| field[dom.node(i, j)];
    match edge {
        Edge::Neumann => {
            let top = nz - 1;
            let h = dom.dz_var();
            let row: Vec<f64> = (0..nx).map(|i| f(i, top)).collect();
            Ok((0..nx)
                .map(|i| {
                    let fx = apply_stencil(&first_derivative_stencil(i, nx, dx), &row);
                    let fz = (3.0 * f(i, top) - 4.0 * f(i, top - 1) + f(i, top - 2)) / (2.0 * h);
                    let m = coeffs.m[dom.node(i, top)];
                    let gx = m[0] * fx + m[1] * fz;
                    let gz = m[2] * fx + m[3] * fz;
                    let s = coeffs.slope(i);
                    (-s * gx + gz) / sqrt(1.0 + s * s)
                })
                .collect())
        }
        Edge::Plate => {
            let h = dom.cell_height(0);
            Ok((0..nx)
                .map(|i| -(-3.0 * f(i, 0) + 4.0 * f(i, 1) - f(i, 2)) / (2.0 * h))
                .collect())
        }
        Edge::Absorbing => {
            let left = (0..nz).map(|j| -(-3.0 * f(0, j) + 4.0 * f(1, j) - f(2, j)) / (2.0 * dx));
            let right = (0..nz).map(|j| (3.0 * f(nx - 1, j) - 4.0 * f(nx - 2, j) + f(nx - 3, j)) / (2.0 * dx));
            Ok(left.chain(right).collect())
        }
    }
}
