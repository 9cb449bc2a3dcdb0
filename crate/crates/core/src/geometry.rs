//! Reference grid, boundary profiles and method-of-mapping coefficients.
//!
//! The reference domain is `[0, Lx] x [-H_fix, ell0]`. Rows `0..=jf` (with
//! `jf = nz_fix - 1`) discretize the fixed block `[-H_fix, 0]`; rows `jf..`
//! discretize the variable block in the reference height `zh in [0, ell0]`.
//! A physical point of the variable block is `(x, zh * r(x))` with
//! `r = ell / ell0`.
//!
//! Nodes are numbered row-major with `x` fastest: `node = j * nx + i`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sqrt;

/// Tolerance used for the discrete endpoint-trace conditions.
pub const TRACE_TOL: f64 = 1e-12;

/// The reference rectangle and its tensor grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceDomain {
    pub lx: f64,
    pub h_fix: f64,
    pub ell0: f64,
    pub nx: usize,
    pub nz_fix: usize,
    pub nz_var: usize,
}

/// Boundary parts of the reference rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    /// Top edge: the variable Neumann boundary (a graph over B).
    Neumann,
    /// Left and right edges carrying the absorbing condition.
    Absorbing,
    /// Bottom edge, coupled to the plate.
    Plate,
}

/// Classification of a grid node; corners belong to the absorbing edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    Neumann,
    Absorbing,
    Plate,
}

impl ReferenceDomain {
    pub fn new(lx: f64, h_fix: f64, ell0: f64, nx: usize, nz_fix: usize, nz_var: usize) -> Result<Self> {
        let dom = Self {
            lx,
            h_fix,
            ell0,
            nx,
            nz_fix,
            nz_var,
        };
        dom.check()?;
        Ok(dom)
    }

    /// The 33 x 41 unit configuration with a quarter-height fixed block.
    pub fn standard() -> Self {
        Self {
            lx: 1.0,
            h_fix: 0.25,
            ell0: 1.0,
            nx: 33,
            nz_fix: 9,
            nz_var: 33,
        }
    }

    /// Same physical box with every cell split in two along each axis.
    pub fn refined(&self) -> Self {
        Self {
            nx: 2 * self.nx - 1,
            nz_fix: if self.h_fix > 0.0 { 2 * self.nz_fix - 1 } else { 1 },
            nz_var: 2 * self.nz_var - 1,
            ..*self
        }
    }

    pub fn check(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.lx) {
            return Err(Error::InvalidParameter(format!("Lx must be positive, got {}", self.lx)));
        }
        if !positive(self.ell0) {
            return Err(Error::InvalidParameter(format!("ell0 must be positive, got {}", self.ell0)));
        }
        if !(self.h_fix >= 0.0 && self.h_fix.is_finite()) {
            return Err(Error::InvalidParameter(format!("H_fix must be >= 0, got {}", self.h_fix)));
        }
        if self.nx < 5 {
            return Err(Error::GridTooCoarse(format!("Nx = {} < 5", self.nx)));
        }
        if self.nz_var < 3 {
            return Err(Error::GridTooCoarse(format!("Nz_var = {} < 3", self.nz_var)));
        }
        if self.h_fix > 0.0 && self.nz_fix < 2 {
            return Err(Error::GridTooCoarse(format!("Nz_fix = {} < 2", self.nz_fix)));
        }
        if self.h_fix == 0.0 && self.nz_fix != 1 {
            return Err(Error::InvalidParameter(String::from(
                "H_fix = 0 requires Nz_fix = 1 (no fixed block)",
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.lx / (self.nx - 1) as f64
    }

    pub fn dz_fix(&self) -> f64 {
        if self.nz_fix > 1 {
            self.h_fix / (self.nz_fix - 1) as f64
        } else {
            0.0
        }
    }

    pub fn dz_var(&self) -> f64 {
        self.ell0 / (self.nz_var - 1) as f64
    }

    /// Index of the row at z = 0 (the interface between the blocks).
    pub fn interface_row(&self) -> usize {
        self.nz_fix - 1
    }

    /// Total number of grid rows.
    pub fn nz(&self) -> usize {
        self.nz_fix + self.nz_var - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nx * self.nz()
    }

    /// Number of plate unknowns (interior bottom nodes; the plate is hinged).
    pub fn n_plate(&self) -> usize {
        self.nx - 2
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    /// Reference vertical coordinate: `z` in the fixed block, `zh` above.
    pub fn zref(&self, j: usize) -> f64 {
        let jf = self.interface_row();
        if j <= jf {
            -self.h_fix + j as f64 * self.dz_fix()
        } else {
            (j - jf) as f64 * self.dz_var()
        }
    }

    /// Whether row `j` lies in the variable block (the interface row included).
    pub fn is_var_row(&self, j: usize) -> bool {
        j >= self.interface_row()
    }

    /// Whether the cell between rows `j` and `j + 1` lies in the variable block.
    pub fn is_var_cell(&self, j: usize) -> bool {
        j >= self.interface_row()
    }

    pub fn cell_height(&self, j: usize) -> f64 {
        if self.is_var_cell(j) {
            self.dz_var()
        } else {
            self.dz_fix()
        }
    }

    /// Trapezoid weights on B.
    pub fn b_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.nx, self.dx())
    }

    /// Node index of plate unknown `p` (bottom row, column `p + 1`).
    pub fn plate_node(&self, p: usize) -> usize {
        self.node(p + 1, 0)
    }

    pub fn classify(&self, i: usize, j: usize) -> NodeKind {
        let top = self.nz() - 1;
        if i == 0 || i == self.nx - 1 {
            NodeKind::Absorbing
        } else if j == 0 {
            NodeKind::Plate
        } else if j == top {
            NodeKind::Neumann
        } else {
            NodeKind::Interior
        }
    }

    /// Node indices of a boundary part. The Neumann and plate edges list the
    /// whole top/bottom row; the absorbing part lists the left column bottom to
    /// top, then the right column.
    pub fn edge_nodes(&self, edge: Edge) -> Vec<usize> {
        let top = self.nz() - 1;
        match edge {
            Edge::Neumann => (0..self.nx).map(|i| self.node(i, top)).collect(),
            Edge::Plate => (0..self.nx).map(|i| self.node(i, 0)).collect(),
            Edge::Absorbing => (0..self.nz())
                .map(|j| self.node(0, j))
                .chain((0..self.nz()).map(|j| self.node(self.nx - 1, j)))
                .collect(),
        }
    }
}

/// Trapezoid weights for `n` nodes of spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n > 0 {
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
    }
    w
}

/// Stencil of the nodal first derivative on a uniform 1D grid: centered in
/// the interior, second-order one-sided at the ends.
pub fn first_derivative_stencil(i: usize, n: usize, h: f64) -> [(usize, f64); 3] {
    let s = 0.5 / h;
    if i == 0 {
        [(0, -3.0 * s), (1, 4.0 * s), (2, -s)]
    } else if i == n - 1 {
        [(n - 1, 3.0 * s), (n - 2, -4.0 * s), (n - 3, s)]
    } else {
        [(i - 1, -s), (i + 1, s), (i, 0.0)]
    }
}

/// Stencil of the nodal second derivative: centered in the interior,
/// second-order one-sided (four points) at the ends.
pub fn second_derivative_stencil(i: usize, n: usize, h: f64) -> [(usize, f64); 4] {
    let s = 1.0 / (h * h);
    if i == 0 {
        [(0, 2.0 * s), (1, -5.0 * s), (2, 4.0 * s), (3, -s)]
    } else if i == n - 1 {
        [(n - 1, 2.0 * s), (n - 2, -5.0 * s), (n - 3, 4.0 * s), (n - 4, -s)]
    } else {
        [(i - 1, s), (i, -2.0 * s), (i + 1, s), (i, 0.0)]
    }
}

/// Applies a derivative stencil to nodal data.
pub fn apply_stencil(stencil: &[(usize, f64)], f: &[f64]) -> f64 {
    stencil.iter().map(|&(k, c)| c * f[k]).sum()
}

/// Nodal first derivative of `f` (see [`first_derivative_stencil`]).
pub fn derivative(f: &[f64], h: f64) -> Vec<f64> {
    (0..f.len())
        .map(|i| apply_stencil(&first_derivative_stencil(i, f.len(), h), f))
        .collect()
}

/// Nodal second derivative of `f` (see [`second_derivative_stencil`]).
pub fn second_derivative(f: &[f64], h: f64) -> Vec<f64> {
    (0..f.len())
        .map(|i| apply_stencil(&second_derivative_stencil(i, f.len(), h), f))
        .collect()
}

/// Compactly supported bump `((x - a)(b - x))^4`, normalized to peak 1,
/// vanishing identically outside `(a, b)`. It is C^3 and has the closed-form
/// integral `(b - a) * 128 / 315`.
pub fn bump(x: f64, a: f64, b: f64) -> f64 {
    if x <= a || x >= b {
        return 0.0;
    }
    let half = 0.5 * (b - a);
    let q = (x - a) * (b - x) / (half * half);
    q * q * q * q
}

/// Exact integral of [`bump`] over the real line.
pub fn bump_integral(a: f64, b: f64) -> f64 {
    (b - a) * 128.0 / 315.0
}

/// Derivative of [`bump`] with respect to `x`.
pub fn bump_derivative(x: f64, a: f64, b: f64) -> f64 {
    if x <= a || x >= b {
        return 0.0;
    }
    let half2 = 0.25 * (b - a) * (b - a);
    let q = (x - a) * (b - x) / half2;
    let dq = (a + b - 2.0 * x) / half2;
    4.0 * q * q * q * dq
}

/// Samples of the boundary height `ell` at the `Nx` nodes of B.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryProfile {
    pub ell: Vec<f64>,
    pub ell0_ref: f64,
}

impl BoundaryProfile {
    /// The reference profile `ell = ell0`.
    pub fn flat(dom: &ReferenceDomain) -> Self {
        Self {
            ell: vec![dom.ell0; dom.nx],
            ell0_ref: dom.ell0,
        }
    }

    /// Samples `f(x)` at the nodes of B.
    pub fn from_fn(dom: &ReferenceDomain, f: impl Fn(f64) -> f64) -> Self {
        Self {
            ell: (0..dom.nx).map(|i| f(dom.x(i))).collect(),
            ell0_ref: dom.ell0,
        }
    }

    /// `ell0 + amplitude * bump(x; a, b)`.
    pub fn with_bump(dom: &ReferenceDomain, amplitude: f64, a: f64, b: f64) -> Self {
        let ell0 = dom.ell0;
        Self::from_fn(dom, |x| ell0 + amplitude * bump(x, a, b))
    }

    pub fn len(&self) -> usize {
        self.ell.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ell.is_empty()
    }

    /// `ell - ell0` at each node.
    pub fn deviation(&self) -> Vec<f64> {
        self.ell.iter().map(|l| l - self.ell0_ref).collect()
    }
}

/// One violated admissibility condition.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// The profile is not sampled on the domain's B grid.
    GridMismatch { expected: usize, found: usize },
    /// The profile's reference height differs from the domain's.
    ReferenceMismatch { domain: f64, profile: f64 },
    /// `ell <= 0` at a node.
    Positivity { node: usize, value: f64 },
    /// `max |ell - ell0| > ell0 / 2`.
    Closeness { deviation: f64, bound: f64 },
    /// `ell != ell0` at an endpoint of B.
    EndpointValue { node: usize, deviation: f64 },
    /// One-sided first difference of `ell - ell0` nonzero at an endpoint.
    EndpointSlope { node: usize, slope: f64 },
}

/// Outcome of [`validate_profile`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdmissibilityReport {
    pub violations: Vec<Violation>,
}

impl AdmissibilityReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_admissible() {
            Ok(())
        } else {
            Err(Error::InadmissibleProfile(format!("{:?}", self.violations)))
        }
    }
}

/// Checks positivity, closeness to `ell0` and the endpoint traces.
pub fn validate_profile(ell: &BoundaryProfile, dom: &ReferenceDomain) -> AdmissibilityReport {
    let mut violations = Vec::new();
    if ell.len() != dom.nx {
        violations.push(Violation::GridMismatch {
            expected: dom.nx,
            found: ell.len(),
        });
        return AdmissibilityReport { violations };
    }
    if ell.ell0_ref != dom.ell0 {
        violations.push(Violation::ReferenceMismatch {
            domain: dom.ell0,
            profile: ell.ell0_ref,
        });
    }
    for (node, &value) in ell.ell.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            violations.push(Violation::Positivity { node, value });
        }
    }
    let dev = ell.deviation();
    let deviation = crate::math::norm_inf(&dev);
    let bound = 0.5 * dom.ell0;
    if deviation > bound * (1.0 + TRACE_TOL) {
        violations.push(Violation::Closeness { deviation, bound });
    }
    let tol = TRACE_TOL * dom.ell0.max(1.0);
    let n = dom.nx;
    for node in [0, n - 1] {
        if dev[node].abs() > tol {
            violations.push(Violation::EndpointValue {
                node,
                deviation: dev[node],
            });
        }
    }
    let dx = dom.dx();
    for (node, slope) in [(0, (dev[1] - dev[0]) / dx), (n - 1, (dev[n - 1] - dev[n - 2]) / dx)] {
        if (slope * dx).abs() > tol {
            violations.push(Violation::EndpointSlope { node, slope });
        }
    }
    AdmissibilityReport { violations }
}

/// Coefficients of the mapped second-order operator at one node:
/// `xx * f_xx + xz * f_xzh + zz * f_zhzh + z * f_zh`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct D2Ingredients {
    pub xx: f64,
    pub xz: f64,
    pub zz: f64,
    pub z: f64,
}

impl D2Ingredients {
    /// The plain Laplacian.
    pub const LAPLACE: Self = Self {
        xx: 1.0,
        xz: 0.0,
        zz: 1.0,
        z: 0.0,
    };
}

/// Pointwise mapping quantities at reference height `zh` of a column with
/// `r = ell/ell0`, `rp = r'`, `rpp = r''`. Returns `(omega0, M, D2)` with
/// `M = [[m11, m12], [m21, m22]]` stored row-major.
///
/// No admissibility check is made; this is the formula used by
/// [`transform_coefficients`] at every node of the variable block.
pub fn metric_at(r: f64, rp: f64, rpp: f64, zh: f64) -> (f64, [f64; 4], D2Ingredients) {
    let inv = 1.0 / r;
    let m = [1.0, -zh * rp * inv, 0.0, inv];
    let d2 = D2Ingredients {
        xx: 1.0,
        xz: -2.0 * zh * rp * inv,
        zz: (1.0 + zh * zh * rp * rp) * inv * inv,
        z: -zh * rpp * inv + 2.0 * zh * rp * rp * inv * inv,
    };
    (inv, m, d2)
}

/// Derivative of [`metric_at`] in the direction `(dr, drp, drpp)`.
/// Returns `(d(1/omega0), dM, dD2)`.
pub fn metric_derivative_at(
    r: f64,
    rp: f64,
    rpp: f64,
    zh: f64,
    dr: f64,
    drp: f64,
    drpp: f64,
) -> (f64, [f64; 4], D2Ingredients) {
    let inv = 1.0 / r;
    let inv2 = inv * inv;
    let inv3 = inv2 * inv;
    let dm12 = -zh * (drp * inv - rp * dr * inv2);
    let dm22 = -dr * inv2;
    let dd2 = D2Ingredients {
        xx: 0.0,
        xz: 2.0 * dm12,
        zz: 2.0 * zh * zh * rp * drp * inv2 - 2.0 * (1.0 + zh * zh * rp * rp) * dr * inv3,
        z: -zh * (drpp * inv - rpp * dr * inv2) + 2.0 * zh * (2.0 * rp * drp * inv2 - 2.0 * rp * rp * dr * inv3),
    };
    (dr, [0.0, dm12, 0.0, dm22], dd2)
}

/// Nodal mapping coefficients for an admissible profile.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedCoefficients {
    pub dom: ReferenceDomain,
    /// Profile samples the coefficients were built from.
    pub ell: Vec<f64>,
    /// Column data `r = ell/ell0`, `r'`, `r''`.
    pub r: Vec<f64>,
    pub rp: Vec<f64>,
    pub rpp: Vec<f64>,
    /// Volume factor `omega0 = 1/r` in the variable block, 1 below.
    pub omega0: Vec<f64>,
    /// Surface factor `omega1 = sqrt(1 + ell'^2)` on the Neumann edge.
    pub omega1: Vec<f64>,
    /// Row-major 2 x 2 matrix `M` per node.
    pub m: Vec<[f64; 4]>,
    pub d2: Vec<D2Ingredients>,
}

impl MappedCoefficients {
    /// Physical slope `ell'` at node `i` of B.
    pub fn slope(&self, i: usize) -> f64 {
        self.rp[i] * self.dom.ell0
    }
}

/// Builds all nodal mapping coefficients. Derivatives of `r` use
/// [`derivative`] and [`second_derivative`].
pub fn transform_coefficients(ell: &BoundaryProfile, dom: &ReferenceDomain) -> Result<MappedCoefficients> {
    validate_profile(ell, dom).into_result()?;
    Ok(transform_coefficients_unchecked(ell, dom))
}

/// [`transform_coefficients`] without the admissibility check, for inspecting
/// analytic profiles that violate the endpoint traces. The caller must ensure
/// `ell > 0`.
pub fn transform_coefficients_unchecked(ell: &BoundaryProfile, dom: &ReferenceDomain) -> MappedCoefficients {
    let dx = dom.dx();
    let r: Vec<f64> = ell.ell.iter().map(|l| l / dom.ell0).collect();
    let rp = derivative(&r, dx);
    let rpp = second_derivative(&r, dx);
    let n = dom.n_nodes();
    let mut omega0 = vec![1.0; n];
    let mut m = vec![[1.0, 0.0, 0.0, 1.0]; n];
    let mut d2 = vec![D2Ingredients::LAPLACE; n];
    for j in dom.interface_row()..dom.nz() {
        let zh = dom.zref(j);
        for i in 0..dom.nx {
            let k = dom.node(i, j);
            let (w0, mm, dd) = metric_at(r[i], rp[i], rpp[i], zh);
            omega0[k] = w0;
            m[k] = mm;
            d2[k] = dd;
        }
    }
    let omega1 = rp
        .iter()
        .map(|s| {
            let sl = s * dom.ell0;
            sqrt(1.0 + sl * sl)
        })
        .collect();
    MappedCoefficients {
        dom: *dom,
        ell: ell.ell.clone(),
        r,
        rp,
        rpp,
        omega0,
        omega1,
        m,
        d2,
    }
}

/// Directional derivatives of the mapping coefficients with respect to `ell`.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedCoefficientsDerivative {
    /// Derivative of `1/omega0` (equals `dell/ell0` in the variable block).
    pub d_inv_omega0: Vec<f64>,
    pub d_m: Vec<[f64; 4]>,
    pub d_omega1: Vec<f64>,
    pub d_d2: Vec<D2Ingredients>,
}

/// Checks that a shape perturbation vanishes with its first difference at
/// both ends of B.
pub fn check_perturbation_traces(dell: &[f64], dom: &ReferenceDomain) -> Result<()> {
    if dell.len() != dom.nx {
        return Err(Error::ShapeMismatch {
            what: "shape perturbation",
            expected: dom.nx,
            found: dell.len(),
        });
    }
    let n = dom.nx;
    let scale = crate::math::norm_inf(dell).max(1.0) * TRACE_TOL;
    let bad = [dell[0], dell[1], dell[n - 2], dell[n - 1]]
        .iter()
        .any(|v| v.abs() > scale);
    if bad {
        return Err(Error::TraceViolation(format!(
            "endpoint values ({}, {}) and ({}, {})",
            dell[0],
            dell[1],
            dell[n - 2],
            dell[n - 1]
        )));
    }
    Ok(())
}

/// Linearization of [`transform_coefficients`] at `ell` in direction `dell`.
pub fn coefficient_derivative(
    ell: &BoundaryProfile,
    dell: &[f64],
    dom: &ReferenceDomain,
) -> Result<MappedCoefficientsDerivative> {
    let coeffs = transform_coefficients(ell, dom)?;
    check_perturbation_traces(dell, dom)?;
    let dx = dom.dx();
    let dr: Vec<f64> = dell.iter().map(|d| d / dom.ell0).collect();
    let drp = derivative(&dr, dx);
    let drpp = second_derivative(&dr, dx);
    let n = dom.n_nodes();
    let mut d_inv_omega0 = vec![0.0; n];
    let mut d_m = vec![[0.0; 4]; n];
    let mut d_d2 = vec![D2Ingredients::default(); n];
    for j in dom.interface_row()..dom.nz() {
        let zh = dom.zref(j);
        for i in 0..dom.nx {
            let k = dom.node(i, j);
            let (a, b, c) = metric_derivative_at(
                coeffs.r[i],
                coeffs.rp[i],
                coeffs.rpp[i],
                zh,
                dr[i],
                drp[i],
                drpp[i],
            );
            d_inv_omega0[k] = a;
            d_m[k] = b;
            d_d2[k] = c;
        }
    }
    let d_omega1 = (0..dom.nx)
        .map(|i| {
            let s = coeffs.slope(i);
            s * drp[i] * dom.ell0 / coeffs.omega1[i]
        })
        .collect();
    Ok(MappedCoefficientsDerivative {
        d_inv_omega0,
        d_m,
        d_omega1,
        d_d2,
    })
}

/// Geometry of the graph boundary `z = ell(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGeometry {
    pub sigma: Vec<f64>,
    pub nu: Vec<[f64; 2]>,
    pub curvature: Vec<f64>,
}

/// `sigma = sqrt(1 + ell'^2)`, outward normal `(-ell', 1)/sigma` and mean
/// curvature `H = -sigma d/dx(ell'/sigma)`, all by nodal differences.
///
/// Only positivity is required here, so that non-admissible analytic test
/// profiles can be inspected as well.
pub fn boundary_geometry(ell: &BoundaryProfile, dom: &ReferenceDomain) -> Result<BoundaryGeometry> {
    if ell.len() != dom.nx {
        return Err(Error::ShapeMismatch {
            what: "profile",
            expected: dom.nx,
            found: ell.len(),
        });
    }
    if let Some((i, v)) = ell.ell.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::InadmissibleProfile(format!("ell[{i}] = {v} is not positive")));
    }
    let dx = dom.dx();
    let slope = derivative(&ell.ell, dx);
    let sigma: Vec<f64> = slope.iter().map(|s| sqrt(1.0 + s * s)).collect();
    let nu = slope.iter().zip(&sigma).map(|(s, g)| [-s / g, 1.0 / g]).collect();
    let ratio: Vec<f64> = slope.iter().zip(&sigma).map(|(s, g)| s / g).collect();
    let curvature = derivative(&ratio, dx)
        .iter()
        .zip(&sigma)
        .map(|(d, g)| -g * d)
        .collect();
    Ok(BoundaryGeometry { sigma, nu, curvature })
}

/// Physical coordinates `(x, z)` of every reference node.
pub fn physical_nodes(coeffs: &MappedCoefficients) -> Vec<[f64; 2]> {
    let dom = &coeffs.dom;
    let mut out = Vec::with_capacity(dom.n_nodes());
    for j in 0..dom.nz() {
        for i in 0..dom.nx {
            let z = if dom.is_var_row(j) {
                dom.zref(j) * coeffs.r[i]
            } else {
                dom.zref(j)
            };
            out.push([dom.x(i), z]);
        }
    }
    out
}

/// Samples a physical field `f(x, z)` at the mapped nodes.
pub fn pull_back(coeffs: &MappedCoefficients, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    physical_nodes(coeffs).iter().map(|p| f(p[0], p[1])).collect()
}

/// Transports a nodal reference field to physical sample points `(x, z, value)`.
pub fn push_forward(coeffs: &MappedCoefficients, field: &[f64]) -> Vec<[f64; 3]> {
    physical_nodes(coeffs)
        .iter()
        .zip(field)
        .map(|(p, v)| [p[0], p[1], *v])
        .collect()
}

/// Inverse of [`push_forward`]: locates each physical sample on the
/// reference grid through the inverse map and stores its value there.
pub fn pull_back_samples(coeffs: &MappedCoefficients, samples: &[[f64; 3]]) -> Result<Vec<f64>> {
    let dom = &coeffs.dom;
    if samples.len() != dom.n_nodes() {
        return Err(Error::ShapeMismatch {
            what: "samples",
            expected: dom.n_nodes(),
            found: samples.len(),
        });
    }
    let mut field = vec![0.0; dom.n_nodes()];
    let jf = dom.interface_row();
    for s in samples {
        let i = libm::round(s[0] / dom.dx()) as usize;
        let r = coeffs.r[i.min(dom.nx - 1)];
        let j = if s[1] >= 0.0 || dom.nz_fix == 1 {
            jf + libm::round(s[1] / r / dom.dz_var()) as usize
        } else {
            libm::round((s[1] + dom.h_fix) / dom.dz_fix()) as usize
        };
        if i >= dom.nx || j >= dom.nz() {
            return Err(Error::InvalidParameter(format!(
                "sample ({}, {}) outside the domain",
                s[0], s[1]
            )));
        }
        field[dom.node(i, j)] = s[2];
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dom() -> ReferenceDomain {
        ReferenceDomain::standard()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn flat_profile_gives_identity_map() {
        let d = dom();
        let c = transform_coefficients(&BoundaryProfile::flat(&d), &d).unwrap();
        assert!(c.omega0.iter().all(|&w| w == 1.0));
        assert!(c.omega1.iter().all(|&w| w == 1.0));
        assert!(c.m.iter().all(|m| *m == [1.0, 0.0, 0.0, 1.0]));
        assert!(c.d2.iter().all(|q| *q == D2Ingredients::LAPLACE));
    }

    #[test]
    fn constant_lift_scales_vertical_metric() {
        let d = dom();
        let ell = BoundaryProfile::from_fn(&d, |_| 1.25);
        let c = transform_coefficients_unchecked(&ell, &d);
        let k = d.node(7, d.nz() - 3);
        assert!(close(c.omega0[k], 0.8, 1e-15));
        assert!(close(c.omega1[7], 1.0, 1e-15));
        assert!(close(c.m[k][0], 1.0, 0.0) && close(c.m[k][1], 0.0, 1e-15));
        assert!(close(c.m[k][3], 0.8, 1e-15));
        // below the interface nothing changes
        assert_eq!(c.omega0[d.node(7, 2)], 1.0);
    }

    #[test]
    fn affine_profile_cross_metric() {
        let d = dom();
        let ell = BoundaryProfile::from_fn(&d, |x| 1.0 + 0.1 * x);
        let c = transform_coefficients_unchecked(&ell, &d);
        for &(i, j) in &[(0, 20), (5, 30), (32, 40), (16, 8)] {
            let zh = d.zref(j);
            let x = d.x(i);
            let expected = -zh * 0.1 / (1.0 + 0.1 * x);
            assert!(close(c.m[d.node(i, j)][1], expected, 1e-13), "node ({i},{j})");
        }
        let (_, m, _) = metric_at(1.05, 0.1, 0.0, 0.5);
        assert!(close(m[1], -0.05 / 1.05, 1e-15));
    }

    #[test]
    fn validation_examples() {
        let d = dom();
        assert!(validate_profile(&BoundaryProfile::flat(&d), &d).is_admissible());
        let lifted = BoundaryProfile::from_fn(&d, |_| 1.6);
        let rep = validate_profile(&lifted, &d);
        assert!(rep
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Closeness { deviation, .. } if close(*deviation, 0.6, 1e-12))));
        let bumped = BoundaryProfile::with_bump(&d, 0.1, 0.2, 0.8);
        assert!(validate_profile(&bumped, &d).is_admissible());
        let mut broken = bumped.clone();
        broken.ell[1] += 1e-3;
        let rep = validate_profile(&broken, &d);
        assert!(rep
            .violations
            .iter()
            .any(|v| matches!(v, Violation::EndpointSlope { node: 0, .. })));
        let mut negative = bumped;
        negative.ell[10] = -0.1;
        assert!(validate_profile(&negative, &d)
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Positivity { node: 10, .. })));
    }

    #[test]
    fn zero_direction_has_zero_derivative() {
        let d = dom();
        let ell = BoundaryProfile::with_bump(&d, 0.1, 0.2, 0.8);
        let der = coefficient_derivative(&ell, &vec![0.0; d.nx], &d).unwrap();
        assert!(der.d_inv_omega0.iter().all(|v| *v == 0.0));
        assert!(der.d_omega1.iter().all(|v| *v == 0.0));
        assert!(der.d_m.iter().all(|m| m.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn derivative_at_reference_profile() {
        let d = dom();
        let eps = 1e-3;
        let dell: Vec<f64> = (0..d.nx).map(|i| eps * bump(d.x(i), 0.2, 0.8)).collect();
        let der = coefficient_derivative(&BoundaryProfile::flat(&d), &dell, &d).unwrap();
        let (i, j) = (16, 30);
        let k = d.node(i, j);
        assert!(close(der.d_inv_omega0[k], eps, 1e-15));
        assert!(close(der.d_m[k][3], -eps, 1e-15));
        assert_eq!(der.d_inv_omega0[d.node(i, 3)], 0.0);
    }

    #[test]
    fn perturbation_with_nonzero_trace_is_rejected() {
        let d = dom();
        let dell = vec![1e-3; d.nx];
        assert!(matches!(
            coefficient_derivative(&BoundaryProfile::flat(&d), &dell, &d),
            Err(Error::TraceViolation(_))
        ));
    }

    fn coefficient_vector(c: &MappedCoefficients) -> Vec<f64> {
        let mut v = Vec::new();
        for k in 0..c.omega0.len() {
            v.push(1.0 / c.omega0[k]);
            v.extend_from_slice(&c.m[k]);
            let q = c.d2[k];
            v.extend_from_slice(&[q.xx, q.xz, q.zz, q.z]);
        }
        v.extend_from_slice(&c.omega1);
        v
    }

    fn derivative_vector(der: &MappedCoefficientsDerivative) -> Vec<f64> {
        let mut v = Vec::new();
        for k in 0..der.d_inv_omega0.len() {
            v.push(der.d_inv_omega0[k]);
            v.extend_from_slice(&der.d_m[k]);
            let q = der.d_d2[k];
            v.extend_from_slice(&[q.xx, q.xz, q.zz, q.z]);
        }
        v.extend_from_slice(&der.d_omega1);
        v
    }

    #[test]
    fn derivative_matches_finite_differences_at_first_order() {
        let d = dom();
        let ell = BoundaryProfile::with_bump(&d, 0.15, 0.1, 0.7);
        let dell: Vec<f64> = (0..d.nx).map(|i| 0.2 * bump(d.x(i), 0.3, 0.9)).collect();
        let base = coefficient_vector(&transform_coefficients(&ell, &d).unwrap());
        let lin = derivative_vector(&coefficient_derivative(&ell, &dell, &d).unwrap());
        let mut errors = Vec::new();
        for tau in [1e-2, 1e-3, 1e-4, 1e-5] {
            let mut moved = ell.clone();
            for (l, dl) in moved.ell.iter_mut().zip(&dell) {
                *l += tau * dl;
            }
            let pert = coefficient_vector(&transform_coefficients(&moved, &d).unwrap());
            let err = pert
                .iter()
                .zip(&base)
                .zip(&lin)
                .map(|((p, b), l)| ((p - b) / tau - l).abs())
                .fold(0.0, f64::max);
            errors.push(err);
        }
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 7.0 && ratio < 13.0, "errors {errors:?}");
        }
    }

    #[test]
    fn flat_boundary_geometry() {
        let d = dom();
        let g = boundary_geometry(&BoundaryProfile::from_fn(&d, |_| 2.0), &d).unwrap();
        assert!(g.sigma.iter().all(|s| *s == 1.0));
        assert!(g.nu.iter().all(|n| *n == [0.0, 1.0]));
        assert!(g.curvature.iter().all(|h| *h == 0.0));
    }

    #[test]
    fn parabola_curvature_at_vertex() {
        let d = dom();
        let g = boundary_geometry(&BoundaryProfile::from_fn(&d, |x| 1.0 + 0.5 * (x - 0.5) * (x - 0.5)), &d).unwrap();
        let i = 16;
        assert!(close(g.sigma[i], 1.0, 1e-14));
        assert!(close(g.curvature[i], -1.0, 1e-3));
    }

    #[test]
    fn affine_boundary_has_zero_curvature() {
        let d = dom();
        let g = boundary_geometry(&BoundaryProfile::from_fn(&d, |x| 2.0 + 0.3 * x), &d).unwrap();
        let s = sqrt(1.09);
        for i in 0..d.nx {
            assert!(close(g.curvature[i], 0.0, 1e-12));
            assert!(close(g.sigma[i], s, 1e-13));
        }
    }

    #[test]
    fn quadrature_converges_at_second_order() {
        // surface length of a bump boundary against a fine reference
        let profile = |x: f64| 1.0 + 0.2 * bump(x, 0.15, 0.85);
        let slope = |x: f64| 0.2 * bump_derivative(x, 0.15, 0.85);
        let n_ref = 200_000;
        let h = 1.0 / n_ref as f64;
        let exact: f64 = (0..=n_ref)
            .map(|k| {
                let s = slope(k as f64 * h);
                let w = if k == 0 || k == n_ref { 0.5 } else { 1.0 };
                w * h * sqrt(1.0 + s * s)
            })
            .sum();
        let mut errs = Vec::new();
        let mut d = ReferenceDomain::new(1.0, 0.25, 1.0, 17, 5, 17).unwrap();
        for _ in 0..3 {
            let c = transform_coefficients(&BoundaryProfile::from_fn(&d, profile), &d).unwrap();
            let w = d.b_weights();
            let s: f64 = w.iter().zip(&c.omega1).map(|(a, b)| a * b).sum();
            errs.push((s - exact).abs());
            d = d.refined();
        }
        for e in errs.windows(2) {
            assert!(libm::log2(e[0] / e[1]) > 1.9, "{errs:?}");
        }
    }

    proptest! {
        #[test]
        fn normals_are_unit_and_sigma_at_least_one(a in -0.4f64..0.4, lo in 0.05f64..0.4, w in 0.2f64..0.5) {
            let d = dom();
            let ell = BoundaryProfile::with_bump(&d, a, lo, lo + w);
            let g = boundary_geometry(&ell, &d).unwrap();
            for (n, s) in g.nu.iter().zip(&g.sigma) {
                prop_assert!((n[0] * n[0] + n[1] * n[1] - 1.0).abs() < 1e-14);
                prop_assert!(*s >= 1.0);
            }
        }

        #[test]
        fn metric_determinant_equals_omega0(a in -0.45f64..0.45, lo in 0.05f64..0.4, w in 0.2f64..0.5) {
            let d = dom();
            let c = transform_coefficients(&BoundaryProfile::with_bump(&d, a, lo, lo + w), &d).unwrap();
            for (m, w0) in c.m.iter().zip(&c.omega0) {
                let det = m[0] * m[3] - m[1] * m[2];
                prop_assert!((det - w0).abs() < 1e-14 && *w0 > 0.0);
            }
        }

        #[test]
        fn push_forward_round_trip(a in -0.45f64..0.45, seed in 0u64..1000) {
            let d = ReferenceDomain::new(1.0, 0.25, 1.0, 9, 3, 9).unwrap();
            let c = transform_coefficients(&BoundaryProfile::with_bump(&d, a, 0.2, 0.8), &d).unwrap();
            let field: Vec<f64> = (0..d.n_nodes()).map(|k| libm::sin(k as f64 + seed as f64)).collect();
            let back = pull_back_samples(&c, &push_forward(&c, &field)).unwrap();
            prop_assert_eq!(back, field);
        }
    }
}
