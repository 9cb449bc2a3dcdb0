//! Conservative (weak-form) discretization on the mapped grid.
//!
//! The weak form of the mapped Laplacian is `int T grad u . grad v dxh` with
//! the symmetric tensor
//!
//! ```text
//! T = [[ r,        -zh r'          ],
//!      [ -zh r',   (1 + zh^2 r'^2)/r ]]      (T = I in the fixed block)
//! ```
//!
//! and volume factor `r = ell/ell0`. Each grid cell contributes
//!
//! * `T11` at the midpoints of its two horizontal edges,
//! * `T22` at the midpoints of its two vertical edges (evaluated with the
//!   column's nodal `r, r'`),
//! * `T12` at the cell center, paired with cell-averaged difference quotients.
//!
//! The resulting stiffness matrix is symmetric, reduces exactly to the
//! 5-point Laplacian for the flat profile, and is an explicit function of the
//! column data `r, r'`. That explicit dependence is differentiated exactly in
//! [`Discretization::stiffness_derivative`] and in [`ShapeAccumulator`], so
//! the shape gradient is the exact derivative of the discrete operators.
//! The mass matrix is lumped: every cell gives a quarter of its area times the
//! corner column's `r` to each corner.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::geometry::{
    check_perturbation_traces, derivative, first_derivative_stencil, transform_coefficients, BoundaryProfile,
    MappedCoefficients, ReferenceDomain,
};
use crate::operators::{assemble_plate_bilaplacian, plate_fractional_dense, plate_laplacian};
use crate::params::PhysicalParams;
use crate::sparse::{CsrMatrix, TripletBuilder};

/// One grid cell of the reference mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    i: usize,
    j: usize,
    hz: f64,
    zmid: f64,
    var: bool,
}

impl Cell {
    /// Corner nodes: (i,j), (i+1,j), (i,j+1), (i+1,j+1).
    fn corners(&self, dom: &ReferenceDomain) -> [usize; 4] {
        [
            dom.node(self.i, self.j),
            dom.node(self.i + 1, self.j),
            dom.node(self.i, self.j + 1),
            dom.node(self.i + 1, self.j + 1),
        ]
    }
}

fn cells(dom: &ReferenceDomain) -> Vec<Cell> {
    let mut out = Vec::with_capacity((dom.nx - 1) * (dom.nz() - 1));
    for j in 0..dom.nz() - 1 {
        let var = dom.is_var_cell(j);
        let hz = dom.cell_height(j);
        let zmid = if var {
            0.5 * (dom.zref(j) + dom.zref(j + 1))
        } else {
            0.0
        };
        for i in 0..dom.nx - 1 {
            out.push(Cell { i, j, hz, zmid, var });
        }
    }
    out
}

/// Per-cell geometric weights of the bilinear form.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct CellWeights {
    /// Horizontal edges (bottom and top share the same weight).
    x: f64,
    /// Left and right vertical edges.
    zl: f64,
    zr: f64,
    /// Cross term `area * T12`.
    xz: f64,
}

/// `T22 = (1 + zh^2 r'^2)/r` and its partials in `r`, `r'`.
fn t22(r: f64, rp: f64, zh: f64) -> (f64, f64, f64) {
    let num = 1.0 + zh * zh * rp * rp;
    (num / r, -num / (r * r), 2.0 * zh * zh * rp / r)
}

fn cell_weights(cell: &Cell, dx: f64, r: &[f64], rp: &[f64]) -> CellWeights {
    let (i, hz) = (cell.i, cell.hz);
    if !cell.var {
        return CellWeights {
            x: 0.5 * hz * 1.0 / dx,
            zl: 0.5 * dx * 1.0 / hz,
            zr: 0.5 * dx * 1.0 / hz,
            xz: 0.0,
        };
    }
    let t11 = 0.5 * (r[i] + r[i + 1]);
    let t12 = -cell.zmid * (r[i + 1] - r[i]) / dx;
    CellWeights {
        x: 0.5 * hz * t11 / dx,
        zl: 0.5 * dx * t22(r[i], rp[i], cell.zmid).0 / hz,
        zr: 0.5 * dx * t22(r[i + 1], rp[i + 1], cell.zmid).0 / hz,
        xz: dx * hz * t12,
    }
}

/// Directional derivative of [`cell_weights`] for `(dr, drp)`.
fn cell_weights_derivative(cell: &Cell, dx: f64, r: &[f64], rp: &[f64], dr: &[f64], drp: &[f64]) -> CellWeights {
    if !cell.var {
        return CellWeights::default();
    }
    let (i, hz) = (cell.i, cell.hz);
    let (_, al, bl) = t22(r[i], rp[i], cell.zmid);
    let (_, ar, br) = t22(r[i + 1], rp[i + 1], cell.zmid);
    CellWeights {
        x: 0.5 * hz * 0.5 * (dr[i] + dr[i + 1]) / dx,
        zl: 0.5 * dx * (al * dr[i] + bl * drp[i]) / hz,
        zr: 0.5 * dx * (ar * dr[i + 1] + br * drp[i + 1]) / hz,
        xz: -hz * cell.zmid * (dr[i + 1] - dr[i]),
    }
}

/// Adds the bilinear form of one cell with the given weights.
fn add_cell(t: &mut TripletBuilder, c: [usize; 4], w: &CellWeights, dx: f64, hz: f64) {
    let mut pair = |a: usize, b: usize, v: f64| {
        t.add(a, a, v);
        t.add(b, b, v);
        t.add(a, b, -v);
        t.add(b, a, -v);
    };
    pair(c[0], c[1], w.x);
    pair(c[2], c[3], w.x);
    pair(c[0], c[2], w.zl);
    pair(c[1], c[3], w.zr);
    if w.xz != 0.0 {
        // gx = (-u0 + u1 - u2 + u3)/(2dx), gz = (-u0 - u1 + u2 + u3)/(2hz)
        let gx = [-0.5 / dx, 0.5 / dx, -0.5 / dx, 0.5 / dx];
        let gz = [-0.5 / hz, -0.5 / hz, 0.5 / hz, 0.5 / hz];
        for a in 0..4 {
            for b in 0..4 {
                t.add(c[a], c[b], w.xz * (gx[a] * gz[b] + gz[a] * gx[b]));
            }
        }
    }
}

/// Cell-averaged difference quotients `(u_x, u_z)`.
fn cell_gradient(u: &[f64], c: [usize; 4], dx: f64, hz: f64) -> (f64, f64) {
    let (u0, u1, u2, u3) = (u[c[0]], u[c[1]], u[c[2]], u[c[3]]);
    (0.5 * ((u1 - u0) + (u3 - u2)) / dx, 0.5 * ((u2 - u0) + (u3 - u1)) / hz)
}

/// All spatial operators for one boundary profile.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub coeffs: MappedCoefficients,
    /// Lumped mass with the mapped volume factor.
    pub mass: Vec<f64>,
    /// Symmetric stiffness `int T grad u . grad v`.
    pub stiffness: CsrMatrix,
    /// Nodal edge weights on the absorbing sides (zero elsewhere).
    pub absorbing: Vec<f64>,
    /// Trapezoid weights of the top row (reference coordinates).
    pub neumann: Vec<f64>,
    /// `neumann * omega1`: physical surface weights of the Neumann edge.
    pub neumann_mapped: Vec<f64>,
    /// Bottom-edge weights at the interior plate nodes.
    pub plate_coupling: Vec<f64>,
    /// Lumped plate mass.
    pub plate_mass: Vec<f64>,
    /// `dx * D4`, the hinged plate stiffness without the factor `delta`.
    pub plate_stiffness: CsrMatrix,
    /// Second difference on the plate (Dirichlet ends).
    pub plate_laplacian: CsrMatrix,
    cells: Vec<Cell>,
}

impl Discretization {
    /// Assembles every operator for an admissible profile.
    pub fn new(dom: &ReferenceDomain, ell: &BoundaryProfile) -> Result<Self> {
        let coeffs = transform_coefficients(ell, dom)?;
        Ok(Self::from_coefficients(coeffs))
    }

    pub fn from_coefficients(coeffs: MappedCoefficients) -> Self {
        let dom = coeffs.dom;
        let dx = dom.dx();
        let cells = cells(&dom);
        let n = dom.n_nodes();
        let mut mass = vec![0.0; n];
        let mut t = TripletBuilder::new(n, n);
        for cell in &cells {
            let c = cell.corners(&dom);
            let w = cell_weights(cell, dx, &coeffs.r, &coeffs.rp);
            add_cell(&mut t, c, &w, dx, cell.hz);
            let quarter = 0.25 * dx * cell.hz;
            for (q, &node) in c.iter().enumerate() {
                let col = cell.i + (q & 1);
                mass[node] += if cell.var { quarter * coeffs.r[col] } else { quarter };
            }
        }
        let stiffness = t.build();
        let mut absorbing = vec![0.0; n];
        for j in 0..dom.nz() - 1 {
            let h = dom.cell_height(j);
            for i in [0, dom.nx - 1] {
                absorbing[dom.node(i, j)] += 0.5 * h;
                absorbing[dom.node(i, j + 1)] += 0.5 * h;
            }
        }
        let neumann = dom.b_weights();
        let neumann_mapped = neumann.iter().zip(&coeffs.omega1).map(|(w, o)| w * o).collect();
        let np = dom.n_plate();
        Self {
            mass,
            stiffness,
            absorbing,
            neumann,
            neumann_mapped,
            plate_coupling: vec![dx; np],
            plate_mass: vec![dx; np],
            plate_stiffness: scaled(&assemble_plate_bilaplacian(&dom).expect("domain checked"), dx),
            plate_laplacian: plate_laplacian(&dom),
            cells,
            coeffs,
        }
    }

    /// Operators of the flat reference domain assembled by
    /// [`plain_operators`], independently of the mapped assembly.
    pub fn plain(dom: &ReferenceDomain) -> Result<Self> {
        let mut disc = Self::new(dom, &BoundaryProfile::flat(dom))?;
        let (mass, stiffness) = plain_operators(dom);
        disc.mass = mass;
        disc.stiffness = stiffness;
        disc.neumann_mapped = disc.neumann.clone();
        Ok(disc)
    }

    pub fn dom(&self) -> &ReferenceDomain {
        &self.coeffs.dom
    }

    /// Dense plate damping `beta_pl * M_pl (-Lap)^gamma_pl` as a sparse matrix
    /// (empty when `beta_pl = 0`).
    pub fn plate_damping(&self, params: &PhysicalParams) -> CsrMatrix {
        let np = self.dom().n_plate();
        let mut t = TripletBuilder::new(np, np);
        if params.beta_pl > 0.0 {
            let dense = plate_fractional_dense(self.dom(), params.gamma_pl);
            for p in 0..np {
                for q in 0..np {
                    let v = params.beta_pl * self.plate_mass[p] * dense[p * np + q];
                    if v != 0.0 {
                        t.add(p, q, v);
                    }
                }
            }
        }
        t.build()
    }

    /// `(dr, dr')` for a perturbation `dell` of the profile.
    fn column_perturbation(&self, dell: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let dom = self.dom();
        let dr: Vec<f64> = dell.iter().map(|d| d / dom.ell0).collect();
        let drp = derivative(&dr, dom.dx());
        (dr, drp)
    }

    /// Derivative of the stiffness matrix in direction `dell`.
    pub fn stiffness_derivative(&self, dell: &[f64]) -> Result<CsrMatrix> {
        check_perturbation_traces(dell, self.dom())?;
        let dom = *self.dom();
        let dx = dom.dx();
        let (dr, drp) = self.column_perturbation(dell);
        let n = dom.n_nodes();
        let mut t = TripletBuilder::new(n, n);
        for cell in &self.cells {
            let w = cell_weights_derivative(cell, dx, &self.coeffs.r, &self.coeffs.rp, &dr, &drp);
            if w != CellWeights::default() {
                add_cell(&mut t, cell.corners(&dom), &w, dx, cell.hz);
            }
        }
        Ok(t.build())
    }

    /// Derivative of the lumped mass in direction `dell`.
    pub fn mass_derivative(&self, dell: &[f64]) -> Result<Vec<f64>> {
        check_perturbation_traces(dell, self.dom())?;
        let dom = *self.dom();
        let (dr, _) = self.column_perturbation(dell);
        let mut dm = vec![0.0; dom.n_nodes()];
        for cell in self.cells.iter().filter(|c| c.var) {
            let quarter = 0.25 * dom.dx() * cell.hz;
            for (q, &node) in cell.corners(&dom).iter().enumerate() {
                dm[node] += quarter * dr[cell.i + (q & 1)];
            }
        }
        Ok(dm)
    }

    /// Derivative of the mapped Neumann weights `neumann * omega1`.
    pub fn neumann_mapped_derivative(&self, dell: &[f64]) -> Result<Vec<f64>> {
        check_perturbation_traces(dell, self.dom())?;
        let dom = self.dom();
        let (_, drp) = self.column_perturbation(dell);
        Ok((0..dom.nx)
            .map(|i| {
                let s = self.coeffs.slope(i);
                self.neumann[i] * s * drp[i] * dom.ell0 / self.coeffs.omega1[i]
            })
            .collect())
    }
}

fn scaled(m: &CsrMatrix, f: f64) -> CsrMatrix {
    CsrMatrix::linear_combination(&[(f, m)]).expect("single term")
}

/// Plain Cartesian stiffness and mass (no mapping), assembled independently.
pub fn plain_operators(dom: &ReferenceDomain) -> (Vec<f64>, CsrMatrix) {
    let dx = dom.dx();
    let n = dom.n_nodes();
    let mut t = TripletBuilder::new(n, n);
    let mut mass = vec![0.0; n];
    for j in 0..dom.nz() - 1 {
        let hz = dom.cell_height(j);
        for i in 0..dom.nx - 1 {
            let c = [dom.node(i, j), dom.node(i + 1, j), dom.node(i, j + 1), dom.node(i + 1, j + 1)];
            let w = CellWeights {
                x: 0.5 * hz * 1.0 / dx,
                zl: 0.5 * dx * 1.0 / hz,
                zr: 0.5 * dx * 1.0 / hz,
                xz: 0.0,
            };
            add_cell(&mut t, c, &w, dx, hz);
            for &node in &c {
                mass[node] += 0.25 * dx * hz;
            }
        }
    }
    (mass, t.build())
}

/// Time-integrated products of state and adjoint fields, from which the
/// exact shape derivative of the pairing `<R(ell; u), z>` is formed.
///
/// Feed it, per time node and with the time quadrature weight folded in:
/// stiffness pairs `(z, u)` meaning `z^T K u`, lumped-mass products
/// `z_i * u_i`, and Neumann-load products.
#[derive(Debug, Clone)]
pub struct ShapeAccumulator {
    x_pairs: Vec<f64>,
    x_top_pairs: Vec<f64>,
    zl_pairs: Vec<f64>,
    zr_pairs: Vec<f64>,
    xz_pairs: Vec<f64>,
    mass_products: Vec<f64>,
    neumann_products: Vec<f64>,
}

impl ShapeAccumulator {
    pub fn new(disc: &Discretization) -> Self {
        let nc = disc.cells.len();
        Self {
            x_pairs: vec![0.0; nc],
            x_top_pairs: vec![0.0; nc],
            zl_pairs: vec![0.0; nc],
            zr_pairs: vec![0.0; nc],
            xz_pairs: vec![0.0; nc],
            mass_products: vec![0.0; disc.dom().n_nodes()],
            neumann_products: vec![0.0; disc.dom().nx],
        }
    }

    /// Accumulates `weight * z^T K u` contributions cell by cell.
    pub fn add_stiffness(&mut self, disc: &Discretization, weight: f64, z: &[f64], u: &[f64]) {
        let dom = disc.dom();
        let dx = dom.dx();
        for (k, cell) in disc.cells.iter().enumerate() {
            if !cell.var {
                continue;
            }
            let c = cell.corners(dom);
            self.x_pairs[k] += weight * (z[c[1]] - z[c[0]]) * (u[c[1]] - u[c[0]]);
            self.x_top_pairs[k] += weight * (z[c[3]] - z[c[2]]) * (u[c[3]] - u[c[2]]);
            self.zl_pairs[k] += weight * (z[c[2]] - z[c[0]]) * (u[c[2]] - u[c[0]]);
            self.zr_pairs[k] += weight * (z[c[3]] - z[c[1]]) * (u[c[3]] - u[c[1]]);
            let (zx, zz) = cell_gradient(z, c, dx, cell.hz);
            let (ux, uz) = cell_gradient(u, c, dx, cell.hz);
            self.xz_pairs[k] += weight * (zx * uz + zz * ux);
        }
    }

    /// Accumulates `weight * z_i * u_i` for the lumped-mass derivative.
    pub fn add_mass(&mut self, weight: f64, z: &[f64], u: &[f64]) {
        for ((m, a), b) in self.mass_products.iter_mut().zip(z).zip(u) {
            *m += weight * a * b;
        }
    }

    /// Accumulates `weight * product_i` against the mapped Neumann weights.
    pub fn add_neumann(&mut self, weight: f64, product: &[f64]) {
        for (m, p) in self.neumann_products.iter_mut().zip(product) {
            *m += weight * p;
        }
    }

    /// The derivative of the accumulated pairing with respect to each `ell_m`.
    pub fn gradient(&self, disc: &Discretization) -> Vec<f64> {
        let dom = disc.dom();
        let dx = dom.dx();
        let nx = dom.nx;
        let (r, rp) = (&disc.coeffs.r, &disc.coeffs.rp);
        let mut g_r = vec![0.0; nx];
        let mut g_rp = vec![0.0; nx];
        for (k, cell) in disc.cells.iter().enumerate() {
            if !cell.var {
                continue;
            }
            let (i, hz) = (cell.i, cell.hz);
            let xs = (self.x_pairs[k] + self.x_top_pairs[k]) * 0.5 * hz * 0.5 / dx;
            g_r[i] += xs;
            g_r[i + 1] += xs;
            let (_, al, bl) = t22(r[i], rp[i], cell.zmid);
            let (_, ar, br) = t22(r[i + 1], rp[i + 1], cell.zmid);
            let fz = 0.5 * dx / hz;
            g_r[i] += fz * al * self.zl_pairs[k];
            g_rp[i] += fz * bl * self.zl_pairs[k];
            g_r[i + 1] += fz * ar * self.zr_pairs[k];
            g_rp[i + 1] += fz * br * self.zr_pairs[k];
            let fxz = -hz * cell.zmid * self.xz_pairs[k];
            g_r[i + 1] += fxz;
            g_r[i] -= fxz;
            let quarter = 0.25 * dx * hz;
            let c = cell.corners(dom);
            g_r[i] += quarter * (self.mass_products[c[0]] + self.mass_products[c[2]]);
            g_r[i + 1] += quarter * (self.mass_products[c[1]] + self.mass_products[c[3]]);
        }
        // omega1_i = sqrt(1 + (ell0 r'_i)^2)
        for i in 0..nx {
            let s = disc.coeffs.slope(i);
            g_rp[i] += self.neumann_products[i] * disc.neumann[i] * s * dom.ell0 / disc.coeffs.omega1[i];
        }
        for i in 0..nx {
            for (m, c) in first_derivative_stencil(i, nx, dx) {
                g_r[m] += c * g_rp[i];
            }
        }
        let mut g: Vec<f64> = g_r.iter().map(|v| v / dom.ell0).collect();
        for idx in [0, 1, nx - 2, nx - 1] {
            g[idx] = 0.0;
        }
        g
    }
}
