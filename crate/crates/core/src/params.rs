//! Physical constants, time grid and initial data.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::ReferenceDomain;

/// Constants of the Westervelt-plate model and the regularization weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Sound speed.
    pub c: f64,
    /// Strong (viscous) damping.
    pub b: f64,
    /// Nonlinearity parameter.
    pub k: f64,
    /// Plate density.
    pub rho: f64,
    /// Plate stiffness.
    pub delta: f64,
    /// Acoustic forcing of the plate.
    pub kappa: f64,
    /// Absorbing boundary coefficients in `dp/dn + beta_a p_t + gamma_a p = 0`.
    pub beta_a: f64,
    pub gamma_a: f64,
    /// Optional plate damping `beta_pl (-Lap)^gamma_pl w_t` (off by default).
    pub beta_pl: f64,
    pub gamma_pl: f64,
    /// Regularization weight.
    pub theta: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            c: 2.0,
            b: 0.05,
            k: 0.5,
            rho: 1.0,
            delta: 0.01,
            kappa: 1.0,
            beta_a: 0.5,
            gamma_a: 0.0,
            beta_pl: 0.0,
            gamma_pl: 0.0,
            theta: 1e-6,
        }
    }
}

impl PhysicalParams {
    pub fn check(&self) -> Result<()> {
        let finite = [
            self.c,
            self.b,
            self.k,
            self.rho,
            self.delta,
            self.kappa,
            self.beta_a,
            self.gamma_a,
            self.beta_pl,
            self.gamma_pl,
            self.theta,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter(format!("non-finite parameter in {self:?}")));
        }
        if !(self.c > 0.0 && self.b > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "c and b must be positive (c = {}, b = {})",
                self.c, self.b
            )));
        }
        let nonneg = [
            ("k", self.k),
            ("rho", self.rho),
            ("delta", self.delta),
            ("kappa", self.kappa),
            ("beta_a", self.beta_a),
            ("gamma_a", self.gamma_a),
            ("beta_pl", self.beta_pl),
            ("gamma_pl", self.gamma_pl),
            ("theta", self.theta),
        ];
        for (name, v) in nonneg {
            if v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.rho == 0.0 {
            return Err(Error::InvalidParameter(format!("rho must be positive")));
        }
        Ok(())
    }

    /// Whether the absorbing coefficients are the ones the adjoint supports.
    pub fn adjoint_compatible(&self) -> bool {
        (self.beta_a - 1.0 / self.c).abs() <= 1e-14 * (1.0 / self.c) && self.gamma_a == 0.0
    }

    /// The same parameters with `beta_a = 1/c`, `gamma_a = 0`.
    pub fn with_matched_absorption(mut self) -> Self {
        self.beta_a = 1.0 / self.c;
        self.gamma_a = 0.0;
        self
    }
}

/// Uniform time grid on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub nt: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, nt: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) || nt < 3 {
            return Err(Error::InvalidParameter(format!(
                "time grid needs T > 0 and Nt >= 3 (T = {t_final}, Nt = {nt})"
            )));
        }
        Ok(Self { t_final, nt })
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    /// Number of time nodes `Nt + 1`.
    pub fn len(&self) -> usize {
        self.nt + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    /// Trapezoid quadrature weights in time.
    pub fn weights(&self) -> Vec<f64> {
        crate::geometry::trapezoid_weights(self.len(), self.dt())
    }

    pub fn refined(&self) -> Self {
        Self {
            t_final: self.t_final,
            nt: 2 * self.nt,
        }
    }
}

/// Initial data of the `(p~, w~)` system. The `p_bar` part starts from rest.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub p0: Vec<f64>,
    pub p1: Vec<f64>,
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
}

impl InitialData {
    pub fn zero(dom: &ReferenceDomain) -> Self {
        Self {
            p0: vec![0.0; dom.n_nodes()],
            p1: vec![0.0; dom.n_nodes()],
            w0: vec![0.0; dom.n_plate()],
            w1: vec![0.0; dom.n_plate()],
        }
    }

    pub fn check(&self, dom: &ReferenceDomain) -> Result<()> {
        for (what, v, n) in [
            ("p0", &self.p0, dom.n_nodes()),
            ("p1", &self.p1, dom.n_nodes()),
            ("w0", &self.w0, dom.n_plate()),
            ("w1", &self.w1, dom.n_plate()),
        ] {
            if v.len() != n {
                return Err(Error::ShapeMismatch {
                    what,
                    expected: n,
                    found: v.len(),
                });
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        [&self.p0, &self.p1, &self.w0, &self.w1]
            .iter()
            .all(|v| v.iter().all(|x| *x == 0.0))
    }
}
