//! Axisymmetric round unit sphere: Gauss–Legendre collocation in x = cos θ.
//!
//! Fields are functions of x only. The area element is `2π dx`, so quadrature
//! weights are `2π w_j` with `w_j` the Gauss–Legendre weights.

use super::legendre::{gauss_legendre, gauss_tables, legendre_series, legendre_table};
use std::f64::consts::PI;
use std::sync::OnceLock;

#[derive(Debug)]
struct FineBasis {
    gauss: Vec<f64>,
    /// `table[l * 2n + j] = P_l(x_fine_j)`, `l < n`
    table: Vec<f64>,
}

#[derive(Debug)]
pub struct Sphere {
    n: usize,
    oversample: bool,
    nodes: Vec<f64>,
    gauss: Vec<f64>,
    weights: Vec<f64>,
    /// `table[l * n + j] = P_l(x_j)`
    table: Vec<f64>,
    /// `analysis[l * n + j] = (2l+1)/2 · w_j · P_l(x_j)`
    analysis: Vec<f64>,
    /// Collocation matrix of the Laplacian, row-major.
    lap: Vec<f64>,
    fine: OnceLock<FineBasis>,
}

impl Sphere {
    pub(crate) fn new(n: usize, oversample: bool) -> Self {
        let t = gauss_tables(n);
        let weights = t.gauss.iter().map(|w| 2.0 * PI * w).collect();
        Sphere {
            n,
            oversample,
            nodes: t.nodes,
            gauss: t.gauss,
            weights,
            table: t.synthesis,
            analysis: t.analysis,
            lap: t.laplacian,
            fine: OnceLock::new(),
        }
    }

    pub fn modes(&self) -> usize {
        self.n
    }

    pub fn oversample(&self) -> bool {
        self.oversample
    }

    /// Collocation nodes `x_j = cos θ_j`, ascending.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Gauss–Legendre weights on [-1, 1] (sum 2).
    pub fn gauss_weights(&self) -> &[f64] {
        &self.gauss
    }

    pub(crate) fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    /// Legendre coefficients `c_l` with `f = Σ c_l P_l`.
    pub(crate) fn forward(&self, values: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|l| {
                let row = &self.analysis[l * n..(l + 1) * n];
                row.iter().zip(values).map(|(a, v)| a * v).sum()
            })
            .collect()
    }

    /// Laplacian by the collocation matrix.
    pub(crate) fn laplacian(&self, values: &[f64]) -> Vec<f64> {
        let n = self.n;
        let base = values[0];
        let shifted: Vec<f64> = values.iter().map(|v| v - base).collect();
        (0..n)
            .map(|i| {
                let row = &self.lap[i * n..(i + 1) * n];
                row.iter().zip(&shifted).map(|(a, v)| a * v).sum()
            })
            .collect()
    }

    pub(crate) fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for (l, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let row = &self.table[l * n..(l + 1) * n];
            for (o, p) in out.iter_mut().zip(row) {
                *o += c * p;
            }
        }
        out
    }

    /// Applies `m(l(l+1))` to each Legendre mode.
    pub(crate) fn apply_multiplier(&self, values: &[f64], m: impl Fn(f64) -> f64) -> Vec<f64> {
        // Shift by one nodal value so constants are annihilated exactly.
        let base = values[0];
        let shifted: Vec<f64> = values.iter().map(|v| v - base).collect();
        let mut c = self.forward(&shifted);
        for (l, cl) in c.iter_mut().enumerate() {
            *cl *= m((l * (l + 1)) as f64);
        }
        let m0 = m(0.0) * base;
        let mut out = self.inverse(&c);
        if m0 != 0.0 {
            out.iter_mut().for_each(|v| *v += m0);
        }
        out
    }

    /// Evaluates the degree-(n-1) interpolant of `values` at arbitrary points.
    pub fn interpolate(&self, values: &[f64], xs: &[f64]) -> Vec<f64> {
        let c = self.forward(values);
        xs.iter().map(|&x| legendre_series(&c, x)).collect()
    }

    pub(crate) fn map_nonlinear(&self, values: &[f64], g: impl Fn(f64) -> f64) -> Vec<f64> {
        if !self.oversample {
            return values.iter().map(|&v| g(v)).collect();
        }
        let n = self.n;
        let m = 2 * n;
        let fine = self.fine.get_or_init(|| {
            let (x, w) = gauss_legendre(m);
            FineBasis {
                table: legendre_table(n, &x),
                gauss: w,
            }
        });
        let c = self.forward(values);
        let mut fine_vals = vec![0.0; m];
        for (l, &cl) in c.iter().enumerate() {
            let row = &fine.table[l * m..(l + 1) * m];
            for (v, p) in fine_vals.iter_mut().zip(row) {
                *v += cl * p;
            }
        }
        let mapped: Vec<f64> = fine_vals
            .iter()
            .zip(&fine.gauss)
            .map(|(&v, w)| g(v) * w)
            .collect();
        let projected: Vec<f64> = (0..n)
            .map(|l| {
                let row = &fine.table[l * m..(l + 1) * m];
                0.5 * (2 * l + 1) as f64 * row.iter().zip(&mapped).map(|(p, v)| p * v).sum::<f64>()
            })
            .collect();
        self.inverse(&projected)
    }
}
