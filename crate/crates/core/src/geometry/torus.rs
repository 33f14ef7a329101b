//! Flat rectangular torus with periods (L1, L2), Fourier pseudospectral operators.
//!
//! Nodes are stored row-major: index `i * n2 + j` is the point
//! `(i * L1 / n1, j * L2 / n2)`.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

struct Plans {
    n1: usize,
    n2: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(n1: usize, n2: usize) -> Self {
        let mut planner = FftPlanner::new();
        Plans {
            n1,
            n2,
            row_fwd: planner.plan_fft_forward(n2),
            row_inv: planner.plan_fft_inverse(n2),
            col_fwd: planner.plan_fft_forward(n1),
            col_inv: planner.plan_fft_inverse(n1),
        }
    }

    /// Unnormalized 2-D transform in place.
    fn run(&self, data: &mut [Complex64], forward: bool) {
        let (rows, cols) = if forward {
            (&self.row_fwd, &self.col_fwd)
        } else {
            (&self.row_inv, &self.col_inv)
        };
        rows.process(data);
        let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
        transpose(data, &mut t, self.n1, self.n2);
        cols.process(&mut t);
        transpose(&t, data, self.n2, self.n1);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for i in 0..rows {
        for j in 0..cols {
            dst[j * rows + i] = src[i * cols + j];
        }
    }
}

/// Signed wavenumber of FFT index `idx` for length `n`; the Nyquist index maps to `+n/2`.
pub(crate) fn signed_index(idx: usize, n: usize) -> i64 {
    if idx <= n / 2 {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

pub struct Torus {
    n1: usize,
    n2: usize,
    l1: f64,
    l2: f64,
    oversample: bool,
    weights: Vec<f64>,
    lambda: Vec<f64>,
    plans: Plans,
    fine: OnceLock<Plans>,
}

impl fmt::Debug for Torus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Torus")
            .field("n1", &self.n1)
            .field("n2", &self.n2)
            .field("l1", &self.l1)
            .field("l2", &self.l2)
            .field("oversample", &self.oversample)
            .finish()
    }
}

impl Torus {
    pub(crate) fn new(n1: usize, n2: usize, l1: f64, l2: f64, oversample: bool) -> Self {
        let len = n1 * n2;
        let area = l1 * l2;
        let mut lambda = vec![0.0; len];
        for i in 0..n1 {
            let k1 = 2.0 * PI * signed_index(i, n1) as f64 / l1;
            for j in 0..n2 {
                let k2 = 2.0 * PI * signed_index(j, n2) as f64 / l2;
                lambda[i * n2 + j] = k1 * k1 + k2 * k2;
            }
        }
        Torus {
            n1,
            n2,
            l1,
            l2,
            oversample,
            weights: vec![area / len as f64; len],
            lambda,
            plans: Plans::new(n1, n2),
            fine: OnceLock::new(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn periods(&self) -> (f64, f64) {
        (self.l1, self.l2)
    }

    pub fn oversample(&self) -> bool {
        self.oversample
    }

    pub(crate) fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Eigenvalue of `-Δ` attached to each flat spectral index.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambda
    }

    pub fn point(&self, idx: usize) -> (f64, f64) {
        let i = idx / self.n2;
        let j = idx % self.n2;
        (
            i as f64 * self.l1 / self.n1 as f64,
            j as f64 * self.l2 / self.n2 as f64,
        )
    }

    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.n1 * self.n2)
            .map(|idx| {
                let (x, y) = self.point(idx);
                f(x, y)
            })
            .collect()
    }

    pub(crate) fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.plans.run(&mut data, true);
        let scale = 1.0 / values.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        data
    }

    pub(crate) fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut data = coeffs.to_vec();
        self.plans.run(&mut data, false);
        data.iter().map(|c| c.re).collect()
    }

    /// Applies the spectral multiplier `m(λ)` where `λ ≥ 0` is the `-Δ` eigenvalue.
    pub(crate) fn apply_multiplier(&self, values: &[f64], m: impl Fn(f64) -> f64) -> Vec<f64> {
        // Shift by one nodal value so constants are annihilated exactly.
        let base = values[0];
        let shifted: Vec<f64> = values.iter().map(|v| v - base).collect();
        let mut c = self.forward(&shifted);
        for (ck, &lam) in c.iter_mut().zip(&self.lambda) {
            *ck *= m(lam);
        }
        let m0 = m(0.0) * base;
        let mut out = self.inverse(&c);
        if m0 != 0.0 {
            out.iter_mut().for_each(|v| *v += m0);
        }
        out
    }

    /// Pointwise map of a nonlinearity, evaluated on the 2× grid and projected back
    /// when oversampling is enabled.
    pub(crate) fn map_nonlinear(&self, values: &[f64], g: impl Fn(f64) -> f64) -> Vec<f64> {
        if !self.oversample {
            return values.iter().map(|&v| g(v)).collect();
        }
        let (n1, n2) = (self.n1, self.n2);
        let (m1, m2) = (2 * n1, 2 * n2);
        let fine = self.fine.get_or_init(|| Plans::new(m1, m2));
        let coarse = self.forward(values);
        let mut padded = vec![Complex64::new(0.0, 0.0); m1 * m2];
        for i in 0..n1 {
            let targets1 = pad_targets(i, n1, m1);
            for j in 0..n2 {
                let targets2 = pad_targets(j, n2, m2);
                let c = coarse[i * n2 + j];
                for &(a, wa) in targets1.iter().flatten() {
                    for &(b, wb) in targets2.iter().flatten() {
                        padded[a * m2 + b] += c * (wa * wb);
                    }
                }
            }
        }
        fine.run(&mut padded, false);
        let mut mapped: Vec<Complex64> = padded.iter().map(|c| Complex64::new(g(c.re), 0.0)).collect();
        fine.run(&mut mapped, true);
        let scale = 1.0 / (m1 * m2) as f64;
        let mut truncated = vec![Complex64::new(0.0, 0.0); n1 * n2];
        for a in 0..m1 {
            let Some(i) = truncate_target(a, n1, m1) else { continue };
            for b in 0..m2 {
                let Some(j) = truncate_target(b, n2, m2) else { continue };
                truncated[i * n2 + j] += mapped[a * m2 + b] * scale;
            }
        }
        self.inverse(&truncated)
    }
}

/// Fine-grid indices receiving coarse index `idx`; the Nyquist mode splits evenly.
fn pad_targets(idx: usize, n: usize, m: usize) -> [Option<(usize, f64)>; 2] {
    let k = signed_index(idx, n);
    if n % 2 == 0 && k == (n / 2) as i64 {
        let pos = n / 2;
        [Some((pos, 0.5)), Some((m - pos, 0.5))]
    } else {
        let t = if k >= 0 { k as usize } else { (m as i64 + k) as usize };
        [Some((t, 1.0)), None]
    }
}

fn truncate_target(fine_idx: usize, n: usize, m: usize) -> Option<usize> {
    let k = signed_index(fine_idx, m);
    // Both fine Nyquist partners (±n/2) fold onto the coarse Nyquist index.
    if k.abs() > (n / 2) as i64 {
        return None;
    }
    Some(k.rem_euclid(n as i64) as usize)
}
