//! Energy functionals on potentials and Green-function diagnostics.
//!
//! All energies are measured relative to the reference form `ω` (ψ = 0).

use crate::error::{Error, Result};
use crate::geometry::legendre::gauss_legendre;
use crate::geometry::{Backend, Field};
use crate::kahler::MetricState;
use rayon::prelude::*;

/// Gauss nodes in `t` for path integrals.
pub const K_ENERGY_NODES: usize = 16;
const J_NODES: usize = 8;

/// Gauss–Legendre rule on [0, 1].
fn unit_rule(n: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    x.iter().zip(&w).map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalValues {
    pub i: f64,
    pub j: f64,
    /// Defined for `μ = 1` runs only.
    pub ding: Option<f64>,
    /// Absent when the affine path from the reference leaves the Kähler cone.
    pub k_energy: Option<f64>,
}

/// `I(ω, ω_ψ) = V⁻¹ ∫ψ(1 − v)`.
pub fn aubin_i(backend: &Backend, psi: &Field) -> Result<f64> {
    let v = backend.conformal_density(psi)?;
    let integrand = psi.zip_map(&v, |p, v| p * (1.0 - v));
    Ok(backend.integrate(&integrand, None)? / backend.volume())
}

/// `J(ω, ω_ψ) = V⁻¹ ∫₀¹ ∫ψ(1 − v_{tψ}) dt` by Gauss quadrature in `t`.
pub fn aubin_j(backend: &Backend, psi: &Field) -> Result<f64> {
    let half_lap = backend.laplacian(psi)?.map(|l| 0.5 * l);
    let mut acc = 0.0;
    for (t, w) in unit_rule(J_NODES) {
        let integrand = psi.zip_map(&half_lap, |p, l| p * (1.0 - (1.0 + t * l)));
        acc += w * backend.integrate(&integrand, None)?;
    }
    Ok(acc / backend.volume())
}

/// Ding energy `J(ψ) − V⁻¹∫ψ − log(V⁻¹∫e^{f_ω − ψ})`.
pub fn ding_functional(backend: &Backend, psi: &Field, f_omega: &Field) -> Result<f64> {
    if !backend.is_sphere() {
        return Err(Error::Unsupported("the Ding functional is defined for c1 > 0".into()));
    }
    let j = aubin_j(backend, psi)?;
    let mean = backend.mean(psi)?;
    let e = f_omega.try_zip_map(psi, |f, p| f - p)?;
    let top = e.max();
    let z = backend.integrate(&e.map(|x| (x - top).exp()), None)?;
    Ok(j - mean - (top + (z / backend.volume()).ln()))
}

/// Mabuchi K-energy with the constant-curvature reference and the default node count.
pub fn k_energy(backend: &Backend, psi: &Field) -> Result<f64> {
    let reference = backend.constant(backend.reference_curvature());
    k_energy_with(backend, psi, &reference, K_ENERGY_NODES)
}

/// `ν(ψ) = −V⁻¹ ∫₀¹ ∫ψ(s_t − s̄)v_t dA dt` along `ψ_t = tψ`, where the reference
/// form has Ricci density `reference`, `s_t = 2r_t/v_t` and `s̄ = 2∫ρ_ref / V`.
pub fn k_energy_with(backend: &Backend, psi: &Field, reference: &Field, nodes: usize) -> Result<f64> {
    if nodes == 0 {
        return Err(Error::InvalidArgument("need at least one quadrature node".into()));
    }
    let vol = backend.volume();
    let s_bar = 2.0 * backend.integrate(reference, None)? / vol;
    let half_lap = backend.laplacian(psi)?.map(|l| 0.5 * l);
    let mut acc = 0.0;
    for (t, w) in unit_rule(nodes) {
        let v_t = half_lap.map(|l| 1.0 + t * l);
        let margin = v_t.min();
        if !(margin > 0.0) {
            return Err(Error::PathNotKahler { t, margin });
        }
        let lap_log = backend.laplacian(&v_t.map(f64::ln))?;
        let r_t = reference.try_zip_map(&lap_log, |rho, ll| rho - 0.5 * ll)?;
        let excess = r_t.zip_map(&v_t, |r, v| 2.0 * r - s_bar * v);
        let integrand = psi.zip_map(&excess, |p, e| p * e);
        acc += w * backend.integrate(&integrand, None)?;
    }
    Ok(-acc / vol)
}

/// Density `g` with `dν_ψ(δ) = ∫δ·g dA`, namely `g = −V⁻¹(s − s̄)v`.
pub fn k_energy_gradient(backend: &Backend, psi: &Field, reference: &Field) -> Result<Field> {
    let vol = backend.volume();
    let s_bar = 2.0 * backend.integrate(reference, None)? / vol;
    let m = MetricState::new(backend, psi.clone())?;
    let rd = crate::kahler::ricci_form_relative(backend, &m, reference)?;
    Ok(rd
        .ricci_density
        .zip_map(m.density(), |r, v| -(2.0 * r - s_bar * v) / vol))
}

/// Green columns of `−Δ_ψ` for the sampled sources.
#[derive(Clone, Debug, PartialEq)]
pub struct GreenData {
    pub sources: Vec<usize>,
    pub columns: Vec<Field>,
    /// `−min` over every computed value.
    pub a: f64,
}

impl GreenData {
    /// `G(x_a, y_b)` for two sources `a`, `b` of this data set.
    pub fn between(&self, a: usize, b: usize) -> f64 {
        self.columns[b].values()[self.sources[a]]
    }
}

/// `count` source nodes spread evenly over the grid (all nodes when `count ≥ len`).
pub fn default_sources(backend: &Backend, count: usize) -> Vec<usize> {
    let n = backend.len();
    if count >= n {
        return (0..n).collect();
    }
    if count == 0 {
        return Vec::new();
    }
    match backend {
        Backend::Sphere(_) if count > 1 => (0..count)
            .map(|k| ((k * (n - 1)) as f64 / (count - 1) as f64).round() as usize)
            .collect(),
        _ => (0..count).map(|k| k * n / count).collect(),
    }
}

/// Solves `½ΔG(·, y) = v − V·δ_y` with the quadrature-dual delta and zero
/// `v`-weighted mean, for every source `y`. Columns are computed in parallel.
pub fn green_function(backend: &Backend, m: &MetricState, sources: &[usize]) -> Result<GreenData> {
    backend.check(m.psi())?;
    let n = backend.len();
    if let Some(&bad) = sources.iter().find(|&&y| y >= n) {
        return Err(Error::InvalidArgument(format!("source index {bad} out of range")));
    }
    let vol = backend.volume();
    let w = backend.weights();
    let v = m.density();
    let columns: Vec<Field> = sources
        .par_iter()
        .map(|&y| {
            let mut rhs = v.values().to_vec();
            rhs[y] -= vol / w[y];
            let rhs = backend.from_values(rhs.iter().map(|r| 2.0 * r).collect())?;
            let g = backend.solve_poisson_projected(&rhs)?;
            let mean = backend.integrate(&g, Some(v))? / vol;
            Ok(g.map(|x| x - mean))
        })
        .collect::<Result<_>>()?;
    let min = columns.iter().map(Field::min).fold(f64::INFINITY, f64::min);
    Ok(GreenData {
        sources: sources.to_vec(),
        columns,
        a: -min,
    })
}

/// Slack in `‖ψ_k‖_∞ ≤ A₀ + A_k + I(ω₀, ω_{ψ_k})` (complex dimension one).
pub fn green_bound_slack(a_ref: f64, a_k: f64, i_k: f64, psi_sup: f64) -> f64 {
    a_ref + a_k + i_k - psi_sup
}
