//! Conformal Kähler metrics `ω_ψ = (1 + ½Δψ)·ω` and their Ricci geometry.

use crate::elliptic::solve_poisson_step;
use crate::error::{Error, Result};
use crate::geometry::{Backend, Field};

/// Relative tolerance for class membership `∫h = V`.
pub const CLASS_TOL: f64 = 1e-9;

/// A Kähler potential together with its conformal density.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricState {
    psi: Field,
    density: Field,
    margin: f64,
}

impl MetricState {
    /// Builds the state, rejecting potentials whose density is not positive.
    pub fn new(backend: &Backend, psi: Field) -> Result<Self> {
        let density = backend.conformal_density(&psi)?;
        let margin = density.min();
        if !(margin > 0.0) {
            return Err(Error::NotKahler { margin });
        }
        Ok(MetricState {
            psi,
            density,
            margin,
        })
    }

    pub fn reference(backend: &Backend) -> Self {
        MetricState {
            psi: backend.zeros(),
            density: backend.constant(1.0),
            margin: 1.0,
        }
    }

    pub fn psi(&self) -> &Field {
        &self.psi
    }

    pub fn density(&self) -> &Field {
        &self.density
    }

    pub fn positivity_margin(&self) -> f64 {
        self.margin
    }

    pub fn into_psi(self) -> Field {
        self.psi
    }
}

/// `Ric ω_ψ = r·ω` on the reference grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RicciData {
    pub ricci_density: Field,
    pub positive: bool,
    pub min: f64,
}

impl RicciData {
    /// Gauss curvature `r / v` of `ω_ψ`.
    pub fn gauss_curvature(&self, m: &MetricState) -> Field {
        self.ricci_density.zip_map(m.density(), |r, v| r / v)
    }
}

/// `r = K_ref − ½Δ log v`.
pub fn ricci_form(backend: &Backend, m: &MetricState) -> Result<RicciData> {
    let reference = backend.constant(backend.reference_curvature());
    ricci_form_relative(backend, m, &reference)
}

/// `r = ρ_ref − ½Δ log v` for a reference form whose Ricci density is `ρ_ref`.
pub fn ricci_form_relative(backend: &Backend, m: &MetricState, reference: &Field) -> Result<RicciData> {
    backend.check(m.psi())?;
    let log_v = m.density().map(f64::ln);
    let lap = backend.laplacian(&log_v)?;
    let r = reference.try_zip_map(&lap, |k, l| k - 0.5 * l)?;
    r.ensure_finite("ricci density")?;
    let min = r.min();
    Ok(RicciData {
        ricci_density: r,
        positive: min > 0.0,
        min,
    })
}

/// Ricci potential `f` of `ω_ψ` with `½Δf = r − μ·v` and `∫e^f v = V`.
pub fn ricci_potential(backend: &Backend, m: &MetricState, mu: i32) -> Result<Field> {
    let rd = ricci_form(backend, m)?;
    ricci_potential_from(backend, m, &rd, mu)
}

pub(crate) fn ricci_potential_from(
    backend: &Backend,
    m: &MetricState,
    rd: &RicciData,
    mu: i32,
) -> Result<Field> {
    let mu = mu as f64;
    let g = rd.ricci_density.zip_map(m.density(), |r, v| r - mu * v);
    let integral = backend.integrate(&g, None)?;
    let vol = backend.volume();
    if integral.abs() > 1e-8 * vol {
        return Err(Error::ClassMismatch {
            integral: integral + mu * vol,
            expected: mu * vol,
        });
    }
    let f = backend.solve_poisson_projected(&g.map(|x| 2.0 * x))?;
    let z = backend.integrate(&f.map(f64::exp), Some(m.density()))?;
    let shift = (z / vol).ln();
    Ok(f.map(|x| x - shift))
}

/// The unique `ω_φ` in the class with `Ric ω_φ = h·ω` (sphere only).
pub fn inverse_ricci(backend: &Backend, h: &Field) -> Result<MetricState> {
    if !backend.is_sphere() {
        return Err(Error::Unsupported(
            "inverse Ricci needs positive first Chern class (sphere backend)".into(),
        ));
    }
    backend.check(h)?;
    let vol = backend.volume();
    let integral = backend.integrate(h, None)?;
    if (integral - vol).abs() > CLASS_TOL * vol {
        return Err(Error::ClassMismatch {
            integral,
            expected: vol,
        });
    }
    let k = backend.reference_curvature();
    // ½ΔF = h − K, log v = −F + c
    let big_f = backend.solve_poisson_projected(&h.map(|x| 2.0 * (x - k)))?;
    let raw = big_f.map(|x| (-x).exp());
    let z = backend.integrate(&raw, None)?;
    let v = raw.map(|x| x * vol / z);
    let (psi, _) = solve_poisson_step(backend, &v)?;
    let m = MetricState::new(backend, psi)?;
    let rd = ricci_form(backend, &m)?;
    let deviation = rd.ricci_density.sup_distance(h)?;
    if deviation > 1e-8 * h.sup_norm().max(1.0) {
        return Err(Error::InternalConsistency {
            what: "inverse Ricci verification",
            deviation,
        });
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq)]
pub enum ForwardOutcome {
    Positive(MetricState),
    NotPositive { min_ricci: f64 },
}

/// Replaces `ω_ψ` by `Ric ω_ψ` when the latter is positive (sphere only).
pub fn forward_ricci(backend: &Backend, m: &MetricState) -> Result<ForwardOutcome> {
    if !backend.is_sphere() {
        return Err(Error::Unsupported(
            "forward Ricci leaves the Kähler class unless c1 > 0 (sphere backend)".into(),
        ));
    }
    let rd = ricci_form(backend, m)?;
    if !rd.positive {
        return Ok(ForwardOutcome::NotPositive { min_ricci: rd.min });
    }
    let (psi, _) = solve_poisson_step(backend, &rd.ricci_density)?;
    Ok(ForwardOutcome::Positive(MetricState::new(backend, psi)?))
}

/// `ψ̃ = ψ + c` with `∫exp(f − ψ̃) = V`.
pub fn normalize_for_step(backend: &Backend, psi: &Field, f: &Field) -> Result<(Field, f64)> {
    let e = f.try_zip_map(psi, |f, p| f - p)?;
    let top = e.max();
    let z = backend.integrate(&e.map(|x| (x - top).exp()), None)?;
    let c = top + (z / backend.volume()).ln();
    Ok((psi.map(|p| p + c), c))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaugeFix {
    pub state: MetricState,
    /// Möbius parameter of `x ↦ (x − t)/(1 − t·x)`.
    pub t: f64,
    /// `∫x·v` of the returned state.
    pub moment: f64,
}

const GAUGE_SKIP: f64 = 1e-11;

fn first_moment(backend: &Backend, v: &Field) -> Result<f64> {
    let s = backend
        .as_sphere()
        .ok_or_else(|| Error::Unsupported("moment on torus".into()))?;
    let x = backend.from_values(s.nodes().to_vec())?;
    backend.integrate(&(&x * v), None)
}

/// Axial Möbius rescaling placing the area center of mass at the origin.
pub fn mobius_gauge_fix(backend: &Backend, m: &MetricState) -> Result<GaugeFix> {
    let s = backend
        .as_sphere()
        .ok_or_else(|| Error::Unsupported("Möbius gauge exists only on the sphere".into()))?;
    let h0 = first_moment(backend, m.density())?;
    if h0.abs() <= GAUGE_SKIP {
        return Ok(GaugeFix {
            state: m.clone(),
            t: 0.0,
            moment: h0,
        });
    }
    let x = s.nodes();
    let w = backend.weights();
    let v = m.density().values();
    let pulled = |t: f64| -> Vec<f64> {
        let targets: Vec<f64> = x.iter().map(|&x| (x - t) / (1.0 - t * x)).collect();
        let vals = s.interpolate(v, &targets);
        vals.iter()
            .zip(x)
            .map(|(val, &x)| val * (1.0 - t * t) / (1.0 - t * x).powi(2))
            .collect()
    };
    let moment = |t: f64| -> f64 {
        let p = pulled(t);
        let num: f64 = p.iter().zip(x).zip(w).map(|((p, x), w)| p * x * w).sum();
        let den: f64 = p.iter().zip(w).map(|(p, w)| p * w).sum();
        num / den * backend.volume()
    };

    // The moment increases with t.
    let dir = if h0 > 0.0 { -1.0 } else { 1.0 };
    let (mut lo, mut flo) = (0.0, h0);
    let mut hi = dir * 0.5;
    let mut fhi = moment(hi);
    let mut expansions = 0;
    while fhi.signum() == flo.signum() {
        lo = hi;
        flo = fhi;
        hi = dir * (1.0 - 0.25 * (1.0 - hi.abs()));
        fhi = moment(hi);
        expansions += 1;
        if expansions > 40 || !fhi.is_finite() {
            return Err(Error::GaugeFix(format!(
                "could not bracket the Möbius parameter (moment {h0:.3e})"
            )));
        }
    }

    // Illinois regula falsi.
    let mut side = 0;
    let mut t = lo;
    for _ in 0..200 {
        t = (lo * fhi - hi * flo) / (fhi - flo);
        let ft = moment(t);
        if ft.abs() <= 1e-14 * backend.volume() || (hi - lo).abs() < 1e-16 {
            break;
        }
        if ft.signum() == fhi.signum() {
            hi = t;
            fhi = ft;
            if side == -1 {
                flo *= 0.5;
            }
            side = -1;
        } else {
            lo = t;
            flo = ft;
            if side == 1 {
                fhi *= 0.5;
            }
            side = 1;
        }
    }

    let raw = backend.from_values(pulled(t))?;
    if raw.min() <= 0.0 {
        return Err(Error::GaugeFix(format!(
            "Möbius pullback lost positivity at t = {t:.6e}"
        )));
    }
    let z = backend.integrate(&raw, None)?;
    let vol = backend.volume();
    let density = raw.map(|p| p * vol / z);
    let (psi, _) = solve_poisson_step(backend, &density)?;
    let state = MetricState::new(backend, psi)?;
    let moment = first_moment(backend, state.density())?;
    Ok(GaugeFix { state, t, moment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ModeId;

    #[test]
    fn reference_ricci() {
        let s = Backend::sphere(64).unwrap();
        let rd = ricci_form(&s, &MetricState::reference(&s)).unwrap();
        assert!(rd.ricci_density.sup_distance(&s.constant(1.0)).unwrap() < 1e-14);
        let t = Backend::torus(16, 16, 6.0, 6.0).unwrap();
        let rd = ricci_form(&t, &MetricState::reference(&t)).unwrap();
        assert!(rd.ricci_density.sup_norm() < 1e-14);
        assert!(!rd.positive);
    }

    #[test]
    fn rejects_non_kahler() {
        let s = Backend::sphere(32).unwrap();
        let psi = s.mode(ModeId::Legendre(2)).unwrap().map(|p| 0.5 * p);
        assert!(matches!(MetricState::new(&s, psi), Err(Error::NotKahler { .. })));
    }

    #[test]
    fn normalize_examples() {
        let s = Backend::sphere(32).unwrap();
        let (p, c) = normalize_for_step(&s, &s.zeros(), &s.zeros()).unwrap();
        assert!(c.abs() < 1e-15);
        assert!(p.sup_norm() < 1e-15);
        let (p, _) = normalize_for_step(&s, &s.constant(5.0), &s.zeros()).unwrap();
        assert!(p.sup_norm() < 1e-14);
    }

    #[test]
    fn wrong_sign_is_class_mismatch() {
        let t = Backend::torus(16, 16, 6.0, 6.0).unwrap();
        let m = MetricState::reference(&t);
        assert!(matches!(ricci_potential(&t, &m, 1), Err(Error::ClassMismatch { .. })));
        assert!(matches!(forward_ricci(&t, &m), Err(Error::Unsupported(_))));
    }
}
