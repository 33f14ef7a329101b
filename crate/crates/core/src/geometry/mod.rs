//! Model surfaces and scalar fields on their collocation grids.
//!
//! Two backends are provided: the flat torus `R²/(L1 Z × L2 Z)` with Fourier
//! pseudospectral operators, and the round unit sphere restricted to
//! axisymmetric data, discretized with Gauss–Legendre collocation in
//! `x = cos θ`. The Laplacian is the Laplace–Beltrami operator of the
//! reference metric (nonpositive spectrum) and `i∂∂̄φ = ½(Δφ)ω`, so a
//! potential `ψ` has conformal density `ω_ψ/ω = 1 + ½Δψ`.

pub mod legendre;
mod sphere;
mod torus;

pub use sphere::Sphere;
pub use torus::Torus;

use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

/// Default tolerance on `|mean(g)|` for zero-mean Poisson solves.
pub const SOLVABILITY_TOL: f64 = 1e-10;

/// Identifies the grid a field lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GridTag {
    Torus {
        n1: usize,
        n2: usize,
        l1_bits: u64,
        l2_bits: u64,
    },
    Sphere {
        n: usize,
    },
}

impl fmt::Display for GridTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            GridTag::Torus {
                n1,
                n2,
                l1_bits,
                l2_bits,
            } => write!(
                f,
                "torus {n1}x{n2} (L = {}, {})",
                f64::from_bits(l1_bits),
                f64::from_bits(l2_bits)
            ),
            GridTag::Sphere { n } => write!(f, "sphere n={n}"),
        }
    }
}

/// Real-valued function sampled on a backend's collocation grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    tag: GridTag,
    values: Vec<f64>,
}

impl Field {
    pub fn tag(&self) -> GridTag {
        self.tag
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            tag: self.tag,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn try_zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.ensure_same(other)?;
        Ok(Field {
            tag: self.tag,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Like [`Field::try_zip_map`]; panics on a grid mismatch.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        match self.try_zip_map(other, f) {
            Ok(out) => out,
            Err(e) => panic!("{e}"),
        }
    }

    pub fn ensure_same(&self, other: &Field) -> Result<()> {
        if self.tag != other.tag || self.values.len() != other.values.len() {
            return Err(Error::ShapeMismatch {
                expected: self.tag,
                found: other.tag,
            });
        }
        Ok(())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, what: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    /// Sup-norm distance modulo constants is not implied; this is the plain sup distance.
    pub fn sup_distance(&self, other: &Field) -> Result<f64> {
        self.ensure_same(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul for &Field {
    type Output = Field;
    fn mul(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.map(|a| a * rhs)
    }
}

impl Add<f64> for &Field {
    type Output = Field;
    fn add(self, rhs: f64) -> Field {
        self.map(|a| a + rhs)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.map(|a| -a)
    }
}

/// Spectral representation of a field.
#[derive(Clone, Debug, PartialEq)]
pub enum SpectralCoeffs {
    /// 2-D DFT coefficients, normalized so that `f(x) = Σ c_k e^{ik·x}`.
    Fourier {
        n1: usize,
        n2: usize,
        data: Vec<Complex64>,
    },
    /// Legendre coefficients, `f(x) = Σ c_l P_l(x)`.
    Legendre { data: Vec<f64> },
}

impl SpectralCoeffs {
    /// Largest retained mode index (per axis for Fourier, degree for Legendre).
    pub fn band_limit(&self) -> usize {
        match self {
            SpectralCoeffs::Fourier { n1, n2, .. } => (*n1).max(*n2) / 2,
            SpectralCoeffs::Legendre { data } => data.len().saturating_sub(1),
        }
    }

    /// Largest coefficient-wise difference.
    pub fn max_abs_diff(&self, other: &SpectralCoeffs) -> Option<f64> {
        match (self, other) {
            (SpectralCoeffs::Fourier { data: a, .. }, SpectralCoeffs::Fourier { data: b, .. })
                if a.len() == b.len() =>
            {
                Some(a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).norm())))
            }
            (SpectralCoeffs::Legendre { data: a }, SpectralCoeffs::Legendre { data: b })
                if a.len() == b.len() =>
            {
                Some(a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs())))
            }
            _ => None,
        }
    }
}

/// Named basis function used to build initial data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModeId {
    /// Legendre polynomial `P_l(cos θ)` on the sphere.
    Legendre(usize),
    /// `cos(2π(m1 x/L1 + m2 y/L2))` on the torus.
    Cos(i64, i64),
    /// `sin(2π(m1 x/L1 + m2 y/L2))` on the torus.
    Sin(i64, i64),
}

impl FromStr for ModeId {
    type Err = String;

    /// Accepts `P<l>`, `cos:<m1>:<m2>` and `sin:<m1>:<m2>`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Some(rest) = s.strip_prefix('P') {
            return rest
                .parse::<usize>()
                .map(ModeId::Legendre)
                .map_err(|_| format!("bad Legendre mode id {s:?}"));
        }
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() == 3 {
            let m1 = parts[1].parse::<i64>();
            let m2 = parts[2].parse::<i64>();
            if let (Ok(m1), Ok(m2)) = (m1, m2) {
                match parts[0] {
                    "cos" => return Ok(ModeId::Cos(m1, m2)),
                    "sin" => return Ok(ModeId::Sin(m1, m2)),
                    _ => {}
                }
            }
        }
        Err(format!(
            "bad mode id {s:?} (expected P<l>, cos:<m1>:<m2> or sin:<m1>:<m2>)"
        ))
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeId::Legendre(l) => write!(f, "P{l}"),
            ModeId::Cos(a, b) => write!(f, "cos:{a}:{b}"),
            ModeId::Sin(a, b) => write!(f, "sin:{a}:{b}"),
        }
    }
}

/// A model surface with its reference Kähler form.
///
/// Backends are immutable after construction and can be shared across threads.
#[derive(Debug)]
pub enum Backend {
    Torus(Torus),
    Sphere(Sphere),
}

impl Backend {
    /// Flat torus with `n1 × n2` nodes and periods `(l1, l2)`.
    pub fn torus(n1: usize, n2: usize, l1: f64, l2: f64) -> Result<Self> {
        Self::torus_with(n1, n2, l1, l2, true)
    }

    pub fn torus_with(n1: usize, n2: usize, l1: f64, l2: f64, oversample: bool) -> Result<Self> {
        if n1 < 2 || n2 < 2 {
            return Err(Error::InvalidArgument(format!(
                "torus resolution must be at least 2x2, got {n1}x{n2}"
            )));
        }
        if !(l1.is_finite() && l1 > 0.0 && l2.is_finite() && l2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "torus periods must be positive, got ({l1}, {l2})"
            )));
        }
        Ok(Backend::Torus(Torus::new(n1, n2, l1, l2, oversample)))
    }

    /// Round unit sphere (area 4π) with `n` Gauss–Legendre nodes.
    pub fn sphere(n: usize) -> Result<Self> {
        Self::sphere_with(n, true)
    }

    pub fn sphere_with(n: usize, oversample: bool) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "sphere resolution must be at least 2, got {n}"
            )));
        }
        Ok(Backend::Sphere(Sphere::new(n, oversample)))
    }

    pub fn as_sphere(&self) -> Option<&Sphere> {
        match self {
            Backend::Sphere(s) => Some(s),
            Backend::Torus(_) => None,
        }
    }

    pub fn as_torus(&self) -> Option<&Torus> {
        match self {
            Backend::Torus(t) => Some(t),
            Backend::Sphere(_) => None,
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, Backend::Sphere(_))
    }

    pub fn tag(&self) -> GridTag {
        match self {
            Backend::Torus(t) => {
                let (n1, n2) = t.dims();
                let (l1, l2) = t.periods();
                GridTag::Torus {
                    n1,
                    n2,
                    l1_bits: l1.to_bits(),
                    l2_bits: l2.to_bits(),
                }
            }
            Backend::Sphere(s) => GridTag::Sphere { n: s.modes() },
        }
    }

    pub fn len(&self) -> usize {
        self.weights().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total area `V = ∫ω`.
    pub fn volume(&self) -> f64 {
        match self {
            Backend::Torus(t) => {
                let (l1, l2) = t.periods();
                l1 * l2
            }
            Backend::Sphere(_) => 4.0 * PI,
        }
    }

    pub fn euler_char(&self) -> i32 {
        match self {
            Backend::Torus(_) => 0,
            Backend::Sphere(_) => 2,
        }
    }

    /// Gauss curvature of the reference metric.
    pub fn reference_curvature(&self) -> f64 {
        match self {
            Backend::Torus(_) => 0.0,
            Backend::Sphere(_) => 1.0,
        }
    }

    /// Canonical class sign `μ` with `c₁ = μ[ω]`.
    pub fn canonical_sign(&self) -> i32 {
        match self {
            Backend::Torus(_) => 0,
            Backend::Sphere(_) => 1,
        }
    }

    /// Quadrature weights (area element per node); they sum to `V`.
    pub fn weights(&self) -> &[f64] {
        match self {
            Backend::Torus(t) => t.weights(),
            Backend::Sphere(s) => s.weights(),
        }
    }

    pub fn check(&self, f: &Field) -> Result<()> {
        if f.tag != self.tag() || f.values.len() != self.len() {
            return Err(Error::ShapeMismatch {
                expected: self.tag(),
                found: f.tag,
            });
        }
        Ok(())
    }

    pub fn from_values(&self, values: Vec<f64>) -> Result<Field> {
        if values.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} nodal values, got {}",
                self.len(),
                values.len()
            )));
        }
        let f = Field {
            tag: self.tag(),
            values,
        };
        f.ensure_finite("field construction")?;
        Ok(f)
    }

    pub(crate) fn wrap(&self, values: Vec<f64>) -> Field {
        Field {
            tag: self.tag(),
            values,
        }
    }

    pub fn constant(&self, c: f64) -> Field {
        self.wrap(vec![c; self.len()])
    }

    pub fn zeros(&self) -> Field {
        self.constant(0.0)
    }

    /// `∫ f · weight dA` by the backend quadrature.
    pub fn integrate(&self, f: &Field, weight: Option<&Field>) -> Result<f64> {
        self.check(f)?;
        let w = self.weights();
        match weight {
            None => Ok(f.values.iter().zip(w).map(|(a, w)| a * w).sum()),
            Some(g) => {
                self.check(g)?;
                if g.min() <= 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "integration weight must be strictly positive (min {:.3e})",
                        g.min()
                    )));
                }
                Ok(f
                    .values
                    .iter()
                    .zip(&g.values)
                    .zip(w)
                    .map(|((a, b), w)| a * b * w)
                    .sum())
            }
        }
    }

    /// Average `V^{-1} ∫ f dA`.
    pub fn mean(&self, f: &Field) -> Result<f64> {
        Ok(self.integrate(f, None)? / self.volume())
    }

    /// Applies the spectral multiplier `m(λ)`, `λ ≥ 0` the eigenvalue of `-Δ`.
    pub fn apply_multiplier(&self, f: &Field, m: impl Fn(f64) -> f64) -> Result<Field> {
        self.check(f)?;
        let values = match self {
            Backend::Torus(t) => t.apply_multiplier(&f.values, m),
            Backend::Sphere(s) => s.apply_multiplier(&f.values, m),
        };
        let out = self.wrap(values);
        out.ensure_finite("spectral multiplier")?;
        Ok(out)
    }

    /// Laplace–Beltrami operator of the reference metric.
    pub fn laplacian(&self, f: &Field) -> Result<Field> {
        match self {
            Backend::Torus(_) => self.apply_multiplier(f, |lam| -lam),
            Backend::Sphere(s) => {
                self.check(f)?;
                let out = self.wrap(s.laplacian(&f.values));
                out.ensure_finite("laplacian")?;
                Ok(out)
            }
        }
    }

    /// Zero-mean `u` with `Δu = g − mean(g)`; rejects `g` whose mean exceeds the
    /// solvability tolerance.
    pub fn inverse_laplacian_zero_mean(&self, g: &Field) -> Result<Field> {
        self.inverse_laplacian_with_tol(g, SOLVABILITY_TOL)
    }

    pub fn inverse_laplacian_with_tol(&self, g: &Field, tol: f64) -> Result<Field> {
        let mean = self.mean(g)?;
        if mean.abs() > tol * g.sup_norm().max(1.0) {
            return Err(Error::InfeasibleRhs { mean });
        }
        self.solve_poisson_projected(g)
    }

    /// Zero-mean solution of `Δu = g − mean(g)` without the solvability check.
    pub(crate) fn solve_poisson_projected(&self, g: &Field) -> Result<Field> {
        let u = self.apply_multiplier(g, |lam| if lam == 0.0 { 0.0 } else { -1.0 / lam })?;
        let m = self.mean(&u)?;
        Ok(u.map(|v| v - m))
    }

    /// `ω_ψ / ω = 1 + ½Δψ`.
    pub fn conformal_density(&self, psi: &Field) -> Result<Field> {
        Ok(self.laplacian(psi)?.map(|l| 1.0 + 0.5 * l))
    }

    pub fn transform(&self, f: &Field) -> Result<SpectralCoeffs> {
        self.check(f)?;
        Ok(match self {
            Backend::Torus(t) => {
                let (n1, n2) = t.dims();
                SpectralCoeffs::Fourier {
                    n1,
                    n2,
                    data: t.forward(&f.values),
                }
            }
            Backend::Sphere(s) => SpectralCoeffs::Legendre {
                data: s.forward(&f.values),
            },
        })
    }

    pub fn inverse_transform(&self, c: &SpectralCoeffs) -> Result<Field> {
        let values = match (self, c) {
            (Backend::Torus(t), SpectralCoeffs::Fourier { n1, n2, data })
                if (*n1, *n2) == t.dims() && data.len() == n1 * n2 =>
            {
                t.inverse(data)
            }
            (Backend::Sphere(s), SpectralCoeffs::Legendre { data }) if data.len() == s.modes() => {
                s.inverse(data)
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "spectral coefficients do not match backend".into(),
                ))
            }
        };
        Ok(self.wrap(values))
    }

    /// Evaluates a pointwise nonlinearity, with 2× oversampling when the backend
    /// was built with it.
    pub fn map_nonlinear(&self, f: &Field, g: impl Fn(f64) -> f64) -> Result<Field> {
        self.check(f)?;
        let values = match self {
            Backend::Torus(t) => t.map_nonlinear(&f.values, g),
            Backend::Sphere(s) => s.map_nonlinear(&f.values, g),
        };
        let out = self.wrap(values);
        out.ensure_finite("nonlinear map")?;
        Ok(out)
    }

    /// Samples a basis function.
    pub fn mode(&self, id: ModeId) -> Result<Field> {
        match (self, id) {
            (Backend::Sphere(s), ModeId::Legendre(l)) => {
                Ok(self.wrap(s.sample(|x| legendre::legendre_p(l, x))))
            }
            (Backend::Torus(t), ModeId::Cos(m1, m2)) => {
                let (l1, l2) = t.periods();
                Ok(self.wrap(t.sample(|x, y| {
                    (2.0 * PI * (m1 as f64 * x / l1 + m2 as f64 * y / l2)).cos()
                })))
            }
            (Backend::Torus(t), ModeId::Sin(m1, m2)) => {
                let (l1, l2) = t.periods();
                Ok(self.wrap(t.sample(|x, y| {
                    (2.0 * PI * (m1 as f64 * x / l1 + m2 as f64 * y / l2)).sin()
                })))
            }
            _ => Err(Error::InvalidArgument(format!(
                "mode {id} is not defined on {}",
                self.tag()
            ))),
        }
    }

    /// Linear combination of basis functions.
    pub fn modes(&self, terms: &[(ModeId, f64)]) -> Result<Field> {
        let mut acc = vec![0.0; self.len()];
        for &(id, amp) in terms {
            let m = self.mode(id)?;
            for (a, v) in acc.iter_mut().zip(&m.values) {
                *a += amp * v;
            }
        }
        Ok(self.wrap(acc))
    }

    /// Random band-limited, mean-zero field with sup norm `amplitude`.
    ///
    /// Sphere: degrees `1..=band`. Torus: wavevectors with `max(|m1|, |m2|) ≤ band`.
    /// Deterministic in `seed`.
    pub fn random_band_limited(&self, band: usize, amplitude: f64, seed: u64) -> Result<Field> {
        if band == 0 {
            return Err(Error::InvalidArgument("band must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms = Vec::new();
        match self {
            Backend::Sphere(s) => {
                if band >= s.modes() {
                    return Err(Error::InvalidArgument(format!(
                        "band {band} exceeds resolution {}",
                        s.modes()
                    )));
                }
                for l in 1..=band {
                    terms.push((ModeId::Legendre(l), rng.gen_range(-1.0..1.0)));
                }
            }
            Backend::Torus(t) => {
                let (n1, n2) = t.dims();
                if 2 * band >= n1.min(n2) {
                    return Err(Error::InvalidArgument(format!(
                        "band {band} exceeds resolution {n1}x{n2}"
                    )));
                }
                let b = band as i64;
                for m1 in 0..=b {
                    for m2 in -b..=b {
                        if m1 == 0 && m2 <= 0 {
                            continue;
                        }
                        terms.push((ModeId::Cos(m1, m2), rng.gen_range(-1.0..1.0)));
                        terms.push((ModeId::Sin(m1, m2), rng.gen_range(-1.0..1.0)));
                    }
                }
            }
        }
        let raw = self.modes(&terms)?;
        let mean = self.mean(&raw)?;
        let centered = raw.map(|v| v - mean);
        let sup = centered.sup_norm();
        if sup == 0.0 {
            return Ok(centered);
        }
        Ok(centered.map(|v| v * amplitude / sup))
    }

    /// Random potential scaled so that `sup|½Δψ| = density_amplitude`; Kähler
    /// whenever the amplitude is below one.
    pub fn random_potential(&self, band: usize, density_amplitude: f64, seed: u64) -> Result<Field> {
        let psi = self.random_band_limited(band, 1.0, seed)?;
        let s = 0.5 * self.laplacian(&psi)?.sup_norm();
        if s == 0.0 {
            return Ok(psi);
        }
        Ok(psi.map(|p| p * density_amplitude / s))
    }
}
