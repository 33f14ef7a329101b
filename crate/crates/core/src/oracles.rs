//! Brute-force dense reference implementations for low resolutions.
//!
//! Everything here is assembled as explicit matrices and solved with dense
//! factorizations. Nothing is shared with the spectral code paths except the
//! collocation nodes and quadrature weights of the backend.

use crate::error::{Error, Result};
use crate::geometry::{Backend, Field};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

/// Largest per-axis resolution the oracles accept.
pub const MAX_ORACLE_RESOLUTION: usize = 32;

fn check_resolution(backend: &Backend) -> Result<()> {
    let too_big = match backend {
        Backend::Torus(t) => {
            let (n1, n2) = t.dims();
            n1 > MAX_ORACLE_RESOLUTION || n2 > MAX_ORACLE_RESOLUTION
        }
        Backend::Sphere(s) => s.modes() > MAX_ORACLE_RESOLUTION,
    };
    if too_big {
        Err(Error::Unsupported(format!(
            "dense oracles are capped at resolution {MAX_ORACLE_RESOLUTION} per axis, got {}",
            backend.tag()
        )))
    } else {
        Ok(())
    }
}

/// Periodic spectral second-derivative matrix on `n` equispaced points of a period `l`.
fn periodic_d2(n: usize, l: f64) -> DMatrix<f64> {
    let h = 2.0 * PI / n as f64;
    let scale = (2.0 * PI / l).powi(2);
    let diag = if n % 2 == 0 {
        -PI * PI / (3.0 * h * h) - 1.0 / 6.0
    } else {
        -PI * PI / (3.0 * h * h) + 1.0 / 12.0
    };
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            return scale * diag;
        }
        let k = i as f64 - j as f64;
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        let s = (0.5 * k * h).sin();
        let entry = if n % 2 == 0 {
            -sign / (2.0 * s * s)
        } else {
            -sign * (0.5 * k * h).cos() / (2.0 * s * s)
        };
        scale * entry
    })
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Barycentric first-derivative matrix on arbitrary distinct nodes.
fn barycentric_d1(x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let w: Vec<f64> = (0..n)
        .map(|j| {
            1.0 / (0..n)
                .filter(|&k| k != j)
                .map(|k| x[j] - x[k])
                .product::<f64>()
        })
        .collect();
    let mut d = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (w[j] / w[i]) / (x[i] - x[j])
        }
    });
    for i in 0..n {
        let s: f64 = (0..n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -s;
    }
    d
}

/// Explicit matrix of the reference Laplacian on the backend's nodes.
pub fn dense_laplacian(backend: &Backend) -> Result<DMatrix<f64>> {
    check_resolution(backend)?;
    match backend {
        Backend::Torus(t) => {
            let (n1, n2) = t.dims();
            let (l1, l2) = t.periods();
            let dx = periodic_d2(n1, l1);
            let dy = periodic_d2(n2, l2);
            Ok(kron(&dx, &DMatrix::identity(n2, n2)) + kron(&DMatrix::identity(n1, n1), &dy))
        }
        Backend::Sphere(s) => {
            let x = s.nodes();
            let n = x.len();
            let d = barycentric_d1(x);
            let d2 = &d * &d;
            Ok(DMatrix::from_fn(n, n, |i, j| {
                (1.0 - x[i] * x[i]) * d2[(i, j)] - 2.0 * x[i] * d[(i, j)]
            }))
        }
    }
}

pub fn dense_apply(backend: &Backend, m: &DMatrix<f64>, f: &Field) -> Result<Field> {
    backend.check(f)?;
    let y = m * DVector::from_column_slice(f.values());
    backend.from_values(y.iter().copied().collect())
}

fn weighted_mean(w: &[f64], x: &DVector<f64>, density: Option<&[f64]>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..w.len() {
        let d = density.map_or(1.0, |d| d[i]);
        num += w[i] * d * x[i];
        den += w[i] * d;
    }
    num / den
}

fn pseudo_inverse(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.pseudo_inverse(1e-10)
        .map_err(|e| Error::InvalidArgument(format!("pseudo-inverse failed: {e}")))
}

/// Zero-mean `u` with `Δu = g − mean(g)` via the dense pseudo-inverse.
pub fn dense_poisson_solve(backend: &Backend, g: &Field) -> Result<Field> {
    backend.check(g)?;
    let lap = dense_laplacian(backend)?;
    let w = backend.weights();
    let mut rhs = DVector::from_column_slice(g.values());
    let gm = weighted_mean(w, &rhs, None);
    rhs.add_scalar_mut(-gm);
    let mut u = pseudo_inverse(lap)? * rhs;
    let um = weighted_mean(w, &u, None);
    u.add_scalar_mut(-um);
    backend.from_values(u.iter().copied().collect())
}

/// Damped dense Newton for `½Δu = exp(f + a·u) − 1`, pointwise exponential.
pub fn dense_semilinear_solve(backend: &Backend, f_total: &Field, a: f64, tol: f64) -> Result<Field> {
    backend.check(f_total)?;
    let lap = dense_laplacian(backend)? * 0.5;
    let n = backend.len();
    let f = DVector::from_column_slice(f_total.values());
    let residual = |u: &DVector<f64>| -> DVector<f64> {
        let e = DVector::from_fn(n, |i, _| (f[i] + a * u[i]).exp());
        &lap * u - e.add_scalar(-1.0)
    };
    let sup = |r: &DVector<f64>| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut u = DVector::zeros(n);
    let mut r = residual(&u);
    let mut res = sup(&r);
    let mut history = vec![res];
    for _ in 0..100 {
        if res <= tol {
            return backend.from_values(u.iter().copied().collect());
        }
        let mut jac = lap.clone();
        for i in 0..n {
            jac[(i, i)] -= a * (f[i] + a * u[i]).exp();
        }
        let delta = jac.lu().solve(&(-&r)).ok_or(Error::LinearSolve {
            iterations: 0,
            residual: f64::INFINITY,
        })?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &u + &delta * step;
            let tr = residual(&trial);
            let tres = sup(&tr);
            if tres < res {
                u = trial;
                r = tr;
                res = tres;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        history.push(res);
        if !accepted {
            break;
        }
    }
    if res <= tol {
        return backend.from_values(u.iter().copied().collect());
    }
    Err(Error::SolverStall {
        iterations: history.len() - 1,
        residual_history: history,
    })
}

/// Dense Green columns for `−Δ_ψ` with density `v`: `½ΔG = v − V·δ_y/w_y`,
/// normalized to zero `v`-weighted mean.
pub fn dense_green(backend: &Backend, density: &Field, sources: &[usize]) -> Result<Vec<Field>> {
    backend.check(density)?;
    let lap = dense_laplacian(backend)? * 0.5;
    let pinv = pseudo_inverse(lap)?;
    let w = backend.weights();
    let vol = backend.volume();
    let v = density.values();
    sources
        .iter()
        .map(|&y| {
            if y >= backend.len() {
                return Err(Error::InvalidArgument(format!("source index {y} out of range")));
            }
            let mut rhs = DVector::from_column_slice(v);
            rhs[y] -= vol / w[y];
            let mut g = &pinv * rhs;
            let m = weighted_mean(w, &g, Some(v));
            g.add_scalar_mut(-m);
            backend.from_values(g.iter().copied().collect())
        })
        .collect()
}

/// Closed-form factor by which one Ricci iteration step scales a small
/// perturbation in the `−Δ` eigenspace with eigenvalue `lambda` at the fixed point.
///
/// For `mu = 1` the eigenvalue is `l(l+1)` on the sphere.
pub fn linearized_step_factor(mu: i32, lambda: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("eigenvalue must be nonnegative, got {lambda}")));
    }
    match mu {
        1 if lambda > 0.0 => Ok(2.0 / lambda),
        1 => Err(Error::InvalidArgument("constants are gauge for mu = 1".into())),
        0 => Ok(1.0 / (1.0 + 0.5 * lambda)),
        -1 => Ok(1.0 / (2.0 + 0.5 * lambda)),
        other => Err(Error::InvalidArgument(format!("mu must be -1, 0 or 1, got {other}"))),
    }
}

/// Sphere mode `l` version of [`linearized_step_factor`] for `mu = 1`.
pub fn sphere_step_factor(l: usize) -> Result<f64> {
    linearized_step_factor(1, (l * (l + 1)) as f64)
}
