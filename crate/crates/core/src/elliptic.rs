//! Scalar elliptic solves behind every iteration step.
//!
//! In complex dimension one the Monge–Ampère step equations reduce to either a
//! linear Poisson problem `½Δψ = ρ − 1` or the monotone semilinear problem
//! `½Δu = exp(f + a·u) − 1` with `a > 0`.

use crate::error::{Error, Result};
use crate::geometry::{Backend, Field};
use nalgebra::{DMatrix, DVector};

/// Relative tolerance on `∫ρ = V` for Poisson steps.
pub const POISSON_VOLUME_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinearStrategy {
    /// Dense LU below [`DENSE_THRESHOLD`] nodes, preconditioned CG above.
    Auto,
    Pcg,
    Dense,
}

/// Node count at or below which [`LinearStrategy::Auto`] assembles the Newton matrix.
pub const DENSE_THRESHOLD: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol_sup: f64,
    pub max_newton: usize,
    pub max_halvings: usize,
    pub linear: LinearStrategy,
    pub cg_max_iter: usize,
    /// One extra Newton step after reaching `tol_sup`, kept when it does not
    /// increase the residual. Removes the dependence on the initial guess.
    pub polish: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_sup: 1e-10,
            max_newton: 50,
            max_halvings: 30,
            linear: LinearStrategy::Auto,
            cg_max_iter: 500,
            polish: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual_sup: f64,
    pub damping_events: usize,
    /// Minimum of the resulting conformal density.
    pub positivity_margin: f64,
    pub linear_iterations: usize,
    pub residual_history: Vec<f64>,
}

/// `½Δu = exp(f_total + a·u) − 1` on a backend.
#[derive(Clone, Debug)]
pub struct SemilinearProblem<'a> {
    backend: &'a Backend,
    source: Field,
    coefficient: f64,
}

impl<'a> SemilinearProblem<'a> {
    pub fn new(backend: &'a Backend, source: Field, coefficient: f64) -> Result<Self> {
        backend.check(&source)?;
        if !(coefficient.is_finite() && coefficient > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "semilinear coefficient must be positive, got {coefficient} (use the Poisson path for a = 0)"
            )));
        }
        Ok(SemilinearProblem {
            backend,
            source,
            coefficient,
        })
    }

    pub fn backend(&self) -> &Backend {
        self.backend
    }

    pub fn source(&self) -> &Field {
        &self.source
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    /// `exp(f_total + a·u)`, oversampled when the backend is.
    pub fn density(&self, u: &Field) -> Result<Field> {
        let a = self.coefficient;
        let exponent = self.source.try_zip_map(u, |f, u| f + a * u)?;
        self.backend.map_nonlinear(&exponent, f64::exp)
    }

    /// `½Δu − exp(f_total + a·u) + 1` together with the density.
    pub fn residual(&self, u: &Field) -> Result<(Field, Field)> {
        let e = self.density(u)?;
        let lap = self.backend.laplacian(u)?;
        let r = lap.zip_map(&e, |l, e| 0.5 * l - e + 1.0);
        Ok((r, e))
    }
}

/// Solves `½Δψ = ρ − 1` for zero-mean `ψ`; requires `ρ > 0` and `∫ρ = V`.
pub fn solve_poisson_step(backend: &Backend, rhs_density: &Field) -> Result<(Field, SolveReport)> {
    backend.check(rhs_density)?;
    if rhs_density.min() <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "step density must be positive (min {:.3e})",
            rhs_density.min()
        )));
    }
    let v = backend.volume();
    let total = backend.integrate(rhs_density, None)?;
    if (total - v).abs() > POISSON_VOLUME_TOL * v {
        return Err(Error::InfeasibleRhs {
            mean: (total - v) / v,
        });
    }
    let g = rhs_density.map(|r| 2.0 * (r - 1.0));
    let psi = backend.solve_poisson_projected(&g)?;
    let lap = backend.laplacian(&psi)?;
    let residual = lap.zip_map(rhs_density, |l, r| 0.5 * l - (r - 1.0));
    let res = residual.sup_norm();
    let margin = lap.map(|l| 1.0 + 0.5 * l).min();
    Ok((
        psi,
        SolveReport {
            iterations: 1,
            final_residual_sup: res,
            damping_events: 0,
            positivity_margin: margin,
            linear_iterations: 0,
            residual_history: vec![res],
        },
    ))
}

/// Damped Newton for the semilinear problem, starting from `initial_guess`.
///
/// The sup-residual is non-increasing across accepted steps.
pub fn solve_semilinear(
    problem: &SemilinearProblem<'_>,
    initial_guess: &Field,
    opts: &SolverOptions,
) -> Result<(Field, SolveReport)> {
    if !(opts.tol_sup > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {}",
            opts.tol_sup
        )));
    }
    let backend = problem.backend;
    backend.check(initial_guess)?;
    let a = problem.coefficient;

    let mut u = initial_guess.clone();
    let (mut r, mut e) = problem.residual(&u)?;
    let mut res = r.sup_norm();
    let mut report = SolveReport {
        residual_history: vec![res],
        ..SolveReport::default()
    };

    let dense = match opts.linear {
        LinearStrategy::Dense => true,
        LinearStrategy::Pcg => false,
        LinearStrategy::Auto => backend.len() <= DENSE_THRESHOLD,
    };
    let lap_matrix = if dense {
        Some(assemble_laplacian(backend)?)
    } else {
        None
    };

    let newton_direction = |r: &Field, e: &Field, report: &mut SolveReport| -> Result<Field> {
        let diag = e.map(|e| a * e);
        match &lap_matrix {
            Some(lap) => dense_solve(backend, lap, &diag, r),
            None => {
                let (d, its) = pcg(backend, &diag, r, opts.cg_max_iter)?;
                report.linear_iterations += its;
                Ok(d)
            }
        }
    };

    while res > opts.tol_sup {
        if report.iterations >= opts.max_newton {
            return Err(Error::SolverStall {
                iterations: report.iterations,
                residual_history: report.residual_history,
            });
        }
        // (−½Δ + a·E) δ = R
        let delta = newton_direction(&r, &e, &mut report)?;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = u.zip_map(&delta, |u, d| u + step * d);
            if let Ok((tr, te)) = problem.residual(&trial) {
                let tres = tr.sup_norm();
                if tres < res {
                    accepted = Some((trial, tr, te, tres));
                    break;
                }
            }
            step *= 0.5;
            report.damping_events += 1;
        }
        report.iterations += 1;
        match accepted {
            Some((nu, nr, ne, nres)) => {
                u = nu;
                r = nr;
                e = ne;
                res = nres;
                report.residual_history.push(res);
            }
            None => {
                return Err(Error::SolverStall {
                    iterations: report.iterations,
                    residual_history: report.residual_history,
                })
            }
        }
    }

    if opts.polish && res > 0.0 {
        let delta = newton_direction(&r, &e, &mut report)?;
        let trial = u.zip_map(&delta, |u, d| u + d);
        if let Ok((tr, te)) = problem.residual(&trial) {
            let tres = tr.sup_norm();
            if tres <= res {
                u = trial;
                e = te;
                res = tres;
                report.residual_history.push(res);
            }
        }
    }

    report.final_residual_sup = res;
    report.positivity_margin = e.min();
    Ok((u, report))
}

fn weighted_dot(w: &[f64], a: &Field, b: &Field) -> f64 {
    w.iter()
        .zip(a.values())
        .zip(b.values())
        .map(|((w, a), b)| w * a * b)
        .sum()
}

/// Preconditioned CG for `(−½Δ + diag) x = b` in the quadrature inner product,
/// preconditioned by the constant-coefficient operator `−½Δ + mean(diag)`.
fn pcg(backend: &Backend, diag: &Field, b: &Field, max_iter: usize) -> Result<(Field, usize)> {
    let w = backend.weights();
    let shift = backend.mean(diag)?;
    let apply = |x: &Field| -> Result<Field> {
        let lap = backend.laplacian(x)?;
        let dx = x.zip_map(diag, |x, d| x * d);
        Ok(lap.zip_map(&dx, |l, d| -0.5 * l + d))
    };
    let precondition = |r: &Field| backend.apply_multiplier(r, |lam| 1.0 / (0.5 * lam + shift));

    let b_norm = weighted_dot(w, b, b).sqrt();
    let mut x = backend.zeros();
    if b_norm == 0.0 {
        return Ok((x, 0));
    }
    let mut r = b.clone();
    let mut z = precondition(&r)?;
    let mut p = z.clone();
    let mut rz = weighted_dot(w, &r, &z);
    let target = 1e-13 * b_norm;
    for it in 1..=max_iter {
        let ap = apply(&p)?;
        let pap = weighted_dot(w, &p, &ap);
        if !(pap > 0.0) {
            return Err(Error::LinearSolve {
                iterations: it,
                residual: weighted_dot(w, &r, &r).sqrt() / b_norm,
            });
        }
        let alpha = rz / pap;
        x = x.zip_map(&p, |x, p| x + alpha * p);
        r = r.zip_map(&ap, |r, ap| r - alpha * ap);
        let rn = weighted_dot(w, &r, &r).sqrt();
        if rn <= target {
            return Ok((x, it));
        }
        z = precondition(&r)?;
        let rz_new = weighted_dot(w, &r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = z.zip_map(&p, |z, p| z + beta * p);
    }
    let rel = weighted_dot(w, &r, &r).sqrt() / b_norm;
    // A loose solve still gives a descent direction for the damped outer loop.
    if rel <= 1e-8 {
        Ok((x, max_iter))
    } else {
        Err(Error::LinearSolve {
            iterations: max_iter,
            residual: rel,
        })
    }
}

/// Column-by-column assembly of the backend Laplacian.
fn assemble_laplacian(backend: &Backend) -> Result<DMatrix<f64>> {
    let n = backend.len();
    let mut m = DMatrix::zeros(n, n);
    let mut unit = vec![0.0; n];
    for j in 0..n {
        unit[j] = 1.0;
        let col = backend.laplacian(&backend.wrap(unit.clone()))?;
        for (i, v) in col.values().iter().enumerate() {
            m[(i, j)] = *v;
        }
        unit[j] = 0.0;
    }
    Ok(m)
}

fn dense_solve(backend: &Backend, lap: &DMatrix<f64>, diag: &Field, rhs: &Field) -> Result<Field> {
    let n = backend.len();
    let mut a = lap * -0.5;
    for (i, d) in diag.values().iter().enumerate() {
        a[(i, i)] += d;
    }
    let b = DVector::from_column_slice(rhs.values());
    let sol = a.lu().solve(&b).ok_or(Error::LinearSolve {
        iterations: 0,
        residual: f64::INFINITY,
    })?;
    debug_assert_eq!(sol.len(), n);
    Ok(backend.wrap(sol.iter().copied().collect()))
}
