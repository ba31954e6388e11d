//! Largest-eigenvalue and largest-singular-value routines shared by `fdca` and
//! `spectral`.
//!
//! Vectors are flat `Complex64` slices; the inner product is diagonal,
//! ⟨x, y⟩ = Σ m_i x_i conj(y_i), with all m_i > 0.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Stopping rule for power iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerOptions {
    /// Relative change of the Rayleigh quotient that counts as converged.
    pub tol: f64,
    /// Bound on ‖Ax − λx‖/λ, also required for convergence.
    pub residual_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions {
            tol: 1e-10,
            residual_tol: 1e-8,
            max_iter: 10_000,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerResult {
    /// Largest eigenvalue of the (positive semidefinite) operator.
    pub eigenvalue: f64,
    pub iterations: usize,
    /// Relative Rayleigh-quotient change at the final step.
    pub last_change: f64,
    /// ‖Ax − λx‖ at the final step.
    pub residual: f64,
    pub restarted: bool,
}

fn weighted_dot(x: &[Complex64], y: &[Complex64], metric: &[f64]) -> Complex64 {
    x.iter().zip(y).zip(metric).map(|((a, b), m)| a * b.conj() * *m).sum()
}

fn weighted_norm(x: &[Complex64], metric: &[f64]) -> f64 {
    x.iter().zip(metric).map(|(a, m)| a.norm_sqr() * m).sum::<f64>().sqrt()
}

fn random_unit(rng: &mut ChaCha8Rng, metric: &[f64]) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = metric
        .iter()
        .map(|_| Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect();
    let n = weighted_norm(&v, metric);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Power iteration for the top eigenvalue of an operator that is self-adjoint
/// and positive semidefinite for the metric `metric`.
///
/// `scale` is an upper estimate of the top eigenvalue; eigenvalues below
/// 1e−26·scale count as zero, which lets the zero operator converge.
///
/// Converged when both the relative Rayleigh change is below `tol` and the
/// relative residual is below `residual_tol`. Starts from a seeded Gaussian
/// vector; if the budget is half spent without convergence, restarts once
/// from a fresh vector.
pub fn power_iteration<F>(mut apply: F, metric: &[f64], scale: f64, opts: &PowerOptions) -> Result<PowerResult>
where
    F: FnMut(&[Complex64]) -> Vec<Complex64>,
{
    if metric.is_empty() {
        return Err(Error::InvalidInput("power iteration on an empty space".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let floor = 1e-26 * scale.max(f64::MIN_POSITIVE);
    let mut x = random_unit(&mut rng, metric);
    let mut lambda = f64::NAN;
    let mut change = f64::INFINITY;
    let mut restarted = false;
    for it in 1..=opts.max_iter {
        let y = apply(&x);
        let rq = weighted_dot(&y, &x, metric).re;
        let ny = weighted_norm(&y, metric);
        if ny <= floor {
            return Ok(PowerResult {
                eigenvalue: rq.max(0.0),
                iterations: it,
                last_change: 0.0,
                residual: ny,
                restarted,
            });
        }
        if lambda.is_finite() {
            change = (rq - lambda).abs() / rq.abs().max(floor);
            let residual = y
                .iter()
                .zip(&x)
                .zip(metric)
                .map(|((a, b), m)| (a - b * rq).norm_sqr() * m)
                .sum::<f64>()
                .sqrt();
            if (rq - lambda).abs() <= opts.tol * rq.abs() + floor && residual <= opts.residual_tol * rq.abs() + floor {
                return Ok(PowerResult {
                    eigenvalue: rq.max(0.0),
                    iterations: it,
                    last_change: change,
                    residual,
                    restarted,
                });
            }
        }
        lambda = rq;
        if !restarted && it == opts.max_iter / 2 {
            restarted = true;
            lambda = f64::NAN;
            x = random_unit(&mut rng, metric);
            continue;
        }
        x = y.into_iter().map(|v| v / ny).collect();
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        last_change: change,
    })
}

/// Largest eigenvalue of a self-adjoint positive semidefinite operator by
/// Lanczos with full reorthogonalization.
///
/// The Krylov space spanned by the power iterates x, Ax, A²x, … is searched
/// for the largest Rayleigh quotient, so the estimate is never worse than
/// plain power iteration on the same matrix-vector products. Converged when the
/// top Ritz value changes by at most `tol` (relative) between checks and its
/// residual ‖Ay − θy‖ is at most `residual_tol`·θ. Every product counts
/// toward `max_iter`. The basis is restarted from the top Ritz vector once it
/// holds [`KRYLOV_LIMIT`] vectors, and once from a fresh random vector if half
/// the budget passes without convergence.
pub fn lanczos_top<F>(mut apply: F, metric: &[f64], scale: f64, opts: &PowerOptions) -> Result<PowerResult>
where
    F: FnMut(&[Complex64]) -> Vec<Complex64>,
{
    let dim = metric.len();
    if dim == 0 {
        return Err(Error::InvalidInput("Lanczos on an empty space".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let floor = 1e-26 * scale.max(f64::MIN_POSITIVE);
    let max_basis = KRYLOV_LIMIT.min(dim);
    let mut start = random_unit(&mut rng, metric);
    let mut products = 0usize;
    let mut restarted = false;
    let mut previous = f64::NAN;
    let mut change = f64::INFINITY;
    loop {
        let mut q: Vec<Vec<Complex64>> = vec![start];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        loop {
            let j = q.len() - 1;
            let mut w = apply(&q[j]);
            products += 1;
            let a = weighted_dot(&w, &q[j], metric).re;
            alpha.push(a);
            // Two rounds of full reorthogonalization.
            for _ in 0..2 {
                for qi in &q {
                    let c = weighted_dot(&w, qi, metric);
                    w.iter_mut().zip(qi).for_each(|(x, y)| *x -= c * y);
                }
            }
            let b = weighted_norm(&w, metric);
            let m = alpha.len();
            // A vanishing b means the Krylov space is invariant and θ is exact.
            let invariant = b <= 1e-12 * alpha.iter().fold(floor, |acc, x| acc.max(x.abs()));
            if m <= 8 || m.is_multiple_of(4) || m == max_basis || invariant {
                let (theta, s_last) = top_ritz(&alpha, &beta);
                let residual = b * s_last.abs();
                if previous.is_finite() {
                    change = (theta - previous).abs() / theta.abs().max(floor);
                }
                let settled = previous.is_finite() && (theta - previous).abs() <= opts.tol * theta.abs() + floor;
                if theta.abs() <= floor || invariant || (settled && residual <= opts.residual_tol * theta.abs() + floor)
                {
                    return Ok(PowerResult {
                        eigenvalue: theta.max(0.0),
                        iterations: products,
                        last_change: if change.is_finite() { change } else { 0.0 },
                        residual,
                        restarted,
                    });
                }
                previous = theta;
            }
            if products >= opts.max_iter {
                return Err(Error::NonConvergence {
                    iterations: products,
                    last_change: change,
                });
            }
            if !restarted && products >= opts.max_iter / 2 {
                restarted = true;
                previous = f64::NAN;
                start = random_unit(&mut rng, metric);
                break;
            }
            if m == max_basis {
                start = ritz_vector(&q, &alpha, &beta, metric);
                break;
            }
            beta.push(b);
            w.iter_mut().for_each(|x| *x /= b);
            q.push(w);
        }
    }
}

/// Krylov basis size at which [`lanczos_top`] restarts.
pub const KRYLOV_LIMIT: usize = 240;

fn tridiagonal(alpha: &[f64], beta: &[f64]) -> DMatrix<f64> {
    let m = alpha.len();
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    })
}

/// Top eigenvalue of the tridiagonal matrix and the last component of its
/// eigenvector.
fn top_ritz(alpha: &[f64], beta: &[f64]) -> (f64, f64) {
    let eig = tridiagonal(alpha, beta).symmetric_eigen();
    let k = eig.eigenvalues.imax();
    (eig.eigenvalues[k], eig.eigenvectors[(alpha.len() - 1, k)])
}

fn ritz_vector(q: &[Vec<Complex64>], alpha: &[f64], beta: &[f64], metric: &[f64]) -> Vec<Complex64> {
    let eig = tridiagonal(alpha, &beta[..alpha.len() - 1]).symmetric_eigen();
    let k = eig.eigenvalues.imax();
    let mut y = vec![Complex64::new(0.0, 0.0); metric.len()];
    for (i, qi) in q.iter().enumerate() {
        let c = eig.eigenvectors[(i, k)];
        y.iter_mut().zip(qi).for_each(|(a, b)| *a += b * c);
    }
    let n = weighted_norm(&y, metric);
    y.iter_mut().for_each(|a| *a /= n);
    y
}

/// Largest singular value by dense decomposition.
pub fn dense_sigma_max(m: &DMatrix<Complex64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Blocks up to this size use a dense SVD; larger ones use power iteration on
/// a*a.
pub const DENSE_BLOCK_LIMIT: usize = 64;

/// Largest singular value of a square matrix: dense SVD up to
/// [`DENSE_BLOCK_LIMIT`], power iteration on a*a above it with dense fallback.
pub fn sigma_max(m: &DMatrix<Complex64>) -> f64 {
    if m.nrows() <= DENSE_BLOCK_LIMIT {
        return dense_sigma_max(m);
    }
    sigma_max_power(m, &PowerOptions::default()).unwrap_or_else(|_| dense_sigma_max(m))
}

/// Largest singular value by power iteration on a*a.
pub fn sigma_max_power(m: &DMatrix<Complex64>, opts: &PowerOptions) -> Result<f64> {
    let metric = vec![1.0; m.ncols()];
    let adj = m.adjoint();
    let scale = m.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let res = power_iteration(
        |x| {
            let v = nalgebra::DVector::from_column_slice(x);
            let w = &adj * (m * v);
            w.as_slice().to_vec()
        },
        &metric,
        scale,
        opts,
    )?;
    Ok(res.eigenvalue.sqrt())
}
