//! Finite-level Dirac operator D = Σ_{k=1}^n a_k Q_{n,k} with a_k = c_k/β_k,
//! and the Lip-norm L(a) = ‖[D, a]‖ on (ℬ_n, ‖·‖_{τ_n}).
//!
//! D is applied as Σ_{k=0}^n (a_k − a_{k+1}) E_{n,k} with a_0 = a_{n+1} = 0,
//! which needs only the nested subalgebra bases and E_{n,n} = id.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::cfrac::to_f64;
use crate::error::{Error, Result};
use crate::fdca::{op_norm, sharp_constant, AlgebraElement, BlockShape};
use crate::gns::SubalgebraBasis;
use crate::linalg::{self, PowerOptions};
use crate::tower::Tower;

/// GNS dimension up to which `Auto` uses the dense method.
pub const AUTO_DENSE_LIMIT: usize = 4096;

/// (c_k/β_k)_{k=1..n}, with c_k the sharp constant of level k.
pub fn dirac_coeffs(t: &Tower, n: usize) -> Result<Vec<f64>> {
    t.check_level(n)?;
    (1..=n)
        .map(|k| {
            let c = sharp_constant(t.shape(k)?, t.weights(k)?)?;
            Ok(c / to_f64(t.beta(k)?))
        })
        .collect()
}

/// Everything needed to apply D at level n without materializing it.
#[derive(Clone, Debug)]
pub struct DiracData<'t> {
    tower: &'t Tower,
    level: usize,
    coeffs: Vec<f64>,
    shape: BlockShape,
    metric: Vec<f64>,
    /// Bases of sublevels 0..n−1; E_{n,n} is the identity.
    bases: Vec<Arc<SubalgebraBasis>>,
}

impl<'t> DiracData<'t> {
    pub fn new(t: &'t Tower, n: usize) -> Result<Self> {
        let coeffs = dirac_coeffs(t, n)?;
        Self::with_coeffs(t, n, coeffs)
    }

    /// Uses the given coefficients a_1..a_n instead of c_k/β_k.
    pub fn with_coeffs(t: &'t Tower, n: usize, coeffs: Vec<f64>) -> Result<Self> {
        t.check_level(n)?;
        if coeffs.len() != n {
            return Err(Error::InvalidInput(format!(
                "level {n} needs {n} coefficients, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidInput("Dirac coefficients must be positive".into()));
        }
        let shape = t.shape(n)?.clone();
        let metric = t.weights(n)?.flat_metric(&shape)?;
        let bases = (0..n).map(|k| t.basis(n, k)).collect::<Result<Vec<_>>>()?;
        Ok(DiracData {
            tower: t,
            level: n,
            coeffs,
            shape,
            metric,
            bases,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn shape(&self) -> &BlockShape {
        &self.shape
    }

    pub fn tower(&self) -> &Tower {
        self.tower
    }

    /// The GNS metric of level n on flat vectors.
    pub fn metric(&self) -> &[f64] {
        &self.metric
    }

    /// Largest coefficient, which is ‖D‖.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().copied().fold(0.0, f64::max)
    }

    fn check(&self, a: &AlgebraElement) -> Result<()> {
        if a.shape() != &self.shape {
            return Err(Error::shape(self.shape.dims(), a.shape().dims()));
        }
        Ok(())
    }

    pub fn apply_flat(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.level;
        if n == 0 {
            return vec![Complex64::new(0.0, 0.0); x.len()];
        }
        let a = |k: usize| if k == 0 || k > n { 0.0 } else { self.coeffs[k - 1] };
        let mut out: Vec<Complex64> = x.iter().map(|v| v * a(n)).collect();
        for (k, basis) in self.bases.iter().enumerate() {
            let c = a(k) - a(k + 1);
            if c != 0.0 {
                basis.project_flat_into(x, &self.metric, Complex64::new(c, 0.0), &mut out);
            }
        }
        out
    }

    /// [D, a] applied to the flat vector x: D(a·x) − a·D(x).
    pub fn commutator_flat(&self, a: &AlgebraElement, x: &[Complex64]) -> Vec<Complex64> {
        let b = AlgebraElement::from_flat(&self.shape, x).expect("flat vector sized by shape");
        let ab = a.mul(&b).expect("shape checked").to_flat();
        let db = AlgebraElement::from_flat(&self.shape, &self.apply_flat(x)).expect("same shape");
        let adb = a.mul(&db).expect("shape checked").to_flat();
        let mut out = self.apply_flat(&ab);
        out.iter_mut().zip(adb).for_each(|(o, v)| *o -= v);
        out
    }
}

pub fn dirac_apply(d: &DiracData<'_>, a: &AlgebraElement) -> Result<AlgebraElement> {
    d.check(a)?;
    AlgebraElement::from_flat(&d.shape, &d.apply_flat(&a.to_flat()))
}

/// [D, π(a)] b = D(ab) − a D(b).
pub fn commutator_apply(d: &DiracData<'_>, a: &AlgebraElement, b: &AlgebraElement) -> Result<AlgebraElement> {
    d.check(a)?;
    d.check(b)?;
    AlgebraElement::from_flat(&d.shape, &d.commutator_flat(a, &b.to_flat()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LipMethod {
    Dense,
    Power,
    Auto,
}

impl fmt::Display for LipMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LipMethod::Dense => "dense",
            LipMethod::Power => "power",
            LipMethod::Auto => "auto",
        })
    }
}

impl FromStr for LipMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(LipMethod::Dense),
            "power" => Ok(LipMethod::Power),
            "auto" => Ok(LipMethod::Auto),
            _ => Err(Error::Parse(format!(
                "unknown method {s:?} (expected dense, power or auto)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipOptions {
    pub method: LipMethod,
    /// Relative Rayleigh-quotient change for the power method.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Whether a non-converged power iteration may fall back to dense.
    pub allow_dense_fallback: bool,
}

impl Default for LipOptions {
    fn default() -> Self {
        let p = PowerOptions::default();
        LipOptions {
            method: LipMethod::Auto,
            tol: p.tol,
            max_iter: p.max_iter,
            seed: p.seed,
            allow_dense_fallback: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LipEstimate {
    pub value: f64,
    /// The method that produced `value` (never `Auto`).
    pub method: LipMethod,
    pub iterations: usize,
    /// ‖Mx − λx‖ of the final power step on [D,a]†[D,a]; `None` for dense.
    pub residual: Option<f64>,
    pub fell_back: bool,
}

/// Matrix of b ↦ [D, a] b in the orthonormal basis √(d_b/μ_b)·e_ij.
pub fn commutator_matrix(d: &DiracData<'_>, a: &AlgebraElement) -> Result<DMatrix<Complex64>> {
    d.check(a)?;
    let dim = d.shape.linear_dim();
    let sqrt_m: Vec<f64> = d.metric.iter().map(|m| m.sqrt()).collect();
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    let mut x = vec![Complex64::new(0.0, 0.0); dim];
    for j in 0..dim {
        x[j] = Complex64::new(1.0 / sqrt_m[j], 0.0);
        let col = d.commutator_flat(a, &x);
        for (i, v) in col.into_iter().enumerate() {
            m[(i, j)] = v * sqrt_m[i];
        }
        x[j] = Complex64::new(0.0, 0.0);
    }
    Ok(m)
}

fn lip_dense(d: &DiracData<'_>, a: &AlgebraElement) -> Result<LipEstimate> {
    let m = commutator_matrix(d, a)?;
    Ok(LipEstimate {
        value: linalg::dense_sigma_max(&m),
        method: LipMethod::Dense,
        iterations: 0,
        residual: None,
        fell_back: false,
    })
}

fn lip_power(d: &DiracData<'_>, a: &AlgebraElement, opts: &LipOptions) -> Result<LipEstimate> {
    d.check(a)?;
    let a_star = a.adjoint();
    let bound = 2.0 * d.norm() * op_norm(a);
    let power = PowerOptions {
        tol: opts.tol,
        max_iter: opts.max_iter,
        seed: opts.seed,
        ..PowerOptions::default()
    };
    // [D,a]† = −[D,a*] for the GNS inner product.
    let res = linalg::lanczos_top(
        |x| {
            let y = d.commutator_flat(a, x);
            d.commutator_flat(&a_star, &y).into_iter().map(|v| -v).collect()
        },
        &d.metric,
        bound * bound,
        &power,
    )?;
    Ok(LipEstimate {
        value: res.eigenvalue.sqrt(),
        method: LipMethod::Power,
        iterations: res.iterations,
        residual: Some(res.residual),
        fell_back: false,
    })
}

/// L(a) at level n of the tower.
pub fn lip_seminorm(t: &Tower, n: usize, a: &AlgebraElement, opts: &LipOptions) -> Result<LipEstimate> {
    let d = DiracData::new(t, n)?;
    lip_with(&d, a, opts)
}

/// L(a) for prepared Dirac data.
pub fn lip_with(d: &DiracData<'_>, a: &AlgebraElement, opts: &LipOptions) -> Result<LipEstimate> {
    d.check(a)?;
    let dim = d.shape.linear_dim();
    let method = match opts.method {
        LipMethod::Auto if dim <= AUTO_DENSE_LIMIT => LipMethod::Dense,
        LipMethod::Auto => LipMethod::Power,
        m => m,
    };
    match method {
        LipMethod::Dense => lip_dense(d, a),
        _ => match lip_power(d, a, opts) {
            Err(Error::NonConvergence { .. }) if opts.allow_dense_fallback => {
                let mut est = lip_dense(d, a)?;
                est.fell_back = true;
                Ok(est)
            }
            other => other,
        },
    }
}
