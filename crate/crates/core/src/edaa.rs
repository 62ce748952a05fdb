//! Entropic descent archetypal analysis.
//!
//! Factorizes an ℓ2-normalized image `X ≈ X·B·A` where the columns of the
//! abundances `A` (p × N) and of the contributions `B` (N × p) both live on
//! probability simplices, so the endmembers `E = X·B` are convex
//! combinations of observed pixels. Both factors are updated by entropic
//! mirror descent, whose step is a column-wise softmax and therefore never
//! leaves the simplex.

use crate::ensemble::coherence;
use crate::error::{Error, Result};
use crate::image::{AbundanceMatrix, ContributionMatrix, EndmemberMatrix, HsiImage, SIMPLEX_TOL};
use crate::linalg::{
    matmul, matmul_nt, matmul_tn, spectral_norm, Matrix, SPECTRAL_NORM_MAX_ITERS, SPECTRAL_NORM_TOL,
};
use crate::rng::Prng;

/// Entries are clamped to this before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-30;

/// Scale of the uniform perturbation in the contribution initialization.
const INIT_PERTURBATION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Number of endmembers `p`.
    pub endmembers: usize,
    /// Outer alternations `T`.
    pub outer_iterations: usize,
    /// Entropic steps on `A` per outer iteration (`K1`).
    pub inner_abundances: usize,
    /// Entropic steps on `B` per outer iteration (`K2`).
    pub inner_contributions: usize,
    /// Step factor `γ`.
    pub gamma: f64,
    pub seed: u64,
}

impl SolverConfig {
    pub const DEFAULT_OUTER: usize = 100;
    pub const DEFAULT_INNER: usize = 5;

    pub fn new(endmembers: usize) -> Self {
        Self {
            endmembers,
            outer_iterations: Self::DEFAULT_OUTER,
            inner_abundances: Self::DEFAULT_INNER,
            inner_contributions: Self::DEFAULT_INNER,
            gamma: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.endmembers < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 endmembers, got {}",
                self.endmembers
            )));
        }
        if self.outer_iterations == 0 || self.inner_abundances == 0 || self.inner_contributions == 0
        {
            return Err(Error::InvalidConfig(
                "iteration counts must be at least 1".into(),
            ));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "step factor must be positive, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub endmembers: EndmemberMatrix,
    pub abundances: AbundanceMatrix,
    pub contributions: ContributionMatrix,
    /// `‖X − Ê·Â‖₁`.
    pub fit_l1: f64,
    /// Largest inner product between distinct estimated endmembers.
    pub coherence: f64,
    pub seed: u64,
    pub gamma: f64,
    /// `½‖X − XBA‖²_F` at initialization followed by one value per outer iteration.
    pub objective_trace: Vec<f64>,
}

/// Maximal-entropy abundances: every entry `1/p`.
pub fn init_abundances(p: usize, n: usize) -> AbundanceMatrix {
    AbundanceMatrix::new_unchecked(Matrix::filled(p, n, 1.0 / p as f64))
}

/// Near-uniform contributions: column `j` is `softmax(0.1·u⁽ʲ⁾)` with a fresh
/// uniform draw `u⁽ʲ⁾ ∈ [0,1]ᴺ` per column, consumed column by column.
pub fn init_contributions(n: usize, p: usize, rng: &mut Prng) -> ContributionMatrix {
    let mut b = Matrix::zeros(n, p);
    for col in b.columns_mut() {
        for v in col.iter_mut() {
            *v = INIT_PERTURBATION * rng.next_unit();
        }
        softmax_in_place(col);
    }
    ContributionMatrix::new_unchecked(b)
}

/// Step sizes `(η1, η2)` with `η1 = γ / σ_max(X·B⁰)²` and `η2 = √(p/N)·η1`.
pub fn step_sizes(x: &HsiImage, b0: &ContributionMatrix, gamma: f64) -> Result<(f64, f64)> {
    let xb = matmul(x.data(), b0.matrix())?;
    let sigma = spectral_norm(&xb, SPECTRAL_NORM_TOL, SPECTRAL_NORM_MAX_ITERS)?;
    if sigma == 0.0 {
        return Err(Error::DegenerateInitialization);
    }
    let eta1 = gamma / (sigma * sigma);
    let p = b0.matrix().cols() as f64;
    let n = x.pixels() as f64;
    Ok((eta1, (p / n).sqrt() * eta1))
}

/// Softmax of a column, computed with max subtraction.
fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

/// Overwrites `z` with `softmax(log z − η·grad)`. Returns `false` if a
/// non-finite value appeared.
fn entropic_update(z: &mut [f64], grad: &[f64], eta: f64) -> bool {
    for (zi, gi) in z.iter_mut().zip(grad) {
        *zi = zi.max(LOG_FLOOR).ln() - eta * gi;
    }
    if z.iter().any(|v| !v.is_finite()) {
        return false;
    }
    softmax_in_place(z);
    z.iter().all(|v| v.is_finite())
}

/// One entropic mirror-descent step on the simplex:
/// `softmax(log z − η·grad)`.
pub fn entropic_step(z: &[f64], grad: &[f64], eta: f64) -> Result<Vec<f64>> {
    if z.len() != grad.len() {
        return Err(Error::DimensionMismatch {
            op: "entropic_step",
            left: (z.len(), 1),
            right: (grad.len(), 1),
        });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("entropic_step gradient".into()));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidInput(format!(
            "step size must be positive, got {eta}"
        )));
    }
    let mut out = z.to_vec();
    if !entropic_update(&mut out, grad, eta) {
        return Err(Error::NonFinite("entropic_step result".into()));
    }
    Ok(out)
}

fn check_factor_shapes(x: &HsiImage, b: &Matrix, a: &Matrix) -> Result<()> {
    if b.rows() != x.pixels() {
        return Err(Error::DimensionMismatch {
            op: "X·B",
            left: x.data().shape(),
            right: b.shape(),
        });
    }
    if a.rows() != b.cols() || a.cols() != x.pixels() {
        return Err(Error::DimensionMismatch {
            op: "X·B·A",
            left: b.shape(),
            right: a.shape(),
        });
    }
    Ok(())
}

/// `X − XB·A` given the precomputed `XB`.
fn residual(x: &Matrix, xb: &Matrix, a: &Matrix) -> Result<Matrix> {
    let mut r = matmul(xb, a)?;
    for (ri, xi) in r.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *ri = xi - *ri;
    }
    Ok(r)
}

fn negate(mut m: Matrix) -> Matrix {
    m.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
    m
}

/// `∇_A ½‖X − XBA‖² = −(XB)ᵀ(X − XBA)`, a `p × N` matrix.
pub fn grad_abundances(
    x: &HsiImage,
    b: &ContributionMatrix,
    a: &AbundanceMatrix,
) -> Result<Matrix> {
    check_factor_shapes(x, b.matrix(), a.matrix())?;
    let xb = matmul(x.data(), b.matrix())?;
    let r = residual(x.data(), &xb, a.matrix())?;
    Ok(negate(matmul_tn(&xb, &r)?))
}

/// `∇_B ½‖X − XBA‖² = −Xᵀ((X − XBA)·Aᵀ)`, an `N × p` matrix. The `L × p`
/// product is formed first so no `N × N` intermediate is ever built.
pub fn grad_contributions(
    x: &HsiImage,
    b: &ContributionMatrix,
    a: &AbundanceMatrix,
) -> Result<Matrix> {
    check_factor_shapes(x, b.matrix(), a.matrix())?;
    let xb = matmul(x.data(), b.matrix())?;
    let r = residual(x.data(), &xb, a.matrix())?;
    let ra = matmul_nt(&r, a.matrix())?;
    Ok(negate(matmul_tn(x.data(), &ra)?))
}

/// `½‖X − XBA‖²_F`.
pub fn objective_l2(x: &HsiImage, b: &ContributionMatrix, a: &AbundanceMatrix) -> Result<f64> {
    check_factor_shapes(x, b.matrix(), a.matrix())?;
    let xb = matmul(x.data(), b.matrix())?;
    Ok(0.5 * residual(x.data(), &xb, a.matrix())?.frobenius_norm_sq())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Abundances,
    Contributions,
}

/// Snapshot handed to a [`run_observed`] callback after every inner step.
#[derive(Debug)]
pub struct Iterate<'a> {
    /// Outer iteration, starting at 1.
    pub outer: usize,
    pub phase: Phase,
    /// Inner step within the phase, starting at 1.
    pub inner: usize,
    pub abundances: &'a Matrix,
    pub contributions: &'a Matrix,
}

fn check_normalized(x: &HsiImage) -> Result<()> {
    for (i, c) in x.data().columns().enumerate() {
        let sq: f64 = c.iter().map(|v| v * v).sum();
        if sq != 0.0 && (sq.sqrt() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "pixel {i} is not l2-normalized (norm {})",
                sq.sqrt()
            )));
        }
    }
    Ok(())
}

/// Applies one entropic step to every column of `m`, then verifies each
/// column is still on the simplex.
fn step_columns(
    m: &mut Matrix,
    grad: &Matrix,
    eta: f64,
    outer: usize,
    what: &'static str,
) -> Result<()> {
    for (j, (col, g)) in m.columns_mut().zip(grad.columns()).enumerate() {
        if !entropic_update(col, g, eta) {
            return Err(Error::Diverged { outer });
        }
        let sum: f64 = col.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL || col.iter().any(|&v| v < 0.0) {
            return Err(Error::SimplexViolation {
                what,
                column: j,
                sum,
            });
        }
    }
    Ok(())
}

/// Runs the full alternating solver on an ℓ2-normalized image.
pub fn run(x: &HsiImage, config: &SolverConfig) -> Result<RunResult> {
    run_observed(x, config, |_| {})
}

/// [`run`], calling `observer` after every inner step of either phase.
pub fn run_observed<F>(x: &HsiImage, config: &SolverConfig, mut observer: F) -> Result<RunResult>
where
    F: FnMut(&Iterate<'_>),
{
    config.validate()?;
    check_normalized(x)?;
    let p = config.endmembers;
    let n = x.pixels();
    let xm = x.data();

    let mut a = init_abundances(p, n).into_matrix();
    let mut rng = Prng::new(config.seed);
    let b0 = init_contributions(n, p, &mut rng);
    let (eta1, eta2) = step_sizes(x, &b0, config.gamma)?;
    let mut b = b0.into_matrix();

    let mut trace = Vec::with_capacity(config.outer_iterations + 1);
    let mut xb = matmul(xm, &b)?;
    trace.push(0.5 * residual(xm, &xb, &a)?.frobenius_norm_sq());

    for outer in 1..=config.outer_iterations {
        // B is fixed for the whole A phase
        for inner in 1..=config.inner_abundances {
            let r = residual(xm, &xb, &a)?;
            let grad = negate(matmul_tn(&xb, &r)?);
            step_columns(&mut a, &grad, eta1, outer, "abundance")?;
            observer(&Iterate {
                outer,
                phase: Phase::Abundances,
                inner,
                abundances: &a,
                contributions: &b,
            });
        }
        for inner in 1..=config.inner_contributions {
            let r = residual(xm, &xb, &a)?;
            let ra = matmul_nt(&r, &a)?;
            let grad = negate(matmul_tn(xm, &ra)?);
            step_columns(&mut b, &grad, eta2, outer, "contribution")?;
            xb = matmul(xm, &b)?;
            observer(&Iterate {
                outer,
                phase: Phase::Contributions,
                inner,
                abundances: &a,
                contributions: &b,
            });
        }
        let objective = 0.5 * residual(xm, &xb, &a)?.frobenius_norm_sq();
        if !objective.is_finite() {
            return Err(Error::Diverged { outer });
        }
        trace.push(objective);
    }

    let fit_l1 = residual(xm, &xb, &a)?.abs_sum();
    let coherence = coherence(&xb)?;
    Ok(RunResult {
        endmembers: EndmemberMatrix::new(xb)?,
        abundances: AbundanceMatrix::new_unchecked(a),
        contributions: ContributionMatrix::new_unchecked(b),
        fit_l1,
        coherence,
        seed: config.seed,
        gamma: config.gamma,
        objective_trace: trace,
    })
}

/// `1 / σ_max(E)²`, the Lipschitz step for abundance estimation with fixed `E`.
pub fn default_abundance_step(e: &EndmemberMatrix) -> Result<f64> {
    let sigma = spectral_norm(e.matrix(), SPECTRAL_NORM_TOL, SPECTRAL_NORM_MAX_ITERS)?;
    if sigma == 0.0 {
        return Err(Error::InvalidInput("endmember matrix is zero".into()));
    }
    Ok(1.0 / (sigma * sigma))
}

/// Abundances minimizing `½‖X − E·A‖²` over column-wise simplices, by
/// entropic descent from the uniform initialization with `E` held fixed.
pub fn estimate_abundances(
    x: &HsiImage,
    e: &EndmemberMatrix,
    iters: usize,
    eta: f64,
) -> Result<AbundanceMatrix> {
    estimate_abundances_traced(x, e, iters, eta, false).map(|(a, _)| a)
}

/// [`estimate_abundances`] that optionally records `½‖X − E·A‖²` after every
/// iteration (index 0 is the initial value).
pub fn estimate_abundances_traced(
    x: &HsiImage,
    e: &EndmemberMatrix,
    iters: usize,
    eta: f64,
    trace: bool,
) -> Result<(AbundanceMatrix, Vec<f64>)> {
    if e.bands() != x.bands() {
        return Err(Error::DimensionMismatch {
            op: "estimate_abundances",
            left: x.data().shape(),
            right: e.matrix().shape(),
        });
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidInput(format!(
            "step size must be positive, got {eta}"
        )));
    }
    let p = e.endmembers();
    let n = x.pixels();
    let mut a = init_abundances(p, n).into_matrix();
    if p <= 1 {
        return Ok((AbundanceMatrix::new_unchecked(a), Vec::new()));
    }
    let etx = matmul_tn(e.matrix(), x.data())?;
    let ete = matmul_tn(e.matrix(), e.matrix())?;
    let objective = |a: &Matrix| -> Result<f64> {
        Ok(0.5 * residual(x.data(), e.matrix(), a)?.frobenius_norm_sq())
    };
    let mut objectives = Vec::new();
    if trace {
        objectives.push(objective(&a)?);
    }
    for it in 1..=iters {
        let mut grad = matmul(&ete, &a)?;
        for (g, t) in grad.as_mut_slice().iter_mut().zip(etx.as_slice()) {
            *g -= t;
        }
        step_columns(&mut a, &grad, eta, it, "abundance")?;
        if trace {
            objectives.push(objective(&a)?);
        }
    }
    Ok((AbundanceMatrix::new_unchecked(a), objectives))
}
