//! Outer solvers: the general double proximal gradient iteration with a
//! Tseng forward-backward-forward correction, and its ℓ1 / Einstein /
//! total-variation specializations.
//!
//! One outer step from `X_k`:
//!
//! ```text
//! Y_k     = X_k − α∇f(X_k)
//! Z_k     ≈ prox_{αμφ∘L}(Y_k)              (inner dual loop)
//! Q_k     = Z_k − α∇f(Z_k)
//! X_{k+1} = Π_Ω(X_k − Y_k + Q_k)
//! ```
//!
//! with `f(X) = ½‖F(X) − B‖²`.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::svd;
use crate::linop::{
    einstein_op, gradient_op, gram_norm, identity_op, EinsteinOp, GradientOp,
    IdentityOp, LinearOperator, NormEstimate,
};
use crate::metrics::psnr;
use crate::prox::{dual_prox_solve, phi_value, InnerLoopConfig, L1Norm, ProxFunction};
use crate::space::InnerProductSpace;
use crate::tensor::{mode_n_fold, mode_n_unfold, DenseTensor};

/// Closed convex set `Ω` with an exact (or documented surrogate) projection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSet {
    WholeSpace,
    Box { lo: f64, hi: f64 },
    /// `{X : ‖X(mode)‖_* ≤ ε}` for a single unfolding.
    NuclearBall { epsilon: f64, mode: usize },
}

impl ConstraintSet {
    pub fn project(&self, x: &DenseTensor) -> Result<DenseTensor> {
        match *self {
            ConstraintSet::WholeSpace => Ok(x.clone()),
            ConstraintSet::Box { lo, hi } => project_box(x, lo, hi),
            ConstraintSet::NuclearBall { epsilon, mode } => project_nuclear_ball(x, epsilon, mode),
        }
    }

    /// Membership test; the nuclear ball is checked to relative slack `rel_tol`.
    pub fn contains(&self, x: &DenseTensor, rel_tol: f64) -> Result<bool> {
        Ok(match *self {
            ConstraintSet::WholeSpace => true,
            ConstraintSet::Box { lo, hi } => x.data().iter().all(|&v| v >= lo && v <= hi),
            ConstraintSet::NuclearBall { epsilon, mode } => {
                crate::tensor::unfolding_nuclear_norm(x, mode)? <= epsilon * (1.0 + rel_tol)
            }
        })
    }
}

/// Entrywise clamp to `[lo, hi]`.
pub fn project_box(x: &DenseTensor, lo: f64, hi: f64) -> Result<DenseTensor> {
    if !(lo <= hi) {
        return Err(Error::param(format!("empty box [{lo}, {hi}]")));
    }
    Ok(x.map(|v| v.clamp(lo, hi)))
}

/// Euclidean projection of nonnegative, descending `s` onto `{Σ s ≤ radius}`.
fn project_spectrum(s: &[f64], radius: f64) -> Vec<f64> {
    let total: f64 = s.iter().sum();
    if total <= radius {
        return s.to_vec();
    }
    // Largest k with s_k > θ_k, θ_k = (Σ_{i≤k} s_i − radius) / k.
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &v) in s.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - radius) / (k + 1) as f64;
        if v > t {
            theta = t;
        }
    }
    s.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Frobenius projection onto the nuclear-norm ball of the mode-`mode`
/// unfolding: soft-threshold the singular values so they sum to `epsilon`.
/// This is a single-mode surrogate for the sum-over-modes ball.
pub fn project_nuclear_ball(x: &DenseTensor, epsilon: f64, mode: usize) -> Result<DenseTensor> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
    }
    let m = mode_n_unfold(x, mode)?;
    let svd = svd(&m)?;
    let s = &svd.s;
    if s.iter().sum::<f64>() <= epsilon {
        return Ok(x.clone());
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let sorted: Vec<f64> = order.iter().map(|&k| s[k]).collect();
    let projected = project_spectrum(&sorted, epsilon);
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (&k, &sigma) in order.iter().zip(&projected) {
        if sigma > 0.0 {
            out += sigma * svd.u.column(k) * svd.v_t.row(k);
        }
    }
    mode_n_fold(&out, mode, x.shape())
}


/// How `∇f` is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientForm {
    /// `Fᵀ(F(X) − B)`.
    #[default]
    Adjoint,
    /// `F(X) − B` without the adjoint; only meaningful when `F` maps the
    /// space to itself. Kept for comparison with the uncorrected formula.
    Literal,
}

/// `min_{X∈Ω} ½‖F(X) − B‖² + μ·φ(L(X))`.
pub struct ProblemSpec<F, L, Phi> {
    pub forward: F,
    pub observation: DenseTensor,
    pub reg_op: L,
    pub phi: Phi,
    pub mu: f64,
    pub omega: ConstraintSet,
    pub gradient: GradientForm,
}

impl<F, L, Phi> ProblemSpec<F, L, Phi>
where
    F: LinearOperator<Range = DenseTensor>,
    L: LinearOperator,
    Phi: ProxFunction<L::Range>,
{
    pub fn new(
        forward: F,
        observation: DenseTensor,
        reg_op: L,
        phi: Phi,
        mu: f64,
        omega: ConstraintSet,
    ) -> Result<Self> {
        if forward.codomain_shape() != observation.shape() {
            return Err(Error::dim(format!(
                "forward operator maps into {:?} but the observation has shape {:?}",
                forward.codomain_shape(),
                observation.shape()
            )));
        }
        if forward.domain_shape() != reg_op.domain_shape() {
            return Err(Error::dim("forward and regularization operators have different domains"));
        }
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::param(format!("mu must be finite and >= 0, got {mu}")));
        }
        Ok(ProblemSpec {
            forward,
            observation,
            reg_op,
            phi,
            mu,
            omega,
            gradient: GradientForm::Adjoint,
        })
    }

    pub fn with_gradient_form(mut self, form: GradientForm) -> Self {
        self.gradient = form;
        self
    }

    pub fn domain_shape(&self) -> &[usize] {
        self.forward.domain_shape()
    }
}

/// `∇f(X) = Fᵀ(F(X) − B)` (or the literal residual, see [`GradientForm`]).
pub fn grad_f<F, L, Phi>(x: &DenseTensor, spec: &ProblemSpec<F, L, Phi>) -> Result<DenseTensor>
where
    F: LinearOperator<Range = DenseTensor>,
    L: LinearOperator,
    Phi: ProxFunction<L::Range>,
{
    let residual = spec.forward.apply(x)?.sub(&spec.observation)?;
    match spec.gradient {
        GradientForm::Adjoint => spec.forward.adjoint(&residual),
        GradientForm::Literal => {
            if residual.shape() != x.shape() {
                return Err(Error::dim("literal gradient needs F to map the space to itself"));
            }
            Ok(residual)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveParts {
    pub data_fit: f64,
    pub regularizer: f64,
}

impl ObjectiveParts {
    pub fn total(&self) -> f64 {
        self.data_fit + self.regularizer
    }
}

pub fn objective_parts<F, L, Phi>(x: &DenseTensor, spec: &ProblemSpec<F, L, Phi>) -> Result<ObjectiveParts>
where
    F: LinearOperator<Range = DenseTensor>,
    L: LinearOperator,
    Phi: ProxFunction<L::Range>,
{
    let r = spec.forward.apply(x)?.sub(&spec.observation)?;
    Ok(ObjectiveParts {
        data_fit: 0.5 * r.norm_sq(),
        regularizer: phi_value(x, &spec.reg_op, &spec.phi, spec.mu)?,
    })
}

/// `½‖F(X) − B‖² + μφ(L(X))`.
pub fn objective<F, L, Phi>(x: &DenseTensor, spec: &ProblemSpec<F, L, Phi>) -> Result<f64>
where
    F: LinearOperator<Range = DenseTensor>,
    L: LinearOperator,
    Phi: ProxFunction<L::Range>,
{
    Ok(objective_parts(x, spec)?.total())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaChoice {
    pub alpha: f64,
    pub forward_norm: NormEstimate,
}

const ALPHA_MARGIN: f64 = 0.95;

/// `α = 0.95 / (safety · ‖Fᵀ∘F‖)`, strictly inside the admissible interval.
pub fn choose_alpha<F, L, Phi>(spec: &ProblemSpec<F, L, Phi>, safety: f64, tol: f64) -> Result<AlphaChoice>
where
    F: LinearOperator<Range = DenseTensor>,
    L: LinearOperator,
    Phi: ProxFunction<L::Range>,
{
    if !(safety >= 1.0) {
        return Err(Error::param(format!("lipschitz safety factor must be >= 1, got {safety}")));
    }
    let est = gram_norm(&spec.forward, tol, 10_000)?;
    let gram = est.gram_norm();
    if gram <= 0.0 {
        return Err(Error::param("forward operator is zero; no step size is defined"));
    }
    Ok(AlphaChoice { alpha: ALPHA_MARGIN / (safety * gram), forward_norm: est })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Outer step; `None` picks it with [`choose_alpha`].
    pub alpha: Option<f64>,
    pub lipschitz_safety: f64,
    pub inner: InnerLoopConfig,
    /// Relative-change stopping threshold.
    pub tol: f64,
    pub max_outer: usize,
    pub warm_start_dual: bool,
    /// Abort when the objective exceeds this multiple of the initial one.
    pub divergence_factor: f64,
    pub norm_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: None,
            lipschitz_safety: 2.0,
            inner: InnerLoopConfig::default(),
            tol: 1e-3,
            max_outer: 500,
            warm_start_dual: true,
            divergence_factor: 1e3,
            norm_tol: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.inner.validate()?;
        if !(self.tol > 0.0) {
            return Err(Error::param(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_outer == 0 {
            return Err(Error::param("max_outer must be at least 1"));
        }
        if !(self.lipschitz_safety >= 1.0) {
            return Err(Error::param("lipschitz_safety must be >= 1"));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::param("divergence_factor must exceed 1"));
        }
        if !(self.norm_tol > 0.0) {
            return Err(Error::param("norm_tol must be positive"));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::param(format!("alpha must be positive, got {a}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub data_fit: f64,
    pub regularizer: f64,
    pub relative_change: f64,
    pub elapsed_s: f64,
    pub psnr_db: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    /// Number of base (outer) iterations performed.
    pub iterates_used: usize,
    /// Extrapolation cycles; zero for an unaccelerated run.
    pub cycles: usize,
    pub final_x: DenseTensor,
    /// One record per outer iteration, or per cycle for accelerated runs.
    pub history: Vec<IterationRecord>,
    pub termination: Termination,
    pub alpha: f64,
    pub warnings: Vec<String>,
}

/// `‖a − b‖ / ‖b‖`, with `0/0 = 0`.
pub(crate) fn relative_change(next: &DenseTensor, prev: &DenseTensor) -> Result<f64> {
    let diff = next.sub(prev)?.frobenius_norm();
    let base = prev.frobenius_norm();
    Ok(if diff == 0.0 {
        0.0
    } else if base == 0.0 {
        f64::INFINITY
    } else {
        diff / base
    })
}

/// Iteration state of the double proximal gradient method. Exposed so the
/// extrapolation drivers can run it in windows.
pub struct Gtpg<'a, F, L, Phi>
where
    L: LinearOperator,
{
    spec: &'a ProblemSpec<F, L, Phi>,
    cfg: SolverConfig,
    alpha: f64,
    ll_norm: f64,
    beta0: f64,
    x: DenseTensor,
    dual: Option<L::Range>,
    steps: usize,
    warnings: Vec<String>,
}

impl<'a, F, L, Phi> Gtpg<'a, F, L, Phi>
where
    F: LinearOperator<Range = DenseTensor>,
    L: LinearOperator,
    Phi: ProxFunction<L::Range>,
{
    pub fn new(spec: &'a ProblemSpec<F, L, Phi>, cfg: &SolverConfig, x0: DenseTensor) -> Result<Self> {
        cfg.validate()?;
        spec.forward.check_domain(&x0)?;
        let mut warnings = Vec::new();
        let choice = choose_alpha(spec, cfg.lipschitz_safety, cfg.norm_tol)?;
        if !choice.forward_norm.converged {
            warnings.push(format!(
                "forward norm estimate unconverged after {} iterations",
                choice.forward_norm.iterations
            ));
        }
        let alpha = match cfg.alpha {
            None => choice.alpha,
            Some(a) => {
                let bound = 1.0 / (cfg.lipschitz_safety * choice.forward_norm.gram_norm());
                if a >= bound * (1.0 + 1e-6) {
                    return Err(Error::param(format!(
                        "alpha {a} is not admissible; it must stay below {bound}"
                    )));
                }
                a
            }
        };
        let ll = gram_norm(&spec.reg_op, 1e-6, 2_000)?;
        if !ll.converged {
            warnings.push("regularization operator norm estimate unconverged".to_owned());
        }
        let ll_norm = ll.gram_norm();
        let beta0 = cfg.inner.resolved_beta0(alpha, ll_norm);
        Ok(Gtpg {
            spec,
            cfg: cfg.clone(),
            alpha,
            ll_norm,
            beta0,
            x: x0,
            dual: None,
            steps: 0,
            warnings,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn current(&self) -> &DenseTensor {
        &self.x
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn spec(&self) -> &ProblemSpec<F, L, Phi> {
        self.spec
    }

    /// Replaces the current iterate. The dual warm start is kept.
    pub fn reset(&mut self, x: DenseTensor) -> Result<()> {
        self.spec.forward.check_domain(&x)?;
        self.x = x;
        Ok(())
    }

    /// One outer iteration; returns the new iterate.
    pub fn step(&mut self) -> Result<&DenseTensor> {
        let spec = self.spec;
        let alpha = self.alpha;
        let y = self.x.add_scaled(-alpha, &grad_f(&self.x, spec)?)?;
        let inner = InnerLoopConfig { beta0: Some(self.beta0), ..self.cfg.inner.clone() };
        let warm = if self.cfg.warm_start_dual { self.dual.as_ref() } else { None };
        let solved = dual_prox_solve(
            &y,
            alpha,
            &spec.reg_op,
            &spec.phi,
            spec.mu,
            &inner,
            Some(self.ll_norm),
            warm,
        )?;
        let z = solved.z;
        let q = z.add_scaled(-alpha, &grad_f(&z, spec)?)?;
        let next = spec.omega.project(&self.x.sub(&y)?.add(&q)?)?;
        if !next.all_finite() {
            return Err(Error::numerical(format!(
                "outer iterate {} is non-finite",
                self.steps + 1
            )));
        }
        self.dual = Some(solved.dual);
        self.x = next;
        self.steps += 1;
        Ok(&self.x)
    }
}

/// Runs the double proximal gradient method until the relative change
/// drops below `cfg.tol` or `cfg.max_outer` iterations have been taken.
pub fn gtpg_solve<F, L, Phi>(spec: &ProblemSpec<F, L, Phi>, cfg: &SolverConfig, x0: DenseTensor) -> Result<SolveReport>
where
    F: LinearOperator<Range = DenseTensor>,
    L: LinearOperator,
    Phi: ProxFunction<L::Range>,
{
    gtpg_solve_tracked(spec, cfg, x0, None)
}

/// As [`gtpg_solve`], additionally recording PSNR against `reference`.
pub fn gtpg_solve_tracked<F, L, Phi>(
    spec: &ProblemSpec<F, L, Phi>,
    cfg: &SolverConfig,
    x0: DenseTensor,
    reference: Option<&DenseTensor>,
) -> Result<SolveReport>
where
    F: LinearOperator<Range = DenseTensor>,
    L: LinearOperator,
    Phi: ProxFunction<L::Range>,
{
    let start = Instant::now();
    let initial = objective(&x0, spec)?;
    let limit = cfg.divergence_factor * initial.abs().max(f64::EPSILON);
    let mut state = Gtpg::new(spec, cfg, x0)?;
    let mut history = Vec::new();
    let mut termination = Termination::MaxIterations;
    for k in 1..=cfg.max_outer {
        let prev = state.current().clone();
        let x = state.step()?;
        let change = relative_change(x, &prev)?;
        let parts = objective_parts(x, spec)?;
        let record = IterationRecord {
            iteration: k,
            objective: parts.total(),
            data_fit: parts.data_fit,
            regularizer: parts.regularizer,
            relative_change: change,
            elapsed_s: start.elapsed().as_secs_f64(),
            psnr_db: reference.map(|r| psnr(x, r)).transpose()?,
        };
        let obj = record.objective;
        history.push(record);
        if !obj.is_finite() || obj > limit {
            return Err(Error::Diverged { iteration: k, objective: obj, limit, history });
        }
        if change < cfg.tol {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(SolveReport {
        iterates_used: history.len(),
        cycles: 0,
        final_x: state.current().clone(),
        history,
        termination,
        alpha: state.alpha(),
        warnings: state.warnings().to_vec(),
    })
}

pub type TistaSpec<F> = ProblemSpec<F, IdentityOp, L1Norm>;
pub type TdpgSpec<F> = ProblemSpec<F, GradientOp, L1Norm>;

/// `min ½‖F(X) − B‖² + μ‖X‖₁` over `Ω`.
pub fn tista_spec<F>(forward: F, b: DenseTensor, mu: f64, omega: ConstraintSet) -> Result<TistaSpec<F>>
where
    F: LinearOperator<Range = DenseTensor>,
{
    let l = identity_op(forward.domain_shape())?;
    ProblemSpec::new(forward, b, l, L1Norm, mu, omega)
}

/// `min ½‖F(X) − B‖² + μ‖∇X‖₁` over `Ω` (anisotropic total variation).
pub fn tdpg_spec<F>(forward: F, b: DenseTensor, mu: f64, omega: ConstraintSet) -> Result<TdpgSpec<F>>
where
    F: LinearOperator<Range = DenseTensor>,
{
    let l = gradient_op(forward.domain_shape())?;
    ProblemSpec::new(forward, b, l, L1Norm, mu, omega)
}

pub fn tista_solve<F>(spec: &TistaSpec<F>, cfg: &SolverConfig, x0: DenseTensor) -> Result<SolveReport>
where
    F: LinearOperator<Range = DenseTensor>,
{
    gtpg_solve(spec, cfg, x0)
}

/// TISTA with `F = A *_N ·`.
pub fn eista_solve(
    a: DenseTensor,
    b: DenseTensor,
    mu: f64,
    omega: ConstraintSet,
    gradient: GradientForm,
    cfg: &SolverConfig,
    x0: DenseTensor,
) -> Result<SolveReport> {
    let spec = tista_spec(einstein_op(a)?, b, mu, omega)?.with_gradient_form(gradient);
    tista_solve(&spec, cfg, x0)
}

pub type EistaSpec = TistaSpec<EinsteinOp>;

pub fn tdpg_solve<F>(spec: &TdpgSpec<F>, cfg: &SolverConfig, x0: DenseTensor) -> Result<SolveReport>
where
    F: LinearOperator<Range = DenseTensor>,
{
    gtpg_solve(spec, cfg, x0)
}

/// `Q_k = z − α∇f(z)`, then `Π_Ω(x − y + Q_k)`.
pub fn tseng_step<F, L, Phi>(
    x: &DenseTensor,
    y: &DenseTensor,
    z: &DenseTensor,
    alpha: f64,
    spec: &ProblemSpec<F, L, Phi>,
) -> Result<DenseTensor>
where
    F: LinearOperator<Range = DenseTensor>,
    L: LinearOperator,
    Phi: ProxFunction<L::Range>,
{
    let q = z.add_scaled(-alpha, &grad_f(z, spec)?)?;
    spec.omega.project(&x.sub(y)?.add(&q)?)
}
