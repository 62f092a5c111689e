//! Proximal maps and the inner dual loop that evaluates the prox of a
//! composite regularizer `μ·φ∘L`.
//!
//! For `prox_{αμφ∘L}(y)` we run proximal gradient on the dual
//!
//! ```text
//! min_P  N(P) + J(P),   N(P) = ⟨(α/2)·L Lᵀ P + L y, P⟩,   J(P) = (μφ)*(−P)
//! ```
//!
//! and recover `Z = y + α·Lᵀ(P)`. The prox of `βJ` comes from the Moreau
//! identity; see [`DualProxForm`] for the variants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linop::{gram_norm, LinearOperator};
use crate::space::InnerProductSpace;
use crate::tensor::DenseTensor;

/// A closed convex function with a computable proximal map.
pub trait ProxFunction<V: InnerProductSpace>: Send + Sync {
    fn value(&self, v: &V) -> f64;

    /// `argmin_u φ(u) + ‖u − v‖² / (2γ)`.
    fn prox(&self, v: &V, gamma: f64) -> Result<V>;
}

/// Entrywise ℓ1 norm, summed across blocks for gradient fields.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct L1Norm;

impl<V: InnerProductSpace> ProxFunction<V> for L1Norm {
    fn value(&self, v: &V) -> f64 {
        v.abs_sum()
    }

    fn prox(&self, v: &V, gamma: f64) -> Result<V> {
        soft_threshold(v, gamma)
    }
}

/// The prox of `γ‖·‖₁`: shrink every entry toward zero by `γ`.
pub fn soft_threshold<V: InnerProductSpace>(p: &V, gamma: f64) -> Result<V> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::param(format!("threshold must be finite and >= 0, got {gamma}")));
    }
    Ok(p.map(|v| {
        if v >= gamma {
            v - gamma
        } else if v <= -gamma {
            v + gamma
        } else {
            0.0
        }
    }))
}

/// How `prox_{βJ}` is evaluated from the prox of `φ`.
///
/// * `Moreau` is the exact map `P + β·prox_{(μ/β)φ}(−P/β)`. For a norm `φ`
///   this is `P + prox_{μφ}(−P)`, i.e. for ℓ1 a clamp to `[−μ, μ]`.
/// * `Unscaled` is `P + prox_{βμφ}(−P)`, which agrees with `Moreau` only at
///   `β = 1`.
/// * `Negated` is `−P − prox_{βμφ}(−P)`.
///
/// Only `Moreau` reproduces the closed-form ℓ1 prox; the other two are kept
/// for side-by-side comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualProxForm {
    #[default]
    Moreau,
    Unscaled,
    Negated,
}

/// Inner step-size rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaRule {
    /// Keep `β` while the sufficient-decrease test on `N` holds, otherwise
    /// shrink it by `ρ` and retry.
    #[default]
    Backtracking,
    /// Unconditional decay `β_l = ρ·β_{l−1}` every inner iteration.
    Geometric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerLoopConfig {
    pub max_inner: usize,
    /// `None` means `1 / (α·max(1, ‖L Lᵀ‖))`.
    pub beta0: Option<f64>,
    pub rho: f64,
    pub rule: BetaRule,
    pub form: DualProxForm,
    /// Stop early once `‖P_l − P_{l−1}‖ ≤ tol·‖P_l‖`.
    #[serde(default)]
    pub tol: Option<f64>,
}

impl Default for InnerLoopConfig {
    fn default() -> Self {
        InnerLoopConfig {
            max_inner: 10,
            beta0: None,
            rho: 0.5,
            rule: BetaRule::Backtracking,
            form: DualProxForm::Moreau,
            tol: None,
        }
    }
}

const MAX_BACKTRACKS: usize = 60;

impl InnerLoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_inner == 0 {
            return Err(Error::param("inner iteration budget must be at least 1"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::param(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(Error::param(format!("inner tol must be positive, got {t}")));
            }
        }
        if let Some(b) = self.beta0 {
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::param(format!("beta0 must be positive, got {b}")));
            }
        }
        Ok(())
    }

    /// Starting inner step for outer step `alpha` given `‖L Lᵀ‖`.
    pub fn resolved_beta0(&self, alpha: f64, ll_norm: f64) -> f64 {
        self.beta0.unwrap_or_else(|| 1.0 / (alpha * ll_norm.max(1.0)))
    }
}

/// `prox_{βJ}(p)` with `J(P) = (μφ)*(−P)`.
pub fn prox_of_j<V, Phi>(p: &V, beta: f64, phi: &Phi, mu: f64, form: DualProxForm) -> Result<V>
where
    V: InnerProductSpace,
    Phi: ProxFunction<V> + ?Sized,
{
    if !(beta > 0.0) {
        return Err(Error::param(format!("beta must be positive, got {beta}")));
    }
    if !(mu >= 0.0) {
        return Err(Error::param(format!("mu must be >= 0, got {mu}")));
    }
    let neg = p.scaled(-1.0);
    match form {
        DualProxForm::Moreau => {
            if mu == 0.0 {
                return Ok(p.zeros_like());
            }
            let inner = phi.prox(&neg.scaled(1.0 / beta), mu / beta)?;
            p.add_scaled(beta, &inner)
        }
        DualProxForm::Unscaled => p.add_scaled(1.0, &phi.prox(&neg, beta * mu)?),
        DualProxForm::Negated => neg.add_scaled(-1.0, &phi.prox(&neg, beta * mu)?),
    }
}

/// `∇N(P) = α·L(Lᵀ P) + L(y)`.
pub fn grad_n<L: LinearOperator>(p: &L::Range, alpha: f64, l: &L, y: &DenseTensor) -> Result<L::Range> {
    let ly = l.apply(y)?;
    let llp = l.apply(&l.adjoint(p)?)?;
    ly.add_scaled(alpha, &llp)
}

/// `μ·φ(L x)`.
pub fn phi_value<L, Phi>(x: &DenseTensor, l: &L, phi: &Phi, mu: f64) -> Result<f64>
where
    L: LinearOperator,
    Phi: ProxFunction<L::Range> + ?Sized,
{
    if mu == 0.0 {
        return Ok(0.0);
    }
    Ok(mu * phi.value(&l.apply(x)?))
}

#[derive(Clone, Debug)]
pub struct DualSolve<V> {
    /// Approximation of `prox_{αμφ∘L}(y)`.
    pub z: DenseTensor,
    /// Final dual iterate, reusable as a warm start.
    pub dual: V,
    pub iterations: usize,
    pub final_beta: f64,
    pub backtracks: usize,
    /// `N(P_l)` for `l = 1..=iterations+1`.
    pub dual_trace: Vec<f64>,
}

/// Runs the inner dual proximal-gradient loop for `cfg.max_inner` steps.
///
/// `ll_norm` is `‖L Lᵀ‖`; pass `None` to estimate it here (only needed when
/// `cfg.beta0` is unset). `init` is the starting dual iterate, zeros if absent.
#[allow(clippy::too_many_arguments)]
pub fn dual_prox_solve<L, Phi>(
    y: &DenseTensor,
    alpha: f64,
    l: &L,
    phi: &Phi,
    mu: f64,
    cfg: &InnerLoopConfig,
    ll_norm: Option<f64>,
    init: Option<&L::Range>,
) -> Result<DualSolve<L::Range>>
where
    L: LinearOperator,
    Phi: ProxFunction<L::Range> + ?Sized,
{
    cfg.validate()?;
    if !(alpha > 0.0) {
        return Err(Error::param(format!("alpha must be positive, got {alpha}")));
    }
    if !(mu >= 0.0) {
        return Err(Error::param(format!("mu must be >= 0, got {mu}")));
    }
    l.check_domain(y)?;

    let ll_norm = match (cfg.beta0, ll_norm) {
        (Some(_), _) => 1.0,
        (None, Some(v)) => v,
        (None, None) => gram_norm(l, 1e-6, 500)?.gram_norm(),
    };
    let mut beta = cfg.resolved_beta0(alpha, ll_norm);

    let ly = l.apply(y)?;
    let mut p = match init {
        Some(p0) => {
            if p0.inner(&ly).is_err() {
                return Err(Error::dim("dual warm start does not match the operator range"));
            }
            p0.clone()
        }
        None => l.range_zeros(),
    };
    let mut llp = l.apply(&l.adjoint(&p)?)?;
    let n_value = |p: &L::Range, llp: &L::Range| -> Result<f64> {
        Ok(0.5 * alpha * llp.inner(p)? + ly.inner(p)?)
    };
    let mut n_p = n_value(&p, &llp)?;
    let mut trace = vec![n_p];
    let mut backtracks = 0;

    let mut iterations = 0;
    for it in 1..=cfg.max_inner {
        iterations = it;
        if cfg.rule == BetaRule::Geometric {
            beta *= cfg.rho;
        }
        let grad = ly.add_scaled(alpha, &llp)?;
        let (p_new, llp_new, n_new) = loop {
            let r = p.add_scaled(-beta, &grad)?;
            let cand = prox_of_j(&r, beta, phi, mu, cfg.form)?;
            if !cand.all_finite() {
                return Err(Error::numerical(format!(
                    "inner dual iterate became non-finite at inner iteration {it}"
                )));
            }
            let llc = l.apply(&l.adjoint(&cand)?)?;
            let n_c = n_value(&cand, &llc)?;
            if cfg.rule == BetaRule::Geometric {
                break (cand, llc, n_c);
            }
            let d = cand.add_scaled(-1.0, &p)?;
            let model = n_p + grad.inner(&d)? + d.norm_sq() / (2.0 * beta);
            let slack = 1e-12 * n_p.abs().max(1.0);
            if n_c <= model + slack || backtracks >= MAX_BACKTRACKS {
                break (cand, llc, n_c);
            }
            beta *= cfg.rho;
            backtracks += 1;
        };
        let step = p_new.add_scaled(-1.0, &p)?.norm();
        p = p_new;
        llp = llp_new;
        n_p = n_new;
        trace.push(n_p);
        if let Some(tol) = cfg.tol {
            if step <= tol * p.norm() {
                break;
            }
        }
    }

    let z = y.add_scaled(alpha, &l.adjoint(&p)?)?;
    if !z.all_finite() {
        return Err(Error::numerical("prox output is non-finite"));
    }
    Ok(DualSolve {
        z,
        dual: p,
        iterations,
        final_beta: beta,
        backtracks,
        dual_trace: trace,
    })
}
