//! Tensor sequence extrapolation (topological and minimal-polynomial) and
//! the restarted drivers that wrap a base iteration.
//!
//! Both methods are indexed by the number `m` of geometric error terms they
//! annihilate: GT-TET of order `m` reads `2m + 1` iterates, HOSVD-MPE of
//! order `m` reads `m + 2` iterates (`m + 1` differences).

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::smallest_right_singular_vector;
use crate::linop::LinearOperator;
use crate::metrics::psnr;
use crate::prox::ProxFunction;
use crate::solvers::{
    objective_parts, relative_change, Gtpg, IterationRecord, ObjectiveParts, SolveReport,
    Termination,
};
use crate::space::InnerProductSpace;
use crate::tensor::{inner_product, DenseTensor};

const RANK_CUTOFF: f64 = 1e-12;
const WEIGHT_SUM_CUTOFF: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct ExtrapolationOutcome {
    pub value: DenseTensor,
    pub weights: Vec<f64>,
    /// `min |R_ii| / max |R_ii|` for GT-TET, `|Σδ|` for HOSVD-MPE.
    pub condition: f64,
    pub ridge_used: bool,
    pub failed: bool,
}

impl ExtrapolationOutcome {
    fn failure(last: &DenseTensor, condition: f64) -> Self {
        ExtrapolationOutcome {
            value: last.clone(),
            weights: Vec::new(),
            condition,
            ridge_used: false,
            failed: true,
        }
    }
}

/// Probe tensor `Y` for GT-TET.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Probe {
    /// `ΔS_n`.
    #[default]
    FirstDifference,
    Ones,
    /// Uniform on `[-1, 1)` from a fixed seed.
    Random { seed: u64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TetOptions {
    pub probe: Probe,
    /// Solve `Hc = b` instead of `Hc = −b`. The result is no longer exact on
    /// geometric kernels; kept for comparison.
    pub flip_sign: bool,
}

fn check_window(window: &[DenseTensor], needed: usize, what: &str) -> Result<()> {
    if window.len() != needed {
        return Err(Error::param(format!(
            "{what} needs exactly {needed} iterates, got {}",
            window.len()
        )));
    }
    let shape = window[0].shape();
    if window.iter().any(|s| s.shape() != shape) {
        return Err(Error::dim(format!("{what}: iterates have different shapes")));
    }
    Ok(())
}

fn differences(window: &[DenseTensor]) -> Result<Vec<DenseTensor>> {
    window.windows(2).map(|w| w[1].sub(&w[0])).collect()
}

/// Solves `h c = rhs` by QR, adding a tiny ridge when `R` is numerically
/// singular. Returns `None` when even the ridged system is degenerate.
fn qr_solve(h: &DMatrix<f64>, rhs: &DVector<f64>) -> (Option<(DVector<f64>, bool)>, f64) {
    let ratio = |m: &DMatrix<f64>| {
        let r = m.clone().qr().r();
        let diag: Vec<f64> = r.diagonal().iter().map(|v| v.abs()).collect();
        let max = diag.iter().copied().fold(0.0, f64::max);
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        if max > 0.0 && max.is_finite() { min / max } else { 0.0 }
    };
    let solve = |m: &DMatrix<f64>| {
        m.clone()
            .qr()
            .solve(rhs)
            .filter(|c| c.iter().all(|v| v.is_finite()))
    };
    let cond = ratio(h);
    if cond >= RANK_CUTOFF {
        return (solve(h).map(|c| (c, false)), cond);
    }
    let m = h.nrows() as f64;
    let lambda = RANK_CUTOFF * h.trace().abs() / m;
    if lambda == 0.0 || !lambda.is_finite() {
        return (None, cond);
    }
    let ridged = h + DMatrix::identity(h.nrows(), h.ncols()) * lambda;
    if ratio(&ridged) < RANK_CUTOFF {
        return (None, cond);
    }
    (solve(&ridged).map(|c| (c, true)), cond)
}

/// Global tensor topological extrapolation of order `m` on `2m + 1` iterates
/// `S_n, …, S_{n+2m}`:
///
/// ```text
/// H_{ij} = ⟨Y, Δ²S_{n+i+j}⟩,  b_i = ⟨Y, ΔS_{n+i}⟩   (i, j = 0..m−1)
/// H c = −b,  T = S_n + Σ_j c_j ΔS_{n+j}
/// ```
///
/// For `m = 1` and `Y = ΔS_n` this is Aitken's Δ².
pub fn gt_tet(window: &[DenseTensor], m: usize, opts: &TetOptions) -> Result<ExtrapolationOutcome> {
    if m == 0 {
        return Err(Error::param("extrapolation order must be at least 1"));
    }
    check_window(window, 2 * m + 1, "GT-TET")?;
    let last = &window[2 * m];
    let d1 = differences(window)?;
    let d2 = differences(&d1)?;
    let probe = match &opts.probe {
        Probe::FirstDifference => d1[0].clone(),
        Probe::Ones => DenseTensor::filled(window[0].shape(), 1.0)?,
        Probe::Random { seed } => DenseTensor::random_uniform(window[0].shape(), -1.0, 1.0, *seed)?,
    };
    let mut h = DMatrix::zeros(m, m);
    let mut b = DVector::zeros(m);
    let y_d2: Vec<f64> = d2.iter().map(|d| inner_product(&probe, d)).collect::<Result<_>>()?;
    for i in 0..m {
        for j in 0..m {
            h[(i, j)] = y_d2[i + j];
        }
        b[i] = inner_product(&probe, &d1[i])?;
    }
    let rhs = if opts.flip_sign { b } else { -b };
    let (solved, condition) = qr_solve(&h, &rhs);
    let Some((c, ridge_used)) = solved else {
        return Ok(ExtrapolationOutcome::failure(last, condition));
    };
    let mut value = window[0].clone();
    for (cj, dj) in c.iter().zip(&d1) {
        value = value.add_scaled(*cj, dj)?;
    }
    if !value.all_finite() {
        return Ok(ExtrapolationOutcome::failure(last, condition));
    }
    Ok(ExtrapolationOutcome {
        value,
        weights: c.iter().copied().collect(),
        condition,
        ridge_used,
        failed: false,
    })
}

/// Minimal-polynomial extrapolation of order `m` on `m + 2` iterates
/// `X_n, …, X_{n+m+1}`.
///
/// The `m + 1` differences are stacked as rows of `N`; `δ` is the right
/// singular direction of `Nᵀ` with the smallest singular value (the
/// eigenvector of the smallest eigenvalue of `M = NNᵀ`), so it minimizes
/// `‖Σ δ_i ΔX_{n+i}‖` over unit vectors. The result is
/// `Σ c_i X_{n+i}` with `c = δ / Σδ`.
pub fn hosvd_mpe(window: &[DenseTensor], m: usize) -> Result<ExtrapolationOutcome> {
    if m == 0 {
        return Err(Error::param("extrapolation order must be at least 1"));
    }
    check_window(window, m + 2, "HOSVD-MPE")?;
    let last = &window[m + 1];
    let diffs = differences(window)?;
    let k = m + 1;
    let len = window[0].len();
    if diffs.iter().all(|d| d.max_abs() == 0.0) {
        return Ok(ExtrapolationOutcome::failure(last, 0.0));
    }
    // Nᵀ as a (len × k) matrix, zero-padded so the SVD returns a full
    // k-dimensional right basis.
    let rows = len.max(k);
    let mut nt = DMatrix::zeros(rows, k);
    for (i, d) in diffs.iter().enumerate() {
        for (r, &v) in d.data().iter().enumerate() {
            nt[(r, i)] = v;
        }
    }
    let (_, mut delta) = smallest_right_singular_vector(&nt)?;
    let mut sum: f64 = delta.iter().sum();
    if sum < 0.0 {
        delta.iter_mut().for_each(|v| *v = -*v);
        sum = -sum;
    }
    if sum < WEIGHT_SUM_CUTOFF || !sum.is_finite() {
        return Ok(ExtrapolationOutcome::failure(last, sum));
    }
    let weights: Vec<f64> = delta.iter().map(|d| d / sum).collect();
    let mut value = window[0].scaled(weights[0]);
    for (w, x) in weights.iter().zip(window).skip(1) {
        value = value.add_scaled(*w, x)?;
    }
    if !value.all_finite() {
        return Ok(ExtrapolationOutcome::failure(last, sum));
    }
    Ok(ExtrapolationOutcome { value, weights, condition: sum, ridge_used: false, failed: false })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Tet { order: usize, #[serde(default)] options: TetOptions },
    Mpe { order: usize },
}

impl Method {
    pub fn order(&self) -> usize {
        match self {
            Method::Tet { order, .. } | Method::Mpe { order } => *order,
        }
    }

    /// Iterates consumed per cycle, start included.
    pub fn window_len(&self) -> usize {
        match self {
            Method::Tet { order, .. } => 2 * order + 1,
            Method::Mpe { order } => order + 2,
        }
    }

    pub fn extrapolate(&self, window: &[DenseTensor]) -> Result<ExtrapolationOutcome> {
        match self {
            Method::Tet { order, options } => gt_tet(window, *order, options),
            Method::Mpe { order } => hosvd_mpe(window, *order),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccelConfig {
    pub method: Method,
    pub tol: f64,
    pub max_cycles: usize,
    #[serde(default)]
    pub stop: StopRule,
}

/// When a restarted run counts as converged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// `‖T_k − T_{k−1}‖ / ‖T_{k−1}‖ < tol` between restart points.
    Extrapolated,
    /// The last base step of a window satisfies `‖X_{j+1} − X_j‖ / ‖X_j‖ < tol`,
    /// the same test the unaccelerated solver uses.
    BaseStep,
    /// Whichever of the two fires first.
    #[default]
    Either,
}

impl AccelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.method.order() == 0 {
            return Err(Error::param("extrapolation order must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_cycles == 0 {
            return Err(Error::param("max_cycles must be at least 1"));
        }
        Ok(())
    }
}

/// A deterministic base iteration that can be restarted from any point.
pub trait BaseIteration {
    /// `steps` iterations from `start`; returns `[start, x_1, …, x_steps]`.
    fn run_from(&mut self, start: &DenseTensor, steps: usize) -> Result<Vec<DenseTensor>>;

    fn objective_parts(&self, x: &DenseTensor) -> Result<ObjectiveParts>;

    fn objective(&self, x: &DenseTensor) -> Result<f64> {
        Ok(self.objective_parts(x)?.total())
    }

    /// Projection onto the feasible set applied to extrapolated points.
    fn project(&self, x: &DenseTensor) -> Result<DenseTensor>;
}

impl<F, L, Phi> BaseIteration for Gtpg<'_, F, L, Phi>
where
    F: LinearOperator<Range = DenseTensor>,
    L: LinearOperator,
    Phi: ProxFunction<L::Range>,
{
    fn run_from(&mut self, start: &DenseTensor, steps: usize) -> Result<Vec<DenseTensor>> {
        self.reset(start.clone())?;
        let mut out = Vec::with_capacity(steps + 1);
        out.push(start.clone());
        for _ in 0..steps {
            out.push(self.step()?.clone());
        }
        Ok(out)
    }

    fn objective_parts(&self, x: &DenseTensor) -> Result<ObjectiveParts> {
        objective_parts(x, self.spec())
    }

    fn project(&self, x: &DenseTensor) -> Result<DenseTensor> {
        self.spec().omega.project(x)
    }
}

/// Restarted acceleration: each cycle runs the base iteration from `T_{k−1}`
/// over one window, extrapolates, projects, and restarts from the result.
///
/// A cycle falls back to the window's last iterate when extrapolation fails,
/// and to the window's best iterate when the projected extrapolation has a
/// larger objective than the restart point it came from. The returned
/// tensor is never worse than the best iterate of the final window.
pub fn restarted_accelerate<B: BaseIteration>(
    base: &mut B,
    x0: DenseTensor,
    cfg: &AccelConfig,
) -> Result<SolveReport> {
    accelerate_tracked(base, x0, cfg, None)
}

fn cycle_record<B: BaseIteration>(
    base: &B,
    cycle: usize,
    x: &DenseTensor,
    change: f64,
    elapsed_s: f64,
    reference: Option<&DenseTensor>,
) -> Result<IterationRecord> {
    let parts = base.objective_parts(x)?;
    Ok(IterationRecord {
        iteration: cycle,
        objective: parts.total(),
        data_fit: parts.data_fit,
        regularizer: parts.regularizer,
        relative_change: change,
        elapsed_s,
        psnr_db: reference.map(|r| psnr(x, r)).transpose()?,
    })
}

/// As [`restarted_accelerate`], additionally recording PSNR against `reference`.
pub fn accelerate_tracked<B: BaseIteration>(
    base: &mut B,
    x0: DenseTensor,
    cfg: &AccelConfig,
    reference: Option<&DenseTensor>,
) -> Result<SolveReport> {
    cfg.validate()?;
    let start = Instant::now();
    let steps = cfg.method.window_len() - 1;
    let mut t = x0;
    let mut t_obj = base.objective(&t)?;
    let mut history = Vec::new();
    let mut used = 0;
    let mut warnings = Vec::new();
    let mut termination = Termination::MaxIterations;
    let mut best = (t.clone(), t_obj);
    for cycle in 1..=cfg.max_cycles {
        let window = base.run_from(&t, steps)?;
        used += steps;
        let outcome = cfg.method.extrapolate(&window)?;
        let mut window_best = (steps, f64::INFINITY);
        for (i, x) in window.iter().enumerate().skip(1) {
            let o = base.objective(x)?;
            if o <= window_best.1 {
                window_best = (i, o);
            }
        }
        best = (window[window_best.0].clone(), window_best.1);
        let (next, next_obj) = if outcome.failed {
            warnings.push(format!("cycle {cycle}: extrapolation failed, using last iterate"));
            (window[steps].clone(), base.objective(&window[steps])?)
        } else {
            let candidate = base.project(&outcome.value)?;
            let obj = base.objective(&candidate)?;
            if obj.is_finite() && obj <= t_obj {
                (candidate, obj)
            } else {
                warnings.push(format!(
                    "cycle {cycle}: extrapolated objective {obj:e} above restart objective {t_obj:e}"
                ));
                (best.0.clone(), best.1)
            }
        };
        let change = relative_change(&next, &t)?;
        let step_change = relative_change(&window[steps], &window[steps - 1])?;
        history.push(cycle_record(base, cycle, &next, change, start.elapsed().as_secs_f64(), reference)?);
        t = next;
        t_obj = next_obj;
        let done = match cfg.stop {
            StopRule::Extrapolated => change < cfg.tol,
            StopRule::BaseStep => step_change < cfg.tol,
            StopRule::Either => change < cfg.tol || step_change < cfg.tol,
        };
        if done {
            termination = Termination::Converged;
            break;
        }
    }
    if best.1 < t_obj {
        warnings.push("final extrapolation worse than its window; returning the window best".to_owned());
        let last = history.last_mut().expect("at least one cycle");
        *last = cycle_record(base, last.iteration, &best.0, last.relative_change, last.elapsed_s, reference)?;
        t = best.0;
    }
    Ok(SolveReport {
        iterates_used: used,
        cycles: history.len(),
        final_x: t,
        history,
        termination,
        alpha: f64::NAN,
        warnings,
    })
}

/// Restarted acceleration of the double proximal gradient method.
pub fn accelerate_gtpg<F, L, Phi>(
    solver: &mut Gtpg<'_, F, L, Phi>,
    x0: DenseTensor,
    cfg: &AccelConfig,
    reference: Option<&DenseTensor>,
) -> Result<SolveReport>
where
    F: LinearOperator<Range = DenseTensor>,
    L: LinearOperator,
    Phi: ProxFunction<L::Range>,
{
    let mut report = accelerate_tracked(solver, x0, cfg, reference)?;
    report.alpha = solver.alpha();
    report.warnings.splice(0..0, solver.warnings().iter().cloned());
    Ok(report)
}
