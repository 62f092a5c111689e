//! Completion experiments: `B = P_E(M)`, then each algorithm from `X_0 = B`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extrap::{accelerate_gtpg, AccelConfig, Method, StopRule, TetOptions};
use crate::linop::{mask_op, LinearOperator, ObservedSet};
use crate::metrics::{psnr, relative_error};
use crate::prox::ProxFunction;
use crate::solvers::{
    gtpg_solve_tracked, tdpg_spec, tista_spec, ConstraintSet, GradientForm, Gtpg, ProblemSpec,
    SolveReport, SolverConfig,
};
use crate::tensor::{unfolding_nuclear_norm, DenseTensor};

use super::records::ExperimentRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "TISTA")]
    Tista,
    #[serde(rename = "TISTA-TET")]
    TistaTet,
    #[serde(rename = "TISTA-HM")]
    TistaHm,
    #[serde(rename = "TDPG")]
    Tdpg,
    #[serde(rename = "TDPG-TET")]
    TdpgTet,
    #[serde(rename = "TDPG-HM")]
    TdpgHm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Tista,
    Tdpg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extrapolation {
    None,
    Tet,
    Hm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Tista,
        Algorithm::TistaTet,
        Algorithm::TistaHm,
        Algorithm::Tdpg,
        Algorithm::TdpgTet,
        Algorithm::TdpgHm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Tista => "TISTA",
            Algorithm::TistaTet => "TISTA-TET",
            Algorithm::TistaHm => "TISTA-HM",
            Algorithm::Tdpg => "TDPG",
            Algorithm::TdpgTet => "TDPG-TET",
            Algorithm::TdpgHm => "TDPG-HM",
        }
    }

    pub fn family(self) -> Family {
        match self {
            Algorithm::Tista | Algorithm::TistaTet | Algorithm::TistaHm => Family::Tista,
            _ => Family::Tdpg,
        }
    }

    pub fn extrapolation(self) -> Extrapolation {
        match self {
            Algorithm::Tista | Algorithm::Tdpg => Extrapolation::None,
            Algorithm::TistaTet | Algorithm::TdpgTet => Extrapolation::Tet,
            Algorithm::TistaHm | Algorithm::TdpgHm => Extrapolation::Hm,
        }
    }

    pub fn from_parts(family: Family, extrap: Extrapolation) -> Self {
        match (family, extrap) {
            (Family::Tista, Extrapolation::None) => Algorithm::Tista,
            (Family::Tista, Extrapolation::Tet) => Algorithm::TistaTet,
            (Family::Tista, Extrapolation::Hm) => Algorithm::TistaHm,
            (Family::Tdpg, Extrapolation::None) => Algorithm::Tdpg,
            (Family::Tdpg, Extrapolation::Tet) => Algorithm::TdpgTet,
            (Family::Tdpg, Extrapolation::Hm) => Algorithm::TdpgHm,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::param(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaKind {
    Box,
    Nuclear,
    None,
}

pub const TISTA_DEFAULT_MU: f64 = 0.01;
pub const TDPG_DEFAULT_MU: f64 = 0.01;
/// Default nuclear-ball radius as a fraction of `‖B_(1)‖_*`.
pub const DEFAULT_EPSILON_FACTOR: f64 = 0.3;

/// Inner dual solves run to this relative tolerance so restarts see a consistent base map.
pub const COMPLETION_INNER_TOL: f64 = 1e-3;
pub const COMPLETION_MAX_INNER: usize = 300;

/// Everything that shapes a completion run apart from the image and mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletionConfig {
    /// `None` picks the family default.
    pub mu: Option<f64>,
    pub solver: SolverConfig,
    /// Extrapolation order `m`; `None` picks the method default.
    pub window: Option<usize>,
    pub max_cycles: usize,
    pub stop: StopRule,
    /// `None` picks the family default: nuclear ball for TISTA, box for TDPG.
    pub omega: Option<OmegaKind>,
    /// Nuclear-ball radius; `None` scales `‖B_(1)‖_*` by `epsilon_factor`.
    pub epsilon: Option<f64>,
    pub epsilon_factor: f64,
    pub tet: TetOptions,
    pub gradient: GradientForm,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        let mut solver = SolverConfig::default();
        solver.inner.max_inner = COMPLETION_MAX_INNER;
        solver.inner.tol = Some(COMPLETION_INNER_TOL);
        CompletionConfig {
            mu: None,
            solver,
            window: None,
            max_cycles: 200,
            stop: StopRule::default(),
            omega: None,
            epsilon: None,
            epsilon_factor: DEFAULT_EPSILON_FACTOR,
            tet: TetOptions::default(),
            gradient: GradientForm::Adjoint,
        }
    }
}

pub const DEFAULT_TET_ORDER: usize = 2;
pub const DEFAULT_MPE_ORDER: usize = 3;

impl CompletionConfig {
    pub fn mu_for(&self, family: Family) -> f64 {
        self.mu.unwrap_or(match family {
            Family::Tista => TISTA_DEFAULT_MU,
            Family::Tdpg => TDPG_DEFAULT_MU,
        })
    }

    pub fn omega_kind_for(&self, family: Family) -> OmegaKind {
        self.omega.unwrap_or(match family {
            Family::Tista => OmegaKind::Nuclear,
            Family::Tdpg => OmegaKind::Box,
        })
    }

    pub fn constraint_for(&self, family: Family, b: &DenseTensor) -> Result<ConstraintSet> {
        Ok(match self.omega_kind_for(family) {
            OmegaKind::None => ConstraintSet::WholeSpace,
            OmegaKind::Box => ConstraintSet::Box { lo: 0.0, hi: 1.0 },
            OmegaKind::Nuclear => {
                let epsilon = match self.epsilon {
                    Some(e) => e,
                    None => self.epsilon_factor * unfolding_nuclear_norm(b, 1)?,
                };
                ConstraintSet::NuclearBall { epsilon, mode: 1 }
            }
        })
    }

    pub fn method_for(&self, extrap: Extrapolation) -> Option<Method> {
        match extrap {
            Extrapolation::None => None,
            Extrapolation::Tet => Some(Method::Tet {
                order: self.window.unwrap_or(DEFAULT_TET_ORDER),
                options: self.tet.clone(),
            }),
            Extrapolation::Hm => Some(Method::Mpe { order: self.window.unwrap_or(DEFAULT_MPE_ORDER) }),
        }
    }
}

/// A finished run: the record plus the recovered tensor (absent on failure).
#[derive(Clone, Debug)]
pub struct CompletionRun {
    pub record: ExperimentRecord,
    pub recovered: Option<DenseTensor>,
    pub report: Option<SolveReport>,
}

fn solve_with<F, L, Phi>(
    spec: &ProblemSpec<F, L, Phi>,
    cfg: &CompletionConfig,
    method: Option<Method>,
    x0: DenseTensor,
    reference: &DenseTensor,
) -> Result<SolveReport>
where
    F: LinearOperator<Range = DenseTensor>,
    L: LinearOperator,
    Phi: ProxFunction<L::Range>,
{
    match method {
        None => gtpg_solve_tracked(spec, &cfg.solver, x0, Some(reference)),
        Some(method) => {
            let mut solver = Gtpg::new(spec, &cfg.solver, x0.clone())?;
            let accel = AccelConfig { method, tol: cfg.solver.tol, max_cycles: cfg.max_cycles, stop: cfg.stop };
            accelerate_gtpg(&mut solver, x0, &accel, Some(reference))
        }
    }
}

/// Runs one algorithm on `B = P_E(original)`. Solver failures are returned
/// as errors; [`run_completion`] turns them into flagged records.
pub fn complete_one(
    original: &DenseTensor,
    observed: &ObservedSet,
    algorithm: Algorithm,
    cfg: &CompletionConfig,
) -> Result<(SolveReport, f64)> {
    let b = observed.project(original)?;
    let family = algorithm.family();
    let mu = cfg.mu_for(family);
    let omega = cfg.constraint_for(family, &b)?;
    let method = cfg.method_for(algorithm.extrapolation());
    let forward = mask_op(observed.clone());
    let start = Instant::now();
    let report = match family {
        Family::Tista => {
            let spec = tista_spec(forward, b.clone(), mu, omega)?.with_gradient_form(cfg.gradient);
            solve_with(&spec, cfg, method, b, original)?
        }
        Family::Tdpg => {
            let spec = tdpg_spec(forward, b.clone(), mu, omega)?.with_gradient_form(cfg.gradient);
            solve_with(&spec, cfg, method, b, original)?
        }
    };
    Ok((report, start.elapsed().as_secs_f64()))
}

/// Runs every algorithm with the same mask and starting point.
pub fn run_completion(
    original: &DenseTensor,
    observed: &ObservedSet,
    algorithms: &[Algorithm],
    cfg: &CompletionConfig,
    mask_level: f64,
    seed: u64,
    snapshot: &serde_json::Value,
) -> Result<Vec<CompletionRun>> {
    let mut runs = Vec::with_capacity(algorithms.len());
    for &algorithm in algorithms {
        let mut record = ExperimentRecord {
            algorithm: algorithm.name().to_owned(),
            mask_level,
            psnr_db: f64::NAN,
            rel_error: f64::NAN,
            wall_s: 0.0,
            outer_iters: 0,
            cycles: 0,
            seed,
            failure: None,
            config: snapshot.clone(),
        };
        match complete_one(original, observed, algorithm, cfg) {
            Ok((report, wall)) => {
                record.psnr_db = psnr(&report.final_x, original)?;
                record.rel_error = relative_error(&report.final_x, original)?;
                record.wall_s = wall;
                record.outer_iters = report.iterates_used;
                record.cycles = report.cycles;
                runs.push(CompletionRun {
                    record,
                    recovered: Some(report.final_x.clone()),
                    report: Some(report),
                });
            }
            Err(err @ (Error::Diverged { .. } | Error::Numerical(_))) => {
                record.failure = Some(err.to_string());
                if let Error::Diverged { history, .. } = &err {
                    record.outer_iters = history.len();
                }
                runs.push(CompletionRun { record, recovered: None, report: None });
            }
            Err(err) => return Err(err),
        }
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::image::synthetic_image;
    use crate::harness::mask::{make_mask, MaskSpec};

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            assert_eq!(Algorithm::from_parts(a.family(), a.extrapolation()), a);
        }
        assert_eq!("tdpg-hm".parse::<Algorithm>().unwrap(), Algorithm::TdpgHm);
        assert!("FISTA".parse::<Algorithm>().is_err());
    }

    #[test]
    fn nothing_missing_recovers_the_image() {
        let x = synthetic_image(16).unwrap();
        let observed = make_mask(x.shape(), &MaskSpec::random(0.0, 1)).unwrap();
        let cfg = CompletionConfig {
            mu: Some(1e-5),
            omega: Some(OmegaKind::Box),
            solver: SolverConfig { tol: 1e-6, ..Default::default() },
            ..Default::default()
        };
        let runs = run_completion(&x, &observed, &Algorithm::ALL, &cfg, 0.0, 1, &serde_json::Value::Null).unwrap();
        for run in runs {
            assert!(run.record.psnr_db > 40.0, "{}: {}", run.record.algorithm, run.record.psnr_db);
        }
    }
}
