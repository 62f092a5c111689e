//! Proximal gradient solvers for tensor inverse problems, with tensor
//! extrapolation accelerators and an image-completion experiment harness.

pub mod error;
pub mod extrap;
pub mod harness;
mod linalg;
pub mod linop;
pub mod metrics;
pub mod prox;
pub mod solvers;
pub mod space;
pub mod tensor;

pub use error::{Error, Result};
pub use extrap::{
    accelerate_gtpg, gt_tet, hosvd_mpe, restarted_accelerate, AccelConfig, BaseIteration,
    ExtrapolationOutcome, Method, Probe, StopRule, TetOptions,
};
pub use linop::{
    compose, einstein_op, gradient_op, identity_op, mask_op, operator_norm_estimate, EinsteinOp,
    GradientField, GradientOp, IdentityOp, LinearOperator, MaskOp, NormEstimate, ObservedSet,
};
pub use prox::{dual_prox_solve, BetaRule, DualProxForm, InnerLoopConfig, L1Norm, ProxFunction};
pub use solvers::{
    eista_solve, gtpg_solve, tdpg_solve, tista_solve, ConstraintSet, GradientForm, Gtpg,
    IterationRecord, ProblemSpec, SolveReport, SolverConfig, Termination,
};
pub use space::InnerProductSpace;
pub use tensor::{DenseTensor, TensorIndex};
