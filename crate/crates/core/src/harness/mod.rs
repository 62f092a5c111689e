//! Image-completion experiment pipeline: I/O, masks, runs and records.

pub mod experiment;
pub mod image;
pub mod mask;
pub mod records;

pub use crate::metrics::{psnr, relative_error};
pub use experiment::{
    COMPLETION_INNER_TOL, COMPLETION_MAX_INNER, DEFAULT_EPSILON_FACTOR, DEFAULT_MPE_ORDER, DEFAULT_TET_ORDER,
    TDPG_DEFAULT_MU, TISTA_DEFAULT_MU,
    complete_one, run_completion, Algorithm, CompletionConfig, CompletionRun, Extrapolation,
    Family, OmegaKind,
};
pub use image::{bundled_image, decode_image, load_image, save_image, synthetic_image};
pub use mask::{make_mask, MaskSpec};
pub use records::{emit_records, read_records, write_records, ExperimentRecord, RecordFormat};
