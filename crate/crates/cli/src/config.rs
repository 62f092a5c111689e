//! Run options shared by `complete` and `bench`, read from flags and an
//! optional JSON file with the same keys. Flags win.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use tensorprox::harness::{Algorithm, CompletionConfig, Extrapolation, Family, MaskSpec, OmegaKind, RecordFormat};
use tensorprox::{DualProxForm, GradientForm};

/// A number or the literal `auto`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AutoF64 {
    Value(f64),
    Auto(AutoTag),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl AutoF64 {
    pub fn value(self) -> Option<f64> {
        match self {
            AutoF64::Value(v) => Some(v),
            AutoF64::Auto(_) => None,
        }
    }
}

impl FromStr for AutoF64 {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(AutoF64::Auto(AutoTag::Auto));
        }
        s.parse().map(AutoF64::Value).map_err(|_| format!("expected a number or `auto`, got {s:?}"))
    }
}

impl fmt::Display for AutoF64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AutoF64::Value(v) => write!(f, "{v}"),
            AutoF64::Auto(_) => f.write_str("auto"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ExtrapArg {
    None,
    Tet,
    Hm,
}

impl From<ExtrapArg> for Extrapolation {
    fn from(e: ExtrapArg) -> Self {
        match e {
            ExtrapArg::None => Extrapolation::None,
            ExtrapArg::Tet => Extrapolation::Tet,
            ExtrapArg::Hm => Extrapolation::Hm,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OmegaArg {
    Box,
    Nuclear,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Csv,
    Jsonl,
}

/// `moreau` is the exact dual step; `alg` and `proof` are the two alternative
/// sign forms, kept for comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DualSignArg {
    Moreau,
    Alg,
    Proof,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OnOff {
    On,
    Off,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    /// JSON file with any of these options; flags override it.
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Input image (PNG or PPM). Repeat for `bench`. Defaults to the bundled 64×64 scene.
    #[arg(long, value_name = "PATH")]
    pub image: Vec<PathBuf>,
    /// Fraction of pixels removed. Repeat for `bench`.
    #[arg(long, value_name = "FLOAT")]
    pub mask_p: Vec<f64>,
    /// Mask image; black pixels are missing. Overrides `--mask-p`.
    #[arg(long, value_name = "PATH")]
    pub mask_image: Option<PathBuf>,
    /// Drop individual entries instead of whole pixels.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub per_entry: Option<bool>,
    #[arg(long, value_name = "INT")]
    pub seed: Option<u64>,

    #[arg(long, value_name = "FLOAT")]
    pub mu: Option<f64>,
    #[arg(long, value_name = "FLOAT|auto")]
    pub alpha: Option<AutoF64>,
    /// Inner dual iterations per outer step.
    #[arg(long, value_name = "INT")]
    pub inner: Option<usize>,
    /// Relative tolerance for ending the inner loop early; `0` disables it.
    #[arg(long, value_name = "FLOAT")]
    pub inner_tol: Option<f64>,
    #[arg(long, value_name = "FLOAT")]
    pub rho: Option<f64>,
    #[arg(long, value_name = "FLOAT|auto")]
    pub beta0: Option<AutoF64>,
    #[arg(long, value_name = "FLOAT")]
    pub tol: Option<f64>,
    #[arg(long, value_name = "INT")]
    pub max_outer: Option<usize>,
    /// Restart cycles allowed for accelerated runs.
    #[arg(long, value_name = "INT")]
    pub max_cycles: Option<usize>,

    /// TISTA, TDPG or one of their -TET / -HM variants.
    #[arg(long, value_name = "NAME")]
    pub algo: Option<String>,
    #[arg(long, value_enum)]
    pub extrap: Option<ExtrapArg>,
    /// Extrapolation order m.
    #[arg(long, value_name = "INT")]
    pub window: Option<usize>,
    #[arg(long, value_enum)]
    pub omega: Option<OmegaArg>,
    /// Nuclear-ball radius.
    #[arg(long, value_name = "FLOAT")]
    pub epsilon: Option<f64>,

    /// Where records go; stdout when absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,

    #[arg(long, value_enum)]
    pub dual_sign: Option<DualSignArg>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub paper_literal_sign: Option<bool>,
    #[arg(long, value_enum)]
    pub gradient_adjoint: Option<OnOff>,
}

macro_rules! prefer {
    ($flags:expr, $file:expr, $($field:ident),* $(,)?) => {
        $( if $flags.$field.is_none() { $flags.$field = $file.$field.take(); } )*
    };
}

impl RunOptions {
    /// Fills every option not given on the command line from the config file.
    pub fn merged(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let mut file = read_config(&path)?;
        if self.image.is_empty() {
            self.image = std::mem::take(&mut file.image);
        }
        if self.mask_p.is_empty() {
            self.mask_p = std::mem::take(&mut file.mask_p);
        }
        prefer!(
            self, file, mask_image, per_entry, seed, mu, alpha, inner, inner_tol, rho, beta0, tol,
            max_outer, max_cycles, algo, extrap, window, omega, epsilon, out, format, dual_sign,
            paper_literal_sign, gradient_adjoint,
        );
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(42)
    }

    pub fn mask_levels(&self) -> Vec<f64> {
        if self.mask_p.is_empty() {
            vec![0.5]
        } else {
            self.mask_p.clone()
        }
    }

    pub fn mask_spec(&self, p: f64) -> MaskSpec {
        match &self.mask_image {
            Some(path) => MaskSpec::Pattern { path: path.clone() },
            None => MaskSpec::Random { p, seed: self.seed(), per_entry: self.per_entry.unwrap_or(false) },
        }
    }

    pub fn record_format(&self) -> RecordFormat {
        match self.format {
            Some(FormatArg::Jsonl) => RecordFormat::Jsonl,
            _ => RecordFormat::Csv,
        }
    }

    /// The algorithms selected by `--algo` and `--extrap`. With neither, all six.
    pub fn algorithms(&self) -> Result<Vec<Algorithm>> {
        let family_only = |name: &str| match name.to_ascii_uppercase().as_str() {
            "TISTA" => Some(Family::Tista),
            "TDPG" => Some(Family::Tdpg),
            _ => None,
        };
        let extrap = self.extrap.map(Extrapolation::from);
        Ok(match (&self.algo, extrap) {
            (None, None) => Algorithm::ALL.to_vec(),
            (None, Some(e)) => Algorithm::ALL.into_iter().filter(|a| a.extrapolation() == e).collect(),
            (Some(name), e) => {
                let base: Algorithm = match family_only(name) {
                    Some(f) => Algorithm::from_parts(f, Extrapolation::None),
                    None => name.parse().with_context(|| format!("--algo {name}"))?,
                };
                vec![Algorithm::from_parts(base.family(), e.unwrap_or(base.extrapolation()))]
            }
        })
    }

    pub fn completion_config(&self) -> Result<CompletionConfig> {
        let mut cfg = CompletionConfig { mu: self.mu, window: self.window, epsilon: self.epsilon, ..Default::default() };
        let solver = &mut cfg.solver;
        if let Some(a) = self.alpha {
            solver.alpha = a.value();
        }
        if let Some(n) = self.inner {
            solver.inner.max_inner = n;
        }
        if let Some(t) = self.inner_tol {
            solver.inner.tol = (t > 0.0).then_some(t);
        }
        if let Some(r) = self.rho {
            solver.inner.rho = r;
        }
        if let Some(b) = self.beta0 {
            solver.inner.beta0 = b.value();
        }
        if let Some(t) = self.tol {
            solver.tol = t;
        }
        if let Some(n) = self.max_outer {
            solver.max_outer = n;
        }
        if let Some(s) = self.dual_sign {
            solver.inner.form = match s {
                DualSignArg::Moreau => DualProxForm::Moreau,
                DualSignArg::Alg => DualProxForm::Unscaled,
                DualSignArg::Proof => DualProxForm::Negated,
            };
        }
        solver.validate().context("invalid solver options")?;
        if let Some(n) = self.max_cycles {
            cfg.max_cycles = n;
        }
        cfg.omega = self.omega.map(|o| match o {
            OmegaArg::Box => OmegaKind::Box,
            OmegaArg::Nuclear => OmegaKind::Nuclear,
            OmegaArg::None => OmegaKind::None,
        });
        cfg.tet.flip_sign = self.paper_literal_sign.unwrap_or(false);
        cfg.gradient = match self.gradient_adjoint {
            Some(OnOff::Off) => GradientForm::Literal,
            _ => GradientForm::Adjoint,
        };
        if let Some(m) = self.window {
            if m == 0 {
                bail!("--window must be at least 1");
            }
        }
        Ok(cfg)
    }

    /// Options plus the fully resolved solver configuration, for records.
    pub fn snapshot(&self, cfg: &CompletionConfig) -> serde_json::Value {
        serde_json::json!({ "options": self, "resolved": cfg })
    }
}

fn read_config(path: &Path) -> Result<RunOptions> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}
