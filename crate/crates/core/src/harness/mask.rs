//! Observation masks for completion experiments.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linop::ObservedSet;

use super::image::load_image;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskSpec {
    /// Each pixel (all channels together) or, with `per_entry`, each entry
    /// is missing independently with probability `p`.
    Random {
        p: f64,
        seed: u64,
        #[serde(default)]
        per_entry: bool,
    },
    /// Missing where the mask image is black in every channel.
    Pattern { path: PathBuf },
}

impl MaskSpec {
    pub fn random(p: f64, seed: u64) -> Self {
        MaskSpec::Random { p, seed, per_entry: false }
    }
}

/// Builds the observed set for an `height × width × channels` tensor.
pub fn make_mask(shape: &[usize], spec: &MaskSpec) -> Result<ObservedSet> {
    let &[h, w, c] = shape else {
        return Err(Error::dim(format!("masks are built for order-3 images, got {shape:?}")));
    };
    let mask = match spec {
        MaskSpec::Random { p, seed, per_entry } => {
            if !(0.0..1.0).contains(p) {
                return Err(Error::param(format!("missing fraction must be in [0, 1), got {p}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            if *per_entry {
                (0..h * w * c).map(|_| !rng.random_bool(*p)).collect()
            } else {
                let pixels: Vec<bool> = (0..h * w).map(|_| !rng.random_bool(*p)).collect();
                pixels.iter().flat_map(|&o| std::iter::repeat_n(o, c)).collect()
            }
        }
        MaskSpec::Pattern { path } => {
            let m = load_image(path)?;
            let &[mh, mw, mc] = m.shape() else { unreachable!("images are order 3") };
            if (mh, mw) != (h, w) {
                return Err(Error::dim(format!(
                    "mask image is {mh}×{mw}, target image is {h}×{w}"
                )));
            }
            let pixels: Vec<bool> = m
                .data()
                .chunks(mc)
                .map(|px| px.iter().any(|&v| v > 0.0))
                .collect();
            pixels.iter().flat_map(|&o| std::iter::repeat_n(o, c)).collect()
        }
    };
    ObservedSet::new(shape, mask)
}
