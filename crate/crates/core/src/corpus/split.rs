use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Held-out share used when none is given: 30 of 333 tabs.
pub const DEFAULT_VALIDATION_FRACTION: f64 = 30.0 / 333.0;

/// Train/validation partition of tab ids, stored as plain text:
/// one `train <id>` or `validation <id>` line per tab.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitManifest {
    pub seed: u64,
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

impl SplitManifest {
    /// Shuffles `ids` with `seed` and holds out `round(fraction * n)` of them
    /// (at least one when there are two or more ids).
    pub fn new(ids: &[String], validation_fraction: f64, seed: u64) -> Result<SplitManifest> {
        if !(0.0..1.0).contains(&validation_fraction) {
            return Err(Error::domain("validation fraction must lie in [0, 1)"));
        }
        let mut sorted = ids.to_vec();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("tab ids must be unique"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sorted.shuffle(&mut rng);
        let mut held = (validation_fraction * sorted.len() as f64).round() as usize;
        if held == 0 && sorted.len() >= 2 && validation_fraction > 0.0 {
            held = 1;
        }
        let train = sorted.split_off(held);
        let mut validation = sorted;
        let mut train = train;
        train.sort();
        validation.sort();
        Ok(SplitManifest {
            seed,
            train,
            validation,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# seed: {}\n", self.seed);
        for id in &self.train {
            let _ = writeln!(out, "train {id}");
        }
        for id in &self.validation {
            let _ = writeln!(out, "validation {id}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<SplitManifest> {
        let mut manifest = SplitManifest {
            seed: 0,
            train: Vec::new(),
            validation: Vec::new(),
        };
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(seed) = line.strip_prefix("# seed:") {
                manifest.seed = seed.trim().parse().map_err(|_| Error::Parse {
                    location: format!("line {}", i + 1),
                    message: "bad seed".into(),
                })?;
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once(' ') {
                Some(("train", id)) => manifest.train.push(id.trim().to_string()),
                Some(("validation", id)) => manifest.validation.push(id.trim().to_string()),
                _ => {
                    return Err(Error::Parse {
                        location: format!("line {}", i + 1),
                        message: format!("expected `train <id>` or `validation <id>`, got `{line}`"),
                    })
                }
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<SplitManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SplitManifest::from_text(&text)
    }
}
