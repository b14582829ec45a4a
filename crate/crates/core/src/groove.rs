//! Bar-level onset patterns on the 16th-note grid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::tab::{Bar, POSITIONS_PER_BAR};
use crate::{Error, Result};

pub const BASE_DIM: usize = POSITIONS_PER_BAR as usize;
pub const MULTI_DIM: usize = 16 + 8 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrooveKind {
    Hard,
    Soft,
    MultiHard,
    MultiSoft,
}

impl GrooveKind {
    pub const ALL: [GrooveKind; 4] = [
        GrooveKind::Hard,
        GrooveKind::Soft,
        GrooveKind::MultiHard,
        GrooveKind::MultiSoft,
    ];

    pub fn dim(self) -> usize {
        match self {
            GrooveKind::Hard | GrooveKind::Soft => BASE_DIM,
            GrooveKind::MultiHard | GrooveKind::MultiSoft => MULTI_DIM,
        }
    }

    pub fn is_soft(self) -> bool {
        matches!(self, GrooveKind::Soft | GrooveKind::MultiSoft)
    }

    pub fn name(self) -> &'static str {
        match self {
            GrooveKind::Hard => "hard",
            GrooveKind::Soft => "soft",
            GrooveKind::MultiHard => "multi-hard",
            GrooveKind::MultiSoft => "multi-soft",
        }
    }
}

impl fmt::Display for GrooveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GrooveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GrooveKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown groove kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrooveVector {
    pub kind: GrooveKind,
    pub values: Vec<f64>,
}

impl GrooveVector {
    pub fn of(bar: &Bar, kind: GrooveKind) -> GrooveVector {
        match kind {
            GrooveKind::Hard => hard_groove(bar),
            GrooveKind::Soft => soft_groove(bar),
            GrooveKind::MultiHard => multires_groove(bar, false),
            GrooveKind::MultiSoft => multires_groove(bar, true),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Note onsets per 16th-note slot. Techniques are not onsets.
pub fn onset_counts(bar: &Bar) -> [u32; BASE_DIM] {
    let mut counts = [0u32; BASE_DIM];
    for note in &bar.notes {
        if let Some(c) = counts.get_mut(usize::from(note.position)) {
            *c += 1;
        }
    }
    counts
}

pub fn hard_groove(bar: &Bar) -> GrooveVector {
    GrooveVector {
        kind: GrooveKind::Hard,
        values: onset_counts(bar)
            .iter()
            .map(|&c| if c > 0 { 1.0 } else { 0.0 })
            .collect(),
    }
}

pub fn soft_groove(bar: &Bar) -> GrooveVector {
    let counts: Vec<f64> = onset_counts(bar).iter().map(|&c| f64::from(c)).collect();
    GrooveVector {
        kind: GrooveKind::Soft,
        values: normalize_by_max(&counts),
    }
}

/// Base 16-dim vector followed by its subsamples at every 8th-note and every
/// beat. Soft blocks are each renormalized by their own maximum.
pub fn multires_groove(bar: &Bar, soft: bool) -> GrooveVector {
    let base = if soft { soft_groove(bar) } else { hard_groove(bar) }.values;
    let eighths: Vec<f64> = base.iter().step_by(2).copied().collect();
    let beats: Vec<f64> = base.iter().step_by(4).copied().collect();
    let mut values = Vec::with_capacity(MULTI_DIM);
    values.extend_from_slice(&base);
    if soft {
        values.extend(normalize_by_max(&eighths));
        values.extend(normalize_by_max(&beats));
    } else {
        values.extend(eighths);
        values.extend(beats);
    }
    GrooveVector {
        kind: if soft {
            GrooveKind::MultiSoft
        } else {
            GrooveKind::MultiHard
        },
        values,
    }
}

/// Divides by the maximum; an all-zero input stays all-zero.
fn normalize_by_max(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        vec![0.0; values.len()]
    } else {
        values.iter().map(|v| v / max).collect()
    }
}
