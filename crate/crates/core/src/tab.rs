//! Quantized fingerstyle tabs: bars on a 16th-note grid holding notes and
//! technique marks. Meter is always 4/4.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fretboard::{self, MAX_FRET, MAX_PITCH, MIN_PITCH, NUM_STRINGS};
use crate::{Error, Result};

pub const POSITIONS_PER_BAR: u8 = 16;
pub const MAX_DURATION: u8 = 64;
pub const VELOCITY_LEVELS: u8 = 32;
/// Velocity assigned to notes whose source carries none.
pub const DEFAULT_VELOCITY: u8 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoteEvent {
    /// 16th-note slot within the bar, 0..=15.
    pub position: u8,
    /// MIDI pitch, 40..=84.
    pub pitch: u8,
    /// Length in 32nd notes, 1..=64.
    pub duration: u8,
    /// Discrete level, 1..=32.
    pub velocity: u8,
    pub string: u8,
    pub fret: u8,
}

impl NoteEvent {
    /// Builds a note whose pitch is derived from the fingering.
    pub fn fingered(position: u8, string: u8, fret: u8, duration: u8, velocity: u8) -> Result<Self> {
        let pitch = fretboard::pitch_for(string, fret)?;
        Ok(NoteEvent {
            position,
            pitch,
            duration,
            velocity,
            string,
            fret,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technique {
    Slap,
    Press,
    Upstroke,
    Downstroke,
    HitTop,
}

impl Technique {
    pub const ALL: [Technique; 5] = [
        Technique::Slap,
        Technique::Press,
        Technique::Upstroke,
        Technique::Downstroke,
        Technique::HitTop,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(index: u8) -> Option<Technique> {
        Technique::ALL.get(usize::from(index)).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Technique::Slap => "slap",
            Technique::Press => "press",
            Technique::Upstroke => "upstroke",
            Technique::Downstroke => "downstroke",
            Technique::HitTop => "hit_top",
        }
    }

    pub fn from_name(name: &str) -> Option<Technique> {
        Technique::ALL.into_iter().find(|t| t.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TechniqueEvent {
    pub position: u8,
    pub kind: Technique,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bar {
    pub notes: Vec<NoteEvent>,
    pub techniques: Vec<TechniqueEvent>,
}

impl Bar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty() && self.techniques.is_empty()
    }

    /// Sorts notes by (position ascending, string descending) and techniques
    /// by position.
    pub fn normalize(&mut self) {
        self.notes
            .sort_by(|a, b| a.position.cmp(&b.position).then(b.string.cmp(&a.string)));
        self.techniques.sort_by_key(|t| t.position);
    }

    pub fn notes_at(&self, position: u8) -> impl Iterator<Item = &NoteEvent> {
        self.notes.iter().filter(move |n| n.position == position)
    }

    pub fn technique_at(&self, position: u8) -> Option<Technique> {
        self.techniques
            .iter()
            .find(|t| t.position == position)
            .map(|t| t.kind)
    }

    /// Positions carrying at least one note or technique, ascending.
    pub fn occupied_positions(&self) -> Vec<u8> {
        let mut used = [false; POSITIONS_PER_BAR as usize];
        for n in &self.notes {
            if let Some(slot) = used.get_mut(usize::from(n.position)) {
                *slot = true;
            }
        }
        for t in &self.techniques {
            if let Some(slot) = used.get_mut(usize::from(t.position)) {
                *slot = true;
            }
        }
        (0..POSITIONS_PER_BAR).filter(|&p| used[usize::from(p)]).collect()
    }
}

/// Sub-range of a source tab a slice was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SliceInfo {
    pub start_bar: usize,
    pub n_bars: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TabMetadata {
    pub title: String,
    pub source_id: String,
    pub slice: Option<SliceInfo>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tab {
    pub bars: Vec<Bar>,
    pub metadata: TabMetadata,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub bar: usize,
    pub position: Option<u8>,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.position {
            Some(p) => write!(f, "bar {} position {}: {}", self.bar, p, self.rule),
            None => write!(f, "bar {}: {}", self.bar, self.rule),
        }
    }
}

impl Tab {
    pub fn new(bars: Vec<Bar>) -> Self {
        Tab {
            bars,
            metadata: TabMetadata::default(),
        }
    }

    pub fn with_title(mut self, title: impl Into<String>) -> Self {
        self.metadata.title = title.into();
        self
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn note_count(&self) -> usize {
        self.bars.iter().map(|b| b.notes.len()).sum()
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (index, bar) in self.bars.iter().enumerate() {
            validate_bar(index, bar, &mut out);
        }
        out
    }

    /// Errors with the full violation list when the tab is invalid.
    pub fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidTab(
                violations.iter().map(ToString::to_string).collect(),
            ))
        }
    }

    pub fn slice(&self, start_bar: usize, n_bars: usize) -> Result<Tab> {
        let end = start_bar
            .checked_add(n_bars)
            .filter(|&end| end <= self.bars.len())
            .ok_or_else(|| {
                Error::domain(format!(
                    "slice {start_bar}+{n_bars} exceeds {} bars",
                    self.bars.len()
                ))
            })?;
        if start_bar == 0 && end == self.bars.len() {
            return Ok(self.clone());
        }
        let base = self.metadata.slice.map_or(0, |s| s.start_bar);
        Ok(Tab {
            bars: self.bars[start_bar..end].to_vec(),
            metadata: TabMetadata {
                title: self.metadata.title.clone(),
                source_id: self.metadata.source_id.clone(),
                slice: Some(SliceInfo {
                    start_bar: base + start_bar,
                    n_bars,
                }),
            },
        })
    }

    /// Appends `other`'s bars. Adjacent slices of one source merge their
    /// slice annotation.
    pub fn concat(&self, other: &Tab) -> Tab {
        let mut bars = self.bars.clone();
        bars.extend(other.bars.iter().cloned());
        let slice = match (self.metadata.slice, other.metadata.slice) {
            (Some(a), Some(b)) if a.start_bar + a.n_bars == b.start_bar => Some(SliceInfo {
                start_bar: a.start_bar,
                n_bars: a.n_bars + b.n_bars,
            }),
            _ => None,
        };
        Tab {
            bars,
            metadata: TabMetadata {
                slice,
                ..self.metadata.clone()
            },
        }
    }
}

fn validate_bar(index: usize, bar: &Bar, out: &mut Vec<Violation>) {
    let mut push = |position: Option<u8>, rule: String| {
        out.push(Violation {
            bar: index,
            position,
            rule,
        })
    };

    for note in &bar.notes {
        let at = Some(note.position);
        if note.position >= POSITIONS_PER_BAR {
            push(at, format!("position {} outside 0..=15", note.position));
        }
        if !(MIN_PITCH..=MAX_PITCH).contains(&note.pitch) {
            push(at, format!("pitch {} outside {MIN_PITCH}..={MAX_PITCH}", note.pitch));
        }
        if !(1..=MAX_DURATION).contains(&note.duration) {
            push(at, format!("duration {} outside 1..={MAX_DURATION}", note.duration));
        }
        if !(1..=VELOCITY_LEVELS).contains(&note.velocity) {
            push(at, format!("velocity {} outside 1..={VELOCITY_LEVELS}", note.velocity));
        }
        if !(1..=NUM_STRINGS).contains(&note.string) || note.fret > MAX_FRET {
            push(
                at,
                format!("fret position ({}, {}) off the neck", note.string, note.fret),
            );
        } else {
            let fingered = fretboard::pitch_for(note.string, note.fret)
                .expect("string and fret checked above");
            if fingered != note.pitch {
                push(
                    at,
                    format!(
                        "fingering mismatch: pitch_for({},{})={}≠{}",
                        note.string, note.fret, fingered, note.pitch
                    ),
                );
            }
        }
    }

    for pair in bar.notes.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.position == b.position && a.string == b.string {
            push(Some(b.position), "duplicate string at position".to_string());
        } else if (a.position, std::cmp::Reverse(a.string)) > (b.position, std::cmp::Reverse(b.string)) {
            push(
                Some(b.position),
                "notes not ordered by (position ascending, string descending)".to_string(),
            );
        }
    }

    for technique in &bar.techniques {
        if technique.position >= POSITIONS_PER_BAR {
            push(
                Some(technique.position),
                format!("technique position {} outside 0..=15", technique.position),
            );
        }
    }
    for pair in bar.techniques.windows(2) {
        if pair[0].position == pair[1].position {
            push(Some(pair[1].position), "duplicate technique at position".to_string());
        } else if pair[0].position > pair[1].position {
            push(
                Some(pair[1].position),
                "techniques not ordered by position".to_string(),
            );
        }
    }
}
