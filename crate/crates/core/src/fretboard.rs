//! Standard-tuning pitch/string/fret arithmetic for a six-string guitar.
//!
//! Strings are numbered 1 (high E) to 6 (low E). Frets run 0..=20, which is
//! exactly what it takes to cover MIDI pitches 40 (E2) through 84 (C6).

use crate::{Error, Result};

pub const NUM_STRINGS: u8 = 6;
pub const MAX_FRET: u8 = 20;
pub const MIN_PITCH: u8 = 40;
pub const MAX_PITCH: u8 = 84;

/// Open-string MIDI pitches indexed by `string - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tuning {
    open_pitches: [u8; 6],
}

impl Tuning {
    pub const STANDARD: Tuning = Tuning {
        open_pitches: [64, 59, 55, 50, 45, 40],
    };

    pub fn open_pitches(&self) -> [u8; 6] {
        self.open_pitches
    }

    pub fn open_pitch(&self, string: u8) -> Result<u8> {
        check_string(string)?;
        Ok(self.open_pitches[usize::from(string - 1)])
    }

    pub fn pitch_for(&self, string: u8, fret: u8) -> Result<u8> {
        check_string(string)?;
        if fret > MAX_FRET {
            return Err(Error::domain(format!("fret {fret} outside 0..={MAX_FRET}")));
        }
        Ok(self.open_pitches[usize::from(string - 1)] + fret)
    }

    /// `None` when the pitch is below the open string or beyond the last fret.
    pub fn fret_for(&self, pitch: u8, string: u8) -> Result<Option<u8>> {
        check_pitch(pitch)?;
        check_string(string)?;
        let open = self.open_pitches[usize::from(string - 1)];
        Ok(pitch
            .checked_sub(open)
            .filter(|&fret| fret <= MAX_FRET))
    }

    pub fn valid_strings(&self, pitch: u8) -> Result<StringSet> {
        check_pitch(pitch)?;
        let mut set = StringSet::EMPTY;
        for string in 1..=NUM_STRINGS {
            if self.fret_for(pitch, string)?.is_some() {
                set.insert(string);
            }
        }
        Ok(set)
    }
}

impl Default for Tuning {
    fn default() -> Self {
        Tuning::STANDARD
    }
}

/// A (string, fret) pair on the neck.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FretPosition {
    pub string: u8,
    pub fret: u8,
}

impl FretPosition {
    pub fn new(string: u8, fret: u8) -> Result<Self> {
        Tuning::STANDARD.pitch_for(string, fret)?;
        Ok(FretPosition { string, fret })
    }

    pub fn pitch(&self) -> u8 {
        // Construction guarantees range validity.
        Tuning::STANDARD.open_pitches[usize::from(self.string - 1)] + self.fret
    }
}

/// Small bitset over strings 1..=6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StringSet(u8);

impl StringSet {
    pub const EMPTY: StringSet = StringSet(0);

    pub fn insert(&mut self, string: u8) {
        debug_assert!((1..=NUM_STRINGS).contains(&string));
        self.0 |= 1 << (string - 1);
    }

    pub fn contains(&self, string: u8) -> bool {
        (1..=NUM_STRINGS).contains(&string) && self.0 & (1 << (string - 1)) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        (1..=NUM_STRINGS).filter(move |&s| self.contains(s))
    }
}

pub fn pitch_for(string: u8, fret: u8) -> Result<u8> {
    Tuning::STANDARD.pitch_for(string, fret)
}

pub fn fret_for(pitch: u8, string: u8) -> Result<Option<u8>> {
    Tuning::STANDARD.fret_for(pitch, string)
}

pub fn valid_strings(pitch: u8) -> Result<StringSet> {
    Tuning::STANDARD.valid_strings(pitch)
}

fn check_string(string: u8) -> Result<()> {
    if (1..=NUM_STRINGS).contains(&string) {
        Ok(())
    } else {
        Err(Error::domain(format!("string {string} outside 1..={NUM_STRINGS}")))
    }
}

fn check_pitch(pitch: u8) -> Result<()> {
    if (MIN_PITCH..=MAX_PITCH).contains(&pitch) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "pitch {pitch} outside {MIN_PITCH}..={MAX_PITCH}"
        )))
    }
}
