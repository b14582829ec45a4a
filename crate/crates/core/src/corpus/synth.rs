//! Seeded generator of playable, standard-tuning tabs.
//!
//! Every tab gets its own rhythm template (bass pattern, melody onsets,
//! chord-hit slots). Bars follow the template with a little per-bar
//! variation, so grooves repeat within a tab and differ across tabs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fretboard::pitch_for;
use crate::tab::{Bar, NoteEvent, Tab, TabMetadata, Technique, TechniqueEvent, POSITIONS_PER_BAR};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthStyle {
    /// Range of the per-tab probability that a 16th slot holds a melody onset.
    pub melody_density: (f64, f64),
    /// Probability that a template slot flips in any one bar.
    pub variation: f64,
    /// Probability that a bar opens with a full strummed chord.
    pub chord_probability: f64,
    /// Expected technique marks per bar.
    pub techniques_per_bar: f64,
}

impl Default for SynthStyle {
    fn default() -> Self {
        SynthStyle {
            melody_density: (0.2, 0.45),
            variation: 0.08,
            chord_probability: 0.3,
            techniques_per_bar: 0.6,
        }
    }
}

/// Open-position chord shapes, string 1 first; `None` is a muted string.
const SHAPES: &[(&str, [Option<u8>; 6])] = &[
    ("C", [Some(0), Some(1), Some(0), Some(2), Some(3), None]),
    ("G", [Some(3), Some(0), Some(0), Some(0), Some(2), Some(3)]),
    ("Am", [Some(0), Some(1), Some(2), Some(2), Some(0), None]),
    ("Em", [Some(0), Some(0), Some(0), Some(2), Some(2), Some(0)]),
    ("D", [Some(2), Some(3), Some(2), Some(0), None, None]),
    ("E", [Some(0), Some(0), Some(1), Some(2), Some(2), Some(0)]),
    ("A", [Some(0), Some(2), Some(2), Some(2), Some(0), None]),
    ("Dm", [Some(1), Some(3), Some(2), Some(0), None, None]),
    ("F", [Some(1), Some(1), Some(2), Some(3), Some(3), Some(1)]),
];

/// Fret offsets (relative to the chord fret) used for melody passing tones.
const PASSING: &[i8] = &[-2, -1, 2, 3];

struct Template {
    progression: Vec<usize>,
    melody: [bool; 16],
    bass: Vec<u8>,
    /// Higher position on the neck for melody, as a fret offset.
    capo: u8,
    technique_slots: Vec<(u8, Technique)>,
}

fn template(rng: &mut ChaCha8Rng, style: &SynthStyle) -> Template {
    let progression = (0..4).map(|_| rng.gen_range(0..SHAPES.len())).collect();
    let (lo, hi) = style.melody_density;
    let density = if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let mut melody = [false; 16];
    for slot in melody.iter_mut() {
        *slot = rng.gen_bool(density.clamp(0.0, 1.0));
    }
    let bass_patterns: [&[u8]; 4] = [&[0, 4, 8, 12], &[0, 8], &[0, 6, 8, 14], &[0, 4, 8, 10, 12]];
    let bass = bass_patterns[rng.gen_range(0..bass_patterns.len())].to_vec();
    let capo = [0, 0, 2, 5, 7][rng.gen_range(0..5)];
    let marks = style.techniques_per_bar.max(0.0).ceil() as usize + 1;
    let mut technique_slots = Vec::new();
    let mut taken = [false; 16];
    for _ in 0..marks {
        let pos = rng.gen_range(0..16u8);
        if !taken[pos as usize] {
            taken[pos as usize] = true;
            technique_slots.push((pos, *Technique::ALL.choose(rng).expect("non-empty")));
        }
    }
    Template {
        progression,
        melody,
        bass,
        capo,
        technique_slots,
    }
}

fn note(position: u8, string: u8, fret: u8, duration: u8, velocity: u8) -> NoteEvent {
    NoteEvent {
        position,
        pitch: pitch_for(string, fret).expect("synth fingerings stay on the board"),
        duration,
        velocity,
        string,
        fret,
    }
}

fn bass_string(shape: &[Option<u8>; 6]) -> u8 {
    if shape[5].is_some() {
        6
    } else {
        5
    }
}

fn make_bar(t: &Template, bar_index: usize, rng: &mut ChaCha8Rng, style: &SynthStyle) -> Bar {
    let (_, shape) = SHAPES[t.progression[bar_index % t.progression.len()]];
    let mut bar = Bar::new();
    let flip = |on: bool, rng: &mut ChaCha8Rng| if rng.gen_bool(style.variation) { !on } else { on };

    let strum = rng.gen_bool(style.chord_probability);
    if strum {
        for (i, fret) in shape.iter().enumerate() {
            if let Some(f) = fret {
                bar.notes.push(note(0, i as u8 + 1, *f, 8, rng.gen_range(20..=26)));
            }
        }
    }

    let root = bass_string(&shape);
    for (n, &pos) in t.bass.iter().enumerate() {
        if strum && pos == 0 {
            continue;
        }
        // Alternate between strings 5 and 6, starting on the root.
        let string = if n % 2 == 0 { root } else { 11 - root };
        let fret = shape[string as usize - 1].unwrap_or(0);
        let next = t.bass.get(n + 1).copied().unwrap_or(POSITIONS_PER_BAR);
        let duration = ((next - pos) * 2).clamp(1, 64);
        bar.notes.push(note(pos, string, fret, duration, rng.gen_range(16..=22)));
    }

    let onsets: Vec<u8> = (0..16u8)
        .filter(|&p| flip(t.melody[p as usize], rng))
        .filter(|&p| !(strum && p == 0))
        .collect();
    for (n, &pos) in onsets.iter().enumerate() {
        let string = rng.gen_range(1..=3u8);
        let base = shape[string as usize - 1].unwrap_or(0) + t.capo;
        let fret = if rng.gen_bool(0.25) {
            let step = *PASSING.choose(rng).expect("non-empty");
            (base as i16 + step as i16).clamp(0, 20) as u8
        } else {
            base
        };
        let next = onsets.get(n + 1).copied().unwrap_or(POSITIONS_PER_BAR);
        let duration = ((next - pos) * 2).clamp(1, 64);
        bar.notes.push(note(pos, string, fret, duration, rng.gen_range(20..=28)));
    }

    let expected = style.techniques_per_bar.max(0.0);
    let per_slot = if t.technique_slots.is_empty() {
        0.0
    } else {
        (expected / t.technique_slots.len() as f64).min(1.0)
    };
    for &(pos, kind) in &t.technique_slots {
        if rng.gen_bool(per_slot) {
            bar.techniques.push(TechniqueEvent { position: pos, kind });
        }
    }
    if strum && bar.technique_at(0).is_none() && rng.gen_bool(0.5) {
        bar.techniques.push(TechniqueEvent {
            position: 0,
            kind: Technique::Downstroke,
        });
    }
    bar.normalize();
    bar
}

/// `n_tabs` tabs of `bars_per_tab` bars each, deterministic in `seed`.
pub fn synth_corpus(n_tabs: usize, bars_per_tab: usize, seed: u64, style: &SynthStyle) -> Result<Vec<Tab>> {
    if !(0.0..=1.0).contains(&style.variation) || !(0.0..=1.0).contains(&style.chord_probability) {
        return Err(Error::domain("style probabilities must lie in [0, 1]"));
    }
    let (lo, hi) = style.melody_density;
    if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(Error::domain("melody_density must be an ordered range inside [0, 1]"));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut tabs = Vec::with_capacity(n_tabs);
    for i in 0..n_tabs {
        let mut rng = ChaCha8Rng::seed_from_u64(master.gen());
        let t = template(&mut rng, style);
        let bars = (0..bars_per_tab).map(|b| make_bar(&t, b, &mut rng, style)).collect();
        let tab = Tab {
            bars,
            metadata: TabMetadata {
                title: format!("synthetic {i}"),
                source_id: format!("synth-{seed}-{i:04}"),
                slice: None,
            },
        };
        debug_assert!(tab.validate().is_empty(), "{:?}", tab.validate());
        tabs.push(tab);
    }
    Ok(tabs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_and_deterministic() {
        let style = SynthStyle::default();
        let a = synth_corpus(20, 8, 5, &style).unwrap();
        assert_eq!(a, synth_corpus(20, 8, 5, &style).unwrap());
        assert_ne!(a, synth_corpus(20, 8, 6, &style).unwrap());
        for tab in &a {
            assert!(tab.validate().is_empty(), "{:?}", tab.validate());
            assert_eq!(tab.len(), 8);
        }
    }

    #[test]
    fn every_shape_is_playable() {
        for (name, shape) in SHAPES {
            for (i, f) in shape.iter().enumerate() {
                if let Some(f) = f {
                    assert!(pitch_for(i as u8 + 1, *f + 7).is_ok(), "{name}");
                }
            }
        }
    }
}
