//! Well-formedness of token streams.
//!
//! [`GrammarState`] is the category-level automaton. [`Constraint`] layers the
//! value-level rules on top of it (ascending positions, descending strings,
//! playable fingerings) so that constrained sampling only ever produces
//! sequences that decode without diagnostics.

use super::token::{Category, Mode, Token, Vocabulary};
use crate::fretboard;
use crate::tab::POSITIONS_PER_BAR;

/// Category automaton state: the category of the last accepted token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GrammarState {
    Start,
    Bar,
    Grooving,
    Position,
    Technique,
    NoteVelocity,
    NoteOn,
    NoteDuration,
    String,
    Fret,
}

impl GrammarState {
    pub fn allowed(self, mode: Mode) -> &'static [Category] {
        use Category as C;
        match self {
            GrammarState::Start => &[C::Bar],
            GrammarState::Bar => match mode {
                Mode::GrooveAware => &[C::Grooving],
                Mode::NoGrooving => &[C::Position, C::Bar],
            },
            GrammarState::Grooving => &[C::Position, C::Bar],
            GrammarState::Position => &[C::Technique, C::NoteVelocity],
            GrammarState::Technique => &[C::NoteVelocity, C::Position, C::Bar],
            GrammarState::NoteVelocity => &[C::NoteOn],
            GrammarState::NoteOn => &[C::NoteDuration],
            GrammarState::NoteDuration => &[C::String],
            GrammarState::String => &[C::Fret],
            GrammarState::Fret => &[C::NoteVelocity, C::Position, C::Bar],
        }
    }

    pub fn accepts(self, category: Category, mode: Mode) -> bool {
        self.allowed(mode).contains(&category)
    }

    /// State after `category`, or `None` when the transition is illegal.
    pub fn next(self, category: Category, mode: Mode) -> Option<GrammarState> {
        self.accepts(category, mode).then(|| GrammarState::after(category))
    }

    pub(crate) fn after(category: Category) -> GrammarState {
        match category {
            Category::Bar => GrammarState::Bar,
            Category::Grooving => GrammarState::Grooving,
            Category::Position => GrammarState::Position,
            Category::Technique => GrammarState::Technique,
            Category::NoteVelocity => GrammarState::NoteVelocity,
            Category::NoteOn => GrammarState::NoteOn,
            Category::NoteDuration => GrammarState::NoteDuration,
            Category::String => GrammarState::String,
            Category::Fret => GrammarState::Fret,
        }
    }

    /// Whether a stream may end here.
    pub fn is_final(self, mode: Mode) -> bool {
        match self {
            GrammarState::Start
            | GrammarState::Grooving
            | GrammarState::Technique
            | GrammarState::Fret => true,
            GrammarState::Bar => mode == Mode::NoGrooving,
            _ => false,
        }
    }
}

/// Category-level mask over the vocabulary of `mode`.
pub fn grammar_mask(state: GrammarState, mode: Mode) -> Vec<bool> {
    let vocab = Vocabulary::new(mode);
    let mut mask = vec![false; vocab.len()];
    for &category in state.allowed(mode) {
        for id in vocab.category_ids(category) {
            mask[id as usize] = true;
        }
    }
    mask
}

/// Runs the category automaton over a whole sequence. Returns the final
/// state, or the index of the first rejected token.
pub fn accept_sequence(tokens: &[Token], mode: Mode) -> Result<GrammarState, usize> {
    tokens
        .iter()
        .enumerate()
        .try_fold(GrammarState::Start, |state, (i, t)| {
            state.next(t.category(), mode).ok_or(i)
        })
}

/// Category automaton plus the value-level invariants of a valid bar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    mode: Mode,
    state: GrammarState,
    /// 0-based position currently open in the bar.
    position: Option<u8>,
    /// Lowest-numbered string already used at the open position.
    last_string: Option<u8>,
    pitch: Option<u8>,
    string: Option<u8>,
}

impl Constraint {
    pub fn new(mode: Mode) -> Constraint {
        Constraint {
            mode,
            state: GrammarState::Start,
            position: None,
            last_string: None,
            pitch: None,
            string: None,
        }
    }

    pub fn state(&self) -> GrammarState {
        self.state
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn allows(&self, token: Token) -> bool {
        if !self.state.accepts(token.category(), self.mode) {
            return false;
        }
        match token {
            Token::Position(p) => self.position.is_none_or(|open| p - 1 > open),
            Token::NoteVelocity(_) => self.last_string.is_none_or(|s| s > 1),
            Token::NoteOn(pitch) => self.playable_below(pitch),
            Token::String(s) => {
                let pitch = self.pitch.expect("NOTE_ON precedes STRING");
                self.last_string.is_none_or(|last| s < last)
                    && fretboard::fret_for(pitch, s).ok().flatten().is_some()
            }
            Token::Fret(f) => {
                let (pitch, string) = (self.pitch.expect("pitch set"), self.string.expect("string set"));
                fretboard::fret_for(pitch, string).ok().flatten() == Some(f)
            }
            _ => true,
        }
    }

    fn playable_below(&self, pitch: u8) -> bool {
        let limit = self.last_string.unwrap_or(fretboard::NUM_STRINGS + 1);
        (1..limit).any(|s| fretboard::fret_for(pitch, s).ok().flatten().is_some())
    }

    /// Applies `token`. Returns `false`, leaving the state untouched, when
    /// the token is not allowed.
    pub fn advance(&mut self, token: Token) -> bool {
        if !self.allows(token) {
            return false;
        }
        self.state = GrammarState::after(token.category());
        match token {
            Token::Bar => {
                self.position = None;
                self.last_string = None;
            }
            Token::Position(p) => {
                debug_assert!(p <= POSITIONS_PER_BAR);
                self.position = Some(p - 1);
                self.last_string = None;
            }
            Token::NoteOn(pitch) => self.pitch = Some(pitch),
            Token::String(s) => self.string = Some(s),
            Token::Fret(_) => {
                self.last_string = self.string.take();
                self.pitch = None;
            }
            _ => {}
        }
        true
    }

    pub fn mask(&self, vocab: &Vocabulary) -> Vec<bool> {
        debug_assert_eq!(vocab.mode(), self.mode);
        let mut mask = vec![false; vocab.len()];
        for &category in self.state.allowed(self.mode) {
            for id in vocab.category_ids(category) {
                let token = vocab.token(id).expect("dense ids");
                mask[id as usize] = self.allows(token);
            }
        }
        mask
    }
}
