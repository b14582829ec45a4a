//! Conversion between [`Tab`]s and event-token sequences.
//!
//! A bar serializes as `BAR`, an optional `GROOVING` cluster id, and then,
//! for every occupied 16th-note slot in ascending order, `POSITION`, the
//! slot's `TECHNIQUE` if any, and one five-token run per note
//! (`NOTE_VELOCITY NOTE_ON NOTE_DURATION STRING FRET`) from string 6 up to
//! string 1.

mod grammar;
mod text;
mod token;

use std::fmt;

pub use grammar::{accept_sequence, grammar_mask, Constraint, GrammarState};
pub use text::{parse_token_text, write_token_text, TokenDocument};
pub use token::{Category, Mode, Token, Vocabulary};

use crate::fretboard;
use crate::quantizer::Codebook;
use crate::tab::{Bar, NoteEvent, Tab, TechniqueEvent};
use crate::{Error, Result};

/// Encoding options: plain, or groove-aware with the codebook that assigns
/// each bar its `GROOVING` value.
#[derive(Debug, Clone, Copy)]
pub enum EncodeMode<'a> {
    NoGrooving,
    GrooveAware(&'a Codebook),
}

impl EncodeMode<'_> {
    pub fn mode(&self) -> Mode {
        match self {
            EncodeMode::NoGrooving => Mode::NoGrooving,
            EncodeMode::GrooveAware(_) => Mode::GrooveAware,
        }
    }
}

pub fn encode(tab: &Tab, mode: EncodeMode<'_>) -> Result<Vec<Token>> {
    tab.ensure_valid()?;
    let mut out = Vec::with_capacity(tab.note_count() * 5 + tab.len() * 2);
    for bar in &tab.bars {
        out.push(Token::Bar);
        if let EncodeMode::GrooveAware(codebook) = mode {
            let cluster = codebook.assign_bar(bar)?;
            let cluster = u8::try_from(cluster)
                .ok()
                .filter(|&c| c <= Category::Grooving.range().1)
                .ok_or_else(|| Error::domain(format!("cluster id {cluster} exceeds GROOVING range")))?;
            out.push(Token::Grooving(cluster));
        }
        encode_bar_body(bar, &mut out);
    }
    Ok(out)
}

fn encode_bar_body(bar: &Bar, out: &mut Vec<Token>) {
    for position in bar.occupied_positions() {
        out.push(Token::Position(position + 1));
        if let Some(kind) = bar.technique_at(position) {
            out.push(Token::Technique(kind));
        }
        for note in bar.notes_at(position) {
            out.extend([
                Token::NoteVelocity(note.velocity),
                Token::NoteOn(note.pitch),
                Token::NoteDuration(note.duration),
                Token::String(note.string),
                Token::Fret(note.fret),
            ]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagnosticKind {
    /// Token not permitted by the category automaton; it was dropped.
    Grammar,
    /// A five-token note run cut short; the partial note was dropped.
    IncompleteTuple,
    /// STRING/FRET do not produce the NOTE_ON pitch; the note was kept.
    Fingering,
    /// A second note on an already-used string at one position; dropped.
    DuplicateString,
    /// A second technique at one position; dropped.
    DuplicateTechnique,
    /// Positions not ascending, or strings not descending; content kept and
    /// re-sorted.
    Ordering,
    /// The stream ended somewhere a bar cannot end.
    Truncated,
    /// Integer id outside the vocabulary; dropped.
    UnknownId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Index of the offending token in the input.
    pub index: usize,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "token {}: {}", self.index, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub tab: Tab,
    /// `GROOVING` value seen for each bar, if any.
    pub grooves: Vec<Option<u8>>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Decoded {
    pub fn count(&self, kind: DiagnosticKind) -> usize {
        self.diagnostics.iter().filter(|d| d.kind == kind).count()
    }
}

/// Decodes a sequence, inferring groove-awareness from the presence of any
/// `GROOVING` token.
pub fn decode(tokens: &[Token]) -> Decoded {
    let mode = if tokens.iter().any(|t| matches!(t, Token::Grooving(_))) {
        Mode::GrooveAware
    } else {
        Mode::NoGrooving
    };
    decode_with_mode(tokens, mode)
}

/// Decodes integer ids; ids outside the vocabulary are reported and skipped.
pub fn decode_ids(ids: &[u32], vocab: &Vocabulary) -> Decoded {
    let mut unknown = Vec::new();
    let mut tokens = Vec::with_capacity(ids.len());
    let mut index_map = Vec::with_capacity(ids.len());
    for (i, &id) in ids.iter().enumerate() {
        match vocab.token(id) {
            Some(t) => {
                tokens.push(t);
                index_map.push(i);
            }
            None => unknown.push(Diagnostic {
                index: i,
                kind: DiagnosticKind::UnknownId,
                message: format!("id {id} outside vocabulary of {}", vocab.len()),
            }),
        }
    }
    let mut decoded = decode_with_mode(&tokens, vocab.mode());
    for d in &mut decoded.diagnostics {
        d.index = index_map.get(d.index).copied().unwrap_or(ids.len());
    }
    decoded.diagnostics.extend(unknown);
    decoded.diagnostics.sort_by_key(|d| d.index);
    decoded
}

pub fn decode_with_mode(tokens: &[Token], mode: Mode) -> Decoded {
    let mut parser = Parser::new(mode);
    for (index, &token) in tokens.iter().enumerate() {
        parser.feed(index, token);
    }
    parser.finish(tokens.len())
}

#[derive(Default)]
struct PendingNote {
    velocity: Option<u8>,
    pitch: Option<u8>,
    duration: Option<u8>,
    string: Option<u8>,
}

struct BarBuilder {
    bar: Bar,
    groove: Option<u8>,
    last_position: Option<u8>,
}

struct Parser {
    mode: Mode,
    state: GrammarState,
    bars: Vec<BarBuilder>,
    position: Option<u8>,
    last_string: Option<u8>,
    pending: PendingNote,
    pending_start: usize,
    diagnostics: Vec<Diagnostic>,
}

impl Parser {
    fn new(mode: Mode) -> Parser {
        Parser {
            mode,
            state: GrammarState::Start,
            bars: Vec::new(),
            position: None,
            last_string: None,
            pending: PendingNote::default(),
            pending_start: 0,
            diagnostics: Vec::new(),
        }
    }

    fn report(&mut self, index: usize, kind: DiagnosticKind, message: String) {
        self.diagnostics.push(Diagnostic {
            index,
            kind,
            message,
        });
    }

    fn in_tuple(&self) -> bool {
        matches!(
            self.state,
            GrammarState::NoteVelocity
                | GrammarState::NoteOn
                | GrammarState::NoteDuration
                | GrammarState::String
        )
    }

    fn drop_pending(&mut self, index: usize) {
        let start = self.pending_start;
        self.report(
            index,
            DiagnosticKind::IncompleteTuple,
            format!("incomplete tuple starting at token {start} dropped"),
        );
        self.pending = PendingNote::default();
    }

    /// State to resume from after abandoning a partial note.
    fn resync_state(&self) -> GrammarState {
        match (self.bars.is_empty(), self.position) {
            (true, _) => GrammarState::Start,
            (false, Some(_)) => GrammarState::Fret,
            (false, None) => GrammarState::Grooving,
        }
    }

    fn feed(&mut self, index: usize, token: Token) {
        let category = token.category();
        if !self.state.accepts(category, self.mode) {
            let expected: Vec<&str> = self
                .state
                .allowed(self.mode)
                .iter()
                .map(|c| c.name())
                .collect();
            if self.in_tuple() {
                self.drop_pending(index);
                self.state = self.resync_state();
                if self.state.accepts(category, self.mode) {
                    self.apply(index, token);
                    return;
                }
            }
            let message = format!("unexpected {token}, expected one of {}", expected.join("/"));
            self.report(index, DiagnosticKind::Grammar, message);
            // A stray BAR still opens a bar so bar counting stays aligned.
            if token == Token::Bar {
                self.apply(index, token);
            }
            return;
        }
        self.apply(index, token);
    }

    fn apply(&mut self, index: usize, token: Token) {
        self.state = GrammarState::after(token.category());
        match token {
            Token::Bar => {
                self.bars.push(BarBuilder {
                    bar: Bar::new(),
                    groove: None,
                    last_position: None,
                });
                self.position = None;
                self.last_string = None;
            }
            Token::Grooving(g) => {
                if let Some(b) = self.bars.last_mut() {
                    b.groove = Some(g);
                }
            }
            Token::Position(p) => {
                let position = p - 1;
                let builder = self.bars.last_mut().expect("POSITION follows BAR");
                let out_of_order = builder.last_position.is_some_and(|last| position <= last);
                builder.last_position = Some(position);
                self.position = Some(position);
                self.last_string = None;
                if out_of_order {
                    self.report(
                        index,
                        DiagnosticKind::Ordering,
                        format!("position {p} not after the previous position"),
                    );
                }
            }
            Token::Technique(kind) => {
                let position = self.position.expect("TECHNIQUE follows POSITION");
                let bar = &mut self.bars.last_mut().expect("open bar").bar;
                if bar.technique_at(position).is_some() {
                    self.report(
                        index,
                        DiagnosticKind::DuplicateTechnique,
                        format!("second technique at position {}", position + 1),
                    );
                } else {
                    bar.techniques.push(TechniqueEvent { position, kind });
                }
            }
            Token::NoteVelocity(v) => {
                self.pending = PendingNote {
                    velocity: Some(v),
                    ..PendingNote::default()
                };
                self.pending_start = index;
            }
            Token::NoteOn(p) => self.pending.pitch = Some(p),
            Token::NoteDuration(d) => self.pending.duration = Some(d),
            Token::String(s) => self.pending.string = Some(s),
            Token::Fret(fret) => self.complete_note(fret),
        }
    }

    fn complete_note(&mut self, fret: u8) {
        let pending = std::mem::take(&mut self.pending);
        let (Some(velocity), Some(pitch), Some(duration), Some(string)) =
            (pending.velocity, pending.pitch, pending.duration, pending.string)
        else {
            unreachable!("automaton guarantees a full tuple before FRET");
        };
        let position = self.position.expect("notes follow POSITION");
        let start = self.pending_start;

        let fingered = fretboard::pitch_for(string, fret).expect("token ranges are on the neck");
        if fingered != pitch {
            self.report(
                start,
                DiagnosticKind::Fingering,
                format!(
                    "note-string mismatch at token {start}: NOTE_ON {pitch} on STRING {string} FRET {fret} sounds {fingered}"
                ),
            );
        }
        if self.last_string.is_some_and(|last| string >= last) {
            self.report(
                start,
                DiagnosticKind::Ordering,
                format!("string {string} not below the previous string at position {}", position + 1),
            );
        }
        self.last_string = Some(string);

        let bar = &mut self.bars.last_mut().expect("open bar").bar;
        if bar.notes_at(position).any(|n| n.string == string) {
            self.report(
                start,
                DiagnosticKind::DuplicateString,
                format!("string {string} already used at position {}", position + 1),
            );
            return;
        }
        bar.notes.push(NoteEvent {
            position,
            pitch,
            duration,
            velocity,
            string,
            fret,
        });
    }

    fn finish(mut self, end: usize) -> Decoded {
        if self.in_tuple() {
            self.drop_pending(end);
        } else if !self.state.is_final(self.mode) {
            let message = match self.state {
                GrammarState::Position => "stream ends on a POSITION with no content".to_string(),
                _ => "stream ends on BAR without its GROOVING".to_string(),
            };
            self.report(end, DiagnosticKind::Truncated, message);
        }
        let mut grooves = Vec::with_capacity(self.bars.len());
        let bars = self
            .bars
            .into_iter()
            .map(|mut b| {
                b.bar.normalize();
                grooves.push(b.groove);
                b.bar
            })
            .collect();
        self.diagnostics.sort_by_key(|d| d.index);
        Decoded {
            tab: Tab::new(bars),
            grooves,
            diagnostics: self.diagnostics,
        }
    }
}
