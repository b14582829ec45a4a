use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::tab::Technique;
use crate::{Error, Result};

/// Whether bars carry a `GROOVING` token after `BAR`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    NoGrooving,
    GrooveAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Bar,
    Grooving,
    Position,
    NoteVelocity,
    NoteOn,
    NoteDuration,
    String,
    Fret,
    Technique,
}

impl Category {
    /// Vocabulary enumeration order.
    pub const ALL: [Category; 9] = [
        Category::Bar,
        Category::Grooving,
        Category::Position,
        Category::NoteVelocity,
        Category::NoteOn,
        Category::NoteDuration,
        Category::String,
        Category::Fret,
        Category::Technique,
    ];

    /// Inclusive value range. `BAR` carries no value and reports `(0, 0)`.
    pub fn range(self) -> (u8, u8) {
        match self {
            Category::Bar => (0, 0),
            Category::Grooving => (0, 31),
            Category::Position => (1, 16),
            Category::NoteVelocity => (1, 32),
            Category::NoteOn => (40, 84),
            Category::NoteDuration => (1, 64),
            Category::String => (1, 6),
            Category::Fret => (0, 20),
            Category::Technique => (0, 4),
        }
    }

    pub fn size(self) -> usize {
        let (lo, hi) = self.range();
        usize::from(hi - lo) + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Bar => "BAR",
            Category::Grooving => "GROOVING",
            Category::Position => "POSITION",
            Category::NoteVelocity => "NOTE_VELOCITY",
            Category::NoteOn => "NOTE_ON",
            Category::NoteDuration => "NOTE_DURATION",
            Category::String => "STRING",
            Category::Fret => "FRET",
            Category::Technique => "TECHNIQUE",
        }
    }

    fn from_name(name: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One event of the tab language. Values are stored as they appear in the
/// token stream, so `Position` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    Bar,
    Grooving(u8),
    Position(u8),
    NoteVelocity(u8),
    NoteOn(u8),
    NoteDuration(u8),
    String(u8),
    Fret(u8),
    Technique(Technique),
}

impl Token {
    pub fn new(category: Category, value: u8) -> Result<Token> {
        let (lo, hi) = category.range();
        if category != Category::Bar && !(lo..=hi).contains(&value) {
            return Err(Error::domain(format!(
                "{category} value {value} outside {lo}..={hi}"
            )));
        }
        Ok(match category {
            Category::Bar => Token::Bar,
            Category::Grooving => Token::Grooving(value),
            Category::Position => Token::Position(value),
            Category::NoteVelocity => Token::NoteVelocity(value),
            Category::NoteOn => Token::NoteOn(value),
            Category::NoteDuration => Token::NoteDuration(value),
            Category::String => Token::String(value),
            Category::Fret => Token::Fret(value),
            Category::Technique => Token::Technique(
                Technique::from_index(value).expect("range checked above"),
            ),
        })
    }

    pub fn category(&self) -> Category {
        match self {
            Token::Bar => Category::Bar,
            Token::Grooving(_) => Category::Grooving,
            Token::Position(_) => Category::Position,
            Token::NoteVelocity(_) => Category::NoteVelocity,
            Token::NoteOn(_) => Category::NoteOn,
            Token::NoteDuration(_) => Category::NoteDuration,
            Token::String(_) => Category::String,
            Token::Fret(_) => Category::Fret,
            Token::Technique(_) => Category::Technique,
        }
    }

    pub fn value(&self) -> Option<u8> {
        match *self {
            Token::Bar => None,
            Token::Grooving(v)
            | Token::Position(v)
            | Token::NoteVelocity(v)
            | Token::NoteOn(v)
            | Token::NoteDuration(v)
            | Token::String(v)
            | Token::Fret(v) => Some(v),
            Token::Technique(t) => Some(t.index()),
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            None => f.write_str(self.category().name()),
            Some(v) => write!(f, "{}_{}", self.category().name(), v),
        }
    }
}

impl FromStr for Token {
    type Err = Error;

    fn from_str(s: &str) -> Result<Token> {
        let bad = |message: String| Error::Parse {
            location: format!("token `{s}`"),
            message,
        };
        if s == "BAR" {
            return Ok(Token::Bar);
        }
        let (name, value) = s
            .rsplit_once('_')
            .ok_or_else(|| bad("expected CATEGORY_VALUE".into()))?;
        let category = Category::from_name(name)
            .filter(|&c| c != Category::Bar)
            .ok_or_else(|| bad(format!("unknown category `{name}`")))?;
        let value: u8 = value
            .parse()
            .map_err(|_| bad(format!("bad value `{value}`")))?;
        Token::new(category, value).map_err(|e| bad(e.to_string()))
    }
}

/// Fixed bijection between tokens and integer ids.
///
/// Ids follow the category order of [`Category::ALL`] with values ascending
/// inside each category. The no-grooving vocabulary simply leaves out the
/// `GROOVING` block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    mode: Mode,
    offsets: [Option<u32>; 9],
    len: u32,
}

impl Vocabulary {
    pub fn new(mode: Mode) -> Vocabulary {
        let mut offsets = [None; 9];
        let mut next = 0u32;
        for (slot, category) in offsets.iter_mut().zip(Category::ALL) {
            if category == Category::Grooving && mode == Mode::NoGrooving {
                continue;
            }
            *slot = Some(next);
            next += category.size() as u32;
        }
        Vocabulary {
            mode,
            offsets,
            len: next,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains_category(&self, category: Category) -> bool {
        self.offsets[category as usize].is_some()
    }

    /// Ids of one category, as a contiguous range.
    pub fn category_ids(&self, category: Category) -> std::ops::Range<u32> {
        match self.offsets[category as usize] {
            Some(start) => start..start + category.size() as u32,
            None => 0..0,
        }
    }

    pub fn id(&self, token: Token) -> Option<u32> {
        let category = token.category();
        let start = self.offsets[category as usize]?;
        let (lo, _) = category.range();
        Some(start + u32::from(token.value().unwrap_or(lo) - lo))
    }

    pub fn token(&self, id: u32) -> Option<Token> {
        if id >= self.len {
            return None;
        }
        Category::ALL
            .into_iter()
            .filter_map(|c| self.offsets[c as usize].map(|start| (c, start)))
            .take_while(|&(_, start)| start <= id)
            .last()
            .map(|(category, start)| {
                let (lo, _) = category.range();
                Token::new(category, lo + (id - start) as u8).expect("id within category")
            })
    }

    pub fn tokens(&self) -> impl Iterator<Item = Token> + '_ {
        (0..self.len).map(|id| self.token(id).expect("dense ids"))
    }

    pub fn category_of(&self, id: u32) -> Option<Category> {
        self.token(id).map(|t| t.category())
    }

    pub fn encode_ids(&self, tokens: &[Token]) -> Result<Vec<u32>> {
        tokens
            .iter()
            .map(|&t| {
                self.id(t)
                    .ok_or_else(|| Error::domain(format!("{t} not in {:?} vocabulary", self.mode)))
            })
            .collect()
    }

    /// Hex SHA-256 over the ordered token names; stable across runs.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for token in self.tokens() {
            hasher.update(token.to_string().as_bytes());
            hasher.update(b"\n");
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
