//! Character alphabet and symbol encoding.
//!
//! Password characters are mapped to dense indices `0..len`. Two sentinels
//! follow them: the end symbol at `len` and the start symbol at `len + 1`.
//! Probability rows are indexed over password characters plus the end
//! symbol, so every row has width `len + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a symbol in an [`Alphabet`].
pub type Symbol = u8;

/// Number of symbols of context kept by the generator.
pub const WINDOW: usize = 4;

const NONE: u8 = u8::MAX;

/// Ordered set of password characters, all within printable ASCII (32..=126).
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Alphabet {
    chars: Vec<char>,
    #[serde(skip)]
    index: [u8; 128],
}

impl std::fmt::Debug for Alphabet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("Alphabet")
            .field(&self.chars.iter().collect::<String>())
            .finish()
    }
}

impl Alphabet {
    /// The 95 printable ASCII characters, space included.
    pub fn printable() -> Self {
        let chars: String = (32u8..=126).map(char::from).collect();
        Self::new(&chars).expect("printable ascii is a valid alphabet")
    }

    /// Builds an alphabet from the characters of `chars`, in order.
    pub fn new(chars: &str) -> Result<Self> {
        let mut index = [NONE; 128];
        let mut list = Vec::new();
        for c in chars.chars() {
            if !(' '..='~').contains(&c) {
                return Err(Error::domain(format!(
                    "alphabet character {c:?} outside printable ascii"
                )));
            }
            if index[c as usize] != NONE {
                return Err(Error::domain(format!("duplicate alphabet character {c:?}")));
            }
            index[c as usize] = list.len() as u8;
            list.push(c);
        }
        if list.is_empty() {
            return Err(Error::domain("empty alphabet"));
        }
        Ok(Self { chars: list, index })
    }

    /// Number of password characters (sentinels excluded).
    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    /// Width of a next-symbol probability row: password characters plus end.
    pub fn row_width(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn end(&self) -> Symbol {
        self.chars.len() as Symbol
    }

    pub fn start(&self) -> Symbol {
        self.chars.len() as Symbol + 1
    }

    pub fn is_password_symbol(&self, s: Symbol) -> bool {
        (s as usize) < self.chars.len()
    }

    pub fn encode(&self, c: char) -> Option<Symbol> {
        let code = c as usize;
        if code < 128 && self.index[code] != NONE {
            Some(self.index[code])
        } else {
            None
        }
    }

    pub fn decode(&self, s: Symbol) -> Option<char> {
        self.chars.get(s as usize).copied()
    }

    pub fn encode_str(&self, s: &str) -> Result<Vec<Symbol>> {
        s.chars()
            .map(|c| {
                self.encode(c)
                    .ok_or_else(|| Error::domain(format!("character {c:?} is not in the alphabet")))
            })
            .collect()
    }

    /// Decodes password symbols; sentinels are rejected.
    pub fn decode_symbols(&self, symbols: &[Symbol]) -> Result<String> {
        symbols
            .iter()
            .map(|&s| {
                self.decode(s)
                    .ok_or_else(|| Error::domain(format!("symbol {s} is not a password character")))
            })
            .collect()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Human-readable rendering of any symbol, sentinels as `^` (start) and `$` (end).
    pub fn display_symbol(&self, s: Symbol) -> String {
        if s == self.start() {
            "^".into()
        } else if s == self.end() {
            "$".into()
        } else {
            self.decode(s).map(String::from).unwrap_or_else(|| format!("<{s}>"))
        }
    }
}

impl TryFrom<String> for Alphabet {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Alphabet::new(&value)
    }
}

impl From<Alphabet> for String {
    fn from(a: Alphabet) -> Self {
        a.chars.into_iter().collect()
    }
}

/// The rolling context: always exactly the last [`WINDOW`] symbols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Window([Symbol; WINDOW]);

impl Window {
    /// A window filled with start sentinels.
    pub fn start(alphabet: &Alphabet) -> Self {
        Window([alphabet.start(); WINDOW])
    }

    pub fn from_symbols(symbols: [Symbol; WINDOW]) -> Self {
        Window(symbols)
    }

    /// Shifts left by one and appends `s`.
    pub fn push(&mut self, s: Symbol) {
        self.0.copy_within(1.., 0);
        self.0[WINDOW - 1] = s;
    }

    pub fn pushed(mut self, s: Symbol) -> Self {
        self.push(s);
        self
    }

    pub fn symbols(&self) -> &[Symbol; WINDOW] {
        &self.0
    }

    /// Packs the window into a single key (7 bits per symbol).
    pub fn key(&self) -> u32 {
        pack(&self.0)
    }
}

/// Packs up to four symbols, 7 bits each, most recent in the low bits.
pub(crate) fn pack(symbols: &[Symbol]) -> u32 {
    symbols
        .iter()
        .fold(0u32, |acc, &s| (acc << 7) | (s as u32 & 0x7f))
}

pub(crate) fn unpack(key: u32, len: usize) -> Vec<Symbol> {
    (0..len)
        .rev()
        .map(|i| ((key >> (7 * i)) & 0x7f) as Symbol)
        .collect()
}
