//! Symbol inventories and the words spelled over them.

use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::Path;

use crate::error::{invalid, Error, Result};

/// Ordered, duplicate-free set of symbols.
///
/// Index `i` of a symbol is its position in the list. The CTC blank label
/// takes the first index past the symbols, so it never collides with one.
#[derive(Debug, Clone)]
pub struct Charset {
    symbols: Vec<char>,
    lookup: HashMap<char, usize>,
    fold_case: bool,
    id: u64,
}

impl PartialEq for Charset {
    fn eq(&self, other: &Self) -> bool {
        self.symbols == other.symbols && self.fold_case == other.fold_case
    }
}

impl Eq for Charset {}

impl Charset {
    /// Builds a case-sensitive charset from an ordered list of symbols.
    pub fn new(symbols: impl IntoIterator<Item = char>) -> Result<Self> {
        let symbols: Vec<char> = symbols.into_iter().collect();
        if symbols.is_empty() {
            return Err(invalid("charset has no symbols"));
        }
        let mut lookup = HashMap::with_capacity(symbols.len());
        for (i, &c) in symbols.iter().enumerate() {
            if c.is_whitespace() || c.is_control() {
                return Err(invalid(format!("symbol {c:?} is whitespace or control")));
            }
            if lookup.insert(c, i).is_some() {
                return Err(invalid(format!("duplicate symbol {c:?}")));
            }
        }
        let mut cs = Charset {
            symbols,
            lookup,
            fold_case: false,
            id: 0,
        };
        cs.id = cs.compute_id();
        Ok(cs)
    }

    /// Lowercase Latin letters followed by the ten digits, with case folding on.
    pub fn latin36() -> Self {
        Charset::new(('a'..='z').chain('0'..='9'))
            .expect("latin charset is valid")
            .with_case_folding(true)
    }

    /// When folding is on, uppercase input maps to its lowercase symbol if the
    /// uppercase form itself is not in the set.
    pub fn with_case_folding(mut self, fold: bool) -> Self {
        self.fold_case = fold;
        self.id = self.compute_id();
        self
    }

    fn compute_id(&self) -> u64 {
        // FNV-1a over the symbol list; stable across runs and platforms.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for c in &self.symbols {
            for b in (*c as u32).to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h ^= self.fold_case as u64;
        h.wrapping_mul(0x0100_0000_01b3)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Reserved CTC blank label; always `len()`.
    pub fn blank_index(&self) -> usize {
        self.symbols.len()
    }

    pub fn folds_case(&self) -> bool {
        self.fold_case
    }

    /// Stable identifier used to check that two words share a charset.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn symbol(&self, index: usize) -> Option<char> {
        self.symbols.get(index).copied()
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        if let Some(&i) = self.lookup.get(&c) {
            return Some(i);
        }
        if self.fold_case {
            let mut lower = c.to_lowercase();
            if let (Some(l), None) = (lower.next(), lower.next()) {
                return self.lookup.get(&l).copied();
            }
        }
        None
    }

    /// Validates and encodes a string as a [`Word`].
    pub fn encode(&self, text: &str) -> Result<Word> {
        let mut symbols = Vec::with_capacity(text.len());
        for c in text.chars() {
            let i = self
                .index_of(c)
                .ok_or_else(|| invalid(format!("character {c:?} of {text:?} is not in the charset")))?;
            symbols.push(i as u32);
        }
        self.word_from_indices(symbols)
    }

    pub fn word_from_indices(&self, symbols: Vec<u32>) -> Result<Word> {
        if symbols.is_empty() {
            return Err(invalid("a word needs at least one symbol"));
        }
        if let Some(&bad) = symbols.iter().find(|&&s| s as usize >= self.symbols.len()) {
            return Err(invalid(format!(
                "symbol index {bad} out of range for a charset of {}",
                self.symbols.len()
            )));
        }
        let text = symbols.iter().map(|&s| self.symbols[s as usize]).collect();
        Ok(Word {
            symbols,
            text,
            charset_id: self.id,
        })
    }

    /// One symbol per line, in index order.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.symbols.len() * 2);
        for c in &self.symbols {
            out.push(*c);
            out.push('\n');
        }
        out
    }

    /// Parses the one-symbol-per-line format. Blank lines are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut symbols = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut chars = line.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => symbols.push(c),
                _ => return Err(invalid(format!("line {} holds {line:?}, expected one symbol", n + 1))),
            }
        }
        Charset::new(symbols)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Charset::from_text(&text).map_err(|e: Error| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// A non-empty sequence of charset indices, with its spelled form cached.
#[derive(Debug, Clone)]
pub struct Word {
    symbols: Vec<u32>,
    text: String,
    charset_id: u64,
}

impl Word {
    pub fn symbols(&self) -> &[u32] {
        &self.symbols
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// Number of symbols (not bytes).
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn charset_id(&self) -> u64 {
        self.charset_id
    }

    pub(crate) fn check_same_charset(&self, other: &Word) -> Result<()> {
        if self.charset_id != other.charset_id {
            return Err(invalid(format!(
                "words {:?} and {:?} come from different charsets",
                self.text, other.text
            )));
        }
        Ok(())
    }
}

impl PartialEq for Word {
    fn eq(&self, other: &Self) -> bool {
        self.charset_id == other.charset_id && self.symbols == other.symbols
    }
}

impl Eq for Word {}

impl Hash for Word {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.charset_id.hash(state);
        self.symbols.hash(state);
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}
