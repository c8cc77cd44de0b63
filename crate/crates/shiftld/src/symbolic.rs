//! Alphabets, finite words, deterministic enumeration of `Ω_t`, and the
//! involutions `θ_t`.
//!
//! Symbols are dense indices `0..A`; labels are presentation-only. The empty
//! word `κ` is a first-class value (`Word::empty`), with `Q(κ) = 1` downstream.
//! Lexicographic order of index sequences is the single canonical word order
//! used wherever ties must be broken.

use std::fmt;
use thiserror::Error;

use crate::{Budget, BudgetError};

/// Symbol index type. Large enough for product alphabets of moderate bases.
pub type Symbol = u16;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SymbolicError {
    #[error("alphabet needs at least 2 symbols, got {0}")]
    TooSmall(usize),
    #[error("alphabet labels must be distinct non-empty printable strings")]
    BadLabels,
    #[error("alphabet mismatch: sizes {0} and {1}")]
    AlphabetMismatch(usize, usize),
    #[error("symbol index {index} out of range for alphabet of size {size}")]
    SymbolOutOfRange { index: usize, size: usize },
    #[error("letter map is not an involution")]
    NotInvolution,
    #[error("cannot parse word {0:?}: unknown label {1:?}")]
    UnknownLabel(String, String),
    #[error(transparent)]
    Budget(#[from] BudgetError),
}

/// A finite alphabet `𝒜` with printable labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    labels: Vec<String>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(labels: Vec<S>) -> Result<Self, SymbolicError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(SymbolicError::TooSmall(labels.len()));
        }
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() || l.contains(',') || labels[..i].contains(l) {
                return Err(SymbolicError::BadLabels);
            }
        }
        Ok(Alphabet { labels })
    }

    /// The two-letter alphabet `{a, b}` used by the hidden renewal family.
    pub fn binary() -> Self {
        Alphabet {
            labels: vec!["a".into(), "b".into()],
        }
    }

    /// First `size` lowercase letters (size <= 26), `s0, s1, …` beyond that.
    pub fn of_size(size: usize) -> Result<Self, SymbolicError> {
        if size < 2 {
            return Err(SymbolicError::TooSmall(size));
        }
        let labels = (0..size)
            .map(|i| {
                if size <= 26 {
                    ((b'a' + i as u8) as char).to_string()
                } else {
                    format!("s{i}")
                }
            })
            .collect();
        Ok(Alphabet { labels })
    }

    /// Product alphabet of size `A²`; the pair `(x, y)` is the symbol `x·A + y`
    /// with label `label(x)+label(y)` (comma-joined for multi-char labels).
    pub fn product(&self) -> Self {
        let a = self.size();
        let single = self.labels.iter().all(|l| l.chars().count() == 1);
        let mut labels = Vec::with_capacity(a * a);
        for x in 0..a {
            for y in 0..a {
                if single {
                    labels.push(format!("{}{}", self.labels[x], self.labels[y]));
                } else {
                    labels.push(format!("{}|{}", self.labels[x], self.labels[y]));
                }
            }
        }
        Alphabet { labels }
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, s: Symbol) -> &str {
        &self.labels[s as usize]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    fn single_char(&self) -> bool {
        self.labels.iter().all(|l| l.chars().count() == 1)
    }

    /// Render a word over this alphabet: concatenated for single-character
    /// labels, comma-separated otherwise. `κ` renders as the empty string.
    pub fn format_word(&self, w: &Word) -> String {
        if self.single_char() {
            w.symbols().iter().map(|&s| self.label(s)).collect()
        } else {
            w.symbols()
                .iter()
                .map(|&s| self.label(s))
                .collect::<Vec<_>>()
                .join(",")
        }
    }

    /// Inverse of [`Alphabet::format_word`].
    pub fn parse_word(&self, text: &str) -> Result<Word, SymbolicError> {
        let mut symbols = Vec::new();
        if text.is_empty() {
            return Ok(Word::empty(self.size()));
        }
        if self.single_char() && !text.contains(',') {
            for ch in text.chars() {
                let tok = ch.to_string();
                let idx = self
                    .labels
                    .iter()
                    .position(|l| *l == tok)
                    .ok_or_else(|| SymbolicError::UnknownLabel(text.into(), tok.clone()))?;
                symbols.push(idx as Symbol);
            }
        } else {
            for tok in text.split(',') {
                let idx = self
                    .labels
                    .iter()
                    .position(|l| l == tok)
                    .ok_or_else(|| SymbolicError::UnknownLabel(text.into(), tok.into()))?;
                symbols.push(idx as Symbol);
            }
        }
        Ok(Word {
            alphabet_size: self.size() as u32,
            symbols,
        })
    }
}

/// A finite word `w ∈ Ω_t` over an alphabet of known size; `t = 0` is `κ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    alphabet_size: u32,
    symbols: Vec<Symbol>,
}

impl Word {
    pub fn new(alphabet_size: usize, symbols: Vec<Symbol>) -> Result<Self, SymbolicError> {
        for &s in &symbols {
            if (s as usize) >= alphabet_size {
                return Err(SymbolicError::SymbolOutOfRange {
                    index: s as usize,
                    size: alphabet_size,
                });
            }
        }
        Ok(Word {
            alphabet_size: alphabet_size as u32,
            symbols,
        })
    }

    /// The empty word `κ`.
    pub fn empty(alphabet_size: usize) -> Self {
        Word {
            alphabet_size: alphabet_size as u32,
            symbols: Vec::new(),
        }
    }

    /// Parse from labels over `alphabet`.
    pub fn parse(alphabet: &Alphabet, text: &str) -> Result<Self, SymbolicError> {
        alphabet.parse_word(text)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size as usize
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn from_slice(alphabet_size: usize, symbols: &[Symbol]) -> Self {
        Word {
            alphabet_size: alphabet_size as u32,
            symbols: symbols.to_vec(),
        }
    }

    /// `w[lo..hi]` as a word (0-based, half-open).
    pub fn slice(&self, lo: usize, hi: usize) -> Word {
        Word {
            alphabet_size: self.alphabet_size,
            symbols: self.symbols[lo..hi].to_vec(),
        }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.symbols {
            write!(f, "{s}")?;
            if self.alphabet_size > 10 {
                write!(f, ".")?;
            }
        }
        Ok(())
    }
}

/// Concatenation `uv`, with `|uv| = |u| + |v|` and `κw = wκ = w`.
pub fn concat(u: &Word, v: &Word) -> Result<Word, SymbolicError> {
    if u.alphabet_size != v.alphabet_size {
        return Err(SymbolicError::AlphabetMismatch(
            u.alphabet_size(),
            v.alphabet_size(),
        ));
    }
    let mut symbols = Vec::with_capacity(u.len() + v.len());
    symbols.extend_from_slice(&u.symbols);
    symbols.extend_from_slice(&v.symbols);
    Ok(Word {
        alphabet_size: u.alphabet_size,
        symbols,
    })
}

/// Concatenate several pieces.
pub fn concat_all(parts: &[&Word]) -> Result<Word, SymbolicError> {
    let mut out = parts[0].clone();
    for p in &parts[1..] {
        out = concat(&out, p)?;
    }
    Ok(out)
}

/// All `A^t` words of length `t` in lexicographic order of index sequences.
/// Deterministic across runs; guarded by `budget`.
pub fn enumerate_words(
    alphabet: &Alphabet,
    t: usize,
    budget: Budget,
) -> Result<Vec<Word>, SymbolicError> {
    let total = budget.check(alphabet.size(), t)?;
    let mut out = Vec::with_capacity(total as usize);
    for_each_word(alphabet.size(), t, |sym| {
        out.push(Word::from_slice(alphabet.size(), sym));
    });
    Ok(out)
}

/// Streaming enumeration of `Ω_t` in lexicographic order (odometer; no
/// allocation per word). The caller is responsible for the budget guard.
pub fn for_each_word<F: FnMut(&[Symbol])>(alphabet_size: usize, t: usize, mut f: F) {
    let mut buf = vec![0 as Symbol; t];
    loop {
        f(&buf);
        // increment the odometer, most significant digit first
        let mut i = t;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if (buf[i] as usize) + 1 < alphabet_size {
                buf[i] += 1;
                for b in buf[i + 1..].iter_mut() {
                    *b = 0;
                }
                break;
            }
        }
        if buf.iter().all(|&s| s == 0) {
            return;
        }
    }
}

/// The `idx`-th word of `Ω_t` in lexicographic order (base-`A` digits).
pub fn word_at_index(alphabet_size: usize, t: usize, idx: u64) -> Vec<Symbol> {
    let mut out = vec![0 as Symbol; t];
    let mut rem = idx;
    for i in (0..t).rev() {
        out[i] = (rem % alphabet_size as u64) as Symbol;
        rem /= alphabet_size as u64;
    }
    out
}

/// Lexicographic index of a word (inverse of [`word_at_index`]).
pub fn index_of_word(alphabet_size: usize, symbols: &[Symbol]) -> u64 {
    let mut idx = 0u64;
    for &s in symbols {
        idx = idx * alphabet_size as u64 + s as u64;
    }
    idx
}

/// Which involution family `θ_t` belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvolutionKind {
    /// `θ_t(w)_i = u(w_i)`.
    Letterwise,
    /// `θ_t(w)_i = u(w_{t+1−i})`: reversal composed with a letter map.
    Reversal,
}

/// The family `Θ = (θ_t)` of Definition-style involutions: a letter
/// involution `u` applied either position-wise or to the reversed word.
#[derive(Debug, Clone, PartialEq)]
pub struct Involution {
    pub kind: InvolutionKind,
    letter_map: Vec<Symbol>,
}

impl Involution {
    pub fn new(kind: InvolutionKind, letter_map: Vec<Symbol>) -> Result<Self, SymbolicError> {
        let n = letter_map.len();
        for (i, &m) in letter_map.iter().enumerate() {
            if (m as usize) >= n {
                return Err(SymbolicError::SymbolOutOfRange {
                    index: m as usize,
                    size: n,
                });
            }
            if letter_map[m as usize] as usize != i {
                return Err(SymbolicError::NotInvolution);
            }
        }
        Ok(Involution { kind, letter_map })
    }

    /// Pure reversal (identity letter map).
    pub fn reversal(alphabet_size: usize) -> Self {
        Involution {
            kind: InvolutionKind::Reversal,
            letter_map: (0..alphabet_size as Symbol).collect(),
        }
    }

    /// Position-wise letter map with no reversal.
    pub fn letterwise(letter_map: Vec<Symbol>) -> Result<Self, SymbolicError> {
        Involution::new(InvolutionKind::Letterwise, letter_map)
    }

    /// The swap involution `(x, y) ↦ (y, x)` on the product alphabet `A²`,
    /// letterwise (used by product pairs).
    pub fn product_swap(base_size: usize) -> Self {
        let a = base_size;
        let mut map = vec![0 as Symbol; a * a];
        for x in 0..a {
            for y in 0..a {
                map[x * a + y] = (y * a + x) as Symbol;
            }
        }
        Involution {
            kind: InvolutionKind::Letterwise,
            letter_map: map,
        }
    }

    pub fn alphabet_size(&self) -> usize {
        self.letter_map.len()
    }

    pub fn letter_map(&self) -> &[Symbol] {
        &self.letter_map
    }

    /// Apply `θ_t` to `w`. Applying twice is the identity on every `Ω_t`.
    pub fn apply(&self, w: &Word) -> Word {
        let mut symbols: Vec<Symbol> = match self.kind {
            InvolutionKind::Letterwise => w
                .symbols
                .iter()
                .map(|&s| self.letter_map[s as usize])
                .collect(),
            InvolutionKind::Reversal => w
                .symbols
                .iter()
                .rev()
                .map(|&s| self.letter_map[s as usize])
                .collect(),
        };
        symbols.shrink_to_fit();
        Word {
            alphabet_size: w.alphabet_size,
            symbols,
        }
    }

    /// Apply in place on a raw symbol buffer (hot path for enumerations).
    pub fn apply_into(&self, src: &[Symbol], dst: &mut Vec<Symbol>) {
        dst.clear();
        match self.kind {
            InvolutionKind::Letterwise => {
                dst.extend(src.iter().map(|&s| self.letter_map[s as usize]))
            }
            InvolutionKind::Reversal => {
                dst.extend(src.iter().rev().map(|&s| self.letter_map[s as usize]))
            }
        }
    }
}
