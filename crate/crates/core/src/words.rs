//! Words over the scheduling alphabet `{1, ..., n_mu}` and the products they index.
//!
//! A word is stored oldest letter first, exactly as it is written. The letter
//! `1` always refers to the constant scheduling channel `mu_1 = 1`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A finite, possibly empty, word over the scheduling alphabet.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn letter(sigma: u8) -> Self {
        Word(alloc::vec![sigma])
    }

    pub fn from_letters(letters: &[u8]) -> Self {
        Word(letters.to_vec())
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &Word) -> Word {
        let mut letters = Vec::with_capacity(self.len() + other.len());
        letters.extend_from_slice(&self.0);
        letters.extend_from_slice(&other.0);
        Word(letters)
    }

    /// `sigma` followed by `self`.
    pub fn prepend(&self, sigma: u8) -> Word {
        let mut letters = Vec::with_capacity(self.len() + 1);
        letters.push(sigma);
        letters.extend_from_slice(&self.0);
        Word(letters)
    }

    /// First letter and the remaining suffix.
    pub fn split_first(&self) -> Option<(u8, Word)> {
        self.0
            .split_first()
            .map(|(&s, rest)| (s, Word(rest.to_vec())))
    }

    pub fn check_alphabet(&self, n_mu: usize) -> Result<()> {
        match self.0.iter().find(|&&l| l == 0 || l as usize > n_mu) {
            Some(bad) => Err(Error::InvalidArgument(format!(
                "letter {bad} of word {self} is outside the alphabet 1..={n_mu}"
            ))),
            None => Ok(()),
        }
    }
}

/// Length first, then lexicographic. This is the enumeration order.
impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Digits concatenated (`"21"`), `"e"` for the empty word. Alphabets larger
/// than 9 use dot-separated letters (`"12.3"`).
impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("e");
        }
        let wide = self.0.iter().any(|&l| l > 9);
        for (i, l) in self.0.iter().enumerate() {
            if wide && i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word({self})")
    }
}

impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "e" || s.is_empty() || s == "ε" {
            return Ok(Word::empty());
        }
        let parse = |tok: &str| -> Result<u8> {
            match tok.parse::<u8>() {
                Ok(l) if l > 0 => Ok(l),
                _ => Err(Error::InvalidArgument(format!(
                    "bad letter {tok:?} in word {s:?}"
                ))),
            }
        };
        let letters = if s.contains('.') {
            s.split('.').map(parse).collect::<Result<Vec<_>>>()?
        } else {
            let mut out = Vec::with_capacity(s.len());
            for c in s.chars() {
                let mut buf = [0u8; 4];
                out.push(parse(c.encode_utf8(&mut buf))?);
            }
            out
        };
        Ok(Word(letters))
    }
}

/// All words of length at most `max_len`, ordered by length then lexicographically.
pub fn enumerate_words(n_mu: usize, max_len: usize) -> Vec<Word> {
    let mut out = alloc::vec![Word::empty()];
    if n_mu == 0 {
        return out;
    }
    let mut layer_start = 0;
    for _ in 0..max_len {
        let layer_end = out.len();
        for i in layer_start..layer_end {
            for sigma in 1..=n_mu as u8 {
                let w = out[i].concat(&Word::letter(sigma));
                out.push(w);
            }
        }
        layer_start = layer_end;
    }
    out
}

/// Second moments `p_sigma = E[mu_sigma^2]` of the scheduling channels, with `p_1 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleWeights(Vec<f64>);

impl ScheduleWeights {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidArgument(
                "weights need at least one channel".into(),
            ));
        }
        if p[0] != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "weight of the constant channel must be exactly 1, got {}",
                p[0]
            )));
        }
        if let Some(bad) = p.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "weights must be positive, got {bad}"
            )));
        }
        Ok(ScheduleWeights(p))
    }

    /// Unit weights for every channel.
    pub fn uniform(n_mu: usize) -> Self {
        ScheduleWeights(alloc::vec![1.0; n_mu.max(1)])
    }

    pub fn n_mu(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `p_sigma` for a 1-based letter.
    pub fn get(&self, sigma: u8) -> f64 {
        self.0[sigma as usize - 1]
    }

    /// `p_w`, the product of per-letter weights; `p_e = 1`.
    pub fn of_word(&self, w: &Word) -> f64 {
        w.letters().iter().map(|&s| self.get(s)).product()
    }
}

pub fn p_of_word(w: &Word, weights: &ScheduleWeights) -> f64 {
    weights.of_word(w)
}

/// `mu_w(t)`: product of scheduling samples along `w`, last letter at index `t`.
///
/// `mu` holds one row per sample and one column per channel; `t` is a 0-based row.
pub fn mu_product(w: &Word, mu: &DMatrix<f64>, t: usize) -> Result<f64> {
    let k = w.len();
    if t >= mu.nrows() || t + 1 < k {
        return Err(Error::Range {
            index: t,
            len: mu.nrows(),
        });
    }
    let start = t + 1 - k;
    let mut prod = 1.0;
    for (j, &sigma) in w.letters().iter().enumerate() {
        let col = sigma as usize - 1;
        if col >= mu.ncols() {
            return Err(Error::InvalidArgument(format!(
                "letter {sigma} exceeds {} scheduling channels",
                mu.ncols()
            )));
        }
        prod *= mu[(start + j, col)];
    }
    Ok(prod)
}

/// `A_w = A_{sigma_k} ... A_{sigma_1}` for `w = sigma_1 ... sigma_k`; identity for the empty word.
pub fn word_matrix_product(w: &Word, family: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let n = family.first().map_or(0, |m| m.nrows());
    if let Some(bad) = family.iter().find(|m| m.nrows() != n || m.ncols() != n) {
        return Err(Error::Shape(format!(
            "family members must all be {n}x{n}, found {}x{}",
            bad.nrows(),
            bad.ncols()
        )));
    }
    w.check_alphabet(family.len())?;
    let mut acc = DMatrix::identity(n, n);
    for &sigma in w.letters() {
        acc = &family[sigma as usize - 1] * acc;
    }
    Ok(acc)
}

/// Renders a list of words as a comma-separated string.
pub fn join_words(words: &[Word]) -> String {
    let mut s = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&format!("{w}"));
    }
    s
}
