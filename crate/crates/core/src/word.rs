//! Words over the mode alphabet `{1..D}`.
//!
//! Letters are stored 1-based. Words order by length first, then
//! lexicographically, which is the enumeration order used everywhere a
//! deterministic walk over words is needed.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Word(Vec<usize>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn new(letters: Vec<usize>) -> Self {
        Word(letters)
    }

    pub fn letter(mode: usize) -> Self {
        Word(vec![mode])
    }

    pub fn letters(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<usize> {
        self.0.first().copied()
    }

    /// Splits `w = σ s` into the first letter and the remainder.
    pub fn split_first(&self) -> Option<(usize, Word)> {
        self.0
            .split_first()
            .map(|(&sigma, rest)| (sigma, Word(rest.to_vec())))
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut letters = Vec::with_capacity(self.len() + other.len());
        letters.extend_from_slice(&self.0);
        letters.extend_from_slice(&other.0);
        Word(letters)
    }

    /// Checks every letter against an alphabet of `modes` letters.
    pub fn check(&self, modes: usize) -> Result<()> {
        match self.0.iter().find(|&&l| l == 0 || l > modes) {
            Some(&mode) => Err(Error::InvalidMode { mode, modes }),
            None => Ok(()),
        }
    }

    /// All words of length exactly `len` over `{1..modes}`, in lexicographic order.
    pub fn all_of_length(modes: usize, len: usize) -> Vec<Word> {
        let mut out = vec![Word::empty()];
        for _ in 0..len {
            out = out
                .iter()
                .flat_map(|w| (1..=modes).map(move |m| w.concat(&Word::letter(m))))
                .collect();
        }
        out
    }

    /// All words with `min_len <= |w| <= max_len`, length-then-lex ordered.
    pub fn all_up_to(modes: usize, min_len: usize, max_len: usize) -> Vec<Word> {
        (min_len..=max_len)
            .flat_map(|len| Word::all_of_length(modes, len))
            .collect()
    }
}

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

impl fmt::Display for Word {
    /// `e` for the empty word, a digit string when every letter is a single
    /// digit, comma-separated integers otherwise.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "e");
        }
        if self.0.iter().all(|&l| l <= 9) {
            for l in &self.0 {
                write!(f, "{l}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
            write!(f, "{}", parts.join(","))
        }
    }
}

impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "e" || s == "eps" || s == "ε" {
            return Ok(Word::empty());
        }
        let bad = || Error::InvalidSelection(format!("cannot parse word '{s}'"));
        let letters = if s.contains(',') {
            s.split(',')
                .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?
        } else {
            s.chars()
                .map(|c| c.to_digit(10).map(|d| d as usize).ok_or_else(bad))
                .collect::<Result<Vec<_>>>()?
        };
        if letters.contains(&0) {
            return Err(bad());
        }
        Ok(Word(letters))
    }
}

/// `A_w = A_{σ_k} ... A_{σ_1}` for `w = σ_1 ... σ_k`; the identity for `ε`.
pub fn matrix_product_along_word(matrices: &[DMatrix<f64>], w: &Word) -> Result<DMatrix<f64>> {
    w.check(matrices.len())?;
    let n = matrices.first().map_or(0, |m| m.nrows());
    let mut out = DMatrix::identity(n, n);
    for &letter in w.letters() {
        out = &matrices[letter - 1] * out;
    }
    Ok(out)
}

/// Validates a probability vector: positive entries summing to one.
pub fn check_probabilities(p: &[f64], tol: f64) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidProbability("empty probability vector".into()));
    }
    if let Some(bad) = p.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidProbability(format!(
            "entry {bad} is not positive"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::InvalidProbability(format!("entries sum to {sum}")));
    }
    Ok(())
}

/// `p_w = p_{σ_1} ... p_{σ_k}`, with `p_ε = 1`.
pub fn word_probability(p: &[f64], w: &Word) -> Result<f64> {
    if let Some(bad) = p.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::InvalidProbability(format!(
            "entry {bad} is not positive"
        )));
    }
    w.check(p.len())?;
    Ok(w.letters().iter().map(|&l| p[l - 1]).product())
}
