//! Row/column selections and the reduced Hankel matrices they pick out of a
//! Markov function.
//!
//! A selection of dimension `n` holds `n` row entries `(u_i, k_i)` and `n`
//! column entries `(σ_j, v_j, l_j)`. Entry `(i, j)` of the Hankel matrix is
//! `[M(σ_j v_j u_i)]_{k_i, l_j}`; indices are 1-based like the letters.
//!
//! Empty words are accepted for `u_i` and `v_j`. The Hankel factorization
//! `M(σ v u) = C A_u A_v B_σ` still holds with `A_ε = I`, so Ho-Kalman
//! remains exact.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::table::WordTable;
use crate::word::Word;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RowIndex {
    pub word: Word,
    /// Output row, 1-based.
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnIndex {
    pub mode: usize,
    pub word: Word,
    /// Markov-parameter column, 1-based.
    pub col: usize,
}

impl ColumnIndex {
    /// The word `σ_j v_j`.
    pub fn prefix(&self) -> Word {
        Word::letter(self.mode).concat(&self.word)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Selection {
    pub alpha: Vec<RowIndex>,
    pub beta: Vec<ColumnIndex>,
}

impl Selection {
    pub fn new(alpha: Vec<RowIndex>, beta: Vec<ColumnIndex>) -> Self {
        Selection { alpha, beta }
    }

    /// Shorthand constructor: `alpha` as `(word, row)`, `beta` as `(mode, word, col)`.
    pub fn from_parts(alpha: &[(&str, usize)], beta: &[(usize, &str, usize)]) -> Result<Self> {
        let alpha = alpha
            .iter()
            .map(|(w, k)| Ok(RowIndex { word: w.parse()?, row: *k }))
            .collect::<Result<Vec<_>>>()?;
        let beta = beta
            .iter()
            .map(|(s, v, l)| {
                Ok(ColumnIndex {
                    mode: *s,
                    word: v.parse()?,
                    col: *l,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Selection { alpha, beta })
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// Checks the selection against `modes` letters, `n_y` rows and `n_cols`
    /// Markov-parameter columns.
    pub fn validate(&self, modes: usize, n_y: usize, n_cols: usize) -> Result<()> {
        let n = self.alpha.len();
        if n == 0 || self.beta.len() != n {
            return Err(Error::InvalidSelection(format!(
                "|alpha| = {} and |beta| = {} must be equal and positive",
                self.alpha.len(),
                self.beta.len()
            )));
        }
        for r in &self.alpha {
            r.word.check(modes)?;
            if r.word.len() > n {
                return Err(Error::InvalidSelection(format!(
                    "row word {} longer than n = {n}",
                    r.word
                )));
            }
            if r.row == 0 || r.row > n_y {
                return Err(Error::InvalidSelection(format!(
                    "row index {} outside 1..={n_y}",
                    r.row
                )));
            }
        }
        for c in &self.beta {
            if c.mode == 0 || c.mode > modes {
                return Err(Error::InvalidMode {
                    mode: c.mode,
                    modes,
                });
            }
            c.word.check(modes)?;
            if c.word.len() > n {
                return Err(Error::InvalidSelection(format!(
                    "column word {} longer than n = {n}",
                    c.word
                )));
            }
            if c.col == 0 || c.col > n_cols {
                return Err(Error::InvalidSelection(format!(
                    "column index {} outside 1..={n_cols}",
                    c.col
                )));
            }
        }
        Ok(())
    }

    /// Longest word in [`required_words`].
    pub fn max_word_len(&self) -> usize {
        let u = self.alpha.iter().map(|r| r.word.len()).max().unwrap_or(0);
        let v = self.beta.iter().map(|c| c.word.len()).max().unwrap_or(0);
        u + v + 2
    }
}

/// Words whose Markov values appear in any of the four Hankel matrices:
/// `u_i, σ_j v_j, σ_j v_j u_i, σ_j v_j σ u_i, σ u_i`. Never contains `ε`.
pub fn required_words(sel: &Selection, modes: usize) -> BTreeSet<Word> {
    let mut out = BTreeSet::new();
    for r in &sel.alpha {
        out.insert(r.word.clone());
        for sigma in 1..=modes {
            out.insert(Word::letter(sigma).concat(&r.word));
        }
    }
    for c in &sel.beta {
        let prefix = c.prefix();
        out.insert(prefix.clone());
        for r in &sel.alpha {
            out.insert(prefix.concat(&r.word));
            for sigma in 1..=modes {
                out.insert(prefix.concat(&Word::letter(sigma)).concat(&r.word));
            }
        }
    }
    out.remove(&Word::empty());
    out
}

/// The four Hankel matrices of one selection.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelSet {
    /// `n x n`
    pub h: DMatrix<f64>,
    /// Shifted matrices, one `n x n` per mode.
    pub shifted: Vec<DMatrix<f64>>,
    /// One `n x n_cols` per mode.
    pub input: Vec<DMatrix<f64>>,
    /// `n_y x n`
    pub output: DMatrix<f64>,
}

/// Assembles the Hankel matrices of `sel` from the Markov values in `markov`.
pub fn build_hankel(sel: &Selection, markov: &WordTable, modes: usize) -> Result<HankelSet> {
    let (n_y, n_cols) = markov.shape();
    sel.validate(modes, n_y, n_cols)?;
    let n = sel.dim();
    let lookup = |w: &Word| markov.get_or_err(w);

    let mut h = DMatrix::zeros(n, n);
    let mut shifted = vec![DMatrix::zeros(n, n); modes];
    let mut input = vec![DMatrix::zeros(n, n_cols); modes];
    let mut output = DMatrix::zeros(n_y, n);

    for (j, c) in sel.beta.iter().enumerate() {
        let prefix = c.prefix();
        let l = c.col - 1;
        for (i, r) in sel.alpha.iter().enumerate() {
            let k = r.row - 1;
            h[(i, j)] = lookup(&prefix.concat(&r.word))?[(k, l)];
            for (sigma, hs) in shifted.iter_mut().enumerate() {
                let w = prefix.concat(&Word::letter(sigma + 1)).concat(&r.word);
                hs[(i, j)] = lookup(&w)?[(k, l)];
            }
        }
        let m = lookup(&prefix)?;
        output.column_mut(j).copy_from(&m.column(l));
    }
    for (i, r) in sel.alpha.iter().enumerate() {
        let k = r.row - 1;
        for (sigma, hi) in input.iter_mut().enumerate() {
            let m = lookup(&Word::letter(sigma + 1).concat(&r.word))?;
            hi.row_mut(i).copy_from(&m.row(k));
        }
    }
    Ok(HankelSet {
        h,
        shifted,
        input,
        output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar_markov(a: f64, b: f64, c: f64, max_len: usize) -> WordTable {
        // M(w) = c a^{|w|-1} b for a one-mode scalar system
        WordTable::from_fn(1, 1, &Word::all_up_to(1, 1, max_len), |w| {
            Ok(DMatrix::from_element(1, 1, c * a.powi(w.len() as i32 - 1) * b))
        })
        .unwrap()
    }

    fn one_by_one() -> Selection {
        Selection::from_parts(&[("1", 1)], &[(1, "1", 1)]).unwrap()
    }

    #[test]
    fn required_words_single_mode() {
        let got: Vec<String> = required_words(&one_by_one(), 1)
            .iter()
            .map(|w| w.to_string())
            .collect();
        assert_eq!(got, ["1", "11", "111", "1111"]);
    }

    #[test]
    fn required_words_two_modes() {
        let words = required_words(&one_by_one(), 2);
        for w in ["1121", "1", "11", "21", "111", "1111"] {
            assert!(words.contains(&w.parse().unwrap()), "missing {w}");
        }
        assert!(!words.contains(&Word::empty()));
    }

    #[test]
    fn required_words_drop_empty_row_word() {
        let sel = Selection::from_parts(&[("e", 1)], &[(2, "e", 1)]).unwrap();
        let words = required_words(&sel, 2);
        assert!(!words.contains(&Word::empty()));
        assert!(words.contains(&"2".parse().unwrap()));
        assert!(words.contains(&"21".parse().unwrap()));
    }

    #[test]
    fn scalar_hankel_values() {
        let m = scalar_markov(0.5, 1.0, 1.0, 4);
        let hs = build_hankel(&one_by_one(), &m, 1).unwrap();
        // H uses M("111") = c a^2 b, the output row M("11") = c a b
        assert!((hs.h[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((hs.output[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((hs.shifted[0][(0, 0)] - 0.125).abs() < 1e-15);
        assert!((hs.input[0][(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn missing_word_is_named() {
        let m = scalar_markov(0.5, 1.0, 1.0, 3);
        match build_hankel(&one_by_one(), &m, 1) {
            Err(Error::MissingMarkovParameter(w)) => assert_eq!(w.to_string(), "1111"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_markov_gives_zero_hankel() {
        let sel = Selection::from_parts(&[("11", 1), ("1", 1), ("e", 1)], &[(2, "e", 1), (1, "2", 1), (1, "1", 1)])
            .unwrap();
        let words = required_words(&sel, 2);
        let m = WordTable::from_fn(1, 2, &words, |_| Ok(DMatrix::zeros(1, 2))).unwrap();
        let hs = build_hankel(&sel, &m, 2).unwrap();
        assert_eq!(hs.h, DMatrix::zeros(3, 3));
        assert!(hs.shifted.iter().all(|x| x.amax() == 0.0));
        assert!(hs.input.iter().all(|x| x.amax() == 0.0));
        assert_eq!(hs.output.amax(), 0.0);
    }

    #[test]
    fn validation_errors() {
        let sel = Selection::from_parts(&[("1", 2)], &[(1, "1", 1)]).unwrap();
        assert!(sel.validate(1, 1, 1).is_err());
        let sel = Selection::from_parts(&[("11", 1)], &[(1, "1", 1)]).unwrap();
        assert!(sel.validate(1, 1, 1).is_err());
        let sel = Selection::from_parts(&[("1", 1)], &[(3, "1", 1)]).unwrap();
        assert!(sel.validate(2, 1, 1).is_err());
    }

    proptest! {
        #[test]
        fn hankel_is_linear(vals in prop::collection::vec(-5.0f64..5.0, 64), scale in -3.0f64..3.0) {
            let sel = Selection::from_parts(&[("1", 1), ("2", 1)], &[(1, "1", 1), (2, "e", 2)]).unwrap();
            let words: Vec<Word> = required_words(&sel, 2).into_iter().collect();
            let m1 = WordTable::from_fn(1, 2, &words, |w| {
                let i = words.iter().position(|x| x == w).unwrap();
                Ok(DMatrix::from_row_slice(1, 2, &vals[2 * i % 64..2 * i % 64 + 2]))
            }).unwrap();
            let m2 = m1.map(1, 2, |w, m| Ok(m * scale + DMatrix::from_element(1, 2, w.len() as f64))).unwrap();
            let sum = WordTable::from_fn(1, 2, &words, |w| Ok(m1.get(w).unwrap() + m2.get(w).unwrap())).unwrap();
            let (h1, h2, hs) = (
                build_hankel(&sel, &m1, 2).unwrap(),
                build_hankel(&sel, &m2, 2).unwrap(),
                build_hankel(&sel, &sum, 2).unwrap(),
            );
            prop_assert!((&hs.h - (&h1.h + &h2.h)).amax() < 1e-12);
            prop_assert!((&hs.output - (&h1.output + &h2.output)).amax() < 1e-12);
            for s in 0..2 {
                prop_assert!((&hs.shifted[s] - (&h1.shifted[s] + &h2.shifted[s])).amax() < 1e-12);
                prop_assert!((&hs.input[s] - (&h1.input[s] + &h2.input[s])).amax() < 1e-12);
            }
        }
    }
}
