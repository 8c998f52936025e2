use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::word::Word;

/// Word-indexed family of equally shaped matrices.
///
/// Shapes are checked on insertion. Lookups of absent words return `None`
/// (or [`Error::MissingMarkovParameter`] through [`get_or_err`](Self::get_or_err)),
/// never a default value.
#[derive(Debug, Clone, PartialEq)]
pub struct WordTable {
    rows: usize,
    cols: usize,
    entries: BTreeMap<Word, DMatrix<f64>>,
}

impl WordTable {
    pub fn new(rows: usize, cols: usize) -> Self {
        WordTable {
            rows,
            cols,
            entries: BTreeMap::new(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn insert(&mut self, w: Word, m: DMatrix<f64>) -> Result<()> {
        if m.shape() != (self.rows, self.cols) {
            return Err(Error::Dimension(format!(
                "table entry for word {w} is {}x{}, expected {}x{}",
                m.nrows(),
                m.ncols(),
                self.rows,
                self.cols
            )));
        }
        self.entries.insert(w, m);
        Ok(())
    }

    pub fn get(&self, w: &Word) -> Option<&DMatrix<f64>> {
        self.entries.get(w)
    }

    pub fn get_or_err(&self, w: &Word) -> Result<&DMatrix<f64>> {
        self.entries
            .get(w)
            .ok_or_else(|| Error::MissingMarkovParameter(w.clone()))
    }

    pub fn contains(&self, w: &Word) -> bool {
        self.entries.contains_key(w)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in length-then-lex word order.
    pub fn iter(&self) -> impl Iterator<Item = (&Word, &DMatrix<f64>)> {
        self.entries.iter()
    }

    pub fn words(&self) -> impl Iterator<Item = &Word> {
        self.entries.keys()
    }

    /// Builds a table by evaluating `f` on each word.
    pub fn from_fn<'a, I, F>(rows: usize, cols: usize, words: I, mut f: F) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Word>,
        F: FnMut(&Word) -> Result<DMatrix<f64>>,
    {
        let mut t = WordTable::new(rows, cols);
        for w in words {
            let m = f(w)?;
            t.insert(w.clone(), m)?;
        }
        Ok(t)
    }

    /// Entry-wise map into a table of possibly different shape.
    pub fn map<F>(&self, rows: usize, cols: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&Word, &DMatrix<f64>) -> Result<DMatrix<f64>>,
    {
        let mut t = WordTable::new(rows, cols);
        for (w, m) in &self.entries {
            t.insert(w.clone(), f(w, m)?)?;
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_shape_at_insert() {
        let mut t = WordTable::new(1, 2);
        assert!(t.insert(Word::letter(1), DMatrix::zeros(2, 1)).is_err());
        assert!(t.insert(Word::letter(1), DMatrix::zeros(1, 2)).is_ok());
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn missing_word_is_explicit() {
        let t = WordTable::new(1, 1);
        assert!(t.get(&Word::letter(2)).is_none());
        assert!(matches!(
            t.get_or_err(&Word::letter(2)),
            Err(Error::MissingMarkovParameter(w)) if w == Word::letter(2)
        ));
    }
}
