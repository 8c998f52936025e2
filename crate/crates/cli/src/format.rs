//! File formats: TOML for models, selections and covariance tables, CSV for
//! time series. Matrices are row-major nested arrays.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use lssid::covariance::CovarianceTable;
use lssid::selection::{ColumnIndex, RowIndex};
use lssid::{Dataset, Selection, SwitchedModel, Word, WordTable};
use nalgebra::DMatrix;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &Rows, what: &str) -> CliResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Config(format!("{what}: rows have different lengths")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn to_toml<T: Serialize>(value: &T) -> CliResult<String> {
    toml::to_string(value).map_err(|e| CliError::Config(format!("cannot serialize: {e}")))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_text(path, &to_toml(value)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeFile {
    pub a: Rows,
    pub b: Rows,
    pub k: Rows,
    /// `p_σ E[v vᵀ | σ]`.
    pub q_v: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub p: Vec<f64>,
    pub c: Rows,
    pub d: Rows,
    pub f: Rows,
    pub q_u: Rows,
    pub mode: Vec<ModeFile>,
}

impl ModelFile {
    pub fn from_model(m: &SwitchedModel) -> Self {
        ModelFile {
            p: m.p.clone(),
            c: to_rows(&m.c),
            d: to_rows(&m.d),
            f: to_rows(&m.f),
            q_u: to_rows(&m.q_u),
            mode: (0..m.modes())
                .map(|s| ModeFile {
                    a: to_rows(&m.a[s]),
                    b: to_rows(&m.b[s]),
                    k: to_rows(&m.k[s]),
                    q_v: to_rows(&m.q_v[s]),
                })
                .collect(),
        }
    }

    pub fn to_model(&self) -> CliResult<SwitchedModel> {
        let per_mode = |f: fn(&ModeFile) -> &Rows, name: &str| -> CliResult<Vec<DMatrix<f64>>> {
            self.mode
                .iter()
                .enumerate()
                .map(|(s, m)| from_rows(f(m), &format!("mode {} {name}", s + 1)))
                .collect()
        };
        let m = SwitchedModel {
            a: per_mode(|m| &m.a, "a")?,
            b: per_mode(|m| &m.b, "b")?,
            k: per_mode(|m| &m.k, "k")?,
            q_v: per_mode(|m| &m.q_v, "q_v")?,
            c: from_rows(&self.c, "c")?,
            d: from_rows(&self.d, "d")?,
            f: from_rows(&self.f, "f")?,
            q_u: from_rows(&self.q_u, "q_u")?,
            p: self.p.clone(),
        };
        m.validate_shapes()?;
        Ok(m)
    }
}

pub fn read_model(path: &Path) -> CliResult<SwitchedModel> {
    read_toml::<ModelFile>(path)?.to_model()
}

pub fn write_model(path: &Path, m: &SwitchedModel) -> CliResult<()> {
    write_toml(path, &ModelFile::from_model(m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowEntry {
    pub word: String,
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnEntry {
    pub mode: usize,
    pub word: String,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionEntry {
    pub alpha: Vec<RowEntry>,
    pub beta: Vec<ColumnEntry>,
}

impl SelectionEntry {
    pub fn from_selection(sel: &Selection) -> Self {
        SelectionEntry {
            alpha: sel
                .alpha
                .iter()
                .map(|r| RowEntry {
                    word: r.word.to_string(),
                    row: r.row,
                })
                .collect(),
            beta: sel
                .beta
                .iter()
                .map(|c| ColumnEntry {
                    mode: c.mode,
                    word: c.word.to_string(),
                    col: c.col,
                })
                .collect(),
        }
    }

    pub fn to_selection(&self) -> CliResult<Selection> {
        let alpha = self
            .alpha
            .iter()
            .map(|r| Ok(RowIndex { word: r.word.parse()?, row: r.row }))
            .collect::<CliResult<Vec<_>>>()?;
        let beta = self
            .beta
            .iter()
            .map(|c| {
                Ok(ColumnIndex {
                    mode: c.mode,
                    word: c.word.parse()?,
                    col: c.col,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(Selection::new(alpha, beta))
    }
}

/// Joint selection and, optionally, a separate one for the deterministic
/// part; the joint one is reused when `selection_bar` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionFile {
    pub selection: SelectionEntry,
    pub selection_bar: Option<SelectionEntry>,
}

impl SelectionFile {
    pub fn new(sel: &Selection, bar: &Selection) -> Self {
        SelectionFile {
            selection: SelectionEntry::from_selection(sel),
            selection_bar: Some(SelectionEntry::from_selection(bar)),
        }
    }

    pub fn selections(&self) -> CliResult<(Selection, Selection)> {
        let sel = self.selection.to_selection()?;
        let bar = match &self.selection_bar {
            Some(b) => b.to_selection()?,
            None => sel.clone(),
        };
        Ok((sel, bar))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceFile {
    pub p: Vec<f64>,
    pub q_u: Rows,
    pub n_samples: Option<usize>,
    pub degenerate: Vec<String>,
    pub t_yy: Vec<Rows>,
    pub lambda_yu: BTreeMap<String, Rows>,
    pub lambda_yy: BTreeMap<String, Rows>,
}

fn table_to_map(t: &WordTable) -> BTreeMap<String, Rows> {
    t.iter().map(|(w, m)| (w.to_string(), to_rows(m))).collect()
}

fn map_to_table(map: &BTreeMap<String, Rows>, rows: usize, cols: usize, what: &str) -> CliResult<WordTable> {
    let mut t = WordTable::new(rows, cols);
    for (key, m) in map {
        let w: Word = key.parse()?;
        t.insert(w, from_rows(m, &format!("{what}[{key}]"))?)?;
    }
    Ok(t)
}

impl CovarianceFile {
    pub fn from_table(c: &CovarianceTable) -> Self {
        CovarianceFile {
            p: c.p.clone(),
            q_u: to_rows(&c.q_u),
            n_samples: c.n_samples,
            degenerate: c.degenerate.iter().map(Word::to_string).collect(),
            t_yy: c.t_yy.iter().map(to_rows).collect(),
            lambda_yu: table_to_map(&c.lambda_yu),
            lambda_yy: table_to_map(&c.lambda_yy),
        }
    }

    pub fn to_table(&self) -> CliResult<CovarianceTable> {
        let q_u = from_rows(&self.q_u, "q_u")?;
        let t_yy = self
            .t_yy
            .iter()
            .enumerate()
            .map(|(s, m)| from_rows(m, &format!("t_yy[{}]", s + 1)))
            .collect::<CliResult<Vec<_>>>()?;
        let ny = t_yy.first().map_or(0, |m| m.nrows());
        Ok(CovarianceTable {
            lambda_yu: map_to_table(&self.lambda_yu, ny, q_u.nrows(), "lambda_yu")?,
            lambda_yy: map_to_table(&self.lambda_yy, ny, ny, "lambda_yy")?,
            t_yy,
            q_u,
            p: self.p.clone(),
            n_samples: self.n_samples,
            degenerate: self.degenerate.iter().map(|w| w.parse()).collect::<Result<_, _>>()?,
        })
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            _ => unreachable!(),
        }
    } else {
        CliError::Config(format!("{}: {e}", path.display()))
    }
}

/// Columns `t, q, u_1.., y_1..`.
pub fn write_dataset(path: &Path, d: &Dataset) -> CliResult<()> {
    let mut header = vec!["t".to_string(), "q".to_string()];
    header.extend((1..=d.n_u()).map(|i| format!("u_{i}")));
    header.extend((1..=d.n_y()).map(|i| format!("y_{i}")));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for t in 0..d.len() {
        let mut rec = vec![(d.t0 + t as i64).to_string(), d.q[t].to_string()];
        rec.extend(d.u.row(t).iter().map(f64::to_string));
        rec.extend(d.y.row(t).iter().map(f64::to_string));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
    write_text(path, &String::from_utf8(bytes).expect("ascii"))
}

pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let text = read_text(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    if cols.len() < 4 || cols[0] != "t" || cols[1] != "q" {
        return Err(bad("header must start with t,q followed by u_i and y_i columns".into()));
    }
    let nu = cols.iter().filter(|c| c.starts_with("u_")).count();
    let ny = cols.iter().filter(|c| c.starts_with("y_")).count();
    let expected: Vec<String> = ["t".to_string(), "q".to_string()]
        .into_iter()
        .chain((1..=nu).map(|i| format!("u_{i}")))
        .chain((1..=ny).map(|i| format!("y_{i}")))
        .collect();
    if cols != expected {
        return Err(bad(format!("header {cols:?} is not of the form {expected:?}")));
    }
    let (mut t0, mut q, mut u, mut y) = (None, Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let field = |i: usize| -> CliResult<&str> {
            rec.get(i)
                .map(str::trim)
                .ok_or_else(|| bad(format!("line {}: missing column {}", line + 2, expected[i])))
        };
        let num = |i: usize| -> CliResult<f64> {
            field(i)?
                .parse()
                .map_err(|_| bad(format!("line {}: column {} is not a number", line + 2, expected[i])))
        };
        if t0.is_none() {
            t0 = Some(field(0)?.parse::<i64>().map_err(|_| bad(format!("line 2: bad time stamp"))))
                .transpose()?;
        }
        q.push(
            field(1)?
                .parse::<usize>()
                .map_err(|_| bad(format!("line {}: mode is not a positive integer", line + 2)))?,
        );
        for i in 0..nu {
            u.push(num(2 + i)?);
        }
        for i in 0..ny {
            y.push(num(2 + nu + i)?);
        }
    }
    let n = q.len();
    Ok(Dataset::new(
        DMatrix::from_row_slice(n, ny, &y),
        DMatrix::from_row_slice(n, nu, &u),
        q,
        t0.unwrap_or(0),
    )?)
}

/// Columns `t, <prefix>_1..`.
pub fn write_series(path: &Path, t0: i64, prefix: &str, m: &DMatrix<f64>) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((1..=m.ncols()).map(|i| format!("{prefix}_{i}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for t in 0..m.nrows() {
        let mut rec = vec![(t0 + t as i64).to_string()];
        rec.extend(m.row(t).iter().map(f64::to_string));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
    write_text(path, &String::from_utf8(bytes).expect("ascii"))
}

/// The value columns of a file written by [`write_series`].
pub fn read_series(path: &Path) -> CliResult<DMatrix<f64>> {
    let text = read_text(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let width = r.headers().map_err(|e| csv_error(path, e))?.len();
    if width < 2 {
        return Err(CliError::Config(format!("{}: expected t and value columns", path.display())));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        for v in rec.iter().skip(1) {
            values.push(v.trim().parse::<f64>().map_err(|_| {
                CliError::Config(format!("{}: line {}: not a number", path.display(), line + 2))
            })?);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, width - 1, &values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use lssid::benchmark::{reference_selection, two_mode_system};

    #[test]
    fn model_text_is_exact() {
        let m = two_mode_system(1.5);
        let text = to_toml(&ModelFile::from_model(&m)).unwrap();
        let back: ModelFile = toml::from_str(&text).unwrap();
        assert_eq!(back.to_model().unwrap(), m);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(matches!(from_rows(&vec![vec![1.0, 2.0], vec![3.0]], "x"), Err(CliError::Config(_))));
    }

    #[test]
    fn missing_bar_reuses_joint_selection() {
        let sel = reference_selection();
        let file = SelectionFile {
            selection: SelectionEntry::from_selection(&sel),
            selection_bar: None,
        };
        let text = to_toml(&file).unwrap();
        assert!(text.contains("word = \"e\""));
        let (a, b) = toml::from_str::<SelectionFile>(&text).unwrap().selections().unwrap();
        assert_eq!((a, b), (sel.clone(), sel));
    }

    #[test]
    fn dataset_header_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "t,q,y_1,u_1\n0,1,0.5,1\n").unwrap();
        assert!(matches!(read_dataset(&path), Err(CliError::Config(_))));
        std::fs::write(&path, "t,q,u_1,y_1\n5,1,0.5,1\n6,2,x,1\n").unwrap();
        let err = read_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }
}
