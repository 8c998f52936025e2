//! Identification from a single time series, the innovation predictor,
//! fit metrics and the consistency experiment.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::covariance::{
    cross_covariances, empirical_covariances, least_squares_covariances, CovarianceTable, CovarianceWords,
};
use crate::error::{Error, Result, Stage};
use crate::exec::Execution;
use crate::linalg;
use crate::model::{find_isomorphism, InnovationModel, SwitchedModel};
use crate::realize::{
    self, covariance_realization, ho_kalman_full, joint_markov_table, lambda_ydyd, psi_uy, search_selection,
    FixedPointOptions, RealizationDiagnostics, RealizationOptions, SearchOptions,
};
use crate::selection::Selection;
use crate::simulate::{simulate, Dataset, SimConfig};
use crate::word::Word;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    Direct,
    #[default]
    LeastSquares,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectionSpec {
    Explicit(Selection),
    Search,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModeProbabilities {
    Known(Vec<f64>),
    /// Observed mode frequencies over the given number of modes.
    Empirical { modes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentConfig {
    pub n_x: usize,
    pub n_bar: usize,
    /// Selection for the joint Markov function.
    pub selection: SelectionSpec,
    /// Selection for the deterministic part.
    pub selection_bar: SelectionSpec,
    pub estimator: Estimator,
    pub probabilities: ModeProbabilities,
    pub realization: RealizationOptions,
    pub search: SearchOptions,
}

impl IdentConfig {
    pub fn new(n_x: usize, p: Vec<f64>) -> Self {
        IdentConfig {
            n_x,
            n_bar: n_x,
            selection: SelectionSpec::Search,
            selection_bar: SelectionSpec::Search,
            estimator: Estimator::default(),
            probabilities: ModeProbabilities::Known(p),
            realization: RealizationOptions::default(),
            search: SearchOptions::default(),
        }
    }

    /// Explicit selections `sel` (joint) and `sel_bar` (deterministic part).
    pub fn with_selections(mut self, sel: Selection, sel_bar: Selection) -> Self {
        self.n_x = sel.dim();
        self.n_bar = sel_bar.dim();
        self.selection = SelectionSpec::Explicit(sel);
        self.selection_bar = SelectionSpec::Explicit(sel_bar);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.n_bar == 0 {
            return Err(Error::InvalidSelection("target dimensions must be positive".into()));
        }
        Ok(())
    }

    fn search_len(&self) -> usize {
        self.search.max_word_len.unwrap_or(self.n_x.max(self.n_bar)).max(1)
    }
}

/// Post-identification hook, e.g. for a prediction-error refinement.
pub trait Refinement {
    fn refine(&self, model: InnovationModel, data: &Dataset) -> Result<InnovationModel>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentDiagnostics {
    pub selection: Selection,
    pub selection_bar: Selection,
    pub p: Vec<f64>,
    pub estimator: Estimator,
    pub n_samples: Option<usize>,
    pub degenerate_words: Vec<Word>,
    /// Max-norm residual of the regression normal equations.
    pub ls_identity_residual: Option<f64>,
    pub realization: RealizationDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identified {
    pub model: InnovationModel,
    pub covariances: CovarianceTable,
    pub diagnostics: IdentDiagnostics,
}

fn resolve_p(cfg: &IdentConfig, data: &Dataset) -> Result<Vec<f64>> {
    match &cfg.probabilities {
        ModeProbabilities::Known(p) => Ok(p.clone()),
        ModeProbabilities::Empirical { modes } => {
            let f = data.mode_frequencies(*modes);
            if f.iter().any(|&x| x <= 0.0) {
                return Err(Error::InsufficientData(format!(
                    "some of the {modes} modes never occur in the data"
                )));
            }
            Ok(f)
        }
    }
}

fn words_for(cfg: &IdentConfig, modes: usize) -> CovarianceWords {
    match (&cfg.selection, &cfg.selection_bar) {
        (SelectionSpec::Explicit(sel), SelectionSpec::Explicit(bar)) => {
            CovarianceWords::for_selections(sel, bar, modes)
        }
        _ => CovarianceWords::all_up_to(modes, 2 * cfg.search_len() + 2),
    }
}

/// Covariance estimation followed by covariance realization.
pub fn identify(data: &Dataset, cfg: &IdentConfig) -> Result<Identified> {
    cfg.validate()?;
    let p = resolve_p(cfg, data).map_err(|e| e.at(Stage::Estimation))?;
    let words = words_for(cfg, p.len());
    let (cov, ls_residual) = match cfg.estimator {
        Estimator::Direct => (empirical_covariances(data, &p, &words), None),
        Estimator::LeastSquares => match least_squares_covariances(data, &p, &words) {
            Ok(ls) => (Ok(ls.table), Some(ls.identity_residual)),
            Err(e) => (Err(e), None),
        },
    };
    let cov = cov.map_err(|e| e.at(Stage::Estimation))?;
    let mut out = identify_from_covariances(&cov, cfg)?;
    out.diagnostics.estimator = cfg.estimator;
    out.diagnostics.ls_identity_residual = ls_residual;
    Ok(out)
}

pub fn identify_with_refinement(data: &Dataset, cfg: &IdentConfig, hook: &dyn Refinement) -> Result<Identified> {
    let mut out = identify(data, cfg)?;
    out.model = hook.refine(out.model, data).map_err(|e| e.at(Stage::Refinement))?;
    Ok(out)
}

/// Runs the realization stage on a given covariance table, resolving
/// searched selections against it.
pub fn identify_from_covariances(cov: &CovarianceTable, cfg: &IdentConfig) -> Result<Identified> {
    cfg.validate()?;
    let modes = cov.modes();
    let opts = cfg.realization;
    let search = SearchOptions {
        max_word_len: Some(cfg.search_len()),
        ..cfg.search
    };
    let sel_bar = match &cfg.selection_bar {
        SelectionSpec::Explicit(s) => s.clone(),
        SelectionSpec::Search => {
            let words: Vec<Word> = cov.lambda_yu.words().filter(|w| !w.is_empty()).cloned().collect();
            let psi = psi_uy(cov, &words).map_err(|e| e.at(Stage::Realization(1)))?;
            search_selection(&psi, modes, cfg.n_bar, search).map_err(|e| e.at(Stage::Realization(2)))?
        }
    };
    let sel = match &cfg.selection {
        SelectionSpec::Explicit(s) => s.clone(),
        SelectionSpec::Search => {
            let bar_words: Vec<Word> = crate::selection::required_words(&sel_bar, modes).into_iter().collect();
            let psi = psi_uy(cov, &bar_words).map_err(|e| e.at(Stage::Realization(1)))?;
            let psi_eps = psi.get_or_err(&Word::empty())?.clone();
            let hk = ho_kalman_full(&sel_bar, &psi, &psi_eps, modes, opts.rank_tol)
                .map_err(|e| e.at(Stage::Realization(2)))?;
            let words: Vec<Word> = cov.lambda_yy.words().cloned().collect();
            let yd = lambda_ydyd(&hk.model, &cov.q_u, &cov.p, &words, opts.fixed_point)
                .map_err(|e| e.at(Stage::Realization(3)))?;
            let (m, _) = joint_markov_table(cov, &yd, &words).map_err(|e| e.at(Stage::Realization(4)))?;
            search_selection(&m, modes, cfg.n_x, search).map_err(|e| e.at(Stage::Realization(5)))?
        }
    };
    let r = covariance_realization(cov, &sel, &sel_bar, opts)?;
    Ok(Identified {
        model: r.model,
        covariances: cov.clone(),
        diagnostics: IdentDiagnostics {
            selection: sel,
            selection_bar: sel_bar,
            p: cov.p.clone(),
            estimator: Estimator::Direct,
            n_samples: cov.n_samples,
            degenerate_words: cov.degenerate.clone(),
            ls_identity_residual: None,
            realization: r.diagnostics,
        },
    })
}

fn check_dims(m: &SwitchedModel, data: &Dataset) -> Result<()> {
    if m.n_y() != data.n_y() || m.n_u() != data.n_u() {
        return Err(Error::Dimension(format!(
            "model has (n_u, n_y) = ({}, {}), data has ({}, {})",
            m.n_u(),
            m.n_y(),
            data.n_u(),
            data.n_y()
        )));
    }
    if let Some(&bad) = data.q.iter().find(|&&s| s == 0 || s > m.modes()) {
        return Err(Error::InvalidMode {
            mode: bad,
            modes: m.modes(),
        });
    }
    Ok(())
}

/// One-step predictions `ŷ(t) = C x(t) + D u(t)` with
/// `x(t+1) = (A - K C) x(t) + B u(t) + K (y(t) - D u(t))`, `x(0) = 0`.
pub fn predict(m: &InnovationModel, data: &Dataset) -> Result<DMatrix<f64>> {
    check_dims(m, data)?;
    let mut x = DVector::zeros(m.n_x());
    let mut y_hat = DMatrix::zeros(data.len(), m.n_y());
    let closed: Vec<DMatrix<f64>> = m.a.iter().zip(&m.k).map(|(a, k)| a - k * &m.c).collect();
    for t in 0..data.len() {
        let s = data.q[t] - 1;
        let u = data.u.row(t).transpose();
        let y = data.y.row(t).transpose();
        let du = &m.d * &u;
        y_hat.row_mut(t).copy_from(&(&m.c * &x + &du).transpose());
        x = &closed[s] * &x + &m.b[s] * &u + &m.k[s] * (y - du);
    }
    Ok(y_hat)
}

/// Output of the deterministic part driven by `u` alone, from `x(0) = 0`.
pub fn simulate_deterministic(m: &SwitchedModel, data: &Dataset) -> Result<DMatrix<f64>> {
    check_dims(m, data)?;
    let mut x = DVector::zeros(m.n_x());
    let mut y = DMatrix::zeros(data.len(), m.n_y());
    for t in 0..data.len() {
        let s = data.q[t] - 1;
        let u = data.u.row(t).transpose();
        y.row_mut(t).copy_from(&(&m.c * &x + &m.d * &u).transpose());
        x = &m.a[s] * &x + &m.b[s] * &u;
    }
    Ok(y)
}

/// Best fit rate in percent, `max(1 - ||y - ŷ|| / ||y - ȳ||, 0) · 100`,
/// with sums over all samples and channels and `ȳ` the per-channel mean.
pub fn bfr(y_true: &DMatrix<f64>, y_pred: &DMatrix<f64>) -> Result<f64> {
    if y_true.shape() != y_pred.shape() {
        return Err(Error::Dimension(format!(
            "series shapes {:?} and {:?} differ",
            y_true.shape(),
            y_pred.shape()
        )));
    }
    if y_true.nrows() < 2 {
        return Err(Error::UndefinedBfr("fewer than two samples".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..y_true.ncols() {
        let col = y_true.column(j);
        let mean = col.mean();
        for (a, b) in col.iter().zip(y_pred.column(j).iter()) {
            num += (a - b) * (a - b);
            den += (a - mean) * (a - mean);
        }
    }
    if den == 0.0 {
        return Err(Error::UndefinedBfr("the reference output is constant".into()));
    }
    Ok((1.0 - (num / den).sqrt()).max(0.0) * 100.0)
}

/// Frobenius norms of `(1/N) Σ e(t) z^y_w(t)ᵀ` for each word.
pub fn whiteness_scores(
    residuals: &DMatrix<f64>,
    data: &Dataset,
    p: &[f64],
    words: &[Word],
) -> Result<Vec<(Word, f64)>> {
    let table = cross_covariances(residuals, &data.y, &data.q, p, words)?;
    Ok(table.iter().map(|(w, m)| (w.clone(), m.norm())).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub bfr: f64,
    /// Residual whiteness per word of length one and two.
    pub whiteness: Vec<(Word, f64)>,
    pub predicted: DMatrix<f64>,
    /// Leading samples excluded from the fit.
    pub skipped: usize,
    pub runtime_seconds: f64,
}

/// Predicts `data` and scores the fit against `target` (the noise-free
/// output when available, otherwise `data.y`), skipping the first `skip`
/// samples.
pub fn validate(
    m: &InnovationModel,
    data: &Dataset,
    target: Option<&DMatrix<f64>>,
    skip: usize,
) -> Result<ValidationReport> {
    let start = Instant::now();
    let predicted = predict(m, data)?;
    let target = target.unwrap_or(&data.y);
    if target.shape() != predicted.shape() {
        return Err(Error::Dimension("validation target does not match the data".into()));
    }
    if skip + 2 > data.len() {
        return Err(Error::InsufficientData(format!(
            "{} samples, {skip} skipped",
            data.len()
        )));
    }
    let len = data.len() - skip;
    let fit = bfr(&target.rows(skip, len).into_owned(), &predicted.rows(skip, len).into_owned())?;
    let residuals = &data.y - &predicted;
    let words = Word::all_up_to(m.modes(), 1, 2);
    let whiteness = whiteness_scores(&residuals, data, &m.p, &words)?;
    Ok(ValidationReport {
        bfr: fit,
        whiteness,
        predicted,
        skipped: skip,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Largest max-norm difference of the noise-driven Markov parameters over
/// all words up to `max_len`; invariant under state isomorphism.
pub fn markov_distance(a: &SwitchedModel, b: &SwitchedModel, max_len: usize) -> Result<f64> {
    let (da, db) = (a.joint_dlss(), b.joint_dlss());
    if (da.n_y(), da.n_u()) != (db.n_y(), db.n_u()) || a.modes() != b.modes() {
        return Err(Error::Dimension("models differ in external dimensions".into()));
    }
    let mut worst: f64 = 0.0;
    for w in Word::all_up_to(a.modes(), 0, max_len) {
        let d = da.markov_parameter(&w)? - db.markov_parameter(&w)?;
        worst = worst.max(linalg::max_norm(&d));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyConfig {
    pub lengths: Vec<usize>,
    pub seeds: Vec<u64>,
    pub ident: IdentConfig,
    /// Template for simulation; `seed` and `length` are overridden per cell.
    pub sim: SimConfig,
    /// Longest word in the Markov-parameter error.
    pub max_len: usize,
    /// Isomorphism tolerance used for the alignment flag.
    pub align_tol: f64,
    pub exec: Execution,
}

impl ConsistencyConfig {
    pub fn new(lengths: Vec<usize>, seeds: Vec<u64>, ident: IdentConfig) -> Self {
        ConsistencyConfig {
            lengths,
            seeds,
            ident,
            sim: SimConfig::new(0, 1),
            max_len: 3,
            align_tol: 1e-3,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyCell {
    pub length: usize,
    pub seed: u64,
    /// Markov-parameter error; infinite when identification failed.
    pub error: f64,
    /// Whether an explicit isomorphism within `align_tol` was found.
    pub aligned: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyTable {
    pub cells: Vec<ConsistencyCell>,
    /// `(N, median error)` in the order of `lengths`.
    pub medians: Vec<(usize, f64)>,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Simulates, identifies and scores one model per `(N, seed)` cell against
/// the minimal innovation form of `model`.
pub fn consistency_experiment(model: &SwitchedModel, cfg: &ConsistencyConfig) -> Result<ConsistencyTable> {
    let (reference, _) = realize::innovation_form(model, FixedPointOptions::default())?;
    let grid: Vec<(usize, u64)> = cfg
        .lengths
        .iter()
        .flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let cells = cfg.exec.map(&grid, |&(length, seed)| {
        let run = || -> Result<(f64, bool)> {
            let sim = simulate(
                model,
                &SimConfig {
                    seed,
                    length,
                    ..cfg.sim.clone()
                },
            )?;
            let id = identify(&sim.data, &cfg.ident)?;
            let err = markov_distance(&id.model, &reference, cfg.max_len)?;
            let aligned = find_isomorphism(&id.model, &reference, cfg.align_tol).is_ok();
            Ok((err, aligned))
        };
        match run() {
            Ok((error, aligned)) => ConsistencyCell {
                length,
                seed,
                error,
                aligned,
                failure: None,
            },
            Err(e) => ConsistencyCell {
                length,
                seed,
                error: f64::INFINITY,
                aligned: false,
                failure: Some(e.to_string()),
            },
        }
    });
    let medians = cfg
        .lengths
        .iter()
        .map(|&n| {
            let mut errs: Vec<f64> = cells.iter().filter(|c| c.length == n).map(|c| c.error).collect();
            (n, median(&mut errs))
        })
        .collect();
    Ok(ConsistencyTable { cells, medians })
}
