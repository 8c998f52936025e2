//! z-processes, empirical covariances and the exact covariance oracle.
//!
//! For a word `w = σ_1 … σ_k` the regressor is
//! `z_w(t) = b(t-k) χ(q(t-k)=σ_1) … χ(q(t-1)=σ_k) / sqrt(p_w)`.
//! Given `t`, exactly one word of each length is active: the one spelled by
//! `q(t-k) … q(t-1)`. The estimators below exploit this to stay linear in
//! the data length.

use std::collections::{BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg;
use crate::model::SwitchedModel;
use crate::realize::{self, FixedPointOptions};
use crate::selection::{required_words, Selection};
use crate::simulate::Dataset;
use crate::table::WordTable;
use crate::word::{check_probabilities, word_probability, Word};

/// Time steps per block when summing; fixed so that results do not depend
/// on the number of threads.
pub const BLOCK_LEN: usize = 4096;

/// Exact-oracle fixed-point settings.
pub const EXACT_OPTIONS: FixedPointOptions = FixedPointOptions {
    tol: 1e-12,
    max_iter: 10_000,
};

/// Word-indexed covariances consumed by the realization algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTable {
    /// `Λ^{y,u}_w`, `n_y x n_u`, including `w = ε`.
    pub lambda_yu: WordTable,
    /// `Λ^{y,y}_w`, `n_y x n_y`.
    pub lambda_yy: WordTable,
    /// `T^{y,y}_{σ,σ}` per mode.
    pub t_yy: Vec<DMatrix<f64>>,
    pub q_u: DMatrix<f64>,
    pub p: Vec<f64>,
    /// Number of summands behind each empirical average; `None` when exact.
    pub n_samples: Option<usize>,
    /// Words (and single-letter mode words for `t_yy`) never observed in the
    /// data; their entries are zero.
    pub degenerate: Vec<Word>,
}

impl CovarianceTable {
    pub fn modes(&self) -> usize {
        self.p.len()
    }

    pub fn n_y(&self) -> usize {
        self.lambda_yu.shape().0
    }

    pub fn n_u(&self) -> usize {
        self.lambda_yu.shape().1
    }

    pub fn validate(&self) -> Result<()> {
        check_probabilities(&self.p, 1e-9)?;
        let (ny, nu) = (self.n_y(), self.n_u());
        if self.lambda_yy.shape() != (ny, ny) || self.q_u.shape() != (nu, nu) {
            return Err(Error::Dimension("covariance table shapes disagree".into()));
        }
        if self.t_yy.len() != self.modes() || self.t_yy.iter().any(|t| t.shape() != (ny, ny)) {
            return Err(Error::Dimension(format!(
                "expected {} mode covariances of size {ny}x{ny}",
                self.modes()
            )));
        }
        if !linalg::is_spd(&self.q_u) {
            return Err(Error::InvalidModel("input covariance is not positive definite".into()));
        }
        Ok(())
    }
}

/// Words needed by the realization algorithm for a pair of selections.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CovarianceWords {
    /// Words for `Λ^{y,u}`; `ε` is always estimated in addition.
    pub yu: BTreeSet<Word>,
    pub yy: BTreeSet<Word>,
}

impl CovarianceWords {
    /// `sel` indexes the joint Markov function, `sel_bar` the deterministic part.
    pub fn for_selections(sel: &Selection, sel_bar: &Selection, modes: usize) -> Self {
        let yy = required_words(sel, modes);
        let mut yu = yy.clone();
        yu.extend(required_words(sel_bar, modes));
        CovarianceWords { yu, yy }
    }

    /// Every nonempty word up to `max_len`, for both families.
    pub fn all_up_to(modes: usize, max_len: usize) -> Self {
        let all: BTreeSet<Word> = Word::all_up_to(modes, 1, max_len).into_iter().collect();
        CovarianceWords {
            yu: all.clone(),
            yy: all,
        }
    }

    pub fn max_len(&self) -> usize {
        self.yu
            .iter()
            .chain(&self.yy)
            .map(Word::len)
            .max()
            .unwrap_or(0)
    }
}

/// `z^b_w(t)` for a series `b` whose rows are time steps.
pub fn z_process(b: &DMatrix<f64>, q: &[usize], p: &[f64], w: &Word, t: usize) -> Result<DVector<f64>> {
    let k = w.len();
    if t >= b.nrows() || t >= q.len() || t < k {
        return Err(Error::InsufficientData(format!(
            "z-process of word {w} at time {t} is out of range"
        )));
    }
    let row = b.row(t - k).transpose();
    let matches = w
        .letters()
        .iter()
        .enumerate()
        .all(|(i, &s)| q[t - k + i] == s);
    if !matches {
        return Ok(DVector::zeros(b.ncols()));
    }
    Ok(row / word_probability(p, w)?.sqrt())
}

/// Maps (length, base-D code) of the word active at `t` to a slot index.
struct WordIndex {
    modes: usize,
    max_len: usize,
    slots: HashMap<(usize, u64), usize>,
    inv_sqrt_p: Vec<f64>,
}

impl WordIndex {
    fn new(words: &[Word], modes: usize, p: &[f64]) -> Result<Self> {
        let max_len = words.iter().map(Word::len).max().unwrap_or(0);
        if (modes as f64).powi(max_len as i32) >= u64::MAX as f64 {
            return Err(Error::InvalidSelection(format!(
                "words of length {max_len} over {modes} modes are too long to index"
            )));
        }
        let mut slots = HashMap::with_capacity(words.len());
        let mut inv_sqrt_p = Vec::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            w.check(modes)?;
            let code = w
                .letters()
                .iter()
                .fold(0u64, |acc, &s| acc * modes as u64 + (s - 1) as u64);
            slots.insert((w.len(), code), i);
            inv_sqrt_p.push(1.0 / word_probability(p, w)?.sqrt());
        }
        Ok(WordIndex {
            modes,
            max_len,
            slots,
            inv_sqrt_p,
        })
    }

    /// Calls `f(k, slot)` for each requested word active at time `t`.
    fn for_each_active(&self, q: &[usize], t: usize, mut f: impl FnMut(usize, usize)) {
        let mut code = 0u64;
        let mut place = 1u64;
        for k in 1..=self.max_len.min(t) {
            code += (q[t - k] - 1) as u64 * place;
            place = place.saturating_mul(self.modes as u64);
            if let Some(&slot) = self.slots.get(&(k, code)) {
                f(k, slot);
            }
        }
    }
}

/// Raw sums `Σ y(t) z_w(t)ᵀ` and friends over a time range.
#[derive(Debug, Clone, PartialEq)]
struct Sums {
    yu: Vec<DMatrix<f64>>,
    yy: Vec<DMatrix<f64>>,
    yu_eps: DMatrix<f64>,
    t_yy: Vec<DMatrix<f64>>,
    uu: DMatrix<f64>,
    count_yu: Vec<usize>,
    count_yy: Vec<usize>,
    count_mode: Vec<usize>,
}

impl Sums {
    fn zeros(n_yu: usize, n_yy: usize, modes: usize, ny: usize, nu: usize) -> Self {
        Sums {
            yu: vec![DMatrix::zeros(ny, nu); n_yu],
            yy: vec![DMatrix::zeros(ny, ny); n_yy],
            yu_eps: DMatrix::zeros(ny, nu),
            t_yy: vec![DMatrix::zeros(ny, ny); modes],
            uu: DMatrix::zeros(nu, nu),
            count_yu: vec![0; n_yu],
            count_yy: vec![0; n_yy],
            count_mode: vec![0; modes],
        }
    }

    fn add(&mut self, other: &Sums) {
        let add_all = |a: &mut [DMatrix<f64>], b: &[DMatrix<f64>]| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        };
        add_all(&mut self.yu, &other.yu);
        add_all(&mut self.yy, &other.yy);
        add_all(&mut self.t_yy, &other.t_yy);
        self.yu_eps += &other.yu_eps;
        self.uu += &other.uu;
        for (a, b) in self.count_yu.iter_mut().zip(&other.count_yu) {
            *a += b;
        }
        for (a, b) in self.count_yy.iter_mut().zip(&other.count_yy) {
            *a += b;
        }
        for (a, b) in self.count_mode.iter_mut().zip(&other.count_mode) {
            *a += b;
        }
    }
}

/// `acc += x (s · z)ᵀ` without temporaries.
fn add_outer(acc: &mut DMatrix<f64>, x: &[f64], z: &[f64], s: f64) {
    for (j, &zj) in z.iter().enumerate() {
        let zs = zj * s;
        for (i, &xi) in x.iter().enumerate() {
            acc[(i, j)] += xi * zs;
        }
    }
}

struct Series {
    y: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
}

impl Series {
    fn new(data: &Dataset) -> Self {
        let rows = |m: &DMatrix<f64>| {
            (0..m.nrows())
                .map(|t| m.row(t).iter().copied().collect())
                .collect()
        };
        Series {
            y: rows(&data.y),
            u: rows(&data.u),
        }
    }
}

fn check_data(data: &Dataset, p: &[f64], start: usize) -> Result<()> {
    check_probabilities(p, 1e-9)?;
    if let Some(&bad) = data.q.iter().find(|&&s| s == 0 || s > p.len()) {
        return Err(Error::InvalidMode {
            mode: bad,
            modes: p.len(),
        });
    }
    if data.len() <= start {
        return Err(Error::InsufficientData(format!(
            "{} samples leave no summands after skipping the first {start}",
            data.len()
        )));
    }
    Ok(())
}

/// Averaging start: the longest word in scope, and at least one so that the
/// mode covariances are in range.
fn start_index(words: &CovarianceWords) -> usize {
    words.max_len().max(1)
}

/// Direct averages of the products `y(t) z_w(t)ᵀ`, with the default
/// execution strategy.
pub fn empirical_covariances(data: &Dataset, p: &[f64], words: &CovarianceWords) -> Result<CovarianceTable> {
    empirical_covariances_with(data, p, words, Execution::default())
}

pub fn empirical_covariances_with(
    data: &Dataset,
    p: &[f64],
    words: &CovarianceWords,
    exec: Execution,
) -> Result<CovarianceTable> {
    let start = start_index(words);
    check_data(data, p, start)?;
    let modes = p.len();
    let (ny, nu) = (data.n_y(), data.n_u());
    let yu_words: Vec<Word> = words.yu.iter().filter(|w| !w.is_empty()).cloned().collect();
    let yy_words: Vec<Word> = words.yy.iter().filter(|w| !w.is_empty()).cloned().collect();
    let yu_index = WordIndex::new(&yu_words, modes, p)?;
    let yy_index = WordIndex::new(&yy_words, modes, p)?;
    let series = Series::new(data);
    let q = &data.q;

    let blocks = exec.map_blocks(data.len() - start, BLOCK_LEN, |s, e| {
        let mut acc = Sums::zeros(yu_words.len(), yy_words.len(), modes, ny, nu);
        for t in (start + s)..(start + e) {
            let yt = &series.y[t];
            add_outer(&mut acc.yu_eps, yt, &series.u[t], 1.0);
            add_outer(&mut acc.uu, &series.u[t], &series.u[t], 1.0);
            let m = q[t - 1] - 1;
            add_outer(&mut acc.t_yy[m], &series.y[t - 1], &series.y[t - 1], 1.0 / p[m]);
            acc.count_mode[m] += 1;
            yu_index.for_each_active(q, t, |k, slot| {
                add_outer(&mut acc.yu[slot], yt, &series.u[t - k], yu_index.inv_sqrt_p[slot]);
                acc.count_yu[slot] += 1;
            });
            yy_index.for_each_active(q, t, |k, slot| {
                add_outer(&mut acc.yy[slot], yt, &series.y[t - k], yy_index.inv_sqrt_p[slot]);
                acc.count_yy[slot] += 1;
            });
        }
        acc
    });
    let mut total = Sums::zeros(yu_words.len(), yy_words.len(), modes, ny, nu);
    for b in &blocks {
        total.add(b);
    }

    let n = (data.len() - start) as f64;
    let mut degenerate = Vec::new();
    let mut lambda_yu = WordTable::new(ny, nu);
    lambda_yu.insert(Word::empty(), total.yu_eps / n)?;
    for (i, w) in yu_words.iter().enumerate() {
        if total.count_yu[i] == 0 {
            degenerate.push(w.clone());
        }
        lambda_yu.insert(w.clone(), &total.yu[i] / n)?;
    }
    let mut lambda_yy = WordTable::new(ny, ny);
    for (i, w) in yy_words.iter().enumerate() {
        if total.count_yy[i] == 0 && !degenerate.contains(w) {
            degenerate.push(w.clone());
        }
        lambda_yy.insert(w.clone(), &total.yy[i] / n)?;
    }
    for (s, &c) in total.count_mode.iter().enumerate() {
        if c == 0 {
            let w = Word::letter(s + 1);
            if !degenerate.contains(&w) {
                degenerate.push(w);
            }
        }
    }
    degenerate.sort();
    Ok(CovarianceTable {
        lambda_yu,
        lambda_yy,
        t_yy: total.t_yy.iter().map(|m| linalg::symmetrize(&(m / n))).collect(),
        q_u: linalg::symmetrize(&(total.uu / n)),
        p: p.to_vec(),
        n_samples: Some(data.len() - start),
        degenerate,
    })
}

/// `(1/N) Σ_t a(t) z^b_w(t)ᵀ` over `t` from the longest word on, for two
/// aligned series `a` and `b`.
pub fn cross_covariances(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &[usize],
    p: &[f64],
    words: &[Word],
) -> Result<WordTable> {
    let modes = p.len();
    let words: Vec<Word> = words.iter().filter(|w| !w.is_empty()).cloned().collect();
    let start = words.iter().map(Word::len).max().unwrap_or(0).max(1);
    if a.nrows() != q.len() || b.nrows() != q.len() {
        return Err(Error::Dimension("series lengths differ".into()));
    }
    if q.len() <= start {
        return Err(Error::InsufficientData(format!("{} samples for words of length {start}", q.len())));
    }
    let index = WordIndex::new(&words, modes, p)?;
    let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..m.nrows()).map(|t| m.row(t).iter().copied().collect()).collect()
    };
    let (ra, rb) = (rows(a), rows(b));
    let blocks = Execution::default().map_blocks(q.len() - start, BLOCK_LEN, |s, e| {
        let mut acc = vec![DMatrix::zeros(a.ncols(), b.ncols()); words.len()];
        for t in (start + s)..(start + e) {
            index.for_each_active(q, t, |k, slot| {
                add_outer(&mut acc[slot], &ra[t], &rb[t - k], index.inv_sqrt_p[slot]);
            });
        }
        acc
    });
    let n = (q.len() - start) as f64;
    let mut table = WordTable::new(a.ncols(), b.ncols());
    for (i, w) in words.iter().enumerate() {
        let sum = blocks
            .iter()
            .fold(DMatrix::zeros(a.ncols(), b.ncols()), |acc, blk| acc + &blk[i]);
        table.insert(w.clone(), sum / n)?;
    }
    Ok(table)
}

/// Result of the regression-based estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresCovariances {
    pub table: CovarianceTable,
    /// Regression coefficients of `y(t)` on `[u(t), z^u_{w_1}(t), …]`,
    /// one `n_u x n_y` block per word (`ε` first).
    pub theta_u: DMatrix<f64>,
    /// Coefficients of `y(t)` on `[z^y_{w_1}(t), …]`.
    pub theta_y: DMatrix<f64>,
    /// Max-norm of `(1/N) ΦᵀΦ Θ̂ - (1/N) Φᵀ R` over both regressions.
    pub identity_residual: f64,
}

/// Gram sums `Σ z_i z_jᵀ` over the active regressors, slot 0 reserved for
/// the `ε` column when `with_eps`.
fn gram_sums(
    series_b: &[Vec<f64>],
    q: &[usize],
    index: &WordIndex,
    n_words: usize,
    with_eps: bool,
    start: usize,
    len: usize,
    exec: Execution,
) -> DMatrix<f64> {
    let nb = series_b.first().map_or(0, Vec::len);
    let offset = usize::from(with_eps);
    let dim = (n_words + offset) * nb;
    let blocks = exec.map_blocks(len - start, BLOCK_LEN, |s, e| {
        let mut g = DMatrix::<f64>::zeros(dim, dim);
        let mut active: Vec<(usize, Vec<f64>)> = Vec::with_capacity(index.max_len + 1);
        for t in (start + s)..(start + e) {
            active.clear();
            if with_eps {
                active.push((0, series_b[t].clone()));
            }
            index.for_each_active(q, t, |k, slot| {
                let scale = index.inv_sqrt_p[slot];
                active.push((slot + offset, series_b[t - k].iter().map(|v| v * scale).collect()));
            });
            for (i, zi) in &active {
                for (j, zj) in &active {
                    for (a, &za) in zi.iter().enumerate() {
                        for (b, &zb) in zj.iter().enumerate() {
                            g[(i * nb + a, j * nb + b)] += za * zb;
                        }
                    }
                }
            }
        }
        g
    });
    blocks
        .iter()
        .fold(DMatrix::zeros(dim, dim), |acc, g| acc + g)
}

/// Regression form of the estimator: solves `R = Φ Θ` in the least-squares
/// sense. The output covariances are `(1/N) Φ_yᵀΦ_y Θ̂_y` (equal to the
/// direct averages up to solver error) and `Θ̂_uᵀ Q̂_u` for the input
/// words, which converges faster than the direct input averages.
pub fn least_squares_covariances(
    data: &Dataset,
    p: &[f64],
    words: &CovarianceWords,
) -> Result<LeastSquaresCovariances> {
    least_squares_covariances_with(data, p, words, Execution::default())
}

pub fn least_squares_covariances_with(
    data: &Dataset,
    p: &[f64],
    words: &CovarianceWords,
    exec: Execution,
) -> Result<LeastSquaresCovariances> {
    let direct = empirical_covariances_with(data, p, words, exec)?;
    let start = start_index(words);
    let modes = p.len();
    let (ny, nu) = (data.n_y(), data.n_u());
    let n = direct.n_samples.unwrap_or(1) as f64;
    let series = Series::new(data);
    let yu_words: Vec<Word> = words.yu.iter().filter(|w| !w.is_empty()).cloned().collect();
    let yy_words: Vec<Word> = words.yy.iter().filter(|w| !w.is_empty()).cloned().collect();

    // Φ_uᵀ R / N and Φ_yᵀ R / N, stacked as transposed covariance blocks
    let mut rhs_u = DMatrix::zeros((yu_words.len() + 1) * nu, ny);
    rhs_u
        .rows_mut(0, nu)
        .copy_from(&direct.lambda_yu.get_or_err(&Word::empty())?.transpose());
    for (i, w) in yu_words.iter().enumerate() {
        rhs_u
            .rows_mut((i + 1) * nu, nu)
            .copy_from(&direct.lambda_yu.get_or_err(w)?.transpose());
    }
    let mut rhs_y = DMatrix::zeros(yy_words.len() * ny, ny);
    for (i, w) in yy_words.iter().enumerate() {
        rhs_y
            .rows_mut(i * ny, ny)
            .copy_from(&direct.lambda_yy.get_or_err(w)?.transpose());
    }

    let solve = |gram: DMatrix<f64>, rhs: &DMatrix<f64>| -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
        let columns = gram.ncols();
        let theta = linalg::solve_full_rank(&gram, rhs, 1e-12)
            .map_err(|rank| Error::IllConditionedRegressor { rank, columns })?;
        let fitted = &gram * &theta;
        let residual = linalg::max_norm(&(&fitted - rhs));
        Ok((theta, fitted, residual))
    };

    let yu_index = WordIndex::new(&yu_words, modes, p)?;
    let gram_u = gram_sums(&series.u, &data.q, &yu_index, yu_words.len(), true, start, data.len(), exec) / n;
    let (theta_u, _, res_u) = solve(gram_u, &rhs_u)?;

    let yy_index = WordIndex::new(&yy_words, modes, p)?;
    let (theta_y, fitted_y, res_y) = if yy_words.is_empty() {
        (DMatrix::zeros(0, ny), DMatrix::zeros(0, ny), 0.0)
    } else {
        let gram_y = gram_sums(&series.y, &data.q, &yy_index, yy_words.len(), false, start, data.len(), exec) / n;
        solve(gram_y, &rhs_y)?
    };

    // White input under i.i.d. switching makes the input regressors
    // orthogonal with E[z^u_w z^u_wᵀ] = Q_u, so Λ^{y,u}_w = Θ̂_wᵀ Q_u; the
    // sampled cross terms of ΦᵀΦ only add variance.
    let mut lambda_yu = WordTable::new(ny, nu);
    lambda_yu.insert(Word::empty(), theta_u.rows(0, nu).transpose() * &direct.q_u)?;
    for (i, w) in yu_words.iter().enumerate() {
        lambda_yu.insert(w.clone(), theta_u.rows((i + 1) * nu, nu).transpose() * &direct.q_u)?;
    }
    let mut lambda_yy = WordTable::new(ny, ny);
    for (i, w) in yy_words.iter().enumerate() {
        lambda_yy.insert(w.clone(), fitted_y.rows(i * ny, ny).transpose())?;
    }
    Ok(LeastSquaresCovariances {
        table: CovarianceTable {
            lambda_yu,
            lambda_yy,
            ..direct
        },
        theta_u,
        theta_y,
        identity_residual: res_u.max(res_y),
    })
}

/// Ground-truth covariances of a stationary model for every word up to
/// `max_len`, computed through the associated deterministic systems.
pub fn exact_covariances(model: &SwitchedModel, max_len: usize) -> Result<CovarianceTable> {
    exact_covariances_for(model, &CovarianceWords::all_up_to(model.modes(), max_len))
}

pub fn exact_covariances_for(model: &SwitchedModel, words: &CovarianceWords) -> Result<CovarianceTable> {
    model.validate()?;
    let (ny, nu) = (model.n_y(), model.n_u());
    let assoc = realize::associated_dlss(model, EXACT_OPTIONS)?;
    let joint = &assoc.dlss;

    let mut lambda_yu = WordTable::new(ny, nu);
    let m_eps = joint.markov_parameter(&Word::empty())?;
    lambda_yu.insert(Word::empty(), m_eps.columns(0, nu) * &model.q_u)?;
    for w in words.yu.iter().filter(|w| !w.is_empty()) {
        let m = joint.markov_parameter(w)?;
        lambda_yu.insert(w.clone(), m.columns(0, nu) * &model.q_u)?;
    }

    let det = realize::scaled_deterministic(model);
    let yy_words: Vec<Word> = words.yy.iter().filter(|w| !w.is_empty()).cloned().collect();
    let yd = realize::lambda_ydyd(&det, &model.q_u, &model.p, &yy_words, EXACT_OPTIONS)?;
    let mut lambda_yy = WordTable::new(ny, ny);
    for w in &yy_words {
        let ys = joint.markov_parameter(w)?.columns(nu, ny).into_owned();
        lambda_yy.insert(w.clone(), ys + yd.lambda.get_or_err(w)?)?;
    }

    let t_yy = (0..model.modes())
        .map(|s| {
            let ps = model.p[s];
            let t_ys = (&model.c * &assoc.p_sigma[s] * model.c.transpose()
                + &model.f * &model.q_v[s] * model.f.transpose())
                / ps;
            linalg::symmetrize(&(t_ys + &yd.t[s]))
        })
        .collect();
    Ok(CovarianceTable {
        lambda_yu,
        lambda_yy,
        t_yy,
        q_u: model.q_u.clone(),
        p: model.p.clone(),
        n_samples: None,
        degenerate: Vec::new(),
    })
}
