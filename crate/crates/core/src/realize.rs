//! Ho-Kalman realization, the conversions between stochastic models and
//! their associated deterministic systems, and covariance realization.
//!
//! Two scaling conventions meet here. A stochastic model keeps the physical
//! matrices `A_σ, B_σ`; its associated deterministic system carries
//! `sqrt(p_σ) A_σ, sqrt(p_σ) B_σ`, so that its Markov parameters equal the
//! normalized covariances. Mode covariances are stored multiplied by `p_σ`.

use itertools::Itertools;
use nalgebra::DMatrix;

use crate::covariance::CovarianceTable;
use crate::error::{Error, Result, Stage};
use crate::linalg;
use crate::model::{DeterministicModel, InnovationModel, SwitchedModel};
use crate::selection::{build_hankel, required_words, ColumnIndex, HankelSet, RowIndex, Selection};
use crate::table::WordTable;
use crate::word::{matrix_product_along_word, Word};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Stop when successive iterates differ by less than this (max-norm).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            tol: 1e-10,
            max_iter: 5000,
        }
    }
}

/// Iteration count and the max-norm change at each step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Convergence {
    pub iterations: usize,
    pub deltas: Vec<f64>,
}

impl Convergence {
    pub fn last_delta(&self) -> f64 {
        self.deltas.last().copied().unwrap_or(f64::INFINITY)
    }
}

fn max_delta(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| linalg::max_norm(&(x - y)))
        .fold(0.0, f64::max)
}

/// One step of `P_σ ← p_σ Σ_{σ1} (w_{σ1} A_{σ1} P_{σ1} A_{σ1}ᵀ + N_{σ1})`.
pub fn mode_lyapunov_step(
    a: &[DMatrix<f64>],
    weights: &[f64],
    forcing: &[DMatrix<f64>],
    p: &[f64],
    current: &[DMatrix<f64>],
) -> Vec<DMatrix<f64>> {
    let n = a[0].nrows();
    let sum = a
        .iter()
        .zip(weights)
        .zip(forcing)
        .zip(current)
        .fold(DMatrix::zeros(n, n), |acc, (((a, &w), f), x)| {
            acc + a * x * a.transpose() * w + f
        });
    let sum = linalg::symmetrize(&sum);
    p.iter().map(|&ps| &sum * ps).collect()
}

/// Iterates [`mode_lyapunov_step`] from zero.
pub fn mode_lyapunov(
    a: &[DMatrix<f64>],
    weights: &[f64],
    forcing: &[DMatrix<f64>],
    p: &[f64],
    opts: FixedPointOptions,
    what: &'static str,
) -> Result<(Vec<DMatrix<f64>>, Convergence)> {
    let n = a.first().map_or(0, |m| m.nrows());
    let mut x = vec![DMatrix::zeros(n, n); p.len()];
    let mut conv = Convergence::default();
    for _ in 0..opts.max_iter {
        let next = mode_lyapunov_step(a, weights, forcing, p, &x);
        let delta = max_delta(&next, &x);
        x = next;
        conv.iterations += 1;
        conv.deltas.push(delta);
        if !delta.is_finite() {
            break;
        }
        if delta < opts.tol {
            return Ok((x, conv));
        }
    }
    Err(Error::NonConvergence {
        what,
        iterations: conv.iterations,
        delta: conv.last_delta(),
    })
}

/// `p_σ` times the covariance of the noise-driven state, per mode.
pub fn stochastic_state_covariance(
    m: &SwitchedModel,
    opts: FixedPointOptions,
) -> Result<(Vec<DMatrix<f64>>, Convergence)> {
    let forcing: Vec<DMatrix<f64>> = m
        .k
        .iter()
        .zip(&m.q_v)
        .map(|(k, q)| k * q * k.transpose())
        .collect();
    let ones = vec![1.0; m.modes()];
    mode_lyapunov(&m.a, &ones, &forcing, &m.p, opts, "state covariance recursion")
}

/// `({sqrt(p_σ) A_σ}, {sqrt(p_σ) B_σ}, C, D)`, whose Markov function is the
/// normalized input-output covariance.
pub fn scaled_deterministic(m: &SwitchedModel) -> DeterministicModel {
    DeterministicModel {
        a: m.a.iter().zip(&m.p).map(|(a, &p)| a * p.sqrt()).collect(),
        b: m.b.iter().zip(&m.p).map(|(b, &p)| b * p.sqrt()).collect(),
        c: m.c.clone(),
        d: m.d.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociatedDlss {
    /// `({sqrt(p) A}, {[sqrt(p) B, G]}, C, [D, I])`
    pub dlss: DeterministicModel,
    /// `p_σ` times the stochastic state covariance.
    pub p_sigma: Vec<DMatrix<f64>>,
    pub g: Vec<DMatrix<f64>>,
    pub convergence: Convergence,
}

pub fn associated_dlss(m: &SwitchedModel, opts: FixedPointOptions) -> Result<AssociatedDlss> {
    m.validate()?;
    let (p_sigma, convergence) = stochastic_state_covariance(m, opts)?;
    let g: Vec<DMatrix<f64>> = (0..m.modes())
        .map(|s| {
            let ps = m.p[s];
            let x = &m.a[s] * &p_sigma[s] * m.c.transpose() + &m.k[s] * &m.q_v[s] * m.f.transpose();
            x * (1.0 / ps.sqrt())
        })
        .collect();
    let scaled = scaled_deterministic(m);
    let ny = m.n_y();
    let dlss = DeterministicModel {
        a: scaled.a,
        b: scaled
            .b
            .iter()
            .zip(&g)
            .map(|(b, g)| linalg::hstack(&[b, g]))
            .collect(),
        c: m.c.clone(),
        d: linalg::hstack(&[&m.d, &DMatrix::identity(ny, ny)]),
    };
    Ok(AssociatedDlss {
        dlss,
        p_sigma,
        g,
        convergence,
    })
}

/// Converged gain iteration: `p` holds `p_σ` times the state covariance,
/// `q` the innovation covariances `p_σ T^{e,e}_{σ,σ}`, `k` the gains.
#[derive(Debug, Clone, PartialEq)]
pub struct GainIteration {
    pub p: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub k: Vec<DMatrix<f64>>,
    pub convergence: Convergence,
}

/// Innovation covariance and gain for the current state iterate.
pub fn innovation_gain(
    dl: &DeterministicModel,
    n_u: usize,
    p: &[f64],
    t_ys: &[DMatrix<f64>],
    p_hat: &[DMatrix<f64>],
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let ny = dl.n_y();
    let c = &dl.c;
    let mut qs = Vec::with_capacity(p.len());
    let mut ks = Vec::with_capacity(p.len());
    for s in 0..p.len() {
        let ps = p[s];
        let q = linalg::symmetrize(&(&t_ys[s] * ps - c * &p_hat[s] * c.transpose()));
        let sv = linalg::singular_values(&q);
        let largest = sv.first().copied().unwrap_or(0.0);
        let smallest = sv.last().copied().unwrap_or(0.0);
        if !(largest > 0.0) || smallest < 1e-10 * largest {
            return Err(Error::NotFullRank(format!(
                "innovation covariance of mode {} is singular (singular values {:e}..{:e})",
                s + 1,
                smallest,
                largest
            )));
        }
        let g = dl.b[s].columns(n_u, ny);
        let rhs = g * ps.sqrt() - &dl.a[s] * &p_hat[s] * c.transpose() * (1.0 / ps.sqrt());
        // K Q = rhs, Q symmetric
        let k = q
            .clone()
            .lu()
            .solve(&rhs.transpose())
            .ok_or_else(|| Error::NotFullRank(format!("innovation covariance of mode {} is singular", s + 1)))?
            .transpose();
        qs.push(q);
        ks.push(k);
    }
    Ok((qs, ks))
}

/// One step of the state recursion of the innovation form.
pub fn gain_iteration_step(
    dl: &DeterministicModel,
    p: &[f64],
    p_hat: &[DMatrix<f64>],
    q: &[DMatrix<f64>],
    k: &[DMatrix<f64>],
) -> Vec<DMatrix<f64>> {
    let weights: Vec<f64> = p.iter().map(|&ps| 1.0 / ps).collect();
    let forcing: Vec<DMatrix<f64>> = k.iter().zip(q).map(|(k, q)| k * q * k.transpose()).collect();
    mode_lyapunov_step(&dl.a, &weights, &forcing, p, p_hat)
}

/// Converts a deterministic realization with input columns `[B̂ | Ĝ]`
/// (`n_u` then `n_y` columns) into a stochastic model in innovation form.
pub fn associated_slss(
    dl: &DeterministicModel,
    n_u: usize,
    p: &[f64],
    q_u: &DMatrix<f64>,
    t_ys: &[DMatrix<f64>],
    opts: FixedPointOptions,
) -> Result<(InnovationModel, GainIteration)> {
    dl.validate()?;
    let (nx, ny) = (dl.n_x(), dl.n_y());
    if dl.b[0].ncols() != n_u + ny || t_ys.len() != p.len() || dl.modes() != p.len() {
        return Err(Error::Dimension(format!(
            "expected {} modes with {} input columns",
            p.len(),
            n_u + ny
        )));
    }
    let radius = linalg::spectral_radius(&dl.kronecker_sum());
    if !(radius < 1.0) {
        return Err(Error::Unstable { radius });
    }
    let mut p_hat = vec![DMatrix::zeros(nx, nx); p.len()];
    let mut conv = Convergence::default();
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let (q, k) = innovation_gain(dl, n_u, p, t_ys, &p_hat)?;
        let next = gain_iteration_step(dl, p, &p_hat, &q, &k);
        let delta = max_delta(&next, &p_hat);
        p_hat = next;
        conv.iterations += 1;
        conv.deltas.push(delta);
        if !delta.is_finite() {
            break;
        }
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            what: "innovation gain recursion",
            iterations: conv.iterations,
            delta: conv.last_delta(),
        });
    }
    let (q, k) = innovation_gain(dl, n_u, p, t_ys, &p_hat)?;
    let model = SwitchedModel {
        a: dl.a.iter().zip(p).map(|(a, &ps)| a / ps.sqrt()).collect(),
        b: dl
            .b
            .iter()
            .zip(p)
            .map(|(b, &ps)| b.columns(0, n_u) / ps.sqrt())
            .collect(),
        k: k.clone(),
        c: dl.c.clone(),
        d: dl.d.columns(0, n_u).into_owned(),
        f: DMatrix::identity(ny, ny),
        p: p.to_vec(),
        q_u: q_u.clone(),
        q_v: q.clone(),
    };
    Ok((
        InnovationModel::new(model)?,
        GainIteration {
            p: p_hat,
            q,
            k,
            convergence: conv,
        },
    ))
}

/// `T^{y^s,y^s}_{σ,σ}` of a stochastic model.
pub fn stochastic_output_covariance(m: &SwitchedModel, p_sigma: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    (0..m.modes())
        .map(|s| {
            (&m.c * &p_sigma[s] * m.c.transpose() + &m.f * &m.q_v[s] * m.f.transpose()) / m.p[s]
        })
        .collect()
}

/// The innovation form of a stationary model: associated deterministic
/// system followed by the gain recursion. The result is minimal only if
/// the associated system is.
pub fn innovation_form(m: &SwitchedModel, opts: FixedPointOptions) -> Result<(InnovationModel, GainIteration)> {
    let assoc = associated_dlss(m, opts)?;
    let t_ys = stochastic_output_covariance(m, &assoc.p_sigma);
    associated_slss(&assoc.dlss, m.n_u(), &m.p, &m.q_u, &t_ys, opts)
}

/// Ho-Kalman output together with the Hankel matrices it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct HoKalman {
    pub model: DeterministicModel,
    pub hankel: HankelSet,
    pub singular_values: Vec<f64>,
}

/// Realization of the selected Markov values, `Â_σ = H⁻¹ H_σ`,
/// `B̂_σ = H⁻¹ H_{α,σ}`, `Ĉ = H_β`, `D̂ = M(ε)`, returned in the balanced
/// coordinates `x' = S^{1/2} Vᵀ x` of the SVD `H = U S Vᵀ`.
pub fn ho_kalman(sel: &Selection, m: &WordTable, m_eps: &DMatrix<f64>, modes: usize, rank_tol: f64) -> Result<DeterministicModel> {
    Ok(ho_kalman_full(sel, m, m_eps, modes, rank_tol)?.model)
}

pub fn ho_kalman_full(
    sel: &Selection,
    m: &WordTable,
    m_eps: &DMatrix<f64>,
    modes: usize,
    rank_tol: f64,
) -> Result<HoKalman> {
    if m_eps.shape() != m.shape() {
        return Err(Error::Dimension(format!(
            "M(ε) is {:?} but the table holds {:?} matrices",
            m_eps.shape(),
            m.shape()
        )));
    }
    let hankel = build_hankel(sel, m, modes)?;
    let n = sel.dim();
    let svd = hankel.h.clone().svd(true, true);
    let singular_values = linalg::singular_values(&hankel.h);
    let rank = linalg::rank_of_singular_values(&singular_values, rank_tol);
    if rank < n {
        return Err(Error::SingularHankel { rank, expected: n });
    }
    let (u, v_t) = (
        svd.u.expect("left singular vectors requested"),
        svd.v_t.expect("right singular vectors requested"),
    );
    let inv_sqrt = DMatrix::from_diagonal(&svd.singular_values.map(|s| 1.0 / s.sqrt()));
    // O⁻¹ = S^{-1/2} Uᵀ and R⁻¹ = V S^{-1/2} for H = O R
    let o_inv = &inv_sqrt * u.transpose();
    let r_inv = v_t.transpose() * &inv_sqrt;
    let a = hankel.shifted.iter().map(|h| &o_inv * h * &r_inv).collect();
    let b = hankel.input.iter().map(|h| &o_inv * h).collect();
    Ok(HoKalman {
        model: DeterministicModel {
            a,
            b,
            c: &hankel.output * &r_inv,
            d: m_eps.clone(),
        },
        hankel,
        singular_values,
    })
}

/// `Ψ(w) = Λ^{y,u}_w Q_u⁻¹` for the requested words (and `ε`).
pub fn psi_uy<'a, I>(cov: &CovarianceTable, words: I) -> Result<WordTable>
where
    I: IntoIterator<Item = &'a Word>,
{
    let q_inv = cov
        .q_u
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidModel("input covariance is singular".into()))?;
    let (ny, nu) = (cov.n_y(), cov.n_u());
    let mut t = WordTable::new(ny, nu);
    t.insert(Word::empty(), cov.lambda_yu.get_or_err(&Word::empty())? * &q_inv)?;
    for w in words {
        t.insert(w.clone(), cov.lambda_yu.get_or_err(w)? * &q_inv)?;
    }
    Ok(t)
}

/// Covariances of the deterministic output component.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicCovariances {
    /// `Λ^{y^d,y^d}_w`
    pub lambda: WordTable,
    /// `T^{y^d,y^d}_{σ,σ}`
    pub t: Vec<DMatrix<f64>>,
    /// `P̃_σ`, `p_σ` times the deterministic state covariance.
    pub p_tilde: Vec<DMatrix<f64>>,
    pub convergence: Convergence,
}

/// Fixed point `P̃_σ = p_σ Σ (Ã P̃ Ãᵀ / p_{σ1} + B̃ Q_u B̃ᵀ)` for a
/// realization of `Ψ`.
pub fn deterministic_state_covariance(
    md: &DeterministicModel,
    q_u: &DMatrix<f64>,
    p: &[f64],
    opts: FixedPointOptions,
) -> Result<(Vec<DMatrix<f64>>, Convergence)> {
    let weights: Vec<f64> = p.iter().map(|&ps| 1.0 / ps).collect();
    let forcing: Vec<DMatrix<f64>> = md.b.iter().map(|b| b * q_u * b.transpose()).collect();
    mode_lyapunov(&md.a, &weights, &forcing, p, opts, "deterministic state covariance recursion")
}

/// `Λ^{y^d,y^d}_{σs} = C̃ Ã_s (Ã_σ P̃_σ C̃ᵀ / p_σ + B̃_σ Q_u D̃ᵀ)` and
/// `T^{y^d,y^d}_{σ,σ} = C̃ P̃_σ C̃ᵀ / p_σ + D̃ Q_u D̃ᵀ`, from a realization
/// `md` of `Ψ`.
pub fn lambda_ydyd(
    md: &DeterministicModel,
    q_u: &DMatrix<f64>,
    p: &[f64],
    words: &[Word],
    opts: FixedPointOptions,
) -> Result<DeterministicCovariances> {
    md.validate()?;
    if md.modes() != p.len() {
        return Err(Error::Dimension(format!(
            "{} modes in the model, {} probabilities",
            md.modes(),
            p.len()
        )));
    }
    let (p_tilde, convergence) = deterministic_state_covariance(md, q_u, p, opts)?;
    let (c, d) = (&md.c, &md.d);
    let ny = md.n_y();
    let tails: Vec<DMatrix<f64>> = (0..p.len())
        .map(|s| &md.a[s] * &p_tilde[s] * c.transpose() / p[s] + &md.b[s] * q_u * d.transpose())
        .collect();
    let mut lambda = WordTable::new(ny, ny);
    for w in words {
        let (sigma, rest) = w
            .split_first()
            .ok_or_else(|| Error::InvalidSelection("the empty word has no cross-covariance".into()))?;
        w.check(p.len())?;
        let a_s = matrix_product_along_word(&md.a, &rest)?;
        lambda.insert(w.clone(), c * a_s * &tails[sigma - 1])?;
    }
    let t = (0..p.len())
        .map(|s| linalg::symmetrize(&(c * &p_tilde[s] * c.transpose() / p[s] + d * q_u * d.transpose())))
        .collect();
    Ok(DeterministicCovariances {
        lambda,
        t,
        p_tilde,
        convergence,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizationOptions {
    pub fixed_point: FixedPointOptions,
    /// Relative singular-value threshold for Hankel rank decisions.
    pub rank_tol: f64,
}

impl Default for RealizationOptions {
    fn default() -> Self {
        RealizationOptions {
            fixed_point: FixedPointOptions::default(),
            rank_tol: linalg::DEFAULT_RANK_TOL,
        }
    }
}

/// Ranks, singular values and iteration counts of one realization run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RealizationDiagnostics {
    pub psi_singular_values: Vec<f64>,
    pub joint_singular_values: Vec<f64>,
    pub deterministic_covariance: Convergence,
    pub gain_iteration: Convergence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub model: InnovationModel,
    /// Realization of `Ψ` (step 2).
    pub deterministic: DeterministicModel,
    /// Realization of the joint Markov function (step 5).
    pub joint: DeterministicModel,
    pub yd: DeterministicCovariances,
    pub t_ys: Vec<DMatrix<f64>>,
    pub gains: GainIteration,
    pub diagnostics: RealizationDiagnostics,
}

/// Joint Markov values `[Λ^{y,u}_w Q_u⁻¹, Λ^{y,y}_w − Λ^{y^d,y^d}_w]` on
/// `words`, plus `M(ε) = [Ψ(ε), I]`.
pub fn joint_markov_table(
    cov: &CovarianceTable,
    yd: &DeterministicCovariances,
    words: &[Word],
) -> Result<(WordTable, DMatrix<f64>)> {
    let (ny, nu) = (cov.n_y(), cov.n_u());
    let psi = psi_uy(cov, words)?;
    let mut m = WordTable::new(ny, nu + ny);
    for w in words {
        let ys = cov.lambda_yy.get_or_err(w)? - yd.lambda.get_or_err(w)?;
        m.insert(w.clone(), linalg::hstack(&[psi.get_or_err(w)?, &ys]))?;
    }
    let m_eps = linalg::hstack(&[psi.get_or_err(&Word::empty())?, &DMatrix::identity(ny, ny)]);
    Ok((m, m_eps))
}

/// Minimal innovation-form model from covariances. `sel` indexes the joint
/// Markov function (`n_u + n_y` columns), `sel_bar` the deterministic part
/// (`n_u` columns).
pub fn covariance_realization(
    cov: &CovarianceTable,
    sel: &Selection,
    sel_bar: &Selection,
    opts: RealizationOptions,
) -> Result<Realization> {
    cov.validate()?;
    let modes = cov.modes();
    let nu = cov.n_u();
    let bar_words: Vec<Word> = required_words(sel_bar, modes).into_iter().collect();
    let words: Vec<Word> = required_words(sel, modes).into_iter().collect();

    let psi = psi_uy(cov, &bar_words).map_err(|e| e.at(Stage::Realization(1)))?;
    let psi_eps = psi.get_or_err(&Word::empty())?.clone();
    let hk_bar = ho_kalman_full(sel_bar, &psi, &psi_eps, modes, opts.rank_tol)
        .map_err(|e| e.at(Stage::Realization(2)))?;
    let yd = lambda_ydyd(&hk_bar.model, &cov.q_u, &cov.p, &words, opts.fixed_point)
        .map_err(|e| e.at(Stage::Realization(3)))?;
    let (m, m_eps) = joint_markov_table(cov, &yd, &words).map_err(|e| e.at(Stage::Realization(4)))?;
    let hk = ho_kalman_full(sel, &m, &m_eps, modes, opts.rank_tol).map_err(|e| e.at(Stage::Realization(5)))?;
    let t_ys: Vec<DMatrix<f64>> = cov
        .t_yy
        .iter()
        .zip(&yd.t)
        .map(|(t, td)| linalg::symmetrize(&(t - td)))
        .collect();
    let (model, gains) = associated_slss(&hk.model, nu, &cov.p, &cov.q_u, &t_ys, opts.fixed_point)
        .map_err(|e| e.at(Stage::Realization(6)))?;
    Ok(Realization {
        diagnostics: RealizationDiagnostics {
            psi_singular_values: hk_bar.singular_values,
            joint_singular_values: hk.singular_values,
            deterministic_covariance: yd.convergence.clone(),
            gain_iteration: gains.convergence.clone(),
        },
        model,
        deterministic: hk_bar.model,
        joint: hk.model,
        yd,
        t_ys,
        gains,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    /// Maximum number of candidate selections examined.
    pub budget: usize,
    /// Longest `u_i` / `v_j` word considered; defaults to `n`.
    pub max_word_len: Option<usize>,
    pub rank_tol: f64,
    /// Also offer the empty word in both pools, ahead of the others.
    pub include_empty: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            budget: 100_000,
            max_word_len: None,
            rank_tol: linalg::DEFAULT_RANK_TOL,
            include_empty: false,
        }
    }
}

/// First selection (in enumeration order) whose Hankel matrix has rank `n`.
pub fn search_selection(m: &WordTable, modes: usize, n: usize, opts: SearchOptions) -> Result<Selection> {
    Ok(search_selections(m, modes, n, 1, opts)?.remove(0))
}

/// Up to `count` distinct rank-`n` selections, in enumeration order: row
/// and column pools are ordered by word (length, then lexicographic) and
/// index, combinations of column entries vary fastest. Candidates needing
/// words absent from `m` are skipped.
pub fn search_selections(
    m: &WordTable,
    modes: usize,
    n: usize,
    count: usize,
    opts: SearchOptions,
) -> Result<Vec<Selection>> {
    if n == 0 {
        return Err(Error::InvalidSelection("target dimension must be positive".into()));
    }
    let (ny, ncols) = m.shape();
    let len = opts.max_word_len.unwrap_or(n).max(1);
    let shortest = usize::from(!opts.include_empty);
    let words = Word::all_up_to(modes, shortest, len);
    let alpha_pool: Vec<RowIndex> = words
        .iter()
        .flat_map(|w| (1..=ny).map(move |row| RowIndex { word: w.clone(), row }))
        .collect();
    let mut beta_pool: Vec<ColumnIndex> = Vec::new();
    for prefix in Word::all_up_to(modes, shortest + 1, len + 1) {
        let (mode, word) = prefix.split_first().expect("nonempty");
        for col in 1..=ncols {
            beta_pool.push(ColumnIndex {
                mode,
                word: word.clone(),
                col,
            });
        }
    }

    let entry = |r: &RowIndex, c: &ColumnIndex| -> Option<f64> {
        m.get(&c.prefix().concat(&r.word)).map(|x| x[(r.row - 1, c.col - 1)])
    };
    let mut found = Vec::new();
    let mut examined = 0usize;
    'outer: for alpha in alpha_pool.iter().combinations(n) {
        for beta in beta_pool.iter().combinations(n) {
            if examined >= opts.budget {
                break 'outer;
            }
            examined += 1;
            let mut h = DMatrix::zeros(n, n);
            let mut complete = true;
            for (i, r) in alpha.iter().enumerate() {
                for (j, c) in beta.iter().enumerate() {
                    match entry(r, c) {
                        Some(v) => h[(i, j)] = v,
                        None => {
                            complete = false;
                        }
                    }
                }
            }
            if !complete || linalg::numerical_rank(&h, opts.rank_tol) < n {
                continue;
            }
            let sel = Selection::new(
                alpha.iter().map(|r| (*r).clone()).collect(),
                beta.iter().map(|c| (*c).clone()).collect(),
            );
            if build_hankel(&sel, m, modes).is_err() {
                continue;
            }
            found.push(sel);
            if found.len() >= count {
                break 'outer;
            }
        }
    }
    if found.is_empty() {
        return Err(Error::NoSelectionFound { n, budget: opts.budget });
    }
    Ok(found)
}
