//! Deterministic and stochastic switched models, Markov parameters,
//! minimality ranks and isomorphism recovery.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, DEFAULT_RANK_TOL};
use crate::table::WordTable;
use crate::word::{check_probabilities, matrix_product_along_word, Word};

/// Tolerance on `sum(p) = 1`.
pub const PROBABILITY_TOL: f64 = 1e-12;

/// Noise-free switched system `x+ = A_q x + B_q u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicModel {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl DeterministicModel {
    pub fn modes(&self) -> usize {
        self.a.len()
    }

    pub fn n_x(&self) -> usize {
        self.c.ncols()
    }

    pub fn n_u(&self) -> usize {
        self.d.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (nx, nu, ny) = (self.n_x(), self.n_u(), self.n_y());
        if self.a.is_empty() || self.a.len() != self.b.len() {
            return Err(Error::Dimension(format!(
                "{} A matrices and {} B matrices",
                self.a.len(),
                self.b.len()
            )));
        }
        if self.d.nrows() != ny {
            return Err(Error::Dimension("D has the wrong row count".into()));
        }
        for (s, (a, b)) in self.a.iter().zip(&self.b).enumerate() {
            if a.shape() != (nx, nx) || b.shape() != (nx, nu) {
                return Err(Error::Dimension(format!(
                    "mode {}: A is {:?}, B is {:?}; expected ({nx}, {nx}) and ({nx}, {nu})",
                    s + 1,
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }

    /// `M(ε) = D`, `M(σ s) = C A_s B_σ` with `σ` the first letter.
    pub fn markov_parameter(&self, w: &Word) -> Result<DMatrix<f64>> {
        match w.split_first() {
            None => Ok(self.d.clone()),
            Some((sigma, rest)) => {
                w.check(self.modes())?;
                let a_s = matrix_product_along_word(&self.a, &rest)?;
                Ok(&self.c * a_s * &self.b[sigma - 1])
            }
        }
    }

    pub fn markov_table<'a, I>(&self, words: I) -> Result<WordTable>
    where
        I: IntoIterator<Item = &'a Word>,
    {
        WordTable::from_fn(self.n_y(), self.n_u(), words, |w| self.markov_parameter(w))
    }

    /// `sum_σ A_σ ⊗ A_σ`, the unweighted Kronecker sum.
    pub fn kronecker_sum(&self) -> DMatrix<f64> {
        let nx = self.n_x();
        self.a
            .iter()
            .fold(DMatrix::zeros(nx * nx, nx * nx), |acc, a| acc + linalg::kron(a, a))
    }
}

/// Spectral radius of `sum_σ p_σ A_σ ⊗ A_σ`. A stochastic model is
/// stationary iff this is below one.
pub fn stability_margin(a: &[DMatrix<f64>], p: &[f64]) -> f64 {
    let n = a.first().map_or(0, |m| m.nrows());
    let sum = a
        .iter()
        .zip(p)
        .fold(DMatrix::zeros(n * n, n * n), |acc, (a, &ps)| {
            acc + linalg::kron(a, a) * ps
        });
    linalg::spectral_radius(&sum)
}

/// Stationary switched system with i.i.d. switching:
///
/// ```text
/// x(t+1) = A_q x(t) + B_q u(t) + K_q v(t)
/// y(t)   = C x(t) + D u(t) + F v(t)
/// ```
///
/// `q_v[σ]` stores `p_σ · E[v vᵀ | q = σ]`, the quantity entering the
/// covariance recursions directly.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedModel {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub k: Vec<DMatrix<f64>>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub p: Vec<f64>,
    pub q_u: DMatrix<f64>,
    pub q_v: Vec<DMatrix<f64>>,
}

impl SwitchedModel {
    pub fn modes(&self) -> usize {
        self.a.len()
    }

    pub fn n_x(&self) -> usize {
        self.c.ncols()
    }

    pub fn n_u(&self) -> usize {
        self.d.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn n_noise(&self) -> usize {
        self.f.ncols()
    }

    /// Conditional noise covariance `E[v vᵀ | q = σ] = q_v[σ] / p_σ`.
    pub fn noise_covariance(&self, sigma: usize) -> DMatrix<f64> {
        &self.q_v[sigma - 1] / self.p[sigma - 1]
    }

    /// Shapes, probabilities, SPD covariances and stationarity.
    pub fn validate(&self) -> Result<()> {
        self.validate_shapes()?;
        check_probabilities(&self.p, PROBABILITY_TOL)?;
        if !linalg::is_spd(&self.q_u) {
            return Err(Error::InvalidModel(
                "input covariance is not symmetric positive definite".into(),
            ));
        }
        for (s, q) in self.q_v.iter().enumerate() {
            if !linalg::is_spd(q) {
                return Err(Error::InvalidModel(format!(
                    "noise covariance of mode {} is not symmetric positive definite",
                    s + 1
                )));
            }
        }
        let rho = self.stability_margin();
        if !(rho < 1.0) {
            return Err(Error::InvalidModel(format!(
                "not mean-square stable: spectral radius {rho} >= 1"
            )));
        }
        Ok(())
    }

    pub fn validate_shapes(&self) -> Result<()> {
        let (d, nx, nu, ny, nn) = (
            self.modes(),
            self.n_x(),
            self.n_u(),
            self.n_y(),
            self.n_noise(),
        );
        let dim = |what: String| Err(Error::Dimension(what));
        if d == 0 {
            return dim("model has no modes".into());
        }
        if self.b.len() != d || self.k.len() != d || self.q_v.len() != d || self.p.len() != d {
            return dim(format!(
                "per-mode lists disagree: {} A, {} B, {} K, {} Q_v, {} p",
                d,
                self.b.len(),
                self.k.len(),
                self.q_v.len(),
                self.p.len()
            ));
        }
        if nx == 0 || nu == 0 || ny == 0 {
            return dim("n_x, n_u and n_y must be positive".into());
        }
        if self.d.nrows() != ny || self.f.nrows() != ny {
            return dim("D and F must have n_y rows".into());
        }
        if self.q_u.shape() != (nu, nu) {
            return dim(format!("Q_u is {:?}, expected ({nu}, {nu})", self.q_u.shape()));
        }
        for s in 0..d {
            if self.a[s].shape() != (nx, nx)
                || self.b[s].shape() != (nx, nu)
                || self.k[s].shape() != (nx, nn)
                || self.q_v[s].shape() != (nn, nn)
            {
                return dim(format!("matrices of mode {} have inconsistent shapes", s + 1));
            }
        }
        Ok(())
    }

    pub fn stability_margin(&self) -> f64 {
        stability_margin(&self.a, &self.p)
    }

    /// State change `x' = T x`.
    pub fn transform(&self, t: &DMatrix<f64>) -> Result<SwitchedModel> {
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Dimension("transformation is singular".into()))?;
        let mut m = self.clone();
        m.a = self.a.iter().map(|a| t * a * &t_inv).collect();
        m.b = self.b.iter().map(|b| t * b).collect();
        m.k = self.k.iter().map(|k| t * k).collect();
        m.c = &self.c * &t_inv;
        Ok(m)
    }

    /// The noise-driven dLSS `({A_σ}, {[B_σ K_σ]}, C, [D F])` whose Markov
    /// parameters are invariant under state isomorphism.
    pub fn joint_dlss(&self) -> DeterministicModel {
        DeterministicModel {
            a: self.a.clone(),
            b: self
                .b
                .iter()
                .zip(&self.k)
                .map(|(b, k)| linalg::hstack(&[b, k]))
                .collect(),
            c: self.c.clone(),
            d: linalg::hstack(&[&self.d, &self.f]),
        }
    }
}

/// A [`SwitchedModel`] in innovation form: `F = I`, noise dimension `n_y`,
/// and `q_v[σ] = p_σ · E[e eᵀ | q = σ]` for the innovation `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationModel(SwitchedModel);

impl InnovationModel {
    pub fn new(m: SwitchedModel) -> Result<Self> {
        m.validate_shapes()?;
        let ny = m.n_y();
        if m.f != DMatrix::identity(ny, ny) {
            return Err(Error::InvalidModel(
                "innovation form requires F = I".into(),
            ));
        }
        for (s, q) in m.q_v.iter().enumerate() {
            if !linalg::is_spd(q) {
                return Err(Error::NotFullRank(format!(
                    "innovation covariance of mode {} is not positive definite",
                    s + 1
                )));
            }
        }
        Ok(InnovationModel(m))
    }

    pub fn as_switched(&self) -> &SwitchedModel {
        &self.0
    }

    pub fn into_switched(self) -> SwitchedModel {
        self.0
    }

    pub fn transform(&self, t: &DMatrix<f64>) -> Result<InnovationModel> {
        Ok(InnovationModel(self.0.transform(t)?))
    }
}

impl std::ops::Deref for InnovationModel {
    type Target = SwitchedModel;

    fn deref(&self) -> &SwitchedModel {
        &self.0
    }
}

/// Columns `A_w B_σ` over `|w| < depth`.
pub fn reachability_matrix(m: &DeterministicModel, depth: usize) -> Result<DMatrix<f64>> {
    let mut blocks = Vec::new();
    for w in Word::all_up_to(m.modes(), 0, depth.saturating_sub(1)) {
        let a_w = matrix_product_along_word(&m.a, &w)?;
        for b in &m.b {
            blocks.push(&a_w * b);
        }
    }
    let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
    Ok(linalg::hstack(&refs))
}

/// Rows `C A_w` over `|w| < depth`.
pub fn observability_matrix(m: &DeterministicModel, depth: usize) -> Result<DMatrix<f64>> {
    let blocks = Word::all_up_to(m.modes(), 0, depth.saturating_sub(1))
        .iter()
        .map(|w| Ok(&m.c * matrix_product_along_word(&m.a, w)?))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
    Ok(linalg::vstack(&refs))
}

/// Ranks of the extended reachability and observability matrices; both
/// equal `n_x` iff the model is minimal.
pub fn reach_obs_ranks(m: &DeterministicModel, depth: usize, rel_tol: f64) -> Result<(usize, usize)> {
    m.validate()?;
    let r = reachability_matrix(m, depth)?;
    let o = observability_matrix(m, depth)?;
    Ok((
        linalg::numerical_rank(&r, rel_tol),
        linalg::numerical_rank(&o, rel_tol),
    ))
}

pub fn is_minimal(m: &DeterministicModel) -> Result<bool> {
    let n = m.n_x();
    Ok(reach_obs_ranks(m, n, DEFAULT_RANK_TOL)? == (n, n))
}

/// Per-relation max-norm residuals of a candidate isomorphism.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IsomorphismResiduals {
    pub a: f64,
    pub b: f64,
    pub k: f64,
    pub c: f64,
    pub d: f64,
    /// Informational: innovation covariances are not part of the relation.
    pub q_v: f64,
}

impl IsomorphismResiduals {
    /// Largest residual over the five defining relations.
    pub fn max(&self) -> f64 {
        self.a.max(self.b).max(self.k).max(self.c).max(self.d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Isomorphism {
    pub t: DMatrix<f64>,
    pub residuals: IsomorphismResiduals,
}

/// Residuals of `Ã = T A T⁻¹`, `B̃ = T B`, `K̃ = T K`, `C̃ = C T⁻¹`, `D̃ = D`.
pub fn isomorphism_residuals(
    m1: &SwitchedModel,
    m2: &SwitchedModel,
    t: &DMatrix<f64>,
) -> Option<IsomorphismResiduals> {
    let t_inv = t.clone().try_inverse()?;
    let worst = |pairs: Vec<f64>| pairs.into_iter().fold(0.0, f64::max);
    Some(IsomorphismResiduals {
        a: worst(
            m1.a.iter()
                .zip(&m2.a)
                .map(|(a1, a2)| linalg::max_norm(&(t * a1 * &t_inv - a2)))
                .collect(),
        ),
        b: worst(
            m1.b.iter()
                .zip(&m2.b)
                .map(|(b1, b2)| linalg::max_norm(&(t * b1 - b2)))
                .collect(),
        ),
        k: worst(
            m1.k.iter()
                .zip(&m2.k)
                .map(|(k1, k2)| linalg::max_norm(&(t * k1 - k2)))
                .collect(),
        ),
        c: linalg::max_norm(&(&m1.c * &t_inv - &m2.c)),
        d: linalg::max_norm(&(&m1.d - &m2.d)),
        q_v: worst(
            m1.q_v
                .iter()
                .zip(&m2.q_v)
                .map(|(q1, q2)| linalg::max_norm(&(q1 - q2)))
                .collect(),
        ),
    })
}

/// Recovers `T` with `m2 = T · m1` by matching reachability spans of the
/// noise-driven dLSSs, falling back to observability when `[B K]` does not
/// reach the whole state space. The candidate is always verified.
pub fn find_isomorphism(m1: &SwitchedModel, m2: &SwitchedModel, tol: f64) -> Result<Isomorphism> {
    m1.validate_shapes()?;
    m2.validate_shapes()?;
    if (m1.modes(), m1.n_x(), m1.n_u(), m1.n_y(), m1.n_noise())
        != (m2.modes(), m2.n_x(), m2.n_u(), m2.n_y(), m2.n_noise())
    {
        return Err(Error::Dimension(format!(
            "models differ in dimensions: (D, n_x, n_u, n_y) = ({}, {}, {}, {}) vs ({}, {}, {}, {})",
            m1.modes(),
            m1.n_x(),
            m1.n_u(),
            m1.n_y(),
            m2.modes(),
            m2.n_x(),
            m2.n_u(),
            m2.n_y()
        )));
    }
    let n = m1.n_x();
    let (d1, d2) = (m1.joint_dlss(), m2.joint_dlss());
    let r1 = reachability_matrix(&d1, n)?;
    let t = if linalg::numerical_rank(&r1, DEFAULT_RANK_TOL) == n {
        let r2 = reachability_matrix(&d2, n)?;
        r2 * linalg::pinv(&r1, DEFAULT_RANK_TOL)
    } else {
        let o1 = observability_matrix(&d1, n)?;
        let o2 = observability_matrix(&d2, n)?;
        let t_inv = linalg::pinv(&o1, DEFAULT_RANK_TOL) * o2;
        match t_inv.try_inverse() {
            Some(t) => t,
            None => return Err(Error::NotIsomorphic { residual: f64::INFINITY }),
        }
    };
    if linalg::numerical_rank(&t, 1e-12) < n {
        return Err(Error::NotIsomorphic {
            residual: f64::INFINITY,
        });
    }
    let residuals = isomorphism_residuals(m1, m2, &t).ok_or(Error::NotIsomorphic {
        residual: f64::INFINITY,
    })?;
    if residuals.max() <= tol {
        Ok(Isomorphism { t, residuals })
    } else {
        Err(Error::NotIsomorphic {
            residual: residuals.max(),
        })
    }
}
