//! Sample paths of stationary switched systems.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::SwitchedModel;
use crate::word::check_probabilities;

pub const DEFAULT_BURN_IN: usize = 1000;

/// Aligned observations `y(t)`, `u(t)`, `q(t)`; rows are time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: DMatrix<f64>,
    pub u: DMatrix<f64>,
    /// Modes, 1-based.
    pub q: Vec<usize>,
    /// Time stamp of the first row.
    pub t0: i64,
}

impl Dataset {
    pub fn new(y: DMatrix<f64>, u: DMatrix<f64>, q: Vec<usize>, t0: i64) -> Result<Self> {
        let d = Dataset { y, u, q, t0 };
        if d.y.nrows() != d.q.len() || d.u.nrows() != d.q.len() {
            return Err(Error::Dimension(format!(
                "series lengths differ: y {}, u {}, q {}",
                d.y.nrows(),
                d.u.nrows(),
                d.q.len()
            )));
        }
        if d.q.contains(&0) {
            return Err(Error::InvalidMode { mode: 0, modes: 0 });
        }
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn n_y(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_u(&self) -> usize {
        self.u.ncols()
    }

    pub fn modes(&self) -> usize {
        self.q.iter().copied().max().unwrap_or(0)
    }

    /// Rows `start..end`, keeping time stamps.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        let len = end - start;
        Dataset {
            y: self.y.rows(start, len).into_owned(),
            u: self.u.rows(start, len).into_owned(),
            q: self.q[start..end].to_vec(),
            t0: self.t0 + start as i64,
        }
    }

    /// Observed mode frequencies over `modes` letters.
    pub fn mode_frequencies(&self, modes: usize) -> Vec<f64> {
        let mut counts = vec![0usize; modes];
        for &q in &self.q {
            if q >= 1 && q <= modes {
                counts[q - 1] += 1;
            }
        }
        let n = self.q.len().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputDistribution {
    /// Independent `U(low, high)` on each channel.
    Uniform { low: f64, high: f64 },
    /// Zero-mean Gaussian with the model's input covariance.
    Gaussian,
}

impl Default for InputDistribution {
    fn default() -> Self {
        InputDistribution::Uniform {
            low: -1.0,
            high: 1.0,
        }
    }
}

impl InputDistribution {
    /// Second moment `E[u uᵀ]` when this distribution drives `n_u` channels;
    /// `None` for the Gaussian case, whose covariance is the model's.
    pub fn second_moment(&self, n_u: usize) -> Option<DMatrix<f64>> {
        match *self {
            InputDistribution::Uniform { low, high } => {
                let mean = 0.5 * (low + high);
                let var = (high - low).powi(2) / 12.0;
                Some(DMatrix::identity(n_u, n_u) * (var + mean * mean))
            }
            InputDistribution::Gaussian => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub length: usize,
    pub burn_in: usize,
    pub input: InputDistribution,
}

impl SimConfig {
    pub fn new(seed: u64, length: usize) -> Self {
        SimConfig {
            seed,
            length,
            burn_in: DEFAULT_BURN_IN,
            input: InputDistribution::default(),
        }
    }
}

/// A simulated dataset and its noise-free output `y(t) - F v(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub data: Dataset,
    pub noise_free: DMatrix<f64>,
}

fn draw_mode<R: Rng>(cumulative: &[f64], rng: &mut R) -> usize {
    let r: f64 = rng.random();
    cumulative
        .iter()
        .position(|&c| r < c)
        .unwrap_or(cumulative.len() - 1)
        + 1
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    p.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// `length` i.i.d. draws from `p`, as 1-based modes.
pub fn sample_switching<R: Rng>(p: &[f64], length: usize, rng: &mut R) -> Result<Vec<usize>> {
    check_probabilities(p, 1e-9)?;
    let cum = cumulative(p);
    Ok((0..length).map(|_| draw_mode(&cum, rng)).collect())
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Runs the model from `x = 0`, discarding `burn_in` steps.
pub fn simulate(model: &SwitchedModel, cfg: &SimConfig) -> Result<Simulation> {
    model.validate()?;
    if cfg.length == 0 {
        return Err(Error::InsufficientData("simulation length must be positive".into()));
    }
    if let InputDistribution::Uniform { low, high } = cfg.input {
        if !(low < high) {
            return Err(Error::InvalidModel(format!(
                "uniform input needs low < high, got ({low}, {high})"
            )));
        }
    }
    let (nx, nu, ny, nn) = (model.n_x(), model.n_u(), model.n_y(), model.n_noise());
    let mut rng = rng_from_seed(cfg.seed);
    let cum = cumulative(&model.p);
    let noise_chol: Vec<DMatrix<f64>> = (1..=model.modes())
        .map(|s| {
            model
                .noise_covariance(s)
                .cholesky()
                .map(|c| c.l())
                .ok_or_else(|| Error::InvalidModel(format!("noise covariance of mode {s} is not SPD")))
        })
        .collect::<Result<_>>()?;
    let input_chol = match cfg.input {
        InputDistribution::Gaussian => Some(
            model
                .q_u
                .clone()
                .cholesky()
                .map(|c| c.l())
                .ok_or_else(|| Error::InvalidModel("input covariance is not SPD".into()))?,
        ),
        InputDistribution::Uniform { .. } => None,
    };

    let total = cfg.burn_in + cfg.length;
    let mut y = DMatrix::zeros(cfg.length, ny);
    let mut noise_free = DMatrix::zeros(cfg.length, ny);
    let mut u = DMatrix::zeros(cfg.length, nu);
    let mut q = Vec::with_capacity(cfg.length);
    let mut x = DVector::zeros(nx);

    for step in 0..total {
        let mode = draw_mode(&cum, &mut rng);
        let ut = match (&cfg.input, &input_chol) {
            (InputDistribution::Uniform { low, high }, _) => {
                DVector::from_fn(nu, |_, _| rng.random_range(*low..*high))
            }
            (InputDistribution::Gaussian, Some(l)) => {
                l * DVector::from_fn(nu, |_, _| rng.sample::<f64, _>(StandardNormal))
            }
            (InputDistribution::Gaussian, None) => unreachable!("factor computed above"),
        };
        let vt = &noise_chol[mode - 1] * DVector::from_fn(nn, |_, _| rng.sample::<f64, _>(StandardNormal));
        let clean = &model.c * &x + &model.d * &ut;
        if step >= cfg.burn_in {
            let row = step - cfg.burn_in;
            let yt = &clean + &model.f * &vt;
            y.row_mut(row).copy_from(&yt.transpose());
            noise_free.row_mut(row).copy_from(&clean.transpose());
            u.row_mut(row).copy_from(&ut.transpose());
            q.push(mode);
        }
        x = &model.a[mode - 1] * &x + &model.b[mode - 1] * &ut + &model.k[mode - 1] * &vt;
    }
    Ok(Simulation {
        data: Dataset::new(y, u, q, 0)?,
        noise_free,
    })
}

/// Runs the recursion on given inputs, modes and noise from `x = 0`.
/// Returns the outputs `y` (rows are time steps).
pub fn run_with_noise(
    model: &SwitchedModel,
    q: &[usize],
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    model.validate_shapes()?;
    if u.nrows() != q.len() || v.nrows() != q.len() || u.ncols() != model.n_u() || v.ncols() != model.n_noise() {
        return Err(Error::Dimension("inputs, noise and modes disagree with the model".into()));
    }
    let mut x = DVector::zeros(model.n_x());
    let mut y = DMatrix::zeros(q.len(), model.n_y());
    for (t, &mode) in q.iter().enumerate() {
        if mode == 0 || mode > model.modes() {
            return Err(Error::InvalidMode { mode, modes: model.modes() });
        }
        let ut = u.row(t).transpose();
        let vt = v.row(t).transpose();
        let yt = &model.c * &x + &model.d * &ut + &model.f * &vt;
        y.row_mut(t).copy_from(&yt.transpose());
        x = &model.a[mode - 1] * &x + &model.b[mode - 1] * &ut + &model.k[mode - 1] * &vt;
    }
    Ok(y)
}
