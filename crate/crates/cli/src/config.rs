//! Run configuration: one TOML file per run. Relative paths inside it are
//! taken relative to the file's directory.

use std::path::{Path, PathBuf};

use lssid::identify::{Estimator, IdentConfig, ModeProbabilities, SelectionSpec};
use lssid::realize::{FixedPointOptions, RealizationOptions, SearchOptions};
use lssid::simulate::{InputDistribution, DEFAULT_BURN_IN};
use lssid::{Selection, SimConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::format::{read_toml, SelectionFile};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Model file for `simulate`, `validate` and `consistency`.
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub simulate: SimSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub identify: IdentSection,
    #[serde(default)]
    pub consistency: ConsistencySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub length: usize,
    pub burn_in: usize,
    /// `uniform` on `[low, high]` or `gaussian` with the model's `q_u`.
    pub input: String,
    pub low: f64,
    pub high: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            length: 10_000,
            burn_in: DEFAULT_BURN_IN,
            input: "uniform".into(),
            low: -1.0,
            high: 1.0,
        }
    }
}

impl SimSection {
    pub fn to_sim(&self, seed: u64) -> CliResult<SimConfig> {
        let input = match self.input.as_str() {
            "uniform" => InputDistribution::Uniform {
                low: self.low,
                high: self.high,
            },
            "gaussian" => InputDistribution::Gaussian,
            other => return Err(CliError::Config(format!("simulate.input: unknown distribution '{other}'"))),
        };
        Ok(SimConfig {
            seed,
            length: self.length,
            burn_in: self.burn_in,
            input,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Identification data (CSV).
    pub train: Option<PathBuf>,
    /// Validation data (CSV); without it `validation_fraction` splits the tail of `train`.
    pub validation: Option<PathBuf>,
    /// Noise-free outputs aligned with `validation`.
    pub target: Option<PathBuf>,
    pub validation_fraction: Option<f64>,
    /// Covariance table for `realize`.
    pub covariances: Option<PathBuf>,
    /// Leading validation samples left out of the fit; defaults to the
    /// longest selection word.
    pub skip: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentSection {
    pub n_x: usize,
    pub n_bar: Option<usize>,
    /// `direct` or `ls`.
    pub estimator: String,
    /// Known mode probabilities; empirical frequencies when absent.
    pub probabilities: Option<Vec<f64>>,
    pub modes: Option<usize>,
    /// `search` or `file:PATH`.
    pub selection: String,
    pub rank_tol: f64,
    pub fixed_point_tol: f64,
    pub max_iter: usize,
    pub search_rank_tol: f64,
    pub search_budget: usize,
    pub search_include_empty: bool,
    pub search_max_word_len: Option<usize>,
}

impl Default for IdentSection {
    fn default() -> Self {
        let r = RealizationOptions::default();
        let s = SearchOptions::default();
        IdentSection {
            n_x: 1,
            n_bar: None,
            estimator: "ls".into(),
            probabilities: None,
            modes: None,
            selection: "search".into(),
            rank_tol: r.rank_tol,
            fixed_point_tol: r.fixed_point.tol,
            max_iter: r.fixed_point.max_iter,
            search_rank_tol: s.rank_tol,
            search_budget: s.budget,
            search_include_empty: s.include_empty,
            search_max_word_len: s.max_word_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsistencySection {
    pub lengths: Vec<usize>,
    pub seeds: Vec<u64>,
    pub max_len: usize,
    pub align_tol: f64,
}

impl Default for ConsistencySection {
    fn default() -> Self {
        ConsistencySection {
            lengths: vec![1_000, 10_000, 100_000],
            seeds: (1..=10).collect(),
            max_len: 3,
            align_tol: 1e-3,
        }
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub estimator: Option<String>,
    pub selection: Option<String>,
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads `path` (or starts from defaults), applies `ov` and resolves
    /// relative paths; the result is the effective configuration.
    pub fn load(path: Option<&Path>, ov: &Overrides) -> CliResult<RunConfig> {
        let (mut cfg, base) = match path {
            Some(p) => {
                let cfg: RunConfig = read_toml(p)?;
                (cfg, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (RunConfig::default(), PathBuf::new()),
        };
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut() {
                *x = resolve(&base, x);
            }
        };
        fix(&mut cfg.out);
        fix(&mut cfg.model);
        fix(&mut cfg.data.train);
        fix(&mut cfg.data.validation);
        fix(&mut cfg.data.target);
        fix(&mut cfg.data.covariances);
        if let Some(file) = cfg.identify.selection.strip_prefix("file:") {
            cfg.identify.selection = format!("file:{}", resolve(&base, Path::new(file)).display());
        }
        if let Some(o) = &ov.out {
            cfg.out = Some(o.clone());
        }
        if ov.seed.is_some() {
            cfg.seed = ov.seed;
        }
        if let Some(e) = &ov.estimator {
            cfg.identify.estimator = e.clone();
        }
        if let Some(s) = &ov.selection {
            cfg.identify.selection = s.clone();
        }
        cfg.seed = Some(cfg.seed.unwrap_or(1));
        cfg.out = Some(cfg.out.take().unwrap_or_else(|| PathBuf::from("out")));
        cfg.identify.n_bar = Some(cfg.identify.n_bar.unwrap_or(cfg.identify.n_x));
        Ok(cfg)
    }

    pub fn out(&self) -> &Path {
        self.out.as_deref().expect("resolved in load")
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("resolved in load")
    }

    pub fn require<'a>(&self, p: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
        p.as_deref()
            .ok_or_else(|| CliError::Config(format!("configuration key '{key}' is required")))
    }
}

impl IdentSection {
    pub fn estimator(&self) -> CliResult<Estimator> {
        match self.estimator.as_str() {
            "direct" => Ok(Estimator::Direct),
            "ls" | "least-squares" => Ok(Estimator::LeastSquares),
            other => Err(CliError::Config(format!("identify.estimator: expected direct or ls, got '{other}'"))),
        }
    }

    /// Explicit selections, or `None` for a search.
    pub fn selections(&self) -> CliResult<Option<(Selection, Selection)>> {
        match self.selection.as_str() {
            "search" => Ok(None),
            s => match s.strip_prefix("file:") {
                Some(path) => Ok(Some(read_toml::<SelectionFile>(Path::new(path))?.selections()?)),
                None => Err(CliError::Config(format!(
                    "identify.selection: expected search or file:PATH, got '{s}'"
                ))),
            },
        }
    }

    /// Fills in the number of modes when probabilities are empirical.
    pub fn settle_modes(&mut self, observed: usize) {
        if self.probabilities.is_none() && self.modes.is_none() {
            self.modes = Some(observed);
        }
    }

    pub fn realization(&self) -> RealizationOptions {
        RealizationOptions {
            fixed_point: FixedPointOptions {
                tol: self.fixed_point_tol,
                max_iter: self.max_iter,
            },
            rank_tol: self.rank_tol,
        }
    }

    pub fn to_ident(&self) -> CliResult<IdentConfig> {
        if self.n_x == 0 {
            return Err(CliError::Config("identify.n_x must be positive".into()));
        }
        let probabilities = match (&self.probabilities, self.modes) {
            (Some(p), _) => ModeProbabilities::Known(p.clone()),
            (None, Some(modes)) => ModeProbabilities::Empirical { modes },
            (None, None) => {
                return Err(CliError::Config(
                    "identify.probabilities or identify.modes is required".into(),
                ))
            }
        };
        let mut cfg = IdentConfig {
            n_x: self.n_x,
            n_bar: self.n_bar.unwrap_or(self.n_x),
            selection: SelectionSpec::Search,
            selection_bar: SelectionSpec::Search,
            estimator: self.estimator()?,
            probabilities,
            realization: self.realization(),
            search: SearchOptions {
                budget: self.search_budget,
                max_word_len: self.search_max_word_len,
                rank_tol: self.search_rank_tol,
                include_empty: self.search_include_empty,
            },
        };
        if let Some((sel, bar)) = self.selections()? {
            cfg = cfg.with_selections(sel, bar);
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_resolved() {
        let cfg = RunConfig::load(None, &Overrides::default()).unwrap();
        assert_eq!(cfg.seed, Some(1));
        assert_eq!(cfg.identify.n_bar, Some(1));
        assert_eq!(cfg.out(), Path::new("out"));
    }

    #[test]
    fn overrides_win_and_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 4\nmodel = \"m.toml\"\n[identify]\nselection = \"file:s.toml\"\n").unwrap();
        let ov = Overrides {
            seed: Some(9),
            estimator: Some("direct".into()),
            ..Overrides::default()
        };
        let cfg = RunConfig::load(Some(&path), &ov).unwrap();
        assert_eq!(cfg.seed(), 9);
        assert_eq!(cfg.model, Some(dir.path().join("m.toml")));
        assert_eq!(cfg.identify.selection, format!("file:{}", dir.path().join("s.toml").display()));
        assert_eq!(cfg.identify.estimator().unwrap(), Estimator::Direct);
    }

    #[test]
    fn unknown_keys_report_their_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 4\n\n[identify]\nn_x = 2\nestimater = \"ls\"\n").unwrap();
        let err = RunConfig::load(Some(&path), &Overrides::default()).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(err.to_string().contains("line 5"), "{err}");
    }
}
