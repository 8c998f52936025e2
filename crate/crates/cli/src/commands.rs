use std::path::Path;
use std::time::Instant;

use lssid::covariance::{empirical_covariances, least_squares_covariances, CovarianceTable, CovarianceWords};
use lssid::identify::{
    consistency_experiment, identify, identify_from_covariances, validate, ConsistencyConfig, Estimator,
    IdentDiagnostics, ModeProbabilities, ValidationReport,
};
use lssid::model::find_isomorphism;
use lssid::simulate::simulate;
use lssid::{Dataset, InnovationModel, Selection, SwitchedModel};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, SimSection};
use crate::error::{CliError, CliResult};
use crate::format::{
    from_rows, read_dataset, read_model, read_series, read_text, read_toml, to_rows, to_toml, write_dataset,
    write_model, write_series, write_text, write_toml, CovarianceFile, Rows, SelectionFile,
};

/// Structured report; every report starts with the effective configuration.
struct Report(toml::Table);

impl Report {
    fn new(command: &str, cfg: &RunConfig) -> CliResult<Self> {
        let mut r = Report(toml::Table::new());
        r.put("command", command)?;
        r.put("config", cfg)?;
        Ok(r)
    }

    fn put<T: Serialize + ?Sized>(&mut self, key: &str, value: &T) -> CliResult<()> {
        let v = toml::Value::try_from(value).map_err(|e| CliError::Config(format!("report field {key}: {e}")))?;
        self.0.insert(key.to_string(), v);
        Ok(())
    }

    fn write(&self, path: &Path) -> CliResult<()> {
        write_toml(path, &self.0)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_hash(path: &Path) -> CliResult<String> {
    Ok(sha256_hex(read_text(path)?.as_bytes()))
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    length: usize,
    model: String,
    model_sha256: String,
    data_sha256: String,
    noise_free_sha256: String,
    simulate: &'a SimSection,
}

pub fn cmd_simulate(cfg: &RunConfig) -> CliResult<()> {
    let model_path = cfg.require(&cfg.model, "model")?;
    let model = read_model(model_path)?;
    let sim = simulate(&model, &cfg.simulate.to_sim(cfg.seed())?)?;
    let out = cfg.out();
    let (data_path, nf_path) = (out.join("data.csv"), out.join("noise_free.csv"));
    write_dataset(&data_path, &sim.data)?;
    write_series(&nf_path, sim.data.t0, "y", &sim.noise_free)?;
    let manifest = Manifest {
        seed: cfg.seed(),
        length: sim.data.len(),
        model: model_path.display().to_string(),
        model_sha256: file_hash(model_path)?,
        data_sha256: file_hash(&data_path)?,
        noise_free_sha256: file_hash(&nf_path)?,
        simulate: &cfg.simulate,
    };
    write_toml(&out.join("manifest.toml"), &manifest)?;
    eprintln!("wrote {} samples to {}", sim.data.len(), data_path.display());
    Ok(())
}

fn covariance_words(cfg: &RunConfig, modes: usize) -> CliResult<CovarianceWords> {
    Ok(match cfg.identify.selections()? {
        Some((sel, bar)) => CovarianceWords::for_selections(&sel, &bar, modes),
        None => {
            let id = &cfg.identify;
            let len = id.search_max_word_len.unwrap_or(id.n_x.max(id.n_bar.unwrap_or(id.n_x))).max(1);
            CovarianceWords::all_up_to(modes, 2 * len + 2)
        }
    })
}

fn probabilities(cfg: &RunConfig, data: &Dataset) -> CliResult<Vec<f64>> {
    Ok(match cfg.identify.to_ident()?.probabilities {
        ModeProbabilities::Known(p) => p,
        ModeProbabilities::Empirical { modes } => data.mode_frequencies(modes),
    })
}

pub fn cmd_estimate(mut cfg: RunConfig) -> CliResult<()> {
    let data = read_dataset(cfg.require(&cfg.data.train, "data.train")?)?;
    cfg.identify.settle_modes(data.modes());
    let p = probabilities(&cfg, &data)?;
    let words = covariance_words(&cfg, p.len())?;
    let mut report = Report::new("estimate", &cfg)?;
    let table = match cfg.identify.estimator()? {
        Estimator::Direct => empirical_covariances(&data, &p, &words)?,
        Estimator::LeastSquares => {
            let ls = least_squares_covariances(&data, &p, &words)?;
            report.put("ls_identity_residual", &ls.identity_residual)?;
            ls.table
        }
    };
    let out = cfg.out();
    write_toml(&out.join("covariances.toml"), &CovarianceFile::from_table(&table))?;
    report.put("p", &p)?;
    report.put("n_samples", &table.n_samples)?;
    report.put("degenerate_words", &table.degenerate.iter().map(|w| w.to_string()).collect::<Vec<_>>())?;
    report.write(&out.join("report.toml"))
}

#[derive(Serialize)]
struct DiagnosticsSection {
    p: Vec<f64>,
    estimator: String,
    n_samples: Option<usize>,
    degenerate_words: Vec<String>,
    ls_identity_residual: Option<f64>,
    psi_singular_values: Vec<f64>,
    joint_singular_values: Vec<f64>,
    deterministic_covariance_iterations: usize,
    deterministic_covariance_last_delta: f64,
    gain_iterations: usize,
    gain_last_delta: f64,
}

impl DiagnosticsSection {
    fn new(d: &IdentDiagnostics) -> Self {
        let r = &d.realization;
        DiagnosticsSection {
            p: d.p.clone(),
            estimator: match d.estimator {
                Estimator::Direct => "direct".into(),
                Estimator::LeastSquares => "ls".into(),
            },
            n_samples: d.n_samples,
            degenerate_words: d.degenerate_words.iter().map(|w| w.to_string()).collect(),
            ls_identity_residual: d.ls_identity_residual,
            psi_singular_values: r.psi_singular_values.clone(),
            joint_singular_values: r.joint_singular_values.clone(),
            deterministic_covariance_iterations: r.deterministic_covariance.iterations,
            deterministic_covariance_last_delta: r.deterministic_covariance.last_delta(),
            gain_iterations: r.gain_iteration.iterations,
            gain_last_delta: r.gain_iteration.last_delta(),
        }
    }
}

fn write_realized(
    cfg: &RunConfig,
    report: &mut Report,
    model: &InnovationModel,
    d: &IdentDiagnostics,
) -> CliResult<()> {
    let out = cfg.out();
    write_model(&out.join("model.toml"), model.as_switched())?;
    let selections = SelectionFile::new(&d.selection, &d.selection_bar);
    write_toml(&out.join("selections.toml"), &selections)?;
    report.put("selections", &selections)?;
    report.put("diagnostics", &DiagnosticsSection::new(d))?;
    Ok(())
}

pub fn cmd_realize(mut cfg: RunConfig) -> CliResult<()> {
    let cov: CovarianceTable = read_toml::<CovarianceFile>(cfg.require(&cfg.data.covariances, "data.covariances")?)?
        .to_table()?;
    if cfg.identify.probabilities.is_none() {
        cfg.identify.probabilities = Some(cov.p.clone());
    }
    let id = identify_from_covariances(&cov, &cfg.identify.to_ident()?)?;
    let mut report = Report::new("realize", &cfg)?;
    write_realized(&cfg, &mut report, &id.model, &id.diagnostics)?;
    report.write(&cfg.out().join("report.toml"))
}

#[derive(Serialize)]
struct ValidationSection {
    bfr: f64,
    skipped: usize,
    samples: usize,
    target: String,
    whiteness: Vec<WhitenessEntry>,
}

#[derive(Serialize)]
struct WhitenessEntry {
    word: String,
    score: f64,
}

fn validation_section(v: &ValidationReport, samples: usize, target: &str) -> ValidationSection {
    ValidationSection {
        bfr: v.bfr,
        skipped: v.skipped,
        samples,
        target: target.into(),
        whiteness: v
            .whiteness
            .iter()
            .map(|(w, s)| WhitenessEntry {
                word: w.to_string(),
                score: *s,
            })
            .collect(),
    }
}

/// Validation data, its target and a description of where they came from.
fn validation_data(cfg: &RunConfig, train: &mut Dataset) -> CliResult<Option<(Dataset, Option<DMatrix<f64>>, String)>> {
    if let Some(path) = &cfg.data.validation {
        let data = read_dataset(path)?;
        let target = match &cfg.data.target {
            Some(t) => Some(read_series(t)?),
            None => None,
        };
        let what = match &cfg.data.target {
            Some(t) => t.display().to_string(),
            None => format!("measured output of {}", path.display()),
        };
        return Ok(Some((data, target, what)));
    }
    let Some(frac) = cfg.data.validation_fraction else {
        return Ok(None);
    };
    if !(frac > 0.0 && frac < 1.0) {
        return Err(CliError::Config("data.validation_fraction must lie in (0, 1)".into()));
    }
    let n = train.len();
    let cut = n - ((n as f64 * frac).round() as usize).clamp(1, n - 1);
    let val = train.slice(cut, n);
    *train = train.slice(0, cut);
    Ok(Some((val, None, format!("measured output of the last {} training samples", n - cut))))
}

fn default_skip(sel: &[&Selection]) -> usize {
    sel.iter().map(|s| s.max_word_len()).max().unwrap_or(0)
}

pub fn cmd_identify(mut cfg: RunConfig) -> CliResult<()> {
    let mut train = read_dataset(cfg.require(&cfg.data.train, "data.train")?)?;
    cfg.identify.settle_modes(train.modes());
    let validation = validation_data(&cfg, &mut train)?;
    let start = Instant::now();
    let id = identify(&train, &cfg.identify.to_ident()?)?;
    eprintln!("identified in {:.2}s", start.elapsed().as_secs_f64());
    let mut report = Report::new("identify", &cfg)?;
    write_realized(&cfg, &mut report, &id.model, &id.diagnostics)?;
    if let Some((val, target, what)) = validation {
        let d = &id.diagnostics;
        let skip = cfg.data.skip.unwrap_or_else(|| default_skip(&[&d.selection, &d.selection_bar]));
        let v = validate(&id.model, &val, target.as_ref(), skip)?;
        write_series(&cfg.out().join("predictions.csv"), val.t0, "y_hat", &v.predicted)?;
        report.put("validation", &validation_section(&v, val.len(), &what))?;
        eprintln!("BFR {:.2}%", v.bfr);
    }
    report.write(&cfg.out().join("report.toml"))
}

pub fn cmd_validate(cfg: RunConfig) -> CliResult<()> {
    let model = InnovationModel::new(read_model(cfg.require(&cfg.model, "model")?)?)?;
    let (data, what) = match (&cfg.data.validation, &cfg.data.train) {
        (Some(v), _) | (None, Some(v)) => (read_dataset(v)?, v),
        (None, None) => return Err(CliError::Config("configuration key 'data.validation' is required".into())),
    };
    let target = match &cfg.data.target {
        Some(t) => Some(read_series(t)?),
        None => None,
    };
    let skip = match cfg.data.skip {
        Some(s) => s,
        None => match cfg.identify.selections()? {
            Some((sel, bar)) => default_skip(&[&sel, &bar]),
            None => 0,
        },
    };
    let v = validate(&model, &data, target.as_ref(), skip)?;
    let what = match &cfg.data.target {
        Some(t) => t.display().to_string(),
        None => format!("measured output of {}", what.display()),
    };
    write_series(&cfg.out().join("predictions.csv"), data.t0, "y_hat", &v.predicted)?;
    let mut report = Report::new("validate", &cfg)?;
    report.put("validation", &validation_section(&v, data.len(), &what))?;
    eprintln!("BFR {:.2}%", v.bfr);
    report.write(&cfg.out().join("report.toml"))
}

#[derive(Serialize)]
struct ComparisonReport {
    model_a: String,
    model_b: String,
    tol: f64,
    isomorphic: bool,
    /// `T` with `b = T · a`.
    t: Rows,
    residual_a: f64,
    residual_b: f64,
    residual_k: f64,
    residual_c: f64,
    residual_d: f64,
    residual_q_v: f64,
}

/// Prints the comparison report; non-isomorphic models are a numerical failure.
pub fn cmd_compare(a: &Path, b: &Path, tol: f64, out: Option<&Path>) -> CliResult<()> {
    let (ma, mb) = (read_model(a)?, read_model(b)?);
    // An infinite tolerance returns the best candidate and its residuals.
    let iso = find_isomorphism(&ma, &mb, f64::INFINITY)?;
    let r = iso.residuals;
    let report = ComparisonReport {
        model_a: a.display().to_string(),
        model_b: b.display().to_string(),
        tol,
        isomorphic: r.max() <= tol,
        t: to_rows(&iso.t),
        residual_a: r.a,
        residual_b: r.b,
        residual_k: r.k,
        residual_c: r.c,
        residual_d: r.d,
        residual_q_v: r.q_v,
    };
    let text = to_toml(&report)?;
    print!("{text}");
    if let Some(dir) = out {
        write_text(&dir.join("comparison.toml"), &text)?;
    }
    if report.isomorphic {
        Ok(())
    } else {
        Err(lssid::Error::NotIsomorphic { residual: r.max() }.into())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformFile {
    t: Rows,
}

pub fn cmd_transform(model: &Path, matrix: &Path, output: &Path) -> CliResult<()> {
    let m: SwitchedModel = read_model(model)?;
    let t = from_rows(&read_toml::<TransformFile>(matrix)?.t, "t")?;
    write_model(output, &m.transform(&t)?)
}

pub fn cmd_consistency(mut cfg: RunConfig) -> CliResult<()> {
    let model = read_model(cfg.require(&cfg.model, "model")?)?;
    if cfg.identify.probabilities.is_none() && cfg.identify.modes.is_none() {
        cfg.identify.probabilities = Some(model.p.clone());
    }
    let c = &cfg.consistency;
    let mut ccfg = ConsistencyConfig::new(c.lengths.clone(), c.seeds.clone(), cfg.identify.to_ident()?);
    ccfg.sim = cfg.simulate.to_sim(0)?;
    ccfg.max_len = c.max_len;
    ccfg.align_tol = c.align_tol;
    let table = consistency_experiment(&model, &ccfg)?;

    let path = cfg.out().join("consistency.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Config(e.to_string());
    w.write_record(["length", "seed", "error", "aligned", "failure"]).map_err(csv_err)?;
    for cell in &table.cells {
        w.write_record([
            cell.length.to_string(),
            cell.seed.to_string(),
            cell.error.to_string(),
            cell.aligned.to_string(),
            cell.failure.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
    write_text(&path, &String::from_utf8_lossy(&bytes))?;

    #[derive(Serialize)]
    struct MedianEntry {
        length: usize,
        median_error: f64,
        failed: usize,
    }
    let medians: Vec<MedianEntry> = table
        .medians
        .iter()
        .map(|&(length, median_error)| MedianEntry {
            length,
            median_error,
            failed: table.cells.iter().filter(|c| c.length == length && c.failure.is_some()).count(),
        })
        .collect();
    for m in &medians {
        eprintln!("N = {}: median error {:.4} ({} failed)", m.length, m.median_error, m.failed);
    }
    let mut report = Report::new("consistency", &cfg)?;
    report.put("medians", &medians)?;
    report.write(&cfg.out().join("report.toml"))
}
