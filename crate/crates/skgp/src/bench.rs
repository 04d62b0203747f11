//! Seeded replicate harness on the simulated manifolds.
//!
//! Replicate `r` draws its data from `child_seed(child_seed(root, r), 0)`
//! and fits with root seed `child_seed(child_seed(root, r), 1)`. In a sweep
//! over `m` every sketch dimension sees the same data, screening and fold
//! plan. Replicates run in parallel; results are ordered by replicate and
//! then by `m`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use skgp_core::metrics::{coverage, median_length, mspe, Summary};
use skgp_core::rng::child_seed;
use skgp_core::simgen::{generate, Manifold, SimConfig, TorusSampling};
use skgp_core::HyperSearchConfig;

use crate::csvio::{fmt_f64, load_predictions, ResponseColumn};
use crate::error::{Result, SkgpError};
use crate::pipeline::{fit_screened, screen_dataset, PipelineConfig};

fn default_n() -> usize {
    100
}
fn default_screen_count() -> usize {
    1000
}
fn default_m() -> usize {
    60
}
fn default_k() -> usize {
    20
}
fn default_folds() -> usize {
    10
}
fn default_replicates() -> usize {
    10
}
fn default_true() -> bool {
    true
}

/// Scale on which MSPE and interval lengths are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricScale {
    /// Units of the simulated response.
    #[default]
    Raw,
    /// Units of the training-response standard deviation: MSPE is divided
    /// by the training variance and lengths by the training sd.
    Standardized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifold: Manifold,
    pub p: usize,
    pub tau2: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_n")]
    pub n_new: usize,
    #[serde(default = "default_screen_count")]
    pub screen_count: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    /// Sketch dimensions to sweep; overrides `m` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_values: Option<Vec<usize>>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub root_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub torus_sampling: TorusSampling,
    #[serde(default = "default_true")]
    pub standardize_response: bool,
    #[serde(default)]
    pub standardize_features: bool,
    #[serde(default)]
    pub hyper_search: HyperSearchConfig,
    #[serde(default)]
    pub metric_scale: MetricScale,
}

impl ExperimentConfig {
    pub fn new(manifold: Manifold, p: usize, tau2: f64) -> Self {
        Self {
            manifold,
            p,
            tau2,
            n: default_n(),
            n_new: default_n(),
            screen_count: default_screen_count(),
            m: default_m(),
            m_values: None,
            k: default_k(),
            folds: default_folds(),
            replicates: default_replicates(),
            root_seed: 0,
            threads: None,
            torus_sampling: TorusSampling::default(),
            standardize_response: true,
            standardize_features: false,
            hyper_search: HyperSearchConfig::default(),
            metric_scale: MetricScale::default(),
        }
    }

    pub fn sketch_dims(&self) -> Vec<usize> {
        self.m_values.clone().unwrap_or_else(|| vec![self.m])
    }

    pub fn pipeline(&self, m: usize, root_seed: u64) -> PipelineConfig {
        PipelineConfig {
            screen_count: self.screen_count,
            k: self.k,
            m,
            folds: self.folds,
            root_seed,
            hyper_search: self.hyper_search.clone(),
            standardize_response: self.standardize_response,
            standardize_features: self.standardize_features,
            ..PipelineConfig::default()
        }
    }

    pub fn simulation(&self, seed: u64) -> SimConfig {
        SimConfig {
            torus_sampling: self.torus_sampling,
            ..SimConfig::new(self.manifold, self.n, self.n_new, self.p, self.tau2, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(SkgpError::Config {
                field: field.into(),
                message,
            })
        };
        if self.p < 3 {
            return bad("p", format!("{} < 3", self.p));
        }
        if !(self.tau2 >= 0.0 && self.tau2.is_finite()) {
            return bad(
                "tau2",
                format!("{} is not a finite non-negative number", self.tau2),
            );
        }
        if self.n < self.folds {
            return bad(
                "n",
                format!("{} is smaller than folds = {}", self.n, self.folds),
            );
        }
        if self.n_new < 1 {
            return bad("n_new", "must be >= 1".into());
        }
        if self.replicates < 1 {
            return bad("replicates", "must be >= 1".into());
        }
        if let Some(ms) = &self.m_values {
            if ms.is_empty() || ms.contains(&0) {
                return bad(
                    "m_values",
                    "must be a non-empty list of positive sizes".into(),
                );
            }
        }
        if self.threads == Some(0) {
            return bad("threads", "must be >= 1".into());
        }
        self.pipeline(self.m, 0).validate()
    }

    /// Parses TOML or JSON; errors name the offending field.
    pub fn from_str_with_format(text: &str, toml_format: bool) -> Result<Self> {
        let cfg: Self = parse_config(text, toml_format)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| SkgpError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_str_with_format(&text, is_toml_path(path))
    }
}

pub fn is_toml_path(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("toml"))
}

/// Deserializes a TOML or JSON document. Errors carry the path of the
/// offending field, or the missing or unknown field name.
pub fn parse_config<T: DeserializeOwned>(text: &str, toml_format: bool) -> Result<T> {
    let syntax = |message: String| SkgpError::Config {
        field: "<syntax>".into(),
        message,
    };
    let value: serde_json::Value = if toml_format {
        let t: toml::Table = toml::from_str(text).map_err(|e| syntax(e.to_string()))?;
        serde_json::to_value(t).map_err(|e| syntax(e.to_string()))?
    } else {
        serde_json::from_str(text).map_err(|e| syntax(e.to_string()))?
    };
    serde_path_to_error::deserialize(value).map_err(|e| {
        let message = e.inner().to_string();
        let mut field = e.path().to_string();
        if field == "." {
            field = message
                .split('`')
                .nth(1)
                .map_or_else(|| field.clone(), str::to_string);
        }
        SkgpError::Config { field, message }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub m: usize,
    pub mspe: f64,
    pub coverage: f64,
    pub median_length: f64,
    /// Seconds for simulation, fit and prediction of this sketch dimension.
    pub wall_time: f64,
    /// Seconds spent screening (shared across a sweep).
    pub screen_time: f64,
    /// Seconds spent fitting outside screening.
    pub pipeline_time: f64,
    /// Training-response standard deviation, for converting between scales.
    pub response_sd: f64,
    pub stack_weights: Vec<f64>,
}

pub fn replicate_seed(root: u64, replicate: usize) -> u64 {
    child_seed(root, replicate as u64)
}

/// Runs every sketch dimension of one replicate.
pub fn run_replicate(exp: &ExperimentConfig, replicate: usize) -> Result<Vec<ReplicateResult>> {
    let start = Instant::now();
    let seed = replicate_seed(exp.root_seed, replicate);
    let sim = generate(&exp.simulation(child_seed(seed, 0)))?;
    let dims = exp.sketch_dims();
    let fit_seed = child_seed(seed, 1);
    let t = Instant::now();
    let screening = screen_dataset(&sim.train, &exp.pipeline(dims[0], fit_seed))?;
    let screen_time = t.elapsed().as_secs_f64();
    let shared = start.elapsed().as_secs_f64();
    let truth = sim.test.response();
    dims.iter()
        .map(|&m| {
            let t = Instant::now();
            let fitted = fit_screened(&sim.train, &exp.pipeline(m, fit_seed), screening.clone())?;
            let pred = fitted.predict(sim.test.features())?;
            let unit = match exp.metric_scale {
                MetricScale::Raw => 1.0,
                MetricScale::Standardized => fitted.standardization.response_sd,
            };
            Ok(ReplicateResult {
                replicate,
                seed,
                m,
                mspe: mspe(&pred.point, truth)? / (unit * unit),
                coverage: coverage(&pred.lower, &pred.upper, truth)?,
                median_length: median_length(&pred.lower, &pred.upper)? / unit,
                wall_time: shared + t.elapsed().as_secs_f64(),
                screen_time,
                pipeline_time: fitted.timings.excluding_screening(),
                response_sd: fitted.standardization.response_sd,
                stack_weights: fitted.weights.as_slice().to_vec(),
            })
        })
        .collect()
}

/// Runs all replicates on the current rayon pool. With a single worker the
/// replicates run one after another so that their timings do not overlap.
pub fn run_replicates(exp: &ExperimentConfig) -> Result<Vec<ReplicateResult>> {
    exp.validate()?;
    let per_rep = if rayon::current_num_threads() == 1 {
        (0..exp.replicates)
            .map(|r| run_replicate(exp, r))
            .collect::<Result<Vec<_>>>()?
    } else {
        (0..exp.replicates)
            .into_par_iter()
            .map(|r| run_replicate(exp, r))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(per_rep.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub m: usize,
    pub metric: String,
    pub summary: Summary,
}

pub const METRICS: [&str; 3] = ["mspe", "coverage", "median_length"];

fn metric(r: &ReplicateResult, name: &str) -> f64 {
    match name {
        "mspe" => r.mspe,
        "coverage" => r.coverage,
        _ => r.median_length,
    }
}

/// One row per sketch dimension and metric with mean, sd and standard
/// error over replicates.
pub fn summarize(results: &[ReplicateResult]) -> Vec<SummaryRow> {
    let mut dims: Vec<usize> = results.iter().map(|r| r.m).collect();
    dims.sort_unstable();
    dims.dedup();
    let mut rows = Vec::new();
    for m in dims {
        for name in METRICS {
            let values: Vec<f64> = results
                .iter()
                .filter(|r| r.m == m)
                .map(|r| metric(r, name))
                .collect();
            rows.push(SummaryRow {
                m,
                metric: name.into(),
                summary: Summary::of(&values),
            });
        }
    }
    rows
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let io = |source| SkgpError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for line in lines {
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Per-replicate metrics. Contains no timings, so the file is identical
/// for every thread count.
pub fn write_results(path: impl AsRef<Path>, results: &[ReplicateResult]) -> Result<()> {
    let header = "replicate,seed,m,mspe,coverage,median_length,stack_weights".to_string();
    let rows = results.iter().map(|r| {
        let w: Vec<String> = r.stack_weights.iter().map(|&v| fmt_f64(v)).collect();
        format!(
            "{},{},{},{},{},{},{}",
            r.replicate,
            r.seed,
            r.m,
            fmt_f64(r.mspe),
            fmt_f64(r.coverage),
            fmt_f64(r.median_length),
            w.join(";")
        )
    });
    write_lines(path.as_ref(), std::iter::once(header).chain(rows))
}

pub fn write_timings(path: impl AsRef<Path>, results: &[ReplicateResult]) -> Result<()> {
    let header = "replicate,m,wall_time,screen_time,pipeline_time".to_string();
    let rows = results.iter().map(|r| {
        format!(
            "{},{},{:.6},{:.6},{:.6}",
            r.replicate, r.m, r.wall_time, r.screen_time, r.pipeline_time
        )
    });
    write_lines(path.as_ref(), std::iter::once(header).chain(rows))
}

pub fn write_summary(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let header = "m,metric,count,mean,sd,se".to_string();
    let lines = rows.iter().map(|r| {
        format!(
            "{},{},{},{},{},{}",
            r.m,
            r.metric,
            r.summary.count,
            fmt_f64(r.summary.mean),
            fmt_f64(r.summary.sd),
            fmt_f64(r.summary.se)
        )
    });
    write_lines(path.as_ref(), std::iter::once(header).chain(lines))
}

/// Runs the experiment and writes `results.csv`, `summary.csv`,
/// `timings.csv` and an `experiment.json` snapshot into `out_dir`.
pub fn run_experiment(
    exp: &ExperimentConfig,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<SummaryRow>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| SkgpError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let results = run_replicates(exp)?;
    let summary = summarize(&results);
    write_results(dir.join("results.csv"), &results)?;
    write_summary(dir.join("summary.csv"), &summary)?;
    write_timings(dir.join("timings.csv"), &results)?;
    crate::bundle::write_json(dir.join("experiment.json"), exp)?;
    Ok(summary)
}

/// Metrics of an externally produced prediction table against a truth CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExternalScore {
    pub mspe: f64,
    pub coverage: f64,
    pub median_length: f64,
}

pub fn score_predictions(
    predictions: impl AsRef<Path>,
    truth: impl AsRef<Path>,
    response: &ResponseColumn,
) -> Result<ExternalScore> {
    let (point, lower, upper) = load_predictions(predictions)?;
    let data = crate::csvio::load_csv(truth, response)?;
    let y = data.response();
    Ok(ExternalScore {
        mspe: mspe(&point, y)?,
        coverage: coverage(&lower, &upper, y)?,
        median_length: median_length(&lower, &upper)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            n: 30,
            n_new: 10,
            screen_count: 10,
            m: 4,
            k: 2,
            folds: 3,
            replicates: 2,
            root_seed: 3,
            hyper_search: HyperSearchConfig {
                theta_points: 6,
                psi2_points: 6,
                ..HyperSearchConfig::default()
            },
            ..ExperimentConfig::new(Manifold::Torus, 20, 0.01)
        }
    }

    #[test]
    fn replicates_are_deterministic() {
        let a = run_replicates(&tiny()).unwrap();
        let b = run_replicates(&tiny()).unwrap();
        let strip = |v: &[ReplicateResult]| {
            v.iter()
                .map(|r| (r.seed, r.mspe, r.coverage, r.stack_weights.clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn sweep_emits_one_summary_block_per_m() {
        let exp = ExperimentConfig {
            m_values: Some(vec![2, 4, 6]),
            replicates: 1,
            ..tiny()
        };
        let results = run_replicates(&exp).unwrap();
        assert_eq!(
            results.iter().map(|r| r.m).collect::<Vec<_>>(),
            vec![2, 4, 6]
        );
        let summary = summarize(&results);
        assert_eq!(summary.len(), 3 * METRICS.len());
    }

    #[test]
    fn summary_se_matches_direct_formula() {
        let mk = |mspe| ReplicateResult {
            replicate: 0,
            seed: 0,
            m: 1,
            mspe,
            coverage: 1.0,
            median_length: 1.0,
            wall_time: 0.0,
            screen_time: 0.0,
            pipeline_time: 0.0,
            response_sd: 1.0,
            stack_weights: vec![1.0],
        };
        let v = [0.5, 1.5, 1.0, 3.0];
        let rows = summarize(&v.map(mk));
        let s = &rows[0].summary;
        let mean = 1.5;
        let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 3.0).sqrt();
        assert!((s.mean - mean).abs() < 1e-15);
        assert!((s.se - sd / 2.0).abs() < 1e-15);
    }

    #[test]
    fn config_errors_name_the_field() {
        let err = ExperimentConfig::from_str_with_format(
            "manifold = \"torus\"\np = \"many\"\ntau2 = 0.01\n",
            true,
        )
        .unwrap_err();
        match err {
            SkgpError::Config { field, .. } => assert_eq!(field, "p"),
            other => panic!("{other:?}"),
        }
        let err =
            ExperimentConfig::from_str_with_format(r#"{"p": 10, "tau2": 0.1}"#, false).unwrap_err();
        match err {
            SkgpError::Config { field, .. } => assert_eq!(field, "manifold"),
            other => panic!("{other:?}"),
        }
        let err = ExperimentConfig::from_str_with_format(
            r#"{"manifold": "torus", "p": 10, "tau2": 0.1, "replicats": 3}"#,
            false,
        )
        .unwrap_err();
        assert!(err.to_string().contains("replicats"), "{err}");
    }

    #[test]
    fn toml_and_json_agree() {
        let t = ExperimentConfig::from_str_with_format(
            "manifold = \"swiss_roll\"\np = 50\ntau2 = 0.03\nm_values = [10, 20]\n",
            true,
        )
        .unwrap();
        let j = ExperimentConfig::from_str_with_format(
            r#"{"manifold": "swiss_roll", "p": 50, "tau2": 0.03, "m_values": [10, 20]}"#,
            false,
        )
        .unwrap();
        assert_eq!(t, j);
        assert_eq!(t.sketch_dims(), vec![10, 20]);
    }
}
