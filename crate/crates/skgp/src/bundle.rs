//! JSON artifacts: the model bundle, the stacking report, screening output
//! and the simulation sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use skgp_core::rng::GENERATOR_VERSION;
use skgp_core::simgen::{SimConfig, SimData};
use skgp_core::{GPHyper, Matrix};

use crate::error::{Result, SkgpError};
use crate::pipeline::{FittedPipeline, SeedLineage};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let io = |source| SkgpError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(|source| SkgpError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    out.write_all(b"\n").map_err(io)?;
    out.flush().map_err(io)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| SkgpError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| SkgpError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Everything needed to predict, plus the run manifest: configuration,
/// seed lineage, software and generator versions and stage timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub software_version: String,
    pub generator: String,
    pub feature_names: Vec<String>,
    pub response_name: String,
    pub model: FittedPipeline,
}

impl ModelBundle {
    pub fn new(model: FittedPipeline, feature_names: Vec<String>, response_name: String) -> Self {
        Self {
            format_version: BUNDLE_FORMAT_VERSION,
            software_version: SOFTWARE_VERSION.into(),
            generator: GENERATOR_VERSION.into(),
            feature_names,
            response_name,
            model,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bundle: Self = read_json(path)?;
        if bundle.format_version != BUNDLE_FORMAT_VERSION {
            return Err(SkgpError::FormatVersion {
                what: "model bundle",
                found: bundle.format_version,
                expected: BUNDLE_FORMAT_VERSION,
            });
        }
        if bundle.generator != GENERATOR_VERSION {
            return Err(SkgpError::Config {
                field: "generator".into(),
                message: format!("{} != {}", bundle.generator, GENERATOR_VERSION),
            });
        }
        Ok(bundle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberReport {
    pub index: usize,
    pub sketch_seed: u64,
    pub hyper: GPHyper,
    pub weight: f64,
    /// Mean held-out log density of this member alone.
    pub log_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingReport {
    pub weights: Vec<f64>,
    pub stacked_log_score: f64,
    pub iterations: usize,
    pub members: Vec<MemberReport>,
    pub seeds: SeedLineage,
}

impl StackingReport {
    pub fn of(model: &FittedPipeline) -> Self {
        let w = model.weights.as_slice();
        Self {
            weights: w.to_vec(),
            stacked_log_score: model.stacked_log_score,
            iterations: model.weight_iterations,
            members: model
                .members
                .iter()
                .enumerate()
                .map(|(k, m)| MemberReport {
                    index: k,
                    sketch_seed: m.model.sketch.seed(),
                    hyper: m.hyper(),
                    weight: w[k],
                    log_score: m.log_score,
                })
                .collect(),
            seeds: model.seeds.clone(),
        }
    }
}

/// Sidecar written next to simulated CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSidecar {
    pub software_version: String,
    pub generator: String,
    pub config: SimConfig,
    pub train_latent: Matrix,
    pub test_latent: Matrix,
}

impl SimSidecar {
    pub fn of(config: &SimConfig, data: &SimData) -> Self {
        Self {
            software_version: SOFTWARE_VERSION.into(),
            generator: GENERATOR_VERSION.into(),
            config: config.clone(),
            train_latent: data.train_latent.clone(),
            test_latent: data.test_latent.clone(),
        }
    }
}
