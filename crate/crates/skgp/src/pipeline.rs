//! End-to-end fitting: screen, sketch, fit one GP per sketch, stack.
//!
//! Work is spread over the current rayon pool (columns while screening,
//! sketches afterwards). Every parallel stage collects in index order and
//! all reductions run sequentially, so the result does not depend on the
//! number of threads.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use skgp_core::dataset::make_folds;
use skgp_core::gp::optimize_hyper;
use skgp_core::rng::child_seed;
use skgp_core::screening::{constant_columns, marginal_score, rank_scores};
use skgp_core::stacking::{fold_log_densities, optimize_weights_traced, SketchedGP};
use skgp_core::{
    Dataset, DensityTable, FittedGP, GPHyper, HyperSearchConfig, Matrix, ScreeningConfig,
    ScreeningResult, SketchMatrix, StackWeights, StackedPredictive, StandardizationParams,
};

use crate::error::{Result, SkgpError};

/// Coverage of the reported predictive intervals.
pub const INTERVAL_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Number of columns kept by screening, clamped to `p`.
    pub screen_count: usize,
    pub screening: ScreeningConfig,
    /// Number of sketches.
    pub k: usize,
    /// Sketch dimension.
    pub m: usize,
    /// Cross-validation folds for the stacking weights.
    pub folds: usize,
    pub root_seed: u64,
    pub hyper_search: HyperSearchConfig,
    pub standardize_response: bool,
    pub standardize_features: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            screen_count: 1000,
            screening: ScreeningConfig::default(),
            k: 20,
            m: 60,
            folds: 10,
            root_seed: 0,
            hyper_search: HyperSearchConfig::default(),
            standardize_response: true,
            standardize_features: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(SkgpError::Config {
                field: field.into(),
                message,
            })
        };
        if self.screen_count < 1 {
            return bad("screen_count", "must be >= 1".into());
        }
        if self.k < 1 {
            return bad("k", "must be >= 1".into());
        }
        if self.m < 1 {
            return bad("m", "must be >= 1".into());
        }
        if self.folds < 2 {
            return bad("folds", format!("{} < 2", self.folds));
        }
        Ok(())
    }
}

/// Seeds derived from the root seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLineage {
    pub root: u64,
    pub folds: u64,
    pub sketches: Vec<u64>,
}

impl SeedLineage {
    pub fn derive(root: u64, k: usize) -> Self {
        let sketch_root = child_seed(root, 1);
        Self {
            root,
            folds: child_seed(root, 0),
            sketches: (0..k as u64).map(|i| child_seed(sketch_root, i)).collect(),
        }
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub standardize: f64,
    pub screening: f64,
    pub sketch_fit: f64,
    pub stacking: f64,
    pub total: f64,
}

impl Timings {
    /// Total time spent outside screening.
    pub fn excluding_screening(&self) -> f64 {
        self.total - self.screening
    }
}

/// One sketched member with its held-out score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub model: SketchedGP,
    pub log_score: f64,
}

impl Member {
    pub fn hyper(&self) -> GPHyper {
        self.model.gp.hyper()
    }
}

/// A fitted stacked sketched-GP predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub config: PipelineConfig,
    pub seeds: SeedLineage,
    pub standardization: StandardizationParams,
    pub screening: ScreeningResult,
    pub members: Vec<Member>,
    pub weights: StackWeights,
    /// Mean held-out log score of the weighted mixture.
    pub stacked_log_score: f64,
    pub weight_iterations: usize,
    pub timings: Timings,
}

/// Point predictions and central intervals on the original response scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Screens every column of `d` in parallel.
pub fn screen_parallel(
    d: &Dataset,
    target_count: usize,
    cfg: &ScreeningConfig,
) -> Result<ScreeningResult> {
    let x = d.features();
    let y = d.response();
    let scores = (0..d.p())
        .into_par_iter()
        .map(|j| marginal_score(y, &x.column(j), cfg))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(rank_scores(
        scores,
        &constant_columns(x),
        target_count,
        cfg,
    )?)
}

fn transform(d: &Dataset, params: &StandardizationParams, cfg: &PipelineConfig) -> Result<Dataset> {
    let x = if cfg.standardize_features {
        params.apply_features(d.features())?
    } else {
        d.features().clone()
    };
    let y = if cfg.standardize_response {
        d.response()
            .iter()
            .map(|&v| params.apply_response(v))
            .collect()
    } else {
        d.response().to_vec()
    };
    Ok(Dataset::new(x, y)?)
}

struct MemberFit {
    model: SketchedGP,
    log_densities: Vec<f64>,
}

/// Runs only the screening stage of [`fit`].
pub fn screen_dataset(d: &Dataset, cfg: &PipelineConfig) -> Result<ScreeningResult> {
    cfg.validate()?;
    let standardization = StandardizationParams::fit(d)?;
    let work = transform(d, &standardization, cfg)?;
    screen_parallel(&work, cfg.screen_count.min(d.p()), &cfg.screening)
}

pub fn fit(d: &Dataset, cfg: &PipelineConfig) -> Result<FittedPipeline> {
    fit_inner(d, cfg, None)
}

/// Like [`fit`] but reuses a screening result computed on the same data
/// and settings, e.g. across a sweep over `m`.
pub fn fit_screened(
    d: &Dataset,
    cfg: &PipelineConfig,
    screening: ScreeningResult,
) -> Result<FittedPipeline> {
    fit_inner(d, cfg, Some(screening))
}

fn fit_inner(
    d: &Dataset,
    cfg: &PipelineConfig,
    screening: Option<ScreeningResult>,
) -> Result<FittedPipeline> {
    cfg.validate()?;
    let start = Instant::now();
    let mut timings = Timings::default();

    let t = Instant::now();
    let standardization = StandardizationParams::fit(d)?;
    let work = transform(d, &standardization, cfg)?;
    timings.standardize = secs(t);

    let t = Instant::now();
    let screening = match screening {
        Some(s) if s.scores.is_empty() || s.scores.len() == d.p() => s,
        Some(s) => {
            return Err(skgp_core::Error::DimensionMismatch {
                what: "screening scores",
                expected: d.p(),
                found: s.scores.len(),
            }
            .into())
        }
        None => screen_parallel(&work, cfg.screen_count.min(d.p()), &cfg.screening)?,
    };
    timings.screening = secs(t);

    let t = Instant::now();
    let seeds = SeedLineage::derive(cfg.root_seed, cfg.k);
    let plan = make_folds(d.n(), cfg.folds, seeds.folds)?;
    let y = work.response();
    let fits = seeds
        .sketches
        .par_iter()
        .map(|&seed| -> Result<MemberFit> {
            let sketch = SketchMatrix::generate(seed, cfg.m, &screening)?;
            let z = sketch.apply(work.features())?;
            let hyper = optimize_hyper(&z, y, &cfg.hyper_search)?;
            let log_densities = fold_log_densities(&z, y, hyper, &plan)?;
            let gp = FittedGP::fit(z, y.to_vec(), hyper)?;
            Ok(MemberFit {
                model: SketchedGP { sketch, gp },
                log_densities,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    timings.sketch_fit = secs(t);

    let t = Instant::now();
    let mut table = Vec::with_capacity(cfg.k * d.n());
    for f in &fits {
        table.extend_from_slice(&f.log_densities);
    }
    let table = DensityTable::from_log_values(Matrix::from_vec(cfg.k, d.n(), table)?)?;
    let weight_fit = optimize_weights_traced(&table)?;
    timings.stacking = secs(t);

    let members = fits
        .into_iter()
        .enumerate()
        .map(|(k, f)| Member {
            model: f.model,
            log_score: table.model_log_score(k),
        })
        .collect();
    timings.total = secs(start);
    Ok(FittedPipeline {
        config: cfg.clone(),
        seeds,
        standardization,
        screening,
        members,
        weights: weight_fit.weights,
        stacked_log_score: weight_fit.objective,
        weight_iterations: weight_fit.iterations,
        timings,
    })
}

impl FittedPipeline {
    /// Number of raw input columns the model expects.
    pub fn input_dim(&self) -> usize {
        self.standardization.feature_means.len()
    }

    /// Stacked predictive law on the working (possibly standardized) scale.
    pub fn predictive(&self, x_new: &Matrix) -> Result<StackedPredictive> {
        if x_new.ncols() != self.input_dim() {
            return Err(skgp_core::Error::DimensionMismatch {
                what: "prediction columns",
                expected: self.input_dim(),
                found: x_new.ncols(),
            }
            .into());
        }
        let x = if self.config.standardize_features {
            self.standardization.apply_features(x_new)?
        } else {
            x_new.clone()
        };
        let components = self
            .members
            .par_iter()
            .map(|m| m.model.predict(&x))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(StackedPredictive::new(self.weights.clone(), components)?)
    }

    /// Mixture means and 95% mixture-quantile intervals, mapped back to the
    /// original response scale.
    pub fn predict(&self, x_new: &Matrix) -> Result<Predictions> {
        let sp = self.predictive(x_new)?;
        let mean = sp.mean()?;
        let bounds = (0..sp.dim())
            .into_par_iter()
            .map(|i| sp.interval(i, INTERVAL_LEVEL))
            .collect::<Result<Vec<_>, _>>()?;
        let restore = |v: f64| {
            if self.config.standardize_response {
                self.standardization.restore_response(v)
            } else {
                v
            }
        };
        Ok(Predictions {
            point: mean.into_iter().map(restore).collect(),
            lower: bounds.iter().map(|b| restore(b.0)).collect(),
            upper: bounds.iter().map(|b| restore(b.1)).collect(),
        })
    }
}
