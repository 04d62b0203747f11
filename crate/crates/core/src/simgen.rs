//! Noisy-manifold regression benchmarks: a swiss roll and a torus embedded
//! in `p` ambient dimensions.
//!
//! Two seeded streams are used. The signal stream draws latent coordinates,
//! the noise on the first three columns and the response noise; the
//! ambient stream draws columns 4..p. Both are consumed train first, then
//! test, so the response never depends on the ambient columns or on `p`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::linalg::Matrix;
use crate::rng::{child_seed, SeededRng};
use crate::{Error, Result};

pub const SWISS_ROLL_NOISE_SD: f64 = 0.02;
pub const TORUS_NOISE_SD: f64 = 0.1;
pub const TORUS_MAJOR_RADIUS: f64 = 3.0;
pub const TORUS_MINOR_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manifold {
    SwissRoll,
    Torus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TorusSampling {
    /// Both angles uniform on (0, 2π).
    #[default]
    ParameterUniform,
    /// Uniform with respect to surface area (rejection on the tube angle).
    AreaUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub manifold: Manifold,
    pub n: usize,
    pub n_new: usize,
    pub p: usize,
    pub tau2: f64,
    pub seed: u64,
    #[serde(default)]
    pub torus_sampling: TorusSampling,
    /// Overrides the seed of the stream for columns 4..p.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambient_seed: Option<u64>,
}

impl SimConfig {
    pub fn new(manifold: Manifold, n: usize, n_new: usize, p: usize, tau2: f64, seed: u64) -> Self {
        Self {
            manifold,
            n,
            n_new,
            p,
            tau2,
            seed,
            torus_sampling: TorusSampling::default(),
            ambient_seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 3 {
            return Err(Error::InvalidArgument(format!("p = {} < 3", self.p)));
        }
        if !(self.tau2 >= 0.0) || !self.tau2.is_finite() {
            return Err(Error::InvalidArgument(format!("tau2 = {} < 0", self.tau2)));
        }
        if self.n < 1 || self.n_new < 1 {
            return Err(Error::InvalidArgument("n and n_new must be >= 1".into()));
        }
        Ok(())
    }

    fn ambient_stream_seed(&self) -> u64 {
        self.ambient_seed
            .unwrap_or_else(|| child_seed(self.seed, 1))
    }
}

/// Simulated train/test split plus the latent manifold coordinates of each
/// row (two columns for the swiss roll, three for the torus).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimData {
    pub train: Dataset,
    pub test: Dataset,
    pub train_latent: Matrix,
    pub test_latent: Matrix,
}

struct Sample {
    latent: [f64; 3],
    signal: [f64; 3],
    y: f64,
}

fn swiss_roll_sample(rng: &mut SeededRng) -> Sample {
    let o1 = rng.uniform(1.5 * PI, 4.5 * PI);
    let o2 = rng.uniform(0.0, 3.0);
    let y = libm::sin(5.0 * PI * o1) + o2 * o2;
    Sample {
        latent: [o1, o2, 0.0],
        signal: [o1 * libm::cos(o1), o2, o1 * libm::sin(o1)],
        y,
    }
}

fn torus_sample(rng: &mut SeededRng, sampling: TorusSampling) -> Sample {
    let u = rng.uniform(0.0, 2.0 * PI);
    let v = match sampling {
        TorusSampling::ParameterUniform => rng.uniform(0.0, 2.0 * PI),
        TorusSampling::AreaUniform => loop {
            let v = rng.uniform(0.0, 2.0 * PI);
            let accept = (TORUS_MAJOR_RADIUS + TORUS_MINOR_RADIUS * libm::cos(v))
                / (TORUS_MAJOR_RADIUS + TORUS_MINOR_RADIUS);
            if rng.open01() < accept {
                break v;
            }
        },
    };
    let ring = TORUS_MAJOR_RADIUS + TORUS_MINOR_RADIUS * libm::cos(v);
    let o = [
        ring * libm::cos(u),
        ring * libm::sin(u),
        TORUS_MINOR_RADIUS * libm::sin(v),
    ];
    let y = o[1] * o[1] + libm::sin(5.0 * PI * o[2]);
    Sample {
        latent: o,
        signal: o,
        y,
    }
}

fn draw_split(
    cfg: &SimConfig,
    rows: usize,
    signal_rng: &mut SeededRng,
    ambient_rng: &mut SeededRng,
) -> Result<(Dataset, Matrix)> {
    let tau = libm::sqrt(cfg.tau2);
    let (latent_dim, noise_sd) = match cfg.manifold {
        Manifold::SwissRoll => (2, SWISS_ROLL_NOISE_SD),
        Manifold::Torus => (3, TORUS_NOISE_SD),
    };
    let mut x = Matrix::zeros(rows, cfg.p);
    let mut latent = Matrix::zeros(rows, latent_dim);
    let mut y = Vec::with_capacity(rows);
    for i in 0..rows {
        let s = match cfg.manifold {
            Manifold::SwissRoll => swiss_roll_sample(signal_rng),
            Manifold::Torus => torus_sample(signal_rng, cfg.torus_sampling),
        };
        let row = x.row_mut(i);
        for c in 0..3 {
            row[c] = s.signal[c] + tau * signal_rng.std_normal();
        }
        y.push(s.y + noise_sd * signal_rng.std_normal());
        for v in row[3..].iter_mut() {
            *v = tau * ambient_rng.std_normal();
        }
        latent.row_mut(i).copy_from_slice(&s.latent[..latent_dim]);
    }
    Ok((Dataset::new(x, y)?, latent))
}

pub fn generate(cfg: &SimConfig) -> Result<SimData> {
    cfg.validate()?;
    let mut signal_rng = SeededRng::new(child_seed(cfg.seed, 0));
    let mut ambient_rng = SeededRng::new(cfg.ambient_stream_seed());
    let (train, train_latent) = draw_split(cfg, cfg.n, &mut signal_rng, &mut ambient_rng)?;
    let (test, test_latent) = draw_split(cfg, cfg.n_new, &mut signal_rng, &mut ambient_rng)?;
    Ok(SimData {
        train,
        test,
        train_latent,
        test_latent,
    })
}

/// Swiss roll: `o₁ ~ U(3π/2, 9π/2)`, `o₂ ~ U(0, 3)`,
/// `x = (o₁cos o₁, o₂, o₁sin o₁, 0, …) + η`, `y = sin(5πo₁) + o₂² + ε`.
pub fn gen_swiss_roll(cfg: &SimConfig) -> Result<SimData> {
    generate(&SimConfig {
        manifold: Manifold::SwissRoll,
        ..cfg.clone()
    })
}

/// Torus with tube radius 1 and center radius 3,
/// `x = (o₁, o₂, o₃, 0, …) + η`, `y = o₂² + sin(5πo₃) + ε`.
pub fn gen_torus(cfg: &SimConfig) -> Result<SimData> {
    generate(&SimConfig {
        manifold: Manifold::Torus,
        ..cfg.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(manifold: Manifold, tau2: f64) -> SimConfig {
        SimConfig::new(manifold, 200, 50, 10, tau2, 17)
    }

    #[test]
    fn swiss_roll_noiseless_identities() {
        let sim = gen_swiss_roll(&cfg(Manifold::SwissRoll, 0.0)).unwrap();
        let x = sim.train.features();
        for i in 0..x.nrows() {
            let (o1, o2) = (sim.train_latent[(i, 0)], sim.train_latent[(i, 1)]);
            assert_eq!(x[(i, 1)] - o2, 0.0);
            let r2 = x[(i, 0)] * x[(i, 0)] + x[(i, 2)] * x[(i, 2)];
            assert!((r2 - o1 * o1).abs() < 1e-10);
            assert!((1.5 * PI..4.5 * PI).contains(&o1));
            assert!(x.row(i)[3..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn torus_noiseless_identities() {
        let sim = gen_torus(&cfg(Manifold::Torus, 0.0)).unwrap();
        let x = sim.test.features();
        for i in 0..x.nrows() {
            let rho = (x[(i, 0)] * x[(i, 0)] + x[(i, 1)] * x[(i, 1)]).sqrt();
            let lhs = (3.0 - rho) * (3.0 - rho) + x[(i, 2)] * x[(i, 2)];
            assert!((lhs - 1.0).abs() < 1e-10);
            assert!(sim.test_latent[(i, 2)].abs() <= 1.0);
        }
    }

    #[test]
    fn area_uniform_stays_on_surface() {
        let mut c = cfg(Manifold::Torus, 0.0);
        c.torus_sampling = TorusSampling::AreaUniform;
        let sim = generate(&c).unwrap();
        let x = sim.train.features();
        for i in 0..x.nrows() {
            let rho = (x[(i, 0)] * x[(i, 0)] + x[(i, 1)] * x[(i, 1)]).sqrt();
            assert!(((3.0 - rho).powi(2) + x[(i, 2)].powi(2) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&cfg(Manifold::SwissRoll, 0.03)).unwrap();
        let b = generate(&cfg(Manifold::SwissRoll, 0.03)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn response_ignores_ambient_stream() {
        let base = cfg(Manifold::Torus, 0.05);
        let mut other = base.clone();
        other.ambient_seed = Some(999);
        let a = generate(&base).unwrap();
        let b = generate(&other).unwrap();
        assert_eq!(a.train.response(), b.train.response());
        assert_eq!(a.test.response(), b.test.response());
        assert_ne!(a.train.features().column(5), b.train.features().column(5));
        assert_eq!(a.train.features().column(0), b.train.features().column(0));
    }

    #[test]
    fn rejects_invalid_config() {
        assert!(generate(&SimConfig::new(Manifold::Torus, 10, 10, 2, 0.1, 0)).is_err());
        assert!(generate(&SimConfig::new(Manifold::Torus, 10, 10, 5, -0.1, 0)).is_err());
        assert!(generate(&SimConfig::new(Manifold::Torus, 0, 10, 5, 0.1, 0)).is_err());
    }
}
