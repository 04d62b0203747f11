//! Random sketching matrices.
//!
//! The full sketch is `P = [G : 0] E`, where `E` permutes the screened
//! columns to the front and `G` is an `m × |I|` block of i.i.d. standard
//! normals. Only `G` and the screened index list are stored; the zero block
//! is implicit. Entries are not scaled by `1/√m`, the GP length-scale
//! absorbs that factor.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::rng::{SeededRng, GENERATOR_VERSION};
use crate::screening::ScreeningResult;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SketchRecord", into = "SketchRecord")]
pub struct SketchMatrix {
    m: usize,
    screened: Vec<usize>,
    gauss_block: Matrix,
    seed: u64,
}

/// On-disk form: the Gaussian block is regenerated from the seed.
#[derive(Serialize, Deserialize)]
struct SketchRecord {
    seed: u64,
    m: usize,
    screened: Vec<usize>,
    generator: String,
}

impl From<SketchMatrix> for SketchRecord {
    fn from(s: SketchMatrix) -> Self {
        Self {
            seed: s.seed,
            m: s.m,
            screened: s.screened,
            generator: GENERATOR_VERSION.to_string(),
        }
    }
}

impl TryFrom<SketchRecord> for SketchMatrix {
    type Error = String;

    fn try_from(r: SketchRecord) -> core::result::Result<Self, String> {
        if r.generator != GENERATOR_VERSION {
            return Err(format!(
                "sketch was drawn with generator {}, this build uses {}",
                r.generator, GENERATOR_VERSION
            ));
        }
        SketchMatrix::from_indices(r.seed, r.m, r.screened).map_err(|e| e.to_string())
    }
}

impl SketchMatrix {
    /// Draws the `m × |I|` Gaussian block for the screened set, row-major
    /// from one seeded stream.
    pub fn generate(seed: u64, m: usize, screening: &ScreeningResult) -> Result<Self> {
        Self::from_indices(seed, m, screening.selected.clone())
    }

    pub fn from_indices(seed: u64, m: usize, screened: Vec<usize>) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidArgument(
                "sketch dimension must be >= 1".into(),
            ));
        }
        if screened.is_empty() {
            return Err(Error::EmptyScreening);
        }
        let mut rng = SeededRng::new(seed);
        let gauss_block = Matrix::from_fn(m, screened.len(), |_, _| rng.std_normal());
        Ok(Self {
            m,
            screened,
            gauss_block,
            seed,
        })
    }

    /// Builds a sketch around a caller-supplied block. Intended for tests
    /// and diagnostics; the seed is recorded but does not regenerate
    /// `block` on deserialization.
    pub fn with_block(seed: u64, screened: Vec<usize>, block: Matrix) -> Result<Self> {
        if block.ncols() != screened.len() {
            return Err(Error::DimensionMismatch {
                what: "sketch block columns",
                expected: screened.len(),
                found: block.ncols(),
            });
        }
        if screened.is_empty() {
            return Err(Error::EmptyScreening);
        }
        Ok(Self {
            m: block.nrows(),
            screened,
            gauss_block: block,
            seed,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn screened(&self) -> &[usize] {
        &self.screened
    }

    pub fn gauss_block(&self) -> &Matrix {
        &self.gauss_block
    }

    /// Sketches every row of `x`: `z_i = G · x_i[I]`.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let p = x.ncols();
        if let Some(&bad) = self.screened.iter().find(|&&j| j >= p) {
            return Err(Error::IndexOutOfBounds { index: bad, len: p });
        }
        let mut out = Matrix::zeros(x.nrows(), self.m);
        let mut gathered = Vec::with_capacity(self.screened.len());
        for i in 0..x.nrows() {
            let row = x.row(i);
            gathered.clear();
            gathered.extend(self.screened.iter().map(|&j| row[j]));
            let out_row = out.row_mut(i);
            for (r, o) in out_row.iter_mut().enumerate() {
                *o = crate::linalg::dot(self.gauss_block.row(r), &gathered);
            }
        }
        Ok(out)
    }

    /// Materializes the full `m × p` matrix. Only sensible for small `p`.
    pub fn to_dense(&self, p: usize) -> Result<Matrix> {
        let mut dense = Matrix::zeros(self.m, p);
        for (c, &j) in self.screened.iter().enumerate() {
            if j >= p {
                return Err(Error::IndexOutOfBounds { index: j, len: p });
            }
            for r in 0..self.m {
                dense[(r, j)] = self.gauss_block[(r, c)];
            }
        }
        Ok(dense)
    }
}

/// Free-function form of [`SketchMatrix::apply`].
pub fn apply_sketch(s: &SketchMatrix, x: &Matrix) -> Result<Matrix> {
    s.apply(x)
}

/// Free-function form of [`SketchMatrix::generate`].
pub fn generate_sketch(seed: u64, m: usize, screening: &ScreeningResult) -> Result<SketchMatrix> {
    SketchMatrix::generate(seed, m, screening)
}
