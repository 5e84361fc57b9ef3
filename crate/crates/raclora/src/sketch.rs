//! Random sketches and their column-space projectors.
//!
//! A sketch restricts a block update to a low-dimensional subspace. For a
//! parameter matrix of shape `m x n`, a left sketch is an `m x r` matrix `B`
//! whose trainable partner sits on the right, and a right sketch is an
//! `r x n` matrix `A` with the trainable partner on the left. When the block
//! subproblem is solved exactly the merged update only sees the sketch
//! through its orthogonal projector: `H_B = B (B^T B)^+ B^T` acting on the
//! left, or `H_A = A^T (A A^T)^+ A` acting on the right.
//!
//! `isotropic_lambda_min` gives the closed-form smallest eigenvalue of
//! `E[H]`, which is `r/m` (left) or `r/n` (right) for the isotropic
//! distributions here; `estimate_expected_projector` checks the same quantity
//! by Monte Carlo.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::rng::RandomStream;

/// Which side of the parameter matrix the sketch multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchSide {
    /// Sketch `B` of shape `m x r`; the projector acts as `H W`.
    Left,
    /// Sketch `A` of shape `r x n`; the projector acts as `W H`.
    Right,
}

/// Entry distribution for sampled sketches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchDistribution {
    /// I.i.d. standard normal entries.
    GaussianStd,
    /// I.i.d. entries drawn uniformly from {-1, +1}.
    Rademacher,
    /// `r` distinct standard basis vectors chosen uniformly without
    /// replacement, so the projector selects `r` coordinates.
    CoordinateSubset,
}

/// Full description of the sketch drawn at each block of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchSpec {
    pub side: SketchSide,
    /// Sketch rank `r`.
    pub rank: usize,
    /// Rows `m` of the parameter matrix the sketch targets.
    pub target_rows: usize,
    /// Columns `n` of the parameter matrix the sketch targets.
    pub target_cols: usize,
    pub distribution: SketchDistribution,
    /// Merge scaling `alpha`; the merged block update is `(alpha/r) B A`.
    pub alpha: f64,
}

impl SketchSpec {
    /// Left Gaussian sketch with `alpha = r`, the common default.
    pub fn left_gaussian(rank: usize, target_rows: usize, target_cols: usize) -> Self {
        SketchSpec {
            side: SketchSide::Left,
            rank,
            target_rows,
            target_cols,
            distribution: SketchDistribution::GaussianStd,
            alpha: rank as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_rows == 0 || self.target_cols == 0 {
            return Err(Error::InvalidSpec(format!(
                "sketch target shape {}x{} must be non-empty",
                self.target_rows, self.target_cols
            )));
        }
        if self.rank == 0 {
            return Err(Error::InvalidSpec("sketch rank must be at least 1".into()));
        }
        if self.rank > self.target_rows.min(self.target_cols) {
            return Err(Error::InvalidSpec(format!(
                "sketch rank {} exceeds min(target dims) = {}",
                self.rank,
                self.target_rows.min(self.target_cols)
            )));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Shape of the sampled sketch matrix: `m x r` (left) or `r x n` (right).
    pub fn sketch_shape(&self) -> (usize, usize) {
        match self.side {
            SketchSide::Left => (self.target_rows, self.rank),
            SketchSide::Right => (self.rank, self.target_cols),
        }
    }

    /// Dimension of the space the projector acts on: `m` (left) or `n`
    /// (right).
    pub fn projector_dim(&self) -> usize {
        match self.side {
            SketchSide::Left => self.target_rows,
            SketchSide::Right => self.target_cols,
        }
    }

    /// Closed-form `lambda_min[E[H]] = r/m` (left) or `r/n` (right).
    ///
    /// Exact for Gaussian and coordinate-subset sketches; for Rademacher it
    /// ignores the (exponentially small) probability of a rank-deficient
    /// draw.
    pub fn isotropic_lambda_min(&self) -> f64 {
        self.rank as f64 / self.projector_dim() as f64
    }

    /// Closed-form `lambda_max[E[H]]`. Under isotropy `E[H]` is a multiple of
    /// the identity, so this equals `isotropic_lambda_min`.
    pub fn isotropic_lambda_max(&self) -> f64 {
        self.isotropic_lambda_min()
    }
}

impl fmt::Display for SketchSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SketchSide::Left => write!(f, "left"),
            SketchSide::Right => write!(f, "right"),
        }
    }
}

impl FromStr for SketchSide {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(SketchSide::Left),
            "right" => Ok(SketchSide::Right),
            other => Err(Error::Parse(format!("unknown sketch side '{other}'"))),
        }
    }
}

impl fmt::Display for SketchDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SketchDistribution::GaussianStd => write!(f, "gaussian"),
            SketchDistribution::Rademacher => write!(f, "rademacher"),
            SketchDistribution::CoordinateSubset => write!(f, "coordinate"),
        }
    }
}

impl FromStr for SketchDistribution {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(SketchDistribution::GaussianStd),
            "rademacher" => Ok(SketchDistribution::Rademacher),
            "coordinate" => Ok(SketchDistribution::CoordinateSubset),
            other => Err(Error::Parse(format!("unknown sketch distribution '{other}'"))),
        }
    }
}

/// Orthogonal projector onto the active subspace of one sketch, together
/// with the numerical rank of the sketch it came from.
#[derive(Debug, Clone)]
pub struct Projector {
    pub h: DenseMatrix,
    pub source_rank: usize,
}

impl Projector {
    /// Applies the projector to a gradient-shaped matrix from the correct
    /// side: `H G` for left sketches, `G H` for right sketches.
    pub fn apply(&self, side: SketchSide, g: &DenseMatrix) -> DenseMatrix {
        match side {
            SketchSide::Left => self.h.matmul(g),
            SketchSide::Right => g.matmul(&self.h),
        }
    }
}

/// Draws one sketch matrix. Entries are generated in row-major order so a
/// given stream position always yields the same sketch.
pub fn sample_sketch(spec: &SketchSpec, rng: &mut RandomStream) -> Result<DenseMatrix> {
    spec.validate()?;
    let (rows, cols) = spec.sketch_shape();
    match spec.distribution {
        SketchDistribution::GaussianStd => {
            let entries: Vec<f64> = (0..rows * cols).map(|_| rng.standard_normal()).collect();
            DenseMatrix::from_row_major(rows, cols, &entries)
        }
        SketchDistribution::Rademacher => {
            let entries: Vec<f64> = (0..rows * cols).map(|_| rng.rademacher()).collect();
            DenseMatrix::from_row_major(rows, cols, &entries)
        }
        SketchDistribution::CoordinateSubset => {
            let mut entries = vec![0.0; rows * cols];
            match spec.side {
                SketchSide::Left => {
                    // Columns are distinct basis vectors of R^m.
                    let picks = rng.distinct_indices(spec.target_rows, spec.rank);
                    for (col, &row) in picks.iter().enumerate() {
                        entries[row * cols + col] = 1.0;
                    }
                }
                SketchSide::Right => {
                    // Rows are distinct basis vectors of R^n, transposed.
                    let picks = rng.distinct_indices(spec.target_cols, spec.rank);
                    for (row, &col) in picks.iter().enumerate() {
                        entries[row * cols + col] = 1.0;
                    }
                }
            }
            DenseMatrix::from_row_major(rows, cols, &entries)
        }
    }
}

/// Builds the orthogonal projector for a sampled sketch.
///
/// Left side: projector onto the column space of `B`, so `H B = B`.
/// Right side: projector onto the row space of `A`, so `A H = A`.
/// Rank-deficient sketches are kept as-is; the projector simply has lower
/// rank.
pub fn build_projector(sketch: &DenseMatrix, side: SketchSide) -> Result<Projector> {
    let rtol = linalg::default_pinv_rtol(sketch.rows(), sketch.cols());
    let (basis, rank) = match side {
        SketchSide::Left => linalg::orthonormal_range_basis(sketch, rtol)?,
        SketchSide::Right => linalg::orthonormal_range_basis(&sketch.transpose(), rtol)?,
    };
    let h = basis.matmul(&basis.transpose());
    // The product of an orthonormal basis with its transpose is symmetric up
    // to rounding; fold the rounding away so downstream eigenvalue checks see
    // an exactly symmetric matrix.
    let h = h.add(&h.transpose()).scale(0.5);
    Ok(Projector { h, source_rank: rank })
}

/// Monte Carlo estimate of `E[H]` with entrywise standard errors.
#[derive(Debug, Clone)]
pub struct ExpectedProjectorEstimate {
    pub mean_h: DenseMatrix,
    pub lambda_min_hat: f64,
    pub lambda_max_hat: f64,
    /// Largest entrywise standard error of the mean; zero when only one
    /// sample was drawn.
    pub std_err: f64,
    pub samples: usize,
}

/// Samples `samples` sketches and averages their projectors. Entry variance
/// is accumulated with Welford's recurrence, so a single pass suffices.
pub fn estimate_expected_projector(
    spec: &SketchSpec,
    samples: usize,
    rng: &mut RandomStream,
) -> Result<ExpectedProjectorEstimate> {
    spec.validate()?;
    if samples == 0 {
        return Err(Error::InvalidConfig(
            "expected-projector estimate needs at least one sample".into(),
        ));
    }
    let dim = spec.projector_dim();
    let mut mean = DenseMatrix::zeros(dim, dim);
    let mut m2 = DenseMatrix::zeros(dim, dim);
    for k in 1..=samples {
        let sketch = sample_sketch(spec, rng)?;
        let h = build_projector(&sketch, spec.side)?.h;
        let delta = h.sub(&mean);
        mean = mean.add_scaled(1.0 / k as f64, &delta);
        let delta2 = h.sub(&mean);
        m2 = m2.add(&delta.hadamard(&delta2));
    }
    let std_err = if samples > 1 {
        (m2.max_abs() / (samples as f64 - 1.0) / samples as f64).sqrt()
    } else {
        0.0
    };
    let (lambda_min_hat, lambda_max_hat) = linalg::sym_eig_extremes(&mean)?;
    Ok(ExpectedProjectorEstimate {
        mean_h: mean,
        lambda_min_hat,
        lambda_max_hat,
        std_err,
        samples,
    })
}
