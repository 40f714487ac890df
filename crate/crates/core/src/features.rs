//! Patch feature sets and their pairwise similarities.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Rows with a norm below this are rejected by [`normalize_rows`].
pub const MIN_ROW_NORM: f64 = 1e-12;

/// `N x D` patch features of one encoder layer. Rows are unit length.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    data: Array2<f64>,
    pub layer_id: u32,
}

impl FeatureSet {
    /// Normalizes `data` row-wise and tags it with `layer_id`.
    pub fn new(data: Array2<f64>, layer_id: u32) -> Result<Self> {
        let mut fs = normalize_rows(data.view())?;
        fs.layer_id = layer_id;
        Ok(fs)
    }

    /// Wraps rows that the caller guarantees are already unit length and
    /// finite. Used by the optimizer and the gradient checker, which need to
    /// evaluate losses at points slightly off the unit sphere.
    pub fn from_normalized_unchecked(data: Array2<f64>, layer_id: u32) -> Self {
        FeatureSet { data, layer_id }
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn n_patches(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// Reorders patches so that output row `k` is input row `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        FeatureSet {
            data: self.data.select(Axis(0), perm),
            layer_id: self.layer_id,
        }
    }
}

/// `S[i][j] = x_i . y_j`. Not symmetric in general.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix(pub Array2<f64>);

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[[i, j]]
    }

    pub fn transpose(&self) -> SimilarityMatrix {
        SimilarityMatrix(self.0.t().to_owned())
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }
}

/// Divides every row by its L2 norm.
pub fn normalize_rows(m: ArrayView2<'_, f64>) -> Result<FeatureSet> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "feature matrix must be non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut out = m.to_owned();
    for (row, mut r) in out.axis_iter_mut(Axis(0)).enumerate() {
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        let norm = r.dot(&r).sqrt();
        if norm < MIN_ROW_NORM {
            return Err(Error::ZeroRow { row });
        }
        r.mapv_inplace(|v| v / norm);
    }
    Ok(FeatureSet {
        data: out,
        layer_id: 0,
    })
}

pub fn similarity(x: &FeatureSet, y: &FeatureSet) -> Result<SimilarityMatrix> {
    if x.dim() != y.dim() || x.n_patches() != y.n_patches() {
        return Err(Error::DimensionMismatch(format!(
            "x is {}x{}, y is {}x{}",
            x.n_patches(),
            x.dim(),
            y.n_patches(),
            y.dim()
        )));
    }
    Ok(SimilarityMatrix(x.data.dot(&y.data.t())))
}

/// Draws `count` distinct positions out of `total` with a seeded generator.
pub fn sample_indices(total: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    if count > total {
        return Err(Error::TooManyPatches {
            requested: count,
            available: total,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, total, count).into_vec())
}

/// Subsamples `count` spatial positions of an `H x W x C` feature grid
/// without replacement and returns them as normalized rows.
pub fn sample_patches(grid: &Array3<f64>, count: usize, seed: u64) -> Result<FeatureSet> {
    let (h, w, c) = grid.dim();
    let picks = sample_indices(h * w, count, seed)?;
    let mut rows = Array2::zeros((count, c));
    for (k, &pos) in picks.iter().enumerate() {
        rows.row_mut(k)
            .assign(&grid.slice(ndarray::s![pos / w, pos % w, ..]));
    }
    normalize_rows(rows.view())
}

/// `n x d` Gaussian rows projected onto the unit sphere.
pub fn random_unit_rows<R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize) -> FeatureSet {
    loop {
        let data = Array2::from_shape_simple_fn((n, d), || rng.sample::<f64, _>(StandardNormal));
        // A zero row has probability zero; retry rather than special-case it.
        if let Ok(fs) = normalize_rows(data.view()) {
            return fs;
        }
    }
}
