//! Featurization and time-lagged independent component analysis.
//!
//! The fitted transform is `U = W Sigma^-1 V`: `W` holds the eigenvectors of
//! the instantaneous covariance, `Sigma` the square roots of its retained
//! eigenvalues and `V` the eigenvectors of the whitened, symmetrized lagged
//! covariance. A frame `r` projects to `z = (r - mean)^T U`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Conformation, Trajectory};

/// Relative eigenvalue cutoff for the instantaneous covariance.
pub const WHITENING_CUTOFF: f64 = 1e-10;

pub const DEFAULT_LAG: usize = 10;
pub const DEFAULT_COMPONENTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Coordinates verbatim.
    #[serde(rename = "RAW_COORDS_2D")]
    RawCoords2d,
    /// Euclidean distances between particle pairs.
    #[serde(rename = "PAIRWISE_DISTANCES")]
    PairwiseDistances,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    /// Explicit pairs for [`FeatureKind::PairwiseDistances`]; all `i < j`
    /// pairs when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_list: Option<Vec<(usize, usize)>>,
}

impl FeatureSpec {
    pub fn raw() -> Self {
        FeatureSpec {
            kind: FeatureKind::RawCoords2d,
            pair_list: None,
        }
    }

    pub fn distances() -> Self {
        FeatureSpec {
            kind: FeatureKind::PairwiseDistances,
            pair_list: None,
        }
    }

    /// Distances for particle systems, raw coordinates for single points.
    pub fn default_for(n_particles: usize) -> Self {
        if n_particles > 1 {
            Self::distances()
        } else {
            Self::raw()
        }
    }

    fn pairs(&self, n_particles: usize) -> Vec<(usize, usize)> {
        match &self.pair_list {
            Some(p) => p.clone(),
            None => (0..n_particles)
                .flat_map(|i| (i + 1..n_particles).map(move |j| (i, j)))
                .collect(),
        }
    }

    pub fn n_features(&self, n_particles: usize, dims: usize) -> usize {
        match self.kind {
            FeatureKind::RawCoords2d => n_particles * dims,
            FeatureKind::PairwiseDistances => self.pairs(n_particles).len(),
        }
    }
}

/// One row of features per frame.
pub fn featurize_frames(spec: &FeatureSpec, frames: &[Conformation]) -> Result<DMatrix<f64>> {
    let Some(first) = frames.first() else {
        return Ok(DMatrix::zeros(0, 0));
    };
    let (n, dims) = (first.n_particles(), first.dims());
    let pairs = spec.pairs(n);
    if let Some(&(i, j)) = pairs.iter().find(|(i, j)| *i >= n || *j >= n) {
        return Err(Error::InvalidArgument(format!(
            "pair ({i}, {j}) out of range for {n} particles"
        )));
    }
    let n_feat = spec.n_features(n, dims);
    let mut out = DMatrix::zeros(frames.len(), n_feat);
    for (row, f) in frames.iter().enumerate() {
        if f.n_particles() != n || f.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: n * dims,
                found: f.positions().len(),
            });
        }
        match spec.kind {
            FeatureKind::RawCoords2d => {
                for (k, v) in f.positions().iter().enumerate() {
                    out[(row, k)] = *v;
                }
            }
            FeatureKind::PairwiseDistances => {
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    let d2: f64 = f
                        .particle(i)
                        .iter()
                        .zip(f.particle(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    out[(row, k)] = d2.sqrt();
                }
            }
        }
    }
    Ok(out)
}

pub fn featurize(spec: &FeatureSpec, traj: &Trajectory) -> Result<DMatrix<f64>> {
    featurize_frames(spec, traj.frames())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TicaModel {
    pub lag: usize,
    pub n_components: usize,
    pub features: FeatureSpec,
    pub mean: Vec<f64>,
    /// Retained eigenvalues, `lambda_1 >= lambda_2 >= ...`.
    pub eigenvalues: Vec<f64>,
    /// `Sigma`: square roots of the retained instantaneous eigenvalues.
    pub singular_values: Vec<f64>,
    /// `W`: features x rank.
    #[serde(with = "crate::serde_matrix")]
    pub whitening: DMatrix<f64>,
    /// `V`: rank x n_components.
    #[serde(with = "crate::serde_matrix")]
    pub rotation: DMatrix<f64>,
    /// `U = W Sigma^-1 V`: features x n_components.
    #[serde(with = "crate::serde_matrix")]
    pub transform: DMatrix<f64>,
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

impl TicaModel {
    /// Fits on several trajectories; lagged pairs never straddle two of them.
    pub fn fit(
        trajectories: &[&DMatrix<f64>],
        lag: usize,
        n_components: usize,
        features: FeatureSpec,
    ) -> Result<TicaModel> {
        if lag == 0 {
            return Err(Error::InvalidArgument("TICA lag must be >= 1".into()));
        }
        if n_components == 0 {
            return Err(Error::InvalidArgument("n_components must be >= 1".into()));
        }
        let n_feat = trajectories.first().map_or(0, |m| m.ncols());
        if let Some(bad) = trajectories.iter().find(|m| m.ncols() != n_feat) {
            return Err(Error::DimensionMismatch {
                expected: n_feat,
                found: bad.ncols(),
            });
        }
        let pairs: usize = trajectories.iter().map(|m| m.nrows().saturating_sub(lag)).sum();
        let frames: usize = trajectories.iter().map(|m| m.nrows()).sum();
        if pairs <= n_components || n_feat == 0 {
            return Err(Error::InsufficientFrames {
                needed: lag + n_components,
                available: frames,
            });
        }

        // Mean over both ends of every lagged pair.
        let mut mean = vec![0.0; n_feat];
        for m in trajectories {
            let t = m.nrows();
            if t <= lag {
                continue;
            }
            for r in 0..t - lag {
                for c in 0..n_feat {
                    mean[c] += m[(r, c)] + m[(r + lag, c)];
                }
            }
        }
        let denom = 2.0 * pairs as f64;
        mean.iter_mut().for_each(|v| *v /= denom);

        let mut c00 = DMatrix::<f64>::zeros(n_feat, n_feat);
        let mut c0t = DMatrix::<f64>::zeros(n_feat, n_feat);
        let mut a = vec![0.0; n_feat];
        let mut b = vec![0.0; n_feat];
        for m in trajectories {
            let t = m.nrows();
            if t <= lag {
                continue;
            }
            for r in 0..t - lag {
                for c in 0..n_feat {
                    a[c] = m[(r, c)] - mean[c];
                    b[c] = m[(r + lag, c)] - mean[c];
                }
                for i in 0..n_feat {
                    for j in i..n_feat {
                        c00[(i, j)] += a[i] * a[j] + b[i] * b[j];
                        c0t[(i, j)] += a[i] * b[j] + b[i] * a[j];
                    }
                }
            }
        }
        for i in 0..n_feat {
            for j in i..n_feat {
                c00[(i, j)] /= denom;
                c0t[(i, j)] /= denom;
                c00[(j, i)] = c00[(i, j)];
                c0t[(j, i)] = c0t[(i, j)];
            }
        }

        let (s, q) = sorted_eigen(c00);
        let s_max = s[0];
        if !(s_max > 0.0) {
            return Err(Error::RankDeficient);
        }
        let rank = s.iter().take_while(|v| **v > WHITENING_CUTOFF * s_max).count();
        let whitening = q.columns(0, rank).into_owned();
        let singular_values: Vec<f64> = s[..rank].iter().map(|v| v.sqrt()).collect();
        let scaled = DMatrix::from_fn(n_feat, rank, |r, c| whitening[(r, c)] / singular_values[c]);

        let mut lagged = scaled.transpose() * &c0t * &scaled;
        lagged = (&lagged + lagged.transpose()) * 0.5;
        let (lambda, v) = sorted_eigen(lagged);
        let k = n_components.min(rank);
        let mut rotation = v.columns(0, k).into_owned();
        let mut transform = &scaled * &rotation;
        for c in 0..k {
            let col = transform.column(c);
            let pivot = col.iter().copied().max_by(|x, y| x.abs().total_cmp(&y.abs()));
            if pivot.is_some_and(|p| p < 0.0) {
                transform.column_mut(c).neg_mut();
                rotation.column_mut(c).neg_mut();
            }
        }
        Ok(TicaModel {
            lag,
            n_components: k,
            features,
            mean,
            eigenvalues: lambda[..k].to_vec(),
            singular_values,
            whitening,
            rotation,
            transform,
        })
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// `(r - mean)^T U` for every row.
    pub fn project(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if features.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: features.ncols(),
            });
        }
        let mut centered = features.clone();
        for mut row in centered.row_iter_mut() {
            for (v, m) in row.iter_mut().zip(&self.mean) {
                *v -= m;
            }
        }
        Ok(centered * &self.transform)
    }

    /// Featurizes with the model's own feature spec and projects.
    pub fn project_frames(&self, frames: &[Conformation]) -> Result<DMatrix<f64>> {
        if frames.is_empty() {
            return Ok(DMatrix::zeros(0, self.n_components));
        }
        self.project(&featurize_frames(&self.features, frames)?)
    }
}

/// Single-trajectory convenience over [`TicaModel::fit`].
pub fn fit_tica(features: &DMatrix<f64>, lag: usize, n_components: usize, spec: FeatureSpec) -> Result<TicaModel> {
    TicaModel::fit(&[features], lag, n_components, spec)
}

pub fn project(model: &TicaModel, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    model.project(features)
}
