//! Markov state models over a rectilinear grid in TIC space, stationary
//! reweighting, and k-means + PCCA+ macrostates.

mod kmeans;
mod pcca;

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{normalize, Conformation, WeightSource, WeightedFrameSet};

pub use kmeans::{kmeans, KMeans, KMeansConfig};
pub use pcca::{fit_macrostates, pcca, MacrostateConfig, MacrostateModel, Pcca};

pub const DEFAULT_GRID_N: usize = 80;
pub const DEFAULT_MSM_LAG: usize = 1;

/// Equal-width cells per dimension; ids are row-major with the last
/// dimension fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectilinearGrid {
    pub n_per_dim: usize,
    pub bounds: Vec<[f64; 2]>,
}

impl RectilinearGrid {
    pub fn new(n_per_dim: usize, bounds: Vec<[f64; 2]>) -> Result<Self> {
        if n_per_dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs n_per_dim >= 2, got {n_per_dim}"
            )));
        }
        if bounds.is_empty() {
            return Err(Error::InvalidArgument("grid needs at least one dimension".into()));
        }
        if let Some([lo, hi]) = bounds
            .iter()
            .find(|[lo, hi]| !(lo < hi) || !lo.is_finite() || !hi.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "grid bounds [{lo}, {hi}] are not increasing"
            )));
        }
        n_per_dim
            .checked_pow(bounds.len() as u32)
            .ok_or_else(|| Error::InvalidArgument("grid has too many cells".into()))?;
        Ok(RectilinearGrid { n_per_dim, bounds })
    }

    /// Bounds taken from the extent of the first `dims` columns of `points`.
    /// A dimension with zero extent is widened by 0.5 on each side.
    pub fn from_points(points: &DMatrix<f64>, dims: usize, n_per_dim: usize) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::EmptyPointSet);
        }
        if points.ncols() < dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: points.ncols(),
            });
        }
        let bounds = (0..dims)
            .map(|d| {
                let col = points.column(d);
                let (lo, hi) = (col.min(), col.max());
                if lo < hi {
                    [lo, hi]
                } else {
                    [lo - 0.5, hi + 0.5]
                }
            })
            .collect();
        Self::new(n_per_dim, bounds)
    }

    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    pub fn n_states(&self) -> usize {
        self.n_per_dim.pow(self.dims() as u32)
    }

    /// Cell of `point`; coordinates outside the bounds clamp to edge cells.
    pub fn cell(&self, point: &[f64]) -> usize {
        let n = self.n_per_dim;
        self.bounds.iter().zip(point).fold(0, |id, ([lo, hi], x)| {
            let k = ((x - lo) / (hi - lo) * n as f64).floor();
            // NaN lands in cell 0 through the saturating cast.
            let k = (k.max(0.0) as usize).min(n - 1);
            id * n + k
        })
    }
}

/// Cell id of every row of `points`, using its first `grid.dims()` columns.
pub fn assign_bins(grid: &RectilinearGrid, points: &DMatrix<f64>) -> Result<Vec<usize>> {
    if points.ncols() < grid.dims() {
        return Err(Error::DimensionMismatch {
            expected: grid.dims(),
            found: points.ncols(),
        });
    }
    let mut row = vec![0.0; grid.dims()];
    Ok((0..points.nrows())
        .map(|r| {
            for (d, v) in row.iter_mut().enumerate() {
                *v = points[(r, d)];
            }
            grid.cell(&row)
        })
        .collect())
}

/// Sparse nonnegative count matrix, entries sorted by `(row, col)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountMatrix {
    pub n: usize,
    pub triplets: Vec<(usize, usize, u64)>,
}

impl CountMatrix {
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, u64)>) -> Result<Self> {
        if let Some((i, j, _)) = triplets.iter().find(|(i, j, _)| *i >= n || *j >= n) {
            return Err(Error::InvalidArgument(format!(
                "count entry ({i}, {j}) outside {n} states"
            )));
        }
        triplets.sort_unstable_by_key(|(i, j, _)| (*i, *j));
        let mut merged: Vec<(usize, usize, u64)> = Vec::with_capacity(triplets.len());
        for (i, j, c) in triplets {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += c,
                _ => merged.push((i, j, c)),
            }
        }
        merged.retain(|t| t.2 > 0);
        Ok(CountMatrix { n, triplets: merged })
    }

    /// Counts from a dense matrix of nonnegative integers.
    pub fn from_dense(c: &DMatrix<f64>) -> Result<Self> {
        if c.nrows() != c.ncols() {
            return Err(Error::DimensionMismatch {
                expected: c.nrows(),
                found: c.ncols(),
            });
        }
        let mut triplets = Vec::new();
        for i in 0..c.nrows() {
            for j in 0..c.ncols() {
                let v = c[(i, j)];
                if !(v >= 0.0) || v.fract() != 0.0 || !v.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "count ({i}, {j}) = {v} is not a nonnegative integer"
                    )));
                }
                if v > 0.0 {
                    triplets.push((i, j, v as u64));
                }
            }
        }
        Self::from_triplets(c.nrows(), triplets)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(i, j, c) in &self.triplets {
            m[(i, j)] = c as f64;
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.triplets.iter().map(|t| t.2).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        let mut s = vec![0; self.n];
        for &(i, _, c) in &self.triplets {
            s[i] += c;
        }
        s
    }
}

/// Sliding-window transition counts at `lag`, never across sequence
/// boundaries. The matrix covers states `0..=max id` unless `n_states`
/// is larger.
pub fn count_matrix(sequences: &[Vec<usize>], lag: usize, n_states: Option<usize>) -> Result<CountMatrix> {
    if lag == 0 {
        return Err(Error::InvalidArgument("lag must be at least 1".into()));
    }
    if sequences.iter().all(|s| s.len() <= lag) {
        return Err(Error::LagTooLong { lag });
    }
    let max_id = sequences.iter().flatten().copied().max().unwrap_or(0);
    let n = n_states.unwrap_or(0).max(max_id + 1);
    let mut pairs: Vec<(usize, usize, u64)> = sequences
        .iter()
        .filter(|s| s.len() > lag)
        .flat_map(|s| s.iter().zip(&s[lag..]).map(|(a, b)| (*a, *b, 1)))
        .collect();
    pairs.sort_unstable();
    CountMatrix::from_triplets(n, pairs)
}

/// Row-stochastic matrix in CSR form over `states`, the retained ids of
/// the original count matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionMatrix {
    pub states: Vec<usize>,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<f64>,
}

impl TransitionMatrix {
    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    /// Validates a dense row-stochastic matrix (rows sum to 1 within 1e-12).
    pub fn from_dense(t: &DMatrix<f64>) -> Result<Self> {
        let n = t.nrows();
        if n == 0 || t.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: t.ncols(),
            });
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let v = t[(i, j)];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "T[{i}, {j}] = {v} is not a probability"
                    )));
                }
                if v > 0.0 {
                    cols.push(j);
                    values.push(v);
                    sum += v;
                }
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("row {i} of T sums to {sum}")));
            }
            row_ptr.push(cols.len());
        }
        Ok(TransitionMatrix {
            states: (0..n).collect(),
            row_ptr,
            cols,
            values,
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `x^T T`.
    pub fn left_multiply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        for (i, xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += xi * v;
            }
        }
        y
    }

    fn graph(&self) -> DiGraph<(), ()> {
        let mut g = DiGraph::with_capacity(self.n(), self.cols.len());
        for _ in 0..self.n() {
            g.add_node(());
        }
        for i in 0..self.n() {
            for (j, _) in self.row(i) {
                g.add_edge(NodeIndex::new(i), NodeIndex::new(j), ());
            }
        }
        g
    }

    pub fn is_irreducible(&self) -> bool {
        tarjan_scc(&self.graph()).len() == 1
    }
}

/// Largest strongly connected set of the transition graph of `c`, by size,
/// then by internal counts, then lowest member. Components without any
/// internal transition do not qualify. Returned sorted.
pub fn largest_connected_set(c: &CountMatrix) -> Result<Vec<usize>> {
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(c.n, c.triplets.len());
    for _ in 0..c.n {
        g.add_node(());
    }
    for &(i, j, _) in &c.triplets {
        g.add_edge(NodeIndex::new(i), NodeIndex::new(j), ());
    }
    let mut component = vec![usize::MAX; c.n];
    let mut sets: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|scc| {
            let mut v: Vec<usize> = scc.into_iter().map(|n| n.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    sets.sort_unstable_by_key(|s| s[0]);
    for (k, s) in sets.iter().enumerate() {
        for &i in s {
            component[i] = k;
        }
    }
    let mut internal = vec![0u64; sets.len()];
    for &(i, j, n) in &c.triplets {
        if component[i] == component[j] {
            internal[component[i]] += n;
        }
    }
    let best = (0..sets.len())
        .filter(|&k| internal[k] > 0)
        .max_by(|&a, &b| {
            (sets[a].len(), internal[a])
                .cmp(&(sets[b].len(), internal[b]))
                .then(sets[b][0].cmp(&sets[a][0]))
        })
        .ok_or(Error::NoConnectedSet)?;
    Ok(std::mem::take(&mut sets[best]))
}

/// Restricts `c` to its largest connected set and row-normalizes.
pub fn transition_matrix(c: &CountMatrix) -> Result<TransitionMatrix> {
    let (_, t) = restricted_transition(c)?;
    Ok(t)
}

/// The restricted counts (indexed by position in the connected set) and
/// the transition matrix.
fn restricted_transition(c: &CountMatrix) -> Result<(CountMatrix, TransitionMatrix)> {
    let states = largest_connected_set(c)?;
    let mut local = vec![usize::MAX; c.n];
    for (k, &s) in states.iter().enumerate() {
        local[s] = k;
    }
    let restricted: Vec<(usize, usize, u64)> = c
        .triplets
        .iter()
        .filter(|(i, j, _)| local[*i] != usize::MAX && local[*j] != usize::MAX)
        .map(|&(i, j, n)| (local[i], local[j], n))
        .collect();
    let counts = CountMatrix::from_triplets(states.len(), restricted)?;
    let sums = counts.row_sums();
    let mut row_ptr = vec![0];
    let mut cols = Vec::with_capacity(counts.triplets.len());
    let mut values = Vec::with_capacity(counts.triplets.len());
    for &(i, j, n) in &counts.triplets {
        while row_ptr.len() <= i {
            row_ptr.push(cols.len());
        }
        cols.push(j);
        values.push(n as f64 / sums[i] as f64);
    }
    while row_ptr.len() <= states.len() {
        row_ptr.push(cols.len());
    }
    Ok((
        counts,
        TransitionMatrix {
            states,
            row_ptr,
            cols,
            values,
        },
    ))
}

const DENSE_LIMIT: usize = 400;
const DENSE_FALLBACK_LIMIT: usize = 5000;
const POWER_TOLERANCE: f64 = 1e-14;
const POWER_MAX_ITERATIONS: usize = 200_000;

/// Left eigenvector of `t` at eigenvalue one, normalized to unit sum.
pub fn stationary_distribution(t: &TransitionMatrix) -> Result<Vec<f64>> {
    stationary_from(t, None)
}

/// As [`stationary_distribution`], with an optional starting guess for
/// the iterative solver used on large matrices.
fn stationary_from(t: &TransitionMatrix, guess: Option<&[f64]>) -> Result<Vec<f64>> {
    let n = t.n();
    if n == 0 {
        return Err(Error::NotIrreducible);
    }
    if !t.is_irreducible() {
        return Err(Error::NotIrreducible);
    }
    if n <= DENSE_LIMIT {
        return stationary_dense(t);
    }
    match stationary_power(t, guess) {
        Some(pi) => Ok(pi),
        None if n <= DENSE_FALLBACK_LIMIT => {
            log::info!("power iteration did not settle on {n} states, solving densely");
            stationary_dense(t)
        }
        None => Err(Error::Numeric(format!(
            "stationary distribution on {n} states did not converge"
        ))),
    }
}

/// Solves `(I - T^T) pi = 0` with one equation swapped for `sum pi = 1`.
fn stationary_dense(t: &TransitionMatrix) -> Result<Vec<f64>> {
    let n = t.n();
    let mut a = -t.to_dense().transpose();
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numeric("singular stationary system".into()))?;
    finish(t, x.iter().copied().collect())
}

/// Lazy power iteration `x <- (x + x T) / 2`, which converges for any
/// irreducible chain, periodic ones included.
fn stationary_power(t: &TransitionMatrix, guess: Option<&[f64]>) -> Option<Vec<f64>> {
    let n = t.n();
    let mut x: Vec<f64> = match guess {
        Some(g) if g.len() == n && g.iter().all(|v| *v > 0.0) => {
            let s: f64 = g.iter().sum();
            g.iter().map(|v| v / s).collect()
        }
        _ => vec![1.0 / n as f64; n],
    };
    for it in 0..POWER_MAX_ITERATIONS {
        let y = t.left_multiply(&x);
        if it % 16 == 0 {
            let res = x.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if res < POWER_TOLERANCE {
                return finish(t, y).ok();
            }
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = 0.5 * (*xi + yi);
        }
    }
    None
}

fn finish(t: &TransitionMatrix, mut pi: Vec<f64>) -> Result<Vec<f64>> {
    for v in pi.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let s: f64 = pi.iter().sum();
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Numeric("stationary vector vanished".into()));
    }
    pi.iter_mut().for_each(|v| *v /= s);
    let res = t
        .left_multiply(&pi)
        .iter()
        .zip(&pi)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if res > 1e-10 {
        return Err(Error::Numeric(format!("stationary residual {res:e}")));
    }
    Ok(pi)
}

/// A fitted grid MSM. `counts` and `transition` are indexed by position in
/// `transition.states`, which holds the retained grid cell ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsmModel {
    pub grid: RectilinearGrid,
    pub lag: usize,
    pub counts: CountMatrix,
    pub transition: TransitionMatrix,
    pub stationary: Vec<f64>,
}

impl MsmModel {
    /// Fits on per-segment TIC point sequences; transitions are counted
    /// only within a segment.
    pub fn fit(grid: RectilinearGrid, segments: &[&DMatrix<f64>], lag: usize) -> Result<Self> {
        let sequences = segments
            .iter()
            .map(|s| assign_bins(&grid, s))
            .collect::<Result<Vec<_>>>()?;
        Self::fit_assigned(grid, &sequences, lag)
    }

    pub fn fit_assigned(grid: RectilinearGrid, sequences: &[Vec<usize>], lag: usize) -> Result<Self> {
        let c = count_matrix(sequences, lag, Some(grid.n_states()))?;
        let (counts, transition) = restricted_transition(&c)?;
        let guess: Vec<f64> = counts.row_sums().iter().map(|v| *v as f64).collect();
        let stationary = stationary_from(&transition, Some(&guess))?;
        Ok(MsmModel {
            grid,
            lag,
            counts,
            transition,
            stationary,
        })
    }

    pub fn n_states(&self) -> usize {
        self.transition.n()
    }

    /// Position of grid cell `cell` among the retained states.
    pub fn local_index(&self, cell: usize) -> Option<usize> {
        self.transition.states.binary_search(&cell).ok()
    }
}

/// Frame weights `pi_i / n_i` for a frame in retained state `i` holding
/// `n_i` of the frames, zero for frames outside the retained set,
/// normalized.
pub fn msm_reweight(model: &MsmModel, assignments: &[usize], frames: Vec<Conformation>) -> Result<WeightedFrameSet> {
    if assignments.len() != frames.len() {
        return Err(Error::DimensionMismatch {
            expected: frames.len(),
            found: assignments.len(),
        });
    }
    let local: Vec<Option<usize>> = assignments.iter().map(|c| model.local_index(*c)).collect();
    let mut population = vec![0usize; model.n_states()];
    for i in local.iter().flatten() {
        population[*i] += 1;
    }
    let weights = local
        .iter()
        .map(|l| l.map_or(0.0, |i| model.stationary[i] / population[i] as f64))
        .collect();
    normalize(WeightedFrameSet::new(frames, weights, WeightSource::MsmReweighted)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn grid_cells_and_clamping() {
        let grid = RectilinearGrid::new(80, vec![[-1.0, 1.0], [0.0, 4.0]]).unwrap();
        assert_eq!(grid.n_states(), 6400);
        assert_eq!(grid.cell(&[0.0, 2.0]), 40 * 80 + 40);
        assert_eq!(grid.cell(&[-5.0, 2.0]), 40);
        assert_eq!(grid.cell(&[1.0, 4.0]), 6399);
        assert_eq!(grid.cell(&[-1.0, 0.0]), 0);
        assert_eq!(grid.cell(&[9.0, -9.0]), 79 * 80);
        assert!(RectilinearGrid::new(1, vec![[0.0, 1.0]]).is_err());
        assert!(RectilinearGrid::new(4, vec![[1.0, 1.0]]).is_err());
    }

    proptest! {
        #[test]
        fn cells_in_range(x in -10.0f64..10.0, y in -10.0f64..10.0) {
            let grid = RectilinearGrid::new(80, vec![[-1.0, 1.0], [-2.0, 2.0]]).unwrap();
            prop_assert!(grid.cell(&[x, y]) < 6400);
        }
    }

    #[test]
    fn counting_examples() {
        let c = count_matrix(&[vec![0, 0, 1]], 1, None).unwrap();
        assert_eq!(c.to_dense(), dense(&[&[1.0, 1.0], &[0.0, 0.0]]));
        assert!(matches!(
            count_matrix(&[vec![0, 0, 1]], 3, None),
            Err(Error::LagTooLong { lag: 3 })
        ));
        let seq = vec![0, 2, 1, 1, 0, 2];
        let one = count_matrix(std::slice::from_ref(&seq), 2, None).unwrap();
        let two = count_matrix(&[seq.clone(), seq], 2, None).unwrap();
        assert_eq!(two.to_dense(), one.to_dense() * 2.0);
        // No transition across the boundary between [0] and [1].
        let split = count_matrix(&[vec![0, 0], vec![1, 1]], 1, None).unwrap();
        assert_eq!(split.to_dense(), dense(&[&[1.0, 0.0], &[0.0, 1.0]]));
    }

    #[test]
    fn transition_examples() {
        let t = transition_matrix(&CountMatrix::from_dense(&dense(&[&[1.0, 1.0], &[0.0, 2.0]])).unwrap()).unwrap();
        assert_eq!(t.states, vec![1]);
        assert_eq!(t.to_dense(), dense(&[&[1.0]]));
        let t = transition_matrix(&CountMatrix::from_dense(&dense(&[&[2.0, 2.0], &[2.0, 2.0]])).unwrap()).unwrap();
        assert_eq!(t.to_dense(), dense(&[&[0.5, 0.5], &[0.5, 0.5]]));
        let t = transition_matrix(&CountMatrix::from_dense(&dense(&[&[9.0, 1.0], &[2.0, 8.0]])).unwrap()).unwrap();
        assert_eq!(t.to_dense(), dense(&[&[0.9, 0.1], &[0.2, 0.8]]));
        assert!(matches!(
            transition_matrix(&CountMatrix::from_dense(&DMatrix::zeros(3, 3)).unwrap()),
            Err(Error::NoConnectedSet)
        ));
        // A lone state without a self transition does not qualify.
        let c = CountMatrix::from_triplets(3, vec![(0, 1, 5), (2, 2, 1)]).unwrap();
        assert_eq!(transition_matrix(&c).unwrap().states, vec![2]);
    }

    #[test]
    fn stationary_examples() {
        let t = TransitionMatrix::from_dense(&dense(&[&[0.5, 0.5], &[0.5, 0.5]])).unwrap();
        assert_eq!(stationary_distribution(&t).unwrap(), vec![0.5, 0.5]);
        let t = TransitionMatrix::from_dense(&dense(&[&[0.9, 0.1], &[0.2, 0.8]])).unwrap();
        let pi = stationary_distribution(&t).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-14 && (pi[1] - 1.0 / 3.0).abs() < 1e-14);
        let reducible = TransitionMatrix::from_dense(&dense(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert!(matches!(
            stationary_distribution(&reducible),
            Err(Error::NotIrreducible)
        ));
    }

    #[test]
    fn power_iteration_handles_large_periodic_rings() {
        // A deterministic cycle is periodic; the lazy iteration still converges.
        let n = 600;
        let t = TransitionMatrix {
            states: (0..n).collect(),
            row_ptr: (0..=n).collect(),
            cols: (0..n).map(|i| (i + 1) % n).collect(),
            values: vec![1.0; n],
        };
        let pi = stationary_distribution(&t).unwrap();
        assert!(pi.iter().all(|p| (p - 1.0 / n as f64).abs() < 1e-12));
    }

    #[test]
    fn large_random_walk_matches_detailed_balance() {
        // Birth-death chain with a bias; reversible, so pi_i T_ij = pi_j T_ji.
        let n = 1000;
        let mut triplets = Vec::new();
        for i in 0..n {
            triplets.push((i, i, 2));
            if i + 1 < n {
                triplets.push((i, i + 1, 3));
                triplets.push((i + 1, i, 3));
            }
        }
        let c = CountMatrix::from_triplets(n, triplets).unwrap();
        let (_, t) = restricted_transition(&c).unwrap();
        let pi = stationary_distribution(&t).unwrap();
        let sums = c.row_sums();
        let total: u64 = sums.iter().sum();
        for (p, s) in pi.iter().zip(&sums) {
            assert!((p - *s as f64 / total as f64).abs() < 1e-12);
        }
    }

    fn toy_model() -> MsmModel {
        let grid = RectilinearGrid::new(2, vec![[0.0, 1.0]]).unwrap();
        MsmModel::fit_assigned(grid, &[vec![0, 0, 1, 0, 1, 1, 1, 0]], 1).unwrap()
    }

    #[test]
    fn reweighting_examples() {
        let frame = Conformation::new(vec![0.0, 0.0], 2).unwrap();
        let mut model = toy_model();
        model.stationary = vec![2.0 / 3.0, 1.0 / 3.0];
        let set = msm_reweight(&model, &[0, 0, 1], vec![frame.clone(); 3]).unwrap();
        assert_eq!(set.source, WeightSource::MsmReweighted);
        for w in &set.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        model.stationary = vec![0.5, 0.5];
        let set = msm_reweight(&model, &[0, 1, 0, 1], vec![frame.clone(); 4]).unwrap();
        assert!(set.weights.iter().all(|w| *w == 0.25));

        let grid = RectilinearGrid::new(3, vec![[0.0, 1.0]]).unwrap();
        let pruned = MsmModel::fit_assigned(grid, &[vec![0, 0, 1, 1, 1, 2]], 1).unwrap();
        assert_eq!(pruned.transition.states, vec![1]);
        assert!(matches!(
            msm_reweight(&pruned, &[0, 2], vec![frame.clone(); 2]),
            Err(Error::AllZeroWeights)
        ));
        let set = msm_reweight(&pruned, &[0, 1, 2], vec![frame; 3]).unwrap();
        assert_eq!(set.weights, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn model_invariants_and_json() {
        let model = toy_model();
        let pi = &model.stationary;
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let back = model.transition.left_multiply(pi);
        assert!(back.iter().zip(pi).all(|(a, b)| (a - b).abs() < 1e-10));
        let json = serde_json::to_string(&model).unwrap();
        let again: MsmModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, again);
        assert!(json.contains("\"triplets\""));
    }

    #[test]
    fn fit_from_points() {
        let pts = DMatrix::from_row_slice(5, 2, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let grid = RectilinearGrid::from_points(&pts, 2, 2).unwrap();
        let model = MsmModel::fit(grid, &[&pts], 1).unwrap();
        assert_eq!(model.transition.states, vec![0, 3]);
        assert_eq!(model.stationary, vec![0.5, 0.5]);
    }
}
