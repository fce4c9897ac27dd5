//! Post-hoc dimension reduction of full-width embeddings: PCA, Isomap and LLE.
//!
//! All three are deterministic functions of their input. PCA learns an affine
//! map that can be applied to new rows; Isomap and LLE embed the sample they
//! are given.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{
    dot, eigh_symmetric, shortest_paths, squared_distance, Matrix, WeightedGraph,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Pca,
    Isomap,
    Lle,
}

impl Baseline {
    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::Pca => "pca",
            Baseline::Isomap => "isomap",
            Baseline::Lle => "lle",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pca" => Ok(Baseline::Pca),
            "isomap" => Ok(Baseline::Isomap),
            "lle" => Ok(Baseline::Lle),
            other => Err(Error::Usage(format!(
                "unknown baseline {other:?} (expected pca, isomap or lle)"
            ))),
        }
    }
}

/// Affine projection onto the leading principal axes of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// `d × D`, orthonormal rows.
    pub components: Matrix,
    /// Sample variance along each component, descending.
    pub explained_variance: Vec<f64>,
}

impl PcaProjection {
    pub fn input_dim(&self) -> usize {
        self.components.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.components.rows()
    }

    /// Maps scores back into the input space: `scores · components + mean`.
    pub fn reconstruct(&self, scores: &Matrix) -> Result<Matrix> {
        let mut out = scores.matmul(&self.components)?;
        for i in 0..out.rows() {
            for (v, m) in out.row_mut(i).iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        Ok(out)
    }
}

fn centered(x: &Matrix, mean: &[f64]) -> Matrix {
    let mut c = x.clone();
    for i in 0..c.rows() {
        for (v, m) in c.row_mut(i).iter_mut().zip(mean) {
            *v -= m;
        }
    }
    c
}

pub fn pca_fit(x: &Matrix, d: usize) -> Result<PcaProjection> {
    let (n, dim) = x.shape();
    if n < 2 {
        return Err(Error::Input(format!(
            "PCA needs at least 2 samples, got {n}"
        )));
    }
    if d == 0 || d > (n - 1).min(dim) {
        return Err(Error::Input(format!(
            "cannot keep {d} components from {n} samples of dimension {dim} (at most {})",
            (n - 1).min(dim)
        )));
    }
    if !x.is_finite() {
        return Err(Error::Input("PCA input contains non-finite values".into()));
    }
    let mean = x.column_means();
    let c = centered(x, &mean);
    let mut cov = c.t_matmul(&c)?;
    cov.scale(1.0 / (n - 1) as f64);
    let eig = eigh_symmetric(&cov)?;
    let mut components = Matrix::zeros(d, dim);
    for j in 0..d {
        components.row_mut(j).copy_from_slice(&eig.vector(j));
    }
    let explained_variance = eig.values[..d].iter().map(|&v| v.max(0.0)).collect();
    Ok(PcaProjection {
        mean,
        components,
        explained_variance,
    })
}

/// `(Y − mean) · componentsᵀ`.
pub fn pca_apply(proj: &PcaProjection, y: &Matrix) -> Result<Matrix> {
    if y.cols() != proj.input_dim() {
        return Err(Error::Shape(format!(
            "PCA was fit on {}-dim rows, got {}",
            proj.input_dim(),
            y.cols()
        )));
    }
    centered(y, &proj.mean).matmul_t(&proj.components)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifoldConfig {
    pub k_neighbors: usize,
    pub target_dim: usize,
    /// LLE ridge, relative to the mean diagonal of each local Gram matrix.
    pub lle_regularization: f64,
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 12,
            target_dim: 2,
            lle_regularization: 1e-3,
        }
    }
}

impl ManifoldConfig {
    pub fn new(k_neighbors: usize, target_dim: usize) -> Self {
        Self {
            k_neighbors,
            target_dim,
            ..Self::default()
        }
    }

    pub fn validate(&self, samples: usize) -> Result<()> {
        if self.target_dim == 0 {
            return Err(Error::Input("target dimension must be at least 1".into()));
        }
        if self.k_neighbors < self.target_dim {
            return Err(Error::Input(format!(
                "k_neighbors ({}) must be at least the target dimension ({})",
                self.k_neighbors, self.target_dim
            )));
        }
        if self.k_neighbors >= samples {
            return Err(Error::Input(format!(
                "k_neighbors ({}) must be smaller than the sample size ({samples})",
                self.k_neighbors
            )));
        }
        if !(self.lle_regularization >= 0.0) || !self.lle_regularization.is_finite() {
            return Err(Error::Input(format!(
                "LLE regularization must be finite and nonnegative, got {}",
                self.lle_regularization
            )));
        }
        Ok(())
    }
}

/// Indices of the `k` nearest other rows of each row (ties by index).
pub fn nearest_neighbours(x: &Matrix, k: usize) -> Vec<Vec<usize>> {
    let n = x.rows();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut dist: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (squared_distance(x.row(i), x.row(j)), j))
                .collect();
            dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            dist.truncate(k);
            dist.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Symmetrized k-nearest-neighbour graph with Euclidean edge lengths.
pub fn knn_graph(x: &Matrix, k: usize) -> Result<WeightedGraph> {
    let neighbours = nearest_neighbours(x, k);
    let mut graph = WeightedGraph::new(x.rows());
    for (i, list) in neighbours.iter().enumerate() {
        for &j in list {
            // Add each undirected edge once.
            if i < j || !neighbours[j].contains(&i) {
                graph.add_edge(i, j, squared_distance(x.row(i), x.row(j)).sqrt())?;
            }
        }
    }
    Ok(graph)
}

/// Classical MDS of a distance matrix into `d` coordinates.
pub fn classical_mds(distances: &Matrix, d: usize) -> Result<Matrix> {
    let n = distances.rows();
    if !distances.is_square() {
        return Err(Error::Shape("distance matrix must be square".into()));
    }
    if d == 0 || d > n {
        return Err(Error::Input(format!(
            "cannot embed {n} points into {d} dimensions"
        )));
    }
    let mut b = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = distances[(i, j)];
            b.row_mut(i)[j] = v * v;
        }
    }
    let row_means: Vec<f64> = (0..n)
        .map(|i| b.row(i).iter().sum::<f64>() / n as f64)
        .collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            let v = b[(i, j)];
            b.row_mut(i)[j] = -0.5 * (v - row_means[i] - row_means[j] + grand);
        }
    }
    // Rounding can leave the doubly centred matrix slightly asymmetric.
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (b[(i, j)] + b[(j, i)]);
            b.row_mut(i)[j] = m;
            b.row_mut(j)[i] = m;
        }
    }
    let eig = eigh_symmetric(&b)?;
    let mut out = Matrix::zeros(n, d);
    for k in 0..d {
        let scale = eig.values[k].max(0.0).sqrt();
        for i in 0..n {
            out.row_mut(i)[k] = eig.vectors[(i, k)] * scale;
        }
    }
    Ok(out)
}

pub fn isomap(x: &Matrix, cfg: &ManifoldConfig) -> Result<Matrix> {
    cfg.validate(x.rows())?;
    let graph = knn_graph(x, cfg.k_neighbors)?;
    let components = graph.connected_components();
    if components > 1 {
        return Err(Error::Disconnected { components });
    }
    let geodesic = shortest_paths(&graph);
    classical_mds(&geodesic, cfg.target_dim)
}

/// Solves `a · x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Matrix, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = a.rows();
    let scale = a.max_abs();
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .unwrap();
        if a[(pivot, col)].abs() <= 4.0 * n as f64 * f64::EPSILON * scale {
            return None;
        }
        if pivot != col {
            for c in 0..n {
                let (p, q) = (a[(pivot, c)], a[(col, c)]);
                a.row_mut(pivot)[c] = q;
                a.row_mut(col)[c] = p;
            }
            b.swap(pivot, col);
        }
        for r in (col + 1)..n {
            let f = a[(r, col)] / a[(col, col)];
            if f != 0.0 {
                for c in col..n {
                    let v = a[(col, c)];
                    a.row_mut(r)[c] -= f * v;
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = ((r + 1)..n).map(|c| a[(r, c)] * x[c]).sum();
        x[r] = (b[r] - s) / a[(r, r)];
    }
    Some(x)
}

/// Sparse LLE reconstruction weights: for each row, `(neighbour, weight)`
/// pairs summing to one.
pub fn lle_weights(x: &Matrix, cfg: &ManifoldConfig) -> Result<Vec<Vec<(usize, f64)>>> {
    cfg.validate(x.rows())?;
    let k = cfg.k_neighbors;
    let neighbours = nearest_neighbours(x, k);
    neighbours
        .par_iter()
        .enumerate()
        .map(|(i, list)| {
            let xi = x.row(i);
            let z: Vec<Vec<f64>> = list
                .iter()
                .map(|&j| x.row(j).iter().zip(xi).map(|(a, b)| a - b).collect())
                .collect();
            let mut gram = Matrix::zeros(k, k);
            for a in 0..k {
                for b in 0..k {
                    gram.row_mut(a)[b] = dot(&z[a], &z[b]);
                }
            }
            let trace: f64 = (0..k).map(|a| gram[(a, a)]).sum();
            let ridge = if trace > 0.0 {
                cfg.lle_regularization * trace / k as f64
            } else {
                cfg.lle_regularization
            };
            for a in 0..k {
                gram.row_mut(a)[a] += ridge;
            }
            let w = solve(gram, vec![1.0; k]).ok_or_else(|| {
                Error::Numerical(format!(
                    "local Gram matrix of point {i} is singular; use a positive LLE regularization"
                ))
            })?;
            let total: f64 = w.iter().sum();
            if !total.is_finite() || total.abs() < f64::MIN_POSITIVE {
                return Err(Error::Numerical(format!(
                    "reconstruction weights of point {i} cannot be normalised"
                )));
            }
            Ok(list.iter().zip(w).map(|(&j, v)| (j, v / total)).collect())
        })
        .collect()
}

pub fn lle(x: &Matrix, cfg: &ManifoldConfig) -> Result<Matrix> {
    let n = x.rows();
    if cfg.target_dim + 1 > n {
        return Err(Error::Input(format!(
            "cannot embed {n} points into {} dimensions",
            cfg.target_dim
        )));
    }
    let weights = lle_weights(x, cfg)?;
    // M = (I − W)ᵀ(I − W), built from the rows of I − W.
    let mut m = Matrix::zeros(n, n);
    for (i, row) in weights.iter().enumerate() {
        let mut entries: Vec<(usize, f64)> = row.iter().map(|&(j, w)| (j, -w)).collect();
        entries.push((i, 1.0));
        for &(a, va) in &entries {
            for &(b, vb) in &entries {
                m.row_mut(a)[b] += va * vb;
            }
        }
    }
    // M·1 = 0. Lifting the constant direction to the top of the spectrum
    // leaves the next-smallest eigenvectors as the bottom d, orthogonal to 1.
    let lift = (0..n).map(|i| m[(i, i)]).sum::<f64>().max(1.0) / n as f64;
    for v in m.as_mut_slice() {
        *v += lift;
    }
    let eig = eigh_symmetric(&m)?;
    let mut out = Matrix::zeros(n, cfg.target_dim);
    for k in 0..cfg.target_dim {
        let col = n - 1 - k;
        for i in 0..n {
            out.row_mut(i)[k] = eig.vectors[(i, col)];
        }
    }
    Ok(out)
}

/// Fits `method` on `x` and returns the reduced rows of `x`.
pub fn reduce(method: Baseline, x: &Matrix, cfg: &ManifoldConfig) -> Result<Matrix> {
    match method {
        Baseline::Pca => pca_apply(&pca_fit(x, cfg.target_dim)?, x),
        Baseline::Isomap => isomap(x, cfg),
        Baseline::Lle => lle(x, cfg),
    }
}
