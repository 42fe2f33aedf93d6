//! Laplacian eigenstructure and spectral clustering.
//!
//! Nodes can be clustered from two feature sources: the `k` Laplacian
//! eigenvectors with smallest eigenvalues (adjacency source, the classic
//! unnormalized spectral embedding) or the rows of the first `k`
//! left-singular vectors of the snapshot matrix (snapshot source, which
//! needs no knowledge of the network structure). Both embeddings feed the
//! same seeded k-means, so the two views are directly comparable.

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::graph::{laplacian, Graph};
use crate::linalg;
use crate::pod::thin_svd;
use crate::rng;
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Full symmetric eigendecomposition of a graph Laplacian.
#[derive(Debug, Clone)]
pub struct EigenDecomposition<T: Scalar> {
    /// Ascending eigenvalues.
    pub values: Array1<T>,
    /// Orthonormal eigenvector columns, matching `values`.
    pub vectors: Array2<T>,
}

/// Eigendecomposition of the unnormalized Laplacian of an undirected graph,
/// ascending eigenvalues, dominant-entry-positive sign convention.
pub fn eigh_laplacian<T: Scalar>(g: &Graph<T>) -> Result<EigenDecomposition<T>> {
    if g.directed() {
        return Err(Error::DirectedUnsupported("eigh_laplacian"));
    }
    let l = laplacian(g)?;
    let (values, mut vectors) = linalg::jacobi_eigh(&l)?;
    let flips = linalg::dominant_sign_flips(&vectors);
    linalg::flip_columns(&mut vectors, &flips);
    Ok(EigenDecomposition { values, vectors })
}

/// Which features produced a clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSource {
    Adjacency,
    Snapshot,
}

impl ClusterSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClusterSource::Adjacency => "adjacency",
            ClusterSource::Snapshot => "snapshot",
        }
    }
}

/// k-means cluster assignment.
///
/// Labels are canonicalized by first occurrence (node 0's cluster is label
/// 0, the next new cluster is 1, ...), so identical inputs and seed give
/// identical labels regardless of k-means' internal numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment<T> {
    pub labels: Vec<usize>,
    pub k: usize,
    /// Within-cluster sum of squared distances.
    pub inertia: T,
    pub source: ClusterSource,
}

/// Laplacian flavor for the adjacency-side embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianVariant {
    /// `L = D - A`.
    #[default]
    Unnormalized,
    /// `L_sym = I - D^{-1/2} A D^{-1/2}`; zero-degree nodes get a zero
    /// scaling factor, leaving a unit diagonal entry.
    SymmetricNormalized,
}

/// Node features from the adjacency side: columns are the `k` eigenvectors
/// of the unnormalized Laplacian with smallest eigenvalues.
pub fn adjacency_embedding<T: Scalar>(g: &Graph<T>, k: usize) -> Result<Array2<T>> {
    adjacency_embedding_with(g, k, LaplacianVariant::Unnormalized)
}

/// Adjacency-side embedding with an explicit Laplacian variant.
pub fn adjacency_embedding_with<T: Scalar>(
    g: &Graph<T>,
    k: usize,
    variant: LaplacianVariant,
) -> Result<Array2<T>> {
    if k == 0 || k > g.n() {
        return Err(Error::InvalidSpec(format!("k = {k} outside 1..={}", g.n())));
    }
    let vectors = match variant {
        LaplacianVariant::Unnormalized => eigh_laplacian(g)?.vectors,
        LaplacianVariant::SymmetricNormalized => {
            if g.directed() {
                return Err(Error::DirectedUnsupported("adjacency embedding"));
            }
            let n = g.n();
            let a = g.adjacency();
            let degrees = g.in_strength();
            let inv_sqrt: Vec<T> = degrees
                .iter()
                .map(|&d| if d > T::zero() { T::one() / d.sqrt() } else { T::zero() })
                .collect();
            let mut l = Array2::<T>::eye(n);
            for i in 0..n {
                for j in 0..n {
                    if a[[i, j]] > T::zero() {
                        l[[i, j]] -= inv_sqrt[i] * a[[i, j]] * inv_sqrt[j];
                    }
                }
            }
            let (_, mut vectors) = linalg::jacobi_eigh(&l)?;
            let flips = linalg::dominant_sign_flips(&vectors);
            linalg::flip_columns(&mut vectors, &flips);
            vectors
        }
    };
    Ok(vectors.slice(s![.., ..k]).to_owned())
}

/// Node features from the snapshot side: rows of the first `k`
/// left-singular vectors of the N x K snapshot matrix.
pub fn snapshot_embedding<T: Scalar>(x: &Array2<T>, k: usize) -> Result<Array2<T>> {
    let r = x.nrows().min(x.ncols());
    if k == 0 || k > r {
        return Err(Error::InvalidSpec(format!(
            "k = {k} outside 1..={r} available singular vectors"
        )));
    }
    let svd = thin_svd(x)?;
    Ok(svd.u.slice(s![.., ..k]).to_owned())
}

/// Clusters N feature rows into `k` groups by seeded k-means.
///
/// Runs 10 restarts of k-means++ initialization followed by Lloyd
/// iterations and keeps the lowest-inertia result; restart `r` draws from
/// the deterministic substream `r` of the base seed. Restarts that converge
/// with an empty cluster are discarded; if all 10 fail the call errors.
pub fn spectral_cluster<T: Scalar>(
    features: &Array2<T>,
    k: usize,
    seed: u64,
    source: ClusterSource,
) -> Result<ClusterAssignment<T>> {
    let n = features.nrows();
    if n == 0 || features.ncols() == 0 {
        return Err(Error::DimMismatch("empty feature matrix".into()));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidSpec(format!("k = {k} outside 1..={n}")));
    }
    const RESTARTS: usize = 10;
    let mut best: Option<(T, Vec<usize>)> = None;
    for restart in 0..RESTARTS {
        let mut stream = rng::substream(seed, restart as u64);
        if let Some((inertia, labels)) = kmeans_once(features, k, &mut stream) {
            let better = match &best {
                None => true,
                Some((cur, _)) => inertia < *cur,
            };
            if better {
                best = Some((inertia, labels));
            }
        }
    }
    let (inertia, labels) = best.ok_or(Error::EmptyCluster { restarts: RESTARTS })?;
    Ok(ClusterAssignment { labels: canonicalize(&labels, k), k, inertia, source })
}

/// Adjacency-source convenience wrapper.
pub fn cluster_adjacency<T: Scalar>(g: &Graph<T>, k: usize, seed: u64) -> Result<ClusterAssignment<T>> {
    let features = adjacency_embedding(g, k)?;
    spectral_cluster(&features, k, seed, ClusterSource::Adjacency)
}

/// Snapshot-source convenience wrapper; `x` is the N x K snapshot matrix.
pub fn cluster_snapshots<T: Scalar>(x: &Array2<T>, k: usize, seed: u64) -> Result<ClusterAssignment<T>> {
    let features = snapshot_embedding(x, k)?;
    spectral_cluster(&features, k, seed, ClusterSource::Snapshot)
}

fn squared_distance<T: Scalar>(features: &Array2<T>, row: usize, center: &[T]) -> T {
    let mut acc = T::zero();
    for (f, &c) in features.row(row).iter().zip(center) {
        let d = *f - c;
        acc += d * d;
    }
    acc
}

/// One k-means run: k-means++ seeding, Lloyd iterations until labels
/// stabilize (at most 200), ties to the lowest center index. Returns `None`
/// when a cluster empties.
fn kmeans_once<T: Scalar>(
    features: &Array2<T>,
    k: usize,
    stream: &mut rng::ChaCha12Rng,
) -> Option<(T, Vec<usize>)> {
    let n = features.nrows();

    // k-means++ seeding: first center uniform, then proportional to the
    // squared distance from the chosen set.
    let mut centers: Vec<Vec<T>> = Vec::with_capacity(k);
    centers.push(features.row(rng::index(stream, n)).to_vec());
    let mut d2: Vec<T> = (0..n).map(|i| squared_distance(features, i, &centers[0])).collect();
    while centers.len() < k {
        let total: T = d2.iter().copied().sum();
        let pick = if total > T::zero() {
            let mut target = T::of(rng::unit_f64(stream)) * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            // all points coincide with a center; fall back to uniform
            rng::index(stream, n)
        };
        centers.push(features.row(pick).to_vec());
        for (i, slot) in d2.iter_mut().enumerate() {
            let d = squared_distance(features, i, centers.last().unwrap());
            if d < *slot {
                *slot = d;
            }
        }
    }

    let mut labels = vec![0usize; n];
    let mut last_inertia = T::infinity();
    for _iter in 0..200 {
        let mut changed = false;
        let mut assign_inertia = T::zero();
        for (i, label) in labels.iter_mut().enumerate() {
            let mut best = T::infinity();
            let mut arg = 0usize;
            for (c, center) in centers.iter().enumerate() {
                let d = squared_distance(features, i, center);
                if d < best {
                    best = d;
                    arg = c;
                }
            }
            assign_inertia += best;
            if *label != arg {
                *label = arg;
                changed = true;
            }
        }
        // Both Lloyd steps are exact minimizations, so the inertia sequence
        // never increases.
        debug_assert!(
            assign_inertia <= last_inertia * (T::one() + T::epsilon() * T::of(64.0)) || !changed,
            "k-means inertia rose between iterations"
        );
        last_inertia = assign_inertia;
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        if counts.contains(&0) {
            return None;
        }
        if !changed {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            center.fill(T::zero());
            for i in 0..n {
                if labels[i] == c {
                    for (j, slot) in center.iter_mut().enumerate() {
                        *slot += features[[i, j]];
                    }
                }
            }
            let inv = T::one() / T::of(counts[c] as f64);
            for slot in center.iter_mut() {
                *slot *= inv;
            }
        }
    }

    let mut inertia = T::zero();
    for i in 0..n {
        inertia += squared_distance(features, i, &centers[labels[i]]);
    }
    Some((inertia, labels))
}

/// Relabels clusters by first occurrence.
fn canonicalize(labels: &[usize], k: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; k];
    let mut next = 0usize;
    labels
        .iter()
        .map(|&l| {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            map[l]
        })
        .collect()
}
