//! Directed weighted networks: construction, random generators, edge-list
//! I/O, and Laplacian views.
//!
//! The adjacency convention follows the coupled-ODE formulation used across
//! the crate: `a[[i, j]] > 0` means a directed link from node `j` to node
//! `i`, i.e. row `i` collects the influences arriving at node `i`.
//!
//! Graphs are immutable after construction and safe to share across threads.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::scalar::{format_sig17, Scalar};
use crate::{Error, Result};

/// Directed weighted graph over `n` nodes.
///
/// Invariants, enforced at construction:
/// - all weights nonnegative and finite,
/// - zero diagonal (no self-loops),
/// - exactly symmetric adjacency when `directed` is false.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph<T: Scalar> {
    n: usize,
    adjacency: Array2<T>,
    directed: bool,
    labels: Option<Vec<String>>,
}

impl<T: Scalar> Graph<T> {
    /// Builds a graph, validating the adjacency invariants.
    pub fn new(adjacency: Array2<T>, directed: bool, labels: Option<Vec<String>>) -> Result<Self> {
        let n = adjacency.nrows();
        if adjacency.ncols() != n {
            return Err(Error::DimMismatch(format!(
                "adjacency must be square, got {}x{}",
                n,
                adjacency.ncols()
            )));
        }
        if n == 0 {
            return Err(Error::InvalidSpec("graph needs at least one node".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let w = adjacency[[i, j]];
                if !w.is_finite() || w < T::zero() {
                    return Err(Error::Domain(format!(
                        "weight a[{i},{j}] = {w} must be finite and nonnegative"
                    )));
                }
            }
            if adjacency[[i, i]] != T::zero() {
                return Err(Error::Domain(format!("self-loop at node {i}")));
            }
        }
        if !directed {
            for i in 0..n {
                for j in (i + 1)..n {
                    if adjacency[[i, j]] != adjacency[[j, i]] {
                        return Err(Error::Domain(format!(
                            "undirected graph has asymmetric weights at ({i},{j})"
                        )));
                    }
                }
            }
        }
        if let Some(ref l) = labels {
            if l.len() != n {
                return Err(Error::DimMismatch(format!(
                    "{} labels for {} nodes",
                    l.len(),
                    n
                )));
            }
        }
        Ok(Self { n, adjacency, directed, labels })
    }

    /// Node count.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Adjacency matrix; `a[[i, j]]` is the weight of the link `j -> i`.
    pub fn adjacency(&self) -> &Array2<T> {
        &self.adjacency
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Row sums: total incoming weight per node. Equals the degree for
    /// undirected graphs.
    pub fn in_strength(&self) -> Array1<T> {
        let mut d = Array1::<T>::zeros(self.n);
        for i in 0..self.n {
            d[i] = self.adjacency.row(i).iter().copied().sum();
        }
        d
    }

    /// Number of directed links (each undirected edge counts once).
    pub fn edge_count(&self) -> usize {
        let mut count = 0;
        for i in 0..self.n {
            for j in 0..self.n {
                if self.adjacency[[i, j]] > T::zero() && (self.directed || j > i) {
                    count += 1;
                }
            }
        }
        count
    }

    /// Same graph with every weight multiplied by `factor > 0`.
    pub fn scaled(mut self, factor: T) -> Result<Self> {
        if !(factor > T::zero()) || !factor.is_finite() {
            return Err(Error::Domain(format!("scale factor {factor} must be positive")));
        }
        self.adjacency.mapv_inplace(|w| w * factor);
        Ok(self)
    }
}

/// Stochastic block model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    /// Community sizes; their sum is the node count.
    pub block_sizes: Vec<usize>,
    /// Link probability inside a block.
    pub p_intra: f64,
    /// Link probability between blocks.
    pub p_inter: f64,
    /// Weight assigned to every sampled link.
    pub edge_weight: f64,
    pub directed: bool,
    pub seed: u64,
}

impl SbmSpec {
    fn validate(&self) -> Result<()> {
        if self.block_sizes.is_empty() {
            return Err(Error::InvalidSpec("block_sizes must not be empty".into()));
        }
        if self.block_sizes.contains(&0) {
            return Err(Error::InvalidSpec("block sizes must be positive".into()));
        }
        for (name, p) in [("p_intra", self.p_intra), ("p_inter", self.p_inter)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidSpec(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if !(self.edge_weight > 0.0) || !self.edge_weight.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "edge_weight = {} must be positive",
                self.edge_weight
            )));
        }
        Ok(())
    }
}

/// Samples a stochastic block model graph.
///
/// One independent uniform draw decides each ordered pair `(i, j)`, `i != j`,
/// visited in row-major order; undirected graphs draw once per unordered
/// pair `i < j` and mirror. Identical spec and seed reproduce the adjacency
/// bit-for-bit.
pub fn generate_sbm<T: Scalar>(spec: &SbmSpec) -> Result<Graph<T>> {
    spec.validate()?;
    let n: usize = spec.block_sizes.iter().sum();
    let mut block = vec![0usize; n];
    let mut next = 0;
    for (b, &size) in spec.block_sizes.iter().enumerate() {
        for _ in 0..size {
            block[next] = b;
            next += 1;
        }
    }
    let w = T::of(spec.edge_weight);
    let mut rng = rng::seeded(spec.seed);
    let mut a = Array2::<T>::zeros((n, n));
    for i in 0..n {
        let j_start = if spec.directed { 0 } else { i + 1 };
        for j in j_start..n {
            if i == j {
                continue;
            }
            let p = if block[i] == block[j] { spec.p_intra } else { spec.p_inter };
            if rng::unit_f64(&mut rng) < p {
                a[[i, j]] = w;
                if !spec.directed {
                    a[[j, i]] = w;
                }
            }
        }
    }
    Graph::new(a, spec.directed, None)
}

/// Undirected balanced tree with the given branching factor and height,
/// unit weights. Node 0 is the root; the children of node `v` are
/// `branching*v + 1 ..= branching*v + branching` in breadth-first order.
pub fn generate_balanced_tree<T: Scalar>(branching: usize, height: usize) -> Result<Graph<T>> {
    if branching < 1 {
        return Err(Error::InvalidSpec("branching factor must be >= 1".into()));
    }
    let n: usize = if branching == 1 {
        height + 1
    } else {
        let mut total: u128 = 0;
        let mut layer: u128 = 1;
        for _ in 0..=height {
            total += layer;
            layer *= branching as u128;
            if total > 10_000_000 {
                return Err(Error::InvalidSpec(format!(
                    "balanced tree ({branching}, {height}) exceeds the 1e7-node limit"
                )));
            }
        }
        total as usize
    };
    let mut a = Array2::<T>::zeros((n, n));
    for v in 0..n {
        for c in (branching * v + 1)..=(branching * v + branching) {
            if c >= n {
                break;
            }
            a[[v, c]] = T::one();
            a[[c, v]] = T::one();
        }
    }
    Graph::new(a, false, None)
}

/// Undirected path over `n >= 1` nodes, unit weights.
pub fn generate_path<T: Scalar>(n: usize) -> Result<Graph<T>> {
    if n < 1 {
        return Err(Error::InvalidSpec("path needs at least one node".into()));
    }
    let mut a = Array2::<T>::zeros((n, n));
    for i in 0..n.saturating_sub(1) {
        a[[i, i + 1]] = T::one();
        a[[i + 1, i]] = T::one();
    }
    Graph::new(a, false, None)
}

/// Parses the edge-list text format.
///
/// - `#` lines are comments; `#!` lines are directives (`nodes N` pads the
///   node count past the largest id, `directed` switches off mirroring).
/// - Records are `src dst [weight]` with 0-based integer ids; a missing
///   weight defaults to 1.0.
/// - Undirected input (the default) mirrors each record.
///
/// Malformed lines fail with their 1-based line number; negative weights,
/// self-loops, and duplicate pairs are rejected.
pub fn load_edge_list<T: Scalar>(text: &str) -> Result<Graph<T>> {
    struct Record {
        line: usize,
        src: usize,
        dst: usize,
        weight: f64,
    }

    let mut directed = false;
    let mut declared_nodes: Option<usize> = None;
    let mut records: Vec<Record> = Vec::new();
    let mut max_id = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(directive) = trimmed.strip_prefix("#!") {
            let mut parts = directive.split_whitespace();
            match parts.next() {
                Some("directed") => directed = true,
                Some("nodes") => {
                    let v = parts.next().ok_or_else(|| Error::Parse {
                        line,
                        msg: "directive 'nodes' needs a count".into(),
                    })?;
                    let count: usize = v.parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("invalid node count '{v}'"),
                    })?;
                    declared_nodes = Some(count);
                }
                other => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown directive {:?}", other.unwrap_or("")),
                    })
                }
            }
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 'src dst [weight]', got {} fields", fields.len()),
            });
        }
        let src: usize = fields[0].parse().map_err(|_| Error::Parse {
            line,
            msg: format!("invalid source id '{}'", fields[0]),
        })?;
        let dst: usize = fields[1].parse().map_err(|_| Error::Parse {
            line,
            msg: format!("invalid destination id '{}'", fields[1]),
        })?;
        let weight: f64 = match fields.get(2) {
            Some(w) => w.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid weight '{w}'"),
            })?,
            None => 1.0,
        };
        if !weight.is_finite() || weight < 0.0 {
            return Err(Error::Domain(format!("line {line}: negative or non-finite weight {weight}")));
        }
        if src == dst {
            return Err(Error::Domain(format!("line {line}: self-loop at node {src}")));
        }
        max_id = max_id.max(src).max(dst);
        records.push(Record { line, src, dst, weight });
    }

    if records.is_empty() && declared_nodes.is_none() {
        return Err(Error::InvalidSpec("edge list has no records".into()));
    }
    let mut n = if records.is_empty() { 0 } else { max_id + 1 };
    if let Some(declared) = declared_nodes {
        if !records.is_empty() && declared < max_id + 1 {
            return Err(Error::InvalidSpec(format!(
                "declared node count {declared} smaller than max id {max_id} + 1"
            )));
        }
        n = n.max(declared);
    }

    let mut a = Array2::<T>::zeros((n, n));
    let mut seen = vec![false; n * n];
    for rec in &records {
        // The stored orientation is dst-row, src-column: a[i][j] carries j -> i.
        let (i, j) = (rec.dst, rec.src);
        if seen[i * n + j] || (!directed && seen[j * n + i]) {
            return Err(Error::Parse {
                line: rec.line,
                msg: format!("duplicate edge {} {}", rec.src, rec.dst),
            });
        }
        seen[i * n + j] = true;
        a[[i, j]] = T::of(rec.weight);
        if !directed {
            seen[j * n + i] = true;
            a[[j, i]] = T::of(rec.weight);
        }
    }
    Graph::new(a, directed, None)
}

/// Writes a graph in the edge-list format accepted by [`load_edge_list`];
/// weights carry 17 significant digits, so `f64` graphs round-trip exactly.
pub fn serialize_edge_list<T: Scalar>(g: &Graph<T>) -> String {
    let mut out = String::new();
    out.push_str(&format!("#! nodes {}\n", g.n()));
    if g.directed() {
        out.push_str("#! directed\n");
    }
    let a = g.adjacency();
    for i in 0..g.n() {
        for j in 0..g.n() {
            if a[[i, j]] > T::zero() && (g.directed() || i < j) {
                // Records are src dst weight; source is the column index.
                out.push_str(&format!("{} {} {}\n", j, i, format_sig17(a[[i, j]])));
            }
        }
    }
    out
}

/// Parses a sidecar label file: one name per line, node `i` on line `i + 1`.
pub fn parse_labels(text: &str) -> Vec<String> {
    text.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect()
}

/// Zachary karate club network: 34 nodes, 78 undirected unit-weight edges.
pub fn karate_club<T: Scalar>() -> Graph<T> {
    let g = load_edge_list::<T>(include_str!("../data/karate.edges"))
        .expect("embedded karate dataset parses");
    let labels = parse_labels(include_str!("../data/karate.labels"));
    Graph::new(g.adjacency.clone(), g.directed, Some(labels)).expect("embedded karate labels match")
}

/// Padgett Florentine families marriage network: 15 nodes, 20 undirected
/// unit-weight edges, alphabetical node order.
pub fn florentine_families<T: Scalar>() -> Graph<T> {
    let g = load_edge_list::<T>(include_str!("../data/florentine.edges"))
        .expect("embedded florentine dataset parses");
    let labels = parse_labels(include_str!("../data/florentine.labels"));
    Graph::new(g.adjacency.clone(), g.directed, Some(labels))
        .expect("embedded florentine labels match")
}

/// Unnormalized Laplacian `L = D - A` of an undirected graph, with `D` the
/// diagonal of row sums. Rows sum to zero.
pub fn laplacian<T: Scalar>(g: &Graph<T>) -> Result<Array2<T>> {
    if g.directed() {
        return Err(Error::DirectedUnsupported("laplacian"));
    }
    let n = g.n();
    let a = g.adjacency();
    let mut l = Array2::<T>::zeros((n, n));
    for i in 0..n {
        let mut degree = T::zero();
        for j in 0..n {
            degree += a[[i, j]];
            l[[i, j]] = -a[[i, j]];
        }
        l[[i, i]] = degree;
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn sbm_single_node_is_zero_matrix() {
        let spec = SbmSpec {
            block_sizes: vec![1],
            p_intra: 0.7,
            p_inter: 0.3,
            edge_weight: 1.0,
            directed: true,
            seed: 1,
        };
        let g = generate_sbm::<f64>(&spec).unwrap();
        assert_eq!(g.n(), 1);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn sbm_deterministic_probabilities_give_disjoint_triangles() {
        let spec = SbmSpec {
            block_sizes: vec![3, 3],
            p_intra: 1.0,
            p_inter: 0.0,
            edge_weight: 1.0,
            directed: false,
            seed: 99,
        };
        let g = generate_sbm::<f64>(&spec).unwrap();
        assert_eq!(g.edge_count(), 6);
        let a = g.adjacency();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a[[i, j + 3]], 0.0);
                assert_eq!(a[[i + 3, j]], 0.0);
            }
        }
    }

    #[test]
    fn sbm_intra_block_edge_fraction_near_p() {
        let spec = SbmSpec {
            block_sizes: vec![20, 20, 20],
            p_intra: 0.5,
            p_inter: 0.05,
            edge_weight: 1.0,
            directed: true,
            seed: 7,
        };
        let g = generate_sbm::<f64>(&spec).unwrap();
        // Count intra-block links over the sampled matrix.
        let mut intra = 0usize;
        let mut pairs = 0usize;
        for i in 0..60 {
            for j in 0..60 {
                if i == j || i / 20 != j / 20 {
                    continue;
                }
                pairs += 1;
                if g.adjacency()[[i, j]] > 0.0 {
                    intra += 1;
                }
            }
        }
        let fraction = intra as f64 / pairs as f64;
        assert!((fraction - 0.5).abs() < 0.1, "intra fraction {fraction}");
    }

    #[test]
    fn sbm_reproducible_bit_for_bit() {
        let spec = SbmSpec {
            block_sizes: vec![10, 10],
            p_intra: 0.4,
            p_inter: 0.1,
            edge_weight: 0.25,
            directed: true,
            seed: 1234,
        };
        let a = generate_sbm::<f64>(&spec).unwrap();
        let b = generate_sbm::<f64>(&spec).unwrap();
        assert_eq!(a.adjacency(), b.adjacency());
    }

    #[test]
    fn sbm_empty_blocks_rejected() {
        let spec = SbmSpec {
            block_sizes: vec![],
            p_intra: 0.5,
            p_inter: 0.5,
            edge_weight: 1.0,
            directed: true,
            seed: 0,
        };
        assert!(matches!(generate_sbm::<f64>(&spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn balanced_tree_node_and_edge_counts() {
        let g = generate_balanced_tree::<f64>(2, 0).unwrap();
        assert_eq!((g.n(), g.edge_count()), (1, 0));
        let g = generate_balanced_tree::<f64>(2, 2).unwrap();
        assert_eq!((g.n(), g.edge_count()), (7, 6));
        let g = generate_balanced_tree::<f64>(3, 3).unwrap();
        assert_eq!((g.n(), g.edge_count()), (40, 39));
        let g = generate_balanced_tree::<f64>(1, 4).unwrap();
        assert_eq!((g.n(), g.edge_count()), (5, 4));
    }

    #[test]
    fn path_endpoints() {
        let g = generate_path::<f64>(1).unwrap();
        assert_eq!(g.edge_count(), 0);
        let g = generate_path::<f64>(2).unwrap();
        assert_eq!(g.adjacency()[[0, 1]], 1.0);
        assert_eq!(g.adjacency()[[1, 0]], 1.0);
    }

    #[test]
    fn laplacian_small_cases() {
        let g = generate_path::<f64>(1).unwrap();
        assert_eq!(laplacian(&g).unwrap()[[0, 0]], 0.0);

        let g = generate_path::<f64>(2).unwrap();
        let l = laplacian(&g).unwrap();
        assert_eq!(l[[0, 0]], 1.0);
        assert_eq!(l[[0, 1]], -1.0);
        assert_eq!(l[[1, 0]], -1.0);
        assert_eq!(l[[1, 1]], 1.0);

        // Rows sum to zero.
        let g = generate_balanced_tree::<f64>(2, 3).unwrap();
        let l = laplacian(&g).unwrap();
        for i in 0..g.n() {
            let s: f64 = l.row(i).sum();
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn laplacian_rejects_directed() {
        let spec = SbmSpec {
            block_sizes: vec![4],
            p_intra: 0.5,
            p_inter: 0.5,
            edge_weight: 1.0,
            directed: true,
            seed: 3,
        };
        let g = generate_sbm::<f64>(&spec).unwrap();
        assert!(matches!(laplacian(&g), Err(Error::DirectedUnsupported(_))));
    }

    #[test]
    fn laplacian_positive_semidefinite_rayleigh() {
        let g = generate_balanced_tree::<f64>(2, 3).unwrap();
        let l = laplacian(&g).unwrap();
        let mut rng = crate::rng::seeded(17);
        for _ in 0..50 {
            let x =
                Array1::from_iter((0..g.n()).map(|_| crate::rng::unit_f64(&mut rng) - 0.5));
            let q = x.dot(&l.dot(&x));
            assert!(q >= -1e-10, "Rayleigh quotient {q}");
        }
    }

    #[test]
    fn edge_list_minimal_undirected() {
        let g = load_edge_list::<f64>("0 1\n").unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.adjacency()[[1, 0]], 1.0);
        assert_eq!(g.adjacency()[[0, 1]], 1.0);
        assert!(!g.directed());
    }

    #[test]
    fn edge_list_errors_carry_line_numbers() {
        let err = load_edge_list::<f64>("0 1\nbroken line here oops\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(load_edge_list::<f64>("0 1 -2.0\n"), Err(Error::Domain(_))));
        assert!(matches!(load_edge_list::<f64>("3 3\n"), Err(Error::Domain(_))));
    }

    #[test]
    fn karate_counts() {
        let g = karate_club::<f64>();
        assert_eq!(g.n(), 34);
        assert_eq!(g.edge_count(), 78);
        assert_eq!(g.labels().unwrap().len(), 34);
        assert!(!g.directed());
    }

    #[test]
    fn florentine_counts() {
        let g = florentine_families::<f64>();
        assert_eq!(g.n(), 15);
        assert_eq!(g.edge_count(), 20);
        assert_eq!(g.labels().unwrap()[8], "Medici");
    }

    proptest! {
        // load_edge_list ∘ serialize_edge_list is the identity on Graph.
        #[test]
        fn edge_list_round_trip(seed in 0u64..500, directed in proptest::bool::ANY) {
            let spec = SbmSpec {
                block_sizes: vec![4, 3],
                p_intra: 0.6,
                p_inter: 0.2,
                edge_weight: 0.371,
                directed,
                seed,
            };
            let g = generate_sbm::<f64>(&spec).unwrap();
            let text = serialize_edge_list(&g);
            let h = load_edge_list::<f64>(&text).unwrap();
            prop_assert_eq!(g.n(), h.n());
            prop_assert_eq!(g.directed(), h.directed());
            prop_assert_eq!(g.adjacency(), h.adjacency());
        }
    }
}
