//! Dense pairwise distance matrices: Euclidean, and geodesic over a
//! symmetrized k-nearest-neighbour graph.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{format_float, Dataset};
use crate::error::{CpmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Euclidean,
    Geodesic,
    Adjusted,
}

/// Symmetric, nonnegative `N x N` matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Array2<f64>,
    kind: MetricKind,
}

impl DistanceMatrix {
    /// Wraps `values` after checking every invariant exactly.
    pub fn new(values: Array2<f64>, kind: MetricKind) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c {
            return Err(CpmError::Contract(format!(
                "distance matrix must be square, got {r}x{c}"
            )));
        }
        for i in 0..r {
            if values[[i, i]] != 0.0 {
                return Err(CpmError::Contract(format!(
                    "nonzero diagonal entry at {i}"
                )));
            }
            for j in (i + 1)..r {
                let v = values[[i, j]];
                if !v.is_finite() || v < 0.0 {
                    return Err(CpmError::Contract(format!(
                        "entry ({i}, {j}) = {v} is not a finite nonnegative distance"
                    )));
                }
                if v != values[[j, i]] {
                    return Err(CpmError::Contract(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { values, kind })
    }

    pub(crate) fn new_unchecked(values: Array2<f64>, kind: MetricKind) -> Self {
        debug_assert!(values.is_square());
        Self { values, kind }
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    /// Upper-triangle entries `(i < j)` in row-major order.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            out.extend(self.values.row(i).iter().skip(i + 1));
        }
        out
    }

    /// Writes the square matrix without a header.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| CpmError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut buf = ryu::Buffer::new();
        let mut line = String::new();
        for row in self.values.outer_iter() {
            line.clear();
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(format_float(&mut buf, *v));
            }
            line.push('\n');
            w.write_all(line.as_bytes())
                .map_err(|e| CpmError::io(path, e))?;
        }
        w.flush().map_err(|e| CpmError::io(path, e))
    }
}

pub fn euclidean_distance_matrix(data: &Dataset) -> DistanceMatrix {
    euclidean_from_points(data.points())
}

/// Euclidean distances between the rows of `points`.
pub fn euclidean_from_points(points: ArrayView2<'_, f64>) -> DistanceMatrix {
    let n = points.nrows();
    let mut values = Array2::<f64>::zeros((n, n));
    values
        .outer_iter_mut()
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let xi = points.row(i);
            for j in (i + 1)..n {
                let xj = points.row(j);
                row[j] = xi
                    .iter()
                    .zip(xj.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
            }
        });
    mirror_upper(&mut values);
    DistanceMatrix::new_unchecked(values, MetricKind::Euclidean)
}

fn mirror_upper(values: &mut Array2<f64>) {
    let n = values.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            values[[j, i]] = values[[i, j]];
        }
    }
}

/// Symmetric k-NN graph with Euclidean edge weights, connected by
/// construction.
#[derive(Debug, Clone)]
pub struct KnnGraph {
    k: usize,
    adjacency: Vec<Vec<(usize, f64)>>,
    bridges: Vec<(usize, usize, f64)>,
}

impl KnnGraph {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    /// True when bridging edges were needed to connect the graph.
    pub fn bridged(&self) -> bool {
        !self.bridges.is_empty()
    }

    /// Bridging edges `(i, j, weight)` with `i < j`, in insertion order.
    pub fn bridges(&self) -> &[(usize, usize, f64)] {
        &self.bridges
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    fn add_edge(&mut self, i: usize, j: usize, w: f64) {
        if !self.adjacency[i].iter().any(|&(n, _)| n == j) {
            self.adjacency[i].push((j, w));
            self.adjacency[j].push((i, w));
        }
    }

    fn components(&self) -> (Vec<usize>, usize) {
        let n = self.len();
        let mut comp = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = count;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adjacency[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = count;
                        stack.push(v);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }
}

pub fn knn_graph(data: &Dataset, k: usize) -> Result<KnnGraph> {
    knn_graph_from_distances(&euclidean_distance_matrix(data), k)
}

/// k-NN graph from precomputed Euclidean distances. Neighbour ties go to the
/// smaller index. Disconnected components are joined one at a time by the
/// globally shortest edge between two different components.
pub fn knn_graph_from_distances(dist: &DistanceMatrix, k: usize) -> Result<KnnGraph> {
    let n = dist.len();
    if k < 1 || k >= n {
        return Err(CpmError::InvalidParameter(format!(
            "k-NN graph needs 1 <= k < N, got k={k}, N={n}"
        )));
    }
    let d = dist.values();
    let mut graph = KnnGraph {
        k,
        adjacency: vec![Vec::new(); n],
        bridges: Vec::new(),
    };
    let nearest: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let key = |j: &usize| (d[[i, *j]], *j);
            others.select_nth_unstable_by(k - 1, |a, b| cmp_key(key(a), key(b)));
            others.truncate(k);
            others.sort_by(|a, b| cmp_key(key(a), key(b)));
            others
        })
        .collect();
    for (i, nbrs) in nearest.iter().enumerate() {
        for &j in nbrs {
            graph.add_edge(i, j, d[[i, j]]);
        }
    }
    loop {
        let (comp, count) = graph.components();
        if count <= 1 {
            break;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            for j in (i + 1)..n {
                if comp[i] == comp[j] {
                    continue;
                }
                let w = d[[i, j]];
                if best.is_none_or(|(bw, _, _)| w < bw) {
                    best = Some((w, i, j));
                }
            }
        }
        let (w, i, j) = best.expect("more than one component implies a cross edge");
        graph.add_edge(i, j, w);
        graph.bridges.push((i, j, w));
    }
    if graph.bridged() {
        log::warn!(
            "k-NN graph (k={k}) was disconnected; added {} bridging edge(s), global geodesic distances may be distorted",
            graph.bridges.len()
        );
    }
    Ok(graph)
}

fn cmp_key(a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest path lengths (Dijkstra with a binary heap).
pub fn shortest_paths_from(graph: &KnnGraph, source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapEntry {
        dist: 0.0,
        node: source,
    });
    while let Some(HeapEntry { dist: du, node: u }) = heap.pop() {
        if du > dist[u] {
            continue;
        }
        for &(v, w) in graph.neighbors(u) {
            let alt = du + w;
            if alt < dist[v] {
                dist[v] = alt;
                heap.push(HeapEntry { dist: alt, node: v });
            }
        }
    }
    dist
}

/// All-pairs shortest paths. Entry `(i, j)` with `i < j` comes from the run
/// sourced at `i` and is mirrored, so the result is exactly symmetric.
pub fn geodesic_distance_matrix(graph: &KnnGraph) -> Result<DistanceMatrix> {
    let n = graph.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| shortest_paths_from(graph, s))
        .collect();
    let mut values = Array2::<f64>::zeros((n, n));
    for (i, row) in rows.iter().enumerate() {
        for j in (i + 1)..n {
            let v = row[j];
            if !v.is_finite() {
                return Err(CpmError::Numerical(format!(
                    "graph is disconnected: no path between {i} and {j}"
                )));
            }
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    Ok(DistanceMatrix::new_unchecked(values, MetricKind::Geodesic))
}
