use std::collections::BTreeMap;

use super::knn::{smooth_knn, KnnGraph};

/// Symmetric weighted graph over point indices; weights lie in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    n: usize,
    /// `(i, j, w)` with `i < j`, sorted.
    edges: Vec<(usize, usize, f64)>,
}

impl FuzzyGraph {
    /// Builds a graph from undirected edges, merging duplicates by fuzzy
    /// union and dropping zero weights and self-loops.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, w) in edges {
            if i == j || w <= 0.0 {
                continue;
            }
            let key = (i.min(j), i.max(j));
            let entry = map.entry(key).or_insert(0.0);
            *entry = *entry + w - *entry * w;
        }
        FuzzyGraph {
            n,
            edges: map.into_iter().map(|((i, j), w)| (i, j, w)).collect(),
        }
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let key = (i.min(j), i.max(j));
        self.edges
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&key))
            .map_or(0.0, |pos| self.edges[pos].2)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|&&(a, b, _)| a == i || b == i).count()
    }
}

/// Directed memberships `exp(-max(0, d - rho_i) / sigma_i)` combined by the
/// probabilistic union `a + b - a*b`.
pub fn fuzzy_simplicial_set(knn: &KnnGraph) -> FuzzyGraph {
    let n = knn.n_points();
    let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..n {
        let (rho, sigma) = smooth_knn(&knn.distances[i], knn.k);
        for (&j, &d) in knn.indices[i].iter().zip(&knn.distances[i]) {
            let w = (-(d - rho).max(0.0) / sigma).exp();
            directed.insert((i, j), w);
        }
    }
    let mut undirected = Vec::with_capacity(directed.len());
    for (&(i, j), &w) in &directed {
        match directed.get(&(j, i)) {
            // Each mutual pair is emitted once, from its lower endpoint.
            Some(&back) if i < j => undirected.push((i, j, w + back - w * back)),
            Some(_) => {}
            None => undirected.push((i, j, w)),
        }
    }
    FuzzyGraph::from_edges(n, undirected)
}
