use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Dense Prim's algorithm from vertex 0. Among equal weights the edge with
/// the smaller `(min index, max index)` pair wins, so the tree is
/// deterministic. Edges come back in the order they joined the tree.
pub fn build_mst(weights: &Array2<f64>) -> Vec<MstEdge> {
    let n = weights.nrows();
    if n < 2 {
        return Vec::new();
    }
    let key = |u: usize, v: usize| (u.min(v), u.max(v));
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![usize::MAX; n];
    let mut edges = Vec::with_capacity(n - 1);

    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let w = weights[[current, v]];
            if w < best[v] || (w == best[v] && key(current, v) < key(from[v], v)) {
                best[v] = w;
                from[v] = current;
            }
        }
        let mut next = usize::MAX;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let better = next == usize::MAX
                || best[v] < best[next]
                || (best[v] == best[next] && key(from[v], v) < key(from[next], next));
            if better {
                next = v;
            }
        }
        in_tree[next] = true;
        edges.push(MstEdge {
            a: from[next],
            b: next,
            weight: best[next],
        });
        current = next;
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::{pairwise, Metric};
    use ndarray::array;

    /// Minimum total weight over every spanning tree of the complete graph,
    /// by enumerating all (n-1)-edge subsets.
    pub(crate) fn exhaustive_min_weight(w: &Array2<f64>) -> (f64, usize) {
        let n = w.nrows();
        let all: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect();
        let mut best = f64::INFINITY;
        let mut trees = 0;
        let mut chosen = Vec::with_capacity(n - 1);
        fn rec(
            start: usize,
            all: &[(usize, usize)],
            chosen: &mut Vec<usize>,
            n: usize,
            w: &Array2<f64>,
            best: &mut f64,
            trees: &mut usize,
        ) {
            if chosen.len() == n - 1 {
                let mut parent: Vec<usize> = (0..n).collect();
                fn find(p: &mut [usize], x: usize) -> usize {
                    if p[x] != x {
                        let r = find(p, p[x]);
                        p[x] = r;
                    }
                    p[x]
                }
                for &e in chosen.iter() {
                    let (a, b) = all[e];
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra == rb {
                        return;
                    }
                    parent[ra] = rb;
                }
                *trees += 1;
                let total: f64 = chosen.iter().map(|&e| w[[all[e].0, all[e].1]]).sum();
                if total < *best {
                    *best = total;
                }
                return;
            }
            for e in start..all.len() {
                chosen.push(e);
                rec(e + 1, all, chosen, n, w, best, trees);
                chosen.pop();
            }
        }
        rec(0, &all, &mut chosen, n, w, &mut best, &mut trees);
        (best, trees)
    }

    #[test]
    fn two_far_pairs() {
        let pts = array![[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
        let w = pairwise(pts.view(), Metric::Euclidean);
        let mst = build_mst(&w);
        assert_eq!(mst.len(), 3);
        let has = |a: usize, b: usize| mst.iter().any(|e| (e.a.min(e.b), e.a.max(e.b)) == (a, b));
        assert!(has(0, 1) && has(2, 3));
        let (best, trees) = exhaustive_min_weight(&w);
        assert_eq!(trees, 16);
        let total: f64 = mst.iter().map(|e| e.weight).sum();
        assert!((total - best).abs() < 1e-12);
        assert!((total - 12.0).abs() < 1e-12);
    }

    #[test]
    fn two_points_make_one_edge() {
        let w = array![[0.0, 2.5], [2.5, 0.0]];
        assert_eq!(build_mst(&w), vec![MstEdge { a: 0, b: 1, weight: 2.5 }]);
    }

    #[test]
    fn ties_resolve_to_lowest_pair() {
        // All weights equal: the tree is the star around 0.
        let w = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 0.0 } else { 1.0 });
        let pairs: Vec<(usize, usize)> = build_mst(&w).iter().map(|e| (e.a, e.b)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3)]);
    }
}
