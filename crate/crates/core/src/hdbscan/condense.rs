use serde::{Deserialize, Serialize};

use super::{MstEdge, LAMBDA_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CondensedChild {
    Point(usize),
    Cluster(usize),
}

/// One departure from a cluster: a point falling out, or a child cluster
/// splitting off, at `lambda = 1 / distance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondensedRow {
    pub parent: usize,
    pub child: CondensedChild,
    pub lambda: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterNode {
    pub parent: Option<usize>,
    pub birth_lambda: f64,
    pub size: usize,
    pub children: Vec<usize>,
    pub stability: f64,
}

/// Cluster hierarchy after discarding splits smaller than
/// `min_cluster_size`. Cluster 0 is the root; children always have larger
/// ids than their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedTree {
    pub n_points: usize,
    pub clusters: Vec<ClusterNode>,
    pub rows: Vec<CondensedRow>,
}

impl CondensedTree {
    pub fn is_leaf(&self, cluster: usize) -> bool {
        self.clusters[cluster].children.is_empty()
    }

    /// Lambda at which each point left the tree.
    pub fn point_lambdas(&self) -> Vec<(usize, f64)> {
        let mut out = vec![(0, 0.0); self.n_points];
        for row in &self.rows {
            if let CondensedChild::Point(p) = row.child {
                out[p] = (row.parent, row.lambda);
            }
        }
        out
    }
}

pub(crate) fn lambda_of(distance: f64) -> f64 {
    if distance > 0.0 {
        (1.0 / distance).min(LAMBDA_CAP)
    } else {
        LAMBDA_CAP
    }
}

struct Pending {
    cluster: usize,
    points: Vec<usize>,
    edges: Vec<MstEdge>,
}

/// Condenses a spanning tree over `n_points` points.
///
/// Walking from the heaviest edge down, every edge of the current maximum
/// weight is cut at once. Pieces smaller than `min_cluster_size` fall out of
/// the cluster at that lambda; when two or more pieces are large enough,
/// each becomes a child cluster born at that lambda and the parent ends.
pub fn condense_tree(n_points: usize, mst: &[MstEdge], min_cluster_size: usize) -> CondensedTree {
    let mut tree = CondensedTree {
        n_points,
        clusters: vec![ClusterNode {
            parent: None,
            birth_lambda: 0.0,
            size: n_points,
            children: Vec::new(),
            stability: 0.0,
        }],
        rows: Vec::new(),
    };
    if n_points == 0 {
        return tree;
    }
    if n_points == 1 {
        tree.rows.push(CondensedRow {
            parent: 0,
            child: CondensedChild::Point(0),
            lambda: 0.0,
            size: 1,
        });
        return tree;
    }

    // Dense scratch indexed by global point id.
    let mut comp_of = vec![usize::MAX; n_points];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n_points];

    let mut stack = vec![Pending {
        cluster: 0,
        points: (0..n_points).collect(),
        edges: mst.to_vec(),
    }];
    while let Some(Pending {
        cluster,
        mut points,
        mut edges,
    }) = stack.pop()
    {
        loop {
            let w = edges.iter().map(|e| e.weight).fold(f64::NEG_INFINITY, f64::max);
            let lambda = lambda_of(w);
            let kept: Vec<MstEdge> = edges.iter().copied().filter(|e| e.weight < w).collect();
            let comps = components(&points, &kept, &mut comp_of, &mut adj);

            let big: Vec<usize> = (0..comps.len())
                .filter(|&c| comps[c].len() >= min_cluster_size)
                .collect();
            for (c, members) in comps.iter().enumerate() {
                if big.contains(&c) {
                    continue;
                }
                for &p in members {
                    tree.rows.push(CondensedRow {
                        parent: cluster,
                        child: CondensedChild::Point(p),
                        lambda,
                        size: 1,
                    });
                }
            }

            match big.len() {
                0 => break,
                1 => {
                    points = comps[big[0]].clone();
                    for &p in &points {
                        comp_of[p] = 0;
                    }
                    edges = kept
                        .into_iter()
                        .filter(|e| comp_of[e.a] == 0 && comp_of[e.b] == 0)
                        .collect();
                    reset(&comps, &mut comp_of);
                    if edges.is_empty() {
                        // A big component always has an internal edge since
                        // min_cluster_size >= 2; a single point cannot get here.
                        break;
                    }
                }
                _ => {
                    let mut children = Vec::new();
                    for &c in &big {
                        let members = comps[c].clone();
                        for &p in &members {
                            comp_of[p] = c;
                        }
                        let child_edges: Vec<MstEdge> = kept
                            .iter()
                            .copied()
                            .filter(|e| comp_of[e.a] == c && comp_of[e.b] == c)
                            .collect();
                        for &p in &members {
                            comp_of[p] = usize::MAX;
                        }
                        let id = tree.clusters.len();
                        tree.clusters.push(ClusterNode {
                            parent: Some(cluster),
                            birth_lambda: lambda,
                            size: members.len(),
                            children: Vec::new(),
                            stability: 0.0,
                        });
                        tree.rows.push(CondensedRow {
                            parent: cluster,
                            child: CondensedChild::Cluster(id),
                            lambda,
                            size: members.len(),
                        });
                        children.push(id);
                        stack.push(Pending {
                            cluster: id,
                            points: members,
                            edges: child_edges,
                        });
                    }
                    tree.clusters[cluster].children = children;
                    // Process children in creation order.
                    let len = stack.len();
                    stack[len - big.len()..].reverse();
                    break;
                }
            }
        }
    }

    for row in &tree.rows {
        let birth = tree.clusters[row.parent].birth_lambda;
        tree.clusters[row.parent].stability += (row.lambda - birth) * row.size as f64;
    }
    tree
}

fn reset(comps: &[Vec<usize>], comp_of: &mut [usize]) {
    for members in comps {
        for &p in members {
            comp_of[p] = usize::MAX;
        }
    }
}

/// Connected components of `points` under `edges`, ordered by smallest
/// member, each sorted ascending. Leaves `comp_of` cleared.
fn components(
    points: &[usize],
    edges: &[MstEdge],
    comp_of: &mut [usize],
    adj: &mut [Vec<usize>],
) -> Vec<Vec<usize>> {
    for e in edges {
        adj[e.a].push(e.b);
        adj[e.b].push(e.a);
    }
    let mut sorted = points.to_vec();
    sorted.sort_unstable();
    let mut comps = Vec::new();
    for &start in &sorted {
        if comp_of[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut members = vec![start];
        comp_of[start] = id;
        let mut i = 0;
        while i < members.len() {
            let u = members[i];
            for k in 0..adj[u].len() {
                let v = adj[u][k];
                if comp_of[v] == usize::MAX {
                    comp_of[v] = id;
                    members.push(v);
                }
            }
            i += 1;
        }
        members.sort_unstable();
        comps.push(members);
    }
    for e in edges {
        adj[e.a].clear();
        adj[e.b].clear();
    }
    reset(&comps, comp_of);
    comps
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(a: usize, b: usize, weight: f64) -> MstEdge {
        MstEdge { a, b, weight }
    }

    /// Two tight triples joined by a long edge.
    fn two_triples() -> Vec<MstEdge> {
        vec![
            edge(0, 1, 1.0),
            edge(1, 2, 1.0),
            edge(2, 3, 10.0),
            edge(3, 4, 0.5),
            edge(4, 5, 0.5),
        ]
    }

    #[test]
    fn long_edge_splits_into_two_children() {
        let tree = condense_tree(6, &two_triples(), 3);
        assert_eq!(tree.clusters.len(), 3);
        assert_eq!(tree.clusters[0].children, vec![1, 2]);
        assert!((tree.clusters[1].birth_lambda - 0.1).abs() < 1e-12);
        assert_eq!(tree.clusters[1].size, 3);
        // Cluster 1 dissolves at lambda 1: three points, 0.9 each.
        assert!((tree.clusters[1].stability - 2.7).abs() < 1e-12);
        // Cluster 2 dissolves at lambda 2: 1.9 each.
        assert!((tree.clusters[2].stability - 5.7).abs() < 1e-12);
        // Root: 6 points leave via children at 0.1.
        assert!((tree.clusters[0].stability - 0.6).abs() < 1e-12);
    }

    #[test]
    fn small_side_falls_out_as_points() {
        let tree = condense_tree(6, &two_triples(), 4);
        assert_eq!(tree.clusters.len(), 1);
        // Neither side has four points, so all leave the root at the first cut.
        assert!(tree
            .point_lambdas()
            .iter()
            .all(|&(parent, l)| parent == 0 && (l - 0.1).abs() < 1e-12));
    }

    #[test]
    fn zero_weight_edges_hit_the_cap() {
        let tree = condense_tree(3, &[edge(0, 1, 0.0), edge(1, 2, 0.0)], 2);
        assert!(tree.point_lambdas().iter().all(|&(_, l)| l == LAMBDA_CAP));
    }

    #[test]
    fn every_point_leaves_exactly_once() {
        let tree = condense_tree(6, &two_triples(), 2);
        let mut seen = [0; 6];
        for row in &tree.rows {
            if let CondensedChild::Point(p) = row.child {
                seen[p] += 1;
            }
        }
        assert_eq!(seen, [1; 6]);
    }

    #[test]
    fn lambdas_grow_toward_leaves() {
        let tree = condense_tree(6, &two_triples(), 2);
        for row in &tree.rows {
            assert!(row.lambda >= tree.clusters[row.parent].birth_lambda);
        }
        for c in &tree.clusters[1..] {
            assert!(c.birth_lambda >= tree.clusters[c.parent.unwrap()].birth_lambda);
        }
    }
}
