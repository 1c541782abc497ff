//! Naive reference implementations shared by the integration tests. They
//! follow the textbook definitions directly and share no code with the
//! library.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn distance_table(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| points.iter().map(|q| euclidean(p, q)).collect())
        .collect()
}

/// Connected components of `members` under edges whose weight passes `keep`.
fn components(members: &[usize], w: &[Vec<f64>], keep: impl Fn(f64) -> bool) -> Vec<Vec<usize>> {
    let mut seen: HashMap<usize, bool> = members.iter().map(|&m| (m, false)).collect();
    let mut out = Vec::new();
    for &start in members {
        if seen[&start] {
            continue;
        }
        seen.insert(start, true);
        let mut comp = vec![start];
        let mut i = 0;
        while i < comp.len() {
            let u = comp[i];
            for &v in members {
                if !seen[&v] && keep(w[u][v]) {
                    seen.insert(v, true);
                    comp.push(v);
                }
            }
            i += 1;
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

struct Node {
    parent: Option<usize>,
    children: Vec<usize>,
    stability: f64,
    /// Points that left the tree while in this cluster.
    fallen: Vec<usize>,
}

fn lambda(r: f64) -> f64 {
    if r > 0.0 {
        (1.0 / r).min(1e12)
    } else {
        1e12
    }
}

/// HDBSCAN straight from the definitions: core distance to the
/// `min_samples`-th nearest other point, mutual reachability, and a
/// top-down sweep of the level sets of the full mutual-reachability graph.
/// At each cluster's next split level every component smaller than
/// `min_cluster_size` falls out; two or more large components become child
/// clusters. Returns one label per point, `-1` for noise.
pub fn naive_hdbscan(points: &[Vec<f64>], min_samples: usize, min_cluster_size: usize, leaf: bool) -> Vec<i32> {
    let n = points.len();
    if n < min_cluster_size {
        return vec![-1; n];
    }
    let d = distance_table(points);
    let core: Vec<f64> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d[i][j]).collect();
            row.sort_by(|a, b| a.partial_cmp(b).unwrap());
            row[min_samples - 1]
        })
        .collect();
    let mr: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { d[i][j].max(core[i]).max(core[j]) })
                .collect()
        })
        .collect();

    let mut nodes = vec![Node {
        parent: None,
        children: Vec::new(),
        stability: 0.0,
        fallen: Vec::new(),
    }];
    let mut work = vec![(0usize, (0..n).collect::<Vec<usize>>(), 0.0f64)];
    while let Some((id, mut members, birth)) = work.pop() {
        loop {
            // The weight at which this member set first becomes connected.
            let mut weights: Vec<f64> = Vec::new();
            for (a, &u) in members.iter().enumerate() {
                for &v in &members[a + 1..] {
                    weights.push(mr[u][v]);
                }
            }
            weights.sort_by(|a, b| a.partial_cmp(b).unwrap());
            weights.dedup();
            let level = *weights
                .iter()
                .find(|&&r| components(&members, &mr, |w| w <= r).len() == 1)
                .expect("complete graph connects at its largest weight");
            let lam = lambda(level);
            let pieces = components(&members, &mr, |w| w < level);
            let (big, small): (Vec<_>, Vec<_>) = pieces.into_iter().partition(|c| c.len() >= min_cluster_size);
            for p in small.iter().flatten() {
                nodes[id].stability += lam - birth;
                nodes[id].fallen.push(*p);
            }
            match big.len() {
                0 => break,
                1 => members = big.into_iter().next().unwrap(),
                _ => {
                    for child in big {
                        nodes[id].stability += (lam - birth) * child.len() as f64;
                        let cid = nodes.len();
                        nodes.push(Node {
                            parent: Some(id),
                            children: Vec::new(),
                            stability: 0.0,
                            fallen: Vec::new(),
                        });
                        nodes[id].children.push(cid);
                        work.push((cid, child, lam));
                    }
                    break;
                }
            }
        }
    }

    let m = nodes.len();
    let mut selected = vec![false; m];
    if leaf {
        for c in 1..m {
            selected[c] = nodes[c].children.is_empty();
        }
    } else {
        // Bottom-up excess of mass; the root is never eligible.
        fn best(c: usize, nodes: &[Node], selected: &mut [bool]) -> f64 {
            let below: f64 = nodes[c].children.clone().into_iter().map(|k| best(k, nodes, selected)).sum();
            if c == 0 {
                return below;
            }
            if nodes[c].children.is_empty() || nodes[c].stability > below {
                let mut stack = nodes[c].children.clone();
                while let Some(k) = stack.pop() {
                    selected[k] = false;
                    stack.extend(nodes[k].children.iter().copied());
                }
                selected[c] = true;
                nodes[c].stability
            } else {
                below
            }
        }
        best(0, &nodes, &mut selected);
    }

    let mut labels = vec![-1; n];
    for (c, node) in nodes.iter().enumerate() {
        let mut owner = Some(c);
        while let Some(o) = owner {
            if selected[o] {
                break;
            }
            owner = nodes[o].parent;
        }
        if let Some(o) = owner {
            for &p in &node.fallen {
                labels[p] = o as i32;
            }
        }
    }
    labels
}

/// Relabels clusters by first appearance so that equal partitions compare
/// equal; noise stays `-1`.
pub fn canonical(labels: &[i32]) -> Vec<i32> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            if l < 0 {
                -1
            } else {
                let next = map.len() as i32;
                *map.entry(l).or_insert(next)
            }
        })
        .collect()
}

/// Minimum spanning-tree weight by trying every (n-1)-edge subset.
pub fn exhaustive_mst_weight(w: &[Vec<f64>]) -> f64 {
    let n = w.len();
    if n < 2 {
        return 0.0;
    }
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b))).collect();
    let k = n - 1;
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best = f64::INFINITY;
    loop {
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        let mut ok = true;
        let mut total = 0.0;
        for &e in &idx {
            let (a, b) = edges[e];
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                ok = false;
                break;
            }
            parent[ra] = rb;
            total += w[a][b];
        }
        if ok && total < best {
            best = total;
        }
        // Next combination in lexicographic order.
        let mut i = k;
        while i > 0 && idx[i - 1] == edges.len() - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// DBCV from the definitions, with a Kruskal tree per cluster and
/// direct (not log-space) all-points core distances. Noise counts towards
/// the total size.
pub fn naive_dbcv(points: &[Vec<f64>], labels: &[i32]) -> f64 {
    let dim = points[0].len() as f64;
    let d = distance_table(points);
    let mut clusters: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l >= 0 {
            clusters.entry(l).or_default().push(i);
        }
    }
    struct Shape {
        members: Vec<usize>,
        core: HashMap<usize, f64>,
        internal: Vec<usize>,
        sparseness: f64,
    }
    let shapes: Vec<Shape> = clusters
        .values()
        .map(|members| {
            let m = members.len() as f64;
            let core: HashMap<usize, f64> = members
                .iter()
                .map(|&p| {
                    let s: f64 = members.iter().filter(|&&o| o != p).map(|&o| (1.0 / d[p][o]).powf(dim)).sum();
                    (p, (s / (m - 1.0)).powf(-1.0 / dim))
                })
                .collect();
            let mreach = |a: usize, b: usize| d[a][b].max(core[&a]).max(core[&b]);
            let mut edges: Vec<(f64, usize, usize)> = Vec::new();
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    edges.push((mreach(a, b), a, b));
                }
            }
            edges.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let mut group: HashMap<usize, usize> = members.iter().map(|&p| (p, p)).collect();
            let mut tree = Vec::new();
            for (w, a, b) in edges {
                let (ga, gb) = (group[&a], group[&b]);
                if ga != gb {
                    for v in group.values_mut() {
                        if *v == gb {
                            *v = ga;
                        }
                    }
                    tree.push((w, a, b));
                }
            }
            let mut degree: HashMap<usize, usize> = HashMap::new();
            for &(_, a, b) in &tree {
                *degree.entry(a).or_default() += 1;
                *degree.entry(b).or_default() += 1;
            }
            let is_internal = |p: &usize| degree.get(p).copied().unwrap_or(0) > 1;
            let inner: Vec<f64> = tree
                .iter()
                .filter(|(_, a, b)| is_internal(a) && is_internal(b))
                .map(|t| t.0)
                .collect();
            let sparseness = if inner.is_empty() {
                tree.iter().map(|t| t.0).fold(0.0, f64::max)
            } else {
                inner.into_iter().fold(0.0, f64::max)
            };
            let mut internal: Vec<usize> = members.iter().copied().filter(is_internal).collect();
            if internal.is_empty() {
                internal = members.clone();
            }
            Shape {
                members: members.clone(),
                core,
                internal,
                sparseness,
            }
        })
        .collect();

    let n = labels.len() as f64;
    let mut score = 0.0;
    for (i, s) in shapes.iter().enumerate() {
        let mut sep = f64::INFINITY;
        for (j, o) in shapes.iter().enumerate() {
            if i == j {
                continue;
            }
            for &a in &s.internal {
                for &b in &o.internal {
                    sep = sep.min(d[a][b].max(s.core[&a]).max(o.core[&b]));
                }
            }
        }
        let v = (sep - s.sparseness) / sep.max(s.sparseness);
        score += s.members.len() as f64 / n * v;
    }
    score
}

/// Adjusted Rand index between two labelings (noise treated as one more
/// label).
pub fn adjusted_rand_index(a: &[i32], b: &[i32]) -> f64 {
    assert_eq!(a.len(), b.len());
    let choose2 = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: HashMap<(i32, i32), f64> = HashMap::new();
    let mut rows: HashMap<i32, f64> = HashMap::new();
    let mut cols: HashMap<i32, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| choose2(v)).sum();
    let sum_rows: f64 = rows.values().map(|&v| choose2(v)).sum();
    let sum_cols: f64 = cols.values().map(|&v| choose2(v)).sum();
    let expected = sum_rows * sum_cols / choose2(a.len() as f64);
    let max = (sum_rows + sum_cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Mean fraction of each point's `k` nearest neighbours (Euclidean, self
/// excluded) that share its label.
pub fn knn_purity(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let n = points.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut order: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (euclidean(&points[i], &points[j]), j)).collect();
        order.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let same = order[..k].iter().filter(|(_, j)| labels[*j] == labels[i]).count();
        total += same as f64 / k as f64;
    }
    total / n as f64
}
