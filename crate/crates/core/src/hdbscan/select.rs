use super::{CondensedChild, CondensedTree, Labeling, SelectionMethod, NOISE};

/// Picks flat clusters from the condensed tree. The root is never eligible.
///
/// Excess of mass keeps a cluster when its own stability beats the summed
/// stability of the best selection beneath it (ties go to the descendants).
/// Leaf selection keeps every cluster without children.
pub fn select_clusters(tree: &CondensedTree, method: SelectionMethod) -> Labeling {
    let n_clusters = tree.clusters.len();
    let mut selected = vec![false; n_clusters];
    match method {
        SelectionMethod::Leaf => {
            for c in 1..n_clusters {
                selected[c] = tree.is_leaf(c);
            }
        }
        SelectionMethod::Eom => {
            let mut best = vec![0.0; n_clusters];
            // Children have larger ids, so a reverse sweep is bottom-up.
            for c in (1..n_clusters).rev() {
                let node = &tree.clusters[c];
                let below: f64 = node.children.iter().map(|&k| best[k]).sum();
                if node.children.is_empty() || node.stability > below {
                    selected[c] = true;
                    best[c] = node.stability;
                    deselect_descendants(tree, c, &mut selected);
                } else {
                    best[c] = below;
                }
            }
        }
    }
    label_points(tree, &selected)
}

fn deselect_descendants(tree: &CondensedTree, cluster: usize, selected: &mut [bool]) {
    let mut stack = tree.clusters[cluster].children.clone();
    while let Some(c) = stack.pop() {
        selected[c] = false;
        stack.extend_from_slice(&tree.clusters[c].children);
    }
}

fn label_points(tree: &CondensedTree, selected: &[bool]) -> Labeling {
    let n_clusters = tree.clusters.len();
    let mut label_of = vec![NOISE; n_clusters];
    let mut next = 0;
    for c in 0..n_clusters {
        if selected[c] {
            label_of[c] = next;
            next += 1;
        }
    }
    // Nearest selected ancestor-or-self; parents precede children.
    let mut owner = vec![NOISE; n_clusters];
    for c in 0..n_clusters {
        owner[c] = if selected[c] {
            label_of[c]
        } else {
            tree.clusters[c].parent.map_or(NOISE, |p| owner[p])
        };
    }

    let mut labeling = Labeling::all_noise(tree.n_points);
    let mut max_lambda = vec![0.0f64; next as usize];
    let mut lambdas = vec![0.0; tree.n_points];
    for row in &tree.rows {
        if let CondensedChild::Point(p) = row.child {
            let label = owner[row.parent];
            labeling.labels[p] = label;
            lambdas[p] = row.lambda;
            if label >= 0 {
                let m = &mut max_lambda[label as usize];
                *m = m.max(row.lambda);
            }
        }
    }
    for p in 0..tree.n_points {
        let label = labeling.labels[p];
        if label >= 0 {
            let m = max_lambda[label as usize];
            labeling.probabilities[p] = if m > 0.0 {
                (lambdas[p] / m).clamp(0.0, 1.0)
            } else {
                1.0
            };
        }
    }
    labeling
}
