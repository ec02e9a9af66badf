//! Polynomial-time SHAP values over tree paths, with features outside the
//! coalition marginalized by training cover.

use rustc_hash::FxHashMap;

use crate::encode::SparseRow;
use crate::models::{Node, Tree};

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: i64,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

fn extend(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: i64) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if depth == 0 { 1.0 } else { 0.0 },
    });
    let denom = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) as f64 / denom;
        path[i].pweight = zero_fraction * path[i].pweight * (depth - i) as f64 / denom;
    }
}

fn unwind(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let PathElement {
        one_fraction,
        zero_fraction,
        ..
    } = path[index];
    let mut next = path[depth].pweight;
    let denom = (depth + 1) as f64;
    for i in (0..depth).rev() {
        if one_fraction != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next * denom / ((i + 1) as f64 * one_fraction);
            next = tmp - path[i].pweight * zero_fraction * (depth - i) as f64 / denom;
        } else {
            path[i].pweight = path[i].pweight * denom / (zero_fraction * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let PathElement {
        one_fraction,
        zero_fraction,
        ..
    } = path[index];
    let mut next = path[depth].pweight;
    let mut total = 0.0;
    if one_fraction != 0.0 {
        for i in (0..depth).rev() {
            let tmp = next / ((i + 1) as f64 * one_fraction);
            total += tmp;
            next = path[i].pweight - tmp * zero_fraction * (depth - i) as f64;
        }
    } else {
        for i in (0..depth).rev() {
            total += path[i].pweight / (zero_fraction * (depth - i) as f64);
        }
    }
    total * (depth + 1) as f64
}

fn recurse(
    tree: &Tree,
    x: &SparseRow,
    node: usize,
    mut path: Vec<PathElement>,
    zero_fraction: f64,
    one_fraction: f64,
    feature: i64,
    phi: &mut FxHashMap<u32, f64>,
) {
    extend(&mut path, zero_fraction, one_fraction, feature);
    match tree.nodes[node] {
        Node::Leaf { ref value, .. } => {
            let v = value.output();
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let el = path[i];
                *phi.entry(el.feature as u32).or_insert(0.0) +=
                    w * (el.one_fraction - el.zero_fraction) * v;
            }
        }
        Node::Split {
            feature: f,
            threshold,
            left,
            right,
            cover,
        } => {
            let (hot, cold) = if x.get(f as usize) <= threshold {
                (left as usize, right as usize)
            } else {
                (right as usize, left as usize)
            };
            let (mut incoming_zero, mut incoming_one) = (1.0, 1.0);
            if let Some(k) = path.iter().skip(1).position(|e| e.feature == f as i64) {
                let k = k + 1;
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind(&mut path, k);
            }
            let hot_zero = tree.nodes[hot].cover() / cover;
            let cold_zero = tree.nodes[cold].cover() / cover;
            recurse(
                tree,
                x,
                hot,
                path.clone(),
                hot_zero * incoming_zero,
                incoming_one,
                f as i64,
                phi,
            );
            recurse(
                tree,
                x,
                cold,
                path,
                cold_zero * incoming_zero,
                0.0,
                f as i64,
                phi,
            );
        }
    }
}

/// Cover-weighted mean leaf output: the tree's value on the empty coalition.
pub fn tree_expected_value(tree: &Tree) -> f64 {
    fn walk(tree: &Tree, i: usize) -> f64 {
        match tree.nodes[i] {
            Node::Leaf { ref value, .. } => value.output(),
            Node::Split {
                left, right, cover, ..
            } => {
                let (l, r) = (left as usize, right as usize);
                (tree.nodes[l].cover() * walk(tree, l) + tree.nodes[r].cover() * walk(tree, r))
                    / cover
            }
        }
    }
    walk(tree, 0)
}

/// Adds `scale · φ(tree, x)` into `phi`.
pub(crate) fn tree_shap_into(
    tree: &Tree,
    x: &SparseRow,
    scale: f64,
    phi: &mut FxHashMap<u32, f64>,
) {
    let mut local = FxHashMap::default();
    recurse(tree, x, 0, Vec::new(), 1.0, 1.0, -1, &mut local);
    for (f, v) in local {
        *phi.entry(f).or_insert(0.0) += scale * v;
    }
}
