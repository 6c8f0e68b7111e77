//! Silhouette scores of labelled embeddings.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette coefficient (Euclidean) of `points` under `labels`.
///
/// A point whose own cluster is at distance zero scores 1 when the nearest
/// other cluster is farther away, and 0 when that distance is also zero.
pub fn embedding_separability(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(Error::Shape(format!("{} points but {} labels", points.len(), labels.len())));
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    if members.len() < 2 {
        return Err(Error::Validation("silhouette needs at least two labels".into()));
    }
    if let Some((l, _)) = members.iter().find(|(_, m)| m.len() < 2) {
        return Err(Error::Validation(format!("silhouette needs at least two points per label; label {l} has one")));
    }
    if let Some(d) = points.first().map(|p| p.len()) {
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::Shape("embeddings differ in dimension".into()));
        }
    }
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut a = 0.0;
        let mut b = f64::INFINITY;
        for (&l, idx) in &members {
            let sum: f64 = idx.iter().filter(|&&j| j != i).map(|&j| distance(p, &points[j])).sum();
            if l == labels[i] {
                a = sum / (idx.len() - 1) as f64;
            } else {
                b = b.min(sum / idx.len() as f64);
            }
        }
        let m = a.max(b);
        total += if m > 0.0 { (b - a) / m } else { 0.0 };
    }
    Ok(total / points.len() as f64)
}
