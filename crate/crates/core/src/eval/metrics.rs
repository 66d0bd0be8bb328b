//! Label and geometry metrics: superset ("contain") accuracy, per-sample
//! average precision, at-least-one multilabel clustering accuracy and the
//! silhouette coefficient over clustered points.

use std::collections::{BTreeSet, HashMap};

use ndarray::Array2;

use crate::error::{Error, Result};

/// Fraction of samples whose predicted label set is a superset of the
/// ground-truth set.
pub fn contain_accuracy(
    predicted: &[BTreeSet<String>],
    truth: &[BTreeSet<String>],
) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Eval(format!(
            "length mismatch: {} predictions vs {} truths",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Eval("no samples".into()));
    }
    let hits = predicted
        .iter()
        .zip(truth)
        .filter(|(p, t)| t.is_subset(p))
        .count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Average precision of one score-ranked label list against a truth set.
/// Ties rank by label index (ascending) for determinism.
fn average_precision(scores: &[f64], truth: &[bool]) -> f64 {
    let n_true = truth.iter().filter(|t| **t).count();
    if n_true == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| {
        scores[*b]
            .partial_cmp(&scores[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    });
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (rank, &label) in order.iter().enumerate() {
        if truth[label] {
            hits += 1;
            ap += hits as f64 / (rank + 1) as f64;
        }
    }
    ap / n_true as f64
}

/// Mean over samples of the average precision of the label ranking induced
/// by `scores` (rows = samples, columns = vocabulary order). Samples with
/// empty truth sets are excluded; all-empty truth is an error.
pub fn sample_auprc(
    scores: &Array2<f64>,
    truth: &[BTreeSet<String>],
    vocab: &[String],
) -> Result<f64> {
    if scores.nrows() != truth.len() {
        return Err(Error::Eval("scores/truth length mismatch".into()));
    }
    if scores.ncols() != vocab.len() {
        return Err(Error::Eval("scores width differs from vocabulary".into()));
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for (i, t) in truth.iter().enumerate() {
        if t.is_empty() {
            continue;
        }
        let mask: Vec<bool> = vocab.iter().map(|l| t.contains(l)).collect();
        let row: Vec<f64> = scores.row(i).to_vec();
        total += average_precision(&row, &mask);
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::Eval("every sample has an empty truth set".into()));
    }
    Ok(total / counted as f64)
}

/// At-least-one multilabel clustering accuracy over clustered samples:
/// the fraction whose label set contains their cluster's primary label.
pub fn multilabel_acc(
    assignment: &[i32],
    label_sets: &[BTreeSet<String>],
    primary_labels: &HashMap<i32, String>,
) -> Result<f64> {
    if assignment.len() != label_sets.len() {
        return Err(Error::Eval("assignment/label length mismatch".into()));
    }
    let mut hits = 0usize;
    let mut counted = 0usize;
    for (c, labels) in assignment.iter().zip(label_sets) {
        if *c < 0 {
            continue;
        }
        let primary = primary_labels
            .get(c)
            .ok_or_else(|| Error::Eval(format!("cluster {c} has no primary label")))?;
        counted += 1;
        if labels.contains(primary) {
            hits += 1;
        }
    }
    if counted == 0 {
        return Err(Error::Eval("no clustered samples".into()));
    }
    Ok(hits as f64 / counted as f64)
}

/// Mean silhouette coefficient over points with `assignment != -1`
/// (Euclidean metric). Requires at least two clusters among the assigned
/// points. Points in singleton clusters score 0.
pub fn silhouette_clustered(vectors: &Array2<f64>, assignment: &[i32]) -> Result<f64> {
    if vectors.nrows() != assignment.len() {
        return Err(Error::Eval("vectors/assignment length mismatch".into()));
    }
    let clustered: Vec<usize> = (0..assignment.len()).filter(|i| assignment[*i] >= 0).collect();
    let clusters: BTreeSet<i32> = clustered.iter().map(|i| assignment[*i]).collect();
    if clusters.len() < 2 {
        return Err(Error::Eval(format!(
            "silhouette needs >= 2 clusters, found {}",
            clusters.len()
        )));
    }
    let dist = |a: usize, b: usize| -> f64 {
        let ra = vectors.row(a);
        let rb = vectors.row(b);
        ra.iter()
            .zip(rb.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut total = 0.0;
    for &i in &clustered {
        let own = assignment[i];
        let mut sums: HashMap<i32, (f64, usize)> = HashMap::new();
        for &j in &clustered {
            if i == j {
                continue;
            }
            let e = sums.entry(assignment[j]).or_insert((0.0, 0));
            e.0 += dist(i, j);
            e.1 += 1;
        }
        let own_count = sums.get(&own).map(|(_, c)| *c).unwrap_or(0);
        if own_count == 0 {
            // Singleton cluster: silhouette 0 by convention.
            continue;
        }
        let a = sums[&own].0 / own_count as f64;
        let b = clusters
            .iter()
            .filter(|c| **c != own)
            .map(|c| {
                let (s, n) = sums[c];
                s / n as f64
            })
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / clustered.len() as f64)
}
