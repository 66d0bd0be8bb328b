//! Two-component PCA projection and SVG scatter export for visual
//! inspection of the embedding space.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use crate::error::Result;

/// Projects rows onto their top two principal components (power iteration
/// with deflation; deterministic start vectors).
pub fn pca_2d(vectors: &Array2<f64>) -> Array2<f64> {
    let n = vectors.nrows();
    let d = vectors.ncols();
    if n == 0 || d == 0 {
        return Array2::zeros((n, 2));
    }
    let mean = vectors.mean_axis(Axis(0)).unwrap();
    let centered = vectors - &mean.view().insert_axis(Axis(0));
    let denom = (n.max(2) - 1) as f64;
    let mut cov = centered.t().dot(&centered) / denom;

    let mut components: Vec<Array1<f64>> = Vec::new();
    for k in 0..2usize.min(d) {
        let mut v = Array1::from_shape_fn(d, |i| {
            // Fixed, component-dependent start vector.
            ((i + 1) as f64 * 0.37 + k as f64 * 1.11).sin()
        });
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            v /= norm;
        }
        for _ in 0..200 {
            let mut next = cov.dot(&v);
            let norm = next.dot(&next).sqrt();
            if norm < 1e-15 {
                break;
            }
            next /= norm;
            v = next;
        }
        // Deflate: remove the found component.
        let lambda = v.dot(&cov.dot(&v));
        let outer = {
            let vc = v.view().insert_axis(Axis(1));
            vc.dot(&v.view().insert_axis(Axis(0)))
        };
        cov = &cov - &(outer * lambda);
        components.push(v);
    }
    while components.len() < 2 {
        components.push(Array1::zeros(d));
    }

    let mut out = Array2::zeros((n, 2));
    for i in 0..n {
        for (k, comp) in components.iter().enumerate() {
            out[(i, k)] = centered.row(i).dot(comp);
        }
    }
    out
}

const PALETTE: [&str; 12] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ac", "#1f77b4", "#8c564b",
];

/// Writes a 2-D scatter of PCA-projected embeddings as SVG. Cluster -1
/// (noise) renders gray; other clusters cycle a fixed palette.
pub fn write_scatter_svg(
    path: &Path,
    coords: &Array2<f64>,
    assignment: Option<&[i32]>,
    title: &str,
) -> Result<()> {
    let (w, h, margin) = (800.0, 600.0, 40.0);
    let n = coords.nrows();
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        min_x = min_x.min(coords[(i, 0)]);
        max_x = max_x.max(coords[(i, 0)]);
        min_y = min_y.min(coords[(i, 1)]);
        max_y = max_y.max(coords[(i, 1)]);
    }
    if n == 0 || !min_x.is_finite() {
        min_x = 0.0;
        max_x = 1.0;
        min_y = 0.0;
        max_y = 1.0;
    }
    let span_x = (max_x - min_x).max(1e-12);
    let span_y = (max_y - min_y).max(1e-12);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n",
        margin, title
    ));
    for i in 0..n {
        let x = margin + (coords[(i, 0)] - min_x) / span_x * (w - 2.0 * margin);
        let y = h - margin - (coords[(i, 1)] - min_y) / span_y * (h - 2.0 * margin);
        let color = match assignment.map(|a| a[i]) {
            Some(c) if c >= 0 => PALETTE[c as usize % PALETTE.len()],
            Some(_) => "#cccccc",
            None => PALETTE[0],
        };
        svg.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{color}\" fill-opacity=\"0.75\"/>\n"
        ));
    }
    svg.push_str("</svg>\n");
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(svg.as_bytes())?;
    Ok(())
}
