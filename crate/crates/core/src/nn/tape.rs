//! Minimal reverse-mode autodiff over dense f64 matrices.
//!
//! A [`Tape`] is a Wengert list: every operation appends its output value
//! and a backward closure that routes the output gradient to its parents.
//! Row vectors (biases, batch-norm parameters) are `1 x d` matrices so a
//! single array type covers everything.

use std::rc::Rc;

use ndarray::{Array2, Axis};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type Grads = Vec<Option<Array2<f64>>>;
type BackFn = Box<dyn Fn(&[Array2<f64>], &Array2<f64>, &mut Grads)>;

#[derive(Default)]
pub struct Tape {
    values: Vec<Array2<f64>>,
    backs: Vec<Option<BackFn>>,
}

fn accum(grads: &mut Grads, idx: usize, delta: Array2<f64>) {
    match &mut grads[idx] {
        Some(g) => *g += &delta,
        slot => *slot = Some(delta),
    }
}

/// Gradients keyed by tape node, produced by [`Tape::backward`].
pub struct Gradients(Grads);

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.0[v.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.values[v.0]
    }

    fn push(&mut self, value: Array2<f64>, back: Option<BackFn>) -> Var {
        self.values.push(value);
        self.backs.push(back);
        Var(self.values.len() - 1)
    }

    /// Introduces a leaf. Leaves have no backward function; their gradients
    /// are read out of [`Gradients`] directly.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, None)
    }

    /// `x @ w^T` for `x: (n, d_in)`, `w: (d_out, d_in)`.
    pub fn matmul_nt(&mut self, x: Var, w: Var) -> Var {
        let y = self.values[x.0].dot(&self.values[w.0].t());
        self.push(
            y,
            Some(Box::new(move |values, dy, grads| {
                accum(grads, x.0, dy.dot(&values[w.0]));
                accum(grads, w.0, dy.t().dot(&values[x.0]));
            })),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let y = &self.values[a.0] + &self.values[b.0];
        self.push(
            y,
            Some(Box::new(move |_, dy, grads| {
                accum(grads, a.0, dy.clone());
                accum(grads, b.0, dy.clone());
            })),
        )
    }

    /// Adds a `1 x d` bias row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let y = &self.values[x.0] + &self.values[bias.0];
        self.push(
            y,
            Some(Box::new(move |_, dy, grads| {
                accum(grads, x.0, dy.clone());
                accum(grads, bias.0, dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
            })),
        )
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let y = &self.values[x.0] * c;
        self.push(
            y,
            Some(Box::new(move |_, dy, grads| {
                accum(grads, x.0, dy * c);
            })),
        )
    }

    /// Elementwise mean of same-shaped inputs.
    pub fn mean_of(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let mut acc = parts[0];
        for p in &parts[1..] {
            acc = self.add(acc, *p);
        }
        self.scale(acc, 1.0 / parts.len() as f64)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.values[x.0].mapv(|v| v.max(0.0));
        self.push(
            y,
            Some(Box::new(move |values, dy, grads| {
                let mask = values[x.0].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                accum(grads, x.0, dy * &mask);
            })),
        )
    }

    /// PReLU with a single shared slope parameter `alpha: (1, 1)`.
    pub fn prelu(&mut self, x: Var, alpha: Var) -> Var {
        let a = self.values[alpha.0][(0, 0)];
        let y = self.values[x.0].mapv(|v| if v > 0.0 { v } else { a * v });
        self.push(
            y,
            Some(Box::new(move |values, dy, grads| {
                let a = values[alpha.0][(0, 0)];
                let xs = &values[x.0];
                let dx = ndarray::Zip::from(dy).and(xs).map_collect(|g, v| {
                    if *v > 0.0 {
                        *g
                    } else {
                        *g * a
                    }
                });
                accum(grads, x.0, dx);
                let da: f64 = ndarray::Zip::from(dy)
                    .and(xs)
                    .fold(0.0, |acc, g, v| if *v > 0.0 { acc } else { acc + g * v });
                accum(grads, alpha.0, ndarray::arr2(&[[da]]));
            })),
        )
    }

    /// Row gather: `y[e, :] = x[idx[e], :]`.
    pub fn gather_rows(&mut self, x: Var, idx: Rc<Vec<u32>>) -> Var {
        let xs = &self.values[x.0];
        let d = xs.ncols();
        let mut y = Array2::zeros((idx.len(), d));
        for (e, &i) in idx.iter().enumerate() {
            y.row_mut(e).assign(&xs.row(i as usize));
        }
        let idx_b = Rc::clone(&idx);
        self.push(
            y,
            Some(Box::new(move |values, dy, grads| {
                let mut dx = Array2::zeros(values[x.0].raw_dim());
                for (e, &i) in idx_b.iter().enumerate() {
                    let mut row = dx.row_mut(i as usize);
                    row += &dy.row(e);
                }
                accum(grads, x.0, dx);
            })),
        )
    }

    /// Mean-aggregates edge rows onto `n_out` targets; targets without
    /// incoming rows stay zero.
    pub fn scatter_mean(&mut self, src: Var, dst: Rc<Vec<u32>>, n_out: usize) -> Var {
        let xs = &self.values[src.0];
        let d = xs.ncols();
        let mut counts = vec![0.0f64; n_out];
        for &i in dst.iter() {
            counts[i as usize] += 1.0;
        }
        let mut y = Array2::zeros((n_out, d));
        for (e, &i) in dst.iter().enumerate() {
            let mut row = y.row_mut(i as usize);
            row += &xs.row(e);
        }
        for (i, c) in counts.iter().enumerate() {
            if *c > 0.0 {
                let mut row = y.row_mut(i);
                row /= *c;
            }
        }
        let counts_b = counts;
        let dst_b = Rc::clone(&dst);
        self.push(
            y,
            Some(Box::new(move |values, dy, grads| {
                let mut dsrc = Array2::zeros(values[src.0].raw_dim());
                for (e, &i) in dst_b.iter().enumerate() {
                    let c = counts_b[i as usize];
                    let mut row = dsrc.row_mut(e);
                    ndarray::Zip::from(&mut row)
                        .and(&dy.row(i as usize))
                        .for_each(|o, g| *o = g / c);
                }
                accum(grads, src.0, dsrc);
            })),
        )
    }

    /// Per-segment mean over rows grouped by `seg` (values in `0..n_seg`).
    /// Every segment must own at least one row.
    pub fn segment_mean(&mut self, x: Var, seg: Rc<Vec<u32>>, n_seg: usize) -> Var {
        self.scatter_mean(x, seg, n_seg)
    }

    fn segment_extremum(&mut self, x: Var, seg: Rc<Vec<u32>>, n_seg: usize, take_max: bool) -> Var {
        let xs = &self.values[x.0];
        let d = xs.ncols();
        let init = if take_max { f64::NEG_INFINITY } else { f64::INFINITY };
        let mut y = Array2::from_elem((n_seg, d), init);
        let mut arg = vec![usize::MAX; n_seg * d];
        for (r, &s) in seg.iter().enumerate() {
            let s = s as usize;
            for c in 0..d {
                let v = xs[(r, c)];
                let better = if take_max { v > y[(s, c)] } else { v < y[(s, c)] };
                if better {
                    y[(s, c)] = v;
                    arg[s * d + c] = r;
                }
            }
        }
        debug_assert!(
            arg.iter().all(|a| *a != usize::MAX),
            "segment pooling over an empty segment"
        );
        self.push(
            y,
            Some(Box::new(move |values, dy, grads| {
                let mut dx = Array2::zeros(values[x.0].raw_dim());
                for s in 0..n_seg {
                    for c in 0..d {
                        dx[(arg[s * d + c], c)] += dy[(s, c)];
                    }
                }
                accum(grads, x.0, dx);
            })),
        )
    }

    pub fn segment_max(&mut self, x: Var, seg: Rc<Vec<u32>>, n_seg: usize) -> Var {
        self.segment_extremum(x, seg, n_seg, true)
    }

    pub fn segment_min(&mut self, x: Var, seg: Rc<Vec<u32>>, n_seg: usize) -> Var {
        self.segment_extremum(x, seg, n_seg, false)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|p| self.values[p.0].view()).collect();
        let y = ndarray::concatenate(Axis(1), &views).expect("matching row counts");
        let parts_b: Vec<Var> = parts.to_vec();
        let widths: Vec<usize> = parts.iter().map(|p| self.values[p.0].ncols()).collect();
        self.push(
            y,
            Some(Box::new(move |_, dy, grads| {
                let mut offset = 0;
                for (p, w) in parts_b.iter().zip(&widths) {
                    let slice = dy.slice(ndarray::s![.., offset..offset + w]).to_owned();
                    accum(grads, p.0, slice);
                    offset += w;
                }
            })),
        )
    }

    /// Batch norm over rows with batch statistics. Returns the output plus
    /// the `(mean, biased variance)` of this batch for running-stat updates.
    pub fn batchnorm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> (Var, (Array2<f64>, Array2<f64>)) {
        let xs = &self.values[x.0];
        let n = xs.nrows();
        if n == 0 {
            let d = xs.ncols();
            let out = self.push(Array2::zeros((0, d)), None);
            return (out, (Array2::zeros((1, d)), Array2::zeros((1, d))));
        }
        let mean = xs.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
        let centered = xs - &mean;
        let var = centered
            .mapv(|v| v * v)
            .mean_axis(Axis(0))
            .unwrap()
            .insert_axis(Axis(0));
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let xhat = &centered * &inv_std;
        let y = &xhat * &self.values[gamma.0] + &self.values[beta.0];
        let xhat_b = xhat;
        let inv_std_b = inv_std;
        let stats = (mean, var);
        let out = self.push(
            y,
            Some(Box::new(move |values, dy, grads| {
                let gamma_v = &values[gamma.0];
                let n_f = dy.nrows() as f64;
                let dxhat = dy * gamma_v;
                let sum_dxhat = dxhat.sum_axis(Axis(0)).insert_axis(Axis(0));
                let sum_dxhat_xhat = (&dxhat * &xhat_b).sum_axis(Axis(0)).insert_axis(Axis(0));
                let dx = (&dxhat * n_f - &sum_dxhat - &xhat_b * &sum_dxhat_xhat)
                    * &inv_std_b
                    / n_f;
                accum(grads, x.0, dx);
                accum(
                    grads,
                    gamma.0,
                    (dy * &xhat_b).sum_axis(Axis(0)).insert_axis(Axis(0)),
                );
                accum(grads, beta.0, dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
            })),
        );
        (out, stats)
    }

    /// Batch norm with fixed (running) statistics.
    pub fn batchnorm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &Array2<f64>,
        var: &Array2<f64>,
        eps: f64,
    ) -> Var {
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let xhat = (&self.values[x.0] - mean) * &inv_std;
        let y = &xhat * &self.values[gamma.0] + &self.values[beta.0];
        let xhat_b = xhat;
        let inv_std_b = inv_std;
        self.push(
            y,
            Some(Box::new(move |values, dy, grads| {
                let dx = dy * &values[gamma.0] * &inv_std_b;
                accum(grads, x.0, dx);
                accum(
                    grads,
                    gamma.0,
                    (dy * &xhat_b).sum_axis(Axis(0)).insert_axis(Axis(0)),
                );
                accum(grads, beta.0, dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
            })),
        )
    }

    /// L2-normalizes every row. Rows with tiny norms pass through unscaled;
    /// callers that must reject degenerate embeddings check norms upfront.
    pub fn l2_normalize_rows(&mut self, x: Var) -> Var {
        let xs = &self.values[x.0];
        let norms: Vec<f64> = xs
            .rows()
            .into_iter()
            .map(|r| {
                let n = r.dot(&r).sqrt();
                if n < 1e-30 {
                    1.0
                } else {
                    n
                }
            })
            .collect();
        let mut y = xs.clone();
        for (i, n) in norms.iter().enumerate() {
            let mut row = y.row_mut(i);
            row /= *n;
        }
        let y_b = y.clone();
        let norms_b = norms;
        self.push(
            y,
            Some(Box::new(move |values, dy, grads| {
                let mut dx = Array2::zeros(values[x.0].raw_dim());
                for i in 0..dy.nrows() {
                    let yi = y_b.row(i);
                    let gi = dy.row(i);
                    let dot = yi.dot(&gi);
                    let mut out = dx.row_mut(i);
                    ndarray::Zip::from(&mut out).and(&gi).and(&yi).for_each(
                        |o, g, yv| {
                            *o = (g - yv * dot) / norms_b[i];
                        },
                    );
                }
                accum(grads, x.0, dx);
            })),
        )
    }

    /// Row-wise dot product, `(n, d) x (n, d) -> (n, 1)`.
    pub fn rowwise_dot(&mut self, a: Var, b: Var) -> Var {
        let av = &self.values[a.0];
        let bv = &self.values[b.0];
        let y = Array2::from_shape_fn((av.nrows(), 1), |(i, _)| av.row(i).dot(&bv.row(i)));
        self.push(
            y,
            Some(Box::new(move |values, dy, grads| {
                let av = &values[a.0];
                let bv = &values[b.0];
                let mut da = Array2::zeros(av.raw_dim());
                let mut db = Array2::zeros(bv.raw_dim());
                for i in 0..av.nrows() {
                    let g = dy[(i, 0)];
                    let mut ra = da.row_mut(i);
                    ra.assign(&(&bv.row(i) * g));
                    let mut rb = db.row_mut(i);
                    rb.assign(&(&av.row(i) * g));
                }
                accum(grads, a.0, da);
                accum(grads, b.0, db);
            })),
        )
    }

    /// Mean over all entries, `(n, d) -> (1, 1)`.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let xs = &self.values[x.0];
        let count = (xs.nrows() * xs.ncols()) as f64;
        let y = ndarray::arr2(&[[xs.sum() / count]]);
        self.push(
            y,
            Some(Box::new(move |values, dy, grads| {
                let g = dy[(0, 0)] / count;
                accum(grads, x.0, Array2::from_elem(values[x.0].raw_dim(), g));
            })),
        )
    }

    /// Mean over rows of `-log softmax(row)[target]`, `(n, k) -> (1, 1)`.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: Rc<Vec<usize>>) -> Var {
        let xs = &self.values[logits.0];
        let n = xs.nrows();
        assert_eq!(targets.len(), n);
        let mut total = 0.0;
        let mut softmax = Array2::zeros(xs.raw_dim());
        for i in 0..n {
            let row = xs.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let z: f64 = exp.iter().sum();
            total += z.ln() + max - row[targets[i]];
            for (c, e) in exp.iter().enumerate() {
                softmax[(i, c)] = e / z;
            }
        }
        let y = ndarray::arr2(&[[total / n as f64]]);
        let targets_b = Rc::clone(&targets);
        self.push(
            y,
            Some(Box::new(move |_, dy, grads| {
                let g = dy[(0, 0)] / targets_b.len() as f64;
                let mut dl = &softmax * g;
                for (i, t) in targets_b.iter().enumerate() {
                    dl[(i, *t)] -= g;
                }
                accum(grads, logits.0, dl);
            })),
        )
    }

    /// Mean binary cross entropy with logits over all cells.
    pub fn bce_with_logits_mean(&mut self, logits: Var, targets: Rc<Array2<f64>>) -> Var {
        let z = &self.values[logits.0];
        assert_eq!(z.raw_dim(), targets.raw_dim());
        let count = (z.nrows() * z.ncols()) as f64;
        let mut total = 0.0;
        for (zi, ti) in z.iter().zip(targets.iter()) {
            total += zi.max(0.0) - zi * ti + (-zi.abs()).exp().ln_1p();
        }
        let y = ndarray::arr2(&[[total / count]]);
        let targets_b = Rc::clone(&targets);
        self.push(
            y,
            Some(Box::new(move |values, dy, grads| {
                let g = dy[(0, 0)] / count;
                let z = &values[logits.0];
                let dz = ndarray::Zip::from(z).and(targets_b.as_ref()).map_collect(
                    |zi, ti| {
                        let s = 1.0 / (1.0 + (-zi).exp());
                        (s - ti) * g
                    },
                );
                accum(grads, logits.0, dz);
            })),
        )
    }

    /// Reverse pass from a scalar `(1, 1)` root.
    pub fn backward(&mut self, root: Var) -> Gradients {
        assert_eq!(self.values[root.0].raw_dim(), ndarray::Dim([1, 1]));
        let mut grads: Grads = vec![None; self.values.len()];
        grads[root.0] = Some(ndarray::arr2(&[[1.0]]));
        let Tape { values, backs } = self;
        for i in (0..values.len()).rev() {
            if backs[i].is_none() {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            if let Some(back) = &backs[i] {
                back(values, &dy, &mut grads);
            }
            grads[i] = Some(dy);
        }
        Gradients(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    /// Central finite differences over every entry of every input, compared
    /// against the tape gradients of a scalar-valued graph.
    fn check_grads(
        inputs: &[Array2<f64>],
        f: impl Fn(&mut Tape, &[Var]) -> Var,
        tol: f64,
    ) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
        let out = f(&mut tape, &vars);
        let grads = tape.backward(out);

        let eps = 1e-5;
        for (k, input) in inputs.iter().enumerate() {
            let analytic = grads
                .get(vars[k])
                .cloned()
                .unwrap_or_else(|| Array2::zeros(input.raw_dim()));
            for i in 0..input.nrows() {
                for j in 0..input.ncols() {
                    let eval = |delta: f64| {
                        let mut tape = Tape::new();
                        let vars: Vec<Var> = inputs
                            .iter()
                            .enumerate()
                            .map(|(m, arr)| {
                                let mut arr = arr.clone();
                                if m == k {
                                    arr[(i, j)] += delta;
                                }
                                tape.leaf(arr)
                            })
                            .collect();
                        let out = f(&mut tape, &vars);
                        tape.value(out)[(0, 0)]
                    };
                    let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
                    let a = analytic[(i, j)];
                    let denom = a.abs().max(fd.abs()).max(1e-3);
                    assert!(
                        ((a - fd) / denom).abs() < tol,
                        "input {k} entry ({i},{j}): analytic {a} vs fd {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn matmul_bias_relu_chain_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random_matrix(&mut rng, 4, 3);
        let w = random_matrix(&mut rng, 5, 3);
        let b = random_matrix(&mut rng, 1, 5);
        check_grads(&[x, w, b], |t, v| {
            let h = t.matmul_nt(v[0], v[1]);
            let h = t.add_bias(h, v[2]);
            let h = t.relu(h);
            t.mean_all(h)
        }, 1e-6);
    }

    #[test]
    fn prelu_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_matrix(&mut rng, 6, 4);
        let alpha = arr2(&[[0.3]]);
        check_grads(&[x, alpha], |t, v| {
            let h = t.prelu(v[0], v[1]);
            t.mean_all(h)
        }, 1e-6);
    }

    #[test]
    fn gather_scatter_chain_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_matrix(&mut rng, 5, 3);
        let e = random_matrix(&mut rng, 7, 3);
        let idx = Rc::new(vec![0u32, 2, 2, 4, 1, 0, 3]);
        let dst = Rc::new(vec![1u32, 0, 3, 3, 3, 2, 1]);
        check_grads(&[x, e], move |t, v| {
            let gathered = t.gather_rows(v[0], Rc::clone(&idx));
            let summed = t.add(gathered, v[1]);
            let agg = t.scatter_mean(summed, Rc::clone(&dst), 5);
            t.mean_all(agg)
        }, 1e-6);
    }

    #[test]
    fn scatter_mean_leaves_lonely_targets_zero() {
        let mut tape = Tape::new();
        let src = tape.leaf(arr2(&[[2.0, 4.0], [6.0, 8.0]]));
        let out = tape.scatter_mean(src, Rc::new(vec![2, 2]), 4);
        let v = tape.value(out);
        assert_eq!(v[(2, 0)], 4.0);
        assert_eq!(v[(2, 1)], 6.0);
        assert_eq!(v[(0, 0)], 0.0);
        assert_eq!(v[(3, 1)], 0.0);
    }

    #[test]
    fn segment_pools_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 6, 3);
        let seg = Rc::new(vec![0u32, 0, 1, 1, 1, 0]);
        for kind in 0..3 {
            let seg = Rc::clone(&seg);
            check_grads(&[x.clone()], move |t, v| {
                let pooled = match kind {
                    0 => t.segment_mean(v[0], Rc::clone(&seg), 2),
                    1 => t.segment_max(v[0], Rc::clone(&seg), 2),
                    _ => t.segment_min(v[0], Rc::clone(&seg), 2),
                };
                t.mean_all(pooled)
            }, 1e-6);
        }
    }

    #[test]
    fn segment_pool_values_are_correct() {
        let mut tape = Tape::new();
        let x = tape.leaf(arr2(&[[1.0, 5.0], [3.0, 2.0], [0.0, 7.0]]));
        let seg = Rc::new(vec![0u32, 0, 1]);
        let mn = tape.segment_min(x, Rc::clone(&seg), 2);
        let mx = tape.segment_max(x, Rc::clone(&seg), 2);
        let me = tape.segment_mean(x, Rc::clone(&seg), 2);
        assert_eq!(tape.value(mn), &arr2(&[[1.0, 2.0], [0.0, 7.0]]));
        assert_eq!(tape.value(mx), &arr2(&[[3.0, 5.0], [0.0, 7.0]]));
        assert_eq!(tape.value(me), &arr2(&[[2.0, 3.5], [0.0, 7.0]]));
    }

    #[test]
    fn concat_cols_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_matrix(&mut rng, 3, 2);
        let b = random_matrix(&mut rng, 3, 4);
        check_grads(&[a, b], |t, v| {
            let c = t.concat_cols(&[v[0], v[1]]);
            let sq = t.rowwise_dot(c, c);
            t.mean_all(sq)
        }, 1e-6);
    }

    #[test]
    fn batchnorm_train_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 8, 3);
        let gamma = random_matrix(&mut rng, 1, 3);
        let beta = random_matrix(&mut rng, 1, 3);
        check_grads(&[x, gamma, beta], |t, v| {
            let (y, _) = t.batchnorm_train(v[0], v[1], v[2], 1e-5);
            let sq = t.rowwise_dot(y, y);
            t.mean_all(sq)
        }, 1e-5);
    }

    #[test]
    fn batchnorm_eval_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_matrix(&mut rng, 5, 3);
        let gamma = random_matrix(&mut rng, 1, 3);
        let beta = random_matrix(&mut rng, 1, 3);
        let mean = random_matrix(&mut rng, 1, 3);
        let var = random_matrix(&mut rng, 1, 3).mapv(f64::abs);
        check_grads(&[x, gamma, beta], move |t, v| {
            let y = t.batchnorm_eval(v[0], v[1], v[2], &mean, &var, 1e-5);
            let sq = t.rowwise_dot(y, y);
            t.mean_all(sq)
        }, 1e-6);
    }

    #[test]
    fn batchnorm_single_row_outputs_beta() {
        let mut tape = Tape::new();
        let x = tape.leaf(arr2(&[[3.0, -2.0]]));
        let gamma = tape.leaf(arr2(&[[2.0, 2.0]]));
        let beta = tape.leaf(arr2(&[[0.5, -0.5]]));
        let (y, _) = tape.batchnorm_train(x, gamma, beta, 1e-5);
        assert_eq!(tape.value(y), &arr2(&[[0.5, -0.5]]));
    }

    #[test]
    fn l2_normalize_and_rowwise_dot_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 4, 5);
        let b = random_matrix(&mut rng, 4, 5);
        check_grads(&[a, b], |t, v| {
            let an = t.l2_normalize_rows(v[0]);
            let bn = t.l2_normalize_rows(v[1]);
            let cos = t.rowwise_dot(an, bn);
            t.mean_all(cos)
        }, 1e-5);
    }

    #[test]
    fn normalized_rows_have_unit_norm() {
        let mut tape = Tape::new();
        let x = tape.leaf(arr2(&[[3.0, 4.0], [0.0, 0.5]]));
        let y = tape.l2_normalize_rows(x);
        for row in tape.value(y).rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_matches_fd_and_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let logits = random_matrix(&mut rng, 4, 3);
        let targets = Rc::new(vec![0usize, 2, 1, 1]);
        {
            let targets = Rc::clone(&targets);
            check_grads(&[logits.clone()], move |t, v| {
                t.cross_entropy_rows(v[0], Rc::clone(&targets))
            }, 1e-6);
        }
        // Scalar oracle on a known case.
        let mut tape = Tape::new();
        let l = tape.leaf(arr2(&[[2.0, 0.0], [0.0, 2.0]]));
        let loss = tape.cross_entropy_rows(l, Rc::new(vec![0, 1]));
        let expected = (1.0 + (-2.0f64).exp()).ln();
        assert!((tape.value(loss)[(0, 0)] - expected).abs() < 1e-12);
    }

    #[test]
    fn bce_with_logits_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let logits = random_matrix(&mut rng, 4, 6);
        let targets = Rc::new(Array2::from_shape_fn((4, 6), |_| {
            if rng.random_bool(0.5) {
                1.0
            } else {
                0.0
            }
        }));
        check_grads(&[logits], move |t, v| {
            t.bce_with_logits_mean(v[0], Rc::clone(&targets))
        }, 1e-6);
    }

    #[test]
    fn gradient_accumulates_across_reused_nodes() {
        // f(x) = mean(x) + mean(x) has gradient 2/len.
        let mut tape = Tape::new();
        let x = tape.leaf(arr2(&[[1.0, 2.0], [3.0, 4.0]]));
        let m1 = tape.mean_all(x);
        let m2 = tape.mean_all(x);
        let s = tape.add(m1, m2);
        let grads = tape.backward(s);
        let g = grads.get(x).unwrap();
        assert!(g.iter().all(|v| (*v - 0.5).abs() < 1e-12));
    }
}
