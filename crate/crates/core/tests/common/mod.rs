#![allow(dead_code)]

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use monce::features::{random_unit_rows, FeatureSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn pair(seed: u64, n: usize, d: usize) -> (FeatureSet, FeatureSet) {
    let mut r = rng(seed);
    let x = random_unit_rows(&mut r, n, d);
    let y = random_unit_rows(&mut r, n, d);
    (x, y)
}

pub fn dot(a: &Array2<f64>, i: usize, b: &Array2<f64>, j: usize) -> f64 {
    (0..a.ncols()).map(|k| a[[i, k]] * b[[j, k]]).sum()
}

/// Per-anchor losses evaluated straight from the definition, no log-sum-exp.
/// `w = None` is the unweighted denominator.
pub fn scalar_anchor_losses(
    x: &Array2<f64>,
    y: &Array2<f64>,
    w: Option<&Array2<f64>>,
    tau: f64,
    q: f64,
) -> Vec<f64> {
    let n = x.nrows();
    (0..n)
        .map(|i| {
            let pos = (dot(x, i, y, i) / tau).exp();
            let mut neg = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                let c = match w {
                    None => 1.0,
                    Some(w) => q * (n - 1) as f64 * w[[i, j]],
                };
                neg += c * (dot(x, i, y, j) / tau).exp();
            }
            -(pos / (pos + neg)).ln()
        })
        .collect()
}

pub fn scalar_loss(
    x: &Array2<f64>,
    y: &Array2<f64>,
    w: Option<&Array2<f64>>,
    tau: f64,
    q: f64,
) -> f64 {
    scalar_anchor_losses(x, y, w, tau, q).iter().sum()
}

/// Row softmax over the off-diagonal entries of `logits`, one loop per row.
pub fn scalar_row_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let n = logits.nrows();
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        let denom: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| logits[[i, j]].exp())
            .sum();
        for j in (0..n).filter(|&j| j != i) {
            w[[i, j]] = logits[[i, j]].exp() / denom;
        }
    }
    w
}

/// Plain log-domain Sinkhorn on the zero-diagonal problem, run until the
/// marginals are within `tol` or `max_sweeps` is spent.
pub fn scalar_sinkhorn(c: &Array2<f64>, eps: f64, tol: f64, max_sweeps: usize) -> Array2<f64> {
    let n = c.nrows();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let lse = |vals: Vec<f64>| {
        let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
    };
    let plan = |f: &[f64], g: &[f64]| {
        Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                0.0
            } else {
                ((f[i] + g[j] - c[[i, j]]) / eps).exp()
            }
        })
    };
    for sweep in 0..max_sweeps {
        for i in 0..n {
            f[i] = -eps
                * lse((0..n)
                    .filter(|&j| j != i)
                    .map(|j| (g[j] - c[[i, j]]) / eps)
                    .collect());
        }
        for j in 0..n {
            g[j] = -eps
                * lse((0..n)
                    .filter(|&i| i != j)
                    .map(|i| (f[i] - c[[i, j]]) / eps)
                    .collect());
        }
        if sweep % 100 != 99 {
            continue;
        }
        let t = plan(&f, &g);
        let worst = (0..n)
            .map(|i| {
                (t.row(i).sum() - 1.0)
                    .abs()
                    .max((t.column(i).sum() - 1.0).abs())
            })
            .fold(0.0, f64::max);
        if worst <= tol {
            break;
        }
    }
    plan(&f, &g)
}

/// Central differences of `f` with respect to every entry of `a`.
pub fn central_diff(a: &Array2<f64>, h: f64, f: impl Fn(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut out = Array2::zeros(a.dim());
    for ((i, k), o) in out.indexed_iter_mut() {
        let mut p = a.clone();
        let mut m = a.clone();
        p[[i, k]] += h;
        m[[i, k]] -= h;
        *o = (f(&p) - f(&m)) / (2.0 * h);
    }
    out
}

/// Largest entrywise gap relative to the larger max-norm, floored at 1e-6.
pub fn rel_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let scale = a
        .iter()
        .chain(b.iter())
        .fold(1e-6f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()))
        / scale
}
