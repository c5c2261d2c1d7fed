//! Deterministic parallel pair sums with per-row totals for jackknife
//! standard errors.
//!
//! Index pairs are partitioned into a fixed grid of blocks; each block is
//! summed sequentially and block results are combined in grid order. The
//! result is therefore bit-identical for any number of threads.

use rayon::prelude::*;

use crate::Result;

/// Sums of a symmetric pair function over `i < j`.
#[derive(Debug, Clone)]
pub(crate) struct PairSums {
    pub n: usize,
    /// `Σ_{i<j} h(i, j)`.
    pub total: f64,
    /// `Σ_{j≠i} h(i, j)` for each `i`.
    pub rows: Vec<f64>,
}

fn block_size(n: usize) -> usize {
    64.max(n.div_ceil(64))
}

/// Evaluates `h(i, j)` for every `i < j`.
pub(crate) fn pair_sums<F>(n: usize, h: F) -> Result<PairSums>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let b = block_size(n);
    let nb = n.div_ceil(b);
    let tasks: Vec<(usize, usize)> = (0..nb).flat_map(|bi| (bi..nb).map(move |bj| (bi, bj))).collect();
    let parts: Vec<Result<(f64, Vec<f64>, Vec<f64>)>> = tasks
        .par_iter()
        .map(|&(bi, bj)| {
            let (r0, r1) = (bi * b, ((bi + 1) * b).min(n));
            let (c0, c1) = (bj * b, ((bj + 1) * b).min(n));
            let mut rows = vec![0.0; r1 - r0];
            let mut cols = vec![0.0; c1 - c0];
            let mut total = 0.0;
            for i in r0..r1 {
                let start = if bi == bj { i + 1 } else { c0 };
                let mut acc = 0.0;
                for j in start..c1 {
                    let v = h(i, j)?;
                    acc += v;
                    cols[j - c0] += v;
                }
                rows[i - r0] += acc;
                total += acc;
            }
            Ok((total, rows, cols))
        })
        .collect();
    let mut total = 0.0;
    let mut rows = vec![0.0; n];
    for (&(bi, bj), part) in tasks.iter().zip(parts) {
        let (t, r, c) = part?;
        total += t;
        for (k, v) in r.into_iter().enumerate() {
            rows[bi * b + k] += v;
        }
        for (k, v) in c.into_iter().enumerate() {
            rows[bj * b + k] += v;
        }
    }
    Ok(PairSums { n, total, rows })
}

/// Sums of `h(i, j)` over all `i < nx`, `j < ny`.
#[derive(Debug, Clone)]
pub(crate) struct CrossSums {
    pub total: f64,
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
}

pub(crate) fn cross_sums<F>(nx: usize, ny: usize, h: F) -> Result<CrossSums>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let b = block_size(nx);
    let nb = nx.div_ceil(b);
    let parts: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..nb)
        .into_par_iter()
        .map(|bi| {
            let (r0, r1) = (bi * b, ((bi + 1) * b).min(nx));
            let mut rows = vec![0.0; r1 - r0];
            let mut cols = vec![0.0; ny];
            for i in r0..r1 {
                let mut acc = 0.0;
                for (j, c) in cols.iter_mut().enumerate() {
                    let v = h(i, j)?;
                    acc += v;
                    *c += v;
                }
                rows[i - r0] = acc;
            }
            Ok((rows, cols))
        })
        .collect();
    let mut rows = Vec::with_capacity(nx);
    let mut cols = vec![0.0; ny];
    for part in parts {
        let (r, c) = part?;
        rows.extend(r);
        cols.iter_mut().zip(c).for_each(|(a, v)| *a += v);
    }
    let total = rows.iter().sum();
    Ok(CrossSums { total, rows, cols })
}

/// Mean of `h` over pairs: U-form `Σ_{i≠j}/(n(n-1))`, or V-form
/// `(Σ_{i≠j} + Σ_i h(i,i))/n²` when `diag` is given.
pub(crate) fn pair_mean(s: &PairSums, diag: Option<&[f64]>) -> f64 {
    let n = s.n as f64;
    match diag {
        None => 2.0 * s.total / (n * (n - 1.0)),
        Some(dg) => (2.0 * s.total + dg.iter().sum::<f64>()) / (n * n),
    }
}

/// Jackknife standard error of `pair_mean(s, diag) + coef · mean(unary)`.
pub(crate) fn jackknife_se(s: &PairSums, diag: Option<&[f64]>, unary: Option<(&[f64], f64)>) -> Option<f64> {
    let n = s.n;
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let dsum: f64 = diag.map(|d| d.iter().sum()).unwrap_or(0.0);
    let usum: f64 = unary.map(|(u, _)| u.iter().sum()).unwrap_or(0.0);
    let loo: Vec<f64> = (0..n)
        .map(|k| {
            let t = s.total - s.rows[k];
            let mut v = match diag {
                None => 2.0 * t / ((nf - 1.0) * (nf - 2.0)),
                Some(dg) => (2.0 * t + dsum - dg[k]) / ((nf - 1.0) * (nf - 1.0)),
            };
            if let Some((u, coef)) = unary {
                v += coef * (usum - u[k]) / (nf - 1.0);
            }
            v
        })
        .collect();
    let mean = loo.iter().sum::<f64>() / nf;
    let var = (nf - 1.0) / nf * loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    Some(var.sqrt())
}
