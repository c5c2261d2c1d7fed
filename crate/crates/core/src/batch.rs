//! Sample batches, slicing directions and projections.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{invalid, Result, RngState};

/// Tolerance for the unit-norm check on sphere-constrained batches.
pub const SPHERE_TOL: f64 = 1e-9;

/// `n` points in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl SampleBatch {
    pub fn new(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return invalid(format!("batch needs n >= 1 and d >= 1, got n={n}, d={d}"));
        }
        if data.len() != n * d {
            return invalid(format!("batch data has {} entries, expected {}x{}", data.len(), n, d));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite entry at row {}, column {}", pos / d, pos % d));
        }
        Ok(Self { data, n, d })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return invalid("batch needs at least one row");
        };
        let d = first.len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return invalid(format!("row {i} has {} columns, expected {d}", row.len()));
            }
            data.extend_from_slice(row);
        }
        Self::new(data, rows.len(), d)
    }

    /// `n` copies of the same point.
    pub fn repeated(point: &[f64], n: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(n * point.len());
        for _ in 0..n {
            data.extend_from_slice(point);
        }
        Self::new(data, n, point.len())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    /// First (only) column of a one-dimensional batch.
    pub fn as_1d(&self) -> Result<&[f64]> {
        if self.d != 1 {
            return invalid(format!("expected a one-dimensional batch, got d={}", self.d));
        }
        Ok(&self.data)
    }

    /// Whether every row has unit Euclidean norm within `tol`.
    pub fn is_on_sphere(&self, tol: f64) -> bool {
        self.rows().all(|r| (norm(r) - 1.0).abs() <= tol)
    }

    pub(crate) fn require_sphere(&self) -> Result<()> {
        for (i, r) in self.rows().enumerate() {
            let nr = norm(r);
            if (nr - 1.0).abs() > SPHERE_TOL {
                return invalid(format!("row {i} has norm {nr}, expected a unit vector"));
            }
        }
        Ok(())
    }

    /// Per-coordinate sample means.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|a| *a /= self.n as f64);
        m
    }

    /// Per-coordinate variances (divisor `n - 1`, or `n` when `n == 1`).
    pub fn variance(&self) -> Vec<f64> {
        let m = self.mean();
        let mut v = vec![0.0; self.d];
        for r in self.rows() {
            for ((a, b), c) in v.iter_mut().zip(r).zip(&m) {
                *a += (b - c) * (b - c);
            }
        }
        let div = if self.n > 1 { (self.n - 1) as f64 } else { 1.0 };
        v.iter_mut().for_each(|a| *a /= div);
        v
    }
}

/// `m` unit directions in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    dirs: Vec<f64>,
    m: usize,
    d: usize,
}

impl DirectionSet {
    /// Wraps explicit directions; rows must have unit norm within 1e-12.
    pub fn new(dirs: Vec<f64>, m: usize, d: usize) -> Result<Self> {
        if m == 0 || d == 0 || dirs.len() != m * d {
            return invalid(format!("direction set shape mismatch: {} entries for {m}x{d}", dirs.len()));
        }
        for (j, r) in dirs.chunks_exact(d).enumerate() {
            let nr = norm(r);
            if (nr - 1.0).abs() > 1e-12 {
                return invalid(format!("direction {j} has norm {nr}"));
            }
        }
        Ok(Self { dirs, m, d })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.dirs[j * self.d..(j + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.dirs.chunks_exact(self.d)
    }
}

/// One uniform draw on `S^{d-1}` into `out`, by normalizing a Gaussian vector.
pub(crate) fn fill_unit_vector<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        for v in out.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let nr = norm(out);
        // A zero (or denormal) Gaussian vector has probability zero but is
        // representable; redraw rather than divide by it.
        if nr > 1e-150 {
            out.iter_mut().for_each(|v| *v /= nr);
            return;
        }
    }
}

/// Draws `m` independent uniform directions on `S^{d-1}`.
///
/// Direction `j` comes from the child stream `rng.split(j)`, so the set is the
/// same however it is computed.
pub fn sample_directions(m: usize, d: usize, rng: &RngState) -> Result<DirectionSet> {
    if m == 0 || d == 0 {
        return invalid(format!("need m >= 1 and d >= 1, got m={m}, d={d}"));
    }
    let mut dirs = vec![0.0; m * d];
    dirs.par_chunks_mut(d).enumerate().with_min_len(64).for_each(|(j, row)| {
        let mut r = rng.split(j as u64).rng();
        fill_unit_vector(&mut r, row);
    });
    Ok(DirectionSet { dirs, m, d })
}

/// Projections of `n` samples onto `m` directions, stored column-major so
/// that each slice is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Projections {
    data: Vec<f64>,
    n: usize,
    m: usize,
}

impl Projections {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Entry `(i, j)`: sample `i` projected on direction `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n + i]
    }

    /// All samples projected on direction `j`.
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    /// Row-major `n x m` copy.
    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.m];
        for j in 0..self.m {
            for i in 0..self.n {
                out[i * self.m + j] = self.get(i, j);
            }
        }
        out
    }
}

/// Inner products of every sample with every direction.
pub fn project(batch: &SampleBatch, dirs: &DirectionSet) -> Result<Projections> {
    if batch.d() != dirs.d() {
        return invalid(format!("batch has d={}, directions have d={}", batch.d(), dirs.d()));
    }
    let n = batch.n();
    let mut data = vec![0.0; n * dirs.m()];
    data.par_chunks_mut(n).zip(dirs.dirs.par_chunks(dirs.d)).for_each(|(col, theta)| {
        for (c, x) in col.iter_mut().zip(batch.rows()) {
            *c = dot(x, theta);
        }
    });
    Ok(Projections { data, n, m: dirs.m() })
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
