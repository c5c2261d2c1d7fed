//! `kerdisc sweep`: dimension × slice-count × seed grids.

use std::io::Write;
use std::time::Instant;

use kerdisc::{RngState, SampleBatch};
use rayon::prelude::*;

use crate::config::SweepConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub dim: usize,
    pub slices: usize,
    pub seed: u64,
    pub rep: usize,
    pub value: f64,
    pub wall_ms: f64,
}

/// Data stream for `(dim, rep)`, independent of the grid seed.
pub fn sweep_data(cfg: &SweepConfig, dim: usize, rep: usize) -> Result<SampleBatch, CliError> {
    let prior = cfg.prior.build(dim)?;
    Ok(prior.sample(cfg.n, &RngState::with_stream(cfg.data_seed, 1).split(dim as u64).split(rep as u64))?)
}

/// Rows in grid order `(dim, slices, seed, rep)`, computed in parallel.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>, CliError> {
    cfg.validate()?;
    // Build every estimator up front so configuration errors surface before any work.
    let mut data = Vec::new();
    for &dim in &cfg.dims {
        let prior = cfg.prior.build(dim)?;
        for &m in &cfg.slice_counts {
            cfg.estimator.build(&prior, m, cfg.statistic.into())?;
        }
        data.push((0..cfg.repetitions).map(|r| sweep_data(cfg, dim, r)).collect::<Result<Vec<_>, _>>()?);
    }
    let mut grid = Vec::new();
    for (di, &dim) in cfg.dims.iter().enumerate() {
        for &slices in &cfg.slice_counts {
            for &seed in &cfg.seeds {
                for rep in 0..cfg.repetitions {
                    grid.push((di, dim, slices, seed, rep));
                }
            }
        }
    }
    grid.into_par_iter()
        .map(|(di, dim, slices, seed, rep)| {
            let prior = cfg.prior.build(dim)?;
            let omega = cfg.estimator.build(&prior, slices, cfg.statistic.into())?;
            let t0 = Instant::now();
            let est = omega.evaluate(&data[di][rep], &prior, &RngState::new(seed))?;
            Ok(SweepRow { dim, slices, seed, rep, value: est.value, wall_ms: t0.elapsed().as_secs_f64() * 1e3 })
        })
        .collect()
}

pub fn write_sweep<W: Write>(mut w: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "dim,slices,seed,rep,value,wall_ms")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{:.16e},{:.16e}", r.dim, r.slices, r.seed, r.rep, r.value, r.wall_ms)?;
    }
    Ok(())
}

/// Sample standard deviation of `value` across seeds, pooled over
/// repetitions, at one `(dim, slices)` cell.
pub fn across_seed_sd(rows: &[SweepRow], dim: usize, slices: usize) -> Option<f64> {
    let mut by_rep: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for r in rows.iter().filter(|r| r.dim == dim && r.slices == slices) {
        by_rep.entry(r.rep).or_default().push(r.value);
    }
    let (mut ss, mut dof) = (0.0, 0usize);
    for v in by_rep.values() {
        if v.len() < 2 {
            continue;
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        ss += v.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        dof += v.len() - 1;
    }
    (dof > 0).then(|| (ss / dof as f64).sqrt())
}

/// Parses the CSV written by [`write_sweep`].
pub fn parse_sweep(text: &str) -> Result<Vec<SweepRow>, CliError> {
    let mut lines = text.lines();
    if lines.next() != Some("dim,slices,seed,rep,value,wall_ms") {
        return Err(CliError::Io("missing sweep header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || CliError::Io(format!("bad sweep row `{l}`"));
            if f.len() != 6 {
                return Err(bad());
            }
            Ok(SweepRow {
                dim: f[0].parse().map_err(|_| bad())?,
                slices: f[1].parse().map_err(|_| bad())?,
                seed: f[2].parse().map_err(|_| bad())?,
                rep: f[3].parse().map_err(|_| bad())?,
                value: f[4].parse().map_err(|_| bad())?,
                wall_ms: f[5].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}
