//! `kerdisc flow`: particle flows from a config file.

use kerdisc::flow::{flow_run_with, initial_particles, FlowOptions, FlowResult};
use kerdisc::{FlowState, RngState, Statistic};

use crate::config::FlowConfig;
use crate::error::CliError;

pub fn run_flow(cfg: &FlowConfig) -> Result<FlowResult, CliError> {
    cfg.validate()?;
    let prior = cfg.prior.build(cfg.dim)?;
    let omega = cfg.estimator.build(&prior, cfg.slices, Statistic::V)?;
    let rng = RngState::new(cfg.seed);
    let z0 = initial_particles(cfg.init.into(), cfg.n, &prior, &rng.split(u64::MAX))?;
    let mut state = FlowState::new(z0, cfg.lambda, cfg.step_size)?;
    state.views_per_particle = cfg.views;
    let opts = FlowOptions { log_every: cfg.log_every, gradient: cfg.gradient.into(), view_jitter: cfg.jitter };
    Ok(flow_run_with(state, &omega, &prior, cfg.steps, &rng, &opts)?)
}

/// Header metadata for the trajectory file.
pub fn flow_meta(cfg: &FlowConfig) -> Vec<(&'static str, String)> {
    vec![
        ("init", format!("{:?}", cfg.init)),
        ("estimator", format!("{:?}", cfg.estimator)),
        ("prior", format!("{:?}", cfg.prior)),
        ("dim", cfg.dim.to_string()),
        ("n", cfg.n.to_string()),
        ("steps", cfg.steps.to_string()),
        ("step_size", format!("{:.16e}", cfg.step_size)),
        ("lambda", format!("{:.16e}", cfg.lambda)),
        ("views", cfg.views.to_string()),
        ("seed", cfg.seed.to_string()),
    ]
}
