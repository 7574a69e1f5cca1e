//! Discrete-event simulation of GI/M/m/n.
//!
//! The simulation jumps from arrival to arrival. Service is exponential, so
//! the departures during one interarrival time are drawn as successive
//! exponential gaps at rate `μ · min(q, m)` until the gaps exceed it.
//!
//! Randomness comes from ChaCha8 seeded with `seed`; replication `r` uses
//! stream `r` of that generator, so results do not depend on thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::QueueModel;
use crate::recurrence::{Diagnostics, LossResult, Method};

pub const DEFAULT_ARRIVALS: u64 = 10_000_000;
pub const DEFAULT_WARMUP: u64 = 100_000;
pub const DEFAULT_REPLICATIONS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: QueueModel,
    /// Arrivals per replication, warmup included.
    pub arrivals_total: u64,
    pub warmup_arrivals: u64,
    pub replications: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(model: QueueModel, seed: u64) -> Self {
        SimConfig {
            model,
            arrivals_total: DEFAULT_ARRIVALS,
            warmup_arrivals: DEFAULT_WARMUP,
            replications: DEFAULT_REPLICATIONS,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.arrivals_total <= self.warmup_arrivals {
            return Err(Error::invalid(
                "arrivals",
                format!(
                    "{} arrivals do not exceed the {} warmup arrivals",
                    self.arrivals_total, self.warmup_arrivals
                ),
            ));
        }
        if self.replications == 0 {
            return Err(Error::invalid("reps", "need at least one replication"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub p_hat: f64,
    /// Standard error of `p_hat` from the spread across replications
    /// (zero with a single replication).
    pub stderr: f64,
    pub ci95_halfwidth: f64,
    pub losses: u64,
    pub arrivals_counted: u64,
}

impl SimEstimate {
    pub fn into_loss_result(self, model: &QueueModel) -> LossResult {
        LossResult {
            model: model.clone(),
            p: self.p_hat,
            method: Method::Simulation,
            pi_log: None,
            diagnostics: Diagnostics {
                regime: None,
                ci_halfwidth: Some(self.ci95_halfwidth),
            },
        }
    }
}

fn replicate(cfg: &SimConfig, stream: u64) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let model = &cfg.model;
    let (m, top, mu) = (model.m(), model.capacity(), model.mu());
    let dist = model.dist();
    let mut q = 0usize;
    let mut losses = 0u64;
    for k in 0..cfg.arrivals_total {
        if q == top {
            if k >= cfg.warmup_arrivals {
                losses += 1;
            }
        } else {
            q += 1;
        }
        let mut left = dist.sample(&mut rng);
        while q > 0 {
            let e: f64 = Exp1.sample(&mut rng);
            let gap = e / (mu * q.min(m) as f64);
            if gap > left {
                break;
            }
            left -= gap;
            q -= 1;
        }
    }
    (losses, cfg.arrivals_total - cfg.warmup_arrivals)
}

pub fn simulate(cfg: &SimConfig) -> Result<SimEstimate> {
    cfg.validate()?;
    let runs: Vec<(u64, u64)> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| replicate(cfg, r))
        .collect();
    let losses: u64 = runs.iter().map(|r| r.0).sum();
    let counted: u64 = runs.iter().map(|r| r.1).sum();
    let p_hat = losses as f64 / counted as f64;
    let reps = runs.len() as f64;
    let stderr = if runs.len() > 1 {
        let rates: Vec<f64> = runs.iter().map(|(l, c)| *l as f64 / *c as f64).collect();
        let mean = rates.iter().sum::<f64>() / reps;
        let var = rates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1.0);
        (var / reps).sqrt()
    } else {
        0.0
    };
    log::debug!(
        "simulated {} replications: {losses} losses in {counted} arrivals",
        runs.len()
    );
    Ok(SimEstimate {
        p_hat,
        stderr,
        ci95_halfwidth: 1.96 * stderr,
        losses,
        arrivals_counted: counted,
    })
}

pub const CSV_HEADER: [&str; 10] = [
    "dist",
    "m",
    "n",
    "mu",
    "p_hat",
    "stderr",
    "ci95",
    "seed",
    "arrivals",
    "replications",
];

/// One CSV record describing a simulation run.
pub fn csv_record(cfg: &SimConfig, est: &SimEstimate) -> Vec<String> {
    vec![
        cfg.model.dist().to_string(),
        cfg.model.m().to_string(),
        cfg.model.n().to_string(),
        cfg.model.mu().to_string(),
        est.p_hat.to_string(),
        est.stderr.to_string(),
        est.ci95_halfwidth.to_string(),
        cfg.seed.to_string(),
        cfg.arrivals_total.to_string(),
        cfg.replications.to_string(),
    ]
}
