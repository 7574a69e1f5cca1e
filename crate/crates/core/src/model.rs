use serde::{Deserialize, Serialize};

use crate::dist::InterarrivalDistribution;
use crate::error::{Error, Result};

/// Largest supported number of servers. The alternating binomial sums in the
/// boundary kernels lose too many digits beyond this.
pub const MAX_SERVERS: usize = 16;

/// A GI/M/m/n queue: `m` exponential servers of rate `mu`, `n` waiting places
/// and renewal arrivals. A customer who finds `m + n` present is lost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelWire", into = "ModelWire")]
pub struct QueueModel {
    m: usize,
    n: usize,
    mu: f64,
    dist: InterarrivalDistribution,
}

#[derive(Serialize, Deserialize)]
struct ModelWire {
    m: usize,
    n: usize,
    mu: f64,
    dist: InterarrivalDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
}

impl QueueModel {
    pub fn new(m: usize, n: usize, mu: f64, dist: InterarrivalDistribution) -> Result<Self> {
        if m == 0 || m > MAX_SERVERS {
            return Err(Error::invalid(
                "m",
                format!("number of servers must be in 1..={MAX_SERVERS}, got {m}"),
            ));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::invalid(
                "mu",
                format!("service rate must be positive, got {mu}"),
            ));
        }
        Ok(Self { m, n, mu, dist })
    }

    /// Same queue with the interarrival distribution rescaled so that the
    /// load equals `rho`.
    pub fn with_load(&self, rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::invalid(
                "rho",
                format!("load must be positive, got {rho}"),
            ));
        }
        let mean = 1.0 / (rho * self.m as f64 * self.mu);
        Self::new(self.m, self.n, self.mu, self.dist.with_mean(mean)?)
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn dist(&self) -> &InterarrivalDistribution {
        &self.dist
    }

    pub fn arrival_rate(&self) -> f64 {
        self.dist.arrival_rate()
    }

    /// `ρ = λ / (mμ)`.
    pub fn load(&self) -> f64 {
        self.arrival_rate() / (self.m as f64 * self.mu)
    }

    /// Total number of customers the system holds.
    pub fn capacity(&self) -> usize {
        self.m + self.n
    }
}

impl From<QueueModel> for ModelWire {
    fn from(q: QueueModel) -> Self {
        let rho = Some(q.load());
        ModelWire {
            m: q.m,
            n: q.n,
            mu: q.mu,
            dist: q.dist,
            rho,
        }
    }
}

impl TryFrom<ModelWire> for QueueModel {
    type Error = Error;
    fn try_from(w: ModelWire) -> Result<Self> {
        let q = QueueModel::new(w.m, w.n, w.mu, w.dist)?;
        match w.rho {
            Some(rho) if (rho - q.load()).abs() > 1e-9 * rho.abs().max(1.0) => Err(Error::invalid(
                "rho",
                format!(
                    "{rho} disagrees with the load {} implied by the distribution",
                    q.load()
                ),
            )),
            _ => Ok(q),
        }
    }
}
