//! Embedded Markov chain of the number of customers seen by arrivals.
//!
//! Each row is built directly from the death process between arrivals,
//! uniformized at rate `mμ`: with `U` the one-step matrix of the uniformized
//! chain and `r_s` the probability of `s` uniformization events during an
//! interarrival time, row `i` is `e_y Σ_s r_s U^s` with `y = min(i+1, m+n)`.
//! The stationary vector is found by Grassmann–Taksar–Heyman elimination,
//! which never subtracts and so keeps relative accuracy in geometric tails.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::QueueModel;
use crate::recurrence::{LossResult, Method};
use crate::sum::NeumaierSum;

pub const MAX_STATES: usize = 10_000;

/// Mass of the uniformization series allowed beyond the stored terms.
const SERIES_TAIL: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddedChain {
    pub m: usize,
    pub n: usize,
    /// `p[i][t]`: an arrival that sees `i` is followed by one that sees `t`.
    pub p: Vec<Vec<f64>>,
}

impl EmbeddedChain {
    pub fn states(&self) -> usize {
        self.p.len()
    }
}

pub fn build_chain(model: &QueueModel) -> Result<EmbeddedChain> {
    let (m, n) = (model.m(), model.n());
    let top = m + n;
    if top + 1 > MAX_STATES {
        return Err(Error::invalid(
            "n",
            format!(
                "the oracle handles at most {MAX_STATES} states, got {}",
                top + 1
            ),
        ));
    }
    let rate = m as f64 * model.mu();
    let r = model.dist().mixed_poisson_series(rate, 1, SERIES_TAIL)?;

    // Row for y customers after an arrival, t = 0..=y.
    let row_from = |y: usize| -> Vec<f64> {
        let mut v = vec![0.0; y + 1];
        v[y] = 1.0;
        let mut acc: Vec<NeumaierSum> = vec![NeumaierSum::new(); y + 1];
        for &rs in &r {
            for (a, x) in acc.iter_mut().zip(&v) {
                a.add(rs * x);
            }
            let mut next = vec![0.0; y + 1];
            for q in 0..=y {
                let down = q.min(m) as f64 / m as f64;
                next[q] += v[q] * (1.0 - down);
                if q > 0 {
                    next[q - 1] += v[q] * down;
                }
            }
            v = next;
        }
        acc.iter().map(|a| a.value()).collect()
    };

    let mut p = Vec::with_capacity(top + 1);
    for i in 0..=top {
        let y = (i + 1).min(top);
        let mut row = if i == top {
            p.last().cloned().unwrap_or_else(|| row_from(y))
        } else {
            row_from(y)
        };
        row.resize(top + 1, 0.0);
        let sum = crate::sum::sum(row.iter().copied());
        if (sum - 1.0).abs() > 1e-8 {
            return Err(Error::RowSum { row: i, sum });
        }
        p.push(row);
    }
    Ok(EmbeddedChain { m, n, p })
}

/// Stationary vector of an irreducible stochastic matrix by GTH elimination.
pub fn stationary(chain: &EmbeddedChain) -> Result<Vec<f64>> {
    let k = chain.states();
    let mut a = chain.p.clone();
    for s in (1..k).rev() {
        let out: f64 = crate::sum::sum(a[s][..s].iter().copied());
        if !(out > 0.0) {
            return Err(Error::Singular {
                quantity: "embedded chain",
                detail: format!("state {s} cannot reach lower states"),
            });
        }
        for row in a.iter_mut().take(s) {
            row[s] /= out;
        }
        let (upper, lower) = a.split_at_mut(s);
        let pivot_row = &lower[0];
        for row in upper.iter_mut() {
            let f = row[s];
            if f != 0.0 {
                for (x, y) in row[..s].iter_mut().zip(&pivot_row[..s]) {
                    *x += f * y;
                }
            }
        }
    }
    let mut x = vec![0.0; k];
    x[0] = 1.0;
    for s in 1..k {
        let mut acc = NeumaierSum::new();
        for i in 0..s {
            acc.add(x[i] * a[i][s]);
        }
        x[s] = acc.value();
    }
    let total = crate::sum::sum(x.iter().copied());
    for v in &mut x {
        *v /= total;
    }
    Ok(x)
}

/// Loss probability as the stationary mass of the full state.
pub fn loss_oracle(model: &QueueModel) -> Result<LossResult> {
    let chain = build_chain(model)?;
    let pi = stationary(&chain)?;
    let p = pi[chain.states() - 1];
    let mut r = LossResult::exact(model, -p.ln(), Method::McOracle);
    r.p = p;
    Ok(r)
}

#[derive(Serialize)]
struct Dump<'a> {
    model: &'a QueueModel,
    p: &'a [Vec<f64>],
    pi: &'a [f64],
}

/// The chain and its stationary vector as JSON, for debugging.
pub fn dump_json(model: &QueueModel) -> Result<String> {
    let chain = build_chain(model)?;
    let pi = stationary(&chain)?;
    Ok(serde_json::to_string_pretty(&Dump {
        model,
        p: &chain.p,
        pi: &pi,
    })
    .expect("plain data"))
}
