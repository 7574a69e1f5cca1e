//! Transition kernels of the queue seen at arrival epochs.
//!
//! Between two arrivals the system is a pure-death process: `min(q, m)`
//! servers each finish at rate `μ`. With `y` customers present just after an
//! arrival there are three kinds of kernel:
//!
//! * `r_{0,m,l}`: `y > m`, all servers stay busy and `l` customers leave;
//! * `r_{k,m-k,j}`: `y = m + j`, the queue drains and then `k` of the `m`
//!   servers also finish (`k = m` empties the system);
//! * binomial death rows: `y ≤ m`, each busy server independently finishes.
//!
//! Crossing kernels are computed by uniformizing the death process at rate
//! `mμ`, which turns them into sums of positive terms. The alternating
//! binomial expansion is kept in [`boundary_kernel_by_expansion`] as a check.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::gamma_lr;

use crate::dist::{Family, InterarrivalDistribution};
use crate::error::{Error, Result};
use crate::model::{QueueModel, MAX_SERVERS};
use crate::sum::NeumaierSum;

/// Mass of the mixed-Poisson kernel allowed beyond the stored terms.
const SERIES_TAIL: f64 = 1e-20;

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn check_mu(mu: f64) -> Result<()> {
    if mu.is_finite() && mu > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            "mu",
            format!("service rate must be positive, got {mu}"),
        ))
    }
}

fn check_m(m: usize) -> Result<()> {
    if (1..=MAX_SERVERS).contains(&m) {
        Ok(())
    } else {
        Err(Error::invalid(
            "m",
            format!("must be in 1..={MAX_SERVERS}, got {m}"),
        ))
    }
}

/// `φ_j = α(μj)`: probability that a given busy server is still busy at the
/// next arrival, raised to the `j`-th power on average.
pub fn phi(d: &InterarrivalDistribution, mu: f64, j: usize) -> Result<f64> {
    check_mu(mu)?;
    if j == 0 {
        return Err(Error::invalid("j", "phi is indexed from 1"));
    }
    d.lst(mu * j as f64)
}

/// `C_0 = 1`, `C_j = Π_{i≤j} (1 - φ_i) / φ_i` for `φ = [φ_1, …, φ_m]`.
pub fn c_products(phi: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = phi.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::invalid(
            "phi",
            format!("entries must lie in (0, 1), got {p}"),
        ));
    }
    let factors: Vec<f64> = phi.iter().map(|p| (1.0 - p) / p).collect();
    let mut out = Vec::with_capacity(phi.len() + 1);
    out.push(1.0);
    if factors.iter().any(|f| *f > 1e100 || *f < 1e-100) {
        let mut ln = 0.0;
        for f in factors {
            ln += f.ln();
            out.push(ln.exp());
        }
    } else {
        let mut c = 1.0;
        for f in factors {
            c *= f;
            out.push(c);
        }
    }
    Ok(out)
}

/// Probability that exactly `k` of `m` busy servers finish during one
/// interarrival time: `C(m,k) Σ_i C(k,i) (-1)^i φ_{m-k+i}` with `φ_0 = 1`.
pub fn boundary_kernel_n0(
    d: &InterarrivalDistribution,
    mu: f64,
    m: usize,
    k: usize,
) -> Result<f64> {
    check_mu(mu)?;
    if m > MAX_SERVERS {
        check_m(m)?;
    }
    if k > m {
        return Err(Error::invalid(
            "k",
            format!("{k} departures from {m} busy servers"),
        ));
    }
    let mut acc = NeumaierSum::new();
    for i in 0..=k {
        let idx = m - k + i;
        let phi = if idx == 0 {
            1.0
        } else {
            d.lst_unchecked(mu * idx as f64)
        };
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        acc.add(sign * binomial(k, i) * phi);
    }
    Ok((binomial(m, k) * acc.value()).clamp(0.0, 1.0))
}

/// Binomial rows for `y ≤ m` busy servers: `rows[y][k]` is the probability
/// that `k` of them finish before the next arrival.
fn death_rows(d: &InterarrivalDistribution, mu: f64, m: usize) -> Result<Vec<Vec<f64>>> {
    (0..=m)
        .map(|y| (0..=y).map(|k| boundary_kernel_n0(d, mu, y, k)).collect())
        .collect()
}

/// `w[s][t]`: probability that a death chain uniformized at rate `mμ`, started
/// with `m` busy servers, has `t` busy after `s` uniformization steps.
fn lazy_death_walk(m: usize, steps: usize) -> Vec<Vec<f64>> {
    let mf = m as f64;
    let mut out = Vec::with_capacity(steps);
    let mut v = vec![0.0; m + 1];
    v[m] = 1.0;
    for _ in 0..steps {
        let mut next = vec![0.0; m + 1];
        for t in 0..=m {
            let down = t as f64 / mf;
            next[t] += v[t] * (1.0 - down);
            if t > 0 {
                next[t - 1] += v[t] * down;
            }
        }
        out.push(std::mem::replace(&mut v, next));
    }
    out
}

/// Crossing kernels from the series `Σ_{s≥k} w_k(s) r_{0,m,j+s}`.
/// Returns `out[k][j]` for `k = 0..=m`, `j = 0..=n` (row 0 is the interior).
fn crossing_series(r: &[f64], m: usize, n: usize) -> Vec<Vec<f64>> {
    let len = r.len();
    let walk = lazy_death_walk(m, len);
    let mut out = vec![vec![0.0; n + 1]; m + 1];
    for (j, &rj) in r.iter().enumerate().take(n + 1) {
        out[0][j] = rj;
    }
    for k in 1..=m {
        let t = m - k;
        for j in 0..=n {
            let mut acc = NeumaierSum::new();
            for s in k..len.saturating_sub(j) {
                acc.add(walk[s][t] * r[j + s]);
            }
            out[k][j] = acc.value();
        }
    }
    out
}

/// `r_{k,m-k,j}`: probability that, with `m + j` customers present after an
/// arrival, exactly `m - k` servers are busy at the next arrival. `k = m`
/// is allowed and gives the probability of emptying the system.
pub fn boundary_kernel(
    d: &InterarrivalDistribution,
    mu: f64,
    m: usize,
    k: usize,
    j: usize,
) -> Result<f64> {
    check_mu(mu)?;
    check_m(m)?;
    if k > m {
        return Err(Error::invalid(
            "k",
            format!("must be at most m = {m}, got {k}"),
        ));
    }
    if j == 0 {
        return boundary_kernel_n0(d, mu, m, k);
    }
    let r = d.mixed_poisson_series(m as f64 * mu, j + 1, SERIES_TAIL)?;
    Ok(crossing_series(&r, m, j)[k][j])
}

/// `P(Poisson(y) ≥ j)`.
fn poisson_upper(j: usize, y: f64) -> f64 {
    if j == 0 {
        1.0
    } else if y <= 0.0 {
        0.0
    } else {
        gamma_lr(j as f64, y)
    }
}

/// `E[e^{-cX} P(Poisson(bX) ≥ j)]` in closed form.
fn discounted_poisson_tail(d: &InterarrivalDistribution, c: f64, b: f64, j: usize) -> f64 {
    let gamma_like = |shape: f64, beta: f64| {
        let lead = (-shape * (c / beta).ln_1p()).exp();
        if j == 0 {
            return lead;
        }
        let q = b / (beta + b + c);
        lead * beta_reg(j as f64, shape, q)
    };
    let exp_like = |lambda: f64| lambda / (lambda + c) * (b / (b + lambda + c)).powi(j as i32);
    match d.family() {
        Family::Deterministic { value } => (-c * value).exp() * poisson_upper(j, b * value),
        Family::Exponential { rate } => exp_like(*rate),
        Family::Hyperexponential { weights, rates } => weights
            .iter()
            .zip(rates)
            .map(|(w, r)| w * exp_like(*r))
            .sum(),
        Family::Erlang { stages, rate } => gamma_like(f64::from(*stages), *rate),
        Family::Gamma { shape, rate } => gamma_like(*shape, *rate),
    }
}

/// `r_{k,m-k,j}` by expanding `(e^{-μu} - e^{-μx})^k` binomially. The terms
/// alternate and grow like `(m/(k-i))^j`, so this loses digits quickly as `j`
/// grows; it exists to cross-check [`boundary_kernel`] for small `j`.
pub fn boundary_kernel_by_expansion(
    d: &InterarrivalDistribution,
    mu: f64,
    m: usize,
    k: usize,
    j: usize,
) -> Result<f64> {
    check_mu(mu)?;
    check_m(m)?;
    if k > m {
        return Err(Error::invalid(
            "k",
            format!("must be at most m = {m}, got {k}"),
        ));
    }
    if j == 0 {
        return boundary_kernel_n0(d, mu, m, k);
    }
    let mf = m as f64;
    let mut acc = NeumaierSum::new();
    for i in 0..k {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let c = (m - k + i) as f64 * mu;
        let b = (k - i) as f64 * mu;
        let growth = (mf / (k - i) as f64).powi(j as i32);
        acc.add(sign * binomial(k, i) * growth * discounted_poisson_tail(d, c, b, j));
    }
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    acc.add(sign * d.mixed_poisson_kernel(mf * mu, j)?);
    Ok(binomial(m, k) * acc.value())
}

/// Every kernel the exact recurrence needs for a given `(m, n, μ, A)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSet {
    pub m: usize,
    pub n: usize,
    pub mu: f64,
    /// `r_{0,m,j}` for `j = 0..=n`.
    pub interior: Vec<f64>,
    /// `boundary[k-1][j] = r_{k,m-k,j}` for `k = 1..m-1`, `j = 0..=n`.
    pub boundary: Vec<Vec<f64>>,
    /// `r_{m,0,j}` for `j = 0..=n`: the system empties.
    pub emptying: Vec<f64>,
    /// `death[y][k]`: `k` of `y ≤ m` busy servers finish.
    pub death: Vec<Vec<f64>>,
    /// `φ_j` for `j = 1..=m`, stored at index `j - 1`.
    pub phi: Vec<f64>,
    /// `C_j` for `j = 0..=m`.
    pub cprod: Vec<f64>,
}

impl KernelSet {
    pub fn build(model: &QueueModel) -> Result<Self> {
        let (m, n, mu) = (model.m(), model.n(), model.mu());
        let d = model.dist();
        let phi: Vec<f64> = (1..=m).map(|j| d.lst_unchecked(mu * j as f64)).collect();
        let cprod = c_products(&phi)?;
        let r = d.mixed_poisson_series(m as f64 * mu, n + 1, SERIES_TAIL)?;
        let mut cross = crossing_series(&r, m, n);
        let death = death_rows(d, mu, m)?;
        for k in 1..=m {
            cross[k][0] = death[m][k];
        }
        cross[0][0] = phi[m - 1];
        let emptying = cross.pop().expect("m >= 1");
        let interior = cross.remove(0);
        let set = KernelSet {
            m,
            n,
            mu,
            interior,
            boundary: cross,
            emptying,
            death,
            phi,
            cprod,
        };
        #[cfg(debug_assertions)]
        set.validate()?;
        Ok(set)
    }

    /// Checks entry ranges and that every row is a probability distribution.
    pub fn validate(&self) -> Result<()> {
        let all = self
            .interior
            .iter()
            .chain(self.emptying.iter())
            .chain(self.boundary.iter().flatten())
            .chain(self.death.iter().flatten());
        if let Some(v) = all
            .into_iter()
            .find(|v| !(**v >= 0.0 && **v <= 1.0 + 1e-12))
        {
            return Err(Error::Singular {
                quantity: "kernel entry",
                detail: format!("{v} outside [0, 1]"),
            });
        }
        for y in 1..=self.capacity() {
            let sum: f64 = crate::sum::sum(self.row(y));
            if (sum - 1.0).abs() > 1e-10 {
                return Err(Error::RowSum { row: y, sum });
            }
        }
        Ok(())
    }

    pub fn capacity(&self) -> usize {
        self.m + self.n
    }

    pub fn phi(&self, j: usize) -> f64 {
        if j == 0 {
            1.0
        } else {
            self.phi[j - 1]
        }
    }

    /// `r_{k,m-k,j}` for `k = 0..=m` (`k = 0` is the interior kernel).
    pub fn crossing(&self, k: usize, j: usize) -> f64 {
        match k {
            0 => self.interior[j],
            k if k == self.m => self.emptying[j],
            k => self.boundary[k - 1][j],
        }
    }

    /// Probability that an arrival leaving `y` customers is followed by one
    /// that sees `t`.
    pub fn transition(&self, y: usize, t: usize) -> f64 {
        let m = self.m;
        if t > y {
            0.0
        } else if y <= m {
            self.death[y][y - t]
        } else if t >= m {
            self.interior[y - t]
        } else {
            self.crossing(m - t, y - m)
        }
    }

    /// Row `y` of the transition kernel, `t = 0..=y`.
    pub fn row(&self, y: usize) -> impl Iterator<Item = f64> + '_ {
        (0..=y).map(move |t| self.transition(y, t))
    }

    /// Serializes the set to pretty JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("kernel set is plain data")
    }
}
