//! Exact loss probabilities from first-passage recurrences.
//!
//! The loss probability is the reciprocal of the expected number of arrivals
//! to a stationary system before the first loss. Two recurrences compute it:
//!
//! * the single-server convolution `Q_{j+1} = (Q_j - Σ f_i Q_{j-i+1}) / f_0`
//!   ([`solve_generic`], used by [`loss_gim1n`]);
//! * for any `m`, a level-passage recurrence: if `e_j` is the expected number
//!   of arrivals, starting from one that sees `j` customers, until an arrival
//!   first sees `j + 1`, then
//!   `e_j P(j+1 → j+1) = 1 + Σ_{t<j} e_t P(j+1 → ≤ t)` and `p_{m,n} = 1/e_{m+n-1}`.
//!   Every term is positive, so it keeps full relative precision; it is what
//!   [`loss_gimmn`] uses.

use serde::{Deserialize, Serialize};

use crate::asymptotics::AsymptoticRegime;
use crate::error::{Error, Result};
use crate::kernel::KernelSet;
use crate::model::QueueModel;
use crate::sum::NeumaierSum;

/// Rescale the working values once they pass this magnitude.
const RESCALE_ABOVE: f64 = 1e200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "recurrence")]
    Recurrence,
    #[serde(rename = "gim_m0_closed_form")]
    GimM0ClosedForm,
    #[serde(rename = "mc_oracle")]
    McOracle,
    #[serde(rename = "asymptotic")]
    Asymptotic,
    #[serde(rename = "simulation")]
    Simulation,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Recurrence => "recurrence",
            Method::GimM0ClosedForm => "gim_m0_closed_form",
            Method::McOracle => "mc_oracle",
            Method::Asymptotic => "asymptotic",
            Method::Simulation => "simulation",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<AsymptoticRegime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_halfwidth: Option<f64>,
}

/// A loss probability together with how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossResult {
    pub model: QueueModel,
    pub p: f64,
    pub method: Method,
    /// `ln π = -ln p` for the recurrence methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_log: Option<f64>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

impl LossResult {
    pub(crate) fn exact(model: &QueueModel, pi_log: f64, method: Method) -> Self {
        LossResult {
            model: model.clone(),
            p: (-pi_log).exp(),
            method,
            pi_log: Some(pi_log),
            diagnostics: Diagnostics::default(),
        }
    }
}

/// A sequence stored as `values[j] · exp(log_scale[j])` so it can grow
/// geometrically for thousands of terms.
#[derive(Debug, Clone, PartialEq)]
pub struct PiSequence {
    pub values: Vec<f64>,
    pub log_scale: Vec<f64>,
    pub series_n: usize,
}

impl PiSequence {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `ln π_j`.
    pub fn ln(&self, j: usize) -> f64 {
        self.values[j].ln() + self.log_scale[j]
    }

    /// `π_j`, which may overflow to infinity.
    pub fn value(&self, j: usize) -> f64 {
        self.ln(j).exp()
    }

    /// `π_i / π_j`.
    pub fn ratio(&self, i: usize, j: usize) -> f64 {
        (self.ln(i) - self.ln(j)).exp()
    }

    /// Multiplies every term by `e^{delta}`.
    pub fn shifted(&self, delta: f64) -> Self {
        PiSequence {
            values: self.values.clone(),
            log_scale: self.log_scale.iter().map(|s| s + delta).collect(),
            series_n: self.series_n,
        }
    }
}

/// Working storage in a shared scale `true = w · e^{scale}`.
struct Scaled {
    w: Vec<f64>,
    scale: f64,
    out: PiSequence,
}

impl Scaled {
    fn new(first: f64, capacity: usize, series_n: usize) -> Self {
        let mut out = PiSequence {
            values: Vec::with_capacity(capacity),
            log_scale: Vec::with_capacity(capacity),
            series_n,
        };
        out.values.push(1.0);
        out.log_scale.push(first.ln());
        Scaled {
            w: vec![1.0],
            scale: first.ln(),
            out,
        }
    }

    fn push(&mut self, index: usize, v: f64) -> Result<()> {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Instability { index, value: v });
        }
        self.w.push(v);
        if v > RESCALE_ABOVE {
            let f = 1.0 / v;
            for x in &mut self.w {
                *x *= f;
            }
            self.scale += v.ln();
        }
        self.out.values.push(*self.w.last().unwrap());
        self.out.log_scale.push(self.scale);
        Ok(())
    }
}

/// Solves `Q_j = Σ_{i=0}^{j} f_i Q_{j-i+1}` forward from `Q_0 = q0`,
/// returning `Q_0..=Q_horizon`.
pub fn solve_generic(f: &[f64], q0: f64, horizon: usize) -> Result<PiSequence> {
    let f0 = *f
        .first()
        .ok_or_else(|| Error::invalid("f", "kernel is empty"))?;
    if !(f0 > 0.0) {
        return Err(Error::invalid(
            "f",
            format!("f_0 must be positive, got {f0}"),
        ));
    }
    if let Some(x) = f.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::invalid(
            "f",
            format!("entries must be nonnegative, got {x}"),
        ));
    }
    let total = crate::sum::sum(f.iter().copied());
    if total > 1.0 + 1e-10 {
        return Err(Error::invalid("f", format!("kernel sums to {total} > 1")));
    }
    if !(q0.is_finite() && q0 > 0.0) {
        return Err(Error::invalid("q0", format!("must be positive, got {q0}")));
    }

    let mut s = Scaled::new(q0, horizon + 1, horizon);
    for j in 0..horizon {
        let mut acc = NeumaierSum::new();
        acc.add(s.w[j]);
        for i in 1..=j.min(f.len() - 1) {
            acc.add(-f[i] * s.w[j - i + 1]);
        }
        s.push(j + 1, acc.value() / f0)?;
    }
    Ok(s.out)
}

/// GI/M/1/n: `p = 1/Q_{n+1}` with `Q_0 = 1` and `f` the mixed-Poisson kernel
/// at rate `μ`.
pub fn loss_gim1n(model: &QueueModel) -> Result<LossResult> {
    if model.m() != 1 {
        return Err(Error::invalid(
            "m",
            "the single-server recurrence needs m = 1",
        ));
    }
    let f = model
        .dist()
        .mixed_poisson_kernels(model.mu(), model.n() + 1)?;
    let q = solve_generic(&f, 1.0, model.n() + 1)?;
    let pi_log = q.ln(model.n() + 1) - q.ln(0);
    Ok(LossResult::exact(model, pi_log, Method::Recurrence))
}

/// GI/M/m/0: `p = [Σ_i C(m,i) C_i]^{-1}`.
pub fn loss_gimm0(model: &QueueModel) -> Result<LossResult> {
    if model.n() != 0 {
        return Err(Error::invalid("n", "the closed form needs n = 0"));
    }
    let m = model.m();
    let phi: Vec<f64> = (1..=m)
        .map(|j| model.dist().lst(model.mu() * j as f64))
        .collect::<Result<_>>()?;
    let c = crate::kernel::c_products(&phi)?;
    let mut acc = NeumaierSum::new();
    let mut binom = 1.0;
    for (i, ci) in c.iter().enumerate() {
        acc.add(binom * ci);
        binom = binom * (m - i) as f64 / (i + 1) as f64;
    }
    Ok(LossResult::exact(
        model,
        acc.value().ln(),
        Method::GimM0ClosedForm,
    ))
}

/// `ln e_j` for `j = 0..capacity`: log expected arrivals for the number seen
/// by arrivals to climb from `j` to `j + 1`.
fn level_passage(ks: &KernelSet) -> Result<PiSequence> {
    let big_n = ks.capacity();
    let mut e: Vec<f64> = Vec::with_capacity(big_n);
    let mut scale = 0.0f64;
    let mut out = PiSequence {
        values: Vec::with_capacity(big_n),
        log_scale: Vec::with_capacity(big_n),
        series_n: ks.n,
    };
    for j in 0..big_n {
        let y = j + 1;
        let pivot = ks.transition(y, y);
        if !(pivot > 0.0) {
            return Err(Error::Singular {
                quantity: "level-passage pivot",
                detail: format!("P({y} -> {y}) = {pivot}"),
            });
        }
        let mut acc = NeumaierSum::new();
        acc.add((-scale).exp());
        let mut below = 0.0;
        for (t, et) in e.iter().enumerate() {
            below += ks.transition(y, t);
            acc.add(et * below);
        }
        let v = acc.value() / pivot;
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Instability { index: j, value: v });
        }
        e.push(v);
        if v > RESCALE_ABOVE {
            let f = 1.0 / v;
            for x in &mut e {
                *x *= f;
            }
            scale += v.ln();
        }
        out.values.push(*e.last().unwrap());
        out.log_scale.push(scale);
    }
    Ok(out)
}

/// Loss probabilities for `n = 0..=ks.n` with the kernel set's `m`, from one
/// level-passage solve.
pub fn loss_curve(ks: &KernelSet) -> Result<Vec<f64>> {
    let e = level_passage(ks)?;
    Ok((ks.m - 1..ks.capacity())
        .map(|j| (-e.ln(j)).exp())
        .collect())
}

/// Exact GI/M/m/n loss probability.
pub fn loss_gimmn(model: &QueueModel) -> Result<LossResult> {
    if model.m() == 1 {
        return loss_gim1n(model);
    }
    if model.n() == 0 {
        return loss_gimm0(model);
    }
    loss_by_level_passage(model)
}

/// Exact loss probability through the level-passage recurrence for any
/// `(m, n)`, without the single-server or no-queue shortcuts.
pub fn loss_by_level_passage(model: &QueueModel) -> Result<LossResult> {
    let ks = KernelSet::build(model)?;
    let e = level_passage(&ks)?;
    Ok(LossResult::exact(
        model,
        e.ln(ks.capacity() - 1),
        Method::Recurrence,
    ))
}

/// Distribution of the number of customers seen by an arrival to GI/M/1/n,
/// over states `0..=n+1`.
pub fn stationary_gim1n(model: &QueueModel) -> Result<Vec<f64>> {
    if model.m() != 1 {
        return Err(Error::invalid(
            "m",
            "the single-server recurrence needs m = 1",
        ));
    }
    let top = model.n() + 1;
    let f = model.dist().mixed_poisson_kernels(model.mu(), top)?;
    let q = solve_generic(&f, 1.0, top)?;
    let rel = |k: usize| q.ratio(k, top);
    Ok((0..=top)
        .map(|j| {
            let hi = rel(top - j);
            if j == top {
                hi
            } else {
                hi - rel(top - j - 1)
            }
        })
        .collect())
}
