//! Interarrival distributions.
//!
//! Every family here has a closed-form Laplace–Stieltjes transform, closed-form
//! moments and a closed-form mixed-Poisson kernel, so no quadrature is needed
//! on the production paths. [`InterarrivalDistribution::expect`] integrates an
//! arbitrary function against `dA` and is used to cross-check the closed forms.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma as GammaSampler};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::quad;

/// Tail mass of `A` left outside the quadrature range.
const QUAD_TAIL: f64 = 1e-17;

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Deterministic { value: f64 },
    Exponential { rate: f64 },
    Erlang { stages: u32, rate: f64 },
    Hyperexponential { weights: Vec<f64>, rates: Vec<f64> },
    Gamma { shape: f64, rate: f64 },
}

/// The interarrival-time distribution `A(x)` of a renewal arrival stream.
///
/// The arrival rate is always derived as the reciprocal of the mean, so the
/// load of a queue built on top of it can never disagree with the
/// distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct InterarrivalDistribution {
    family: Family,
    mean: f64,
}

/// Dimensionless second and third moments of the interarrival time measured
/// in units of `1 / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub rho2: f64,
    pub rho3: f64,
    pub scale: f64,
}

impl MomentSet {
    pub fn is_finite(&self) -> bool {
        self.rho2.is_finite() && self.rho3.is_finite()
    }
}

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::invalid(
            name,
            format!("must be positive and finite, got {value}"),
        ))
    }
}

fn check_s(function: &'static str, s: f64) -> Result<()> {
    if s >= 0.0 && !s.is_nan() {
        Ok(())
    } else {
        Err(Error::Domain {
            function,
            arg: "s",
            value: s,
        })
    }
}

impl InterarrivalDistribution {
    pub fn deterministic(value: f64) -> Result<Self> {
        let value = positive("deterministic interarrival time", value)?;
        Ok(Self {
            family: Family::Deterministic { value },
            mean: value,
        })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        let rate = positive("exponential rate", rate)?;
        Ok(Self {
            family: Family::Exponential { rate },
            mean: 1.0 / rate,
        })
    }

    pub fn erlang(stages: u32, rate: f64) -> Result<Self> {
        if stages == 0 {
            return Err(Error::invalid("erlang stages", "must be at least 1"));
        }
        let rate = positive("erlang rate", rate)?;
        Ok(Self {
            family: Family::Erlang { stages, rate },
            mean: f64::from(stages) / rate,
        })
    }

    pub fn hyperexponential(weights: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != rates.len() {
            return Err(Error::invalid(
                "hyperexponential phases",
                format!("{} weights for {} rates", weights.len(), rates.len()),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(
                "hyperexponential weights",
                "must be nonnegative",
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "hyperexponential weights",
                format!("sum to {total}, expected 1"),
            ));
        }
        for &r in &rates {
            positive("hyperexponential rate", r)?;
        }
        let mean = weights.iter().zip(&rates).map(|(w, r)| w / r).sum();
        Ok(Self {
            family: Family::Hyperexponential { weights, rates },
            mean,
        })
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        let shape = positive("gamma shape", shape)?;
        let rate = positive("gamma rate", rate)?;
        Ok(Self {
            family: Family::Gamma { shape, rate },
            mean: shape / rate,
        })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// The arrival rate `λ = 1 / E[X]`.
    pub fn arrival_rate(&self) -> f64 {
        1.0 / self.mean
    }

    /// Stretches every interarrival time by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let f = positive("time scale factor", factor)?;
        match &self.family {
            Family::Deterministic { value } => Self::deterministic(value * f),
            Family::Exponential { rate } => Self::exponential(rate / f),
            Family::Erlang { stages, rate } => Self::erlang(*stages, rate / f),
            Family::Hyperexponential { weights, rates } => {
                Self::hyperexponential(weights.clone(), rates.iter().map(|r| r / f).collect())
            }
            Family::Gamma { shape, rate } => Self::gamma(*shape, rate / f),
        }
    }

    /// Same shape, rescaled to the given mean.
    pub fn with_mean(&self, mean: f64) -> Result<Self> {
        let mean = positive("mean interarrival time", mean)?;
        self.scaled(mean / self.mean)
    }

    /// `(shape, rate)` for the gamma-like families.
    fn gamma_params(&self) -> Option<(f64, f64)> {
        match self.family {
            Family::Erlang { stages, rate } => Some((f64::from(stages), rate)),
            Family::Gamma { shape, rate } => Some((shape, rate)),
            _ => None,
        }
    }

    /// The Laplace–Stieltjes transform `α(s) = ∫ e^{-sx} dA(x)`.
    pub fn lst(&self, s: f64) -> Result<f64> {
        check_s("lst", s)?;
        Ok(self.lst_unchecked(s))
    }

    pub(crate) fn lst_unchecked(&self, s: f64) -> f64 {
        if let Some((shape, rate)) = self.gamma_params() {
            return (-shape * (s / rate).ln_1p()).exp();
        }
        match &self.family {
            Family::Deterministic { value } => (-s * value).exp(),
            Family::Exponential { rate } => rate / (rate + s),
            Family::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * r / (r + s))
                .sum(),
            Family::Erlang { .. } | Family::Gamma { .. } => unreachable!(),
        }
    }

    /// `1 - α(s)`, without the cancellation of forming it by subtraction.
    pub fn lst_complement(&self, s: f64) -> Result<f64> {
        check_s("lst_complement", s)?;
        Ok(self.lst_complement_unchecked(s))
    }

    pub(crate) fn lst_complement_unchecked(&self, s: f64) -> f64 {
        if let Some((shape, rate)) = self.gamma_params() {
            return -(-shape * (s / rate).ln_1p()).exp_m1();
        }
        match &self.family {
            Family::Deterministic { value } => -(-s * value).exp_m1(),
            Family::Exponential { rate } => s / (rate + s),
            Family::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * s / (r + s))
                .sum(),
            Family::Erlang { .. } | Family::Gamma { .. } => unreachable!(),
        }
    }

    /// `α'(s) = -∫ x e^{-sx} dA(x)`.
    pub fn lst_derivative(&self, s: f64) -> Result<f64> {
        check_s("lst_derivative", s)?;
        if let Some((shape, rate)) = self.gamma_params() {
            return Ok(-(shape / rate) * (-(shape + 1.0) * (s / rate).ln_1p()).exp());
        }
        Ok(match &self.family {
            Family::Deterministic { value } => -value * (-s * value).exp(),
            Family::Exponential { rate } => -rate / ((rate + s) * (rate + s)),
            Family::Hyperexponential { weights, rates } => -weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * r / ((r + s) * (r + s)))
                .sum::<f64>(),
            Family::Erlang { .. } | Family::Gamma { .. } => unreachable!(),
        })
    }

    /// `E[X^k]`.
    pub fn raw_moment(&self, k: u32) -> f64 {
        if let Some((shape, rate)) = self.gamma_params() {
            return (0..k).map(|i| (shape + f64::from(i)) / rate).product();
        }
        let factorial: f64 = (1..=k).map(f64::from).product();
        match &self.family {
            Family::Deterministic { value } => value.powi(k as i32),
            Family::Exponential { rate } => factorial / rate.powi(k as i32),
            Family::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * factorial / r.powi(k as i32))
                .sum(),
            Family::Erlang { .. } | Family::Gamma { .. } => unreachable!(),
        }
    }

    /// Second and third moments of `scale · X`.
    pub fn moments(&self, scale: f64) -> Result<MomentSet> {
        let scale = positive("moment scale", scale)?;
        Ok(MomentSet {
            rho2: scale * scale * self.raw_moment(2),
            rho3: scale * scale * scale * self.raw_moment(3),
            scale,
        })
    }

    /// Probability that a Poisson stream of the given rate produces exactly
    /// `j` events during one interarrival time:
    /// `∫ e^{-rate·x} (rate·x)^j / j! dA(x)`.
    pub fn mixed_poisson_kernel(&self, rate: f64, j: usize) -> Result<f64> {
        Ok(*self
            .mixed_poisson_kernels(rate, j + 1)?
            .last()
            .expect("at least one entry"))
    }

    /// The first `len` mixed-Poisson kernel values at the given rate.
    pub fn mixed_poisson_kernels(&self, rate: f64, len: usize) -> Result<Vec<f64>> {
        let rate = positive("poisson rate", rate)?;
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return Ok(out);
        }
        if let Some((shape, beta)) = self.gamma_params() {
            // Negative binomial in log space.
            let ln_q = -(beta / rate).ln_1p();
            let mut ln_r = -shape * (rate / beta).ln_1p();
            for l in 0..len {
                out.push(ln_r.exp());
                let lf = l as f64;
                ln_r += ((lf + shape) / (lf + 1.0)).ln() + ln_q;
            }
            return Ok(out);
        }
        match &self.family {
            Family::Deterministic { value } => {
                let x = rate * value;
                let ln_x = x.ln();
                let mut ln_r = -x;
                for l in 0..len {
                    out.push(ln_r.exp());
                    ln_r += ln_x - ((l + 1) as f64).ln();
                }
            }
            Family::Exponential { rate: lambda } => {
                geometric_kernel(&mut out, 1.0, *lambda, rate, len);
            }
            Family::Hyperexponential { weights, rates } => {
                out.resize(len, 0.0);
                let mut phase = Vec::with_capacity(len);
                for (w, lambda) in weights.iter().zip(rates) {
                    phase.clear();
                    geometric_kernel(&mut phase, *w, *lambda, rate, len);
                    for (o, p) in out.iter_mut().zip(&phase) {
                        *o += p;
                    }
                }
            }
            Family::Erlang { .. } | Family::Gamma { .. } => unreachable!(),
        }
        Ok(out)
    }

    /// An upper bound on `r_{t+1} / r_t` valid for every `t ≥ l`, where `r`
    /// is the mixed-Poisson kernel at `rate`. Used to bound truncated tails.
    pub fn mixed_poisson_ratio_bound(&self, rate: f64, l: usize) -> f64 {
        let lf = l as f64;
        if let Some((shape, beta)) = self.gamma_params() {
            let q = rate / (rate + beta);
            return if shape >= 1.0 {
                (lf + shape) / (lf + 1.0) * q
            } else {
                q
            };
        }
        match &self.family {
            Family::Deterministic { value } => rate * value / (lf + 1.0),
            Family::Exponential { rate: lambda } => rate / (lambda + rate),
            Family::Hyperexponential { rates, .. } => rates
                .iter()
                .map(|lambda| rate / (lambda + rate))
                .fold(0.0, f64::max),
            Family::Erlang { .. } | Family::Gamma { .. } => unreachable!(),
        }
    }

    /// Mixed-Poisson kernel values `r_0, r_1, …, r_L` with `L` the first index
    /// (at least `min_len - 1`) where the remaining tail is certified below
    /// `tail_tol`.
    pub fn mixed_poisson_series(
        &self,
        rate: f64,
        min_len: usize,
        tail_tol: f64,
    ) -> Result<Vec<f64>> {
        const MAX_LEN: usize = 1 << 22;
        let mut len = min_len.max(64);
        loop {
            let r = self.mixed_poisson_kernels(rate, len)?;
            if let Some(cut) = (min_len.max(1) - 1..len).find(|&l| {
                let b = self.mixed_poisson_ratio_bound(rate, l);
                b < 1.0 && r[l] * b / (1.0 - b) < tail_tol
            }) {
                let mut r = r;
                r.truncate(cut + 1);
                return Ok(r);
            }
            if len >= MAX_LEN {
                return Err(Error::invalid(
                    "poisson rate",
                    format!("kernel at rate {rate} needs more than {MAX_LEN} terms"),
                ));
            }
            len *= 2;
        }
    }

    /// The density of `A`, or `None` for the deterministic family.
    pub fn density(&self, x: f64) -> Option<f64> {
        if x < 0.0 {
            return Some(0.0);
        }
        if let Some((shape, rate)) = self.gamma_params() {
            if x == 0.0 {
                return Some(if shape < 1.0 {
                    f64::INFINITY
                } else if shape == 1.0 {
                    rate
                } else {
                    0.0
                });
            }
            let ln = shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape);
            return Some(ln.exp());
        }
        match &self.family {
            Family::Deterministic { .. } => None,
            Family::Exponential { rate } => Some(rate * (-rate * x).exp()),
            Family::Hyperexponential { weights, rates } => Some(
                weights
                    .iter()
                    .zip(rates)
                    .map(|(w, r)| w * r * (-r * x).exp())
                    .sum(),
            ),
            Family::Erlang { .. } | Family::Gamma { .. } => unreachable!(),
        }
    }

    /// `∫ f(x) dA(x)` by adaptive quadrature to absolute tolerance `abs_tol`
    /// (plus at most `sup|f| · 1e-17` of neglected tail).
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F, abs_tol: f64) -> Result<f64> {
        if let Some((shape, rate)) = self.gamma_params() {
            let upper = gamma_upper_cutoff(shape, rate);
            if shape < 1.0 {
                // x = u^{1/shape} removes the x^{shape-1} singularity at 0.
                let c = (shape * rate.ln() - ln_gamma(shape + 1.0)).exp();
                let g = |u: f64| {
                    let x = u.powf(1.0 / shape);
                    f(x) * c * (-rate * x).exp()
                };
                return Ok(quad::integrate(g, 0.0, upper.powf(shape), abs_tol)?.value);
            }
            let g = |x: f64| f(x) * self.density(x).unwrap_or(0.0);
            return Ok(quad::integrate(g, 0.0, upper, abs_tol)?.value);
        }
        match &self.family {
            Family::Deterministic { value } => Ok(f(*value)),
            Family::Exponential { rate } => {
                let upper = -QUAD_TAIL.ln() / rate;
                let g = |x: f64| f(x) * rate * (-rate * x).exp();
                Ok(quad::integrate(g, 0.0, upper, abs_tol)?.value)
            }
            Family::Hyperexponential { weights, rates } => {
                let mut total = 0.0;
                let n = weights.len() as f64;
                for (w, r) in weights.iter().zip(rates) {
                    if *w == 0.0 {
                        continue;
                    }
                    let upper = -QUAD_TAIL.ln() / r;
                    let g = |x: f64| f(x) * r * (-r * x).exp();
                    total += w * quad::integrate(g, 0.0, upper, abs_tol / n)?.value;
                }
                Ok(total)
            }
            Family::Erlang { .. } | Family::Gamma { .. } => unreachable!(),
        }
    }

    /// One exact draw from `A`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.family {
            Family::Deterministic { value } => *value,
            Family::Exponential { rate } => {
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            Family::Erlang { stages, rate } => {
                let mut total = 0.0;
                for _ in 0..*stages {
                    let e: f64 = Exp1.sample(rng);
                    total += e;
                }
                total / rate
            }
            Family::Hyperexponential { weights, rates } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut phase = rates.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        phase = i;
                        break;
                    }
                }
                let e: f64 = Exp1.sample(rng);
                e / rates[phase]
            }
            Family::Gamma { shape, rate } => GammaSampler::new(*shape, 1.0 / rate)
                .expect("validated gamma parameters")
                .sample(rng),
        }
    }
}

fn geometric_kernel(out: &mut Vec<f64>, weight: f64, lambda: f64, rate: f64, len: usize) {
    let first = weight * lambda / (lambda + rate);
    let q = rate / (lambda + rate);
    out.extend((0..len).map(|l| first * q.powi(l as i32)));
}

fn gamma_upper_cutoff(shape: f64, rate: f64) -> f64 {
    let mut x = (shape / rate).max(1.0 / rate);
    while gamma_ur(shape, rate * x) > QUAD_TAIL {
        x *= 2.0;
    }
    x
}

impl fmt::Display for InterarrivalDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(v: &[f64]) -> String {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join("|")
        }
        match &self.family {
            Family::Deterministic { value } => write!(f, "det:a={value}"),
            Family::Exponential { rate } => write!(f, "exp:rate={rate}"),
            Family::Erlang { stages, rate } => write!(f, "erlang:k={stages},rate={rate}"),
            Family::Hyperexponential { weights, rates } => {
                write!(f, "hyper:w={},rate={}", join(weights), join(rates))
            }
            Family::Gamma { shape, rate } => write!(f, "gamma:shape={shape},rate={rate}"),
        }
    }
}

impl FromStr for InterarrivalDistribution {
    type Err = Error;

    /// Parses `det:a=1.0`, `exp:rate=1.0`, `erlang:k=2,rate=2.0`,
    /// `hyper:w=0.3|0.7,rate=1.0|4.0` or `gamma:shape=1.5,rate=2.0`.
    fn from_str(spec: &str) -> Result<Self> {
        let fail = |reason: String| Error::ParseDistribution {
            spec: spec.to_string(),
            reason,
        };
        let (kind, params) = spec
            .trim()
            .split_once(':')
            .ok_or_else(|| fail("expected `<family>:<key>=<value>,...`".into()))?;

        let mut pairs = Vec::new();
        for item in params.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| fail(format!("`{item}` is not key=value")))?;
            pairs.push((k.trim(), v.trim()));
        }
        let get = |key: &str| -> Result<&str> {
            pairs
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| fail(format!("missing `{key}`")))
        };
        let num = |key: &str| -> Result<f64> {
            let raw = get(key)?;
            raw.parse::<f64>()
                .map_err(|_| fail(format!("`{key}={raw}` is not a number")))
        };
        let list = |key: &str| -> Result<Vec<f64>> {
            get(key)?
                .split('|')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| fail(format!("`{x}` in `{key}` is not a number")))
                })
                .collect()
        };
        let expect_keys = |allowed: &[&str]| -> Result<()> {
            match pairs.iter().find(|(k, _)| !allowed.contains(k)) {
                Some((k, _)) => Err(fail(format!("unknown key `{k}`"))),
                None => Ok(()),
            }
        };

        match kind.trim() {
            "det" => {
                expect_keys(&["a"])?;
                Self::deterministic(num("a")?)
            }
            "exp" => {
                expect_keys(&["rate"])?;
                Self::exponential(num("rate")?)
            }
            "erlang" => {
                expect_keys(&["k", "rate"])?;
                let raw = get("k")?;
                let k = raw
                    .parse::<u32>()
                    .map_err(|_| fail(format!("`k={raw}` is not a positive integer")))?;
                Self::erlang(k, num("rate")?)
            }
            "hyper" => {
                expect_keys(&["w", "rate"])?;
                Self::hyperexponential(list("w")?, list("rate")?)
            }
            "gamma" => {
                expect_keys(&["shape", "rate"])?;
                Self::gamma(num("shape")?, num("rate")?)
            }
            other => Err(fail(format!("unknown family `{other}`"))),
        }
    }
}

impl TryFrom<String> for InterarrivalDistribution {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<InterarrivalDistribution> for String {
    fn from(d: InterarrivalDistribution) -> String {
        d.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_families() -> Vec<InterarrivalDistribution> {
        vec![
            InterarrivalDistribution::deterministic(0.8).unwrap(),
            InterarrivalDistribution::exponential(1.3).unwrap(),
            InterarrivalDistribution::erlang(3, 2.5).unwrap(),
            InterarrivalDistribution::hyperexponential(vec![0.3, 0.7], vec![1.0, 4.0]).unwrap(),
            InterarrivalDistribution::gamma(1.5, 2.0).unwrap(),
            InterarrivalDistribution::gamma(0.6, 0.9).unwrap(),
        ]
    }

    #[test]
    fn lst_examples() {
        let e = InterarrivalDistribution::exponential(1.0).unwrap();
        assert_eq!(e.lst(1.0).unwrap(), 0.5);
        let d = InterarrivalDistribution::deterministic(2.0).unwrap();
        assert_eq!(d.lst(0.0).unwrap(), 1.0);
        let er = InterarrivalDistribution::erlang(2, 2.0).unwrap();
        assert!((er.lst(2.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn erlang_lst_matches_quadrature() {
        let er = InterarrivalDistribution::erlang(2, 2.0).unwrap();
        let q = er.expect(|x| (-2.0 * x).exp(), 1e-13).unwrap();
        assert!((q - 0.25).abs() < 1e-12, "{q}");
    }

    #[test]
    fn negative_argument_is_a_domain_error() {
        let e = InterarrivalDistribution::exponential(1.0).unwrap();
        assert!(matches!(e.lst(-0.1), Err(Error::Domain { .. })));
        assert!(matches!(e.lst_derivative(-1.0), Err(Error::Domain { .. })));
        assert!(e.mixed_poisson_kernel(0.0, 1).is_err());
    }

    #[test]
    fn lst_derivative_examples() {
        let e = InterarrivalDistribution::exponential(1.0).unwrap();
        assert_eq!(e.lst_derivative(1.0).unwrap(), -0.25);
        let d = InterarrivalDistribution::deterministic(1.0).unwrap();
        assert_eq!(d.lst_derivative(0.0).unwrap(), -1.0);
        let h = InterarrivalDistribution::hyperexponential(vec![0.5, 0.5], vec![1.0, 2.0]).unwrap();
        assert!((h.lst_derivative(0.0).unwrap() + 0.75).abs() < 1e-15);
    }

    #[test]
    fn lst_derivative_matches_central_difference() {
        for d in all_families() {
            for s in [0.05, 0.3, 1.0, 4.0] {
                let h = 1e-6 * (1.0 + s);
                let fd = (d.lst(s + h).unwrap() - d.lst(s - h).unwrap()) / (2.0 * h);
                let exact = d.lst_derivative(s).unwrap();
                assert!(
                    ((fd - exact) / exact).abs() < 1e-6,
                    "{d} s={s}: {fd} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn lst_matches_quadrature_on_grid() {
        for d in all_families() {
            for s in [0.0, 0.1, 1.0, 10.0] {
                let q = d.expect(|x| (-s * x).exp(), 1e-12).unwrap();
                let c = d.lst(s).unwrap();
                assert!((q - c).abs() < 1e-10, "{d} s={s}: {q} vs {c}");
            }
        }
    }

    #[test]
    fn lst_is_completely_monotone_on_a_grid() {
        for d in all_families() {
            assert_eq!(d.lst(0.0).unwrap(), 1.0);
            let mut prev = 1.0;
            for i in 1..200 {
                let v = d.lst(0.05 * f64::from(i)).unwrap();
                assert!(v > 0.0 && v <= prev, "{d}");
                prev = v;
            }
        }
    }

    #[test]
    fn complement_agrees_with_subtraction() {
        for d in all_families() {
            for s in [1e-9, 1e-3, 0.5, 7.0] {
                let a = d.lst_complement(s).unwrap();
                let b = 1.0 - d.lst(s).unwrap();
                assert!((a - b).abs() < 1e-15 + 1e-9 * a, "{d} s={s}");
            }
        }
    }

    #[test]
    fn mixed_poisson_examples() {
        let e = InterarrivalDistribution::exponential(1.0).unwrap();
        assert_eq!(e.mixed_poisson_kernel(1.0, 0).unwrap(), 0.5);
        let q = e.expect(|x| (-x).exp(), 1e-13).unwrap();
        assert!((q - 0.5).abs() < 1e-12);

        let d = InterarrivalDistribution::deterministic(1.0).unwrap();
        let v = d.mixed_poisson_kernel(2.0, 1).unwrap();
        assert!((v - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.27067).abs() < 1e-5);
    }

    #[test]
    fn mixed_poisson_matches_quadrature() {
        for d in all_families() {
            let rate = 1.7;
            let r = d.mixed_poisson_kernels(rate, 12).unwrap();
            for (j, rj) in r.iter().enumerate() {
                let lnf = ln_gamma(j as f64 + 1.0);
                let q = d
                    .expect(
                        |x| {
                            if x == 0.0 {
                                return if j == 0 { 1.0 } else { 0.0 };
                            }
                            let y = rate * x;
                            (-y + j as f64 * y.ln() - lnf).exp()
                        },
                        1e-13,
                    )
                    .unwrap();
                assert!((q - rj).abs() < 1e-11, "{d} j={j}: {q} vs {rj}");
            }
        }
    }

    #[test]
    fn mixed_poisson_sums_to_one() {
        for d in all_families() {
            let r = d.mixed_poisson_series(1.0, 1, 1e-18).unwrap();
            let total = crate::sum::sum(r.iter().copied());
            assert!((1.0 - 1e-10..=1.0 + 1e-12).contains(&total), "{d}: {total}");
            let mut partial = 0.0;
            for v in &r {
                assert!(*v >= 0.0);
                let next = partial + v;
                assert!(next >= partial);
                partial = next;
            }
        }
    }

    #[test]
    fn moments_examples() {
        let rho = 0.999;
        let d = InterarrivalDistribution::deterministic(1.0 / rho).unwrap();
        let m = d.moments(1.0).unwrap();
        assert!((m.rho2 - 1.002_003_004).abs() < 1e-9);

        let e = InterarrivalDistribution::exponential(1.0).unwrap();
        assert!((e.moments(1.0).unwrap().rho2 - 2.0).abs() < 1e-15);

        let er = InterarrivalDistribution::erlang(2, 2.0).unwrap();
        assert!((er.moments(1.0).unwrap().rho2 - 1.5).abs() < 1e-15);
    }

    #[test]
    fn moments_scale_quadratically_and_respect_jensen() {
        for d in all_families() {
            let a = d.moments(0.7).unwrap();
            let b = d.moments(2.1).unwrap();
            assert!((b.rho2 - 9.0 * a.rho2).abs() < 1e-12 * b.rho2);
            assert!((b.rho3 - 27.0 * a.rho3).abs() < 1e-12 * b.rho3);
            let first = 0.7 * d.mean();
            assert!(a.rho2 >= first * first * (1.0 - 1e-14));
            assert!(a.rho3 >= 0.0 && a.is_finite());
        }
    }

    #[test]
    fn raw_moments_match_quadrature() {
        for d in all_families() {
            for k in 1..=3 {
                let q = d.expect(|x| x.powi(k as i32), 1e-12).unwrap();
                let c = d.raw_moment(k);
                assert!((q - c).abs() < 1e-9 * c.max(1.0), "{d} k={k}: {q} vs {c}");
            }
        }
    }

    #[test]
    fn deterministic_samples_are_constant() {
        let d = InterarrivalDistribution::deterministic(3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            assert_eq!(d.sample(&mut rng), 3.0);
        }
    }

    #[test]
    fn exponential_sample_mean() {
        let d = InterarrivalDistribution::exponential(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mean = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        // 3σ of the sample mean is 3 · 0.5 / 1000.
        assert!((mean - 0.5).abs() < 0.002, "{mean}");
    }

    #[test]
    fn degenerate_hyperexponential_matches_exponential() {
        let h = InterarrivalDistribution::hyperexponential(vec![1.0], vec![5.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut xs: Vec<f64> = (0..10_000).map(|_| h.sample(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let cdf = 1.0 - (-5.0 * x).exp();
                (cdf - i as f64 / n)
                    .abs()
                    .max((cdf - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        // Asymptotic KS critical value at p = 0.01 is 1.628 / sqrt(n).
        assert!(ks < 1.628 / n.sqrt(), "KS statistic {ks}");
    }

    #[test]
    fn gamma_and_erlang_sample_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in [
            InterarrivalDistribution::erlang(3, 2.5).unwrap(),
            InterarrivalDistribution::gamma(1.5, 2.0).unwrap(),
        ] {
            let n = 200_000;
            let mean = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
            let sd = (d.raw_moment(2) - d.mean() * d.mean()).sqrt() / (n as f64).sqrt();
            assert!((mean - d.mean()).abs() < 4.0 * sd, "{d}: {mean}");
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(InterarrivalDistribution::deterministic(0.0).is_err());
        assert!(InterarrivalDistribution::exponential(f64::INFINITY).is_err());
        assert!(InterarrivalDistribution::erlang(0, 1.0).is_err());
        assert!(
            InterarrivalDistribution::hyperexponential(vec![0.5, 0.6], vec![1.0, 2.0]).is_err()
        );
        assert!(InterarrivalDistribution::hyperexponential(vec![0.5], vec![1.0, 2.0]).is_err());
        assert!(
            InterarrivalDistribution::hyperexponential(vec![1.5, -0.5], vec![1.0, 2.0]).is_err()
        );
        assert!(InterarrivalDistribution::gamma(-1.0, 1.0).is_err());
    }

    #[test]
    fn parses_cli_specs() {
        let cases = [
            (
                "det:a=1.0",
                InterarrivalDistribution::deterministic(1.0).unwrap(),
            ),
            (
                "exp:rate=1.0",
                InterarrivalDistribution::exponential(1.0).unwrap(),
            ),
            (
                "erlang:k=2,rate=2.0",
                InterarrivalDistribution::erlang(2, 2.0).unwrap(),
            ),
            (
                "hyper:w=0.3|0.7,rate=1.0|4.0",
                InterarrivalDistribution::hyperexponential(vec![0.3, 0.7], vec![1.0, 4.0]).unwrap(),
            ),
            (
                "gamma:shape=1.5,rate=2.0",
                InterarrivalDistribution::gamma(1.5, 2.0).unwrap(),
            ),
        ];
        for (spec, want) in cases {
            assert_eq!(spec.parse::<InterarrivalDistribution>().unwrap(), want);
        }
        for bad in [
            "",
            "exp",
            "exp:rate",
            "exp:rate=x",
            "weibull:k=1",
            "exp:rate=1,a=2",
            "erlang:k=1.5,rate=1",
        ] {
            assert!(bad.parse::<InterarrivalDistribution>().is_err(), "{bad}");
        }
    }

    #[test]
    fn scaling_and_mean() {
        for d in all_families() {
            let s = d.with_mean(2.5).unwrap();
            assert!((s.mean() - 2.5).abs() < 1e-14);
            let t = d.scaled(3.0).unwrap();
            assert!((t.lst(1.0).unwrap() - d.lst(3.0).unwrap()).abs() < 1e-15);
        }
    }

    proptest::proptest! {
        #[test]
        fn display_round_trips(
            family in 0usize..5,
            a in 0.01f64..50.0,
            b in 0.01f64..50.0,
            w in 0.0f64..1.0,
            k in 1u32..8,
        ) {
            let d = match family {
                0 => InterarrivalDistribution::deterministic(a),
                1 => InterarrivalDistribution::exponential(a),
                2 => InterarrivalDistribution::erlang(k, a),
                3 => InterarrivalDistribution::hyperexponential(vec![w, 1.0 - w], vec![a, b]),
                _ => InterarrivalDistribution::gamma(a, b),
            }.unwrap();
            let back: InterarrivalDistribution = d.to_string().parse().unwrap();
            proptest::prop_assert_eq!(back, d);
        }
    }
}
