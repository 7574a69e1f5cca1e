//! Large-buffer behaviour of the loss probability.
//!
//! For a fixed load the loss probability tends to `(ρ-1)/ρ` when `ρ > 1`,
//! decays like `ρ_2/(2n)` when `ρ = 1` and geometrically at rate `σ_m` when
//! `ρ < 1`. In heavy traffic (`ρ = 1 - ε`, `εn → C`) it behaves like
//! `ε / (e^{2C/ρ_2} - 1)` whatever `m` is.
//!
//! Every moment here is taken at scale `μm`: `ρ_2 = E[(μmX)^2]`.

use serde::{Deserialize, Serialize};

use crate::dist::InterarrivalDistribution;
use crate::error::{Error, Result};
use crate::kernel::c_products;
use crate::model::QueueModel;
use crate::recurrence::{Diagnostics, LossResult, Method};
use crate::root;

/// Loads within this distance of 1 count as critical.
pub const CRITICAL_BAND: f64 = 1e-12;

/// Heavy-traffic constants `C = εn` up to this value use the small-`C`
/// expansion `ρ_2/(2n)`; larger ones use the full expression.
pub const DEFAULT_C_THRESHOLD: f64 = 0.075;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    Overloaded,
    Critical,
    Underloaded,
    HeavyTrafficC,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRegime {
    pub kind: RegimeKind,
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_m: Option<f64>,
    pub rho2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho3: Option<f64>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl AsymptoticRegime {
    /// Classifies a single model by its load.
    pub fn classify(model: &QueueModel) -> Result<Self> {
        let rho = model.load();
        let mm = model.dist().moments(model.m() as f64 * model.mu())?;
        let kind = if (rho - 1.0).abs() < CRITICAL_BAND {
            RegimeKind::Critical
        } else if rho > 1.0 {
            RegimeKind::Overloaded
        } else {
            RegimeKind::Underloaded
        };
        let (sigma_m, k_m) = if kind == RegimeKind::Underloaded {
            let s = sigma_root(model.dist(), model.mu(), model.m())?;
            (
                Some(s),
                Some(k_m_constant(model.dist(), model.mu(), model.m(), s)?),
            )
        } else {
            (None, None)
        };
        Ok(AsymptoticRegime {
            kind,
            rho,
            sigma_m,
            k_m,
            rho2: mm.rho2,
            rho3: Some(mm.rho3),
            c: None,
            epsilon: None,
        })
    }

    /// Treats the model as one member of a heavy-traffic sequence with
    /// `ε = 1 - ρ` and `C = εn` unless `c` is given.
    pub fn heavy_traffic(model: &QueueModel, c: Option<f64>) -> Result<Self> {
        let rho = model.load();
        let epsilon = 1.0 - rho;
        if !(epsilon > 0.0) {
            return Err(Error::invalid(
                "rho",
                format!("heavy traffic needs a load below 1, got {rho}"),
            ));
        }
        let c = c.unwrap_or(epsilon * model.n() as f64);
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::invalid("C", format!("must be nonnegative, got {c}")));
        }
        let mm = model.dist().moments(model.m() as f64 * model.mu())?;
        Ok(AsymptoticRegime {
            kind: RegimeKind::HeavyTrafficC,
            rho,
            sigma_m: None,
            k_m: None,
            rho2: mm.rho2,
            rho3: Some(mm.rho3),
            c: Some(c),
            epsilon: Some(epsilon),
        })
    }
}

/// `σ_m`: the root in `(0, 1)` of `z = α(μm - μmz)` when `ρ < 1`, else 1.
///
/// Solved for `w = 1 - z` as `1 - α(μmw) = w`, which keeps full precision
/// when `σ_m` is close to 1.
pub fn sigma_root(d: &InterarrivalDistribution, mu: f64, m: usize) -> Result<f64> {
    let rate = m as f64 * mu;
    let rho = d.arrival_rate() / rate;
    if rho >= 1.0 {
        return Ok(1.0);
    }
    let h = |w: f64| d.lst_complement_unchecked(rate * w) - w;
    let mut lo = 1e-12;
    while !(h(lo) > 0.0) {
        lo *= 10.0;
        if lo >= 1.0 {
            return Err(Error::Bracket {
                what: "sigma_m",
                lo: 1e-12,
                hi: 1.0,
            });
        }
    }
    let w = root::bracketed(h, lo, 1.0, 1e-16, "sigma_m")?;
    Ok(1.0 - w)
}

/// Heavy-traffic expansion `σ ≈ 1 - 2ε/ρ_2`.
pub fn sigma_expansion(epsilon: f64, rho2: f64) -> f64 {
    1.0 - 2.0 * epsilon / rho2
}

/// The constant `K_m`: the stationary probability that an arrival to the
/// infinite-buffer GI/M/m queue finds all `m` servers busy.
pub fn k_m_constant(d: &InterarrivalDistribution, mu: f64, m: usize, sigma_m: f64) -> Result<f64> {
    if !(sigma_m > 0.0 && sigma_m < 1.0) {
        return Err(Error::invalid(
            "sigma_m",
            format!("must lie in (0, 1), got {sigma_m}"),
        ));
    }
    let phi: Vec<f64> = (1..=m)
        .map(|j| d.lst(mu * j as f64))
        .collect::<Result<_>>()?;
    let c = c_products(&phi)?;
    let mf = m as f64;
    let one_minus_sigma = 1.0 - sigma_m;
    let mut acc = crate::sum::NeumaierSum::new();
    let mut binom = 1.0;
    for j in 1..=m {
        binom = binom * (m - j + 1) as f64 / j as f64;
        let jf = j as f64;
        let denom = mf * one_minus_sigma - jf;
        if denom.abs() < 1e-12 {
            return Err(Error::Singular {
                quantity: "K_m",
                detail: format!("m(1 - sigma_m) - {j} = {denom:e}"),
            });
        }
        let om_phi = 1.0 - phi[j - 1];
        acc.add(binom * c[j] / om_phi * (mf * om_phi - jf) / denom);
    }
    Ok(1.0 / (1.0 + one_minus_sigma * acc.value()))
}

/// `K_m [1 + μm α'(μm - μmσ_m)]`: the limit of `p_{m,n} / σ_m^n` for `ρ < 1`.
pub fn geometric_constant(model: &QueueModel, sigma_m: f64, k_m: f64) -> Result<f64> {
    let rate = model.m() as f64 * model.mu();
    let slope = model.dist().lst_derivative(rate * (1.0 - sigma_m))?;
    Ok(k_m * (1.0 + rate * slope))
}

/// Main terms for fixed load.
pub fn theorem1_estimate(model: &QueueModel, regime: &AsymptoticRegime) -> Result<LossResult> {
    let n = model.n() as f64;
    let p = match regime.kind {
        RegimeKind::Overloaded => (regime.rho - 1.0) / regime.rho,
        RegimeKind::Critical => {
            if model.n() == 0 {
                return Err(Error::invalid("n", "the critical estimate needs n >= 1"));
            }
            if !regime.rho2.is_finite() {
                return Err(Error::MomentMissing("rho2"));
            }
            regime.rho2 / (2.0 * n)
        }
        RegimeKind::Underloaded => {
            let s = regime
                .sigma_m
                .ok_or_else(|| Error::invalid("regime", "underloaded regime without sigma_m"))?;
            let k = regime
                .k_m
                .ok_or_else(|| Error::invalid("regime", "underloaded regime without K_m"))?;
            geometric_constant(model, s, k)? * s.powf(n)
        }
        RegimeKind::HeavyTrafficC => {
            let eps = regime.epsilon.unwrap_or(1.0 - regime.rho);
            let c = regime.c.unwrap_or(eps * n);
            theorem2_with_c(regime.rho2, eps, model.n(), c, DEFAULT_C_THRESHOLD)?
        }
    };
    Ok(LossResult {
        model: model.clone(),
        p,
        method: Method::Asymptotic,
        pi_log: None,
        diagnostics: Diagnostics {
            regime: Some(regime.clone()),
            ci_halfwidth: None,
        },
    })
}

/// Heavy-traffic estimate with `C = εn` and the default threshold.
pub fn theorem2_estimate(rho2: f64, epsilon: f64, n: usize) -> Result<f64> {
    theorem2_with_c(rho2, epsilon, n, epsilon * n as f64, DEFAULT_C_THRESHOLD)
}

/// Heavy-traffic estimate: `ε / (e^{2C/ρ_2} - 1)` when `C > threshold`,
/// otherwise its small-`C` limit `ρ_2 / (2n)`.
pub fn theorem2_with_c(rho2: f64, epsilon: f64, n: usize, c: f64, threshold: f64) -> Result<f64> {
    if !(rho2.is_finite() && rho2 > 0.0) {
        return Err(Error::invalid(
            "rho2",
            format!("must be positive, got {rho2}"),
        ));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid(
            "epsilon",
            format!("must be positive, got {epsilon}"),
        ));
    }
    if n == 0 {
        return Err(Error::invalid(
            "n",
            "the heavy-traffic estimate needs n >= 1",
        ));
    }
    if c > threshold {
        Ok(epsilon / (2.0 * c / rho2).exp_m1())
    } else {
        Ok(rho2 / (2.0 * n as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TakacsCase {
    /// `γ_1 < 1`: `Q_n → Q_0 / (1 - γ_1)`.
    Convergent,
    /// `γ_1 = 1`: `Q_n / n → 2Q_0 / γ_2`.
    Linear,
    /// `γ_1 > 1`: `Q_n δ^n → Q_0 / (1 - F'(δ))`.
    Geometric,
}

/// Factorial moments and the limiting behaviour of `Q_j = Σ f_i Q_{j-i+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TakacsLimits {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    /// Least root of `z = F(z)` in `(0, 1]`.
    pub delta: f64,
    pub case: TakacsCase,
    /// `lim Q_n/Q_0`, `lim Q_n/(n Q_0)` or `lim Q_n δ^n / Q_0` per the case.
    pub limit: f64,
    /// `1 - Σ f`, the mass missing from the truncated kernel.
    pub missing_mass: f64,
    /// False when the truncated kernel misses more than `1e-10` of its mass,
    /// so the moments cannot be trusted.
    pub moments_converged: bool,
}

/// Tolerance for deciding `γ_1 = 1`.
const UNIT_MEAN_BAND: f64 = 1e-9;

pub fn takacs_limits(f: &[f64]) -> Result<TakacsLimits> {
    if f.first().is_none_or(|f0| !(*f0 > 0.0)) {
        return Err(Error::invalid("f", "kernel needs f_0 > 0"));
    }
    let mut g = [
        crate::sum::NeumaierSum::new(),
        Default::default(),
        Default::default(),
    ];
    for (j, fj) in f.iter().enumerate() {
        let jf = j as f64;
        g[0].add(jf * fj);
        g[1].add(jf * (jf - 1.0) * fj);
        g[2].add(jf * (jf - 1.0) * (jf - 2.0) * fj);
    }
    let (gamma1, gamma2, gamma3) = (g[0].value(), g[1].value(), g[2].value());
    let missing_mass = 1.0 - crate::sum::sum(f.iter().copied());

    let pgf = |z: f64| f.iter().rev().fold(0.0, |acc, fj| acc * z + fj);
    let pgf_slope = |z: f64| {
        f.iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (j, fj)| acc * z + j as f64 * fj)
    };

    let (case, delta, limit) = if (gamma1 - 1.0).abs() < UNIT_MEAN_BAND {
        (TakacsCase::Linear, 1.0, 2.0 / gamma2)
    } else if gamma1 < 1.0 {
        (TakacsCase::Convergent, 1.0, 1.0 / (1.0 - gamma1))
    } else {
        let hi = (1..=52)
            .map(|k| 1.0 - 0.5f64.powi(k))
            .find(|z| pgf(*z) - z < 0.0)
            .ok_or(Error::Bracket {
                what: "delta",
                lo: 0.0,
                hi: 1.0,
            })?;
        let delta = root::bracketed(|z| pgf(z) - z, 0.0, hi, 1e-15, "delta")?;
        (TakacsCase::Geometric, delta, 1.0 / (1.0 - pgf_slope(delta)))
    };
    Ok(TakacsLimits {
        gamma1,
        gamma2,
        gamma3,
        delta,
        case,
        limit,
        missing_mass,
        moments_converged: missing_mass.abs() <= 1e-10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recurrence::{loss_curve, solve_generic};

    fn model(m: usize, n: usize, rho: f64, d: &str) -> QueueModel {
        QueueModel::new(m, n, 1.0, d.parse().unwrap())
            .unwrap()
            .with_load(rho)
            .unwrap()
    }

    #[test]
    fn mm1_root_is_the_load() {
        let q = model(1, 0, 0.5, "exp:rate=1");
        let s = sigma_root(q.dist(), 1.0, 1).unwrap();
        assert!((s - 0.5).abs() < 1e-14);
    }

    #[test]
    fn root_is_one_without_underload() {
        for rho in [1.0, 1.3] {
            let q = model(2, 0, rho, "det:a=1");
            assert_eq!(sigma_root(q.dist(), 1.0, 2).unwrap(), 1.0);
        }
    }

    #[test]
    fn root_residual_is_tiny() {
        for d in [
            "det:a=1",
            "exp:rate=1",
            "erlang:k=2,rate=1",
            "hyper:w=0.3|0.7,rate=1|4",
            "gamma:shape=0.5,rate=1",
        ] {
            for m in 1..=4 {
                for rho in [0.3, 0.7, 0.99, 0.9999] {
                    let q = model(m, 0, rho, d);
                    let s = sigma_root(q.dist(), 1.0, m).unwrap();
                    let mf = m as f64;
                    let res = s - q.dist().lst(mf - mf * s).unwrap();
                    assert!(
                        s > 0.0 && s < 1.0 && res.abs() < 1e-13,
                        "{d} m={m} rho={rho}: {res}"
                    );
                }
            }
        }
    }

    #[test]
    fn deterministic_heavy_traffic_root() {
        let q = model(1, 0, 0.999, "det:a=1");
        let s = sigma_root(q.dist(), 1.0, 1).unwrap();
        let rho2 = q.dist().moments(1.0).unwrap().rho2;
        assert!((s - 0.998004).abs() < 5e-6);
        assert!((s - sigma_expansion(0.001, rho2)).abs() < 10.0 * 1e-6);
    }

    #[test]
    fn k1_for_mm1_is_the_load() {
        let q = model(1, 0, 0.6, "exp:rate=1");
        let s = sigma_root(q.dist(), 1.0, 1).unwrap();
        let k = k_m_constant(q.dist(), 1.0, 1, s).unwrap();
        assert!((k - 0.6).abs() < 1e-13);
    }

    #[test]
    fn k2_for_mm2_is_erlang_c() {
        let q = model(2, 0, 0.7, "exp:rate=1");
        let s = sigma_root(q.dist(), 1.0, 2).unwrap();
        let k = k_m_constant(q.dist(), 1.0, 2, s).unwrap();
        // Erlang C with two servers: 2ρ² / (1 + ρ).
        assert!((k - 2.0 * 0.49 / 1.7).abs() < 1e-12);
    }

    #[test]
    fn km_tends_to_one_in_heavy_traffic() {
        for eps in [1e-2, 1e-3, 1e-4] {
            let q = model(2, 0, 1.0 - eps, "det:a=1");
            let s = sigma_root(q.dist(), 1.0, 2).unwrap();
            let k = k_m_constant(q.dist(), 1.0, 2, s).unwrap();
            assert!((k - 1.0).abs() < 20.0 * eps, "eps={eps}: {k}");
        }
    }

    #[test]
    fn km_singular_denominator_is_reported() {
        // m(1 - σ) = 1 exactly when σ = 1/2 and m = 2.
        let d = InterarrivalDistribution::exponential(1.0).unwrap();
        assert!(matches!(
            k_m_constant(&d, 1.0, 2, 0.5),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn km_matches_single_server_slope() {
        let q = model(1, 200, 0.6, "det:a=1");
        let regime = AsymptoticRegime::classify(&q).unwrap();
        let s = regime.sigma_m.unwrap();
        let g = geometric_constant(&q, s, regime.k_m.unwrap()).unwrap();
        let curve = loss_curve(&crate::kernel::KernelSet::build(&q).unwrap()).unwrap();
        for n in [100, 150, 200] {
            let fit = curve[n] / s.powi(n as i32);
            assert!(((fit - g) / g).abs() < 1e-8, "n={n}: {fit} vs {g}");
        }
    }

    #[test]
    fn overloaded_estimate() {
        for m in 1..=3 {
            let q = model(m, 10, 1.25, "erlang:k=2,rate=1");
            let r = AsymptoticRegime::classify(&q).unwrap();
            assert_eq!(r.kind, RegimeKind::Overloaded);
            let e = theorem1_estimate(&q, &r).unwrap();
            assert!((e.p - 0.2).abs() < 1e-14);
            assert_eq!(e.method, Method::Asymptotic);
        }
    }

    #[test]
    fn critical_deterministic_estimate() {
        let q = model(2, 20, 1.0, "det:a=1");
        let r = AsymptoticRegime::classify(&q).unwrap();
        assert_eq!(r.kind, RegimeKind::Critical);
        assert!((r.rho2 - 1.0).abs() < 1e-14);
        let est = theorem1_estimate(&q, &r).unwrap().p;
        assert!((est - 0.025).abs() < 1e-14);
        let exact = crate::recurrence::loss_gimmn(&q).unwrap().p;
        assert!(((exact - est) / est).abs() < 0.1, "{exact} vs {est}");
    }

    #[test]
    fn underloaded_mm1_estimate() {
        let q = model(1, 30, 0.5, "exp:rate=1");
        let r = AsymptoticRegime::classify(&q).unwrap();
        let est = theorem1_estimate(&q, &r).unwrap().p;
        let exact = crate::recurrence::loss_gimmn(&q).unwrap().p;
        assert!(((est - exact) / exact).abs() < 0.01);
    }

    #[test]
    fn heavy_traffic_examples() {
        let a = theorem2_estimate(1.002, 0.001, 10).unwrap();
        assert!((a - 0.0501).abs() < 5e-5);
        let b = theorem2_estimate(1.0, 0.001, 100).unwrap();
        assert!((b - 0.001 * (-0.2f64).exp() / (1.0 - (-0.2f64).exp())).abs() < 1e-15);
        assert!((b - 0.0045).abs() < 5e-5);
        let full = theorem2_with_c(1.3, 1e-8, 1, 1e-8, 0.0).unwrap();
        let small = theorem2_with_c(1.3, 1e-8, 1, 1e-8, 1.0).unwrap();
        assert!(((full - small) / small).abs() < 1e-6);
        assert!(theorem2_estimate(1.0, 0.0, 10).is_err());
    }

    #[test]
    fn regime_json_round_trip() {
        let q = model(2, 10, 0.7, "exp:rate=1");
        let r = AsymptoticRegime::classify(&q).unwrap();
        let back: AsymptoticRegime =
            serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        let h = AsymptoticRegime::heavy_traffic(&q, Some(0.5)).unwrap();
        assert!(serde_json::to_string(&h).unwrap().contains("\"C\":0.5"));
        assert!(AsymptoticRegime::heavy_traffic(&model(1, 3, 1.1, "det:a=1"), None).is_err());
    }

    #[test]
    fn takacs_linear_case() {
        let t = takacs_limits(&[0.5, 0.0, 0.5]).unwrap();
        assert_eq!(t.case, TakacsCase::Linear);
        assert_eq!((t.gamma1, t.gamma2, t.gamma3), (1.0, 1.0, 0.0));
        assert_eq!(t.limit, 2.0);
        let q = solve_generic(&[0.5, 0.0, 0.5], 1.0, 10_000).unwrap();
        assert!((q.value(10_000) / 10_000.0 - 2.0).abs() < 0.02);
    }

    #[test]
    fn takacs_convergent_case() {
        let f = [0.6, 0.3, 0.1];
        let t = takacs_limits(&f).unwrap();
        assert_eq!(t.case, TakacsCase::Convergent);
        assert!((t.gamma1 - 0.5).abs() < 1e-15);
        let q = solve_generic(&f, 1.0, 10_000).unwrap();
        assert!((q.value(10_000) - 2.0).abs() < 1e-8);
    }

    #[test]
    fn takacs_geometric_case() {
        let d = InterarrivalDistribution::deterministic(1.0).unwrap();
        let f = d.mixed_poisson_series(2.0, 1, 1e-20).unwrap();
        let t = takacs_limits(&f).unwrap();
        assert_eq!(t.case, TakacsCase::Geometric);
        assert!((t.gamma1 - 2.0).abs() < 1e-12);
        assert!((t.delta - 0.203_187_869_979_979_4).abs() < 1e-12);
        assert!(t.moments_converged);
        let f = d.mixed_poisson_kernels(2.0, 501).unwrap();
        let q = solve_generic(&f, 1.0, 500).unwrap();
        let scaled = |n: usize| (q.ln(n) + n as f64 * t.delta.ln()).exp();
        assert!((scaled(500) - t.limit).abs() < 1e-8 * t.limit);
        assert!((scaled(400) - scaled(500)).abs() < 1e-8 * t.limit);
    }

    #[test]
    fn interior_kernel_mean_is_inverse_load() {
        for d in ["det:a=1", "exp:rate=1", "hyper:w=0.3|0.7,rate=1|4"] {
            let q = model(2, 0, 0.8, d);
            let f = q.dist().mixed_poisson_series(2.0, 1000, 1e-20).unwrap();
            let t = takacs_limits(&f).unwrap();
            assert!((t.gamma1 - 1.25).abs() < 1e-8);
            let rho2 = q.dist().moments(2.0).unwrap().rho2;
            assert!((t.gamma2 - rho2).abs() < 1e-8);
        }
    }
}
