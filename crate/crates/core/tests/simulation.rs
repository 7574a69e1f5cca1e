//! Simulation against exact loss probabilities.

use lossq::kernel::KernelSet;
use lossq::recurrence::{self, loss_curve};
use lossq::sim::{self, SimConfig};
use lossq::QueueModel;

fn model(m: usize, n: usize, rho: f64, d: &str) -> QueueModel {
    QueueModel::new(m, n, 1.0, d.parse().unwrap())
        .unwrap()
        .with_load(rho)
        .unwrap()
}

fn short(model: QueueModel, seed: u64, arrivals: u64) -> SimConfig {
    SimConfig {
        model,
        arrivals_total: arrivals,
        warmup_arrivals: 1_000,
        replications: 20,
        seed,
    }
}

#[test]
fn intervals_cover_exact_values() {
    let mut cells = 0;
    let mut covered = 0;
    let mut seed = 1;
    for d in [
        "det:a=1",
        "exp:rate=1",
        "erlang:k=2,rate=1",
        "hyper:w=0.3|0.7,rate=1|4",
    ] {
        for m in 1..=3 {
            for n in [0, 2, 5, 10] {
                for rho in [0.7, 1.0, 1.3] {
                    let q = model(m, n, rho, d);
                    let exact = recurrence::loss_gimmn(&q).unwrap().p;
                    if exact < 1e-3 {
                        continue;
                    }
                    seed += 1;
                    let est = sim::simulate(&short(q, seed, 20_000)).unwrap();
                    cells += 1;
                    if (est.p_hat - exact).abs() <= est.ci95_halfwidth {
                        covered += 1;
                    }
                }
            }
        }
    }
    assert!(cells >= 100, "{cells}");
    let share = covered as f64 / cells as f64;
    assert!(share >= 0.85, "{covered} of {cells} intervals cover");
}

#[test]
fn agreement_improves_with_buffer() {
    // Loss falls with n and the simulation tracks the exact curve throughout.
    let q = model(2, 40, 0.95, "det:a=1");
    let curve = loss_curve(&KernelSet::build(&q).unwrap()).unwrap();
    let mut last = f64::INFINITY;
    for n in [5, 10, 20, 40] {
        let est = sim::simulate(&short(q.with_n(n), 7, 200_000)).unwrap();
        assert!(
            (est.p_hat - curve[n]).abs() < 4.0 * est.stderr.max(1e-5),
            "n={n}: {} vs {}",
            est.p_hat,
            curve[n]
        );
        assert!(est.p_hat < last);
        last = est.p_hat;
    }
}

#[test]
fn replications_are_independent_streams() {
    let mut cfg = short(model(1, 3, 0.9, "exp:rate=1"), 11, 30_000);
    let twenty = sim::simulate(&cfg).unwrap();
    cfg.replications = 1;
    let one = sim::simulate(&cfg).unwrap();
    assert!(twenty.stderr > 0.0 && one.stderr == 0.0);
    assert_eq!(twenty.arrivals_counted, 20 * one.arrivals_counted);
    assert_ne!(twenty.losses, 20 * one.losses);
}
