use lossq::kernel::KernelSet;
use lossq::recurrence::{self, loss_curve};
use lossq::{mcoracle, QueueModel};
use proptest::prelude::*;

fn dist_spec() -> impl Strategy<Value = String> {
    prop_oneof![
        (0.2f64..3.0).prop_map(|a| format!("det:a={a}")),
        (0.2f64..3.0).prop_map(|r| format!("exp:rate={r}")),
        (1usize..5, 0.5f64..3.0).prop_map(|(k, r)| format!("erlang:k={k},rate={r}")),
        (0.05f64..0.95, 0.2f64..2.0, 2.0f64..8.0)
            .prop_map(|(w, a, b)| format!("hyper:w={w}|{},rate={a}|{b}", 1.0 - w)),
        (0.3f64..4.0).prop_map(|s| format!("gamma:shape={s},rate=1")),
    ]
}

fn models() -> impl Strategy<Value = QueueModel> {
    (1usize..=4, 0usize..=30, 0.2f64..2.0, dist_spec()).prop_map(|(m, n, rho, d)| {
        QueueModel::new(m, n, 1.0, d.parse().unwrap())
            .unwrap()
            .with_load(rho)
            .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn kernels_form_stochastic_rows(q in models()) {
        let ks = KernelSet::build(&q).unwrap();
        ks.validate().unwrap();
        for y in 1..=ks.capacity() {
            let row: Vec<f64> = ks.row(y).collect();
            prop_assert!(row.iter().all(|v| *v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn recurrence_matches_oracle(q in models()) {
        let a = recurrence::loss_gimmn(&q).unwrap().p;
        let b = mcoracle::loss_oracle(&q).unwrap().p;
        prop_assert!(a > 0.0 && a <= 1.0);
        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn loss_falls_with_buffer(q in models()) {
        let curve = loss_curve(&KernelSet::build(&q).unwrap()).unwrap();
        prop_assert!(curve.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn loss_rises_with_load(q in models(), bump in 1.01f64..1.5) {
        let heavier = q.clone().with_load(q.load() * bump).unwrap();
        let a = recurrence::loss_gimmn(&q).unwrap().p;
        let b = recurrence::loss_gimmn(&heavier).unwrap().p;
        prop_assert!(b > a);
    }

    #[test]
    fn time_scale_does_not_matter(q in models(), scale in 0.1f64..10.0) {
        let scaled = QueueModel::new(q.m(), q.n(), q.mu() / scale, q.dist().scaled(scale).unwrap()).unwrap();
        let a = recurrence::loss_gimmn(&q).unwrap().p;
        let b = recurrence::loss_gimmn(&scaled).unwrap().p;
        prop_assert!((a - b).abs() < 1e-12 * a.max(1e-3));
    }

    #[test]
    fn stationary_vector_is_a_distribution(q in models()) {
        let pi = mcoracle::stationary(&mcoracle::build_chain(&q).unwrap()).unwrap();
        prop_assert!(pi.iter().all(|v| *v >= 0.0));
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
