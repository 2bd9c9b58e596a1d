//! Schedule evaluation against an independent step-by-step walk of the
//! timing/link chain, plus order-space properties of the exhaustive optimum.

use proptest::prelude::*;
use uav_sched::scenario::{Scenario, ScenarioDistribution, UserKind, generate_scenario};
use uav_sched::schedule::{
    ServiceOrder, brute_force_optimum, evaluate_order, objective,
};

fn small_dist(num_ground: usize, num_aerial: usize, endurance: f64) -> ScenarioDistribution {
    ScenarioDistribution {
        num_ground,
        num_aerial,
        endurance,
        ..ScenarioDistribution::default()
    }
}

/// Literal transcription of the timing and link chain, written independently
/// of the library path (no calls into `channel`/`schedule` internals).
fn hand_walk(s: &Scenario, order: &[usize]) -> Vec<(f64, f64, f64, f64, f64, bool)> {
    let h_uav = s.uav.altitude;
    let sigma2 = 10f64.powf((s.channel.noise_power_dbm - 30.0) / 10.0);
    let mut rows = Vec::new();
    let (mut px, mut py) = (s.uav.start_x, s.uav.start_y);
    let mut prev_total = 0.0;
    for &i in order {
        let u = &s.users[i];
        let flight = ((u.x - px).powi(2) + (u.y - py).powi(2)).sqrt() / s.uav.speed;
        let start = prev_total;
        let wait = start + flight;
        let rate = match u.kind {
            UserKind::Ground => {
                let d = h_uav - u.h; // served from straight above
                let phi = (d / d).asin().to_degrees();
                let p_los =
                    1.0 / (1.0 + s.channel.env_x * (-s.channel.env_y * (phi - s.channel.env_x)).exp());
                let gain = p_los * d.powf(-s.channel.path_loss_exponent)
                    + (1.0 - p_los) * s.channel.nlos_attenuation * d.powf(-s.channel.path_loss_exponent);
                s.uav.bandwidth * (1.0 + s.uav.tx_power * gain / sigma2).log2()
            }
            UserKind::Aerial => {
                let d = (h_uav - u.h).abs();
                let pl_db = 20.0
                    * (4.0 * std::f64::consts::PI * d * s.channel.mmwave_freq / s.channel.light_speed)
                        .log10()
                    + s.channel.los_attenuation_db;
                let bw = s.channel.aerial_bandwidth.unwrap_or(s.uav.bandwidth);
                bw * (1.0 + s.uav.tx_power / (10f64.powf(pl_db / 10.0) * sigma2)).log2()
            }
        };
        let tx = u.data_size / rate;
        let total = wait + tx;
        rows.push((flight, start, wait, tx, total, total <= u.endurance));
        (px, py) = (u.x, u.y);
        prev_total = total;
    }
    rows
}

#[test]
fn three_user_walk_matches_evaluator() {
    let s = generate_scenario(&small_dist(2, 1, 40.0), 7).unwrap();
    for order in [vec![0, 1, 2], vec![2, 0, 1], vec![1, 2, 0]] {
        let eval = evaluate_order(&s, &ServiceOrder::new(order.clone()).unwrap()).unwrap();
        let expected = hand_walk(&s, &order);
        for (rec, (flight, start, wait, tx, total, satisfied)) in
            eval.records.iter().zip(expected)
        {
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1e-12);
            assert!(close(rec.flight_time, flight), "flight {} vs {flight}", rec.flight_time);
            assert!(close(rec.start_time, start));
            assert!(close(rec.wait_time, wait));
            assert!(close(rec.tx_time, tx), "tx {} vs {tx}", rec.tx_time);
            assert!(close(rec.total_time, total));
            assert_eq!(rec.satisfied, satisfied);
        }
    }
}

/// Scenario strategy: 1..=5 users with randomized split, deadline, and seed.
fn arb_scenario() -> impl Strategy<Value = Scenario> {
    (0usize..=3, 0usize..=3, 5.0f64..80.0, any::<u64>())
        .prop_filter("at least one user", |(g, a, _, _)| g + a >= 1)
        .prop_map(|(g, a, endurance, seed)| {
            generate_scenario(&small_dist(g, a, endurance), seed).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn oracle_dominates_every_order(s in arb_scenario(), order_seed in any::<u64>()) {
        let (_, best) = brute_force_optimum(&s).unwrap();
        for k in 0..8u64 {
            let order = uav_sched::learning::random_policy(&s, order_seed.wrapping_add(k));
            let value = objective(&evaluate_order(&s, &order).unwrap());
            prop_assert!(value <= best, "order {order} scores {value} > oracle {best}");
        }
    }

    #[test]
    fn timing_chain_invariants((s, seed) in (arb_scenario(), any::<u64>())) {
        let order = uav_sched::learning::random_policy(&s, seed);
        let eval = evaluate_order(&s, &order).unwrap();
        let mut prev_total = 0.0;
        for rec in &eval.records {
            // Waiting includes the flight; service strictly extends waiting.
            prop_assert!(rec.wait_time >= rec.flight_time);
            prop_assert!(rec.total_time > rec.wait_time);
            // Completion times strictly increase along the order.
            prop_assert!(rec.total_time > prev_total);
            prev_total = rec.total_time;
        }
    }

    #[test]
    fn raising_endurance_never_hurts(s in arb_scenario(), extra in 0.1f64..50.0) {
        let (_, base) = brute_force_optimum(&s).unwrap();
        let mut relaxed = s.clone();
        for u in &mut relaxed.users {
            u.endurance += extra;
        }
        let (_, better) = brute_force_optimum(&relaxed).unwrap();
        prop_assert!(better >= base);
    }

    #[test]
    fn relabeling_users_preserves_optimum(s in arb_scenario(), rot in 0usize..5) {
        // Rotate the labels: user i takes the data of user (i + rot) % U.
        let n = s.num_users();
        let mut rotated = s.clone();
        for i in 0..n {
            let mut u = s.users[(i + rot) % n].clone();
            u.id = i;
            rotated.users[i] = u;
        }
        let (_, base) = brute_force_optimum(&s).unwrap();
        let (_, relabeled) = brute_force_optimum(&rotated).unwrap();
        prop_assert_eq!(base, relabeled);
    }
}
