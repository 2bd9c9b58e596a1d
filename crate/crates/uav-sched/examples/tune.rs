//! Scratch tuning probe; not part of the deliverable.
use std::time::Instant;

use uav_sched::experiment::{
    Algorithm, ExperimentConfig, ScenarioSource, Sweep, SweepVar, default_distribution,
    episodes_to_convergence, run_experiment,
};
use uav_sched::learning::{LearnParams, extract_greedy_trajectory, train_double_q_in};
use uav_sched::mdp::{EnvConfig, UavEnv};
use uav_sched::scenario::{ScenarioDistribution, generate_scenario};
use uav_sched::schedule::{brute_force_optimum, evaluate_order, objective};

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_default();
    match mode.as_str() {
        "small" => small_optimality(),
        "order" => algorithm_ordering(),
        "episodic" => episodic_alternation(),
        "grid" => grid(),
        "gap" => gap_metrics(),
        "conv" => convergence_trend(),
        _ => eprintln!("modes: small | order | episodic | grid | gap | conv"),
    }
}

fn grid() {
    use uav_sched::learning::{SelectionSource, TableChoice};
    for episodes in [30_000usize, 100_000] {
        let cfg = ExperimentConfig {
            scenario: ScenarioSource::from_distribution(default_distribution(), 1),
            algorithms: vec![Algorithm::DoubleQ, Algorithm::QLearning],
            sweep: None,
            runs: 15,
            learn: LearnParams {
                episodes,
                epsilon_final: Some(0.05),
                selection_source: SelectionSource::SumOfTables,
                table_choice: TableChoice::Random,
                ..LearnParams::default()
            },
            oracle_cap: 9,
        };
        let t0 = Instant::now();
        let result = run_experiment(&cfg).unwrap();
        print!("episodes={episodes}: ");
        for row in &result.summary {
            print!("{}={:.2} ", row.algorithm, row.mean_satisfied);
        }
        println!("[{:?}]", t0.elapsed());
    }
}

/// Double-Q variant: one table per EPISODE ("in turn" read episode-wise),
/// selection from the other table throughout the episode.
fn episodic_alternation() {
    use rand::SeedableRng;
    use uav_sched::learning::{
        QTable, SelectionSource, TableSide, Transition, double_q_update, select_action,
    };
    use uav_sched::schedule::ServiceOrder;

    for episodes in [1000usize, 3000, 10_000] {
        let t0 = Instant::now();
        let mut means = Vec::new();
        let runs = 30;
        let mut total = 0.0;
        for run in 0..runs {
            let s = generate_scenario(&default_distribution(), 1 + run).unwrap();
            let env = UavEnv::new(&s, EnvConfig::default()).unwrap();
            let params = LearnParams {
                episodes,
                epsilon_final: Some(0.05),
                seed: 1 + run,
                ..LearnParams::default()
            };
            let mut qa = QTable::new(env.num_users());
            let mut qb = QTable::new(env.num_users());
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.seed);
            for ep in 0..episodes {
                let eps = params.epsilon_at(ep);
                let side = if ep % 2 == 0 { TableSide::A } else { TableSide::B };
                let mut st = env.reset();
                loop {
                    let legal = env.available_actions(&st);
                    let a = select_action(
                        st.key(), &qa, &qb, &legal, eps,
                        SelectionSource::OtherTable, side, &mut rng,
                    )
                    .unwrap();
                    let (next, r, term) = env.step(&st, a).unwrap();
                    let next_legal = if term { vec![] } else { env.available_actions(&next) };
                    double_q_update(
                        &mut qa, &mut qb,
                        &Transition { state: st.key(), action: a, reward: r, next_state: next.key(), next_legal },
                        side, &params,
                    );
                    st = next;
                    if term { break; }
                }
            }
            let order: ServiceOrder =
                uav_sched::learning::extract_greedy_trajectory(&env, &qa, &qb);
            let got = objective(&evaluate_order(&s, &order).unwrap());
            total += got as f64;
            means.push(got);
        }
        println!(
            "episodic alt, episodes={episodes:5}: double-q={:.3} [{:?}]",
            total / runs as f64,
            t0.elapsed()
        );
    }
}

fn small_optimality() {
    // Criterion-2 regime: U in 3..=6, 10k episodes, eps 0.5 -> 0.05.
    let t0 = Instant::now();
    let mut hits = 0;
    let total = 50;
    for i in 0..total {
        let users: usize = 3 + (i % 4);
        let dist = ScenarioDistribution {
            num_ground: users.div_ceil(2),
            num_aerial: users / 2,
            ..ScenarioDistribution::default()
        };
        let s = generate_scenario(&dist, 1000 + i as u64).unwrap();
        let params = LearnParams {
            episodes: 10_000,
            epsilon_final: Some(0.05),
            seed: 42 + i as u64,
            ..LearnParams::default()
        };
        let env = UavEnv::new(&s, EnvConfig::default()).unwrap();
        let (qa, qb, _) = train_double_q_in(&env, &params).unwrap();
        let greedy = extract_greedy_trajectory(&env, &qa, &qb);
        let got = objective(&evaluate_order(&s, &greedy).unwrap());
        let (_, best) = brute_force_optimum(&s).unwrap();
        assert!(got <= best);
        if got == best {
            hits += 1;
        } else {
            println!("  miss: U={users} seed={} got {got} best {best}", 1000 + i);
        }
    }
    println!("optimal {hits}/{total} in {:?}", t0.elapsed());
}

fn algorithm_ordering() {
    let eps_final: Option<f64> = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok());
    let source = match std::env::args().nth(3).as_deref() {
        Some("sum") => uav_sched::learning::SelectionSource::SumOfTables,
        _ => uav_sched::learning::SelectionSource::OtherTable,
    };
    for episodes in [300usize, 1000, 3000, 10_000] {
        let t0 = Instant::now();
        let cfg = ExperimentConfig {
            scenario: ScenarioSource::from_distribution(default_distribution(), 1),
            algorithms: vec![Algorithm::DoubleQ, Algorithm::QLearning, Algorithm::Random],
            sweep: None,
            runs: 30,
            learn: LearnParams {
                episodes,
                epsilon_final: eps_final,
                selection_source: source,
                ..LearnParams::default()
            },
            oracle_cap: 9,
        };
        let result = run_experiment(&cfg).unwrap();
        print!("episodes={episodes:5}: ");
        for row in &result.summary {
            print!("{}={:.3}±{:.2} ", row.algorithm, row.mean_satisfied, row.std_satisfied);
        }
        // paired diffs
        let get = |alg: Algorithm| -> Vec<f64> {
            let mut v: Vec<(usize, f64)> = result
                .raw
                .iter()
                .filter(|r| r.algorithm == alg)
                .map(|r| (r.run, r.satisfied as f64))
                .collect();
            v.sort_by_key(|(r, _)| *r);
            v.into_iter().map(|(_, s)| s).collect()
        };
        let dq = get(Algorithm::DoubleQ);
        let ql = get(Algorithm::QLearning);
        let wins = dq.iter().zip(&ql).filter(|(a, b)| a > b).count();
        let losses = dq.iter().zip(&ql).filter(|(a, b)| a < b).count();
        println!("dq>ql {wins} dq<ql {losses}  [{:?}]", t0.elapsed());
    }
}

fn gap_metrics() {
    use uav_sched::learning::{co_convergence_gap, train_double_q_counted};
    for (eps_final, label) in [(None, "fixed"), (Some(0.05), "decay")] {
        let dist = ScenarioDistribution {
            num_ground: 5,
            num_aerial: 5,
            ..default_distribution()
        };
        let s = generate_scenario(&dist, 77).unwrap();
        let params = LearnParams {
            episodes: 5000,
            epsilon_final: eps_final,
            table_choice: uav_sched::learning::TableChoice::Random,
            ..LearnParams::default()
        };
        let env = UavEnv::new(&s, EnvConfig::default()).unwrap();
        let t0 = Instant::now();
        let (qa, qb, trace, counts) = train_double_q_counted(&env, &params).unwrap();
        let a_end = trace.records[4999].mean_q_a;
        let a_mid = trace.records[4499].mean_q_a;
        let drift = ((a_end - a_mid) / a_end).abs();
        print!("{label}: driftA={drift:.5}");
        for k in [10u32, 20, 50, 100] {
            match co_convergence_gap(&qa, &qb, &counts, k) {
                Some((gap, mean)) => {
                    let pairs = counts.values().filter(|c| c[0] >= k && c[1] >= k).count();
                    print!("  k={k}: gap={gap:.4} mean={mean:.3} ratio={:.4} pairs={pairs}", gap / mean);
                }
                None => print!("  k={k}: none"),
            }
        }
        println!(" [{:?}]", t0.elapsed());
    }
}

fn convergence_trend() {
    for users in [5usize, 10, 15, 20] {
        let mut ret_convs = Vec::new();
        let mut q_convs = Vec::new();
        for rep in 0..5 {
            let dist = ScenarioDistribution {
                num_ground: users.div_ceil(2),
                num_aerial: users / 2,
                ..default_distribution()
            };
            let s = generate_scenario(&dist, 500 + rep).unwrap();
            let params = LearnParams {
                episodes: 4000,
                seed: 9 + rep,
                epsilon_final: Some(0.05),
                table_choice: uav_sched::learning::TableChoice::Random,
                selection_source: uav_sched::learning::SelectionSource::SumOfTables,
                ..LearnParams::default()
            };
            let (_, _, trace) = uav_sched::learning::train_double_q(&s, &params).unwrap();
            ret_convs.push(episodes_to_convergence(&trace, 100, 0.02).unwrap_or(usize::MAX));
            // Detector on the table-A mean-value curve instead of returns.
            let finalv = trace.records[3999].mean_q_a;
            let qc = trace
                .records
                .iter()
                .position(|r| (r.mean_q_a - finalv).abs() <= 0.02 * finalv.abs())
                .unwrap_or(usize::MAX);
            q_convs.push(qc);
        }
        let mean =
            |v: &Vec<usize>| v.iter().copied().sum::<usize>() as f64 / v.len() as f64;
        println!(
            "U={users:2}: return-based {ret_convs:?} mean {:.0} | q-curve {q_convs:?} mean {:.0}",
            mean(&ret_convs),
            mean(&q_convs)
        );
    }
}
