//! Acceptance suite. Every criterion prints one PASS/FAIL line before
//! asserting. The full-scale learning comparison is `#[ignore]`d because it
//! trains 20 agents for 20,000 episodes each; run it with
//! `cargo test --release -p sortline --test acceptance -- --ignored --nocapture`.

mod common;

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sortline::agent::Algorithm;
use sortline::dqn::{dqn_train, q_loss, DqnConfig};
use sortline::env::{
    block_width, encoding_order, ChainEnv, RewardVariant, SortingEnv, OBSERVATION_LEN,
};
use sortline::factory::{build_factory, EventKind, FactoryConfig, ACTION_COUNT};
use sortline::harness::protocol::{evaluate_with, ProtocolConfig, FINAL_EVAL_STREAM};
use sortline::harness::run::read_csv;
use sortline::harness::{
    compare, run_training, seed_dir, CellKey, EvalRow, RunConfig, SMOOTHING_WINDOW,
};
use sortline::neural::{grad_check, Network};
use sortline::ppo::{clipped_term, composite_loss, ppo_train, PolicyBatch, PpoConfig};

fn report(id: &str, name: &str, pass: bool, detail: String) {
    println!(
        "acceptance {id:<3} {name:<34} {}  {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sortline-acc-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

#[test]
fn c1_encoding_exactness() {
    let topo = Arc::new(build_factory(&FactoryConfig::default()).unwrap());
    let c = topo.census();
    let census = c.resource * 2 + c.storage + c.regular * 6 + c.regular_short * 4 + c.hidden * 5;
    let widths: usize = encoding_order(&topo)
        .into_iter()
        .map(|p| block_width(topo.net.places[p].class))
        .sum();
    let layout_ok = (c.resource, c.storage, c.regular, c.regular_short, c.hidden) == (2, 4, 5, 2, 11)
        && census == 101
        && widths == 101;

    // Reachable markings: random play over many seeded episodes.
    let mut env = SortingEnv::new(topo.clone(), RewardVariant::R1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut visited = 0usize;
    let mut lengths_ok = true;
    for seed in 0..300 {
        let obs = env.reset(seed, 3, None).unwrap();
        lengths_ok &= obs.0.len() == OBSERVATION_LEN;
        loop {
            let r = env.step(rng.gen_range(0..ACTION_COUNT)).unwrap();
            visited += 1;
            lengths_ok &= r.observation.0.len() == OBSERVATION_LEN && r.observation.features().len() == 101;
            if r.terminated || r.truncated {
                break;
            }
        }
    }
    let pass = layout_ok && lengths_ok && ACTION_COUNT == 12 && OBSERVATION_LEN == 101;
    report(
        "1",
        "encoding exactness",
        pass,
        format!("census {census}, {visited} reachable markings encoded, {ACTION_COUNT} actions"),
    );
    assert!(pass);
}

#[test]
fn c2_reward_exactness() {
    let events = [
        EventKind::Collision,
        EventKind::Missort,
        EventKind::Invalid,
        EventKind::TransitionFired,
        EventKind::GoalReached,
    ];
    let expect = [
        (RewardVariant::R1, [-1.0, -0.5, -0.01, 0.0, 1.0]),
        (RewardVariant::R2, [-1.0, -0.5, -0.01, -0.001, 1.0]),
    ];
    let mut pass = true;
    for (v, row) in expect {
        let got: Vec<f64> = events.iter().map(|&e| v.reward(e)).collect();
        pass &= got == row;
    }
    report("2", "reward table", pass, "R1 and R2 rows exact".into());
    assert!(pass);
}

#[test]
fn c3_petri_semantics_oracle() {
    let mut failures = Vec::new();
    let mut collisions = 0;
    let nets = 1000;
    for seed in 0..nets {
        let (net, m) = common::random_net(seed);
        for ops_seed in 0..3 {
            match common::check_against_oracle(&net, &m, seed * 31 + ops_seed, 60) {
                Ok(n) if n < 60 => collisions += 1,
                Ok(_) => {}
                Err(e) => failures.push(format!("net {seed}: {e}")),
            }
        }
    }
    let pass = failures.is_empty();
    report(
        "3",
        "PN semantics vs matrix oracle",
        pass,
        format!("{nets} nets x 3 runs, {collisions} runs ended in a predicted collision"),
    );
    assert!(pass, "{:?}", &failures[..failures.len().min(5)]);
}

/// True when no hidden pre-activation lies within 1e-3 of the ReLU kink,
/// where central differences straddle a non-differentiable point.
fn clear_of_kinks(net: &Network, x: &Array2<f64>) -> bool {
    let mut h = x.clone();
    let layers = net.layers();
    for layer in &layers[..layers.len() - 1] {
        let z = h.dot(&layer.weights) + &layer.bias;
        if z.iter().any(|v| v.abs() < 1e-3) {
            return false;
        }
        h = z.mapv(|v| v.max(0.0));
    }
    true
}

#[test]
fn c4_gradient_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_q: f64 = 0.0;
    let mut worst_ppo: f64 = 0.0;
    let mut skipped = 0;
    for _ in 0..10 {
        let (qnet, x) = loop {
            let x = Array2::from_shape_fn((4, OBSERVATION_LEN), |_| f64::from(rng.gen_range(0..2u8)));
            let net = Network::new(&[OBSERVATION_LEN, 200, 100, ACTION_COUNT], &mut rng);
            if clear_of_kinks(&net, &x) {
                break (net, x);
            }
            skipped += 1;
        };
        let actions: Vec<usize> = (0..4).map(|_| rng.gen_range(0..ACTION_COUNT)).collect();
        let targets: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        worst_q = worst_q.max(grad_check(&qnet, x.view(), |q| q_loss(q, &actions, &targets)).unwrap());

        let (pnet, old) = loop {
            let net = Network::new(&[OBSERVATION_LEN, 200, 100, ACTION_COUNT + 1], &mut rng);
            let old: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.5..-1.5)).collect();
            let out = net.predict_batch(x.view()).unwrap();
            // The clip switches at r = 1 ± 0.2; keep every ratio away from both.
            let clear_of_clip = out.rows().into_iter().enumerate().all(|(b, row)| {
                let logits = &row.as_slice().unwrap()[..ACTION_COUNT];
                let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                let r = (logits[actions[b]] - lse - old[b]).exp();
                (r - 0.8).abs() > 1e-3 && (r - 1.2).abs() > 1e-3
            });
            if clear_of_kinks(&net, &x) && clear_of_clip {
                break (net, old);
            }
            skipped += 1;
        };
        let adv: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ret: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let batch = PolicyBatch {
            actions: &actions,
            old_logp: &old,
            advantages: &adv,
            clip_eps: 0.2,
            entropy_coef: 0.01,
        };
        worst_ppo = worst_ppo.max(grad_check(&pnet, x.view(), |o| composite_loss(o, &batch, &ret, 0.5)).unwrap());
    }
    let pass = worst_q < 1e-4 && worst_ppo < 1e-4;
    report(
        "4",
        "backprop vs finite differences",
        pass,
        format!("max rel error Q-loss {worst_q:.2e}, PPO loss {worst_ppo:.2e} ({skipped} draws on a kink resampled)"),
    );
    assert!(pass);
}

#[test]
fn c5_clipped_objective_properties() {
    let eps = 0.2;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pessimism = true;
    for _ in 0..10_000 {
        let r: f64 = rng.gen_range(0.0..3.0);
        let a: f64 = rng.gen_range(-5.0..5.0);
        pessimism &= clipped_term(r, a, eps) <= r * a;
    }
    let h = 1e-6;
    let mut max_slope: f64 = 0.0;
    for _ in 0..10_000 {
        let (r, a) = if rng.gen_bool(0.5) {
            (rng.gen_range(1.0 + eps + 1e-3..3.0), rng.gen_range(0.01..5.0))
        } else {
            (rng.gen_range(0.0..1.0 - eps - 1e-3), rng.gen_range(-5.0..-0.01))
        };
        let slope = (clipped_term(r + h, a, eps) - clipped_term(r - h, a, eps)) / (2.0 * h);
        max_slope = max_slope.max(slope.abs());
    }
    let pass = pessimism && max_slope < 1e-8;
    report(
        "5",
        "clipped objective properties",
        pass,
        format!("pessimism on 1e4 samples: {pessimism}, max flat-region slope {max_slope:.1e}"),
    );
    assert!(pass);
}

#[test]
fn c6_toy_mdp_oracle() {
    let gamma = 0.9;
    let mut env = ChainEnv::new(5, 0.75, 20);
    let q_star = common::chain_q_star(&env, gamma);
    let optimal = common::chain_optimal_policy(&q_star);

    let mut eval = env.clone();
    let dqn = DqnConfig {
        gamma,
        lr: 1e-2,
        buffer_capacity: 5_000,
        batch_size: 32,
        warmup: 200,
        sync_interval: 50,
        hidden: vec![],
        ..DqnConfig::default()
    };
    let protocol = ProtocolConfig {
        episodes: 600,
        max_steps: 20,
        seed: 1,
        eval_interval: 100,
        eval_episodes: 5,
    };
    let out = dqn_train(&mut env, &mut eval, &protocol, &dqn);
    let mut q_err: f64 = 0.0;
    let mut dqn_policy = Vec::new();
    for s in 0..env.len() {
        let q = out.final_snapshot.network.predict(&env.one_hot(s)).unwrap();
        for a in 0..2 {
            q_err = q_err.max((q[a] - q_star[s][a]).abs());
        }
        dqn_policy.push(out.final_snapshot.greedy_action(&env.one_hot(s)));
    }

    let ppo = PpoConfig {
        gamma,
        horizon: 256,
        minibatch: 32,
        lr: 3e-3,
        hidden: vec![16],
        ..PpoConfig::default()
    };
    let protocol = ProtocolConfig {
        episodes: 1500,
        seed: 2,
        ..protocol
    };
    let out = ppo_train(&mut env, &mut eval, &protocol, &ppo);
    let ppo_policy: Vec<usize> = (0..env.len())
        .map(|s| out.final_snapshot.greedy_action(&env.one_hot(s)))
        .collect();

    let pass = dqn_policy == optimal && ppo_policy == optimal && q_err < 0.05;
    report(
        "6",
        "toy chain vs value iteration",
        pass,
        format!("optimal {optimal:?}, dqn {dqn_policy:?}, ppo {ppo_policy:?}, max |Q-Q*| {q_err:.4}"),
    );
    assert!(pass);
}

#[test]
fn c8_determinism() {
    let mut identical = true;
    for algo in [Algorithm::Dqn, Algorithm::Ppo] {
        let mut c = RunConfig {
            algo,
            seeds: vec![3],
            episodes: 150,
            final_eval_episodes: 10,
            ..RunConfig::default()
        };
        c.dqn.warmup = 200;
        let (a, b) = (tmp(&format!("det-a-{algo}")), tmp(&format!("det-b-{algo}")));
        run_training(&c, &a, 1).unwrap();
        run_training(&c, &b, 1).unwrap();
        for f in ["episodes.csv", "eval.csv"] {
            let fa = fs::read(seed_dir(&a, algo, c.reward, 3).join(f)).unwrap();
            let fb = fs::read(seed_dir(&b, algo, c.reward, 3).join(f)).unwrap();
            identical &= fa == fb;
        }
        let _ = fs::remove_dir_all(&a);
        let _ = fs::remove_dir_all(&b);
    }
    report("8", "determinism", identical, "dqn and ppo CSVs byte-identical across reruns".into());
    assert!(identical);
}

#[test]
fn c9_protocol_fidelity() {
    let defaults = RunConfig::default();
    let out = tmp("protocol");
    let mut c = RunConfig {
        seeds: vec![1, 2, 3, 4, 5],
        episodes: 300,
        final_eval_episodes: 5,
        ..RunConfig::default()
    };
    c.ppo.horizon = 512;
    run_training(&c, &out, 1).unwrap();
    let mut rows_ok = true;
    for &s in &c.seeds {
        let evals: Vec<EvalRow> = read_csv(&seed_dir(&out, c.algo, c.reward, s).join("eval.csv")).unwrap();
        rows_ok &= evals.iter().map(|e| e.episode).collect::<Vec<_>>() == vec![100, 200, 300];
        // Five evaluation episodes: success is a multiple of 20%.
        rows_ok &= evals.iter().all(|e| (e.eval_success / 20.0).fract() == 0.0);
    }
    let cell = [CellKey {
        algo: c.algo,
        reward: c.reward,
    }];
    let rep = compare(&out, &cell, Some(&c.seeds), SMOOTHING_WINDOW, &out.join("report")).unwrap();
    let five = rep.cells[0].seeds == vec![1, 2, 3, 4, 5] && !rep.cells[0].single_seed;
    let pass = rows_ok
        && five
        && rep.smoothing_window == 200
        && defaults.eval_interval == 100
        && defaults.eval_episodes == 5
        && defaults.seeds == vec![1, 2, 3, 4, 5];
    report(
        "9",
        "evaluation protocol",
        pass,
        format!("eval every 100 x 5 episodes: {rows_ok}, window {}, seeds {:?}", rep.smoothing_window, rep.cells[0].seeds),
    );
    let _ = fs::remove_dir_all(&out);
    assert!(pass);
}

/// Success rate of a uniformly random action policy.
fn random_baseline(episodes: usize) -> f64 {
    let topo = Arc::new(build_factory(&FactoryConfig::default()).unwrap());
    let mut env = SortingEnv::new(topo, RewardVariant::R1);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    evaluate_with(&mut env, episodes, 7, FINAL_EVAL_STREAM, 100, |_| rng.gen_range(0..ACTION_COUNT)).success_pct
}

#[test]
#[ignore = "full-scale training: 4 cells x 5 seeds x 20,000 episodes"]
fn c7_scaled_reproduction() {
    let out = std::env::var_os("SORTLINE_ACCEPTANCE_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance-runs"));
    let parallel = std::env::var("SORTLINE_PARALLEL")
        .ok()
        .and_then(|p| p.parse().ok())
        .unwrap_or(1);
    let seeds = vec![1, 2, 3, 4, 5];
    for key in CellKey::all() {
        let c = RunConfig {
            algo: key.algo,
            reward: key.reward,
            seeds: seeds.clone(),
            ..RunConfig::default()
        };
        assert_eq!((c.episodes, c.n_products), (20_000, 3));
        run_training(&c, &out, parallel).unwrap();
    }
    let rep = compare(&out, &CellKey::all(), Some(&seeds), SMOOTHING_WINDOW, &out.join("report")).unwrap();
    let baseline = random_baseline(1000);
    let s = |a, r| rep.cell(a, r).unwrap().success_mean;
    let rewards = RewardVariant::ALL;
    let a_ok = rewards.iter().all(|&r| s(Algorithm::Ppo, r) >= 80.0);
    let b_ok = rewards.iter().all(|&r| s(Algorithm::Ppo, r) > s(Algorithm::Dqn, r));
    // A zero baseline makes "10x" mean any success at all.
    let floor = 10.0 * baseline;
    let c_ok = CellKey::all().iter().all(|k| s(k.algo, k.reward) > floor);
    let cells: Vec<String> = rep
        .cells
        .iter()
        .map(|c| format!("{} {:.1}±{:.1}", c.cell, c.success_mean, c.success_std))
        .collect();
    report("7a", "PPO success >= 80% (R1, R2)", a_ok, cells.join(", "));
    report("7b", "PPO beats DQN per reward", b_ok, String::new());
    report("7c", "all cells > 10x random baseline", c_ok, format!("baseline {baseline:.1}%"));
    assert!(a_ok && b_ok && c_ok);
}
