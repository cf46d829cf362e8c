use authds::bench::{run_bench, run_matrix, BenchConfig, Mode, Structure};
use authds::games::{
    collision_probability, run_mac_collision, run_queue_data_game, run_queue_index_game, run_stack_game, GameConfig,
    GuessData, RandomIndex, RandomSubstitution, ReplayIndex, ReplayStack, StackAdversary,
};
use authds::{AuthStack, MacTag};
use rand_chacha::ChaCha8Rng;

#[test]
fn stack_replay_tracks_the_collision_curve() {
    // A colliding single-element state can be rebuilt in the last round,
    // so any collision among the q observations is usable.
    for q in [4u64, 16] {
        let cfg = GameConfig::new(6, q, 4000, 900 + q);
        let p = collision_probability(6, q);
        let r = run_stack_game(&cfg, &ReplayStack::default()).unwrap();
        assert!((r.empirical_rate - p).abs() <= 3.0 * r.ci95, "q={q}: {} vs {p}", r.empirical_rate);
    }
}

#[test]
fn queue_index_replay_wins_but_stays_under_the_curve() {
    // Indices only grow, so only a collision with the final state helps.
    let cfg = GameConfig::new(4, 16, 4000, 31);
    let r = run_queue_index_game(&cfg, &ReplayIndex::default()).unwrap();
    assert!(r.wins > 0);
    assert!(r.within_bound());
    assert!(r.empirical_rate < r.predicted_rate);
}

#[test]
fn random_substitution_is_a_pure_guess() {
    let r = run_stack_game(&GameConfig::new(4, 3, 5000, 8), &RandomSubstitution).unwrap();
    let p = 1.0 / 16.0;
    assert!((r.empirical_rate - p).abs() <= 3.0 * r.ci95, "{}", r.empirical_rate);
}

#[test]
fn data_game_guess_rate() {
    let r = run_queue_data_game(&GameConfig::new(3, 4, 5000, 12), &GuessData).unwrap();
    assert!((r.empirical_rate - 0.125).abs() <= 3.0 * r.ci95);
}

#[test]
fn baseline_against_itself_is_near_one() {
    let cfg = BenchConfig::new(Structure::Queue, "cmac128", Mode::Baseline, 3).with_size(500, 300);
    let r = run_bench(&cfg).unwrap();
    assert_eq!(r.mac_invocations, 0);
    assert!((0.8..=1.25).contains(&r.ratio), "ratio {}", r.ratio);
}

#[test]
fn authenticated_stack_is_much_slower() {
    let cfg = BenchConfig::new(Structure::Stack, "cmac128", Mode::Auth, 3).with_size(200, 20);
    let r = run_bench(&cfg).unwrap();
    assert!(r.ratio > 10.0, "ratio {}", r.ratio);
}

#[test]
fn matrix_geometric_mean_is_recomputable() {
    let cfgs: Vec<_> = ["cmac128", "pac32", "trunc:16"]
        .iter()
        .map(|b| BenchConfig::new(Structure::Stack, b, Mode::Auth, 4).with_size(40, 5))
        .collect();
    let m = run_matrix(&cfgs).unwrap();
    let back: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
    let ratios: Vec<f64> = back["scenarios"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["ratio"].as_f64().unwrap())
        .collect();
    let gm = (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp();
    let stored = back["geometric_mean"].as_f64().unwrap();
    assert!((gm / stored - 1.0).abs() < 1e-12);

    // Same workload and seed give the same op and MAC counts.
    let again = run_matrix(&cfgs).unwrap();
    for (a, b) in m.scenarios.iter().zip(&again.scenarios) {
        assert_eq!((a.op_count, a.mac_invocations), (b.op_count, b.mac_invocations));
    }
}

/// Overwrites the top with the value already there.
#[derive(Clone)]
struct Rewrite;

impl StackAdversary for Rewrite {
    fn name(&self) -> &'static str {
        "rewrite"
    }

    fn choose(&mut self, round: u64, _: u64, _: &mut ChaCha8Rng) -> Vec<[u8; 8]> {
        vec![round.to_le_bytes()]
    }

    fn receive(&mut self, _: MacTag) {}

    fn attack(&mut self, stack: &mut AuthStack, top: &[u8], _: &mut ChaCha8Rng) -> bool {
        let e = stack.entry_layouts().unwrap().pop().unwrap();
        stack.region_mut().tamper(e.data.start, top).unwrap();
        true
    }
}

#[test]
fn returning_the_original_value_never_wins() {
    let r = run_stack_game(&GameConfig::new(4, 8, 2000, 1), &Rewrite).unwrap();
    assert_eq!(r.wins, 0);
}

#[test]
fn two_sixteen_bit_tags_rarely_collide() {
    let r = run_mac_collision(&GameConfig::new(16, 2, 100_000, 2)).unwrap();
    assert!(r.empirical_rate < 10.0 * 2f64.powi(-16), "{}", r.empirical_rate);
}

#[test]
fn data_game_guess_at_eight_bits() {
    let r = run_queue_data_game(&GameConfig::new(8, 2, 100_000, 3), &GuessData).unwrap();
    let p = 2f64.powi(-8);
    assert!((r.empirical_rate - p).abs() <= 3.0 * r.ci95, "{}", r.empirical_rate);
}

#[test]
fn index_game_without_observations() {
    let r = run_queue_index_game(&GameConfig::new(8, 0, 100_000, 4), &RandomIndex).unwrap();
    assert!(r.empirical_rate <= 10.0 * 2f64.powi(-8));
}
