use ganjoint::data::{
    load_dataset, read_dataset, rollout_behavior, save_dataset, write_dataset, OfflineDataset, PointNavEnv,
    ScriptedMixture, Transition,
};
use ganjoint::ganjoint::{
    load_checkpoint, make_matching_samples, save_checkpoint, train, Agent, Batch, Checkpoint, MatchScheme, TrainConfig,
    Variant,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_dataset(n: usize, seed: u64) -> OfflineDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rollout_behavior(&mut PointNavEnv::new(), &ScriptedMixture::default(), n, &mut rng)
}

fn bytes(t: &ganjoint::autodiff::Tensor) -> Vec<u8> {
    t.values().iter().flat_map(|v| v.to_le_bytes()).collect()
}

#[test]
fn conditional_matching_reuses_batch_states_exactly() {
    let ds = small_dataset(500, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for smooth in [false, true] {
        let cfg = TrainConfig {
            match_scheme: MatchScheme::Conditional,
            sigma: 0.0,
            smooth_matching: smooth,
            hidden: vec![8, 8],
            ..TrainConfig::toy()
        };
        let agent = Agent::new(2, 2, 1.0, &cfg, &mut rng).unwrap();
        let batch = Batch::sample(&ds, 64, &mut rng);
        let m = make_matching_samples(&batch, &ds, &agent.actor, &cfg, &mut rng).unwrap();
        assert_eq!(bytes(&m.x_states), bytes(&m.y_states));
        assert_eq!(m.x_indices, batch.indices);
    }
}

#[test]
fn joint_matching_draws_fresh_states() {
    let ds = small_dataset(500, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = TrainConfig {
        smooth_matching: false,
        hidden: vec![8, 8],
        ..TrainConfig::toy()
    };
    let agent = Agent::new(2, 2, 1.0, &cfg, &mut rng).unwrap();
    let batch = Batch::sample(&ds, 64, &mut rng);
    let m = make_matching_samples(&batch, &ds, &agent.actor, &cfg, &mut rng).unwrap();
    assert_ne!(m.x_indices, batch.indices);
    assert_eq!(bytes(&m.x_states), bytes(&ds.states_at(&m.x_indices)));
}

#[test]
fn smoothing_ablations_are_single_toggles() {
    let base = TrainConfig::toy();
    for full in [Variant::GanJoint, Variant::GanJointAlpha] {
        let f = base.with_variant(full);
        let mut no_match = f.clone();
        no_match.smooth_matching = false;
        assert_eq!(f.diff(&no_match), vec!["smooth_matching"]);
        let mut no_bellman = f.clone();
        no_bellman.smooth_bellman = false;
        assert_eq!(f.diff(&no_bellman), vec!["smooth_bellman"]);
    }
    let f = base.with_variant(Variant::GanJoint);
    assert_eq!(
        f.diff(&base.with_variant(Variant::GanJointNoMatchSmoothing)),
        vec!["smooth_matching"]
    );
    assert_eq!(
        f.diff(&base.with_variant(Variant::GanJointNoBellmanSmoothing)),
        vec!["smooth_bellman"]
    );
    assert_eq!(
        f.diff(&base.with_variant(Variant::GanJointBasic)),
        vec!["smooth_bellman", "smooth_matching"]
    );
}

#[test]
fn dataset_file_round_trip() {
    let ds = small_dataset(300, 4);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.bin");
    save_dataset(&ds, &p).unwrap();
    assert_eq!(load_dataset(&p).unwrap(), ds);
}

#[test]
fn checkpoint_round_trip_after_training() {
    let ds = small_dataset(400, 5);
    let cfg = TrainConfig {
        epochs: 2,
        iters_per_epoch: 3,
        batch_size: 32,
        n_warm: 1,
        hidden: vec![8, 8],
        ..TrainConfig::toy()
    };
    let out = train(&ds, &cfg, None).unwrap();
    assert_eq!(out.metrics.len(), 2);
    assert!(out.metrics.iter().all(|m| m.eval_return_mean.is_nan()));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ck.bin");
    let ck = Checkpoint::from(&out.agent);
    save_checkpoint(&ck, &p).unwrap();
    assert_eq!(load_checkpoint(&p).unwrap(), ck);
}

#[test]
fn training_is_deterministic_per_seed() {
    let ds = small_dataset(400, 6);
    let cfg = TrainConfig {
        epochs: 1,
        iters_per_epoch: 4,
        batch_size: 32,
        n_warm: 0,
        hidden: vec![8, 8],
        ..TrainConfig::toy()
    };
    let a = train(&ds, &cfg, None).unwrap();
    let b = train(&ds, &cfg, None).unwrap();
    assert_eq!(Checkpoint::from(&a.agent), Checkpoint::from(&b.agent));
}

fn transition() -> impl Strategy<Value = Transition> {
    (
        prop::collection::vec(-1.0f64..1.0, 2),
        prop::collection::vec(-0.1f64..0.1, 2),
        -1.0f64..1.0,
        prop::collection::vec(-1.0f64..1.0, 2),
        any::<bool>(),
    )
        .prop_map(|(s, a, r, s_next, done)| Transition {
            s: s.into_iter().map(|v| v as f32 as f64).collect(),
            a: a.into_iter().map(|v| v as f32 as f64).collect(),
            r: r as f32 as f64,
            s_next: s_next.into_iter().map(|v| v as f32 as f64).collect(),
            done,
        })
}

proptest! {
    #[test]
    fn binary_format_round_trips(rows in prop::collection::vec(transition(), 1..40)) {
        let mut ds = OfflineDataset::new(2, 2, 0.1);
        for t in &rows {
            ds.push(t).unwrap();
        }
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(&buf).unwrap();
        prop_assert_eq!(&back, &ds);
        for (i, t) in rows.iter().enumerate() {
            prop_assert_eq!(&back.get(i), t);
        }
    }
}
