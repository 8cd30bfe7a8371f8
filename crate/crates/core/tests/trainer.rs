use mcmi_core::backbone::translate;
use mcmi_core::mi::{infonce_bound, infonce_lower, BoundKind, ScoreMatrix};
use mcmi_core::synth::{generate_dataset, ShapeDataset, ShapePairSpec};
use mcmi_core::trainer::{load_checkpoint, load_checkpoint_for, save_checkpoint, TrainConfig, TrainState};
use mcmi_core::{BackboneModule, Direction, Geometry, McmiError};
use mcmi_tensor::ParamSet;

fn small_config(size: usize) -> TrainConfig {
    let geometry = Geometry::new(3, size, size);
    let mut c = TrainConfig::default();
    c.backbone.geometry = geometry;
    c.backbone.ngf = 4;
    c.backbone.ndf = 4;
    c.backbone.residual_blocks = 1;
    c.critic.geometry = geometry;
    c.critic.widths = [8, 8, 8, 8];
    c.mi_batch_size = 4;
    c.anchor_pool_size = 16;
    c.seed = 7;
    c
}

fn data(size: usize, n: usize) -> ShapeDataset {
    let spec = ShapePairSpec {
        size,
        seed: 3,
        ..ShapePairSpec::default()
    };
    generate_dataset(&spec, n).unwrap()
}

fn ready_state(config: TrainConfig, d: &ShapeDataset) -> TrainState {
    let mut st = TrainState::new(config).unwrap();
    let idx: Vec<usize> = (0..8).collect();
    st.seed_pools(&d.x_batch(&idx).unwrap(), &d.unpaired_y_batch(&idx).unwrap())
        .unwrap();
    st
}

fn step(st: &mut TrainState, d: &ShapeDataset) -> mcmi_core::trainer::StepOutput {
    let (ix, iy) = st.sample_indices(d.len(), d.len());
    st.train_step(&d.x_batch(&ix).unwrap(), &d.unpaired_y_batch(&iy).unwrap())
        .unwrap()
}

fn snapshot(p: &ParamSet<f32>) -> Vec<Vec<u32>> {
    p.iter()
        .map(|p| p.value.data().iter().map(|v| v.to_bits()).collect())
        .collect()
}

struct Snap {
    gen: Vec<Vec<u32>>,
    disc: Vec<Vec<u32>>,
    critic: Vec<Vec<u32>>,
}

fn snap(st: &TrainState) -> Snap {
    Snap {
        gen: snapshot(st.backbone.generator_params()),
        disc: snapshot(st.backbone.discriminator_params()),
        critic: snapshot(st.critic.params()),
    }
}

#[test]
fn translation_update_leaves_critic_untouched() {
    let d = data(16, 16);
    let mut config = small_config(16);
    config.lr_critic = 0.0;
    let mut st = ready_state(config, &d);
    let before = snap(&st);
    step(&mut st, &d);
    let after = snap(&st);
    assert_eq!(before.critic, after.critic);
    assert_ne!(before.gen, after.gen);
    assert_ne!(before.disc, after.disc);
}

#[test]
fn critic_update_leaves_backbone_untouched() {
    let d = data(16, 16);
    let mut config = small_config(16);
    config.lr_i2i = 0.0;
    let mut st = ready_state(config, &d);
    let before = snap(&st);
    step(&mut st, &d);
    let after = snap(&st);
    assert_eq!(before.gen, after.gen);
    assert_eq!(before.disc, after.disc);
    assert_ne!(before.critic, after.critic);

    let before = snap(&st);
    let idx = [0];
    st.critic_only_step(&d.x_batch(&idx).unwrap(), &d.unpaired_y_batch(&idx).unwrap())
        .unwrap();
    let after = snap(&st);
    assert_eq!(before.gen, after.gen);
    assert_eq!(before.disc, after.disc);
    assert_ne!(before.critic, after.critic);
}

#[test]
fn zero_learning_rates_freeze_everything() {
    let d = data(16, 16);
    let mut config = small_config(16);
    config.lr_i2i = 0.0;
    config.lr_critic = 0.0;
    let mut st = ready_state(config, &d);
    let before = snap(&st);
    for _ in 0..2 {
        step(&mut st, &d);
    }
    let after = snap(&st);
    assert_eq!(before.gen, after.gen);
    assert_eq!(before.disc, after.disc);
    assert_eq!(before.critic, after.critic);
}

#[test]
fn fixed_seed_gives_identical_reports() {
    let d = data(16, 16);
    let run = || {
        let mut st = ready_state(small_config(16), &d);
        (0..4).map(|_| step(&mut st, &d)).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn reports_compose_into_total() {
    let d = data(16, 16);
    let mut st = ready_state(small_config(16), &d);
    let mcmi = st.config.mcmi.clone();
    for _ in 0..3 {
        for r in step(&mut st, &d).reports {
            let expect = r.l_orig + r.l_adv + mcmi.alpha * r.l_mi - mcmi.beta * r.i_lower;
            assert!((r.total - expect).abs() <= 1e-6);
        }
    }
}

#[test]
fn batch_size_mismatch_is_rejected() {
    let d = data(16, 16);
    let mut st = ready_state(small_config(16), &d);
    let two = d.x_batch(&[0, 1]).unwrap();
    let one = d.unpaired_y_batch(&[0]).unwrap();
    assert!(st.train_step(&two, &one).is_err());
}

#[test]
fn empty_pool_asks_for_warm_up() {
    let d = data(16, 16);
    let mut st = TrainState::new(small_config(16)).unwrap();
    let idx = [0];
    let err = st
        .train_step(&d.x_batch(&idx).unwrap(), &d.unpaired_y_batch(&idx).unwrap())
        .unwrap_err();
    assert!(matches!(err, McmiError::InsufficientAnchors { .. }));
    assert!(err.to_string().contains("warm up"));
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let d = data(16, 16);
    let mut st = ready_state(small_config(16), &d);
    for _ in 0..3 {
        step(&mut st, &d);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.safetensors");
    save_checkpoint(&st, &path).unwrap();
    let mut loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.step, 3);

    let probe = d.x_batch(&[0, 1, 2]).unwrap();
    let bits = |s: &TrainState| -> Vec<u32> {
        let y = translate(&s.backbone, &probe, Direction::XToY, None).unwrap();
        y.tensor().data().iter().map(|v| v.to_bits()).collect()
    };
    assert_eq!(bits(&st), bits(&loaded));
    assert_eq!(st.critic.encode(&probe).unwrap(), loaded.critic.encode(&probe).unwrap());

    // Optimizer moments, pools and RNG streams come back too.
    assert_eq!(step(&mut st, &d), step(&mut loaded, &d));
}

#[test]
fn checkpoint_with_other_geometry_is_rejected() {
    let d = data(16, 16);
    let st = ready_state(small_config(16), &d);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.safetensors");
    save_checkpoint(&st, &path).unwrap();
    assert!(load_checkpoint_for(&path, &small_config(16)).is_ok());
    let err = load_checkpoint_for(&path, &small_config(32)).unwrap_err();
    assert!(matches!(err, McmiError::Checkpoint(_)));
}

#[test]
fn corrupt_or_foreign_checkpoints_are_rejected() {
    let d = data(16, 16);
    let st = ready_state(small_config(16), &d);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.safetensors");
    save_checkpoint(&st, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    let bad = dir.path().join("truncated.safetensors");
    std::fs::write(&bad, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(load_checkpoint(&bad), Err(McmiError::Checkpoint(_))));

    let text = String::from_utf8_lossy(&bytes).into_owned();
    let needle = "\\\"format_version\\\":1";
    assert!(text.contains(needle), "manifest layout changed");
    let mut future = bytes.clone();
    let at = text.find(needle).unwrap() + needle.len() - 1;
    future[at] = b'9';
    let newer = dir.path().join("newer.safetensors");
    std::fs::write(&newer, &future).unwrap();
    let err = load_checkpoint(&newer).unwrap_err();
    assert!(err.to_string().contains("version 9"), "{err}");
}

#[test]
fn anchor_diagonals_only_enter_through_denominators() {
    // One live pair, two anchor rows.
    let s = [[1.5, 0.2, -0.3], [0.4, 2.0, 0.1], [-0.6, 0.7, 1.1]];
    let m = ScoreMatrix::from_fn(3, |j, i| s[j][i]).unwrap();
    let denom = (s[0][0].exp() + s[1][0].exp() + s[2][0].exp()) / 3.0;
    let by_hand = s[0][0] - denom.ln();
    let masked = infonce_bound(&m, BoundKind::Lower, 1).unwrap();
    assert!((masked - by_hand).abs() < 1e-12);

    // Anchor diagonals do not matter; anchor negatives in the live column do.
    let mut t = s;
    t[1][1] = -5.0;
    t[2][2] = 9.0;
    let m2 = ScoreMatrix::from_fn(3, |j, i| t[j][i]).unwrap();
    assert_eq!(infonce_bound(&m2, BoundKind::Lower, 1).unwrap(), masked);
    t[1][0] = 3.0;
    let m3 = ScoreMatrix::from_fn(3, |j, i| t[j][i]).unwrap();
    assert!(infonce_bound(&m3, BoundKind::Lower, 1).unwrap() < masked);

    // With every row live the anchor diagonals become positives.
    let full: f64 = (0..3)
        .map(|i| s[i][i] - ((0..3).map(|j| s[j][i].exp()).sum::<f64>() / 3.0).ln())
        .sum::<f64>()
        / 3.0;
    assert!((infonce_lower(&m).unwrap() - full).abs() < 1e-12);
}

#[test]
fn critic_bound_rises_during_training() {
    let d = data(32, 64);
    let mut config = TrainConfig::default();
    config.critic.widths = [16, 32, 32, 32];
    config.seed = 11;
    let mut st = ready_state(config, &d);
    let held: Vec<usize> = (48..64).collect();
    let hx = d.x_batch(&held).unwrap();
    let hy = d.unpaired_y_batch(&held).unwrap();
    let before = st.heldout_lower(&hx, &hy).unwrap();
    let train: Vec<usize> = (0..48).collect();
    for _ in 0..200 {
        let (ix, iy) = st.sample_indices(train.len(), train.len());
        st.train_step(&d.x_batch(&ix).unwrap(), &d.unpaired_y_batch(&iy).unwrap())
            .unwrap();
    }
    let after = st.heldout_lower(&hx, &hy).unwrap();
    assert!(after > before, "held-out lower bound {before} -> {after}");
}

#[test]
fn critic_only_window_is_nondecreasing() {
    let d = data(16, 32);
    let mut st = ready_state(small_config(16), &d);
    let mut lowers = Vec::new();
    for i in 0..100 {
        let idx = [i % d.len()];
        lowers.push(
            st.critic_only_step(&d.x_batch(&idx).unwrap(), &d.unpaired_y_batch(&idx).unwrap())
                .unwrap(),
        );
    }
    let means: Vec<f64> = lowers.chunks(25).map(|c| c.iter().sum::<f64>() / 25.0).collect();
    for w in means.windows(2) {
        assert!(w[1] >= w[0] - 0.05, "window means {means:?}");
    }
}
