use super::*;
use crate::data::toy::render_tensor;
use crate::data::{Domain, Split};

fn tiny_config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 3,
        resolution: 32,
        base_channels: 4,
        max_channels: 16,
        total_iterations: 6,
        checkpoint_every: 3,
        sample_every: 3,
        seed,
        ..TrainConfig::default()
    }
}

fn data(domain: Domain) -> DomainDataset {
    let images = (0..6).map(|i| render_tensor(domain, 11, i, 32)).collect();
    DomainDataset::from_images(domain, Split::Train, images)
}

fn steps(state: &mut TrainState, n: usize) -> Vec<LossReport> {
    let (dx, dy) = (data(Domain::X), data(Domain::Y));
    (0..n)
        .map(|_| {
            let b = state.sample_batches(&dx, &dy).unwrap();
            state.train_step(&b).unwrap()
        })
        .collect()
}

#[test]
fn identical_seeds_give_identical_reports() {
    let a = steps(&mut TrainState::new(tiny_config(3)).unwrap(), 3);
    let b = steps(&mut TrainState::new(tiny_config(3)).unwrap(), 3);
    assert_eq!(a, b);
    assert!(a.iter().all(|r| r.is_finite()));
    let c = steps(&mut TrainState::new(tiny_config(4)).unwrap(), 3);
    assert_ne!(a, c);
}

#[test]
fn checkpoint_resume_matches_uninterrupted() {
    let mut state = TrainState::new(tiny_config(5)).unwrap();
    steps(&mut state, 2);
    let ck = state.to_checkpoint();
    let decoded = Checkpoint::decode(&ck.encode()).unwrap();
    assert!(decoded.bits_eq(&ck));
    let continued = steps(&mut state, 5);
    let mut resumed = TrainState::from_checkpoint(&decoded).unwrap();
    assert_eq!(resumed.iteration, 2);
    assert_eq!(steps(&mut resumed, 5), continued);
    assert!(resumed.to_checkpoint().bits_eq(&state.to_checkpoint()));
}

#[test]
fn steps_only_touch_their_own_networks() {
    let mut state = TrainState::new(tiny_config(6)).unwrap();
    let (dx, dy) = (data(Domain::X), data(Domain::Y));
    let batches = state.sample_batches(&dx, &dy).unwrap();
    let gens = |s: &TrainState| (s.gen_xy.params.fingerprint(), s.gen_yx.params.fingerprint());
    let discs = |s: &TrainState| (s.disc_x.params.fingerprint(), s.disc_y.params.fingerprint());
    let (g0, d0) = (gens(&state), discs(&state));
    let mut report = LossReport::default();
    state.discriminator_step(&batches, &mut report).unwrap();
    assert_eq!(gens(&state), g0);
    let d1 = discs(&state);
    assert_ne!(d1.0, d0.0);
    assert_ne!(d1.1, d0.1);
    state.generator_step(&batches, &mut report).unwrap();
    assert_eq!(discs(&state), d1);
    assert_ne!(gens(&state).0, g0.0);
    assert_ne!(gens(&state).1, g0.1);
}

#[test]
fn ablation_drops_batch_branch() {
    let cfg = TrainConfig {
        no_stddev_branch: true,
        ..tiny_config(1)
    };
    let mut state = TrainState::new(cfg).unwrap();
    assert!(!state.disc_x.has_stddev_branch() && !state.disc_y.has_stddev_branch());
    assert!(steps(&mut state, 1)[0].is_finite());
}

#[test]
fn mode_seeking_ablation_reports_penalty() {
    let cfg = TrainConfig {
        mode_seeking_loss: true,
        ..tiny_config(1)
    };
    let r = steps(&mut TrainState::new(cfg).unwrap(), 1)[0];
    assert!(r.mode_seeking < 0.0);
    let plain = steps(&mut TrainState::new(tiny_config(1)).unwrap(), 1)[0];
    assert_eq!(plain.mode_seeking, 0.0);
}

#[test]
fn batch_size_one_rejected() {
    let cfg = TrainConfig {
        batch_size: 1,
        ..tiny_config(1)
    };
    assert!(matches!(TrainState::new(cfg), Err(Error::Validation(_))));
}

#[test]
fn report_total_follows_weights() {
    let r = steps(&mut TrainState::new(tiny_config(2)).unwrap(), 1)[0];
    let want = r.adv_g + 10.0 * r.scon + 20.0 * (r.cyc_l2 + r.cyc_perceptual);
    assert!((r.total - want).abs() < 1e-12 * want.abs().max(1.0));
}

#[test]
fn run_training_writes_artifacts_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(8);
    let (dx, dy) = (data(Domain::X), data(Domain::Y));
    let full = run_training(&cfg, &dx, &dy, &dir.path().join("a"), &RunOptions::default()).unwrap();
    assert_eq!(full.reports.len(), 6);
    assert!(full.final_checkpoint.exists());
    assert!(dir.path().join("a/samples/xy_000003.png").exists());
    assert!(dir.path().join("a/samples/yx_000006.png").exists());

    let b = dir.path().join("b");
    let opts = RunOptions {
        stop_at: Some(4),
        ..RunOptions::default()
    };
    run_training(&cfg, &dx, &dy, &b, &opts).unwrap();
    let resume = RunOptions {
        resume: Some(run::checkpoint_path(&b, 3)),
        ..RunOptions::default()
    };
    let resumed = run_training(&cfg, &dx, &dy, &b, &resume).unwrap();
    assert_eq!(resumed.reports, full.reports[3..]);
    let log_a = std::fs::read(dir.path().join("a").join(run::LOG_FILE)).unwrap();
    let log_b = std::fs::read(b.join(run::LOG_FILE)).unwrap();
    assert_eq!(log_a, log_b);
    let grid_a = std::fs::read(dir.path().join("a/samples/xy_000006.png")).unwrap();
    let grid_b = std::fs::read(b.join("samples/xy_000006.png")).unwrap();
    assert_eq!(grid_a, grid_b);

    let t = Translators::load(&full.final_checkpoint).unwrap();
    assert_eq!(t.iteration, 6);
    assert_eq!(t.gen_xy.params.fingerprint(), full.state.gen_xy.params.fingerprint());
}

#[test]
fn resume_with_other_config_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(8);
    let (dx, dy) = (data(Domain::X), data(Domain::Y));
    let out = run_training(&cfg, &dx, &dy, dir.path(), &RunOptions { stop_at: Some(1), ..Default::default() }).unwrap();
    let other = TrainConfig { lambda_cyc: 5.0, ..cfg };
    let opts = RunOptions {
        resume: Some(out.final_checkpoint),
        ..RunOptions::default()
    };
    assert!(run_training(&other, &dx, &dy, dir.path(), &opts).is_err());
}
