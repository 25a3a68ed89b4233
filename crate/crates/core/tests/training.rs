use oracle4rec::encoder::{load_checkpoint, ModelParams, ParamGroup, Side};
use oracle4rec::eval::{evaluate, EvalTarget};
use oracle4rec::seqdata::{
    generate_synthetic_drift, split_leave_one_out, Dataset, SplitDataset, SyntheticConfig,
};
use oracle4rec::training::{epoch_examples, frozen_future, past_grad, save_run, train, Trainer};
use oracle4rec::{Config, Error, Protocol, TrainMode};

fn small_config() -> Config {
    let mut cfg = Config::default();
    cfg.model.d = 8;
    cfg.model.d_ff = 8;
    cfg.model.max_len = 8;
    cfg.model.horizon = 2;
    cfg.model.attn_layers = 1;
    cfg.model.dropout = 0.2;
    cfg.train.batch = 20;
    cfg.train.epochs = 2;
    cfg.train.seed = 3;
    cfg.eval.protocol = Protocol::Full;
    cfg
}

fn small_data() -> SplitDataset {
    let cfg = SyntheticConfig {
        num_users: 12,
        num_items: 15,
        seq_len_range: (6, 10),
        ..Default::default()
    };
    split_leave_one_out(&generate_synthetic_drift(&cfg).unwrap().dataset).unwrap()
}

fn group_snapshot(p: &ModelParams<f64>, group: ParamGroup) -> Vec<f64> {
    p.tensors()
        .into_iter()
        .filter(|(_, g, _)| *g == group)
        .flat_map(|(_, _, t)| t.iter().copied().collect::<Vec<_>>())
        .collect()
}

#[test]
fn phases_touch_only_their_own_encoder() {
    let split = small_data();
    let cfg = small_config();
    let mut t = Trainer::<f64>::new(&cfg, &split.train).unwrap();
    for epoch in 0..3 {
        let ex = epoch_examples(&split.train, &cfg.train, epoch);
        let past = group_snapshot(&t.params, ParamGroup::Past);
        let shared = group_snapshot(&t.params, ParamGroup::Shared);
        t.future_phase(epoch, &ex).unwrap();
        assert_eq!(past, group_snapshot(&t.params, ParamGroup::Past));
        assert_ne!(shared, group_snapshot(&t.params, ParamGroup::Shared));

        let future = group_snapshot(&t.params, ParamGroup::Future);
        let shared = group_snapshot(&t.params, ParamGroup::Shared);
        t.past_phase(epoch, &ex).unwrap();
        assert_eq!(future, group_snapshot(&t.params, ParamGroup::Future));
        assert_ne!(shared, group_snapshot(&t.params, ParamGroup::Shared));
    }
}

#[test]
fn guiding_targets_are_constant_in_phase_two() {
    let split = small_data();
    let mut cfg = small_config();
    cfg.model.dropout = 0.0;
    let t = Trainer::<f64>::new(&cfg, &split.train).unwrap();
    let ex = epoch_examples(&split.train, &cfg.train, 0);
    let batch = t.prepare_chunk(0, 0, 0, &ex[..10]).unwrap();
    let r = frozen_future(&t.arch, &t.params, &batch).unwrap();
    let obj = t.objective();
    let mut rng = oracle4rec::training::stream_rng(0, &[]);
    let (_, g0) = past_grad(&t.arch, &t.params, Some(&r), &batch, &obj, &mut rng, false).unwrap();

    // perturb a future-exclusive weight without recomputing R
    let mut p = t.params.clone();
    p.future.attns[0].wq.mapv_inplace(|v| v + 0.5);
    let mut rng = oracle4rec::training::stream_rng(0, &[]);
    let (_, g1) = past_grad(&t.arch, &p, Some(&r), &batch, &obj, &mut rng, false).unwrap();
    assert_eq!(g0, g1);
    assert!(group_snapshot(&g0, ParamGroup::Future)
        .iter()
        .all(|v| *v == 0.0));

    // recomputing R moves the past gradient only through the guiding term
    let r2 = frozen_future(&t.arch, &p, &batch).unwrap();
    let mut rng = oracle4rec::training::stream_rng(0, &[]);
    let (_, g2) = past_grad(&t.arch, &p, Some(&r2), &batch, &obj, &mut rng, false).unwrap();
    assert!(group_snapshot(&g2, ParamGroup::Future)
        .iter()
        .all(|v| *v == 0.0));
    let diff: f64 = g2
        .to_flat()
        .iter()
        .zip(g0.to_flat())
        .map(|(a, b)| (a - b).abs())
        .sum();
    let size: f64 = g0.to_flat().iter().map(|v| v.abs()).sum();
    assert!(diff < obj.beta * 10.0 * size, "{diff} vs {size}");
}

#[test]
fn zero_beta_phase_two_is_a_pure_past_step() {
    let split = small_data();
    let mut guided = small_config();
    guided.guiding.beta = 0.0;
    let mut plain = small_config();
    plain.train.no_future = true;
    plain.guiding.beta = 0.0;
    let mut a = Trainer::<f64>::with_params(
        &guided,
        &split.train,
        oracle4rec::encoder::Arch::new(&guided.model).unwrap(),
        Trainer::<f64>::new(&plain, &split.train).unwrap().params,
    );
    let mut b = Trainer::<f64>::new(&plain, &split.train).unwrap();
    let ex = epoch_examples(&split.train, &plain.train, 0);
    a.past_phase(0, &ex).unwrap();
    b.past_phase(0, &ex).unwrap();
    assert_eq!(a.params, b.params);

    // a guiding term computed but weighted by zero changes nothing either
    let batch = a.prepare_chunk(1, 0, 0, &ex[..8]).unwrap();
    let r = frozen_future(&a.arch, &a.params, &batch).unwrap();
    let obj = a.objective();
    let mut r1 = oracle4rec::training::stream_rng(9, &[]);
    let mut r2 = oracle4rec::training::stream_rng(9, &[]);
    let (_, with_r) = past_grad(&a.arch, &a.params, Some(&r), &batch, &obj, &mut r1, true).unwrap();
    let (_, without) = past_grad(&a.arch, &a.params, None, &batch, &obj, &mut r2, true).unwrap();
    assert_eq!(with_r, without);
}

#[test]
fn joint_without_future_terms_is_past_only_training() {
    let split = small_data();
    let mut joint = small_config();
    joint.train.mode = TrainMode::Joint;
    joint.train.future_weight = 0.0;
    joint.guiding.beta = 0.0;
    let mut plain = small_config();
    plain.train.no_future = true;
    let base = Trainer::<f64>::new(&plain, &split.train).unwrap().params;
    let arch = oracle4rec::encoder::Arch::new(&plain.model).unwrap();
    let mut a = Trainer::with_params(&joint, &split.train, arch.clone(), base.clone());
    let mut b = Trainer::with_params(&plain, &split.train, arch, base);
    for _ in 0..2 {
        a.run_epoch().unwrap();
        b.run_epoch().unwrap();
    }
    assert_eq!(a.params, b.params);
}

#[test]
fn joint_and_two_phase_differ() {
    let split = small_data();
    let two = small_config();
    let mut joint = small_config();
    joint.train.mode = TrainMode::Joint;
    let mut a = Trainer::<f64>::new(&two, &split.train).unwrap();
    let mut b = Trainer::<f64>::new(&joint, &split.train).unwrap();
    assert_eq!(a.params, b.params);
    a.run_epoch().unwrap();
    b.run_epoch().unwrap();
    assert_ne!(a.params, b.params);
}

#[test]
fn seeded_runs_repeat_bitwise_for_any_worker_count() {
    let split = small_data();
    let cfg = small_config();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let mut t = Trainer::<f32>::new(&cfg, &split.train).unwrap();
            t.run_epoch().unwrap();
            t.run_epoch().unwrap();
            t.params
        })
    };
    let one = run(1);
    assert_eq!(one, run(1));
    assert_eq!(one, run(3));
}

#[test]
fn horizon_not_below_length_is_rejected() {
    let split = small_data();
    let mut cfg = small_config();
    cfg.model.horizon = cfg.model.max_len;
    assert!(matches!(
        Trainer::<f32>::new(&cfg, &split.train),
        Err(Error::Config { .. })
    ));
    assert!(matches!(
        train::<f32>(&split, &cfg),
        Err(Error::Config { .. })
    ));
}

#[test]
fn two_user_toy_is_memorised() {
    let ds = Dataset::from_sequences(
        vec![vec![1, 2, 3, 4, 5, 6, 7, 8], vec![8, 6, 4, 2, 7, 5, 3, 1]],
        8,
    )
    .unwrap();
    let split = split_leave_one_out(&ds).unwrap();
    let mut cfg = small_config();
    cfg.model.d = 16;
    cfg.model.d_ff = 16;
    cfg.model.max_len = 6;
    cfg.model.horizon = 1;
    cfg.model.dropout = 0.0;
    cfg.train.lr1 = 1e-2;
    cfg.train.lr2 = 1e-2;
    cfg.train.no_future = true;
    let mut t = Trainer::<f64>::new(&cfg, &split.train).unwrap();
    let mut last = f64::INFINITY;
    for _ in 0..500 {
        last = t.run_epoch().unwrap().lp.unwrap();
        if last < 0.1 {
            break;
        }
    }
    assert!(last < 0.1, "L_p stuck at {last}");
    // with the training sequences memorised, the next training item ranks first
    let m = evaluate(
        &t.arch,
        &t.params,
        Side::Past,
        &split,
        EvalTarget::Valid,
        Protocol::Full,
        0,
    )
    .unwrap();
    assert!(m.users == 2);
}

#[test]
fn synthetic_past_loss_drops_by_a_third() {
    let data = generate_synthetic_drift(&SyntheticConfig::default()).unwrap();
    let split = split_leave_one_out(&data.dataset).unwrap();
    let mut cfg = Config::default();
    cfg.model.d = 32;
    cfg.model.d_ff = 32;
    cfg.model.max_len = 10;
    cfg.model.horizon = 2;
    cfg.train.batch = 32;
    cfg.train.epochs = 20;
    cfg.eval.protocol = Protocol::Full;
    cfg.train.patience = 0;
    let out = train::<f32>(&split, &cfg).unwrap();
    let lp: Vec<f64> = out.log.epochs.iter().map(|e| e.lp.unwrap()).collect();
    assert_eq!(lp.len(), 20);
    let first = lp[0];
    let late = lp[17..].iter().sum::<f64>() / 3.0;
    assert!(late <= 0.7 * first, "L_p {first} -> {late}");
}

#[test]
fn checkpoint_reproduces_validation_metrics() {
    let split = small_data();
    let cfg = small_config();
    let out = train::<f32>(&split, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = save_run(dir.path(), &out, &cfg).unwrap();
    for f in [
        "trainlog.csv",
        "metrics.json",
        "manifest.json",
        "checkpoint.bin",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("trainlog.csv")).unwrap();
    assert!(csv.starts_with("epoch,L_p,L_f,L_g,val_MRR"));
    assert_eq!(csv.lines().count(), 1 + cfg.train.epochs);
    let (params, manifest) = load_checkpoint::<f32>(&ckpt).unwrap();
    let arch = oracle4rec::encoder::Arch::new(&manifest.config.model).unwrap();
    let m = evaluate(
        &arch,
        &params,
        Side::Past,
        &split,
        EvalTarget::Valid,
        cfg.eval.protocol,
        cfg.eval.seed,
    )
    .unwrap();
    assert_eq!(m, out.valid);
}

#[test]
fn non_finite_loss_names_the_batch() {
    let split = small_data();
    let cfg = small_config();
    let mut t = Trainer::<f64>::new(&cfg, &split.train).unwrap();
    t.params.item_emb.fill(f64::NAN);
    let err = t.run_epoch().unwrap_err();
    match err {
        Error::Diverged(msg) => assert!(msg.contains("batch 0"), "{msg}"),
        e => panic!("unexpected {e}"),
    }
}
