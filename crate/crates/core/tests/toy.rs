use std::sync::OnceLock;

use smattn::toy::*;

fn small_task() -> ToyTaskSpec {
    ToyTaskSpec { train_size: 50, ..ToyTaskSpec::default() }
}

fn window_mean(report: &TrainReport, range: std::ops::Range<usize>) -> f64 {
    let pts = &report.loss_curve[range];
    pts.iter().map(|p| p.loss).sum::<f64>() / pts.len() as f64
}

#[test]
fn loss_decreases_for_every_mechanism() {
    let task = small_task();
    let data = generate_dataset(&task, Split::Train).unwrap();
    let cfg = TrainConfig { steps: 200, log_every: 20, seed: 4, ..TrainConfig::default() };
    for m in Mechanism::ALL {
        let mut model = init_model(&ModelConfig::for_mechanism(m), task.token_count(), &cfg).unwrap();
        let report = train(&mut model, &data, &cfg, None).unwrap();
        let (first, last) = (window_mean(&report, 0..2), window_mean(&report, 8..10));
        assert!(last < 0.8 * first, "{}: loss {first:.4} -> {last:.4}", m.name());
        assert!(model.params.is_finite());
    }
}

#[test]
fn training_is_bit_exact_per_seed() {
    let task = small_task();
    let data = generate_dataset(&task, Split::Train).unwrap();
    let run = |seed| {
        let cfg = TrainConfig { steps: 60, log_every: 10, seed, ..TrainConfig::default() };
        let mut model = init_model(&ModelConfig::for_mechanism(Mechanism::Sma), task.token_count(), &cfg).unwrap();
        let report = train(&mut model, &data, &cfg, None).unwrap();
        (model.params.flatten(), report.loss_curve)
    };
    let (a, ca) = run(1);
    let (b, cb) = run(1);
    let (_, cc) = run(2);
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(ca, cb);
    assert_ne!(ca, cc);
}

#[test]
fn checkpoints_round_trip_through_disk() {
    let task = small_task();
    let data = generate_dataset(&task, Split::Train).unwrap();
    let cfg = TrainConfig { steps: 20, checkpoint_every: 10, seed: 9, ..TrainConfig::default() };
    let mut model = init_model(&ModelConfig::for_mechanism(Mechanism::Ma), task.token_count(), &cfg).unwrap();
    let mut seen = Vec::new();
    let mut hook = |step: usize, _: &ToyModel| -> smattn::Result<()> {
        seen.push(step);
        Ok(())
    };
    train(&mut model, &data, &cfg, Some(&mut hook)).unwrap();
    assert_eq!(seen, vec![10, 20]);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    Checkpoint::from_model(&model, 20).save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap().into_model().unwrap();
    assert_eq!(loaded.params.flatten(), model.params.flatten());
    let inf = InferenceConfig { mode: InferenceMode::HardGreedy, ..InferenceConfig::default() };
    let tokens = &data[0].tokens;
    assert_eq!(loaded.infer(tokens, &inf).unwrap(), model.infer(tokens, &inf).unwrap());
}

#[test]
fn unclipped_forward_attention_can_explode() {
    // Sharpened content attention against a target that speaks the second
    // half of the input first: the renormalized transition divides by a tiny
    // propagated mass and the gradient blows up. The clip keeps the update
    // bounded.
    let task = ToyTaskSpec::default();
    let train_set = generate_dataset(&task, Split::Train).unwrap();
    let stress = generate_dataset(&task, Split::Stress).unwrap();
    let cfg = TrainConfig { steps: 1500, seed: 3, ..TrainConfig::default() };
    let mut model = init_model(&ModelConfig::for_mechanism(Mechanism::FaTa), task.token_count(), &cfg).unwrap();
    train(&mut model, &train_set, &cfg, None).unwrap();
    model.params.energy.gain *= 30.0;
    let p = &stress[1];
    let n = p.tokens.len();
    let mut swapped = p.tokens[n / 2..].to_vec();
    swapped.extend_from_slice(&p.tokens[..n / 2]);
    let target = build_pair(swapped.clone(), vec![2; n], task.frame_dim());
    let pass = model.forward_teacher_forced(&p.tokens, &target.frames, None).unwrap();
    let norm = model.backward(&pass).unwrap().norm();
    assert!(norm > 1e3, "gradient norm {norm}");

    let clipped = TrainConfig { steps: 1, batch_size: 1, ..cfg.clone() };
    let report = train(&mut model.clone(), std::slice::from_ref(&target_on(&p.tokens, &target)), &clipped, None).unwrap();
    assert_eq!(report.clipped_steps, 1);
}

fn target_on(tokens: &[usize], target: &SequencePair) -> SequencePair {
    SequencePair { tokens: tokens.to_vec(), ..target.clone() }
}

struct Trained {
    task: ToyTaskSpec,
    model: ToyModel,
    train: Vec<SequencePair>,
}

/// SMA trained with the default settings for 5k steps, shared by the tests below.
fn trained_sma() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let task = ToyTaskSpec::default();
        let data = generate_dataset(&task, Split::Train).unwrap();
        let cfg = TrainConfig { steps: 5000, seed: 1, ..TrainConfig::default() };
        let mut model = init_model(&ModelConfig::for_mechanism(Mechanism::Sma), task.token_count(), &cfg).unwrap();
        train(&mut model, &data, &cfg, None).unwrap();
        Trained { task, model, train: data }
    })
}

#[test]
fn sma_reaches_heldout_accuracy() {
    let t = trained_sma();
    let heldout = generate_dataset(&t.task, Split::Heldout).unwrap();
    let e = evaluate(&t.model, &heldout, &t.task, &InferenceConfig::default(), &Default::default(), "sma").unwrap();
    assert!(e.accuracy >= 0.95, "held-out accuracy {}", e.accuracy);
}

#[test]
fn sma_memorizes_training_pairs() {
    let t = trained_sma();
    let pairs = &t.train[..64];
    let e = evaluate(&t.model, pairs, &t.task, &InferenceConfig::default(), &Default::default(), "sma").unwrap();
    assert!(e.accuracy >= 0.97, "training accuracy {}", e.accuracy);
}

#[test]
fn greedy_coverage_tracks_durations() {
    let t = trained_sma();
    let map = t.task.duration_map();
    let inf = InferenceConfig { mode: InferenceMode::HardGreedy, ..InferenceConfig::default() };
    let mut within = 0;
    let cases = 64;
    for pair in &t.train[..cases] {
        let out = t.model.infer(&pair.tokens, &inf).unwrap();
        let InferredAlignment::Hard(path) = out.alignment else { panic!("hard mode returns a path") };
        let mut coverage = vec![0usize; pair.tokens.len()];
        for &j in &path.positions {
            coverage[j] += 1;
        }
        let ok = pair.tokens.iter().zip(&coverage).all(|(&tok, &c)| c.abs_diff(map[tok]) <= 1);
        within += usize::from(ok);
    }
    assert!(within * 100 >= cases * 95, "{within}/{cases} inputs within one frame per token");
}

#[test]
fn teacher_forced_and_free_running_alignments_agree() {
    let t = trained_sma();
    let (mut agree, mut total) = (0, 0);
    for pair in &t.train[..32] {
        let tf = t.model.forward_teacher_forced(&pair.tokens, &pair.frames, None).unwrap();
        let out = t.model.infer(&pair.tokens, &InferenceConfig::default()).unwrap();
        let InferredAlignment::Soft(free) = out.alignment else { panic!("soft mode returns a matrix") };
        let steps = tf.alignment.steps().min(free.steps());
        agree += (0..steps).filter(|&i| tf.alignment.rows[i].argmax() == free.rows[i].argmax()).count();
        total += tf.alignment.steps().max(free.steps());
    }
    assert!(agree as f64 >= 0.9 * total as f64, "{agree}/{total} steps agree");
}

#[test]
fn single_token_speaks_its_duration() {
    let t = trained_sma();
    let map = t.task.duration_map();
    for tok in 0..t.task.vocab_size {
        let out = t.model.infer(&[tok], &InferenceConfig::default()).unwrap();
        assert!(out.stopped);
        assert_eq!(out.frames.len(), map[tok], "token {tok}");
    }
}
