use fingerlab::corpus::{update_review_stage, ReviewStage, ReviewStatus, Timestamp};
use fingerlab::geometry::{KeyboardGeometry, RuleConfig};
use fingerlab::probe::{inference_sequence, predict, train, training_pair, PieceSequence, ProbeConfig, ProbeModel};
use fingerlab::synth::{generate_corpus, SynthConfig};
use fingerlab::Error;

fn reviewed(piece_id: &str) -> ReviewStatus {
    update_review_stage(&ReviewStatus::new(piece_id), ReviewStage::R1, true, Timestamp::from_millis(1)).unwrap()
}

fn sequences(prefix: &str, count: usize, seed: u64, notes: usize) -> Vec<PieceSequence> {
    let geo = KeyboardGeometry::default();
    let rule_cfg = RuleConfig::default();
    let synth = SynthConfig {
        seed,
        num_notes: notes,
        p_swap: 0.15,
        ..SynthConfig::default()
    };
    generate_corpus(prefix, &synth, count)
        .unwrap()
        .iter()
        .map(|p| {
            let rule = p.rule_track(&geo, &rule_cfg).unwrap();
            training_pair(&p.truth.edited, &rule, &p.corrupted.poses, &reviewed(&p.piece_id), &geo, &rule_cfg)
                .unwrap()
        })
        .collect()
}

fn small(seed: u64, epochs: usize) -> ProbeConfig {
    ProbeConfig {
        width: 32,
        seed,
        epochs,
        ..ProbeConfig::default()
    }
}

#[test]
fn loss_decreases_over_first_five_epochs() {
    let corpus = sequences("dec", 20, 0, 120);
    let (_, report) = train::<f32>(&ProbeConfig { epochs: 5, ..ProbeConfig::default() }, &corpus).unwrap();
    let losses: Vec<f64> = report.epochs.iter().map(|e| e.mean).collect();
    assert_eq!(losses.len(), 5);
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
    for e in &report.epochs {
        assert!((e.mean - (e.ce + e.bce)).abs() < 1e-9);
    }
}

#[test]
fn single_pair_is_memorized() {
    let corpus = sequences("mem", 1, 5, 40);
    let cfg = ProbeConfig {
        learning_rate: 1e-2,
        ..small(0, 150)
    };
    let (params, _) = train::<f32>(&cfg, &corpus).unwrap();
    let outs = predict(&params, &cfg, &corpus[0]).unwrap();
    for (note, out) in corpus[0].notes.iter().zip(&outs) {
        let argmax = (0..11).max_by(|&a, &b| out.class_probs[a].total_cmp(&out.class_probs[b]).then(b.cmp(&a))).unwrap();
        assert_eq!(argmax, note.target.unwrap().index(), "note {}", note.note_id);
    }
}

#[test]
fn seeds_give_distinct_models_and_reruns_agree() {
    let corpus = sequences("seed", 3, 2, 60);
    let mut ids = Vec::new();
    for seed in 0..5 {
        let cfg = small(seed, 2);
        let (a, ra) = train::<f32>(&cfg, &corpus).unwrap();
        let (b, rb) = train::<f32>(&cfg, &corpus).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        ids.push(ProbeModel::new(cfg, a).unwrap().model_id);
    }
    let mut unique = ids.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), 5);
}

#[test]
fn frozen_table_stays_zero_through_training() {
    let corpus = sequences("frz", 2, 3, 50);
    let (params, _) = train::<f32>(&small(1, 3), &corpus).unwrap();
    assert!(params.rule_emb.data.iter().all(|v| *v == 0.0));
}

#[test]
fn empty_corpus_is_refused() {
    assert!(matches!(train::<f32>(&ProbeConfig::default(), &[]), Err(Error::Empty(_))));
}

#[test]
fn unreviewed_piece_is_not_a_training_pair() {
    let geo = KeyboardGeometry::default();
    let rule_cfg = RuleConfig::default();
    let piece = &generate_corpus("u", &SynthConfig { num_notes: 10, ..SynthConfig::default() }, 1).unwrap()[0];
    let rule = piece.rule_track(&geo, &rule_cfg).unwrap();
    let status = ReviewStatus::new(&piece.piece_id);
    let err = training_pair(&piece.truth.edited, &rule, &piece.corrupted.poses, &status, &geo, &rule_cfg);
    assert!(matches!(err, Err(Error::Validation(_))));
}

#[test]
fn model_file_round_trips() {
    let corpus = sequences("io", 1, 4, 30);
    let cfg = small(3, 1);
    let (params, _) = train::<f32>(&cfg, &corpus).unwrap();
    let model = ProbeModel::new(cfg, params).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();
    let back = ProbeModel::load(&path).unwrap();
    assert_eq!(back, model);

    let geo = KeyboardGeometry::default();
    let piece = &generate_corpus("io", &SynthConfig { seed: 4, num_notes: 30, ..SynthConfig::default() }, 1).unwrap()[0];
    let rule = piece.rule_track(&geo, &RuleConfig::default()).unwrap();
    let seq = inference_sequence(&rule, &piece.corrupted.poses, &geo, &RuleConfig::default()).unwrap();
    assert_eq!(back.predict(&seq).unwrap(), model.predict(&seq).unwrap());
}

#[test]
fn corrupted_model_file_is_rejected() {
    let corpus = sequences("bad", 1, 4, 20);
    let cfg = small(0, 1);
    let (params, _) = train::<f32>(&cfg, &corpus).unwrap();
    let bytes = ProbeModel::new(cfg, params).unwrap().to_bytes().unwrap();
    let text = String::from_utf8(bytes).unwrap().replace("\"encoder.bias\"", "\"encoder.bogus\"");
    assert!(ProbeModel::from_bytes(text.as_bytes(), "m").is_err());
}
