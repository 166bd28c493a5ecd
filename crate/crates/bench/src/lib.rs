//! Shared inputs for the benchmarks.

use fingerlab::corpus::{FingeringTrack, ReviewStatus};
use fingerlab::gate::{ClassDistribution, Counts, GateInput};
use fingerlab::geometry::{KeyboardGeometry, RuleConfig};
use fingerlab::probe::{inference_sequence, training_pair, PieceSequence};
use fingerlab::synth::{generate_corpus, CorpusPiece, NoiseMm, SynthConfig};

pub struct Fixture {
    pub pieces: Vec<CorpusPiece>,
    pub rules: Vec<FingeringTrack>,
    pub training: Vec<PieceSequence>,
    pub inference: Vec<PieceSequence>,
}

/// A corrupted synthetic corpus with rule tracks and encoded sequences.
pub fn fixture(count: usize, num_notes: usize) -> Fixture {
    let cfg = SynthConfig {
        seed: 42,
        num_notes,
        noise_mm: NoiseMm::isotropic(1.0),
        p_swap: 0.1,
        p_drop: 0.02,
        ..SynthConfig::default()
    };
    let pieces = generate_corpus("bench", &cfg, count).expect("valid synth config");
    let geo = KeyboardGeometry::default();
    let rc = RuleConfig::default();
    let mut rules = Vec::new();
    let mut training = Vec::new();
    let mut inference = Vec::new();
    for p in &pieces {
        let rule = p.rule_track(&geo, &rc).expect("poses cover notes");
        let mut status = ReviewStatus::new(&p.piece_id);
        status.r1.done = true;
        training.push(training_pair(&p.truth.edited, &rule, &p.corrupted.poses, &status, &geo, &rc).unwrap());
        inference.push(inference_sequence(&rule, &p.corrupted.poses, &geo, &rc).unwrap());
        rules.push(rule);
    }
    Fixture { pieces, rules, training, inference }
}

/// Gate inputs with a fixed peaked distribution per note.
pub fn gate_inputs(f: &Fixture) -> Vec<GateInput> {
    f.pieces
        .iter()
        .zip(&f.rules)
        .map(|(p, rule)| {
            let distributions = rule
                .notes
                .iter()
                .enumerate()
                .map(|(i, n)| {
                    let mut probs = [0.02; 11];
                    let c = (n.label.index() + i % 3) % 11;
                    probs[c] = 0.8;
                    ClassDistribution::new(probs).unwrap()
                })
                .collect();
            GateInput { distributions, rule: rule.clone(), edited: p.truth.edited.clone() }
        })
        .collect()
}

/// Per-piece counts with a spread of deltas.
pub fn piece_counts(n: usize) -> Vec<Counts> {
    (0..n)
        .map(|i| Counts {
            notes: 200 + 7 * i,
            rule_correct: 170 + (i * 13) % 20,
            probe_correct: 172 + (i * 17) % 20,
            ..Counts::default()
        })
        .collect()
}
