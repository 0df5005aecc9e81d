//! Sequential vs rayon executors on the three data-parallel hot paths.
//! Build with `--no-default-features` to see `Parallel` fall back.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sprp_core::corpus::Tokens;
use sprp_core::evalkit::per_sentence_bleu;
use sprp_core::par::Exec;
use sprp_core::seq2seq::{make_example, param_gradients_with, Example, ModelConfig};
use sprp_core::synth::{generate, SynthConfig};
use sprp_core::trainer::new_model;

const EXECS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn gradients(c: &mut Criterion) {
    let corpus = generate(&SynthConfig {
        entities: 20,
        ..SynthConfig::default()
    });
    let model = new_model(&corpus, ModelConfig::new(64, 0), 1, 0).unwrap();
    let batch: Vec<Example> = corpus
        .instances()
        .take(64)
        .map(|(c, r)| make_example(&model.vocab, c, &r))
        .collect();
    let mut g = c.benchmark_group("gradients_batch64_h64");
    for (name, exec) in EXECS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| param_gradients_with(exec, &model.params, &model.config, black_box(&batch), 7).unwrap())
        });
    }
    g.finish();
}

fn decoding(c: &mut Criterion) {
    let corpus = generate(&SynthConfig {
        entities: 10,
        ..SynthConfig::default()
    });
    let model = new_model(&corpus, ModelConfig::new(64, 0), 1, 0).unwrap();
    let sources: Vec<&Tokens> = corpus.entries.iter().map(|e| &e.complex).take(32).collect();
    let mut g = c.benchmark_group("beam12_decode_32");
    g.sample_size(10);
    for (name, exec) in EXECS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exec.map(&sources, |s| model.decode(s, 12).unwrap().0))
        });
    }
    g.finish();
}

fn bleu(c: &mut Criterion) {
    let corpus = generate(&SynthConfig {
        entities: 200,
        references: 6,
        ..SynthConfig::default()
    });
    let refs: Vec<Vec<Tokens>> = corpus.entries.iter().map(|e| e.joined_references()).collect();
    // score each entry's second reference ordering against all of them
    let preds: Vec<Tokens> = refs.iter().map(|r| r[r.len() / 2].clone()).collect();
    let mut g = c.benchmark_group("bleu_2000_sentences");
    for (name, exec) in EXECS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| per_sentence_bleu(exec, black_box(&preds), &refs).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, gradients, decoding, bleu);
criterion_main!(benches);
