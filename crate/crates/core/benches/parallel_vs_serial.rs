//! Serial vs rayon execution of the two hot loops: batch gradients and
//! repeated-draw scoring. Both modes produce bit-identical results.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nirec_core::evaluator::average_scores;
use nirec_core::model::{EncoderKind, Model, ModelConfig, ScorerKind};
use nirec_core::synthetic::{generate, PlantedConfig};
use nirec_core::trainer::{batch_loss, pair_stream, TrainSeeds};
use nirec_core::{ExecMode, SeedStream};

fn bench(c: &mut Criterion) {
    let data = generate(&PlantedConfig {
        users: 200,
        items: 120,
        entities: 80,
        items_per_user: 20,
        ..Default::default()
    })
    .unwrap()
    .prepare(0, true)
    .unwrap();
    let config = ModelConfig {
        scorer: ScorerKind::Ni,
        encoder: EncoderKind::Gat,
        layers: 1,
        dim: 32,
        neighbors: 8,
        encoder_neighbors: 8,
    };
    let model = Model::new(config, data.graph.node_count(), 1).unwrap();
    let batch = &data.train[..256];
    let seeds = TrainSeeds::default();
    let streams: Vec<SeedStream> = (0..batch.len()).map(|i| pair_stream(&seeds, 0, i)).collect();
    let eval = &data.test[..256];

    let mut g = c.benchmark_group("exec");
    g.sample_size(10);
    for mode in [ExecMode::Serial, ExecMode::Parallel] {
        let name = format!("{mode:?}");
        g.bench_with_input(BenchmarkId::new("batch_loss", &name), &mode, |b, &m| {
            b.iter(|| batch_loss(&model, &data.graph, batch, &streams, 1e-5, m).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("average_scores", &name), &mode, |b, &m| {
            b.iter(|| average_scores(&model, &data.graph, eval, 4, SeedStream::new(4), m).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
