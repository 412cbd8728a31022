use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use relprobe_core::forge::{forge_all, negative_switch, ForgeConfig, PairType, Sample};
use relprobe_core::synthetic::{planted_study, PlantedConfig};
use relprobe_core::{NodeId, NodeKind, SeedVocabulary};

fn bench_forge(c: &mut Criterion) {
    let positives: Vec<Sample> = (0..2000)
        .map(|i| Sample::positive(NodeId::word(&format!("s{i}")), NodeId::word(&format!("o{}", (i * 7) % 2000))))
        .collect();
    c.bench_function("negative_switch_2000", |b| {
        b.iter(|| negative_switch(black_box(&positives), 2000, 9))
    });

    let st = planted_study(&PlantedConfig {
        n_pairs: 2000,
        dim: 4,
        ..PlantedConfig::default()
    })
    .unwrap();
    let mut sets = BTreeMap::new();
    sets.insert(NodeKind::Word, st.kg.nodes().clone());
    let vocab = SeedVocabulary::new(sets);
    let cfg = ForgeConfig {
        default_pair_types: vec![PairType::WordWord],
        random_sizes: vec![200, 1000, 5000],
        ..ForgeConfig::default()
    };
    let mut group = c.benchmark_group("forge_all");
    group.sample_size(10);
    group.bench_function("planted_2000", |b| b.iter(|| forge_all(black_box(&st.kg), &vocab, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_forge);
criterion_main!(benches);
