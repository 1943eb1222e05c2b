use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use nersplit::corpus::TagScheme;
use nersplit::partition::partition_corpus;
use nersplit::tagger::{train, TaggerConfig};
use nersplit::{BiasTable, EntityDictionary, TrainSets};
use nersplit_bench::fixture;

fn partition(c: &mut Criterion) {
    let data = fixture(4);
    let mentions = data.test.mentions().count() as u64;
    let mut group = c.benchmark_group("partition");
    group.bench_function("train_sets", |b| b.iter(|| TrainSets::build(&data.train).unwrap()));
    let sets = TrainSets::build(&data.train).unwrap();
    group.throughput(Throughput::Elements(mentions));
    group.bench_function("assign", |b| b.iter(|| partition_corpus(&data.test, &sets).unwrap()));
    group.finish();
}

fn dictionary(c: &mut Criterion) {
    let data = fixture(4);
    let dict = EntityDictionary::from_train(&data.train).unwrap();
    let mut group = c.benchmark_group("dictionary");
    group.bench_function("build", |b| b.iter(|| EntityDictionary::from_train(&data.train).unwrap()));
    group.throughput(Throughput::Elements(data.test.documents.len() as u64));
    group.bench_function("extract", |b| {
        b.iter(|| data.test.documents.iter().map(|d| dict.extract_document(d).len()).sum::<usize>())
    });
    group.finish();
}

fn bias_and_tagger(c: &mut Criterion) {
    let data = fixture(1);
    let scheme = TagScheme::new(data.train.entity_types.iter().cloned());
    let table = BiasTable::build(&data.train, &scheme).unwrap();
    let config = TaggerConfig { debias: true, temperature: Some(5.0), epochs: 2, ..Default::default() };
    let mut group = c.benchmark_group("debias");
    group.sample_size(10);
    group.bench_function("bias_table", |b| b.iter(|| BiasTable::build(&data.train, &scheme).unwrap()));
    group.bench_function("train_2_epochs", |b| {
        b.iter_batched(|| config.clone(), |cfg| train(&data.train, Some(&table), &cfg).unwrap(), BatchSize::SmallInput)
    });
    let model = train(&data.train, Some(&table), &config).unwrap();
    group.bench_function("predict", |b| b.iter(|| model.predict_corpus(&data.test).unwrap()));
    group.finish();
}

criterion_group!(benches, partition, dictionary, bias_and_tagger);
criterion_main!(benches);
