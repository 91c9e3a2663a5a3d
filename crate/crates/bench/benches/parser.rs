use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use romdx_core::pipelines::parse_output;
use romdx_core::Framework;
use std::hint::black_box;

fn parse_corpus(c: &mut Criterion) {
    let (rules, texts) = romdx_bench::transcripts(200);
    let bytes: usize = texts.iter().map(String::len).sum();
    let mut group = c.benchmark_group("parser");
    group.throughput(Throughput::Bytes(bytes as u64));
    group.bench_function("parse_200_transcripts", |b| {
        b.iter(|| {
            for t in &texts {
                black_box(parse_output(black_box(t), &rules, Framework::Dvdx));
            }
        })
    });
    let free_form: Vec<String> = texts
        .iter()
        .map(|t| t.lines().filter(|l| !l.starts_with("==")).collect::<Vec<_>>().join("\n"))
        .collect();
    group.bench_function("parse_200_without_sentinels", |b| {
        b.iter(|| {
            for t in &free_form {
                black_box(parse_output(black_box(t), &rules, Framework::Dvdx));
            }
        })
    });
    group.finish();
}

criterion_group!(benches, parse_corpus);
criterion_main!(benches);
