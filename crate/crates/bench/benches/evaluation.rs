use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use pearl_core::eval::significance::{exact_p, sampled_p};
use pearl_core::eval::{accuracy_report, parse_choice, EvalRecord, Method, Split};

fn records(n: usize) -> Vec<EvalRecord> {
    (0..n)
        .map(|i| EvalRecord {
            split: if i % 3 == 0 { Split::Long } else { Split::Short },
            correct: Some(i % 4 != 0),
            reasoning_types: vec!["Why/reason".into()],
            ..EvalRecord::empty(&format!("q{i}"), Method::Pearl)
        })
        .collect()
}

fn bench_significance(c: &mut Criterion) {
    let diffs: Vec<i64> = (0..20).map(|i| if i % 3 == 0 { -1 } else { 1 }).collect();
    c.bench_function("exact_p_20", |b| b.iter(|| exact_p(black_box(&diffs))));
    let many: Vec<i64> = (0..300).map(|i| if i % 5 == 0 { -1 } else { 1 }).collect();
    c.bench_function("sampled_p_300x10k", |b| b.iter(|| sampled_p(black_box(&many), 10_000, 7)));
}

fn bench_reporting(c: &mut Criterion) {
    let recs = records(1000);
    c.bench_function("accuracy_report_1000", |b| b.iter(|| accuracy_report(black_box(&recs))));
    let replies = [
        "B",
        "The answer is C.",
        "None of these options fit.",
        "After weighing everything, I would go with option (d) because of the ending.",
    ];
    c.bench_function("parse_choice", |b| {
        b.iter(|| replies.iter().filter_map(|r| parse_choice(black_box(r))).count())
    });
}

criterion_group!(benches, bench_significance, bench_reporting);
criterion_main!(benches);
