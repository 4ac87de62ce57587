use std::hint::black_box;
use std::time::Duration;

use ascg_core::{reduce_full, vertex_oracle, IrrState, Polytope, WeightedVertex};
use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `count` weighted vertices of the box, which is affinely dependent as soon
/// as `count > n + 1`.
fn dependent_list(n: usize, count: usize, seed: u64) -> Vec<WeightedVertex> {
    let p = Polytope::unit_box(n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries: Vec<WeightedVertex> = Vec::with_capacity(count);
    while entries.len() < count {
        let dir = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let ans = vertex_oracle(&p, &dir).unwrap();
        if entries.iter().all(|e| e.id != ans.vertex_id) {
            entries.push(WeightedVertex::new(ans.vertex_id, ans.vertex, 0.0));
        }
    }
    let mut total = 0.0;
    for e in &mut entries {
        e.weight = rng.gen_range(0.1..1.0);
        total += e.weight;
    }
    for e in &mut entries {
        e.weight /= total;
    }
    entries
}

fn from_scratch(c: &mut Criterion) {
    let mut g = c.benchmark_group("reduce_full");
    g.warm_up_time(Duration::from_millis(300));
    g.measurement_time(Duration::from_secs(2));

    for (name, n, count) in [("box_10_x20", 10, 20), ("box_20_x40", 20, 40)] {
        let entries = dependent_list(n, count, 5);
        g.bench_function(name, |b| {
            b.iter(|| {
                let mut list = entries.clone();
                let eliminated = reduce_full(&mut list).unwrap();
                assert!(list.len() <= n + 1);
                black_box(eliminated.len())
            })
        });
    }
    g.finish();
}

fn incremental_update(c: &mut Criterion) {
    let mut g = c.benchmark_group("irr_note_added");
    g.warm_up_time(Duration::from_millis(300));
    g.measurement_time(Duration::from_secs(2));

    for (name, n) in [("box_10", 10), ("box_20", 20)] {
        // Grow a list one vertex at a time; each extra vertex past n + 1
        // triggers an incremental elimination.
        let pool = dependent_list(n, 2 * n, 9);
        g.bench_function(name, |b| {
            b.iter(|| {
                let mut entries = vec![pool[0].clone()];
                entries[0].weight = 1.0;
                let mut irr = IrrState::from_entries(&entries).unwrap();
                for v in &pool[1..] {
                    let share = 0.2;
                    for e in &mut entries {
                        e.weight *= 1.0 - share;
                    }
                    let mut add = v.clone();
                    add.weight = share;
                    entries.push(add);
                    black_box(irr.note_added(&mut entries).unwrap());
                }
                black_box(entries.len())
            })
        });
    }
    g.finish();
}

criterion_group!(benches, from_scratch, incremental_update);
criterion_main!(benches);
