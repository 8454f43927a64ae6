//! Compares one round of client training dispatched through the
//! data-parallel helper against its sequential twin on the same cohort.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use fedveil::client::{self, ClientConfig, ClientState, Upload};
use fedveil::data::ClientData;
use fedveil::model::{init_params, Batch, ModelLayout};
use fedveil::par;

const COHORT: usize = 64;
const SAMPLES: usize = 48;

fn build_cohort() -> (Vec<ClientState>, ClientConfig, Vec<f64>) {
    let layout = ModelLayout::mlp(32, 10, 16);
    let init = init_params(&layout, 1);
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut clients = Vec::with_capacity(COHORT);
    for _ in 0..COHORT {
        let mut train = Batch::new(32);
        let mut eval = Batch::new(32);
        for s in 0..SAMPLES {
            let row: Vec<f64> = (0..32).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let label = rng.gen_range(0..10);
            if s % 5 == 0 {
                eval.push(&row, label);
            } else {
                train.push(&row, label);
            }
        }
        clients.push(ClientState::new(
            layout.clone(),
            &init,
            0.0,
            ClientData { train, eval },
        ));
    }
    let cfg = ClientConfig { batch_size: 8, ..ClientConfig::default() };
    let broadcast = vec![0.0; layout.total_params()];
    (clients, cfg, broadcast)
}

fn train_all_parallel(
    clients: &mut [ClientState],
    cfg: &ClientConfig,
    broadcast: &[f64],
) -> Vec<Upload> {
    par::map_mut(clients, |i, st| {
        let mut rng = ChaCha20Rng::seed_from_u64(i as u64);
        client::train_round(st, broadcast, cfg, &mut rng).expect("train")
    })
}

fn train_all_sequential(
    clients: &mut [ClientState],
    cfg: &ClientConfig,
    broadcast: &[f64],
) -> Vec<Upload> {
    par::map_mut_seq(clients, |i, st| {
        let mut rng = ChaCha20Rng::seed_from_u64(i as u64);
        client::train_round(st, broadcast, cfg, &mut rng).expect("train")
    })
}

fn bench_round(c: &mut Criterion) {
    let (clients, cfg, broadcast) = build_cohort();
    let mut group = c.benchmark_group("round");
    group.sample_size(10);
    group.bench_function("parallel_dispatch", |b| {
        b.iter_batched_ref(
            || clients.clone(),
            |cohort| train_all_parallel(cohort, &cfg, &broadcast),
            BatchSize::LargeInput,
        )
    });
    group.bench_function("sequential_twin", |b| {
        b.iter_batched_ref(
            || clients.clone(),
            |cohort| train_all_sequential(cohort, &cfg, &broadcast),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, bench_round);
criterion_main!(benches);
