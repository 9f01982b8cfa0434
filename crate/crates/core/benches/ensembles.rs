use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use zrp::ensembles::{CanonicalSampler, DEFAULT_BUDGET};
use zrp::limit::levy::{sample_levy_path, LevyParams};
use zrp::model::ModelParams;
use zrp::{par, rng, Execution};

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn sampler_draws(c: &mut Criterion) {
    let mp = ModelParams::at_critical_multiple(200, 2.0, 5.0).unwrap();
    let sampler = CanonicalSampler::new(&mp, DEFAULT_BUDGET).unwrap();
    let mut g = c.benchmark_group("sampler_2000_draws_L200");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |bch| {
            bch.iter(|| {
                par::map_indexed(exec, 2000, |k| sampler.sample(&mut rng::stream(1, k as u64)).observables().max_value)
            })
        });
    }
    g.finish();
}

fn levy_paths(c: &mut Criterion) {
    let lp = LevyParams::new(3.0, 4.0, 1e-4).unwrap();
    let mut g = c.benchmark_group("levy_5000_paths");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |bch| {
            bch.iter(|| {
                par::map_indexed(exec, 5000, |k| {
                    sample_levy_path(&lp, 0.1, &mut rng::stream(2, k as u64)).displacement()
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, sampler_draws, levy_paths);
criterion_main!(benches);
