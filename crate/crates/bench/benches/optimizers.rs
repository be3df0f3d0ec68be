use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use smbo_bench::mock_ser_observations;
use smbo_core::acquisition::{propose, AcquisitionSpec};
use smbo_core::engine::{run, OptimizerKind, OptimizerSpec, RunOptions};
use smbo_core::gp::{FitOptions, GpPosterior};
use smbo_core::objective::{DurationModel, SeededSynthetic, SyntheticKind, SyntheticObjective};
use smbo_core::tpe::{suggest, Observation};
use smbo_core::SeedStream;

fn gp_fit(c: &mut Criterion) {
    let mut g = c.benchmark_group("gp_fit");
    for n in [5, 10, 15, 30] {
        let (_, x, y) = mock_ser_observations(n, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| GpPosterior::fit(x.clone(), &y, &FitOptions::default()).unwrap())
        });
    }
    g.finish();
}

fn ei_proposal(c: &mut Criterion) {
    let (space, x, y) = mock_ser_observations(15, 2);
    let best = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let gp = GpPosterior::fit(x, &y, &FitOptions::default()).unwrap();
    c.bench_function("ei_propose_15_obs", |b| {
        b.iter(|| propose(&gp, &space, &AcquisitionSpec::ei(best), SeedStream::new(3)).unwrap())
    });
}

fn tpe_suggest(c: &mut Criterion) {
    let (space, x, y) = mock_ser_observations(30, 4);
    let obs: Vec<Observation> = x.into_iter().zip(y).enumerate().map(|(i, (x, score))| Observation { index: i + 1, score, x }).collect();
    c.bench_function("tpe_suggest_30_obs", |b| b.iter(|| suggest(&obs, &space, 0.25, 24, SeedStream::new(5)).unwrap()));
}

fn full_runs(c: &mut Criterion) {
    let mut g = c.benchmark_group("run_15_trials_mock_ser");
    g.sample_size(10);
    for kind in [OptimizerKind::GpBo, OptimizerKind::Tpe, OptimizerKind::Random] {
        let space = SyntheticKind::MockSer.space();
        g.bench_function(kind.as_str(), |b| {
            b.iter(|| {
                let obj = SyntheticObjective { kind: SyntheticKind::MockSer, noise_sd: 0.01, duration: DurationModel::default() };
                let mut f = SeededSynthetic::new(obj, SeedStream::new(6));
                run(&OptimizerSpec::new(kind, 15, 6), &space, &mut f, RunOptions::default()).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, gp_fit, ei_proposal, tpe_suggest, full_runs);
criterion_main!(benches);
