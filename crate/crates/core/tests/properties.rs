use proptest::prelude::*;
use smbo_core::engine::{run, OptimizerKind, OptimizerSpec, RunOptions};
use smbo_core::history::{History, TrialLog};
use smbo_core::objective::{DurationModel, SeededSynthetic, SyntheticKind, SyntheticObjective};
use smbo_core::SeedStream;

fn kind() -> impl Strategy<Value = OptimizerKind> {
    prop_oneof![Just(OptimizerKind::GpBo), Just(OptimizerKind::Tpe), Just(OptimizerKind::Grid), Just(OptimizerKind::Random)]
}

fn objective() -> impl Strategy<Value = SyntheticKind> {
    prop_oneof![Just(SyntheticKind::Quadratic1d), Just(SyntheticKind::Branin2d), Just(SyntheticKind::MockSer)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn runs_respect_budget_and_incumbent_rules(
        kind in kind(),
        obj in objective(),
        budget in 1usize..12,
        seed in any::<u64>(),
        noise in prop_oneof![Just(0.0), 0.0f64..0.05],
    ) {
        let space = obj.space();
        let spec = OptimizerSpec::new(kind, budget, seed);
        let mut f = SeededSynthetic::new(SyntheticObjective { kind: obj, noise_sd: noise, duration: DurationModel::default() }, SeedStream::new(seed));
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("trials.jsonl");
        let mut log = TrialLog::create(&path).unwrap();
        let r = run(&spec, &space, &mut f, RunOptions { deadline_s: None, log: Some(&mut log) }).unwrap();
        drop(log);

        let h = &r.history;
        prop_assert!(h.len() <= budget);
        if kind != OptimizerKind::Grid {
            prop_assert_eq!(h.len(), budget);
        }
        // incumbent: the earliest trial attaining the maximum score
        let best = h.ok_trials().map(|t| t.score.unwrap()).fold(f64::NEG_INFINITY, f64::max);
        let first = h.ok_trials().find(|t| t.score == Some(best)).unwrap();
        prop_assert_eq!(&r.incumbent, first);
        let curve = h.best_so_far_curve().unwrap();
        prop_assert!(curve.windows(2).all(|w| w[0].1 <= w[1].1 && w[0].0 <= w[1].0));
        for t in h.trials() {
            prop_assert!(space.validate(&t.config).is_ok());
        }

        // the log replays to the same history
        let replayed = History::load(&path, &space).unwrap();
        prop_assert_eq!(&replayed, h);
        prop_assert_eq!(std::fs::read_to_string(&path).unwrap(), replayed.to_jsonl(&space));
    }
}
