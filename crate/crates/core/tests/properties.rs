use parboot::costmodel::predict;
use parboot::simnet::Channel;
use parboot::stats::relative_error;
use parboot::strategies::{run_strategy, stream_matched_oracle, StrategyKind};
use parboot::{CostParams, Dataset, ExperimentConfig};
use proptest::prelude::*;

fn params() -> CostParams {
    CostParams::new(1e8, 1e8).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn measurements_match_closed_forms(
        d_per in 1usize..24,
        share in 1usize..12,
        p in 1usize..6,
        seed in any::<u64>(),
    ) {
        let config = ExperimentConfig::new(d_per * p, share * p, p, seed).unwrap();
        let data = Dataset::synthetic(config.dataset_size, seed).unwrap();
        for kind in StrategyKind::ALL {
            let report = run_strategy(kind, &data, &config, &params(), None).unwrap();
            let m = report.prediction_match();
            prop_assert!(m.all(), "{} {:?}: {:?}", kind, config, m);

            let predicted = predict(kind, &config, &params()).unwrap();
            prop_assert_eq!(report.measured.total_bytes, predicted.wire_bytes());
            prop_assert_eq!(report.measured.channel(Channel::DataOut), predicted.bytes_data_out);

            let oracle = stream_matched_oracle(kind, &data, &config).unwrap().value();
            prop_assert!(relative_error(report.estimate.value(), oracle) <= 1e-9);
        }
    }

    #[test]
    fn ddrs_points_and_memory(d_per in 1usize..40, share in 1usize..6, p in 1usize..6) {
        let config = ExperimentConfig::new(d_per * p, share * p, p, 205).unwrap();
        let data = Dataset::synthetic(config.dataset_size, 205).unwrap();
        let report = run_strategy(StrategyKind::Ddrs, &data, &config, &params(), None).unwrap();
        let nd = (config.num_resamples * config.dataset_size) as u64;
        prop_assert!(report.measured.points_per_rank.iter().all(|&x| x == nd));
        prop_assert!(report.measured.peak_floats_per_rank.iter().all(|&x| x <= d_per as u64 + 8));
    }
}

#[test]
fn results_do_not_depend_on_host_threads() {
    let config = ExperimentConfig::new(64, 32, 4, 9).unwrap();
    let data = Dataset::synthetic(64, 9).unwrap();
    let serial: Vec<_> = StrategyKind::ALL
        .iter()
        .map(|&k| run_strategy(k, &data, &config, &params(), None).unwrap())
        .collect();
    let parallel: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = StrategyKind::ALL
            .iter()
            .map(|&k| {
                let data = &data;
                s.spawn(move || run_strategy(k, data, &config, &params(), None).unwrap())
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(serial, parallel);
}
