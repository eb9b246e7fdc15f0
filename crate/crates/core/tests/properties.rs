use proptest::prelude::*;

use ciai::corpus::LabelRegistry;
use ciai::ensemble::MetaEncoding;
use ciai::eval::{ConfusionMatrix, MetricsReport, SamplePrediction};
use ciai::router::{route_row, RouterConfig, RoutingDecision};

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter_map("all zero", |raw| {
        let z: f64 = raw.iter().sum();
        (z > 1e-9).then(|| raw.iter().map(|v| v / z).collect())
    })
}

fn predictions(classes: usize) -> impl Strategy<Value = Vec<SamplePrediction>> {
    prop::collection::vec((0..classes, simplex(classes)), 1..60).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (actual, probabilities))| SamplePrediction {
                id: format!("s{i:03}"),
                text: String::new(),
                actual,
                probabilities,
            })
            .collect()
    })
}

fn labels(n: usize) -> LabelRegistry {
    LabelRegistry::from_names(&(0..n).map(|i| format!("L{i}")).collect::<Vec<_>>()).unwrap()
}

proptest! {
    #[test]
    fn routing_matches_threshold_rule(row in simplex(7), gap in 0.0f64..1.0, conf in 0.0f64..1.0) {
        let config = RouterConfig { gap_threshold: gap, min_confidence: conf };
        let registry = LabelRegistry::standard();
        let mut sorted = row.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let expect = sorted[0] - sorted[1] < gap && sorted[0] + sorted[1] > conf;
        let d = route_row(&registry, &row, &config);
        prop_assert_eq!(d.is_clarify(), expect);
        prop_assert_eq!(&d, &route_row(&registry, &row, &config));
        if let RoutingDecision::Clarify { candidates, .. } = &d {
            prop_assert_ne!(&candidates[0].label, &candidates[1].label);
            prop_assert!(candidates[0].probability >= candidates[1].probability);
        }
    }

    #[test]
    fn zero_gap_never_clarifies(row in simplex(7), conf in 0.0f64..1.0) {
        let config = RouterConfig { gap_threshold: 0.0, min_confidence: conf };
        prop_assert!(!route_row(&LabelRegistry::standard(), &row, &config).is_clarify());
    }

    #[test]
    fn confusion_rows_are_distributions(preds in predictions(4)) {
        let m = ConfusionMatrix::from_predictions(&labels(4), &preds, true).unwrap();
        prop_assert_eq!(m.total(), preds.len());
        for (actual, row) in m.normalized.as_ref().unwrap().iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if m.counts[actual].iter().sum::<usize>() == 0 {
                prop_assert_eq!(sum, 0.0);
            } else {
                prop_assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn metrics_ignore_sample_order(preds in predictions(3), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = preds.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = MetricsReport::from_predictions(&labels(3), "h", &preds).unwrap();
        let b = MetricsReport::from_predictions(&labels(3), "h", &shuffled).unwrap();
        prop_assert_eq!(&a.confusion.counts, &b.confusion.counts);
        prop_assert_eq!(a.accuracy, b.accuracy);
        prop_assert_eq!(a.macro_f1, b.macro_f1);
        prop_assert!((a.mean_loss - b.mean_loss).abs() < 1e-9);
        prop_assert_eq!(&a.losses, &b.losses);
    }

    #[test]
    fn one_hot_round_trip(cells in prop::collection::vec(0usize..7, 1..6)) {
        let enc = MetaEncoding {
            models: (0..cells.len()).map(|j| format!("m{j}")).collect(),
            labels: (0..7).map(|c| format!("L{c}")).collect(),
            include_probabilities: false,
        };
        let row = enc.encode(&cells, None).unwrap();
        prop_assert_eq!(row.len(), enc.n_columns());
        prop_assert_eq!(row.iter().sum::<f64>(), cells.len() as f64);
        prop_assert_eq!(enc.decode(&row), cells);
    }
}
