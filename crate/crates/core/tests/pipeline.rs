//! Small end-to-end runs through the public API.

use trajnet::dataset::{FailurePolicy, RngSeed, Role};
use trajnet::dynsys::circuit_system;
use trajnet::evaluation::{error_stats, report_from_predictions};
use trajnet::neuralnet::{init_weights, Architecture, Normalizer, TransferKind};
use trajnet::training::{train, Method, Sets, StopReason, TrainConfig};
use trajnet::{Domain, Grid, Model, Samples, Tolerances};

fn circuit_sets(k: [usize; 3], seed: u64) -> [Samples; 3] {
    let sys = circuit_system::<f64>();
    let domain = Domain::circuit();
    let grid = Grid::new(0.0, 0.5, 50).unwrap();
    let tol = Tolerances::default();
    let mk = |role, k| {
        Samples::generate(&sys, &domain, role, k, grid, &tol, seed, FailurePolicy::Abort)
            .unwrap()
            .0
    };
    [mk(Role::Train, k[0]), mk(Role::Validation, k[1]), mk(Role::Test, k[2])]
}

#[test]
fn linear_surrogate_fits_the_circuit_closely() {
    let [tr, va, te] = circuit_sets([40, 20, 20], 3);
    let arch = Architecture::new(vec![4, 10, 50], TransferKind::PureLin).unwrap();
    let norm = Normalizer::fit(tr.params(), tr.targets());
    let net = init_weights::<f64>(arch, RngSeed::weights(4));
    let sets = Sets {
        train: &tr,
        valid: &va,
        test: Some(&te),
    };
    let cfg = TrainConfig::default().with_max_epochs(300);
    let (net, rec) = train(net, &norm, &sets, &cfg).unwrap();
    assert!(rec.best().mse_train < 0.05 * rec.initial.mse_train);
    let report = error_stats(&net, &norm, &te).unwrap();
    assert!(report.mean < 0.05, "mean relative error {}", report.mean);
    assert_eq!(report.len(), 20);
    assert!((report.mse - rec.best().mse_test.unwrap()).abs() < 1e-9 * report.mse);
}

#[test]
fn saved_models_predict_identically() {
    let [tr, va, _] = circuit_sets([15, 8, 0], 8);
    let arch = Architecture::new(vec![4, 6, 6, 50], TransferKind::TanSig).unwrap();
    let norm = Normalizer::fit(tr.params(), tr.targets());
    let net = init_weights::<f64>(arch, RngSeed::weights(1));
    let sets = Sets {
        train: &tr,
        valid: &va,
        test: None,
    };
    let cfg = TrainConfig::default()
        .with_method(Method::OneStepSecant)
        .with_max_epochs(30);
    let (net, rec) = train(net, &norm, &sets, &cfg).unwrap();
    assert!(rec.epochs.iter().all(|r| r.mse_test.is_none()));

    let model = Model::new(net, norm).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    model.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    let a = model.predict_batch(va.params()).unwrap();
    let b = back.predict_batch(va.params()).unwrap();
    assert_eq!(a, b);
    let rep = report_from_predictions(&b, &va).unwrap();
    assert!(rep.mean.is_finite());
}

#[test]
fn every_method_lowers_the_training_error() {
    let [tr, va, _] = circuit_sets([20, 10, 0], 5);
    let norm = Normalizer::fit(tr.params(), tr.targets());
    for method in [
        Method::ConjugateGradient,
        Method::OneStepSecant,
        Method::GradientDescentAdaptive,
    ] {
        let arch = Architecture::new(vec![4, 8, 50], TransferKind::TanSig).unwrap();
        let net = init_weights::<f64>(arch, RngSeed::weights(2));
        let sets = Sets {
            train: &tr,
            valid: &va,
            test: None,
        };
        let cfg = TrainConfig {
            patience: 1000,
            ..TrainConfig::default().with_method(method).with_max_epochs(50)
        };
        let (_, rec) = train(net, &norm, &sets, &cfg).unwrap();
        let last = rec.epochs.last().unwrap();
        assert!(last.mse_train < rec.initial.mse_train, "{method}");
        assert!(
            matches!(rec.stop_reason, StopReason::MaxEpochs | StopReason::MinStep),
            "{method}: {:?}",
            rec.stop_reason
        );
    }
}
