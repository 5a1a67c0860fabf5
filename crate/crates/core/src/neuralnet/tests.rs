use super::*;
use crate::dataset::{RngSeed, RngStream};
use proptest::prelude::{prop_assert, proptest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight-line evaluation with nested vectors and the textbook formulas.
fn oracle_forward(
    layers: &[(Vec<Vec<f64>>, Vec<f64>)],
    kind: TransferKind,
    in_range: (&[f64], &[f64]),
    out_range: (&[f64], &[f64]),
    p: &[f64],
) -> Vec<f64> {
    let mut h: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let (lo, hi) = (in_range.0[i], in_range.1[i]);
            if hi > lo {
                2.0 * (z - lo) / (hi - lo) - 1.0
            } else {
                0.0
            }
        })
        .collect();
    for (idx, (a, b)) in layers.iter().enumerate() {
        let mut z = vec![0.0; a.len()];
        for i in 0..a.len() {
            let mut s = b[i];
            for j in 0..h.len() {
                s += a[i][j] * h[j];
            }
            z[i] = s;
        }
        if idx + 1 < layers.len() {
            for v in z.iter_mut() {
                *v = match kind {
                    TransferKind::TanSig => 2.0 / (1.0 + (-2.0 * *v).exp()) - 1.0,
                    TransferKind::HardLim => {
                        if *v >= 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    TransferKind::PureLin => *v,
                };
            }
        }
        h = z;
    }
    h.iter()
        .enumerate()
        .map(|(i, &u)| {
            let (lo, hi) = (out_range.0[i], out_range.1[i]);
            if hi > lo {
                lo + (u + 1.0) * (hi - lo) / 2.0
            } else {
                lo
            }
        })
        .collect()
}

fn random_layers(rng: &mut ChaCha8Rng, sizes: &[usize]) -> Vec<(Vec<Vec<f64>>, Vec<f64>)> {
    sizes
        .windows(2)
        .map(|w| {
            let a = (0..w[1])
                .map(|_| (0..w[0]).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let b = (0..w[1]).map(|_| rng.random_range(-0.5..0.5)).collect();
            (a, b)
        })
        .collect()
}

fn to_net(kind: TransferKind, layers: &[(Vec<Vec<f64>>, Vec<f64>)]) -> NetworkParams<f64> {
    let ls: Vec<(Matrix<f64>, Vec<f64>)> = layers.iter().map(|(a, b)| (Matrix::from_rows(a), b.clone())).collect();
    NetworkParams::from_layers(kind, &ls).unwrap()
}

fn random_range(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
    let hi = lo.iter().map(|&l| l + rng.random_range(0.5..20.0)).collect();
    (lo, hi)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

#[test]
fn transfer_values() {
    assert_eq!(transfer(TransferKind::TanSig, 0.0f64), 0.0);
    assert_eq!(transfer(TransferKind::HardLim, 0.0f64), 1.0);
    assert_eq!(transfer(TransferKind::HardLim, -1e-300f64), 0.0);
    assert_eq!(transfer(TransferKind::PureLin, -3.5f64), -3.5);
    for x in [-2.0f64, -1.0, 0.5, 3.0] {
        let formula = 2.0 / (1.0 + (-2.0 * x).exp()) - 1.0;
        assert!((transfer(TransferKind::TanSig, x) - formula).abs() < 1e-12);
    }
}

#[test]
fn transfer_names_parse() {
    for k in TransferKind::ALL {
        assert_eq!(k.as_str().parse::<TransferKind>().unwrap(), k);
        assert_eq!(TransferKind::from_tag(k.tag()), Some(k));
    }
    assert!("relu".parse::<TransferKind>().is_err());
}

#[test]
fn single_identity_layer_is_identity() {
    let net = NetworkParams::from_layers(TransferKind::TanSig, &[(Matrix::identity(3), vec![0.0; 3])]).unwrap();
    let norm = Normalizer::identity(3, 3);
    let p = [0.3, -7.0, 12.5];
    assert_eq!(forward(&net, &norm, &p).unwrap(), p.to_vec());
}

#[test]
fn zero_weights_give_zero_output() {
    let arch = Architecture::new(vec![4, 6, 5, 3], TransferKind::PureLin).unwrap();
    let net = NetworkParams::<f64>::zeros(arch);
    let out = forward(&net, &Normalizer::identity(4, 3), &[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(out, vec![0.0; 3]);
}

#[test]
fn forward_matches_straight_line_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..30 {
        let depth = 1 + trial % 4;
        let sizes: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..6)).collect();
        let kind = TransferKind::ALL[trial % 3];
        let layers = random_layers(&mut rng, &sizes);
        let net = to_net(kind, &layers);
        let (ilo, ihi) = random_range(&mut rng, sizes[0]);
        let (olo, ohi) = random_range(&mut rng, sizes[depth]);
        let norm = Normalizer {
            input: RangeMap::from_bounds(ilo.clone(), ihi.clone()),
            output: RangeMap::from_bounds(olo.clone(), ohi.clone()),
        };
        let p: Vec<f64> = (0..sizes[0]).map(|i| rng.random_range(ilo[i]..ihi[i])).collect();
        let got = forward(&net, &norm, &p).unwrap();
        let want = oracle_forward(&layers, kind, (&ilo, &ihi), (&olo, &ohi), &p);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "trial {trial}: {g} vs {w}");
        }
    }
}

#[test]
fn small_tansig_net_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let layers = random_layers(&mut rng, &[2, 3, 2]);
    let net = to_net(TransferKind::TanSig, &layers);
    let norm = Normalizer::identity(2, 2);
    let p = [0.25, -0.75];
    let got = forward(&net, &norm, &p).unwrap();
    let want = oracle_forward(
        &layers,
        TransferKind::TanSig,
        (&[-1.0; 2], &[1.0; 2]),
        (&[-1.0; 2], &[1.0; 2]),
        &p,
    );
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[test]
fn forward_rejects_wrong_input_length() {
    let net = NetworkParams::<f64>::zeros(Architecture::new(vec![4, 2], TransferKind::PureLin).unwrap());
    let err = forward(&net, &Normalizer::identity(4, 2), &[1.0, 2.0]).unwrap_err();
    assert!(matches!(
        err,
        NetError::DimensionMismatch {
            expected: 4,
            found: 2,
            ..
        }
    ));
}

#[test]
fn loss_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let layers = random_layers(&mut rng, &[3, 4, 2]);
    let net = to_net(TransferKind::TanSig, &layers);
    let norm = Normalizer {
        input: RangeMap::from_bounds(vec![0.0; 3], vec![2.0; 3]),
        output: RangeMap::from_bounds(vec![-5.0, 1.0], vec![5.0, 3.0]),
    };
    let params = random_matrix(&mut rng, 3, 3, 0.0, 2.0);
    let pred = forward_batch(&net, &norm, &params).unwrap();
    assert_eq!(loss_mse(&net, &norm, &params, &pred).unwrap(), 0.0);
    let shifted = pred.map(|v| v + 2.0);
    assert!((loss_mse(&net, &norm, &params, &shifted).unwrap() - 4.0).abs() < 1e-12);

    let targets = random_matrix(&mut rng, 3, 2, -5.0, 5.0);
    let mut sum = 0.0;
    for i in 0..3 {
        let y = oracle_forward(
            &layers,
            TransferKind::TanSig,
            (&[0.0; 3], &[2.0; 3]),
            (&[-5.0, 1.0], &[5.0, 3.0]),
            params.row(i),
        );
        for l in 0..2 {
            sum += (y[l] - targets[(i, l)]).powi(2);
        }
    }
    let got = loss_mse(&net, &norm, &params, &targets).unwrap();
    assert!((got - sum / 6.0).abs() < 1e-12 * sum.max(1.0));
}

#[test]
fn loss_rejects_empty_and_mismatched_sets() {
    let net = NetworkParams::<f64>::zeros(Architecture::new(vec![2, 1], TransferKind::PureLin).unwrap());
    let norm = Normalizer::identity(2, 1);
    assert!(matches!(
        loss_mse(&net, &norm, &Matrix::zeros(0, 2), &Matrix::zeros(0, 1)),
        Err(NetError::EmptySet)
    ));
    assert!(matches!(
        loss_mse(&net, &norm, &Matrix::zeros(2, 2), &Matrix::zeros(3, 1)),
        Err(NetError::DimensionMismatch { .. })
    ));
}

/// Largest entrywise relative deviation between the analytic gradient and
/// central differences with step `1e-6`. Entries are compared relative to
/// their own size, with a floor of `1e-4` times the largest entry so that
/// entries which vanish analytically are measured against the gradient scale.
pub(crate) fn fd_check(
    net: &NetworkParams<f64>,
    norm: &Normalizer<f64>,
    params: &Matrix<f64>,
    targets: &Matrix<f64>,
    range: std::ops::Range<usize>,
) -> f64 {
    let g = gradient(net, norm, params, targets).unwrap();
    let gmax = g[range.clone()].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in range {
        let mut plus = net.clone();
        plus.as_mut_slice()[i] += h;
        let mut minus = net.clone();
        minus.as_mut_slice()[i] -= h;
        let fd = (loss_mse(&plus, norm, params, targets).unwrap() - loss_mse(&minus, norm, params, targets).unwrap())
            / (2.0 * h);
        let denom = g[i].abs().max(fd.abs()).max(1e-4 * gmax).max(f64::MIN_POSITIVE);
        worst = worst.max((g[i] - fd).abs() / denom);
    }
    worst
}

fn toy_problem(seed: u64, kind: TransferKind) -> (NetworkParams<f64>, Normalizer<f64>, Matrix<f64>, Matrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = [3, 5, 4, 2];
    let layers = random_layers(&mut rng, &sizes);
    let net = to_net(kind, &layers);
    let params = random_matrix(&mut rng, 7, 3, -2.0, 2.0);
    let targets = random_matrix(&mut rng, 7, 2, -3.0, 3.0);
    let norm = Normalizer::fit(&params, &targets);
    (net, norm, params, targets)
}

#[test]
fn gradient_matches_finite_differences() {
    for kind in [TransferKind::TanSig, TransferKind::PureLin] {
        for seed in 0..5 {
            let (net, norm, params, targets) = toy_problem(seed, kind);
            let err = fd_check(&net, &norm, &params, &targets, 0..net.n_weights());
            assert!(err < 1e-6, "{kind} seed {seed}: {err}");
        }
    }
}

#[test]
fn hardlim_hidden_gradient_is_zero_and_output_matches() {
    let (net, norm, params, targets) = toy_problem(3, TransferKind::HardLim);
    let g = gradient(&net, &norm, &params, &targets).unwrap();
    let hidden = net.arch().hidden_len();
    assert!(g[..hidden].iter().all(|&v| v == 0.0));
    assert!(g[hidden..].iter().any(|&v| v != 0.0));
    let err = fd_check(&net, &norm, &params, &targets, hidden..net.n_weights());
    assert!(err < 1e-6, "{err}");
}

#[test]
fn perfect_fit_has_zero_gradient() {
    for kind in TransferKind::ALL {
        let (net, norm, params, _) = toy_problem(9, kind);
        let targets = forward_batch(&net, &norm, &params).unwrap();
        let g = gradient(&net, &norm, &params, &targets).unwrap();
        assert!(g.iter().all(|&v| v == 0.0), "{kind}");
    }
}

#[test]
fn batch_cache_follows_weight_changes() {
    for kind in TransferKind::ALL {
        let (net, norm, params, targets) = toy_problem(4, kind);
        let mut batch = Batch::new(net.arch(), &norm, &params, &targets).unwrap();
        let mut w = net.as_slice().to_vec();
        assert_eq!(batch.loss(&w), loss_mse(&net, &norm, &params, &targets).unwrap());
        // change an output weight, then a hidden one
        for idx in [w.len() - 1, 0] {
            w[idx] += 0.3;
            let fresh = NetworkParams::from_flat(net.arch().clone(), w.clone()).unwrap();
            assert_eq!(
                batch.loss(&w),
                loss_mse(&fresh, &norm, &params, &targets).unwrap(),
                "{kind}"
            );
        }
    }
}

#[test]
fn range_map_round_trip_and_constants() {
    let map = RangeMap::<f64>::from_bounds(vec![1.0, 5.0, -3.0], vec![4.0, 5.0, 2e6]);
    let mut v = vec![2.5, 5.0, 1234.5];
    map.normalize(&mut v);
    assert!((v[0] - 0.0).abs() < 1e-15);
    assert_eq!(v[1], 0.0);
    map.denormalize(&mut v);
    assert!((v[0] - 2.5).abs() < 1e-12 && v[1] == 5.0 && (v[2] - 1234.5).abs() < 1e-12 * 1234.5);
    let mut ends = vec![1.0, 5.0, -3.0];
    map.normalize(&mut ends);
    assert_eq!(ends, vec![-1.0, 0.0, -1.0]);
}

#[test]
fn fitted_ranges_are_column_extremes() {
    let data = Matrix::from_rows(&[vec![1.0, -2.0], vec![3.0, -2.0], vec![2.0, -2.0]]);
    let map = RangeMap::fit(&data);
    assert_eq!(map.min(), &[1.0, -2.0]);
    assert_eq!(map.max(), &[3.0, -2.0]);
    assert_eq!(map.half_width(), &[1.0, 0.0]);
}

fn circuit_arch(kind: TransferKind) -> Architecture {
    Architecture::new(vec![4, 40, 30, 20], kind).unwrap()
}

#[test]
fn init_is_reproducible_and_bounded() {
    for kind in TransferKind::ALL {
        let arch = circuit_arch(kind);
        let a = init_weights::<f64>(arch.clone(), RngSeed::weights(1));
        let b = init_weights::<f64>(arch.clone(), RngSeed::weights(1));
        let c = init_weights::<f64>(arch.clone(), RngSeed::weights(2));
        assert_eq!(a, b);
        assert_ne!(a.as_slice(), c.as_slice());
        for j in 1..=arch.depth() {
            let bound = init_bound(&arch, j);
            let (w, bias) = a.layer(j);
            assert!(w.iter().all(|v| v.is_finite() && v.abs() <= bound), "{kind} layer {j}");
            assert!(bias.iter().all(|v| v.is_finite() && v.abs() <= bound));
        }
    }
}

#[test]
fn nguyen_widrow_rows_have_fixed_length() {
    let arch = circuit_arch(TransferKind::TanSig);
    let net = init_weights::<f64>(arch.clone(), RngSeed::weights(3));
    let (a, _) = net.layer(1);
    let beta = init_bound(&arch, 1);
    for row in a.chunks_exact(4) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - beta).abs() < 1e-12);
    }
}

#[test]
fn weight_stream_differs_from_sampling_stream() {
    let a = RngSeed::weights(7).rng().random::<u64>();
    let b = RngSeed {
        value: 7,
        stream: RngStream::Sampling(crate::dataset::Role::Train),
    }
    .rng()
    .random::<u64>();
    assert_ne!(a, b);
}

#[test]
fn model_round_trip_is_bitwise() {
    let (net, norm, params, _) = toy_problem(12, TransferKind::TanSig);
    let mut model = Surrogate::new(net, norm).unwrap();
    model.meta.method = Some("cg".into());
    model.meta.epochs = 17;
    model.meta.mse_test = Some(0.125);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    model.save(&path).unwrap();
    let back = Surrogate::<f64>::load(&path).unwrap();
    assert_eq!(back, model);
    let before = model.predict_batch(&params).unwrap();
    let after = back.predict_batch(&params).unwrap();
    let bits = |m: &Matrix<f64>| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&before), bits(&after));
    let json: serde_json::Value = serde_json::from_str(&model.to_json()).unwrap();
    assert_eq!(json["layers"].as_array().unwrap().len(), 3);
    assert_eq!(json["transfer"], "tansig");
}

#[test]
fn loaded_model_checks_query_dimension() {
    let (net, norm, _, _) = toy_problem(1, TransferKind::PureLin);
    let model = Surrogate::new(net, norm).unwrap();
    let mut buf = Vec::new();
    model.write_to(&mut buf).unwrap();
    let back = Surrogate::<f64>::read_from(&mut buf.as_slice()).unwrap();
    assert!(matches!(
        back.predict(&[1.0, 2.0, 3.0, 4.0]),
        Err(NetError::DimensionMismatch { .. })
    ));
}

#[test]
fn corrupt_model_files_are_rejected() {
    let (net, norm, _, _) = toy_problem(1, TransferKind::PureLin);
    let model = Surrogate::new(net, norm).unwrap();
    let mut buf = Vec::new();
    model.write_to(&mut buf).unwrap();
    let mut bad = buf.clone();
    bad[8..12].copy_from_slice(&9u32.to_le_bytes());
    assert!(matches!(
        Surrogate::<f64>::read_from(&mut bad.as_slice()),
        Err(NetError::UnsupportedVersion(9))
    ));
    let short = &buf[..buf.len() - 5];
    assert!(matches!(
        Surrogate::<f64>::read_from(&mut &short[..]),
        Err(NetError::Format(_))
    ));
}

#[test]
fn single_precision_instantiation() {
    let arch = Architecture::new(vec![4, 8, 8, 3], TransferKind::TanSig).unwrap();
    let net = init_weights::<f32>(arch, RngSeed::weights(0));
    let norm = Normalizer::<f32>::identity(4, 3);
    let out = forward(&net, &norm, &[0.1, 0.2, -0.3, 0.4]).unwrap();
    assert_eq!(out.len(), 3);
    assert!(out.iter().all(|v| v.is_finite()));
}

fn purelin_deviation(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = Architecture::new(vec![4, 12, 9, 6], TransferKind::PureLin).unwrap();
    let net = init_weights::<f64>(arch, RngSeed::weights(seed));
    let (ilo, ihi) = random_range(&mut rng, 4);
    let (olo, ohi) = random_range(&mut rng, 6);
    let norm = Normalizer {
        input: RangeMap::from_bounds(ilo.clone(), ihi.clone()),
        output: RangeMap::from_bounds(olo, ohi),
    };
    let p: Vec<f64> = (0..4).map(|i| rng.random_range(ilo[i]..ihi[i])).collect();
    let p2: Vec<f64> = (0..4).map(|i| rng.random_range(ilo[i]..ihi[i])).collect();
    let alpha: f64 = rng.random();
    let mix: Vec<f64> = p.iter().zip(&p2).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
    let (y, y2, ym) = (
        forward(&net, &norm, &p).unwrap(),
        forward(&net, &norm, &p2).unwrap(),
        forward(&net, &norm, &mix).unwrap(),
    );
    let scale = y.iter().chain(&y2).fold(0.0f64, |m, v| m.max(v.abs()));
    ym.iter()
        .zip(y.iter().zip(&y2))
        .map(|(m, (a, b))| (m - (alpha * a + (1.0 - alpha) * b)).abs() / scale)
        .fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn purelin_network_is_affine(seed in 0u64..u64::MAX) {
        prop_assert!(purelin_deviation(seed) < 1e-10);
    }

    #[test]
    fn normalization_round_trip(lo in -1e6f64..1e6, width in 1e-3f64..1e6, t in 0.0f64..=1.0) {
        let map = RangeMap::from_bounds(vec![lo], vec![lo + width]);
        let v = lo + t * width;
        let mut x = [v];
        map.normalize(&mut x);
        prop_assert!(x[0].abs() <= 1.0 + 1e-12);
        map.denormalize(&mut x);
        prop_assert!((x[0] - v).abs() <= 1e-12 * v.abs().max(width));
    }
}
