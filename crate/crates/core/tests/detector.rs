use std::collections::HashSet;

use cuisine_core::dataset::{eating_only, load_split, DatasetSplit, SplitConfig};
use cuisine_core::detector::mask::{inference_seed, mask_count};
use cuisine_core::detector::threshold::{decide, nearest_rank};
use cuisine_core::detector::{
    calibrate, detection_accuracy, hyperparam_search, mask_window, sample_mask, train_reconstructor, Detector,
    ScoreMode, ScoringConfig, SearchSpec, UNet, UNetConfig,
};
use cuisine_core::fusion::Standardizer;
use cuisine_core::imu::{IntakeState, WindowPair};
use cuisine_core::synth::{generate_dataset, DatasetSpec};
use cuisine_core::train::TrainOptions;
use cuisine_core::CoreError;
use cuisine_nn::{SplitMix64, Tensor};

fn small_split(classes: usize, minutes: f64, seed: u64) -> DatasetSplit {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = generate_dataset(&DatasetSpec::new(classes, 2, minutes, seed), dir.path()).unwrap();
    load_split(&manifest, SplitConfig::default()).unwrap()
}

fn untrained(seed: u64, scoring: ScoringConfig) -> Detector {
    Detector {
        unet: UNet::new(UNetConfig::default(), seed).unwrap(),
        standardizer: Standardizer::identity(),
        scoring,
        training: TrainOptions::default(),
        calibration: None,
    }
}

fn noise_window(rng: &mut SplitMix64, start_t: f64) -> WindowPair {
    let row = |rng: &mut SplitMix64| std::array::from_fn(|_| rng.normal());
    let watch = (0..128).map(|_| row(rng)).collect();
    let glasses = (0..25).map(|_| row(rng)).collect();
    WindowPair::new(start_t, watch, glasses, IntakeState::Eating, Some(0)).unwrap()
}

#[test]
fn nearest_rank_counts_on_random_multisets() {
    let mut rng = SplitMix64::new(2024);
    for _ in 0..1000 {
        let n = 10 + rng.below(300);
        let p = match rng.below(4) {
            0 => 100.0,
            1 => (1 + rng.below(100)) as f64,
            _ => rng.uniform(0.01, 100.0),
        };
        let mut seen = HashSet::new();
        let errors: Vec<f64> = std::iter::repeat_with(|| rng.uniform(0.0, 10.0))
            .filter(|e| seen.insert(e.to_bits()))
            .take(n)
            .collect();
        let cal = calibrate(&errors, p).unwrap();
        let within = errors.iter().filter(|&&e| e <= cal.tau).count();
        let expect = ((p / 100.0 * n as f64) - 1e-9).ceil() as usize;
        assert_eq!(within, expect.clamp(1, n), "n {n} p {p}");
        assert_eq!(within, nearest_rank(p, n));
        assert!(cal.tau >= 0.0);
    }
}

#[test]
fn threshold_examples() {
    let ten: Vec<f64> = (1..=10).map(f64::from).collect();
    assert_eq!(calibrate(&ten, 80.0).unwrap().tau, 8.0);
    let cal = calibrate(&ten, 100.0).unwrap();
    assert_eq!(cal.tau, 10.0);
    assert!(ten.iter().all(|&e| decide(e, &cal) == IntakeState::Eating));
    for p in [0.5, 37.0, 80.0, 100.0] {
        assert_eq!(calibrate(&[2.5; 12], p).unwrap().tau, 2.5);
    }
    let cal = calibrate(&ten, 80.0).unwrap();
    assert_eq!(decide(0.0, &cal), IntakeState::Eating);
    assert_eq!(decide(8.0, &cal), IntakeState::Eating);
    assert_eq!(decide(8.0 + 1e-12, &cal), IntakeState::NonEating);
    assert!(matches!(calibrate(&ten[..9], 80.0), Err(CoreError::TooFewSamples { needed: 10, got: 9 })));
}

#[test]
fn raising_percentile_never_shrinks_eating_set() {
    let mut rng = SplitMix64::new(5);
    for _ in 0..200 {
        let calib: Vec<f64> = (0..40).map(|_| rng.uniform(0.0, 1.0)).collect();
        let probe: Vec<f64> = (0..60).map(|_| rng.uniform(0.0, 1.2)).collect();
        let mut last = 0;
        for p in [10.0, 25.0, 50.0, 70.0, 80.0, 90.0, 99.0, 100.0] {
            let cal = calibrate(&calib, p).unwrap();
            let eating = probe.iter().filter(|&&e| decide(e, &cal) == IntakeState::Eating).count();
            assert!(eating >= last);
            last = eating;
        }
    }
}

#[test]
fn mask_accounting() {
    for ratio in [0.05, 0.15, 0.30] {
        let want = mask_count(ratio, 128);
        assert_eq!(want, (ratio * 128.0f64).round() as usize);
        for seed in 0..300 {
            let m = sample_mask(128, ratio, 8, seed).unwrap();
            assert_eq!(m.iter().filter(|&&b| b).count(), want, "ratio {ratio} seed {seed}");
            assert_eq!(m, sample_mask(128, ratio, 8, seed).unwrap());
        }
    }
    assert_eq!(mask_count(0.15, 128), 19);
    let distinct: HashSet<Vec<bool>> = (0..50).map(|s| sample_mask(128, 0.15, 8, s).unwrap()).collect();
    assert!(distinct.len() > 45);
}

#[test]
fn single_segment_mask_is_one_run() {
    for seed in 0..100 {
        let m = sample_mask(128, 8.0 / 128.0, 8, seed).unwrap();
        let first = m.iter().position(|&b| b).unwrap();
        assert!(m[first..first + 8].iter().all(|&b| b));
        assert_eq!(m.iter().filter(|&&b| b).count(), 8);
    }
}

#[test]
fn masked_steps_are_zero_in_every_channel() {
    let mut rng = SplitMix64::new(1);
    let x = Tensor::<f32>::from_fn(&[12, 128], |_| rng.normal() as f32 + 3.0);
    let (xm, mask) = mask_window(&x, 0.3, 8, 99).unwrap();
    for c in 0..12 {
        for t in 0..128 {
            let v = xm.data()[c * 128 + t];
            if mask[t] {
                assert_eq!(v, 0.0);
            } else {
                assert_eq!(v, x.data()[c * 128 + t]);
            }
        }
    }
}

#[test]
fn zero_window_error_is_masked_output_energy() {
    let det = untrained(3, ScoringConfig::default());
    let w = WindowPair::new(12.8, vec![[0.0; 6]; 128], vec![[0.0; 6]; 25], IntakeState::Eating, Some(1)).unwrap();
    let y = det.unet.predict(Tensor::zeros(&[1, 12, 128])).unwrap();
    let mask = sample_mask(128, 0.15, 8, inference_seed(0, 12.8, 0)).unwrap();
    let (mut sum, mut n) = (0.0, 0);
    for c in 0..12 {
        for t in (0..128).filter(|&t| mask[t]) {
            sum += (y.data()[c * 128 + t] as f64).powi(2);
            n += 1;
        }
    }
    let e = det.reconstruction_error(&w).unwrap();
    assert!((e - sum / n as f64).abs() <= 1e-6 * e.max(1e-12), "{e} vs {}", sum / n as f64);
}

#[test]
fn errors_are_nonnegative_and_deterministic() {
    let mut rng = SplitMix64::new(8);
    let windows: Vec<WindowPair> = (0..20).map(|i| noise_window(&mut rng, i as f64)).collect();
    for mode in [ScoreMode::Masked, ScoreMode::Full] {
        let det = untrained(
            4,
            ScoringConfig {
                mode,
                ..ScoringConfig::default()
            },
        );
        let a = det.reconstruction_errors(&windows).unwrap();
        assert!(a.iter().all(|&e| e >= 0.0));
        assert_eq!(a, det.reconstruction_errors(&windows).unwrap());
        // batched and single scoring agree
        assert_eq!(a[7], det.reconstruction_error(&windows[7]).unwrap());
    }
}

fn variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

#[test]
fn averaging_draws_reduces_variance() {
    let mut rng = SplitMix64::new(13);
    let w = noise_window(&mut rng, 40.96);
    let score = |seed: u64, draws: usize| {
        untrained(6, ScoringConfig { mode: ScoreMode::Masked, draws, seed }).reconstruction_error(&w).unwrap()
    };
    let single: Vec<f64> = (0..24).map(|s| score(s, 1)).collect();
    let averaged: Vec<f64> = (0..24).map(|s| score(s, 16)).collect();
    assert!(variance(&averaged) < variance(&single), "{} vs {}", variance(&averaged), variance(&single));
}

#[test]
fn non_eating_windows_are_rejected_for_training() {
    let mut rng = SplitMix64::new(1);
    let mut windows: Vec<WindowPair> = (0..4).map(|i| noise_window(&mut rng, i as f64)).collect();
    windows.push(WindowPair::new(9.0, vec![[0.0; 6]; 128], vec![[0.0; 6]; 25], IntakeState::NonEating, None).unwrap());
    let err = train_reconstructor(&windows, UNetConfig::default(), ScoringConfig::default(), &TrainOptions::default());
    assert!(matches!(err, Err(CoreError::Contract(_))));
    let err = train_reconstructor(&[], UNetConfig::default(), ScoringConfig::default(), &TrainOptions::default());
    assert!(matches!(err, Err(CoreError::EmptyTrainingSet)));
}

#[test]
fn reconstructor_overfits_small_set() {
    let split = small_split(2, 0.5, 31);
    let train: Vec<WindowPair> = eating_only(&split.train).into_iter().take(32).collect();
    assert_eq!(train.len(), 32);
    let opts = TrainOptions {
        epochs: 200,
        seed: 4,
        ..TrainOptions::default()
    };
    let (_, report) = train_reconstructor(&train, UNetConfig::default(), ScoringConfig::default(), &opts).unwrap();
    let (first, last) = (report.loss_curve[0], *report.loss_curve.last().unwrap());
    println!("masked mse {first} -> {last}");
    assert!(last < 0.1 * first, "{first} -> {last}");
}

#[test]
fn same_seed_same_checkpoint_bytes() {
    let split = small_split(2, 0.3, 32);
    let train = eating_only(&split.train);
    let opts = TrainOptions {
        epochs: 2,
        seed: 9,
        ..TrainOptions::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for run in 0..2 {
        let (mut det, _) = train_reconstructor(&train, UNetConfig::default(), ScoringConfig::default(), &opts).unwrap();
        det.calibrate(&eating_only(&split.validation), 80.0).unwrap();
        let path = dir.path().join(format!("det{run}.ckpt"));
        det.save(&path).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
        let back = Detector::load(&path).unwrap();
        assert_eq!(back.calibration, det.calibration);
        assert_eq!(back.reconstruction_errors(&split.test).unwrap(), det.reconstruction_errors(&split.test).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn trained_detector_separates_states() {
    let split = small_split(3, 0.5, 33);
    let opts = TrainOptions {
        epochs: 25,
        seed: 2,
        ..TrainOptions::default()
    };
    let (det, _) =
        train_reconstructor(&eating_only(&split.train), UNetConfig::default(), ScoringConfig::default(), &opts).unwrap();
    let held_out: Vec<WindowPair> = split.validation.iter().chain(&split.test).cloned().collect();
    let errors = det.reconstruction_errors(&held_out).unwrap();
    let mean = |state| {
        let v: Vec<f64> = errors.iter().zip(&held_out).filter(|(_, w)| w.state() == state).map(|(e, _)| *e).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (eat, non) = (mean(IntakeState::Eating), mean(IntakeState::NonEating));
    println!("mean error eating {eat} non-eating {non}");
    assert!(non > eat);
}

#[test]
fn singleton_and_clamped_search() {
    let split = small_split(2, 0.5, 34);
    let train = eating_only(&split.train);
    // short sessions: pool the held-out blocks so both states are present
    let validation: Vec<WindowPair> = split.validation.iter().chain(&split.test).cloned().collect();
    let spec = SearchSpec {
        ratios: vec![0.15],
        percentiles: vec![80.0],
        base: UNetConfig::default(),
        scoring: ScoringConfig::default(),
        training: TrainOptions {
            epochs: 1,
            seed: 3,
            ..TrainOptions::default()
        },
        top_k: 20,
    };
    let result = hyperparam_search(&train, &validation, &spec).unwrap();
    assert_eq!(result.grid.len(), 1);
    assert_eq!(result.ranked.len(), 1);
    let mut det = result.models[0].clone();
    det.calibrate(&eating_only(&validation), 80.0).unwrap();
    let acc = detection_accuracy(&det.detect_many(&validation).unwrap(), &validation);
    assert_eq!(result.grid[0].accuracy, acc);

    let spec = SearchSpec {
        ratios: vec![0.1, 0.2],
        percentiles: vec![70.0, 90.0],
        top_k: 50,
        ..spec
    };
    let result = hyperparam_search(&train, &validation, &spec).unwrap();
    assert_eq!(result.grid.len(), 4);
    assert_eq!(result.ranked.len(), 4);
    assert!(result.ranked.windows(2).all(|w| w[0].accuracy >= w[1].accuracy));

    let only_eating = eating_only(&validation);
    assert!(hyperparam_search(&train, &only_eating, &spec).is_err());
}
