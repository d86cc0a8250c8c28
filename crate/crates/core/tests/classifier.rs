use cuisine_core::classifier::{argmax, train_classifier, training_labels, FoodClassifier, SwinConfig};
use cuisine_core::dataset::{eating_only, load_split, SplitConfig};
use cuisine_core::detector::{Detector, ScoringConfig, ThresholdCalibration, UNet, UNetConfig};
use cuisine_core::fusion::Standardizer;
use cuisine_core::imu::{IntakeState, WindowPair};
use cuisine_core::pipeline::{evaluate, Pipeline};
use cuisine_core::synth::{generate_dataset, DatasetSpec};
use cuisine_core::train::TrainOptions;
use cuisine_core::CoreError;

fn windows_per_class(classes: usize, per_class: usize, seed: u64) -> Vec<WindowPair> {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = generate_dataset(&DatasetSpec::new(classes, 2, 0.5, seed), dir.path()).unwrap();
    let split = load_split(&manifest, SplitConfig::default()).unwrap();
    let eating = eating_only(&split.train);
    (0..classes)
        .flat_map(|c| eating.iter().filter(move |w| w.food() == Some(c)).take(per_class).cloned())
        .collect()
}

/// Stage one that accepts everything.
fn open_gate() -> Detector {
    Detector {
        unet: UNet::new(UNetConfig::default(), 0).unwrap(),
        standardizer: Standardizer::identity(),
        scoring: ScoringConfig::default(),
        training: TrainOptions::default(),
        calibration: Some(ThresholdCalibration {
            percentile: 100.0,
            tau: f64::INFINITY,
            calibration_size: 10,
        }),
    }
}

#[test]
fn overfits_four_classes_and_composes_with_open_gate() {
    let windows = windows_per_class(4, 8, 51);
    assert_eq!(windows.len(), 32);
    let opts = TrainOptions {
        epochs: 300,
        seed: 6,
        ..TrainOptions::default()
    };
    let (cls, report) = train_classifier(&windows, SwinConfig::default(), &opts).unwrap();
    println!("loss {} -> {}", report.loss_curve[0], report.loss_curve.last().unwrap());
    assert_eq!(report.train_accuracy, 1.0);

    let pipe = Pipeline::new(open_gate(), cls).unwrap();
    let r = evaluate(&pipe, &windows).unwrap();
    assert_eq!(r.overall_accuracy, 1.0);
    assert_eq!(r.stage1_accuracy, 1.0);
}

#[test]
fn same_seed_same_checkpoint_and_round_trip() {
    let windows = windows_per_class(3, 6, 52);
    let cfg = SwinConfig {
        num_classes: 3,
        ..SwinConfig::default()
    };
    let opts = TrainOptions {
        epochs: 2,
        seed: 1,
        ..TrainOptions::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for run in 0..2 {
        let (cls, _) = train_classifier(&windows, cfg.clone(), &opts).unwrap();
        let path = dir.path().join(format!("cls{run}.ckpt"));
        cls.save(&path).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
        let back = FoodClassifier::load(&path).unwrap();
        assert_eq!(back.class_names, ["Mixed Noodles", "Dumplings", "Noodle Soup"]);
        assert_eq!(back.probabilities(&windows).unwrap(), cls.probabilities(&windows).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn probabilities_are_normalized_and_deterministic() {
    let windows = windows_per_class(2, 5, 53);
    let (cls, _) = train_classifier(
        &windows,
        SwinConfig::default(),
        &TrainOptions {
            epochs: 1,
            ..TrainOptions::default()
        },
    )
    .unwrap();
    let twice: Vec<WindowPair> = vec![windows[3].clone(), windows[3].clone()];
    let p = cls.probabilities(&twice).unwrap();
    assert_eq!(p[0], p[1]);
    for row in cls.probabilities(&windows).unwrap() {
        assert_eq!(row.len(), 11);
        assert!(row.iter().all(|&v| v >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-5);
    }
    assert_eq!(cls.classify(&windows[0]).unwrap(), cls.probabilities(&windows[..1]).unwrap()[0]);
}

#[test]
fn label_preconditions() {
    let mut windows = windows_per_class(3, 2, 54);
    let non = WindowPair::new(0.0, vec![[0.0; 6]; 128], vec![[0.0; 6]; 25], IntakeState::NonEating, None).unwrap();
    windows.push(non);
    assert!(matches!(training_labels(&windows, 11), Err(CoreError::MissingLabel { index: 6 })));
    let gap: Vec<WindowPair> = windows[..6].iter().filter(|w| w.food() != Some(1)).cloned().collect();
    assert!(matches!(training_labels(&gap, 11), Err(CoreError::ClassAbsent(1))));
    assert!(training_labels(&windows[..6], 2).is_err());
    assert!(matches!(
        train_classifier(&[], SwinConfig::default(), &TrainOptions::default()),
        Err(CoreError::EmptyTrainingSet)
    ));
}

#[test]
fn argmax_prefers_lowest_index() {
    let mut p = vec![0.05; 11];
    p[2] = 0.3;
    p[7] = 0.3;
    assert_eq!(argmax(&p), 2);
    assert_eq!(argmax(&[0.5, 0.5]), 0);
}
