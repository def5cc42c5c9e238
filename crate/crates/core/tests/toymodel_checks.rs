use pixelcert::rng::{Purpose, RngStream};
use pixelcert::toymodel::{
    held_out_accuracy, softmax, train, train_with, ShapeDataset, ToyClassifier, TrainOptions,
};
use pixelcert::ImageTensor;
use proptest::prelude::*;

fn random_image(c: usize, h: usize, w: usize, seed: u64) -> ImageTensor {
    let mut rng = RngStream::new(seed, Purpose::Generic, 99);
    ImageTensor::new(c, h, w, (0..c * h * w).map(|_| rng.uniform()).collect()).unwrap()
}

#[test]
fn gradient_matches_central_differences() {
    let step = 1e-3;
    let mut worst: f64 = 0.0;
    for case in 0..10u64 {
        let model = ToyClassifier::random(3, 8, 8, 16, 4, 100 + case);
        let x = random_image(3, 8, 8, case);
        let class = (case % 4) as usize;
        let g = model.grad_input(&x, class).unwrap();
        for i in 0..x.data().len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += step;
            let mut minus = x.clone();
            minus.data_mut()[i] -= step;
            let fd = (model.forward(&plus).unwrap().logits[class] - model.forward(&minus).unwrap().logits[class])
                / (2.0 * step);
            let a = g.data()[i];
            if a.abs() > 1e-6 {
                worst = worst.max((a - fd).abs() / a.abs());
            }
        }
    }
    assert!(worst <= 1e-4, "max relative error {worst}");
}

#[test]
fn zero_model_is_flat() {
    let model = ToyClassifier::zeros(3, 32, 32, 8, 4);
    let x = random_image(3, 32, 32, 1);
    let pred = model.forward(&x).unwrap();
    assert!(pred.probs.iter().all(|&p| (p - 0.25).abs() < 1e-15));
    assert!(model.grad_input(&x, 2).unwrap().data().iter().all(|&g| g == 0.0));
}

#[test]
fn linear_model_gradient_is_weight_row() {
    let (c, h, w, k) = (1, 3, 3, 2);
    let weights: Vec<f64> = (0..k * c * h * w).map(|i| i as f64 * 0.1 - 0.5).collect();
    let model = ToyClassifier::linear(c, h, w, weights.clone(), vec![0.0, 1.0]).unwrap();
    let x = random_image(c, h, w, 3);
    for class in 0..k {
        let g = model.grad_input(&x, class).unwrap();
        assert_eq!(g.data(), &weights[class * 9..(class + 1) * 9]);
    }
}

#[test]
fn shape_mismatch_is_rejected() {
    let model = ToyClassifier::zeros(3, 32, 32, 8, 4);
    assert!(model.forward(&ImageTensor::zeros(3, 16, 16)).is_err());
}

#[test]
fn dataset_is_round_robin_and_in_range() {
    let ds = ShapeDataset::new(1);
    let mut counts = [0; 4];
    for i in 0..100 {
        let (x, label) = ds.generate(i);
        counts[label] += 1;
        assert!(x.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
    assert_eq!(counts, [25; 4]);
    assert_eq!(ds.generate(0), ds.generate(0));
}

#[test]
fn trained_model_meets_accuracy_targets() {
    let ds = ShapeDataset::new(1);
    let summary = train_with(&ds, &TrainOptions::default()).unwrap();
    assert!(summary.final_loss < summary.initial_loss);
    assert!(summary.train_accuracy >= 0.95, "train {}", summary.train_accuracy);
    let held = held_out_accuracy(&summary.model, &ds, 200).unwrap();
    assert!(held >= 0.95, "held-out {held}");

    let again = train(&ds, 20, 0.05, 1).unwrap();
    assert_eq!(again.to_bytes(), summary.model.to_bytes());

    let restored = ToyClassifier::from_bytes(&again.to_bytes()).unwrap();
    assert_eq!(restored, again);
}

proptest! {
    #[test]
    fn softmax_is_translation_invariant(
        logits in prop::collection::vec(-30.0f64..30.0, 2..8),
        shift in -100.0f64..100.0,
    ) {
        let a = softmax(&logits);
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        let b = softmax(&shifted);
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}
