mod common;

use adacong::rng::{stream, Stream};
use adacong::tinylearn::{backward, Activation, DenseNet, Layer};
use common::{as_samples, loss_combinations, oracle_forward, oracle_loss, worst_gradient_error, OwnedSample};
use rand::Rng as _;

#[test]
fn forward_matches_loop_oracle() {
    for seed in 0..20 {
        let mut rng = stream(seed, Stream::Custom(5));
        let net = DenseNet::new(&[4, 7, 5, 3], Activation::Tanh, &mut rng).unwrap();
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a = net.forward(&x).unwrap();
        for (u, v) in a.iter().zip(oracle_forward(&net, &x)) {
            assert!((u - v).abs() < 1e-10);
        }
    }
}

#[test]
fn identity_layer_and_zero_net() {
    let mut id = Layer::zeros(2, 2);
    id.weights = vec![1.0, 0.0, 0.0, 1.0];
    let net = DenseNet::from_layers(vec![id], Activation::None).unwrap();
    assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    let zero = DenseNet::from_layers(vec![Layer::zeros(3, 4)], Activation::Tanh).unwrap();
    let p = adacong::tinylearn::softmax(&zero.forward(&[1.0, -1.0, 2.0]).unwrap());
    assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let worst = worst_gradient_error(20, 1e-5);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn oracle_loss_agrees_with_library_loss() {
    let mut rng = stream(3, Stream::Custom(6));
    let net = DenseNet::new(&[3, 5, 4], Activation::Tanh, &mut rng).unwrap();
    for spec in loss_combinations() {
        let batch: Vec<OwnedSample> = (0..4)
            .map(|i| OwnedSample {
                x: vec![0.1 * i as f64, -0.3, 0.7],
                label: Some(i % 4),
                guide_logits: spec.guide.filter(|g| !matches!(g, adacong::tinylearn::GuideLoss::CrossEntropyHard)).map(|_| vec![1.0, -0.5, 0.2, 0.0]),
                guide_label: spec.guide.filter(|g| matches!(g, adacong::tinylearn::GuideLoss::CrossEntropyHard)).map(|_| 2),
                weight: 0.25 * i as f64,
            })
            .collect();
        let lib = backward(&net, &as_samples(&batch), &spec).unwrap().loss;
        assert!((lib - oracle_loss(&net, &batch, &spec)).abs() < 1e-12);
    }
}
