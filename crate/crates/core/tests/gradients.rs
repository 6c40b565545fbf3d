use fdkg_core::matrix::Matrix;
use fdkg_core::nn::{init_network, Model, NetworkParams, OutputActivation};
use fdkg_core::rng::StreamRng;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

const DIMS: [usize; 4] = [6, 8, 8, 4];
const BATCH: usize = 4;
const H: f64 = 1e-5;

fn random_batch(seed: u64, cols: usize) -> Matrix {
    let mut rng = StreamRng::seed_from_u64(seed);
    let data = (0..BATCH * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(BATCH, cols, data).unwrap()
}

/// Draws a network and batch whose hidden pre-activations stay clear of the
/// ReLU kink, where central differences straddle the non-differentiable point.
fn sample_case(seed: u64, output: OutputActivation) -> (NetworkParams, Matrix, Matrix) {
    for attempt in 0..100u64 {
        let s = seed * 1000 + attempt;
        let mut net = init_network(&DIMS, s).unwrap().with_output(output);
        let mut rng = StreamRng::seed_from_u64(!s);
        for p in net.parameters_mut() {
            *p += rng.random_range(-0.1..0.1);
        }
        let x = random_batch(s, DIMS[0]);
        let t = random_batch(s + 1, DIMS[3]).map(|v| 0.5 + 0.5 * v);
        if net.min_abs_preactivation(&x).unwrap() > 1e-3 {
            return (net, x, t);
        }
    }
    panic!("no kink-free sample for seed {seed}");
}

fn max_rel_error(net: &NetworkParams, x: &Matrix, t: &Matrix) -> f64 {
    let (_, g) = net.loss_and_gradient(x, t).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..net.parameters().len() {
        let mut plus = net.clone();
        plus.parameters_mut()[i] += H;
        let mut minus = net.clone();
        minus.parameters_mut()[i] -= H;
        let fd = (plus.loss(x, t).unwrap() - minus.loss(x, t).unwrap()) / (2.0 * H);
        let an = g.as_slice()[i];
        let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn analytic_gradient_matches_central_differences() {
    for seed in 0..20 {
        for output in [OutputActivation::Sigmoid, OutputActivation::Identity] {
            let (net, x, t) = sample_case(seed, output);
            let err = max_rel_error(&net, &x, &t);
            assert!(err <= 1e-4, "seed {seed} {output:?}: relative error {err:e}");
        }
    }
}

#[test]
fn loss_from_gradient_pass_equals_forward_loss() {
    let (net, x, t) = sample_case(3, OutputActivation::Sigmoid);
    let (l, _) = net.loss_and_gradient(&x, &t).unwrap();
    assert_eq!(l, net.loss(&x, &t).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn batch_forward_equals_row_forward(seed in 0u64..1000) {
        let net = init_network(&DIMS, seed).unwrap();
        let x = random_batch(seed, DIMS[0]);
        let y = net.forward_batch(&x).unwrap();
        for i in 0..BATCH {
            let row = net.forward(x.row(i)).unwrap();
            for (a, b) in row.iter().zip(y.row(i)) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn sigmoid_outputs_in_unit_interval(seed in 0u64..1000) {
        let net = init_network(&DIMS, seed).unwrap();
        let x = random_batch(seed, DIMS[0]).map(|v| 100.0 * v);
        for &v in net.forward_batch(&x).unwrap().as_slice() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn gradient_of_batch_mean_is_mean_of_single_gradients(seed in 0u64..200) {
        let (net, x, t) = sample_case(seed, OutputActivation::Sigmoid);
        let (_, g) = net.loss_and_gradient(&x, &t).unwrap();
        let mut mean = vec![0.0; g.len()];
        for i in 0..BATCH {
            let xi = Matrix::from_rows(&[x.row(i)]).unwrap();
            let ti = Matrix::from_rows(&[t.row(i)]).unwrap();
            let (_, gi) = net.loss_and_gradient(&xi, &ti).unwrap();
            for (m, v) in mean.iter_mut().zip(gi.as_slice()) {
                *m += v / BATCH as f64;
            }
        }
        for (a, b) in g.as_slice().iter().zip(&mean) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}
