use codat_core::nn::*;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= 1e-4 * 1f64.max(analytic.abs()).max(numeric.abs())
}

fn weighted_loss(model: &ModelParams, x: &Array2<f64>, labels: &[usize], w: &[f64]) -> f64 {
    let out = logits(model, x.view()).unwrap();
    cross_entropy_per_example(&out, labels)
        .unwrap()
        .iter()
        .zip(w)
        .map(|(l, w)| l * w)
        .sum()
}

/// Smallest |pre-activation| over all hidden units; finite differences are
/// only meaningful away from the rectifier kink.
fn kink_margin(model: &ModelParams, x: &Array2<f64>) -> f64 {
    let mut a = x.clone();
    let mut margin = f64::INFINITY;
    let last = model.layers().len() - 1;
    for (i, layer) in model.layers().iter().enumerate() {
        let z = a.dot(&layer.weight.t()) + &layer.bias;
        if i < last {
            margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
        }
        a = z.mapv(|v| v.max(0.0));
    }
    margin
}

struct Case {
    model: ModelParams,
    x: Array2<f64>,
    labels: Vec<usize>,
    weights: Vec<f64>,
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    loop {
        let d = rng.random_range(1..=6);
        let k = rng.random_range(2..=5);
        let hidden = rng.random_range(0..=2);
        let mut dims = vec![d];
        dims.extend((0..hidden).map(|_| rng.random_range(1..=16)));
        dims.push(k);
        let n: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let flat: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = ModelParams::from_flat(&dims, &flat).unwrap();
        let m = rng.random_range(1..=6);
        let x = Array2::from_shape_fn((m, d), |_| rng.random_range(0.05..0.95));
        let labels = (0..m).map(|_| rng.random_range(0..k)).collect();
        let weights = (0..m).map(|_| rng.random_range(0.1..2.0)).collect();
        if kink_margin(&model, &x) > 1e-3 {
            return Case {
                model,
                x,
                labels,
                weights,
            };
        }
    }
}

#[test]
fn parameter_and_input_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for net in 0..25 {
        let c = random_case(&mut rng);
        let k = c.model.num_classes();
        let batch = LabeledBatch::new(c.x.clone(), c.labels.clone(), k).unwrap();
        let (grads, input_grads) = backward(&c.model, &batch, &c.weights).unwrap();

        let dims = c.model.dims();
        let theta = c.model.flatten();
        let analytic = grads.flatten();
        assert_eq!(analytic.len(), theta.len());
        for i in 0..theta.len() {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[i] += H;
            dn[i] -= H;
            let fu = weighted_loss(
                &ModelParams::from_flat(&dims, &up).unwrap(),
                &c.x,
                &c.labels,
                &c.weights,
            );
            let fd = weighted_loss(
                &ModelParams::from_flat(&dims, &dn).unwrap(),
                &c.x,
                &c.labels,
                &c.weights,
            );
            let numeric = (fu - fd) / (2.0 * H);
            assert!(
                close(analytic[i], numeric),
                "net {net} param {i}: {} vs {numeric}",
                analytic[i]
            );
        }

        for ((r, col), &g) in c.x.indexed_iter().map(|(idx, _)| idx).zip(input_grads.iter()) {
            let mut up = c.x.clone();
            let mut dn = c.x.clone();
            up[[r, col]] += H;
            dn[[r, col]] -= H;
            let numeric = (weighted_loss(&c.model, &up, &c.labels, &c.weights)
                - weighted_loss(&c.model, &dn, &c.labels, &c.weights))
                / (2.0 * H);
            assert!(close(g, numeric), "net {net} input ({r},{col}): {g} vs {numeric}");
        }
    }
}

#[test]
fn attack_gradient_is_unweighted_input_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let c = random_case(&mut rng);
        let k = c.model.num_classes();
        let batch = LabeledBatch::new(c.x.clone(), c.labels.clone(), k).unwrap();
        let ones = vec![1.0; c.labels.len()];
        let (_, full) = backward(&c.model, &batch, &ones).unwrap();
        let (losses, input) = loss_and_input_gradient(&c.model, c.x.view(), &c.labels).unwrap();
        assert_eq!(full, input);
        let direct = cross_entropy_per_example(&forward(&c.model, &batch).unwrap(), &c.labels).unwrap();
        assert_eq!(losses, direct);
    }
}

#[test]
fn forward_is_deterministic_and_regression_locked() {
    let model = ModelParams::init(&[4, 8, 3], 42).unwrap();
    let x = array![[0.1, 0.2, 0.3, 0.4], [0.9, 0.5, 0.0, 1.0]];
    let out = logits(&model, x.view()).unwrap();
    assert_eq!(
        out,
        logits(&ModelParams::init(&[4, 8, 3], 42).unwrap(), x.view()).unwrap()
    );
    // Recorded from the first run after the finite-difference checks passed.
    let golden = [
        [-0.006071995793772489, 0.3159810084829421, -0.050649012646315716],
        [-0.06480973547919402, 0.4690161033753613, 0.09018310170257796],
    ];
    for (r, row) in golden.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            assert!((out[[r, c]] - v).abs() <= 1e-12, "logit ({r},{c}) = {:e}", out[[r, c]]);
        }
    }
}

#[test]
fn cross_entropy_is_nonnegative_and_vanishes_for_confident_logits() {
    let out = array![[50.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
    let l = cross_entropy_per_example(&out, &[0, 2]).unwrap();
    assert!(l[0] >= 0.0 && l[0] < 1e-20);
    assert!((l[1] - 3f64.ln()).abs() < 1e-15);
    assert!(cross_entropy_per_example(&out, &[3, 0]).is_err());
}

#[test]
fn sgd_preserves_shapes_and_matches_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = random_case(&mut rng);
    let k = c.model.num_classes();
    let batch = LabeledBatch::new(c.x.clone(), c.labels.clone(), k).unwrap();
    let (grads, _) = backward(&c.model, &batch, &c.weights).unwrap();
    let mut model = c.model.clone();
    let mut state = OptimizerState::new(&model, 0.1, 0.9, 2e-4).unwrap();
    sgd_step(&mut model, &grads, &mut state).unwrap();
    assert_eq!(model.dims(), c.model.dims());
    let before = c.model.flatten();
    let g = grads.flatten();
    for ((after, p), g) in model.flatten().iter().zip(&before).zip(&g) {
        let buf = g + 2e-4 * p;
        assert_eq!(*after, p - 0.1 * buf);
    }
    let wrong = Gradients {
        layers: vec![DenseLayer::zeros(1, 2)],
    };
    assert!(sgd_step(&mut model, &wrong, &mut state).is_err());
}
