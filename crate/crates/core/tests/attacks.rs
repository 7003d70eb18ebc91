use codat_core::attack::*;
use codat_core::nn::*;
use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(rng: &mut ChaCha8Rng, m: usize, d: usize, k: usize) -> LabeledBatch {
    // Mix interior points with points sitting on the box faces.
    let x = Array2::from_shape_fn((m, d), |_| match rng.random_range(0..6) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random_range(0.0..=1.0),
    });
    let labels = (0..m).map(|_| rng.random_range(0..k)).collect();
    LabeledBatch::new(x, labels, k).unwrap()
}

fn mean_loss(model: &ModelParams, x: &Array2<f64>, labels: &[usize]) -> f64 {
    let l = cross_entropy_per_example(&logits(model, x.view()).unwrap(), labels).unwrap();
    l.iter().sum::<f64>() / l.len() as f64
}

#[test]
fn outputs_stay_in_ball_and_box_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut examples = 0;
    let mut batch_index = 0u64;
    while examples < 10_000 {
        let d = rng.random_range(1..=8);
        let k = rng.random_range(2..=4);
        let model = ModelParams::init(&[d, 16, k], batch_index).unwrap();
        let eps = match batch_index % 4 {
            0 => 8.0 / 255.0,
            1 => 0.03,
            _ => rng.random_range(1e-4..0.3),
        };
        let cfg = AttackConfig::new(
            eps,
            rng.random_range(0.1..=2.0) * eps,
            rng.random_range(1..=10),
            rng.random_bool(0.5),
        )
        .unwrap();
        let batch = random_batch(&mut rng, 100, d, k);
        let adv = pgd_attack(&model, &batch, &cfg, batch_index).unwrap();
        for (a, x) in adv.iter().zip(batch.features()) {
            assert!((a - x).abs() <= eps, "|{a} - {x}| > {eps}");
            assert!((0.0..=1.0).contains(a));
        }
        examples += batch.len();
        batch_index += 1;
    }
}

#[test]
fn pgd_does_not_lose_to_its_random_start() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = AttackConfig::new(0.05, 0.0125, 10, true).unwrap();
    let (mut start_total, mut final_total) = (0.0, 0.0);
    for b in 0..100u64 {
        let model = ModelParams::init(&[5, 32, 3], b).unwrap();
        let batch = random_batch(&mut rng, 32, 5, 3);
        let start = random_start_point(batch.features(), cfg.epsilon, b).unwrap();
        let adv = pgd_attack(&model, &batch, &cfg, b).unwrap();
        start_total += mean_loss(&model, &start, batch.labels());
        final_total += mean_loss(&model, &adv, batch.labels());
    }
    assert!(final_total >= start_total, "{final_total} < {start_total}");
}

#[test]
fn fixed_seed_gives_identical_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = ModelParams::init(&[4, 8, 3], 0).unwrap();
    let batch = random_batch(&mut rng, 20, 4, 3);
    let cfg = AttackConfig::new(0.1, 0.02, 5, true).unwrap();
    let a = pgd_attack(&model, &batch, &cfg, 17).unwrap();
    assert_eq!(a, pgd_attack(&model, &batch, &cfg, 17).unwrap());
    assert_ne!(a, pgd_attack(&model, &batch, &cfg, 18).unwrap());
}

/// Two-class linear model `z = W x + b`.
fn linear(w: Array2<f64>, b: Array1<f64>) -> ModelParams {
    ModelParams::new(vec![DenseLayer { weight: w, bias: b }]).unwrap()
}

#[test]
fn single_step_on_linear_model_is_the_sign_gradient_attack() {
    let model = linear(array![[0.7, -1.2, 0.0, 2.0], [-0.3, 0.5, 0.4, -1.0]], array![0.1, -0.2]);
    let x = array![[0.4, 0.5, 0.6, 0.45], [0.55, 0.35, 0.5, 0.6]];
    let labels = vec![0, 1];
    let batch = LabeledBatch::new(x.clone(), labels.clone(), 2).unwrap();
    let (losses, grad) = loss_and_input_gradient(&model, x.view(), &labels).unwrap();

    for eps in [0.1, 0.01, 0.001] {
        let cfg = AttackConfig::new(eps, eps, 1, false).unwrap();
        let adv = pgd_attack(&model, &batch, &cfg, 0).unwrap();
        let out0 = logits(&model, x.view()).unwrap();
        let out1 = logits(&model, adv.view()).unwrap();
        let after = cross_entropy_per_example(&out1, &labels).unwrap();
        for i in 0..2 {
            let y = labels[i];
            let other = 1 - y;
            // The margin is linear in x: its increase is eps * |w_other - w_y|_1.
            let dw = (&model.layers()[0].weight.row(other) - &model.layers()[0].weight.row(y))
                .mapv(f64::abs)
                .sum();
            let margin_gain = (out1[[i, other]] - out1[[i, y]]) - (out0[[i, other]] - out0[[i, y]]);
            assert!((margin_gain - eps * dw).abs() <= 1e-12);
            // The loss increase equals eps * |grad|_1 to first order.
            let g1 = grad.row(i).mapv(f64::abs).sum();
            let gain = after[i] - losses[i];
            assert!(gain > 0.0);
            assert!(
                (gain - eps * g1).abs() <= 2.0 * eps * eps * dw * dw,
                "eps {eps}: {gain} vs {}",
                eps * g1
            );
        }
    }
}

#[test]
fn zero_gradient_coordinates_do_not_move() {
    // The third input has zero weight in both rows, so sign(0) = 0 leaves it.
    let model = linear(array![[1.0, -1.0, 0.0], [-1.0, 1.0, 0.0]], array![0.0, 0.0]);
    let batch = LabeledBatch::new(array![[0.5, 0.5, 0.3]], vec![0], 2).unwrap();
    let adv = pgd_attack(&model, &batch, &AttackConfig::new(0.1, 0.05, 3, false).unwrap(), 0).unwrap();
    assert_eq!(adv[[0, 2]], 0.3);
    assert_eq!(adv[[0, 0]], 0.4);
    assert_eq!(adv[[0, 1]], 0.6);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let model = ModelParams::init(&[3, 2], 0).unwrap();
    let batch = LabeledBatch::new(array![[0.5, 0.5]], vec![0], 2).unwrap();
    assert!(pgd_attack(&model, &batch, &AttackConfig::image_train(), 0).is_err());
}
