//! Backpropagation vs central finite differences over random architectures.

use rand::Rng;
use stfl_core::loss::bce_loss;
use stfl_core::rng::{stream_rng, uniform_matrix};
use stfl_core::{ActivationKind, Matrix2D, MlpModel};

/// Loss of the model on a fixed batch: BCE against fixed labels through a
/// sigmoid head, so every architecture ends in (0, 1).
fn loss_of(model: &MlpModel, x: &Matrix2D, y: &Matrix2D) -> f64 {
    let pred = model.predict(x).unwrap();
    bce_loss(&pred, y).unwrap().0
}

fn random_architecture(rng: &mut impl Rng) -> (Vec<usize>, Vec<ActivationKind>) {
    let hidden_choices = [ActivationKind::Tanh, ActivationKind::Sigmoid, ActivationKind::Identity];
    let n_hidden = rng.gen_range(0..=2); // up to 3 layers total
    let mut dims = vec![rng.gen_range(2..=6)];
    let mut acts = Vec::new();
    for _ in 0..n_hidden {
        dims.push(rng.gen_range(2..=16));
        acts.push(hidden_choices[rng.gen_range(0..hidden_choices.len())]);
    }
    dims.push(1);
    acts.push(ActivationKind::Sigmoid);
    (dims, acts)
}

#[test]
fn backprop_matches_finite_differences_on_random_mlps() {
    let mut worst: f64 = 0.0;
    for instance in 0..30 {
        let mut rng = stream_rng(1000 + instance, "arch", 0);
        let (dims, acts) = random_architecture(&mut rng);
        let mut model = MlpModel::seeded(&dims, &acts, &mut rng).unwrap();
        let batch = rng.gen_range(1..=5);
        let x = uniform_matrix(batch, dims[0], -1.5, 1.5, &mut rng);
        let mut y = Matrix2D::zeros(batch, 1);
        for r in 0..batch {
            y.set(r, 0, f64::from(rng.gen_bool(0.5)));
        }

        let (pred, cache) = model.forward(&x).unwrap();
        let (_, out_grad) = bce_loss(&pred, &y).unwrap();
        let (grads, _) = model.backward(&cache, &out_grad).unwrap();
        let analytic: Vec<f64> = grads.slices().into_iter().flatten().copied().collect();

        let h = 1e-5;
        let mut flat = 0usize;
        let n_buffers = model.param_slices().len();
        for buf in 0..n_buffers {
            let len = model.param_slices()[buf].len();
            for k in 0..len {
                model.param_slices_mut()[buf][k] += h;
                let plus = loss_of(&model, &x, &y);
                model.param_slices_mut()[buf][k] -= 2.0 * h;
                let minus = loss_of(&model, &x, &y);
                model.param_slices_mut()[buf][k] += h;
                let numeric = (plus - minus) / (2.0 * h);
                let a = analytic[flat];
                let denom = numeric.abs().max(a.abs()).max(1e-6);
                let rel = (numeric - a).abs() / denom;
                assert!(
                    rel < 1e-4,
                    "instance {instance} dims {dims:?} buffer {buf} param {k}: \
                     numeric {numeric} vs analytic {a} (rel {rel})"
                );
                worst = worst.max(rel);
                flat += 1;
            }
        }
        assert_eq!(flat, analytic.len());
    }
    eprintln!("worst relative error across instances: {worst:.3e}");
}

#[test]
fn softmax_head_gradient_matches_finite_differences() {
    // exercised separately since softmax backward goes through the Jacobian
    let mut rng = stream_rng(77, "softmax", 0);
    let model = MlpModel::seeded(
        &[3, 8, 4],
        &[ActivationKind::Tanh, ActivationKind::Softmax],
        &mut rng,
    )
    .unwrap();
    let x = uniform_matrix(3, 3, -1.0, 1.0, &mut rng);
    // scalar objective: sum of squares of the softmax outputs
    let objective = |m: &MlpModel| -> f64 {
        let p = m.predict(&x).unwrap();
        p.data().iter().map(|v| v * v).sum()
    };
    let (pred, cache) = model.forward(&x).unwrap();
    let out_grad = pred.scale(2.0);
    let (grads, _) = model.backward(&cache, &out_grad).unwrap();
    let analytic: Vec<f64> = grads.slices().into_iter().flatten().copied().collect();

    let mut model = model;
    let h = 1e-5;
    let mut flat = 0usize;
    for buf in 0..model.param_slices().len() {
        for k in 0..model.param_slices()[buf].len() {
            model.param_slices_mut()[buf][k] += h;
            let plus = objective(&model);
            model.param_slices_mut()[buf][k] -= 2.0 * h;
            let minus = objective(&model);
            model.param_slices_mut()[buf][k] += h;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[flat];
            let denom = numeric.abs().max(a.abs()).max(1e-6);
            assert!(
                (numeric - a).abs() / denom < 1e-4,
                "buffer {buf} param {k}: {numeric} vs {a}"
            );
            flat += 1;
        }
    }
}
