//! Central finite-difference harness for the loss gradients, through the
//! softmax, the linear trunk and the projection head.

use lasermix::ssl::losses::{c2l_loss, cross_entropy_loss, lkg_loss, mean_teacher_loss};
use lasermix::ssl::model::{softmax, Gradients, ModelParams};
use lasermix::IGNORE_LABEL;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const INSTANCES: u64 = 120;

/// Relative error with an absolute floor for near-zero derivatives.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..scale))
}

struct Case {
    features: Array2<f64>,
    model: ModelParams,
    labels: Vec<u16>,
    teacher: Array2<f64>,
    target: Array2<f64>,
    image: Array2<f64>,
    mask: Vec<bool>,
}

fn case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..7);
    let d = rng.random_range(1..5);
    let c = rng.random_range(2..5);
    // D == C in half of the cases so the residual path is covered
    let big_d = if seed.is_multiple_of(2) { c } else { rng.random_range(1..6) };
    let mut labels: Vec<u16> = (0..n).map(|_| rng.random_range(0..c as u16)).collect();
    if n > 2 {
        labels[0] = IGNORE_LABEL;
    }
    let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
    mask[n - 1] = true;
    let teacher = softmax(random_matrix(&mut rng, n, c, 2.0).view());
    let model = ModelParams {
        weights: random_matrix(&mut rng, c, d, 1.0),
        bias: random_matrix(&mut rng, 1, c, 1.0).row(0).to_owned(),
        projection: Some(random_matrix(&mut rng, big_d, c, 1.0)),
    };
    Case {
        features: random_matrix(&mut rng, n, d, 1.5),
        model,
        labels,
        teacher,
        target: random_matrix(&mut rng, n, c, 1.0),
        image: random_matrix(&mut rng, n, big_d, 1.0),
        mask,
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Loss {
    Ce,
    Mt,
    Lkg,
    C2l,
}

fn value(loss: Loss, k: &Case, model: &ModelParams) -> f64 {
    let logits = model.logits(k.features.view());
    match loss {
        Loss::Ce => cross_entropy_loss(softmax(logits.view()).view(), &k.labels).unwrap().loss,
        Loss::Mt => mean_teacher_loss(softmax(logits.view()).view(), k.teacher.view()).unwrap().loss,
        Loss::Lkg => lkg_loss(logits.view(), k.target.view(), &k.mask).unwrap().loss,
        Loss::C2l => c2l_loss(model, logits.view(), k.image.view(), &k.mask).unwrap().loss,
    }
}

fn analytic(loss: Loss, k: &Case) -> Gradients {
    let logits = k.model.logits(k.features.view());
    let mut g = Gradients::zeros_like(&k.model);
    let grad_logits = match loss {
        Loss::Ce => cross_entropy_loss(softmax(logits.view()).view(), &k.labels).unwrap().grad_logits,
        Loss::Mt => mean_teacher_loss(softmax(logits.view()).view(), k.teacher.view()).unwrap().grad_logits,
        Loss::Lkg => lkg_loss(logits.view(), k.target.view(), &k.mask).unwrap().grad_logits,
        Loss::C2l => {
            let out = c2l_loss(&k.model, logits.view(), k.image.view(), &k.mask).unwrap();
            g.add_projection_grad(&out.grad_projection, 1.0);
            out.grad_logits
        }
    };
    g.add_logit_grad(k.features.view(), grad_logits.view(), 1.0);
    g
}

/// Worst relative error over all instances and parameters, or the first
/// entry above [`REL_TOL`].
pub fn check(loss: Loss) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    let mut failure = None;
    for seed in 0..INSTANCES {
        let k = case(seed);
        let g = analytic(loss, &k);
        let mut probe = |get: &dyn Fn(&mut ModelParams) -> &mut f64, analytic: f64| {
            let mut plus = k.model.clone();
            *get(&mut plus) += STEP;
            let mut minus = k.model.clone();
            *get(&mut minus) -= STEP;
            let numeric = (value(loss, &k, &plus) - value(loss, &k, &minus)) / (2.0 * STEP);
            let err = rel_err(analytic, numeric);
            worst = worst.max(err);
            if err > REL_TOL && failure.is_none() {
                failure = Some(format!("{loss:?} seed {seed}: analytic {analytic} numeric {numeric}"));
            }
        };
        let (c, d) = k.model.weights.dim();
        for i in 0..c {
            for j in 0..d {
                probe(&move |m: &mut ModelParams| &mut m.weights[[i, j]], g.weights[[i, j]]);
            }
            probe(&move |m: &mut ModelParams| &mut m.bias[i], g.bias[i]);
        }
        if matches!(loss, Loss::C2l) {
            let gp = g.projection.as_ref().unwrap();
            for ((r, col), &a) in gp.indexed_iter() {
                probe(&move |m: &mut ModelParams| &mut m.projection.as_mut().unwrap()[[r, col]], a);
            }
        }
    }
    failure.map_or(Ok(worst), Err)
}
