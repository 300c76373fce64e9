//! Teacher/student training loop.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{inclination_unchecked, make_inclination_partition};
use crate::mixing::{laser_mix, multi_modal_laser_mix};

use super::config::{TrainConfig, TrainStrategy};
use super::losses::{
    c2l_loss, cross_entropy_loss, generate_pseudo_labels, lkg_loss, mean_teacher_loss, split_painted, LossReport,
    TextScoreProvider,
};
use super::metrics::{evaluate, EvalReport};
use super::model::{ema_update, point_features, sgd_step, softmax, FeatureNorm, Gradients, ModelParams, BASE_FEATURES};
use super::split::{split_frames, SplitPlan};

/// Scans and side inputs for one run. Every training scan must carry labels;
/// only those selected by the split are ever read.
pub struct TrainData<'a> {
    pub train: &'a [PointCloud],
    pub val: &'a [PointCloud],
    pub num_classes: usize,
    pub scores: Option<&'a dyn TextScoreProvider>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub teacher: ModelParams,
    pub student: ModelParams,
    pub plan: SplitPlan,
    pub history: Vec<LossReport>,
    /// Teacher metrics on the validation scans, if any were given.
    pub metrics: Option<EvalReport>,
}

/// Scan prepared for training: features cached, labels hidden if unlabeled.
struct Prepared {
    cloud: PointCloud,
    features: Array2<f64>,
}

#[derive(Default)]
struct Running {
    sup: (f64, usize),
    mix: (f64, usize),
    mt: (f64, usize),
    c2l: (f64, usize),
    lkg: (f64, usize),
}

impl Running {
    fn report(&self, weights: &super::losses::LossWeights) -> LossReport {
        let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
        LossReport {
            sup: mean(self.sup).unwrap_or(0.0),
            mix: mean(self.mix),
            mt: mean(self.mt),
            c2l: mean(self.c2l),
            lkg: mean(self.lkg),
            total: 0.0,
        }
        .finish(weights)
    }
}

fn add(acc: &mut (f64, usize), v: f64) {
    acc.0 += v;
    acc.1 += 1;
}

/// Independent stream per (epoch, batch) so skipping a term never shifts
/// the randomness of later batches.
fn batch_rng(seed: u64, epoch: usize, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | batch);
    rng
}

/// Inclination range over every point of the given scans.
fn inclination_range(clouds: &[PointCloud]) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in clouds.iter().flat_map(|c| c.coords()) {
        if *p == [0.0; 3] {
            continue;
        }
        let phi = inclination_unchecked(*p);
        lo = lo.min(phi);
        hi = hi.max(phi);
    }
    (lo < hi).then_some((lo, hi))
}

/// Checks the config against the data before any training happens.
fn check(config: &TrainConfig, data: &TrainData<'_>) -> Result<()> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::Config("no training scans".into()));
    }
    if data.num_classes == 0 || data.num_classes > usize::from(crate::cloud::IGNORE_LABEL) {
        return Err(Error::Config(format!("unsupported class count {}", data.num_classes)));
    }
    for (i, scan) in data.train.iter().chain(data.val).enumerate() {
        if scan.labels().is_none() {
            return Err(Error::Config(format!("scan {i} has no labels")));
        }
        scan.validate_labels(data.num_classes)
            .map_err(|e| Error::Config(format!("scan {i}: {e}")))?;
    }
    if config.strategy.multi_modal() {
        let dim = data.train[0].painted_dim();
        if dim < 2 {
            return Err(Error::Config(format!(
                "{} needs painted scans with at least one feature channel",
                config.strategy
            )));
        }
        if let Some(i) = data.train.iter().chain(data.val).position(|c| c.painted_dim() != dim) {
            return Err(Error::Config(format!("scan {i} has a different painted width")));
        }
        if config.weights.lkg > 0.0 {
            let scores = data
                .scores
                .ok_or_else(|| Error::Config("language guidance needs a score provider".into()))?;
            scores.scores(data.train[0].painted().expect("checked"))
                .map_err(|e| Error::Config(format!("score provider rejects the painted layout: {e}")))?;
        }
    }
    Ok(())
}

/// Trains a student with the configured objective and returns its EMA teacher.
pub fn run_semi_supervised(config: &TrainConfig, data: &TrainData<'_>) -> Result<TrainOutcome> {
    check(config, data)?;
    let strategy = config.strategy;
    let multi_modal = strategy.multi_modal();
    let weights = config.weights;
    let classes = data.num_classes;
    let plan = split_frames(data.train.len(), config.ratio, config.split, config.seed)?;

    let prepare = |cloud: &PointCloud, keep_labels: bool| -> Prepared {
        let mut c = cloud.clone();
        if !multi_modal {
            c = c.without_painted();
        }
        let n = c.len();
        let labels = if keep_labels { c.labels().unwrap_or(&[]).to_vec() } else { vec![crate::cloud::IGNORE_LABEL; n] };
        // rebuild without instance ids so every prepared scan shares one schema
        let mut base = PointCloud::new(c.coords().to_vec(), c.intensity().to_vec()).expect("validated cloud");
        if let Some(p) = c.painted() {
            base = base.with_painted(p.clone()).expect("same length");
        }
        let cloud = base.with_labels(labels).expect("same length");
        let features = point_features(&cloud, multi_modal);
        Prepared { cloud, features }
    };
    let mut labeled: Vec<Prepared> = plan.labeled.iter().map(|&i| prepare(&data.train[i], true)).collect();
    let mut unlabeled: Vec<Prepared> = plan.unlabeled.iter().map(|&i| prepare(&data.train[i], false)).collect();
    // geometry only, so unlabeled scans may contribute
    let norm = FeatureNorm::fit(labeled.iter().chain(&unlabeled).map(|p| &p.features)).expect("non-empty train set");
    for p in labeled.iter_mut().chain(&mut unlabeled) {
        norm.apply(&mut p.features);
    }
    let use_unlabeled = strategy.uses_unlabeled() && !unlabeled.is_empty();

    let (phi_lo, phi_hi) = inclination_range(data.train).unwrap_or((-0.1, 0.1));

    let dim = BASE_FEATURES + if multi_modal { data.train[0].painted_dim() } else { 0 };
    let mut student = ModelParams::seeded(classes, dim, config.init_std, config.seed);
    if multi_modal {
        let d = data.train[0].painted_dim() - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
        let proj = Array2::from_shape_simple_fn((d, classes), || rng.random_range(-0.1..0.1));
        student = student.with_projection(proj)?;
    }
    let mut teacher = student.clone();

    // same step count for every strategy so runs stay comparable
    let batches = labeled.len().max(unlabeled.len());
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order_rng = batch_rng(config.seed, epoch, u64::from(u32::MAX));
        let mut l_order: Vec<usize> = (0..labeled.len()).collect();
        let mut u_order: Vec<usize> = (0..unlabeled.len()).collect();
        l_order.shuffle(&mut order_rng);
        u_order.shuffle(&mut order_rng);

        let warm = epoch < config.warmup;
        if epoch == config.warmup && epoch > 0 {
            teacher = student.clone();
        }
        let mut running = Running::default();
        for b in 0..batches {
            let mut rng = batch_rng(config.seed, epoch, b as u64);
            let mut grads = Gradients::zeros_like(&student);

            let lab = &labeled[l_order[b % labeled.len()]];
            let logits = student.logits(lab.features.view());
            let sup = cross_entropy_loss(softmax(logits.view()).view(), lab.cloud.labels().expect("prepared"))?;
            grads.add_logit_grad(lab.features.view(), sup.grad_logits.view(), 1.0);
            add(&mut running.sup, sup.loss);

            if use_unlabeled && !warm {
                let un = &unlabeled[u_order[b % unlabeled.len()]];
                let teacher_probs = softmax(teacher.logits(un.features.view()).view());
                let pseudo = generate_pseudo_labels(teacher_probs.view(), config.threshold)?;

                if strategy.mixes() && weights.mix > 0.0 {
                    let mut target = un.cloud.clone();
                    target.set_labels(pseudo.masked())?;
                    let partner = if strategy == TrainStrategy::MixUnlabeledOnly {
                        let other = &unlabeled[rng.random_range(0..unlabeled.len())];
                        let probs = softmax(teacher.logits(other.features.view()).view());
                        let mut c = other.cloud.clone();
                        c.set_labels(generate_pseudo_labels(probs.view(), config.threshold)?.masked())?;
                        c
                    } else {
                        labeled[rng.random_range(0..labeled.len())].cloud.clone()
                    };
                    let m = rng.random_range(config.m_min..=config.m_max);
                    let partition = make_inclination_partition(phi_lo, phi_hi, m)?;
                    let out = if multi_modal {
                        multi_modal_laser_mix(&partner, &target, &partition)?
                    } else {
                        laser_mix(&partner, &target, &partition)?
                    };
                    let mixed = out.mixed_a.concat(&out.mixed_b)?;
                    let mut feats = point_features(&mixed, multi_modal);
                    norm.apply(&mut feats);
                    let probs = softmax(student.logits(feats.view()).view());
                    match cross_entropy_loss(probs.view(), mixed.labels().expect("labeled mix")) {
                        Ok(mix) => {
                            grads.add_logit_grad(feats.view(), mix.grad_logits.view(), weights.mix);
                            add(&mut running.mix, mix.loss);
                        }
                        Err(Error::EmptyInput(_)) => {}
                        Err(e) => return Err(e),
                    }
                }

                let un_logits = (weights.mt > 0.0 || multi_modal).then(|| student.logits(un.features.view()));
                if weights.mt > 0.0 {
                    let logits = un_logits.as_ref().expect("computed");
                    let mt = mean_teacher_loss(softmax(logits.view()).view(), teacher_probs.view())?;
                    grads.add_logit_grad(un.features.view(), mt.grad_logits.view(), weights.mt);
                    add(&mut running.mt, mt.loss);
                }

                if multi_modal && (weights.c2l > 0.0 || weights.lkg > 0.0) {
                    let logits = un_logits.as_ref().expect("computed");
                    let painted = un.cloud.painted().expect("checked");
                    let (img, mask) = split_painted(painted)?;
                    if weights.c2l > 0.0 {
                        match c2l_loss(&student, logits.view(), img.view(), &mask) {
                            Ok(c2l) => {
                                grads.add_logit_grad(un.features.view(), c2l.grad_logits.view(), weights.c2l);
                                grads.add_projection_grad(&c2l.grad_projection, weights.c2l);
                                add(&mut running.c2l, c2l.loss);
                            }
                            Err(Error::EmptyInput(_)) => {}
                            Err(e) => return Err(e),
                        }
                    }
                    if weights.lkg > 0.0 {
                        let provider = data.scores.expect("checked");
                        let (scores, mask) = provider.scores(painted)?;
                        match lkg_loss(logits.view(), scores.view(), &mask) {
                            Ok(lkg) => {
                                grads.add_logit_grad(un.features.view(), lkg.grad_logits.view(), weights.lkg);
                                add(&mut running.lkg, lkg.loss);
                            }
                            Err(Error::EmptyInput(_)) => {}
                            Err(e) => return Err(e),
                        }
                    }
                }
            }

            if config.clip > 0.0 {
                grads.clip(config.clip);
            }
            student = sgd_step(&student, &grads, config.lr);
            teacher = ema_update(&teacher, &student, config.ema)?;
            if !student.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "training diverged at epoch {epoch}, batch {b}; lower the learning rate"
                )));
            }
        }
        history.push(running.report(&weights));
    }

    let teacher = norm.fold(&teacher);
    let student = norm.fold(&student);
    let metrics = if data.val.is_empty() {
        None
    } else {
        let val: Vec<PointCloud> = data
            .val
            .iter()
            .map(|c| if multi_modal { c.clone() } else { c.clone().without_painted() })
            .collect();
        Some(evaluate(&teacher, &val)?)
    };
    Ok(TrainOutcome {
        teacher,
        student,
        plan,
        history,
        metrics,
    })
}
