//! Adam training with best-validation selection, and a finite-difference
//! gradient check.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::SurrogateModel;
use super::sample::LearningSample;
use super::tape::Mat;
use super::SurrogateError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSchedule {
    pub epochs: usize,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Cosine decay of the step size from `learning_rate` down to
    /// `learning_rate * final_lr_fraction` over the planned steps.
    pub cosine_decay: bool,
    pub final_lr_fraction: f64,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            epochs: 100,
            max_steps: None,
            batch_size: 1,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            cosine_decay: false,
            final_lr_fraction: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub steps: usize,
}

/// Keeps the parameters with the lowest validation loss; ties keep the
/// earlier epoch.
#[derive(Debug, Clone, Default)]
pub struct BestTracker {
    best: Option<(usize, f64, Vec<Mat>)>,
}

impl BestTracker {
    pub fn update(&mut self, epoch: usize, val_loss: f64, params: &[Mat]) {
        let better = match &self.best {
            None => true,
            Some((_, b, _)) => val_loss < *b,
        };
        if better {
            self.best = Some((epoch, val_loss, params.to_vec()));
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.as_ref().map(|b| b.0)
    }

    pub fn into_params(self) -> Option<(usize, Vec<Mat>)> {
        self.best.map(|(e, _, p)| (e, p))
    }
}

struct Adam {
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: i32,
}

impl Adam {
    fn new(params: &[Mat]) -> Self {
        let z: Vec<Mat> = params.iter().map(|p| Mat::zeros(p.rows, p.cols)).collect();
        Adam { m: z.clone(), v: z, t: 0 }
    }

    fn step(&mut self, params: &mut [Mat], grads: &[Mat], s: &TrainSchedule, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - s.beta1.powi(self.t);
        let c2 = 1.0 - s.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = s.beta1 * m.data[i] + (1.0 - s.beta1) * gi;
                v.data[i] = s.beta2 * v.data[i] + (1.0 - s.beta2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= lr * mh / (vh.sqrt() + s.epsilon);
            }
        }
    }
}

/// Mean loss over a set of samples.
pub fn mean_loss(model: &SurrogateModel, samples: &[LearningSample]) -> Result<f64, SurrogateError> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let mut s = 0.0;
    for smp in samples {
        s += model.loss(smp)?;
    }
    Ok(s / samples.len() as f64)
}

/// Trains in place and returns the loss history. The model ends up holding
/// the parameters of the best validation epoch, or of the last epoch when
/// `val` is empty.
pub fn train(
    model: &mut SurrogateModel,
    train_set: &[LearningSample],
    val: &[LearningSample],
    schedule: &TrainSchedule,
) -> Result<TrainHistory, SurrogateError> {
    if train_set.is_empty() {
        return Err(SurrogateError::Data("training set is empty".into()));
    }
    if schedule.batch_size == 0 || !(schedule.learning_rate >= 0.0) {
        return Err(SurrogateError::Config("batch size must be positive and learning rate non-negative".into()));
    }
    let per_epoch = train_set.len().div_ceil(schedule.batch_size);
    let planned = schedule.max_steps.unwrap_or(usize::MAX).min(schedule.epochs.saturating_mul(per_epoch)).max(1);
    let step_size = |step: usize| {
        if !schedule.cosine_decay {
            return schedule.learning_rate;
        }
        let progress = (step as f64 / planned as f64).min(1.0);
        let lo = schedule.learning_rate * schedule.final_lr_fraction;
        lo + 0.5 * (schedule.learning_rate - lo) * (1.0 + (std::f64::consts::PI * progress).cos())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut adam = Adam::new(&model.params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut hist = TrainHistory::default();
    let mut tracker = BestTracker::default();
    'epochs: for epoch in 1..=schedule.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(schedule.batch_size) {
            if schedule.max_steps.is_some_and(|m| hist.steps >= m) {
                break;
            }
            let mut acc: Option<Vec<Mat>> = None;
            for &i in batch {
                let (l, g) = model.loss_and_grad(&train_set[i])?;
                if !l.is_finite() || g.iter().any(|m| !m.is_finite()) {
                    return Err(SurrogateError::NonFiniteLoss {
                        epoch,
                        step: hist.steps,
                        case_id: train_set[i].case_id.clone(),
                    });
                }
                epoch_loss += l;
                seen += 1;
                match &mut acc {
                    None => acc = Some(g),
                    Some(a) => {
                        for (x, y) in a.iter_mut().zip(&g) {
                            x.data.iter_mut().zip(&y.data).for_each(|(p, q)| *p += q);
                        }
                    }
                }
            }
            let mut g = acc.expect("non-empty batch");
            let inv = 1.0 / batch.len() as f64;
            g.iter_mut().for_each(|m| m.data.iter_mut().for_each(|x| *x *= inv));
            adam.step(&mut model.params, &g, schedule, step_size(hist.steps));
            hist.steps += 1;
        }
        if seen == 0 {
            break 'epochs;
        }
        hist.train_loss.push(epoch_loss / seen as f64);
        if val.is_empty() {
            hist.best_epoch = epoch;
        } else {
            let vl = mean_loss(model, val)?;
            if !vl.is_finite() {
                return Err(SurrogateError::NonFiniteLoss { epoch, step: hist.steps, case_id: "validation".into() });
            }
            hist.val_loss.push(vl);
            tracker.update(epoch, vl, &model.params);
        }
    }
    if let Some((epoch, params)) = tracker.into_params() {
        model.params = params;
        hist.best_epoch = epoch;
    }
    Ok(hist)
}

/// Largest relative error between reverse-mode gradients and fourth-order
/// central differences with step `eps` over at least 50 randomly chosen
/// scalar parameters (all of them when the model has fewer). Relative errors
/// use `|a − f| / max(|a|, |f|, τ)` with `τ = 1e-5 · max(1, |L|)`: entries
/// smaller than that are below what the difference quotient resolves.
pub fn grad_check(model: &SurrogateModel, sample: &LearningSample, eps: f64, seed: u64) -> Result<f64, SurrogateError> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(SurrogateError::Config(format!("eps {eps} outside [1e-7, 1e-3]")));
    }
    let (loss, grads) = model.loss_and_grad(sample)?;
    let floor = 1e-5 * loss.abs().max(1.0);
    let total = model.param_count();
    let mut picks: Vec<(usize, usize)> = Vec::new();
    if total <= 50 {
        for (t, p) in model.params.iter().enumerate() {
            picks.extend((0..p.data.len()).map(|e| (t, e)));
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // one entry from every tensor first so each stage is exercised
        for (t, p) in model.params.iter().enumerate() {
            picks.push((t, rng.random_range(0..p.data.len())));
        }
        while picks.len() < 50 {
            let t = rng.random_range(0..model.params.len());
            picks.push((t, rng.random_range(0..model.params[t].data.len())));
        }
    }
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (t, e) in picks {
        let orig = probe.params[t].data[e];
        let mut at = |d: f64| -> Result<f64, SurrogateError> {
            probe.params[t].data[e] = orig + d;
            let l = probe.loss(sample);
            probe.params[t].data[e] = orig;
            l
        };
        let fd = (8.0 * (at(eps)? - at(-eps)?) - (at(2.0 * eps)? - at(-2.0 * eps)?)) / (12.0 * eps);
        let an = grads[t].data[e];
        let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(floor);
        worst = worst.max(rel);
    }
    Ok(worst)
}
