use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::augment::augment;
use super::config::TrainConfig;
use super::loss::{iteration_weights, segmentation_loss, total_loss, total_loss_value};
use crate::autodiff::{AdamState, NdArray, Params, Tape, TapeExec, Var};
use crate::checkpoint::{Checkpoint, Provenance};
use crate::data::{pad_mask_with_false, pad_to_multiple, FundusSample};
use crate::error::{Error, Result};
use crate::networks::{Rrwnet, ARTERY, REFINER_PREFIX, VESSEL};

pub const LOG_HEADER: &str = "epoch,train_loss,val_loss,best_so_far,seconds";

/// Combines seed components into one well-mixed seed (SplitMix64 steps).
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x9e37_79b9_7f4a_7c15u64, |acc, &p| {
        let mut z = acc ^ p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(acc << 6).wrapping_add(acc >> 2);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    })
}

/// Pads a sample to multiples of `factor`: the image by reflection, the
/// ground truth and masks with background.
pub fn pad_sample(s: &FundusSample, factor: usize) -> Result<FundusSample> {
    let (image, _) = pad_to_multiple(&s.image, factor)?;
    let (_, ph, pw) = image.chw()?;
    let (h, w) = s.dims();
    let gt = NdArray::from_fn(&[3, ph, pw], |i| {
        let (c, y, x) = (i / (ph * pw), (i / pw) % ph, i % pw);
        if y < h && x < w {
            s.gt.data()[c * h * w + y * w + x]
        } else {
            0.0
        }
    });
    Ok(FundusSample {
        image,
        gt,
        roi: pad_mask_with_false(&s.roi, factor),
        crossing: pad_mask_with_false(&s.crossing, factor),
        uncertain: pad_mask_with_false(&s.uncertain, factor),
        ..s.clone()
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub best_so_far: f64,
    pub seconds: f64,
}

impl EpochRecord {
    pub fn log_line(&self) -> String {
        format!("{},{},{},{},{:.3}", self.epoch, self.train_loss, self.val_loss, self.best_so_far, self.seconds)
    }
}

/// Stops once `patience` epochs pass without a strict improvement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: f64::INFINITY, best_epoch: 0 }
    }

    /// Records the loss of 1-based `epoch`; returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> (bool, bool) {
        let improved = loss < self.best;
        if improved {
            self.best = loss;
            self.best_epoch = epoch;
        }
        (improved, epoch >= self.best_epoch + self.patience)
    }
}

/// One optimisation step on a padded sample; returns the loss before the update.
pub fn train_step(
    model: &Rrwnet,
    params: &mut Params<f32>,
    adam: &mut AdamState<f32>,
    sample: &FundusSample,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let stages = {
        let mut ex = TapeExec::new(&mut tape, &bound);
        model.forward_stages(&mut ex, sample.image.clone())?
    };
    let loss = total_loss(&mut tape, &stages, &sample.gt, Some(sample.roi.data()), model.config.k)?;
    let value = tape.value(loss).item()? as f64;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("non-finite training loss {value} on {}", sample.identifier)));
    }
    tape.backward(loss)?;
    adam.step(params, &bound.grads_or_zero(&tape))?;
    Ok(value)
}

/// Mean total loss without augmentation over padded samples.
pub fn validation_loss(model: &Rrwnet, params: &Params<f32>, samples: &[FundusSample]) -> Result<f64> {
    let mut sum = 0.0;
    for s in samples {
        let stages = model.predict_stages(params, &s.image)?;
        sum += total_loss_value(&stages, &s.gt, Some(s.roi.data()), model.config.k)?;
    }
    Ok(sum / samples.len() as f64)
}

/// Weighted refinement loss of `k` refiner applications on fixed input maps.
/// Stage weights are `w_1..w_K`; the input itself carries no gradient.
pub fn refiner_step(
    model: &Rrwnet,
    params: &mut Params<f32>,
    adam: &mut AdamState<f32>,
    maps: &NdArray<f32>,
    gt: &NdArray<f32>,
    roi: &[bool],
    k: usize,
) -> Result<f64> {
    let refiner = model
        .config
        .refiner
        .ok_or_else(|| Error::InvalidArgument(format!("variant {} has no refiner", model.config.variant)))?;
    if k == 0 {
        return Err(Error::InvalidArgument("refiner training needs k >= 1".into()));
    }
    let n = refiner.in_channels;
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let weights = iteration_weights(k);
    let mut terms = Vec::with_capacity(k);
    {
        let mut ex = TapeExec::new(&mut tape, &bound);
        let input: Var = ex.tape.constant(maps.clone());
        let mut cur = ex.tape.slice_channels(input, ARTERY, n)?;
        let bv = ex.tape.slice_channels(input, VESSEL, 1)?;
        let mut stages = Vec::with_capacity(k);
        for _ in 0..k {
            cur = refiner.forward(&mut ex, &cur, REFINER_PREFIX)?;
            stages.push(if n == 2 { ex.tape.concat_channels(cur, bv)? } else { cur });
        }
        for (s, w) in stages.into_iter().zip(&weights[1..]) {
            let l = segmentation_loss(ex.tape, s, gt, Some(roi))?;
            terms.push((l, *w as f32));
        }
    }
    let loss = tape.weighted_sum(&terms)?;
    let value = tape.value(loss).item()? as f64;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("non-finite refiner loss {value}")));
    }
    tape.backward(loss)?;
    adam.step(params, &bound.grads_or_zero(&tape))?;
    Ok(value)
}

/// Where and how a training run reports progress.
#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Receives the CSV training log, header first.
    pub log: Option<&'a mut dyn Write>,
    /// Written with the current state if the loss becomes non-finite.
    pub diagnostic_path: Option<PathBuf>,
    pub fold: Option<usize>,
}

pub struct TrainResult {
    /// Parameters at the epoch with the lowest validation loss.
    pub best: Checkpoint,
    /// State after the last epoch, including optimiser moments.
    pub last: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

/// Training state that can be checkpointed and resumed between epochs.
pub struct Trainer {
    pub model: Rrwnet,
    pub config: TrainConfig,
    pub params: Params<f32>,
    pub adam: AdamState<f32>,
    /// Completed epochs.
    pub epoch: usize,
    pub fold: Option<usize>,
}

impl Trainer {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Rrwnet::new(config.model())?;
        let params = model.init_params::<f32>(config.seed)?;
        let adam = AdamState::new(&params, config.adam())?;
        Ok(Trainer { model, config: *config, params, adam, epoch: 0, fold: None })
    }

    /// Restores parameters, optimiser state and epoch counter.
    pub fn resume(config: &TrainConfig, ckpt: &Checkpoint) -> Result<Self> {
        let mut t = Trainer::new(config)?;
        if ckpt.model != t.model.config {
            return Err(Error::Checkpoint("checkpoint model does not match the training config".into()));
        }
        t.params = ckpt.params.clone();
        t.adam = match &ckpt.optimizer {
            Some(a) => a.clone(),
            None => AdamState::new(&t.params, config.adam())?,
        };
        t.epoch = ckpt.provenance.epoch;
        t.fold = ckpt.provenance.fold;
        Ok(t)
    }

    pub fn checkpoint(&self, with_optimizer: bool, val_loss: Option<f64>, note: &str) -> Checkpoint {
        Checkpoint {
            model: self.model.config,
            provenance: Provenance {
                seed: self.config.seed,
                epoch: self.epoch,
                fold: self.fold,
                val_loss,
                note: note.to_string(),
            },
            params: self.params.clone(),
            optimizer: with_optimizer.then(|| self.adam.clone()),
        }
    }

    /// Pads samples to the network's size factor.
    pub fn prepare(&self, samples: &[FundusSample]) -> Result<Vec<FundusSample>> {
        let f = self.model.config.size_factor();
        samples.iter().map(|s| pad_sample(s, f)).collect()
    }

    /// The augmented sample for step `step` of epoch `epoch`; depends only on the seed.
    pub fn augmented(&self, sample: &FundusSample, epoch: usize, step: usize) -> FundusSample {
        if self.config.augmentation.is_disabled() {
            return sample.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[self.config.seed, epoch as u64, step as u64, 1]));
        augment(sample, &self.config.augmentation, &mut rng)
    }

    /// Visiting order of the training samples in 1-based `epoch`.
    pub fn epoch_order(&self, n: usize, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[self.config.seed, epoch as u64, 0]));
        order.shuffle(&mut rng);
        order
    }

    /// Runs one epoch over prepared samples; returns the mean training loss.
    pub fn run_epoch(&mut self, train: &[FundusSample]) -> Result<f64> {
        let epoch = self.epoch + 1;
        let mut sum = 0.0;
        for (step, idx) in self.epoch_order(train.len(), epoch).into_iter().enumerate() {
            let sample = self.augmented(&train[idx], epoch, step);
            sum += train_step(&self.model, &mut self.params, &mut self.adam, &sample)?;
        }
        self.epoch = epoch;
        Ok(sum / train.len() as f64)
    }

    /// Trains until early stopping or `max_epochs`. With an empty validation
    /// set the training loss drives early stopping.
    pub fn fit(&mut self, train: &[FundusSample], val: &[FundusSample], opts: TrainOptions<'_>) -> Result<TrainResult> {
        if train.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        self.fold = opts.fold.or(self.fold);
        let train = self.prepare(train)?;
        let val = self.prepare(val)?;
        let mut log = opts.log;
        let io = |e| Error::io("training log", e);
        if let Some(w) = log.as_deref_mut() {
            writeln!(w, "{LOG_HEADER}").map_err(io)?;
        }
        let mut stopper = EarlyStopping::new(self.config.early_stop_patience);
        let mut best = self.checkpoint(false, None, "initial");
        let mut history = Vec::new();
        let mut stopped_early = false;
        while self.epoch < self.config.max_epochs {
            let start = Instant::now();
            let train_loss = match self.run_epoch(&train) {
                Ok(l) => l,
                Err(e @ Error::Numeric(_)) => {
                    if let Some(p) = &opts.diagnostic_path {
                        self.checkpoint(true, None, &format!("diagnostic: {e}")).save(p)?;
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            let val_loss = if val.is_empty() { train_loss } else { validation_loss(&self.model, &self.params, &val)? };
            if !val_loss.is_finite() {
                if let Some(p) = &opts.diagnostic_path {
                    self.checkpoint(true, None, "diagnostic: non-finite validation loss").save(p)?;
                }
                return Err(Error::Numeric(format!("non-finite validation loss at epoch {}", self.epoch)));
            }
            let (improved, stop) = stopper.observe(self.epoch, val_loss);
            if improved {
                best = self.checkpoint(false, Some(val_loss), "best validation loss");
            }
            let rec = EpochRecord {
                epoch: self.epoch,
                train_loss,
                val_loss,
                best_so_far: stopper.best,
                seconds: start.elapsed().as_secs_f64(),
            };
            if let Some(w) = log.as_deref_mut() {
                writeln!(w, "{}", rec.log_line()).map_err(io)?;
            }
            history.push(rec);
            if stop {
                stopped_early = true;
                break;
            }
        }
        let last = self.checkpoint(true, history.last().map(|r| r.val_loss), "last epoch");
        Ok(TrainResult { best, last, history, stopped_early })
    }
}

/// Seeded `folds`-way partition: each entry is `(train, val)` indices, with
/// validation folds disjoint and covering `0..n`.
pub fn cross_validation_split(n: usize, folds: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("cross-validation needs at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(Error::InvalidArgument(format!("{n} samples cannot be split into {folds} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0xf01d])));
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = n / folds + usize::from(f < n % folds);
        let mut val = idx[start..start + len].to_vec();
        let mut train: Vec<usize> = idx[..start].iter().chain(&idx[start + len..]).copied().collect();
        val.sort_unstable();
        train.sort_unstable();
        out.push((train, val));
        start += len;
    }
    Ok(out)
}

/// Seeded train/validation holdout with `fraction` of the samples (at least
/// one when `n >= 2`) held out.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0x401d])));
    let n_val = if n < 2 { 0 } else { ((n as f64 * fraction).round() as usize).clamp(1, n - 1) };
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stop_after_patience() {
        let mut s = EarlyStopping::new(5);
        let losses = [3.0, 2.0, 1.0, 1.0, 1.5, 1.0, 2.0, 1.0, 1.0];
        let mut stopped = None;
        for (i, l) in losses.iter().enumerate() {
            if s.observe(i + 1, *l).1 {
                stopped = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped, Some(8));
        assert_eq!(s.best_epoch, 3);
    }

    #[test]
    fn fold_sizes() {
        let split = cross_validation_split(20, 4, 1).unwrap();
        assert_eq!(split.iter().map(|f| f.1.len()).collect::<Vec<_>>(), vec![5, 5, 5, 5]);
        assert!(cross_validation_split(3, 4, 1).is_err());
        let (t, v) = holdout_split(10, 0.2, 3);
        assert_eq!((t.len(), v.len()), (8, 2));
        assert_eq!(holdout_split(1, 0.2, 3), (vec![0], vec![]));
    }
}
