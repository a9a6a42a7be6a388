use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Real, Tape};
use crate::evaluation::{thresholded_metrics, MetricReport};
use crate::model::AdFormer;
use crate::pipeline::{ForecastBatch, Normalizer};
use crate::training::{clip_global_norm, denormalize_var, lr_schedule, masked_mae_loss, AdamW, TrainConfig};
use crate::{Error, Result};

/// One line of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_mae: Option<f64>,
    pub val_rmse: Option<f64>,
    pub val_mape: Option<f64>,
}

impl EpochRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("history records serialise")
    }
}

/// Windows and the normaliser their inputs were scaled with.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub train: &'a [ForecastBatch],
    pub val: &'a [ForecastBatch],
    pub normalizer: &'a Normalizer,
}

/// Hooks invoked by [`train`]; all default to doing nothing.
pub trait TrainObserver<T> {
    fn on_epoch(&mut self, _record: &EpochRecord) -> Result<()> {
        Ok(())
    }

    /// Called with the model after every epoch that improves the validation
    /// score.
    fn on_improvement(&mut self, _model: &AdFormer<T>, _record: &EpochRecord) -> Result<()> {
        Ok(())
    }

    fn on_abort(&mut self, _epoch: usize, _reason: &str) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores every event.
#[derive(Debug, Default, Clone, Copy)]
pub struct Silent;

impl<T> TrainObserver<T> for Silent {}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters of the best validation epoch.
    pub best: AdFormer<T>,
    pub best_epoch: usize,
    pub best_score: f64,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

/// Raw-unit forecasts for `windows`, concatenated in window order. Chunks of
/// `batch_size` windows are predicted in parallel.
pub fn predict_windows<T: Real>(
    model: &AdFormer<T>,
    windows: &[ForecastBatch],
    normalizer: &Normalizer,
    batch_size: usize,
) -> Result<Vec<f64>> {
    let parts = windows
        .par_chunks(batch_size.max(1))
        .map(|chunk| {
            let batch = ForecastBatch::stack(&chunk.iter().collect::<Vec<_>>())?;
            Ok(normalizer.denormalize_slice(&model.predict(&batch)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.concat())
}

/// Thresholded metrics of `model` over `windows`.
pub fn evaluate_windows<T: Real>(
    model: &AdFormer<T>,
    windows: &[ForecastBatch],
    normalizer: &Normalizer,
    batch_size: usize,
    threshold: f64,
) -> Result<MetricReport> {
    let first = windows
        .first()
        .ok_or_else(|| Error::Config("no windows to evaluate".into()))?;
    let pred = predict_windows(model, windows, normalizer, batch_size)?;
    let target: Vec<f64> = windows.iter().flat_map(|w| w.targets.iter().copied()).collect();
    let shape = [pred.len() / (first.horizon * first.regions * first.features), first.horizon, first.regions, first.features];
    MetricReport::compute(&pred, &target, shape, threshold)
}

/// Masked validation MAE, or the unmasked MAE when no cell qualifies.
fn validation_score(report: &MetricReport, pred_target: impl FnOnce() -> Result<f64>) -> Result<f64> {
    match report.overall.mae {
        Some(v) => Ok(v),
        None => pred_target(),
    }
}

/// Runs the training loop.
///
/// Each epoch shuffles the training windows with the seeded generator, takes
/// one AdamW step per mini-batch on the masked MAE of the denormalised
/// forecast, then scores the validation windows. Training stops after
/// `patience + 1` consecutive epochs without a strict improvement.
pub fn train<T: Real>(
    mut model: AdFormer<T>,
    data: TrainingData<'_>,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver<T>,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::Config("training and validation windows must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut opt = AdamW::new(
        model.params().arrays(),
        config.beta1,
        config.beta2,
        config.eps,
        config.weight_decay,
    );
    let val_targets: Vec<f64> = data.val.iter().flat_map(|w| w.targets.iter().copied()).collect();
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut tape = Tape::<T>::new();
    let mut history = Vec::new();
    let mut best: Option<(AdFormer<T>, usize, f64)> = None;
    let mut stale = 0usize;
    let mut stopped_early = false;

    for epoch in 0..config.epochs {
        let lr = lr_schedule(epoch, config.epochs, config.lr_start, config.lr_end);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let parts: Vec<&ForecastBatch> = chunk.iter().map(|&i| &data.train[i]).collect();
            let batch = ForecastBatch::stack(&parts)?;
            tape.clear();
            let vars = model.bind(&mut tape);
            let out = model.forward(&mut tape, &vars, &batch)?;
            let pred = denormalize_var(&mut tape, out.prediction, data.normalizer)?;
            let loss = masked_mae_loss(&mut tape, pred, &batch.targets, config.threshold)?;
            let value = tape.value(loss).data()[0].to_f64_lossless();
            if !value.is_finite() {
                let reason = format!("non-finite training loss at epoch {epoch}, batch {step}");
                observer.on_abort(epoch, &reason)?;
                return Err(Error::Numeric(reason));
            }
            tape.backward(loss)?;
            let mut grads = Vec::with_capacity(vars.len());
            for (name, &v) in model.params().names().iter().zip(&vars) {
                let g = tape.grad(v).map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); tape.value(v).numel()]);
                if g.iter().any(|x| !x.is_finite()) {
                    let reason = format!("non-finite gradient for {name} at epoch {epoch}, batch {step}");
                    observer.on_abort(epoch, &reason)?;
                    return Err(Error::Numeric(reason));
                }
                grads.push(g);
            }
            clip_global_norm(&mut grads, config.clip_norm);
            opt.step(model.params_mut().arrays_mut(), &grads, lr)?;
            loss_sum += value * batch.batch as f64;
            seen += batch.batch;
        }

        let report = evaluate_windows(&model, data.val, data.normalizer, config.batch_size, config.threshold)?;
        let score = validation_score(&report, || {
            let pred = predict_windows(&model, data.val, data.normalizer, config.batch_size)?;
            Ok(thresholded_metrics(&pred, &val_targets, f64::NEG_INFINITY)?
                .mae
                .unwrap_or(f64::INFINITY))
        })?;
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / seen as f64,
            val_mae: report.overall.mae,
            val_rmse: report.overall.rmse,
            val_mape: report.overall.mape,
        };
        observer.on_epoch(&record)?;
        let improved = best.as_ref().is_none_or(|b| score < b.2);
        if improved {
            observer.on_improvement(&model, &record)?;
            best = Some((model.clone(), epoch, score));
            stale = 0;
        } else {
            stale += 1;
        }
        history.push(record);
        if stale > config.patience {
            stopped_early = true;
            break;
        }
    }
    let (best, best_epoch, best_score) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_score,
        history,
        stopped_early,
    })
}
