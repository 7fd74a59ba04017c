//! Mini-batch BPTT training.
//!
//! Every example is unrolled to its own length (encoder streams and decoder
//! horizon), so a batch is a sum of exact per-example gradients and needs no
//! padding.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DecoderVariant, ForecastExample, LossMode, Seq2Seq};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::param::Parameterized;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// `None` picks the decoder variant's default.
    pub loss_mode: Option<LossMode>,
    /// Stop after this many epochs without a lower training loss.
    pub patience: Option<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 100,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            loss_mode: None,
            patience: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Mean example loss per epoch, in epoch order.
    pub loss_trace: Vec<f64>,
    pub used_examples: usize,
    /// Examples that cannot contribute (empty input, no scored target).
    pub rejected: usize,
    /// Variable-length examples whose first target is missing.
    pub skipped_first_missing: usize,
    pub stopped_early: bool,
}

impl TrainingReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.loss_trace.last().copied()
    }
}

/// Trains `model` in place. The model's input mean is refitted from the
/// examples' available points first.
pub fn train(model: &mut Seq2Seq, examples: &[ForecastExample], cfg: &TrainingConfig) -> Result<TrainingReport> {
    if examples.is_empty() {
        return Err(Error::Data("no training examples".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Usage("batch size must be positive".into()));
    }
    let mode = cfg.loss_mode.unwrap_or(model.config.decoder.default_loss_mode());
    model.fit_input_mean(examples)?;

    let mut usable = Vec::with_capacity(examples.len());
    let mut rejected = 0;
    let mut skipped_first_missing = 0;
    let variable_length = model.config.decoder == DecoderVariant::VariableLength;
    for (i, ex) in examples.iter().enumerate() {
        if variable_length && matches!(ex.targets.first(), Some(None)) {
            skipped_first_missing += 1;
            continue;
        }
        match model.example_loss(ex, mode) {
            Ok(_) => usable.push(i),
            Err(Error::Rejected(_)) => rejected += 1,
            Err(e) => return Err(e),
        }
    }
    if skipped_first_missing > 0 {
        log::warn!("skipped {skipped_first_missing} examples whose first target is missing");
    }
    if usable.is_empty() {
        return Err(Error::Data(format!(
            "all {} examples rejected ({rejected} unusable, {skipped_first_missing} with a missing first target)",
            examples.len()
        )));
    }

    let mut optimizer = Optimizer::new(cfg.optimizer)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    model.zero_grads();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        usable.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in usable.chunks(cfg.batch_size).enumerate() {
            let weight = 1.0 / batch.len() as f64;
            for &i in batch {
                let l = model.accumulate_gradients(&examples[i], mode, weight)?;
                if !l.is_finite() {
                    return Err(Error::Diverged(format!(
                        "loss {l} on example {i} (epoch {}, batch {b})",
                        epoch + 1
                    )));
                }
                total += l;
            }
            optimizer.step(&mut model.params_mut()).map_err(|e| match e {
                Error::Diverged(msg) => Error::Diverged(format!("epoch {}, batch {b}: {msg}", epoch + 1)),
                other => other,
            })?;
        }
        let epoch_loss = total / usable.len() as f64;
        trace.push(epoch_loss);

        if let Some(p) = cfg.patience {
            if epoch_loss < best {
                best = epoch_loss;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= p {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    Ok(TrainingReport {
        loss_trace: trace,
        used_examples: usable.len(),
        rejected,
        skipped_first_missing,
        stopped_early,
    })
}

/// Mean loss over the examples that can be scored.
pub fn evaluate_loss(model: &Seq2Seq, examples: &[ForecastExample], mode: LossMode) -> Option<f64> {
    let losses: Vec<f64> = examples
        .iter()
        .filter_map(|e| model.example_loss(e, mode).ok())
        .collect();
    (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64)
}
