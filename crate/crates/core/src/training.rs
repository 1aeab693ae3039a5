//! Epoch loop, validation, early stopping and learning curves.
//!
//! Randomness comes from one generator. Model initialization draws from
//! it first; then, for each epoch, the shuffle draws first, followed by
//! the dropout masks of every batch in forward order.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tensor::{Element, GradStore, Graph, ParamStore, Rng};

use crate::corpus::EncodedSet;
use crate::error::{Error, Result};
use crate::losses::Criterion;
use crate::metrics::predict_labels;
use crate::models::Model;
use crate::optim::{OptimConfig, Optimizer};

/// Batch size used for evaluation passes. Eval results do not depend on it.
pub const EVAL_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when training runs without validation data.
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub wall_seconds: f64,
}

impl TrainRecord {
    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        (self.epoch, self.train_loss, self.val_loss, self.val_accuracy)
            == (other.epoch, other.train_loss, other.val_loss, other.val_accuracy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Waiting,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strictly lower
/// validation loss.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopState {
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub patience: usize,
    pub counter: usize,
}

impl EarlyStopState {
    pub fn new(patience: usize) -> Self {
        Self {
            best_val_loss: f64::INFINITY,
            best_epoch: 0,
            patience,
            counter: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> Verdict {
        if val_loss < self.best_val_loss {
            self.best_val_loss = val_loss;
            self.best_epoch = epoch;
            self.counter = 0;
            Verdict::Improved
        } else {
            self.counter += 1;
            if self.counter >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Waiting
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub records: Vec<TrainRecord>,
    /// Epoch whose weights the model holds after training, when validation
    /// was run.
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub stopped_early: bool,
}

/// Loss and accuracy of a model over a whole set, in eval mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: Option<f64>,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
}

pub fn evaluate<T: Element>(model: &Model<T>, set: &EncodedSet, criterion: Option<&Criterion>) -> Result<Evaluation> {
    let classes = model.config.num_classes;
    let (mut num, mut den) = (0.0, 0.0);
    let mut predictions = Vec::with_capacity(set.len());
    for batch in set.batches(EVAL_BATCH, None)? {
        let logits = model.logits(&batch)?;
        if let Some(c) = criterion {
            let (n, d) = c.sums(logits.data(), &batch.labels)?;
            num += n;
            den += d;
        }
        predictions.extend(predict_labels(logits.data(), classes));
    }
    let correct = predictions.iter().zip(&set.labels).filter(|(p, t)| p == t).count();
    Ok(Evaluation {
        loss: criterion.map(|_| num / den),
        accuracy: correct as f64 / set.len().max(1) as f64,
        predictions,
    })
}

/// Optimizer state and gradient buffers for one model.
pub struct Trainer<T: Element> {
    pub criterion: Criterion,
    optimizer: Optimizer,
    grads: GradStore<T>,
}

impl<T: Element> Trainer<T> {
    pub fn new(model: &Model<T>, criterion: Criterion, optim: OptimConfig) -> Result<Self> {
        Ok(Self {
            criterion,
            optimizer: Optimizer::new(optim, &model.params)?,
            grads: GradStore::for_params(&model.params),
        })
    }

    /// One pass over `set` in a shuffled order; returns the epoch's training
    /// loss (criterion over the union of batches, as seen during the pass).
    pub fn epoch(&mut self, model: &mut Model<T>, set: &EncodedSet, batch_size: usize, epoch: usize, rng: &mut Rng) -> Result<f64> {
        if set.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        model.train();
        let (mut num, mut den) = (0.0, 0.0);
        for (index, batch) in set.batches(batch_size, Some(rng))?.into_iter().enumerate() {
            self.grads.zero();
            let (n, d) = {
                let mut g = Graph::with_params(&model.params);
                let logits = model.forward(&mut g, &batch, rng).map_err(|e| match e {
                    Error::NonFiniteLayer { layer } => {
                        log::error!("epoch {epoch}, batch {index}: non-finite output in {layer}");
                        Error::NonFiniteLayer { layer }
                    }
                    other => other,
                })?;
                let sums = self.criterion.sums(g.value(logits).data(), &batch.labels)?;
                let loss = self.criterion.forward(&mut g, logits, &batch.labels)?;
                if !g.value(loss).item().is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: index });
                }
                g.backward(loss, Some(&mut self.grads))?;
                sums
            };
            self.optimizer.step(&mut model.params, &mut self.grads)?;
            num += n;
            den += d;
        }
        Ok(num / den)
    }
}

/// Trains for up to `opts.epochs` epochs. With validation data, each epoch
/// ends with a validation pass under the training criterion; early
/// stopping watches that loss and the best epoch's weights are restored
/// at the end.
pub fn train<T: Element>(
    model: &mut Model<T>,
    train_set: &EncodedSet,
    val_set: Option<&EncodedSet>,
    criterion: Criterion,
    optim: OptimConfig,
    opts: &TrainOptions,
    rng: &mut Rng,
) -> Result<TrainOutcome> {
    if val_set.is_some_and(EncodedSet::is_empty) {
        return Err(Error::Data("validation set is empty".into()));
    }
    let mut trainer = Trainer::new(model, criterion, optim)?;
    let mut stopper = opts.patience.map(EarlyStopState::new);
    let mut best: Option<(usize, f64, ParamStore<T>)> = None;
    let mut records = Vec::with_capacity(opts.epochs);
    let mut stopped_early = false;
    for epoch in 1..=opts.epochs {
        let start = Instant::now();
        let train_loss = trainer.epoch(model, train_set, opts.batch_size, epoch, rng)?;
        let val = val_set
            .map(|v| evaluate(model, v, Some(&trainer.criterion)))
            .transpose()?;
        let val_loss = val.as_ref().and_then(|v| v.loss);
        let record = TrainRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy: val.as_ref().map(|v| v.accuracy),
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train {train_loss:.4}, val {}, acc {}",
            val_loss.map_or("-".into(), |l| format!("{l:.4}")),
            record.val_accuracy.map_or("-".into(), |a| format!("{a:.4}")),
        );
        records.push(record);
        let Some(val_loss) = val_loss else { continue };
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        if best.as_ref().is_none_or(|(_, l, _)| val_loss < *l) {
            best = Some((epoch, val_loss, model.params.clone()));
        }
        if let Some(s) = stopper.as_mut() {
            if s.observe(epoch, val_loss) == Verdict::Stop {
                stopped_early = epoch < opts.epochs;
                break;
            }
        }
    }
    let (best_epoch, best_val_loss) = match best {
        Some((epoch, loss, params)) => {
            model.params.copy_from(&params)?;
            (Some(epoch), Some(loss))
        }
        None => (None, None),
    };
    model.eval();
    Ok(TrainOutcome {
        records,
        best_epoch,
        best_val_loss,
        stopped_early,
    })
}

/// Trains on `set` alone (no validation, plain cross entropy) until every
/// example is classified correctly or `max_epochs` pass, and returns the
/// final training accuracy in eval mode.
pub fn overfit_probe<T: Element>(
    model: &mut Model<T>,
    set: &EncodedSet,
    optim: OptimConfig,
    batch_size: usize,
    max_epochs: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let mut trainer = Trainer::new(model, Criterion::CrossEntropy { weights: None }, optim)?;
    let mut accuracy = evaluate(model, set, None)?.accuracy;
    for epoch in 1..=max_epochs {
        if accuracy >= 1.0 {
            break;
        }
        trainer.epoch(model, set, batch_size, epoch, rng)?;
        accuracy = evaluate(model, set, None)?.accuracy;
    }
    model.eval();
    Ok(accuracy)
}

pub const CURVES_HEADER: &str = "epoch,train_loss,val_loss,val_accuracy,wall_seconds";

pub fn curves_csv(records: &[TrainRecord]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut out = format!("{CURVES_HEADER}\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{:.3}",
            r.epoch,
            r.train_loss,
            opt(r.val_loss),
            opt(r.val_accuracy),
            r.wall_seconds
        )
        .expect("writing to a String");
    }
    out
}

/// Line chart of training and validation loss per epoch.
pub fn curves_svg(records: &[TrainRecord], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    let losses = records
        .iter()
        .flat_map(|r| std::iter::once(r.train_loss).chain(r.val_loss))
        .filter(|v| v.is_finite());
    let (lo, hi) = losses.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi.max(lo + 1e-9)) } else { (0.0, 1.0) };
    let n = records.len().max(2) - 1;
    let x = |epoch: usize| M + (epoch - 1) as f64 / n as f64 * (W - 2.0 * M);
    let y = |v: f64| H - M - (v - lo) / (hi - lo) * (H - 2.0 * M);
    let line = |pts: Vec<(f64, f64)>, color: &str| {
        let pts: Vec<String> = pts.iter().map(|(a, b)| format!("{a:.1},{b:.1}")).collect();
        format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            pts.join(" ")
        )
    };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(svg, "  <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(svg, "  <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>", W / 2.0, escape(title));
    let _ = writeln!(
        svg,
        "  <path d=\"M{M},{M} V{} H{}\" fill=\"none\" stroke=\"black\"/>",
        H - M,
        W - M
    );
    let _ = writeln!(svg, "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">epoch</text>", W / 2.0, H - 12.0);
    for (v, label) in [(lo, lo), (hi, hi)] {
        let _ = writeln!(svg, "  <text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{label:.3}</text>", M - 6.0, y(v) + 4.0);
    }
    for r in records {
        let _ = writeln!(svg, "  <text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>", x(r.epoch), H - M + 16.0, r.epoch);
    }
    svg += &line(records.iter().map(|r| (x(r.epoch), y(r.train_loss))).collect(), "#1f77b4");
    let val: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| r.val_loss.map(|v| (x(r.epoch), y(v))))
        .collect();
    if !val.is_empty() {
        svg += &line(val, "#ff7f0e");
    }
    let _ = writeln!(svg, "  <text x=\"{}\" y=\"{M}\" fill=\"#1f77b4\" text-anchor=\"end\">train loss</text>", W - M);
    let _ = writeln!(svg, "  <text x=\"{}\" y=\"{}\" fill=\"#ff7f0e\" text-anchor=\"end\">validation loss</text>", W - M, M + 16.0);
    svg += "</svg>\n";
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stop_walkthrough() {
        let mut s = EarlyStopState::new(3);
        let verdicts: Vec<Verdict> = [2.0, 1.9, 1.95, 1.96, 1.97]
            .iter()
            .enumerate()
            .map(|(i, &l)| s.observe(i + 1, l))
            .collect();
        use Verdict::*;
        assert_eq!(verdicts, [Improved, Improved, Waiting, Waiting, Stop]);
        assert_eq!((s.best_epoch, s.best_val_loss), (2, 1.9));
    }

    #[test]
    fn equal_loss_is_not_an_improvement() {
        let mut s = EarlyStopState::new(1);
        s.observe(1, 1.0);
        assert_eq!(s.observe(2, 1.0), Verdict::Stop);
    }

    #[test]
    fn csv_header_and_rows() {
        let r = TrainRecord {
            epoch: 1,
            train_loss: 2.5,
            val_loss: Some(2.25),
            val_accuracy: None,
            wall_seconds: 0.1234,
        };
        let csv = curves_csv(std::slice::from_ref(&r));
        assert_eq!(csv, "epoch,train_loss,val_loss,val_accuracy,wall_seconds\n1,2.5,2.25,,0.123\n");
        let svg = curves_svg(&[r], "a < b");
        assert!(svg.starts_with("<svg") && svg.contains("a &lt; b"));
    }
}
