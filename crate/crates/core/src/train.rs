//! Epoch loop with dev-F1 early stopping, exact-match evaluation and prediction.

use rand::seq::SliceRandom;

use crate::crf::viterbi_decode;
use crate::dataset::{Dataset, Source, TaggedQuery};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::label::{repair_bio, EntityType, LabelTag};
use crate::net::{apply_sgd, loss_grads_encoded, word_dropout, EncodedQuery, ModelParams};
use crate::rng;

const SHUFFLE_STREAM: u64 = 11;
const DROPOUT_STREAM: u64 = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Consecutive epochs without a dev-F1 improvement before stopping.
    /// Zero stops at the first such epoch, like one.
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip: f64,
    pub shuffle_seed: u64,
    pub word_dropout: f64,
    pub exec: ExecMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 50,
            patience: 3,
            batch_size: 32,
            lr: 0.05,
            clip: 5.0,
            shuffle_seed: 0,
            word_dropout: 0.0,
            exec: ExecMode::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("max_epochs and batch_size must be at least 1".into()));
        }
        if self.lr.is_nan() || self.lr <= 0.0 || self.clip.is_nan() || self.clip <= 0.0 {
            return Err(Error::Config("lr and clip must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.word_dropout) {
            return Err(Error::Config("word_dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Precision, recall and F1 on a 0 to 100 scale, with their counts.
/// Every ratio with a zero denominator is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Scores {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Scores {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

/// Micro-averaged scores plus the per-type breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalReport {
    pub micro: Scores,
    pub brand: Scores,
    pub product: Scores,
}

impl EvalReport {
    /// `counts` are `(tp, fp, fn)` for brands and product types.
    pub fn from_type_counts(brand: (usize, usize, usize), product: (usize, usize, usize)) -> Self {
        EvalReport {
            micro: Scores::from_counts(brand.0 + product.0, brand.1 + product.1, brand.2 + product.2),
            brand: Scores::from_counts(brand.0, brand.1, brand.2),
            product: Scores::from_counts(product.0, product.1, product.2),
        }
    }

    pub fn f1(&self) -> f64 {
        self.micro.f1
    }

    pub fn of(&self, ty: EntityType) -> &Scores {
        match ty {
            EntityType::Brand => &self.brand,
            EntityType::Product => &self.product,
        }
    }
}

/// Exact-match entity F1: a predicted span counts only if its type, start
/// and end all equal a gold span of the same query.
pub fn evaluate_f1(predictions: &[TaggedQuery], gold: &[TaggedQuery]) -> Result<EvalReport> {
    if predictions.len() != gold.len() {
        return Err(Error::LengthMismatch {
            what: "prediction and gold query counts",
            left: predictions.len(),
            right: gold.len(),
        });
    }
    // [brand, product] x [tp, fp, fn]
    let mut c = [[0usize; 3]; 2];
    let slot = |ty: EntityType| match ty {
        EntityType::Brand => 0,
        EntityType::Product => 1,
    };
    for (p, g) in predictions.iter().zip(gold) {
        if p.len() != g.len() {
            return Err(Error::LengthMismatch {
                what: "prediction and gold token counts",
                left: p.len(),
                right: g.len(),
            });
        }
        let ps = p.spans();
        let gs = g.spans();
        for s in &ps {
            c[slot(s.entity_type)][if gs.contains(s) { 0 } else { 1 }] += 1;
        }
        for s in &gs {
            if !ps.contains(s) {
                c[slot(s.entity_type)][2] += 1;
            }
        }
    }
    Ok(EvalReport::from_type_counts(
        (c[0][0], c[0][1], c[0][2]),
        (c[1][0], c[1][1], c[1][2]),
    ))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..row.len() {
        if row[k] > row[best] {
            best = k;
        }
    }
    best
}

/// Labels for one token list. With a CRF this is the constrained Viterbi
/// path; otherwise the per-token argmax, repaired to valid BIO.
pub fn predict<S: AsRef<str>>(params: &ModelParams, tokens: &[S]) -> Result<TaggedQuery> {
    if tokens.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let e = params.emissions(&params.encode_tokens(tokens));
    let labels = match &params.crf {
        Some(t) => viterbi_decode(&e, t).0,
        None => {
            let raw: Vec<LabelTag> = (0..e.len()).map(|i| LabelTag::from_index(argmax(e.row(i)))).collect();
            repair_bio(&raw)
        }
    };
    let tokens = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    TaggedQuery::new(tokens, labels, Source::Predicted)
}

/// [`predict`] for every query of `data`, in order.
pub fn predict_dataset(params: &ModelParams, data: &Dataset, mode: ExecMode) -> Result<Vec<TaggedQuery>> {
    exec::map_ordered(mode, &data.items, |q| predict(params, q.tokens()))
        .into_iter()
        .collect()
}

pub fn evaluate_model(params: &ModelParams, data: &Dataset, mode: ExecMode) -> Result<EvalReport> {
    let preds = predict_dataset(params, data, mode)?;
    evaluate_f1(&preds, &data.items)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the highest dev F1 (earliest on ties).
    pub best: ModelParams,
    pub best_epoch: usize,
    /// Dev report after each epoch.
    pub history: Vec<EvalReport>,
    /// Mean training loss of each epoch.
    pub losses: Vec<f64>,
}

/// Mini-batch SGD over `train`, keeping the dev-best snapshot.
pub fn train_model(train: &Dataset, dev: &Dataset, params0: ModelParams, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("training set"));
    }
    if dev.is_empty() {
        return Err(Error::EmptyDataset("dev set"));
    }
    let mut params = params0;
    let encoded: Vec<EncodedQuery> = train.iter().map(|q| params.encode_tokens(q.tokens())).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(ModelParams, usize, f64)> = None;
    let mut history = Vec::new();
    let mut losses = Vec::new();
    let mut bad_epochs = 0;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng::item_rng(cfg.shuffle_seed, SHUFFLE_STREAM, epoch as u64));
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut drop_rng = rng::item_rng(cfg.shuffle_seed, DROPOUT_STREAM, ((epoch as u64) << 32) | b as u64);
            let qs: Vec<EncodedQuery> = batch
                .iter()
                .map(|&i| word_dropout(&encoded[i], cfg.word_dropout, &mut drop_rng))
                .collect();
            let ys: Vec<&[LabelTag]> = batch.iter().map(|&i| train.items[i].labels()).collect();
            let (loss, grads) = loss_grads_encoded(&qs, &ys, &params, cfg.exec)?;
            apply_sgd(&mut params, &grads, cfg.lr, cfg.clip)?;
            epoch_loss += loss * batch.len() as f64;
        }
        losses.push(epoch_loss / train.len() as f64);
        let report = evaluate_model(&params, dev, cfg.exec)?;
        history.push(report);
        let improved = best.as_ref().is_none_or(|(_, _, f1)| report.f1() > *f1);
        if improved {
            best = Some((params.clone(), epoch, report.f1()));
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= cfg.patience.max(1) {
                break;
            }
        }
    }
    let (best, best_epoch, _) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        best_epoch,
        history,
        losses,
    })
}
