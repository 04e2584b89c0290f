//! Iterative training over golden, noisy and synthetic data.
//!
//! Iteration 1 trains on the (ambiguity-balanced) golden training split.
//! Each later iteration grows the training set by `growth_factor`: a
//! stratified sample of the remaining synthetic pool is added as is, and a
//! stratified sample of the remaining noisy pool is added only where the
//! previous iteration's model reproduces the noisy labels exactly. Noisy
//! queries that fail this check go back to the pool. The loop stops at the
//! first iteration whose selection score drops, and returns the best model.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::RngCore;

use crate::datagen::{balance_ambiguous, distant_label, stratified_sample_indices, AmbiguousLexicon};
use crate::dataset::{Catalog, Dataset, GoldenSplit, Source, TaggedQuery};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::label::EntityType;
use crate::net::{init_params, ModelDims, ModelFlags, ModelParams, Vocab};
use crate::rng;
use crate::train::{evaluate_f1, evaluate_model, predict, train_model, EvalReport, TrainConfig};

const BALANCE_STREAM: u64 = 21;
const SYNTH_STREAM: u64 = 22;
const NOISY_STREAM: u64 = 23;

/// What a training backend must provide to the iteration loop.
pub trait IterationTrainer {
    type Model: Clone;

    /// Trains a model on `train`, using `dev` for early stopping. `warm` is
    /// the previous iteration's model when warm starting is enabled.
    fn fit(&mut self, train: &Dataset, dev: &Dataset, warm: Option<&Self::Model>) -> Result<Self::Model>;

    /// For each candidate, whether the model's prediction equals its labels.
    fn agrees(&self, model: &Self::Model, candidates: &[TaggedQuery]) -> Result<Vec<bool>>;

    fn evaluate(&self, model: &Self::Model, data: &Dataset) -> Result<EvalReport>;
}

/// The tagger trained with [`train_model`] from a fresh initialization.
/// The vocab of each model is built from its own training set.
#[derive(Debug, Clone)]
pub struct NeuralTrainer {
    pub dims: ModelDims,
    pub flags: ModelFlags,
    pub train: TrainConfig,
    pub init_seed: u64,
    pub pretrained: Option<EmbeddingTable>,
}

impl NeuralTrainer {
    pub fn new(dims: ModelDims, flags: ModelFlags, train: TrainConfig, init_seed: u64) -> Self {
        NeuralTrainer {
            dims,
            flags,
            train,
            init_seed,
            pretrained: None,
        }
    }
}

impl IterationTrainer for NeuralTrainer {
    type Model = ModelParams;

    fn fit(&mut self, train: &Dataset, dev: &Dataset, warm: Option<&ModelParams>) -> Result<ModelParams> {
        let vocab = Arc::new(Vocab::from_queries(train.iter()));
        let mut params = init_params(&self.dims, self.flags, vocab, self.pretrained.as_ref(), self.init_seed)?;
        if let Some(prev) = warm {
            params.warm_start_from(prev);
        }
        Ok(train_model(train, dev, params, &self.train)?.best)
    }

    fn agrees(&self, model: &ModelParams, candidates: &[TaggedQuery]) -> Result<Vec<bool>> {
        exec::map_ordered(self.train.exec, candidates, |q| {
            predict(model, q.tokens()).map(|p| p.labels() == q.labels())
        })
        .into_iter()
        .collect()
    }

    fn evaluate(&self, model: &ModelParams, data: &Dataset) -> Result<EvalReport> {
        evaluate_model(model, data, self.train.exec)
    }
}

/// Keeps the candidates whose predicted labels equal their own labels
/// token for token, in their original order.
pub fn consensus_filter(params: &ModelParams, candidates: &Dataset, mode: ExecMode) -> Result<Dataset> {
    let keep: Vec<bool> = exec::map_ordered(mode, &candidates.items, |q| {
        predict(params, q.tokens()).map(|p| p.labels() == q.labels())
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let items = candidates
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(q, _)| q.clone())
        .collect();
    Ok(Dataset::new(candidates.role, items))
}

/// Distinct catalog brands and product types that occur as labeled
/// entities of the matching type.
pub fn coverage<'a, I>(training: I, catalog: &Catalog) -> (usize, usize)
where
    I: IntoIterator<Item = &'a TaggedQuery>,
{
    let mut brands = BTreeSet::new();
    let mut products = BTreeSet::new();
    for q in training {
        for b in q.entities(EntityType::Brand) {
            if catalog.brands.contains(&b) {
                brands.insert(b);
            }
        }
        for p in q.entities(EntityType::Product) {
            if catalog.product_types.contains(&p) {
                products.insert(p);
            }
        }
    }
    (brands.len(), products.len())
}

/// Which score drives both the stopping rule and model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    #[default]
    Test,
    Dev,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripleLearnConfig {
    pub growth_factor: f64,
    pub synthetic_fraction: f64,
    pub max_iterations: usize,
    pub selection: Selection,
    pub warm_start: bool,
    pub seed: u64,
}

impl Default for TripleLearnConfig {
    fn default() -> Self {
        TripleLearnConfig {
            growth_factor: 2.0,
            synthetic_fraction: 0.1,
            max_iterations: 9,
            selection: Selection::Test,
            warm_start: false,
            seed: 0,
        }
    }
}

impl TripleLearnConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.growth_factor.is_finite() || self.growth_factor <= 1.0 {
            return Err(Error::Config("growth_factor must be greater than 1".into()));
        }
        if !(0.0..=1.0).contains(&self.synthetic_fraction) {
            return Err(Error::Config("synthetic_fraction must be in [0, 1]".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationReport {
    /// 1-based.
    pub iteration: usize,
    pub training_size: usize,
    pub unique_brd: usize,
    pub unique_prd: usize,
    pub added_synthetic: usize,
    pub added_noisy: usize,
    /// Sampled noisy queries that failed the consensus check.
    pub rejected_noisy: usize,
    pub dev: EvalReport,
    pub test: EvalReport,
}

/// Where a training query came from and when it was added.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub origin: Source,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ScoreDecreased,
    MaxIterations,
    PoolsExhausted,
    /// Every sampled noisy query was rejected and no synthetic data was left.
    NothingAccepted,
}

#[derive(Debug, Clone)]
pub struct TripleLearnOutcome<M> {
    pub best: M,
    /// 1-based iteration of `best`.
    pub best_iteration: usize,
    pub reports: Vec<IterationReport>,
    pub stop: StopReason,
    /// Final training set with the provenance of each query.
    pub training: Vec<(TaggedQuery, Provenance)>,
}

fn sub_seed(seed: u64, stream: u64, index: u64) -> u64 {
    rng::item_rng(seed, stream, index).next_u64()
}

/// Draws `n` stratified members of `pool` (indices into `data`).
fn draw(pool: &[usize], data: &Dataset, n: usize, seed: u64) -> Vec<usize> {
    let items: Vec<TaggedQuery> = pool.iter().map(|&i| data.items[i].clone()).collect();
    stratified_sample_indices(&items, n, seed)
}

fn score(r: &IterationReport, sel: Selection) -> f64 {
    match sel {
        Selection::Test => r.test.f1(),
        Selection::Dev => r.dev.f1(),
    }
}

pub fn run_triplelearn<T: IterationTrainer>(
    golden: &GoldenSplit,
    noisy: &Dataset,
    synthetic: &Dataset,
    lexicon: &AmbiguousLexicon,
    catalog: &Catalog,
    cfg: &TripleLearnConfig,
    trainer: &mut T,
) -> Result<TripleLearnOutcome<T::Model>> {
    cfg.validate()?;
    for (name, d) in [
        ("golden train split", &golden.train),
        ("golden dev split", &golden.dev),
        ("golden test split", &golden.test),
    ] {
        if d.is_empty() {
            return Err(Error::EmptyDataset(name));
        }
    }

    let balanced = balance_ambiguous(&golden.train, lexicon, sub_seed(cfg.seed, BALANCE_STREAM, 0));
    let mut training: Vec<(TaggedQuery, Provenance)> = balanced
        .items
        .into_iter()
        .map(|q| {
            (
                q,
                Provenance {
                    origin: Source::Golden,
                    iteration: 1,
                },
            )
        })
        .collect();
    let mut noisy_pool: Vec<usize> = (0..noisy.len()).collect();
    let mut synth_pool: Vec<usize> = (0..synthetic.len()).collect();

    let mut reports: Vec<IterationReport> = Vec::new();
    let mut prev: Option<T::Model> = None;
    let mut best: Option<(T::Model, usize, f64)> = None;
    let mut stop = StopReason::MaxIterations;

    for it in 1..=cfg.max_iterations {
        let (mut added_synthetic, mut added_noisy, mut rejected_noisy) = (0, 0, 0);
        if let Some(prev_model) = prev.as_ref() {
            let target = (((cfg.growth_factor - 1.0) * training.len() as f64).round() as usize).max(1);
            let mut synth_n = ((cfg.synthetic_fraction * target as f64).round() as usize).min(synth_pool.len());
            let noisy_n = (target - synth_n).min(noisy_pool.len());
            // A short noisy pool is topped up from the synthetic one.
            synth_n = (target - noisy_n).min(synth_pool.len());
            if synth_n == 0 && noisy_n == 0 {
                stop = StopReason::PoolsExhausted;
                break;
            }

            let picked = draw(
                &synth_pool,
                synthetic,
                synth_n,
                sub_seed(cfg.seed, SYNTH_STREAM, it as u64),
            );
            let provenance = Provenance {
                origin: Source::Synthetic,
                iteration: it,
            };
            for &p in &picked {
                training.push((synthetic.items[synth_pool[p]].clone(), provenance));
            }
            added_synthetic = picked.len();
            remove_positions(&mut synth_pool, &picked);

            let picked = draw(&noisy_pool, noisy, noisy_n, sub_seed(cfg.seed, NOISY_STREAM, it as u64));
            let candidates: Vec<TaggedQuery> = picked.iter().map(|&p| noisy.items[noisy_pool[p]].clone()).collect();
            let keep = trainer.agrees(prev_model, &candidates)?;
            let provenance = Provenance {
                origin: Source::Noisy,
                iteration: it,
            };
            let mut accepted = Vec::new();
            for ((&p, q), k) in picked.iter().zip(candidates).zip(keep) {
                if k {
                    training.push((q, provenance));
                    accepted.push(p);
                } else {
                    rejected_noisy += 1;
                }
            }
            added_noisy = accepted.len();
            remove_positions(&mut noisy_pool, &accepted);

            if added_synthetic + added_noisy == 0 {
                stop = StopReason::NothingAccepted;
                break;
            }
        }

        let train_set = Dataset::new(Source::Golden, training.iter().map(|(q, _)| q.clone()).collect());
        let warm = if cfg.warm_start { prev.as_ref() } else { None };
        let model = trainer.fit(&train_set, &golden.dev, warm)?;
        let dev = trainer.evaluate(&model, &golden.dev)?;
        let test = trainer.evaluate(&model, &golden.test)?;
        let (unique_brd, unique_prd) = coverage(&train_set.items, catalog);
        let report = IterationReport {
            iteration: it,
            training_size: train_set.len(),
            unique_brd,
            unique_prd,
            added_synthetic,
            added_noisy,
            rejected_noisy,
            dev,
            test,
        };
        let s = score(&report, cfg.selection);
        let decreased = reports.last().is_some_and(|r| s < score(r, cfg.selection));
        reports.push(report);
        if best.as_ref().is_none_or(|(_, _, b)| s > *b) {
            best = Some((model.clone(), it, s));
        }
        prev = Some(model);
        if decreased {
            stop = StopReason::ScoreDecreased;
            break;
        }
    }

    let (best, best_iteration, _) = best.expect("iteration 1 always runs");
    Ok(TripleLearnOutcome {
        best,
        best_iteration,
        reports,
        stop,
        training,
    })
}

/// Removes the entries at the given ascending positions.
fn remove_positions(pool: &mut Vec<usize>, positions: &[usize]) {
    let drop: BTreeSet<usize> = positions.iter().copied().collect();
    let mut i = 0;
    pool.retain(|_| {
        let keep = !drop.contains(&i);
        i += 1;
        keep
    });
}

/// Trains once on golden train plus all noisy and synthetic data, with no
/// filtering, and reports test scores.
pub fn one_pass_baseline<T: IterationTrainer>(
    golden: &GoldenSplit,
    noisy: &Dataset,
    synthetic: &Dataset,
    trainer: &mut T,
) -> Result<(T::Model, EvalReport)> {
    if golden.test.is_empty() {
        return Err(Error::EmptyDataset("golden test split"));
    }
    let items = golden
        .train
        .iter()
        .chain(noisy.iter())
        .chain(synthetic.iter())
        .cloned()
        .collect();
    let model = trainer.fit(&Dataset::new(Source::Golden, items), &golden.dev, None)?;
    let report = trainer.evaluate(&model, &golden.test)?;
    Ok((model, report))
}

/// Scores of the greedy catalog matcher on `gold`.
pub fn legacy_baseline(gold: &Dataset, catalog: &Catalog) -> Result<EvalReport> {
    let preds: Vec<TaggedQuery> = gold
        .iter()
        .map(|q| distant_label(q.tokens(), catalog, Source::Predicted))
        .collect::<Result<_>>()?;
    evaluate_f1(&preds, &gold.items)
}
