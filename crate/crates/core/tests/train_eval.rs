use std::sync::Arc;

use proptest::prelude::*;
use querytag::dataset::{Dataset, Source, TaggedQuery};
use querytag::exec::ExecMode;
use querytag::label::{bio_encode, validate_bio, EntitySpan, EntityType, LabelTag::*};
use querytag::net::*;
use querytag::train::*;
use rand::seq::SliceRandom;

fn toks(s: &str) -> Vec<String> {
    s.split(' ').map(str::to_string).collect()
}

fn small_dims() -> ModelDims {
    ModelDims {
        word_emb: 8,
        char_emb: 4,
        char_hidden: 4,
        word_hidden: 8,
        labels: 5,
    }
}

fn repeated(n: usize) -> Dataset {
    let q = TaggedQuery::new(toks("lg washer mini"), vec![BBrd, BPrd, O], Source::Golden).unwrap();
    Dataset::new(Source::Golden, vec![q; n])
}

fn fresh(data: &Dataset, flags: ModelFlags, seed: u64) -> ModelParams {
    init_params(
        &small_dims(),
        flags,
        Arc::new(Vocab::from_queries(data.iter())),
        None,
        seed,
    )
    .unwrap()
}

#[test]
fn memorizes_a_repeated_query() {
    let data = repeated(10);
    let cfg = TrainConfig {
        max_epochs: 50,
        batch_size: 5,
        lr: 0.1,
        patience: 50,
        ..Default::default()
    };
    let out = train_model(&data, &data, fresh(&data, ModelFlags::default(), 1), &cfg).unwrap();
    let p = predict(&out.best, &toks("lg washer mini")).unwrap();
    assert_eq!(p.labels(), &[BBrd, BPrd, O]);
    assert_eq!(p.source(), Source::Predicted);
    // Same model and tokens give the same labels.
    assert_eq!(predict(&out.best, &toks("lg washer mini")).unwrap(), p);
}

#[test]
fn returned_snapshot_is_dev_best_and_patience_stops() {
    let data = repeated(6);
    let cfg = TrainConfig {
        max_epochs: 40,
        batch_size: 2,
        lr: 0.02,
        patience: 0,
        ..Default::default()
    };
    let out = train_model(&data, &data, fresh(&data, ModelFlags::default(), 2), &cfg).unwrap();
    let best_f1 = evaluate_model(&out.best, &data, ExecMode::Sequential).unwrap().f1();
    assert!(out.history.iter().all(|r| r.f1() <= best_f1));
    assert_eq!(out.history[out.best_epoch].f1(), best_f1);
    // patience 0: the run ends at the first epoch that fails to improve.
    let n = out.history.len();
    if n < cfg.max_epochs {
        assert!(out.history[n - 1].f1() <= out.history[..n - 1].iter().map(|r| r.f1()).fold(f64::MIN, f64::max));
        assert!(out.history[..n - 1].windows(2).all(|w| w[1].f1() > w[0].f1()));
    }
}

#[test]
fn loss_trajectory_is_reproducible_in_both_modes() {
    let data = repeated(12);
    let mut cfg = TrainConfig {
        max_epochs: 5,
        batch_size: 4,
        patience: 10,
        word_dropout: 0.2,
        exec: ExecMode::Sequential,
        ..Default::default()
    };
    let a = train_model(&data, &data, fresh(&data, ModelFlags::default(), 3), &cfg).unwrap();
    cfg.exec = ExecMode::Parallel;
    let b = train_model(&data, &data, fresh(&data, ModelFlags::default(), 3), &cfg).unwrap();
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.best, b.best);
}

#[test]
fn empty_inputs_are_errors() {
    let data = repeated(2);
    let empty = Dataset::empty(Source::Golden);
    let p = fresh(&data, ModelFlags::default(), 0);
    assert!(train_model(&data, &empty, p.clone(), &TrainConfig::default()).is_err());
    assert!(train_model(&empty, &data, p.clone(), &TrainConfig::default()).is_err());
    assert!(predict::<String>(&p, &[]).is_err());
}

#[test]
fn random_models_always_emit_valid_bio() {
    let data = repeated(1);
    for seed in 0..200 {
        for flags in [
            ModelFlags::default(),
            ModelFlags {
                use_char_embedding: true,
                use_crf: false,
            },
        ] {
            let mut p = fresh(&data, flags, seed);
            // Large random projections make invalid raw argmax paths likely.
            p.proj_w
                .data
                .iter_mut()
                .enumerate()
                .for_each(|(i, v)| *v *= 5.0 + (i % 3) as f64);
            let out = predict(&p, &toks("lg lg washer mini washer x")).unwrap();
            validate_bio(out.labels()).unwrap();
        }
    }
}

fn query(spans: Vec<(bool, usize, usize)>, len: usize) -> TaggedQuery {
    let spans: Vec<EntitySpan> = spans
        .into_iter()
        .map(|(b, s, e)| EntitySpan::new(if b { EntityType::Brand } else { EntityType::Product }, s, e))
        .collect();
    let labels = bio_encode(&spans, len).unwrap();
    TaggedQuery::new((0..len).map(|i| format!("t{i}")).collect(), labels, Source::Golden).unwrap()
}

fn arb_query(len: usize) -> impl Strategy<Value = TaggedQuery> {
    prop::collection::vec((any::<bool>(), 1..3usize, 0..2usize), 0..4).prop_map(move |parts| {
        let mut spans = vec![];
        let mut pos = 0;
        for (b, w, gap) in parts {
            let start = pos + gap;
            if start + w > len {
                break;
            }
            spans.push((b, start, start + w));
            pos = start + w;
        }
        query(spans, len)
    })
}

fn arb_pair() -> impl Strategy<Value = (TaggedQuery, TaggedQuery)> {
    (1..8usize).prop_flat_map(|len| (arb_query(len), arb_query(len)))
}

/// Counts matches with a plain set intersection per query.
fn oracle_counts(pairs: &[(TaggedQuery, TaggedQuery)]) -> (usize, usize, usize) {
    let (mut tp, mut np, mut ng) = (0, 0, 0);
    for (p, g) in pairs {
        let ps: std::collections::BTreeSet<_> = p.spans().into_iter().collect();
        let gs: std::collections::BTreeSet<_> = g.spans().into_iter().collect();
        tp += ps.intersection(&gs).count();
        np += ps.len();
        ng += gs.len();
    }
    (tp, np - tp, ng - tp)
}

proptest! {
    #[test]
    fn evaluation_ignores_corpus_order(pairs in prop::collection::vec(arb_pair(), 1..20), seed: u64) {
        let (preds, gold): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
        let r = evaluate_f1(&preds, &gold).unwrap();
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut querytag::rng::seeded(seed));
        let (sp, sg): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
        prop_assert_eq!(evaluate_f1(&sp, &sg).unwrap(), r);

        let (tp, fp, fn_) = oracle_counts(&pairs);
        prop_assert_eq!((r.micro.tp, r.micro.fp, r.micro.fn_), (tp, fp, fn_));
        // Micro F1 comes from summed counts.
        let f1 = if tp == 0 { 0.0 } else { 200.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
        prop_assert!((r.f1() - f1).abs() < 1e-9);
        prop_assert_eq!(r.brand.tp + r.product.tp, tp);
        prop_assert_eq!(evaluate_f1(&gold, &gold).unwrap().f1(), if gold.iter().all(|g| g.spans().is_empty()) { 0.0 } else { 100.0 });
    }
}
