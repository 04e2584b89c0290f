//! Acceptance gate: runs every criterion and prints one PASS/FAIL line each.
//!
//! Each check carries its own oracle (exhaustive enumeration, finite
//! differences, hand-counted spans) rather than trusting the library under
//! test to grade itself. Exits nonzero if any criterion fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, ensure, Result};
use querytag::crf::*;
use querytag::datagen::{distant_label, generate_miniworld, AmbiguousLexicon, MiniWorld, MiniWorldConfig};
use querytag::dataset::{split_golden, Catalog, Dataset, GoldenSplit, Source, TaggedQuery};
use querytag::error::Error;
use querytag::exec::ExecMode;
use querytag::label::{bio_decode, bio_encode, repair_bio, EntityType, LabelTag, NUM_LABELS};
use querytag::model_io::{decode_model, encode_model, load_model, save_model, ModelArtifact};
use querytag::net::*;
use querytag::rng;
use querytag::train::{evaluate_f1, predict, EvalReport, TrainConfig};
use querytag::triplelearn::*;
use querytag_cli::service::{router, ServiceState, TagResponse};
use rand::Rng;

const K: usize = NUM_LABELS;

// ---------------------------------------------------------------------------
// Oracles

fn all_paths(len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                (0..K).map(move |k| {
                    let mut q = p.clone();
                    q.push(k);
                    q
                })
            })
            .collect();
    }
    out
}

/// Label index order is O, B-BRD, I-BRD, B-PRD, I-PRD.
fn entity_of(k: usize) -> Option<(bool, usize)> {
    match k {
        1 => Some((true, 0)),
        2 => Some((false, 0)),
        3 => Some((true, 1)),
        4 => Some((false, 1)),
        _ => None,
    }
}

fn allowed_start(k: usize) -> bool {
    !matches!(entity_of(k), Some((false, _)))
}

fn allowed_step(prev: usize, next: usize) -> bool {
    match entity_of(next) {
        Some((false, ty)) => matches!(entity_of(prev), Some((_, t)) if t == ty),
        _ => true,
    }
}

fn path_ok(path: &[usize]) -> bool {
    allowed_start(path[0]) && path.windows(2).all(|w| allowed_step(w[0], w[1]))
}

fn oracle_score(e: &EmissionScores, t: &TransitionMatrix, masked: bool, path: &[usize]) -> Option<f64> {
    if masked && !path_ok(path) {
        return None;
    }
    let mut s = t.start[path[0]] + t.end[path[path.len() - 1]];
    for (i, &k) in path.iter().enumerate() {
        s += e.get(i, k);
        if i > 0 {
            s += t.trans[path[i - 1]][k];
        }
    }
    Some(s)
}

fn random_instance(r: &mut rng::Rng, len: usize, masked: bool) -> (EmissionScores, TransitionMatrix) {
    let data = (0..len * K).map(|_| r.random_range(-3.0..3.0)).collect();
    let e = EmissionScores::from_vec(len, data).unwrap();
    let mask = if masked {
        build_bio_mask()
    } else {
        TransitionMask::allow_all()
    };
    let mut t = TransitionMatrix::zeros(mask);
    for k in 0..K {
        t.start[k] = r.random_range(-2.0..2.0);
        t.end[k] = r.random_range(-2.0..2.0);
        for j in 0..K {
            t.trans[j][k] = r.random_range(-2.0..2.0);
        }
    }
    (e, t)
}

/// Spans as (type, start, end) read directly off a label sequence.
fn oracle_spans(labels: &[LabelTag]) -> BTreeSet<(usize, usize, usize)> {
    let idx: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    let mut out = BTreeSet::new();
    let mut i = 0;
    while i < idx.len() {
        if let Some((true, ty)) = entity_of(idx[i]) {
            let mut j = i + 1;
            while j < idx.len() && entity_of(idx[j]) == Some((false, ty)) {
                j += 1;
            }
            out.insert((ty, i, j));
            i = j;
        } else {
            i += 1;
        }
    }
    out
}

/// Exact-match micro F1 from hand-counted span sets.
fn oracle_f1(pred: &[TaggedQuery], gold: &[TaggedQuery]) -> (usize, usize, usize, f64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        let ps = oracle_spans(p.labels());
        let gs = oracle_spans(g.labels());
        tp += ps.intersection(&gs).count();
        fp += ps.difference(&gs).count();
        fn_ += gs.difference(&ps).count();
    }
    let p = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let r = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f = if p + r == 0.0 { 0.0 } else { 200.0 * p * r / (p + r) };
    (tp, fp, fn_, f)
}

fn toks(s: &str) -> Vec<String> {
    s.split(' ').map(str::to_string).collect()
}

// ---------------------------------------------------------------------------
// Criteria

fn crf_oracle() -> Result<String> {
    let start = Instant::now();
    let mut r = rng::seeded(101);
    let (mut worst_z, mut worst_v): (f64, f64) = (0.0, 0.0);
    for case in 0..200 {
        let len = 1 + case % 6;
        let masked = case % 2 == 0;
        let (e, t) = random_instance(&mut r, len, masked);
        let scores: Vec<f64> = all_paths(len)
            .iter()
            .filter_map(|p| oracle_score(&e, &t, masked, p))
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let logz = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        worst_z = worst_z.max((log_partition(&e, &t) - logz).abs());
        worst_v = worst_v.max((viterbi_decode(&e, &t).1 - max).abs());
    }
    let took = start.elapsed();
    ensure!(worst_z < 1e-8, "log-partition error {worst_z:e}");
    ensure!(worst_v < 1e-9, "viterbi error {worst_v:e}");
    ensure!(took < Duration::from_secs(10), "took {took:?}");
    Ok(format!("logZ err {worst_z:.1e}, viterbi err {worst_v:.1e}, {took:.2?}"))
}

fn fd_model() -> (ModelParams, Vec<TaggedQuery>) {
    let q = |text: &str, l: &[LabelTag]| TaggedQuery::new(toks(text), l.to_vec(), Source::Golden).unwrap();
    use LabelTag::*;
    let data = vec![
        q("lg washer mini", &[BBrd, BPrd, O]),
        q("weed eater trimmer", &[BBrd, IBrd, BPrd]),
        q("cheap ice maker", &[O, BPrd, IPrd]),
    ];
    let dims = ModelDims {
        word_emb: 3,
        char_emb: 2,
        char_hidden: 2,
        word_hidden: 3,
        labels: 5,
    };
    let vocab = Arc::new(Vocab::from_queries(data[..2].iter()));
    let mut p = init_params(&dims, ModelFlags::default(), vocab, None, 9).unwrap();
    let crf = p.crf.as_mut().unwrap();
    for (i, v) in crf.trans.as_flattened_mut().iter_mut().enumerate() {
        *v = ((i * 5 % 13) as f64 - 6.0) * 0.1;
    }
    crf.start = [0.2, -0.1, 0.0, 0.1, 0.3];
    (p, data)
}

#[allow(clippy::needless_range_loop)]
fn gradients() -> Result<String> {
    let start = Instant::now();
    let h = 1e-5;

    let mut r = rng::seeded(202);
    let mut crf_worst: f64 = 0.0;
    for case in 0..30 {
        let len = 1 + case % 5;
        let (e, t) = random_instance(&mut r, len, case % 2 == 0);
        let gold: Vec<LabelTag> = repair_bio(
            &(0..len)
                .map(|_| LabelTag::from_index(r.random_range(0..K)))
                .collect::<Vec<_>>(),
        );
        let (_, g) = crf_nll_grad(&e, &t, &gold)?;
        let loss = |e: &EmissionScores| log_partition(e, &t) - sequence_score(e, &t, &gold).unwrap();
        for i in 0..e.as_slice().len() {
            let (mut ep, mut em) = (e.clone(), e.clone());
            ep.as_mut_slice()[i] += h;
            em.as_mut_slice()[i] -= h;
            let numeric = (loss(&ep) - loss(&em)) / (2.0 * h);
            let analytic = g.emissions.as_slice()[i];
            crf_worst = crf_worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-2));
        }
        for j in 0..K {
            for k in 0..K {
                if !t.mask.trans[j][k] {
                    continue;
                }
                let (mut tp, mut tm) = (t.clone(), t.clone());
                tp.trans[j][k] += h;
                tm.trans[j][k] -= h;
                let l = |t: &TransitionMatrix| log_partition(&e, t) - sequence_score(&e, t, &gold).unwrap();
                let numeric = (l(&tp) - l(&tm)) / (2.0 * h);
                let analytic = g.trans[j][k];
                crf_worst = crf_worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-2));
            }
        }
    }

    let (p, data) = fd_model();
    let (_, TrainBatchGrads(g)) = model_loss_grads(&data, &p)?;
    let loss = |p: &ModelParams| model_loss_grads(&data, p).unwrap().0;
    let mut model_worst: f64 = 0.0;
    let mut checked = 0;
    let grads = g.blocks();
    for b in 0..grads.len() {
        for i in 0..grads[b].1.len() {
            let mut plus = p.clone();
            plus.blocks_mut()[b].1[i] += h;
            let mut minus = p.clone();
            minus.blocks_mut()[b].1[i] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let analytic = grads[b].1[i];
            model_worst = model_worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
            checked += 1;
        }
    }
    let took = start.elapsed();
    ensure!(crf_worst < 1e-4, "crf relative error {crf_worst:e}");
    ensure!(model_worst < 1e-3, "model relative error {model_worst:e}");
    ensure!(
        checked == p.num_parameters(),
        "checked {checked} of {}",
        p.num_parameters()
    );
    ensure!(took < Duration::from_secs(60), "took {took:?}");
    Ok(format!(
        "crf {crf_worst:.1e}, model {model_worst:.1e} over {checked} params, {took:.2?}"
    ))
}

fn constraints() -> Result<String> {
    let mut r = rng::seeded(303);
    let mut bad = 0;
    for _ in 0..10_000 {
        let len = r.random_range(1..=12);
        let (e, t) = random_instance(&mut r, len, true);
        let path: Vec<usize> = viterbi_decode(&e, &t).0.iter().map(|l| l.index()).collect();
        if !path_ok(&path) {
            bad += 1;
        }
    }
    ensure!(bad == 0, "{bad} decodes violate the mask");
    Ok("10000 decodes, 0 violations".into())
}

fn codec_and_evaluator() -> Result<String> {
    let mut r = rng::seeded(404);
    for n in 0..10_000 {
        let len = r.random_range(1..=12);
        let labels = repair_bio(
            &(0..len)
                .map(|_| LabelTag::from_index(r.random_range(0..K)))
                .collect::<Vec<_>>(),
        );
        let spans = bio_decode(&labels)?;
        let expect = oracle_spans(&labels);
        let got: BTreeSet<_> = spans
            .iter()
            .map(|s| (if s.entity_type == EntityType::Brand { 0 } else { 1 }, s.start, s.end))
            .collect();
        ensure!(got == expect, "instance {n}: decode disagrees with oracle");
        ensure!(
            bio_encode(&spans, len)? == labels,
            "instance {n}: round trip changed labels"
        );
    }

    use LabelTag::*;
    let gold = [TaggedQuery::new(
        toks("lg washer mini"),
        vec![BBrd, BPrd, O],
        Source::Golden,
    )?];
    let pred = [TaggedQuery::new(
        toks("lg washer mini"),
        vec![BBrd, O, BPrd],
        Source::Predicted,
    )?];
    let (tp, fp, fn_, _) = oracle_f1(&pred, &gold);
    ensure!((tp, fp, fn_) == (1, 1, 1), "fixture counts {tp}/{fp}/{fn_}");
    let m = evaluate_f1(&pred, &gold)?.micro;
    ensure!(
        m.precision == 50.0 && m.recall == 50.0 && m.f1 == 50.0,
        "fixture scored {m:?}"
    );
    let same = evaluate_f1(&gold, &gold)?.micro;
    ensure!(same.f1 == 100.0, "identical files scored {}", same.f1);
    Ok("10000 round trips; P=R=F1=50.0; identical=100.0".into())
}

fn legacy_fidelity() -> Result<String> {
    use LabelTag::*;
    type Row = (
        &'static str,
        &'static [&'static str],
        &'static [&'static str],
        &'static [LabelTag],
    );
    let rows: [Row; 3] = [
        ("fridge no ice maker", &[], &["ice maker"], &[O, O, BPrd, IPrd]),
        (
            "weed eater light weight",
            &["weed eater"],
            &["light"],
            &[BBrd, IBrd, BPrd, O],
        ),
        (
            "cosco table and chair set",
            &["cosco"],
            &["table"],
            &[BBrd, BPrd, O, O, O],
        ),
    ];
    for (text, brands, products, expect) in rows {
        let catalog = Catalog::new(brands.iter().copied(), products.iter().copied())?;
        let got = distant_label(&toks(text), &catalog, Source::Noisy)?;
        ensure!(got.labels() == expect, "{text:?}: {:?}", got.labels());
    }
    Ok("3/3 rows token-for-token".into())
}

struct Fixture {
    world: MiniWorld,
    split: GoldenSplit,
    lexicon: AmbiguousLexicon,
    cfg: TripleLearnConfig,
}

fn trainer(exec: ExecMode) -> NeuralTrainer {
    let dims = ModelDims {
        word_emb: 32,
        char_emb: 16,
        char_hidden: 16,
        word_hidden: 32,
        labels: 5,
    };
    let train = TrainConfig {
        lr: 0.1,
        batch_size: 16,
        max_epochs: 30,
        patience: 4,
        shuffle_seed: 42,
        exec,
        ..Default::default()
    };
    NeuralTrainer::new(dims, ModelFlags::default(), train, 42)
}

fn fixture() -> Result<Fixture> {
    let world = generate_miniworld(&MiniWorldConfig::default())?;
    let split = split_golden(&world.golden, 42)?;
    let lexicon = AmbiguousLexicon::from_catalog(&world.catalog);
    let cfg = TripleLearnConfig {
        seed: 42,
        ..Default::default()
    };
    Ok(Fixture {
        world,
        split,
        lexicon,
        cfg,
    })
}

fn run_tl(f: &Fixture, exec: ExecMode) -> Result<TripleLearnOutcome<ModelParams>> {
    let mut t = trainer(exec);
    Ok(run_triplelearn(
        &f.split,
        &f.world.noisy,
        &f.world.synthetic,
        &f.lexicon,
        &f.world.catalog,
        &f.cfg,
        &mut t,
    )?)
}

fn end_to_end(f: &Fixture, out: &TripleLearnOutcome<ModelParams>, took: Duration) -> Result<String> {
    let test = &f.split.test;
    let first = out.reports[0].test.f1();
    let best = out.reports[out.best_iteration - 1].test.f1();

    // Re-score the returned model and the legacy matcher with the local oracle.
    let preds: Vec<TaggedQuery> = test
        .iter()
        .map(|q| predict(&out.best, q.tokens()))
        .collect::<querytag::Result<_>>()?;
    let best_oracle = oracle_f1(&preds, &test.items).3;
    ensure!(
        (best_oracle - best).abs() < 1e-9,
        "best model rescored {best_oracle} vs report {best}"
    );
    let legacy: Vec<TaggedQuery> = test
        .iter()
        .map(|q| distant_label(q.tokens(), &f.world.catalog, Source::Predicted))
        .collect::<querytag::Result<_>>()?;
    let legacy_f1 = oracle_f1(&legacy, &test.items).3;

    let start = Instant::now();
    let (_, one_pass) = one_pass_baseline(
        &f.split,
        &f.world.noisy,
        &f.world.synthetic,
        &mut trainer(ExecMode::Sequential),
    )?;
    let took = took + start.elapsed();

    let mut brands = BTreeSet::new();
    let mut products = BTreeSet::new();
    for (q, _) in &out.training {
        for s in oracle_spans(q.labels()) {
            let surface = q.tokens()[s.1..s.2].join(" ");
            if s.0 == 0 { &mut brands } else { &mut products }.insert(surface);
        }
    }
    let cov_b = f
        .world
        .catalog
        .entries(EntityType::Brand)
        .iter()
        .filter(|b| brands.contains(*b))
        .count();
    let cov_p = f
        .world
        .catalog
        .entries(EntityType::Product)
        .iter()
        .filter(|p| products.contains(*p))
        .count();
    let n_b = f.world.catalog.entries(EntityType::Brand).len();
    let n_p = f.world.catalog.entries(EntityType::Product).len();

    let detail = format!(
        "iter1 {first:.2}, best {best:.2} (iter {}), one-pass {:.2}, legacy {legacy_f1:.2}, coverage {cov_b}/{n_b} BRD {cov_p}/{n_p} PRD, {took:.1?}",
        out.best_iteration,
        one_pass.f1()
    );
    let mut failed = vec![];
    if first < 75.0 {
        failed.push("(a) iteration-1 test F1 below 75");
    }
    if best < first {
        failed.push("(b) best below iteration 1");
    }
    if best < one_pass.f1() {
        failed.push("(c) below one-pass baseline");
    }
    if best <= legacy_f1 {
        failed.push("(d) not above legacy matcher");
    }
    if cov_b != n_b || cov_p != n_p {
        failed.push("(e) coverage incomplete");
    }
    if took > Duration::from_secs(15 * 60) {
        failed.push("runtime over 15 minutes");
    }
    ensure!(failed.is_empty(), "{}; {detail}", failed.join(", "));
    Ok(detail)
}

/// Scripted scores by iteration; accepts every candidate.
struct Scripted(Vec<(usize, usize, usize)>, usize);

impl IterationTrainer for Scripted {
    type Model = usize;

    fn fit(&mut self, _train: &Dataset, _dev: &Dataset, _warm: Option<&usize>) -> querytag::Result<usize> {
        self.1 += 1;
        Ok(self.1 - 1)
    }

    fn agrees(&self, _model: &usize, c: &[TaggedQuery]) -> querytag::Result<Vec<bool>> {
        Ok(vec![true; c.len()])
    }

    fn evaluate(&self, model: &usize, _data: &Dataset) -> querytag::Result<EvalReport> {
        Ok(EvalReport::from_type_counts(
            self.0[(*model).min(self.0.len() - 1)],
            (0, 0, 0),
        ))
    }
}

fn stopping_rule(f: &Fixture) -> Result<String> {
    // (tp, fp, fn) triples whose F1 is exactly 88, 91 and 90, then a rise
    // that must never be reached.
    let script = vec![(44, 6, 6), (91, 9, 9), (90, 10, 10), (99, 1, 1)];
    let mut seen = vec![];
    for _ in 0..2 {
        let out = run_triplelearn(
            &f.split,
            &f.world.noisy,
            &f.world.synthetic,
            &f.lexicon,
            &f.world.catalog,
            &f.cfg,
            &mut Scripted(script.clone(), 0),
        )?;
        let f1s: Vec<f64> = out.reports.iter().map(|r| r.test.f1()).collect();
        ensure!(f1s == [88.0, 91.0, 90.0], "scores {f1s:?}");
        ensure!(
            out.best_iteration == 2 && out.best == 1,
            "returned iteration {}",
            out.best_iteration
        );
        seen.push(format!("{:?}", out.reports));
    }
    ensure!(seen[0] == seen[1], "reruns differ");
    Ok("3 iterations, returned iteration 2".into())
}

fn determinism(
    a: &TripleLearnOutcome<ModelParams>,
    b: &TripleLearnOutcome<ModelParams>,
    par: &TripleLearnOutcome<ModelParams>,
) -> Result<String> {
    // Debug output of f64 is the shortest round-trip form, so equal text
    // means equal bits.
    let text = |o: &TripleLearnOutcome<ModelParams>| format!("{:?}", o.reports);
    ensure!(text(a) == text(b), "single-threaded reruns differ");
    let bits = |p: &ModelParams| {
        p.blocks()
            .iter()
            .flat_map(|(_, v)| v.iter().map(|x| x.to_bits()))
            .collect::<Vec<_>>()
    };
    ensure!(bits(&a.best) == bits(&b.best), "best models differ");
    ensure!(text(a) == text(par), "parallel run differs from single-threaded");
    Ok(format!(
        "{} reports identical across 2 sequential runs and 1 parallel run",
        a.reports.len()
    ))
}

fn serialization(model: &ModelParams, catalog: &Catalog) -> Result<String> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("m.bin");
    save_model(model, &catalog.fingerprint(), &path)?;
    let ModelArtifact { params, fingerprint } = load_model(&path)?;
    ensure!(fingerprint == catalog.fingerprint(), "fingerprint changed");
    let words: Vec<&String> = model.vocab.words().iter().collect();
    let mut r = rng::seeded(909);
    for n in 0..100 {
        let q: Vec<String> = (0..r.random_range(1..7))
            .map(|_| {
                if r.random_bool(0.2) {
                    format!("zz{}", r.random_range(0..1000))
                } else {
                    words[r.random_range(0..words.len())].clone()
                }
            })
            .collect();
        ensure!(
            predict(model, &q)? == predict(&params, &q)?,
            "query {n} differs after reload"
        );
    }
    let bytes = encode_model(model, &catalog.fingerprint());
    let mut bad = bytes.clone();
    bad[..8].copy_from_slice(b"NOTMODEL");
    ensure!(
        matches!(decode_model(&bad), Err(Error::NotAModel)),
        "bad magic accepted"
    );
    let mut v = bytes.clone();
    v[8..12].copy_from_slice(&99u32.to_le_bytes());
    ensure!(
        matches!(decode_model(&v), Err(Error::VersionMismatch { found: 99, .. })),
        "bad version accepted"
    );
    Ok("100 queries identical; magic and version errors fire".into())
}

fn service(model: &ModelParams, catalog: &Catalog, test: &Dataset) -> Result<String> {
    let rt = tokio::runtime::Runtime::new()?;
    let artifact = ModelArtifact {
        params: model.clone(),
        fingerprint: catalog.fingerprint(),
    };
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        let url = format!("http://{}/tag", listener.local_addr()?);
        let app = router(ServiceState::new(artifact, 32));
        tokio::spawn(async move { axum::serve(listener, app).await });
        let client = reqwest::Client::new();

        let resp = client
            .post(&url)
            .json(&serde_json::json!({"query": "LG washer mini"}))
            .send()
            .await?;
        ensure!(resp.status() == 200, "status {}", resp.status());
        let body: TagResponse = resp.json().await?;
        ensure!(
            body.tokens == ["lg", "washer", "mini"]
                && body.labels == ["B-BRD", "B-PRD", "O"]
                && body.brand == ["lg"]
                && body.product == ["washer"],
            "got {body:?}"
        );

        let resp = client.post(&url).json(&serde_json::json!({"query": ""})).send().await?;
        ensure!(resp.status().is_client_error(), "empty query status {}", resp.status());

        let queries: Vec<String> = test.iter().map(|q| q.text()).cycle().take(1000).collect();
        let mut sequential = Vec::with_capacity(queries.len());
        for q in &queries {
            sequential.push(
                client
                    .post(&url)
                    .json(&serde_json::json!({"query": q}))
                    .send()
                    .await?
                    .text()
                    .await?,
            );
        }
        let mut set = tokio::task::JoinSet::new();
        for (i, q) in queries.iter().enumerate() {
            let (client, url, q) = (client.clone(), url.clone(), q.clone());
            set.spawn(async move {
                let body = client
                    .post(&url)
                    .json(&serde_json::json!({"query": q}))
                    .send()
                    .await?
                    .text()
                    .await?;
                anyhow::Ok((i, body))
            });
        }
        let mut concurrent = vec![String::new(); queries.len()];
        while let Some(res) = set.join_next().await {
            let (i, body) = res??;
            concurrent[i] = body;
        }
        let diff = sequential.iter().zip(&concurrent).filter(|(a, b)| a != b).count();
        ensure!(diff == 0, "{diff} of 1000 concurrent responses differ");
        Ok("lg washer mini tagged; empty query 400; 1000 concurrent == sequential".to_string())
    })
}

// ---------------------------------------------------------------------------

fn guarded(f: impl FnOnce() -> Result<String>) -> Result<String> {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(anyhow!("panicked: {msg}"))
    })
}

fn main() {
    // libtest passes flags such as --nocapture; this target ignores them.
    let mut results: Vec<(&str, Result<String>)> = vec![
        ("1 crf oracle equivalence", guarded(crf_oracle)),
        ("2 gradient correctness", guarded(gradients)),
        ("3 constraint guarantee", guarded(constraints)),
        ("4 codec and evaluator", guarded(codec_and_evaluator)),
        ("5 legacy-baseline fidelity", guarded(legacy_fidelity)),
    ];

    match fixture() {
        Err(e) => {
            for name in [
                "6 mini-world end-to-end",
                "7 stopping rule",
                "8 determinism",
                "9 serialization",
                "10 service contract",
            ] {
                results.push((name, Err(anyhow!("fixture failed: {e:#}"))));
            }
        }
        Ok(f) => {
            let start = Instant::now();
            let seq = catch_unwind(AssertUnwindSafe(|| run_tl(&f, ExecMode::Sequential)));
            let took = start.elapsed();
            match seq {
                Ok(Ok(out)) => {
                    results.push(("6 mini-world end-to-end", guarded(|| end_to_end(&f, &out, took))));
                    results.push(("7 stopping rule", guarded(|| stopping_rule(&f))));
                    results.push((
                        "8 determinism",
                        guarded(|| {
                            determinism(
                                &out,
                                &run_tl(&f, ExecMode::Sequential)?,
                                &run_tl(&f, ExecMode::Parallel)?,
                            )
                        }),
                    ));
                    results.push((
                        "9 serialization",
                        guarded(|| serialization(&out.best, &f.world.catalog)),
                    ));
                    results.push((
                        "10 service contract",
                        guarded(|| service(&out.best, &f.world.catalog, &f.split.test)),
                    ));
                }
                failure => {
                    let msg = match failure {
                        Ok(Err(e)) => format!("{e:#}"),
                        _ => "panicked".into(),
                    };
                    results.push(("6 mini-world end-to-end", Err(anyhow!("run failed: {msg}"))));
                    results.push(("7 stopping rule", guarded(|| stopping_rule(&f))));
                    for name in ["8 determinism", "9 serialization", "10 service contract"] {
                        results.push((name, Err(anyhow!("needs the trained model: {msg}"))));
                    }
                }
            }
        }
    }

    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name}: {e:#}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
