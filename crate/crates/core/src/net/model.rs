use std::sync::Arc;

use super::cells::{Gru, GruTrace, Lstm, LstmTrace};
use super::tensor::{add_assign, Matrix};
use super::vocab::{Vocab, UNK};
use crate::crf::{build_bio_mask, crf_nll_grad, log_sum_exp, EmissionScores, TransitionMatrix};
use crate::dataset::TaggedQuery;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::label::NUM_LABELS;
use crate::rng;

/// Layer widths. Hidden sizes are per direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub word_emb: usize,
    pub char_emb: usize,
    pub char_hidden: usize,
    pub word_hidden: usize,
    pub labels: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            word_emb: 100,
            char_emb: 25,
            char_hidden: 25,
            word_hidden: 100,
            labels: NUM_LABELS,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.word_emb == 0 || self.char_emb == 0 || self.char_hidden == 0 || self.word_hidden == 0 {
            return Err(Error::Dimension("all layer widths must be positive".into()));
        }
        if self.labels != NUM_LABELS {
            return Err(Error::Dimension(format!("label count must be {NUM_LABELS}")));
        }
        Ok(())
    }
}

/// Architecture switches for the ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelFlags {
    pub use_char_embedding: bool,
    pub use_crf: bool,
}

impl Default for ModelFlags {
    fn default() -> Self {
        ModelFlags {
            use_char_embedding: true,
            use_crf: true,
        }
    }
}

/// Character embeddings and the character-level BiLSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct CharEncoder {
    pub emb: Matrix,
    pub fwd: Lstm,
    pub bwd: Lstm,
}

/// All trainable weights plus the vocab they index.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub vocab: Arc<Vocab>,
    pub word_emb: Matrix,
    pub chars: Option<CharEncoder>,
    pub gru_fwd: Gru,
    pub gru_bwd: Gru,
    /// `labels × 2·word_hidden`, applied to `[h_fwd; h_bwd]`.
    pub proj_w: Matrix,
    pub proj_b: Vec<f64>,
    pub crf: Option<TransitionMatrix>,
}

/// Gradients with the same shapes as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatchGrads(pub ModelParams);

/// Token and character ids of one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedQuery {
    pub words: Vec<usize>,
    pub chars: Vec<Vec<usize>>,
}

impl ModelParams {
    pub fn flags(&self) -> ModelFlags {
        ModelFlags {
            use_char_embedding: self.chars.is_some(),
            use_crf: self.crf.is_some(),
        }
    }

    pub fn gru_input(&self) -> usize {
        self.dims.word_emb
            + if self.chars.is_some() {
                2 * self.dims.char_hidden
            } else {
                0
            }
    }

    /// Zero-valued parameters with identical shapes, as a gradient buffer.
    pub fn zeros_like(&self) -> ModelParams {
        let mut z = self.clone();
        for (_, block) in z.blocks_mut() {
            block.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    /// Named parameter blocks in a fixed order.
    pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = vec![("word_emb", &self.word_emb.data)];
        if let Some(c) = &self.chars {
            out.extend([
                ("char_emb", c.emb.data.as_slice()),
                ("char_fwd.w", &c.fwd.w.data),
                ("char_fwd.u", &c.fwd.u.data),
                ("char_fwd.b", &c.fwd.b),
                ("char_bwd.w", &c.bwd.w.data),
                ("char_bwd.u", &c.bwd.u.data),
                ("char_bwd.b", &c.bwd.b),
            ]);
        }
        out.extend([
            ("word_fwd.w", self.gru_fwd.w.data.as_slice()),
            ("word_fwd.u", &self.gru_fwd.u.data),
            ("word_fwd.b", &self.gru_fwd.b),
            ("word_bwd.w", &self.gru_bwd.w.data),
            ("word_bwd.u", &self.gru_bwd.u.data),
            ("word_bwd.b", &self.gru_bwd.b),
            ("proj.w", &self.proj_w.data),
            ("proj.b", &self.proj_b),
        ]);
        if let Some(t) = &self.crf {
            out.extend([
                ("crf.start", t.start.as_slice()),
                ("crf.trans", t.trans.as_flattened()),
                ("crf.end", t.end.as_slice()),
            ]);
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = vec![("word_emb", &mut self.word_emb.data)];
        if let Some(c) = &mut self.chars {
            out.extend([
                ("char_emb", c.emb.data.as_mut_slice()),
                ("char_fwd.w", &mut c.fwd.w.data),
                ("char_fwd.u", &mut c.fwd.u.data),
                ("char_fwd.b", &mut c.fwd.b),
                ("char_bwd.w", &mut c.bwd.w.data),
                ("char_bwd.u", &mut c.bwd.u.data),
                ("char_bwd.b", &mut c.bwd.b),
            ]);
        }
        out.extend([
            ("word_fwd.w", self.gru_fwd.w.data.as_mut_slice()),
            ("word_fwd.u", &mut self.gru_fwd.u.data),
            ("word_fwd.b", &mut self.gru_fwd.b),
            ("word_bwd.w", &mut self.gru_bwd.w.data),
            ("word_bwd.u", &mut self.gru_bwd.u.data),
            ("word_bwd.b", &mut self.gru_bwd.b),
            ("proj.w", &mut self.proj_w.data),
            ("proj.b", &mut self.proj_b),
        ]);
        if let Some(t) = &mut self.crf {
            out.extend([
                ("crf.start", t.start.as_mut_slice()),
                ("crf.trans", t.trans.as_flattened_mut()),
                ("crf.end", t.end.as_mut_slice()),
            ]);
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }

    /// Copies weights from `prev`: embedding rows of words and characters
    /// present in both vocabs, and every other block whose shape matches.
    pub fn warm_start_from(&mut self, prev: &ModelParams) {
        for (id, w) in self.vocab.words().iter().enumerate() {
            let pid = prev.vocab.word_id(w);
            if (id == UNK || pid != UNK) && prev.word_emb.cols == self.word_emb.cols {
                self.word_emb.row_mut(id).copy_from_slice(prev.word_emb.row(pid));
            }
        }
        if let (Some(dst), Some(src)) = (self.chars.as_mut(), prev.chars.as_ref()) {
            if dst.emb.cols == src.emb.cols {
                for (id, &c) in self.vocab.chars().iter().enumerate().skip(1) {
                    let pid = prev.vocab.char_id(c);
                    if pid != UNK {
                        dst.emb.row_mut(id).copy_from_slice(src.emb.row(pid));
                    }
                }
            }
        }
        let prev_blocks = prev.blocks();
        for (name, dst) in self.blocks_mut() {
            if name == "word_emb" || name == "char_emb" {
                continue;
            }
            if let Some((_, src)) = prev_blocks.iter().find(|(n, _)| *n == name) {
                if src.len() == dst.len() {
                    dst.copy_from_slice(src);
                }
            }
        }
    }

    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> EncodedQuery {
        EncodedQuery {
            words: tokens.iter().map(|t| self.vocab.word_id(t.as_ref())).collect(),
            chars: tokens
                .iter()
                .map(|t| t.as_ref().chars().map(|c| self.vocab.char_id(c)).collect())
                .collect(),
        }
    }
}

/// Draws initial weights: recurrent and projection matrices uniform in
/// `±sqrt(6 / (fan_in + fan_out))`, embeddings uniform in `±sqrt(3 / dim)`,
/// biases and CRF scores zero. Words found in `pretrained` take its rows.
pub fn init_params(
    dims: &ModelDims,
    flags: ModelFlags,
    vocab: Arc<Vocab>,
    pretrained: Option<&EmbeddingTable>,
    seed: u64,
) -> Result<ModelParams> {
    dims.validate()?;
    if let Some(table) = pretrained {
        if table.dim() != dims.word_emb {
            return Err(Error::Dimension(format!(
                "pretrained embeddings have width {}, model expects {}",
                table.dim(),
                dims.word_emb
            )));
        }
    }
    let mut r = rng::seeded(seed);
    let emb_limit = |d: usize| (3.0 / d as f64).sqrt();
    let mut word_emb = Matrix::uniform(vocab.num_words(), dims.word_emb, emb_limit(dims.word_emb), &mut r);
    if let Some(table) = pretrained {
        for (id, word) in vocab.words().iter().enumerate() {
            if let Some(row) = table.get(word) {
                word_emb.row_mut(id).copy_from_slice(row);
            }
        }
    }
    let chars = flags.use_char_embedding.then(|| CharEncoder {
        emb: Matrix::uniform(vocab.num_chars(), dims.char_emb, emb_limit(dims.char_emb), &mut r),
        fwd: Lstm::init(dims.char_emb, dims.char_hidden, &mut r),
        bwd: Lstm::init(dims.char_emb, dims.char_hidden, &mut r),
    });
    let gru_in = dims.word_emb
        + if flags.use_char_embedding {
            2 * dims.char_hidden
        } else {
            0
        };
    let gru_fwd = Gru::init(gru_in, dims.word_hidden, &mut r);
    let gru_bwd = Gru::init(gru_in, dims.word_hidden, &mut r);
    let proj_w = Matrix::uniform(
        NUM_LABELS,
        2 * dims.word_hidden,
        Matrix::glorot_limit(NUM_LABELS, 2 * dims.word_hidden),
        &mut r,
    );
    Ok(ModelParams {
        dims: *dims,
        vocab,
        word_emb,
        chars,
        gru_fwd,
        gru_bwd,
        proj_w,
        proj_b: vec![0.0; NUM_LABELS],
        crf: flags.use_crf.then(|| TransitionMatrix::zeros(build_bio_mask())),
    })
}

struct CharTrace {
    fwd: LstmTrace,
    bwd: LstmTrace,
}

struct Forward {
    char_traces: Vec<Option<CharTrace>>,
    inputs: Vec<Vec<f64>>,
    gru_fwd: GruTrace,
    gru_bwd: GruTrace,
    features: Vec<Vec<f64>>,
    emissions: EmissionScores,
}

fn char_rows<'a>(enc: &'a CharEncoder, ids: &[usize]) -> Vec<&'a [f64]> {
    ids.iter().map(|&c| enc.emb.row(c)).collect()
}

fn char_forward(enc: &CharEncoder, ids: &[usize]) -> (Vec<f64>, Option<CharTrace>) {
    let h = enc.fwd.hidden();
    if ids.is_empty() {
        return (vec![0.0; 2 * h], None);
    }
    let xs = char_rows(enc, ids);
    let rev: Vec<&[f64]> = xs.iter().rev().copied().collect();
    let fwd = enc.fwd.forward(&xs);
    let bwd = enc.bwd.forward(&rev);
    let mut repr = fwd.hidden[ids.len() - 1].clone();
    repr.extend_from_slice(&bwd.hidden[ids.len() - 1]);
    (repr, Some(CharTrace { fwd, bwd }))
}

impl ModelParams {
    /// Final forward state over the characters followed by the final
    /// backward state (the backward LSTM reads right to left).
    pub fn char_word_repr(&self, word: &str) -> Option<Vec<f64>> {
        let enc = self.chars.as_ref()?;
        let ids: Vec<usize> = word.chars().map(|c| self.vocab.char_id(c)).collect();
        Some(char_forward(enc, &ids).0)
    }

    fn forward(&self, q: &EncodedQuery) -> Forward {
        let n = q.words.len();
        let mut inputs = Vec::with_capacity(n);
        let mut char_traces = Vec::with_capacity(n);
        for t in 0..n {
            let mut x = self.word_emb.row(q.words[t]).to_vec();
            if let Some(enc) = &self.chars {
                let (repr, trace) = char_forward(enc, &q.chars[t]);
                x.extend_from_slice(&repr);
                char_traces.push(trace);
            }
            inputs.push(x);
        }
        let xs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
        let rev: Vec<&[f64]> = xs.iter().rev().copied().collect();
        let gru_fwd = self.gru_fwd.forward(&xs);
        let gru_bwd = self.gru_bwd.forward(&rev);
        let mut features = Vec::with_capacity(n);
        let mut emissions = EmissionScores::zeros(n);
        for t in 0..n {
            let mut f = gru_fwd.hidden[t].clone();
            f.extend_from_slice(&gru_bwd.hidden[n - 1 - t]);
            let row = emissions.row_mut(t);
            row.copy_from_slice(&self.proj_b);
            self.proj_w.matvec_acc(&f, row);
            features.push(f);
        }
        Forward {
            char_traces,
            inputs,
            gru_fwd,
            gru_bwd,
            features,
            emissions,
        }
    }

    fn backward(&self, q: &EncodedQuery, fw: &Forward, d_emissions: &EmissionScores, grads: &mut ModelParams) {
        let n = q.words.len();
        let h = self.dims.word_hidden;
        let mut dh_fwd = vec![vec![0.0; h]; n];
        let mut dh_bwd = vec![vec![0.0; h]; n];
        for t in 0..n {
            let de = d_emissions.row(t);
            grads.proj_w.outer_acc(de, &fw.features[t]);
            add_assign(&mut grads.proj_b, de);
            let mut df = vec![0.0; 2 * h];
            self.proj_w.matvec_t_acc(de, &mut df);
            dh_fwd[t].copy_from_slice(&df[..h]);
            dh_bwd[n - 1 - t].copy_from_slice(&df[h..]);
        }
        let xs: Vec<&[f64]> = fw.inputs.iter().map(Vec::as_slice).collect();
        let rev: Vec<&[f64]> = xs.iter().rev().copied().collect();
        let dx_fwd = self.gru_fwd.backward(&xs, &fw.gru_fwd, &dh_fwd, &mut grads.gru_fwd);
        let dx_bwd = self.gru_bwd.backward(&rev, &fw.gru_bwd, &dh_bwd, &mut grads.gru_bwd);

        let dw = self.dims.word_emb;
        for t in 0..n {
            let mut dx = dx_fwd[t].clone();
            add_assign(&mut dx, &dx_bwd[n - 1 - t]);
            add_assign(grads.word_emb.row_mut(q.words[t]), &dx[..dw]);
            if let (Some(enc), Some(Some(trace))) = (&self.chars, fw.char_traces.get(t)) {
                let genc = grads.chars.as_mut().expect("gradient buffer mirrors params");
                let ch = enc.fwd.hidden();
                let ids = &q.chars[t];
                let m = ids.len();
                let xs = char_rows(enc, ids);
                let rev: Vec<&[f64]> = xs.iter().rev().copied().collect();
                let mut dh = vec![vec![0.0; ch]; m];
                dh[m - 1].copy_from_slice(&dx[dw..dw + ch]);
                let dcf = enc.fwd.backward(&xs, &trace.fwd, &dh, &mut genc.fwd);
                dh[m - 1].copy_from_slice(&dx[dw + ch..dw + 2 * ch]);
                let dcb = enc.bwd.backward(&rev, &trace.bwd, &dh, &mut genc.bwd);
                for (i, &c) in ids.iter().enumerate() {
                    let row = genc.emb.row_mut(c);
                    add_assign(row, &dcf[i]);
                    add_assign(row, &dcb[m - 1 - i]);
                }
            }
        }
    }

    /// Per-token label scores for an encoded query.
    pub fn emissions(&self, q: &EncodedQuery) -> EmissionScores {
        self.forward(q).emissions
    }

    /// Loss of one query (CRF negative log-likelihood, or the summed
    /// per-token cross-entropy without CRF). Gradients are added to `grads`.
    pub fn query_loss_grads(
        &self,
        q: &EncodedQuery,
        labels: &[crate::label::LabelTag],
        grads: &mut ModelParams,
    ) -> Result<f64> {
        let fw = self.forward(q);
        let (loss, d_emissions) = match &self.crf {
            Some(crf) => {
                let (loss, g) = crf_nll_grad(&fw.emissions, crf, labels)?;
                let gcrf = grads.crf.as_mut().expect("gradient buffer mirrors params");
                add_assign(&mut gcrf.start, &g.start);
                add_assign(&mut gcrf.end, &g.end);
                add_assign(gcrf.trans.as_flattened_mut(), g.trans.as_flattened());
                (loss, g.emissions)
            }
            None => softmax_xent(&fw.emissions, labels)?,
        };
        self.backward(q, &fw, &d_emissions, grads);
        Ok(loss)
    }
}

fn softmax_xent(e: &EmissionScores, labels: &[crate::label::LabelTag]) -> Result<(f64, EmissionScores)> {
    if e.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "emissions and labels",
            left: e.len(),
            right: labels.len(),
        });
    }
    let mut d = EmissionScores::zeros(e.len());
    let mut loss = 0.0;
    for (t, y) in labels.iter().enumerate() {
        let row = e.row(t);
        let lse = log_sum_exp(row);
        let drow = d.row_mut(t);
        for k in 0..NUM_LABELS {
            drow[k] = (row[k] - lse).exp();
        }
        drow[y.index()] -= 1.0;
        loss += lse - row[y.index()];
    }
    Ok((loss, d))
}

/// Emission scores for a token list.
pub fn encode_query<S: AsRef<str>>(tokens: &[S], params: &ModelParams) -> EmissionScores {
    params.emissions(&params.encode_tokens(tokens))
}

/// Queries per gradient accumulation chunk. Fixed so that the reduction
/// order does not depend on the thread count.
pub const GRAD_CHUNK: usize = 8;

/// Mean loss over `batch` and its gradients: per-query CRF negative
/// log-likelihood, or per-token cross-entropy when the CRF is off.
pub fn model_loss_grads(batch: &[TaggedQuery], params: &ModelParams) -> Result<(f64, TrainBatchGrads)> {
    let encoded: Vec<EncodedQuery> = batch.iter().map(|q| params.encode_tokens(q.tokens())).collect();
    let labels: Vec<&[crate::label::LabelTag]> = batch.iter().map(|q| q.labels()).collect();
    loss_grads_encoded(&encoded, &labels, params, ExecMode::Sequential)
}

/// [`model_loss_grads`] over pre-encoded queries. Chunks of [`GRAD_CHUNK`]
/// queries are processed independently (in parallel under
/// [`ExecMode::Parallel`]) and their sums reduced in chunk order.
pub fn loss_grads_encoded(
    encoded: &[EncodedQuery],
    labels: &[&[crate::label::LabelTag]],
    params: &ModelParams,
    mode: ExecMode,
) -> Result<(f64, TrainBatchGrads)> {
    if encoded.is_empty() {
        return Err(Error::EmptyDataset("batch"));
    }
    let items: Vec<(&EncodedQuery, &[crate::label::LabelTag])> = encoded.iter().zip(labels.iter().copied()).collect();
    let partials = exec::map_chunks(mode, &items, GRAD_CHUNK, |chunk| -> Result<(f64, ModelParams)> {
        let mut g = params.zeros_like();
        let mut loss = 0.0;
        for (q, y) in chunk {
            loss += params.query_loss_grads(q, y, &mut g)?;
        }
        Ok((loss, g))
    });
    let mut total_loss = 0.0;
    let mut total: Option<ModelParams> = None;
    for partial in partials {
        let (loss, g) = partial?;
        total_loss += loss;
        match total.as_mut() {
            None => total = Some(g),
            Some(acc) => {
                for ((_, dst), (_, src)) in acc.blocks_mut().into_iter().zip(g.blocks()) {
                    add_assign(dst, src);
                }
            }
        }
    }
    let denom = if params.crf.is_some() {
        encoded.len()
    } else {
        encoded.iter().map(|q| q.words.len()).sum()
    } as f64;
    let mut grads = total.expect("non-empty batch");
    for (_, block) in grads.blocks_mut() {
        block.iter_mut().for_each(|v| *v /= denom);
    }
    Ok((total_loss / denom, TrainBatchGrads(grads)))
}

/// Clips the global gradient norm to `clip`, then takes a step of size `lr`.
pub fn sgd_step(mut params: ModelParams, grads: &TrainBatchGrads, lr: f64, clip: f64) -> Result<ModelParams> {
    apply_sgd(&mut params, grads, lr, clip)?;
    Ok(params)
}

/// In-place [`sgd_step`]. Returns the pre-clipping gradient norm.
pub fn apply_sgd(params: &mut ModelParams, grads: &TrainBatchGrads, lr: f64, clip: f64) -> Result<f64> {
    if lr.is_nan() || lr <= 0.0 || clip.is_nan() || clip <= 0.0 {
        return Err(Error::Config(format!(
            "lr and clip must be positive (lr={lr}, clip={clip})"
        )));
    }
    let gblocks = grads.0.blocks();
    let mut sq = 0.0;
    for (name, block) in &gblocks {
        if block.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(name.to_string()));
        }
        sq += block.iter().map(|v| v * v).sum::<f64>();
    }
    let norm = sq.sqrt();
    let scale = if norm > clip { clip / norm } else { 1.0 };
    let step = lr * scale;
    let pblocks = params.blocks_mut();
    if pblocks.len() != gblocks.len() {
        return Err(Error::Dimension("gradient blocks do not match parameters".into()));
    }
    for ((pname, p), (gname, g)) in pblocks.into_iter().zip(gblocks) {
        if pname != gname || p.len() != g.len() {
            return Err(Error::Dimension(format!(
                "gradient block {gname} does not match {pname}"
            )));
        }
        for (pv, gv) in p.iter_mut().zip(g) {
            *pv -= step * gv;
        }
    }
    Ok(norm)
}

/// Replaces the word id of each token with the unknown id with probability `rate`.
pub fn word_dropout(q: &EncodedQuery, rate: f64, rng: &mut rng::Rng) -> EncodedQuery {
    use rand::Rng as _;
    let mut out = q.clone();
    if rate > 0.0 {
        for w in &mut out.words {
            if rng.random::<f64>() < rate {
                *w = UNK;
            }
        }
    }
    out
}
