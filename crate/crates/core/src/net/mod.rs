//! Char-BiLSTM + word-BiGRU encoder producing per-token label scores.
//!
//! Each token's input is its word embedding concatenated with the final
//! states of a forward and a backward character LSTM. A bidirectional GRU
//! runs over those inputs and a linear layer maps `[h_fwd; h_bwd]` to one
//! score per label. Gradients are computed by hand.

mod cells;
mod model;
mod tensor;
mod vocab;

pub use cells::{Gru, GruTrace, Lstm, LstmTrace};
pub use model::{
    apply_sgd, encode_query, init_params, loss_grads_encoded, model_loss_grads, sgd_step, word_dropout, CharEncoder,
    EncodedQuery, ModelDims, ModelFlags, ModelParams, TrainBatchGrads, GRAD_CHUNK,
};
pub use tensor::Matrix;
pub use vocab::{Vocab, UNK, UNK_TOKEN};
