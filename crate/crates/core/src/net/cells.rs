//! LSTM and GRU cells unrolled over a sequence, with reverse-mode gradients.
//!
//! LSTM, gate blocks stacked as `[i; f; g; o]`:
//! ```text
//! a = W x + U h_prev + b
//! i = σ(a_i)  f = σ(a_f)  g = tanh(a_g)  o = σ(a_o)
//! c = f ⊙ c_prev + i ⊙ g
//! h = o ⊙ tanh(c)
//! ```
//! GRU, blocks stacked as `[z; r; n]`:
//! ```text
//! z = σ(W_z x + U_z h_prev + b_z)
//! r = σ(W_r x + U_r h_prev + b_r)
//! n = tanh(W_n x + U_n (r ⊙ h_prev) + b_n)
//! h = (1 - z) ⊙ n + z ⊙ h_prev
//! ```
//! Both start from zero state.

use super::tensor::{add_assign, gemv_acc, gemv_t_acc, outer_acc, sigmoid, Matrix};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
}

pub struct LstmStep {
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
}

pub struct LstmTrace {
    steps: Vec<LstmStep>,
    pub hidden: Vec<Vec<f64>>,
}

impl Lstm {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Lstm {
            w: Matrix::zeros(4 * hidden, input),
            u: Matrix::zeros(4 * hidden, hidden),
            b: vec![0.0; 4 * hidden],
        }
    }

    pub fn init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        Lstm {
            w: Matrix::uniform(4 * hidden, input, Matrix::glorot_limit(4 * hidden, input), rng),
            u: Matrix::uniform(4 * hidden, hidden, Matrix::glorot_limit(4 * hidden, hidden), rng),
            b: vec![0.0; 4 * hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.cols
    }

    pub fn input(&self) -> usize {
        self.w.cols
    }

    pub fn forward(&self, xs: &[&[f64]]) -> LstmTrace {
        let h_dim = self.hidden();
        let mut h = vec![0.0; h_dim];
        let mut c = vec![0.0; h_dim];
        let mut steps = Vec::with_capacity(xs.len());
        let mut hidden = Vec::with_capacity(xs.len());
        for x in xs {
            let mut a = self.b.clone();
            self.w.matvec_acc(x, &mut a);
            self.u.matvec_acc(&h, &mut a);
            let (ai, rest) = a.split_at_mut(h_dim);
            let (af, rest) = rest.split_at_mut(h_dim);
            let (ag, ao) = rest.split_at_mut(h_dim);
            let mut c_new = vec![0.0; h_dim];
            let mut tanh_c = vec![0.0; h_dim];
            let mut h_new = vec![0.0; h_dim];
            for j in 0..h_dim {
                ai[j] = sigmoid(ai[j]);
                af[j] = sigmoid(af[j]);
                ag[j] = ag[j].tanh();
                ao[j] = sigmoid(ao[j]);
                c_new[j] = af[j] * c[j] + ai[j] * ag[j];
                tanh_c[j] = c_new[j].tanh();
                h_new[j] = ao[j] * tanh_c[j];
            }
            c.clone_from(&c_new);
            h.clone_from(&h_new);
            steps.push(LstmStep {
                gates: a,
                c: c_new,
                tanh_c,
            });
            hidden.push(h_new);
        }
        LstmTrace { steps, hidden }
    }

    /// Backpropagates `dh[t]` (gradient w.r.t. each step's output) and
    /// returns the gradient w.r.t. each input. Parameter gradients are
    /// added into `grads`.
    pub fn backward(&self, xs: &[&[f64]], trace: &LstmTrace, dh: &[Vec<f64>], grads: &mut Lstm) -> Vec<Vec<f64>> {
        let h_dim = self.hidden();
        let n = xs.len();
        let zeros = vec![0.0; h_dim];
        let mut dxs = vec![vec![0.0; self.input()]; n];
        let mut dh_next = vec![0.0; h_dim];
        let mut dc_next = vec![0.0; h_dim];
        let mut da = vec![0.0; 4 * h_dim];
        for t in (0..n).rev() {
            let step = &trace.steps[t];
            let c_prev = if t > 0 { &trace.steps[t - 1].c } else { &zeros };
            let h_prev = if t > 0 { &trace.hidden[t - 1] } else { &zeros };
            let g = &step.gates;
            let mut dc_prev = vec![0.0; h_dim];
            for j in 0..h_dim {
                let (i, f, gg, o) = (g[j], g[h_dim + j], g[2 * h_dim + j], g[3 * h_dim + j]);
                let dht = dh[t][j] + dh_next[j];
                let dc = dc_next[j] + dht * o * (1.0 - step.tanh_c[j] * step.tanh_c[j]);
                da[j] = dc * gg * i * (1.0 - i);
                da[h_dim + j] = dc * c_prev[j] * f * (1.0 - f);
                da[2 * h_dim + j] = dc * i * (1.0 - gg * gg);
                da[3 * h_dim + j] = dht * step.tanh_c[j] * o * (1.0 - o);
                dc_prev[j] = dc * f;
            }
            grads.w.outer_acc(&da, xs[t]);
            grads.u.outer_acc(&da, h_prev);
            add_assign(&mut grads.b, &da);
            self.w.matvec_t_acc(&da, &mut dxs[t]);
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            self.u.matvec_t_acc(&da, &mut dh_next);
            dc_next = dc_prev;
        }
        dxs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
}

pub struct GruStep {
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    rh: Vec<f64>,
}

pub struct GruTrace {
    steps: Vec<GruStep>,
    pub hidden: Vec<Vec<f64>>,
}

impl Gru {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Gru {
            w: Matrix::zeros(3 * hidden, input),
            u: Matrix::zeros(3 * hidden, hidden),
            b: vec![0.0; 3 * hidden],
        }
    }

    pub fn init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        Gru {
            w: Matrix::uniform(3 * hidden, input, Matrix::glorot_limit(3 * hidden, input), rng),
            u: Matrix::uniform(3 * hidden, hidden, Matrix::glorot_limit(3 * hidden, hidden), rng),
            b: vec![0.0; 3 * hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.cols
    }

    pub fn input(&self) -> usize {
        self.w.cols
    }

    pub fn forward(&self, xs: &[&[f64]]) -> GruTrace {
        let h_dim = self.hidden();
        let mut h = vec![0.0; h_dim];
        let mut steps = Vec::with_capacity(xs.len());
        let mut hidden = Vec::with_capacity(xs.len());
        let (u_zr, u_n) = self.u.data.split_at(2 * h_dim * h_dim);
        for x in xs {
            let mut a = self.b.clone();
            self.w.matvec_acc(x, &mut a);
            gemv_acc(u_zr, &h, &mut a[..2 * h_dim]);
            let z: Vec<f64> = a[..h_dim].iter().map(|&v| sigmoid(v)).collect();
            let r: Vec<f64> = a[h_dim..2 * h_dim].iter().map(|&v| sigmoid(v)).collect();
            let rh: Vec<f64> = r.iter().zip(&h).map(|(r, h)| r * h).collect();
            let mut an = a[2 * h_dim..].to_vec();
            gemv_acc(u_n, &rh, &mut an);
            let n: Vec<f64> = an.iter().map(|v| v.tanh()).collect();
            let h_new: Vec<f64> = (0..h_dim).map(|j| (1.0 - z[j]) * n[j] + z[j] * h[j]).collect();
            h.clone_from(&h_new);
            steps.push(GruStep { z, r, n, rh });
            hidden.push(h_new);
        }
        GruTrace { steps, hidden }
    }

    /// See [`Lstm::backward`].
    pub fn backward(&self, xs: &[&[f64]], trace: &GruTrace, dh: &[Vec<f64>], grads: &mut Gru) -> Vec<Vec<f64>> {
        let h_dim = self.hidden();
        let n_steps = xs.len();
        let zeros = vec![0.0; h_dim];
        let mut dxs = vec![vec![0.0; self.input()]; n_steps];
        let mut dh_next = vec![0.0; h_dim];
        let mut da = vec![0.0; 3 * h_dim];
        let (u_zr, u_n) = self.u.data.split_at(2 * h_dim * h_dim);
        let (d_uzr, d_un) = grads.u.data.split_at_mut(2 * h_dim * h_dim);
        for t in (0..n_steps).rev() {
            let s = &trace.steps[t];
            let h_prev = if t > 0 { &trace.hidden[t - 1] } else { &zeros };
            let dht: Vec<f64> = (0..h_dim).map(|j| dh[t][j] + dh_next[j]).collect();
            let mut dh_prev: Vec<f64> = (0..h_dim).map(|j| dht[j] * s.z[j]).collect();
            // candidate
            let da_n: Vec<f64> = (0..h_dim)
                .map(|j| dht[j] * (1.0 - s.z[j]) * (1.0 - s.n[j] * s.n[j]))
                .collect();
            outer_acc(d_un, &da_n, &s.rh);
            let mut d_rh = vec![0.0; h_dim];
            gemv_t_acc(u_n, &da_n, &mut d_rh);
            for j in 0..h_dim {
                dh_prev[j] += d_rh[j] * s.r[j];
                // update gate
                da[j] = dht[j] * (h_prev[j] - s.n[j]) * s.z[j] * (1.0 - s.z[j]);
                // reset gate
                da[h_dim + j] = d_rh[j] * h_prev[j] * s.r[j] * (1.0 - s.r[j]);
                da[2 * h_dim + j] = da_n[j];
            }
            outer_acc(d_uzr, &da[..2 * h_dim], h_prev);
            gemv_t_acc(u_zr, &da[..2 * h_dim], &mut dh_prev);
            grads.w.outer_acc(&da, xs[t]);
            add_assign(&mut grads.b, &da);
            self.w.matvec_t_acc(&da, &mut dxs[t]);
            dh_next = dh_prev;
        }
        dxs
    }
}
