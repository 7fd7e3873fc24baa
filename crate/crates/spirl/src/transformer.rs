//! Pre-layer-norm Transformer layers with multi-head self-attention.
//!
//! Per-head projections use the fused qkv layout: one `d -> 3d` linear with
//! bias, split into `k` heads of width `d_head = d / k`. Attention logits are
//! scaled by `1 / sqrt(d_head)`. All linear layers carry biases and layer norm
//! uses eps = 1e-6.

use rand_chacha::ChaCha8Rng;

use crate::tensor::{ParamStore, Result, Tape, TensorId};

pub const LN_EPS: f64 = 1e-6;
const INIT_STD: f64 = 0.02;

/// Scaled dot-product attention for a single query:
/// `softmax(q K^T / sqrt(d_head)) V`.
pub fn attention(tape: &mut Tape, q: TensorId, k: TensorId, v: TensorId) -> Result<TensorId> {
    let d_head = match tape.shape(q) {
        [d] => *d,
        [1, d] => *d,
        s => {
            return Err(crate::tensor::TensorError::ShapeMismatch {
                op: "attention",
                detail: format!("query must be a vector, got {s:?}"),
            })
        }
    };
    let n = tape.shape(k)[0];
    if n == 0 {
        return Err(crate::tensor::TensorError::ShapeMismatch {
            op: "attention",
            detail: "empty key set".into(),
        });
    }
    let q2 = tape.reshape(q, &[1, d_head])?;
    let logits = tape.matmul_nt(q2, k)?;
    let scaled = tape.scale(logits, 1.0 / (d_head as f64).sqrt());
    let weights = tape.softmax(scaled)?;
    tape.matmul(weights, v)
}

/// One attention head with explicit projection matrices:
/// `Attention(x_i W^Q, X W^K, X W^V)`.
pub fn sdpa(
    tape: &mut Tape,
    x_i: TensorId,
    x: TensorId,
    wq: TensorId,
    wk: TensorId,
    wv: TensorId,
) -> Result<TensorId> {
    let d = tape.shape(x)[1];
    let xi2 = tape.reshape(x_i, &[1, d])?;
    let q = tape.matmul(xi2, wq)?;
    let k = tape.matmul(x, wk)?;
    let v = tape.matmul(x, wv)?;
    attention(tape, q, k, v)
}

/// Configuration of one attention stack width.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AttentionConfig {
    pub dim: usize,
    pub heads: usize,
    /// MLP hidden width as a multiple of `dim`.
    pub mlp_ratio: usize,
}

impl AttentionConfig {
    pub fn d_head(&self) -> usize {
        assert!(
            self.heads >= 1 && self.dim % self.heads == 0,
            "head count {} must divide width {}",
            self.heads,
            self.dim
        );
        self.dim / self.heads
    }
}

/// Parameter names for one pre-LN transformer layer under a given prefix.
#[derive(Debug, Clone)]
pub struct LayerParams {
    pub prefix: String,
    pub config: AttentionConfig,
}

impl LayerParams {
    /// Register freshly initialized parameters for one layer.
    pub fn init(store: &mut ParamStore, prefix: &str, config: AttentionConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = config.dim;
        let hidden = d * config.mlp_ratio;
        store.add_trunc_normal(&format!("{prefix}.qkv.w"), &[d, 3 * d], INIT_STD, rng);
        store.add_zeros(&format!("{prefix}.qkv.b"), &[3 * d]);
        store.add_trunc_normal(&format!("{prefix}.proj.w"), &[d, d], INIT_STD, rng);
        store.add_zeros(&format!("{prefix}.proj.b"), &[d]);
        store.add_ones(&format!("{prefix}.ln1.g"), &[d]);
        store.add_zeros(&format!("{prefix}.ln1.b"), &[d]);
        store.add_ones(&format!("{prefix}.ln2.g"), &[d]);
        store.add_zeros(&format!("{prefix}.ln2.b"), &[d]);
        store.add_trunc_normal(&format!("{prefix}.mlp.w1"), &[d, hidden], INIT_STD, rng);
        store.add_zeros(&format!("{prefix}.mlp.b1"), &[hidden]);
        store.add_trunc_normal(&format!("{prefix}.mlp.w2"), &[hidden, d], INIT_STD, rng);
        store.add_zeros(&format!("{prefix}.mlp.b2"), &[d]);
        LayerParams { prefix: prefix.to_string(), config }
    }

    /// Handle to an already-registered layer.
    pub fn named(prefix: &str, config: AttentionConfig) -> Self {
        LayerParams { prefix: prefix.to_string(), config }
    }

    fn p(&self, tape: &mut Tape, store: &ParamStore, suffix: &str) -> Result<TensorId> {
        tape.param(store, &format!("{}.{suffix}", self.prefix))
    }

    /// Multi-head self-attention over `x [n,d]` (queries = keys source).
    /// Optional `attend_mask` marks rows excluded from the softmax.
    pub fn mhsa(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: TensorId,
        attend_rows: Option<&[usize]>,
    ) -> Result<TensorId> {
        let d = self.config.dim;
        let k = self.config.heads;
        let dh = self.config.d_head();
        let wqkv = self.p(tape, store, "qkv.w")?;
        let bqkv = self.p(tape, store, "qkv.b")?;
        let qkv = tape.linear(x, wqkv, bqkv)?;
        let mut heads = Vec::with_capacity(k);
        for h in 0..k {
            let q = tape.slice_cols(qkv, h * dh, dh)?;
            let kk = tape.slice_cols(qkv, d + h * dh, dh)?;
            let vv = tape.slice_cols(qkv, 2 * d + h * dh, dh)?;
            let (kk, vv) = match attend_rows {
                Some(rows) => (tape.gather_rows(kk, rows)?, tape.gather_rows(vv, rows)?),
                None => (kk, vv),
            };
            let logits = tape.matmul_nt(q, kk)?;
            let scaled = tape.scale(logits, 1.0 / (dh as f64).sqrt());
            let weights = tape.softmax(scaled)?;
            heads.push(tape.matmul(weights, vv)?);
        }
        let cat = tape.concat_cols(&heads)?;
        let wo = self.p(tape, store, "proj.w")?;
        let bo = self.p(tape, store, "proj.b")?;
        tape.linear(cat, wo, bo)
    }

    fn mlp(&self, tape: &mut Tape, store: &ParamStore, x: TensorId) -> Result<TensorId> {
        let w1 = self.p(tape, store, "mlp.w1")?;
        let b1 = self.p(tape, store, "mlp.b1")?;
        let w2 = self.p(tape, store, "mlp.w2")?;
        let b2 = self.p(tape, store, "mlp.b2")?;
        let h = tape.linear(x, w1, b1)?;
        let g = tape.gelu(h);
        tape.linear(g, w2, b2)
    }

    /// One pre-LN transformer layer.
    ///
    /// With `internal_residual` the standard two-residual form
    /// `x' = x + MHSA(LN(x)); z = x' + MLP(LN(x'))` is used; without it the
    /// two skip terms are dropped (the RL aggregator configuration).
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: TensorId,
        internal_residual: bool,
        attend_rows: Option<&[usize]>,
    ) -> Result<TensorId> {
        let g1 = self.p(tape, store, "ln1.g")?;
        let b1 = self.p(tape, store, "ln1.b")?;
        let xn = tape.layer_norm(x, g1, b1, LN_EPS)?;
        let att = self.mhsa(tape, store, xn, attend_rows)?;
        let x1 = if internal_residual { tape.add(x, att)? } else { att };
        let g2 = self.p(tape, store, "ln2.g")?;
        let b2 = self.p(tape, store, "ln2.b")?;
        let x1n = tape.layer_norm(x1, g2, b2, LN_EPS)?;
        let m = self.mlp(tape, store, x1n)?;
        if internal_residual {
            tape.add(x1, m)
        } else {
            Ok(m)
        }
    }

    /// The per-head attention weights of the first (query) row, head 0,
    /// computed outside the tape. Used for policy-attention introspection.
    pub fn head0_query_weights(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: TensorId,
        attend_rows: Option<&[usize]>,
    ) -> Result<Vec<f64>> {
        let d = self.config.dim;
        let dh = self.config.d_head();
        let g1 = self.p(tape, store, "ln1.g")?;
        let b1 = self.p(tape, store, "ln1.b")?;
        let xn = tape.layer_norm(x, g1, b1, LN_EPS)?;
        let wqkv = self.p(tape, store, "qkv.w")?;
        let bqkv = self.p(tape, store, "qkv.b")?;
        let qkv = tape.linear(xn, wqkv, bqkv)?;
        let q = tape.slice_cols(qkv, 0, dh)?;
        let kk = tape.slice_cols(qkv, d, dh)?;
        let kk = match attend_rows {
            Some(rows) => tape.gather_rows(kk, rows)?,
            None => kk,
        };
        let q0 = tape.slice_rows(q, 0, 1)?;
        let logits = tape.matmul_nt(q0, kk)?;
        let scaled = tape.scale(logits, 1.0 / (dh as f64).sqrt());
        let weights = tape.softmax(scaled)?;
        Ok(tape.data(weights).to_vec())
    }
}
