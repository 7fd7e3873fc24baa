//! The asymmetric tiny masked autoencoder: patchify, mask, encode, decode,
//! reconstruct, plus decoder background probes and the pre-training loop.
//!
//! The encoder is deliberately small and the decoder larger, so that patch
//! embeddings carry local content while repetitive background structure sinks
//! into the decoder weights.

mod pretrain;

pub use pretrain::{pretrain, PretrainSchedule};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{ParamStore, Result, Tape, TensorError, TensorId};
use crate::transformer::{AttentionConfig, LayerParams, LN_EPS};

pub const PATCH_NORM_EPS: f64 = 1e-6;

/// Raw frame geometry: square `h x w` RGB pixels split into `P x P` patches of
/// side `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSpec {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub p: usize,
}

impl FrameSpec {
    pub fn new(h: usize, w: usize, c: usize, p: usize) -> Self {
        assert_eq!(h, w, "frames must be square");
        assert_eq!(h % p, 0, "patch side must divide the frame side");
        FrameSpec { h, w, c, p }
    }

    /// Patches per row.
    pub fn patches_per_row(&self) -> usize {
        self.h / self.p
    }

    /// Total patch count `P^2`.
    pub fn num_patches(&self) -> usize {
        self.patches_per_row() * self.patches_per_row()
    }

    /// Scalars per patch (`p^2 c`).
    pub fn patch_len(&self) -> usize {
        self.p * self.p * self.c
    }

    pub fn frame_len(&self) -> usize {
        self.h * self.w * self.c
    }
}

/// A frame as `[0,1]` floats, row-major `h x w x c`.
#[derive(Debug, Clone)]
pub struct Frame {
    pub spec: FrameSpec,
    pub pixels: Vec<f64>,
}

impl Frame {
    pub fn from_rgb8(spec: FrameSpec, bytes: &[u8]) -> Self {
        assert_eq!(bytes.len(), spec.frame_len());
        Frame { spec, pixels: bytes.iter().map(|&b| b as f64 / 255.0).collect() }
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }
}

/// Split a frame into `P^2` patches in raster order; each patch is `p^2 c`
/// scalars, pixel-major (row, col, channel).
pub fn patchify(frame: &Frame) -> Vec<Vec<f64>> {
    let s = frame.spec;
    let pr = s.patches_per_row();
    let mut out = Vec::with_capacity(s.num_patches());
    for pi in 0..pr {
        for pj in 0..pr {
            let mut patch = Vec::with_capacity(s.patch_len());
            for r in 0..s.p {
                for cpx in 0..s.p {
                    let y = pi * s.p + r;
                    let x = pj * s.p + cpx;
                    let base = (y * s.w + x) * s.c;
                    patch.extend_from_slice(&frame.pixels[base..base + s.c]);
                }
            }
            out.push(patch);
        }
    }
    out
}

/// Inverse of [`patchify`]; bit-exact.
pub fn unpatchify(spec: FrameSpec, patches: &[Vec<f64>]) -> Frame {
    assert_eq!(patches.len(), spec.num_patches());
    let pr = spec.patches_per_row();
    let mut pixels = vec![0.0; spec.frame_len()];
    for (idx, patch) in patches.iter().enumerate() {
        assert_eq!(patch.len(), spec.patch_len());
        let (pi, pj) = (idx / pr, idx % pr);
        let mut k = 0;
        for r in 0..spec.p {
            for cpx in 0..spec.p {
                let y = pi * spec.p + r;
                let x = pj * spec.p + cpx;
                let base = (y * spec.w + x) * spec.c;
                pixels[base..base + spec.c].copy_from_slice(&patch[k..k + spec.c]);
                k += spec.c;
            }
        }
    }
    Frame { spec, pixels }
}

/// A patch shifted and scaled to zero mean, unit variance:
/// `(x - mean) / (std + eps)` over all `p^2 c` scalars.
#[derive(Debug, Clone)]
pub struct NormalizedPatch {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

pub fn normalize_patch(patch: &[f64], eps: f64) -> NormalizedPatch {
    let n = patch.len() as f64;
    let mean = patch.iter().sum::<f64>() / n;
    let var = patch.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let values = patch.iter().map(|&v| (v - mean) / (std + eps)).collect();
    NormalizedPatch { values, mean, std }
}

/// 2-D sinusoidal positional table `[P^2, d]`, deterministic and non-trainable.
///
/// Half the channels encode the row index, half the column, each as
/// interleaved sin/cos over a geometric frequency ladder with base 10000.
pub fn sinusoidal_pe_2d(patches_per_row: usize, d: usize) -> Result<Vec<f64>> {
    if d % 4 != 0 {
        return Err(TensorError::ShapeMismatch {
            op: "sinusoidal_pe_2d",
            detail: format!("width {d} not divisible by 4"),
        });
    }
    let half = d / 2;
    let pairs = half / 2;
    let p2 = patches_per_row * patches_per_row;
    let mut table = vec![0.0; p2 * d];
    for i in 0..patches_per_row {
        for j in 0..patches_per_row {
            let row = (i * patches_per_row + j) * d;
            for (axis, pos) in [(0usize, i), (1usize, j)] {
                for k in 0..pairs {
                    let omega = 1.0 / 10000f64.powf(k as f64 / pairs as f64);
                    let angle = pos as f64 * omega;
                    table[row + axis * half + 2 * k] = angle.sin();
                    table[row + axis * half + 2 * k + 1] = angle.cos();
                }
            }
        }
    }
    Ok(table)
}

/// Uniform random mask: Fisher-Yates shuffle of `0..n`, first
/// `ceil((1 - ratio) n)` indices visible. Both lists are returned in ascending
/// order.
pub fn random_mask(n: usize, ratio: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    assert!((0.0..1.0).contains(&ratio), "mask ratio must be in [0,1)");
    let n_visible = ((1.0 - ratio) * n as f64).ceil() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut visible: Vec<usize> = idx[..n_visible].to_vec();
    let mut masked: Vec<usize> = idx[n_visible..].to_vec();
    visible.sort_unstable();
    masked.sort_unstable();
    (visible, masked)
}

/// Width/depth settings for one ViT stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackConfig {
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaeConfig {
    pub frame: FrameSpec,
    pub encoder: StackConfig,
    pub decoder: StackConfig,
    pub mask_ratio: f64,
    pub mlp_ratio: usize,
}

impl MaeConfig {
    /// The full-size configuration: 96x96x3 frames, patch 8, encoder
    /// (64, 3, 4), decoder (128, 3, 8), mask ratio 0.75, expansion 4.
    pub fn paper() -> Self {
        MaeConfig {
            frame: FrameSpec::new(96, 96, 3, 8),
            encoder: StackConfig { dim: 64, depth: 3, heads: 4 },
            decoder: StackConfig { dim: 128, depth: 3, heads: 8 },
            mask_ratio: 0.75,
            mlp_ratio: 4,
        }
    }

    /// Desk-scale configuration for 48x48 frames.
    pub fn toy() -> Self {
        MaeConfig {
            frame: FrameSpec::new(48, 48, 3, 8),
            encoder: StackConfig { dim: 32, depth: 2, heads: 2 },
            decoder: StackConfig { dim: 64, depth: 2, heads: 4 },
            mask_ratio: 0.75,
            mlp_ratio: 4,
        }
    }

    fn enc_attn(&self) -> AttentionConfig {
        AttentionConfig { dim: self.encoder.dim, heads: self.encoder.heads, mlp_ratio: self.mlp_ratio }
    }

    fn dec_attn(&self) -> AttentionConfig {
        AttentionConfig { dim: self.decoder.dim, heads: self.decoder.heads, mlp_ratio: self.mlp_ratio }
    }
}

/// Per-channel dataset statistics used only to render normalized predictions
/// back into pixel space.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DatasetStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for DatasetStats {
    fn default() -> Self {
        DatasetStats { mean: [0.5; 3], std: [0.25; 3] }
    }
}

/// The MAE model: trainable parameters plus the fixed positional tables.
#[derive(Debug, Clone)]
pub struct MaeModel {
    pub config: MaeConfig,
    pub store: ParamStore,
    pub stats: DatasetStats,
    pe_enc: Vec<f64>,
    pe_dec: Vec<f64>,
}

/// Decoder-only probe input modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeMode {
    PePlusMask,
    PeOnly,
    MaskOnly,
}

impl ProbeMode {
    pub fn name(&self) -> &'static str {
        match self {
            ProbeMode::PePlusMask => "pe_plus_mask",
            ProbeMode::PeOnly => "pe_only",
            ProbeMode::MaskOnly => "mask_only",
        }
    }
}

impl MaeModel {
    /// Fresh model with truncated-normal weights (std 0.02), zero biases,
    /// ones/zeros layer norms.
    pub fn init(config: MaeConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let d_enc = config.encoder.dim;
        let d_dec = config.decoder.dim;
        let patch_len = config.frame.patch_len();

        store.add_trunc_normal("enc.patch_embed.w", &[patch_len, d_enc], 0.02, rng);
        store.add_zeros("enc.patch_embed.b", &[d_enc]);
        for b in 0..config.encoder.depth {
            LayerParams::init(&mut store, &format!("enc.block{b}"), config.enc_attn(), rng);
        }
        store.add_ones("enc.ln.g", &[d_enc]);
        store.add_zeros("enc.ln.b", &[d_enc]);

        store.add_trunc_normal("dec.embed.w", &[d_enc, d_dec], 0.02, rng);
        store.add_zeros("dec.embed.b", &[d_dec]);
        for b in 0..config.decoder.depth {
            LayerParams::init(&mut store, &format!("dec.block{b}"), config.dec_attn(), rng);
        }
        store.add_ones("dec.ln.g", &[d_dec]);
        store.add_zeros("dec.ln.b", &[d_dec]);
        store.add_trunc_normal("dec.head.w", &[d_dec, patch_len], 0.02, rng);
        store.add_zeros("dec.head.b", &[patch_len]);

        store.add_trunc_normal("tok.cls", &[d_enc], 0.02, rng);
        store.add_trunc_normal("tok.mask", &[d_dec], 0.02, rng);

        Self::with_store(config, store, DatasetStats::default())
    }

    /// Wrap an existing parameter store (e.g. loaded from a snapshot).
    pub fn with_store(config: MaeConfig, store: ParamStore, stats: DatasetStats) -> Result<Self> {
        let pr = config.frame.patches_per_row();
        let pe_enc = sinusoidal_pe_2d(pr, config.encoder.dim)?;
        let pe_dec = sinusoidal_pe_2d(pr, config.decoder.dim)?;
        Ok(MaeModel { config, store, stats, pe_enc, pe_dec })
    }

    /// Trainable scalar counts: (encoder, decoder, tokens, total).
    pub fn param_counts(&self) -> (usize, usize, usize, usize) {
        let enc = self.store.num_scalars_with_prefix("enc.");
        let dec = self.store.num_scalars_with_prefix("dec.");
        let tok = self.store.num_scalars_with_prefix("tok.");
        (enc, dec, tok, enc + dec + tok)
    }

    fn enc_layers(&self) -> Vec<LayerParams> {
        (0..self.config.encoder.depth)
            .map(|b| LayerParams::named(&format!("enc.block{b}"), self.config.enc_attn()))
            .collect()
    }

    fn dec_layers(&self) -> Vec<LayerParams> {
        (0..self.config.decoder.depth)
            .map(|b| LayerParams::named(&format!("dec.block{b}"), self.config.dec_attn()))
            .collect()
    }

    /// Encoder outputs for the given visible patches: `[1 + V, d_enc]`, the
    /// leading row being the [cls] token output.
    fn encode(
        &self,
        tape: &mut Tape,
        patches: &[Vec<f64>],
        visible: &[usize],
    ) -> Result<TensorId> {
        let s = self.config.frame;
        let d_enc = self.config.encoder.dim;
        let mut vis_data = Vec::with_capacity(visible.len() * s.patch_len());
        for &v in visible {
            vis_data.extend_from_slice(&patches[v]);
        }
        let x = tape.constant(&[visible.len(), s.patch_len()], vis_data);
        let w = tape.param(&self.store, "enc.patch_embed.w")?;
        let b = tape.param(&self.store, "enc.patch_embed.b")?;
        let emb = tape.linear(x, w, b)?;
        let pe = tape.constant(&[s.num_patches(), d_enc], self.pe_enc.clone());
        let pe_vis = tape.gather_rows(pe, visible)?;
        let emb = tape.add(emb, pe_vis)?;
        let cls = tape.param(&self.store, "tok.cls")?;
        let cls_row = tape.reshape(cls, &[1, d_enc])?;
        let mut tokens = tape.concat_rows(&[cls_row, emb])?;
        for layer in self.enc_layers() {
            tokens = layer.forward(tape, &self.store, tokens, true, None)?;
        }
        let g = tape.param(&self.store, "enc.ln.g")?;
        let bb = tape.param(&self.store, "enc.ln.b")?;
        tape.layer_norm(tokens, g, bb, LN_EPS)
    }

    /// Patch embeddings (encoder outputs, [cls] dropped) for a frame with all
    /// patches visible: `[P^2, d_enc]`, computed outside any training graph.
    pub fn embed_all_patches(&self, frame: &Frame) -> Result<Vec<f64>> {
        let patches = patchify(frame);
        let all: Vec<usize> = (0..self.config.frame.num_patches()).collect();
        let mut tape = Tape::new();
        let enc = self.encode(&mut tape, &patches, &all)?;
        let body = tape.slice_rows(enc, 1, all.len())?;
        Ok(tape.data(body).to_vec())
    }

    /// Full forward pass: predicted normalized patches for all `P^2` positions.
    /// Returns the prediction node; the tape stays with the caller for
    /// backward passes.
    pub fn forward(
        &self,
        tape: &mut Tape,
        frame: &Frame,
        visible: &[usize],
    ) -> Result<TensorId> {
        let s = self.config.frame;
        let n = s.num_patches();
        let d_dec = self.config.decoder.dim;
        let patches = patchify(frame);
        let enc = self.encode(tape, &patches, visible)?;
        let body = tape.slice_rows(enc, 1, visible.len())?;
        let w = tape.param(&self.store, "dec.embed.w")?;
        let b = tape.param(&self.store, "dec.embed.b")?;
        let proj = tape.linear(body, w, b)?;
        let scattered = tape.scatter_rows(proj, visible, n)?;
        let masked: Vec<usize> = (0..n).filter(|i| !visible.contains(i)).collect();
        let dec_in = if masked.is_empty() {
            scattered
        } else {
            let mask_tok = tape.param(&self.store, "tok.mask")?;
            let mask_rows = tape.repeat_row(mask_tok, masked.len())?;
            let mask_scat = tape.scatter_rows(mask_rows, &masked, n)?;
            tape.add(scattered, mask_scat)?
        };
        let pe = tape.constant(&[n, d_dec], self.pe_dec.clone());
        let mut tokens = tape.add(dec_in, pe)?;
        for layer in self.dec_layers() {
            tokens = layer.forward(tape, &self.store, tokens, true, None)?;
        }
        let g = tape.param(&self.store, "dec.ln.g")?;
        let bb = tape.param(&self.store, "dec.ln.b")?;
        let normed = tape.layer_norm(tokens, g, bb, LN_EPS)?;
        let hw = tape.param(&self.store, "dec.head.w")?;
        let hb = tape.param(&self.store, "dec.head.b")?;
        tape.linear(normed, hw, hb)
    }

    /// Mean over masked patches of the per-patch normalized MSE.
    pub fn loss(
        &self,
        tape: &mut Tape,
        frame: &Frame,
        predictions: TensorId,
        masked: &[usize],
    ) -> Result<TensorId> {
        if masked.is_empty() {
            return Err(TensorError::ShapeMismatch {
                op: "mae_loss",
                detail: "empty masked set".into(),
            });
        }
        let s = self.config.frame;
        let patches = patchify(frame);
        let mut target = Vec::with_capacity(masked.len() * s.patch_len());
        for &m in masked {
            target.extend_from_slice(&normalize_patch(&patches[m], PATCH_NORM_EPS).values);
        }
        let t = tape.constant(&[masked.len(), s.patch_len()], target);
        let pred_masked = tape.gather_rows(predictions, masked)?;
        tape.mse(pred_masked, t)
    }

    /// Predict patch `(i, j)` from its 8-neighborhood alone (grid-clipped).
    /// Returns the predicted normalized patch.
    pub fn reconstruct_from_surroundings(&self, frame: &Frame, i: usize, j: usize) -> Result<Vec<f64>> {
        let pr = self.config.frame.patches_per_row();
        assert!(i < pr && j < pr, "patch index out of grid");
        let visible = surrounding_indices(pr, i, j);
        let mut tape = Tape::new();
        let pred = self.forward(&mut tape, frame, &visible)?;
        let row = i * pr + j;
        let len = self.config.frame.patch_len();
        Ok(tape.data(pred)[row * len..(row + 1) * len].to_vec())
    }

    /// Decoder-only probe: feed `P^2` tokens built per mode straight into the
    /// decoder stack and denormalize the predicted patches via the dataset
    /// statistics.
    pub fn decoder_probe(&self, mode: ProbeMode) -> Result<Frame> {
        let s = self.config.frame;
        let n = s.num_patches();
        let d_dec = self.config.decoder.dim;
        let mut tape = Tape::new();
        let mask_tok = tape.param(&self.store, "tok.mask")?;
        let pe = tape.constant(&[n, d_dec], self.pe_dec.clone());
        let mut tokens = match mode {
            ProbeMode::PePlusMask => {
                let rows = tape.repeat_row(mask_tok, n)?;
                tape.add(rows, pe)?
            }
            ProbeMode::PeOnly => pe,
            ProbeMode::MaskOnly => tape.repeat_row(mask_tok, n)?,
        };
        for layer in self.dec_layers() {
            tokens = layer.forward(&mut tape, &self.store, tokens, true, None)?;
        }
        let g = tape.param(&self.store, "dec.ln.g")?;
        let bb = tape.param(&self.store, "dec.ln.b")?;
        let normed = tape.layer_norm(tokens, g, bb, LN_EPS)?;
        let hw = tape.param(&self.store, "dec.head.w")?;
        let hb = tape.param(&self.store, "dec.head.b")?;
        let pred = tape.linear(normed, hw, hb)?;
        Ok(self.denormalize_prediction(tape.data(pred)))
    }

    /// Map normalized patch predictions to a pixel-space frame using the
    /// dataset-global per-channel statistics.
    pub fn denormalize_prediction(&self, pred: &[f64]) -> Frame {
        let s = self.config.frame;
        let len = s.patch_len();
        let patches: Vec<Vec<f64>> = (0..s.num_patches())
            .map(|idx| {
                pred[idx * len..(idx + 1) * len]
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| {
                        let ch = k % s.c;
                        (v * self.stats.std[ch] + self.stats.mean[ch]).clamp(0.0, 1.0)
                    })
                    .collect()
            })
            .collect();
        unpatchify(s, &patches)
    }
}

/// The at-most-8 grid neighbors of `(i, j)`, raster order.
pub fn surrounding_indices(patches_per_row: usize, i: usize, j: usize) -> Vec<usize> {
    let pr = patches_per_row as isize;
    let mut out = Vec::with_capacity(8);
    for di in -1..=1isize {
        for dj in -1..=1isize {
            if di == 0 && dj == 0 {
                continue;
            }
            let (ni, nj) = (i as isize + di, j as isize + dj);
            if ni >= 0 && ni < pr && nj >= 0 && nj < pr {
                out.push((ni * pr + nj) as usize);
            }
        }
    }
    out
}

/// Per-channel mean/std over a set of rgb8 frames in `[0,1]` space.
pub fn dataset_stats(spec: FrameSpec, frames: &[Vec<u8>]) -> DatasetStats {
    let mut sum = [0.0f64; 3];
    let mut sumsq = [0.0f64; 3];
    let mut count = 0u64;
    for f in frames {
        for px in f.chunks_exact(spec.c) {
            for ch in 0..spec.c.min(3) {
                let v = px[ch] as f64 / 255.0;
                sum[ch] += v;
                sumsq[ch] += v * v;
            }
            count += 1;
        }
    }
    let mut mean = [0.0; 3];
    let mut std = [0.0; 3];
    for ch in 0..3 {
        mean[ch] = sum[ch] / count as f64;
        std[ch] = (sumsq[ch] / count as f64 - mean[ch] * mean[ch]).max(0.0).sqrt().max(1e-6);
    }
    DatasetStats { mean, std }
}


#[cfg(test)]
mod gradcheck {
    use super::*;
    use rand::SeedableRng;

    /// Full-model finite-difference check: analytic gradient of the masked
    /// reconstruction loss vs central differences on sampled coordinates.
    #[test]
    fn full_mae_gradient_matches_finite_differences() {
        let config = MaeConfig {
            frame: FrameSpec::new(24, 24, 3, 8),
            encoder: StackConfig { dim: 16, depth: 1, heads: 2 },
            decoder: StackConfig { dim: 24, depth: 1, heads: 2 },
            mask_ratio: 0.75,
            mlp_ratio: 2,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut model = MaeModel::init(config, &mut rng).unwrap();
        let frame = {
            let pixels = (0..config.frame.frame_len())
                .map(|i| ((i * 37) % 229) as f64 / 228.0)
                .collect();
            Frame { spec: config.frame, pixels }
        };
        let visible = vec![1usize, 4, 6];
        let masked: Vec<usize> = (0..9).filter(|i| !visible.contains(i)).collect();

        let eval = |model: &MaeModel| -> f64 {
            let mut tape = Tape::new();
            let pred = model.forward(&mut tape, &frame, &visible).unwrap();
            let loss = model.loss(&mut tape, &frame, pred, &masked).unwrap();
            tape.value(loss)
        };

        // analytic gradients
        model.store.zero_grads();
        let mut tape = Tape::new();
        let pred = model.forward(&mut tape, &frame, &visible).unwrap();
        let loss = model.loss(&mut tape, &frame, pred, &masked).unwrap();
        tape.backward(loss).unwrap();
        tape.grads_into(&mut model.store);

        let names: Vec<String> = model.store.iter().map(|(n, _)| n.clone()).collect();
        let h = 1e-4;
        let mut checked = 0usize;
        for name in names {
            let len = model.store.get(&name).unwrap().data.len();
            // a few spread-out coordinates per parameter
            for &i in [0, len / 3, 2 * len / 3, len - 1].iter().filter(|&&i| i < len) {
                let orig = model.store.get(&name).unwrap().data[i];
                model.store.get_mut(&name).unwrap().data[i] = orig + h;
                let up = eval(&model);
                model.store.get_mut(&name).unwrap().data[i] = orig - h;
                let down = eval(&model);
                model.store.get_mut(&name).unwrap().data[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = model.store.get(&name).unwrap().grad[i];
                let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                let rel = (numeric - analytic).abs() / denom;
                assert!(
                    rel < 1e-3 || (numeric - analytic).abs() < 1e-8,
                    "{name}[{i}]: analytic {analytic:.6e} vs numeric {numeric:.6e} (rel {rel:.3e})"
                );
                checked += 1;
            }
        }
        assert!(checked > 50, "checked {checked} coordinates");
    }
}
