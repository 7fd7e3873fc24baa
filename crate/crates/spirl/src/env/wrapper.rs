//! Atari-style preprocessing wrapper: action repeat with reward clipping,
//! seeded start no-ops, an episode frame cap, and 4-frame state stacking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvInterface, FrameDims, StepInfo, StepResult};
use crate::tensor::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WrapperConfig {
    /// Raw steps per agent action (frame skip = action repeat).
    pub action_repeat: usize,
    /// Frames concatenated into one agent state.
    pub frame_stack: usize,
    pub max_start_noops: usize,
    pub reward_clip: (f64, f64),
    /// Raw-frame cap per episode.
    pub max_frames: usize,
    /// Pass-through flag for peers that report life loss.
    pub terminal_on_life_loss: bool,
}

impl Default for WrapperConfig {
    fn default() -> Self {
        WrapperConfig {
            action_repeat: 4,
            frame_stack: 4,
            max_start_noops: 30,
            reward_clip: (-1.0, 1.0),
            max_frames: 108_000,
            terminal_on_life_loss: false,
        }
    }
}

/// An environment preprocessed per [`WrapperConfig`]. Each agent action is
/// repeated over the skip window; the summed reward is clipped and the last
/// raw frame returned.
pub struct WrappedEnv<E: EnvInterface> {
    pub env: E,
    pub config: WrapperConfig,
    raw_frames: usize,
    noops_applied: usize,
}

impl<E: EnvInterface> WrappedEnv<E> {
    pub fn new(env: E, config: WrapperConfig) -> Self {
        WrappedEnv { env, config, raw_frames: 0, noops_applied: 0 }
    }

    /// No-ops applied at the last reset (testing hook).
    pub fn last_noops(&self) -> usize {
        self.noops_applied
    }
}

impl<E: EnvInterface> EnvInterface for WrappedEnv<E> {
    fn dims(&self) -> FrameDims {
        self.env.dims()
    }

    fn action_count(&self) -> usize {
        self.env.action_count()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<u8>> {
        let mut frame = self.env.reset(seed)?;
        self.raw_frames = 0;
        // seeded start no-ops, independent stream from the env's own seed use
        let noops = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15)
            .gen_range(0..=self.config.max_start_noops);
        self.noops_applied = noops;
        for _ in 0..noops {
            let r = self.env.step(0)?;
            self.raw_frames += 1;
            frame = r.frame;
            if r.done {
                // terminal during no-ops: restart cleanly without further no-ops
                frame = self.env.reset(seed)?;
                self.raw_frames = 0;
                break;
            }
        }
        Ok(frame)
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        let mut total = 0.0;
        let mut frame = Vec::new();
        let mut done = false;
        let mut info = StepInfo::default();
        for _ in 0..self.config.action_repeat {
            let r = self.env.step(action)?;
            self.raw_frames += 1;
            total += r.reward;
            frame = r.frame;
            info = r.info;
            if r.done || self.raw_frames >= self.config.max_frames {
                done = true;
                break;
            }
        }
        let (lo, hi) = self.config.reward_clip;
        Ok(StepResult { frame, reward: total.clamp(lo, hi), done, info })
    }

    fn info(&self) -> StepInfo {
        self.env.info()
    }
}

/// Rolling window of the last `n` frames; until filled it replicates the
/// oldest frame so the state is always exactly `n` frames.
#[derive(Debug, Clone)]
pub struct FrameStack {
    n: usize,
    frames: Vec<Vec<u8>>,
}

impl FrameStack {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        FrameStack { n, frames: Vec::new() }
    }

    /// Start a new episode from its first frame.
    pub fn reset(&mut self, frame: Vec<u8>) {
        self.frames.clear();
        self.frames.push(frame);
    }

    pub fn push(&mut self, frame: Vec<u8>) {
        if self.frames.len() == self.n {
            self.frames.remove(0);
        }
        self.frames.push(frame);
    }

    /// The stacked state, oldest first, bootstrap-replicating the first frame.
    pub fn state(&self) -> Vec<&[u8]> {
        assert!(!self.frames.is_empty(), "state before reset");
        let mut out: Vec<&[u8]> = Vec::with_capacity(self.n);
        for _ in self.frames.len()..self.n {
            out.push(&self.frames[0]);
        }
        out.extend(self.frames.iter().map(|f| f.as_slice()));
        out
    }
}
