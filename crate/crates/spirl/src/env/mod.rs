//! Environments: the common interface, a deterministic synthetic Sprites game,
//! the Atari-style preprocessing wrapper, SPFR frame datasets, and the SPEV
//! wire protocol for plugging in external environments.

mod dataset;
mod sprites;
mod wire;
mod wrapper;

pub use dataset::{collect, load_dataset, save_dataset, Dataset};
pub use sprites::{Sprites, SpritesConfig};
pub use wire::{serve_env, ExternalEnv, SPEV_VERSION};
pub use wrapper::{FrameStack, WrappedEnv, WrapperConfig};

use serde::{Deserialize, Serialize};

use crate::tensor::Result;

/// Raw frame dimensions of an environment (no patch geometry attached).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameDims {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl FrameDims {
    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An axis-aligned sprite rectangle in pixel coordinates, `[x, x+w) x [y, y+h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn overlaps(&self, other: &Rect) -> bool {
        self.x < other.x + other.w
            && other.x < self.x + self.w
            && self.y < other.y + other.h
            && other.y < self.y + self.h
    }
}

/// What a sprite rectangle belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpriteKind {
    Player,
    Collectible,
    Hazard,
}

/// Side-channel information attached to a step (sprite geometry for tests and
/// visualization; empty for external environments).
#[derive(Debug, Clone, Default)]
pub struct StepInfo {
    pub sprites: Vec<(SpriteKind, Rect)>,
}

/// One environment transition.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// Raw rgb8 frame, row-major h x w x c.
    pub frame: Vec<u8>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// The MDP surface every environment exposes. `reset` is deterministic per
/// seed; `step` after `done` is an error.
pub trait EnvInterface {
    fn dims(&self) -> FrameDims;
    fn action_count(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Vec<u8>>;
    fn step(&mut self, action: usize) -> Result<StepResult>;
    /// Sprite geometry of the current state, if the environment knows it.
    fn info(&self) -> StepInfo {
        StepInfo::default()
    }
}

impl<E: EnvInterface + ?Sized> EnvInterface for &mut E {
    fn dims(&self) -> FrameDims {
        (**self).dims()
    }
    fn action_count(&self) -> usize {
        (**self).action_count()
    }
    fn reset(&mut self, seed: u64) -> Result<Vec<u8>> {
        (**self).reset(seed)
    }
    fn step(&mut self, action: usize) -> Result<StepResult> {
        (**self).step(action)
    }
    fn info(&self) -> StepInfo {
        (**self).info()
    }
}
