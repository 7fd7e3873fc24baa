//! Prioritized experience replay on a sum tree: sampling probability
//! proportional to priority^alpha, importance weights (N * prob)^-beta
//! normalized by the batch maximum, ring-buffer eviction.

use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::SalientSet;

/// One n-step transition. States are shared salient-set stacks.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: Vec<Rc<SalientSet>>,
    pub action: usize,
    /// Discounted n-step reward sum (clipped rewards).
    pub ret: f64,
    /// Window length actually accumulated (< n at episode end).
    pub steps: usize,
    /// `None` when the window hit a terminal (no bootstrap).
    pub next_state: Option<Vec<Rc<SalientSet>>>,
}

/// Sum-tree prioritized buffer.
#[derive(Debug)]
pub struct Replay {
    capacity: usize,
    /// Binary heap layout: `tree[1]` is the root; leaves at `capacity..2*capacity`.
    tree: Vec<f64>,
    data: Vec<Option<Transition>>,
    write: usize,
    size: usize,
    pub alpha: f64,
    /// Largest priority^alpha seen; new transitions enter at this value.
    max_p_alpha: f64,
}

pub const PRIORITY_EPS: f64 = 1e-6;

impl Replay {
    pub fn new(capacity: usize, alpha: f64) -> Self {
        let cap = capacity.next_power_of_two();
        Replay {
            capacity,
            tree: vec![0.0; 2 * cap],
            data: vec![None; capacity],
            write: 0,
            size: 0,
            alpha,
            max_p_alpha: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn leaf_base(&self) -> usize {
        self.tree.len() / 2
    }

    pub fn total(&self) -> f64 {
        self.tree[1]
    }

    fn set_leaf(&mut self, slot: usize, value: f64) {
        let mut i = self.leaf_base() + slot;
        self.tree[i] = value;
        while i > 1 {
            i /= 2;
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1];
        }
    }

    /// Insert with the current maximum priority.
    pub fn push(&mut self, t: Transition) {
        let slot = self.write;
        self.data[slot] = Some(t);
        self.set_leaf(slot, self.max_p_alpha);
        self.write = (self.write + 1) % self.capacity;
        self.size = (self.size + 1).min(self.capacity);
    }

    fn find(&self, mut mass: f64) -> usize {
        let mut i = 1;
        while i < self.leaf_base() {
            let left = self.tree[2 * i];
            if mass < left {
                i = 2 * i;
            } else {
                mass -= left;
                i = 2 * i + 1;
            }
        }
        (i - self.leaf_base()).min(self.size - 1)
    }

    /// Stratified sample of `batch` slots with importance weights normalized
    /// by the batch maximum.
    pub fn sample(&self, batch: usize, beta: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<f64>) {
        assert!(!self.is_empty(), "sample from empty replay buffer");
        let total = self.total();
        let seg = total / batch as f64;
        let mut slots = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for b in 0..batch {
            let u = seg * b as f64 + rng.gen::<f64>() * seg;
            let slot = self.find(u.min(total * (1.0 - 1e-12)));
            let prob = self.tree[self.leaf_base() + slot] / total;
            slots.push(slot);
            weights.push((self.size as f64 * prob).powf(-beta));
        }
        let max_w = weights.iter().cloned().fold(f64::MIN, f64::max);
        for w in &mut weights {
            *w /= max_w;
        }
        (slots, weights)
    }

    pub fn get(&self, slot: usize) -> &Transition {
        self.data[slot].as_ref().expect("empty replay slot")
    }

    /// Re-prioritize after a TD update: priority = (|td| + eps)^alpha.
    pub fn update(&mut self, slot: usize, td_abs: f64) {
        let p = (td_abs + PRIORITY_EPS).powf(self.alpha);
        self.max_p_alpha = self.max_p_alpha.max(p);
        self.set_leaf(slot, p);
    }

    /// Testing hook: the node-sum invariant, checked over the whole tree.
    pub fn check_invariant(&self) -> bool {
        (1..self.leaf_base())
            .all(|i| (self.tree[i] - self.tree[2 * i] - self.tree[2 * i + 1]).abs() <= 1e-6)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saliency::PadMode;
    use rand::SeedableRng;

    fn dummy() -> Transition {
        Transition {
            state: vec![Rc::new(SalientSet { slots: vec![], pad_mode: PadMode::ZeroPad, k_t: 0 })],
            action: 0,
            ret: 0.0,
            steps: 1,
            next_state: None,
        }
    }

    #[test]
    fn single_element_always_sampled_weight_one() {
        let mut r = Replay::new(8, 0.5);
        r.push(dummy());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (slots, weights) = r.sample(4, 0.4, &mut rng);
        assert_eq!(slots, vec![0; 4]);
        assert!(weights.iter().all(|&w| (w - 1.0).abs() < 1e-12));
    }

    #[test]
    fn frequencies_match_priorities() {
        // 16 leaves with priorities 1..16 at alpha = 1
        let mut r = Replay::new(16, 1.0);
        for _ in 0..16 {
            r.push(dummy());
        }
        for i in 0..16 {
            // update sets (td + eps)^1; choose td = i+1 - eps for exact priority
            r.update(i, (i + 1) as f64 - PRIORITY_EPS);
        }
        assert!((r.total() - 136.0).abs() < 1e-9);
        assert!(r.check_invariant());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 16];
        let draws = 1_000_000;
        let (slots, _) = r.sample(draws, 0.0, &mut rng);
        for s in slots {
            counts[s] += 1;
        }
        for i in 0..16 {
            let expect = (i + 1) as f64 / 136.0;
            let got = counts[i] as f64 / draws as f64;
            assert!((got - expect).abs() < 0.02 * expect.max(0.01), "leaf {i}: {got} vs {expect}");
        }
    }

    #[test]
    fn invariant_after_interleaved_ops() {
        let mut r = Replay::new(20, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for step in 0..500 {
            if step % 3 == 0 || r.is_empty() {
                r.push(dummy());
            } else {
                let slot = rng.gen_range(0..r.len());
                r.update(slot, rng.gen::<f64>() * 5.0);
            }
            assert!(r.check_invariant(), "violated at step {step}");
            assert!(r.len() <= r.capacity());
        }
        // root equals sum of alpha-exponentiated priorities
        let leaf_sum: f64 = (0..r.len()).map(|i| r.tree[r.leaf_base() + i]).sum();
        assert!((r.total() - leaf_sum).abs() < 1e-6);
    }

    #[test]
    #[should_panic(expected = "empty replay")]
    fn sampling_empty_panics() {
        let r = Replay::new(4, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let _ = r.sample(1, 0.4, &mut rng);
    }
}
