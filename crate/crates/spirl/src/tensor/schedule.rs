/// Linear warmup from zero to the peak rate, then cosine decay to zero.
#[derive(Debug, Clone)]
pub struct WarmupCosine {
    pub peak_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl WarmupCosine {
    pub fn new(peak_lr: f64, warmup_steps: usize, total_steps: usize) -> Self {
        assert!(warmup_steps <= total_steps);
        WarmupCosine { peak_lr, warmup_steps, total_steps }
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            if self.warmup_steps == 0 {
                return self.peak_lr;
            }
            return self.peak_lr * step as f64 / self.warmup_steps as f64;
        }
        let decay_steps = self.total_steps - self.warmup_steps;
        if decay_steps == 0 {
            return self.peak_lr;
        }
        let progress = (step - self.warmup_steps) as f64 / decay_steps as f64;
        let progress = progress.min(1.0);
        self.peak_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_starts_at_zero_and_reaches_peak() {
        // peak = 0.001 * 64 / 256
        let s = WarmupCosine::new(0.001 * 64.0 / 256.0, 100, 1000);
        assert_eq!(s.lr_at(0), 0.0);
        assert!((s.lr_at(100) - 2.5e-4).abs() < 1e-15);
    }

    #[test]
    fn cosine_decays_to_zero() {
        let s = WarmupCosine::new(1.0, 10, 110);
        assert!(s.lr_at(110) < 1e-12);
        assert!((s.lr_at(60) - 0.5).abs() < 1e-12);
    }
}
