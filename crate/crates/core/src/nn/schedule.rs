use serde::{Deserialize, Serialize};

/// Minimum decrease that counts as an improvement.
const IMPROVEMENT_THRESHOLD: f64 = 1e-8;

/// Reduce-on-plateau learning rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub current_lr: f64,
    pub initial_lr: f64,
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    pub best_metric: f64,
    pub epochs_since_improvement: usize,
}

impl LrSchedule {
    pub fn new(initial_lr: f64, patience: usize, factor: f64, min_lr: f64) -> Self {
        LrSchedule {
            current_lr: initial_lr,
            initial_lr,
            patience,
            factor,
            min_lr: min_lr.min(initial_lr),
            best_metric: f64::INFINITY,
            epochs_since_improvement: 0,
        }
    }

    /// Feeds one epoch's metric; returns the learning rate for the next epoch.
    pub fn update(&mut self, epoch_metric: f64) -> f64 {
        if epoch_metric < self.best_metric - IMPROVEMENT_THRESHOLD {
            self.best_metric = epoch_metric;
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
            if self.epochs_since_improvement > self.patience {
                self.current_lr = (self.current_lr * self.factor).max(self.min_lr);
                self.epochs_since_improvement = 0;
            }
        }
        self.current_lr
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::new(1e-3, 10, 0.5, 1e-5)
    }
}

pub fn schedule_update(mut s: LrSchedule, epoch_metric: f64) -> LrSchedule {
    s.update(epoch_metric);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves_after_patience_is_exceeded() {
        let mut s = LrSchedule::default();
        s.update(1.0);
        for epoch in 1..=10 {
            assert_eq!(s.update(1.0), 1e-3, "epoch {epoch}");
        }
        assert_eq!(s.update(1.0), 5e-4);
        assert_eq!(s.epochs_since_improvement, 0);
    }

    #[test]
    fn steady_improvement_keeps_lr() {
        let mut s = LrSchedule::default();
        for epoch in 0..50 {
            s = schedule_update(s, 1.0 / (epoch as f64 + 1.0));
        }
        assert_eq!(s.current_lr, 1e-3);
    }

    #[test]
    fn tiny_improvements_do_not_count() {
        let mut s = LrSchedule::default();
        s.update(1.0);
        for k in 1..=11 {
            s.update(1.0 - k as f64 * 1e-10);
        }
        assert_eq!(s.current_lr, 5e-4);
    }

    #[test]
    fn floor_at_min_lr() {
        let mut s = LrSchedule::new(1e-3, 0, 0.5, 4e-4);
        s.update(1.0);
        assert_eq!(s.update(1.0), 5e-4);
        assert_eq!(s.update(1.0), 4e-4);
        assert_eq!(s.update(1.0), 4e-4);
        assert!(s.current_lr >= s.min_lr && s.current_lr <= s.initial_lr);
    }
}
