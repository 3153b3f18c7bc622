//! Reduce-on-plateau learning-rate control for a maximized metric.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlateauConfig {
    /// Non-improving epochs that trigger a reduction.
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            patience: 2,
            factor: 0.5,
            min_lr: 1e-7,
        }
    }
}

/// Tracks the best metric seen and scales every learning rate by `factor`
/// once `patience` consecutive epochs have failed to improve on it.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    config: PlateauConfig,
    lrs: Vec<f64>,
    best: Option<f64>,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(config: PlateauConfig, initial_lrs: Vec<f64>) -> Self {
        Self {
            config,
            lrs: initial_lrs,
            best: None,
            bad_epochs: 0,
        }
    }

    pub fn lrs(&self) -> &[f64] {
        &self.lrs
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// Records one epoch's metric. Returns true when the rates were reduced.
    pub fn step(&mut self, metric: f64) -> bool {
        let improved = match self.best {
            None => true,
            Some(b) => metric > b,
        };
        if improved {
            self.best = Some(metric);
            self.bad_epochs = 0;
            return false;
        }
        self.bad_epochs += 1;
        if self.bad_epochs < self.config.patience {
            return false;
        }
        self.bad_epochs = 0;
        let mut changed = false;
        for lr in &mut self.lrs {
            let next = (*lr * self.config.factor).max(self.config.min_lr.min(*lr));
            changed |= next < *lr;
            *lr = next;
        }
        changed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_flat_epochs_halve_once() {
        let mut s = PlateauScheduler::new(PlateauConfig::default(), vec![1e-5, 1e-4]);
        assert!(!s.step(0.7));
        assert!(!s.step(0.7));
        assert_eq!(s.lrs(), &[1e-5, 1e-4]);
        assert!(s.step(0.69));
        assert_eq!(s.lrs(), &[5e-6, 5e-5]);
        // counter restarts after a reduction
        assert!(!s.step(0.6));
        assert!(!s.step(0.8));
        assert_eq!(s.lrs(), &[5e-6, 5e-5]);
    }

    #[test]
    fn floor_never_raises_a_rate() {
        let cfg = PlateauConfig {
            patience: 1,
            ..PlateauConfig::default()
        };
        let mut s = PlateauScheduler::new(cfg, vec![1e-9]);
        s.step(1.0);
        assert!(!s.step(0.0));
        assert_eq!(s.lrs(), &[1e-9]);
    }

    #[test]
    fn floor_is_respected() {
        let cfg = PlateauConfig {
            patience: 1,
            ..PlateauConfig::default()
        };
        let mut s = PlateauScheduler::new(cfg, vec![3e-7]);
        s.step(1.0);
        assert!(s.step(0.0));
        assert_eq!(s.lrs(), &[1.5e-7f64.max(1e-7)]);
        assert!(s.step(0.0));
        assert_eq!(s.lrs(), &[1e-7]);
        assert!(!s.step(0.0));
    }
}
