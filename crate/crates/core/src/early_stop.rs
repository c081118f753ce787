//! Patience-based early stopping on validation loss.
//!
//! An epoch improves iff `loss < best - min_delta` (strict). Training stops
//! once the number of consecutive non-improving epochs reaches `patience`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Incremental form of [`early_stop_check`], fed one loss per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: Option<f64>,
    best_epoch: usize,
    stale: usize,
    epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopping {
            patience,
            min_delta,
            best: None,
            best_epoch: 0,
            stale: 0,
            epochs: 0,
        }
    }

    /// Records the next epoch's loss. Returns whether it counted as an
    /// improvement alongside the stop decision.
    pub fn observe(&mut self, loss: f64) -> (bool, StopDecision) {
        self.epochs += 1;
        let improved = match self.best {
            None => true,
            Some(best) => loss < best - self.min_delta,
        };
        if improved {
            self.best = Some(loss);
            self.best_epoch = self.epochs;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        let decision = if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        };
        (improved, decision)
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// 1-based epoch of the last improvement (0 before any observation).
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn stale_epochs(&self) -> usize {
        self.stale
    }
}

/// Whether training on this loss history would have stopped. Stopping is
/// final: entries after the stopping epoch do not revive the run. An empty
/// list continues.
pub fn early_stop_check(val_losses: &[f64], patience: usize, min_delta: f64) -> StopDecision {
    let mut tracker = EarlyStopping::new(patience, min_delta);
    for &loss in val_losses {
        if tracker.observe(loss).1 == StopDecision::Stop {
            return StopDecision::Stop;
        }
    }
    StopDecision::Continue
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_loss_continues() {
        assert_eq!(early_stop_check(&[1.0], 5, 0.001), StopDecision::Continue);
    }

    #[test]
    fn hand_traced_sequence_stops_at_seventh() {
        let losses = [1.0, 0.9, 0.91, 0.92, 0.93, 0.94, 0.95];
        for n in 1..7 {
            assert_eq!(early_stop_check(&losses[..n], 5, 0.001), StopDecision::Continue, "prefix {n}");
        }
        assert_eq!(early_stop_check(&losses, 5, 0.001), StopDecision::Stop);
    }

    #[test]
    fn below_min_delta_is_not_improvement() {
        let mut t = EarlyStopping::new(5, 0.001);
        assert!(t.observe(1.0).0);
        assert!(!t.observe(0.9995).0);
        assert_eq!(t.best(), Some(1.0));
        assert_eq!(t.best_epoch(), 1);
    }

    #[test]
    fn exact_threshold_is_not_improvement() {
        let mut t = EarlyStopping::new(5, 0.5);
        t.observe(2.0);
        assert!(!t.observe(1.5).0);
        assert!(t.observe(1.25).0);
    }

    #[test]
    fn constant_loss_stops_after_six() {
        let mut t = EarlyStopping::new(5, 0.001);
        let mut stopped = None;
        for epoch in 1..=20 {
            if t.observe(0.7).1 == StopDecision::Stop {
                stopped = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped, Some(6));
    }

    #[test]
    fn improvement_resets_counter() {
        let losses = [1.0, 1.0, 1.0, 0.5, 0.6, 0.6];
        assert_eq!(early_stop_check(&losses, 3, 0.0), StopDecision::Continue);
        assert_eq!(early_stop_check(&[1.0, 1.0, 1.0, 0.5, 0.6, 0.6, 0.6], 3, 0.0), StopDecision::Stop);
    }
}
