use serde::{Deserialize, Serialize};

/// Learning-rate decay on a validation plateau, plus early-stop bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub patience: usize,
    pub factor: f64,
    /// A loss counts as an improvement only when it beats the best by more than this.
    pub tolerance: f64,
    best: f64,
    /// Epochs since the last improvement.
    stale: usize,
    /// Epochs since the last improvement or decay.
    since_decay: usize,
}

/// What the scheduler concluded from one validation loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub decayed: bool,
    pub stale_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, patience: usize, factor: f64, tolerance: f64) -> Self {
        Self {
            lr,
            patience,
            factor,
            tolerance,
            best: f64::INFINITY,
            stale: 0,
            since_decay: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn observe(&mut self, val_loss: f64) -> Observation {
        let improved = val_loss < self.best - self.tolerance;
        let mut decayed = false;
        if improved {
            self.best = val_loss;
            self.stale = 0;
            self.since_decay = 0;
        } else {
            self.stale += 1;
            self.since_decay += 1;
            if self.since_decay >= self.patience {
                self.lr *= self.factor;
                self.since_decay = 0;
                decayed = true;
            }
        }
        Observation {
            improved,
            decayed,
            stale_epochs: self.stale,
        }
    }
}
