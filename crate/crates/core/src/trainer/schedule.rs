use serde::{Deserialize, Serialize};

/// Two-phase learning-rate plan for full-batch Adam. A zero-length second
/// phase gives a single-phase run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub phase1_epochs: usize,
    pub phase1_lr: f64,
    #[serde(default)]
    pub phase2_epochs: usize,
    #[serde(default)]
    pub phase2_lr: f64,
    /// Re-initialise the Adam moments when phase 2 starts.
    #[serde(default)]
    pub reset_adam_at_phase2: bool,
}

impl Schedule {
    /// 10^5 epochs at 3e-3 followed by 5*10^4 at 3e-4.
    pub fn full() -> Self {
        Self::two_phase(100_000, 3e-3, 50_000, 3e-4)
    }

    /// [`Schedule::full`] with epoch counts divided by five.
    pub fn desk() -> Self {
        Self::two_phase(20_000, 3e-3, 10_000, 3e-4)
    }

    pub fn two_phase(
        phase1_epochs: usize,
        phase1_lr: f64,
        phase2_epochs: usize,
        phase2_lr: f64,
    ) -> Self {
        Self {
            phase1_epochs,
            phase1_lr,
            phase2_epochs,
            phase2_lr,
            reset_adam_at_phase2: false,
        }
    }

    pub fn single(epochs: usize, lr: f64) -> Self {
        Self::two_phase(epochs, lr, 0, 0.0)
    }

    /// Both phases shortened by `factor` (at least one epoch each when present).
    pub fn scaled(&self, factor: f64) -> Self {
        let shrink = |e: usize| {
            if e == 0 {
                0
            } else {
                ((e as f64 * factor).round() as usize).max(1)
            }
        };
        Self {
            phase1_epochs: shrink(self.phase1_epochs),
            phase2_epochs: shrink(self.phase2_epochs),
            ..*self
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.phase1_epochs + self.phase2_epochs
    }

    /// Learning rate of the 1-based `epoch`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if epoch <= self.phase1_epochs {
            self.phase1_lr
        } else {
            self.phase2_lr
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.phase1_epochs == 0 {
            return Err("phase1_epochs must be at least 1".into());
        }
        if !(self.phase1_lr > 0.0 && self.phase1_lr.is_finite()) {
            return Err(format!(
                "phase1_lr must be positive, got {}",
                self.phase1_lr
            ));
        }
        if self.phase2_epochs > 0 && !(self.phase2_lr > 0.0 && self.phase2_lr.is_finite()) {
            return Err(format!(
                "phase2_lr must be positive, got {}",
                self.phase2_lr
            ));
        }
        Ok(())
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Self::desk()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_boundary_switches_rate() {
        let s = Schedule::two_phase(3, 0.1, 2, 0.01);
        assert_eq!(s.learning_rate(3), 0.1);
        assert_eq!(s.learning_rate(4), 0.01);
        assert_eq!(s.total_epochs(), 5);
    }

    #[test]
    fn desk_is_full_divided_by_five() {
        assert_eq!(Schedule::full().scaled(0.2), Schedule::desk());
    }

    #[test]
    fn validation() {
        assert!(Schedule::single(0, 1e-3).validate().is_err());
        assert!(Schedule::two_phase(1, 1e-3, 5, 0.0).validate().is_err());
        assert!(Schedule::single(1, 1e-3).validate().is_ok());
    }
}
