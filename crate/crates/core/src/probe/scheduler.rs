/// Halves (by default) the learning rate when the monitored loss stops
/// improving for `patience` consecutive checks.
#[derive(Clone, Debug)]
pub struct ReduceOnPlateau {
    lr: f64,
    factor: f64,
    patience: usize,
    min_lr: f64,
    /// Relative improvement required to reset the patience counter.
    threshold: f64,
    best: f64,
    bad_checks: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlateauParams {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
}

impl Default for PlateauParams {
    fn default() -> Self {
        PlateauParams {
            factor: 0.5,
            patience: 2,
            min_lr: 1e-7,
        }
    }
}

impl ReduceOnPlateau {
    pub fn new(initial_lr: f64, params: PlateauParams) -> Self {
        assert!(params.factor > 0.0 && params.factor < 1.0, "factor must be in (0, 1)");
        ReduceOnPlateau {
            lr: initial_lr.max(params.min_lr),
            factor: params.factor,
            patience: params.patience,
            min_lr: params.min_lr,
            threshold: 1e-4,
            best: f64::INFINITY,
            bad_checks: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one validation loss and returns the learning rate to use next.
    pub fn step(&mut self, loss: f64) -> f64 {
        if loss < self.best * (1.0 - self.threshold) {
            self.best = loss;
            self.bad_checks = 0;
        } else {
            self.bad_checks += 1;
            if self.bad_checks > self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.bad_checks = 0;
            }
        }
        self.lr
    }
}
