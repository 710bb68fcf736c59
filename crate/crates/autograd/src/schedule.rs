/// Cosine annealing without warmup: `base * 0.5 * (1 + cos(pi * step /
/// total))`, evaluated at 0-based step indices. Steps at or past the horizon
/// clamp to zero and warn once per call site semantics (the trainer is
/// expected to stop at `total_steps`).
pub fn cosine_lr(step: u64, total_steps: u64, base: f64) -> f64 {
    assert!(total_steps > 0, "cosine schedule needs a positive horizon");
    if step >= total_steps {
        log::warn!("cosine schedule queried at step {step} >= horizon {total_steps}; clamping to 0");
        return 0.0;
    }
    base * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total_steps as f64).cos())
}

/// Learning-rate schedule selected by config.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant { base: f64 },
    Cosine { base: f64, total_steps: u64 },
}

impl LrSchedule {
    pub fn lr_at(&self, step: u64) -> f64 {
        match *self {
            LrSchedule::Constant { base } => base,
            LrSchedule::Cosine { base, total_steps } => cosine_lr(step, total_steps, base),
        }
    }

    pub fn base(&self) -> f64 {
        match *self {
            LrSchedule::Constant { base } | LrSchedule::Cosine { base, .. } => base,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints_and_midpoint() {
        assert_eq!(cosine_lr(0, 100, 2.0), 2.0);
        let mid = cosine_lr(50, 100, 2.0);
        assert!((mid - 1.0).abs() < 1e-12);
        // Final in-range step is strictly positive.
        assert!(cosine_lr(99, 100, 2.0) > 0.0);
        // Past the horizon clamps to zero.
        assert_eq!(cosine_lr(100, 100, 2.0), 0.0);
        assert_eq!(cosine_lr(10_000, 100, 2.0), 0.0);
    }

    #[test]
    fn cosine_is_monotone_decreasing() {
        let mut prev = f64::INFINITY;
        for step in 0..200 {
            let lr = cosine_lr(step, 200, 1e-4);
            assert!(lr < prev);
            prev = lr;
        }
    }

    #[test]
    fn schedule_enum_dispatch() {
        let c = LrSchedule::Constant { base: 0.01 };
        assert_eq!(c.lr_at(0), 0.01);
        assert_eq!(c.lr_at(999_999), 0.01);

        let k = LrSchedule::Cosine { base: 0.01, total_steps: 10 };
        assert_eq!(k.lr_at(0), 0.01);
        assert!(k.lr_at(9) > 0.0 && k.lr_at(9) < 0.01);
    }

    #[test]
    fn schedule_serde_round_trip() {
        let k = LrSchedule::Cosine { base: 1e-4, total_steps: 30 };
        let s = serde_json::to_string(&k).unwrap();
        let back: LrSchedule = serde_json::from_str(&s).unwrap();
        assert_eq!(k, back);
    }
}
