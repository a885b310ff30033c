//! Customer baseline load: trailing mean of the same step over previous days.

/// Baseline estimator over a household's daily consumption history.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CblEstimator {
    pub window: usize,
}

impl Default for CblEstimator {
    fn default() -> Self {
        Self { window: 10 }
    }
}

impl CblEstimator {
    pub fn new(window: usize) -> Self {
        Self { window: window.max(1) }
    }

    /// Mean consumption at `step` over the most recent `window` days strictly
    /// before `day`. `history[d][step]` is the consumption of day `d`.
    /// Returns `None` when no earlier day exists.
    pub fn estimate(&self, history: &[Vec<f64>], day: usize, step: usize) -> Option<f64> {
        let end = day.min(history.len());
        if end == 0 {
            return None;
        }
        let start = end.saturating_sub(self.window);
        let days = &history[start..end];
        let sum: f64 = days.iter().map(|d| d[step]).sum();
        Some(sum / days.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_history() {
        let history = vec![vec![3.0; 96]; 10];
        assert_eq!(CblEstimator::default().estimate(&history, 10, 40), Some(3.0));
    }

    #[test]
    fn mean_of_available_days() {
        let mut history = vec![vec![0.0; 96]; 3];
        history[0][5] = 2.0;
        history[1][5] = 4.0;
        assert_eq!(CblEstimator::default().estimate(&history, 2, 5), Some(3.0));
    }

    #[test]
    fn zero_history_and_no_history() {
        let history = vec![vec![0.0; 96]; 4];
        assert_eq!(CblEstimator::default().estimate(&history, 4, 0), Some(0.0));
        assert_eq!(CblEstimator::default().estimate(&history, 0, 0), None);
    }

    #[test]
    fn ignores_current_and_future_days() {
        let mut history = vec![vec![1.0; 4]; 30];
        for day in history.iter_mut().skip(12) {
            day[2] = 100.0;
        }
        // day 12 may only look at days 2..12
        assert_eq!(CblEstimator::new(10).estimate(&history, 12, 2), Some(1.0));
    }

    #[test]
    fn window_limits_lookback() {
        let history: Vec<Vec<f64>> = (0..20).map(|d| vec![d as f64]).collect();
        // days 15..20 -> mean 17
        assert_eq!(CblEstimator::new(5).estimate(&history, 20, 0), Some(17.0));
    }
}
