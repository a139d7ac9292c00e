use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Beta–Bernoulli learnability posterior with a sliding observation window.
///
/// The cumulative counts keep the full history (prior included); sampling only
/// ever reads the windowed parameters from [`PosteriorState::effective`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PosteriorState {
    pub cumulative_alpha: u64,
    pub cumulative_beta: u64,
    /// Most recent observations, oldest first.
    pub window: VecDeque<u8>,
}

impl Default for PosteriorState {
    fn default() -> Self {
        Self {
            cumulative_alpha: 1,
            cumulative_beta: 1,
            window: VecDeque::new(),
        }
    }
}

impl PosteriorState {
    /// Conjugate update plus window push with oldest-first eviction beyond `capacity`.
    pub fn record(&mut self, learnable: bool, capacity: usize) {
        let g = u8::from(learnable);
        self.cumulative_alpha += u64::from(g);
        self.cumulative_beta += u64::from(1 - g);
        self.window.push_back(g);
        while self.window.len() > capacity {
            self.window.pop_front();
        }
    }

    /// `(1 + ones in window, 1 + zeros in window)`.
    pub fn effective(&self) -> (u64, u64) {
        let ones = self.window.iter().filter(|&&g| g == 1).count() as u64;
        let zeros = self.window.len() as u64 - ones;
        (1 + ones, 1 + zeros)
    }

    pub fn observations(&self) -> u64 {
        self.cumulative_alpha + self.cumulative_beta - 2
    }

    pub fn mean(&self) -> f64 {
        let (a, b) = self.effective();
        a as f64 / (a + b) as f64
    }
}
