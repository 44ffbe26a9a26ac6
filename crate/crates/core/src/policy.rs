//! Tabular action-value learning with softmax action selection.
//!
//! Each table row is one discrete state. Values move toward observed rewards
//! by exponential recency weighting and action probabilities are a softmax of
//! the row at a fixed temperature.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("reward must be finite, got {0}")]
    CorruptedReward(f64),
    #[error("learning rate must lie in (0, 1], got {0}")]
    LearningRate(f64),
    #[error("temperature must be positive and finite, got {0}")]
    Temperature(f64),
}

/// Enumerated discrete space with a dense index.
pub trait Discrete: Sized + Copy {
    const COUNT: usize;
    fn index(self) -> usize;
    fn from_index(index: usize) -> Self;
}

macro_rules! levels {
    ($(#[$meta:meta])* $name:ident { $($variant:ident = $value:expr),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant = $value),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
        }

        impl Discrete for $name {
            const COUNT: usize = Self::ALL.len();

            fn index(self) -> usize {
                self as usize
            }

            fn from_index(index: usize) -> Self {
                Self::ALL[index]
            }
        }
    };
}

levels!(
    /// Low / mid / high bucket.
    Level {
        Low = 0,
        Mid = 1,
        High = 2,
    }
);

levels!(
    /// Comparison against an initial snapshot; equality counts as high.
    Binary {
        Low = 0,
        High = 1,
    }
);

levels!(ForecastKind {
    MeanReverting = 0,
    Averaging = 1,
    TrendFollowing = 2,
});

levels!(Trend {
    Decreasing = 0,
    Stable = 1,
    Increasing = 2,
});

levels!(Liquidity {
    Zero = 0,
    Low = 1,
    High = 2,
});

levels!(
    /// Order direction. `Sell` only ever sells shares already held.
    Intent {
        Sell = 0,
        Hold = 1,
        Buy = 2,
    }
);

levels!(
    /// Where to quote relative to the agent's own estimate.
    Gesture {
        Lose = 0,
        Neutral = 1,
        Gain = 2,
    }
);

/// Forecasting state: long and short volatility levels and valuation gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateF {
    pub long_volatility: Level,
    pub short_volatility: Level,
    pub valuation_gap: Level,
}

/// Forecasting action: forecast formula, lag window and reflexivity weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionF {
    pub kind: ForecastKind,
    pub lag: Level,
    pub reflexivity: Level,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateT {
    pub trend: Trend,
    pub volatility: Level,
    pub cash: Binary,
    pub holdings: Binary,
    pub liquidity: Liquidity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionT {
    pub intent: Intent,
    pub gesture: Gesture,
}

fn mixed_radix(digits: &[(usize, usize)]) -> usize {
    digits.iter().fold(0, |acc, &(d, radix)| {
        debug_assert!(d < radix);
        acc * radix + d
    })
}

impl Discrete for StateF {
    const COUNT: usize = 27;

    fn index(self) -> usize {
        mixed_radix(&[
            (self.long_volatility.index(), 3),
            (self.short_volatility.index(), 3),
            (self.valuation_gap.index(), 3),
        ])
    }

    fn from_index(index: usize) -> Self {
        assert!(
            index < Self::COUNT,
            "forecast state index {index} out of range"
        );
        Self {
            long_volatility: Level::from_index(index / 9),
            short_volatility: Level::from_index(index / 3 % 3),
            valuation_gap: Level::from_index(index % 3),
        }
    }
}

impl Discrete for ActionF {
    const COUNT: usize = 27;

    fn index(self) -> usize {
        mixed_radix(&[
            (self.kind.index(), 3),
            (self.lag.index(), 3),
            (self.reflexivity.index(), 3),
        ])
    }

    fn from_index(index: usize) -> Self {
        assert!(
            index < Self::COUNT,
            "forecast action index {index} out of range"
        );
        Self {
            kind: ForecastKind::from_index(index / 9),
            lag: Level::from_index(index / 3 % 3),
            reflexivity: Level::from_index(index % 3),
        }
    }
}

impl Discrete for StateT {
    const COUNT: usize = 108;

    fn index(self) -> usize {
        mixed_radix(&[
            (self.trend.index(), 3),
            (self.volatility.index(), 3),
            (self.cash.index(), 2),
            (self.holdings.index(), 2),
            (self.liquidity.index(), 3),
        ])
    }

    fn from_index(index: usize) -> Self {
        assert!(
            index < Self::COUNT,
            "trade state index {index} out of range"
        );
        Self {
            trend: Trend::from_index(index / 36),
            volatility: Level::from_index(index / 12 % 3),
            cash: Binary::from_index(index / 6 % 2),
            holdings: Binary::from_index(index / 3 % 2),
            liquidity: Liquidity::from_index(index % 3),
        }
    }
}

impl Discrete for ActionT {
    const COUNT: usize = 9;

    fn index(self) -> usize {
        mixed_radix(&[(self.intent.index(), 3), (self.gesture.index(), 3)])
    }

    fn from_index(index: usize) -> Self {
        assert!(
            index < Self::COUNT,
            "trade action index {index} out of range"
        );
        Self {
            intent: Intent::from_index(index / 3),
            gesture: Gesture::from_index(index % 3),
        }
    }
}

/// One exported table cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyCell {
    pub state: usize,
    pub action: usize,
    pub value: f64,
    pub visits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    visits: Vec<u64>,
    learning_rate: f64,
    temperature: f64,
}

impl TabularPolicy {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        learning_rate: f64,
        temperature: f64,
    ) -> Result<Self, PolicyError> {
        if !(learning_rate > 0.0 && learning_rate <= 1.0) {
            return Err(PolicyError::LearningRate(learning_rate));
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(PolicyError::Temperature(temperature));
        }
        assert!(n_states > 0 && n_actions > 0);
        Ok(Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
            visits: vec![0; n_states * n_actions],
            learning_rate,
            temperature,
        })
    }

    /// Table sized for the `S` state space and `A` action space.
    pub fn for_spaces<S: Discrete, A: Discrete>(
        learning_rate: f64,
        temperature: f64,
    ) -> Result<Self, PolicyError> {
        Self::new(S::COUNT, A::COUNT, learning_rate, temperature)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    fn cell(&self, state: usize, action: usize) -> usize {
        assert!(state < self.n_states, "state {state} out of range");
        assert!(action < self.n_actions, "action {action} out of range");
        state * self.n_actions + action
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let start = self.cell(state, 0);
        &self.values[start..start + self.n_actions]
    }

    /// Overwrites one row; used by tests and replay tooling.
    pub fn set_row(&mut self, state: usize, row: &[f64]) {
        assert_eq!(row.len(), self.n_actions);
        assert!(row.iter().all(|v| v.is_finite()));
        let start = self.cell(state, 0);
        self.values[start..start + self.n_actions].copy_from_slice(row);
    }

    pub fn value(&self, state: usize, action: usize) -> f64 {
        self.values[self.cell(state, action)]
    }

    pub fn visits(&self, state: usize, action: usize) -> u64 {
        self.visits[self.cell(state, action)]
    }

    /// Softmax of the value row at the policy temperature.
    pub fn action_probabilities(&self, state: usize) -> Vec<f64> {
        let row = self.row(state);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = row
            .iter()
            .map(|v| ((v - max) / self.temperature).exp())
            .collect();
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        probs
    }

    /// Inverse-CDF selection for a uniform draw `u` in `[0, 1)`.
    pub fn select_with_draw(&mut self, state: usize, u: f64) -> usize {
        let probs = self.action_probabilities(state);
        let mut cumulative = 0.0;
        let mut chosen = probs.len() - 1;
        for (a, p) in probs.iter().enumerate() {
            cumulative += p;
            if u < cumulative {
                chosen = a;
                break;
            }
        }
        let cell = self.cell(state, chosen);
        self.visits[cell] += 1;
        chosen
    }

    pub fn select_action<R: Rng + ?Sized>(&mut self, state: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.select_with_draw(state, u)
    }

    /// Moves `values[state, action]` a fraction `learning_rate` toward `reward`.
    pub fn update(&mut self, state: usize, action: usize, reward: f64) -> Result<(), PolicyError> {
        if !reward.is_finite() {
            return Err(PolicyError::CorruptedReward(reward));
        }
        let cell = self.cell(state, action);
        let v = &mut self.values[cell];
        *v += self.learning_rate * (reward - *v);
        Ok(())
    }

    pub fn cells(&self) -> impl Iterator<Item = PolicyCell> + '_ {
        (0..self.n_states).flat_map(move |s| {
            (0..self.n_actions).map(move |a| PolicyCell {
                state: s,
                action: a,
                value: self.value(s, a),
                visits: self.visits(s, a),
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-9;

    #[test]
    fn zero_row_is_uniform() {
        for beta in [0.01, 0.2, 5.0] {
            let p = TabularPolicy::new(1, 4, 0.1, beta).unwrap();
            for q in p.action_probabilities(0) {
                assert!((q - 0.25).abs() < TOL);
            }
        }
    }

    #[test]
    fn cold_limit_is_greedy() {
        let mut p = TabularPolicy::new(1, 3, 0.1, 1e-6).unwrap();
        p.set_row(0, &[1.0, 0.0, 0.0]);
        let probs = p.action_probabilities(0);
        assert!((probs[0] - 1.0).abs() < TOL);
        for draw in [0.0, 0.3, 0.999_999] {
            assert_eq!(p.select_with_draw(0, draw), 0);
        }
    }

    #[test]
    fn two_action_softmax_closed_form() {
        let mut p = TabularPolicy::new(1, 2, 0.1, 1.0).unwrap();
        p.set_row(0, &[1.0, 0.0]);
        let probs = p.action_probabilities(0);
        let e = std::f64::consts::E;
        assert!((probs[0] - e / (e + 1.0)).abs() < TOL);
        assert!((probs[1] - 1.0 / (e + 1.0)).abs() < TOL);
        assert!((probs[0] - 0.731).abs() < 1e-3);
    }

    #[test]
    fn zero_draw_picks_first_action() {
        let mut p = TabularPolicy::new(2, 9, 0.1, 0.2).unwrap();
        assert_eq!(p.select_with_draw(1, 0.0), 0);
        assert_eq!(p.visits(1, 0), 1);
    }

    #[test]
    fn seeded_selection_is_reproducible() {
        let run = || {
            let mut p = TabularPolicy::new(3, 5, 0.1, 0.2).unwrap();
            p.set_row(1, &[0.3, -0.1, 0.0, 0.2, 0.05]);
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..200)
                .map(|i| p.select_action(i % 3, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn update_arithmetic() {
        let mut p = TabularPolicy::new(1, 1, 0.1, 0.2).unwrap();
        p.update(0, 0, 1.0).unwrap();
        assert!((p.value(0, 0) - 0.1).abs() < TOL);

        let mut p = TabularPolicy::new(1, 1, 0.1, 0.2).unwrap();
        p.set_row(0, &[0.42]);
        p.update(0, 0, 0.42).unwrap();
        assert_eq!(p.value(0, 0), 0.42);

        let mut p = TabularPolicy::new(1, 1, 0.1, 0.2).unwrap();
        for _ in 0..3 {
            p.update(0, 0, 1.0).unwrap();
        }
        assert!((p.value(0, 0) - (1.0 - 0.9f64.powi(3))).abs() < TOL);
        assert!((p.value(0, 0) - 0.271).abs() < TOL);
    }

    #[test]
    fn update_touches_a_single_cell() {
        let mut p = TabularPolicy::new(2, 3, 0.5, 0.2).unwrap();
        p.update(1, 2, -1.0).unwrap();
        for cell in p.cells() {
            let expect = if (cell.state, cell.action) == (1, 2) {
                -0.5
            } else {
                0.0
            };
            assert_eq!(cell.value, expect);
        }
    }

    #[test]
    fn non_finite_reward_is_rejected() {
        let mut p = TabularPolicy::new(1, 2, 0.1, 0.2).unwrap();
        assert_eq!(
            p.update(0, 1, f64::NAN).unwrap_err().to_string(),
            PolicyError::CorruptedReward(f64::NAN).to_string()
        );
        assert!(p.update(0, 1, f64::INFINITY).is_err());
        assert_eq!(p.value(0, 1), 0.0);
    }

    #[test]
    fn bad_hyperparameters_are_rejected() {
        assert!(TabularPolicy::new(1, 1, 0.0, 0.2).is_err());
        assert!(TabularPolicy::new(1, 1, 1.5, 0.2).is_err());
        assert!(TabularPolicy::new(1, 1, 0.1, 0.0).is_err());
        assert!(TabularPolicy::new(1, 1, 1.0, 0.2).is_ok());
    }

    #[test]
    fn table_sizes_match_spaces() {
        let f = TabularPolicy::for_spaces::<StateF, ActionF>(0.1, 0.2).unwrap();
        assert_eq!((f.n_states(), f.n_actions()), (27, 27));
        let t = TabularPolicy::for_spaces::<StateT, ActionT>(0.1, 0.2).unwrap();
        assert_eq!((t.n_states(), t.n_actions()), (108, 9));
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn out_of_range_state_panics() {
        let p = TabularPolicy::new(27, 27, 0.1, 0.2).unwrap();
        p.action_probabilities(27);
    }

    #[test]
    fn state_and_action_indices_are_bijective() {
        fn check<D: Discrete + PartialEq + std::fmt::Debug>() {
            for i in 0..D::COUNT {
                assert_eq!(D::from_index(i).index(), i);
            }
        }
        check::<StateF>();
        check::<ActionF>();
        check::<StateT>();
        check::<ActionT>();
    }

    proptest! {
        #[test]
        fn probabilities_are_valid(row in prop::collection::vec(-5.0f64..5.0, 1..12), beta in 0.05f64..10.0) {
            let mut p = TabularPolicy::new(1, row.len(), 0.1, beta).unwrap();
            p.set_row(0, &row);
            let probs = p.action_probabilities(0);
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < TOL);
            prop_assert!(probs.iter().all(|&q| q > 0.0));
        }

        #[test]
        fn update_contracts_toward_reward(v in -3.0f64..3.0, r in -3.0f64..3.0, alpha in 0.01f64..1.0) {
            let mut p = TabularPolicy::new(1, 1, alpha, 0.2).unwrap();
            p.set_row(0, &[v]);
            p.update(0, 0, r).unwrap();
            let lhs = (p.value(0, 0) - r).abs();
            let rhs = (1.0 - alpha) * (v - r).abs();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn argmax_is_preserved(row in prop::collection::vec(-2.0f64..2.0, 2..10), beta in 0.05f64..5.0) {
            let mut p = TabularPolicy::new(1, row.len(), 0.1, beta).unwrap();
            p.set_row(0, &row);
            let probs = p.action_probabilities(0);
            let argmax = |xs: &[f64]| xs.iter().enumerate().fold(0, |best, (i, &x)| if x > xs[best] { i } else { best });
            prop_assert_eq!(argmax(&probs), argmax(&row));
        }

        #[test]
        fn shift_invariance(row in prop::collection::vec(-2.0f64..2.0, 1..10), c in -10.0f64..10.0) {
            let mut p = TabularPolicy::new(1, row.len(), 0.1, 0.2).unwrap();
            p.set_row(0, &row);
            let base = p.action_probabilities(0);
            let shifted: Vec<f64> = row.iter().map(|v| v + c).collect();
            p.set_row(0, &shifted);
            for (a, b) in base.iter().zip(p.action_probabilities(0)) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
