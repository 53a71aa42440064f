//! Correlated-agreement building blocks: the peer-reward transform, peer
//! sample buffers and the penalty weight schedule.

mod validate;

pub use validate::{
    affine_invariance_check, argmax_preserved, lemma1_validator, multi_outcome_validator, peer_expected_rewards,
    random_mdp, AffineReport, CellEstimate, Lemma1Report, MultiOutcomeReport, ValidatorError,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::PeerRng;
use crate::scalar::Scalar;

/// `observed - xi * peer`.
pub fn peer_reward<T: Scalar>(observed: T, peer: T, xi: T) -> T {
    observed - xi * peer
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XiSchedule {
    Constant {
        xi: f64,
    },
    /// Linear from `start` at step 0 to `end` at `horizon`, constant afterwards.
    LinearDecay {
        start: f64,
        end: f64,
        horizon: u64,
    },
}

impl XiSchedule {
    pub fn constant(xi: f64) -> Self {
        XiSchedule::Constant { xi }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            XiSchedule::Constant { xi } if xi >= 0.0 && xi.is_finite() => Ok(()),
            XiSchedule::LinearDecay { start, end, horizon }
                if start >= end && end >= 0.0 && start.is_finite() && horizon > 0 =>
            {
                Ok(())
            }
            _ => Err(format!("invalid xi schedule {self:?}: need xi >= 0 and a nonincreasing decay")),
        }
    }

    pub fn at(&self, t: u64) -> f64 {
        match *self {
            XiSchedule::Constant { xi } => xi,
            XiSchedule::LinearDecay { start, end, horizon } => {
                if t >= horizon {
                    end
                } else {
                    start + (end - start) * (t as f64 / horizon as f64)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerPolicy {
    UniformOverBuffer,
    UniformOverStateActionTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeerConfig {
    pub schedule: XiSchedule,
    pub sampler: SamplerPolicy,
    pub capacity: usize,
}

impl Default for PeerConfig {
    fn default() -> Self {
        Self::constant(0.2)
    }
}

impl PeerConfig {
    pub const DEFAULT_CAPACITY: usize = 100_000;

    pub fn constant(xi: f64) -> Self {
        Self {
            schedule: XiSchedule::constant(xi),
            sampler: SamplerPolicy::UniformOverBuffer,
            capacity: Self::DEFAULT_CAPACITY,
        }
    }

    /// No peer term at all.
    pub fn off() -> Self {
        Self::constant(0.0)
    }

    pub fn xi(&self, t: u64) -> f64 {
        self.schedule.at(t)
    }
}

/// Fixed-capacity uniform reservoir: after `n` inserts every inserted value is
/// retained with probability `min(1, capacity / n)`.
#[derive(Debug, Clone)]
pub struct Reservoir<V> {
    capacity: usize,
    items: Vec<V>,
    seen: u64,
}

impl<V: Clone> Reservoir<V> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "reservoir capacity must be positive");
        Self { capacity, items: Vec::new(), seen: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn items(&self) -> &[V] {
        &self.items
    }

    /// Consumes a draw only once the reservoir is full.
    pub fn insert(&mut self, value: V, rng: &mut PeerRng) {
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push(value);
        } else {
            let j = rng.random_range(0..self.seen);
            if (j as usize) < self.capacity {
                self.items[j as usize] = value;
            }
        }
    }

    pub fn draw(&self, rng: &mut PeerRng) -> Option<V> {
        if self.items.is_empty() {
            None
        } else {
            Some(self.items[rng.random_range(0..self.items.len())].clone())
        }
    }
}

/// Source of peer samples. In table mode a cell is first chosen uniformly
/// among nonempty cells, then a value uniformly within it.
#[derive(Debug, Clone)]
pub enum PeerBuffer<V> {
    Flat(Reservoir<V>),
    Table { cells: Vec<Reservoir<V>>, nonempty: Vec<usize> },
}

impl<V: Clone> PeerBuffer<V> {
    pub fn flat(capacity: usize) -> Self {
        PeerBuffer::Flat(Reservoir::new(capacity))
    }

    pub fn table(num_cells: usize, capacity_per_cell: usize) -> Self {
        PeerBuffer::Table {
            cells: (0..num_cells).map(|_| Reservoir::new(capacity_per_cell)).collect(),
            nonempty: Vec::new(),
        }
    }

    pub fn for_policy(policy: SamplerPolicy, num_cells: usize, capacity: usize) -> Self {
        match policy {
            SamplerPolicy::UniformOverBuffer => Self::flat(capacity),
            SamplerPolicy::UniformOverStateActionTable => Self::table(num_cells, (capacity / num_cells.max(1)).max(1)),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            PeerBuffer::Flat(r) => r.is_empty(),
            PeerBuffer::Table { nonempty, .. } => nonempty.is_empty(),
        }
    }

    /// `cell` is ignored in flat mode.
    pub fn insert(&mut self, cell: usize, value: V, rng: &mut PeerRng) {
        match self {
            PeerBuffer::Flat(r) => r.insert(value, rng),
            PeerBuffer::Table { cells, nonempty } => {
                if cells[cell].is_empty() {
                    nonempty.push(cell);
                }
                cells[cell].insert(value, rng);
            }
        }
    }

    /// `None` when nothing has been inserted yet.
    pub fn draw(&self, rng: &mut PeerRng) -> Option<V> {
        match self {
            PeerBuffer::Flat(r) => r.draw(rng),
            PeerBuffer::Table { cells, nonempty } => {
                if nonempty.is_empty() {
                    return None;
                }
                let c = nonempty[rng.random_range(0..nonempty.len())];
                cells[c].draw(rng)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    #[test]
    fn peer_reward_examples() {
        assert_eq!(peer_reward(1.0, 1.0, 1.0), 0.0);
        assert!((peer_reward(1.0, -1.0, 0.2) - 1.2f64).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn peer_reward_is_linear(o1 in -10.0..10.0f64, o2 in -10.0..10.0f64, p in -10.0..10.0f64,
                                 q in -10.0..10.0f64, xi in 0.0..2.0f64, c in -3.0..3.0f64) {
            let lhs = peer_reward(o1 + c * o2, p + c * q, xi);
            let rhs = peer_reward(o1, p, xi) + c * peer_reward(o2, q, xi);
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn linear_decay_monotone(start in 0.0..2.0f64, frac in 0.0..1.0f64, h in 1u64..10_000) {
            let end = start * frac;
            let s = XiSchedule::LinearDecay { start, end, horizon: h };
            prop_assert!(s.validate().is_ok());
            prop_assert_eq!(s.at(0), start);
            prop_assert_eq!(s.at(h), end);
            let mut prev = s.at(0);
            for t in (0..=h).step_by((h as usize / 50).max(1)) {
                let v = s.at(t);
                prop_assert!(v <= prev + 1e-15 && v >= 0.0);
                prev = v;
            }
        }
    }

    #[test]
    fn buffer_draws_and_sentinel() {
        let mut rng = seeded(1);
        let mut b = PeerBuffer::flat(10);
        assert_eq!(b.draw(&mut rng), None);
        b.insert(0, 5.0, &mut rng);
        for _ in 0..10 {
            assert_eq!(b.draw(&mut rng), Some(5.0));
        }
    }

    #[test]
    fn buffer_two_values_balanced() {
        let mut rng = seeded(2);
        let mut b = PeerBuffer::flat(10);
        b.insert(0, 0.0, &mut rng);
        b.insert(0, 1.0, &mut rng);
        let n = 100_000;
        let ones: f64 = (0..n).map(|_| b.draw(&mut rng).unwrap()).sum();
        assert!((ones / n as f64 - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn table_mode_uniform_over_nonempty_cells() {
        let mut rng = seeded(3);
        let mut b = PeerBuffer::table(3, 100);
        for _ in 0..50 {
            b.insert(0, 0u8, &mut rng);
        }
        b.insert(2, 1u8, &mut rng);
        let n = 40_000;
        let ones = (0..n).filter(|_| b.draw(&mut rng) == Some(1)).count();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn reservoir_never_invents_values() {
        let mut rng = seeded(4);
        let mut r = Reservoir::new(5);
        for i in 0..1000u32 {
            r.insert(i, &mut rng);
        }
        assert_eq!(r.len(), 5);
        assert!(r.items().iter().all(|&v| v < 1000));
        assert_eq!(r.seen(), 1000);
    }
}
