use super::{EnvError, EnvStep, Environment};
use crate::rng::{self, PeerRng};
use crate::scalar::Scalar;

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
const X_THRESHOLD: f64 = 2.4;
const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;

pub const CARTPOLE_MAX_STEPS: usize = 200;

/// `(x, x_dot, theta, theta_dot)`.
pub type CartPoleState = [f64; 4];

/// Classic cart-pole with Euler integration and a binary reward:
/// level 1 (`+1`) for every surviving step, level 0 (`-1`) on the failing step.
#[derive(Debug, Clone)]
pub struct CartPoleEnv {
    state: CartPoleState,
    steps: usize,
    max_steps: usize,
    done: bool,
}

impl Default for CartPoleEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl CartPoleEnv {
    pub fn new() -> Self {
        Self { state: [0.0; 4], steps: 0, max_steps: CARTPOLE_MAX_STEPS, done: true }
    }

    pub fn with_max_steps(max_steps: usize) -> Self {
        Self { max_steps, ..Self::new() }
    }

    pub fn state(&self) -> CartPoleState {
        self.state
    }

    /// Starts an episode from an explicit state.
    pub fn reset_to(&mut self, state: CartPoleState) {
        self.state = state;
        self.steps = 0;
        self.done = false;
    }

    /// One Euler step under an arbitrary horizontal force.
    pub fn integrate(state: CartPoleState, force: f64) -> CartPoleState {
        let [x, x_dot, theta, theta_dot] = state;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
        [x + TAU * x_dot, x_dot + TAU * x_acc, theta + TAU * theta_dot, theta_dot + TAU * theta_acc]
    }

    pub fn failed(state: &CartPoleState) -> bool {
        state[0].abs() > X_THRESHOLD || state[2].abs() > THETA_THRESHOLD
    }

    /// Advances under `force`; returns the new state, the clean reward level and whether it failed.
    pub fn step_with_force(&mut self, force: f64) -> Result<(CartPoleState, usize, bool), EnvError> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        self.state = Self::integrate(self.state, force);
        self.steps += 1;
        let failed = Self::failed(&self.state);
        self.done = failed || self.steps >= self.max_steps;
        Ok((self.state, if failed { 0 } else { 1 }, failed))
    }
}

impl<T: Scalar> Environment<T> for CartPoleEnv {
    type Obs = CartPoleState;

    fn num_actions(&self) -> usize {
        2
    }

    fn reward_levels(&self) -> Vec<T> {
        vec![-T::one(), T::one()]
    }

    fn reset(&mut self, rng: &mut PeerRng) -> CartPoleState {
        let mut s = [0.0; 4];
        for v in &mut s {
            *v = -0.05 + 0.1 * rng::uniform(rng);
        }
        self.reset_to(s);
        s
    }

    fn step(&mut self, action: usize, _rng: &mut PeerRng) -> Result<EnvStep<CartPoleState>, EnvError> {
        if action > 1 {
            return Err(EnvError::Action(action));
        }
        let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
        let (obs, reward_level, failed) = self.step_with_force(force)?;
        Ok(EnvStep { obs, reward_level, terminal: failed, truncated: !failed && self.done })
    }
}

/// Box discretization: each dimension split into equal bins over `[low, high]`,
/// values outside clamp to the edge bins. Cells are mixed-radix, first dimension
/// most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretizer {
    bins: Vec<usize>,
    low: Vec<f64>,
    high: Vec<f64>,
}

impl Discretizer {
    pub fn new(bins: Vec<usize>, low: Vec<f64>, high: Vec<f64>) -> Result<Self, EnvError> {
        if bins.is_empty() || bins.len() != low.len() || bins.len() != high.len() {
            return Err(EnvError::Parameter("discretizer dimensions disagree".into()));
        }
        if bins.contains(&0) || low.iter().zip(&high).any(|(l, h)| !(h > l)) {
            return Err(EnvError::Parameter("discretizer needs positive bins and low < high".into()));
        }
        Ok(Self { bins, low, high })
    }

    /// `(4, 4, 8, 8)` bins over `±2.4, ±3.0, ±12 degrees, ±3.5`.
    pub fn cartpole_default() -> Self {
        Self::new(
            vec![4, 4, 8, 8],
            vec![-X_THRESHOLD, -3.0, -THETA_THRESHOLD, -3.5],
            vec![X_THRESHOLD, 3.0, THETA_THRESHOLD, 3.5],
        )
        .expect("default discretizer is valid")
    }

    pub fn num_cells(&self) -> usize {
        self.bins.iter().product()
    }

    pub fn bin_width(&self, dim: usize) -> f64 {
        (self.high[dim] - self.low[dim]) / self.bins[dim] as f64
    }

    pub fn cell(&self, obs: &[f64]) -> usize {
        self.cell_offset(obs, 0.0)
    }

    fn cell_offset(&self, obs: &[f64], frac: f64) -> usize {
        assert_eq!(obs.len(), self.bins.len(), "observation dimension mismatch");
        let mut idx = 0;
        for (d, &v) in obs.iter().enumerate() {
            let w = self.bin_width(d);
            let pos = ((v - self.low[d]) / w + frac).floor();
            let b = if pos.is_nan() { 0 } else { pos.clamp(0.0, (self.bins[d] - 1) as f64) as usize };
            idx = idx * self.bins[d] + b;
        }
        idx
    }
}

/// Several discretizations offset by fractions of a bin width; one active
/// feature per tiling.
#[derive(Debug, Clone, PartialEq)]
pub struct TileCoder {
    grid: Discretizer,
    tilings: usize,
}

impl TileCoder {
    pub fn new(grid: Discretizer, tilings: usize) -> Result<Self, EnvError> {
        if tilings == 0 {
            return Err(EnvError::Parameter("need at least one tiling".into()));
        }
        Ok(Self { grid, tilings })
    }

    pub fn num_tilings(&self) -> usize {
        self.tilings
    }

    pub fn dim(&self) -> usize {
        self.tilings * self.grid.num_cells()
    }

    pub fn active(&self, obs: &[f64], out: &mut Vec<usize>) {
        out.clear();
        let cells = self.grid.num_cells();
        for t in 0..self.tilings {
            let frac = t as f64 / self.tilings as f64;
            out.push(t * cells + self.grid.cell_offset(obs, frac));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_from_upright_survives() {
        let mut env = CartPoleEnv::new();
        env.reset_to([0.0; 4]);
        let step = Environment::<f64>::step(&mut env, 1, &mut rng::seeded(0)).unwrap();
        assert_eq!(step.reward_level, 1);
        assert!(!step.done());
    }

    #[test]
    fn crossing_angle_threshold_fails() {
        let mut env = CartPoleEnv::new();
        env.reset_to([0.0, 0.0, THETA_THRESHOLD - 1e-4, 1.0]);
        let step = Environment::<f64>::step(&mut env, 1, &mut rng::seeded(0)).unwrap();
        assert_eq!(step.reward_level, 0);
        assert!(step.terminal);
        assert_eq!(Environment::<f64>::step(&mut env, 0, &mut rng::seeded(0)), Err(EnvError::StepAfterDone));
    }

    #[test]
    fn discretizer_clamps_and_is_total() {
        let d = Discretizer::cartpole_default();
        assert_eq!(d.num_cells(), 4 * 4 * 8 * 8);
        assert_eq!(d.cell(&[-100.0, -100.0, -100.0, -100.0]), 0);
        assert_eq!(d.cell(&[100.0, 100.0, 100.0, 100.0]), d.num_cells() - 1);
        assert_eq!(d.cell(&[0.1, 0.2, 0.01, -0.3]), d.cell(&[0.1, 0.2, 0.01, -0.3]));
    }

    #[test]
    fn tile_features_one_per_tiling() {
        let t = TileCoder::new(Discretizer::cartpole_default(), 4).unwrap();
        let mut out = Vec::new();
        t.active(&[0.0, 0.0, 0.0, 0.0], &mut out);
        assert_eq!(out.len(), 4);
        for (i, &f) in out.iter().enumerate() {
            assert!(f / Discretizer::cartpole_default().num_cells() == i);
        }
    }
}
