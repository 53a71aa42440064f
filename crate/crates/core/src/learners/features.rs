use crate::envs::{CartPoleState, TileCoder};
use crate::rng::{self, PeerRng};
use crate::scalar::Scalar;

/// Binary sparse features: `active` lists the indices whose feature is 1.
pub trait FeatureMap<O> {
    fn dim(&self) -> usize;
    fn active(&self, obs: &O, out: &mut Vec<usize>);
}

/// Tabular indicator features.
#[derive(Debug, Clone, Copy)]
pub struct OneHot(pub usize);

impl FeatureMap<usize> for OneHot {
    fn dim(&self) -> usize {
        self.0
    }

    fn active(&self, obs: &usize, out: &mut Vec<usize>) {
        assert!(*obs < self.0, "observation {obs} outside one-hot range {}", self.0);
        out.clear();
        out.push(*obs);
    }
}

/// A single always-on feature (state-free policies).
#[derive(Debug, Clone, Copy)]
pub struct Unit;

impl<O> FeatureMap<O> for Unit {
    fn dim(&self) -> usize {
        1
    }

    fn active(&self, _obs: &O, out: &mut Vec<usize>) {
        out.clear();
        out.push(0);
    }
}

#[derive(Debug, Clone)]
pub struct CartPoleTiles(pub TileCoder);

impl FeatureMap<CartPoleState> for CartPoleTiles {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn active(&self, obs: &CartPoleState, out: &mut Vec<usize>) {
        self.0.active(obs, out);
    }
}

/// `Q(s, a) = <phi(s), w_a>`, weights laid out `a * dim + feature`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearQ<T> {
    dim: usize,
    num_actions: usize,
    weights: Vec<T>,
}

impl<T: Scalar> LinearQ<T> {
    pub fn zeros(dim: usize, num_actions: usize) -> Self {
        Self { dim, num_actions, weights: vec![T::zero(); dim * num_actions] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn value(&self, active: &[usize], a: usize) -> T {
        active.iter().map(|&f| self.weights[a * self.dim + f]).sum()
    }

    pub fn values(&self, active: &[usize]) -> Vec<T> {
        (0..self.num_actions).map(|a| self.value(active, a)).collect()
    }

    pub fn max_value(&self, active: &[usize]) -> T {
        self.values(active).into_iter().fold(T::neg_infinity(), T::max)
    }

    /// Normalized semi-gradient step `w_a += scale * phi / |phi|^2`.
    pub fn add_normalized(&mut self, active: &[usize], a: usize, scale: T) {
        let step = scale / T::lit(active.len() as f64);
        for &f in active {
            self.weights[a * self.dim + f] += step;
        }
    }

    /// `Q(s, a) += alpha * (target - Q(s, a))` along the feature direction.
    pub fn td_update(&mut self, active: &[usize], a: usize, target: T, alpha: T) {
        let err = target - self.value(active, a);
        self.add_normalized(active, a, alpha * err);
    }

    pub fn sup_abs(&self) -> T {
        self.weights.iter().fold(T::zero(), |m, &w| m.max(w.abs()))
    }
}

/// Softmax over linear scores `theta_a . phi(s)`, weights laid out `a * dim + feature`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy<T> {
    dim: usize,
    num_actions: usize,
    theta: Vec<T>,
}

impl<T: Scalar> SoftmaxPolicy<T> {
    pub fn zeros(dim: usize, num_actions: usize) -> Self {
        Self { dim, num_actions, theta: vec![T::zero(); dim * num_actions] }
    }

    pub fn from_theta(dim: usize, num_actions: usize, theta: Vec<T>) -> Self {
        assert_eq!(theta.len(), dim * num_actions);
        Self { dim, num_actions, theta }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [T] {
        &mut self.theta
    }

    pub fn scores(&self, active: &[usize]) -> Vec<T> {
        (0..self.num_actions).map(|a| active.iter().map(|&f| self.theta[a * self.dim + f]).sum()).collect()
    }

    pub fn probs(&self, active: &[usize]) -> Vec<T> {
        let s = self.scores(active);
        let m = s.iter().copied().fold(T::neg_infinity(), T::max);
        let e: Vec<T> = s.iter().map(|&x| (x - m).exp()).collect();
        let z: T = e.iter().copied().sum();
        e.into_iter().map(|x| x / z).collect()
    }

    pub fn log_prob(&self, active: &[usize], a: usize) -> T {
        let s = self.scores(active);
        let m = s.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + s.iter().map(|&x| (x - m).exp()).sum::<T>().ln();
        s[a] - lse
    }

    /// Appends `(index, d log pi(a|s) / d theta_index)`: `phi_f * (1[b = a] - pi(b|s))`.
    pub fn grad_log_prob(&self, active: &[usize], a: usize, out: &mut Vec<(usize, T)>) {
        let p = self.probs(active);
        for (b, &pb) in p.iter().enumerate() {
            let coef = if b == a { T::one() - pb } else { -pb };
            for &f in active {
                out.push((b * self.dim + f, coef));
            }
        }
    }

    pub fn sample(&self, active: &[usize], rng: &mut PeerRng) -> usize {
        rng::categorical(&self.probs(active), rng)
    }

    pub fn greedy(&self, active: &[usize]) -> usize {
        crate::mdp::argmax_lowest(&self.scores(active))
    }

    /// `theta += scale * g` for a sparse gradient.
    pub fn apply(&mut self, grad: &[(usize, T)], scale: T) {
        for &(i, g) in grad {
            self.theta[i] += scale * g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabular_linear_q_matches_table_update() {
        let mut q = LinearQ::<f64>::zeros(3, 2);
        q.td_update(&[1], 0, 2.0, 0.5);
        assert_eq!(q.value(&[1], 0), 1.0);
        q.td_update(&[1], 0, 2.0, 0.5);
        assert_eq!(q.value(&[1], 0), 1.5);
        assert_eq!(q.value(&[0], 0), 0.0);
    }

    #[test]
    fn two_action_gradient_closed_form() {
        let pol = SoftmaxPolicy::from_theta(1, 2, vec![0.3f64, -0.2]);
        let p = pol.probs(&[0]);
        let mut g = Vec::new();
        pol.grad_log_prob(&[0], 1, &mut g);
        assert_eq!(g.len(), 2);
        assert!((g[0].1 + p[0]).abs() < 1e-15);
        assert!((g[1].1 - (1.0 - p[1])).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
