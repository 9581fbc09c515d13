//! Small environments (Garnet, chain, gridworld), sampling, and the replay buffer.

use std::collections::{HashSet, VecDeque};

use rand::seq::index::sample as sample_distinct;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::scalar::Scalar;

/// Deterministic generator for one component of a run. Streams with different
/// `component` ids never overlap, and each draw advances a counter, so the
/// sequence is a function of `(seed, component, call index)`.
pub fn stream_rng(seed: u64, component: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(component);
    rng
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index<T: Scalar, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        let p = p.as_f64();
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the total mass
    last
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition<T> {
    pub state: usize,
    pub action: usize,
    pub reward: T,
    pub next_state: usize,
}

/// Random MDP: each `(s, a)` reaches `branching` distinct states with
/// Dirichlet(1, ..., 1) weights; rewards uniform on `[0, 1]`; `ρ` uniform.
pub fn garnet<T: Scalar>(
    num_states: usize,
    num_actions: usize,
    branching: usize,
    gamma: T,
    seed: u64,
) -> Result<Mdp<T>> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::InvalidParameter("garnet needs S, A ≥ 1".into()));
    }
    if branching == 0 || branching > num_states {
        return Err(Error::InvalidParameter(format!(
            "branching {branching} not in 1..={num_states}"
        )));
    }
    let mut rng = stream_rng(seed, 0);
    let (s, a) = (num_states, num_actions);
    let mut transition = vec![T::zero(); s * a * s];
    let mut reward = Vec::with_capacity(s * a);
    for sa in 0..s * a {
        let targets = sample_distinct(&mut rng, s, branching);
        let raw: Vec<f64> = (0..branching).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = raw.iter().sum();
        for (sp, w) in targets.iter().zip(&raw) {
            transition[sa * s + sp] = T::lit(w / total);
        }
        reward.push(T::lit(rng.gen::<f64>()));
    }
    let rho = vec![T::one() / T::from_usize_lossy(s); s];
    Mdp::new(s, a, transition, reward, rho, gamma)
}

pub const CHAIN_LEFT: usize = 0;
pub const CHAIN_RIGHT: usize = 1;

/// `n`-state chain with actions left/right. The intended move happens with
/// probability `1 - slip`, otherwise the opposite one. State `n - 1` is an
/// absorbing loop paying reward 1; `ρ` starts at state 0 and `γ = 0.99`.
pub fn chain_mdp<T: Scalar>(length: usize, slip: T) -> Result<Mdp<T>> {
    if length < 2 {
        return Err(Error::InvalidParameter("chain needs at least 2 states".into()));
    }
    if !(slip >= T::zero() && slip <= T::lit(0.5)) {
        return Err(Error::InvalidParameter(format!("slip {slip} not in [0, 0.5]")));
    }
    let n = length;
    let mut transition = vec![T::zero(); n * 2 * n];
    let mut reward = vec![T::zero(); n * 2];
    for s in 0..n {
        let left = s.saturating_sub(1);
        let right = (s + 1).min(n - 1);
        for a in [CHAIN_LEFT, CHAIN_RIGHT] {
            let row = &mut transition[(s * 2 + a) * n..(s * 2 + a + 1) * n];
            if s == n - 1 {
                row[s] = T::one();
                reward[s * 2 + a] = T::one();
                continue;
            }
            let (intended, reversed) = if a == CHAIN_RIGHT { (right, left) } else { (left, right) };
            row[intended] += T::one() - slip;
            row[reversed] += slip;
        }
    }
    let mut rho = vec![T::zero(); n];
    rho[0] = T::one();
    Mdp::new(n, 2, transition, reward, rho, T::lit(0.99))
}

pub const GRID_UP: usize = 0;
pub const GRID_DOWN: usize = 1;
pub const GRID_LEFT: usize = 2;
pub const GRID_RIGHT: usize = 3;

/// Deterministic 4-action grid. Cells are `(x, y)` with state `y * width + x`;
/// "up" increases `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub start: (usize, usize),
    pub goal: (usize, usize),
    #[serde(default)]
    pub obstacles: Vec<(usize, usize)>,
    #[serde(default)]
    pub step_reward: f64,
    #[serde(default = "default_goal_reward")]
    pub goal_reward: f64,
    #[serde(default = "default_grid_gamma")]
    pub gamma: f64,
}

fn default_goal_reward() -> f64 {
    1.0
}

fn default_grid_gamma() -> f64 {
    0.9
}

impl GridSpec {
    pub fn state(&self, cell: (usize, usize)) -> usize {
        cell.1 * self.width + cell.0
    }

    pub fn cell(&self, state: usize) -> (usize, usize) {
        (state % self.width, state / self.width)
    }

    fn blocked(&self, cell: (usize, usize)) -> bool {
        self.obstacles.contains(&cell)
    }

    /// Cell reached from `cell` by `action`; walls and obstacles leave it in place.
    pub fn move_from(&self, cell: (usize, usize), action: usize) -> (usize, usize) {
        let (x, y) = cell;
        let next = match action {
            GRID_UP if y + 1 < self.height => (x, y + 1),
            GRID_DOWN if y > 0 => (x, y - 1),
            GRID_LEFT if x > 0 => (x - 1, y),
            GRID_RIGHT if x + 1 < self.width => (x + 1, y),
            _ => cell,
        };
        if self.blocked(next) {
            cell
        } else {
            next
        }
    }

    /// Breadth-first distance from every state to the goal (`None` if unreachable).
    pub fn goal_distances(&self) -> Vec<Option<usize>> {
        let n = self.width * self.height;
        let mut dist = vec![None; n];
        let goal = self.state(self.goal);
        dist[goal] = Some(0);
        let mut queue = VecDeque::from([goal]);
        while let Some(s) = queue.pop_front() {
            let d = dist[s].expect("queued states have a distance");
            for p in 0..n {
                let c = self.cell(p);
                if dist[p].is_some() || self.blocked(c) {
                    continue;
                }
                if (0..4).any(|a| self.state(self.move_from(c, a)) == s) {
                    dist[p] = Some(d + 1);
                    queue.push_back(p);
                }
            }
        }
        dist
    }

    /// `(lo, scale)` such that `(x - lo) * scale` maps both rewards into `[0, 1]`.
    pub fn reward_map(&self) -> (f64, f64) {
        let (lo, hi) = (
            self.step_reward.min(self.goal_reward),
            self.step_reward.max(self.goal_reward),
        );
        if lo >= 0.0 && hi <= 1.0 {
            (0.0, 1.0)
        } else if hi > lo {
            (lo, 1.0 / (hi - lo))
        } else {
            (lo, 0.0)
        }
    }
}

pub fn gridworld<T: Scalar>(spec: &GridSpec) -> Result<Mdp<T>> {
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::InvalidParameter("grid must be nonempty".into()));
    }
    let inside = |c: (usize, usize)| c.0 < spec.width && c.1 < spec.height;
    if !inside(spec.goal) || !inside(spec.start) {
        return Err(Error::InvalidParameter("start and goal must lie inside the grid".into()));
    }
    if spec.blocked(spec.goal) || spec.blocked(spec.start) {
        return Err(Error::InvalidParameter("start and goal must not be obstacles".into()));
    }
    let unique: HashSet<_> = spec.obstacles.iter().collect();
    if unique.iter().any(|&&c| !inside(c)) {
        return Err(Error::InvalidParameter("obstacle outside the grid".into()));
    }
    let n = spec.width * spec.height;
    let goal = spec.state(spec.goal);
    let (lo, scale) = spec.reward_map();
    let step_r = T::lit((spec.step_reward - lo) * scale);
    let goal_r = T::lit((spec.goal_reward - lo) * scale);
    let mut transition = vec![T::zero(); n * 4 * n];
    let mut reward = vec![T::zero(); n * 4];
    for s in 0..n {
        let cell = spec.cell(s);
        for a in 0..4 {
            let next = if s == goal { s } else { spec.state(spec.move_from(cell, a)) };
            transition[(s * 4 + a) * n + next] = T::one();
            reward[s * 4 + a] = if s == goal { goal_r } else { step_r };
        }
    }
    if spec.goal_distances()[spec.state(spec.start)].is_none() {
        log::warn!("gridworld goal {:?} is unreachable from start {:?}", spec.goal, spec.start);
    }
    let mut rho = vec![T::zero(); n];
    rho[spec.state(spec.start)] = T::one();
    Mdp::new(n, 4, transition, reward, rho, T::lit(spec.gamma))
}

/// Samples `s' ~ P(·|s,a)` and returns it with `r(s,a)`.
pub fn env_step<T: Scalar, R: Rng + ?Sized>(
    mdp: &Mdp<T>,
    state: usize,
    action: usize,
    rng: &mut R,
) -> (usize, T) {
    (sample_index(mdp.transition(state, action), rng), mdp.reward(state, action))
}

/// Samples an initial state from `ρ`.
pub fn reset<T: Scalar, R: Rng + ?Sized>(mdp: &Mdp<T>, rng: &mut R) -> usize {
    sample_index(mdp.initial_dist(), rng)
}

/// FIFO ring of transitions with uniform sampling with replacement.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    storage: Vec<Transition<T>>,
    write_cursor: usize,
    rng: ChaCha8Rng,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(capacity: usize, rng: ChaCha8Rng) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("buffer capacity must be positive".into()));
        }
        Ok(Self { capacity, storage: Vec::with_capacity(capacity.min(1 << 20)), write_cursor: 0, rng })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Inserts, overwriting the oldest transition once full.
    pub fn push(&mut self, transition: Transition<T>) {
        if self.storage.len() < self.capacity {
            self.storage.push(transition);
        } else {
            self.storage[self.write_cursor] = transition;
        }
        self.write_cursor = (self.write_cursor + 1) % self.capacity;
    }

    /// Transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition<T>> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.write_cursor };
        self.storage[split..].iter().chain(&self.storage[..split])
    }

    /// Uniform draw with replacement using the buffer's own stream.
    pub fn sample(&mut self, batch_size: usize) -> Result<Vec<Transition<T>>> {
        let mut rng = self.rng.clone();
        let out = self.sample_with(batch_size, &mut rng);
        self.rng = rng;
        out
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<Transition<T>>> {
        if self.storage.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..batch_size)
            .map(|_| self.storage[rng.gen_range(0..self.storage.len())])
            .collect())
    }
}

pub fn buffer_push<T: Scalar>(buffer: &mut ReplayBuffer<T>, transition: Transition<T>) {
    buffer.push(transition)
}

pub fn buffer_sample<T: Scalar, R: Rng + ?Sized>(
    buffer: &ReplayBuffer<T>,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Transition<T>>> {
    buffer.sample_with(batch_size, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::optimal_soft_policy;

    fn t(i: usize) -> Transition<f64> {
        Transition { state: i, action: 0, reward: 0.0, next_state: 0 }
    }

    #[test]
    fn garnet_shapes() {
        let full = garnet::<f64>(5, 2, 5, 0.9, 1).unwrap();
        assert!((0..5).all(|s| full.transition(s, 1).iter().all(|&p| p > 0.0)));
        let one = garnet::<f64>(5, 2, 1, 0.9, 1).unwrap();
        assert!((0..5).all(|s| one.transition(s, 0).iter().filter(|&&p| p == 1.0).count() == 1));
        assert_eq!(garnet::<f64>(6, 3, 2, 0.9, 42).unwrap(), garnet::<f64>(6, 3, 2, 0.9, 42).unwrap());
        assert_ne!(garnet::<f64>(6, 3, 2, 0.9, 42).unwrap(), garnet::<f64>(6, 3, 2, 0.9, 43).unwrap());
        assert!(garnet::<f64>(3, 2, 4, 0.9, 1).is_err());
        assert!(garnet::<f32>(8, 3, 3, 0.9, 1).is_ok());
    }

    #[test]
    fn deterministic_chain_value() {
        let mdp = chain_mdp::<f64>(6, 0.0).unwrap();
        let (pi, v) = optimal_soft_policy(&mdp, 0.0, 1e-10).unwrap();
        assert!((v.get(0) - 0.99f64.powi(5) / 0.01).abs() < 1e-8);
        assert!((0..5).all(|s| pi.argmax(s) == CHAIN_RIGHT));
        let two = chain_mdp::<f64>(2, 0.2).unwrap();
        assert_eq!(optimal_soft_policy(&two, 0.0, 1e-10).unwrap().0.argmax(0), CHAIN_RIGHT);
    }

    #[test]
    fn tiny_grid_moves_toward_goal() {
        let spec = GridSpec {
            width: 1,
            height: 2,
            start: (0, 0),
            goal: (0, 1),
            obstacles: vec![],
            step_reward: 0.0,
            goal_reward: 1.0,
            gamma: 0.9,
        };
        let mdp = gridworld::<f64>(&spec).unwrap();
        let (pi, _) = optimal_soft_policy(&mdp, 0.0, 1e-10).unwrap();
        assert_eq!(pi.argmax(0), GRID_UP);
    }

    #[test]
    fn grid_rewards_are_rescaled() {
        let spec = GridSpec {
            width: 3,
            height: 3,
            start: (0, 0),
            goal: (2, 2),
            obstacles: vec![(1, 1)],
            step_reward: -1.0,
            goal_reward: 10.0,
            gamma: 0.9,
        };
        let mdp = gridworld::<f64>(&spec).unwrap();
        assert_eq!(mdp.reward(0, 0), 0.0);
        assert_eq!(mdp.reward(8, 2), 1.0);
        assert_eq!(spec.goal_distances()[0], Some(4));
        assert_eq!(spec.goal_distances()[4], None);
    }

    #[test]
    fn step_and_reset() {
        let mdp = chain_mdp::<f64>(4, 0.0).unwrap();
        let mut rng = stream_rng(3, 1);
        assert_eq!(env_step(&mdp, 1, CHAIN_RIGHT, &mut rng), (2, 0.0));
        assert_eq!(reset(&mdp, &mut rng), 0);
        let g = garnet::<f64>(6, 2, 3, 0.9, 5).unwrap();
        let run = |seed| {
            let mut r = stream_rng(seed, 7);
            (0..50).map(|i| env_step(&g, i % 6, i % 2, &mut r).0).collect::<Vec<_>>()
        };
        assert_eq!(run(1), run(1));
    }

    #[test]
    fn streams_are_independent() {
        let a: u64 = stream_rng(1, 0).gen();
        let b: u64 = stream_rng(1, 1).gen();
        assert_ne!(a, b);
        assert_eq!(a, stream_rng(1, 0).gen::<u64>());
    }

    #[test]
    fn buffer_is_fifo() {
        let mut buf = ReplayBuffer::new(2, stream_rng(0, 2)).unwrap();
        for i in 0..3 {
            buf.push(t(i));
        }
        assert_eq!(buf.len(), 2);
        assert_eq!(buf.iter().map(|x| x.state).collect::<Vec<_>>(), vec![1, 2]);
        let mut single = ReplayBuffer::new(4, stream_rng(0, 2)).unwrap();
        assert!(matches!(single.sample(3), Err(Error::EmptyBuffer)));
        single.push(t(9));
        assert!(single.sample(5).unwrap().iter().all(|x| x.state == 9));
    }
}
