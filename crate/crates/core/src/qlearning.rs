//! Tabular Q-learning with ε-greedy exploration.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{ActionId, Environment, QTable, StateId, TransitionRecord};

/// The single per-run random stream. ChaCha is counter based, so the stream
/// is identical on every platform.
pub type RunRng = ChaCha8Rng;

pub fn run_rng(seed: u64) -> RunRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    /// Discount factor, strictly inside (0, 1).
    pub gamma: f64,
    /// Learning rate in (0, 1].
    pub alpha: f64,
    /// Probability of a uniformly random action.
    pub epsilon: f64,
    pub rng_seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            gamma: 0.9,
            alpha: 0.3,
            epsilon: 0.1,
            rng_seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidGamma(self.gamma));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha = {} must lie in (0, 1]",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidConfig(format!(
                "epsilon = {} must lie in [0, 1]",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Per-state entry counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitCounts(Vec<u64>);

impl VisitCounts {
    pub fn new(state_count: usize) -> Self {
        VisitCounts(vec![0; state_count])
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        VisitCounts(counts)
    }

    #[inline]
    pub fn record(&mut self, s: StateId) {
        self.0[s.index()] += 1;
    }

    #[inline]
    pub fn get(&self, s: StateId) -> u64 {
        self.0[s.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    /// States entered at least once, in id order.
    pub fn visited(&self) -> Vec<StateId> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(s, _)| StateId::new(s))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointRecord {
    pub step: u64,
    /// Whatever the evaluator returned, usually greedy-policy speed.
    pub score: f64,
    pub max_q: f64,
    /// Cumulative hopping-trigger activations up to and including `step`.
    pub activations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub checkpoints: Vec<CheckpointRecord>,
    pub total_steps: u64,
    pub visits: VisitCounts,
    pub activations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub metrics: RunMetrics,
    pub q: QTable,
}

/// ε-greedy choice; greedy ties are broken uniformly at random.
pub fn select_action<R: Rng + ?Sized>(
    q: &QTable,
    s: StateId,
    epsilon: f64,
    rng: &mut R,
) -> ActionId {
    if rng.gen::<f64>() < epsilon {
        return ActionId::new(rng.gen_range(0..q.action_count()));
    }
    random_greedy_action(q, s, rng)
}

/// Uniform draw among the exact maximisers of row `s`.
pub fn random_greedy_action<R: Rng + ?Sized>(q: &QTable, s: StateId, rng: &mut R) -> ActionId {
    let row = q.row(s);
    let best = q.best_value(s);
    let ties = row.iter().filter(|&&v| v >= best).count();
    let pick = if ties == 1 { 0 } else { rng.gen_range(0..ties) };
    let a = row
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= best)
        .nth(pick)
        .map(|(a, _)| a)
        .expect("a row always has a maximiser");
    ActionId::new(a)
}

/// One-step Q-learning backup; returns the new value.
pub fn q_update(q: &mut QTable, t: &TransitionRecord, cfg: &LearnerConfig) -> f64 {
    let old = q.get(t.from, t.action);
    let target = t.reward + cfg.gamma * q.best_value(t.to);
    let new = old + cfg.alpha * (target - old);
    q.set(t.from, t.action, new);
    new
}

pub(crate) fn validate_schedule(total_steps: u64, checkpoints: &[u64]) -> Result<()> {
    for pair in checkpoints.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidConfig(format!(
                "checkpoints must be strictly increasing ({} then {})",
                pair[0], pair[1]
            )));
        }
    }
    if let Some(&first) = checkpoints.first() {
        if first == 0 {
            return Err(Error::InvalidConfig("checkpoint 0 is not a step".into()));
        }
    }
    if let Some(&last) = checkpoints.last() {
        if last > total_steps {
            return Err(Error::InvalidConfig(format!(
                "checkpoint {last} lies beyond total_steps = {total_steps}"
            )));
        }
    }
    Ok(())
}

/// Walks a checkpoint list alongside the step counter.
pub(crate) struct CheckpointCursor<'a> {
    steps: &'a [u64],
    next: usize,
    pub records: Vec<CheckpointRecord>,
}

impl<'a> CheckpointCursor<'a> {
    pub fn new(steps: &'a [u64]) -> Self {
        CheckpointCursor {
            steps,
            next: 0,
            records: Vec::with_capacity(steps.len()),
        }
    }

    pub fn observe<F>(
        &mut self,
        step: u64,
        q: &QTable,
        activations: u64,
        evaluator: &mut F,
    ) -> Result<()>
    where
        F: FnMut(&QTable) -> Result<f64>,
    {
        if self.steps.get(self.next) == Some(&step) {
            self.next += 1;
            let score = evaluator(q)?;
            self.records.push(CheckpointRecord {
                step,
                score,
                max_q: q.max_value(),
                activations,
            });
        }
        Ok(())
    }
}

/// Plain Q-learning for `total_steps` transitions starting from `env.reset()`.
///
/// At each checkpoint the evaluator sees the current table. Identical
/// configurations give bit-identical outcomes.
pub fn run_conventional<E, F>(
    env: &mut E,
    cfg: &LearnerConfig,
    total_steps: u64,
    checkpoints: &[u64],
    mut evaluator: F,
) -> Result<RunOutcome>
where
    E: Environment + ?Sized,
    F: FnMut(&QTable) -> Result<f64>,
{
    cfg.validate()?;
    validate_schedule(total_steps, checkpoints)?;

    let mut rng = run_rng(cfg.rng_seed);
    let mut q = QTable::new(env.state_count(), env.action_count());
    let mut visits = VisitCounts::new(env.state_count());
    let mut cursor = CheckpointCursor::new(checkpoints);

    let mut state = env.reset();
    visits.record(state);
    for step in 1..=total_steps {
        let action = select_action(&q, state, cfg.epsilon, &mut rng);
        let (next, reward) = env.step(action)?;
        let t = TransitionRecord {
            from: state,
            action,
            reward,
            to: next,
        };
        q_update(&mut q, &t, cfg);
        visits.record(next);
        state = next;
        cursor.observe(step, &q, 0, &mut evaluator)?;
    }

    Ok(RunOutcome {
        metrics: RunMetrics {
            checkpoints: cursor.records,
            total_steps,
            visits,
            activations: 0,
        },
        q,
    })
}
