//! Shared MDP vocabulary: state/action identifiers, the dense Q-table, the
//! snapshot-capable environment contract and the observed-transition cache.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Dense index of an environment state, `0..state_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(pub u32);

impl StateId {
    pub fn new(index: usize) -> Self {
        StateId(index as u32)
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Dense index of an action, `0..action_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionId(pub u32);

impl ActionId {
    pub fn new(index: usize) -> Self {
        ActionId(index as u32)
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// One observed step: taking `action` in `from` produced `reward` and led to `to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRecord {
    pub from: StateId,
    pub action: ActionId,
    pub reward: f64,
    pub to: StateId,
}

/// Dense `state × action` table of action values.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Vec<f64>,
    state_count: usize,
    action_count: usize,
}

impl QTable {
    pub fn new(state_count: usize, action_count: usize) -> Self {
        Self::with_initial(state_count, action_count, 0.0)
    }

    pub fn with_initial(state_count: usize, action_count: usize, initial: f64) -> Self {
        assert!(initial.is_finite(), "initial Q-value must be finite");
        QTable {
            values: vec![initial; state_count * action_count],
            state_count,
            action_count,
        }
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    #[inline]
    pub fn get(&self, s: StateId, a: ActionId) -> f64 {
        self.values[s.index() * self.action_count + a.index()]
    }

    #[inline]
    pub fn set(&mut self, s: StateId, a: ActionId, value: f64) {
        self.values[s.index() * self.action_count + a.index()] = value;
    }

    #[inline]
    pub fn row(&self, s: StateId) -> &[f64] {
        let start = s.index() * self.action_count;
        &self.values[start..start + self.action_count]
    }

    pub fn row_mut(&mut self, s: StateId) -> &mut [f64] {
        let start = s.index() * self.action_count;
        &mut self.values[start..start + self.action_count]
    }

    /// Best action value in `s`.
    #[inline]
    pub fn best_value(&self, s: StateId) -> f64 {
        self.row(s)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Every action within `tie_epsilon` of the best value in `s`, in id order.
    pub fn greedy_actions(&self, s: StateId, tie_epsilon: f64) -> Vec<ActionId> {
        let cutoff = self.best_value(s) - tie_epsilon;
        self.row(s)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= cutoff)
            .map(|(a, _)| ActionId::new(a))
            .collect()
    }

    /// Whether `a` attains the exact maximum of row `s`.
    #[inline]
    pub fn is_greedy(&self, s: StateId, a: ActionId) -> bool {
        self.get(s, a) >= self.best_value(s)
    }

    /// Lowest-id greedy action, the deterministic tie-break used for evaluation.
    pub fn first_greedy_action(&self, s: StateId) -> ActionId {
        let row = self.row(s);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        ActionId::new(best)
    }

    /// Largest value anywhere in the table.
    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest absolute value anywhere in the table.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Little-endian IEEE-754 encoding of every entry, for byte-level comparisons.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// `max_a q(s, a)`.
pub fn q_best(q: &QTable, s: StateId) -> f64 {
    q.best_value(s)
}

/// All actions within `tie_epsilon` of [`q_best`].
pub fn greedy_actions(q: &QTable, s: StateId, tie_epsilon: f64) -> Vec<ActionId> {
    q.greedy_actions(s, tie_epsilon)
}

/// Opaque environment state. The first byte is a format tag owned by the
/// environment that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EnvSnapshot(Vec<u8>);

impl EnvSnapshot {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        EnvSnapshot(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn tag(&self) -> Option<u8> {
        self.0.first().copied()
    }
}

/// A simulation the learner can act in and that can be saved and restored.
pub trait Environment {
    fn state_count(&self) -> usize;
    fn action_count(&self) -> usize;
    /// Puts the environment in its initial state.
    fn reset(&mut self) -> StateId;
    fn current_state(&self) -> StateId;
    fn step(&mut self, action: ActionId) -> Result<(StateId, f64)>;
    fn snapshot(&self) -> EnvSnapshot;
    fn restore(&mut self, snapshot: &EnvSnapshot) -> Result<()>;
    /// Moves the environment to the state recorded in `snapshot` for a hop.
    /// Same as [`Environment::restore`] unless overridden; a stochastic
    /// environment may keep its random stream running so that repeated hops
    /// to one state do not replay identical outcomes.
    fn restore_state(&mut self, snapshot: &EnvSnapshot) -> Result<()> {
        self.restore(snapshot)
    }
    fn is_deterministic(&self) -> bool;
    /// Largest single-step reward the environment can produce, when known.
    fn reward_upper_bound(&self) -> Option<f64>;
}

/// Observed `(state, action) → (next, reward)` facts.
#[derive(Debug, Clone, Default)]
pub struct TransitionCache {
    deterministic: bool,
    entries: HashMap<(StateId, ActionId), (StateId, f64)>,
}

impl TransitionCache {
    /// For a deterministic environment conflicting records are an error; for
    /// a stochastic one the latest observation wins.
    pub fn new(deterministic: bool) -> Self {
        TransitionCache {
            deterministic,
            entries: HashMap::new(),
        }
    }

    pub fn record(&mut self, t: &TransitionRecord) -> Result<()> {
        match self.entries.get_mut(&(t.from, t.action)) {
            Some(slot) => {
                if slot.0 == t.to && slot.1.to_bits() == t.reward.to_bits() {
                    return Ok(());
                }
                if self.deterministic {
                    return Err(Error::DeterminismViolation {
                        state: t.from,
                        action: t.action,
                        cached_to: slot.0,
                        cached_reward: slot.1,
                        observed_to: t.to,
                        observed_reward: t.reward,
                    });
                }
                *slot = (t.to, t.reward);
            }
            None => {
                self.entries.insert((t.from, t.action), (t.to, t.reward));
            }
        }
        Ok(())
    }

    pub fn lookup(&self, s: StateId, a: ActionId) -> Option<(StateId, f64)> {
        self.entries.get(&(s, a)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by key, for reproducible iteration.
    pub fn sorted_entries(&self) -> Vec<TransitionRecord> {
        let mut out: Vec<_> = self
            .entries
            .iter()
            .map(|(&(from, action), &(to, reward))| TransitionRecord {
                from,
                action,
                reward,
                to,
            })
            .collect();
        out.sort_by_key(|t| (t.from, t.action));
        out
    }
}

/// Free-function form of [`TransitionCache::record`].
pub fn record_transition(cache: &mut TransitionCache, t: &TransitionRecord) -> Result<()> {
    cache.record(t)
}
