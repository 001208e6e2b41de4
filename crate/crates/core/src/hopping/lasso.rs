//! Hop target selection: the greedy-policy lasso and the uniform baseline.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hopping::SnapshotStore;
use crate::mdp::{ActionId, Environment, QTable, StateId, TransitionCache, TransitionRecord};
use crate::qlearning::{random_greedy_action, VisitCounts};

/// Greedy trajectory from the initial state: a chain that ends by re-entering
/// one of its own states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lasso {
    pub states: Vec<StateId>,
    /// Index in `states` where the closing cycle starts.
    pub cycle_start: usize,
    /// Construction hit `max_len` before closing a cycle.
    pub truncated: bool,
}

impl Lasso {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn cycle(&self) -> &[StateId] {
        &self.states[self.cycle_start..]
    }

    pub fn contains(&self, s: StateId) -> bool {
        self.states.contains(&s)
    }
}

/// Picks one of `s`'s greedy actions at random and reports where it leads.
///
/// Cached transitions are answered directly. On a miss the environment is
/// put into `s`'s stored snapshot, stepped once, and put back where it was;
/// the observed transition is cached and the successor's snapshot kept if it
/// is new.
pub fn greedy_successor<E, R>(
    cache: &mut TransitionCache,
    env: &mut E,
    snapshots: &mut SnapshotStore,
    q: &QTable,
    s: StateId,
    rng: &mut R,
) -> Result<(ActionId, StateId)>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let action = random_greedy_action(q, s, rng);
    if let Some((to, _)) = cache.lookup(s, action) {
        return Ok((action, to));
    }
    let snap = snapshots.get(s).ok_or(Error::SnapshotMissing(s))?;
    let caller = env.snapshot();
    env.restore(snap)?;
    let stepped = env.step(action);
    if let Ok((to, _)) = stepped {
        snapshots.record_if_new(to, env);
    }
    env.restore(&caller)?;
    let (to, reward) = stepped?;
    cache.record(&TransitionRecord {
        from: s,
        action,
        reward,
        to,
    })?;
    Ok((action, to))
}

/// Follows `successor` from `initial` until a state repeats or `max_len`
/// states have been collected.
pub fn build_lasso<F, R>(
    mut successor: F,
    initial: StateId,
    max_len: usize,
    rng: &mut R,
) -> Result<Lasso>
where
    F: FnMut(StateId, &mut R) -> Result<StateId>,
    R: Rng + ?Sized,
{
    if max_len == 0 {
        return Err(Error::InvalidConfig(
            "lasso max_len must be at least 1".into(),
        ));
    }
    let mut states = vec![initial];
    let mut position = HashMap::from([(initial, 0usize)]);
    loop {
        let last = *states.last().unwrap();
        let next = successor(last, rng)?;
        if let Some(&i) = position.get(&next) {
            return Ok(Lasso {
                states,
                cycle_start: i,
                truncated: false,
            });
        }
        if states.len() == max_len {
            let cycle_start = states.len() - 1;
            return Ok(Lasso {
                states,
                cycle_start,
                truncated: true,
            });
        }
        position.insert(next, states.len());
        states.push(next);
    }
}

/// Uniform choice among the least-visited lasso states.
pub fn lasso_select_target<R: Rng + ?Sized>(
    lasso: &Lasso,
    visits: &VisitCounts,
    rng: &mut R,
) -> StateId {
    let fewest = lasso
        .states
        .iter()
        .map(|&s| visits.get(s))
        .min()
        .expect("a lasso holds at least the initial state");
    let ties = lasso
        .states
        .iter()
        .filter(|&&s| visits.get(s) == fewest)
        .count();
    let pick = if ties == 1 { 0 } else { rng.gen_range(0..ties) };
    *lasso
        .states
        .iter()
        .filter(|&&s| visits.get(s) == fewest)
        .nth(pick)
        .unwrap()
}

/// Uniform choice among every state seen so far.
pub fn random_select_target<R: Rng + ?Sized>(known: &[StateId], rng: &mut R) -> Result<StateId> {
    match known.len() {
        0 => Err(Error::EmptyKnownSet),
        1 => Ok(known[0]),
        n => Ok(known[rng.gen_range(0..n)]),
    }
}
