//! Time Hopping: when to interrupt sequential exploration (trigger), where
//! to continue from (target selection), and the restore itself (hop).
//!
//! The learner inside [`run_time_hopping`] is the unmodified Q-learning loop
//! of [`crate::qlearning`]; hopping only moves the environment.

mod lasso;
mod trigger;

pub use lasso::{build_lasso, greedy_successor, lasso_select_target, random_select_target, Lasso};
pub use trigger::{
    best_case_value, fixed_trigger_on_transition, gamma_trigger_on_transition, threshold_advance,
    threshold_init, TriggerState,
};

use crate::error::{Error, Result};
use crate::mdp::{EnvSnapshot, Environment, QTable, StateId, TransitionCache, TransitionRecord};
use crate::qlearning::{
    q_update, run_rng, select_action, validate_schedule, CheckpointCursor, LearnerConfig,
    RunMetrics, RunOutcome, VisitCounts,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerKind {
    GammaPruning,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectorKind {
    Lasso,
    Random,
}

/// Where the gamma trigger's maximum single-step reward comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RMaxSource {
    Configured(f64),
    /// The environment's exact bound ([`Environment::reward_upper_bound`]).
    Oracle,
    /// Largest reward seen so far times a margin factor `>= 1`, raised
    /// whenever a larger reward shows up.
    ObservedWithMargin(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopperConfig {
    pub trigger: TriggerKind,
    /// Transitions between hops for the fixed trigger.
    pub fixed_period: u64,
    pub selector: SelectorKind,
    pub r_max: RMaxSource,
}

impl Default for HopperConfig {
    fn default() -> Self {
        HopperConfig {
            trigger: TriggerKind::GammaPruning,
            fixed_period: 9,
            selector: SelectorKind::Lasso,
            r_max: RMaxSource::Oracle,
        }
    }
}

impl HopperConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fixed_period == 0 {
            return Err(Error::InvalidConfig(
                "fixed_period must be at least 1".into(),
            ));
        }
        match self.r_max {
            RMaxSource::Configured(r) if !r.is_finite() => Err(Error::InvalidConfig(format!(
                "configured r_max {r} must be finite"
            ))),
            RMaxSource::ObservedWithMargin(f) if !(f >= 1.0 && f.is_finite()) => Err(
                Error::InvalidConfig(format!("r_max margin factor {f} must be >= 1")),
            ),
            _ => Ok(()),
        }
    }
}

/// First-visit snapshot of every state the run has entered.
#[derive(Debug, Clone)]
pub struct SnapshotStore {
    slots: Vec<Option<EnvSnapshot>>,
    known: Vec<StateId>,
}

impl SnapshotStore {
    pub fn new(state_count: usize) -> Self {
        SnapshotStore {
            slots: vec![None; state_count],
            known: Vec::new(),
        }
    }

    /// Stores the environment's snapshot for `s` unless one exists already.
    pub fn record_if_new<E: Environment + ?Sized>(&mut self, s: StateId, env: &E) {
        let slot = &mut self.slots[s.index()];
        if slot.is_none() {
            *slot = Some(env.snapshot());
            self.known.push(s);
        }
    }

    pub fn get(&self, s: StateId) -> Option<&EnvSnapshot> {
        self.slots.get(s.index()).and_then(Option::as_ref)
    }

    /// States with a snapshot, in first-visit order.
    pub fn known(&self) -> &[StateId] {
        &self.known
    }
}

/// Moves the environment to `target` ([`Environment::restore_state`]) and
/// clears the pruning branch. The
/// learner's table, visit counts and transition cache are left alone.
pub fn hop<E: Environment + ?Sized>(
    env: &mut E,
    snapshots: &SnapshotStore,
    target: StateId,
    trigger: Option<&mut TriggerState>,
) -> Result<StateId> {
    let snap = snapshots
        .get(target)
        .ok_or(Error::SnapshotMissing(target))?;
    env.restore_state(snap)?;
    if let Some(ts) = trigger {
        ts.reset();
    }
    Ok(target)
}

enum Trigger {
    Gamma {
        state: TriggerState,
        margin: Option<f64>,
    },
    Fixed {
        counter: u64,
        period: u64,
    },
}

impl Trigger {
    fn new<E: Environment + ?Sized>(cfg: &HopperConfig, env: &E, gamma: f64) -> Result<Self> {
        Ok(match cfg.trigger {
            TriggerKind::Fixed => Trigger::Fixed {
                counter: 0,
                period: cfg.fixed_period,
            },
            TriggerKind::GammaPruning => {
                let (r_max, margin) = match cfg.r_max {
                    RMaxSource::Configured(r) => (r, None),
                    RMaxSource::Oracle => (
                        env.reward_upper_bound().ok_or_else(|| {
                            Error::InvalidConfig(
                                "environment has no exact reward bound; configure r_max".into(),
                            )
                        })?,
                        None,
                    ),
                    RMaxSource::ObservedWithMargin(f) => (0.0, Some(f)),
                };
                Trigger::Gamma {
                    state: TriggerState::new(r_max, gamma)?,
                    margin,
                }
            }
        })
    }

    fn on_transition(&mut self, t: &TransitionRecord, greedy: bool, pre_best: f64) -> Result<bool> {
        match self {
            Trigger::Gamma { state, margin } => {
                if let Some(f) = margin {
                    state.raise_r_max(t.reward * *f);
                }
                state.on_transition(t.from, greedy, pre_best, t.reward)
            }
            Trigger::Fixed { counter, period } => {
                let (fire, next) = fixed_trigger_on_transition(*counter, *period);
                *counter = next;
                Ok(fire)
            }
        }
    }

    fn gamma_state(&mut self) -> Option<&mut TriggerState> {
        match self {
            Trigger::Gamma { state, .. } => Some(state),
            Trigger::Fixed { .. } => None,
        }
    }
}

/// Q-learning with Time Hopping.
///
/// Every transition runs the plain learner step, records the transition,
/// the visit and (on first visit) the state's snapshot, then consults the
/// trigger. When it fires a target is chosen and the environment restored to
/// it. A hop costs one step of the `total_steps` budget and counts as one
/// trigger activation. Checkpoints are keyed on that combined step counter.
pub fn run_time_hopping<E, F>(
    env: &mut E,
    learner: &LearnerConfig,
    hopper: &HopperConfig,
    total_steps: u64,
    checkpoints: &[u64],
    mut evaluator: F,
) -> Result<RunOutcome>
where
    E: Environment + ?Sized,
    F: FnMut(&QTable) -> Result<f64>,
{
    learner.validate()?;
    hopper.validate()?;
    validate_schedule(total_steps, checkpoints)?;

    let state_count = env.state_count();
    let mut rng = run_rng(learner.rng_seed);
    let mut q = QTable::new(state_count, env.action_count());
    let mut visits = VisitCounts::new(state_count);
    let mut cursor = CheckpointCursor::new(checkpoints);
    let mut cache = TransitionCache::new(env.is_deterministic());
    let mut snapshots = SnapshotStore::new(state_count);
    let mut trigger = Trigger::new(hopper, env, learner.gamma)?;

    let initial = env.reset();
    let mut state = initial;
    visits.record(state);
    snapshots.record_if_new(state, env);

    let mut activations = 0u64;
    let mut step = 0u64;
    while step < total_steps {
        let action = select_action(&q, state, learner.epsilon, &mut rng);
        let greedy = q.is_greedy(state, action);
        let pre_best = q.best_value(state);
        let (next, reward) = env.step(action)?;
        let t = TransitionRecord {
            from: state,
            action,
            reward,
            to: next,
        };
        q_update(&mut q, &t, learner);
        cache.record(&t)?;
        visits.record(next);
        snapshots.record_if_new(next, env);
        state = next;
        step += 1;

        let fired = trigger.on_transition(&t, greedy, pre_best)?;
        if fired {
            activations += 1;
        } else if let Some(ts) = trigger.gamma_state() {
            ts.close_if_overtaken(q.best_value(next));
        }
        cursor.observe(step, &q, activations, &mut evaluator)?;

        if fired && step < total_steps {
            let target = match hopper.selector {
                SelectorKind::Lasso => {
                    let lasso = build_lasso(
                        |s, rng| {
                            greedy_successor(&mut cache, env, &mut snapshots, &q, s, rng)
                                .map(|(_, to)| to)
                        },
                        initial,
                        state_count,
                        &mut rng,
                    )?;
                    lasso_select_target(&lasso, &visits, &mut rng)
                }
                SelectorKind::Random => random_select_target(snapshots.known(), &mut rng)?,
            };
            state = hop(env, &snapshots, target, trigger.gamma_state())?;
            step += 1;
            cursor.observe(step, &q, activations, &mut evaluator)?;
        }
    }

    Ok(RunOutcome {
        metrics: RunMetrics {
            checkpoints: cursor.records,
            total_steps,
            visits,
            activations,
        },
        q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crawler::{Crawler, CrawlerConfig};
    use crate::mdp::ActionId;
    use crate::qlearning::run_conventional;

    #[test]
    fn hop_restores_and_preserves_knowledge() {
        let mut env = Crawler::with_r_max(CrawlerConfig::reduced(), 1.0);
        let mut store = SnapshotStore::new(env.state_count());
        let s0 = env.reset();
        store.record_if_new(s0, &env);
        let (s1, _) = env.step(ActionId(12)).unwrap();
        store.record_if_new(s1, &env);
        let (s2, _) = env.step(ActionId(70)).unwrap();
        store.record_if_new(s2, &env);
        assert_eq!(store.known(), &[s0, s1, s2]);

        let mut ts = TriggerState::new(1.0, 0.9).unwrap();
        ts.open_branch(s0, 3.0);
        assert_eq!(hop(&mut env, &store, s1, Some(&mut ts)).unwrap(), s1);
        assert_eq!(env.current_state(), s1);
        assert!(!ts.branch_active());
        assert_eq!(
            hop(&mut env, &store, StateId(1), None),
            Err(Error::SnapshotMissing(StateId(1)))
        );
    }

    #[test]
    fn never_firing_trigger_is_transparent() {
        let learner = LearnerConfig {
            rng_seed: 42,
            ..LearnerConfig::default()
        };
        let hopper = HopperConfig {
            trigger: TriggerKind::Fixed,
            fixed_period: 1_000_000_000,
            ..HopperConfig::default()
        };
        let cps = [100, 500, 2000];
        let eval = |q: &QTable| Ok(q.max_value());
        let mut a = Crawler::with_r_max(CrawlerConfig::reduced(), 1.0);
        let mut b = a.clone();
        let plain = run_conventional(&mut a, &learner, 2000, &cps, eval).unwrap();
        let hopped = run_time_hopping(&mut b, &learner, &hopper, 2000, &cps, eval).unwrap();
        assert_eq!(plain, hopped);
        assert_eq!(plain.q.to_bytes(), hopped.q.to_bytes());
    }

    #[test]
    fn fixed_trigger_hop_accounting() {
        let learner = LearnerConfig::default();
        let hopper = HopperConfig {
            trigger: TriggerKind::Fixed,
            fixed_period: 9,
            ..HopperConfig::default()
        };
        let mut env = Crawler::with_r_max(CrawlerConfig::reduced(), 1.0);
        let out =
            run_time_hopping(&mut env, &learner, &hopper, 1000, &[10, 1000], |_| Ok(0.0)).unwrap();
        // one hop per 9 transitions, each hop taking a step: 100 blocks of 10
        assert_eq!(out.metrics.activations, 100);
        assert_eq!(out.metrics.checkpoints[0].activations, 1);
        // visits count reset + transitions only
        assert_eq!(out.metrics.visits.total(), 1 + 900);
    }

    #[test]
    fn oracle_bound_required_for_gamma_trigger() {
        struct NoBound(crate::toy::SelfLoop);
        impl Environment for NoBound {
            fn state_count(&self) -> usize {
                1
            }
            fn action_count(&self) -> usize {
                1
            }
            fn reset(&mut self) -> StateId {
                self.0.reset()
            }
            fn current_state(&self) -> StateId {
                self.0.current_state()
            }
            fn step(&mut self, a: ActionId) -> Result<(StateId, f64)> {
                self.0.step(a)
            }
            fn snapshot(&self) -> EnvSnapshot {
                self.0.snapshot()
            }
            fn restore(&mut self, s: &EnvSnapshot) -> Result<()> {
                self.0.restore(s)
            }
            fn is_deterministic(&self) -> bool {
                true
            }
            fn reward_upper_bound(&self) -> Option<f64> {
                None
            }
        }
        let mut env = NoBound(crate::toy::SelfLoop::new(1.0));
        let res = run_time_hopping(
            &mut env,
            &LearnerConfig::default(),
            &HopperConfig::default(),
            10,
            &[],
            |_| Ok(0.0),
        );
        assert!(matches!(res, Err(Error::InvalidConfig(_))));

        let configured = HopperConfig {
            r_max: RMaxSource::Configured(0.5),
            ..HopperConfig::default()
        };
        let res = run_time_hopping(
            &mut env,
            &LearnerConfig::default(),
            &configured,
            10,
            &[],
            |_| Ok(0.0),
        );
        assert!(matches!(res, Err(Error::RMaxViolated { .. })));

        let observed = HopperConfig {
            r_max: RMaxSource::ObservedWithMargin(1.5),
            ..HopperConfig::default()
        };
        run_time_hopping(
            &mut env,
            &LearnerConfig::default(),
            &observed,
            10,
            &[],
            |_| Ok(0.0),
        )
        .unwrap();
    }

    #[test]
    fn config_validation() {
        let zero = HopperConfig {
            fixed_period: 0,
            ..HopperConfig::default()
        };
        assert!(zero.validate().is_err());
        let margin = HopperConfig {
            r_max: RMaxSource::ObservedWithMargin(0.5),
            ..HopperConfig::default()
        };
        assert!(margin.validate().is_err());
    }
}
