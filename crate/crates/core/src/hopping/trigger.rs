//! Hopping triggers: gamma pruning and the fixed-period baseline.

use crate::error::{Error, Result};
use crate::mdp::StateId;

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidGamma(gamma))
    }
}

/// Discounted value of receiving `r_max` forever: `r_max / (1 − γ)`.
pub fn best_case_value(r_max: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(r_max / (1.0 - gamma))
}

/// Threshold at the state where a branch leaves the greedy policy: the
/// state's current best value.
pub fn threshold_init(q: &crate::mdp::QTable, branch_state: StateId) -> f64 {
    q.best_value(branch_state)
}

/// Threshold one transition further along a branch: `(t − r) / γ`.
pub fn threshold_advance(t_prev: f64, reward: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok((t_prev - reward) / gamma)
}

/// Gamma-pruning trigger state.
///
/// A branch opens when the learner takes a non-greedy action. From then on
/// every transition raises the value the branch would need to reach to
/// overturn the greedy choice at the branch state. Once that requirement
/// exceeds what a perpetual maximal reward could deliver, the branch is
/// hopeless and the trigger fires. If instead the state reached along the
/// branch already holds a best value at or above the threshold, the branch
/// has caught up with the best policy and is closed without firing
/// ([`TriggerState::close_if_overtaken`]).
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerState {
    branch_state: Option<StateId>,
    threshold: f64,
    r_max: f64,
    gamma: f64,
}

impl TriggerState {
    pub fn new(r_max: f64, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !r_max.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "r_max = {r_max} must be finite"
            )));
        }
        Ok(TriggerState {
            branch_state: None,
            threshold: 0.0,
            r_max,
            gamma,
        })
    }

    pub fn branch_active(&self) -> bool {
        self.branch_state.is_some()
    }

    pub fn branch_state(&self) -> Option<StateId> {
        self.branch_state
    }

    /// Current threshold; meaningful only while a branch is active.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub(crate) fn raise_r_max(&mut self, r_max: f64) {
        self.r_max = self.r_max.max(r_max);
    }

    /// Opens a branch at `state` with the given starting threshold.
    pub fn open_branch(&mut self, state: StateId, threshold: f64) {
        self.branch_state = Some(state);
        self.threshold = threshold;
    }

    /// Clears the active branch.
    pub fn reset(&mut self) {
        self.branch_state = None;
        self.threshold = 0.0;
    }

    /// Feeds one transition taken from `from`. `pre_transition_q_best` is
    /// `from`'s best value read before the learner's update. Returns whether
    /// the trigger fires.
    pub fn on_transition(
        &mut self,
        from: StateId,
        chosen_was_greedy: bool,
        pre_transition_q_best: f64,
        reward: f64,
    ) -> Result<bool> {
        if reward > self.r_max {
            return Err(Error::RMaxViolated {
                reward,
                r_max: self.r_max,
            });
        }
        if !self.branch_active() {
            if chosen_was_greedy {
                return Ok(false);
            }
            self.open_branch(from, pre_transition_q_best);
        }
        self.threshold = threshold_advance(self.threshold, reward, self.gamma)?;
        Ok(self.threshold > best_case_value(self.r_max, self.gamma)?)
    }

    /// Closes the active branch when `q_best_reached`, the best value of the
    /// state just entered, meets its threshold. Returns whether it closed.
    ///
    /// Without this a branch whose threshold falls below `r / (1 − γ)`
    /// drifts to −∞ and the trigger never fires again.
    pub fn close_if_overtaken(&mut self, q_best_reached: f64) -> bool {
        if self.branch_active() && q_best_reached >= self.threshold {
            self.reset();
            true
        } else {
            false
        }
    }
}

/// Free-function form of [`TriggerState::on_transition`], anchored at an
/// unspecified state.
pub fn gamma_trigger_on_transition(
    ts: &mut TriggerState,
    chosen_was_greedy: bool,
    pre_transition_q_best: f64,
    reward: f64,
) -> Result<bool> {
    let from = ts.branch_state.unwrap_or(StateId(0));
    ts.on_transition(from, chosen_was_greedy, pre_transition_q_best, reward)
}

/// Counts transitions and fires on every `fixed_period`-th one. Returns the
/// firing decision and the new counter.
pub fn fixed_trigger_on_transition(counter: u64, fixed_period: u64) -> (bool, u64) {
    let counter = counter + 1;
    if counter >= fixed_period {
        (true, 0)
    } else {
        (false, counter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::QTable;

    #[test]
    fn best_case_examples() {
        assert_eq!(best_case_value(1.0, 0.9).unwrap(), 1.0 / (1.0 - 0.9));
        assert!((best_case_value(1.0, 0.9).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(best_case_value(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(best_case_value(2.0, 0.5).unwrap(), 4.0);
        assert_eq!(best_case_value(1.0, 1.0), Err(Error::InvalidGamma(1.0)));
        assert_eq!(best_case_value(1.0, 0.0), Err(Error::InvalidGamma(0.0)));
    }

    #[test]
    fn threshold_init_examples() {
        let s = StateId(0);
        assert_eq!(threshold_init(&QTable::new(1, 2), s), 0.0);
        let mut q = QTable::new(1, 2);
        q.row_mut(s).copy_from_slice(&[1.0, 3.5]);
        assert_eq!(threshold_init(&q, s), 3.5);
        q.row_mut(s).copy_from_slice(&[-2.0, -1.0]);
        assert_eq!(threshold_init(&q, s), -1.0);
    }

    #[test]
    fn threshold_advance_examples() {
        assert_eq!(threshold_advance(5.0, 1.0, 0.5).unwrap(), 8.0);
        let best = best_case_value(1.0, 0.9).unwrap();
        assert!((threshold_advance(best, 1.0, 0.9).unwrap() - best).abs() < 1e-12);
        assert_eq!(threshold_advance(0.0, 0.0, 0.3).unwrap(), 0.0);
        assert!(threshold_advance(1.0, 0.0, 1.5).is_err());
    }

    #[test]
    fn greedy_step_without_branch_is_ignored() {
        let mut ts = TriggerState::new(1.0, 0.9).unwrap();
        assert!(!ts.on_transition(StateId(3), true, 0.0, 0.5).unwrap());
        assert!(!ts.branch_active());
    }

    #[test]
    fn exploratory_step_opens_a_branch() {
        let mut ts = TriggerState::new(1.0, 0.9).unwrap();
        assert!(!ts.on_transition(StateId(3), false, 0.0, 1.0).unwrap());
        assert!(ts.branch_active());
        assert_eq!(ts.branch_state(), Some(StateId(3)));
        assert!((ts.threshold() + 1.0 / 0.9).abs() < 1e-12);
    }

    #[test]
    fn zero_reward_at_the_fixed_point_fires() {
        let mut ts = TriggerState::new(1.0, 0.9).unwrap();
        ts.open_branch(StateId(0), 10.0);
        assert!(ts.on_transition(StateId(1), true, 0.0, 0.0).unwrap());
        assert!((ts.threshold() - 100.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn equality_does_not_fire() {
        let mut ts = TriggerState::new(1.0, 0.5).unwrap();
        ts.open_branch(StateId(0), 2.0);
        // (2 - 1) / 0.5 = 2 = 1 / (1 - 0.5)
        assert!(!ts.on_transition(StateId(1), true, 0.0, 1.0).unwrap());
    }

    #[test]
    fn reward_above_bound_is_an_error() {
        let mut ts = TriggerState::new(1.0, 0.9).unwrap();
        assert_eq!(
            ts.on_transition(StateId(0), true, 0.0, 1.5),
            Err(Error::RMaxViolated {
                reward: 1.5,
                r_max: 1.0
            })
        );
    }

    #[test]
    fn reset_clears_the_branch() {
        let mut ts = TriggerState::new(1.0, 0.9).unwrap();
        ts.on_transition(StateId(0), false, 2.0, 0.0).unwrap();
        ts.reset();
        assert!(!ts.branch_active());
    }

    #[test]
    fn caught_up_branch_closes() {
        let mut ts = TriggerState::new(1.0, 0.9).unwrap();
        assert!(!ts.close_if_overtaken(5.0));
        ts.on_transition(StateId(2), false, 3.0, 0.3).unwrap();
        assert!((ts.threshold() - 3.0).abs() < 1e-12);
        assert!(!ts.close_if_overtaken(2.9));
        assert!(ts.branch_active());
        assert!(ts.close_if_overtaken(3.0));
        assert!(!ts.branch_active());
    }

    #[test]
    fn fixed_period_nine() {
        let mut counter = 0;
        for _ in 1..=8 {
            let (fire, c) = fixed_trigger_on_transition(counter, 9);
            assert!(!fire);
            counter = c;
        }
        assert_eq!(fixed_trigger_on_transition(counter, 9), (true, 0));
    }

    #[test]
    fn fixed_period_one_fires_every_time() {
        let mut counter = 0;
        for _ in 0..5 {
            let (fire, c) = fixed_trigger_on_transition(counter, 1);
            assert!(fire);
            assert_eq!(c, 0);
            counter = c;
        }
    }

    proptest::proptest! {
        #[test]
        fn best_case_is_a_fixed_point(r in -5.0f64..5.0, gamma in 0.01f64..0.99) {
            let b = best_case_value(r, gamma).unwrap();
            proptest::prop_assert!((threshold_advance(b, r, gamma).unwrap() - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }
}
