use crate::error::{Error, Result};
use crate::mdp::{QTable, StateId};
use crate::oracles::ModelGraph;

/// Steady-state speed of the greedy policy: roll out from `initial` with
/// lowest-id tie-breaking until a state repeats, then average the reward
/// over the closing cycle. Stochastic models follow their most probable
/// outcome.
pub fn evaluate_policy(
    q: &QTable,
    model: &ModelGraph,
    initial: StateId,
    max_rollout: usize,
) -> Result<f64> {
    let mut first_seen = vec![usize::MAX; model.state_count()];
    let mut rewards = Vec::new();
    let mut s = initial;
    for t in 0..max_rollout {
        if first_seen[s.index()] != usize::MAX {
            let cycle = &rewards[first_seen[s.index()]..t];
            return Ok(cycle.iter().sum::<f64>() / cycle.len() as f64);
        }
        first_seen[s.index()] = t;
        let (next, r) = model.successor(s, q.first_greedy_action(s));
        rewards.push(r);
        s = next;
    }
    Err(Error::NoCycleWithinBudget(max_rollout))
}

/// Best values of the visited states, largest first.
pub fn sorted_q_curve(q: &QTable, visited: &[StateId]) -> Vec<f64> {
    let mut curve: Vec<f64> = visited.iter().map(|&s| q.best_value(s)).collect();
    curve.sort_by(|a, b| b.total_cmp(a));
    curve
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::ActionId;

    fn det(n: usize, m: usize, edges: &[(u32, f64)]) -> ModelGraph {
        ModelGraph::deterministic(n, m, edges.iter().map(|&(t, r)| (StateId(t), r)).collect())
    }

    #[test]
    fn two_cycle_speed() {
        // 0 -> 1 -> 2 -> 1, rewards 5, 0.2, 0.4
        let g = det(3, 1, &[(1, 5.0), (2, 0.2), (1, 0.4)]);
        let q = QTable::new(3, 1);
        let v = evaluate_policy(&q, &g, StateId(0), 4).unwrap();
        assert!((v - 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_self_loop() {
        let g = det(1, 2, &[(0, 0.0), (0, 1.0)]);
        let mut q = QTable::new(1, 2);
        assert_eq!(evaluate_policy(&q, &g, StateId(0), 2).unwrap(), 0.0);
        q.set(StateId(0), ActionId(1), 1.0);
        assert_eq!(evaluate_policy(&q, &g, StateId(0), 2).unwrap(), 1.0);
    }

    #[test]
    fn budget_too_small() {
        let g = det(3, 1, &[(1, 0.0), (2, 0.0), (0, 0.0)]);
        assert_eq!(
            evaluate_policy(&QTable::new(3, 1), &g, StateId(0), 3),
            Err(Error::NoCycleWithinBudget(3))
        );
    }

    #[test]
    fn q_curve_examples() {
        let mut q = QTable::new(3, 1);
        assert!(sorted_q_curve(&q, &[]).is_empty());
        q.set(StateId(0), ActionId(0), 0.2);
        q.set(StateId(1), ActionId(0), 0.9);
        q.set(StateId(2), ActionId(0), 0.5);
        let all = [StateId(0), StateId(1), StateId(2)];
        assert_eq!(sorted_q_curve(&q, &all), vec![0.9, 0.5, 0.2]);
    }
}
