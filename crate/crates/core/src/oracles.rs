//! Exact ground truth over a materialised transition model: optimal
//! Q-values, the best reachable steady-state reward rate, and the reward bound.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::mdp::{ActionId, QTable, StateId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub prob: f64,
    pub to: StateId,
    pub reward: f64,
}

/// Total transition model: every `(state, action)` pair has at least one
/// outcome. Stored flat, `offsets[s * A + a]..offsets[s * A + a + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    state_count: usize,
    action_count: usize,
    offsets: Vec<u32>,
    outcomes: Vec<Outcome>,
    deterministic: bool,
}

impl ModelGraph {
    /// `table[s * action_count + a] = (next, reward)`.
    pub fn deterministic(
        state_count: usize,
        action_count: usize,
        table: Vec<(StateId, f64)>,
    ) -> Self {
        assert_eq!(table.len(), state_count * action_count);
        assert!(table.iter().all(|(to, _)| to.index() < state_count));
        let offsets = (0..=table.len() as u32).collect();
        let outcomes = table
            .into_iter()
            .map(|(to, reward)| Outcome {
                prob: 1.0,
                to,
                reward,
            })
            .collect();
        ModelGraph {
            state_count,
            action_count,
            offsets,
            outcomes,
            deterministic: true,
        }
    }

    /// One outcome list per `(state, action)` pair, probabilities summing to 1.
    pub fn stochastic(
        state_count: usize,
        action_count: usize,
        pairs: Vec<Vec<Outcome>>,
    ) -> Result<Self> {
        if pairs.len() != state_count * action_count {
            return Err(Error::DimensionMismatch {
                left: pairs.len(),
                right: state_count * action_count,
            });
        }
        let mut offsets = Vec::with_capacity(pairs.len() + 1);
        let mut outcomes = Vec::new();
        let mut deterministic = true;
        offsets.push(0);
        for (i, list) in pairs.into_iter().enumerate() {
            let total: f64 = list.iter().map(|o| o.prob).sum();
            if list.is_empty() || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "outcome probabilities of pair {i} sum to {total}"
                )));
            }
            for o in &list {
                if o.to.index() >= state_count
                    || o.prob.is_nan()
                    || o.prob <= 0.0
                    || !o.reward.is_finite()
                {
                    return Err(Error::InvalidConfig(format!(
                        "bad outcome {o:?} in pair {i}"
                    )));
                }
            }
            deterministic &= list.len() == 1;
            outcomes.extend(list);
            offsets.push(outcomes.len() as u32);
        }
        Ok(ModelGraph {
            state_count,
            action_count,
            offsets,
            outcomes,
            deterministic,
        })
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    #[inline]
    pub fn outcomes(&self, s: StateId, a: ActionId) -> &[Outcome] {
        let pair = s.index() * self.action_count + a.index();
        &self.outcomes[self.offsets[pair] as usize..self.offsets[pair + 1] as usize]
    }

    /// The most probable outcome (lowest successor id on ties). The only
    /// outcome for deterministic models.
    #[inline]
    pub fn successor(&self, s: StateId, a: ActionId) -> (StateId, f64) {
        let outs = self.outcomes(s, a);
        let mut best = &outs[0];
        for o in &outs[1..] {
            if o.prob > best.prob || (o.prob == best.prob && o.to < best.to) {
                best = o;
            }
        }
        (best.to, best.reward)
    }

    /// States reachable from `initial` through outcomes of positive probability.
    pub fn reachable_from(&self, initial: StateId) -> Vec<bool> {
        let mut seen = vec![false; self.state_count];
        let mut queue = VecDeque::from([initial]);
        seen[initial.index()] = true;
        while let Some(s) = queue.pop_front() {
            for a in 0..self.action_count {
                for o in self.outcomes(s, ActionId::new(a)) {
                    if !seen[o.to.index()] {
                        seen[o.to.index()] = true;
                        queue.push_back(o.to);
                    }
                }
            }
        }
        seen
    }
}

/// Largest reward any outcome can produce.
pub fn brute_force_r_max(g: &ModelGraph) -> f64 {
    g.outcomes
        .iter()
        .map(|o| o.reward)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Repeated Bellman optimality backups from `Q = 0` until the max-norm
/// change drops below `tol`.
pub fn value_iteration(g: &ModelGraph, gamma: f64, tol: f64, max_iters: usize) -> Result<QTable> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidGamma(gamma));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "tolerance {tol} must be positive"
        )));
    }
    let (n, m) = (g.state_count, g.action_count);
    let mut q = QTable::new(n, m);
    let mut best = vec![0.0; n];
    let mut delta = f64::INFINITY;
    for _ in 0..max_iters {
        delta = 0.0;
        let mut next = QTable::new(n, m);
        for s in 0..n {
            let sid = StateId::new(s);
            for a in 0..m {
                let aid = ActionId::new(a);
                let value: f64 = g
                    .outcomes(sid, aid)
                    .iter()
                    .map(|o| o.prob * (o.reward + gamma * best[o.to.index()]))
                    .sum();
                delta = delta.max((value - q.get(sid, aid)).abs());
                next.set(sid, aid, value);
            }
        }
        q = next;
        for (s, b) in best.iter_mut().enumerate() {
            *b = q.best_value(StateId::new(s));
        }
        if delta < tol {
            return Ok(q);
        }
    }
    Err(Error::NotConverged {
        iterations: max_iters,
        delta,
    })
}

/// Largest Bellman residual of `q` under the model.
pub fn bellman_residual(g: &ModelGraph, q: &QTable, gamma: f64) -> f64 {
    let mut worst = 0.0_f64;
    for s in 0..g.state_count {
        let sid = StateId::new(s);
        for a in 0..g.action_count {
            let aid = ActionId::new(a);
            let backup: f64 = g
                .outcomes(sid, aid)
                .iter()
                .map(|o| o.prob * (o.reward + gamma * q.best_value(o.to)))
                .sum();
            worst = worst.max((backup - q.get(sid, aid)).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanCycle {
    pub mean_reward: f64,
    /// Closed walk: the successor of the last edge is the first edge's state.
    pub cycle: Vec<(StateId, ActionId)>,
}

impl MeanCycle {
    pub fn len(&self) -> usize {
        self.cycle.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycle.is_empty()
    }
}

/// Karp's maximum mean-weight cycle over the support graph restricted to
/// states reachable from `initial`. Stochastic outcomes count as separate
/// edges.
///
/// `best[k][v]` is the heaviest walk of exactly `k` edges from `initial` to
/// `v`; the optimum is `max_v min_k (best[n][v] - best[k][v]) / (n - k)`.
/// Memory is `O(n²)` in the number of reachable states. The returned witness
/// is a shortest cycle attaining the optimum.
pub fn max_mean_cycle(g: &ModelGraph, initial: StateId) -> MeanCycle {
    let reachable = g.reachable_from(initial);
    let nodes: Vec<usize> = (0..g.state_count).filter(|&s| reachable[s]).collect();
    let mut local = vec![usize::MAX; g.state_count];
    for (i, &s) in nodes.iter().enumerate() {
        local[s] = i;
    }
    let n = nodes.len();

    // edge list in local indices: (from, to, reward, action)
    let mut edges = Vec::new();
    for (i, &s) in nodes.iter().enumerate() {
        for a in 0..g.action_count {
            for o in g.outcomes(StateId::new(s), ActionId::new(a)) {
                edges.push((i, local[o.to.index()], o.reward, a));
            }
        }
    }

    let neg = f64::NEG_INFINITY;
    let mut best = vec![neg; (n + 1) * n];
    let mut pred = vec![u32::MAX; (n + 1) * n];
    best[local[initial.index()]] = 0.0;
    for k in 1..=n {
        let (prev, cur) = best.split_at_mut(k * n);
        let prev = &prev[(k - 1) * n..];
        let cur = &mut cur[..n];
        for (e, &(u, v, w, _)) in edges.iter().enumerate() {
            if prev[u] == neg {
                continue;
            }
            let cand = prev[u] + w;
            if cand > cur[v] {
                cur[v] = cand;
                pred[k * n + v] = e as u32;
            }
        }
    }

    let mut lambda = neg;
    let mut arg = usize::MAX;
    for v in 0..n {
        let dn = best[n * n + v];
        if dn == neg {
            continue;
        }
        let mut worst = f64::INFINITY;
        for k in 0..n {
            let dk = best[k * n + v];
            if dk == neg {
                continue;
            }
            worst = worst.min((dn - dk) / (n - k) as f64);
        }
        if worst > lambda {
            lambda = worst;
            arg = v;
        }
    }

    let cyc = shortest_tight_cycle(&edges, &best, n, lambda)
        .unwrap_or_else(|| walk_witness(&edges, &pred, n, arg));
    let mean = cyc.iter().map(|&e| edges[e].2).sum::<f64>() / cyc.len() as f64;
    debug_assert!((mean - lambda).abs() <= 1e-9 * (1.0 + lambda.abs()));
    MeanCycle {
        mean_reward: mean,
        cycle: cyc
            .iter()
            .map(|&e| (StateId::new(nodes[edges[e].0]), ActionId::new(edges[e].3)))
            .collect(),
    }
}

type KarpEdge = (usize, usize, f64, usize);

/// Shortest optimal cycle. With potentials `h(v) = max_k best[k][v] − kλ`
/// every edge satisfies `h(u) + w − λ ≤ h(v)`; the cycles made only of edges
/// meeting that with equality are exactly the optimal ones, so a BFS per
/// node over those edges finds the shortest. Returns `None` if rounding
/// leaves no tight cycle with mean `λ`.
fn shortest_tight_cycle(
    edges: &[KarpEdge],
    best: &[f64],
    n: usize,
    lambda: f64,
) -> Option<Vec<usize>> {
    let h: Vec<f64> = (0..n)
        .map(|v| {
            (0..=n)
                .map(|k| best[k * n + v] - k as f64 * lambda)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let scale = 1.0
        + lambda.abs()
        + h.iter()
            .filter(|x| x.is_finite())
            .fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-9 * scale;
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, &(u, v, w, _)) in edges.iter().enumerate() {
        if h[u].is_finite() && (h[u] + w - lambda - h[v]).abs() <= tol {
            out[u].push(e);
        }
    }

    let mut shortest: Option<Vec<usize>> = None;
    let mut via = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    for root in 0..n {
        if out[root].is_empty() {
            continue;
        }
        via.iter_mut().for_each(|x| *x = usize::MAX);
        queue.clear();
        queue.push_back((root, 0usize));
        let mut closing = None;
        'bfs: while let Some((u, depth)) = queue.pop_front() {
            if shortest.as_ref().is_some_and(|c| depth + 1 >= c.len()) {
                break;
            }
            for &e in &out[u] {
                let v = edges[e].1;
                if v == root {
                    closing = Some(e);
                    break 'bfs;
                }
                if via[v] == usize::MAX {
                    via[v] = e;
                    queue.push_back((v, depth + 1));
                }
            }
        }
        if let Some(last) = closing {
            let mut cyc = vec![last];
            let mut u = edges[last].0;
            while u != root {
                cyc.push(via[u]);
                u = edges[via[u]].0;
            }
            cyc.reverse();
            let mean = cyc.iter().map(|&e| edges[e].2).sum::<f64>() / cyc.len() as f64;
            if (mean - lambda).abs() <= 1e-9 * (1.0 + lambda.abs()) {
                shortest = Some(cyc);
            }
        }
    }
    shortest
}

/// Fallback witness: the best cycle on the `n`-edge optimal walk into `arg`.
fn walk_witness(edges: &[KarpEdge], pred: &[u32], n: usize, arg: usize) -> Vec<usize> {
    let mut walk = Vec::with_capacity(n);
    let mut v = arg;
    for k in (1..=n).rev() {
        let e = pred[k * n + v] as usize;
        walk.push(e);
        v = edges[e].0;
    }
    walk.reverse();
    let end = edges[*walk.last().unwrap()].1;
    let mut nodes: Vec<usize> = walk.iter().map(|&e| edges[e].0).collect();
    nodes.push(end);

    let mut witness: Option<(f64, Vec<usize>)> = None;
    let mut last_seen = vec![usize::MAX; n];
    for (i, &u) in nodes.iter().enumerate() {
        if last_seen[u] != usize::MAX {
            let cyc = &walk[last_seen[u]..i];
            let mean = cyc.iter().map(|&e| edges[e].2).sum::<f64>() / cyc.len() as f64;
            if witness.as_ref().is_none_or(|(m, _)| mean > *m) {
                witness = Some((mean, cyc.to_vec()));
            }
        }
        last_seen[u] = i;
    }
    witness
        .expect("an n-edge walk over n nodes repeats a node")
        .1
}

/// Optimal long-run reward per step from `initial` on a deterministic model,
/// by Howard-style policy iteration on gain and bias.
///
/// Independent of [`max_mean_cycle`]; used to cross-check it.
pub fn optimal_gain(g: &ModelGraph, initial: StateId) -> Result<f64> {
    if !g.is_deterministic() {
        return Err(Error::InvalidConfig(
            "policy-iteration gain needs a deterministic model".into(),
        ));
    }
    let reachable = g.reachable_from(initial);
    let n = g.state_count;
    let m = g.action_count;
    let succ = |s: usize, a: usize| g.successor(StateId::new(s), ActionId::new(a));

    let mut policy = vec![0usize; n];
    let mut gain = vec![0.0; n];
    let mut bias = vec![0.0; n];
    const EPS: f64 = 1e-12;

    for _ in 0..10_000 {
        evaluate_policy_gain(n, &reachable, &policy, &succ, &mut gain, &mut bias);

        // gain improvement
        let mut changed = false;
        for s in (0..n).filter(|&s| reachable[s]) {
            let mut best_a = policy[s];
            let mut best_gain = gain[succ(s, best_a).0.index()];
            for a in 0..m {
                let gt = gain[succ(s, a).0.index()];
                if gt > best_gain + EPS {
                    best_gain = gt;
                    best_a = a;
                }
            }
            if best_a != policy[s] {
                policy[s] = best_a;
                changed = true;
            }
        }
        if changed {
            continue;
        }
        // bias improvement among gain-preserving actions
        for s in (0..n).filter(|&s| reachable[s]) {
            let current = {
                let (t, r) = succ(s, policy[s]);
                r - gain[s] + bias[t.index()]
            };
            let mut best_a = policy[s];
            let mut best_val = current;
            for a in 0..m {
                let (t, r) = succ(s, a);
                if (gain[t.index()] - gain[s]).abs() > EPS {
                    continue;
                }
                let val = r - gain[s] + bias[t.index()];
                if val > best_val + 1e-10 {
                    best_val = val;
                    best_a = a;
                }
            }
            if best_a != policy[s] {
                policy[s] = best_a;
                changed = true;
            }
        }
        if !changed {
            return Ok(gain[initial.index()]);
        }
    }
    Err(Error::NotConverged {
        iterations: 10_000,
        delta: f64::NAN,
    })
}

/// Gain and bias of a deterministic stationary policy. Each state's path
/// ends in exactly one cycle; the cycle's mean is the gain and the bias is
/// pinned to zero at the cycle's first-found state.
fn evaluate_policy_gain<F>(
    n: usize,
    active: &[bool],
    policy: &[usize],
    succ: &F,
    gain: &mut [f64],
    bias: &mut [f64],
) where
    F: Fn(usize, usize) -> (StateId, f64),
{
    const UNSEEN: u8 = 0;
    const ON_PATH: u8 = 1;
    const DONE: u8 = 2;
    let mut mark = vec![UNSEEN; n];
    let mut path = Vec::new();
    for start in (0..n).filter(|&s| active[s]) {
        if mark[start] == DONE {
            continue;
        }
        path.clear();
        let mut s = start;
        while mark[s] == UNSEEN {
            mark[s] = ON_PATH;
            path.push(s);
            s = succ(s, policy[s]).0.index();
        }
        if mark[s] == ON_PATH {
            // new cycle starting at s
            let pos = path.iter().position(|&p| p == s).unwrap();
            let cycle = &path[pos..];
            let total: f64 = cycle.iter().map(|&c| succ(c, policy[c]).1).sum();
            let g = total / cycle.len() as f64;
            gain[s] = g;
            bias[s] = 0.0;
            // walk the cycle backwards from its closing edge
            for &c in cycle[1..].iter().rev() {
                let (t, r) = succ(c, policy[c]);
                gain[c] = g;
                bias[c] = r - g + bias[t.index()];
                mark[c] = DONE;
            }
            mark[s] = DONE;
            path.truncate(pos);
        }
        for &p in path.iter().rev() {
            let (t, r) = succ(p, policy[p]);
            gain[p] = gain[t.index()];
            bias[p] = r - gain[p] + bias[t.index()];
            mark[p] = DONE;
        }
    }
}
