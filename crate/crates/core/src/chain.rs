//! A chain of states joined by increasingly unlikely forward transitions,
//! plus the visit-distribution measures used to show how hopping flattens it.
//!
//! Actions: `0` stays put, `1` tries to advance. From state `i < n - 1` an
//! advance succeeds with `advance_probs[i]` and pays `advance_rewards[i]`;
//! otherwise the agent stays with reward 0. The last state absorbs.
//!
//! Snapshot layout (61 bytes, little-endian):
//!
//! | offset | size | field                   |
//! |--------|------|-------------------------|
//! | 0      | 1    | tag `0xA1`              |
//! | 1      | 4    | state index             |
//! | 5      | 32   | ChaCha8 seed            |
//! | 37     | 8    | ChaCha8 stream          |
//! | 45     | 16   | ChaCha8 word position   |
//!
//! `restore` rewinds the random stream too, so replays are exact. Hops go
//! through `restore_state`, which moves the agent but leaves the stream
//! running.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{ActionId, EnvSnapshot, Environment, StateId};
use crate::oracles::{ModelGraph, Outcome};
use crate::qlearning::VisitCounts;

pub const SNAPSHOT_TAG: u8 = 0xA1;
const SNAPSHOT_LEN: usize = 61;

pub const STAY: ActionId = ActionId(0);
pub const TRY_ADVANCE: ActionId = ActionId(1);

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub n_states: usize,
    pub advance_probs: Vec<f64>,
    /// Reward for each successful advance; defaults to 1 on the last edge only.
    pub advance_rewards: Vec<f64>,
    pub rng_seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_states: 4,
            advance_probs: vec![0.1, 0.05, 0.01],
            advance_rewards: vec![0.0, 0.0, 1.0],
            rng_seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_states < 2 {
            return Err(Error::InvalidConfig(
                "a chain needs at least 2 states".into(),
            ));
        }
        for (name, list) in [
            ("advance_probs", &self.advance_probs),
            ("advance_rewards", &self.advance_rewards),
        ] {
            if list.len() != self.n_states - 1 {
                return Err(Error::InvalidConfig(format!(
                    "{name} has {} entries, expected {}",
                    list.len(),
                    self.n_states - 1
                )));
            }
        }
        if let Some(p) = self
            .advance_probs
            .iter()
            .find(|p| !(**p > 0.0 && **p <= 1.0))
        {
            return Err(Error::InvalidConfig(format!(
                "advance probability {p} is outside (0, 1]"
            )));
        }
        if self.advance_rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidConfig(
                "advance rewards must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Exact stochastic transition model.
    pub fn model(&self) -> Result<ModelGraph> {
        self.validate()?;
        let n = self.n_states;
        let mut pairs = Vec::with_capacity(n * 2);
        for s in 0..n {
            let here = StateId::new(s);
            pairs.push(vec![Outcome {
                prob: 1.0,
                to: here,
                reward: 0.0,
            }]);
            if s + 1 < n {
                let p = self.advance_probs[s];
                let mut outs = vec![Outcome {
                    prob: p,
                    to: StateId::new(s + 1),
                    reward: self.advance_rewards[s],
                }];
                if p < 1.0 {
                    outs.push(Outcome {
                        prob: 1.0 - p,
                        to: here,
                        reward: 0.0,
                    });
                }
                pairs.push(outs);
            } else {
                pairs.push(vec![Outcome {
                    prob: 1.0,
                    to: here,
                    reward: 0.0,
                }]);
            }
        }
        ModelGraph::stochastic(n, 2, pairs)
    }
}

/// One chain transition drawing from `rng`.
pub fn step_chain<R: Rng + ?Sized>(
    state: StateId,
    action: ActionId,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<(StateId, f64)> {
    let s = state.index();
    if s >= cfg.n_states {
        return Err(Error::OutOfRange {
            what: "state",
            value: s,
            limit: cfg.n_states,
        });
    }
    match action {
        STAY => Ok((state, 0.0)),
        TRY_ADVANCE if s + 1 < cfg.n_states => {
            if rng.gen::<f64>() < cfg.advance_probs[s] {
                Ok((StateId::new(s + 1), cfg.advance_rewards[s]))
            } else {
                Ok((state, 0.0))
            }
        }
        TRY_ADVANCE => Ok((state, 0.0)),
        other => Err(Error::OutOfRange {
            what: "action",
            value: other.index(),
            limit: 2,
        }),
    }
}

#[derive(Debug, Clone)]
pub struct Chain {
    cfg: ChainConfig,
    state: StateId,
    rng: ChaCha8Rng,
}

impl Chain {
    pub fn new(cfg: ChainConfig) -> Result<Self> {
        cfg.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        Ok(Chain {
            cfg,
            state: StateId(0),
            rng,
        })
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }

    fn decode_state(&self, b: &[u8]) -> Result<u32> {
        if b.len() != SNAPSHOT_LEN || b[0] != SNAPSHOT_TAG {
            return Err(Error::BadSnapshot(format!(
                "expected {SNAPSHOT_LEN} bytes with tag {SNAPSHOT_TAG:#04x}"
            )));
        }
        let state = u32::from_le_bytes(b[1..5].try_into().unwrap());
        if state as usize >= self.cfg.n_states {
            return Err(Error::BadSnapshot(format!("state {state} out of range")));
        }
        Ok(state)
    }
}

impl Environment for Chain {
    fn state_count(&self) -> usize {
        self.cfg.n_states
    }

    fn action_count(&self) -> usize {
        2
    }

    /// Returns to state 0. The random stream continues where it was.
    fn reset(&mut self) -> StateId {
        self.state = StateId(0);
        self.state
    }

    fn current_state(&self) -> StateId {
        self.state
    }

    fn step(&mut self, action: ActionId) -> Result<(StateId, f64)> {
        let (next, reward) = step_chain(self.state, action, &self.cfg, &mut self.rng)?;
        self.state = next;
        Ok((next, reward))
    }

    fn snapshot(&self) -> EnvSnapshot {
        let mut bytes = Vec::with_capacity(SNAPSHOT_LEN);
        bytes.push(SNAPSHOT_TAG);
        bytes.extend_from_slice(&self.state.0.to_le_bytes());
        bytes.extend_from_slice(&self.rng.get_seed());
        bytes.extend_from_slice(&self.rng.get_stream().to_le_bytes());
        bytes.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        EnvSnapshot::from_bytes(bytes)
    }

    fn restore(&mut self, snapshot: &EnvSnapshot) -> Result<()> {
        let b = snapshot.as_bytes();
        let state = self.decode_state(b)?;
        let seed: [u8; 32] = b[5..37].try_into().unwrap();
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(u64::from_le_bytes(b[37..45].try_into().unwrap()));
        rng.set_word_pos(u128::from_le_bytes(b[45..61].try_into().unwrap()));
        self.state = StateId(state);
        self.rng = rng;
        Ok(())
    }

    /// Restores the position only; the random stream carries on, so hops
    /// draw fresh outcomes instead of replaying the first visit's.
    fn restore_state(&mut self, snapshot: &EnvSnapshot) -> Result<()> {
        self.state = StateId(self.decode_state(snapshot.as_bytes())?);
        Ok(())
    }

    fn is_deterministic(&self) -> bool {
        self.cfg.advance_probs.iter().all(|&p| p == 1.0)
    }

    fn reward_upper_bound(&self) -> Option<f64> {
        Some(self.cfg.advance_rewards.iter().copied().fold(0.0, f64::max))
    }
}

/// Visit counts normalised to a probability vector.
pub fn visit_distribution(counts: &VisitCounts) -> Result<Vec<f64>> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::EmptyCounts);
    }
    Ok(counts
        .as_slice()
        .iter()
        .map(|&c| c as f64 / total as f64)
        .collect())
}

/// Total-variation distance `½ Σ |p_i − q_i|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    for v in [p, q] {
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || v.iter().any(|x| *x < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "not a probability vector (sum {sum})"
            )));
        }
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Uniform distribution over `n` outcomes.
pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stay_keeps_state() {
        let cfg = ChainConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in 0..4 {
            assert_eq!(
                step_chain(StateId(s), STAY, &cfg, &mut rng).unwrap(),
                (StateId(s), 0.0)
            );
        }
    }

    #[test]
    fn certain_advance_always_advances() {
        let cfg = ChainConfig {
            advance_probs: vec![1.0, 1.0, 1.0],
            ..ChainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            assert_eq!(
                step_chain(StateId(2), TRY_ADVANCE, &cfg, &mut rng).unwrap(),
                (StateId(3), 1.0)
            );
        }
        // the last state absorbs
        assert_eq!(
            step_chain(StateId(3), TRY_ADVANCE, &cfg, &mut rng).unwrap(),
            (StateId(3), 0.0)
        );
    }

    #[test]
    fn rare_advance_frequency() {
        let cfg = ChainConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 100_000u32;
        let hits = (0..trials)
            .filter(|_| {
                step_chain(StateId(2), TRY_ADVANCE, &cfg, &mut rng)
                    .unwrap()
                    .0
                    == StateId(3)
            })
            .count() as f64;
        let p = 0.01;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        assert!((hits - trials as f64 * p).abs() < 3.0 * sigma, "{hits}");
    }

    #[test]
    fn distribution_examples() {
        let d = visit_distribution(&VisitCounts::from_counts(vec![5, 5])).unwrap();
        assert_eq!(d, vec![0.5, 0.5]);
        let d = visit_distribution(&VisitCounts::from_counts(vec![10, 0, 0, 0])).unwrap();
        assert_eq!(d, vec![1.0, 0.0, 0.0, 0.0]);
        let d = visit_distribution(&VisitCounts::from_counts(vec![7, 1, 1, 1])).unwrap();
        assert_eq!(d, vec![0.7, 0.1, 0.1, 0.1]);
        assert_eq!(
            visit_distribution(&VisitCounts::from_counts(vec![0, 0])),
            Err(Error::EmptyCounts)
        );
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let d = tv_distance(&[0.7, 0.1, 0.1, 0.1], &uniform(4)).unwrap();
        assert!((d - 0.45).abs() < 1e-12);
        assert!(matches!(
            tv_distance(&[1.0], &[0.5, 0.5]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn snapshot_replays_the_random_stream() {
        let mut env = Chain::new(ChainConfig {
            advance_probs: vec![0.5, 0.5, 0.5],
            ..ChainConfig::default()
        })
        .unwrap();
        env.reset();
        for _ in 0..7 {
            env.step(TRY_ADVANCE).unwrap();
        }
        let snap = env.snapshot();
        assert_eq!(snap.as_bytes().len(), SNAPSHOT_LEN);
        let actions = [1, 0, 1, 1, 1, 0, 1, 1, 1, 1];
        let first: Vec<_> = actions
            .iter()
            .map(|&a| env.step(ActionId(a)).unwrap())
            .collect();
        env.restore(&snap).unwrap();
        assert_eq!(env.snapshot(), snap);
        let second: Vec<_> = actions
            .iter()
            .map(|&a| env.step(ActionId(a)).unwrap())
            .collect();
        assert_eq!(first, second);
        assert!(env
            .restore(&EnvSnapshot::from_bytes(vec![SNAPSHOT_TAG]))
            .is_err());
    }

    #[test]
    fn model_matches_config() {
        let model = ChainConfig::default().model().unwrap();
        assert!(!model.is_deterministic());
        let outs = model.outcomes(StateId(2), TRY_ADVANCE);
        assert_eq!(outs.len(), 2);
        assert_eq!(
            (outs[0].to, outs[0].prob, outs[0].reward),
            (StateId(3), 0.01, 1.0)
        );
    }

    #[test]
    fn config_validation() {
        let short = ChainConfig {
            advance_probs: vec![0.5],
            ..ChainConfig::default()
        };
        assert!(short.validate().is_err());
        let zero = ChainConfig {
            advance_probs: vec![0.5, 0.0, 0.5],
            ..ChainConfig::default()
        };
        assert!(zero.validate().is_err());
    }
}
