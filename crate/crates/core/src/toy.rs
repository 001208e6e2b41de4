//! Small hand-built environments for tests and demonstrations.

use crate::error::{Error, Result};
use crate::mdp::{ActionId, EnvSnapshot, Environment, StateId};
use crate::oracles::ModelGraph;

const SELF_LOOP_TAG: u8 = 0x51;
const GRAPH_TAG: u8 = 0x47;

/// One state, one action, constant reward.
#[derive(Debug, Clone)]
pub struct SelfLoop {
    reward: f64,
}

impl SelfLoop {
    pub fn new(reward: f64) -> Self {
        SelfLoop { reward }
    }
}

impl Environment for SelfLoop {
    fn state_count(&self) -> usize {
        1
    }
    fn action_count(&self) -> usize {
        1
    }
    fn reset(&mut self) -> StateId {
        StateId(0)
    }
    fn current_state(&self) -> StateId {
        StateId(0)
    }
    fn step(&mut self, action: ActionId) -> Result<(StateId, f64)> {
        if action.index() != 0 {
            return Err(Error::OutOfRange {
                what: "action",
                value: action.index(),
                limit: 1,
            });
        }
        Ok((StateId(0), self.reward))
    }
    fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot::from_bytes(vec![SELF_LOOP_TAG])
    }
    fn restore(&mut self, snapshot: &EnvSnapshot) -> Result<()> {
        match snapshot.as_bytes() {
            [SELF_LOOP_TAG] => Ok(()),
            _ => Err(Error::BadSnapshot("not a self-loop snapshot".into())),
        }
    }
    fn is_deterministic(&self) -> bool {
        true
    }
    fn reward_upper_bound(&self) -> Option<f64> {
        Some(self.reward)
    }
}

/// Deterministic environment backed by a materialised transition table.
#[derive(Debug, Clone)]
pub struct GraphEnv {
    model: ModelGraph,
    initial: StateId,
    state: StateId,
}

impl GraphEnv {
    pub fn new(model: ModelGraph, initial: StateId) -> Result<Self> {
        if !model.is_deterministic() {
            return Err(Error::InvalidConfig(
                "GraphEnv needs a deterministic model".into(),
            ));
        }
        if initial.index() >= model.state_count() {
            return Err(Error::OutOfRange {
                what: "initial state",
                value: initial.index(),
                limit: model.state_count(),
            });
        }
        Ok(GraphEnv {
            model,
            initial,
            state: initial,
        })
    }

    pub fn model(&self) -> &ModelGraph {
        &self.model
    }
}

impl Environment for GraphEnv {
    fn state_count(&self) -> usize {
        self.model.state_count()
    }
    fn action_count(&self) -> usize {
        self.model.action_count()
    }
    fn reset(&mut self) -> StateId {
        self.state = self.initial;
        self.state
    }
    fn current_state(&self) -> StateId {
        self.state
    }
    fn step(&mut self, action: ActionId) -> Result<(StateId, f64)> {
        if action.index() >= self.model.action_count() {
            return Err(Error::OutOfRange {
                what: "action",
                value: action.index(),
                limit: self.model.action_count(),
            });
        }
        let (to, reward) = self.model.successor(self.state, action);
        self.state = to;
        Ok((to, reward))
    }
    fn snapshot(&self) -> EnvSnapshot {
        let mut bytes = vec![GRAPH_TAG];
        bytes.extend_from_slice(&self.state.0.to_le_bytes());
        EnvSnapshot::from_bytes(bytes)
    }
    fn restore(&mut self, snapshot: &EnvSnapshot) -> Result<()> {
        match snapshot.as_bytes() {
            [GRAPH_TAG, rest @ ..] if rest.len() == 4 => {
                let s = u32::from_le_bytes(rest.try_into().unwrap());
                if s as usize >= self.model.state_count() {
                    return Err(Error::BadSnapshot(format!("state {s} out of range")));
                }
                self.state = StateId(s);
                Ok(())
            }
            _ => Err(Error::BadSnapshot("not a graph snapshot".into())),
        }
    }
    fn is_deterministic(&self) -> bool {
        true
    }
    fn reward_upper_bound(&self) -> Option<f64> {
        Some(crate::oracles::brute_force_r_max(&self.model))
    }
}
