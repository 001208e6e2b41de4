//! Two-limb, four-joint crawling robot on flat ground.
//!
//! Each limb hangs from the body at height `body_height` and has an upper
//! segment (shoulder joint) and a lower segment (elbow joint). The shoulder
//! angle is measured downward from the horizontal, the elbow angle continues
//! the bend. A hand touches the ground when its height is `<= 0`. A hand that
//! touches the ground both before and after a move is anchored: the body is
//! dragged by the opposite of the hand's body-relative horizontal motion. With
//! two anchored hands the body moves by the mean of the two drags. The reward
//! is the body's horizontal displacement.
//!
//! Snapshot layout (25 bytes, little-endian):
//!
//! | offset | size | field            |
//! |--------|------|------------------|
//! | 0      | 1    | tag `0xC1`       |
//! | 1      | 4    | shoulder_left    |
//! | 5      | 4    | elbow_left       |
//! | 9      | 4    | shoulder_right   |
//! | 13     | 4    | elbow_right      |
//! | 17     | 8    | body_x (f64)     |

use crate::error::{Error, Result};
use crate::mdp::{ActionId, EnvSnapshot, Environment, StateId};
use crate::oracles::{brute_force_r_max, ModelGraph};

pub const SNAPSHOT_TAG: u8 = 0xC1;
const SNAPSHOT_LEN: usize = 25;

/// Number of distinct joint-delta combinations, all-still excluded.
pub const ACTION_COUNT: usize = 80;
const ALL_STILL: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct CrawlerConfig {
    pub upper_levels: usize,
    pub lower_levels: usize,
    pub upper_length: f64,
    pub lower_length: f64,
    pub body_height: f64,
    pub attach_x_left: f64,
    pub attach_x_right: f64,
    /// Degrees.
    pub shoulder_min: f64,
    pub shoulder_max: f64,
    pub elbow_min: f64,
    pub elbow_max: f64,
    /// Joint configuration after `reset`; `None` puts every joint at its middle level.
    pub initial: Option<JointConfig>,
}

impl Default for CrawlerConfig {
    fn default() -> Self {
        CrawlerConfig {
            upper_levels: 9,
            lower_levels: 13,
            upper_length: 1.0,
            lower_length: 1.0,
            body_height: 1.2,
            attach_x_left: -0.5,
            attach_x_right: 0.5,
            shoulder_min: 15.0,
            shoulder_max: 135.0,
            elbow_min: 0.0,
            elbow_max: 180.0,
            initial: None,
        }
    }
}

impl CrawlerConfig {
    /// The 5 × 7 level variant (1225 states) small enough for exact oracles.
    pub fn reduced() -> Self {
        CrawlerConfig {
            upper_levels: 5,
            lower_levels: 7,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.upper_levels < 2 || self.lower_levels < 2 {
            return bad("joint level counts must be at least 2".into());
        }
        if !(self.upper_length > 0.0 && self.lower_length > 0.0) {
            return bad("segment lengths must be positive".into());
        }
        if !(self.shoulder_max > self.shoulder_min && self.elbow_max > self.elbow_min) {
            return bad("joint angle ranges must have max > min".into());
        }
        let finite = [
            self.body_height,
            self.attach_x_left,
            self.attach_x_right,
            self.shoulder_min,
            self.shoulder_max,
            self.elbow_min,
            self.elbow_max,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("geometry values must be finite".into());
        }
        if let Some(j) = self.initial {
            j.check(self)?;
        }
        Ok(())
    }

    pub fn state_count(&self) -> usize {
        let limb = self.upper_levels * self.lower_levels;
        limb * limb
    }

    pub fn initial_joints(&self) -> JointConfig {
        self.initial.unwrap_or(JointConfig {
            shoulder_left: self.upper_levels / 2,
            elbow_left: self.lower_levels / 2,
            shoulder_right: self.upper_levels / 2,
            elbow_right: self.lower_levels / 2,
        })
    }

    /// Shoulder angle of a level, radians.
    pub fn shoulder_angle(&self, level: usize) -> f64 {
        grid_angle(
            self.shoulder_min,
            self.shoulder_max,
            self.upper_levels,
            level,
        )
    }

    /// Elbow angle of a level, radians.
    pub fn elbow_angle(&self, level: usize) -> f64 {
        grid_angle(self.elbow_min, self.elbow_max, self.lower_levels, level)
    }
}

fn grid_angle(min_deg: f64, max_deg: f64, levels: usize, level: usize) -> f64 {
    let step = (max_deg - min_deg) / (levels - 1) as f64;
    (min_deg + level as f64 * step).to_radians()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct JointConfig {
    pub shoulder_left: usize,
    pub elbow_left: usize,
    pub shoulder_right: usize,
    pub elbow_right: usize,
}

impl JointConfig {
    fn as_array(self) -> [usize; 4] {
        [
            self.shoulder_left,
            self.elbow_left,
            self.shoulder_right,
            self.elbow_right,
        ]
    }

    fn from_array(a: [usize; 4]) -> Self {
        JointConfig {
            shoulder_left: a[0],
            elbow_left: a[1],
            shoulder_right: a[2],
            elbow_right: a[3],
        }
    }

    fn check(self, cfg: &CrawlerConfig) -> Result<()> {
        for (value, limit, what) in [
            (self.shoulder_left, cfg.upper_levels, "shoulder_left"),
            (self.elbow_left, cfg.lower_levels, "elbow_left"),
            (self.shoulder_right, cfg.upper_levels, "shoulder_right"),
            (self.elbow_right, cfg.lower_levels, "elbow_right"),
        ] {
            if value >= limit {
                return Err(Error::OutOfRange { what, value, limit });
            }
        }
        Ok(())
    }
}

fn joint_limits(cfg: &CrawlerConfig) -> [usize; 4] {
    [
        cfg.upper_levels,
        cfg.lower_levels,
        cfg.upper_levels,
        cfg.lower_levels,
    ]
}

/// Mixed-radix index of a joint configuration.
pub fn encode_state(j: JointConfig, cfg: &CrawlerConfig) -> Result<StateId> {
    j.check(cfg)?;
    let (u, l) = (cfg.upper_levels, cfg.lower_levels);
    let index = ((j.shoulder_left * l + j.elbow_left) * u + j.shoulder_right) * l + j.elbow_right;
    Ok(StateId::new(index))
}

pub fn decode_state(s: StateId, cfg: &CrawlerConfig) -> Result<JointConfig> {
    let count = cfg.state_count();
    if s.index() >= count {
        return Err(Error::OutOfRange {
            what: "state",
            value: s.index(),
            limit: count,
        });
    }
    let (u, l) = (cfg.upper_levels, cfg.lower_levels);
    let mut rest = s.index();
    let elbow_right = rest % l;
    rest /= l;
    let shoulder_right = rest % u;
    rest /= u;
    let elbow_left = rest % l;
    let shoulder_left = rest / l;
    Ok(JointConfig {
        shoulder_left,
        elbow_left,
        shoulder_right,
        elbow_right,
    })
}

/// Per-joint moves, each in {-1, 0, +1}, in `JointConfig` field order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CrawlerAction {
    pub deltas: [i8; 4],
}

impl CrawlerAction {
    pub fn new(deltas: [i8; 4]) -> Result<Self> {
        if deltas.iter().any(|d| !(-1..=1).contains(d)) {
            return Err(Error::InvalidConfig(format!(
                "joint deltas must be -1, 0 or +1, got {deltas:?}"
            )));
        }
        if deltas == [0; 4] {
            return Err(Error::AllStillAction);
        }
        Ok(CrawlerAction { deltas })
    }
}

/// Base-3 index of the deltas with the all-still combination removed.
pub fn encode_action(a: CrawlerAction) -> Result<ActionId> {
    if a.deltas == [0; 4] {
        return Err(Error::AllStillAction);
    }
    let ternary = a
        .deltas
        .iter()
        .rev()
        .fold(0usize, |acc, &d| acc * 3 + (d + 1) as usize);
    let id = if ternary < ALL_STILL {
        ternary
    } else {
        ternary - 1
    };
    Ok(ActionId::new(id))
}

pub fn decode_action(a: ActionId) -> Result<CrawlerAction> {
    let id = a.index();
    if id >= ACTION_COUNT {
        return Err(Error::OutOfRange {
            what: "action",
            value: id,
            limit: ACTION_COUNT,
        });
    }
    let mut ternary = if id < ALL_STILL { id } else { id + 1 };
    let mut deltas = [0i8; 4];
    for d in deltas.iter_mut() {
        *d = (ternary % 3) as i8 - 1;
        ternary /= 3;
    }
    Ok(CrawlerAction { deltas })
}

/// Hand position of a limb attached at `(attach_x, body_height)`.
pub fn hand_position(
    shoulder_angle: f64,
    elbow_angle: f64,
    attach_x: f64,
    cfg: &CrawlerConfig,
) -> (f64, f64) {
    let bend = shoulder_angle + elbow_angle;
    let x = attach_x + cfg.upper_length * shoulder_angle.cos() + cfg.lower_length * bend.cos();
    let y =
        cfg.body_height - cfg.upper_length * shoulder_angle.sin() - cfg.lower_length * bend.sin();
    (x, y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrawlerState {
    pub joints: JointConfig,
    /// World horizontal position of the body.
    pub body_x: f64,
}

fn apply_deltas(j: JointConfig, a: CrawlerAction, cfg: &CrawlerConfig) -> JointConfig {
    let limits = joint_limits(cfg);
    let mut levels = j.as_array();
    for ((level, &delta), limit) in levels.iter_mut().zip(&a.deltas).zip(limits) {
        let moved = *level as isize + delta as isize;
        if moved >= 0 && (moved as usize) < limit {
            *level = moved as usize;
        }
    }
    JointConfig::from_array(levels)
}

/// Body drag from the two hands' body-relative positions before and after a move.
fn displacement(before: [(f64, f64); 2], after: [(f64, f64); 2]) -> f64 {
    let mut sum = 0.0;
    let mut anchored = 0u32;
    for (b, a) in before.iter().zip(&after) {
        if b.1 <= 0.0 && a.1 <= 0.0 {
            sum += b.0 - a.0;
            anchored += 1;
        }
    }
    match anchored {
        0 => 0.0,
        1 => sum,
        n => sum / n as f64,
    }
}

fn limb_hand(cfg: &CrawlerConfig, shoulder: usize, elbow: usize) -> (f64, f64) {
    hand_position(
        cfg.shoulder_angle(shoulder),
        cfg.elbow_angle(elbow),
        0.0,
        cfg,
    )
}

/// Pure transition function. Joints that would leave their range stay put.
pub fn step_crawler(
    state: CrawlerState,
    a: CrawlerAction,
    cfg: &CrawlerConfig,
) -> (CrawlerState, f64) {
    let next = apply_deltas(state.joints, a, cfg);
    let hands = |j: JointConfig| {
        [
            limb_hand(cfg, j.shoulder_left, j.elbow_left),
            limb_hand(cfg, j.shoulder_right, j.elbow_right),
        ]
    };
    let d = displacement(hands(state.joints), hands(next));
    (
        CrawlerState {
            joints: next,
            body_x: state.body_x + d,
        },
        d,
    )
}

/// Materialises every `(state, action)` transition.
pub fn enumerate_model(cfg: &CrawlerConfig) -> Result<ModelGraph> {
    cfg.validate()?;
    let kin = Kinematics::new(cfg);
    let states = cfg.state_count();
    let mut table = Vec::with_capacity(states * ACTION_COUNT);
    for s in 0..states {
        let joints = decode_state(StateId::new(s), cfg)?;
        for a in 0..ACTION_COUNT {
            let action = decode_action(ActionId::new(a))?;
            let (next, reward) = kin.step(joints, action, cfg);
            table.push((encode_state(next, cfg)?, reward));
        }
    }
    Ok(ModelGraph::deterministic(states, ACTION_COUNT, table))
}

/// Hand positions of every `(shoulder, elbow)` level pair, relative to the
/// limb's attachment point.
#[derive(Debug, Clone)]
struct Kinematics {
    lower_levels: usize,
    hands: Vec<(f64, f64)>,
}

impl Kinematics {
    fn new(cfg: &CrawlerConfig) -> Self {
        let mut hands = Vec::with_capacity(cfg.upper_levels * cfg.lower_levels);
        for u in 0..cfg.upper_levels {
            for l in 0..cfg.lower_levels {
                hands.push(limb_hand(cfg, u, l));
            }
        }
        Kinematics {
            lower_levels: cfg.lower_levels,
            hands,
        }
    }

    #[inline]
    fn hand(&self, shoulder: usize, elbow: usize) -> (f64, f64) {
        self.hands[shoulder * self.lower_levels + elbow]
    }

    fn pair(&self, j: JointConfig) -> [(f64, f64); 2] {
        [
            self.hand(j.shoulder_left, j.elbow_left),
            self.hand(j.shoulder_right, j.elbow_right),
        ]
    }

    fn step(&self, j: JointConfig, a: CrawlerAction, cfg: &CrawlerConfig) -> (JointConfig, f64) {
        let next = apply_deltas(j, a, cfg);
        (next, displacement(self.pair(j), self.pair(next)))
    }
}

/// The crawler as a snapshot-capable environment.
#[derive(Debug, Clone)]
pub struct Crawler {
    cfg: CrawlerConfig,
    kin: Kinematics,
    state: CrawlerState,
    r_max: f64,
}

impl Crawler {
    pub fn new(cfg: CrawlerConfig) -> Result<Self> {
        let model = enumerate_model(&cfg)?;
        let r_max = brute_force_r_max(&model);
        Ok(Self::with_r_max(cfg, r_max))
    }

    /// Skips the enumeration that computes the exact reward bound.
    pub fn with_r_max(cfg: CrawlerConfig, r_max: f64) -> Self {
        let kin = Kinematics::new(&cfg);
        let state = CrawlerState {
            joints: cfg.initial_joints(),
            body_x: 0.0,
        };
        Crawler {
            cfg,
            kin,
            state,
            r_max,
        }
    }

    pub fn config(&self) -> &CrawlerConfig {
        &self.cfg
    }

    pub fn state(&self) -> CrawlerState {
        self.state
    }

    pub fn initial_state(&self) -> StateId {
        encode_state(self.cfg.initial_joints(), &self.cfg).expect("validated initial joints")
    }
}

impl Environment for Crawler {
    fn state_count(&self) -> usize {
        self.cfg.state_count()
    }

    fn action_count(&self) -> usize {
        ACTION_COUNT
    }

    fn reset(&mut self) -> StateId {
        self.state = CrawlerState {
            joints: self.cfg.initial_joints(),
            body_x: 0.0,
        };
        self.current_state()
    }

    fn current_state(&self) -> StateId {
        encode_state(self.state.joints, &self.cfg).expect("joints stay in range")
    }

    fn step(&mut self, action: ActionId) -> Result<(StateId, f64)> {
        let a = decode_action(action)?;
        let (joints, d) = self.kin.step(self.state.joints, a, &self.cfg);
        self.state = CrawlerState {
            joints,
            body_x: self.state.body_x + d,
        };
        Ok((self.current_state(), d))
    }

    fn snapshot(&self) -> EnvSnapshot {
        let mut bytes = Vec::with_capacity(SNAPSHOT_LEN);
        bytes.push(SNAPSHOT_TAG);
        for level in self.state.joints.as_array() {
            bytes.extend_from_slice(&(level as u32).to_le_bytes());
        }
        bytes.extend_from_slice(&self.state.body_x.to_le_bytes());
        EnvSnapshot::from_bytes(bytes)
    }

    fn restore(&mut self, snapshot: &EnvSnapshot) -> Result<()> {
        let bytes = snapshot.as_bytes();
        if bytes.len() != SNAPSHOT_LEN || bytes[0] != SNAPSHOT_TAG {
            return Err(Error::BadSnapshot(format!(
                "expected {SNAPSHOT_LEN} bytes with tag {SNAPSHOT_TAG:#04x}"
            )));
        }
        let word = |i: usize| {
            let start = 1 + 4 * i;
            u32::from_le_bytes(bytes[start..start + 4].try_into().unwrap()) as usize
        };
        let joints = JointConfig::from_array([word(0), word(1), word(2), word(3)]);
        joints.check(&self.cfg)?;
        let body_x = f64::from_le_bytes(bytes[17..25].try_into().unwrap());
        if !body_x.is_finite() {
            return Err(Error::BadSnapshot("body_x is not finite".into()));
        }
        self.state = CrawlerState { joints, body_x };
        Ok(())
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn reward_upper_bound(&self) -> Option<f64> {
        Some(self.r_max)
    }
}
