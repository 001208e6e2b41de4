//! Experiment configuration: a flat `key = value` text file.
//!
//! Blank lines and text after `#` are ignored. Keys may appear at most once;
//! unknown keys are rejected. Every error names the offending line and key.
//! [`ExperimentConfig::to_text`] writes the normalised form, which parses
//! back to the same configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::chain::ChainConfig;
use crate::crawler::{CrawlerConfig, JointConfig};
use crate::error::{Error, Result};
use crate::hopping::{RMaxSource, SelectorKind, TriggerKind};
use crate::qlearning::LearnerConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum EnvironmentSpec {
    Crawler(CrawlerConfig),
    /// The chain's random stream for run seed `k` is seeded with
    /// `rng_seed + k`.
    Chain(ChainConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedPeriod {
    Steps(u64),
    /// Length of the oracle's shortest optimal cycle.
    Witness,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopperSpec {
    pub trigger: TriggerKind,
    pub fixed_period: FixedPeriod,
    pub selector: SelectorKind,
    pub r_max: RMaxSource,
}

impl Default for HopperSpec {
    fn default() -> Self {
        HopperSpec {
            trigger: TriggerKind::GammaPruning,
            fixed_period: FixedPeriod::Steps(9),
            selector: SelectorKind::Lasso,
            r_max: RMaxSource::Oracle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Conventional,
    TimeHopping(HopperSpec),
}

impl Algorithm {
    /// Short run name: `conventional`, or `<trigger>-<selector>`.
    pub fn label(&self) -> String {
        match self {
            Algorithm::Conventional => "conventional".into(),
            Algorithm::TimeHopping(h) => {
                format!("{}-{}", trigger_name(h.trigger), selector_name(h.selector))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckpointSpec {
    Every(u64),
    List(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    pub algorithm: Algorithm,
    /// `rng_seed` is ignored; each run uses its own seed.
    pub learner: LearnerConfig,
    pub total_steps: u64,
    pub checkpoints: CheckpointSpec,
    pub n_seeds: u64,
    pub base_seed: u64,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            environment: EnvironmentSpec::Crawler(CrawlerConfig::default()),
            algorithm: Algorithm::TimeHopping(HopperSpec::default()),
            learner: LearnerConfig::default(),
            total_steps: 45_000,
            checkpoints: CheckpointSpec::Every(1000),
            n_seeds: 10,
            base_seed: 0,
            output: PathBuf::from("out"),
        }
    }
}

pub(crate) fn trigger_name(t: TriggerKind) -> &'static str {
    match t {
        TriggerKind::GammaPruning => "gamma",
        TriggerKind::Fixed => "fixed",
    }
}

pub(crate) fn selector_name(s: SelectorKind) -> &'static str {
    match s {
        SelectorKind::Lasso => "lasso",
        SelectorKind::Random => "random",
    }
}

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
    used: bool,
}

struct Entries<'a>(Vec<Entry<'a>>);

impl<'a> Entries<'a> {
    fn parse(text: &'a str) -> Result<Self> {
        let mut entries: Vec<Entry<'a>> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::config(Some(line), content, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(Error::config(Some(line), "", "missing key before `=`"));
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(Error::config(
                    Some(line),
                    key,
                    format!("duplicate key (first set on line {})", prev.line),
                ));
            }
            entries.push(Entry {
                line,
                key,
                value,
                used: false,
            });
        }
        Ok(Entries(entries))
    }

    fn take(&mut self, key: &str) -> Option<(usize, &'a str)> {
        let e = self.0.iter_mut().find(|e| e.key == key)?;
        e.used = true;
        Some((e.line, e.value))
    }

    fn get<T>(
        &mut self,
        key: &str,
        parse: impl Fn(&str) -> Option<T>,
        expected: &str,
    ) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => parse(v).map(Some).ok_or_else(|| {
                Error::config(Some(line), key, format!("expected {expected}, got `{v}`"))
            }),
        }
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.0.iter().find(|e| e.key == key).map(|e| e.line)
    }

    fn reject_unused(&self) -> Result<()> {
        match self.0.iter().find(|e| !e.used) {
            None => Ok(()),
            Some(e) => Err(Error::config(
                Some(e.line),
                e.key,
                "unknown or inapplicable key",
            )),
        }
    }
}

fn num(v: &str) -> Option<f64> {
    v.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn int(v: &str) -> Option<u64> {
    v.replace('_', "").parse().ok()
}

fn list<T>(v: &str, item: impl Fn(&str) -> Option<T>) -> Option<Vec<T>> {
    v.split(',').map(|x| item(x.trim())).collect()
}

fn parse_r_max(v: &str) -> Option<RMaxSource> {
    if v == "oracle" {
        Some(RMaxSource::Oracle)
    } else if let Some(f) = v.strip_prefix("observed:") {
        num(f.trim()).map(RMaxSource::ObservedWithMargin)
    } else {
        num(v).map(RMaxSource::Configured)
    }
}

fn parse_checkpoints(v: &str) -> Option<CheckpointSpec> {
    if let Some(n) = v.strip_prefix("every:") {
        int(n.trim()).map(CheckpointSpec::Every)
    } else if v == "none" {
        Some(CheckpointSpec::List(Vec::new()))
    } else {
        list(v, int).map(CheckpointSpec::List)
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut e = Entries::parse(text)?;
        let d = ExperimentConfig::default();

        let env_line = e.line_of("environment");
        let environment = match e.take("environment").map(|(_, v)| v).unwrap_or("crawler") {
            "crawler" => EnvironmentSpec::Crawler(parse_crawler(&mut e)?),
            "chain" => EnvironmentSpec::Chain(parse_chain(&mut e)?),
            other => {
                return Err(Error::config(
                    env_line,
                    "environment",
                    format!("expected crawler or chain, got `{other}`"),
                ))
            }
        };

        let alg_line = e.line_of("algorithm");
        let algorithm = match e
            .take("algorithm")
            .map(|(_, v)| v)
            .unwrap_or("time_hopping")
        {
            "conventional" => Algorithm::Conventional,
            "time_hopping" => Algorithm::TimeHopping(parse_hopper(&mut e)?),
            other => {
                return Err(Error::config(
                    alg_line,
                    "algorithm",
                    format!("expected conventional or time_hopping, got `{other}`"),
                ))
            }
        };

        let learner = LearnerConfig {
            gamma: e.get("gamma", num, "a number")?.unwrap_or(d.learner.gamma),
            alpha: e.get("alpha", num, "a number")?.unwrap_or(d.learner.alpha),
            epsilon: e
                .get("epsilon", num, "a number")?
                .unwrap_or(d.learner.epsilon),
            rng_seed: 0,
        };
        let cfg = ExperimentConfig {
            environment,
            algorithm,
            learner,
            total_steps: e
                .get("total_steps", int, "an integer")?
                .unwrap_or(d.total_steps),
            checkpoints: e
                .get(
                    "checkpoints",
                    parse_checkpoints,
                    "`every:N`, `none` or a comma-separated list",
                )?
                .unwrap_or(d.checkpoints),
            n_seeds: e.get("n_seeds", int, "an integer")?.unwrap_or(d.n_seeds),
            base_seed: e
                .get("base_seed", int, "an integer")?
                .unwrap_or(d.base_seed),
            output: e
                .take("output")
                .map(|(_, v)| PathBuf::from(v))
                .unwrap_or(d.output),
        };
        e.reject_unused()?;
        cfg.validate_at(&|key| e.line_of(key))?;
        Ok(cfg)
    }

    /// Checks every invariant; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        self.validate_at(&|_| None)
    }

    fn validate_at(&self, line: &dyn Fn(&str) -> Option<usize>) -> Result<()> {
        let fail = |key: &str, msg: String| Err(Error::config(line(key), key, msg));
        let l = &self.learner;
        if !(l.gamma > 0.0 && l.gamma < 1.0) {
            return fail("gamma", format!("{} is outside (0, 1)", l.gamma));
        }
        if !(l.alpha > 0.0 && l.alpha <= 1.0) {
            return fail("alpha", format!("{} is outside (0, 1]", l.alpha));
        }
        if !(0.0..=1.0).contains(&l.epsilon) {
            return fail("epsilon", format!("{} is outside [0, 1]", l.epsilon));
        }
        if self.n_seeds == 0 {
            return fail("n_seeds", "must be at least 1".into());
        }
        if self.total_steps == 0 {
            return fail("total_steps", "must be at least 1".into());
        }
        if self.base_seed.checked_add(self.n_seeds - 1).is_none() {
            return fail("base_seed", "base_seed + n_seeds overflows".into());
        }
        match &self.checkpoints {
            CheckpointSpec::Every(0) => {
                return fail("checkpoints", "interval must be at least 1".into())
            }
            CheckpointSpec::Every(_) => {}
            CheckpointSpec::List(v) => {
                if v.windows(2).any(|w| w[0] >= w[1]) {
                    return fail("checkpoints", "must be strictly increasing".into());
                }
                if let Some(&bad) = v.iter().find(|&&c| c == 0 || c > self.total_steps) {
                    return fail(
                        "checkpoints",
                        format!("{bad} is outside [1, total_steps = {}]", self.total_steps),
                    );
                }
            }
        }
        if let Algorithm::TimeHopping(h) = &self.algorithm {
            if h.fixed_period == FixedPeriod::Steps(0) {
                return fail("fixed_period", "must be at least 1".into());
            }
            match h.r_max {
                RMaxSource::ObservedWithMargin(f) if f < 1.0 => {
                    return fail("r_max", format!("margin factor {f} must be >= 1"))
                }
                _ => {}
            }
        }
        let env_err = match &self.environment {
            EnvironmentSpec::Crawler(c) => c.validate().err().map(|e| ("crawler", e)),
            EnvironmentSpec::Chain(c) => c.validate().err().map(|e| ("chain", e)),
        };
        if let Some((key, err)) = env_err {
            let msg = match err {
                Error::InvalidConfig(m) => m,
                other => other.to_string(),
            };
            return fail(key, msg);
        }
        Ok(())
    }

    /// Checkpoint steps in increasing order.
    pub fn checkpoint_steps(&self) -> Vec<u64> {
        match &self.checkpoints {
            CheckpointSpec::Every(n) => (1..=self.total_steps / n).map(|k| k * n).collect(),
            CheckpointSpec::List(v) => v.clone(),
        }
    }

    /// Seeds of the individual runs.
    pub fn seeds(&self) -> std::ops::Range<u64> {
        self.base_seed..self.base_seed + self.n_seeds
    }

    /// Normalised text form listing every key.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        match &self.environment {
            EnvironmentSpec::Crawler(c) => {
                kv("environment", "crawler".into());
                kv("crawler.upper_levels", c.upper_levels.to_string());
                kv("crawler.lower_levels", c.lower_levels.to_string());
                kv("crawler.upper_length", c.upper_length.to_string());
                kv("crawler.lower_length", c.lower_length.to_string());
                kv("crawler.body_height", c.body_height.to_string());
                kv("crawler.attach_x_left", c.attach_x_left.to_string());
                kv("crawler.attach_x_right", c.attach_x_right.to_string());
                kv("crawler.shoulder_min", c.shoulder_min.to_string());
                kv("crawler.shoulder_max", c.shoulder_max.to_string());
                kv("crawler.elbow_min", c.elbow_min.to_string());
                kv("crawler.elbow_max", c.elbow_max.to_string());
                let j = c.initial_joints();
                let joints = format!(
                    "{}, {}, {}, {}",
                    j.shoulder_left, j.elbow_left, j.shoulder_right, j.elbow_right
                );
                match c.initial {
                    Some(_) => kv("crawler.initial", joints),
                    None => kv("# crawler.initial", format!("{joints}  (middle levels)")),
                }
            }
            EnvironmentSpec::Chain(c) => {
                kv("environment", "chain".into());
                kv("chain.n_states", c.n_states.to_string());
                kv("chain.advance_probs", join(&c.advance_probs));
                kv("chain.advance_rewards", join(&c.advance_rewards));
                kv("chain.rng_seed", c.rng_seed.to_string());
            }
        }
        match &self.algorithm {
            Algorithm::Conventional => kv("algorithm", "conventional".into()),
            Algorithm::TimeHopping(h) => {
                kv("algorithm", "time_hopping".into());
                kv("trigger", trigger_name(h.trigger).into());
                kv(
                    "fixed_period",
                    match h.fixed_period {
                        FixedPeriod::Steps(n) => n.to_string(),
                        FixedPeriod::Witness => "witness".into(),
                    },
                );
                kv("selector", selector_name(h.selector).into());
                kv(
                    "r_max",
                    match h.r_max {
                        RMaxSource::Oracle => "oracle".into(),
                        RMaxSource::Configured(r) => r.to_string(),
                        RMaxSource::ObservedWithMargin(f) => format!("observed:{f}"),
                    },
                );
            }
        }
        kv("gamma", self.learner.gamma.to_string());
        kv("alpha", self.learner.alpha.to_string());
        kv("epsilon", self.learner.epsilon.to_string());
        kv("total_steps", self.total_steps.to_string());
        kv(
            "checkpoints",
            match &self.checkpoints {
                CheckpointSpec::Every(n) => format!("every:{n}"),
                CheckpointSpec::List(v) if v.is_empty() => "none".into(),
                CheckpointSpec::List(v) => v
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(", "),
            },
        );
        kv("n_seeds", self.n_seeds.to_string());
        kv("base_seed", self.base_seed.to_string());
        kv("output", self.output.display().to_string());
        s
    }
}

fn parse_crawler(e: &mut Entries) -> Result<CrawlerConfig> {
    let mut c = match e.take("crawler.preset") {
        None | Some((_, "default")) => CrawlerConfig::default(),
        Some((_, "reduced")) => CrawlerConfig::reduced(),
        Some((line, other)) => {
            return Err(Error::config(
                Some(line),
                "crawler.preset",
                format!("expected default or reduced, got `{other}`"),
            ))
        }
    };
    let levels = |v: &str| int(v).map(|x| x as usize);
    if let Some(v) = e.get("crawler.upper_levels", levels, "an integer")? {
        c.upper_levels = v;
    }
    if let Some(v) = e.get("crawler.lower_levels", levels, "an integer")? {
        c.lower_levels = v;
    }
    for (key, field) in [
        ("crawler.upper_length", &mut c.upper_length),
        ("crawler.lower_length", &mut c.lower_length),
        ("crawler.body_height", &mut c.body_height),
        ("crawler.attach_x_left", &mut c.attach_x_left),
        ("crawler.attach_x_right", &mut c.attach_x_right),
        ("crawler.shoulder_min", &mut c.shoulder_min),
        ("crawler.shoulder_max", &mut c.shoulder_max),
        ("crawler.elbow_min", &mut c.elbow_min),
        ("crawler.elbow_max", &mut c.elbow_max),
    ] {
        if let Some(v) = e.get(key, num, "a number")? {
            *field = v;
        }
    }
    let joints = |v: &str| {
        let l = list(v, |x| int(x).map(|n| n as usize))?;
        (l.len() == 4).then(|| JointConfig {
            shoulder_left: l[0],
            elbow_left: l[1],
            shoulder_right: l[2],
            elbow_right: l[3],
        })
    };
    if let Some(j) = e.get(
        "crawler.initial",
        joints,
        "four comma-separated joint levels",
    )? {
        c.initial = Some(j);
    }
    Ok(c)
}

fn parse_chain(e: &mut Entries) -> Result<ChainConfig> {
    let mut c = ChainConfig::default();
    if let Some(n) = e.get(
        "chain.n_states",
        |v| int(v).map(|n| n as usize),
        "an integer",
    )? {
        c.n_states = n;
    }
    let nums = |v: &str| list(v, num);
    if let Some(p) = e.get(
        "chain.advance_probs",
        nums,
        "a comma-separated list of numbers",
    )? {
        c.advance_probs = p;
    }
    if let Some(r) = e.get(
        "chain.advance_rewards",
        nums,
        "a comma-separated list of numbers",
    )? {
        c.advance_rewards = r;
    }
    if let Some(s) = e.get("chain.rng_seed", int, "an integer")? {
        c.rng_seed = s;
    }
    Ok(c)
}

fn parse_hopper(e: &mut Entries) -> Result<HopperSpec> {
    let d = HopperSpec::default();
    let trigger = e
        .get(
            "trigger",
            |v| match v {
                "gamma" => Some(TriggerKind::GammaPruning),
                "fixed" => Some(TriggerKind::Fixed),
                _ => None,
            },
            "gamma or fixed",
        )?
        .unwrap_or(d.trigger);
    let fixed_period = e
        .get(
            "fixed_period",
            |v| {
                if v == "witness" {
                    Some(FixedPeriod::Witness)
                } else {
                    int(v).map(FixedPeriod::Steps)
                }
            },
            "an integer or `witness`",
        )?
        .unwrap_or(d.fixed_period);
    let selector = e
        .get(
            "selector",
            |v| match v {
                "lasso" => Some(SelectorKind::Lasso),
                "random" => Some(SelectorKind::Random),
                _ => None,
            },
            "lasso or random",
        )?
        .unwrap_or(d.selector);
    let r_max = e
        .get(
            "r_max",
            parse_r_max,
            "`oracle`, a number or `observed:<factor>`",
        )?
        .unwrap_or(d.r_max);
    Ok(HopperSpec {
        trigger,
        fixed_period,
        selector,
        r_max,
    })
}
