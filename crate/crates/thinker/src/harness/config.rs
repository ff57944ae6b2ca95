use crate::error::{Error, Result};
use crate::wrapper::CpSchedule;
use std::collections::BTreeMap;
use std::path::PathBuf;

/// Which built-in environment a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Chain,
    MiniBox,
}

impl EnvKind {
    pub fn code(&self) -> u32 {
        match self {
            EnvKind::Chain => 0,
            EnvKind::MiniBox => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(EnvKind::Chain),
            1 => Ok(EnvKind::MiniBox),
            other => Err(Error::BadCheckpoint(format!("unknown env code {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Oracle,
    Learned,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentKind {
    Ac,
    /// The same actor-critic reading the raw observation on the raw MDP
    /// (run it with K = 1).
    AcRaw,
    Mcts { temperature: f64 },
    Exhaustive { depth: usize },
    Random,
}

/// A scalar that may anneal linearly over the frame budget.
#[derive(Debug, Clone, Copy)]
pub enum Annealed {
    Constant(f64),
    Linear { from: f64, to: f64 },
}

impl Annealed {
    pub fn value(&self, frames: u64, budget: u64) -> f64 {
        match *self {
            Annealed::Constant(c) => c,
            Annealed::Linear { from, to } => {
                let t = if budget == 0 {
                    1.0
                } else {
                    (frames as f64 / budget as f64).min(1.0)
                };
                from + (to - from) * t
            }
        }
    }

    pub fn cp_schedule(&self, budget: u64) -> CpSchedule {
        match *self {
            Annealed::Constant(c) => CpSchedule::Constant(c),
            Annealed::Linear { from, to } => CpSchedule::Linear {
                from,
                to,
                horizon: budget,
            },
        }
    }

    fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if let Some(inner) = t.strip_prefix("anneal(").and_then(|s| s.strip_suffix(')')) {
            let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(Error::BadConfig(format!("bad anneal spec `{t}`")));
            }
            Ok(Annealed::Linear {
                from: parse_f64(parts[0])?,
                to: parse_f64(parts[1])?,
            })
        } else {
            Ok(Annealed::Constant(parse_f64(t)?))
        }
    }

    fn render(&self) -> String {
        match *self {
            Annealed::Constant(c) => format!("{c}"),
            Annealed::Linear { from, to } => format!("anneal({from}, {to})"),
        }
    }
}

/// Everything a run needs. Defaults are the desk-scale values; the config
/// file mirrors the hyperparameter-table names as keys.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub env: EnvKind,
    pub model: ModelKind,
    pub agent: AgentKind,
    pub frame_budget: u64,
    pub seed: u64,
    pub eval_set: String,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub eval_episodes: usize,
    pub log_every_episodes: usize,

    // Augmented MDP
    pub planning_steps: usize,
    pub max_depth: usize,
    pub gamma: f64,
    pub cp: Annealed,

    // Model training
    pub model_lr: f64,
    pub buffer_capacity: usize,
    pub buffer_min_fill: usize,
    pub replay_ratio: f64,
    pub model_batch: usize,
    pub model_unroll: usize,
    pub scale_reward: f64,
    pub scale_done: f64,
    pub scale_feature: f64,
    pub scale_value: f64,
    pub scale_policy: f64,
    pub priority_alpha: f64,
    pub importance_beta: Annealed,
    pub model_hidden_dim: usize,

    // Actor-critic
    pub ac_lr: f64,
    pub baseline_scale: f64,
    pub clip_norm: f64,
    pub entropy_real: f64,
    pub entropy_imaginary: f64,
    pub use_hidden: bool,
    pub agent_trunk_width: usize,

    // Policy-improvement experiment
    pub improve_episodes: usize,
    pub improve_agent_frames: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvKind::MiniBox,
            model: ModelKind::Learned,
            agent: AgentKind::Ac,
            frame_budget: 300_000,
            seed: 1,
            eval_set: "builtin-50".into(),
            out_dir: PathBuf::from("runs/latest"),
            workers: 1,
            eval_episodes: 50,
            log_every_episodes: 20,
            planning_steps: 5,
            max_depth: 5,
            gamma: 0.97,
            cp: Annealed::Linear { from: 1.0, to: 0.0 },
            model_lr: 1e-4,
            buffer_capacity: 20_000,
            buffer_min_fill: 2_000,
            replay_ratio: 6.0,
            model_batch: 32,
            model_unroll: 5,
            scale_reward: 1.0,
            scale_done: 1.0,
            scale_feature: 10.0,
            scale_value: 0.25,
            scale_policy: 0.5,
            priority_alpha: 0.6,
            importance_beta: Annealed::Linear { from: 0.4, to: 1.0 },
            model_hidden_dim: 64,
            ac_lr: 3e-4,
            baseline_scale: 0.5,
            clip_norm: 1200.0,
            entropy_real: 1e-3,
            entropy_imaginary: 5e-5,
            use_hidden: true,
            agent_trunk_width: 64,
            improve_episodes: 2000,
            improve_agent_frames: 60_000,
        }
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::BadConfig(format!("expected a number, got `{s}`")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| Error::BadConfig(format!("expected an integer, got `{s}`")))
}

fn parse_u64(s: &str) -> Result<u64> {
    s.trim()
        .parse::<u64>()
        .map_err(|_| Error::BadConfig(format!("expected an integer, got `{s}`")))
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::BadConfig(format!("expected a bool, got `{other}`"))),
    }
}

impl RunConfig {
    /// Parse the line-based `key = value` format with `[Section]` headers
    /// and `#` comments. Unknown keys are rejected so typos surface early.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::BadConfig(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(&section, key, value).map_err(|e| {
                Error::BadConfig(format!("line {}: {e}", lineno + 1))
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_text(&text)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        match (section, key) {
            ("Run", "Environment") => {
                self.env = match value {
                    "chain" => EnvKind::Chain,
                    "minibox" => EnvKind::MiniBox,
                    other => return Err(Error::BadConfig(format!("unknown environment `{other}`"))),
                }
            }
            ("Run", "Model") => {
                self.model = match value {
                    "oracle" => ModelKind::Oracle,
                    "learned" => ModelKind::Learned,
                    other => return Err(Error::BadConfig(format!("unknown model `{other}`"))),
                }
            }
            ("Run", "Agent") => {
                self.agent = parse_agent(value)?;
            }
            ("Run", "Real frame budget") => self.frame_budget = parse_u64(value)?,
            ("Run", "Seed") => self.seed = parse_u64(value)?,
            ("Run", "Evaluation set") => self.eval_set = value.to_string(),
            ("Run", "Output directory") => self.out_dir = PathBuf::from(value),
            ("Run", "Workers") => self.workers = parse_usize(value)?.max(1),
            ("Run", "Evaluation episodes") => self.eval_episodes = parse_usize(value)?,
            ("Run", "Log every N episodes") => self.log_every_episodes = parse_usize(value)?.max(1),
            ("Run", "Policy improvement episodes") => self.improve_episodes = parse_usize(value)?,
            ("Run", "Policy improvement agent frames") => {
                self.improve_agent_frames = parse_u64(value)?
            }

            ("Thinker-augmented MDP", "Number of planning step K") => {
                self.planning_steps = parse_usize(value)?
            }
            ("Thinker-augmented MDP", "Maximum search depth L") => {
                self.max_depth = parse_usize(value)?
            }
            ("Thinker-augmented MDP", "Planning reward scaling c^p") => {
                self.cp = Annealed::parse(value)?
            }
            ("Thinker-augmented MDP", "Discount rate gamma") => self.gamma = parse_f64(value)?,

            ("Model", "Learning rate") => self.model_lr = parse_f64(value)?,
            ("Model", "Replay buffer size") => self.buffer_capacity = parse_usize(value)?,
            ("Model", "Minimum replay buffer size for sampling") => {
                self.buffer_min_fill = parse_usize(value)?
            }
            ("Model", "Replay ratio") => self.replay_ratio = parse_f64(value)?,
            ("Model", "Batch size") => self.model_batch = parse_usize(value)?,
            ("Model", "Model unroll length L") => self.model_unroll = parse_usize(value)?,
            ("Model", "Reward loss scaling c^r") => self.scale_reward = parse_f64(value)?,
            ("Model", "Termination indicator loss scaling c^d") => {
                self.scale_done = parse_f64(value)?
            }
            ("Model", "Feature loss scaling c^s") => self.scale_feature = parse_f64(value)?,
            ("Model", "Value loss scaling c^v") => self.scale_value = parse_f64(value)?,
            ("Model", "Policy loss scaling c^pi") => self.scale_policy = parse_f64(value)?,
            ("Model", "Priority exponent alpha") => self.priority_alpha = parse_f64(value)?,
            ("Model", "Importance exponent beta") => {
                self.importance_beta = Annealed::parse(value)?
            }
            ("Model", "Hidden dimension") => self.model_hidden_dim = parse_usize(value)?,

            ("Actor-critic", "Learning rate") => self.ac_lr = parse_f64(value)?,
            ("Actor-critic", "Baseline scaling") => self.baseline_scale = parse_f64(value)?,
            ("Actor-critic", "Clip global gradient norm") => self.clip_norm = parse_f64(value)?,
            ("Actor-critic", "Entropy regularizer for real actions") => {
                self.entropy_real = parse_f64(value)?
            }
            ("Actor-critic", "Entropy regularizer for imaginary and reset actions") => {
                self.entropy_imaginary = parse_f64(value)?
            }
            ("Actor-critic", "Use hidden state") => self.use_hidden = parse_bool(value)?,
            ("Actor-critic", "Trunk width") => self.agent_trunk_width = parse_usize(value)?,

            (s, k) => {
                return Err(Error::BadConfig(format!("unknown key `{k}` in section `[{s}]`")))
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.frame_budget < 1 {
            return Err(Error::BadConfig("frame budget must be >= 1".into()));
        }
        if self.planning_steps < 1 || self.max_depth < 1 {
            return Err(Error::BadConfig("K and L must be >= 1".into()));
        }
        if !(0.0 < self.gamma && self.gamma <= 1.0) {
            return Err(Error::BadConfig("gamma must lie in (0, 1]".into()));
        }
        if self.eval_set != "builtin-50" {
            return Err(Error::BadConfig(format!(
                "unknown evaluation set `{}`",
                self.eval_set
            )));
        }
        Ok(())
    }

    /// Render back to the file format (defaults included).
    pub fn to_text(&self) -> String {
        let mut sections: BTreeMap<&str, Vec<(String, String)>> = BTreeMap::new();
        let env = match self.env {
            EnvKind::Chain => "chain",
            EnvKind::MiniBox => "minibox",
        };
        let model = match self.model {
            ModelKind::Oracle => "oracle",
            ModelKind::Learned => "learned",
        };
        let agent = match &self.agent {
            AgentKind::Ac => "ac".to_string(),
            AgentKind::AcRaw => "ac-raw".to_string(),
            AgentKind::Mcts { temperature } => format!("mcts:{temperature}"),
            AgentKind::Exhaustive { depth } => format!("exhaustive:{depth}"),
            AgentKind::Random => "random".to_string(),
        };
        sections.insert(
            "Run",
            vec![
                ("Environment".into(), env.into()),
                ("Model".into(), model.into()),
                ("Agent".into(), agent),
                ("Real frame budget".into(), self.frame_budget.to_string()),
                ("Seed".into(), self.seed.to_string()),
                ("Evaluation set".into(), self.eval_set.clone()),
                (
                    "Output directory".into(),
                    self.out_dir.display().to_string(),
                ),
                ("Workers".into(), self.workers.to_string()),
                ("Evaluation episodes".into(), self.eval_episodes.to_string()),
                (
                    "Log every N episodes".into(),
                    self.log_every_episodes.to_string(),
                ),
                (
                    "Policy improvement episodes".into(),
                    self.improve_episodes.to_string(),
                ),
                (
                    "Policy improvement agent frames".into(),
                    self.improve_agent_frames.to_string(),
                ),
            ],
        );
        sections.insert(
            "Thinker-augmented MDP",
            vec![
                (
                    "Number of planning step K".into(),
                    self.planning_steps.to_string(),
                ),
                ("Maximum search depth L".into(), self.max_depth.to_string()),
                ("Planning reward scaling c^p".into(), self.cp.render()),
                ("Discount rate gamma".into(), self.gamma.to_string()),
            ],
        );
        sections.insert(
            "Model",
            vec![
                ("Learning rate".into(), self.model_lr.to_string()),
                ("Replay buffer size".into(), self.buffer_capacity.to_string()),
                (
                    "Minimum replay buffer size for sampling".into(),
                    self.buffer_min_fill.to_string(),
                ),
                ("Replay ratio".into(), self.replay_ratio.to_string()),
                ("Batch size".into(), self.model_batch.to_string()),
                ("Model unroll length L".into(), self.model_unroll.to_string()),
                ("Reward loss scaling c^r".into(), self.scale_reward.to_string()),
                (
                    "Termination indicator loss scaling c^d".into(),
                    self.scale_done.to_string(),
                ),
                ("Feature loss scaling c^s".into(), self.scale_feature.to_string()),
                ("Value loss scaling c^v".into(), self.scale_value.to_string()),
                ("Policy loss scaling c^pi".into(), self.scale_policy.to_string()),
                ("Priority exponent alpha".into(), self.priority_alpha.to_string()),
                (
                    "Importance exponent beta".into(),
                    self.importance_beta.render(),
                ),
                ("Hidden dimension".into(), self.model_hidden_dim.to_string()),
            ],
        );
        sections.insert(
            "Actor-critic",
            vec![
                ("Learning rate".into(), self.ac_lr.to_string()),
                ("Baseline scaling".into(), self.baseline_scale.to_string()),
                (
                    "Clip global gradient norm".into(),
                    self.clip_norm.to_string(),
                ),
                (
                    "Entropy regularizer for real actions".into(),
                    self.entropy_real.to_string(),
                ),
                (
                    "Entropy regularizer for imaginary and reset actions".into(),
                    self.entropy_imaginary.to_string(),
                ),
                ("Use hidden state".into(), self.use_hidden.to_string()),
                ("Trunk width".into(), self.agent_trunk_width.to_string()),
            ],
        );
        let order = ["Run", "Thinker-augmented MDP", "Model", "Actor-critic"];
        let mut out = String::new();
        for name in order {
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in &sections[name] {
                out.push_str(&format!("{k} = {v}\n"));
            }
            out.push('\n');
        }
        out
    }
}

fn parse_agent(value: &str) -> Result<AgentKind> {
    if value == "ac" {
        return Ok(AgentKind::Ac);
    }
    if value == "ac-raw" {
        return Ok(AgentKind::AcRaw);
    }
    if value == "random" {
        return Ok(AgentKind::Random);
    }
    if let Some(rest) = value.strip_prefix("exhaustive:") {
        return Ok(AgentKind::Exhaustive {
            depth: parse_usize(rest)?,
        });
    }
    if value == "mcts" {
        return Ok(AgentKind::Mcts { temperature: 0.25 });
    }
    if let Some(rest) = value.strip_prefix("mcts:") {
        return Ok(AgentKind::Mcts {
            temperature: parse_f64(rest)?,
        });
    }
    Err(Error::BadConfig(format!("unknown agent `{value}`")))
}
