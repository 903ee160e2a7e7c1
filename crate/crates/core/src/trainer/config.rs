//! Run configuration. Every key has a default; unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::comm::SelfWeighting;
use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::mixer::{MixerKind, WeightTransform};
use crate::numcore::OptimizerKind;

/// Which agent architecture and schedule preset to train.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[default]
    #[serde(rename = "SICA", alias = "sica")]
    Sica,
    /// Selection Block replaced by an MLP and a GRU cell.
    #[serde(rename = "ICA", alias = "ica")]
    Ica,
    /// Communication weight pinned at 0 and no alignment loss.
    #[serde(rename = "SICA-ZERO", alias = "sica-zero")]
    SicaZero,
    /// Communication weight pinned at 1, dropping to 0 near the end.
    #[serde(rename = "SICA-ONE", alias = "sica-one")]
    SicaOne,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Sica, Variant::SicaZero, Variant::SicaOne, Variant::Ica];

    pub fn key(self) -> &'static str {
        match self {
            Self::Sica => "SICA",
            Self::Ica => "ICA",
            Self::SicaZero => "SICA-ZERO",
            Self::SicaOne => "SICA-ONE",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SICA" => Ok(Self::Sica),
            "ICA" => Ok(Self::Ica),
            "SICA-ZERO" => Ok(Self::SicaZero),
            "SICA-ONE" => Ok(Self::SicaOne),
            _ => Err(Error::Config(format!("unknown variant `{s}`"))),
        }
    }
}

/// Which way the alignment loss pushes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignTarget {
    /// True information is a fixed target; the Regeneration Block learns.
    #[default]
    TrueInfo,
    /// Regenerated information is the fixed target; the Communication path learns.
    Regenerated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub total_steps: u64,
    pub variant: Variant,
    pub mixer: MixerKind,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 1,
            total_steps: 10_000,
            variant: Variant::Sica,
            mixer: MixerKind::Qmix,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Mini-buffer capacity `b`.
    pub window: usize,
    /// S6 state width `N`, also the hidden-state width `d_h` used by attention.
    pub state_dim: usize,
    pub hidden: usize,
    pub mixer_embed: usize,
    pub weight_transform: WeightTransform,
    pub self_weighting: SelfWeighting,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            window: 4,
            state_dim: 32,
            hidden: 64,
            mixer_embed: 32,
            weight_transform: WeightTransform::Abs,
            self_weighting: SelfWeighting::Literal,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub target_period: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of `total_steps` over which epsilon anneals linearly.
    pub eps_anneal_frac: f64,
    /// Environment episodes collected before each training step.
    pub episodes_per_step: usize,
    /// Evaluate every this many training steps (0 disables periodic evaluation).
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Save a checkpoint every this many steps (0: only at the end).
    pub checkpoint_interval: u64,
    pub align_target: AlignTarget,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Sgd,
            lr: 5e-4,
            grad_clip: 10.0,
            gamma: 0.99,
            batch_size: 32,
            buffer_capacity: 5000,
            target_period: 200,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_anneal_frac: 0.1,
            episodes_per_step: 1,
            eval_interval: 500,
            eval_episodes: 32,
            checkpoint_interval: 0,
            align_target: AlignTarget::TrueInfo,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    /// Steps until the communication weight reaches its final value;
    /// defaults to 80% of `total_steps`.
    pub t_max: Option<u64>,
    pub alpha_start: f64,
    pub alpha_final: f64,
    /// Steps until the Regeneration Block stops reading peers; defaults to 20%.
    pub peer_decay_steps: Option<u64>,
    /// Alignment-weight threshold `T`; defaults to 50%.
    pub sigma_threshold: Option<u64>,
    pub beta1: f64,
    pub beta2: f64,
    /// SICA-ONE drops the communication weight to 0 from this fraction on.
    pub one_switch_frac: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            t_max: None,
            alpha_start: 1.0,
            alpha_final: 0.0,
            peer_decay_steps: None,
            sigma_threshold: None,
            beta1: 0.1,
            beta2: 1.0,
            one_switch_frac: 0.95,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    /// Parallel cells (1 = sequential).
    pub workers: usize,
}

impl Default for AblateSection {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            seeds: vec![1, 2, 3],
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub env: EnvConfig,
    pub model: ModelSection,
    pub train: TrainSection,
    pub schedule: ScheduleSection,
    pub ablate: AblateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run: RunSection::default(),
            env: EnvConfig::Climb,
            model: ModelSection::default(),
            train: TrainSection::default(),
            schedule: ScheduleSection::default(),
            ablate: AblateSection::default(),
        }
    }
}

fn frac(total: u64, f: f64) -> u64 {
    (total as f64 * f).round() as u64
}

impl RunConfig {
    pub fn t_max(&self) -> u64 {
        self.schedule.t_max.unwrap_or_else(|| frac(self.run.total_steps, 0.8)).max(1)
    }

    pub fn peer_decay_steps(&self) -> u64 {
        self.schedule
            .peer_decay_steps
            .unwrap_or_else(|| frac(self.run.total_steps, 0.2))
    }

    pub fn sigma_threshold(&self) -> u64 {
        self.schedule
            .sigma_threshold
            .unwrap_or_else(|| frac(self.run.total_steps, 0.5))
    }

    pub fn eps_anneal_steps(&self) -> u64 {
        frac(self.run.total_steps, self.train.eps_anneal_frac)
    }

    pub fn one_switch_step(&self) -> u64 {
        frac(self.run.total_steps, self.schedule.one_switch_frac)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let t = &self.train;
        let m = &self.model;
        let s = &self.schedule;
        if self.run.total_steps == 0 {
            return bad("run.total_steps must be positive".into());
        }
        if m.window == 0 || m.state_dim == 0 || m.hidden == 0 || m.mixer_embed == 0 {
            return bad("model widths and window must be positive".into());
        }
        if !(t.lr >= 0.0 && t.lr.is_finite()) {
            return bad(format!("train.lr must be finite and >= 0, got {}", t.lr));
        }
        if !(t.gamma > 0.0 && t.gamma <= 1.0) {
            return bad(format!("train.gamma must lie in (0, 1], got {}", t.gamma));
        }
        if t.batch_size == 0 || t.buffer_capacity < t.batch_size {
            return bad("train.batch_size must be positive and <= train.buffer_capacity".into());
        }
        if t.target_period == 0 {
            return bad("train.target_period must be >= 1".into());
        }
        for (k, v) in [("eps_start", t.eps_start), ("eps_end", t.eps_end), ("eps_anneal_frac", t.eps_anneal_frac)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("train.{k} must lie in [0, 1], got {v}"));
            }
        }
        if t.episodes_per_step == 0 {
            return bad("train.episodes_per_step must be >= 1".into());
        }
        if t.eval_episodes == 0 {
            return bad("train.eval_episodes must be >= 1".into());
        }
        if s.beta1 < 0.0 || s.beta2 < 0.0 {
            return bad("schedule.beta1 and schedule.beta2 must be nonnegative".into());
        }
        if !(0.0..=1.0).contains(&s.alpha_start) || !(0.0..=1.0).contains(&s.alpha_final) {
            return bad("schedule alpha endpoints must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&s.one_switch_frac) {
            return bad("schedule.one_switch_frac must lie in [0, 1]".into());
        }
        if self.ablate.variants.is_empty() || self.ablate.seeds.is_empty() || self.ablate.workers == 0 {
            return bad("ablate.variants, ablate.seeds and ablate.workers must be nonempty/positive".into());
        }
        Ok(())
    }
}
