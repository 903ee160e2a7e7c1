//! Training pipeline: rollouts with epsilon-greedy exploration, episodic
//! replay, target networks, the TD + alignment loss, and the ablation presets.

mod config;
mod episode;
mod learner;
mod metrics;
mod network;
mod rollout;
mod run;
mod schedule;

pub use config::{AblateSection, AlignTarget, ModelSection, RunConfig, RunSection, ScheduleSection, TrainSection, Variant};
pub use episode::{Episode, EpisodeBatch, ReplayBuffer, TrajectoryRecord};
pub use learner::{build_loss, masked_td_loss, target_update, td_target, train_step, StepSchedule, TrainStats};
pub use metrics::{read_metrics, MetricsRow, MetricsWriter, METRICS_HEADER};
pub use network::{Mode, SicaNetwork, StepContext, StepOutput};
pub use rollout::{epsilon_greedy, evaluate, rollout_episode, AgentMemory, EvalSummary};
pub use run::{context, eval_seeds, Policy, Trainer};
pub use schedule::{AlphaPlan, Schedules, SigmaSchedule};
