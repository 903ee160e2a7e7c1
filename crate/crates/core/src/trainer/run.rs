//! The single-threaded training loop and trained-policy evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::episode::{Episode, EpisodeBatch, ReplayBuffer};
use super::learner::{target_update, train_step, StepSchedule, TrainStats};
use super::metrics::MetricsRow;
use super::network::{Mode, SicaNetwork, StepContext};
use super::rollout::{evaluate, rollout_episode, EvalSummary};
use super::schedule::Schedules;
use crate::envs::Environment;
use crate::error::Result;
use crate::numcore::{Optimizer, ParamSet};

const STREAM_INIT: u64 = 0;
const STREAM_ENV: u64 = 1;
const STREAM_EXPLORE: u64 = 2;
const STREAM_REPLAY: u64 = 3;
const STREAM_EVAL: u64 = 4;

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

/// Environment seeds used for every evaluation of a run, so successive
/// evaluations (and both modes) see the same episodes.
pub fn eval_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = stream(seed, STREAM_EVAL);
    (0..count).map(|_| rng.random()).collect()
}

/// A network with fixed parameters at a given training step.
#[derive(Clone, Debug)]
pub struct Policy {
    pub cfg: RunConfig,
    pub net: SicaNetwork,
    pub params: ParamSet,
    /// Completed updates; selects the communication weight and peer budget
    /// of centralized evaluation.
    pub step: u64,
}

impl Policy {
    /// Freshly initialized network for `cfg`.
    pub fn init(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = cfg.env.build()?.spec();
        let (net, params) = SicaNetwork::build(cfg, spec, &mut stream(cfg.run.seed, STREAM_INIT))?;
        Ok(Self {
            cfg: cfg.clone(),
            net,
            params,
            step: 0,
        })
    }

    /// Rebuilds the network for `cfg` and takes over `params`, which must
    /// match its layout exactly.
    pub fn from_params(cfg: &RunConfig, params: ParamSet, step: u64) -> Result<Self> {
        let mut p = Self::init(cfg)?;
        p.params.check_layout(&params)?;
        p.params = params;
        p.step = step;
        Ok(p)
    }

    pub fn schedules(&self) -> Schedules {
        Schedules::from_config(&self.cfg, self.net.n_agents())
    }

    pub fn context(&self, mode: Mode) -> StepContext {
        context(&self.schedules(), self.step, mode)
    }

    pub fn evaluate(&self, env: &mut dyn Environment, seeds: &[u64], mode: Mode) -> Result<(EvalSummary, Vec<Episode>)> {
        evaluate(&self.net, &self.params, env, seeds, self.context(mode))
    }
}

pub fn context(s: &Schedules, t: u64, mode: Mode) -> StepContext {
    match mode {
        Mode::Centralized => StepContext {
            alpha: s.alpha(t),
            peers: s.peers(t),
            mode,
        },
        Mode::Decentralized => StepContext::decentralized(),
    }
}

pub struct Trainer {
    pub policy: Policy,
    pub target: ParamSet,
    optimizer: Optimizer,
    buffer: ReplayBuffer,
    env: Box<dyn Environment>,
    schedules: Schedules,
    episodes: u64,
    env_rng: ChaCha8Rng,
    explore_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    oracle: Option<f64>,
    eval_seeds: Vec<u64>,
}

impl Trainer {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let policy = Policy::init(cfg)?;
        let env = cfg.env.build()?;
        let t = &cfg.train;
        let clip = (t.grad_clip > 0.0).then_some(t.grad_clip);
        let optimizer = Optimizer::new(t.optimizer, t.lr, clip)?;
        let seed = cfg.run.seed;
        Ok(Self {
            target: policy.params.clone(),
            schedules: policy.schedules(),
            optimizer,
            buffer: ReplayBuffer::new(t.buffer_capacity),
            oracle: env.oracle_optimal_return().ok(),
            env,
            episodes: 0,
            env_rng: stream(seed, STREAM_ENV),
            explore_rng: stream(seed, STREAM_EXPLORE),
            replay_rng: stream(seed, STREAM_REPLAY),
            eval_seeds: eval_seeds(seed, t.eval_episodes),
            policy,
        })
    }

    pub fn cfg(&self) -> &RunConfig {
        &self.policy.cfg
    }

    /// Completed updates.
    pub fn step(&self) -> u64 {
        self.policy.step
    }

    pub fn schedules(&self) -> &Schedules {
        &self.schedules
    }

    pub fn oracle(&self) -> Option<f64> {
        self.oracle
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn is_done(&self) -> bool {
        self.step() >= self.cfg().run.total_steps
    }

    fn collect(&mut self, t: u64) -> Result<Episode> {
        let env_seed = self.env_rng.random();
        let eps = self.schedules.epsilon(t);
        let ctx = context(&self.schedules, t, Mode::Centralized);
        let p = &self.policy;
        let ep = rollout_episode(&p.net, &p.params, self.env.as_mut(), env_seed, eps, ctx, &mut self.explore_rng)?;
        self.episodes += 1;
        Ok(ep)
    }

    /// Fills the buffer up to one batch with episodes at the step-0 schedule.
    pub fn warm_up(&mut self) -> Result<()> {
        while self.buffer.len() < self.cfg().train.batch_size {
            let ep = self.collect(0)?;
            self.buffer.push(ep);
        }
        Ok(())
    }

    /// Collect, update, maybe sync the target and evaluate. One metrics row.
    pub fn train_iteration(&mut self) -> Result<MetricsRow> {
        self.warm_up()?;
        let t = self.step();
        let mut ret = 0.0;
        let per_step = self.cfg().train.episodes_per_step;
        for _ in 0..per_step {
            let ep = self.collect(t)?;
            ret += ep.total_return();
            self.buffer.push(ep);
        }
        ret /= per_step as f64;

        let sched = StepSchedule {
            alpha: self.schedules.alpha(t),
            sigma: self.schedules.sigma(t),
            peers: self.schedules.peers(t),
        };
        let stats = self.update(t, sched)?;

        let cfg = self.cfg();
        let (period, interval, total) = (cfg.train.target_period, cfg.train.eval_interval, cfg.run.total_steps);
        self.policy.step = t + 1;
        target_update(&self.policy.params, &mut self.target, period, t + 1)?;
        let (mut cen, mut dec) = (None, None);
        if (interval > 0 && (t + 1) % interval == 0) || t + 1 == total {
            cen = Some(self.evaluate(Mode::Centralized)?.mean);
            dec = Some(self.evaluate(Mode::Decentralized)?.mean);
        }
        Ok(MetricsRow {
            step: t,
            episode: self.episodes,
            ret,
            optimal_return: self.oracle,
            l_td: stats.l_td,
            l_align: stats.l_align,
            sigma: sched.sigma,
            alpha: sched.alpha,
            epsilon: self.schedules.epsilon(t),
            grad_norm: stats.grad_norm,
            eval_return_centralized: cen,
            eval_return_decentralized: dec,
        })
    }

    fn update(&mut self, t: u64, sched: StepSchedule) -> Result<TrainStats> {
        let batch_size = self.cfg().train.batch_size;
        let sample = self.buffer.sample(batch_size, &mut self.replay_rng)?;
        let batch = EpisodeBatch::new(&sample, &self.policy.net)?;
        let cfg = &self.policy.cfg;
        train_step(
            &self.policy.net,
            &mut self.policy.params,
            &self.target,
            &mut self.optimizer,
            &batch,
            cfg.train.gamma,
            sched,
            cfg.train.align_target,
            t,
        )
    }

    /// Greedy evaluation on the run's fixed evaluation seeds.
    pub fn evaluate(&mut self, mode: Mode) -> Result<EvalSummary> {
        let seeds = self.eval_seeds.clone();
        Ok(self.policy.evaluate(self.env.as_mut(), &seeds, mode)?.0)
    }

    /// Trains to `total_steps`, handing every row to `on_row`.
    pub fn run(&mut self, mut on_row: impl FnMut(&Self, &MetricsRow) -> Result<()>) -> Result<()> {
        while !self.is_done() {
            let row = self.train_iteration()?;
            on_row(self, &row)?;
        }
        Ok(())
    }
}
