use serde::{Deserialize, Serialize};

use super::controller::{kl_logit_gradient, select_action, DecisionInput, Draws, EpsilonSchedule, Mode, Provenance};
use super::env::{Action, GridEnv, Outcome, Variant, N_ACTIONS};
use super::expert::generate_expert_demos;
use super::policy::{behavior_clone, calibrate_il, set_size, CategoricalPolicy, DEFAULT_BC_SMOOTHING};
use super::softq::{ReplayBuffer, SoftQAgent, SoftQConfig, Transition};
use crate::conformal::neg_log_prob;
use crate::error::{invalid, Error, Result};
use crate::record::RunRecord;
use crate::rng::{stream, Stream};
use crate::stream::{SlidingCalibrator, StreamConfig, DEFAULT_SMOOTHING};

/// Everything that defines one gridworld training run apart from mode and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridworldConfig {
    pub env: Variant,
    /// Grid text replacing the bundled layout of `env`.
    pub layout: Option<String>,
    /// Grid text replacing the layout the demonstrations come from.
    pub demo_layout: Option<String>,
    /// Training episodes `E_total`.
    pub episodes: usize,
    /// `S_total` of the exploration schedule; defaults to
    /// `episodes * max_steps`.
    pub total_steps: Option<usize>,
    pub demo_episodes: usize,
    pub bc_smoothing: f64,
    pub alpha: f64,
    /// Imitation calibration pairs.
    pub il_calibration: usize,
    /// RL calibration window `N`.
    pub window: usize,
    /// RL scores per calibration update `m`.
    pub batch: usize,
    pub smoothing: f64,
    pub softq: SoftQConfig,
    /// Inverse temperature of SoftIBRL's two-candidate draw; defaults to
    /// `1 / softq.temperature`.
    pub soft_ibrl_beta: Option<f64>,
    /// Step size of the weighted KL pull of `pi_R` toward `pi_I` for the
    /// conformal modes; 0 disables it.
    pub kl_guidance: f64,
    pub epsilon_override: Option<f64>,
    pub weight_override: Option<f64>,
}

impl Default for GridworldConfig {
    fn default() -> Self {
        Self {
            env: Variant::Lava1,
            layout: None,
            demo_layout: None,
            episodes: 400,
            total_steps: None,
            demo_episodes: 50,
            bc_smoothing: DEFAULT_BC_SMOOTHING,
            alpha: 0.1,
            il_calibration: 1000,
            window: 1000,
            batch: 128,
            smoothing: DEFAULT_SMOOTHING,
            softq: SoftQConfig::default(),
            soft_ibrl_beta: None,
            kl_guidance: 0.0,
            epsilon_override: None,
            weight_override: None,
        }
    }
}

impl GridworldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(invalid("episodes", "must be positive"));
        }
        if self.demo_episodes == 0 {
            return Err(invalid("demo_episodes", "must be positive"));
        }
        if self.total_steps == Some(0) {
            return Err(invalid("total_steps", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        if !(self.kl_guidance >= 0.0) {
            return Err(invalid("kl_guidance", "must be >= 0"));
        }
        for (name, v) in [("epsilon_override", self.epsilon_override), ("weight_override", self.weight_override)] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(invalid(name, format!("must lie in [0, 1], got {v}")));
                }
            }
        }
        if let Some(b) = self.soft_ibrl_beta {
            if !(b > 0.0 && b.is_finite()) {
                return Err(invalid("soft_ibrl_beta", "must be > 0"));
            }
        }
        self.softq.validate()
    }

    /// The training environment.
    pub fn grid(&self) -> Result<GridEnv> {
        match &self.layout {
            Some(text) => GridEnv::parse(text),
            None => Ok(GridEnv::variant(self.env)),
        }
    }

    /// The environment demonstrations are collected in. A custom `layout`
    /// without a `demo_layout` demonstrates on itself.
    pub fn demo_grid(&self) -> Result<GridEnv> {
        match (&self.demo_layout, &self.layout) {
            (Some(text), _) => GridEnv::parse(text),
            (None, Some(text)) => GridEnv::parse(text),
            (None, None) => Ok(GridEnv::variant(self.env.demo_source())),
        }
    }

    fn schedule(&self) -> Result<EpsilonSchedule> {
        EpsilonSchedule::new(self.total_steps.unwrap_or(self.episodes * super::env::MAX_STEPS), self.episodes)
    }
}

/// Per-episode summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub reward: f64,
    pub steps: usize,
    pub outcome: Outcome,
    /// Mean `|C_R(s)|` over visited states.
    pub mean_u_rl: f64,
    /// Mean `|C_I(s)|` over visited states.
    pub mean_u_il: f64,
    pub il_fraction: f64,
    pub epsilon: f64,
    pub rl_quantile: f64,
}

/// The behavior policy's imitation prior and its static calibration.
#[derive(Debug, Clone)]
pub struct ImitationPrior {
    pub policy: CategoricalPolicy,
    pub scores: Vec<f64>,
    pub quantile: f64,
}

/// Behavior-clones expert demos on the variant's demo source and calibrates
/// the result there.
pub fn imitation_prior(cfg: &GridworldConfig, seed: u64) -> Result<ImitationPrior> {
    let source = cfg.demo_grid()?;
    let demos = generate_expert_demos(&source, cfg.demo_episodes, &mut stream(seed, Stream::Demos))?;
    let policy = behavior_clone(&demos, source.n_states(), cfg.bc_smoothing)?;
    let cal = calibrate_il(&policy, &source, cfg.il_calibration, cfg.alpha, &mut stream(seed, Stream::Calibration))?;
    if cal.quantile.is_infinite() {
        return Err(invalid("il_calibration", "too few pairs for a finite quantile"));
    }
    Ok(ImitationPrior { policy, scores: cal.scores, quantile: cal.quantile.value })
}

#[derive(Debug, Clone)]
pub struct GridworldRun {
    pub mode: Mode,
    pub seed: u64,
    pub il_quantile: f64,
    pub episodes: Vec<EpisodeStats>,
    /// `(cell, action)` per step when tracing was requested.
    pub trajectory: Vec<(u32, u8)>,
    pub agent: SoftQAgent,
}

impl GridworldRun {
    pub fn rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.reward).collect()
    }

    /// Mean reward over the last `n` episodes.
    pub fn final_reward(&self, n: usize) -> f64 {
        let tail = &self.episodes[self.episodes.len().saturating_sub(n)..];
        tail.iter().map(|e| e.reward).sum::<f64>() / tail.len() as f64
    }

    pub fn to_record(&self, run_id: &str) -> RunRecord {
        let mut r = RunRecord::new(run_id, self.seed);
        for (i, e) in self.episodes.iter().enumerate() {
            let step = i as u64;
            r.push(step, "episode/reward", e.reward);
            r.push(step, "episode/steps", e.steps as f64);
            r.push(step, "episode/success", f64::from(u8::from(e.outcome == Outcome::Goal)));
            r.push(step, "episode/u_rl", e.mean_u_rl);
            r.push(step, "episode/u_il", e.mean_u_il);
            r.push(step, "episode/il_fraction", e.il_fraction);
            r.push(step, "episode/epsilon", e.epsilon);
            r.push(step, "episode/rl_quantile", e.rl_quantile);
        }
        r
    }
}

/// Trains one soft-Q agent under `mode`.
pub fn run_gridworld(cfg: &GridworldConfig, mode: Mode, seed: u64, trace: bool) -> Result<GridworldRun> {
    cfg.validate()?;
    let prior = imitation_prior(cfg, seed)?;
    run_with_prior(cfg, mode, seed, &prior, trace)
}

/// Like [`run_gridworld`] with a precomputed imitation prior.
pub fn run_with_prior(cfg: &GridworldConfig, mode: Mode, seed: u64, prior: &ImitationPrior, trace: bool) -> Result<GridworldRun> {
    cfg.validate()?;
    let env = cfg.grid()?;
    if prior.policy.n_states() != env.n_states() {
        return Err(Error::DimensionMismatch { expected: env.n_states(), got: prior.policy.n_states() });
    }
    let schedule = cfg.schedule()?;
    let stream_cfg = StreamConfig {
        window: cfg.window,
        batch: cfg.batch,
        alpha: cfg.alpha,
        smoothing: cfg.smoothing,
    };
    let mut calibrator = SlidingCalibrator::warm_start_ordered(&prior.scores, prior.quantile, stream_cfg)?;
    let mut agent = SoftQAgent::new(env.n_states(), N_ACTIONS, cfg.softq)?;
    let mut replay = ReplayBuffer::new(cfg.softq.replay_capacity);
    let mut controller_rng = stream(seed, Stream::Controller);
    let mut replay_rng = stream(seed, Stream::Replay);
    let beta = cfg.soft_ibrl_beta.unwrap_or(1.0 / cfg.softq.temperature);
    let tau = cfg.softq.temperature;

    let mut pending: Vec<f64> = Vec::with_capacity(cfg.batch);
    let mut episodes = Vec::with_capacity(cfg.episodes);
    let mut trajectory = Vec::new();
    let mut t = 0usize;
    for e in 0..cfg.episodes {
        let mut state = env.reset();
        let (mut reward, mut u_rl_sum, mut u_il_sum, mut il_steps) = (0.0, 0.0, 0.0, 0usize);
        let mut epsilon;
        let outcome = loop {
            epsilon = cfg.epsilon_override.unwrap_or_else(|| schedule.epsilon(t, e));
            let s = state.cell;
            let il_row = prior.policy.row(s);
            let rl_row = agent.policy_row(s);
            let u_il = set_size(il_row, prior.quantile) as f64;
            let u_rl = set_size(&rl_row, calibrator.quantile()) as f64;
            let input = DecisionInput {
                il_row,
                rl_row: &rl_row,
                q_row: agent.q_row(s),
                u_il,
                u_rl,
                epsilon,
                soft_ibrl_beta: beta,
                weight_override: cfg.weight_override,
            };
            let d = select_action(mode, &input, Draws::sample(&mut controller_rng))?;
            if trace {
                trajectory.push((s as u32, d.action as u8));
            }
            let step = env.step(state, Action::from_index(d.action).expect("five actions"));
            replay.push(Transition {
                state: s,
                action: d.action,
                reward: step.reward,
                next: step.next.cell,
                terminal: matches!(step.outcome, Outcome::Goal | Outcome::Lava),
            });

            pending.push(neg_log_prob(rl_row[d.rl_action]));
            if pending.len() == cfg.batch {
                calibrator.update(&pending)?;
                pending.clear();
            }

            let batch = replay.sample(cfg.softq.batch, &mut replay_rng);
            agent.update(&batch);
            if cfg.kl_guidance > 0.0 && mode.uses_uncertainty() && d.weight > 0.0 {
                let p = super::softq::boltzmann(agent.q_row(s), tau);
                let g = kl_logit_gradient(&p, il_row);
                let scale = cfg.kl_guidance * d.weight / tau;
                for (q, gj) in agent.q_row_mut(s).iter_mut().zip(g) {
                    *q -= scale * gj;
                }
            }

            reward += step.reward;
            u_rl_sum += u_rl;
            u_il_sum += u_il;
            if d.provenance == Provenance::Imitation {
                il_steps += 1;
            }
            t += 1;
            state = step.next;
            if step.done {
                break step.outcome;
            }
        };
        let n = state.steps as f64;
        episodes.push(EpisodeStats {
            reward,
            steps: state.steps,
            outcome,
            mean_u_rl: u_rl_sum / n,
            mean_u_il: u_il_sum / n,
            il_fraction: il_steps as f64 / n,
            epsilon,
            rl_quantile: calibrator.quantile(),
        });
    }
    Ok(GridworldRun {
        mode,
        seed,
        il_quantile: prior.quantile,
        episodes,
        trajectory,
        agent,
    })
}
