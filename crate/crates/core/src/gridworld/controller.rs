use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::policy::sample_row;
use crate::error::{invalid, Result};
use crate::rng::Rng;
use crate::weighting::{weight, WeightRule};

/// How the behavior action is chosen from the imitation and RL candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "adacong")]
    AdaConG,
    #[serde(rename = "hard_adacong")]
    HardAdaConG,
    #[serde(rename = "ibrl")]
    Ibrl,
    #[serde(rename = "soft_ibrl")]
    SoftIbrl,
    #[serde(rename = "pure_rl")]
    PureRl,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::AdaConG, Mode::HardAdaConG, Mode::Ibrl, Mode::SoftIbrl, Mode::PureRl];

    pub fn name(self) -> &'static str {
        match self {
            Mode::AdaConG => "adacong",
            Mode::HardAdaConG => "hard_adacong",
            Mode::Ibrl => "ibrl",
            Mode::SoftIbrl => "soft_ibrl",
            Mode::PureRl => "pure_rl",
        }
    }

    /// Whether the mode reads conformal uncertainties.
    pub fn uses_uncertainty(self) -> bool {
        matches!(self, Mode::AdaConG | Mode::HardAdaConG)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

/// `eps = min(0.5 t / S + 0.5 e / E, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub total_steps: usize,
    pub total_episodes: usize,
}

impl EpsilonSchedule {
    pub fn new(total_steps: usize, total_episodes: usize) -> Result<Self> {
        if total_steps == 0 || total_episodes == 0 {
            return Err(invalid("epsilon", "totals must be positive"));
        }
        Ok(Self { total_steps, total_episodes })
    }

    pub fn epsilon(&self, step: usize, episode: usize) -> f64 {
        let e = 0.5 * step as f64 / self.total_steps as f64 + 0.5 * episode as f64 / self.total_episodes as f64;
        e.min(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Imitation,
    Rl,
}

/// Uniform draws consumed by one decision. Every mode takes the same four
/// draws per step, so runs that differ only in mode share their random stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draws {
    pub il_action: f64,
    pub rl_action: f64,
    pub explore: f64,
    pub choose: f64,
}

impl Draws {
    pub fn sample(rng: &mut Rng) -> Self {
        Self {
            il_action: rng.random(),
            rl_action: rng.random(),
            explore: rng.random(),
            choose: rng.random(),
        }
    }
}

/// What the controller sees at one state.
#[derive(Debug, Clone, Copy)]
pub struct DecisionInput<'a> {
    pub il_row: &'a [f64],
    pub rl_row: &'a [f64],
    pub q_row: &'a [f64],
    pub u_il: f64,
    pub u_rl: f64,
    pub epsilon: f64,
    /// Inverse temperature for the two-candidate Boltzmann draw of SoftIBRL.
    pub soft_ibrl_beta: f64,
    /// Replaces the computed AdaConG weight when set.
    pub weight_override: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: usize,
    pub provenance: Provenance,
    pub il_action: usize,
    pub rl_action: usize,
    /// Probability of taking the imitation candidate outside exploration.
    pub weight: f64,
}

/// Picks between the imitation candidate `a_I ~ pi_I` and the RL candidate
/// `a_R ~ pi_R`. With probability `epsilon` every mode takes `a_R`.
pub fn select_action(mode: Mode, input: &DecisionInput<'_>, draws: Draws) -> Result<Decision> {
    let a_i = sample_row(input.il_row, draws.il_action);
    let a_r = sample_row(input.rl_row, draws.rl_action);
    let w = match mode {
        Mode::PureRl => 0.0,
        Mode::AdaConG => match input.weight_override {
            Some(w) => w,
            None => weight(WeightRule::RelativeSoftmax, input.u_il, Some(input.u_rl))?,
        },
        Mode::HardAdaConG => match input.weight_override {
            Some(w) => w,
            None => weight(WeightRule::HardArgmax, input.u_il, Some(input.u_rl))?,
        },
        // ties go to the imitation action
        Mode::Ibrl => {
            if input.q_row[a_i] >= input.q_row[a_r] {
                1.0
            } else {
                0.0
            }
        }
        Mode::SoftIbrl => {
            let d = input.soft_ibrl_beta * (input.q_row[a_r] - input.q_row[a_i]);
            1.0 / (1.0 + d.exp())
        }
    };
    let take_il = draws.explore >= input.epsilon && draws.choose < w;
    Ok(if take_il {
        Decision { action: a_i, provenance: Provenance::Imitation, il_action: a_i, rl_action: a_r, weight: w }
    } else {
        Decision { action: a_r, provenance: Provenance::Rl, il_action: a_i, rl_action: a_r, weight: w }
    })
}

/// `KL(p || q)` over two rows.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi.ln() - qi.ln()))
        .sum()
}

/// `task_loss + w * KL(pi_R || pi_I)` at one state.
pub fn kl_guided_loss(rl_row: &[f64], il_row: &[f64], task_loss: f64, w: f64) -> f64 {
    if w == 0.0 {
        return task_loss;
    }
    task_loss + w * kl_divergence(rl_row, il_row)
}

/// Gradient of `KL(softmax(z) || q)` with respect to the logits `z`:
/// `p_j (log p_j - log q_j - KL)`.
pub fn kl_logit_gradient(p: &[f64], q: &[f64]) -> Vec<f64> {
    let kl = kl_divergence(p, q);
    p.iter().zip(q).map(|(pj, qj)| pj * (pj.ln() - qj.ln() - kl)).collect()
}
