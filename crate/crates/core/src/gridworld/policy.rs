use rand::Rng as _;

use super::env::{Action, EpisodeState, GridEnv, N_ACTIONS};
use super::expert::Demo;
use crate::conformal::{compute_quantile, neg_log_prob, CalibrationSet, ConformalQuantile};
use crate::error::{invalid, Error, Result};
use crate::rng::Rng;

/// Minimum probability of any action in a policy row.
pub const POLICY_FLOOR: f64 = 1e-6;

/// Default additive smoothing for behavior cloning.
pub const DEFAULT_BC_SMOOTHING: f64 = 0.01;

/// Mixes `row` with the uniform distribution so every entry is at least
/// `floor` and the row still sums to one.
pub fn apply_floor(row: &mut [f64], floor: f64) {
    let k = row.len() as f64;
    let keep = 1.0 - k * floor;
    for p in row.iter_mut() {
        *p = keep * *p + floor;
    }
}

/// Per-state action distributions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalPolicy {
    n_actions: usize,
    rows: Vec<f64>,
}

impl CategoricalPolicy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_actions,
            rows: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Builds a policy from explicit rows. Each row must sum to one within
    /// 1e-9; rows are floored afterwards.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_actions = rows.first().map_or(0, Vec::len);
        if n_actions == 0 {
            return Err(invalid("rows", "need at least one state and one action"));
        }
        let mut flat = Vec::with_capacity(rows.len() * n_actions);
        for (s, mut row) in rows.into_iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::DimensionMismatch { expected: n_actions, got: row.len() });
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::MalformedDistribution(format!("row {s} sums to {sum}")));
            }
            apply_floor(&mut row, POLICY_FLOOR);
            flat.extend(row);
        }
        Ok(Self { n_actions, rows: flat })
    }

    pub fn n_states(&self) -> usize {
        self.rows.len() / self.n_actions
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.rows[state * self.n_actions..(state + 1) * self.n_actions]
    }

    /// Inverse-CDF draw using a uniform `u` in `[0, 1)`.
    pub fn sample_with(&self, state: usize, u: f64) -> usize {
        sample_row(self.row(state), u)
    }

    pub fn sample(&self, state: usize, rng: &mut Rng) -> usize {
        self.sample_with(state, rng.random::<f64>())
    }
}

pub(crate) fn sample_row(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

/// Count-based behavior cloning with additive smoothing `smoothing`.
/// Unvisited states get the uniform row.
pub fn behavior_clone(demos: &[Demo], n_states: usize, smoothing: f64) -> Result<CategoricalPolicy> {
    if demos.is_empty() {
        return Err(invalid("demos", "no demonstrations"));
    }
    if !(smoothing >= 0.0) {
        return Err(invalid("smoothing", format!("must be >= 0, got {smoothing}")));
    }
    let mut counts = vec![0.0; n_states * N_ACTIONS];
    for d in demos {
        if d.state >= n_states || d.action >= N_ACTIONS {
            return Err(Error::TargetOutOfRange { index: d.state.max(d.action), len: n_states });
        }
        counts[d.state * N_ACTIONS + d.action] += 1.0;
    }
    let mut rows = Vec::with_capacity(n_states);
    for s in 0..n_states {
        let c = &counts[s * N_ACTIONS..(s + 1) * N_ACTIONS];
        let total: f64 = c.iter().sum();
        let denom = total + N_ACTIONS as f64 * smoothing;
        rows.push(if denom == 0.0 {
            vec![1.0 / N_ACTIONS as f64; N_ACTIONS]
        } else {
            c.iter().map(|n| (n + smoothing) / denom).collect()
        });
    }
    CategoricalPolicy::from_rows(rows)
}

/// Prediction-set size of a policy row: actions with `-log p <= quantile`.
/// An empty set counts as the whole action space.
pub fn set_size(row: &[f64], quantile: f64) -> usize {
    let n = row.iter().filter(|&&p| neg_log_prob(p) <= quantile).count();
    if n == 0 {
        row.len()
    } else {
        n
    }
}

/// Identity-mapped uncertainty `u = |C(s)|`.
pub fn policy_uncertainty(policy: &CategoricalPolicy, state: usize, quantile: f64) -> f64 {
    set_size(policy.row(state), quantile) as f64
}

/// Static calibration of an imitation policy.
#[derive(Debug, Clone, PartialEq)]
pub struct IlCalibration {
    /// Scores in rollout order.
    pub scores: Vec<f64>,
    pub set: CalibrationSet,
    pub quantile: ConformalQuantile,
}

/// Rolls out `policy` on `env` for `n` state-action pairs, restarting at
/// episode ends, and calibrates `-log pi(a|s)` at level `alpha`.
pub fn calibrate_il(policy: &CategoricalPolicy, env: &GridEnv, n: usize, alpha: f64, rng: &mut Rng) -> Result<IlCalibration> {
    if n == 0 {
        return Err(Error::EmptyCalibration);
    }
    let mut scores = Vec::with_capacity(n);
    let mut state: EpisodeState = env.reset();
    while scores.len() < n {
        let a = policy.sample(state.cell, rng);
        scores.push(neg_log_prob(policy.row(state.cell)[a]));
        let r = env.step(state, Action::from_index(a).expect("policy over five actions"));
        state = if r.done { env.reset() } else { r.next };
    }
    let set = CalibrationSet::new(scores.iter().copied())?;
    let quantile = compute_quantile(&set, alpha)?;
    Ok(IlCalibration { scores, set, quantile })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::quantile_rank;
    use crate::gridworld::expert::generate_expert_demos;
    use crate::gridworld::env::Variant;
    use crate::rng::{stream, Stream};

    #[test]
    fn always_up_is_deterministic() {
        let demos = vec![Demo { state: 0, action: Action::Up.index() }; 10];
        let p = behavior_clone(&demos, 2, 0.0).unwrap();
        assert!((p.row(0)[Action::Up.index()] - 1.0).abs() < 1e-5);
        assert!(p.row(0).iter().all(|&x| x >= POLICY_FLOOR * 0.999));
        for &x in p.row(1) {
            assert!((x - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn tied_demos_split_evenly() {
        let env = GridEnv::parse("#####\n#S..#\n#...#\n#..G#\n#####\n").unwrap();
        let demos = generate_expert_demos(&env, 200, &mut stream(9, Stream::Demos)).unwrap();
        let p = behavior_clone(&demos, env.n_states(), 0.0).unwrap();
        let row = p.row(env.start);
        for a in [Action::Right, Action::Down] {
            assert!((0.4..=0.6).contains(&row[a.index()]), "{row:?}");
        }
    }

    #[test]
    fn rows_sum_to_one() {
        let env = GridEnv::variant(Variant::Lava1);
        let demos = generate_expert_demos(&env, 30, &mut stream(1, Stream::Demos)).unwrap();
        let p = behavior_clone(&demos, env.n_states(), DEFAULT_BC_SMOOTHING).unwrap();
        for s in 0..env.n_states() {
            assert!((p.row(s).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn uncertainty_examples() {
        // floored rows put the chosen action at -log(1 - 4e-6), not exactly 0
        let det = CategoricalPolicy::from_rows(vec![vec![0.0, 0.0, 1.0, 0.0, 0.0]]).unwrap();
        let q0 = neg_log_prob(det.row(0)[2]);
        assert!(q0 < 1e-5);
        assert_eq!(policy_uncertainty(&det, 0, q0), 1.0);
        let uni = CategoricalPolicy::uniform(1, 5);
        assert_eq!(policy_uncertainty(&uni, 0, 5f64.ln()), 5.0);
        let p = CategoricalPolicy::from_rows(vec![vec![0.6, 0.3, 0.05, 0.03, 0.02]]).unwrap();
        assert_eq!(policy_uncertainty(&p, 0, 1.21), 2.0);
        // empty set counts as the whole action space
        assert_eq!(policy_uncertainty(&p, 0, 0.1), 5.0);
    }

    #[test]
    fn calibration_of_extreme_policies() {
        let env = GridEnv::variant(Variant::Door);
        let uni = CategoricalPolicy::uniform(env.n_states(), 5);
        let cal = calibrate_il(&uni, &env, 1000, 0.1, &mut stream(1, Stream::Calibration)).unwrap();
        assert!((cal.quantile.value - 5f64.ln()).abs() < 1e-9);
        assert_eq!(cal.set.len(), 1000);
        assert_eq!(quantile_rank(1000, 0.1), 901);

        let rows = (0..env.n_states()).map(|_| vec![0.0, 0.0, 0.0, 0.0, 1.0]).collect();
        let stay = CategoricalPolicy::from_rows(rows).unwrap();
        let cal = calibrate_il(&stay, &env, 200, 0.1, &mut stream(1, Stream::Calibration)).unwrap();
        assert!(cal.quantile.value < 1e-5);
    }
}
