//! Exact tabular MDP solvers and logged-data generation.
//!
//! These are the independent oracle for the value, Q, and advantage
//! definitions and for the end-to-end CRR acceptance runs: values come from
//! a direct linear solve, not from any learner under test.

use std::path::Path;

use offrec_autograd::seed;
use rand::Rng;

use crate::data::{StateSequence, Transition};
use crate::error::{Error, Result};

/// Finite MDP with dense transition and reward tables.
///
/// `transition[s][a]` is a distribution over successor states and must sum
/// to 1 within 1e-12; rewards are deterministic per (state, action).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TabularMdp {
    pub states: usize,
    pub actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub gamma: f64,
}

impl TabularMdp {
    pub fn validate(&self) -> Result<()> {
        if self.states == 0 || self.actions == 0 {
            return Err(Error::config("mdp needs at least one state and one action"));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::config(format!("mdp.gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if self.transition.len() != self.states || self.reward.len() != self.states {
            return Err(Error::config("mdp table row count does not match the state count"));
        }
        for s in 0..self.states {
            if self.transition[s].len() != self.actions || self.reward[s].len() != self.actions {
                return Err(Error::config(format!("mdp tables for state {s} do not match the action count")));
            }
            for a in 0..self.actions {
                let row = &self.transition[s][a];
                if row.len() != self.states {
                    return Err(Error::config(format!("transition[{s}][{a}] has wrong length")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 || row.iter().any(|&p| p < 0.0) {
                    return Err(Error::config(format!(
                        "transition[{s}][{a}] is not a distribution (sum {sum})"
                    )));
                }
                if !self.reward[s][a].is_finite() {
                    return Err(Error::config(format!("reward[{s}][{a}] is not finite")));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::data(format!("mdp encode: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TabularMdp> {
        let text = std::fs::read_to_string(path)?;
        let mdp: TabularMdp = serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        mdp.validate()?;
        Ok(mdp)
    }

    /// Internal item id carrying MDP state `s`. Actions take ids `1..=A` so
    /// the policy head's classes line up with them; states follow at
    /// `A+1..=A+S`. Together they form the catalog for the neural pipeline,
    /// where tabular states plug in as length-1 windows.
    pub fn state_id(&self, s: usize) -> u32 {
        assert!(s < self.states);
        (self.actions + s + 1) as u32
    }

    pub fn action_id(&self, a: usize) -> u32 {
        assert!(a < self.actions);
        (a + 1) as u32
    }

    pub fn action_of_id(&self, id: u32) -> Option<usize> {
        let id = id as usize;
        (1..=self.actions).contains(&id).then(|| id - 1)
    }

    pub fn state_of_id(&self, id: u32) -> Option<usize> {
        let id = id as usize;
        (self.actions + 1..=self.actions + self.states).contains(&id).then(|| id - self.actions - 1)
    }

    /// Catalog size when the MDP is encoded for the neural pipeline.
    pub fn item_count(&self) -> usize {
        self.states + self.actions
    }
}

/// Stochastic policy table; rows sum to 1 within 1e-12.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TabularPolicy {
    pub probs: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        if self.probs.len() != mdp.states {
            return Err(Error::config("policy row count does not match the state count"));
        }
        for (s, row) in self.probs.iter().enumerate() {
            if row.len() != mdp.actions {
                return Err(Error::config(format!("policy row {s} has wrong length")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 || row.iter().any(|&p| p < 0.0) {
                return Err(Error::config(format!("policy row {s} is not a distribution (sum {sum})")));
            }
        }
        Ok(())
    }

    pub fn deterministic(states: usize, actions: usize, choice: &[usize]) -> TabularPolicy {
        assert_eq!(choice.len(), states);
        let probs = choice
            .iter()
            .map(|&a| {
                assert!(a < actions);
                let mut row = vec![0.0; actions];
                row[a] = 1.0;
                row
            })
            .collect();
        TabularPolicy { probs }
    }

    pub fn uniform(states: usize, actions: usize) -> TabularPolicy {
        TabularPolicy { probs: vec![vec![1.0 / actions as f64; actions]; states] }
    }
}

/// `(1-eps)` on the given action per state, `eps` spread uniformly over all
/// actions.
pub fn epsilon_greedy(choice: &[usize], actions: usize, eps: f64) -> TabularPolicy {
    assert!((0.0..=1.0).contains(&eps));
    let probs = choice
        .iter()
        .map(|&a| {
            assert!(a < actions);
            let mut row = vec![eps / actions as f64; actions];
            row[a] += 1.0 - eps;
            row
        })
        .collect();
    TabularPolicy { probs }
}

/// Dense linear solve by Gaussian elimination with partial pivoting.
/// `a` is row-major n x n.
fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("non-empty pivot range");
        if a[pivot * n + col].abs() < 1e-300 {
            return Err(Error::numeric("singular linear system in policy evaluation"));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let inv = 1.0 / a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] * inv;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Ok(x)
}

/// Exact V by solving `(I - gamma * P_pi) V = r_pi` directly.
pub fn exact_policy_eval(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vec<f64>> {
    mdp.validate()?;
    policy.validate(mdp)?;
    let n = mdp.states;
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for s in 0..n {
        a[s * n + s] = 1.0;
        for act in 0..mdp.actions {
            let p = policy.probs[s][act];
            if p == 0.0 {
                continue;
            }
            b[s] += p * mdp.reward[s][act];
            for s2 in 0..n {
                a[s * n + s2] -= mdp.gamma * p * mdp.transition[s][act][s2];
            }
        }
    }
    solve_linear(a, b)
}

/// max_s |V(s) - (r_pi(s) + gamma * (P_pi V)(s))|.
pub fn bellman_residual(mdp: &TabularMdp, policy: &TabularPolicy, v: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..mdp.states {
        let mut rhs = 0.0;
        for a in 0..mdp.actions {
            let p = policy.probs[s][a];
            if p == 0.0 {
                continue;
            }
            let cont: f64 =
                mdp.transition[s][a].iter().zip(v).map(|(&pr, &vv)| pr * vv).sum();
            rhs += p * (mdp.reward[s][a] + mdp.gamma * cont);
        }
        worst = worst.max((v[s] - rhs).abs());
    }
    worst
}

/// Exact Q = r + gamma * P V^pi.
pub fn exact_q(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vec<Vec<f64>>> {
    let v = exact_policy_eval(mdp, policy)?;
    let mut q = vec![vec![0.0; mdp.actions]; mdp.states];
    for s in 0..mdp.states {
        for a in 0..mdp.actions {
            let cont: f64 =
                mdp.transition[s][a].iter().zip(&v).map(|(&pr, &vv)| pr * vv).sum();
            q[s][a] = mdp.reward[s][a] + mdp.gamma * cont;
        }
    }
    Ok(q)
}

/// Exact A = Q - V^pi; the policy-weighted row sums vanish by construction.
pub fn exact_advantage(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vec<Vec<f64>>> {
    let q = exact_q(mdp, policy)?;
    let v: Vec<f64> = q
        .iter()
        .zip(&policy.probs)
        .map(|(qs, ps)| qs.iter().zip(ps).map(|(&qa, &pa)| pa * qa).sum())
        .collect();
    Ok(q.iter().zip(&v).map(|(qs, &vs)| qs.iter().map(|&qa| qa - vs).collect()).collect())
}

/// Value iteration to `tol`, returning V* and one greedy policy.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> (Vec<f64>, Vec<usize>) {
    let mut v = vec![0.0; mdp.states];
    loop {
        let mut next = vec![0.0; mdp.states];
        for s in 0..mdp.states {
            next[s] = (0..mdp.actions)
                .map(|a| {
                    let cont: f64 =
                        mdp.transition[s][a].iter().zip(&v).map(|(&pr, &vv)| pr * vv).sum();
                    mdp.reward[s][a] + mdp.gamma * cont
                })
                .fold(f64::NEG_INFINITY, f64::max);
        }
        let delta =
            v.iter().zip(&next).map(|(&a, &b)| (a - b).abs()).fold(0.0f64, f64::max);
        v = next;
        if delta <= tol {
            break;
        }
    }
    let greedy = (0..mdp.states)
        .map(|s| {
            (0..mdp.actions)
                .map(|a| {
                    let cont: f64 =
                        mdp.transition[s][a].iter().zip(&v).map(|(&pr, &vv)| pr * vv).sum();
                    (a, mdp.reward[s][a] + mdp.gamma * cont)
                })
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .map(|(a, _)| a)
                .expect("at least one action")
        })
        .collect();
    (v, greedy)
}

/// Expected return under the uniform initial-state distribution.
pub fn mdp_return(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<f64> {
    let v = exact_policy_eval(mdp, policy)?;
    Ok(v.iter().sum::<f64>() / mdp.states as f64)
}

/// Random dense MDP: transition rows are normalized exponential draws,
/// rewards uniform in [0, 1).
pub fn random_mdp(states: usize, actions: usize, gamma: f64, seed_key: &[u64]) -> TabularMdp {
    let mut rng = seed::rng(seed_key);
    let transition = (0..states)
        .map(|_| {
            (0..actions)
                .map(|_| {
                    let mut row: Vec<f64> =
                        (0..states).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
                    let sum: f64 = row.iter().sum();
                    row.iter_mut().for_each(|p| *p /= sum);
                    // Force an exact unit sum so validation's 1e-12 bound holds.
                    let correction: f64 = row.iter().sum();
                    let last = row.len() - 1;
                    row[last] += 1.0 - correction;
                    row
                })
                .collect()
        })
        .collect();
    let reward =
        (0..states).map(|_| (0..actions).map(|_| rng.gen::<f64>()).collect()).collect();
    TabularMdp { states, actions, transition, reward, gamma }
}

/// Fixed 5-state/4-action chain: action 0 advances toward the rewarding end
/// state, every other action retreats for a small immediate payoff. The
/// always-advance policy is optimal for any gamma above 0.2, which makes the
/// gap between it and an epsilon-greedy behavior policy wide enough to
/// measure.
pub fn chain_mdp(gamma: f64) -> (TabularMdp, Vec<usize>) {
    let states = 5;
    let actions = 4;
    let mut transition = vec![vec![vec![0.0; states]; actions]; states];
    let mut reward = vec![vec![0.0; actions]; states];
    for s in 0..states {
        let fwd = (s + 1).min(states - 1);
        let back = s.saturating_sub(1);
        transition[s][0][fwd] = 1.0;
        reward[s][0] = if s == states - 1 { 1.0 } else { 0.0 };
        for a in 1..actions {
            transition[s][a][back] = 1.0;
            reward[s][a] = 0.1;
        }
    }
    let mdp = TabularMdp { states, actions, transition, reward, gamma };
    (mdp, vec![0; states])
}

/// Rolls out `episodes x horizon` steps from the uniform initial-state
/// distribution under `behavior`, encoded for the neural pipeline: states
/// as length-1 windows, last step of each episode terminal. Episode rollout
/// RNG is keyed per episode so generation order never matters.
pub fn generate_logged_data(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    episodes: usize,
    horizon: usize,
    seed_key: &[u64],
) -> Result<Vec<Transition>> {
    mdp.validate()?;
    behavior.validate(mdp)?;
    assert!(horizon >= 1);
    let root = seed::mix(seed_key);
    let mut out = Vec::with_capacity(episodes * horizon);
    for ep in 0..episodes {
        let mut rng = seed::rng(&[root, 0x45505253, ep as u64]);
        let mut s = rng.gen_range(0..mdp.states);
        for t in 0..horizon {
            let a = sample_index(&behavior.probs[s], &mut rng);
            let s2 = sample_index(&mdp.transition[s][a], &mut rng);
            out.push(Transition {
                state: StateSequence::from_ids(vec![mdp.state_id(s)]),
                action: mdp.action_id(a),
                reward: mdp.reward[s][a] as f32,
                next_state: StateSequence::from_ids(vec![mdp.state_id(s2)]),
                terminal: t == horizon - 1,
                event: None,
            });
            s = s2;
        }
    }
    Ok(out)
}

fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
