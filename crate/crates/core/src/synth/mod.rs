//! Ground-truth generators: exact tabular MDP solvers and planted-structure
//! synthetic interaction logs.

pub mod sessions;
pub mod tabular;

pub use sessions::{generate_synthetic_sessions, rule_ceiling, write_log_csv, SessionGenConfig};
pub use tabular::{
    bellman_residual, chain_mdp, epsilon_greedy, exact_advantage, exact_policy_eval, exact_q,
    generate_logged_data, mdp_return, random_mdp, value_iteration, TabularMdp, TabularPolicy,
};
