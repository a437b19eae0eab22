//! Backtracking line search with a cubic sufficient-decrease test.
//!
//! Step lengths `α = δ^i`, `i = 0, 1, …, max_backtracks − 1` are tried in turn and the
//! first one with
//!
//! ```text
//! f(X + α d) <= f(X) − γ α³ ‖d‖³
//! ```
//!
//! is returned. If none qualifies the last length tried is returned anyway and the
//! outcome is marked exhausted.

use serde::{Deserialize, Serialize};

/// Sufficient-decrease test used by [`armijo_line_search`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ArmijoRule {
    /// `f(X + αd) <= f(X) − γ α³ ‖d‖³`.
    #[default]
    Cubic,
    /// `f(X + αd) <= f(X) + γ α ∇fᵀd`.
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchConfig {
    pub gamma: f64,
    pub delta: f64,
    pub max_backtracks: usize,
    pub rule: ArmijoRule,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            gamma: 0.01,
            delta: 0.25,
            max_backtracks: 20,
            rule: ArmijoRule::Cubic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    /// `f(X + αd)`, infinite when the trial point was not evaluable.
    pub cost: f64,
    pub trials: usize,
    pub exhausted: bool,
}

/// Runs the backtracking search along a direction of length `direction_norm`.
///
/// `cost_along(α)` returns `f(X + αd)` or `None` when undefined there (treated as a
/// failed trial). `slope` is `∇fᵀd` and is only read by [`ArmijoRule::Classical`].
pub fn armijo_line_search<F>(
    config: &LineSearchConfig,
    cost: f64,
    direction_norm: f64,
    slope: f64,
    mut cost_along: F,
) -> LineSearchOutcome
where
    F: FnMut(f64) -> Option<f64>,
{
    let d3 = direction_norm.powi(3);
    let mut alpha = 1.0;
    let mut trial_cost = f64::INFINITY;
    for i in 0..config.max_backtracks {
        alpha = config.delta.powi(i as i32);
        trial_cost = cost_along(alpha).unwrap_or(f64::INFINITY);
        let bound = match config.rule {
            ArmijoRule::Cubic => cost - config.gamma * alpha.powi(3) * d3,
            ArmijoRule::Classical => cost + config.gamma * alpha * slope,
        };
        if trial_cost <= bound {
            return LineSearchOutcome {
                alpha,
                cost: trial_cost,
                trials: i + 1,
                exhausted: false,
            };
        }
    }
    LineSearchOutcome {
        alpha,
        cost: trial_cost,
        trials: config.max_backtracks,
        exhausted: true,
    }
}
