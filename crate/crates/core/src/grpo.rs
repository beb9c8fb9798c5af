//! Group-relative clipped surrogate objective.
//!
//! ```text
//! J = 1/G sum_i 1/|o_i| sum_t [ min(r_it A_i, clip(r_it, 1-eps, 1+eps) A_i) - beta KL_it ]
//! A_i = (R_i - mean(R)) / std(R)
//! ```
//!
//! Rewards are per-sample scalars, so each sample's advantage is broadcast
//! over its tokens. The KL term uses the non-negative per-token estimator
//! `u - ln u - 1` with `u = pi_ref / pi_theta`. Only the objective value is
//! computed here; gradients belong to the training framework.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GrpoError {
    #[error("group is empty")]
    EmptyGroup,
    #[error("sample {sample}: {what} has {got} tokens, expected {expected}")]
    LengthMismatch {
        sample: usize,
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("sample {0} has no tokens")]
    EmptySample(usize),
    #[error("{0} must be finite")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrpoConfig {
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub std_floor: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            kl_beta: 0.01,
            std_floor: 1e-8,
        }
    }
}

/// Rewards and per-token log-probabilities for the `G` rollouts of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    rewards: Vec<f64>,
    logp_new: Vec<Vec<f64>>,
    logp_old: Vec<Vec<f64>>,
    logp_ref: Vec<Vec<f64>>,
}

impl RolloutGroup {
    pub fn new(
        rewards: Vec<f64>,
        logp_new: Vec<Vec<f64>>,
        logp_old: Vec<Vec<f64>>,
        logp_ref: Vec<Vec<f64>>,
    ) -> Result<Self, GrpoError> {
        if rewards.is_empty() {
            return Err(GrpoError::EmptyGroup);
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(GrpoError::NonFinite("rewards"));
        }
        for (what, arr) in [
            ("logp_new", &logp_new),
            ("logp_old", &logp_old),
            ("logp_ref", &logp_ref),
        ] {
            if arr.len() != rewards.len() {
                return Err(GrpoError::LengthMismatch {
                    sample: arr.len().min(rewards.len()),
                    what,
                    got: arr.len(),
                    expected: rewards.len(),
                });
            }
            if arr.iter().flatten().any(|v| !v.is_finite()) {
                return Err(GrpoError::NonFinite(what));
            }
        }
        for i in 0..rewards.len() {
            let n = logp_new[i].len();
            if n == 0 {
                return Err(GrpoError::EmptySample(i));
            }
            for (what, arr) in [("logp_old", &logp_old), ("logp_ref", &logp_ref)] {
                if arr[i].len() != n {
                    return Err(GrpoError::LengthMismatch {
                        sample: i,
                        what,
                        got: arr[i].len(),
                        expected: n,
                    });
                }
            }
        }
        Ok(Self {
            rewards,
            logp_new,
            logp_old,
            logp_ref,
        })
    }

    pub fn size(&self) -> usize {
        self.rewards.len()
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn with_rewards(&self, rewards: Vec<f64>) -> Result<Self, GrpoError> {
        Self::new(
            rewards,
            self.logp_new.clone(),
            self.logp_old.clone(),
            self.logp_ref.clone(),
        )
    }
}

/// `(r_i - mean) / std` with the population standard deviation; all zeros
/// when the spread is below `std_floor`.
pub fn group_advantages(rewards: &[f64], std_floor: f64) -> Vec<f64> {
    let n = rewards.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = rewards.iter().sum::<f64>() / n as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std.is_nan() || std < std_floor {
        return vec![0.0; n];
    }
    rewards.iter().map(|r| (r - mean) / std).collect()
}

pub fn token_ratio(logp_new: &[f64], logp_old: &[f64]) -> Vec<f64> {
    debug_assert_eq!(logp_new.len(), logp_old.len());
    logp_new.iter().zip(logp_old).map(|(n, o)| (n - o).exp()).collect()
}

/// Per-token `u - ln u - 1`, `u = exp(logp_ref - logp_new)`.
pub fn kl_penalty(logp_new: &[f64], logp_ref: &[f64]) -> Vec<f64> {
    debug_assert_eq!(logp_new.len(), logp_ref.len());
    logp_new
        .iter()
        .zip(logp_ref)
        .map(|(n, r)| {
            let log_u = r - n;
            // exp_m1 keeps the small-difference regime accurate.
            (log_u.exp_m1() - log_u).max(0.0)
        })
        .collect()
}

/// Clipped surrogate term for one token.
pub fn clipped_term(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * advantage;
    unclipped.min(clipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoOutput {
    pub objective: f64,
    pub advantages: Vec<f64>,
    pub per_sample: Vec<f64>,
    pub token_terms: Vec<Vec<f64>>,
    /// Fraction of tokens where the clipped branch is strictly smaller.
    pub clip_fraction: f64,
    pub mean_kl: f64,
    pub kl_estimator: &'static str,
    pub kl_aggregation: &'static str,
}

pub fn grpo_objective(group: &RolloutGroup, cfg: &GrpoConfig) -> GrpoOutput {
    let advantages = group_advantages(&group.rewards, cfg.std_floor);
    let mut per_sample = Vec::with_capacity(group.size());
    let mut token_terms = Vec::with_capacity(group.size());
    let mut clipped_tokens = 0usize;
    let mut tokens = 0usize;
    let mut kl_total = 0.0;

    for (i, &adv) in advantages.iter().enumerate() {
        let ratios = token_ratio(&group.logp_new[i], &group.logp_old[i]);
        let kls = kl_penalty(&group.logp_new[i], &group.logp_ref[i]);
        let terms: Vec<f64> = ratios
            .iter()
            .zip(&kls)
            .map(|(&r, &kl)| {
                let surrogate = clipped_term(r, adv, cfg.clip_eps);
                if surrogate < r * adv {
                    clipped_tokens += 1;
                }
                surrogate - cfg.kl_beta * kl
            })
            .collect();
        tokens += terms.len();
        kl_total += kls.iter().sum::<f64>();
        per_sample.push(terms.iter().sum::<f64>() / terms.len() as f64);
        token_terms.push(terms);
    }

    GrpoOutput {
        objective: per_sample.iter().sum::<f64>() / per_sample.len() as f64,
        advantages,
        per_sample,
        token_terms,
        clip_fraction: clipped_tokens as f64 / tokens as f64,
        mean_kl: kl_total / tokens as f64,
        kl_estimator: "u - ln(u) - 1, u = pi_ref / pi_theta",
        kl_aggregation: "per-token, mean over tokens then over samples",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat_group(rewards: Vec<f64>, len: usize, lp: f64) -> RolloutGroup {
        let n = rewards.len();
        RolloutGroup::new(
            rewards,
            vec![vec![lp; len]; n],
            vec![vec![lp; len]; n],
            vec![vec![lp; len]; n],
        )
        .unwrap()
    }

    #[test]
    fn advantages_examples() {
        assert_eq!(group_advantages(&[1.0, 1.0, 1.0], 1e-8), vec![0.0; 3]);
        assert_eq!(group_advantages(&[5.0], 1e-8), vec![0.0]);
        let a = group_advantages(&[1.0, 2.0, 3.0], 1e-8);
        // mean 2, population std sqrt(2/3): 1/sqrt(2/3) = sqrt(1.5).
        let k = 1.5f64.sqrt();
        assert!((a[0] + k).abs() < 1e-12 && a[1].abs() < 1e-15 && (a[2] - k).abs() < 1e-12);
        assert!((a[2] - 1.224745).abs() < 1e-6);
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(token_ratio(&[-1.0, -2.0], &[-1.0, -2.0]), vec![1.0, 1.0]);
        let r = token_ratio(&[-1.0 + std::f64::consts::LN_2], &[-1.0]);
        assert!((r[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_penalty(&[-0.3, -4.0], &[-0.3, -4.0]), vec![0.0, 0.0]);
        // u = 2: 2 - ln 2 - 1.
        let k = kl_penalty(&[-1.0], &[-1.0 + std::f64::consts::LN_2]);
        assert!((k[0] - (1.0 - std::f64::consts::LN_2)).abs() < 1e-15);
        assert!((k[0] - 0.306853).abs() < 1e-6);
    }

    #[test]
    fn objective_examples() {
        let g = flat_group(vec![0.7, 0.7, 0.7], 5, -1.2);
        assert_eq!(grpo_objective(&g, &GrpoConfig::default()).objective, 0.0);

        let g = flat_group(vec![0.1, 0.9, 0.4, 0.3], 3, -0.5);
        let cfg = GrpoConfig {
            kl_beta: 0.0,
            ..GrpoConfig::default()
        };
        assert!(grpo_objective(&g, &cfg).objective.abs() < 1e-12);

        // Ratio 2 with a positive advantage: clip binds at 1 + eps.
        assert!((clipped_term(2.0, 0.8, 0.2) - 1.2 * 0.8).abs() < 1e-15);
        // Negative advantage keeps the unclipped (smaller) branch.
        assert_eq!(clipped_term(2.0, -0.8, 0.2), -1.6);

        let ln2 = std::f64::consts::LN_2;
        let g = RolloutGroup::new(
            vec![0.0, 1.0],
            vec![vec![ln2], vec![ln2]],
            vec![vec![0.0], vec![0.0]],
            vec![vec![ln2], vec![ln2]],
        )
        .unwrap();
        let out = grpo_objective(&g, &cfg);
        assert!((out.token_terms[1][0] - 1.2 * out.advantages[1]).abs() < 1e-12);
        assert_eq!(out.clip_fraction, 0.5);
    }

    #[test]
    fn rejects_malformed_groups() {
        assert_eq!(
            RolloutGroup::new(vec![], vec![], vec![], vec![]),
            Err(GrpoError::EmptyGroup)
        );
        assert!(RolloutGroup::new(vec![1.0], vec![vec![0.0; 2]], vec![vec![0.0; 3]], vec![vec![0.0; 2]]).is_err());
        assert!(RolloutGroup::new(vec![1.0], vec![vec![]], vec![vec![]], vec![vec![]]).is_err());
        assert!(RolloutGroup::new(vec![f64::NAN], vec![vec![0.0]], vec![vec![0.0]], vec![vec![0.0]]).is_err());
    }

    fn arb_group() -> impl Strategy<Value = RolloutGroup> {
        (1usize..6, 1usize..6).prop_flat_map(|(g, t)| {
            (
                proptest::collection::vec(-5.0f64..5.0, g),
                proptest::collection::vec(proptest::collection::vec(-6.0f64..0.0, t), g),
                proptest::collection::vec(proptest::collection::vec(-6.0f64..0.0, t), g),
                proptest::collection::vec(proptest::collection::vec(-6.0f64..0.0, t), g),
            )
                .prop_map(|(r, a, b, c)| RolloutGroup::new(r, a, b, c).unwrap())
        })
    }

    proptest! {
        #[test]
        fn advantages_standardized(rewards in proptest::collection::vec(-10.0f64..10.0, 2..12)) {
            let a = group_advantages(&rewards, 1e-8);
            let mean = a.iter().sum::<f64>() / a.len() as f64;
            prop_assert!(mean.abs() < 1e-12);
            let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / a.len() as f64;
            if a.iter().any(|&x| x != 0.0) {
                prop_assert!((var.sqrt() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn objective_shift_invariant(g in arb_group(), shift in -3.0f64..3.0) {
            let cfg = GrpoConfig::default();
            let base = grpo_objective(&g, &cfg).objective;
            let shifted: Vec<f64> = g.rewards().iter().map(|r| r + shift).collect();
            let moved = grpo_objective(&g.with_rewards(shifted).unwrap(), &cfg).objective;
            prop_assert!((base - moved).abs() < 1e-12, "{} vs {}", base, moved);
        }

        #[test]
        fn branches_agree_inside_trust_region(r in 0.8f64..1.2, a in -3.0f64..3.0) {
            prop_assert_eq!(clipped_term(r, a, 0.2), r * a);
        }

        #[test]
        fn kl_non_negative_and_objective_finite(g in arb_group()) {
            for i in 0..g.size() {
                prop_assert!(kl_penalty(&g.logp_new[i], &g.logp_ref[i]).iter().all(|&k| k >= 0.0));
            }
            let out = grpo_objective(&g, &GrpoConfig::default());
            prop_assert!(out.objective.is_finite());
            prop_assert!(out.mean_kl >= 0.0);
        }
    }
}
