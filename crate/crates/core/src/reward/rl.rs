//! Group-relative advantages and the clipped surrogate.

use serde::{Deserialize, Serialize};

use super::RewardError;

/// Groups whose reward spread is at or below this get zero advantages.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAdvantages {
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// Standardizes each reward against the group mean and population std.
pub fn group_advantages(rewards: &[f64]) -> Result<GroupAdvantages, RewardError> {
    if rewards.len() < 2 {
        return Err(RewardError::GroupSize(rewards.len()));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(RewardError::NonFinite("group reward".into()));
    }
    let k = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / k;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / k;
    let std = var.sqrt();
    let advantages = if std <= STD_FLOOR {
        vec![0.0; rewards.len()]
    } else {
        rewards.iter().map(|r| (r - mean) / std).collect()
    };
    Ok(GroupAdvantages {
        rewards: rewards.to_vec(),
        advantages,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig {
    pub eps_low: f64,
    pub eps_up: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            eps_low: 0.2,
            eps_up: 0.28,
        }
    }
}

/// `min(ρA, clip(ρ, 1 - eps_low, 1 + eps_up) A)` with `ρ = exp(logp_new - logp_old)`.
pub fn clipped_surrogate(logp_new: f64, logp_old: f64, advantage: f64, clip: ClipConfig) -> Result<f64, RewardError> {
    if ![logp_new, logp_old, advantage, clip.eps_low, clip.eps_up]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(RewardError::NonFinite("clipped_surrogate input".into()));
    }
    if clip.eps_low <= 0.0 || clip.eps_up <= 0.0 {
        return Err(RewardError::InvalidConfig(format!(
            "clip ratios must be positive, got {} / {}",
            clip.eps_low, clip.eps_up
        )));
    }
    let rho = (logp_new - logp_old).exp();
    let clipped = rho.clamp(1.0 - clip.eps_low, 1.0 + clip.eps_up);
    let v = (rho * advantage).min(clipped * advantage);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(RewardError::NonFinite("probability ratio overflowed".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mean_std(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt())
    }

    #[test]
    fn examples() {
        assert_eq!(group_advantages(&[0.0, 2.0]).unwrap().advantages, vec![-1.0, 1.0]);
        assert_eq!(group_advantages(&[1.0; 4]).unwrap().advantages, vec![0.0; 4]);
        assert!(matches!(group_advantages(&[1.0]), Err(RewardError::GroupSize(1))));
        let c = ClipConfig::default();
        assert_eq!(clipped_surrogate(0.0, 0.0, 1.0, c).unwrap(), 1.0);
        let v = clipped_surrogate(1.5f64.ln(), 0.0, 1.0, c).unwrap();
        assert!((v - 1.28).abs() < 1e-12);
        let v = clipped_surrogate(0.5f64.ln(), 0.0, -1.0, c).unwrap();
        assert!((v + 0.8).abs() < 1e-12);
        assert!(clipped_surrogate(f64::NAN, 0.0, 1.0, c).is_err());
    }

    proptest! {
        #[test]
        fn normalized(r in proptest::collection::vec(-100.0f64..100.0, 2..16), shift in -50.0f64..50.0, scale in 0.1f64..10.0) {
            let a = group_advantages(&r).unwrap().advantages;
            let (_, s) = mean_std(&r);
            if s > STD_FLOOR {
                let (m, sd) = mean_std(&a);
                prop_assert!(m.abs() < 1e-9);
                prop_assert!((sd - 1.0).abs() < 1e-9);
            }
            let shifted: Vec<f64> = r.iter().map(|x| x + shift).collect();
            let b = group_advantages(&shifted).unwrap().advantages;
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-6);
            }
            let scaled: Vec<f64> = r.iter().map(|x| x * scale).collect();
            let c = group_advantages(&scaled).unwrap().advantages;
            for i in 0..r.len() {
                for j in 0..r.len() {
                    if a[i] < a[j] - 1e-9 {
                        prop_assert!(c[i] < c[j]);
                    }
                }
            }
        }

        #[test]
        fn tighter_clip_never_raises_positive_surrogate(rho in 1.5f64..4.0, a in 0.01f64..5.0, up in 0.05f64..0.45, shrink in 0.0f64..0.04) {
            let wide = ClipConfig { eps_low: 0.2, eps_up: up };
            let tight = ClipConfig { eps_low: 0.2, eps_up: up - shrink };
            let lw = clipped_surrogate(rho.ln(), 0.0, a, wide).unwrap();
            let lt = clipped_surrogate(rho.ln(), 0.0, a, tight).unwrap();
            prop_assert!(lt <= lw + 1e-12);
        }
    }
}
