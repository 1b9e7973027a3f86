use lras_core::question::SourceQuestion;
use lras_core::reward::{
    case_reward, composite_reward, grpo_objective, group_advantages, score_trajectory, surrogate_from_ratios,
    weighted_reward, GrpoParams, GrpoSample, RatioMode, RewardMode, RewardParams,
};
use lras_core::trajectory::{from_tag_stream, FormatReport};
use proptest::prelude::*;

#[test]
fn four_case_table_is_exact() {
    let expected = [
        ((true, true), 1.0),
        ((true, false), 0.8),
        ((false, true), 0.2),
        ((false, false), 0.0),
    ];
    for ((acc, fmt), want) in expected {
        assert_eq!(case_reward(acc, fmt, 0.2).value, want, "acc={acc} fmt={fmt}");
    }
    let params = RewardParams::default();
    let valid = FormatReport::from_violations(vec![]);
    assert_eq!(composite_reward(Some("A"), "A", &valid, &params).unwrap().value, 1.0);
    assert_eq!(composite_reward(None, "A", &valid, &params).unwrap().value, 0.2);
}

#[test]
fn lambda_outside_unit_interval_is_rejected() {
    for lambda_f in [-0.1, 1.5, f64::NAN] {
        let params = RewardParams {
            lambda_f,
            ..RewardParams::default()
        };
        let valid = FormatReport::from_violations(vec![]);
        assert!(composite_reward(Some("A"), "A", &valid, &params).is_err());
    }
}

#[test]
fn weighted_reward_is_exact() {
    let p = RewardParams::weighted();
    assert_eq!(weighted_reward(true, true, true, &p).unwrap().value, 1.3);
    assert_eq!(weighted_reward(true, false, false, &p).unwrap().value, 1.0);
    assert_eq!(weighted_reward(false, true, true, &p).unwrap().value, 0.3);
    assert!(weighted_reward(true, true, true, &RewardParams::default()).is_err());
}

#[test]
fn scoring_recorded_traces() {
    let q = SourceQuestion::new("r", "Which provision applies? A. one B. two", "A");
    let cases = [
        ("<think>The rule applies.</think><answer>A</answer>", 1.0, 1.3),
        ("<answer>A</answer>", 0.8, 1.2),
        ("<think>The rule applies.</think><answer>B</answer>", 0.2, 0.3),
        ("<answer>B</answer>", 0.0, 0.2),
        ("<think>never closed<answer>A</answer>", 0.0, 0.0),
    ];
    for (trace, case_value, weighted_value) in cases {
        let t = from_tag_stream("r", &q.text, trace);
        let params = RewardParams::default();
        assert_eq!(score_trajectory(&t, &q, &params).unwrap().value, case_value, "{trace}");
        let params = RewardParams {
            mode: RewardMode::Weighted,
            ..RewardParams::weighted()
        };
        assert_eq!(score_trajectory(&t, &q, &params).unwrap().value, weighted_value, "{trace}");
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn pop_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn reward_group() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-5.0f64..5.0, 2..=16).prop_filter("non-degenerate group", |r| pop_std(r) > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn advantages_are_standardized(rewards in reward_group(), shift in -10.0f64..10.0, scale in 0.01f64..100.0) {
        let g = group_advantages(&rewards).unwrap();
        prop_assert!(mean(&g.advantages).abs() <= 1e-9);
        prop_assert!((pop_std(&g.advantages) - 1.0).abs() <= 1e-9);
        for i in 0..rewards.len() {
            for j in 0..rewards.len() {
                if rewards[i] < rewards[j] {
                    prop_assert!(g.advantages[i] < g.advantages[j]);
                }
            }
        }
        let moved: Vec<f64> = rewards.iter().map(|r| r * scale + shift).collect();
        let h = group_advantages(&moved).unwrap();
        for (a, b) in g.advantages.iter().zip(&h.advantages) {
            prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }
}

#[test]
fn constant_group_has_zero_advantages() {
    let g = group_advantages(&[0.8; 8]).unwrap();
    assert_eq!(g.advantages, vec![0.0; 8]);
    assert!(group_advantages(&[1.0]).is_err());
}

#[test]
fn surrogate_analytic_cases() {
    assert_eq!(surrogate_from_ratios(&[(1.0, 2.0)], 0.2).unwrap(), 2.0);
    assert_eq!(surrogate_from_ratios(&[(2.0, 1.0)], 0.2).unwrap(), 1.2);
    assert_eq!(surrogate_from_ratios(&[(2.0, -1.0)], 0.2).unwrap(), -2.0);

    // Same cases through log-probabilities; exp(ln 2) is one ulp off 2.
    let no_kl = GrpoParams {
        kl_coefficient: 0.0,
        ..GrpoParams::default()
    };
    let sample = |rho: f64, advantage| GrpoSample {
        new_logprobs: vec![rho.ln()],
        old_logprobs: vec![0.0],
        ref_logprobs: None,
        advantage,
    };
    for (rho, adv, want) in [(1.0, 2.0, 2.0), (2.0, 1.0, 1.2), (2.0, -1.0, -2.0)] {
        let got = grpo_objective(&[sample(rho, adv)], &no_kl).unwrap();
        assert!((got - want).abs() <= 1e-12, "{rho} {adv}: {got}");
    }
}

#[test]
fn huge_epsilon_is_the_unclipped_mean() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let samples: Vec<GrpoSample> = (0..100)
        .map(|_| {
            let len = rng.random_range(1..20);
            GrpoSample {
                new_logprobs: (0..len).map(|_| rng.random_range(-3.0..0.0)).collect(),
                old_logprobs: (0..len).map(|_| rng.random_range(-3.0..0.0)).collect(),
                ref_logprobs: None,
                advantage: rng.random_range(-2.0..2.0),
            }
        })
        .collect();
    let params = GrpoParams {
        clip_epsilon: 1e6,
        kl_coefficient: 0.0,
        ..GrpoParams::default()
    };
    let unclipped = samples
        .iter()
        .map(|s| {
            let d: f64 = s.new_logprobs.iter().sum::<f64>() - s.old_logprobs.iter().sum::<f64>();
            d.exp() * s.advantage
        })
        .sum::<f64>()
        / samples.len() as f64;
    let got = grpo_objective(&samples, &params).unwrap();
    assert!((got - unclipped).abs() <= 1e-9, "{got} vs {unclipped}");
    assert!(params.validate().is_err(), "configs still require epsilon < 1");
}

#[test]
fn kl_term_and_token_mode() {
    let s = GrpoSample {
        new_logprobs: vec![-1.0, -2.0],
        old_logprobs: vec![-1.0, -2.0],
        ref_logprobs: Some(vec![-1.5, -2.0]),
        advantage: 1.0,
    };
    let params = GrpoParams::default();
    // k3 with d = ref − new: (e^-0.5 + 0.5 − 1 + 0) / 2
    let kl = ((-0.5f64).exp() + 0.5 - 1.0) / 2.0;
    let got = grpo_objective(std::slice::from_ref(&s), &params).unwrap();
    assert!((got - (1.0 - 0.001 * kl)).abs() < 1e-15);
    let in_reward = GrpoParams {
        kl_in_reward: true,
        ..params
    };
    assert_eq!(grpo_objective(std::slice::from_ref(&s), &in_reward).unwrap(), 1.0);
    let token = GrpoParams {
        ratio_mode: RatioMode::Token,
        kl_coefficient: 0.0,
        ..params
    };
    assert_eq!(grpo_objective(&[s], &token).unwrap(), 1.0);
}
