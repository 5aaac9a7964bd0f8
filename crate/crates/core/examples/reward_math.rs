//! The reward stack on small inputs: answer metrics, stepwise reward,
//! composite reward, group advantages and the clipped surrogate.

use vtcot::reward::{
    array_similarity, clipped_surrogate, exact_match, group_advantages, levenshtein_norm, soft_numeric,
    stepwise_reward, token_f1, ClipConfig, RewardWeights, SoftMode,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("exact_match(\"B3\", \"b3\")        = {}", exact_match("B3", "b3"));
    println!("token_f1(red circle, circle) = {:.4}", token_f1("the red circle", "circle"));
    println!("array_similarity             = {:.4}", array_similarity(&[2, 0, 1, 3], &[2, 1, 0, 3]));
    println!("levenshtein_norm(RRDD, RDRD) = {:.4}", levenshtein_norm("RRDD", "RDRD"));
    println!("soft_numeric(time, 30 min)   = {:.6}", soft_numeric(200.0, 170.0, SoftMode::Time)?);
    println!("soft_numeric(general)        = {:.6}", soft_numeric(105.0, 100.0, SoftMode::General)?);

    let scores = [0.0, 0.5, 1.0];
    let step = stepwise_reward(&scores);
    let w = RewardWeights::default();
    println!("\nR_step{scores:?} = {step:.6}");
    println!("R = fmt + {}*acc + {}*step = {:.6}", w.alpha, w.beta, w.combine(1.0, 1.0, step));

    let rewards = [1.9, 0.4, 1.7, 0.0, 1.2, 0.4, 2.0, 1.0];
    let adv = group_advantages(&rewards)?;
    println!("\nadvantages: {:?}", adv.advantages.iter().map(|a| format!("{a:+.3}")).collect::<Vec<_>>());

    let clip = ClipConfig::default();
    for (ratio, a) in [(1.5f64, 1.0), (0.5, -1.0), (1.1, 1.0)] {
        let v = clipped_surrogate(ratio.ln(), 0.0, a, clip)?;
        println!("surrogate(ratio {ratio}, A {a:+}) = {v:.4}");
    }
    Ok(())
}
