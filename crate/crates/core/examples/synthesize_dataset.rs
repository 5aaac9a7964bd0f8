//! Builds a small cold-start dataset with the template provider, then scores
//! every record.
//!
//! cargo run --example synthesize_dataset -- [out.jsonl]

use std::collections::BTreeMap;

use vtcot::reward::{total_reward, RewardWeights};
use vtcot::synthesis::{synthesize_dataset, Injection, StubProvider, SynthesisConfig};
use vtcot::taskgen::{GenParams, TaskKind};
use vtcot::trajectory;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/example_sft.jsonl".into());
    let config = SynthesisConfig {
        counts: TaskKind::ALL.iter().map(|&k| (k, 4)).collect::<BTreeMap<_, _>>(),
        injection: Injection { rate: 0.5, ..Injection::default() },
        master_seed: 2024,
        params: GenParams { resolution: 256, ..GenParams::default() },
        output: out.clone().into(),
        workers: 4,
    };
    let summary = synthesize_dataset(&config, &StubProvider)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);

    for t in trajectory::read_jsonl(out.as_ref())? {
        let r = total_reward(&t, RewardWeights::default(), &StubProvider)?;
        println!("{:<48} steps {:>2}  acc {:.2}  step {:+.3}  total {:.3}", t.id, t.steps.len(), r.acc, r.step, r.total);
    }
    Ok(())
}
