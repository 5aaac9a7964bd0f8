//! Runs the difficulty filter with a simulated policy that answers
//! correctly with a per-kind probability.

use vtcot::synthesis::{filter_rl_pool, FilterConfig, NoisyOracleRunner};
use vtcot::taskgen::{self, derive_seed, GenParams, TaskKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = GenParams { resolution: 128, ..GenParams::default() };
    let mut tasks = Vec::new();
    for kind in TaskKind::ALL {
        for i in 0..6 {
            tasks.push(taskgen::generate(kind, &params, derive_seed(9, tasks.len() as u64 + i))?);
        }
    }
    let config = FilterConfig::default();
    for p in [0.05, 0.5, 0.97] {
        let runner = NoisyOracleRunner { p_correct: p, seed: 3 };
        let report = filter_rl_pool(&tasks, &runner, config)?;
        let mut hist = [0usize; 9];
        for o in &report.outcomes {
            hist[o.successes.min(8)] += 1;
        }
        println!("p_correct {p:<4}: kept {:>2}/{}  success histogram {hist:?}", report.kept.len(), tasks.len());
    }
    println!("band for k={}: {:?}", config.k, config.band());
    Ok(())
}
