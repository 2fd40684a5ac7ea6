//! Runs a recipe for several seeds and prints the final divergences.
//! Usage: sweep <recipe> <first-seed> <count>

use std::time::Instant;

use smcwake::harness::{recipes, run_experiment};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map_or("gaussian-pimh-vs-msc", String::as_str);
    let first: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let count: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(3);
    let tmp = std::env::temp_dir().join("smcwake-sweep");
    for seed in first..first + count {
        let mut line = format!("seed {seed}:");
        for cfg in recipes::recipe_configs(name, seed).unwrap() {
            let t = Instant::now();
            let o = run_experiment(&cfg, &tmp.join(&cfg.name)).unwrap();
            let f = o.summary.final_metrics.unwrap();
            line += &format!(
                "  {} fwd {:.3} rev {:.3} ess {:.1} evals {} ({:.1}s){}",
                cfg.trainer.method,
                f.fwd_kl,
                f.rev_kl,
                f.mean_ess,
                o.summary.likelihood_evals,
                t.elapsed().as_secs_f64(),
                o.summary.error.map_or(String::new(), |e| format!(" ERR {e}"))
            );
        }
        println!("{line}");
    }
}
