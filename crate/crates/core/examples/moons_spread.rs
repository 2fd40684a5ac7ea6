//! Compares encoder spread after SMC-Wake and wake-phase training on two moons.
//! Usage: moons_spread <first-seed> <count>

use smcwake::harness::{recipes, run_experiment};
use smcwake::metrics::sample_spread;
use smcwake::models::TwoMoonsModel;
use smcwake::numkit::RngStream;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let first: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let count: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let k: Option<usize> = args.get(3).and_then(|s| s.parse().ok());
    let steps: Option<usize> = args.get(4).and_then(|s| s.parse().ok());
    let lr: Option<f64> = args.get(5).and_then(|s| s.parse().ok());
    let methods: Vec<String> =
        args.get(6).map_or(vec!["smc-wake-a".into(), "rws".into()], |s| s.split(',').map(String::from).collect());
    let tmp = std::env::temp_dir().join("smcwake-moons");
    for seed in first..first + count {
        let mut spreads = Vec::new();
        for mut cfg in recipes::two_moons(seed) {
            if !methods.iter().any(|m| m == cfg.trainer.method.label()) {
                continue;
            }
            if let Some(k) = k {
                cfg.trainer.smc.particles = k;
            }
            if let Some(s) = steps {
                cfg.trainer.steps = s;
            }
            if let Some(l) = lr {
                cfg.trainer.lr = l;
            }
            let t = std::time::Instant::now();
            let o = run_experiment(&cfg, &tmp.join(&cfg.name)).unwrap();
            let s = sample_spread(&o.encoder, &TwoMoonsModel, &o.dataset.xs, 1000, &RngStream::new(seed, 99));
            let std0: f64 = s.iter().map(|v| v.std[0]).sum::<f64>() / s.len() as f64;
            let std1: f64 = s.iter().map(|v| v.std[1]).sum::<f64>() / s.len() as f64;
            let lj: f64 = s.iter().map(|v| v.mean_log_joint).sum::<f64>() / s.len() as f64;
            let out: f64 = s.iter().map(|v| v.outside_support).sum::<f64>() / s.len() as f64;
            println!(
                "seed {seed} {:<14} fwd {:.3} std ({std0:.3}, {std1:.3}) logjoint {lj:.3} outside {out:.3} ({:.1}s) {:?}",
                cfg.trainer.method.label(),
                o.summary.final_metrics.unwrap().fwd_kl,
                t.elapsed().as_secs_f64(),
                o.summary.error
            );
            spreads.push(s);
        }
        let (smc, rws) = (&spreads[0], &spreads[1]);
        let smaller = smc.iter().zip(rws).filter(|(a, b)| b.std.iter().zip(&a.std).all(|(r, s)| r < s)).count();
        let d0 = smc.iter().zip(rws).filter(|(a, b)| b.std[0] < a.std[0]).count();
        let d1 = smc.iter().zip(rws).filter(|(a, b)| b.std[1] < a.std[1]).count();
        println!("  rws narrower on {smaller}/{} datapoints (dim0 {d0}, dim1 {d1})", smc.len());
        for (a, b) in smc.iter().zip(rws).take(8) {
            println!(
                "    smc ({:.3},{:.3}) {:.2}   rws ({:.3},{:.3}) {:.2}",
                a.std[0], a.std[1], a.mean_log_joint, b.std[0], b.std[1], b.mean_log_joint
            );
        }
    }
}
