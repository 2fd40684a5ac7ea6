use std::fs;

use super::recipes;
use super::*;
use crate::smc::{MutationConfig, SmcConfig, TemperSchedule};
use crate::trainers::{Method, TrainerConfig};

const SMALL: &str = r#"
name = "small"
seed = 3
n = 4

[model]
family = "conjugate"

[encoder]
family = "full-cov"
hidden = [4]

[trainer]
method = "smc-wake-b"
steps = 6
metrics_every = 3
lr = 0.01

[trainer.smc]
particles = 16
schedule = { mode = "fixed", temperatures = [0.0, 0.25, 0.5, 1.0] }
"#;

#[test]
fn parses_toml_with_defaults() {
    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    assert_eq!(cfg.n, 4);
    assert_eq!(cfg.trainer.method, Method::SmcWakeB);
    assert_eq!(cfg.trainer.smc.particles, 16);
    assert_eq!(cfg.trainer.smc.schedule, TemperSchedule::fixed(vec![0.0, 0.25, 0.5, 1.0]).unwrap());
    assert_eq!(cfg.model, ModelSpec::conjugate());
    let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn config_errors_name_the_line() {
    let bad = SMALL.replace("steps = 6", "steps = 6\nbogus = 1");
    let err = ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string();
    assert!(err.contains("line"), "{err}");
    assert!(err.contains("bogus"), "{err}");
}

#[test]
fn overrides_win() {
    let mut cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    cfg.apply(&Overrides {
        seed: Some(11),
        method: Some(Method::Msc),
        out: Some("elsewhere".into()),
        steps: Some(2),
        particles: Some(8),
    });
    assert_eq!(cfg.seed, 11);
    assert_eq!(cfg.trainer.method, Method::Msc);
    assert_eq!(cfg.resolve_out_dir(), std::path::PathBuf::from("elsewhere"));
    assert_eq!(cfg.trainer.steps, 2);
    assert_eq!(cfg.trainer_config().is_k(), 8);
    assert_eq!(cfg.trainer_config().seed, 11);
}

#[test]
fn reruns_write_identical_metrics() {
    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = run_experiment(&cfg, &dir.path().join("a")).unwrap();
    let b = run_experiment(&cfg, &dir.path().join("b")).unwrap();
    assert!(a.summary.error.is_none());
    let read = |o: &RunOutcome| fs::read(o.out_dir.join(METRICS_FILE)).unwrap();
    assert_eq!(read(&a), read(&b));
    let text = String::from_utf8(read(&a)).unwrap();
    assert!(text.starts_with("step,method,fwd_kl,rev_kl,sym_kl,mean_log_C,mean_ess,wall_ms\n"));
    let steps: Vec<usize> = a.rows.iter().map(|r| r.step).collect();
    assert_eq!(steps, vec![0, 3, 6]);
    for f in
        ["summary.json", "encoder.bin", "encoder.json", "diagnostics.jsonl", "samples.csv", "data.csv", "config.toml"]
    {
        assert!(a.out_dir.join(f).exists(), "{f}");
    }
    assert_eq!(read_metrics(a.out_dir.join(METRICS_FILE)).unwrap(), a.rows);
    let reloaded = crate::encoder::Encoder::load(a.out_dir.join("encoder")).unwrap();
    assert_eq!(reloaded.params(), a.encoder.params());
}

#[test]
fn zero_steps_report_initial_metrics_only() {
    let mut cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    cfg.trainer.steps = 0;
    let dir = tempfile::tempdir().unwrap();
    let o = run_experiment(&cfg, dir.path()).unwrap();
    assert_eq!(o.rows.len(), 1);
    let s = RunSummary::load(dir.path().join(SUMMARY_FILE)).unwrap();
    assert_eq!(s.steps_done, 0);
    assert_eq!(s.final_metrics.unwrap().step, 0);
}

#[test]
fn collapse_keeps_partial_metrics_and_reports_error() {
    let smc = SmcConfig::new(2, TemperSchedule::fixed(vec![0.0, 1.0]).unwrap(), MutationConfig::new(1, 0.1));
    let mut t = TrainerConfig::new(Method::SmcWakeA, 5, smc);
    t.metrics_every = 1;
    let mut cfg = ExperimentConfig::new(
        "collapse",
        ModelSpec::TwoMoons,
        40,
        crate::encoder::EncoderSpec::Mixture { hidden: vec![4], components: 2 },
        t,
    );
    cfg.evaluation.reference_particles = 64;
    let dir = tempfile::tempdir().unwrap();
    let o = run_experiment(&cfg, dir.path()).unwrap();
    let s = RunSummary::load(dir.path().join(SUMMARY_FILE)).unwrap();
    assert!(s.error.as_deref().unwrap().contains("datapoint"), "{:?}", s.error);
    assert_eq!(read_metrics(dir.path().join(METRICS_FILE)).unwrap(), o.rows);
}

#[test]
fn comparisons_flag_minima_and_ties() {
    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = run_experiment(&cfg, &dir.path().join("a")).unwrap();
    let fa = a.out_dir.join(METRICS_FILE);

    let single = compare_runs(std::slice::from_ref(&fa)).unwrap();
    let last = a.rows.last().unwrap();
    assert_eq!(single.rows[0].values, vec![last.fwd_kl]);
    assert_eq!(single.rows[1].values, vec![last.rev_kl]);
    assert_eq!(single.rows[2].values, vec![last.sym_kl]);
    assert!(single.rows.iter().all(|r| !r.tie));

    let twin = compare_runs(&[fa.clone(), fa.clone()]).unwrap();
    assert!(twin.rows.iter().all(|r| r.tie && r.minimum == vec![0, 1]));
    assert!(twin.to_text().contains('='));

    let mut other = cfg.clone();
    other.model = ModelSpec::Conjugate { prior_std: 5.0, noise_std: 1.0 };
    let b = run_experiment(&other, &dir.path().join("b")).unwrap();
    assert!(compare_runs(&[fa, b.out_dir.join(METRICS_FILE)]).is_err());
}

#[test]
fn recipes_are_listed_and_valid() {
    for r in recipes::RECIPES {
        for cfg in recipes::recipe_configs(r.name, 0).unwrap() {
            cfg.validate().unwrap();
            let text = cfg.to_toml_string().unwrap();
            assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg, "{}", r.name);
        }
    }
    assert!(recipes::recipe_configs("nope", 0).is_err());
}

#[test]
fn pathology_table_orders_peaked_below_exact() {
    let (_, rows) = recipes::circular_pathology(5, 1000, 20).unwrap();
    assert_eq!(rows.len(), 5);
    for w in rows[..4].windows(2) {
        assert!(w[1].mean < w[0].mean);
    }
    assert!(rows[3].mean < rows[4].mean);
}
