use nalgebra::DVector;

use super::*;
use crate::encoder::{Encoder, EncoderSpec};
use crate::numkit::{std_normal, RngStream};
use crate::smc::SmcRunRecord;
use crate::Error;

fn record(atoms: &[f64], weights: &[f64], log_c: f64) -> SmcRunRecord {
    SmcRunRecord {
        atoms: atoms.iter().map(|a| DVector::from_element(1, *a)).collect(),
        weights: weights.to_vec(),
        log_c,
        temperatures: vec![0.0, 1.0],
        ess_trace: vec![1.0],
        resample_count: 0,
        acceptance_rate: 0.0,
        likelihood_evals: 0,
        capped: false,
    }
}

fn random_record(rng: &mut RngStream, k: usize, log_c: f64) -> SmcRunRecord {
    let atoms: Vec<f64> = (0..k).map(|_| 2.0 * std_normal(rng)).collect();
    let raw: Vec<f64> = (0..k).map(|_| std_normal(rng).exp()).collect();
    let s: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|r| r / s).collect();
    let rest: f64 = w[1..].iter().sum();
    w[0] = 1.0 - rest;
    record(&atoms, &w, log_c)
}

fn encoder(seed: u64) -> Encoder {
    let mut rng = RngStream::new(seed, 0);
    let mut e = EncoderSpec::FullCov { hidden: vec![3], jitter: 1e-4 }.build(1, 1, &mut rng).unwrap();
    for p in e.params_mut() {
        *p += 0.3 * std_normal(&mut rng);
    }
    e
}

fn x() -> DVector<f64> {
    DVector::from_element(1, 0.7)
}

fn per_run(enc: &Encoder, rec: &SmcRunRecord) -> Vec<f64> {
    let c: Vec<f64> = rec.weights.iter().map(|w| -w).collect();
    enc.score_grad(&x(), &rec.atoms, &c)
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(u, v)| (u - v).abs() <= tol * (1.0 + v.abs()))
}

fn filled(mode: StoreMode, recs: &[SmcRunRecord], seed: u64) -> SamplerStore {
    let mut s = SamplerStore::new(0, mode);
    let mut rng = RngStream::new(seed, 1);
    for r in recs {
        s.append(r, &mut rng);
    }
    s
}

#[test]
fn running_mean_small_cases() {
    let s = filled(StoreMode::C, &[record(&[0.0], &[1.0], 2f64.ln())], 0);
    assert_eq!(s.run_count(), 1);
    assert!((s.log_mean_c().exp() - 2.0).abs() < 1e-14);
    let s = filled(StoreMode::B, &[record(&[0.0], &[1.0], 0.0), record(&[0.0], &[1.0], 3f64.ln())], 0);
    assert!((s.log_mean_c().exp() - 2.0).abs() < 1e-14);
}

#[test]
fn streaming_mean_matches_batch() {
    let mut rng = RngStream::new(1, 0);
    let log_cs: Vec<f64> = (0..1000).map(|_| 1.5 * std_normal(&mut rng) - 40.0).collect();
    let mut s = SamplerStore::new(0, StoreMode::C);
    for l in &log_cs {
        s.append(&record(&[0.0], &[1.0], *l), &mut rng);
    }
    let batch = log_cs.iter().map(|l| (l + 40.0).exp()).sum::<f64>() / 1000.0;
    let streamed = (s.log_mean_c() + 40.0).exp();
    assert!(((streamed - batch) / batch).abs() < 1e-10);
}

#[test]
fn single_run_estimates_ignore_evidence() {
    let enc = encoder(2);
    let mut rng = RngStream::new(2, 0);
    let rec = random_record(&mut rng, 6, 17.3);
    let expected = per_run(&enc, &rec);
    let a = grad_estimate_a(&filled(StoreMode::A, std::slice::from_ref(&rec), 0), &enc, &x()).unwrap();
    let c = grad_estimate_c(&filled(StoreMode::C, std::slice::from_ref(&rec), 0), &enc, &x()).unwrap();
    assert!(close(&a.grad, &expected, 1e-12));
    assert!(close(&c.grad, &expected, 1e-12));
    let sb = filled(StoreMode::B, &[rec], 0);
    let z = sb.retained()[0].z.clone();
    let b = grad_estimate_b(&sb, &enc, &x()).unwrap();
    assert!(close(&b.grad, &enc.score_grad(&x(), &[z], &[-1.0]), 1e-12));
}

#[test]
fn two_run_convex_combination() {
    let enc = encoder(3);
    let mut rng = RngStream::new(3, 0);
    let r1 = random_record(&mut rng, 5, 3f64.ln() - 2.0);
    let r2 = random_record(&mut rng, 5, -2.0);
    let (g1, g2) = (per_run(&enc, &r1), per_run(&enc, &r2));
    let a = grad_estimate_a(&filled(StoreMode::A, &[r1, r2], 0), &enc, &x()).unwrap();
    let expected: Vec<f64> = g1.iter().zip(&g2).map(|(u, v)| 0.75 * u + 0.25 * v).collect();
    assert!(close(&a.grad, &expected, 1e-12));
}

#[test]
fn estimate_a_lies_in_convex_hull() {
    let enc = encoder(4);
    let mut rng = RngStream::new(4, 0);
    for _ in 0..20 {
        let recs: Vec<_> = (0..5)
            .map(|_| {
                let l = 3.0 * std_normal(&mut rng);
                random_record(&mut rng, 4, l)
            })
            .collect();
        let per: Vec<Vec<f64>> = recs.iter().map(|r| per_run(&enc, r)).collect();
        let a = grad_estimate_a(&filled(StoreMode::A, &recs, 0), &enc, &x()).unwrap();
        for i in 0..a.grad.len() {
            let lo = per.iter().map(|g| g[i]).fold(f64::INFINITY, f64::min);
            let hi = per.iter().map(|g| g[i]).fold(f64::NEG_INFINITY, f64::max);
            assert!(a.grad[i] >= lo - 1e-12 && a.grad[i] <= hi + 1e-12);
        }
    }
}

#[test]
fn estimates_are_evidence_scale_invariant() {
    let enc = encoder(5);
    let mut rng = RngStream::new(5, 0);
    let recs: Vec<_> = (0..6)
        .map(|_| {
            let l = std_normal(&mut rng);
            random_record(&mut rng, 4, l)
        })
        .collect();
    let shifted: Vec<_> = recs.iter().map(|r| SmcRunRecord { log_c: r.log_c + 250.0, ..r.clone() }).collect();
    for mode in [StoreMode::A, StoreMode::B, StoreMode::C] {
        let (s1, s2) = (filled(mode, &recs, 9), filled(mode, &shifted, 9));
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = match mode {
            StoreMode::A => {
                vec![(grad_estimate_a(&s1, &enc, &x()).unwrap().grad, grad_estimate_a(&s2, &enc, &x()).unwrap().grad)]
            }
            StoreMode::B => {
                vec![(grad_estimate_b(&s1, &enc, &x()).unwrap().grad, grad_estimate_b(&s2, &enc, &x()).unwrap().grad)]
            }
            StoreMode::C => {
                vec![(grad_estimate_c(&s1, &enc, &x()).unwrap().grad, grad_estimate_c(&s2, &enc, &x()).unwrap().grad)]
            }
        };
        for (u, v) in pairs {
            assert!(close(&u, &v, 1e-10), "{mode:?}");
        }
    }
}

#[test]
fn identical_retained_atoms_give_score_there() {
    let enc = encoder(6);
    let recs: Vec<_> = (0..4).map(|i| record(&[1.25, -3.0], &[1.0, 0.0], i as f64)).collect();
    let b = grad_estimate_b(&filled(StoreMode::B, &recs, 0), &enc, &x()).unwrap();
    let expected = enc.score_grad(&x(), &[DVector::from_element(1, 1.25)], &[-1.0]);
    assert!(close(&b.grad, &expected, 1e-12));
}

#[test]
fn estimate_b_averages_to_estimate_a() {
    let enc = encoder(7);
    let mut rng = RngStream::new(7, 0);
    let recs: Vec<_> = (0..5)
        .map(|_| {
            let l = std_normal(&mut rng);
            random_record(&mut rng, 8, l)
        })
        .collect();
    let a = grad_estimate_a(&filled(StoreMode::A, &recs, 0), &enc, &x()).unwrap().grad;
    let reps = 4000;
    let mut sum = vec![0.0; a.len()];
    let mut sq = vec![0.0; a.len()];
    for r in 0..reps {
        let b = grad_estimate_b(&filled(StoreMode::B, &recs, 100 + r), &enc, &x()).unwrap().grad;
        for i in 0..a.len() {
            sum[i] += b[i];
            sq[i] += b[i] * b[i];
        }
    }
    for i in 0..a.len() {
        let m = sum[i] / reps as f64;
        let var = sq[i] / reps as f64 - m * m;
        let se = (var / reps as f64).sqrt();
        assert!((m - a[i]).abs() <= 3.0 * se + 1e-12, "coord {i}: {m} vs {} (se {se})", a[i]);
    }
}

#[test]
fn estimate_c_uses_ratio_to_running_mean() {
    let enc = encoder(8);
    let mut rng = RngStream::new(8, 0);
    let r1 = random_record(&mut rng, 4, 1.0);
    let r2 = random_record(&mut rng, 4, 1.0);
    let s = filled(StoreMode::C, &[r1, r2.clone()], 0);
    let c = grad_estimate_c(&s, &enc, &x()).unwrap();
    assert!(close(&c.grad, &per_run(&enc, &r2), 1e-12));
    let r3 = random_record(&mut rng, 4, 1.0 + 2f64.ln());
    let s = filled(StoreMode::C, &[record(&[0.0], &[1.0], 1.0), r3.clone()], 0);
    // Ĉ₂ / mean(Ĉ₁, Ĉ₂) = 2 / 1.5
    let expected: Vec<f64> = per_run(&enc, &r3).iter().map(|g| g * 2.0 / 1.5).collect();
    assert!(close(&grad_estimate_c(&s, &enc, &x()).unwrap().grad, &expected, 1e-12));
}

#[test]
fn windowed_c_averages_numerators() {
    let enc = encoder(9);
    let mut rng = RngStream::new(9, 0);
    let recs: Vec<_> = (0..5).map(|i| random_record(&mut rng, 3, 0.1 * i as f64)).collect();
    let mut s = SamplerStore::with_window(0, StoreMode::C, 2);
    for r in &recs {
        s.append(r, &mut rng);
    }
    let mean = recs.iter().map(|r| r.log_c.exp()).sum::<f64>() / 5.0;
    let mut expected = vec![0.0; enc.num_params()];
    for r in &recs[3..] {
        for (e, g) in expected.iter_mut().zip(per_run(&enc, r)) {
            *e += g * r.log_c.exp() / mean / 2.0;
        }
    }
    assert!(close(&grad_estimate_c(&s, &enc, &x()).unwrap().grad, &expected, 1e-12));
}

#[test]
fn memory_regimes() {
    let mut rng = RngStream::new(10, 0);
    let recs: Vec<_> = (0..50).map(|_| random_record(&mut rng, 16, 0.0)).collect();
    let size = |mode, m: usize| filled(mode, &recs[..m], 0).stored_floats();
    assert_eq!(size(StoreMode::C, 1), size(StoreMode::C, 50));
    assert_eq!(size(StoreMode::B, 50), 50 * size(StoreMode::B, 1));
    assert!(size(StoreMode::A, 50) >= 50 * 16 * 2);
    assert_eq!(filled(StoreMode::C, &recs, 0).records().len(), 1);
}

#[test]
fn wrong_mode_and_empty_store_errors() {
    let enc = encoder(11);
    let empty = SamplerStore::new(4, StoreMode::A);
    assert!(matches!(grad_estimate_a(&empty, &enc, &x()), Err(Error::EmptyStore(4))));
    let b = filled(StoreMode::B, &[record(&[0.0], &[1.0], 0.0)], 0);
    assert!(matches!(grad_estimate_a(&b, &enc, &x()), Err(Error::WrongStoreMode { .. })));
    assert!(matches!(grad_estimate_c(&b, &enc, &x()), Err(Error::WrongStoreMode { .. })));
}

#[test]
fn subsampling() {
    let mut rng = RngStream::new(12, 0);
    let single = filled(StoreMode::A, &[record(&[0.0], &[1.0], 0.0)], 0);
    assert_eq!(subsample_records(&single, Subsample::CProportional { draws: 7 }, &mut rng).unwrap(), vec![0; 7]);

    let two = filled(StoreMode::A, &[record(&[0.0], &[1.0], 9f64.ln()), record(&[1.0], &[1.0], 0.0)], 0);
    let n = 10_000;
    let picks = subsample_records(&two, Subsample::CProportional { draws: n }, &mut rng).unwrap();
    let first = picks.iter().filter(|i| **i == 0).count() as f64;
    assert!((first - 9000.0).abs() < 3.0 * (n as f64 * 0.09).sqrt());

    let recs: Vec<_> = (0..9).map(|i| record(&[i as f64], &[1.0], 0.0)).collect();
    let s = filled(StoreMode::A, &recs, 0);
    let mut all = subsample_records(&s, Subsample::Uniform { size: 9 }, &mut rng).unwrap();
    all.sort();
    assert_eq!(all, (0..9).collect::<Vec<_>>());
}

#[test]
fn naive_subset_is_one_run_estimate() {
    let enc = encoder(13);
    let mut rng = RngStream::new(13, 0);
    let recs: Vec<_> = (0..4).map(|i| random_record(&mut rng, 3, 5.0 * i as f64)).collect();
    let s = filled(StoreMode::A, &recs, 0);
    let mut r1 = RngStream::new(14, 0);
    let g = grad_estimate_subsampled(&s, &enc, &x(), Subsample::Uniform { size: 1 }, &mut r1).unwrap();
    let pick = subsample_records(&s, Subsample::Uniform { size: 1 }, &mut RngStream::new(14, 0)).unwrap()[0];
    assert!(close(&g.grad, &per_run(&enc, &recs[pick]), 1e-12));
}

#[test]
fn snapshot_round_trip() {
    let mut rng = RngStream::new(15, 0);
    let recs: Vec<_> = (0..4).map(|_| random_record(&mut rng, 5, std_normal(&mut RngStream::new(1, 2)))).collect();
    for mode in [StoreMode::A, StoreMode::B, StoreMode::C] {
        let s = filled(mode, &recs, 3);
        let mut buf = Vec::new();
        s.write_snapshot(&mut buf).unwrap();
        assert_eq!(SamplerStore::read_snapshot(&mut buf.as_slice()).unwrap(), s);
    }
    assert!(SamplerStore::read_snapshot(&mut &b"nope"[..]).is_err());
}
