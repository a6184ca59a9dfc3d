//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test -p acmh --test acceptance -- 6 9`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use acmh::arwmh::run_arwmh;
use acmh::chain::{run, ChainStart, RunConfig};
use acmh::diagnostics::{censored_score, crps_bernoulli, iact, Kde, Region};
use acmh::experiment::{build_target, run_replication, ExperimentConfig, Replication, TargetConfig, Variant};
use acmh::kernels::{acmh_log_accept, draw_block, draw_cmh, ln_q_star, reversible_t_law, select_partition, RhoLaw};
use acmh::mixture_t::{conditional_t, Partition, StudentT, TMixture};
use acmh::smc::{anneal, anneal_from, SmcConfig};
use acmh::targets::{logistic_target, msn_target, Target};
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

type Outcome = (bool, String);

fn replications(target: &str, dim: usize, variant: Variant, reps: usize) -> Vec<Replication> {
    let mut cfg = ExperimentConfig::new(TargetConfig::new(target, dim), variant, PathBuf::from("unused"));
    cfg.replications = reps;
    cfg.record_timing = false;
    let built = build_target(&cfg.target).expect("target builds");
    cfg.resolve_dim(built.as_target().dim());
    (0..reps).map(|r| run_replication(&cfg, &built, r).expect("replication runs")).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn column(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

fn criterion_1() -> Outcome {
    let mut r = rng(1001);
    let mut worst: f64 = 0.0;
    for d in [1, 2, 5] {
        for _ in 0..1000 {
            let p = random_t(d, &mut r);
            let x = p.sample(&mut r);
            let z = p.sample(&mut r);
            let rho: f64 = r.random();
            let fwd = p.ln_pdf(&x) + reversible_t_law(&x, &p, rho).unwrap().ln_pdf(&z);
            let bwd = p.ln_pdf(&z) + reversible_t_law(&z, &p, rho).unwrap().ln_pdf(&x);
            worst = worst.max((fwd - bwd).abs());
        }
    }
    (worst <= 1e-9, format!("max |log flow difference| {worst:.3e} over 3000 tuples"))
}

fn moments_ok(chain: &[DVector<f64>], m: &TMixture) -> (bool, String) {
    let (mean_true, cov) = mixture_moments(m);
    let mut ok = true;
    let mut notes = Vec::new();
    for j in 0..m.dim() {
        let s: Vec<f64> = chain.iter().map(|x| x[j]).collect();
        let (mu, se) = mean_and_se(&s);
        let rel_var = variance(&s) / cov[(j, j)] - 1.0;
        ok &= (mu - mean_true[j]).abs() < 3.0 * se && rel_var.abs() < 0.05;
        notes.push(format!("x{j}: z={:.2} var {:+.3}", (mu - mean_true[j]) / se, rel_var));
    }
    (ok, notes.join(", "))
}

fn criterion_2() -> Outcome {
    let m = overlapping_mixture();
    let mut r = rng(1002);
    let law = RhoLaw::default();
    let mut x = m.sample(&mut r);
    let cmh: Vec<DVector<f64>> = (0..200_000)
        .map(|_| {
            x = draw_cmh(&x, &m, &law, &mut r).unwrap();
            x.clone()
        })
        .collect();
    let mut x = m.sample(&mut r);
    let bs: Vec<DVector<f64>> = (0..200_000)
        .map(|_| {
            let part = loop {
                let p = select_partition(2, 0.5, &mut r).unwrap();
                if !p.index_b().is_empty() {
                    break p;
                }
            };
            x = draw_block(&x, &m, &part, &mut r).unwrap();
            x.clone()
        })
        .collect();
    let (ok_c, note_c) = moments_ok(&cmh, &m);
    let (ok_b, note_b) = moments_ok(&bs, &m);
    (ok_c && ok_b, format!("CMH [{note_c}]; block [{note_b}]"))
}

fn criterion_3() -> Outcome {
    let m = overlapping_mixture();
    let g0 = StudentT::new(DVector::zeros(2), DMatrix::identity(2, 2) * 25.0, 3.0).unwrap();
    let beta0 = 0.001;
    let ln_pi = |v: &DVector<f64>| ln_q_star(v, &m, &g0, beta0).unwrap() - 1.3;
    let mut r = rng(1003);
    let mut worst: f64 = 0.0;
    for i in 0..10_000 {
        let x = m.sample(&mut r);
        let z = if i % 2 == 0 { g0.sample(&mut r) } else { m.sample(&mut r) };
        worst = worst.max(acmh_log_accept(&x, &z, &ln_pi, &m, &g0, beta0).unwrap().abs());
    }
    (worst < 1e-12, format!("max |log acceptance| {worst:.3e} over 10000 pairs"))
}

fn criterion_4() -> Outcome {
    let p =
        StudentT::new(DVector::from_row_slice(&[0.5, -1.0]), DMatrix::from_row_slice(2, 2, &[2.0, 0.9, 0.9, 1.5]), 3.5)
            .unwrap();
    let mut r = rng(1004);
    let mut worst_quad: f64 = 0.0;
    for i in 0..100 {
        let ia = i % 2;
        let part = Partition::new(vec![ia], 2).unwrap();
        let (a_val, b_val) = (r.random_range(-6.0..6.0), r.random_range(-6.0..6.0));
        let point = |a: f64| {
            let mut v = DVector::from_element(2, b_val);
            v[ia] = a;
            v
        };
        let cond = conditional_t(&p, &part, &DVector::from_element(1, b_val)).unwrap();
        let got = cond.ln_pdf(&DVector::from_element(1, a_val)).exp();
        let marginal = integrate_line(|a| p.ln_pdf(&point(a)).exp(), p.mu()[ia], p.sigma()[(ia, ia)].sqrt(), 20_000);
        worst_quad = worst_quad.max((got - p.ln_pdf(&point(a_val)).exp() / marginal).abs());
    }
    let part = Partition::new(vec![0], 2).unwrap();
    let flow = |x: &DVector<f64>, z: &DVector<f64>, exact: bool| {
        let x_b = sub_vector(x, part.index_b());
        let c = if exact { conditional_t(&p, &part, &x_b).unwrap() } else { naive_conditional_t(&p, &part, &x_b) };
        p.ln_pdf(x) + c.ln_pdf(&sub_vector(z, part.index_a()))
    };
    let (mut exact_gap, mut naive_gap): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let x = p.sample(&mut r) * 2.0;
        let mut z = p.sample(&mut r) * 2.0;
        z[1] = x[1];
        exact_gap = exact_gap.max((flow(&x, &z, true) - flow(&z, &x, true)).abs());
        naive_gap = naive_gap.max((flow(&x, &z, false) - flow(&z, &x, false)).abs());
    }
    let ok = worst_quad <= 1e-6 && exact_gap <= 1e-9 && naive_gap > 1e-3;
    (
        ok,
        format!(
            "quadrature error {worst_quad:.2e}; exact conditional balance gap {exact_gap:.2e}; naive formula gap {naive_gap:.2e}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut r = rng(1005);
    let iid: Vec<f64> = (0..100_000).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
    let mut x = 0.0;
    let innov = 0.75f64.sqrt();
    let ar: Vec<f64> = (0..1_000_000)
        .map(|_| {
            x = 0.5 * x + innov * r.sample::<f64, _>(StandardNormal);
            x
        })
        .collect();
    let (a, b) = (iact(&iid).unwrap(), iact(&ar).unwrap());
    ((a - 1.0).abs() <= 0.1 && (b - 3.0).abs() <= 0.15, format!("iid {a:.4}, AR(1) {b:.4}"))
}

fn left_fraction(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows()).filter(|&i| m.row(i).sum() < 0.0).count() as f64 / m.nrows() as f64
}

fn criterion_6() -> Outcome {
    let acmh = replications("msn", 2, Variant::Acmh, 5);
    let base = replications("msn", 2, Variant::Arwmh, 5);
    let mut ok = true;
    let mut notes = Vec::new();
    for (r, rep) in acmh.iter().enumerate() {
        let left = left_fraction(&rep.main.iterates);
        let both = left > 0.0 && left < 1.0;
        let (l, le) = (rep.report.lpds.unwrap(), rep.report.lpds_exact.unwrap());
        ok &= both && (left - 0.6).abs() <= 0.05 && (l - le).abs() <= 0.15;
        notes.push(format!("rep {r}: left {left:.3}, lpds {l:.3} vs exact {le:.3}"));
    }
    let a = mean(&acmh.iter().map(|r| r.report.lpds.unwrap()).collect::<Vec<_>>());
    let b = mean(&base.iter().map(|r| r.report.lpds.unwrap()).collect::<Vec<_>>());
    ok &= b <= a - 5.0;
    notes.push(format!("mean lpds acmh {a:.3}, arwmh {b:.3}"));
    (ok, notes.join("; "))
}

fn criterion_7() -> Outcome {
    let acmh = replications("msn", 10, Variant::Acmh, 2);
    let indep = replications("msn", 10, Variant::AcmhIndep, 2);
    let mut ok = true;
    let mut notes = Vec::new();
    for (r, rep) in acmh.iter().enumerate() {
        let (l, le) = (rep.report.lpds.unwrap(), rep.report.lpds_exact.unwrap());
        ok &= (l - le).abs() <= 0.3;
        notes.push(format!("rep {r}: lpds {l:.3} vs exact {le:.3}"));
    }
    let a = mean(&acmh.iter().map(|r| r.report.acc_rate).collect::<Vec<_>>());
    let b = mean(&indep.iter().map(|r| r.report.acc_rate).collect::<Vec<_>>());
    ok &= b < a;
    notes.push(format!("acceptance acmh {a:.4}, independent-only {b:.4}"));
    (ok, notes.join("; "))
}

fn criterion_8() -> Outcome {
    let rep = &replications("banana", 5, Variant::Acmh, 1)[0];
    let x = &rep.main.iterates;
    let m1 = mean(&column(x, 0));
    let v1 = variance(&column(x, 0));
    let tail_vars: Vec<f64> = (2..5).map(|j| variance(&column(x, j))).collect();
    let mut ok = m1.abs() <= 1.5 && (80.0..=120.0).contains(&v1) && tail_vars.iter().all(|v| (0.85..=1.15).contains(v));
    let with = replications("banana", 10, Variant::Acmh, 5);
    let without = replications("banana", 10, Variant::AcmhNoBlock, 5);
    let ia = mean(&with.iter().map(|r| r.report.iact_avg).collect::<Vec<_>>());
    let ib = mean(&without.iter().map(|r| r.report.iact_avg).collect::<Vec<_>>());
    ok &= ia <= ib;
    (
        ok,
        format!(
            "d=5: mean x1 {m1:.3}, var x1 {v1:.2}, var x3..x5 {:?}; d=10 mean IACT with blocks {ia:.2}, without {ib:.2}",
            tail_vars.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_9() -> Outcome {
    let target = msn_target(1).unwrap();
    let mut r = rng(1009);
    let test: Vec<f64> = (0..5000).map(|_| target.sample_exact(&mut r).unwrap()[0]).collect();
    let region = Region::tails(15.0);
    let score = |reps: &[Replication]| {
        mean(
            &reps
                .iter()
                .map(|rep| {
                    let k = Kde::silverman(&column(&rep.main.iterates, 0)).unwrap();
                    censored_score(&k, &test, &region).unwrap()
                })
                .collect::<Vec<_>>(),
        )
    };
    let with = score(&replications("msn", 1, Variant::Acmh, 10));
    let without = score(&replications("msn", 1, Variant::AcmhNoRw, 10));
    let in_region = test.iter().filter(|v| region.contains(**v)).count();
    (
        with >= without,
        format!("mean censored score with RW {with:.6}, without {without:.6} ({in_region} of 5000 test points in the region)"),
    )
}

#[derive(Debug)]
struct TTarget(StudentT);

impl Target for TTarget {
    fn name(&self) -> &str {
        "t"
    }
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn ln_density(&self, x: &DVector<f64>) -> f64 {
        self.0.ln_pdf(x)
    }
    fn envelope(&self) -> &dyn acmh::targets::Envelope {
        &self.0
    }
}

fn criterion_10() -> Outcome {
    let target = msn_target(1).unwrap();
    let set = anneal(&target, &SmcConfig::default(), &mut rng(1010)).unwrap();
    let left = set.particles.iter().filter(|p| p[0] < 0.0).count() as f64 / set.particles.len() as f64;
    let pi0 = StudentT::standard(3, 3.0).unwrap();
    let same = anneal_from(&TTarget(pi0.clone()), &pi0, &SmcConfig::default(), &mut rng(1011)).unwrap();
    let uniform = same.weight_history.iter().all(|w| w.iter().all(|v| *v == 1.0 / w.len() as f64));
    (
        (left - 0.6).abs() <= 0.1 && uniform,
        format!("left basin fraction {left:.3}; uniform weights at every stage: {uniform}"),
    )
}

fn criterion_11() -> Outcome {
    let mut r = rng(1011);
    let (n, p) = (500, 5);
    let beta = [-0.3, 1.0, -0.8, 0.5, 0.0, 0.25];
    let x = DMatrix::from_fn(n, p, |_, _| r.sample::<f64, _>(StandardNormal));
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let eta = beta[0] + (0..p).map(|j| beta[j + 1] * x[(i, j)]).sum::<f64>();
            f64::from(r.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))
        })
        .collect();
    let target = logistic_target(&x, &y).unwrap();
    let d = target.dim();
    let smc = SmcConfig { prepass_steps: Some(1000), n_particles: 500.max(10 * d), ..SmcConfig::default() };
    let set = anneal(&target, &smc, &mut rng(1012)).unwrap();
    let start = ChainStart::from_particles(set.particles, &target).unwrap();
    let out = run(&target, &RunConfig { seed: 1013, ..RunConfig::for_dim(d) }, &start).unwrap();
    let ln_pi = |v: &DVector<f64>| target.ln_density(v);
    let reference = run_arwmh(&ln_pi, &start.x0, 10_000, 1_000_000, &mut rng(1014)).unwrap();
    let mut ok = true;
    let mut zs = Vec::new();
    for j in 0..d {
        let (ma, ea) = mean_and_se(&column(&out.main.iterates, j));
        let (mb, eb) = mean_and_se(&reference.column(j));
        let z = (ma - mb) / (ea * ea + eb * eb).sqrt();
        ok &= z.abs() < 3.0;
        zs.push(format!("{z:+.2}"));
    }
    let crps_ok = crps_bernoulli(0.5, true).unwrap() == 0.25
        && crps_bernoulli(0.0, false).unwrap() == 0.0
        && crps_bernoulli(1.0, false).unwrap() == 1.0
        && crps_bernoulli(0.2, true).unwrap() == 0.8 * 0.8;
    (ok && crps_ok, format!("standardised mean differences {zs:?}; CRPS identities exact: {crps_ok}"))
}

fn criterion_12() -> Outcome {
    let script = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scripts/reproduce.sh");
    let ok = std::fs::read_to_string(&script).map(|s| s.starts_with("#!")).unwrap_or(false);
    (ok, format!("full-scale runs are scripted, not gated: {}", script.display()))
}

fn main() -> ExitCode {
    let criteria: [(usize, fn() -> Outcome); 12] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
        (12, criterion_12),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let clock = Instant::now();
        let (ok, detail) = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        failed += usize::from(!ok);
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("criterion {n}: {verdict} ({detail}) [{:.1}s]", clock.elapsed().as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
