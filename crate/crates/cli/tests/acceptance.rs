//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use l0uniq::certificates::{check_scaled_spark, CandidateSolution, CertificateConfig, CertificateId, Verdict};
use l0uniq::coherence::coherence_profile;
use l0uniq::experiments::{run_analyze, run_ensemble, AnalyzeConfig, ExperimentConfig};
use l0uniq::lp_norm::psi_p;
use l0uniq::oracle::{solve_exhaustive, Constraint, Instance, SupportSize};
use l0uniq::scaled::{
    basis_family, phi_star, proposition_comparator, random_well_conditioned, scaled_matrix, PropositionOutcome,
};
use l0uniq::spark::{brauer_lower_bound, de_lower_bound, spark_exact, SparkValue, DEFAULT_SUBSET_BUDGET};
use l0uniq::{DenseMatrix, ToleranceConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn tol() -> ToleranceConfig {
    ToleranceConfig::default()
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DenseMatrix::from_row_slice(rows, cols, &data).unwrap()
}

fn identity_plus_ones_example() -> Outcome {
    let a = DenseMatrix::identity_plus_ones(5);
    let start = Instant::now();
    let s = spark_exact(&a, DEFAULT_SUBSET_BUDGET, &tol()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(s.value == SparkValue::Finite(6), || format!("spark {:?}, expected 6", s.value))?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    let p = coherence_profile(&a, 1e-10).map_err(|e| e.to_string())?;
    let mu_ref = 5f64.powf(-0.5);
    ensure((p.mu - mu_ref).abs() <= 1e-12, || format!("mu = {}", p.mu))?;

    let inst = Instance::new(
        a,
        DenseMatrix::zeros(5, 0),
        vec![1.0, 0.0, 0.0, 0.0, 0.0],
        Constraint::FreeY,
        None,
        &tol(),
    )
    .map_err(|e| e.to_string())?;
    let doc = run_analyze(&inst, None, &AnalyzeConfig::default()).map_err(|e| e.to_string())?;
    let note = doc.notes.iter().find(|n| n.contains("1 + sqrt(5)") && n.contains("inconsistent"));
    ensure(note.is_some(), || format!("missing discrepancy note in {:?}", doc.notes))?;
    Ok(format!(
        "Spark = 6 in {:.1} ms, mu = {:.15}, report notes 1 + 1/mu = 1 + sqrt(5) = {:.6}",
        elapsed.as_secs_f64() * 1e3,
        p.mu,
        1.0 + 5f64.sqrt()
    ))
}

fn psi_p_closed_form_vs_search() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut total, mut attained) = (0usize, 0usize);
    for _ in 0..100 {
        let a = gaussian(6, 8, &mut rng);
        for p in [0.2, 0.5, 0.8] {
            let r = psi_p(&a, p).map_err(|e| e.to_string())?;
            ensure(r.search_value <= r.closed_form + 1e-9, || {
                format!("search {} exceeds closed form {} at p = {p}", r.search_value, r.closed_form)
            })?;
            total += 1;
            if (r.closed_form - r.search_value).abs() <= 1e-6 * r.closed_form {
                attained += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let rate = attained as f64 / total as f64;
    ensure(rate >= 0.95, || format!("attained on {attained}/{total}"))?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "never above closed form; attained within 1e-6 on {attained}/{total} ({:.1}%) in {:.2} s",
        100.0 * rate,
        elapsed.as_secs_f64()
    ))
}

/// Shared sample for criteria 3 and 4: 50 pairs x 20 transforms.
fn sampled_bases() -> Vec<(DenseMatrix, DenseMatrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut out = Vec::new();
    for _ in 0..50 {
        let a1 = gaussian(6, 10, &mut rng);
        let a2 = gaussian(6, 2, &mut rng);
        let f = basis_family(&a2, &tol()).unwrap();
        let reference = scaled_matrix(&f, &a1, None).unwrap();
        for _ in 0..20 {
            let t = random_well_conditioned(f.q, 1e3, &mut rng);
            out.push((reference.clone(), scaled_matrix(&f, &a1, Some(&t)).unwrap()));
        }
    }
    out
}

fn scaled_spark_invariance(sample: &[(DenseMatrix, DenseMatrix)]) -> Outcome {
    let mut checks = 0;
    for (reference, transformed) in sample {
        let s0 = spark_exact(reference, DEFAULT_SUBSET_BUDGET, &tol()).map_err(|e| e.to_string())?;
        let s1 = spark_exact(transformed, DEFAULT_SUBSET_BUDGET, &tol()).map_err(|e| e.to_string())?;
        ensure(s0.value == s1.value, || format!("check {checks}: {:?} vs {:?}", s0.value, s1.value))?;
        checks += 1;
    }
    ensure(checks == 1000, || format!("{checks} checks"))?;
    Ok(format!("Spark((B0 T)^T A1) = Spark(B0^T A1) in all {checks} checks"))
}

fn inequality_chain(sample: &[(DenseMatrix, DenseMatrix)]) -> Outcome {
    let mut checked = 0;
    let mut worst = f64::NEG_INFINITY;
    for (_, b) in sample {
        let spark = spark_exact(b, DEFAULT_SUBSET_BUDGET, &tol()).map_err(|e| e.to_string())?;
        let mu = coherence_profile(b, 1e-10).map_err(|e| e.to_string())?.mu;
        let lhs = if mu == 0.0 { f64::INFINITY } else { 1.0 + 1.0 / mu };
        let rhs = spark.value.as_f64();
        ensure(lhs <= rhs + 1e-9, || format!("1 + 1/mu = {lhs} > Spark = {rhs}"))?;
        worst = worst.max(lhs - rhs);
        checked += 1;
    }
    Ok(format!(
        "1 + 1/mu(B^T A1) <= Spark(B^T A1) on all {checked} bases (max lhs - rhs = {worst:.4})"
    ))
}

fn brauer_improvement() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut drawn, mut applicable) = (0usize, 0usize);
    let mut min_gain = f64::INFINITY;
    while applicable < 100 {
        ensure(start.elapsed() < Duration::from_secs(60), || {
            format!("only {applicable} applicable instances in 60 s")
        })?;
        let m = rng.gen_range(3..=7);
        let n = rng.gen_range(m + 1..=12);
        let a = gaussian(m, n, &mut rng);
        drawn += 1;
        let p = coherence_profile(&a, 1e-10).map_err(|e| e.to_string())?;
        let br = brauer_lower_bound(&p);
        if !(br.applicable && p.mu2.is_some_and(|m2| m2 < p.mu)) {
            continue;
        }
        applicable += 1;
        let de = de_lower_bound(&p).value;
        let spark = spark_exact(&a, DEFAULT_SUBSET_BUDGET, &tol()).map_err(|e| e.to_string())?;
        let k = spark.value.as_f64();
        ensure(br.value > de, || format!("refined {} not above {de}", br.value))?;
        ensure(br.value <= k + 1e-9, || format!("refined {} above spark {k}", br.value))?;
        min_gain = min_gain.min(br.value - de);
    }
    Ok(format!(
        "{applicable} applicable of {drawn} drawn in {:.2} s; always > 1 + 1/mu (min gain {min_gain:.2e}) and <= Spark",
        start.elapsed().as_secs_f64()
    ))
}

fn certificate_soundness() -> Outcome {
    let start = Instant::now();
    let mut certified = 0;
    let mut trials = 0;
    for (k0, count, seed) in [(1, 67, 6001u64), (2, 67, 6002), (3, 66, 6003)] {
        let cfg = ExperimentConfig {
            m: 6,
            n1: 10,
            n2: 2,
            k0,
            trials: count,
            seed,
            constraint: Constraint::FreeY,
            ..ExperimentConfig::default()
        };
        let doc = run_ensemble(&cfg).map_err(|e| e.to_string())?;
        let s = doc.ensemble.expect("ensemble section");
        ensure(s.soundness_violations == 0, || format!("k0 = {k0}: {} violations", s.soundness_violations))?;
        ensure(s.unconfirmed == 0, || format!("k0 = {k0}: {} unconfirmed", s.unconfirmed))?;
        trials += s.trials;
        certified += s.records.iter().filter(|r| r.verdict == Verdict::UniqueCertified).count();
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{trials} instances, {certified} certified unique, 0 violations, {:.1} s",
        elapsed.as_secs_f64()
    ))
}

fn worked_example() -> Outcome {
    let e = DenseMatrix::column_vector(&[1.0, 1.0, 1.0]).unwrap();
    let inst = Instance::new(DenseMatrix::identity(3), e, vec![1.0, 0.0, 0.0], Constraint::FreeY, None, &tol())
        .map_err(|err| err.to_string())?;
    let cand = CandidateSolution::new(&inst, vec![1.0, 0.0, 0.0], vec![0.0], &tol()).map_err(|e| e.to_string())?;
    let [scaled, _] = check_scaled_spark(&inst, &cand, &CertificateConfig::default());
    ensure(scaled.id == CertificateId::ScaledSpark, || "wrong id".into())?;
    ensure(scaled.threshold == 1.5 && cand.x_support_size == 1 && scaled.holds, || {
        format!("threshold {}, support {}, holds {}", scaled.threshold, cand.x_support_size, scaled.holds)
    })?;
    let o = solve_exhaustive(&inst, 3, &tol()).map_err(|e| e.to_string())?;
    ensure(o.k_star == SupportSize::Size(1), || format!("k* = {:?}", o.k_star))?;
    ensure(o.unique_x_part && o.optimal_x_parts.len() == 1, || "x part not unique".into())?;
    let x = &o.optimal_x_parts[0];
    let err = (x[0] - 1.0).abs().max(x[1].abs()).max(x[2].abs());
    ensure(err <= 1e-12, || format!("x part {x:?}"))?;
    Ok(format!(
        "ScaledSpark threshold {} holds for ||x||_0 = 1; oracle k* = 1, unique x part e1",
        scaled.threshold
    ))
}

fn phi_star_and_proposition() -> Outcome {
    let phi = phi_star(1, 1, 0.5, 0.2).map_err(|e| e.to_string())?;
    ensure((phi - 4.5).abs() <= 1e-12, || format!("phi* = {phi}"))?;
    match proposition_comparator(0.4, 0.5, 0.2) {
        PropositionOutcome::Improved {
            phi_star,
            coherence_bound,
            verified: true,
        } if (phi_star - 4.5).abs() <= 1e-12 && (coherence_bound - 3.5).abs() <= 1e-12 => {
            Ok(format!("phi* = {phi}; comparator Improved, {phi_star} > {coherence_bound}"))
        }
        other => Err(format!("comparator returned {other:?}")),
    }
}

fn run_cli_ensemble(threads: usize) -> Result<Value, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = dir.path().join("report.json");
    let status = Command::new(env!("CARGO_BIN_EXE_l0uniq"))
        .args(["--threads", &threads.to_string(), "ensemble", "--seed", "42", "--trials", "20", "--report"])
        .arg(&report)
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.success(), || format!("exit status {status}"))?;
    let text = std::fs::read_to_string(&report).map_err(|e| e.to_string())?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    v.as_object_mut().ok_or("report is not an object")?.remove("timings");
    Ok(v)
}

fn determinism() -> Outcome {
    let first = run_cli_ensemble(1)?;
    let second = run_cli_ensemble(1)?;
    let eight = run_cli_ensemble(8)?;
    let bytes = |v: &Value| serde_json::to_string(v).unwrap();
    ensure(bytes(&first) == bytes(&second), || "two single-thread runs differ".into())?;
    ensure(bytes(&first) == bytes(&eight), || "1 vs 8 threads differ".into())?;
    Ok(format!(
        "three runs (1, 1, 8 threads) byte-identical without timings ({} bytes)",
        bytes(&first).len()
    ))
}

fn main() {
    let sample = sampled_bases();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("[I_m, e] spark and coherence note", Box::new(identity_plus_ones_example)),
        ("psi_p closed form vs search", Box::new(psi_p_closed_form_vs_search)),
        ("scaled spark basis invariance", Box::new(|| scaled_spark_invariance(&sample))),
        ("inequality chain 1 + 1/mu <= Spark", Box::new(|| inequality_chain(&sample))),
        ("refined bound improvement", Box::new(brauer_improvement)),
        ("certificate soundness", Box::new(certificate_soundness)),
        ("worked end-to-end example", Box::new(worked_example)),
        ("phi* arithmetic and comparator", Box::new(phi_star_and_proposition)),
        ("ensemble determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
