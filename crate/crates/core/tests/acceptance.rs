//! Acceptance suite: one test per shipping criterion, each printing a
//! single PASS/FAIL line with its measured evidence. Workload sizes and
//! regression thresholds are frozen; run with `--nocapture` to see the
//! lines for passing tests too.

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use fclmqc::chimera::ChimeraGraph;
use fclmqc::experiment::{
    self, samples_to_solution, CaseOutcome, ReportSummary, Sts, StsMode, SurveyConfig, SurveyGrid,
};
use fclmqc::fcl::{FclConfig, FclInstance, OverlapLimit, ProblemType};
use fclmqc::ising::Sample;
use fclmqc::mqc;
use fclmqc::sampler::{anneal_batch, random_batch, AnnealConfig, BatchSource, SampleBatch};

fn verdict(n: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {n} ({name}): {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "ACCEPTANCE {n} ({name}) failed: {detail}");
}

fn instance(problem_type: ProblemType, c: usize, alpha: f64, r: OverlapLimit, seed: u64) -> FclInstance {
    try_instance(problem_type, c, alpha, r, seed)
        .expect("generation succeeds for acceptance workloads")
}

/// None when this seed ran out of non-overlapping loop placements; such
/// seeds are skipped and the workload quota filled from later ones.
fn try_instance(
    problem_type: ProblemType,
    c: usize,
    alpha: f64,
    r: OverlapLimit,
    seed: u64,
) -> Option<FclInstance> {
    match FclInstance::generate(&FclConfig { problem_type, c, alpha, r_limit: r, seed }) {
        Ok(inst) => Some(inst),
        Err(fclmqc::Error::GenerationFailure { .. }) => None,
        Err(e) => panic!("unexpected generation error: {e}"),
    }
}

/// Criterion: combining two samples never yields a higher energy than the
/// better input, over ≥10^4 randomized (instance, pair) draws on regions
/// of side 1..3. Energies are integers here, so the comparison is exact.
#[test]
fn combining_never_worsens_the_better_sample() {
    let start = Instant::now();
    let alphas = [0.1, 0.2, 0.3, 0.4, 0.5];
    let mut draws = 0u64;
    let mut violations = 0u64;
    for c in 1..=3usize {
        let mut accepted = 0u64;
        let mut i = 0u64;
        while accepted < 34 {
            let alpha = alphas[i as usize % alphas.len()];
            let r = if i % 2 == 0 { OverlapLimit::Unlimited } else { OverlapLimit::Bounded(3) };
            let seed = 1000 * c as u64 + i;
            i += 1;
            let Some(inst) = try_instance(ProblemType::Type1, c, alpha, r, seed) else {
                continue;
            };
            accepted += 1;
            let p = &inst.problem;
            let batch = random_batch(p, 200, 77 + i).unwrap();
            for pair in batch.samples.chunks(2) {
                let (s1, s2) = (&pair[0], &pair[1]);
                let combined = mqc::combine_pair(p, s1, s2).unwrap();
                let floor = p.energy(s1).unwrap().min(p.energy(s2).unwrap());
                if p.energy(&combined).unwrap() > floor {
                    violations += 1;
                }
                draws += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        "pairwise combination never worsens",
        draws >= 10_000 && violations == 0 && elapsed < Duration::from_secs(60),
        &format!("{draws} draws, {violations} violations, {elapsed:.1?}"),
    );
}

/// Criterion: the exhaustive minimum of every generated instance equals
/// the sum of all its coefficients (attained by the uniform +1 state).
/// Type 2 cannot exist on a single cell, so it is exercised on 2x1-cell
/// regions alongside type 1.
#[test]
fn exhaustive_minimum_equals_coefficient_sum() {
    let start = Instant::now();
    let alphas = [0.2, 0.25, 0.3, 0.35];
    let mut checked = 0u64;
    let mut exceptions = 0u64;
    let mut check = |inst: &FclInstance| {
        let (min, argmin) = common::exhaustive_minimizers(&inst.problem);
        let expected = common::coefficient_sum(&inst.problem);
        let n = inst.problem.num_qubits();
        let uniform_plus = (1u64 << n) - 1;
        if min != expected || min != inst.ground_energy || !argmin.contains(&uniform_plus) {
            exceptions += 1;
        }
        checked += 1;
    };
    for i in 0..100u64 {
        let alpha = alphas[i as usize % alphas.len()];
        check(&instance(ProblemType::Type1, 1, alpha, OverlapLimit::Unlimited, i));
    }
    let region = Arc::new(ChimeraGraph::rect(2, 1).unwrap());
    for problem_type in [ProblemType::Type1, ProblemType::Type2] {
        for i in 0..100u64 {
            let cfg = FclConfig {
                problem_type,
                c: 2,
                alpha: alphas[i as usize % alphas.len()],
                r_limit: OverlapLimit::Unlimited,
                seed: 500 + i,
            };
            let inst = FclInstance::generate_on(Arc::clone(&region), &cfg).unwrap();
            check(&inst);
        }
    }
    let elapsed = start.elapsed();
    verdict(
        2,
        "planted ground energy is exact",
        checked == 300 && exceptions == 0 && elapsed < Duration::from_secs(300),
        &format!("{checked} instances exhaustively scanned, {exceptions} exceptions, {elapsed:.1?}"),
    );
}

/// Criterion: generated loops obey their structural rules — type-1 length
/// ≥ 8; type-2 spanning ≥ 2 cells with observed lengths ≥ 6; exactly one
/// +1 coupler per loop (checked by rebuilding the coefficients); overlap
/// bound respected; and the randomized loop-count rounding has the right
/// support and mean.
#[test]
fn generator_conformance() {
    let mut type1_loops = 0usize;
    let mut type2_loops = 0usize;
    let mut min_type2_len = usize::MAX;
    let mut structural_faults = 0usize;
    for problem_type in [ProblemType::Type1, ProblemType::Type2] {
        let mut seen = 0usize;
        let mut seed = 0u64;
        while seen < 1000 {
            let attempt = try_instance(problem_type, 3, 0.3, OverlapLimit::Bounded(2), 9000 + seed);
            seed += 1;
            let Some(inst) = attempt else { continue };
            // Rebuild every coupler coefficient from the loops: -1 per
            // ferromagnetic membership, +1 for each loop's single
            // antiferromagnetic coupler.
            let mut b = vec![0.0f64; inst.problem.graph().num_couplers()];
            for lp in &inst.loops {
                for (i, cid) in lp.couplers.iter().enumerate() {
                    b[cid.index()] += if i == lp.afm_index { 1.0 } else { -1.0 };
                }
            }
            if b != inst.problem.coupler_coeffs() {
                structural_faults += 1;
            }
            if inst.coupler_usage.iter().any(|&u| u > 2) {
                structural_faults += 1;
            }
            for lp in &inst.loops {
                match problem_type {
                    ProblemType::Type1 => {
                        if lp.len() < 8 {
                            structural_faults += 1;
                        }
                        type1_loops += 1;
                    }
                    ProblemType::Type2 => {
                        if lp.cells_spanned(inst.problem.graph()) < 2 {
                            structural_faults += 1;
                        }
                        min_type2_len = min_type2_len.min(lp.len());
                        type2_loops += 1;
                    }
                }
                seen += 1;
            }
        }
    }

    // Loop-count randomized rounding: side 4, density 0.1 → 12.8 loops.
    let mut count_support_ok = true;
    let mut total = 0u64;
    for seed in 0..1000u64 {
        let inst = instance(ProblemType::Type1, 4, 0.1, OverlapLimit::Unlimited, 40_000 + seed);
        let k = inst.loops.len();
        if k != 12 && k != 13 {
            count_support_ok = false;
        }
        total += k as u64;
    }
    let mean = total as f64 / 1000.0;
    let pass = structural_faults == 0
        && type1_loops >= 1000
        && type2_loops >= 1000
        && min_type2_len >= 6
        && count_support_ok
        && (mean - 12.8).abs() <= 0.1;
    verdict(
        3,
        "loop generator conformance",
        pass,
        &format!(
            "{type1_loops}+{type2_loops} loops, {structural_faults} faults, shortest multi-cell loop {min_type2_len}, count mean {mean:.3}"
        ),
    );
}

/// A sample that provably misses ground: one flip that strictly raises the
/// uniform state's energy.
fn non_solution(inst: &FclInstance) -> Sample {
    let good = Sample::uniform(inst.problem.num_qubits(), 1);
    for q in inst.problem.graph().qubits() {
        if inst.problem.energy_delta(&good, &[q]).unwrap() > 0.0 {
            let mut s = good.clone();
            s.spins[q.index()] = -1;
            return s;
        }
    }
    panic!("every single flip preserved the ground energy");
}

fn batch_of(inst: &FclInstance, samples: Vec<Sample>) -> SampleBatch {
    SampleBatch {
        problem_id: inst.problem.content_hash(),
        samples,
        source: BatchSource::Ingested,
        seed: 0,
        hardware_sample_time: None,
    }
}

/// Criterion: group success probabilities are exact counts (the planted
/// one-solution-in-eight batch gives 1/8, 1/4, 1/2, 1), and the corrected
/// judgment dominates the raw one at every group size on realistic
/// annealed batches.
#[test]
fn grouped_success_curve_mechanics() {
    let inst = instance(ProblemType::Type1, 1, 0.25, OverlapLimit::Unlimited, 3);
    let bad = non_solution(&inst);
    let mut samples = vec![bad; 8];
    samples[5] = Sample::uniform(8, 1);
    let curve = experiment::success_curve(&inst, &batch_of(&inst, samples)).unwrap();
    let raw: Vec<f64> = (0..curve.len()).map(|i| curve.raw_probability(i)).collect();
    let synthetic_ok = raw == vec![0.125, 0.25, 0.5, 1.0];

    let alphas = [0.1, 0.2, 0.3, 0.4, 0.5];
    let mut dominance_violations = 0u64;
    for i in 0..100u64 {
        let c = if i % 2 == 0 { 2 } else { 4 };
        let inst = instance(
            ProblemType::Type1,
            c,
            alphas[i as usize % alphas.len()],
            OverlapLimit::Unlimited,
            60_000 + i,
        );
        let batch = anneal_batch(&inst.problem, 128, &AnnealConfig::survey_default(i)).unwrap();
        let curve = experiment::success_curve(&inst, &batch).unwrap();
        for k in 0..curve.len() {
            if curve.mqc_probability(k) < curve.raw_probability(k) {
                dominance_violations += 1;
            }
        }
    }
    verdict(
        4,
        "success curve counting and dominance",
        synthetic_ok && dominance_violations == 0,
        &format!(
            "synthetic curve {raw:?}, {dominance_violations} dominance violations over 100 annealed cases"
        ),
    );
}

/// Criterion: qualitative reproduction of the headline result — with a
/// deliberately weak annealer (4 sweeps, frozen by calibration) on side-4
/// regions at densities 0.05 and 0.1, the corrected judgment (a) never
/// needs more samples than the raw one, (b) solves at least one case the
/// raw judgment never solves, and (c) is at least 2x faster in the
/// geometric mean over commonly solved cases.
#[test]
fn correction_rescues_and_speeds_up_weak_sampling() {
    let start = Instant::now();
    let mut sampler = AnnealConfig::survey_default(0);
    sampler.sweeps = 4; // frozen by one-time calibration
    let cfg = SurveyConfig {
        problem_type: ProblemType::Type1,
        grid: SurveyGrid {
            r_limits: vec![OverlapLimit::Unlimited],
            c_values: vec![4],
            alphas: vec![0.05, 0.1],
        },
        cases_per_cell: 50,
        samples_per_case: 8192,
        sampler,
        master_seed: 2,
    };
    let graph = Arc::new(ChimeraGraph::square(4).unwrap());
    let mut records = Vec::new();
    for &alpha in &cfg.grid.alphas {
        for i in 0..cfg.cases_per_cell {
            records.push(
                experiment::run_case(&graph, &cfg, OverlapLimit::Unlimited, 4, alpha, i).unwrap(),
            );
        }
    }
    let mut order_violations = 0usize;
    let mut gen_failed = 0usize;
    for rec in &records {
        match &rec.outcome {
            CaseOutcome::GenerationFailed => gen_failed += 1,
            CaseOutcome::Measured { raw, mqc, .. } => match (raw, mqc) {
                (Sts::Solved(rk), Sts::Solved(mk)) if mk > rk => order_violations += 1,
                (Sts::Solved(_), Sts::Unsolved) => order_violations += 1,
                _ => {}
            },
        }
    }
    let summary = ReportSummary::from_records(&records, 2);
    let speedup = summary.geometric_mean_speedup.unwrap_or(0.0);
    let elapsed = start.elapsed();
    let pass = gen_failed == 0
        && order_violations == 0
        && summary.raw_unsolved_mqc_solved >= 1
        && speedup >= 2.0
        && elapsed < Duration::from_secs(900);
    verdict(
        5,
        "weak-sampler rescue and speedup",
        pass,
        &format!(
            "{} cases: {} order violations, {} raw-unsolved rescued (of {} raw-unsolved), geometric speedup {speedup:.2}x, {elapsed:.1?}",
            records.len(),
            order_violations,
            summary.raw_unsolved_mqc_solved,
            summary.raw_unsolved,
        ),
    );
}

fn run_survey_binary(out: &Path, jobs: &str) {
    let status = Command::new(env!("CARGO_BIN_EXE_fclmqc"))
        .args([
            "survey", "--preset", "desk", "--seed", "5", "--jobs", jobs, "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .expect("binary runs");
    assert!(status.success(), "survey run failed");
}

fn dir_files_match(a: &Path, b: &Path, names: &[String]) -> bool {
    names.iter().all(|name| {
        fs::read(a.join(name)).ok() == fs::read(b.join(name)).ok()
    })
}

/// Criterion: the desk survey is bit-for-bit reproducible — same master
/// seed twice, and 1 worker vs 8 workers, give identical output files.
#[test]
fn desk_survey_outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    run_survey_binary(&a, "8");
    run_survey_binary(&b, "8");
    run_survey_binary(&c, "1");
    let mut names = vec!["survey.csv".to_string(), "manifest.json".to_string()];
    for entry in fs::read_dir(a.join("cells")).unwrap() {
        names.push(format!("cells/{}", entry.unwrap().file_name().into_string().unwrap()));
    }
    let repeat_ok = dir_files_match(&a, &b, &names);
    let jobs_ok = dir_files_match(&a, &c, &names);
    verdict(
        6,
        "byte-identical reruns",
        names.len() == 14 && repeat_ok && jobs_ok,
        &format!(
            "{} files compared; repeat identical: {repeat_ok}; 1 vs 8 workers identical: {jobs_ok}",
            names.len()
        ),
    );
}

/// Criterion: rescaling coefficients into the hardware ranges preserves
/// the exact set of minimizing states, verified exhaustively on 16-qubit
/// instances whose overlapping loops (limit 3) push couplers out of range.
#[test]
fn rescaling_preserves_minimizer_sets() {
    let region = Arc::new(ChimeraGraph::rect(2, 1).unwrap());
    let mut checked = 0u64;
    let mut overlapping = 0u64;
    let mut actually_rescaled = 0u64;
    let mut mismatches = 0u64;
    let mut seed = 0u64;
    while checked < 50 {
        let cfg = FclConfig {
            problem_type: ProblemType::Type1,
            c: 2,
            alpha: 0.4,
            r_limit: OverlapLimit::Bounded(3),
            seed: 70_000 + seed,
        };
        seed += 1;
        let Ok(inst) = FclInstance::generate_on(Arc::clone(&region), &cfg) else {
            continue; // overlap budget exhausted for this seed; try the next
        };
        if inst.coupler_usage.iter().all(|&u| u < 2) {
            continue; // criterion wants overlapping loops
        }
        overlapping += 1;
        let scaled = inst.problem.rescale();
        if scaled.is_scaled() {
            actually_rescaled += 1;
        }
        let (_, argmin_before) = common::exhaustive_minimizers(&inst.problem);
        let (_, argmin_after) = common::exhaustive_minimizers(&scaled);
        if argmin_before != argmin_after {
            mismatches += 1;
        }
        checked += 1;
    }
    verdict(
        7,
        "rescaling preserves minimizers",
        checked == 50 && mismatches == 0,
        &format!(
            "{checked} overlapping 16-qubit instances ({overlapping} with shared couplers, {actually_rescaled} with out-of-range sums), {mismatches} argmin mismatches"
        ),
    );
}

/// The curve judgments agree with a direct reduce on a spot-check batch —
/// ties the survey numbers back to the public reduction operation.
#[test]
fn curve_judgment_matches_direct_reduction() {
    let inst = instance(ProblemType::Type1, 2, 0.3, OverlapLimit::Unlimited, 424);
    let batch = anneal_batch(&inst.problem, 64, &AnnealConfig::survey_default(9)).unwrap();
    let curve = experiment::success_curve(&inst, &batch).unwrap();
    let reduced = mqc::reduce(&inst.problem, &batch).unwrap();
    let top = curve.len() - 1;
    assert_eq!(
        curve.mqc_probability(top) == 1.0,
        inst.is_solution(&reduced).unwrap(),
        "full-batch curve point must equal the reduced sample's verdict"
    );
    let _ = samples_to_solution(&curve, StsMode::Mqc);
}
