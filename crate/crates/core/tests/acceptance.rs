//! One PASS/FAIL line per acceptance criterion, with soft targets reported alongside.
//!
//! Runs as a plain binary so every criterion is printed even when an earlier
//! one fails; the process exits nonzero if any hard check fails.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pmuplace::fixtures;
use pmuplace::info::{
    conditional_mi, differential_entropy, discrete_entropy, expected_mi, gaussian_mi, objective_value, posterior_cov,
    FailureMode, InfoConfig, ObjectiveSpec, PlacementObjective, Unit,
};
use pmuplace::measurements::{candidates_observation, enumerate_candidates, CandidateOptions, PmuCandidate};
use pmuplace::network::{build_priors, build_susceptance, InjectionProfile, NetworkCase, StatePrior, SusceptanceModel};
use pmuplace::placement::{exhaustive_place, greedy_place, lazy_greedy_place, PlacementResult, Recompute, SetFunction};
use pmuplace::verification::{
    cover_equivalence_check, d_optimality_check, random_case, random_cover_instance, submodularity_probe, CoverForm,
};

/// Greedy sets for K = 1..4, PMU-only column of the 14-bus table.
const TABLE_GREEDY_14: [&[u32]; 4] = [&[4], &[4, 13], &[4, 9, 13], &[4, 6, 9, 13]];
/// Exhaustive optima for K = 1..4, PMU-only column of the 14-bus table.
const TABLE_OPTIMAL_14: [&[u32]; 4] = [&[4], &[4, 13], &[4, 6, 9], &[4, 6, 9, 13]];
/// Greedy order on the 57-bus system, PMU only.
const TABLE_GREEDY_57: [u32; 34] = [
    9, 56, 18, 31, 12, 49, 29, 6, 25, 54, 20, 41, 38, 51, 32, 13, 27, 53, 57, 15, 19, 8, 30, 50, 17, 5, 16, 42, 52,
    48, 55, 44, 24, 34,
];

struct Tally {
    failed: Vec<u32>,
}

impl Tally {
    fn record(&mut self, n: u32, passed: bool, detail: impl Display) {
        println!("criterion {n:>2}: {} | {detail}", if passed { "PASS" } else { "FAIL" });
        if !passed {
            self.failed.push(n);
        }
    }

    fn error(&mut self, n: u32, err: pmuplace::Error) {
        self.record(n, false, format!("error: {err}"));
    }
}

fn soft(n: u32, matched: bool, detail: impl Display) {
    println!(
        "criterion {n:>2}: soft target {} | {detail}",
        if matched { "met" } else { "missed" }
    );
}

fn sorted(ids: &[u32]) -> Vec<u32> {
    let mut v = ids.to_vec();
    v.sort_unstable();
    v
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

struct Setup {
    case: NetworkCase,
    model: SusceptanceModel,
    candidates: Vec<PmuCandidate>,
}

fn setup(case: NetworkCase, options: &CandidateOptions) -> Setup {
    let model = build_susceptance(&case).unwrap();
    let candidates = enumerate_candidates(&case, options).unwrap();
    Setup { case, model, candidates }
}

fn objective(s: &Setup, f2: bool, info: InfoConfig) -> PlacementObjective {
    let profile = InjectionProfile::nominal(&s.case);
    let spec = if f2 {
        let plan = pmuplace::measurements::ConventionalPlan::full(
            &s.case,
            pmuplace::measurements::deg_std_to_var(pmuplace::measurements::DEFAULT_CONV_STD_DEG),
        );
        ObjectiveSpec::f2(profile, plan, info)
    } else {
        ObjectiveSpec::f1(profile, info)
    };
    PlacementObjective::new(&spec, &s.model, s.candidates.clone()).unwrap()
}

fn prior(s: &Setup) -> StatePrior {
    build_priors(&s.model, &InjectionProfile::nominal(&s.case)).unwrap().remove(0)
}

fn mc(samples: usize, seed: u64) -> InfoConfig {
    InfoConfig {
        failure_mode: FailureMode::MonteCarlo { samples, seed },
        ..InfoConfig::default()
    }
}

fn criterion_1(t: &mut Tally) {
    let s = setup(fixtures::ieee14(), &CandidateOptions::default());
    let start = Instant::now();
    let res = match greedy_place(&objective(&s, false, InfoConfig::default()), 4) {
        Ok(r) => r,
        Err(e) => return t.error(1, e),
    };
    let elapsed = start.elapsed();
    let k4 = res.prefix_set(4);
    let passed = res.order[0] == 4 && k4 == [4, 6, 9, 13] && elapsed < Duration::from_secs(5);
    t.record(
        1,
        passed,
        format!("14-bus F1 greedy order {:?}, K=4 set {k4:?}, {:.2?}", res.order, elapsed),
    );
    for (k, want) in TABLE_GREEDY_14.iter().enumerate() {
        let got = res.prefix_set(k + 1);
        soft(1, got == *want, format!("K={} greedy {got:?}, table {want:?}", k + 1));
    }
}

fn exhaustive_14() -> (Setup, Vec<PlacementResult>, Duration) {
    let s = setup(fixtures::ieee14(), &CandidateOptions::default());
    let obj = objective(&s, false, InfoConfig::default());
    let start = Instant::now();
    let optima = (1..=4)
        .map(|k| exhaustive_place(&obj, k, 2e6).unwrap())
        .collect::<Vec<_>>();
    (s, optima, start.elapsed())
}

fn criterion_2(t: &mut Tally, optima: &[PlacementResult], elapsed: Duration) {
    for (k, want) in TABLE_OPTIMAL_14.iter().enumerate() {
        let got = sorted(&optima[k].order);
        soft(
            2,
            got == *want,
            format!("K={} optimum {got:?} ({:.6} nats), table {want:?}", k + 1, optima[k].value()),
        );
    }
    let k4 = sorted(&optima[3].order);
    t.record(
        2,
        k4 == [4, 6, 9, 13] && elapsed < Duration::from_secs(60),
        format!("14-bus F1 exhaustive K=4 optimum {k4:?}, required [4, 6, 9, 13]; K=1..4 in {elapsed:.2?}"),
    );
}

fn criterion_3(t: &mut Tally, s14: &Setup, optima: &[PlacementResult]) {
    let bound = 1.0 - (-1.0f64).exp();
    let mut ratios = Vec::new();
    let greedy = greedy_place(&objective(s14, false, InfoConfig::default()), 4).unwrap();
    for opt in optima {
        ratios.push(greedy.value_at(opt.order.len()).unwrap() / opt.value());
    }
    for seed in 0..50u64 {
        let n = 4 + (seed % 5) as usize;
        let s = setup(random_case(n, seed).unwrap(), &CandidateOptions::default());
        let obj = objective(&s, false, InfoConfig::default());
        let kmax = 3.min(s.candidates.len());
        let g = greedy_place(&obj, kmax).unwrap();
        for k in 1..=kmax {
            let opt = exhaustive_place(&obj, k, 2e6).unwrap();
            ratios.push(if opt.value() > 0.0 { g.value_at(k).unwrap() / opt.value() } else { 1.0 });
        }
    }
    let violations = ratios.iter().filter(|&&r| r < bound).count();
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    t.record(
        3,
        violations == 0,
        format!("{} greedy/optimal ratios, {violations} below 1-1/e, minimum {min:.6}", ratios.len()),
    );
    soft(3, min >= 0.99, format!("minimum ratio {min:.6} against 0.99"));
}

fn criterion_4(t: &mut Tally) {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for availability in [1.0, 0.97] {
        let options = CandidateOptions {
            availability,
            ..CandidateOptions::default()
        };
        let s = setup(fixtures::ieee14(), &options);
        // Exact failure mixtures cost more per set, so those chains stay shorter.
        let max_size = if availability < 1.0 { 4 } else { 8 };
        for f2 in [false, true] {
            let obj = objective(&s, f2, InfoConfig::default());
            match submodularity_probe(&obj, 10_000, 4, max_size) {
                Ok(r) => {
                    ok &= r.passed();
                    lines.push(format!(
                        "{} a={availability}: {} sets, {} + {} violations, worst gap {:.2e}",
                        if f2 { "F2" } else { "F1" },
                        r.distinct_sets,
                        r.submodularity_violations,
                        r.monotonicity_violations,
                        r.worst_submodularity
                    ));
                }
                Err(e) => return t.error(4, e),
            }
        }
    }
    let elapsed = start.elapsed();
    t.record(
        4,
        ok && elapsed < Duration::from_secs(120),
        format!("10^4 chains x 4 settings in {elapsed:.2?}; {}", lines.join("; ")),
    );
}

/// `1/2 [logdet Sigma + logdet(Sigma^-1 + H^T R^-1 H)]` through the information form.
fn information_form_mi(cov: &DMatrix<f64>, h: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    let chol = cov.clone().cholesky().unwrap();
    let r_inv = DMatrix::from_diagonal(&r.map(|v| 1.0 / v));
    let info = chol.inverse() + h.transpose() * r_inv * h;
    let ld = |m: DMatrix<f64>| 2.0 * m.cholesky().unwrap().l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    0.5 * (ld(cov.clone()) + ld(info))
}

fn criterion_5(t: &mut Tally) {
    let mut worst = [0.0f64; 6];
    let exact = InfoConfig {
        jitter: 0.0,
        ..InfoConfig::default()
    };
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(3..=8);
        let s = setup(random_case(n, seed + 1000).unwrap(), &CandidateOptions::default());
        let p = prior(&s);
        let mut pool = s.candidates.clone();
        let pick = |pool: &mut Vec<PmuCandidate>, rng: &mut ChaCha8Rng| {
            let take = rng.random_range(1..=2.min(pool.len()));
            (0..take).map(|_| pool.remove(rng.random_range(0..pool.len()))).collect::<Vec<_>>()
        };
        let a = pick(&mut pool, &mut rng);
        let b = if pool.is_empty() { Vec::new() } else { pick(&mut pool, &mut rng) };
        let obs_a = candidates_observation(&a, &s.model).unwrap().always_available();
        let obs_b = candidates_observation(&b, &s.model).unwrap().always_available();
        let ab: Vec<PmuCandidate> = a.iter().chain(&b).cloned().collect();
        let obs_ab = candidates_observation(&ab, &s.model).unwrap().always_available();

        let mi = gaussian_mi(&p, &obs_ab, &exact).unwrap();
        let post = posterior_cov(&p, &obs_ab).unwrap();
        let entropy_gap =
            differential_entropy(&p.covariance, 0.0).unwrap() - differential_entropy(&post, 0.0).unwrap();
        worst[0] = worst[0].max(rel(mi, entropy_gap));
        worst[1] = worst[1].max(rel(mi, information_form_mi(&p.covariance, &obs_ab.h, &obs_ab.noise_var)));

        let chain = gaussian_mi(&p, &obs_a, &exact).unwrap() + conditional_mi(&p, &obs_b, &obs_a, &exact).unwrap();
        worst[2] = worst[2].max(rel(mi, chain));

        for step in [1e-2, 1e-4, 1e-7] {
            let q = InfoConfig {
                quantization_step: step,
                ..exact
            };
            let gap = discrete_entropy(&p.covariance, &q).unwrap() - discrete_entropy(&post, &q).unwrap();
            worst[3] = worst[3].max(rel(mi, gap));
        }

        let profile = InjectionProfile::nominal(&s.case);
        let delta = DVector::from_fn(s.case.buses.len(), |_, _| rng.random_range(-2.0..2.0));
        let spec = ObjectiveSpec::f1(profile.clone(), InfoConfig::default());
        let shifted = ObjectiveSpec::f1(profile.shifted(&delta), InfoConfig::default());
        let base = objective_value(&spec, &s.model, &ab).unwrap().value;
        worst[4] = worst[4].max(rel(base, objective_value(&shifted, &s.model, &ab).unwrap().value));

        let bits_spec = ObjectiveSpec::f1(
            profile,
            InfoConfig {
                unit: Unit::Bits,
                ..InfoConfig::default()
            },
        );
        let bits = objective_value(&bits_spec, &s.model, &ab).unwrap().value;
        worst[5] = worst[5].max(rel(bits, base / std::f64::consts::LN_2));
    }
    let names = [
        "entropy difference",
        "information form",
        "chain rule",
        "quantization step",
        "mean shift",
        "bits",
    ];
    let detail = names
        .iter()
        .zip(worst)
        .map(|(n, w)| format!("{n} {w:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    t.record(
        5,
        worst.iter().all(|&w| w <= 1e-8),
        format!("worst relative error over 100 instances: {detail}"),
    );
}

fn criterion_6(t: &mut Tally) {
    let s = setup(fixtures::ieee14(), &CandidateOptions::default());
    let p = prior(&s);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_z: f64 = 0.0;
    for trial in 0..20u64 {
        let size = rng.random_range(1..=4);
        let chosen: Vec<PmuCandidate> = s.candidates.choose_multiple(&mut rng, size).cloned().collect();
        let obs = candidates_observation(&chosen, &s.model).unwrap();
        let exact = expected_mi(&p, &obs, None, &InfoConfig::default()).unwrap().value;
        let sampled = expected_mi(&p, &obs, None, &mc(100_000, trial)).unwrap();
        worst_z = worst_z.max((exact - sampled.value).abs() / sampled.std_error);
    }
    let chosen = &s.candidates[..5];
    let settle = |a: f64| {
        let c: Vec<PmuCandidate> = chosen
            .iter()
            .map(|c| PmuCandidate {
                voltage_availability: a,
                channel_availabilities: vec![a; c.channels.len()],
                ..c.clone()
            })
            .collect();
        candidates_observation(&c, &s.model).unwrap()
    };
    let one = expected_mi(&p, &settle(1.0), None, &InfoConfig::default()).unwrap().value;
    let no_failure = gaussian_mi(&p, &settle(1.0).always_available(), &InfoConfig::default()).unwrap();
    let zero = expected_mi(&p, &settle(0.0), None, &InfoConfig::default()).unwrap().value;
    t.record(
        6,
        worst_z <= 3.0 && one == no_failure && zero == 0.0,
        format!(
            "20 selections, worst |exact - MC| = {worst_z:.2} standard errors at 10^5 samples; \
             a=1 gives {one} vs no-failure {no_failure}; a=0 gives {zero}"
        ),
    );
}

fn criterion_7(t: &mut Tally) {
    let mut checked = 0;
    let mut disagreements = Vec::new();
    for (name, case) in fixtures::small_cases() {
        let s = setup(case, &CandidateOptions::default());
        let p = prior(&s);
        for k in 1..=3.min(s.candidates.len()) {
            let r = d_optimality_check(&p, &s.model, &s.candidates, k, 0.0).unwrap();
            checked += 1;
            if !r.agree {
                disagreements.push(format!("{name} K={k}: {:?} vs {:?}", r.by_mi, r.by_logdet));
            }
        }
    }
    t.record(
        7,
        disagreements.is_empty(),
        format!("{checked} (network, K) pairs; disagreements: {disagreements:?}"),
    );
}

fn greedy_by_coverage(subsets: &[BTreeSet<usize>], k: usize) -> BTreeSet<usize> {
    let mut covered = BTreeSet::new();
    let mut used = vec![false; subsets.len()];
    for _ in 0..k.min(subsets.len()) {
        let mut best: Option<(usize, usize)> = None;
        for (m, set) in subsets.iter().enumerate().filter(|(m, _)| !used[*m]) {
            let gain = set.difference(&covered).count();
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((m, gain));
            }
        }
        let (m, _) = best.unwrap();
        used[m] = true;
        covered.extend(&subsets[m]);
    }
    covered
}

fn criterion_8(t: &mut Tally) {
    let mut worst: f64 = 0.0;
    let mut mismatches = 0;
    let mut subsets_checked = 0;
    for seed in 0..50u64 {
        let n = 4 + (seed % 7) as usize;
        let m = 2 + (seed % 5) as usize;
        let k = 1 + (seed % 3) as usize;
        let inst = random_cover_instance(n, m, seed, CoverForm::NonDuplicating).unwrap();
        let c = 0.5 * (1.0 + inst.state_variance / inst.measurement_noise).ln();
        for size in 0..=k {
            for set in itertools::Itertools::combinations(0..m, size) {
                let union: BTreeSet<usize> = set.iter().flat_map(|&i| inst.subsets[i].iter().copied()).collect();
                let mi = inst.evaluate(&set).unwrap();
                let want = c * union.len() as f64;
                worst = worst.max(if want == 0.0 { mi.abs() } else { rel(mi, want) });
                subsets_checked += 1;
            }
        }
        let by_mi = greedy_place(&Recompute(&inst), k).unwrap();
        let mi_cover: BTreeSet<usize> =
            by_mi.order.iter().flat_map(|&id| inst.subsets[id as usize - 1].iter().copied()).collect();
        if mi_cover.len() != greedy_by_coverage(&inst.subsets, k).len() {
            mismatches += 1;
        }
        if cover_equivalence_check(&inst, k).is_err() {
            mismatches += 1;
        }
    }
    t.record(
        8,
        worst <= 1e-9 && mismatches == 0,
        format!(
            "50 instances, {subsets_checked} subsets, worst relative error {worst:.1e}, {mismatches} greedy coverage mismatches"
        ),
    );
}

fn identical(a: &PlacementResult, b: &PlacementResult) -> bool {
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    a.order == b.order && bits(&a.values) == bits(&b.values) && bits(&a.marginals) == bits(&b.marginals)
}

fn criterion_9(t: &mut Tally) {
    let s14 = setup(fixtures::ieee14(), &CandidateOptions::default());
    let o14 = objective(&s14, false, InfoConfig::default());
    let (g14, l14) = (greedy_place(&o14, 4).unwrap(), lazy_greedy_place(&o14, 4).unwrap());
    let s57 = setup(fixtures::ieee57(), &CandidateOptions::default());
    let o57 = objective(&s57, false, mc(2000, 0));
    let (g57, l57) = (greedy_place(&o57, 10).unwrap(), lazy_greedy_place(&o57, 10).unwrap());
    t.record(
        9,
        identical(&g14, &l14) && identical(&g57, &l57) && l57.evaluations < g57.evaluations,
        format!(
            "14-bus K=4 identical: {}; 57-bus K=10 (Monte Carlo, 2000 samples) identical: {}, evaluations {} lazy vs {} naive",
            identical(&g14, &l14),
            identical(&g57, &l57),
            l57.evaluations,
            g57.evaluations
        ),
    );
}

fn criterion_10(t: &mut Tally) {
    let s = setup(fixtures::ieee57(), &CandidateOptions::default());
    let obj = objective(&s, false, mc(2000, 0));
    let start = Instant::now();
    let full = match greedy_place(&obj, 34) {
        Ok(r) => r,
        Err(e) => return t.error(10, e),
    };
    let elapsed = start.elapsed();
    let nested_prefix =
        (1..=34).all(|k| full.prefix_set(k - 1).iter().all(|b| full.prefix_set(k).contains(b)));
    let short = greedy_place(&obj, 10).unwrap();
    let nested_runs = short.order == full.order[..10];
    t.record(
        10,
        elapsed < Duration::from_secs(600) && nested_prefix && nested_runs,
        format!(
            "57-bus F1 K=34 (Monte Carlo, 2000 samples) in {elapsed:.2?}; nested across K: {nested_prefix}; K=10 run is a prefix: {nested_runs}"
        ),
    );
    let first3 = sorted(&full.order[..3]);
    soft(10, first3 == [9, 18, 56], format!("first three picks {:?}, table [9, 56, 18]", &full.order[..3]));
    let agree = full.order.iter().zip(TABLE_GREEDY_57).take_while(|(a, b)| **a == *b).count();
    let overlap = full.order.iter().filter(|b| TABLE_GREEDY_57.contains(b)).count();
    soft(
        10,
        agree == 34,
        format!("order agrees with the table for the first {agree} picks; {overlap} of 34 buses shared"),
    );
}

fn main() {
    let mut t = Tally { failed: Vec::new() };
    criterion_1(&mut t);
    let (s14, optima, elapsed) = exhaustive_14();
    criterion_2(&mut t, &optima, elapsed);
    criterion_3(&mut t, &s14, &optima);
    criterion_4(&mut t);
    criterion_5(&mut t);
    criterion_6(&mut t);
    criterion_7(&mut t);
    criterion_8(&mut t);
    criterion_9(&mut t);
    criterion_10(&mut t);
    if t.failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {:?}", t.failed);
        std::process::exit(1);
    }
}
