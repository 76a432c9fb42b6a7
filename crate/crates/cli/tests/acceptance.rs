//! Acceptance suite. Each criterion prints one `[PASS]` or `[FAIL]` line;
//! the process exits nonzero when any criterion fails.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use qwalk_core::analysis::{
    chi_square_test, crossover_time, default_tail_start, ensemble_run, fit_diffusion,
    fit_quadratic_coefficient, gaussianity, linear_regression, CrossoverOptions, EnsembleResult,
    EnsembleSpec, Execution, Model,
};
use qwalk_core::classical::{
    brownian_variance, classical_step, gamma_from_p, BrownianParams, ClassicalDistribution,
};
use qwalk_core::links::{coherence_time, sample_links, simulate_links, SiteCase};
use qwalk_core::measure::{kernel_q, master_step, run_measured_trajectory, MeasurementSchedule};
use qwalk_core::rng::trajectory_rng;
use qwalk_core::{CoinOperator, Distribution, Qubit, SpinorField};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn hadamard() -> CoinOperator {
    CoinOperator::hadamard()
}

const LINK_TRAJECTORIES: u64 = 2_000;
const LINK_STEPS: u64 = 2_000;
const SEED: u64 = 20_240_601;

/// Broken-link ensembles shared by several criteria.
#[derive(Default)]
struct LinkCache {
    runs: HashMap<u64, EnsembleResult>,
}

impl LinkCache {
    fn get(&mut self, p: f64) -> &EnsembleResult {
        self.runs.entry(p.to_bits()).or_insert_with(|| {
            let spec = EnsembleSpec::new(Model::BrokenLinks { p }, LINK_STEPS, LINK_TRAJECTORIES, SEED);
            ensemble_run(&spec, Execution::Parallel).expect("broken-link ensemble")
        })
    }
}

fn coherent_quadratic_law() -> Outcome {
    let r = ensemble_run(
        &EnsembleSpec::new(Model::Coherent, 200, 1, 0),
        Execution::Sequential,
    )
    .unwrap();
    let fit = fit_quadratic_coefficient(&r.series, (100, 200)).unwrap();
    check(
        (fit.c - 0.293).abs() <= 0.01,
        format!("C = {:.5} (target 0.293 +- 0.01)", fit.c),
    )
}

fn master_equation_variance() -> Outcome {
    let k = kernel_q(10, &hadamard(), Qubit::symmetric()).unwrap();
    let mut p = Distribution::delta(0);
    for _ in 0..20 {
        p = master_step(&p, &k);
    }
    let var = p.moments().unwrap().variance;
    let rel = (var / (20.0 * k.sigma_q2) - 1.0).abs();
    check(
        rel < 1e-9,
        format!(
            "sigma^2 = {var}, 20 sigma_q^2(10) = {}, rel err {rel:.2e}",
            20.0 * k.sigma_q2
        ),
    )
}

fn monte_carlo_matches_master_equation() -> Outcome {
    const N: u64 = 10_000;
    let schedule = MeasurementSchedule::periodic(10).unwrap();
    let k = kernel_q(10, &hadamard(), Qubit::symmetric()).unwrap();
    let mut expected = Distribution::delta(0);
    for _ in 0..20 {
        expected = master_step(&expected, &k);
    }
    let mut counts = vec![0u64; expected.len()];
    for i in 0..N {
        let mut rng = trajectory_rng(SEED, i);
        let tr = run_measured_trajectory(&schedule, 200, &hadamard(), Qubit::symmetric(), &mut rng).unwrap();
        let last = tr.measurements.get(19).ok_or("fewer than 20 measurements")?;
        if last.time != 200 {
            return Err(format!("20th measurement at t = {}", last.time));
        }
        let idx = last.site - expected.first_site();
        if idx < 0 || idx as usize >= counts.len() {
            return Err(format!("site {} outside the master-equation support", last.site));
        }
        counts[idx as usize] += 1;
    }
    let test = chi_square_test(&counts, expected.probs(), 5.0).unwrap();
    check(
        test.p_value > 0.001,
        format!(
            "chi2 = {:.2}, dof = {}, p-value = {:.4} (reject below 0.001)",
            test.statistic, test.dof, test.p_value
        ),
    )
}

fn random_interval_equivalence() -> Outcome {
    let slope = |schedule: MeasurementSchedule| {
        // gamma = 2 / mean interval
        let tail = default_tail_start(schedule.mean_interval() / 2.0);
        let spec = EnsembleSpec::new(Model::Measured { schedule }, 700, 10_000, SEED);
        let r = ensemble_run(&spec, Execution::Parallel).unwrap();
        2.0 * fit_diffusion(&r.series, (tail, 700)).unwrap().d
    };
    let random = slope(MeasurementSchedule::uniform(1, 10).unwrap());
    let periodic = slope(MeasurementSchedule::periodic(7).unwrap());
    let rel = (random / periodic - 1.0).abs();
    check(
        rel < 0.05,
        format!("slope uniform[1,10] = {random:.4}, periodic T=7 = {periodic:.4}, rel diff {rel:.4}"),
    )
}

fn broken_link_norm() -> Outcome {
    let mut worst: f64 = 0.0;
    for p in [0.01, 0.5, 1.0] {
        for i in 0..100 {
            let mut rng = trajectory_rng(SEED, i);
            simulate_links(p, 1000, &hadamard(), Qubit::symmetric(), &mut rng, |_, s| {
                worst = worst.max((s.distribution().total() - 1.0).abs());
            })
            .unwrap();
        }
    }
    check(
        worst < 1e-10,
        format!("max |sum P_n - 1| = {worst:.2e} over every step"),
    )
}

fn random_qubit<R: Rng>(rng: &mut R) -> Qubit {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.1 {
            let q = Qubit::new(
                Complex64::new(v[0] / norm, v[1] / norm),
                Complex64::new(v[2] / norm, v[3] / norm),
            );
            return q.unwrap();
        }
    }
}

/// The four occupation updates written directly from `P` and `beta`.
fn occupation_identity(case: SiteCase, s: &SpinorField, n: i64) -> f64 {
    let (p, b) = (|m| s.probability(m), |m| s.beta(m));
    match case {
        SiteCase::Intact => 0.5 * (p(n + 1) + p(n - 1)) + b(n + 1) - b(n - 1),
        SiteCase::RightBroken => 0.5 * (p(n - 1) + p(n)) - (b(n - 1) + b(n)),
        SiteCase::LeftBroken => 0.5 * (p(n) + p(n + 1)) + (b(n) + b(n + 1)),
        SiteCase::Isolated => p(n),
    }
}

fn occupation_identities() -> Outcome {
    let mut rng = trajectory_rng(SEED, u64::MAX);
    let mut per_case: HashMap<SiteCase, usize> = HashMap::new();
    let mut worst: f64 = 0.0;
    let mut total = 0;
    while total < 10_000 {
        let mut state = SpinorField::localized(random_qubit(&mut rng), 0, 64).unwrap();
        for _ in 0..rng.random_range(1..40) {
            let p = rng.random_range(0.0..1.0);
            let links = sample_links(state.support(), p, &mut rng).unwrap();
            state = state.step_with_links(&hadamard(), &links).unwrap();
        }
        let (lo, hi) = state.support();
        let links = sample_links((lo, hi), rng.random_range(0.0..1.0), &mut rng).unwrap();
        let next = state.step_with_links(&hadamard(), &links).unwrap();
        for n in lo - 1..=hi + 1 {
            let case = links.classify_site(n);
            worst = worst.max((next.probability(n) - occupation_identity(case, &state, n)).abs());
            *per_case.entry(case).or_default() += 1;
            total += 1;
        }
    }
    let all_seen = SiteCase::ALL
        .iter()
        .all(|c| per_case.get(c).copied().unwrap_or(0) > 0);
    let counts: Vec<String> = SiteCase::ALL
        .iter()
        .map(|c| format!("{c:?}={}", per_case.get(c).unwrap_or(&0)))
        .collect();
    check(
        all_seen && worst < 1e-10,
        format!("{total} site-cases [{}], max error {worst:.2e}", counts.join(" ")),
    )
}

fn tail_diffusion(r: &EnsembleResult, p: f64) -> f64 {
    let tc = coherence_time(p).unwrap().finite().unwrap();
    fit_diffusion(&r.series, (default_tail_start(tc), LINK_STEPS))
        .unwrap()
        .d
}

fn diffusion_scaling(cache: &mut LinkCache) -> Outcome {
    let ps = [0.1, 0.2, 0.3, 0.4];
    let x: Vec<f64> = ps.iter().map(|p| (1.0 - p) / p).collect();
    let d: Vec<f64> = ps.iter().map(|&p| tail_diffusion(cache.get(p), p)).collect();
    let fit = linear_regression(&x, &d).unwrap();
    let points: Vec<String> = ps.iter().zip(&d).map(|(p, d)| format!("D({p})={d:.4}")).collect();
    check(
        (0.32..=0.48).contains(&fit.slope),
        format!(
            "K = {:.4}, intercept = {:.4}; {}",
            fit.slope,
            fit.intercept,
            points.join(" ")
        ),
    )
}

fn special_point(cache: &mut LinkCache) -> Outcome {
    let p = 4.0 / 9.0;
    let d = tail_diffusion(cache.get(p), p);
    check(
        (0.42..=0.58).contains(&d),
        format!("D(4/9) = {d:.4} (target [0.42, 0.58])"),
    )
}

fn classical_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    for p in [0.0, 0.2, 0.9] {
        let mut dist = ClassicalDistribution::delta(p).unwrap();
        for t in 1..=10_000u32 {
            dist = classical_step(&dist);
            let var = dist.distribution().moments().unwrap().variance;
            worst = worst.max((var - (1.0 - p) * t as f64).abs());
        }
    }
    check(
        worst < 1e-9,
        format!("max |sigma^2 - (1-p) t| = {worst:.2e} for t <= 10^4"),
    )
}

fn coherence_time_scaling(cache: &mut LinkCache) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for p in [0.01, 0.05, 0.1] {
        let tc = coherence_time(p).unwrap().finite().unwrap();
        match crossover_time(&cache.get(p).series, CrossoverOptions::default()) {
            Ok(c) => {
                let ratio = c.time as f64 / tc;
                ok &= (0.5..=2.0).contains(&ratio);
                lines.push(format!("p={p}: t_x={} t_c={tc:.1} ratio={ratio:.2}", c.time));
            }
            Err(e) => {
                ok = false;
                lines.push(format!("p={p}: {e}"));
            }
        }
    }
    check(ok, lines.join("; "))
}

fn brownian_overlay(cache: &mut LinkCache) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for p in [0.01, 0.1, 0.3, 0.4] {
        let params = BrownianParams::new(0.293, gamma_from_p(p).unwrap()).unwrap();
        let tc = coherence_time(p).unwrap().finite().unwrap();
        let start = (2.0 * tc).ceil() as u64;
        let (mut worst, mut at) = (0.0f64, 0);
        for (t, s) in cache.get(p).series.window(start, LINK_STEPS) {
            let model = brownian_variance(params, t as f64);
            let rel = (s / model - 1.0).abs();
            if rel > worst {
                worst = rel;
                at = t;
            }
        }
        ok &= worst < 0.25;
        lines.push(format!("p={p}: max rel err {worst:.3} at t={at}"));
    }
    check(ok, lines.join("; "))
}

fn gaussian_limit() -> Outcome {
    let spec = EnsembleSpec::new(Model::BrokenLinks { p: 0.1 }, 1000, 10_000, SEED).with_snapshots([1000]);
    let r = ensemble_run(&spec, Execution::Parallel).unwrap();
    let links = gaussianity(&r.snapshots[0].distribution).unwrap();
    let coherent = qwalk_core::walk::coherent_walk(Qubit::symmetric(), &hadamard(), 1000).unwrap();
    let pure = gaussianity(&coherent.distribution()).unwrap();
    check(
        links.excess_kurtosis.abs() < 0.2 && pure.excess_kurtosis < -0.5,
        format!(
            "excess kurtosis: p=0.1 -> {:.4}, coherent -> {:.4}",
            links.excess_kurtosis, pure.excess_kurtosis
        ),
    )
}

fn run_cli(dir: &Path, threads: usize, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_qwalk"))
        .args(["--threads", &threads.to_string()])
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn thread_count_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let jobs: [(&str, Vec<&str>); 3] = [
        (
            "links.csv",
            vec![
                "run",
                "links",
                "--p",
                "0.1",
                "--steps",
                "300",
                "--trajectories",
                "300",
                "--seed",
                "9",
            ],
        ),
        (
            "measure.csv",
            vec![
                "run",
                "measure",
                "--interval-uniform",
                "1",
                "10",
                "--steps",
                "300",
                "--trajectories",
                "2000",
            ],
        ),
        (
            "fig7.json",
            vec!["preset", "fig7", "--steps", "150", "--trajectories", "64"],
        ),
    ];
    let mut compared = 0;
    for (name, args) in &jobs {
        let mut reference: Option<Vec<u8>> = None;
        for threads in [1, 2, 4] {
            let out = format!("t{threads}_{name}");
            let mut full = args.clone();
            full.extend(["--out", &out]);
            run_cli(dir.path(), threads, &full)?;
            let bytes = std::fs::read(dir.path().join(&out)).map_err(|e| e.to_string())?;
            match &reference {
                None => reference = Some(bytes),
                Some(r) if *r == bytes => compared += 1,
                Some(_) => {
                    return Err(format!(
                        "{name}: output with {threads} threads differs from 1 thread"
                    ))
                }
            }
        }
    }
    check(
        compared == 6,
        format!("{compared} output files identical across 1, 2 and 4 threads"),
    )
}

type Criterion = Box<dyn FnMut(&mut LinkCache) -> Outcome>;

fn main() {
    let mut cache = LinkCache::default();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("1 coherent quadratic law", Box::new(|_| coherent_quadratic_law())),
        (
            "2 exact master-equation variance",
            Box::new(|_| master_equation_variance()),
        ),
        (
            "3 Monte Carlo vs master equation",
            Box::new(|_| monte_carlo_matches_master_equation()),
        ),
        (
            "4 random-interval equivalence",
            Box::new(|_| random_interval_equivalence()),
        ),
        ("5 broken-link norm", Box::new(|_| broken_link_norm())),
        ("6 occupation identities", Box::new(|_| occupation_identities())),
        ("7 diffusion scaling", Box::new(diffusion_scaling)),
        ("8 special point p=4/9", Box::new(special_point)),
        ("9 classical exactness", Box::new(|_| classical_exactness())),
        ("10 coherence-time scaling", Box::new(coherence_time_scaling)),
        ("11 Brownian overlay", Box::new(brownian_overlay)),
        ("12 Gaussian limit", Box::new(|_| gaussian_limit())),
        (
            "13 thread-count determinism",
            Box::new(|_| thread_count_determinism()),
        ),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, mut criterion) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.starts_with(&format!("{o} "))) {
            continue;
        }
        let start = Instant::now();
        let outcome = criterion(&mut cache);
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] criterion {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] criterion {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
