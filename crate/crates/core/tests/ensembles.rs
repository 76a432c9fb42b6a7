use std::collections::HashMap;

use qwalk_core::analysis::{
    chi_square_test, ensemble_run, fit_brownian, fit_diffusion, EnsembleResult, EnsembleSpec, Execution,
    Model,
};
use qwalk_core::classical::{gamma_from_p, gamma_from_period, COHERENT_C};
use qwalk_core::links::{sample_links, SiteCase};
use qwalk_core::measure::{kernel_q, master_step, run_measured_trajectory, MeasurementSchedule};
use qwalk_core::rng::trajectory_rng;
use qwalk_core::walk::Chirality;
use qwalk_core::{CoinOperator, Distribution, Qubit};

fn hadamard() -> CoinOperator {
    CoinOperator::hadamard()
}

fn measured(period: u32, steps: u64, trajectories: u64, seed: u64) -> EnsembleResult {
    let spec = EnsembleSpec::new(
        Model::Measured {
            schedule: MeasurementSchedule::periodic(period).unwrap(),
        },
        steps,
        trajectories,
        seed,
    );
    ensemble_run(&spec, Execution::Parallel).unwrap()
}

#[cfg(feature = "parallel")]
#[test]
fn results_do_not_depend_on_worker_count() {
    let specs = [
        EnsembleSpec::new(Model::BrokenLinks { p: 0.2 }, 120, 300, 5).with_snapshots([60, 120]),
        EnsembleSpec::new(
            Model::Measured {
                schedule: MeasurementSchedule::uniform(1, 10).unwrap(),
            },
            150,
            700,
            6,
        ),
    ];
    for spec in &specs {
        let reference = ensemble_run(spec, Execution::Sequential).unwrap();
        for threads in [1, 2, 3, 8] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let r = pool.install(|| ensemble_run(spec, Execution::Parallel)).unwrap();
            assert_eq!(r, reference, "{threads} threads");
            let bits = |r: &EnsembleResult| r.series.sigma2.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&r), bits(&reference));
        }
    }
}

#[test]
fn standard_errors_shrink_as_inverse_sqrt_n() {
    let mean_se = |n: u64, seed: u64| {
        let r = measured(10, 100, n, seed);
        let se = &r.series.standard_errors[1..];
        se.iter().sum::<f64>() / se.len() as f64
    };
    let ratios: Vec<f64> = (0..5)
        .map(|seed| mean_se(1000, seed) / mean_se(2000, 100 + seed))
        .collect();
    let ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!(
        (ratio / std::f64::consts::SQRT_2 - 1.0).abs() < 0.1,
        "ratio {ratio}, per seed {ratios:?}"
    );
}

#[test]
fn measured_variance_after_twenty_periods() {
    let r = measured(10, 200, 10_000, 11);
    let k = kernel_q(10, &hadamard(), Qubit::symmetric()).unwrap();
    let (s, se) = (r.series.sigma2[200], r.series.standard_errors[200]);
    let exact = 20.0 * k.sigma_q2;
    assert!(
        (s - exact).abs() < 3.0 * se,
        "sigma^2(200) = {s} +- {se}, expected {exact}"
    );
}

/// Displacements between consecutive position measurements, grouped by the
/// chirality obtained at the earlier measurement.
#[test]
fn kernel_repeats_after_each_measurement() {
    let period = 6;
    let k = kernel_q(period, &hadamard(), Qubit::symmetric()).unwrap();
    let schedule = MeasurementSchedule::periodic(period).unwrap();
    let span = period as i64;
    let mut counts: HashMap<Chirality, Vec<u64>> = HashMap::new();
    for i in 0..6_000 {
        let mut rng = trajectory_rng(77, i);
        let tr = run_measured_trajectory(
            &schedule,
            6 * period as u64,
            &hadamard(),
            Qubit::symmetric(),
            &mut rng,
        )
        .unwrap();
        for pair in tr.measurements.windows(2) {
            let step = pair[1].site - pair[0].site;
            let bins = counts
                .entry(pair[0].chirality)
                .or_insert_with(|| vec![0; 2 * span as usize + 1]);
            bins[(step + span) as usize] += 1;
        }
    }
    let expected: Vec<f64> = (-span..=span).map(|n| k.get(n)).collect();
    for chirality in [Chirality::Plus, Chirality::Minus] {
        let observed = &counts[&chirality];
        assert!(observed.iter().sum::<u64>() >= 10_000);
        let test = chi_square_test(observed, &expected, 5.0).unwrap();
        assert!(test.p_value > 0.001, "{chirality:?}: {test:?}");
    }
}

#[test]
fn measured_histogram_matches_convolution_per_bin() {
    const N: u64 = 10_000;
    let (period, tau) = (10, 5);
    let k = kernel_q(period, &hadamard(), Qubit::symmetric()).unwrap();
    let mut expected = Distribution::delta(0);
    for _ in 0..tau {
        expected = master_step(&expected, &k);
    }
    let schedule = MeasurementSchedule::periodic(period).unwrap();
    let mut counts: HashMap<i64, u64> = HashMap::new();
    for i in 0..N {
        let mut rng = trajectory_rng(3, i);
        let tr = run_measured_trajectory(
            &schedule,
            (period * tau) as u64,
            &hadamard(),
            Qubit::symmetric(),
            &mut rng,
        )
        .unwrap();
        *counts.entry(tr.measurements[tau as usize - 1].site).or_default() += 1;
    }
    for &site in counts.keys() {
        assert!(expected.get(site) > 0.0, "site {site} has zero probability");
    }
    let n = N as f64;
    for (site, p) in expected.iter().filter(|(_, p)| *p > 0.0) {
        let observed = counts.get(&site).copied().unwrap_or(0) as f64;
        let se = (n * p * (1.0 - p)).sqrt();
        assert!(
            (observed - n * p).abs() < 3.0 * se.max(1.0),
            "site {site}: {observed} vs {}",
            n * p
        );
    }
}

#[test]
fn site_case_frequencies_match_weights() {
    let mut rng = trajectory_rng(1, 0);
    for p in [0.1, 0.35, 0.8] {
        let links = sample_links((0, 99_999), p, &mut rng).unwrap();
        let mut freq: HashMap<SiteCase, u64> = HashMap::new();
        for n in 0..=99_999 {
            *freq.entry(links.classify_site(n)).or_default() += 1;
        }
        let total = 100_000.0;
        for case in SiteCase::ALL {
            let w = case.weight(p);
            let se = (w * (1.0 - w) / total).sqrt();
            let f = freq.get(&case).copied().unwrap_or(0) as f64 / total;
            assert!((f - w).abs() < 3.0 * se, "p={p} {case:?}: {f} vs {w}");
        }
    }
}

#[test]
fn broken_link_diffusion_at_p_0_4() {
    let p = 0.4;
    let spec = EnsembleSpec::new(Model::BrokenLinks { p }, 2000, 1000, 21);
    let r = ensemble_run(&spec, Execution::Parallel).unwrap();
    let tail = qwalk_core::analysis::default_tail_start(1.0 / (p * std::f64::consts::SQRT_2));
    let fit = fit_diffusion(&r.series, (tail, 2000)).unwrap();
    assert!(
        (fit.d / 0.6 - 1.0).abs() < 0.15,
        "D = {} [{}, {}]",
        fit.d,
        fit.ci_low,
        fit.ci_high
    );
}

#[test]
fn brownian_gamma_for_broken_links() {
    let p = 0.1;
    let spec = EnsembleSpec::new(Model::BrokenLinks { p }, 2000, 500, 22);
    let r = ensemble_run(&spec, Execution::Parallel).unwrap();
    let fit = fit_brownian(&r.series, Some(COHERENT_C)).unwrap();
    let expected = gamma_from_p(p).unwrap();
    assert!(
        (fit.params.gamma / expected - 1.0).abs() < 0.2,
        "gamma {} vs {expected}",
        fit.params.gamma
    );
}

#[test]
fn brownian_gamma_for_periodic_measurement() {
    let r = measured(10, 400, 10_000, 23);
    let fit = fit_brownian(&r.series, Some(COHERENT_C)).unwrap();
    let expected = gamma_from_period(10).unwrap();
    assert!(
        (fit.params.gamma / expected - 1.0).abs() < 0.2,
        "gamma {} vs {expected}",
        fit.params.gamma
    );
}
