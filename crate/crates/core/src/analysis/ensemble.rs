//! Reproducible Monte Carlo ensembles.
//!
//! Trajectories are grouped into fixed-size chunks that depend only on the
//! ensemble size. Each chunk sums its trajectories in index order and the
//! chunk sums are merged in chunk order, so the floating point result is the
//! same whether chunks run on one thread or many.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::ClassicalDistribution;
use crate::error::{invalid, Result};
use crate::links::{simulate_links, CONFINEMENT_THRESHOLD};
use crate::measure::{simulate_measured, MeasurementSchedule};
use crate::rng::trajectory_rng;
use crate::walk::{CoinOperator, Distribution, Qubit, SpinorField};

const MAX_CHUNK: u64 = 64;
const TARGET_CHUNKS: u64 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Coherent,
    Measured { schedule: MeasurementSchedule },
    BrokenLinks { p: f64 },
    Classical { p: f64 },
}

impl Model {
    pub fn is_stochastic(&self) -> bool {
        matches!(self, Model::Measured { .. } | Model::BrokenLinks { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub model: Model,
    pub steps: u64,
    pub trajectories: u64,
    pub master_seed: u64,
    pub coin: CoinOperator,
    pub qubit: Qubit,
    /// Times at which the ensemble-averaged distribution is recorded.
    pub snapshot_times: Vec<u64>,
}

impl EnsembleSpec {
    /// Hadamard coin, symmetric initial qubit, no snapshots.
    pub fn new(model: Model, steps: u64, trajectories: u64, master_seed: u64) -> Self {
        Self {
            model,
            steps,
            trajectories,
            master_seed,
            coin: CoinOperator::hadamard(),
            qubit: Qubit::symmetric(),
            snapshot_times: Vec::new(),
        }
    }

    pub fn with_snapshots(mut self, times: impl IntoIterator<Item = u64>) -> Self {
        self.snapshot_times = times.into_iter().collect();
        self
    }

    pub fn with_coin(mut self, coin: CoinOperator) -> Self {
        self.coin = coin;
        self
    }

    pub fn with_qubit(mut self, qubit: Qubit) -> Self {
        self.qubit = qubit;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("ensemble needs at least one step"));
        }
        if self.trajectories == 0 {
            return Err(invalid("ensemble needs at least one trajectory"));
        }
        if let Some(t) = self.snapshot_times.iter().find(|&&t| t > self.steps) {
            return Err(invalid(format!(
                "snapshot time {t} is past the last step {}",
                self.steps
            )));
        }
        match &self.model {
            Model::BrokenLinks { p } | Model::Classical { p } if !(0.0..=1.0).contains(p) => {
                Err(invalid(format!("p must lie in [0, 1], got {p}")))
            }
            _ => Ok(()),
        }
    }
}

/// Ensemble-averaged position variance over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceSeries {
    pub times: Vec<u64>,
    pub sigma2: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub ensemble_size: u64,
}

impl VarianceSeries {
    /// Noise-free series, e.g. from a closed form.
    pub fn exact(times: Vec<u64>, sigma2: Vec<f64>) -> Result<Self> {
        if times.len() != sigma2.len() {
            return Err(invalid("times and sigma2 differ in length"));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("times must be strictly increasing"));
        }
        if sigma2.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("variances must be finite and nonnegative"));
        }
        let n = times.len();
        Ok(Self {
            times,
            sigma2,
            standard_errors: vec![0.0; n],
            ensemble_size: 1,
        })
    }

    /// Samples `f(t)` at `t = 0..=steps`.
    pub fn from_fn(steps: u64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let times: Vec<u64> = (0..=steps).collect();
        let sigma2 = times.iter().map(|&t| f(t as f64)).collect();
        Self::exact(times, sigma2)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_time(&self) -> u64 {
        self.times.last().copied().unwrap_or(0)
    }

    /// `(t, sigma2)` pairs with `from <= t <= to`.
    pub fn window(&self, from: u64, to: u64) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.times
            .iter()
            .zip(&self.sigma2)
            .filter(move |(t, _)| (from..=to).contains(*t))
            .map(|(&t, &v)| (t, v))
    }

    /// Linear interpolation at a real time inside the series.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let first = *self.times.first()? as f64;
        let last = *self.times.last()? as f64;
        if !(first..=last).contains(&t) {
            return None;
        }
        let k = self.times.partition_point(|&x| (x as f64) < t);
        if self.times[k] as f64 == t {
            return Some(self.sigma2[k]);
        }
        let (t0, t1) = (self.times[k - 1] as f64, self.times[k] as f64);
        let w = (t - t0) / (t1 - t0);
        Some(self.sigma2[k - 1] * (1.0 - w) + self.sigma2[k] * w)
    }
}

/// Ensemble-averaged distribution at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: u64,
    pub distribution: Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub spec: EnsembleSpec,
    /// Variance of the ensemble-averaged distribution.
    pub series: VarianceSeries,
    /// Average of the per-trajectory variances.
    pub mean_trajectory_variance: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    /// Set for broken-link runs with `p > 1/2`, where spreading is confined.
    pub confinement_dominated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Chunks of trajectories run on the rayon pool; identical to
    /// `Sequential` without the `parallel` feature.
    #[default]
    Parallel,
}

// Per-time sums over trajectories.
#[derive(Clone, Copy, Default)]
struct MomentSums {
    m1: f64,
    m2: f64,
    m1_sq: f64,
    m2_sq: f64,
    m1_m2: f64,
    var: f64,
}

struct Accumulator {
    count: u64,
    sums: Vec<MomentSums>,
    snapshot_slot: Vec<Option<usize>>,
    snapshots: Vec<Vec<f64>>,
    // site -steps sits at index 0 of every snapshot buffer
    site_offset: i64,
}

impl Accumulator {
    fn new(steps: u64, snapshot_times: &[u64]) -> Self {
        let mut snapshot_slot = vec![None; steps as usize + 1];
        for (k, &t) in snapshot_times.iter().enumerate() {
            snapshot_slot[t as usize] = Some(k);
        }
        Self {
            count: 0,
            sums: vec![MomentSums::default(); steps as usize + 1],
            snapshot_slot,
            snapshots: vec![vec![0.0; 2 * steps as usize + 1]; snapshot_times.len()],
            site_offset: steps as i64,
        }
    }

    fn observe_moments(&mut self, t: u64, m1: f64, m2: f64) {
        let s = &mut self.sums[t as usize];
        s.m1 += m1;
        s.m2 += m2;
        s.m1_sq += m1 * m1;
        s.m2_sq += m2 * m2;
        s.m1_m2 += m1 * m2;
        s.var += (m2 - m1 * m1).max(0.0);
    }

    fn observe_distribution(&mut self, t: u64, dist: &Distribution) {
        if let Some(k) = self.snapshot_slot[t as usize] {
            let buf = &mut self.snapshots[k];
            for (n, p) in dist.iter() {
                buf[(n + self.site_offset) as usize] += p;
            }
        }
    }

    fn observe_state(&mut self, t: u64, state: &SpinorField) {
        let m = state.moments();
        self.observe_moments(t, m.m1, m.m2);
        if self.snapshot_slot[t as usize].is_some() {
            self.observe_distribution(t, &state.distribution());
        }
    }

    fn merge(&mut self, other: Accumulator) {
        self.count += other.count;
        for (a, b) in self.sums.iter_mut().zip(other.sums) {
            a.m1 += b.m1;
            a.m2 += b.m2;
            a.m1_sq += b.m1_sq;
            a.m2_sq += b.m2_sq;
            a.m1_m2 += b.m1_m2;
            a.var += b.var;
        }
        for (a, b) in self.snapshots.iter_mut().zip(other.snapshots) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn finish(self, spec: &EnsembleSpec, snapshot_times: &[u64]) -> EnsembleResult {
        let n = self.count as f64;
        let mut sigma2 = Vec::with_capacity(self.sums.len());
        let mut standard_errors = Vec::with_capacity(self.sums.len());
        let mut mean_trajectory_variance = Vec::with_capacity(self.sums.len());
        for s in &self.sums {
            let (m1, m2) = (s.m1 / n, s.m2 / n);
            sigma2.push((m2 - m1 * m1).max(0.0));
            mean_trajectory_variance.push(s.var / n);
            standard_errors.push(if self.count > 1 {
                // delta method for m2 - m1^2 with sample (co)variances of
                // the per-trajectory moments
                let scale = n / (n - 1.0);
                let var_m1 = (s.m1_sq / n - m1 * m1) * scale;
                let var_m2 = (s.m2_sq / n - m2 * m2) * scale;
                let cov = (s.m1_m2 / n - m1 * m2) * scale;
                let v = var_m2 - 4.0 * m1 * cov + 4.0 * m1 * m1 * var_m1;
                (v.max(0.0) / n).sqrt()
            } else {
                0.0
            });
        }
        let snapshots = snapshot_times
            .iter()
            .zip(self.snapshots)
            .map(|(&time, buf)| {
                let lo = self.site_offset - time as i64;
                let hi = self.site_offset + time as i64;
                let probs = buf[lo as usize..=hi as usize].iter().map(|p| p / n).collect();
                Snapshot {
                    time,
                    distribution: Distribution::new(-(time as i64), probs).expect("averaged probabilities"),
                }
            })
            .collect();
        EnsembleResult {
            spec: spec.clone(),
            series: VarianceSeries {
                times: (0..self.sums.len() as u64).collect(),
                sigma2,
                standard_errors,
                ensemble_size: self.count,
            },
            mean_trajectory_variance,
            snapshots,
            confinement_dominated: matches!(spec.model, Model::BrokenLinks { p } if p > CONFINEMENT_THRESHOLD),
        }
    }
}

fn run_trajectory(spec: &EnsembleSpec, index: u64, acc: &mut Accumulator) -> Result<()> {
    let mut rng = trajectory_rng(spec.master_seed, index);
    match &spec.model {
        Model::Measured { schedule } => simulate_measured(
            schedule,
            spec.steps,
            &spec.coin,
            spec.qubit,
            &mut rng,
            |t, state, _| acc.observe_state(t, state),
        ),
        Model::BrokenLinks { p } => {
            simulate_links(*p, spec.steps, &spec.coin, spec.qubit, &mut rng, |t, state| {
                acc.observe_state(t, state)
            })
            .map(drop)
        }
        Model::Coherent => {
            let mut state = SpinorField::localized(spec.qubit, 0, spec.steps as usize)?;
            acc.observe_state(0, &state);
            for t in 1..=spec.steps {
                state.advance(&spec.coin)?;
                acc.observe_state(t, &state);
            }
            Ok(())
        }
        Model::Classical { p } => {
            let mut walk = ClassicalDistribution::delta(*p)?;
            for t in 0..=spec.steps {
                if t > 0 {
                    walk = walk.step();
                }
                let m = walk.distribution().moments()?;
                acc.observe_moments(t, m.m1, m.m2);
                acc.observe_distribution(t, walk.distribution());
            }
            Ok(())
        }
    }
}

fn chunk_len(trajectories: u64) -> u64 {
    (trajectories / TARGET_CHUNKS).clamp(1, MAX_CHUNK)
}

/// Runs the ensemble described by `spec`.
///
/// Deterministic models (coherent, classical) are evaluated once. The result
/// depends only on `spec`, never on `execution` or the size of the thread pool.
pub fn ensemble_run(spec: &EnsembleSpec, execution: Execution) -> Result<EnsembleResult> {
    spec.validate()?;
    let mut snapshot_times = spec.snapshot_times.clone();
    snapshot_times.sort_unstable();
    snapshot_times.dedup();

    let trajectories = if spec.model.is_stochastic() {
        spec.trajectories
    } else {
        1
    };
    let chunk = chunk_len(trajectories);
    let n_chunks = trajectories.div_ceil(chunk);

    let run_chunk = |c: u64| -> Result<Accumulator> {
        let mut acc = Accumulator::new(spec.steps, &snapshot_times);
        for index in c * chunk..((c + 1) * chunk).min(trajectories) {
            run_trajectory(spec, index, &mut acc)?;
            acc.count += 1;
        }
        Ok(acc)
    };

    let chunks: Vec<Accumulator> = match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n_chunks)
            .into_par_iter()
            .map(run_chunk)
            .collect::<Result<_>>()?,
        _ => (0..n_chunks).map(run_chunk).collect::<Result<_>>()?,
    };

    let mut total = Accumulator::new(spec.steps, &snapshot_times);
    for acc in chunks {
        total.merge(acc);
    }
    Ok(total.finish(spec, &snapshot_times))
}
