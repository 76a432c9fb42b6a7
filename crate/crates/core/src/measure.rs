//! Decoherence through joint position and chirality measurements.
//!
//! Between measurements the walker evolves coherently. At each measurement
//! time the position is sampled with the Born rule, the wavefunction
//! collapses onto that site, and the chirality is then projected onto an
//! eigenvector of `sigma_y`. Averaged over trajectories the position
//! distribution obeys a master equation whose kernel is the coherent
//! distribution after one measurement interval.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::walk::{coherent_walk, Chirality, CoinOperator, Distribution, Qubit, SpinorField};

/// Rule producing the number of coherent steps between consecutive measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementSchedule {
    Periodic {
        period: u32,
    },
    /// Integer intervals drawn uniformly from `min..=max`.
    UniformRandom {
        min: u32,
        max: u32,
    },
    /// A fixed list of intervals, repeated cyclically.
    Explicit {
        intervals: Vec<u32>,
    },
}

impl MeasurementSchedule {
    pub fn periodic(period: u32) -> Result<Self> {
        if period == 0 {
            return Err(invalid("measurement period must be at least one step"));
        }
        Ok(Self::Periodic { period })
    }

    pub fn uniform(min: u32, max: u32) -> Result<Self> {
        if min == 0 || min > max {
            return Err(invalid(format!(
                "uniform interval range needs 1 <= min <= max, got [{min}, {max}]"
            )));
        }
        Ok(Self::UniformRandom { min, max })
    }

    pub fn explicit(intervals: Vec<u32>) -> Result<Self> {
        if intervals.is_empty() || intervals.contains(&0) {
            return Err(invalid(
                "explicit schedule needs a nonempty list of intervals >= 1",
            ));
        }
        Ok(Self::Explicit { intervals })
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Periodic { period } => Self::periodic(*period).map(drop),
            Self::UniformRandom { min, max } => Self::uniform(*min, *max).map(drop),
            Self::Explicit { intervals } => Self::explicit(intervals.clone()).map(drop),
        }
    }

    /// Mean interval between measurements.
    pub fn mean_interval(&self) -> f64 {
        match self {
            Self::Periodic { period } => *period as f64,
            Self::UniformRandom { min, max } => (*min as f64 + *max as f64) / 2.0,
            Self::Explicit { intervals } => {
                intervals.iter().map(|&t| t as f64).sum::<f64>() / intervals.len() as f64
            }
        }
    }

    /// Mean squared interval between measurements.
    pub fn mean_square_interval(&self) -> f64 {
        match self {
            Self::Periodic { period } => (*period as f64).powi(2),
            Self::UniformRandom { min, max } => {
                let sum: f64 = (*min..=*max).map(|t| (t as f64).powi(2)).sum();
                sum / (max - min + 1) as f64
            }
            Self::Explicit { intervals } => {
                intervals.iter().map(|&t| (t as f64).powi(2)).sum::<f64>() / intervals.len() as f64
            }
        }
    }

    pub fn max_interval(&self) -> u32 {
        match self {
            Self::Periodic { period } => *period,
            Self::UniformRandom { max, .. } => *max,
            Self::Explicit { intervals } => intervals.iter().copied().max().unwrap_or(1),
        }
    }

    /// Draws the next interval. `cursor` counts the intervals drawn so far.
    pub fn next_interval<R: Rng + ?Sized>(&self, cursor: &mut usize, rng: &mut R) -> u32 {
        let interval = match self {
            Self::Periodic { period } => *period,
            Self::UniformRandom { min, max } => rng.random_range(*min..=*max),
            Self::Explicit { intervals } => intervals[*cursor % intervals.len()],
        };
        *cursor += 1;
        interval
    }
}

/// Single-interval transition kernel `q_n`: the coherent distribution after
/// `period` steps from a walker localized at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelQ {
    pub period: u32,
    pub q: Distribution,
    pub m1q: f64,
    pub m2q: f64,
    pub sigma_q2: f64,
}

impl KernelQ {
    /// `q_n` for `-period <= n <= period`.
    pub fn get(&self, n: i64) -> f64 {
        self.q.get(n)
    }
}

pub fn kernel_q(period: u32, coin: &CoinOperator, qubit: Qubit) -> Result<KernelQ> {
    if period == 0 {
        return Err(invalid("kernel period must be at least one step"));
    }
    let state = coherent_walk(qubit, coin, period as usize)?;
    let (first, probs) = state.distribution().into_parts();
    debug_assert_eq!(first, -(period as i64));
    let q = Distribution::new(first, probs)?;
    let m = q.moments()?;
    Ok(KernelQ {
        period,
        q,
        m1q: m.m1,
        m2q: m.m2,
        sigma_q2: m.variance,
    })
}

/// One period of the master equation: `P'(n) = sum_j q_{n-j} P(j)`.
pub fn master_step(p: &Distribution, kernel: &KernelQ) -> Distribution {
    let k = kernel.q.probs();
    let span = k.len() - 1;
    let mut out = vec![0.0; p.len() + span];
    for (j, &pj) in p.probs().iter().enumerate() {
        if pj == 0.0 {
            continue;
        }
        for (m, &qm) in k.iter().enumerate() {
            out[j + m] += qm * pj;
        }
    }
    Distribution::new(p.first_site() + kernel.q.first_site(), out)
        .expect("convolution of distributions is a distribution")
}

/// Diffusion coefficient `sigma_q^2(T) / 2T` from an exact kernel.
pub fn d_rm_from_kernel(kernel: &KernelQ) -> f64 {
    kernel.sigma_q2 / (2.0 * kernel.period as f64)
}

/// Asymptotic form `C T / 2`.
pub fn d_rm_periodic(period: u32, c: f64) -> Result<f64> {
    if period == 0 {
        return Err(invalid("measurement period must be at least one step"));
    }
    Ok(c * period as f64 / 2.0)
}

/// `C <T^2> / (2 <T>)` for a schedule with random intervals.
pub fn d_rm_random(schedule: &MeasurementSchedule, c: f64) -> f64 {
    c * schedule.mean_square_interval() / (2.0 * schedule.mean_interval())
}

/// Born-rule position measurement by inverse CDF over ascending sites.
///
/// Returns the site and the collapsed state, localized at that site with
/// the renormalized local qubit. The collapsed state keeps the window size
/// and elapsed time of the input.
pub fn measure_position(state: &SpinorField, u: f64) -> Result<(i64, SpinorField)> {
    let (site, qubit) = sample_position(state, u)?;
    let mut collapsed = SpinorField::localized(qubit, site, state.capacity())?;
    collapsed.set_time(state.time());
    Ok((site, collapsed))
}

fn sample_position(state: &SpinorField, u: f64) -> Result<(i64, Qubit)> {
    if !(0.0..1.0).contains(&u) {
        return Err(invalid(format!("uniform variate must lie in [0, 1), got {u}")));
    }
    let (lo, hi) = state.support();
    let total = state.norm_sqr();
    if !(total > 0.0) {
        return Err(Error::InvalidState(
            "cannot measure an all-zero wavefunction".into(),
        ));
    }
    let target = u * total;
    let mut cumulative = 0.0;
    let mut chosen = None;
    for n in lo..=hi {
        let p = state.probability(n);
        if p == 0.0 {
            continue;
        }
        chosen = Some(n);
        cumulative += p;
        if target < cumulative {
            break;
        }
    }
    // Rounding can leave `target` just above the last partial sum; the last
    // occupied site is taken then.
    let site = chosen.ok_or_else(|| Error::InvalidState("no occupied site".into()))?;
    let (a, b) = state.amplitudes(site);
    let qubit = Qubit::normalized(a, b)
        .ok_or_else(|| Error::InvalidState("zero amplitude at sampled site".into()))?;
    Ok((site, qubit))
}

/// Projective `sigma_y` measurement of a single qubit.
///
/// `Plus` is chosen when `u < |<+|psi>|^2`, with `|+> = (1, i)/sqrt(2)`.
pub fn measure_chirality_y(qubit: Qubit, u: f64) -> Result<(Chirality, Qubit)> {
    if !(0.0..1.0).contains(&u) {
        return Err(invalid(format!("uniform variate must lie in [0, 1), got {u}")));
    }
    let p_plus = plus_probability(qubit);
    let outcome = if u < p_plus {
        Chirality::Plus
    } else {
        Chirality::Minus
    };
    Ok((outcome, Qubit::y_eigenstate(outcome)))
}

/// `|<+|psi>|^2 = |a - i b|^2 / 2`.
pub fn plus_probability(qubit: Qubit) -> f64 {
    let overlap = qubit.up() - num_complex::Complex64::i() * qubit.down();
    (overlap.norm_sqr() / 2.0).clamp(0.0, 1.0)
}

/// One joint position/chirality measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub time: u64,
    pub site: i64,
    pub chirality: Chirality,
}

/// Record of one measured trajectory. `m1[t]` and `m2[t]` are the moments of
/// the walker's distribution at time `t`, taken after the collapse when `t`
/// is a measurement time.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredTrajectory {
    pub measurements: Vec<MeasurementRecord>,
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
}

impl MeasuredTrajectory {
    pub fn variance(&self) -> Vec<f64> {
        self.m1
            .iter()
            .zip(&self.m2)
            .map(|(m1, m2)| (m2 - m1 * m1).max(0.0))
            .collect()
    }
}

/// Runs one trajectory and collects its record.
pub fn run_measured_trajectory<R: Rng + ?Sized>(
    schedule: &MeasurementSchedule,
    total_steps: u64,
    coin: &CoinOperator,
    qubit: Qubit,
    rng: &mut R,
) -> Result<MeasuredTrajectory> {
    let mut record = MeasuredTrajectory {
        measurements: Vec::new(),
        m1: Vec::with_capacity(total_steps as usize + 1),
        m2: Vec::with_capacity(total_steps as usize + 1),
    };
    simulate_measured(schedule, total_steps, coin, qubit, rng, |_, state, measured| {
        let m = state.moments();
        record.m1.push(m.m1);
        record.m2.push(m.m2);
        if let Some(rec) = measured {
            record.measurements.push(rec);
        }
    })?;
    Ok(record)
}

/// Drives a measured trajectory, calling `observe(t, state, measurement)`
/// for `t = 0..=total_steps`.
///
/// Random draws per trajectory, in order: the first interval; then at each
/// measurement a position variate, a chirality variate and the next interval.
pub fn simulate_measured<R, F>(
    schedule: &MeasurementSchedule,
    total_steps: u64,
    coin: &CoinOperator,
    qubit: Qubit,
    rng: &mut R,
    mut observe: F,
) -> Result<()>
where
    R: Rng + ?Sized,
    F: FnMut(u64, &SpinorField, Option<MeasurementRecord>),
{
    schedule.validate()?;
    if total_steps == 0 {
        return Err(invalid("a trajectory needs at least one step"));
    }
    let mut state = SpinorField::localized(qubit, 0, schedule.max_interval() as usize)?;
    let mut cursor = 0;
    let mut next_measurement = schedule.next_interval(&mut cursor, rng) as u64;
    observe(0, &state, None);
    for t in 1..=total_steps {
        state.advance(coin)?;
        let mut measured = None;
        if t == next_measurement {
            let (site, local) = sample_position(&state, rng.random())?;
            let (chirality, collapsed) = measure_chirality_y(local, rng.random())?;
            state.relocalize(collapsed, site);
            measured = Some(MeasurementRecord {
                time: t,
                site,
                chirality,
            });
            next_measurement += schedule.next_interval(&mut cursor, rng) as u64;
        }
        observe(t, &state, measured);
    }
    Ok(())
}

/// Largest pointwise difference between the kernels started from the two
/// `sigma_y` eigenstates. Zero means one kernel serves both collapse outcomes.
pub fn kernel_sign_mismatch(period: u32, coin: &CoinOperator) -> Result<f64> {
    let plus = kernel_q(period, coin, Qubit::y_eigenstate(Chirality::Plus))?;
    let minus = kernel_q(period, coin, Qubit::y_eigenstate(Chirality::Minus))?;
    Ok((-(period as i64)..=period as i64)
        .map(|n| (plus.get(n) - minus.get(n)).abs())
        .fold(0.0, f64::max))
}
