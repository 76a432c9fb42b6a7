//! Decoherence through randomly broken links.
//!
//! Link `i` joins sites `i` and `i + 1`. Every step each link under the
//! wavefunction breaks independently with probability `p`. Flux that would
//! cross a broken link is reflected into the other chirality component of
//! the same site, so each step stays unitary and decoherence shows up only
//! in ensemble averages.

use rand::distr::{Bernoulli, Distribution as _};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::walk::{CoinOperator, Qubit, SpinorField};

/// Fitted slope of the broken-link diffusion coefficient against `(1 - p)/p`.
pub const DEFAULT_K: f64 = 0.40;

/// Above this breaking probability the walker is confined near the origin
/// and diffusion fits are unreliable.
pub const CONFINEMENT_THRESHOLD: f64 = 0.5;

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!(
            "link breaking probability must lie in [0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Broken/intact flags for the links `first_link .. first_link + len`.
/// Links outside that range count as intact.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    p: f64,
    first_link: i64,
    broken: Vec<bool>,
}

impl LinkConfig {
    pub fn from_flags(first_link: i64, broken: Vec<bool>, p: f64) -> Result<Self> {
        check_probability(p)?;
        Ok(Self {
            p,
            first_link,
            broken,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn first_link(&self) -> i64 {
        self.first_link
    }

    pub fn flags(&self) -> &[bool] {
        &self.broken
    }

    #[inline]
    pub fn is_broken(&self, link: i64) -> bool {
        let idx = link - self.first_link;
        idx >= 0 && self.broken.get(idx as usize).copied().unwrap_or(false)
    }

    pub fn broken_fraction(&self) -> f64 {
        if self.broken.is_empty() {
            return 0.0;
        }
        self.broken.iter().filter(|&&b| b).count() as f64 / self.broken.len() as f64
    }

    pub fn classify_site(&self, n: i64) -> SiteCase {
        SiteCase::from_links(self.is_broken(n - 1), self.is_broken(n))
    }

    /// Redraws the links touching sites `lo..=hi`, i.e. links `lo - 1 ..= hi`,
    /// in ascending order.
    fn resample<R: Rng + ?Sized>(&mut self, lo: i64, hi: i64, coin: &Bernoulli, rng: &mut R) {
        self.first_link = lo - 1;
        self.broken.clear();
        self.broken.extend((lo - 1..=hi).map(|_| coin.sample(rng)));
    }
}

/// Draws a fresh link configuration for a wavefunction supported on the
/// sites `window.0 ..= window.1`: every link touching those sites, one
/// margin link on each side included.
pub fn sample_links<R: Rng + ?Sized>(window: (i64, i64), p: f64, rng: &mut R) -> Result<LinkConfig> {
    check_probability(p)?;
    if window.0 > window.1 {
        return Err(invalid("empty site window"));
    }
    let coin = Bernoulli::new(p).map_err(|e| invalid(e.to_string()))?;
    let mut config = LinkConfig {
        p,
        first_link: 0,
        broken: Vec::new(),
    };
    config.resample(window.0, window.1, &coin, rng);
    Ok(config)
}

/// Local topology around a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SiteCase {
    Intact,
    /// Only the link to `n - 1` is broken.
    LeftBroken,
    /// Only the link to `n + 1` is broken.
    RightBroken,
    Isolated,
}

impl SiteCase {
    pub const ALL: [SiteCase; 4] = [
        SiteCase::Intact,
        SiteCase::LeftBroken,
        SiteCase::RightBroken,
        SiteCase::Isolated,
    ];

    pub fn from_links(left_broken: bool, right_broken: bool) -> Self {
        match (left_broken, right_broken) {
            (false, false) => SiteCase::Intact,
            (true, false) => SiteCase::LeftBroken,
            (false, true) => SiteCase::RightBroken,
            (true, true) => SiteCase::Isolated,
        }
    }

    /// Probability of this case when links break independently with probability `p`.
    pub fn weight(self, p: f64) -> f64 {
        match self {
            SiteCase::Intact => (1.0 - p) * (1.0 - p),
            SiteCase::LeftBroken | SiteCase::RightBroken => p * (1.0 - p),
            SiteCase::Isolated => p * p,
        }
    }

    /// Occupation `P_n(t+1)` implied by the Hadamard update for this case,
    /// written with occupations `occ` and interference terms `beta` at
    /// sites `n-1, n, n+1`.
    pub fn next_occupation(self, occ: [f64; 3], beta: [f64; 3]) -> f64 {
        let [p_left, p_here, p_right] = occ;
        let [b_left, b_here, b_right] = beta;
        match self {
            SiteCase::Intact => 0.5 * (p_right + p_left) + b_right - b_left,
            SiteCase::RightBroken => 0.5 * (p_left + p_here) - (b_left + b_here),
            SiteCase::LeftBroken => 0.5 * (p_here + p_right) + (b_here + b_right),
            SiteCase::Isolated => p_here,
        }
    }
}

impl SpinorField {
    /// One step under the given link topology, in place.
    ///
    /// Intact sites follow the coherent update. Amplitude whose move is
    /// blocked by a broken link stays on its site in the other chirality
    /// component.
    pub fn advance_with_links(&mut self, coin: &CoinOperator, links: &LinkConfig) -> Result<()> {
        let (lo, hi) = self.grown_support()?;
        let offset = self.origin_offset;
        let (up, down) = (&self.up, &self.down);
        let (next_up, next_down) = (&mut self.spare_up, &mut self.spare_down);
        let mut left_broken = links.is_broken(lo as i64 - offset - 1);
        for i in lo..=hi {
            let right_broken = links.is_broken(i as i64 - offset);
            next_up[i] = if right_broken {
                coin.down_out(up[i], down[i])
            } else {
                coin.up_out(up[i + 1], down[i + 1])
            };
            next_down[i] = if left_broken {
                coin.up_out(up[i], down[i])
            } else {
                coin.down_out(up[i - 1], down[i - 1])
            };
            left_broken = right_broken;
        }
        self.commit_step(lo, hi);
        Ok(())
    }

    pub fn step_with_links(&self, coin: &CoinOperator, links: &LinkConfig) -> Result<SpinorField> {
        let mut next = self.clone();
        next.advance_with_links(coin, links)?;
        Ok(next)
    }
}

/// Time scale `1 / (p sqrt 2)` after which broken links under the
/// wavefunction become frequent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoherenceTime {
    Finite(f64),
    /// `p = 0`: the walk never decoheres.
    Infinite,
}

impl CoherenceTime {
    pub fn finite(self) -> Option<f64> {
        match self {
            CoherenceTime::Finite(t) => Some(t),
            CoherenceTime::Infinite => None,
        }
    }
}

pub fn coherence_time(p: f64) -> Result<CoherenceTime> {
    check_probability(p)?;
    if p == 0.0 {
        return Ok(CoherenceTime::Infinite);
    }
    Ok(CoherenceTime::Finite(1.0 / (p * std::f64::consts::SQRT_2)))
}

/// Broken-link diffusion law `K (1 - p) / p`.
pub fn d_bl(p: f64, k: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::OutOfDomain {
            name: "p",
            value: p,
            domain: "(0, 1)",
        });
    }
    Ok(k * (1.0 - p) / p)
}

/// Per-step record of one broken-link trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTrajectory {
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    /// `(t, P_n(t))` at each requested snapshot time.
    pub snapshots: Vec<(u64, crate::walk::Distribution)>,
    pub final_state: SpinorField,
}

impl LinkTrajectory {
    pub fn variance(&self) -> Vec<f64> {
        self.m1
            .iter()
            .zip(&self.m2)
            .map(|(m1, m2)| (m2 - m1 * m1).max(0.0))
            .collect()
    }
}

pub fn run_broken_link_trajectory<R: Rng + ?Sized>(
    p: f64,
    steps: u64,
    coin: &CoinOperator,
    qubit: Qubit,
    snapshot_times: &[u64],
    rng: &mut R,
) -> Result<LinkTrajectory> {
    let mut m1 = Vec::with_capacity(steps as usize + 1);
    let mut m2 = Vec::with_capacity(steps as usize + 1);
    let mut snapshots = Vec::new();
    let final_state = simulate_links(p, steps, coin, qubit, rng, |t, state| {
        let m = state.moments();
        m1.push(m.m1);
        m2.push(m.m2);
        if snapshot_times.contains(&t) {
            snapshots.push((t, state.distribution()));
        }
    })?;
    Ok(LinkTrajectory {
        m1,
        m2,
        snapshots,
        final_state,
    })
}

/// Drives one broken-link trajectory from a walker localized at the origin,
/// calling `observe(t, state)` for `t = 0..=steps`. Each step first draws
/// every link over the support in ascending order, then updates the state.
pub fn simulate_links<R, F>(
    p: f64,
    steps: u64,
    coin: &CoinOperator,
    qubit: Qubit,
    rng: &mut R,
    mut observe: F,
) -> Result<SpinorField>
where
    R: Rng + ?Sized,
    F: FnMut(u64, &SpinorField),
{
    check_probability(p)?;
    let bernoulli = Bernoulli::new(p).map_err(|e| invalid(e.to_string()))?;
    let mut state = SpinorField::localized(qubit, 0, steps.max(1) as usize)?;
    let mut links = LinkConfig {
        p,
        first_link: 0,
        broken: Vec::with_capacity(2 * steps as usize + 2),
    };
    observe(0, &state);
    for t in 1..=steps {
        let (lo, hi) = state.support();
        links.resample(lo, hi, &bernoulli, rng);
        state.advance_with_links(coin, &links)?;
        observe(t, &state);
    }
    Ok(state)
}
