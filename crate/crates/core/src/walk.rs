//! Coherent walker state, the coin family and single-step evolution.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Probability amplitude of one chirality component at one site.
pub type Amplitude = Complex64;

const QUBIT_NORM_TOL: f64 = 1e-12;
const DISTRIBUTION_SUM_TOL: f64 = 1e-6;

/// Normalized chirality state `(up, down)`. The upper component moves left,
/// the lower one moves right. Serialized as `[re(a), im(a), re(b), im(b)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Qubit {
    up: Amplitude,
    down: Amplitude,
}

impl Qubit {
    pub fn new(up: Amplitude, down: Amplitude) -> Result<Self> {
        if !(up.re.is_finite() && up.im.is_finite() && down.re.is_finite() && down.im.is_finite()) {
            return Err(invalid("qubit amplitudes must be finite"));
        }
        let norm = up.norm_sqr() + down.norm_sqr();
        if (norm - 1.0).abs() > QUBIT_NORM_TOL {
            return Err(invalid(format!("qubit is not normalized (|a|^2+|b|^2 = {norm})")));
        }
        Ok(Self { up, down })
    }

    /// `(1, i)/sqrt(2)`, the initial chirality that gives a left/right
    /// symmetric Hadamard walk.
    pub fn symmetric() -> Self {
        Self::y_eigenstate(Chirality::Plus)
    }

    /// Eigenvector of `sigma_y`: `(1, i)/sqrt(2)` for `Plus`, `(1, -i)/sqrt(2)` for `Minus`.
    pub fn y_eigenstate(chirality: Chirality) -> Self {
        let down = match chirality {
            Chirality::Plus => Complex64::new(0.0, FRAC_1_SQRT_2),
            Chirality::Minus => Complex64::new(0.0, -FRAC_1_SQRT_2),
        };
        Self {
            up: Complex64::new(FRAC_1_SQRT_2, 0.0),
            down,
        }
    }

    pub fn up(&self) -> Amplitude {
        self.up
    }

    pub fn down(&self) -> Amplitude {
        self.down
    }

    /// Rescales an arbitrary nonzero pair to unit norm.
    pub(crate) fn normalized(up: Amplitude, down: Amplitude) -> Option<Self> {
        let norm = (up.norm_sqr() + down.norm_sqr()).sqrt();
        (norm > 0.0 && norm.is_finite()).then(|| Self {
            up: up / norm,
            down: down / norm,
        })
    }
}

impl TryFrom<[f64; 4]> for Qubit {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        Self::new(Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3]))
    }
}

impl From<Qubit> for [f64; 4] {
    fn from(q: Qubit) -> Self {
        [q.up.re, q.up.im, q.down.re, q.down.im]
    }
}

impl Default for Qubit {
    fn default() -> Self {
        Self::symmetric()
    }
}

/// Outcome of a `sigma_y` chirality measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Chirality {
    Plus,
    Minus,
}

impl Chirality {
    pub fn sign(self) -> i8 {
        match self {
            Chirality::Plus => 1,
            Chirality::Minus => -1,
        }
    }
}

/// The coin `K(theta) = sigma_z * exp(i theta sigma_y)`.
///
/// Expanding the exponential gives the real matrix `[[c, s], [s, -c]]` with
/// `c = cos(theta)` and `s = sin(theta)`; `theta = pi/4` is the Hadamard coin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CoinOperator {
    theta: f64,
    cos: f64,
    sin: f64,
}

impl CoinOperator {
    pub fn new(theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(invalid(format!("coin angle must be finite, got {theta}")));
        }
        if theta == FRAC_PI_4 {
            return Ok(Self::hadamard());
        }
        let (sin, cos) = theta.sin_cos();
        Ok(Self { theta, cos, sin })
    }

    /// `theta = pi/4`, with the matrix entries pinned to exactly `1/sqrt(2)`.
    pub fn hadamard() -> Self {
        Self {
            theta: FRAC_PI_4,
            cos: FRAC_1_SQRT_2,
            sin: FRAC_1_SQRT_2,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        let c = Complex64::new(self.cos, 0.0);
        let s = Complex64::new(self.sin, 0.0);
        [[c, s], [s, -c]]
    }

    /// Applies the coin to one site's qubit, returning `(up, down)`.
    #[inline(always)]
    pub fn apply(&self, up: Amplitude, down: Amplitude) -> (Amplitude, Amplitude) {
        (self.up_out(up, down), self.down_out(up, down))
    }

    #[inline(always)]
    pub(crate) fn up_out(&self, up: Amplitude, down: Amplitude) -> Amplitude {
        up * self.cos + down * self.sin
    }

    #[inline(always)]
    pub(crate) fn down_out(&self, up: Amplitude, down: Amplitude) -> Amplitude {
        up * self.sin - down * self.cos
    }
}

impl TryFrom<f64> for CoinOperator {
    type Error = Error;

    fn try_from(theta: f64) -> Result<Self> {
        Self::new(theta)
    }
}

impl From<CoinOperator> for f64 {
    fn from(coin: CoinOperator) -> Self {
        coin.theta
    }
}

impl Default for CoinOperator {
    fn default() -> Self {
        Self::hadamard()
    }
}

/// First and second moments of a position distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m1: f64,
    pub m2: f64,
    pub variance: f64,
}

impl Moments {
    pub fn from_raw(m1: f64, m2: f64) -> Self {
        Self {
            m1,
            m2,
            variance: (m2 - m1 * m1).max(0.0),
        }
    }
}

/// Probabilities on a contiguous run of sites starting at `first_site`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    first_site: i64,
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(first_site: i64, probs: Vec<f64>) -> Result<Self> {
        if let Some(bad) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(invalid(format!(
                "probabilities must be finite and nonnegative, got {bad}"
            )));
        }
        Ok(Self { first_site, probs })
    }

    pub fn delta(site: i64) -> Self {
        Self {
            first_site: site,
            probs: vec![1.0],
        }
    }

    pub fn first_site(&self) -> i64 {
        self.first_site
    }

    pub fn last_site(&self) -> i64 {
        self.first_site + self.probs.len() as i64 - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability at site `n`, zero outside the stored range.
    pub fn get(&self, n: i64) -> f64 {
        let idx = n - self.first_site;
        if idx < 0 {
            return 0.0;
        }
        self.probs.get(idx as usize).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(move |(i, &p)| (self.first_site + i as i64, p))
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn moments(&self) -> Result<Moments> {
        let total = self.total();
        if (total - 1.0).abs() > DISTRIBUTION_SUM_TOL {
            return Err(invalid(format!("distribution sums to {total}, expected 1")));
        }
        let (m1, m2) = self.iter().fold((0.0, 0.0), |(m1, m2), (n, p)| {
            let n = n as f64;
            (m1 + n * p, m2 + n * n * p)
        });
        Ok(Moments::from_raw(m1, m2))
    }

    pub(crate) fn into_parts(self) -> (i64, Vec<f64>) {
        (self.first_site, self.probs)
    }
}

/// Walker wavefunction on a fixed window of `2 * capacity + 3` sites.
///
/// The outermost cell on each side is a sentinel that must stay zero; the
/// walker can take at most `capacity` steps after being localized before it
/// would reach one. `lo..=hi` tracks the light cone in storage coordinates:
/// every amplitude outside it is exactly zero.
#[derive(Clone)]
pub struct SpinorField {
    pub(crate) origin_offset: i64,
    pub(crate) up: Vec<Amplitude>,
    pub(crate) down: Vec<Amplitude>,
    pub(crate) spare_up: Vec<Amplitude>,
    pub(crate) spare_down: Vec<Amplitude>,
    pub(crate) lo: usize,
    pub(crate) hi: usize,
    pub(crate) time: u64,
}

impl SpinorField {
    /// Walker localized at `position` with chirality `qubit`, with room for
    /// `capacity` further steps.
    pub fn localized(qubit: Qubit, position: i64, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(invalid("capacity must be at least one step"));
        }
        let len = 2 * capacity + 3;
        let centre = capacity + 1;
        let mut up = vec![Amplitude::default(); len];
        let mut down = vec![Amplitude::default(); len];
        up[centre] = qubit.up;
        down[centre] = qubit.down;
        Ok(Self {
            origin_offset: centre as i64 - position,
            up,
            down,
            spare_up: vec![Amplitude::default(); len],
            spare_down: vec![Amplitude::default(); len],
            lo: centre,
            hi: centre,
            time: 0,
        })
    }

    /// Re-centres the window on `position` and places `qubit` there, reusing
    /// the existing buffers. Elapsed time is kept.
    pub(crate) fn relocalize(&mut self, qubit: Qubit, position: i64) {
        for buf in [
            &mut self.up,
            &mut self.down,
            &mut self.spare_up,
            &mut self.spare_down,
        ] {
            buf[self.lo..=self.hi].fill(Amplitude::default());
        }
        let centre = self.capacity() + 1;
        self.origin_offset = centre as i64 - position;
        self.up[centre] = qubit.up;
        self.down[centre] = qubit.down;
        self.lo = centre;
        self.hi = centre;
    }

    pub fn capacity(&self) -> usize {
        (self.up.len() - 3) / 2
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub(crate) fn set_time(&mut self, time: u64) {
        self.time = time;
    }

    /// Storage index of site `n = 0`.
    pub fn origin_offset(&self) -> i64 {
        self.origin_offset
    }

    /// Lattice sites covered by storage, sentinels included.
    pub fn window(&self) -> (i64, i64) {
        (self.site_of(0), self.site_of(self.up.len() - 1))
    }

    /// Sites outside of which every amplitude is exactly zero.
    pub fn support(&self) -> (i64, i64) {
        (self.site_of(self.lo), self.site_of(self.hi))
    }

    #[inline]
    pub(crate) fn site_of(&self, idx: usize) -> i64 {
        idx as i64 - self.origin_offset
    }

    fn index_of(&self, n: i64) -> Option<usize> {
        let idx = n + self.origin_offset;
        (idx >= 0 && (idx as usize) < self.up.len()).then_some(idx as usize)
    }

    pub fn amplitudes(&self, n: i64) -> (Amplitude, Amplitude) {
        self.index_of(n)
            .map(|i| (self.up[i], self.down[i]))
            .unwrap_or_default()
    }

    pub fn probability(&self, n: i64) -> f64 {
        let (a, b) = self.amplitudes(n);
        a.norm_sqr() + b.norm_sqr()
    }

    /// Interference term `Re(conj(a_n) * b_n)`.
    pub fn beta(&self, n: i64) -> f64 {
        let (a, b) = self.amplitudes(n);
        (a.conj() * b).re
    }

    pub fn norm_sqr(&self) -> f64 {
        (self.lo..=self.hi)
            .map(|i| self.up[i].norm_sqr() + self.down[i].norm_sqr())
            .sum()
    }

    /// `P_n = |a_n|^2 + |b_n|^2` over the support.
    pub fn distribution(&self) -> Distribution {
        Distribution {
            first_site: self.site_of(self.lo),
            probs: (self.lo..=self.hi)
                .map(|i| self.up[i].norm_sqr() + self.down[i].norm_sqr())
                .collect(),
        }
    }

    /// `beta_n` for every site of the support, starting at `support().0`.
    pub fn beta_terms(&self) -> Vec<f64> {
        (self.lo..=self.hi)
            .map(|i| (self.up[i].conj() * self.down[i]).re)
            .collect()
    }

    /// Inner product `<self|other>` over the whole line.
    pub fn inner(&self, other: &SpinorField) -> Complex64 {
        let (lo, hi) = self.support();
        (lo..=hi)
            .map(|n| {
                let (a, b) = self.amplitudes(n);
                let (c, d) = other.amplitudes(n);
                a.conj() * c + b.conj() * d
            })
            .sum()
    }

    /// Moments of the position distribution without normalization checks.
    pub fn moments(&self) -> Moments {
        let (mut m1, mut m2) = (0.0, 0.0);
        for i in self.lo..=self.hi {
            let p = self.up[i].norm_sqr() + self.down[i].norm_sqr();
            let n = self.site_of(i) as f64;
            m1 += n * p;
            m2 += n * n * p;
        }
        Moments::from_raw(m1, m2)
    }

    /// Storage range of the support after one more step.
    pub(crate) fn grown_support(&self) -> Result<(usize, usize)> {
        if self.lo <= 1 || self.hi + 2 >= self.up.len() {
            return Err(Error::CapacityExceeded {
                capacity: self.capacity(),
            });
        }
        Ok((self.lo - 1, self.hi + 1))
    }

    pub(crate) fn commit_step(&mut self, lo: usize, hi: usize) {
        std::mem::swap(&mut self.up, &mut self.spare_up);
        std::mem::swap(&mut self.down, &mut self.spare_down);
        self.lo = lo;
        self.hi = hi;
        self.time += 1;
    }

    /// One coherent step in place: coin on every site, then the upper
    /// component moves one site left and the lower one moves right.
    pub fn advance(&mut self, coin: &CoinOperator) -> Result<()> {
        let (lo, hi) = self.grown_support()?;
        let (up, down) = (&self.up, &self.down);
        let (next_up, next_down) = (&mut self.spare_up, &mut self.spare_down);
        for i in lo..=hi {
            next_up[i] = coin.up_out(up[i + 1], down[i + 1]);
            next_down[i] = coin.down_out(up[i - 1], down[i - 1]);
        }
        self.commit_step(lo, hi);
        Ok(())
    }

    pub fn step(&self, coin: &CoinOperator) -> Result<SpinorField> {
        let mut next = self.clone();
        next.advance(coin)?;
        Ok(next)
    }
}

impl PartialEq for SpinorField {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.support() == other.support() && {
            let (lo, hi) = self.support();
            (lo..=hi).all(|n| self.amplitudes(n) == other.amplitudes(n))
        }
    }
}

impl fmt::Debug for SpinorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpinorField")
            .field("time", &self.time)
            .field("capacity", &self.capacity())
            .field("support", &self.support())
            .field("norm_sqr", &self.norm_sqr())
            .finish()
    }
}

/// Coherent walk from a localized state for `steps` steps.
pub fn coherent_walk(qubit: Qubit, coin: &CoinOperator, steps: usize) -> Result<SpinorField> {
    let mut state = SpinorField::localized(qubit, 0, steps.max(1))?;
    for _ in 0..steps {
        state.advance(coin)?;
    }
    Ok(state)
}
