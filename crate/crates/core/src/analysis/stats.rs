//! Shape diagnostics: Gaussianity, the quadratic-to-linear crossover and a
//! binned chi-square goodness-of-fit test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::ensemble::VarianceSeries;
use crate::error::{invalid, Error, Result};
use crate::walk::Distribution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussianity {
    pub mean: f64,
    pub variance: f64,
    /// `M4 / sigma^4 - 3`.
    pub excess_kurtosis: f64,
    /// `sum (P_n - G_n)^2 / G_n` against the moment-matched Gaussian
    /// sampled at the same sites and renormalized over them.
    pub chi_square: f64,
}

pub fn gaussianity(dist: &Distribution) -> Result<Gaussianity> {
    let m = dist.moments()?;
    let variance = m.variance;
    if !(variance > 0.0) {
        return Err(invalid("distribution has zero variance"));
    }
    let mean = m.m1;
    let m4: f64 = dist.iter().map(|(n, p)| p * (n as f64 - mean).powi(4)).sum();
    let excess_kurtosis = m4 / (variance * variance) - 3.0;

    let density: Vec<f64> = dist
        .iter()
        .map(|(n, _)| (-(n as f64 - mean).powi(2) / (2.0 * variance)).exp())
        .collect();
    let norm: f64 = density.iter().sum();
    let chi_square = dist
        .probs()
        .iter()
        .zip(&density)
        .filter(|(_, g)| **g > 0.0)
        .map(|(p, g)| {
            let g = g / norm;
            (p - g).powi(2) / g
        })
        .sum();
    Ok(Gaussianity {
        mean,
        variance,
        excess_kurtosis,
        chi_square,
    })
}

/// Settings for [`crossover_time`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverOptions {
    /// Slope level marking the crossover; 1.5 sits midway between ballistic
    /// (2) and diffusive (1) spreading.
    pub threshold: f64,
    /// The local slope at `t` compares `sigma^2` at `t (1 - h)` and `t (1 + h)`.
    pub half_width: f64,
    /// Earliest time scanned. The first few steps of any walk grow roughly
    /// linearly and are skipped.
    pub min_time: u64,
}

impl Default for CrossoverOptions {
    fn default() -> Self {
        Self {
            threshold: 1.5,
            half_width: 0.2,
            min_time: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    pub time: u64,
    pub slope: f64,
    pub options: CrossoverOptions,
}

/// Centered log-log slope of the series at `t`, or `None` when the window
/// leaves the series or touches a zero variance.
pub fn local_loglog_slope(series: &VarianceSeries, t: f64, half_width: f64) -> Option<f64> {
    let lo = t * (1.0 - half_width);
    let hi = t * (1.0 + half_width);
    let (v_lo, v_hi) = (series.value_at(lo)?, series.value_at(hi)?);
    (v_lo > 0.0 && v_hi > 0.0).then(|| (v_hi / v_lo).ln() / (hi / lo).ln())
}

/// First time, from `min_time` on, where the local log-log slope of
/// `sigma^2(t)` drops below the threshold.
pub fn crossover_time(series: &VarianceSeries, options: CrossoverOptions) -> Result<Crossover> {
    if !(options.half_width > 0.0 && options.half_width < 1.0) {
        return Err(invalid("half width must lie in (0, 1)"));
    }
    for &t in series.times.iter().filter(|&&t| t >= options.min_time.max(1)) {
        match local_loglog_slope(series, t as f64, options.half_width) {
            Some(slope) if slope < options.threshold => {
                return Ok(Crossover {
                    time: t,
                    slope,
                    options,
                });
            }
            Some(_) => {}
            None if (t as f64) * (1.0 + options.half_width) > series.last_time() as f64 => break,
            None => {}
        }
    }
    Err(Error::NoCrossover {
        threshold: options.threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Pearson test of `observed` counts against `expected` probabilities.
///
/// Adjacent cells are pooled, in order, until every bin expects at least
/// `min_expected` counts; a short remainder joins the last bin. Cells with
/// zero expected probability must be empty and are otherwise fatal to the
/// fit (p-value 0).
pub fn chi_square_test(observed: &[u64], expected: &[f64], min_expected: f64) -> Result<ChiSquareTest> {
    if observed.len() != expected.len() {
        return Err(invalid("observed and expected differ in length"));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(invalid("no observations"));
    }
    let n = total as f64;
    let norm: f64 = expected.iter().sum();
    if !(norm > 0.0) {
        return Err(invalid("expected probabilities sum to zero"));
    }

    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        if e == 0.0 {
            if o > 0 {
                return Ok(ChiSquareTest {
                    statistic: f64::INFINITY,
                    dof: 0,
                    p_value: 0.0,
                    bins: 0,
                });
            }
            continue;
        }
        obs += o as f64;
        exp += n * e / norm;
        if exp >= min_expected {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += obs;
                last.1 += exp;
            }
            None => bins.push((obs, exp)),
        }
    }
    if bins.len() < 2 {
        return Err(invalid("fewer than two bins after pooling"));
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len() - 1;
    let p_value = ChiSquared::new(dof as f64)
        .map(|d| d.sf(statistic))
        .map_err(|e| invalid(e.to_string()))?;
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value,
        bins: bins.len(),
    })
}
