//! Classical baselines: the link-weighted classical walk and the Brownian
//! variance curve used to describe decoherent spreading.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::links::SiteCase;
use crate::walk::Distribution;

/// Quadratic spreading coefficient `sigma^2 ~ C t^2` of the coherent walk
/// from the symmetric initial qubit. Fits re-estimate it and report their own value.
pub const COHERENT_C: f64 = 0.293;

/// Coefficient in `gamma = 0.73 p / (1 - p)` relating broken links to
/// Brownian damping. A default, not an invariant.
pub const LINK_GAMMA_COEFF: f64 = 0.73;

const SERIES_SWITCH: f64 = 1e-4;

/// Position distribution of the classical walk that stays put with
/// probability `p` and otherwise hops one site left or right.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalDistribution {
    p: f64,
    dist: Distribution,
}

impl ClassicalDistribution {
    pub fn new(dist: Distribution, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("stay probability must lie in [0, 1], got {p}")));
        }
        let total = dist.total();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("distribution sums to {total}, expected 1")));
        }
        Ok(Self { p, dist })
    }

    pub fn delta(p: f64) -> Result<Self> {
        Self::new(Distribution::delta(0), p)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn distribution(&self) -> &Distribution {
        &self.dist
    }

    /// `P'(n) = p P(n) + (1 - p)/2 [P(n+1) + P(n-1)]`.
    pub fn step(&self) -> Self {
        let src = self.dist.probs();
        let hop = 0.5 * (1.0 - self.p);
        // stay + 2 hop is exactly one, so the norm does not drift over long runs
        let stay = 1.0 - 2.0 * hop;
        let len = src.len() + 2;
        let at = |i: isize| -> f64 {
            if i < 0 {
                0.0
            } else {
                src.get(i as usize).copied().unwrap_or(0.0)
            }
        };
        let probs = (0..len as isize)
            .map(|i| stay * at(i - 1) + hop * (at(i) + at(i - 2)))
            .collect();
        Self {
            p: self.p,
            dist: Distribution::new(self.dist.first_site() - 1, probs).expect("nonnegative"),
        }
    }
}

pub fn classical_step(p: &ClassicalDistribution) -> ClassicalDistribution {
    p.step()
}

/// The four broken-link occupation updates with interference dropped,
/// averaged with their topology weights. Equals [`classical_step`].
pub fn weighted_case_update(dist: &Distribution, p: f64) -> Distribution {
    let first = dist.first_site() - 1;
    let probs = (first..=dist.last_site() + 1)
        .map(|n| {
            let occ = [dist.get(n - 1), dist.get(n), dist.get(n + 1)];
            SiteCase::ALL
                .iter()
                .map(|case| case.weight(p) * case.next_occupation(occ, [0.0; 3]))
                .sum::<f64>()
        })
        .collect();
    Distribution::new(first, probs).expect("nonnegative")
}

/// Classical diffusion coefficient `(1 - p) / 2`.
pub fn d_cl(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("p must lie in [0, 1], got {p}")));
    }
    Ok(0.5 * (1.0 - p))
}

/// Exact variance series `sigma^2(t)`, `t = 0..=steps`, of the classical walk from a delta.
pub fn classical_variance_series(p: f64, steps: usize) -> Result<Vec<f64>> {
    let mut walk = ClassicalDistribution::delta(p)?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(0.0);
    for _ in 0..steps {
        walk = walk.step();
        out.push(walk.distribution().moments()?.variance);
    }
    Ok(out)
}

/// `(C, gamma)` of the Brownian variance curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrownianParams {
    pub c: f64,
    pub gamma: f64,
}

impl BrownianParams {
    pub fn new(c: f64, gamma: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite() && gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!(
                "Brownian parameters need C > 0 and gamma > 0, got ({c}, {gamma})"
            )));
        }
        Ok(Self { c, gamma })
    }

    /// Diffusion coefficient `C / gamma`.
    pub fn diffusion(&self) -> f64 {
        self.c / self.gamma
    }

    /// Late-time slope `2C / gamma`.
    pub fn long_time_slope(&self) -> f64 {
        2.0 * self.c / self.gamma
    }
}

/// `sigma^2(t) = (2C/gamma) [t - (1 - e^{-gamma t}) / gamma]`.
///
/// For `gamma t < 1e-4` the bracket is replaced by its Taylor expansion,
/// giving `C t^2 (1 - x/3 + x^2/12 - x^3/60)` with `x = gamma t`.
pub fn brownian_variance(params: BrownianParams, t: f64) -> f64 {
    let BrownianParams { c, gamma } = params;
    let x = gamma * t;
    if x < SERIES_SWITCH {
        c * t * t * (1.0 - x / 3.0 + x * x / 12.0 - x * x * x / 60.0)
    } else {
        2.0 * c / gamma * (t + (-x).exp_m1() / gamma)
    }
}

/// `d sigma^2 / dt = (2C/gamma)(1 - e^{-gamma t})`.
pub fn brownian_slope(params: BrownianParams, t: f64) -> f64 {
    -2.0 * params.c / params.gamma * (-params.gamma * t).exp_m1()
}

/// Damping rate matching periodic measurements every `period` steps: `2 / T`.
pub fn gamma_from_period(period: u32) -> Result<f64> {
    if period == 0 {
        return Err(invalid("measurement period must be at least one step"));
    }
    Ok(2.0 / period as f64)
}

/// Damping rate for broken links: `0.73 p / (1 - p)`.
pub fn gamma_from_p(p: f64) -> Result<f64> {
    gamma_from_p_with(p, LINK_GAMMA_COEFF)
}

pub fn gamma_from_p_with(p: f64, coeff: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::OutOfDomain {
            name: "p",
            value: p,
            domain: "(0, 1)",
        });
    }
    Ok(coeff * p / (1.0 - p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::links::DEFAULT_K;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn classical_step_examples() {
        let s = ClassicalDistribution::delta(0.0).unwrap().step();
        assert_eq!(s.distribution().probs(), &[0.5, 0.0, 0.5]);
        assert_eq!(s.distribution().first_site(), -1);

        let s = ClassicalDistribution::delta(1.0).unwrap().step();
        assert_eq!(s.distribution().get(0), 1.0);
        assert_eq!(s.distribution().total(), 1.0);

        let s = ClassicalDistribution::delta(0.2).unwrap().step();
        assert_abs_diff_eq!(s.distribution().get(-1), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(s.distribution().get(0), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.distribution().get(1), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(s.distribution().moments().unwrap().variance, 0.8, epsilon = 1e-15);
    }

    #[test]
    fn classical_variance_is_linear() {
        for p in [0.0, 0.2, 0.9] {
            let series = classical_variance_series(p, 2000).unwrap();
            for (t, v) in series.iter().enumerate() {
                assert!((v - (1.0 - p) * t as f64).abs() < 1e-9, "p={p} t={t} v={v}");
            }
        }
    }

    #[test]
    fn classical_diffusion() {
        assert_eq!(d_cl(0.0).unwrap(), 0.5);
        assert_eq!(d_cl(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(d_cl(0.2).unwrap(), 0.4, epsilon = 1e-15);
        assert!(d_cl(1.2).is_err());
    }

    #[test]
    fn brownian_examples() {
        let p = BrownianParams::new(0.293, 0.001).unwrap();
        assert_eq!(brownian_variance(p, 0.0), 0.0);
        assert!((brownian_variance(p, 10.0) - 29.3).abs() / 29.3 < 0.005);
        let p = BrownianParams::new(0.5, 2.0).unwrap();
        let expected = 0.5 * (10.0 - 0.5 * (1.0 - (-20.0f64).exp()));
        assert_abs_diff_eq!(brownian_variance(p, 10.0), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 4.75, epsilon = 1e-8);
        assert!(BrownianParams::new(0.0, 1.0).is_err());
        assert!(BrownianParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn brownian_series_branch_is_continuous() {
        let p = BrownianParams::new(0.3, 1.0).unwrap();
        let below = brownian_variance(p, SERIES_SWITCH * (1.0 - 1e-9));
        let above = brownian_variance(p, SERIES_SWITCH * (1.0 + 1e-9));
        assert!((below - above).abs() / above < 1e-6);
    }

    #[test]
    fn brownian_regimes() {
        let p = BrownianParams::new(0.293, 0.05).unwrap();
        for t in [0.01, 0.1, 0.5] {
            let v = brownian_variance(p, t);
            assert!((v - 0.293 * t * t).abs() / (0.293 * t * t) < 0.01);
        }
        for t in [200.0, 1000.0, 1e5] {
            assert!((brownian_slope(p, t) - p.long_time_slope()).abs() / p.long_time_slope() < 0.01);
        }
        let far = brownian_slope(p, 1e6);
        assert!((far - p.long_time_slope()).abs() / p.long_time_slope() < 1e-6);
        // slope from finite differences of the variance itself
        let fd = brownian_variance(p, 1e6 + 1.0) - brownian_variance(p, 1e6);
        assert!((fd - p.long_time_slope()).abs() / p.long_time_slope() < 1e-6);
    }

    #[test]
    fn parameter_bridges() {
        assert_eq!(gamma_from_period(2).unwrap(), 1.0);
        assert_abs_diff_eq!(gamma_from_period(10).unwrap(), 0.2, epsilon = 1e-15);
        assert!(gamma_from_period(0).is_err());
        for t in [2u32, 7, 20] {
            let g = gamma_from_period(t).unwrap();
            assert_abs_diff_eq!(COHERENT_C / g, COHERENT_C * t as f64 / 2.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(gamma_from_p(0.5).unwrap(), 0.73, epsilon = 1e-15);
        assert!(gamma_from_p(1e-9).unwrap() < 1e-8);
        assert!(matches!(gamma_from_p(0.0), Err(Error::OutOfDomain { .. })));
        for p in [0.1, 0.3, 0.6] {
            let d = COHERENT_C / gamma_from_p(p).unwrap();
            let dbl = crate::links::d_bl(p, DEFAULT_K).unwrap();
            assert!((d - dbl).abs() / dbl < 0.005);
        }
    }

    proptest! {
        #[test]
        fn weighted_cases_equal_classical_step(raw in proptest::collection::vec(0.0..1.0f64, 1..30), p in 0.0..=1.0f64) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-3);
            let dist = Distribution::new(-4, raw.iter().map(|x| x / total).collect()).unwrap();
            let classical = ClassicalDistribution::new(dist.clone(), p).unwrap().step();
            let weighted = weighted_case_update(&dist, p);
            prop_assert_eq!(classical.distribution().first_site(), weighted.first_site());
            for (a, b) in classical.distribution().probs().iter().zip(weighted.probs()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn brownian_variance_is_increasing(c in 0.01..2.0f64, gamma in 1e-4..5.0f64, t in 0.0..1e4f64) {
            let p = BrownianParams::new(c, gamma).unwrap();
            prop_assert!(brownian_variance(p, t + 1.0) > brownian_variance(p, t));
        }
    }
}
