//! Estimators for the spreading laws: quadratic coefficient, diffusion
//! coefficient and the two-parameter Brownian curve.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::ensemble::VarianceSeries;
use crate::classical::{brownian_variance, BrownianParams};
use crate::error::{invalid, Error, Result};

/// Ordinary least squares `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub samples: usize,
}

impl LinearFit {
    /// Two-sided 95% interval for the slope.
    pub fn slope_interval(&self) -> (f64, f64) {
        let half = t_quantile_975(self.samples.saturating_sub(2)) * self.slope_se;
        (self.slope - half, self.slope + half)
    }
}

fn t_quantile_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof.max(1) as f64)
        .map(|t| t.inverse_cdf(0.975))
        .unwrap_or(1.96)
}

pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(invalid("x and y differ in length"));
    }
    let n = x.len();
    if n < 3 {
        return Err(invalid(format!(
            "linear regression needs at least 3 points, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("x values are all equal"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (yi - slope * xi - intercept).powi(2))
        .sum();
    let s2 = rss / (nf - 2.0);
    Ok(LinearFit {
        slope,
        intercept,
        slope_se: (s2 / sxx).sqrt(),
        intercept_se: (s2 * (1.0 / nf + mx * mx / sxx)).sqrt(),
        samples: n,
    })
}

/// Relative RMS residual above which a through-origin quadratic is flagged.
pub const QUADRATIC_POOR_FIT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub c: f64,
    pub window: (u64, u64),
    /// RMS of `(sigma2 - C t^2) / sigma2` over the window.
    pub relative_rms_residual: f64,
    pub poor_fit: bool,
}

/// Least-squares `sigma^2 = C t^2` through the origin over `window`.
pub fn fit_quadratic_coefficient(series: &VarianceSeries, window: (u64, u64)) -> Result<QuadraticFit> {
    if window.0 < 10 {
        return Err(invalid(format!(
            "quadratic fit window must start at t >= 10, got {}",
            window.0
        )));
    }
    let points: Vec<(f64, f64)> = series
        .window(window.0, window.1)
        .map(|(t, v)| (t as f64, v))
        .collect();
    if points.is_empty() {
        return Err(invalid(format!(
            "no samples in window [{}, {}]",
            window.0, window.1
        )));
    }
    let num: f64 = points.iter().map(|(t, v)| v * t * t).sum();
    let den: f64 = points.iter().map(|(t, _)| t.powi(4)).sum();
    let c = num / den;
    let rel = (points
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|(t, v)| ((v - c * t * t) / v).powi(2))
        .sum::<f64>()
        / points.len() as f64)
        .sqrt();
    Ok(QuadraticFit {
        c,
        window,
        relative_rms_residual: rel,
        poor_fit: !(rel <= QUADRATIC_POOR_FIT),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionFit {
    pub d: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub intercept: f64,
    pub tail: (u64, u64),
    pub samples: usize,
}

/// Minimum number of samples in a diffusion tail.
pub const MIN_TAIL_SAMPLES: usize = 10;

/// `D = slope / 2` from a least-squares line through `sigma^2(t)` on `tail`.
///
/// The interval is the ordinary 95% regression interval. Successive
/// ensemble variances are correlated, so it understates the real spread.
pub fn fit_diffusion(series: &VarianceSeries, tail: (u64, u64)) -> Result<DiffusionFit> {
    let (t, v): (Vec<f64>, Vec<f64>) = series.window(tail.0, tail.1).map(|(t, v)| (t as f64, v)).unzip();
    if t.len() < MIN_TAIL_SAMPLES {
        return Err(invalid(format!(
            "diffusion tail [{}, {}] has {} samples, need at least {MIN_TAIL_SAMPLES}",
            tail.0,
            tail.1,
            t.len()
        )));
    }
    let fit = linear_regression(&t, &v)?;
    let (lo, hi) = fit.slope_interval();
    Ok(DiffusionFit {
        d: fit.slope / 2.0,
        ci_low: lo / 2.0,
        ci_high: hi / 2.0,
        intercept: fit.intercept,
        tail,
        samples: t.len(),
    })
}

/// Default tail start: four decoherence times, at least `t = 1`.
pub fn default_tail_start(decoherence_time: f64) -> u64 {
    (4.0 * decoherence_time).ceil().max(1.0) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrownianFit {
    pub params: BrownianParams,
    pub c_fixed: bool,
    /// Euclidean norm of the relative residuals.
    pub residual_norm: f64,
    pub iterations: usize,
}

pub const MAX_GAUSS_NEWTON_ITERATIONS: usize = 200;
pub const GAUSS_NEWTON_STEP_TOL: f64 = 1e-10;
const MAX_HALVINGS: usize = 40;

/// Fits the Brownian variance curve to `series` by damped Gauss-Newton on
/// the relative residuals `(model - sigma2) / sigma2`, over `ln C` and
/// `ln gamma` (or `ln gamma` alone when `fixed_c` is given).
///
/// The start point is deterministic: `C` from a through-origin quadratic fit
/// to the first twentieth of the series (at least ten samples) and
/// `gamma = 2C / s` with `s` the least-squares slope of the second half.
pub fn fit_brownian(series: &VarianceSeries, fixed_c: Option<f64>) -> Result<BrownianFit> {
    let points: Vec<(f64, f64)> = series
        .times
        .iter()
        .zip(&series.sigma2)
        .filter(|(t, v)| **t >= 1 && **v > 0.0)
        .map(|(&t, &v)| (t as f64, v))
        .collect();
    if points.len() < 20 {
        return Err(invalid("Brownian fit needs at least 20 positive samples"));
    }
    if let Some(c) = fixed_c {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid(format!("fixed C must be positive, got {c}")));
        }
    }

    let early = &points[..(points.len() / 20).max(10)];
    let c0 = fixed_c.unwrap_or_else(|| {
        early.iter().map(|(t, v)| v * t * t).sum::<f64>() / early.iter().map(|(t, _)| t.powi(4)).sum::<f64>()
    });
    let late = &points[points.len() / 2..];
    let (lt, lv): (Vec<f64>, Vec<f64>) = late.iter().copied().unzip();
    let tail_slope = linear_regression(&lt, &lv)?.slope;
    if !(tail_slope > 0.0 && c0 > 0.0) {
        return Err(Error::FitFailed {
            iterations: 0,
            residual_norm: f64::NAN,
            reason: format!("no usable start point (C0 = {c0}, tail slope = {tail_slope})"),
        });
    }
    let gamma0 = 2.0 * c0 / tail_slope;

    let cost = |ln_c: f64, ln_g: f64| -> f64 {
        let params = BrownianParams {
            c: ln_c.exp(),
            gamma: ln_g.exp(),
        };
        points
            .iter()
            .map(|&(t, v)| ((brownian_variance(params, t) - v) / v).powi(2))
            .sum()
    };

    let mut x = [c0.ln(), gamma0.ln()];
    let free_c = fixed_c.is_none();
    let mut current = cost(x[0], x[1]);
    for iteration in 1..=MAX_GAUSS_NEWTON_ITERATIONS {
        let params = BrownianParams {
            c: x[0].exp(),
            gamma: x[1].exp(),
        };
        // normal equations J^T J dx = -J^T r for the relative residuals
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for &(t, v) in &points {
            let model = brownian_variance(params, t);
            let r = (model - v) / v;
            let j = [model / v, params.gamma * brownian_dgamma(params, t) / v];
            for a in 0..2 {
                jtr[a] += j[a] * r;
                for b in 0..2 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let dx = if free_c {
            let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
            if det.abs() < f64::MIN_POSITIVE {
                return Err(Error::FitFailed {
                    iterations: iteration,
                    residual_norm: current.sqrt(),
                    reason: "singular normal equations".into(),
                });
            }
            [
                -(jtj[1][1] * jtr[0] - jtj[0][1] * jtr[1]) / det,
                -(jtj[0][0] * jtr[1] - jtj[1][0] * jtr[0]) / det,
            ]
        } else {
            [0.0, -jtr[1] / jtj[1][1]]
        };

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = [x[0] + scale * dx[0], x[1] + scale * dx[1]];
            let c = cost(trial[0], trial[1]);
            if c.is_finite() && c <= current {
                accepted = Some((trial, c));
                break;
            }
            scale *= 0.5;
        }
        let step_norm = scale * (dx[0].hypot(dx[1]));
        let x_norm = x[0].hypot(x[1]).max(1.0);
        match accepted {
            Some((trial, c)) => {
                x = trial;
                current = c;
                if step_norm <= GAUSS_NEWTON_STEP_TOL * x_norm {
                    return finish(x, fixed_c, current, iteration);
                }
            }
            // no descent left along the Gauss-Newton direction
            None if dx[0].hypot(dx[1]) <= 1e-6 * x_norm => return finish(x, fixed_c, current, iteration),
            None => {
                return Err(Error::FitFailed {
                    iterations: iteration,
                    residual_norm: current.sqrt(),
                    reason: "line search found no descent".into(),
                })
            }
        }
    }
    Err(Error::FitFailed {
        iterations: MAX_GAUSS_NEWTON_ITERATIONS,
        residual_norm: current.sqrt(),
        reason: "iteration limit reached".into(),
    })
}

fn finish(x: [f64; 2], fixed_c: Option<f64>, cost: f64, iterations: usize) -> Result<BrownianFit> {
    Ok(BrownianFit {
        params: BrownianParams::new(fixed_c.unwrap_or(x[0].exp()), x[1].exp())?,
        c_fixed: fixed_c.is_some(),
        residual_norm: cost.sqrt(),
        iterations,
    })
}

/// `d sigma^2 / d gamma` of the Brownian curve.
fn brownian_dgamma(params: BrownianParams, t: f64) -> f64 {
    let BrownianParams { c, gamma } = params;
    let x = gamma * t;
    if x < 1e-4 {
        c * t * t * t * (-1.0 / 3.0 + x / 6.0 - x * x / 20.0)
    } else {
        2.0 * c / gamma.powi(3) * (-x - x * (-x).exp() - 2.0 * (-x).exp_m1())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::COHERENT_C;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dgamma_matches_finite_differences() {
        for (c, gamma, t) in [
            (0.3, 0.1, 5.0),
            (0.3, 0.1, 200.0),
            (1.0, 2e-6, 10.0),
            (0.5, 0.7, 3.0),
        ] {
            let p = BrownianParams { c, gamma };
            let h = gamma * 1e-6;
            let fd = (brownian_variance(BrownianParams { c, gamma: gamma + h }, t)
                - brownian_variance(BrownianParams { c, gamma: gamma - h }, t))
                / (2.0 * h);
            let an = brownian_dgamma(p, t);
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-8), "{fd} vs {an}");
        }
    }

    #[test]
    fn quadratic_self_fit() {
        let s = VarianceSeries::from_fn(300, |t| 0.3 * t * t).unwrap();
        let f = fit_quadratic_coefficient(&s, (100, 200)).unwrap();
        assert_abs_diff_eq!(f.c, 0.3, epsilon = 1e-12);
        assert!(!f.poor_fit);
    }

    #[test]
    fn quadratic_fit_flags_linear_data() {
        let s = VarianceSeries::from_fn(300, |t| t).unwrap();
        let f = fit_quadratic_coefficient(&s, (100, 200)).unwrap();
        assert!(f.poor_fit, "{f:?}");
    }

    #[test]
    fn quadratic_fit_arguments() {
        let s = VarianceSeries::from_fn(30, |t| t * t).unwrap();
        assert!(fit_quadratic_coefficient(&s, (5, 20)).is_err());
        assert!(fit_quadratic_coefficient(&s, (40, 50)).is_err());
    }

    #[test]
    fn diffusion_self_fit() {
        let s = VarianceSeries::from_fn(500, |t| 2.0 * 0.5 * t + 3.0).unwrap();
        let f = fit_diffusion(&s, (100, 500)).unwrap();
        assert_abs_diff_eq!(f.d, 0.5, epsilon = 1e-10);
        assert!(f.ci_low <= f.d && f.d <= f.ci_high);
        assert!(fit_diffusion(&s, (100, 105)).is_err());
    }

    #[test]
    fn brownian_self_fit() {
        let truth = BrownianParams::new(0.293, 0.1).unwrap();
        let s = VarianceSeries::from_fn(400, |t| brownian_variance(truth, t)).unwrap();
        let f = fit_brownian(&s, None).unwrap();
        assert!((f.params.c - 0.293).abs() < 1e-6, "{f:?}");
        assert!((f.params.gamma - 0.1).abs() < 1e-6, "{f:?}");
        let f = fit_brownian(&s, Some(0.293)).unwrap();
        assert!((f.params.gamma - 0.1).abs() < 1e-6, "{f:?}");
        assert!(f.c_fixed);
    }

    #[test]
    fn brownian_fit_with_offset_start() {
        let truth = BrownianParams::new(COHERENT_C, 0.01).unwrap();
        let s = VarianceSeries::from_fn(2000, |t| {
            brownian_variance(truth, t) * (1.0 + 0.01 * (t * 0.37).sin())
        })
        .unwrap();
        let f = fit_brownian(&s, None).unwrap();
        assert!((f.params.gamma - 0.01).abs() / 0.01 < 0.02, "{f:?}");
    }

    #[test]
    fn linear_regression_basics() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = linear_regression(&x, &y).unwrap();
        assert_abs_diff_eq!(f.slope, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.intercept, 1.0, epsilon = 1e-14);
        assert!(linear_regression(&x[..2], &y[..2]).is_err());
        assert!(linear_regression(&[1.0; 4], &y).is_err());
    }
}
