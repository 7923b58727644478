//! Weighted least-squares fits for decay curves and fringes.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Result of fitting y = a * p^m + b.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub a: f64,
    pub p: f64,
    pub b: f64,
    pub a_err: f64,
    pub p_err: f64,
    pub b_err: f64,
    pub chi2: f64,
}

/// Fit y = a * p^m + b by weighted Levenberg-Marquardt. `sigmas` are the
/// per-point standard deviations (all positive). Constant data (every
/// point equal within 1e-12) short-circuits to p = 1 with zero error bars,
/// since the decay rate is then unidentifiable.
pub fn fit_exponential(ms: &[f64], ys: &[f64], sigmas: &[f64]) -> Result<ExpFit> {
    let n = ms.len();
    if n < 3 || ys.len() != n || sigmas.len() != n {
        return Err(Error::FitFailed(format!(
            "need at least 3 points with matching lengths, got {n}/{}/{}",
            ys.len(),
            sigmas.len()
        )));
    }
    if sigmas.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument("sigmas must be positive".into()));
    }
    let spread = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - ys.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread < 1e-12 {
        return Ok(ExpFit {
            a: ys[0],
            p: 1.0,
            b: 0.0,
            a_err: 0.0,
            p_err: 0.0,
            b_err: 0.0,
            chi2: 0.0,
        });
    }

    // initial guesses: baseline from the longest sequences, amplitude from
    // the shortest, decay from the pair
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| ms[x].partial_cmp(&ms[y]).unwrap());
    let first = order[0];
    let last = order[n - 1];
    let mut b = ys[last];
    let mut a = (ys[first] - b).clamp(1e-6, 2.0);
    let mid = order[n / 2];
    let mut p = if (ys[mid] - b) / a > 0.0 && ms[mid] > ms[first] {
        ((ys[mid] - b) / a)
            .powf(1.0 / (ms[mid] - ms[first]).max(1.0))
            .clamp(0.01, 0.999999)
    } else {
        0.95
    };

    let model = |a: f64, p: f64, b: f64, m: f64| a * p.powf(m) + b;
    let chi2_of = |a: f64, p: f64, b: f64| -> f64 {
        (0..n)
            .map(|k| {
                let r = (model(a, p, b, ms[k]) - ys[k]) / sigmas[k];
                r * r
            })
            .sum()
    };

    let mut lambda = 1e-3;
    let mut chi2 = chi2_of(a, p, b);
    for _ in 0..300 {
        // weighted Jacobian and residuals
        let mut jtj = DMatrix::<f64>::zeros(3, 3);
        let mut jtr = DVector::<f64>::zeros(3);
        for k in 0..n {
            let w = 1.0 / sigmas[k];
            let pm = p.powf(ms[k]);
            let grad = [
                pm * w,
                a * ms[k] * p.powf(ms[k] - 1.0) * w,
                w,
            ];
            let r = (ys[k] - model(a, p, b, ms[k])) * w;
            for i in 0..3 {
                jtr[i] += grad[i] * r;
                for j in 0..3 {
                    jtj[(i, j)] += grad[i] * grad[j];
                }
            }
        }
        let mut damped = jtj.clone();
        for i in 0..3 {
            damped[(i, i)] *= 1.0 + lambda;
        }
        let step = match damped.lu().solve(&jtr) {
            Some(s) => s,
            None => {
                lambda *= 10.0;
                continue;
            }
        };
        let (na, np, nb) = (a + step[0], (p + step[1]).clamp(1e-9, 1.0), b + step[2]);
        let new_chi2 = chi2_of(na, np, nb);
        if new_chi2 < chi2 {
            let gain = chi2 - new_chi2;
            a = na;
            p = np;
            b = nb;
            chi2 = new_chi2;
            lambda = (lambda * 0.3).max(1e-12);
            if gain < 1e-14 * (1.0 + chi2) {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    // covariance from the final curvature
    let mut jtj = DMatrix::<f64>::zeros(3, 3);
    for k in 0..n {
        let w = 1.0 / sigmas[k];
        let grad = [
            p.powf(ms[k]) * w,
            a * ms[k] * p.powf(ms[k] - 1.0) * w,
            w,
        ];
        for i in 0..3 {
            for j in 0..3 {
                jtj[(i, j)] += grad[i] * grad[j];
            }
        }
    }
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| Error::FitFailed("singular curvature at the optimum".into()))?;
    Ok(ExpFit {
        a,
        p,
        b,
        a_err: cov[(0, 0)].max(0.0).sqrt(),
        p_err: cov[(1, 1)].max(0.0).sqrt(),
        b_err: cov[(2, 2)].max(0.0).sqrt(),
        chi2,
    })
}

/// Fit y = a * p^m + b with the offset frozen at a known asymptote.
///
/// At shallow depths the free-offset fit is ill-conditioned: the curvature
/// that separates p from the amplitude sits below the shot noise and the
/// estimate scatters wildly. When the asymptote is known exactly (survival
/// under twirled gate-independent noise relaxes to 1/d), pinning it makes
/// p identifiable from the slope alone.
pub fn fit_exponential_fixed_offset(
    ms: &[f64],
    ys: &[f64],
    sigmas: &[f64],
    b: f64,
) -> Result<ExpFit> {
    let n = ms.len();
    if n < 2 || ys.len() != n || sigmas.len() != n {
        return Err(Error::FitFailed(format!(
            "need at least 2 points with matching lengths, got {n}/{}/{}",
            ys.len(),
            sigmas.len()
        )));
    }
    if sigmas.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument("sigmas must be positive".into()));
    }
    let spread = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - ys.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread < 1e-12 {
        return Ok(ExpFit {
            a: ys[0] - b,
            p: 1.0,
            b,
            a_err: 0.0,
            p_err: 0.0,
            b_err: 0.0,
            chi2: 0.0,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| ms[x].partial_cmp(&ms[y]).unwrap());
    let first = order[0];
    let last = order[n - 1];
    let mut a = (ys[first] - b).clamp(1e-6, 2.0);
    let mut p = if (ys[last] - b) / a > 0.0 && ms[last] > ms[first] {
        ((ys[last] - b) / a)
            .powf(1.0 / (ms[last] - ms[first]))
            .clamp(0.01, 0.999999)
    } else {
        0.95
    };

    let chi2_of = |a: f64, p: f64| -> f64 {
        (0..n)
            .map(|k| {
                let r = (a * p.powf(ms[k]) + b - ys[k]) / sigmas[k];
                r * r
            })
            .sum()
    };

    let mut lambda = 1e-3;
    let mut chi2 = chi2_of(a, p);
    for _ in 0..300 {
        let mut jtj = [[0.0f64; 2]; 2];
        let mut jtr = [0.0f64; 2];
        for k in 0..n {
            let w = 1.0 / sigmas[k];
            let grad = [p.powf(ms[k]) * w, a * ms[k] * p.powf(ms[k] - 1.0) * w];
            let r = (ys[k] - (a * p.powf(ms[k]) + b)) * w;
            for i in 0..2 {
                jtr[i] += grad[i] * r;
                for j in 0..2 {
                    jtj[i][j] += grad[i] * grad[j];
                }
            }
        }
        let d0 = jtj[0][0] * (1.0 + lambda);
        let d1 = jtj[1][1] * (1.0 + lambda);
        let det = d0 * d1 - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-300 {
            lambda *= 10.0;
            continue;
        }
        let step = [
            (d1 * jtr[0] - jtj[0][1] * jtr[1]) / det,
            (d0 * jtr[1] - jtj[1][0] * jtr[0]) / det,
        ];
        let (na, np) = (a + step[0], (p + step[1]).clamp(1e-9, 1.0));
        let new_chi2 = chi2_of(na, np);
        if new_chi2 < chi2 {
            let gain = chi2 - new_chi2;
            a = na;
            p = np;
            chi2 = new_chi2;
            lambda = (lambda * 0.3).max(1e-12);
            if gain < 1e-14 * (1.0 + chi2) {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    let mut jtj = [[0.0f64; 2]; 2];
    for k in 0..n {
        let w = 1.0 / sigmas[k];
        let grad = [p.powf(ms[k]) * w, a * ms[k] * p.powf(ms[k] - 1.0) * w];
        for i in 0..2 {
            for j in 0..2 {
                jtj[i][j] += grad[i] * grad[j];
            }
        }
    }
    let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
    if det.abs() < 1e-300 {
        return Err(Error::FitFailed("singular curvature at the optimum".into()));
    }
    Ok(ExpFit {
        a,
        p,
        b,
        a_err: (jtj[1][1] / det).max(0.0).sqrt(),
        p_err: (jtj[0][0] / det).max(0.0).sqrt(),
        b_err: 0.0,
        chi2,
    })
}

/// Ordinary least-squares line fit y = slope * x + intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_err: f64,
    pub intercept_err: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(Error::FitFailed("need at least 2 points".into()));
    }
    let nf = n as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let denom = nf * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::FitFailed("degenerate abscissae".into()));
    }
    let slope = (nf * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / nf;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let var = if n > 2 { ss_res / (n - 2) as f64 } else { 0.0 };
    Ok(LinearFit {
        slope,
        intercept,
        slope_err: (var * nf / denom).sqrt(),
        intercept_err: (var * sxx / denom).sqrt(),
    })
}

/// Contrast of a population fringe P(phi) = B + (C/2) cos(phi + delta)
/// sampled at the given phases: returns C, from a linear regression onto
/// {1, cos, sin} (works for any phase grid with at least 3 distinct
/// points).
pub fn fringe_contrast(phases: &[f64], ys: &[f64]) -> Result<f64> {
    let n = phases.len();
    if n < 3 || ys.len() != n {
        return Err(Error::FitFailed("need at least 3 fringe points".into()));
    }
    let mut design = DMatrix::<f64>::zeros(n, 3);
    for k in 0..n {
        design[(k, 0)] = 1.0;
        design[(k, 1)] = phases[k].cos();
        design[(k, 2)] = phases[k].sin();
    }
    let rhs = DVector::from_column_slice(ys);
    let normal = design.transpose() * &design;
    let proj = design.transpose() * rhs;
    let coef = normal
        .lu()
        .solve(&proj)
        .ok_or_else(|| Error::FitFailed("degenerate phase grid".into()))?;
    Ok(2.0 * (coef[1] * coef[1] + coef[2] * coef[2]).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::seeded_rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::{Binomial, Distribution};

    #[test]
    fn exact_decay_points_are_recovered() {
        let ms: Vec<f64> = [1, 3, 6, 10, 16, 25, 40, 60].iter().map(|&m| m as f64).collect();
        let ys: Vec<f64> = ms.iter().map(|m| 0.9 * 0.99f64.powf(*m) + 0.1).collect();
        let sigmas = vec![1e-3; ms.len()];
        let fit = fit_exponential(&ms, &ys, &sigmas).unwrap();
        assert_abs_diff_eq!(fit.p, 0.99, epsilon = 1e-7);
        assert_abs_diff_eq!(fit.a, 0.9, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.b, 0.1, epsilon = 1e-6);
    }

    #[test]
    fn binomial_noise_stays_within_three_fit_sigmas() {
        let mut rng = seeded_rng(21);
        let shots = 10_000u64;
        let ms: Vec<f64> = [1, 5, 10, 20, 40, 80, 120].iter().map(|&m| m as f64).collect();
        let mut hits = 0;
        let trials = 10;
        for _ in 0..trials {
            let mut ys = Vec::new();
            let mut sigmas = Vec::new();
            for m in &ms {
                let p = 0.9 * 0.99f64.powf(*m) + 0.1;
                let k = Binomial::new(shots, p).unwrap().sample(&mut rng);
                let f = k as f64 / shots as f64;
                ys.push(f);
                sigmas.push((f.max(1e-4) * (1.0 - f).max(1e-4) / shots as f64).sqrt());
            }
            let fit = fit_exponential(&ms, &ys, &sigmas).unwrap();
            if (fit.p - 0.99).abs() < 3.0 * fit.p_err {
                hits += 1;
            }
        }
        assert!(hits >= 9, "only {hits}/{trials} fits covered the truth");
    }

    #[test]
    fn constant_survival_means_no_decay() {
        let ms = [1.0, 5.0, 9.0];
        let ys = [1.0, 1.0, 1.0];
        let fit = fit_exponential(&ms, &ys, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(fit.p, 1.0);
        let fixed = fit_exponential_fixed_offset(&ms, &ys, &[1.0, 1.0, 1.0], 0.25).unwrap();
        assert_eq!(fixed.p, 1.0);
        assert_abs_diff_eq!(fixed.a, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn pinned_offset_resolves_a_shallow_decay() {
        // over this depth the curve drops by barely 4%, which leaves the
        // free fit degenerate; the pinned asymptote keeps p identified
        let ms: Vec<f64> = [1, 5, 10, 20, 40].iter().map(|&m| m as f64).collect();
        let truth = 0.9983f64;
        let ys: Vec<f64> = ms.iter().map(|m| (2.0 / 3.0) * truth.powf(*m) + 1.0 / 3.0).collect();
        let sigmas = vec![1e-3; ms.len()];
        let fit = fit_exponential_fixed_offset(&ms, &ys, &sigmas, 1.0 / 3.0).unwrap();
        assert_abs_diff_eq!(fit.p, truth, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.a, 2.0 / 3.0, epsilon = 1e-7);
        assert_eq!(fit.b_err, 0.0);
    }

    #[test]
    fn line_fit_recovers_exact_coefficients() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| -0.5 * x + 2.0).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert_abs_diff_eq!(fit.slope, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.slope_err, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn fringe_contrast_reads_the_cosine_amplitude() {
        let mut rng = seeded_rng(31);
        for _ in 0..5 {
            let c: f64 = rng.random_range(0.1..1.0);
            let delta: f64 = rng.random_range(-3.0..3.0);
            let b: f64 = rng.random_range(0.3..0.7);
            let phases: Vec<f64> = (0..8)
                .map(|k| 2.0 * std::f64::consts::PI * k as f64 / 8.0)
                .collect();
            let ys: Vec<f64> = phases.iter().map(|&p| b + 0.5 * c * (p + delta).cos()).collect();
            let got = fringe_contrast(&phases, &ys).unwrap();
            assert_abs_diff_eq!(got, c, epsilon = 1e-10);
        }
    }
}
