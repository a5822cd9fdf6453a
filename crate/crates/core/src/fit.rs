//! Least-squares polynomial fits and the variance-vs-LO noise decomposition.
//!
//! The design matrix is built on `x / max|x|` and solved by Householder QR,
//! which keeps the quadratic fit well conditioned for LO photon numbers up
//! to ~1e9 where `x^2` would otherwise swamp the intercept column.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `y = a x^2 + b x + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Standard errors of `a`, `b`, `c`; NaN when there are no residual
    /// degrees of freedom (exactly three points).
    pub se_a: f64,
    pub se_b: f64,
    pub se_c: f64,
    /// `1 - SS_res / SS_tot`.
    pub r_squared: f64,
    pub n: usize,
}

impl QuadraticFit {
    pub fn eval(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }
}

/// `y = slope x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub se_slope: f64,
    pub se_intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

impl LinearFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

struct PolyFit {
    coeffs: Vec<f64>,
    std_errors: Vec<f64>,
    r_squared: f64,
}

fn distinct_count(xs: &[f64]) -> usize {
    let mut sorted: Vec<f64> = xs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.dedup();
    sorted.len()
}

/// Ascending-power least-squares polynomial of the given degree.
fn poly_fit(points: &[(f64, f64)], degree: usize) -> Result<PolyFit> {
    let p = degree + 1;
    let n = points.len();
    if n < p {
        return Err(Error::RankDeficient("fewer points than coefficients"));
    }
    if points.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::RankDeficient("non-finite data"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    if distinct_count(&xs) < p {
        return Err(Error::RankDeficient("too few distinct x values"));
    }
    let scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = if scale == 0.0 { 1.0 } else { scale };

    // column-major n x p design matrix on the scaled abscissa
    let mut a = vec![0.0; n * p];
    for (i, &x) in xs.iter().enumerate() {
        let u = x / scale;
        let mut pow = 1.0;
        for j in 0..p {
            a[j * n + i] = pow;
            pow *= u;
        }
    }
    let mut rhs: Vec<f64> = points.iter().map(|p| p.1).collect();

    // Householder QR, applying each reflector to the rhs as we go
    for k in 0..p {
        let norm = libm::sqrt((k..n).map(|i| a[k * n + i] * a[k * n + i]).sum::<f64>());
        if norm == 0.0 {
            return Err(Error::RankDeficient("singular design matrix"));
        }
        let alpha = if a[k * n + k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..n).map(|i| a[k * n + i]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..p {
                let dot: f64 = (k..n).map(|i| v[i - k] * a[j * n + i]).sum();
                let s = 2.0 * dot / vnorm2;
                for i in k..n {
                    a[j * n + i] -= s * v[i - k];
                }
            }
            let dot: f64 = (k..n).map(|i| v[i - k] * rhs[i]).sum();
            let s = 2.0 * dot / vnorm2;
            for i in k..n {
                rhs[i] -= s * v[i - k];
            }
        }
    }
    let r = |i: usize, j: usize| a[j * n + i];
    let max_diag = (0..p).fold(0.0f64, |m, k| m.max(r(k, k).abs()));
    if (0..p).any(|k| r(k, k).abs() <= max_diag * 1e-13) {
        return Err(Error::RankDeficient("ill-conditioned design matrix"));
    }

    // back substitution for the scaled coefficients
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s = rhs[i] - (i + 1..p).map(|j| r(i, j) * beta[j]).sum::<f64>();
        beta[i] = s / r(i, i);
    }

    // R^-1 (upper triangular) for the coefficient covariance
    let mut rinv = vec![0.0; p * p];
    for col in 0..p {
        for i in (0..=col).rev() {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for j in i + 1..=col {
                s -= r(i, j) * rinv[j * p + col];
            }
            rinv[i * p + col] = s / r(i, i);
        }
    }

    let coeffs: Vec<f64> = beta
        .iter()
        .enumerate()
        .map(|(k, b)| b / libm::pow(scale, k as f64))
        .collect();

    let eval = |x: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let ss_res: f64 = points.iter().map(|&(x, y)| (y - eval(x)) * (y - eval(x))).sum();
    let ss_tot: f64 = points.iter().map(|&(_, y)| (y - mean_y) * (y - mean_y)).sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };

    let dof = n - p;
    let std_errors = if dof == 0 {
        vec![f64::NAN; p]
    } else {
        let sigma2 = ss_res / dof as f64;
        (0..p)
            .map(|k| {
                // diag of (R^T R)^-1 = row norms of R^-1
                let var: f64 = (k..p).map(|j| rinv[k * p + j] * rinv[k * p + j]).sum();
                libm::sqrt(sigma2 * var) / libm::pow(scale, k as f64)
            })
            .collect()
    };

    Ok(PolyFit {
        coeffs,
        std_errors,
        r_squared,
    })
}

/// Least-squares quadratic through `points`; needs at least three distinct x.
pub fn fit_quadratic(points: &[(f64, f64)]) -> Result<QuadraticFit> {
    let fit = poly_fit(points, 2)?;
    Ok(QuadraticFit {
        a: fit.coeffs[2],
        b: fit.coeffs[1],
        c: fit.coeffs[0],
        se_a: fit.std_errors[2],
        se_b: fit.std_errors[1],
        se_c: fit.std_errors[0],
        r_squared: fit.r_squared,
        n: points.len(),
    })
}

/// Least-squares straight line through `points`; needs at least two distinct x.
pub fn fit_linear(points: &[(f64, f64)]) -> Result<LinearFit> {
    let fit = poly_fit(points, 1)?;
    Ok(LinearFit {
        slope: fit.coeffs[1],
        intercept: fit.coeffs[0],
        se_slope: fit.std_errors[1],
        se_intercept: fit.std_errors[0],
        r_squared: fit.r_squared,
        n: points.len(),
    })
}

/// Detector-noise coefficients recovered from a variance-vs-LO fit.
///
/// In shot-noise units `N_ele = c_ele / I_LO` and `N_LO = c_lo * I_LO`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseDecomposition {
    pub c_ele: f64,
    pub c_lo: f64,
    /// First-order propagated standard errors (covariances ignored).
    pub c_ele_se: f64,
    pub c_lo_se: f64,
}

impl NoiseDecomposition {
    /// Shot-to-electronic ratio in dB at the given LO photon number.
    pub fn shot_to_electronic_db(&self, photons_per_pulse: f64) -> f64 {
        10.0 * libm::log10(photons_per_pulse / self.c_ele)
    }
}

/// Split a variance fit into electronic (`c/b`) and LO-fluctuation (`a/b`) terms.
pub fn decompose_noise(fit: &QuadraticFit) -> Result<NoiseDecomposition> {
    if !(fit.b > 0.0) {
        return Err(Error::InvalidParameter {
            name: "b",
            value: fit.b,
            reason: "shot-noise (linear) term must be positive",
        });
    }
    let b = fit.b;
    let prop = |num: f64, se_num: f64| {
        let t1 = se_num / b;
        let t2 = num * fit.se_b / (b * b);
        libm::sqrt(t1 * t1 + t2 * t2)
    };
    Ok(NoiseDecomposition {
        c_ele: fit.c / b,
        c_lo: fit.a / b,
        c_ele_se: prop(fit.c, fit.se_c),
        c_lo_se: prop(fit.a, fit.se_a),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn exact_parabola() {
        let pts: Vec<(f64, f64)> = [-2.0, -1.0, 0.0, 1.5, 4.0]
            .iter()
            .map(|&x| (x, 2.0 * x * x + 3.0 * x + 1.0))
            .collect();
        let f = fit_quadratic(&pts).unwrap();
        assert!(rel(f.a, 2.0) < 1e-12);
        assert!(rel(f.b, 3.0) < 1e-12);
        assert!(rel(f.c, 1.0) < 1e-12);
        assert_eq!(f.r_squared, 1.0);
    }

    #[test]
    fn realistic_scale_coefficients_recovered() {
        let pts: Vec<(f64, f64)> = (1..=10)
            .map(|k| {
                let x = k as f64 * 1e8;
                (x, 8.0e-20 * x * x + 7.0e-10 * x + 0.028)
            })
            .collect();
        let f = fit_quadratic(&pts).unwrap();
        assert!(rel(f.a, 8.0e-20) < 1e-9);
        assert!(rel(f.b, 7.0e-10) < 1e-9);
        assert!(rel(f.c, 0.028) < 1e-9);
    }

    #[test]
    fn rank_deficient_inputs() {
        assert!(fit_quadratic(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_quadratic(&[(1.0, 1.0), (1.0, 2.0), (2.0, 2.0), (2.0, 3.0)]).is_err());
        assert!(fit_linear(&[(1.0, 1.0), (1.0, 2.0)]).is_err());
        assert!(fit_quadratic(&[(0.0, 1.0), (1.0, f64::NAN), (2.0, 3.0)]).is_err());
    }

    #[test]
    fn three_points_have_no_standard_errors() {
        let f = fit_quadratic(&[(0.0, 1.0), (1.0, 2.0), (2.0, 5.0)]).unwrap();
        assert!(f.se_a.is_nan());
        assert!(rel(f.a, 1.0) < 1e-12);
    }

    #[test]
    fn linear_fit_matches_closed_form() {
        let pts = [(1.0, 2.1), (2.0, 3.9), (3.0, 6.2), (4.0, 7.8)];
        let f = fit_linear(&pts).unwrap();
        // closed-form simple regression
        let n = 4.0;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let intercept = (sy - slope * sx) / n;
        assert!(rel(f.slope, slope) < 1e-12);
        assert!(rel(f.intercept, intercept) < 1e-12);
        let res: f64 = pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
        let se_slope = (res / (n - 2.0) / (sxx - sx * sx / n)).sqrt();
        assert!(rel(f.se_slope, se_slope) < 1e-10);
    }

    #[test]
    fn decompose_reference_coefficients() {
        let f = QuadraticFit {
            a: 8.0e-20,
            b: 7.0e-10,
            c: 0.028,
            se_a: 0.0,
            se_b: 0.0,
            se_c: 0.0,
            r_squared: 0.999,
            n: 10,
        };
        let d = decompose_noise(&f).unwrap();
        assert!(rel(d.c_ele, 4.0e7) < 1e-12);
        assert!(rel(d.c_lo, 1.142_857_142_857_142_8e-10) < 1e-12);
        assert!((d.shot_to_electronic_db(8.5e8) - 13.273_589_343_863_3).abs() < 1e-9);
    }

    #[test]
    fn decompose_edge_cases() {
        let base = QuadraticFit {
            a: 0.0,
            b: 1.0,
            c: 0.0,
            se_a: 0.0,
            se_b: 0.0,
            se_c: 0.0,
            r_squared: 1.0,
            n: 5,
        };
        let d = decompose_noise(&base).unwrap();
        assert_eq!(d.c_lo, 0.0);
        assert_eq!(d.c_ele, 0.0);
        assert!(decompose_noise(&QuadraticFit { b: 0.0, ..base }).is_err());
        assert!(decompose_noise(&QuadraticFit { b: -1.0, ..base }).is_err());
    }
}
