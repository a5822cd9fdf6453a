//! One-dimensional maximization: coarse grid bracketing followed by
//! golden-section refinement.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Where the maximum of a bracketed search landed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    /// Objective evaluations spent (grid plus refinement).
    pub evaluations: usize,
    /// Set when the grid maximum sits on an end of the range, i.e. the
    /// objective looks monotone there and no interior optimum was refined.
    pub boundary: Option<Boundary>,
}

/// Grid spacing for [`maximize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

/// Golden-section search for a maximum of a unimodal `f` on `[lo, hi]`,
/// stopping once the bracket is narrower than `tol`.
pub fn golden_section_max<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<Maximum>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidRange("golden-section bracket must satisfy lo < hi"));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidRange("tolerance must be positive"));
    }
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut evaluations = 2;
    while (b - a) > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
        evaluations += 1;
    }
    let (x, value) = if fc >= fd { (c, fc) } else { (d, fd) };
    Ok(Maximum {
        x,
        value,
        evaluations,
        boundary: None,
    })
}

/// Evenly spaced grid of `n` points over `[lo, hi]`, linear or logarithmic.
pub fn grid(lo: f64, hi: f64, n: usize, spacing: Spacing) -> Result<alloc::vec::Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidRange("grid needs at least one point"));
    }
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidRange("grid bounds must satisfy lo <= hi"));
    }
    if spacing == Spacing::Log && !(lo > 0.0) {
        return Err(Error::InvalidRange("log grid needs positive bounds"));
    }
    if n == 1 {
        return Ok(alloc::vec![lo]);
    }
    let step = |i: usize| i as f64 / (n - 1) as f64;
    Ok(match spacing {
        Spacing::Linear => (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * step(i) })
            .collect(),
        Spacing::Log => {
            let (l, h) = (libm::log(lo), libm::log(hi));
            (0..n)
                .map(|i| match i {
                    0 => lo,
                    _ if i == n - 1 => hi,
                    _ => libm::exp(l + (h - l) * step(i)),
                })
                .collect()
        }
    })
}

/// Maximize `f` on `[lo, hi]`: evaluate a `n_grid`-point grid, then refine
/// the best interior bracket by golden section to relative tolerance `rel_tol`
/// in `x`. A grid maximum on either end is returned as-is with `boundary` set.
pub fn maximize<F>(mut f: F, lo: f64, hi: f64, n_grid: usize, spacing: Spacing, rel_tol: f64) -> Result<Maximum>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) {
        return Err(Error::InvalidRange("empty or inverted range"));
    }
    if n_grid < 3 {
        return Err(Error::InvalidRange("bracketing grid needs at least 3 points"));
    }
    let xs = grid(lo, hi, n_grid, spacing)?;
    let mut values = alloc::vec::Vec::with_capacity(n_grid);
    for &x in &xs {
        values.push(f(x)?);
    }
    let best = values
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > values[best] { i } else { best });
    if best == 0 || best == n_grid - 1 {
        return Ok(Maximum {
            x: xs[best],
            value: values[best],
            evaluations: n_grid,
            boundary: Some(if best == 0 { Boundary::Lower } else { Boundary::Upper }),
        });
    }
    let (a, b) = (xs[best - 1], xs[best + 1]);
    let refined = match spacing {
        Spacing::Linear => {
            let tol = rel_tol * xs[best].abs().max(f64::MIN_POSITIVE);
            golden_section_max(&mut f, a, b, tol)?
        }
        Spacing::Log => {
            let m = golden_section_max(|u| f(libm::exp(u)), libm::log(a), libm::log(b), rel_tol)?;
            Maximum { x: libm::exp(m.x), ..m }
        }
    };
    // never return something worse than the grid point itself
    let (x, value) = if refined.value >= values[best] {
        (refined.x, refined.value)
    } else {
        (xs[best], values[best])
    };
    Ok(Maximum {
        x,
        value,
        evaluations: n_grid + refined.evaluations,
        boundary: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_vertex() {
        let m = golden_section_max(|x| Ok(-(x - 1.234) * (x - 1.234)), -5.0, 5.0, 1e-9).unwrap();
        assert!((m.x - 1.234).abs() < 1e-8);
    }

    #[test]
    fn maximize_log_spaced() {
        // peak at x = 3e7 on a log axis
        let f = |x: f64| Ok(-(libm::log(x) - libm::log(3e7)).powi(2));
        let m = maximize(f, 1e6, 1e10, 50, Spacing::Log, 1e-6).unwrap();
        assert!(((m.x - 3e7) / 3e7).abs() < 1e-5);
        assert!(m.boundary.is_none());
    }

    #[test]
    fn monotone_objective_reports_boundary() {
        let up = maximize(Ok, 1.0, 2.0, 10, Spacing::Linear, 1e-6).unwrap();
        assert_eq!(up.boundary, Some(Boundary::Upper));
        assert_eq!(up.x, 2.0);
        let down = maximize(|x| Ok(-x), 1.0, 2.0, 10, Spacing::Log, 1e-6).unwrap();
        assert_eq!(down.boundary, Some(Boundary::Lower));
        assert_eq!(down.x, 1.0);
    }

    #[test]
    fn invalid_ranges() {
        assert!(maximize(Ok, 2.0, 1.0, 10, Spacing::Linear, 1e-6).is_err());
        assert!(maximize(Ok, 0.0, 1.0, 10, Spacing::Log, 1e-6).is_err());
        assert!(golden_section_max(Ok, 1.0, 1.0, 1e-3).is_err());
        assert!(grid(1.0, 2.0, 0, Spacing::Linear).is_err());
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = grid(1e7, 1e10, 7, Spacing::Log).unwrap();
        assert_eq!(g[0], 1e7);
        assert_eq!(g[6], 1e10);
        assert!((g[1] / 1e7 - 10f64.sqrt()).abs() < 1e-12);
    }
}
