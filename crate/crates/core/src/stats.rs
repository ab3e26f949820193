//! Small statistics helpers shared by the simulation reports.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Least-squares line fit `y = slope*x + intercept` with coefficient of
/// determination. Returns `None` below two points or for degenerate x.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Some((slope, intercept, r2))
}

/// Empirical quantile of a sorted sample (linear interpolation).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Exponential tail fit of a survival curve on a fixed survival window.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TailFit {
    /// Decay rate of the survival function (slope of -log S).
    pub rate: f64,
    /// Coefficient of determination of the log-linear fit.
    pub r2: f64,
    /// Number of points entering the fit.
    pub points: usize,
}

/// Fits `log S(t)` over the survival window `s_lo < S <= s_hi`.
pub fn fit_survival_tail(
    times: &[f64],
    survival: &[f64],
    s_lo: f64,
    s_hi: f64,
) -> Option<TailFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &s) in times.iter().zip(survival) {
        if s > s_lo && s <= s_hi {
            xs.push(t);
            ys.push(s.ln());
        }
    }
    let (slope, _, r2) = linear_fit(&xs, &ys)?;
    Some(TailFit { rate: -slope, r2, points: xs.len() })
}

/// Chi-square goodness of fit of observed counts against expected
/// probabilities. Zero-probability cells must hold zero counts and are
/// excluded from the statistic. Returns `(chi2, dof, p_value)`.
pub fn chi_square_gof(observed: &[u64], expected_probs: &[f64]) -> Option<(f64, usize, f64)> {
    assert_eq!(observed.len(), expected_probs.len());
    let n: u64 = observed.iter().sum();
    let mut chi2 = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        if p <= 0.0 {
            if o != 0 {
                return Some((f64::INFINITY, observed.len() - 1, 0.0));
            }
            continue;
        }
        let e = n as f64 * p;
        chi2 += (o as f64 - e) * (o as f64 - e) / e;
        cells += 1;
    }
    if cells < 2 {
        return None;
    }
    let dof = cells - 1;
    Some((chi2, dof, chi_square_p_value(chi2, dof)))
}

/// Chi-square homogeneity test of two count tables over the same categories.
/// Categories empty in both samples are dropped. Returns `(chi2, dof, p)`.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Option<(f64, usize, f64)> {
    assert_eq!(a.len(), b.len());
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 || nb == 0 {
        return None;
    }
    let total = (na + nb) as f64;
    let mut chi2 = 0.0;
    let mut cells = 0usize;
    for (&oa, &ob) in a.iter().zip(b) {
        let col = (oa + ob) as f64;
        if col == 0.0 {
            continue;
        }
        let ea = col * na as f64 / total;
        let eb = col * nb as f64 / total;
        chi2 += (oa as f64 - ea) * (oa as f64 - ea) / ea;
        chi2 += (ob as f64 - eb) * (ob as f64 - eb) / eb;
        cells += 1;
    }
    if cells < 2 {
        return None;
    }
    let dof = cells - 1;
    Some((chi2, dof, chi_square_p_value(chi2, dof)))
}

fn chi_square_p_value(chi2: f64, dof: usize) -> f64 {
    let dist = ChiSquared::new(dof as f64).expect("dof >= 1");
    1.0 - dist.cdf(chi2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_exact_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let (slope, intercept, r2) = linear_fit(&xs, &ys).unwrap();
        assert!((slope - 3.0).abs() < 1e-12);
        assert!((intercept + 1.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 4.0);
        assert!((quantile_sorted(&xs, 0.5) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn tail_fit_on_pure_exponential() {
        let times: Vec<f64> = (0..2000).map(|i| i as f64 * 0.01).collect();
        let survival: Vec<f64> = times.iter().map(|t| (-1.7 * t).exp()).collect();
        let fit = fit_survival_tail(&times, &survival, 0.01, 0.1).unwrap();
        assert!((fit.rate - 1.7).abs() < 1e-9);
        assert!(fit.r2 > 0.999999);
    }

    #[test]
    fn gof_detects_match_and_mismatch() {
        let (_, dof, p) = chi_square_gof(&[300, 700], &[0.3, 0.7]).unwrap();
        assert_eq!(dof, 1);
        assert!(p > 0.9);
        let (_, _, p_bad) = chi_square_gof(&[500, 500], &[0.3, 0.7]).unwrap();
        assert!(p_bad < 1e-6);
    }

    #[test]
    fn gof_rejects_mass_on_zero_cell() {
        let (chi2, _, p) = chi_square_gof(&[1, 999], &[0.0, 1.0]).unwrap();
        assert!(chi2.is_infinite());
        assert_eq!(p, 0.0);
    }

    #[test]
    fn homogeneity_of_identical_tables() {
        let (chi2, dof, p) = chi_square_homogeneity(&[100, 200, 0], &[100, 200, 0]).unwrap();
        assert!(chi2.abs() < 1e-12);
        assert_eq!(dof, 1);
        assert!(p > 0.999);
    }
}
