//! Least-squares fits used by the reports.

use serde::Serialize;

/// Slope and intercept of the least-squares line through `(x, y)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Slope of `ln y` against `ln x`; `None` if any value is not positive.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).map(|(s, _)| s)
}

/// Exponential envelope `Y(t) ~ exp(a + C t)` of a positive series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeFit {
    /// fitted growth rate
    pub c_hat: f64,
    pub intercept: f64,
    /// `max |Y - fit| / Y`
    pub max_rel_residual: f64,
    /// smallest `C >= 0` with `Y(t) <= exp(C t) (Y(0) + 1)` on the samples
    pub bound_rate: f64,
}

impl EnvelopeFit {
    pub fn within(&self, tol: f64) -> bool {
        self.c_hat.is_finite() && self.max_rel_residual <= tol
    }
}

pub fn envelope_fit(t: &[f64], y: &[f64]) -> Option<EnvelopeFit> {
    if y.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (c_hat, intercept) = linear_fit(t, &ly)?;
    let max_rel_residual = t
        .iter()
        .zip(y)
        .map(|(&ti, &yi)| ((intercept + c_hat * ti).exp() - yi).abs() / yi)
        .fold(0.0, f64::max);
    let y0 = y[0] + 1.0;
    let bound_rate = t
        .iter()
        .zip(y)
        .filter(|(ti, _)| **ti > t[0])
        .map(|(&ti, &yi)| (yi / y0).ln() / (ti - t[0]))
        .fold(0.0, f64::max);
    Some(EnvelopeFit {
        c_hat,
        intercept,
        max_rel_residual,
        bound_rate,
    })
}

/// Cumulative trapezoidal integral, starting at 0.
pub fn cumulative_trapezoid(t: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    for i in 0..t.len() {
        if i > 0 {
            acc += 0.5 * (t[i] - t[i - 1]) * (f[i] + f[i - 1]);
        }
        out.push(acc);
    }
    out
}

/// Linear-interpolation quantile of an unsorted sample, `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_power_law() {
        let x = [1e-2, 5e-3, 2.5e-3];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((loglog_slope(&x, &y).unwrap() - 1.5).abs() < 1e-12);
        assert!(loglog_slope(&x, &[1.0, 0.0, 1.0]).is_none());
        assert!(linear_fit(&[1.0, 1.0], &[2.0, 3.0]).is_none());
    }

    #[test]
    fn exponential_envelope() {
        let t: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = t.iter().map(|s| 2.0 * (0.7 * s).exp()).collect();
        let f = envelope_fit(&t, &y).unwrap();
        assert!((f.c_hat - 0.7).abs() < 1e-12 && f.max_rel_residual < 1e-12);
        assert!(f.within(0.05));
        assert!(envelope_fit(&t, &vec![0.0; 11]).is_none());
    }

    #[test]
    fn trapezoid_and_quantiles() {
        let t = [0.0, 1.0, 2.0];
        assert_eq!(cumulative_trapezoid(&t, &[0.0, 2.0, 4.0]), vec![0.0, 1.0, 4.0]);
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert!((quantile(&[0.0, 10.0], 0.9) - 9.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn quantile_is_monotone(v in proptest::collection::vec(-1e3f64..1e3, 1..30), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantile(&v, lo) <= quantile(&v, hi));
        }

        #[test]
        fn slope_recovers_rate(p in 0.1f64..3.0, c in 0.01f64..100.0) {
            let x = [0.1, 0.05, 0.025, 0.0125];
            let y: Vec<f64> = x.iter().map(|v: &f64| c * v.powf(p)).collect();
            prop_assert!((loglog_slope(&x, &y).unwrap() - p).abs() < 1e-9);
        }
    }
}
