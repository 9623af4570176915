//! Least-squares fits used by the scaling diagnostics.

use nalgebra::{DMatrix, DVector};

/// Result of a straight-line fit `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// Half-width of the 95% confidence interval for the slope.
    pub slope_ci95: f64,
    pub n: usize,
}

/// Ordinary least squares line through `(x, y)`.
pub fn line(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    assert!(n >= 2, "need at least two points");
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (stderr, ci) = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(xi, yi)| (yi - intercept - slope * xi).powi(2))
            .sum();
        let se = (rss / (nf - 2.0) / sxx).sqrt();
        (se, se * t_quantile_975(n - 2))
    } else {
        (0.0, 0.0)
    };
    LineFit {
        slope,
        intercept,
        slope_stderr: stderr,
        slope_ci95: ci,
        n,
    }
}

/// Slope of `log|y|` against `log x`.
pub fn loglog(x: &[f64], y: &[f64]) -> LineFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    line(&lx, &ly)
}

/// Linear least squares `y ≈ Σ c_j φ_j(x)` for the given basis.
pub fn basis(x: &[f64], y: &[f64], phis: &[&dyn Fn(f64) -> f64]) -> Vec<f64> {
    let a = DMatrix::from_fn(x.len(), phis.len(), |i, j| phis[j](x[i]));
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-14)
        .expect("svd solve")
        .iter()
        .copied()
        .collect()
}

/// Two-sided 95% Student-t quantile.
pub fn t_quantile_975(dof: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179,
        2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
        2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    match dof {
        0 => f64::INFINITY,
        d if d <= 30 => TABLE[d - 1],
        d if d <= 60 => 2.042 - (d as f64 - 30.0) * (2.042 - 2.000) / 30.0,
        d if d <= 120 => 2.000 - (d as f64 - 60.0) * (2.000 - 1.980) / 60.0,
        _ => 1.960,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 3.0 * v).collect();
        let f = line(&x, &y);
        assert!((f.slope + 3.0).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-13);
        assert!(f.slope_ci95 < 1e-12);
    }

    #[test]
    fn power_law() {
        let x: Vec<f64> = (1..10).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| 5.0 * v.powf(1.5)).collect();
        assert!((loglog(&x, &y).slope - 1.5).abs() < 1e-12);
    }

    #[test]
    fn two_term_basis() {
        let x: Vec<f64> = (1..20).map(|i| i as f64 * 0.01).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(2.0 / 3.0) - v.powf(4.0 / 3.0)).collect();
        let c = basis(&x, &y, &[&|v: f64| v.powf(2.0 / 3.0), &|v: f64| v.powf(4.0 / 3.0)]);
        assert!((c[0] - 3.0).abs() < 1e-10 && (c[1] + 1.0).abs() < 1e-9);
    }
}
