//! Small numerical helpers shared by the other modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

const PAIRWISE_BLOCK: usize = 32;

/// Pairwise (cascade) summation. The reduction tree only depends on the
/// slice length, so results are bit-stable regardless of how the inputs
/// were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn pairwise_sum_complex(xs: &[Complex64]) -> Complex64 {
    if xs.len() <= PAIRWISE_BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum_complex(&xs[..mid]) + pairwise_sum_complex(&xs[mid..])
}

/// Result of an ordinary least-squares fit.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    /// Root-mean-square of the residuals.
    pub rms_residual: f64,
    /// Standard errors of the coefficients (zero when the fit is exact or
    /// there are no spare degrees of freedom).
    pub std_errors: Vec<f64>,
}

/// Least squares for `y ≈ Σ_j c_j columns[j]`.
pub fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<LinearFit> {
    let rows = y.len();
    let cols = columns.len();
    if cols == 0 || rows < cols {
        return Err(Error::InvalidArgument(format!(
            "least squares needs at least as many points ({rows}) as unknowns ({cols})"
        )));
    }
    if columns.iter().any(|c| c.len() != rows) {
        return Err(Error::InvalidArgument("column length mismatch".into()));
    }
    // Column scaling keeps the normal matrix for mixed log/polynomial bases sane.
    let scales: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE))
        .collect();
    let a = DMatrix::from_fn(rows, cols, |i, j| columns[j][i] / scales[j]);
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 || svd.singular_values.min() <= 1e-13 * smax {
        return Err(Error::InvalidArgument("least squares design is rank deficient".into()));
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let resid = &b - &a * &x;
    let ss = resid.norm_squared();
    let rms_residual = (ss / rows as f64).sqrt();

    let dof = rows - cols;
    let std_errors = if dof == 0 {
        vec![0.0; cols]
    } else {
        let sigma2 = ss / dof as f64;
        let ata = a.transpose() * &a;
        match ata.try_inverse() {
            Some(inv) => (0..cols)
                .map(|j| (sigma2 * inv[(j, j)]).max(0.0).sqrt() / scales[j])
                .collect(),
            None => vec![f64::NAN; cols],
        }
    };
    let coefficients = x.iter().zip(&scales).map(|(v, s)| v / s).collect();
    Ok(LinearFit {
        coefficients,
        rms_residual,
        std_errors,
    })
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Γ(d/2 + 1) for the manifold dimensions we support.
pub fn gamma_half_dim_plus_one(dim: usize) -> f64 {
    let sqrt_pi = std::f64::consts::PI.sqrt();
    match dim {
        1 => 0.5 * sqrt_pi,
        2 => 1.0,
        3 => 0.75 * sqrt_pi,
        4 => 2.0,
        // Γ(x+1) = x Γ(x), continued from the table above.
        d => {
            let x = d as f64 / 2.0;
            x * gamma_half_dim_plus_one(d - 2)
        }
    }
}

/// Format a float with 17 significant digits, the output convention for
/// every CSV and spectrum file.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_exact_values() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn fits_a_line_exactly() {
        let t: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|x| 2.0 - 3.0 * x).collect();
        let fit = least_squares(&[vec![1.0; 10], t], &y).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((fit.coefficients[1] + 3.0).abs() < 1e-12);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn rank_deficient_design_is_rejected() {
        let y = vec![1.0, 2.0, 3.0];
        assert!(least_squares(&[vec![1.0; 3], vec![2.0; 3]], &y).is_err());
    }

    #[test]
    fn gamma_table() {
        assert!((gamma_half_dim_plus_one(3) - 1.329_340_388_179_137).abs() < 1e-14);
        assert_eq!(gamma_half_dim_plus_one(4), 2.0);
        assert_eq!(gcd(12, -18), 6);
    }
}
