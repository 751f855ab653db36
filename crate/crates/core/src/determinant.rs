//! Gohberg–Krein regularized determinants `det_p(I + zA)`.
//!
//! Two independent routes are provided: the Weierstrass-type product over
//! the eigenvalues of `A`, valid for every `z`, and the exponential of the
//! trace series `Σ_{n≥p} (-1)^{n+1} z^n Tr(A^n)/n`, valid inside the disc
//! `|z| ρ(A) < 1`. The series route only ever touches `Tr(A^n)`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum_complex;
use crate::operator::TruncatedOperator;

/// Hard cap on the number of series terms.
pub const SERIES_MAX_TERMS: u32 = 500;

/// Series terms below this magnitude end the summation.
pub const SERIES_TERM_FLOOR: f64 = 1e-16;

fn check_order(p: u32) -> Result<()> {
    if (1..=3).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("determinant order p = {p} outside 1..=3")))
    }
}

/// `log[(1 + w) exp(Σ_{n=1}^{p-1} (-1)^n w^n / n)]` with the principal logarithm.
fn log_factor(w: Complex64, p: u32) -> Complex64 {
    if w.norm() <= 0.25 {
        // Direct remainder Σ_{n≥p} (-1)^{n+1} w^n / n; the closed form cancels badly here.
        let mut wn = Complex64::new(1.0, 0.0);
        for _ in 0..p {
            wn *= w;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        let mut n = p;
        loop {
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            let term = wn * (sign / f64::from(n));
            acc += term;
            if term.norm() <= 1e-18 * acc.norm() || n > 80 {
                return acc;
            }
            wn *= w;
            n += 1;
        }
    }
    let mut acc = (Complex64::new(1.0, 0.0) + w).ln();
    let mut wn = Complex64::new(1.0, 0.0);
    for n in 1..p {
        wn *= w;
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        acc += wn * (sign / f64::from(n));
    }
    acc
}

/// Sum of principal logarithms of the product factors. Its real part is
/// `log|det_p(I + zA)|`; use it where the determinant itself would overflow.
pub fn log_det_gk_eigs(eigs: &[(f64, usize)], p: u32, z: Complex64) -> Result<Complex64> {
    check_order(p)?;
    let terms: Vec<Complex64> = eigs
        .iter()
        .map(|&(mu, m)| log_factor(z * mu, p) * m as f64)
        .collect();
    Ok(pairwise_sum_complex(&terms))
}

/// Product route over explicit eigenvalues with multiplicities.
pub fn det_gk_eigs(eigs: &[(f64, usize)], p: u32, z: Complex64) -> Result<Complex64> {
    if eigs.iter().any(|&(mu, _)| (Complex64::new(1.0, 0.0) + z * mu).norm() == 0.0) {
        check_order(p)?;
        return Ok(Complex64::new(0.0, 0.0));
    }
    Ok(log_det_gk_eigs(eigs, p, z)?.exp())
}

/// `det_p(I + zA) = Π_k (1 + zμ_k) exp(Σ_{n=1}^{p-1} (-1)^n (zμ_k)^n / n)`.
pub fn det_gk_product(a: &TruncatedOperator, p: u32, z: Complex64) -> Result<Complex64> {
    check_order(p)?;
    det_gk_eigs(&a.eigenvalues(), p, z)
}

/// `det_p(I + zA) = exp(Σ_{n≥p} (-1)^{n+1} z^n Tr(A^n) / n)` inside `|z| ρ(A) < 1`.
pub fn det_gk_series(a: &TruncatedOperator, p: u32, z: Complex64) -> Result<Complex64> {
    check_order(p)?;
    let reach = z.norm() * a.spectral_radius();
    if reach >= 1.0 {
        return Err(Error::SeriesDivergent(reach));
    }
    Ok(trace_series(a.power_traces(), p, z).exp())
}

/// `Σ_{n≥p} (-1)^{n+1} z^n t_n / n` for a stream of traces `t_1, t_2, …`.
pub(crate) fn trace_series(traces: impl Iterator<Item = f64>, p: u32, z: Complex64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut zn = Complex64::new(1.0, 0.0);
    for (i, tr) in traces.enumerate().take(SERIES_MAX_TERMS as usize) {
        let n = i as u32 + 1;
        zn *= z;
        if n < p {
            continue;
        }
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        let term = zn * (sign * tr / f64::from(n));
        sum += term;
        if term.norm() < SERIES_TERM_FLOOR * sum.norm().max(1.0) {
            break;
        }
    }
    sum
}
