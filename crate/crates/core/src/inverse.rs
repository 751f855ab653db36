//! Inverse read-outs: Laplace eigenvalues from determinant zeros, volume and
//! total scalar curvature from heat-trace coefficients, and closed-geodesic
//! lengths from peaks of the smoothed wave trace.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::determinant::log_det_gk_eigs;
use crate::error::{Error, Result};
use crate::numeric::{least_squares, pairwise_sum, pairwise_sum_complex};
use crate::operator::{green_potential_operator, PotentialSpec};
use crate::spectrum::EigenSystem;

/// Default number of scan points for [`recover_spectrum`].
pub const DEFAULT_SCAN_POINTS: usize = 20_000;

/// Fitted exponents further than this from an integer flag a merged zero.
pub const MERGE_EXPONENT_TOL: f64 = 0.25;

/// `z ↦ log|det_p(I + zA)|` on the real axis for `A = Δ⁻¹V`, with `p = 2`
/// below dimension four and `p = 3` in dimension four. Working with the log
/// keeps large truncations from overflowing.
pub fn log_abs_det_fn(sys: &EigenSystem, v: &PotentialSpec) -> Result<impl Fn(f64) -> f64 + Sync> {
    let op = green_potential_operator(sys, v, 0.0)?;
    let eigs = op.eigenvalues();
    let p = if sys.dim() >= 4 { 3 } else { 2 };
    Ok(move |z: f64| {
        log_det_gk_eigs(&eigs, p, Complex64::new(z, 0.0))
            .expect("order in range")
            .re
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveredZero {
    /// Location on the negative real axis.
    pub zero: f64,
    /// `-zero`, the eigenvalue estimate when `V = 1`.
    pub value: f64,
    pub multiplicity: usize,
    /// Raw fitted vanishing order.
    pub exponent: f64,
    /// Scan cell the zero was bracketed in.
    pub bracket: (f64, f64),
    /// Distance of the fitted exponent from the nearest integer.
    pub residual: f64,
    /// Set when the fit suggests two or more zeros closer than the scan
    /// resolution; the multiplicity is then the combined order.
    pub merged: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RecoveredSpectrum {
    /// Sorted by increasing distance from the origin.
    pub zeros: Vec<RecoveredZero>,
}

impl RecoveredSpectrum {
    pub fn levels(&self) -> Vec<(f64, usize)> {
        self.zeros.iter().map(|z| (z.value, z.multiplicity)).collect()
    }

    pub fn any_merged(&self) -> bool {
        self.zeros.iter().any(|z| z.merged)
    }
}

/// Locates zeros of a determinant on `[lo, hi] ⊂ (−∞, 0]` from its log
/// modulus `log_abs`, nearest to the origin first, up to `max_count`.
pub fn recover_spectrum(log_abs: &(dyn Fn(f64) -> f64 + Sync), lo: f64, hi: f64, max_count: usize) -> Result<RecoveredSpectrum> {
    recover_spectrum_with(log_abs, lo, hi, max_count, DEFAULT_SCAN_POINTS)
}

pub fn recover_spectrum_with(
    log_abs: &(dyn Fn(f64) -> f64 + Sync),
    lo: f64,
    hi: f64,
    max_count: usize,
    scan_points: usize,
) -> Result<RecoveredSpectrum> {
    if !(lo < hi) || hi > 0.0 || !lo.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "search interval [{lo}, {hi}] must be a nonempty part of the negative axis"
        )));
    }
    if scan_points < 3 {
        return Err(Error::InvalidArgument("need at least 3 scan points".into()));
    }
    // Scan from the origin outwards.
    let step = (hi - lo) / (scan_points - 1) as f64;
    let xs: Vec<f64> = (0..scan_points).map(|i| hi - step * i as f64).collect();
    let fs: Vec<f64> = xs.par_iter().map(|&x| log_abs(x)).collect();

    let mut zeros: Vec<RecoveredZero> = Vec::new();
    for i in 1..scan_points - 1 {
        if zeros.len() == max_count {
            break;
        }
        if !(fs[i] <= fs[i - 1] && fs[i] <= fs[i + 1]) || fs[i - 1] == fs[i] && fs[i] == fs[i + 1] {
            continue;
        }
        let (a, b) = (xs[i + 1], xs[i - 1]);
        let zero = if fs[i] == f64::NEG_INFINITY { xs[i] } else { golden_min(log_abs, a, b) };
        let exponent = vanishing_order(log_abs, zero)?;
        let rounded = exponent.round().max(1.0);
        let residual = (exponent - rounded).abs();
        let merged = residual > MERGE_EXPONENT_TOL;
        if let Some(prev) = zeros.last_mut() {
            if (prev.zero - zero).abs() <= step {
                prev.merged = true;
                prev.multiplicity += rounded as usize;
                continue;
            }
        }
        zeros.push(RecoveredZero {
            zero,
            value: -zero,
            multiplicity: rounded as usize,
            exponent,
            bracket: (a, b),
            residual,
            merged,
        });
    }
    Ok(RecoveredSpectrum { zeros })
}

fn golden_min(f: &(dyn Fn(f64) -> f64 + Sync), mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > 1e-13 * a.abs().max(b.abs()) {
        if fc == f64::NEG_INFINITY {
            return c;
        }
        if fd == f64::NEG_INFINITY {
            return d;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Slope of `log|f|` against `log|z − z₀|` for `|z − z₀| ∈ [1e-6, 1e-4]·|z₀|`,
/// averaged over both sides.
fn vanishing_order(f: &(dyn Fn(f64) -> f64 + Sync), z0: f64) -> Result<f64> {
    let scale = z0.abs().max(f64::MIN_POSITIVE);
    let logs: Vec<f64> = (0..9).map(|j| (-6.0 + 0.25 * j as f64) * std::f64::consts::LN_10).collect();
    let mut slopes = Vec::with_capacity(2);
    for side in [-1.0, 1.0] {
        let y: Vec<f64> = logs.iter().map(|l| f(z0 + side * scale * l.exp())).collect();
        let ld: Vec<f64> = logs.iter().map(|l| l + scale.ln()).collect();
        let fit = least_squares(&[vec![1.0; ld.len()], ld], &y)?;
        slopes.push(fit.coefficients[1]);
    }
    Ok(0.5 * (slopes[0] + slopes[1]))
}

/// `Tr e^{-tΔ}` over the retained spectrum, zero mode included.
pub fn heat_trace(sys: &EigenSystem, t: f64) -> f64 {
    let terms: Vec<f64> = sys.levels().iter().map(|l| l.mult as f64 * (-t * l.value).exp()).collect();
    pairwise_sum(&terms)
}

/// Smallest admissible `t·Λ` for heat fits: below it the truncated trace
/// misses a visible part of the sum.
pub const HEAT_WINDOW_MIN_T_CUTOFF: f64 = 30.0;

const HEAT_FIT_POINTS: usize = 48;

#[derive(Debug, Clone, Serialize)]
pub struct HeatCoefficients {
    pub a0: f64,
    pub a1: f64,
    /// `3 a1 / (2π)`, only in dimension two.
    pub euler_char: Option<f64>,
    /// Total scalar curvature `6 a1`.
    pub s_eh: f64,
    pub rms_residual: f64,
    pub window: (f64, f64),
}

/// Window recommended for [`heat_coefficients_fit`] at the system's cutoff.
pub fn suggested_heat_window(sys: &EigenSystem) -> (f64, f64) {
    let t_min = HEAT_WINDOW_MIN_T_CUTOFF / sys.cutoff();
    (t_min, 0.015f64.max(4.0 * t_min))
}

/// Fits `(4πt)^{d/2} Tr e^{-tΔ} ≈ a0 + a1 t` on log-spaced points of the window.
pub fn heat_coefficients_fit(sys: &EigenSystem, window: (f64, f64)) -> Result<HeatCoefficients> {
    let (t_min, t_max) = window;
    let suggest = suggested_heat_window(sys);
    let hint = format!("try t in [{:.3e}, {:.3e}] or raise the cutoff", suggest.0, suggest.1);
    if !(t_min > 0.0) || !(t_max > 1.5 * t_min) || !t_max.is_finite() || t_min * sys.cutoff() < HEAT_WINDOW_MIN_T_CUTOFF * (1.0 - 1e-12) {
        return Err(Error::IllConditionedWindow { t_min, t_max, hint });
    }
    let half = sys.dim() as f64 / 2.0;
    let ratio = (t_max / t_min).ln();
    let ts: Vec<f64> = (0..HEAT_FIT_POINTS)
        .map(|i| t_min * (ratio * i as f64 / (HEAT_FIT_POINTS - 1) as f64).exp())
        .collect();
    let y: Vec<f64> = ts
        .par_iter()
        .map(|&t| (4.0 * std::f64::consts::PI * t).powf(half) * heat_trace(sys, t))
        .collect();
    let fit = least_squares(&[vec![1.0; ts.len()], ts], &y).map_err(|_| Error::IllConditionedWindow {
        t_min,
        t_max,
        hint: hint.clone(),
    })?;
    let (a0, a1) = (fit.coefficients[0], fit.coefficients[1]);
    Ok(HeatCoefficients {
        a0,
        a1,
        euler_char: (sys.dim() == 2).then(|| 3.0 * a1 / (2.0 * std::f64::consts::PI)),
        s_eh: 6.0 * a1,
        rms_residual: fit.rms_residual,
        window,
    })
}

/// Smoothed wave trace on a time grid.
#[derive(Debug, Clone, Serialize)]
pub struct WaveTraceCurve {
    pub t: Vec<f64>,
    /// `W(t) = 2 Re Σ mult e^{it√λ} w(λ)`.
    pub values: Vec<f64>,
    /// `2 |Σ mult e^{it√λ} w(λ)|`, the modulus peaks are detected on.
    pub envelope: Vec<f64>,
    /// Width of the Gaussian window `w(λ) = exp(−λ / (2σ_w²))` in frequency `√λ`.
    pub sigma_w: f64,
    pub cutoff: f64,
}

/// Window width used when none is configured: the cutoff frequency sits
/// three widths out.
pub fn default_window_width(cutoff: f64) -> f64 {
    cutoff.sqrt() / 3.0
}

/// `n` evenly spaced points from `t0` to `t1` inclusive.
pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![t0];
    }
    (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect()
}

pub fn wave_trace(sys: &EigenSystem, t_grid: &[f64], sigma_w: f64) -> Result<WaveTraceCurve> {
    if !(sigma_w > 0.0) || !sigma_w.is_finite() {
        return Err(Error::InvalidArgument(format!("window width must be positive, got {sigma_w}")));
    }
    if t_grid.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument("wave trace times must be positive".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("wave trace grid must be strictly increasing".into()));
    }
    let modes: Vec<(f64, f64)> = sys
        .nonzero_levels()
        .iter()
        .map(|l| (l.value.sqrt(), l.mult as f64 * (-l.value / (2.0 * sigma_w * sigma_w)).exp()))
        .collect();
    let sums: Vec<Complex64> = t_grid
        .par_iter()
        .map(|&t| {
            let terms: Vec<Complex64> = modes.iter().map(|&(k, w)| Complex64::from_polar(w, t * k)).collect();
            pairwise_sum_complex(&terms)
        })
        .collect();
    Ok(WaveTraceCurve {
        t: t_grid.to_vec(),
        values: sums.iter().map(|s| 2.0 * s.re).collect(),
        envelope: sums.iter().map(|s| 2.0 * s.norm()).collect(),
        sigma_w,
        cutoff: sys.cutoff(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub t_peak: f64,
    pub height: f64,
    pub prominence: f64,
    /// Full width at half maximum.
    pub width: f64,
}

/// Local maxima of the envelope whose prominence is at least
/// `threshold · max(envelope)`, refined by a parabola through the three
/// grid points around each maximum. Sorted by position.
pub fn detect_lengths(curve: &WaveTraceCurve, threshold: f64) -> Result<Vec<Peak>> {
    let (t, y) = (&curve.t, &curve.envelope);
    if t.is_empty() {
        return Err(Error::InvalidArgument("empty wave trace grid".into()));
    }
    let top = y.iter().fold(0.0f64, |m, v| m.max(*v));
    let mut peaks = Vec::new();
    for i in 1..y.len().saturating_sub(1) {
        if !(y[i] > y[i - 1] && y[i] >= y[i + 1]) {
            continue;
        }
        let prominence = y[i] - left_base(y, i).max(right_base(y, i));
        if prominence < threshold * top {
            continue;
        }
        let (t_peak, height) = parabola_vertex((t[i - 1], y[i - 1]), (t[i], y[i]), (t[i + 1], y[i + 1]));
        peaks.push(Peak {
            t_peak,
            height,
            prominence,
            width: half_max_width(t, y, i, height),
        });
    }
    Ok(peaks)
}

fn left_base(y: &[f64], i: usize) -> f64 {
    let mut lo = y[i];
    for j in (0..i).rev() {
        if y[j] > y[i] {
            break;
        }
        lo = lo.min(y[j]);
    }
    lo
}

fn right_base(y: &[f64], i: usize) -> f64 {
    let mut lo = y[i];
    for &v in &y[i + 1..] {
        if v > y[i] {
            break;
        }
        lo = lo.min(v);
    }
    lo
}

fn parabola_vertex((x0, y0): (f64, f64), (x1, y1): (f64, f64), (x2, y2): (f64, f64)) -> (f64, f64) {
    let d0 = (y1 - y0) / (x1 - x0);
    let d1 = (y2 - y1) / (x2 - x1);
    let a = (d1 - d0) / (x2 - x0);
    if a >= 0.0 {
        return (x1, y1);
    }
    let b = d0 - a * (x0 + x1);
    let xv = (-b / (2.0 * a)).clamp(x0, x2);
    let c = y1 - a * x1 * x1 - b * x1;
    (xv, a * xv * xv + b * xv + c)
}

fn half_max_width(t: &[f64], y: &[f64], i: usize, height: f64) -> f64 {
    let half = 0.5 * height;
    let cross = |j: usize, k: usize| t[j] + (half - y[j]) * (t[k] - t[j]) / (y[k] - y[j]);
    let mut left = t[0];
    for j in (0..i).rev() {
        if y[j] < half {
            left = cross(j, j + 1);
            break;
        }
    }
    let mut right = t[t.len() - 1];
    for j in i + 1..y.len() {
        if y[j] < half {
            right = cross(j - 1, j);
            break;
        }
    }
    right - left
}
