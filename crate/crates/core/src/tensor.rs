//! Band-limited symmetric tensor fields on the flat unit 2-torus.
//!
//! A symmetric `m`-tensor in two dimensions is fixed by the `m + 1` values
//! `T_r` = component with `r` indices equal to 1 and `m − r` equal to 0, so
//! each Fourier mode stores `m + 1` complex numbers. All operators act mode by
//! mode and are exact up to rounding.
//!
//! Conventions: `(Dθ)̂(k) = σ(2πi k ⊗ θ̂(k))` and `D*` is the exact adjoint
//! of `D` for the pairing `⟨A, B⟩ = Σ_k Σ_I Â_I(k) conj(B̂_I(k))`, which forces
//! `(D*T)̂(k)_J = −2πi Σ_j k_j T̂(k)_{jJ}`.

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::gcd;

/// Highest tensor order stored.
pub const MAX_ORDER: usize = 3;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymTensorField {
    order: usize,
    band: i64,
    /// Mode-major, `order + 1` reduced components per mode.
    coeffs: Vec<Complex64>,
}

impl SymTensorField {
    pub fn zeros(order: usize, band: i64) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(Error::InvalidArgument(format!("tensor order {order} exceeds {MAX_ORDER}")));
        }
        if band < 0 {
            return Err(Error::InvalidArgument(format!("band limit must be >= 0, got {band}")));
        }
        let side = (2 * band + 1) as usize;
        Ok(Self {
            order,
            band,
            coeffs: vec![Complex64::new(0.0, 0.0); side * side * (order + 1)],
        })
    }

    /// Constant field with reduced components `T_0, …, T_m`.
    pub fn constant(components: &[f64], band: i64) -> Result<Self> {
        let order = components.len().checked_sub(1).ok_or_else(|| Error::InvalidArgument("no components".into()))?;
        let mut f = Self::zeros(order, band)?;
        let c: Vec<Complex64> = components.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        f.set_mode([0, 0], &c)?;
        Ok(f)
    }

    /// Random real field with standard complex normal coefficients on every mode.
    pub fn random<R: Rng + ?Sized>(order: usize, band: i64, rng: &mut R) -> Result<Self> {
        let mut f = Self::zeros(order, band)?;
        for k in f.modes() {
            if !is_representative(k) {
                continue;
            }
            let c: Vec<Complex64> = (0..=order)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = if k == [0, 0] { 0.0 } else { rng.sample(StandardNormal) };
                    Complex64::new(re, im)
                })
                .collect();
            f.set_mode(k, &c)?;
        }
        Ok(f)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn band(&self) -> i64 {
        self.band
    }

    /// All frequencies in storage order.
    pub fn modes(&self) -> Vec<[i64; 2]> {
        let b = self.band;
        (-b..=b).flat_map(|k0| (-b..=b).map(move |k1| [k0, k1])).collect()
    }

    fn index(&self, k: [i64; 2]) -> Option<usize> {
        let b = self.band;
        if k[0].abs() > b || k[1].abs() > b {
            return None;
        }
        let side = 2 * b + 1;
        Some(((k[0] + b) * side + (k[1] + b)) as usize * (self.order + 1))
    }

    /// Reduced components at `k` (zeros outside the band).
    pub fn mode(&self, k: [i64; 2]) -> Vec<Complex64> {
        match self.index(k) {
            Some(i) => self.coeffs[i..i + self.order + 1].to_vec(),
            None => vec![Complex64::new(0.0, 0.0); self.order + 1],
        }
    }

    fn mode_slice_mut(&mut self, k: [i64; 2]) -> &mut [Complex64] {
        let i = self.index(k).expect("mode inside band");
        let m = self.order + 1;
        &mut self.coeffs[i..i + m]
    }

    /// Sets the coefficient at `k` and its conjugate at `−k`, keeping the field real.
    pub fn set_mode(&mut self, k: [i64; 2], components: &[Complex64]) -> Result<()> {
        if components.len() != self.order + 1 {
            return Err(Error::InvalidArgument(format!(
                "order {} tensor needs {} components, got {}",
                self.order,
                self.order + 1,
                components.len()
            )));
        }
        if self.index(k).is_none() {
            return Err(Error::InvalidArgument(format!("mode {k:?} outside band {}", self.band)));
        }
        if k == [0, 0] && components.iter().any(|c| c.im != 0.0) {
            return Err(Error::InvalidArgument("zero mode of a real field must be real".into()));
        }
        self.mode_slice_mut(k).copy_from_slice(components);
        let conj: Vec<Complex64> = components.iter().map(|c| c.conj()).collect();
        self.mode_slice_mut([-k[0], -k[1]]).copy_from_slice(&conj);
        Ok(())
    }

    fn map_modes(&self, order: usize, f: impl Fn([i64; 2], &[Complex64]) -> Vec<Complex64>) -> Result<Self> {
        let mut out = Self::zeros(order, self.band)?;
        for k in self.modes() {
            let v = f(k, &self.mode(k));
            out.mode_slice_mut(k).copy_from_slice(&v);
        }
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
            ..self.clone()
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
            ..self.clone()
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(-1.0))
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.order != other.order || self.band != other.band {
            return Err(Error::InvalidArgument(format!(
                "fields differ: order {} band {} vs order {} band {}",
                self.order, self.band, other.order, other.band
            )));
        }
        Ok(())
    }

    /// `⟨A, B⟩ = Σ_k Σ_I Â_I(k) conj(B̂_I(k))` over full index tuples `I`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.check_compatible(other)?;
        let m = self.order + 1;
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, b) in self.coeffs.chunks_exact(m).zip(other.coeffs.chunks_exact(m)) {
            for r in 0..m {
                acc += a[r] * b[r].conj() * binom(self.order, r);
            }
        }
        Ok(acc)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).map(|z| z.re.max(0.0).sqrt()).unwrap_or(0.0)
    }

    /// The field translated by `a`: `T_a(x) = T(x − a)`.
    pub fn translated(&self, a: [f64; 2]) -> Self {
        self.map_modes(self.order, |k, c| {
            let phase = Complex64::from_polar(1.0, -TWO_PI * (k[0] as f64 * a[0] + k[1] as f64 * a[1]));
            c.iter().map(|z| z * phase).collect()
        })
        .expect("same shape")
    }

    /// `Σ_k T̂(k)(v, …, v) e^{2πik·x}` continued to complex points `x`. The
    /// `±k` terms are paired so the value is exactly real at real points,
    /// which makes complex-step differentiation exact.
    pub fn evaluate_complex(&self, x: [Complex64; 2], v: [f64; 2]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in self.modes() {
            if !is_representative(k) {
                continue;
            }
            let z = contract(&self.mode(k), v);
            if k == [0, 0] {
                acc += z;
                continue;
            }
            let theta = (x[0] * k[0] as f64 + x[1] * k[1] as f64) * TWO_PI;
            // z e^{iθ} + conj(z) e^{-iθ} with θ = a + ib.
            let w = z * Complex64::from_polar(1.0, theta.re);
            acc += Complex64::new(2.0 * w.re * theta.im.cosh(), -2.0 * w.im * theta.im.sinh());
        }
        acc
    }
}

/// `T(v, …, v)` from reduced components.
fn contract(c: &[Complex64], v: [f64; 2]) -> Complex64 {
    let m = c.len() - 1;
    c.iter()
        .enumerate()
        .map(|(r, t)| t * (binom(m, r) * v[0].powi((m - r) as i32) * v[1].powi(r as i32)))
        .sum()
}

/// One of each `{k, −k}` pair, plus the zero mode.
fn is_representative(k: [i64; 2]) -> bool {
    k[0] > 0 || (k[0] == 0 && k[1] >= 0)
}

fn check_unit(v: [f64; 2]) -> Result<()> {
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("direction must be a unit vector, |v| = {n}")));
    }
    Ok(())
}

/// `π_m^* f(x, v) = f(x; v, …, v)`.
pub fn pi_star(f: &SymTensorField, x: [f64; 2], v: [f64; 2]) -> Result<f64> {
    check_unit(v)?;
    Ok(f.evaluate_complex([Complex64::new(x[0], 0.0), Complex64::new(x[1], 0.0)], v).re)
}

/// Symmetrized derivative `D = σ ∘ ∇`.
pub fn symmetrized_derivative(theta: &SymTensorField) -> Result<SymTensorField> {
    let m = theta.order;
    if m + 1 > MAX_ORDER {
        return Err(Error::InvalidArgument(format!(
            "derivative of an order {m} field needs order {} storage, limit is {MAX_ORDER}",
            m + 1
        )));
    }
    theta.map_modes(m + 1, |k, t| {
        let scale = Complex64::new(0.0, TWO_PI / (m + 1) as f64);
        (0..=m + 1)
            .map(|r| {
                let mut s = Complex64::new(0.0, 0.0);
                if r <= m {
                    s += t[r] * ((m + 1 - r) as f64 * k[0] as f64);
                }
                if r >= 1 {
                    s += t[r - 1] * (r as f64 * k[1] as f64);
                }
                s * scale
            })
            .collect()
    })
}

/// Divergence `D*`, the adjoint of [`symmetrized_derivative`].
pub fn divergence(t: &SymTensorField) -> Result<SymTensorField> {
    let m = t.order;
    if m == 0 {
        return Err(Error::InvalidArgument("divergence of a scalar field".into()));
    }
    t.map_modes(m - 1, |k, c| {
        let scale = Complex64::new(0.0, -TWO_PI);
        (0..m).map(|r| (c[r] * k[0] as f64 + c[r + 1] * k[1] as f64) * scale).collect()
    })
}

/// Splits an order-2 field as `T = T_s + Dθ` with `D*T_s = 0`.
pub fn solenoidal_decompose(t: &SymTensorField) -> Result<(SymTensorField, SymTensorField)> {
    if t.order != 2 {
        return Err(Error::InvalidArgument(format!("decomposition needs an order 2 field, got {}", t.order)));
    }
    let rhs = divergence(t)?;
    let mut theta = SymTensorField::zeros(1, t.band)?;
    for k in t.modes() {
        if k == [0, 0] {
            continue;
        }
        // D*D on one mode: 2π²(|k|² I + k kᵀ).
        let kv = Vector2::new(k[0] as f64, k[1] as f64);
        let m = (Matrix2::identity() * kv.norm_squared() + kv * kv.transpose()) * (TWO_PI * TWO_PI / 2.0);
        let inv = m.try_inverse().ok_or_else(|| Error::Domain(format!("singular mode system at {k:?}")))?;
        let b = rhs.mode(k);
        let sol: Vec<Complex64> = (0..2).map(|i| b[0] * inv[(i, 0)] + b[1] * inv[(i, 1)]).collect();
        theta.mode_slice_mut(k).copy_from_slice(&sol);
    }
    let ts = t.sub(&symmetrized_derivative(&theta)?)?;
    Ok((ts, theta))
}

/// A closed geodesic of the unit torus: direction `(p, q)` primitive,
/// traversed `winding` times from `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedGeodesic {
    pub p: i64,
    pub q: i64,
    pub winding: u32,
    pub offset: [f64; 2],
}

impl ClosedGeodesic {
    pub fn new(p: i64, q: i64, winding: u32, offset: [f64; 2]) -> Result<Self> {
        let g = Self { p, q, winding, offset };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if gcd(self.p, self.q) != 1 {
            return Err(Error::InvalidArgument(format!("direction ({}, {}) is not primitive", self.p, self.q)));
        }
        if self.winding == 0 {
            return Err(Error::InvalidArgument("winding must be >= 1".into()));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.winding as f64 * ((self.p * self.p + self.q * self.q) as f64).sqrt()
    }

    pub fn direction(&self) -> [f64; 2] {
        let n = ((self.p * self.p + self.q * self.q) as f64).sqrt();
        [self.p as f64 / n, self.q as f64 / n]
    }
}

/// Primitive directions up to sign with `|(p, q)| ≤ l_max`, by length.
/// Positive slopes come from a Stern–Brocot walk; the axes and the
/// reflections `(p, −q)` complete the list.
pub fn primitive_directions(l_max: f64) -> Vec<(i64, i64)> {
    let fits = |p: i64, q: i64| ((p * p + q * q) as f64) <= l_max * l_max * (1.0 + 1e-12);
    let mut out = Vec::new();
    if fits(1, 0) {
        out.push((1, 0));
        out.push((0, 1));
    }
    let mut stack = vec![((0i64, 1i64), (1i64, 0i64))];
    while let Some(((a, b), (c, d))) = stack.pop() {
        let (p, q) = (a + c, b + d);
        if !fits(p, q) {
            continue;
        }
        out.push((p, q));
        out.push((p, -q));
        stack.push(((a, b), (p, q)));
        stack.push(((p, q), (c, d)));
    }
    out.sort_by(|x, y| (x.0 * x.0 + x.1 * x.1).cmp(&(y.0 * y.0 + y.1 * y.1)).then(y.cmp(x)));
    out
}

/// Every closed geodesic through `offset` with length at most `l_max`.
pub fn enumerate_geodesics(l_max: f64, offset: [f64; 2]) -> Vec<ClosedGeodesic> {
    let mut out = Vec::new();
    for (p, q) in primitive_directions(l_max) {
        let base = ((p * p + q * q) as f64).sqrt();
        let max_w = (l_max / base * (1.0 + 1e-12)).floor() as u32;
        for w in 1..=max_w {
            out.push(ClosedGeodesic { p, q, winding: w, offset });
        }
    }
    out
}

/// `∫_γ T(γ̇, γ̇)` for each geodesic; only modes with `k·(p, q) = 0` survive.
pub fn xray_i2(t: &SymTensorField, geodesics: &[ClosedGeodesic]) -> Result<Vec<f64>> {
    if t.order != 2 {
        return Err(Error::InvalidArgument(format!("X-ray transform needs an order 2 field, got {}", t.order)));
    }
    for g in geodesics {
        g.validate()?;
    }
    Ok(geodesics
        .par_iter()
        .map(|g| {
            let v = g.direction();
            let mut acc = Complex64::new(0.0, 0.0);
            let b = t.band;
            // k = s (−q, p) for integer s.
            for s in -b..=b {
                let k = [-s * g.q, s * g.p];
                if t.index(k).is_none() {
                    continue;
                }
                let phase = Complex64::from_polar(1.0, TWO_PI * (k[0] as f64 * g.offset[0] + k[1] as f64 * g.offset[1]));
                acc += contract(&t.mode(k), v) * phase;
            }
            g.length() * acc.re
        })
        .collect())
}

/// Linearized length `Dℓ(γ)(h) = ½ I₂(h)_γ`.
pub fn length_differential(h: &SymTensorField, g: &ClosedGeodesic) -> Result<f64> {
    Ok(0.5 * xray_i2(h, std::slice::from_ref(g))?[0])
}

/// Real orthonormal basis of the band-limited solenoidal order-2 fields:
/// the three constants, then `cos` and `sin` of `2πk·x` times `k̂⊥ ⊗ k̂⊥`
/// for one `k` of each `±k` pair.
pub fn solenoidal_basis(band: i64) -> Result<Vec<SymTensorField>> {
    let mut out = Vec::new();
    let c = |x: f64| Complex64::new(x, 0.0);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for comps in [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, h, 0.0]] {
        out.push(SymTensorField::constant(&comps, band)?);
    }
    let probe = SymTensorField::zeros(2, band)?;
    for k in probe.modes() {
        if k == [0, 0] || !is_representative(k) {
            continue;
        }
        let n = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
        let perp = [-k[1] as f64 / n, k[0] as f64 / n];
        let u = [perp[0] * perp[0], perp[0] * perp[1], perp[1] * perp[1]];
        for phase in [c(0.5), Complex64::new(0.0, -0.5)] {
            let mut f = SymTensorField::zeros(2, band)?;
            let comps: Vec<Complex64> = u.iter().map(|x| phase * x).collect();
            f.set_mode(k, &comps)?;
            out.push(f);
        }
    }
    Ok(out)
}

/// Matrix of `I₂` on `basis` (columns) over `geodesics` (rows).
pub fn xray_matrix(basis: &[SymTensorField], geodesics: &[ClosedGeodesic]) -> Result<DMatrix<f64>> {
    let cols: Vec<Vec<f64>> = basis.iter().map(|f| xray_i2(f, geodesics)).collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(geodesics.len(), basis.len(), |i, j| cols[j][i]))
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelRankReport {
    pub band: i64,
    pub l_max: f64,
    pub solenoidal_dim: usize,
    pub geodesic_count: usize,
    pub rank: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Representative frequencies with no geodesic perpendicular to them.
    pub uncovered_modes: Vec<[i64; 2]>,
}

/// Relative singular value threshold for the numerical rank.
pub const RANK_TOL: f64 = 1e-10;

/// Probes injectivity of `I₂` on band-limited solenoidal fields using all
/// geodesics of length at most `l_max`, each at `2B + 1` offsets across the
/// direction so every frequency on its line is resolved.
pub fn xray_kernel_rank(band: i64, l_max: f64) -> Result<KernelRankReport> {
    let basis = solenoidal_basis(band)?;
    let mut geodesics = Vec::new();
    let shifts = (2 * band + 1) as f64;
    for g in enumerate_geodesics(l_max, [0.0, 0.0]) {
        let n2 = (g.p * g.p + g.q * g.q) as f64;
        for j in 0..2 * band + 1 {
            let s = j as f64 / shifts;
            geodesics.push(ClosedGeodesic {
                offset: [-(g.q as f64) * s / n2, g.p as f64 * s / n2],
                ..g
            });
        }
    }
    let directions = primitive_directions(l_max);
    let uncovered_modes: Vec<[i64; 2]> = basis[0]
        .modes()
        .into_iter()
        .filter(|&k| k != [0, 0] && is_representative(k))
        .filter(|k| !directions.iter().any(|&(p, q)| k[0] * p + k[1] * q == 0))
        .collect();
    let (rank, sigma_min, sigma_max) = if geodesics.is_empty() {
        (0, 0.0, 0.0)
    } else {
        let a = xray_matrix(&basis, &geodesics)?;
        let sv = a.svd(false, false).singular_values;
        let smax = sv.max();
        let rank = sv.iter().filter(|s| **s > RANK_TOL * smax).count();
        let smin = if geodesics.len() < basis.len() { 0.0 } else { sv.min() };
        (rank, smin, smax)
    };
    Ok(KernelRankReport {
        band,
        l_max,
        solenoidal_dim: basis.len(),
        geodesic_count: geodesics.len(),
        rank,
        sigma_min,
        sigma_max,
        uncovered_modes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn pi_star_on_constants() {
        let f = SymTensorField::constant(&[1.0, 0.0, 0.0], 1).unwrap();
        assert_eq!(pi_star(&f, [0.3, 0.4], [1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(pi_star(&f, [0.3, 0.4], [0.0, 1.0]).unwrap(), 0.0);
        assert!(pi_star(&f, [0.0, 0.0], [1.0, 1.0]).is_err());
    }

    #[test]
    fn pi_star_matches_direct_lattice_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = SymTensorField::random(2, 2, &mut rng).unwrap();
        let (x, v) = ([0.17, 0.61], [0.6, 0.8]);
        // Full-index contraction T_{ij} v_i v_j with T_{01} = T_{10} = T_1.
        let mut want = c(0.0);
        for k in f.modes() {
            let t = f.mode(k);
            let full = [[t[0], t[1]], [t[1], t[2]]];
            let mut s = c(0.0);
            for i in 0..2 {
                for j in 0..2 {
                    s += full[i][j] * v[i] * v[j];
                }
            }
            want += s * Complex64::from_polar(1.0, TWO_PI * (k[0] as f64 * x[0] + k[1] as f64 * x[1]));
        }
        assert!(want.im.abs() < 1e-12);
        assert!((pi_star(&f, x, v).unwrap() - want.re).abs() < 1e-12);
    }

    #[test]
    fn derivative_hand_values() {
        let mut theta = SymTensorField::zeros(1, 1).unwrap();
        theta.set_mode([0, 0], &[c(1.0), c(-2.0)]).unwrap();
        let d = symmetrized_derivative(&theta).unwrap();
        assert!(d.norm() == 0.0);
        let mut theta = SymTensorField::zeros(1, 1).unwrap();
        theta.set_mode([1, 0], &[c(1.0), c(0.0)]).unwrap();
        let d = symmetrized_derivative(&theta).unwrap();
        let got = d.mode([1, 0]);
        let want = [Complex64::new(0.0, TWO_PI), c(0.0), c(0.0)];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).norm() < 1e-14);
        }
        let twice = symmetrized_derivative(&theta.scaled(2.0)).unwrap();
        assert_eq!(twice, d.scaled(2.0));
    }

    #[test]
    fn divergence_is_adjoint_of_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for order in 0..MAX_ORDER {
            let theta = SymTensorField::random(order, 3, &mut rng).unwrap();
            let t = SymTensorField::random(order + 1, 3, &mut rng).unwrap();
            let lhs = symmetrized_derivative(&theta).unwrap().inner(&t).unwrap();
            let rhs = theta.inner(&divergence(&t).unwrap()).unwrap();
            assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn divergence_of_gradient_single_mode() {
        // D*Dθ = 2π²(|k|²θ + k(k·θ)) on one mode.
        let k = [1i64, 2];
        let a = [c(0.3), Complex64::new(-0.2, 0.5)];
        let mut theta = SymTensorField::zeros(1, 2).unwrap();
        theta.set_mode(k, &a).unwrap();
        let got = divergence(&symmetrized_derivative(&theta).unwrap()).unwrap().mode(k);
        let kk = 5.0;
        let kdot = a[0] * 1.0 + a[1] * 2.0;
        let pi2 = TWO_PI * TWO_PI / 2.0;
        let want = [(a[0] * kk + kdot * 1.0) * pi2, (a[1] * kk + kdot * 2.0) * pi2];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).norm() < 1e-12 * w.norm());
        }
        assert!(divergence(&SymTensorField::constant(&[1.0, 2.0, 3.0], 1).unwrap()).unwrap().norm() == 0.0);
        assert!(divergence(&SymTensorField::zeros(0, 1).unwrap()).is_err());
    }

    #[test]
    fn decomposition_recovers_potential_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut theta0 = SymTensorField::random(1, 3, &mut rng).unwrap();
        theta0.set_mode([0, 0], &[c(0.0), c(0.0)]).unwrap();
        let t = symmetrized_derivative(&theta0).unwrap();
        let (ts, theta) = solenoidal_decompose(&t).unwrap();
        assert!(theta.sub(&theta0).unwrap().norm() < 1e-10 * theta0.norm());
        assert!(ts.norm() < 1e-10 * t.norm());
    }

    #[test]
    fn decomposition_of_constant_is_trivial() {
        let t = SymTensorField::constant(&[1.0, 0.5, 2.0], 2).unwrap();
        let (ts, theta) = solenoidal_decompose(&t).unwrap();
        assert_eq!(theta.norm(), 0.0);
        assert_eq!(ts, t);
    }

    #[test]
    fn decomposition_residuals_and_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = SymTensorField::random(2, 3, &mut rng).unwrap();
        let (ts, theta) = solenoidal_decompose(&t).unwrap();
        let dtheta = symmetrized_derivative(&theta).unwrap();
        assert!(divergence(&ts).unwrap().norm() < 1e-10 * t.norm());
        assert!(ts.add(&dtheta).unwrap().sub(&t).unwrap().norm() < 1e-12 * t.norm());
        assert!(ts.inner(&dtheta).unwrap().norm() < 1e-12 * t.norm() * t.norm());
        let (_, again) = solenoidal_decompose(&ts).unwrap();
        assert!(again.norm() < 1e-12 * theta.norm());
    }

    #[test]
    fn xray_hand_values() {
        let t = SymTensorField::constant(&[1.0, 0.0, 0.0], 1).unwrap();
        let gx = ClosedGeodesic::new(1, 0, 1, [0.0, 0.0]).unwrap();
        let gy = ClosedGeodesic::new(0, 1, 1, [0.0, 0.0]).unwrap();
        let v = xray_i2(&t, &[gx, gy]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15);
        assert!(v[1].abs() < 1e-15);
        assert!(ClosedGeodesic::new(2, 4, 1, [0.0, 0.0]).is_err());
    }

    #[test]
    fn xray_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = SymTensorField::random(2, 2, &mut rng).unwrap();
        let g = ClosedGeodesic::new(2, -1, 2, [0.13, 0.71]).unwrap();
        let v = g.direction();
        // Trapezoid on a periodic integrand is exact for these frequencies.
        let n = 400;
        let h = g.length() / n as f64;
        let quad: f64 = (0..n)
            .map(|i| {
                let s = i as f64 * h;
                pi_star(&t, [g.offset[0] + s * v[0], g.offset[1] + s * v[1]], v).unwrap()
            })
            .sum::<f64>()
            * h;
        let closed = xray_i2(&t, &[g]).unwrap()[0];
        assert!((quad - closed).abs() < 1e-11 * quad.abs().max(1.0), "{quad} vs {closed}");
    }

    #[test]
    fn xray_kills_potential_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let gs = enumerate_geodesics(4.0, [0.37, 0.11]);
        for _ in 0..10 {
            let theta = SymTensorField::random(1, 3, &mut rng).unwrap();
            let vals = xray_i2(&symmetrized_derivative(&theta).unwrap(), &gs).unwrap();
            let worst = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(worst <= 1e-12 * theta.norm(), "{worst}");
        }
    }

    #[test]
    fn length_differential_of_metric() {
        let g = SymTensorField::constant(&[1.0, 0.0, 1.0], 0).unwrap();
        for geo in enumerate_geodesics(3.0, [0.2, 0.9]) {
            assert!((length_differential(&g, &geo).unwrap() - geo.length() / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn translation_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = SymTensorField::random(2, 3, &mut rng).unwrap();
        let a = [0.31, -0.47];
        let gs = enumerate_geodesics(3.0, [0.1, 0.2]);
        let moved: Vec<ClosedGeodesic> = gs
            .iter()
            .map(|g| ClosedGeodesic {
                offset: [g.offset[0] + a[0], g.offset[1] + a[1]],
                ..*g
            })
            .collect();
        let before = xray_i2(&t, &gs).unwrap();
        let after = xray_i2(&t.translated(a), &moved).unwrap();
        for (x, y) in before.iter().zip(&after) {
            assert!((x - y).abs() < 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn stern_brocot_directions() {
        let d = primitive_directions(5f64.sqrt());
        assert_eq!(d, vec![(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (2, -1), (1, 2), (1, -2)]);
        let gs = enumerate_geodesics(2.0, [0.0, 0.0]);
        assert_eq!(gs.iter().filter(|g| (g.p, g.q) == (1, 0)).count(), 2);
    }

    #[test]
    fn constants_are_determined_by_three_directions() {
        let basis = solenoidal_basis(0).unwrap();
        let gs: Vec<ClosedGeodesic> = [(1, 0), (0, 1), (1, 1)]
            .iter()
            .map(|&(p, q)| ClosedGeodesic::new(p, q, 1, [0.0, 0.0]).unwrap())
            .collect();
        let a = xray_matrix(&basis, &gs).unwrap();
        let sv = a.svd(false, false).singular_values;
        assert!(sv.min() > 0.1);
        let r = xray_kernel_rank(0, 1.5).unwrap();
        assert_eq!((r.solenoidal_dim, r.rank), (3, 3));
    }

    #[test]
    fn kernel_rank_probe_band_two() {
        let r = xray_kernel_rank(2, 6.0).unwrap();
        assert_eq!(r.solenoidal_dim, 3 + 2 * 12);
        assert!(r.uncovered_modes.is_empty());
        assert_eq!(r.rank, r.solenoidal_dim);
        let short = xray_kernel_rank(2, 1.0).unwrap();
        assert!(!short.uncovered_modes.is_empty());
    }

    #[test]
    fn geodesic_flow_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = SymTensorField::random(2, 2, &mut rng).unwrap();
        let df = symmetrized_derivative(&f).unwrap();
        let (x, v) = ([0.42, 0.07], [0.8, -0.6]);
        let h = 1e-20;
        let xs = [Complex64::new(x[0], h * v[0]), Complex64::new(x[1], h * v[1])];
        let complex_step = f.evaluate_complex(xs, v).im / h;
        let want = pi_star(&df, x, v).unwrap();
        assert!((complex_step - want).abs() < 1e-8 * want.abs().max(1.0));
    }
}
