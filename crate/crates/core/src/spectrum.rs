//! Laplace spectra of the model geometries.
//!
//! Every backend produces an [`EigenSystem`]: the ascending list of distinct
//! eigenvalues with explicit multiplicities, plus enough metadata (dimension,
//! volume, basis) for the downstream trace, determinant and sampling code.
//! The flat torus and round sphere have closed forms; the periodic grid is a
//! finite-difference model diagonalized numerically; external spectra are
//! read from a two-column text file.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{fmt_f64, gamma_half_dim_plus_one, pairwise_sum};

/// Default cap on the number of grid points for the numeric backend.
pub const DEFAULT_GRID_LIMIT: usize = 4096;

/// Relative tolerance used to group numerically computed grid eigenvalues.
pub const GRID_GROUPING_TOL: f64 = 1e-9;

/// Relative tolerance used to merge torus lattice values.
const LATTICE_MERGE_TOL: f64 = 1e-12;

/// One distinct eigenvalue and its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub value: f64,
    pub mult: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Basis {
    TorusFourier { lengths: Vec<f64> },
    SphereHarmonic { k_max: usize },
    GridNumeric { dims: Vec<usize>, spacing: f64 },
    ExternalList,
}

impl Basis {
    pub fn tag(&self) -> &'static str {
        match self {
            Basis::TorusFourier { .. } => "torus-Fourier",
            Basis::SphereHarmonic { .. } => "sphere-harmonic",
            Basis::GridNumeric { .. } => "grid-numeric",
            Basis::ExternalList => "external-list",
        }
    }
}

/// Laplace spectrum of a closed model manifold. Immutable after construction.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    dim: usize,
    volume: f64,
    levels: Vec<Level>,
    basis: Basis,
    cutoff: f64,
    /// Columns are orthonormal eigenvectors in ascending eigenvalue order,
    /// one per mode (multiplicities expanded). Grid backend only.
    grid_eigenvectors: Option<DMatrix<f64>>,
}

impl EigenSystem {
    /// Builds a spectrum from explicit levels, checking the structural invariants.
    pub fn from_levels(dim: usize, volume: f64, levels: Vec<Level>, basis: Basis) -> Result<Self> {
        if !(1..=4).contains(&dim) {
            return Err(Error::InvalidArgument(format!("dimension {dim} outside 1..=4")));
        }
        if !(volume > 0.0) || !volume.is_finite() {
            return Err(Error::InvalidArgument(format!("volume must be positive, got {volume}")));
        }
        match levels.first() {
            Some(Level { value, mult: 1 }) if *value == 0.0 => {}
            _ => {
                return Err(Error::InvalidArgument(
                    "first eigenvalue must be 0 with multiplicity 1".into(),
                ))
            }
        }
        for w in levels.windows(2) {
            if !(w[1].value > w[0].value) {
                return Err(Error::InvalidArgument(format!(
                    "eigenvalues must increase: {} then {}",
                    w[0].value, w[1].value
                )));
            }
        }
        if levels.iter().any(|l| l.mult == 0 || !l.value.is_finite()) {
            return Err(Error::InvalidArgument("zero multiplicity or non-finite eigenvalue".into()));
        }
        let count: usize = levels.iter().map(|l| l.mult).sum();
        if count < 2 {
            return Err(Error::InvalidArgument("spectrum needs at least two modes".into()));
        }
        let cutoff = levels.last().map(|l| l.value).unwrap_or(0.0);
        Ok(Self {
            dim,
            volume,
            levels,
            basis,
            cutoff,
            grid_eigenvectors: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Levels with nonzero eigenvalue (the zero mode is always the first level).
    pub fn nonzero_levels(&self) -> &[Level] {
        &self.levels[1..]
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    /// Largest eigenvalue the spectrum is guaranteed to be complete up to.
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn grid_eigenvectors(&self) -> Option<&DMatrix<f64>> {
        self.grid_eigenvectors.as_ref()
    }

    /// Number of modes counted with multiplicity, zero mode included.
    pub fn mode_count(&self) -> usize {
        self.levels.iter().map(|l| l.mult).sum()
    }

    pub fn first_nonzero(&self) -> f64 {
        self.levels[1].value
    }

    /// Eigenvalues with multiplicities expanded.
    pub fn expanded(&self) -> Vec<f64> {
        self.levels
            .iter()
            .flat_map(|l| std::iter::repeat_n(l.value, l.mult))
            .collect()
    }

    /// Weyl constant `C` in `N(Λ) ~ C Λ^{d/2}`.
    pub fn weyl_constant(&self) -> f64 {
        let d = self.dim as f64;
        self.volume / ((4.0 * PI).powf(d / 2.0) * gamma_half_dim_plus_one(self.dim))
    }

    /// Eigenvalue counting function, multiplicities included.
    pub fn counting(&self, lambda: f64) -> usize {
        self.levels
            .iter()
            .take_while(|l| l.value <= lambda)
            .map(|l| l.mult)
            .sum()
    }

    /// Same geometry restricted to eigenvalues `<= cutoff`.
    pub fn truncated(&self, cutoff: f64) -> Result<Self> {
        if self.grid_eigenvectors.is_some() {
            return Err(Error::Unsupported("truncating a grid spectrum".into()));
        }
        let levels: Vec<Level> = self.levels.iter().copied().filter(|l| l.value <= cutoff).collect();
        let mut out = Self::from_levels(self.dim, self.volume, levels, self.basis.clone())?;
        out.cutoff = cutoff.min(self.cutoff);
        Ok(out)
    }

    /// Text form: one `value count` pair per line.
    pub fn to_spectrum_text(&self) -> String {
        let mut s = String::new();
        for l in &self.levels {
            let _ = writeln!(s, "{} {}", fmt_f64(l.value), l.mult);
        }
        s
    }
}

/// Description of which model spectrum to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpectrumSpec {
    Torus { lengths: Vec<f64>, cutoff: f64 },
    Sphere { k_max: usize },
    Grid {
        dims: Vec<usize>,
        spacing: f64,
        #[serde(default = "default_grid_limit")]
        max_points: usize,
    },
    External { path: std::path::PathBuf, dim: usize, volume: f64 },
}

fn default_grid_limit() -> usize {
    DEFAULT_GRID_LIMIT
}

impl SpectrumSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self {
            SpectrumSpec::Torus { lengths, cutoff } => {
                if lengths.is_empty() || lengths.len() > 4 {
                    return bad(format!("geometry.lengths: need 1..=4 entries, got {}", lengths.len()));
                }
                if lengths.iter().any(|l| !(*l > 0.0)) {
                    return bad("geometry.lengths: all lengths must be positive".into());
                }
                if !(*cutoff > 0.0) {
                    return bad("geometry.cutoff: must be positive".into());
                }
            }
            SpectrumSpec::Sphere { k_max } => {
                if *k_max < 1 {
                    return bad("geometry.k_max: must be >= 1".into());
                }
            }
            SpectrumSpec::Grid { dims, spacing, .. } => {
                if dims.is_empty() || dims.len() > 3 || dims.contains(&0) {
                    return bad("geometry.dims: need 1..=3 positive entries".into());
                }
                if !(*spacing > 0.0) {
                    return bad("geometry.spacing: must be positive".into());
                }
            }
            SpectrumSpec::External { dim, volume, .. } => {
                if !(1..=4).contains(dim) {
                    return bad("geometry.dim: must be in 1..=4".into());
                }
                if !(*volume > 0.0) {
                    return bad("geometry.volume: must be positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<EigenSystem> {
        match self {
            SpectrumSpec::Torus { lengths, cutoff } => torus_spectrum(lengths, *cutoff),
            SpectrumSpec::Sphere { k_max } => sphere_spectrum(*k_max),
            SpectrumSpec::Grid { dims, spacing, max_points } => {
                grid_laplacian_spectrum_with_limit(dims, *spacing, *max_points)
            }
            SpectrumSpec::External { path, dim, volume } => load_spectrum(path, *dim, *volume),
        }
    }
}

/// Flat torus `R^d / (L_1 Z × … × L_d Z)`: eigenvalues `4π² Σ (m_i/L_i)²`.
pub fn torus_spectrum(lengths: &[f64], cutoff: f64) -> Result<EigenSystem> {
    let d = lengths.len();
    if !(1..=4).contains(&d) {
        return Err(Error::InvalidArgument(format!("torus dimension {d} outside 1..=4")));
    }
    if lengths.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidArgument("torus side lengths must be positive".into()));
    }
    if !(cutoff > 0.0) {
        return Err(Error::InvalidArgument("cutoff must be positive".into()));
    }
    let l_max = lengths.iter().cloned().fold(0.0, f64::max);
    let gap = 4.0 * PI * PI / (l_max * l_max);
    if cutoff < gap {
        return Err(Error::CutoffBelowGap { cutoff, gap });
    }

    // Work in units of 4π² so that integer lattices stay exact.
    let u_max = cutoff / (4.0 * PI * PI) * (1.0 + LATTICE_MERGE_TOL);
    let mut acc: Vec<(f64, usize)> = vec![(0.0, 1)];
    for &len in lengths {
        let axis = axis_values(len, u_max);
        let mut next = Vec::with_capacity(acc.len() * axis.len());
        for &(a, ca) in &acc {
            for &(b, cb) in &axis {
                let v = a + b;
                if v <= u_max {
                    next.push((v, ca * cb));
                } else {
                    break;
                }
            }
        }
        acc = merge_sorted_values(next);
    }
    let levels = acc
        .into_iter()
        .map(|(u, mult)| Level {
            value: 4.0 * PI * PI * u,
            mult,
        })
        .collect();
    let volume = lengths.iter().product();
    let mut sys = EigenSystem::from_levels(
        d,
        volume,
        levels,
        Basis::TorusFourier {
            lengths: lengths.to_vec(),
        },
    )?;
    sys.cutoff = cutoff.max(sys.cutoff);
    Ok(sys)
}

/// `(m/L)²` for `m ≥ 0` with the ± multiplicity folded in, ascending.
fn axis_values(len: f64, u_max: f64) -> Vec<(f64, usize)> {
    let m_max = (len * u_max.sqrt()).floor() as i64 + 1;
    let mut out = vec![(0.0, 1)];
    for m in 1..=m_max {
        let u = (m as f64 / len).powi(2);
        if u <= u_max {
            out.push((u, 2));
        }
    }
    out
}

fn merge_sorted_values(mut values: Vec<(f64, usize)>) -> Vec<(f64, usize)> {
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for (v, c) in values {
        match out.last_mut() {
            Some(last) if (v - last.0).abs() <= LATTICE_MERGE_TOL * v.abs().max(1.0) => last.1 += c,
            _ => out.push((v, c)),
        }
    }
    out
}

/// Integer frequency tuples of the torus with eigenvalue `<= cutoff`,
/// ordered by eigenvalue and then lexicographically. The zero mode comes first.
pub fn torus_modes(lengths: &[f64], cutoff: f64) -> Vec<(Vec<i64>, f64)> {
    let u_max = cutoff / (4.0 * PI * PI) * (1.0 + LATTICE_MERGE_TOL);
    let mut modes: Vec<(Vec<i64>, f64)> = vec![(Vec::new(), 0.0)];
    for &len in lengths {
        let m_max = (len * u_max.sqrt()).floor() as i64;
        let mut next = Vec::new();
        for (tuple, u) in &modes {
            for m in -m_max..=m_max {
                let v = u + (m as f64 / len).powi(2);
                if v <= u_max {
                    let mut t = tuple.clone();
                    t.push(m);
                    next.push((t, v));
                }
            }
        }
        modes = next;
    }
    modes.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    modes
        .into_iter()
        .map(|(t, u)| (t, 4.0 * PI * PI * u))
        .collect()
}

/// Unit round sphere: `k(k+1)` with multiplicity `2k+1`, `k = 0..=k_max`.
pub fn sphere_spectrum(k_max: usize) -> Result<EigenSystem> {
    if k_max < 1 {
        return Err(Error::InvalidArgument("sphere spectrum needs k_max >= 1".into()));
    }
    let levels = (0..=k_max)
        .map(|k| Level {
            value: (k * (k + 1)) as f64,
            mult: 2 * k + 1,
        })
        .collect();
    EigenSystem::from_levels(2, 4.0 * PI, levels, Basis::SphereHarmonic { k_max })
}

pub fn grid_laplacian_spectrum(dims: &[usize], spacing: f64) -> Result<EigenSystem> {
    grid_laplacian_spectrum_with_limit(dims, spacing, DEFAULT_GRID_LIMIT)
}

/// Periodic second-order finite-difference Laplacian on a `n_1 × … × n_d`
/// grid with spacing `h`, diagonalized densely.
pub fn grid_laplacian_spectrum_with_limit(
    dims: &[usize],
    spacing: f64,
    max_points: usize,
) -> Result<EigenSystem> {
    let matrix = grid_laplacian_matrix(dims, spacing, max_points)?;
    let n = matrix.nrows();
    let eig = SymmetricEigen::new(matrix);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);

    let scale = sorted.last().copied().unwrap_or(1.0).abs().max(f64::MIN_POSITIVE);
    let mut levels: Vec<Level> = Vec::new();
    let mut group: Vec<f64> = Vec::new();
    let flush = |group: &mut Vec<f64>, levels: &mut Vec<Level>| {
        if group.is_empty() {
            return;
        }
        let mean = pairwise_sum(group) / group.len() as f64;
        let value = if mean.abs() <= GRID_GROUPING_TOL * scale { 0.0 } else { mean };
        levels.push(Level {
            value,
            mult: group.len(),
        });
        group.clear();
    };
    for &v in &sorted {
        if let Some(&first) = group.first() {
            let same = (v - first).abs() <= GRID_GROUPING_TOL * first.abs().max(GRID_GROUPING_TOL * scale);
            if !same {
                flush(&mut group, &mut levels);
            }
        }
        group.push(v);
    }
    flush(&mut group, &mut levels);

    let volume = n as f64 * spacing.powi(dims.len() as i32);
    let mut sys = EigenSystem::from_levels(
        dims.len(),
        volume,
        levels,
        Basis::GridNumeric {
            dims: dims.to_vec(),
            spacing,
        },
    )?;
    sys.grid_eigenvectors = Some(vectors);
    Ok(sys)
}

/// Assembles the (positive semi-definite) periodic finite-difference Laplacian.
pub fn grid_laplacian_matrix(dims: &[usize], spacing: f64, max_points: usize) -> Result<DMatrix<f64>> {
    if dims.is_empty() || dims.len() > 3 {
        return Err(Error::InvalidArgument(format!(
            "grid dimension {} outside 1..=3",
            dims.len()
        )));
    }
    if !(spacing > 0.0) {
        return Err(Error::InvalidArgument("grid spacing must be positive".into()));
    }
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .unwrap_or(usize::MAX);
    if n > max_points {
        return Err(Error::GridTooLarge {
            points: n,
            limit: max_points,
        });
    }
    if n < 2 {
        return Err(Error::InvalidArgument("grid needs at least two points".into()));
    }
    let inv_h2 = 1.0 / (spacing * spacing);
    let mut strides = vec![1usize; dims.len()];
    for a in (0..dims.len().saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * dims[a + 1];
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for idx in 0..n {
        for (axis, &len) in dims.iter().enumerate() {
            if len < 2 {
                continue;
            }
            let coord = (idx / strides[axis]) % len;
            let base = idx - coord * strides[axis];
            let up = base + ((coord + 1) % len) * strides[axis];
            let down = base + ((coord + len - 1) % len) * strides[axis];
            m[(idx, idx)] += 2.0 * inv_h2;
            m[(idx, up)] -= inv_h2;
            m[(idx, down)] -= inv_h2;
        }
    }
    Ok(m)
}

/// Reads a spectrum file: one `value count` pair per line, values
/// non-decreasing. Blank lines and `#` comments are ignored; repeated values
/// are merged.
pub fn load_spectrum(path: &Path, dim: usize, volume: f64) -> Result<EigenSystem> {
    let text = std::fs::read_to_string(path)?;
    let levels = parse_spectrum_text(&text).map_err(|(line, message)| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    })?;
    EigenSystem::from_levels(dim, volume, levels, Basis::ExternalList)
}

pub fn parse_spectrum_text(text: &str) -> std::result::Result<Vec<Level>, (usize, String)> {
    let mut levels: Vec<Level> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(v), Some(c), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err((line_no, "expected `value count`".into()));
        };
        let value: f64 = v.parse().map_err(|_| (line_no, format!("bad value `{v}`")))?;
        let mult: usize = c.parse().map_err(|_| (line_no, format!("bad count `{c}`")))?;
        if !value.is_finite() || value < 0.0 {
            return Err((line_no, format!("eigenvalue {value} must be finite and non-negative")));
        }
        if mult == 0 {
            return Err((line_no, "count must be positive".into()));
        }
        match levels.last_mut() {
            Some(last) if value < last.value => {
                return Err((line_no, format!("values must be non-decreasing ({value} < {})", last.value)))
            }
            Some(last) if value == last.value => last.mult += mult,
            _ => levels.push(Level { value, mult }),
        }
    }
    Ok(levels)
}

/// Weyl-law estimate of `Σ_{λ>Λ} λ^{-n}`:
/// `∫_Λ^∞ t^{-n} dN(t)` with `N(t) = C t^{d/2}`, i.e. `C (d/2) Λ^{d/2-n} / (n - d/2)`.
pub fn weyl_tail(sys: &EigenSystem, cutoff: f64, n: u32) -> Result<f64> {
    let half = sys.dim as f64 / 2.0;
    if f64::from(n) <= half {
        return Err(Error::TraceDivergent { n, half_dim: half });
    }
    if !(cutoff > 0.0) {
        return Err(Error::InvalidArgument("tail cutoff must be positive".into()));
    }
    let expo = half - f64::from(n);
    Ok(sys.weyl_constant() * half * cutoff.powf(expo) / -expo)
}
