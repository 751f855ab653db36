//! Finite-rank truncations of the smoothed Green–potential operator
//! `A_ε = e^{-2εΔ} Δ^{-1} V` in the Laplace eigenbasis.
//!
//! The zero mode is dropped when the operator is built: `Δ^{-1}` acts on the
//! orthogonal complement of constants, so traces over `L²₀` and `L²` agree by
//! construction.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::spectrum::{torus_modes, weyl_tail, Basis, EigenSystem};

/// Largest rank for which a dense operator is assembled.
pub const DENSE_RANK_LIMIT: usize = 4096;

/// Power sums over more entries than this are evaluated in parallel.
const PAR_THRESHOLD: usize = 1 << 14;

const HERMITIAN_TOL: f64 = 1e-12;

/// Multiplication potential `V`.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    Constant(f64),
    /// Fourier coefficients `V̂(k)` on the torus, `V(x) = Σ V̂(k) e^{2πi Σ k_i x_i / L_i}`.
    TorusFourier(BTreeMap<Vec<i64>, Complex64>),
    /// One real value per grid point (row-major, matching the grid backend).
    Grid(Vec<f64>),
}

impl PotentialSpec {
    /// Validated Fourier potential; coefficients must satisfy `V̂(-k) = conj V̂(k)`.
    pub fn torus_fourier(coeffs: BTreeMap<Vec<i64>, Complex64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument("Fourier potential has no modes".into()));
        }
        let d = coeffs.keys().next().map(Vec::len).unwrap_or(0);
        for (k, v) in &coeffs {
            if k.len() != d {
                return Err(Error::InvalidArgument("Fourier modes of mixed dimension".into()));
            }
            let neg: Vec<i64> = k.iter().map(|x| -x).collect();
            let partner = coeffs.get(&neg).copied().unwrap_or_default();
            if (partner - v.conj()).norm() > HERMITIAN_TOL * v.norm().max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "Fourier potential is not real: V̂({neg:?}) != conj V̂({k:?})"
                )));
            }
        }
        Ok(PotentialSpec::TorusFourier(coeffs))
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, PotentialSpec::Constant(_))
    }

    /// Upper bound for `‖V‖_∞` (exact for constant and grid potentials,
    /// `Σ|V̂(k)|` for Fourier potentials).
    pub fn sup_norm(&self) -> f64 {
        match self {
            PotentialSpec::Constant(c) => c.abs(),
            PotentialSpec::TorusFourier(m) => m.values().map(|v| v.norm()).sum(),
            PotentialSpec::Grid(v) => v.iter().fold(0.0, |a, x| a.max(x.abs())),
        }
    }

    /// `∫_M V² dv`.
    pub fn integral_of_square(&self, sys: &EigenSystem) -> f64 {
        match self {
            PotentialSpec::Constant(c) => c * c * sys.volume(),
            PotentialSpec::TorusFourier(m) => {
                sys.volume() * m.values().map(|v| v.norm_sqr()).sum::<f64>()
            }
            PotentialSpec::Grid(v) => {
                sys.volume() / v.len() as f64 * pairwise_sum(&v.iter().map(|x| x * x).collect::<Vec<_>>())
            }
        }
    }

    /// Pointwise value on the torus.
    pub fn evaluate_torus(&self, lengths: &[f64], x: &[f64]) -> f64 {
        match self {
            PotentialSpec::Constant(c) => *c,
            PotentialSpec::TorusFourier(m) => m
                .iter()
                .map(|(k, v)| {
                    let phase: f64 = k
                        .iter()
                        .zip(lengths)
                        .zip(x)
                        .map(|((ki, li), xi)| 2.0 * std::f64::consts::PI * *ki as f64 * xi / li)
                        .sum();
                    (v * Complex64::from_polar(1.0, phase)).re
                })
                .sum(),
            PotentialSpec::Grid(_) => f64::NAN,
        }
    }
}

#[derive(Debug, Clone)]
pub enum OperatorKind {
    /// Constant potential: one entry `c e^{-2ελ}/λ` per nonzero level.
    Diagonal { entries: Vec<f64>, mult: Vec<usize> },
    /// General potential: `A_{jk} = w_j M_{jk}` with `w_j = e^{-2ελ_j}/λ_j`
    /// and `M_{jk} = ⟨e_j, V e_k⟩` Hermitian.
    Dense {
        weights: Vec<f64>,
        coupling: DMatrix<Complex64>,
        /// Torus frequency tuple of each mode, when the basis is complex Fourier.
        modes: Option<Vec<Vec<i64>>>,
    },
}

/// `e^{-2εΔ} Δ^{-1} V` restricted to the retained nonzero modes.
#[derive(Debug, Clone)]
pub struct TruncatedOperator {
    epsilon: f64,
    /// Laplace eigenvalue per entry (per level when diagonal, per mode otherwise).
    lambdas: Vec<f64>,
    kind: OperatorKind,
}

impl TruncatedOperator {
    /// Diagonal operator with the given entries (multiplicities 1); handy for
    /// testing the determinant routines on explicit spectra.
    pub fn from_diagonal(entries: Vec<f64>) -> Self {
        let mult = vec![1; entries.len()];
        Self::from_diagonal_levels(entries, mult)
    }

    pub fn from_diagonal_levels(entries: Vec<f64>, mult: Vec<usize>) -> Self {
        assert_eq!(entries.len(), mult.len());
        Self {
            epsilon: 0.0,
            lambdas: vec![f64::NAN; entries.len()],
            kind: OperatorKind::Diagonal { entries, mult },
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.kind, OperatorKind::Diagonal { .. })
    }

    /// Rank counted with multiplicity.
    pub fn rank(&self) -> usize {
        match &self.kind {
            OperatorKind::Diagonal { mult, .. } => mult.iter().sum(),
            OperatorKind::Dense { weights, .. } => weights.len(),
        }
    }

    /// Laplace eigenvalue attached to each stored entry.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Materialized `N × N` matrix in the eigenbasis.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        match &self.kind {
            OperatorKind::Diagonal { entries, mult } => {
                let diag: Vec<Complex64> = entries
                    .iter()
                    .zip(mult)
                    .flat_map(|(e, m)| std::iter::repeat_n(Complex64::new(*e, 0.0), *m))
                    .collect();
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag))
            }
            OperatorKind::Dense { weights, coupling, .. } => {
                let mut a = coupling.clone();
                for (j, w) in weights.iter().enumerate() {
                    a.row_mut(j).scale_mut(*w);
                }
                a
            }
        }
    }

    /// Hermitian form `e^{-εΔ}Δ^{-1/2} V Δ^{-1/2} e^{-εΔ}`, isospectral to `A`.
    pub fn symmetrized(&self) -> DMatrix<Complex64> {
        match &self.kind {
            OperatorKind::Diagonal { .. } => self.matrix(),
            OperatorKind::Dense { weights, coupling, .. } => {
                let s: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
                DMatrix::from_fn(coupling.nrows(), coupling.ncols(), |j, k| coupling[(j, k)] * (s[j] * s[k]))
            }
        }
    }

    /// Symmetrized form expressed in a real orthonormal eigenbasis, so that a
    /// real Gaussian field has i.i.d. standard normal coordinates.
    pub fn symmetrized_real(&self) -> Result<DMatrix<f64>> {
        let b = self.symmetrized();
        let OperatorKind::Dense { modes: Some(modes), .. } = &self.kind else {
            return Ok(b.map(|z| z.re));
        };
        let index: HashMap<&Vec<i64>, usize> = modes.iter().enumerate().map(|(i, m)| (m, i)).collect();
        let n = modes.len();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut u = DMatrix::<Complex64>::zeros(n, n);
        let mut col = 0;
        for (j, m) in modes.iter().enumerate() {
            let neg: Vec<i64> = m.iter().map(|x| -x).collect();
            let positive = m.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0);
            if !positive {
                continue;
            }
            let jn = *index.get(&neg).ok_or_else(|| {
                Error::InvalidArgument(format!("mode set not closed under negation at {m:?}"))
            })?;
            u[(j, col)] = Complex64::new(h, 0.0);
            u[(jn, col)] = Complex64::new(h, 0.0);
            u[(j, col + 1)] = Complex64::new(0.0, -h);
            u[(jn, col + 1)] = Complex64::new(0.0, h);
            col += 2;
        }
        if col != n {
            return Err(Error::InvalidArgument("could not pair Fourier modes into a real basis".into()));
        }
        let real = u.adjoint() * b * u;
        Ok(real.map(|z| z.re))
    }

    /// Eigenvalues with multiplicities. Dense operators go through the
    /// Hermitian symmetrized form; each eigenvalue is reported with count 1.
    pub fn eigenvalues(&self) -> Vec<(f64, usize)> {
        match &self.kind {
            OperatorKind::Diagonal { entries, mult } => {
                entries.iter().copied().zip(mult.iter().copied()).collect()
            }
            OperatorKind::Dense { .. } => {
                let eig = SymmetricEigen::new(self.symmetrized());
                let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
                v.sort_by(f64::total_cmp);
                v.into_iter().map(|x| (x, 1)).collect()
            }
        }
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0, |m, (x, _)| m.max(x.abs()))
    }

    /// `Tr(A^n)`.
    pub fn trace_power(&self, n: u32) -> f64 {
        match &self.kind {
            OperatorKind::Diagonal { entries, mult } => power_sum(entries, mult, n),
            OperatorKind::Dense { .. } => {
                let mut it = self.power_traces();
                let mut last = 0.0;
                for _ in 0..n {
                    last = it.next().unwrap_or(0.0);
                }
                last
            }
        }
    }

    /// Iterator over `Tr(A), Tr(A²), …`.
    pub fn power_traces(&self) -> PowerTraces<'_> {
        PowerTraces {
            op: self,
            n: 0,
            power: None,
        }
    }

    /// Hilbert–Schmidt norm.
    pub fn hs_norm(&self) -> f64 {
        match &self.kind {
            OperatorKind::Diagonal { entries, mult } => power_sum_abs(entries, mult, 2.0).sqrt(),
            OperatorKind::Dense { .. } => self.matrix().norm(),
        }
    }
}

/// Lazily computed traces of successive powers.
pub struct PowerTraces<'a> {
    op: &'a TruncatedOperator,
    n: u32,
    power: Option<DMatrix<Complex64>>,
}

impl Iterator for PowerTraces<'_> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        self.n += 1;
        match &self.op.kind {
            OperatorKind::Diagonal { entries, mult } => Some(power_sum(entries, mult, self.n)),
            OperatorKind::Dense { .. } => {
                let a = self.op.matrix();
                let next = match self.power.take() {
                    None => a,
                    Some(p) => p * a,
                };
                let tr = next.trace().re;
                self.power = Some(next);
                Some(tr)
            }
        }
    }
}

fn power_sum(entries: &[f64], mult: &[usize], n: u32) -> f64 {
    let term = |(e, m): (&f64, &usize)| *m as f64 * e.powi(n as i32);
    let terms: Vec<f64> = if entries.len() > PAR_THRESHOLD {
        entries.par_iter().zip(mult.par_iter()).map(term).collect()
    } else {
        entries.iter().zip(mult).map(term).collect()
    };
    pairwise_sum(&terms)
}

fn power_sum_abs(entries: &[f64], mult: &[usize], p: f64) -> f64 {
    let terms: Vec<f64> = entries
        .iter()
        .zip(mult)
        .map(|(e, m)| *m as f64 * e.abs().powf(p))
        .collect();
    pairwise_sum(&terms)
}

/// Builds `A_ε = e^{-2εΔ} Δ^{-1} V` on the retained nonzero modes of `sys`.
pub fn green_potential_operator(sys: &EigenSystem, v: &PotentialSpec, epsilon: f64) -> Result<TruncatedOperator> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    let weight = |lam: f64| (-2.0 * epsilon * lam).exp() / lam;
    match v {
        PotentialSpec::Constant(c) => {
            let levels = sys.nonzero_levels();
            Ok(TruncatedOperator {
                epsilon,
                lambdas: levels.iter().map(|l| l.value).collect(),
                kind: OperatorKind::Diagonal {
                    entries: levels.iter().map(|l| c * weight(l.value)).collect(),
                    mult: levels.iter().map(|l| l.mult).collect(),
                },
            })
        }
        PotentialSpec::TorusFourier(coeffs) => {
            let Basis::TorusFourier { lengths } = sys.basis() else {
                return Err(Error::Unsupported(format!(
                    "Fourier potentials need a torus spectrum, got {}",
                    sys.basis().tag()
                )));
            };
            let modes: Vec<(Vec<i64>, f64)> = torus_modes(lengths, sys.cutoff()).into_iter().skip(1).collect();
            let n = modes.len();
            if n > DENSE_RANK_LIMIT {
                return Err(Error::Unsupported(format!(
                    "dense operator rank {n} exceeds {DENSE_RANK_LIMIT}; lower the cutoff"
                )));
            }
            if let Some(k) = coeffs.keys().find(|k| k.len() != lengths.len()) {
                return Err(Error::InvalidArgument(format!(
                    "potential frequency {k:?} has the wrong dimension"
                )));
            }
            let index: HashMap<&Vec<i64>, usize> = modes.iter().enumerate().map(|(i, m)| (&m.0, i)).collect();
            for (k, val) in coeffs {
                if val.norm() == 0.0 || k.iter().all(|&x| x == 0) {
                    continue;
                }
                let realized = modes.iter().any(|(m, _)| {
                    let shifted: Vec<i64> = m.iter().zip(k).map(|(a, b)| a + b).collect();
                    index.contains_key(&shifted)
                });
                if !realized {
                    return Err(Error::InsufficientBand(k.clone()));
                }
            }
            let coupling = DMatrix::from_fn(n, n, |j, l| {
                let diff: Vec<i64> = modes[j].0.iter().zip(&modes[l].0).map(|(a, b)| a - b).collect();
                coeffs.get(&diff).copied().unwrap_or_default()
            });
            Ok(TruncatedOperator {
                epsilon,
                lambdas: modes.iter().map(|m| m.1).collect(),
                kind: OperatorKind::Dense {
                    weights: modes.iter().map(|m| weight(m.1)).collect(),
                    coupling,
                    modes: Some(modes.into_iter().map(|m| m.0).collect()),
                },
            })
        }
        PotentialSpec::Grid(values) => {
            let u = sys.grid_eigenvectors().ok_or_else(|| {
                Error::Unsupported(format!(
                    "grid potentials need the grid backend, got {}",
                    sys.basis().tag()
                ))
            })?;
            if values.len() != u.nrows() {
                return Err(Error::InvalidArgument(format!(
                    "grid potential has {} values for {} points",
                    values.len(),
                    u.nrows()
                )));
            }
            let n = u.ncols() - 1;
            let lambdas: Vec<f64> = sys.expanded().into_iter().skip(1).collect();
            let nonzero = u.columns(1, n);
            let mut vu = nonzero.clone_owned();
            for (r, val) in values.iter().enumerate() {
                vu.row_mut(r).scale_mut(*val);
            }
            let m = nonzero.transpose() * vu;
            Ok(TruncatedOperator {
                epsilon,
                kind: OperatorKind::Dense {
                    weights: lambdas.iter().map(|&l| weight(l)).collect(),
                    coupling: m.map(|x| Complex64::new(x, 0.0)),
                    modes: None,
                },
                lambdas,
            })
        }
    }
}

/// Schatten `p`-norm (`p ∈ {1,2,3,4}`) from the singular values.
pub fn schatten_norm(a: &TruncatedOperator, p: u32) -> Result<f64> {
    if !(1..=4).contains(&p) {
        return Err(Error::InvalidArgument(format!("Schatten index {p} outside 1..=4")));
    }
    match &a.kind {
        OperatorKind::Diagonal { entries, mult } => Ok(power_sum_abs(entries, mult, f64::from(p)).powf(1.0 / f64::from(p))),
        OperatorKind::Dense { .. } => {
            let sv = a.matrix().singular_values();
            let terms: Vec<f64> = sv.iter().map(|s| s.powi(p as i32)).collect();
            Ok(pairwise_sum(&terms).powf(1.0 / f64::from(p)))
        }
    }
}

/// A trace with an estimate of what the truncation left out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amplitude {
    pub value: f64,
    pub tail_bound: f64,
}

/// Feynman amplitude `c_n(g,V) = Tr((Δ^{-1}V)^n)`, well defined for `n > d/2`.
///
/// For constant potentials the Weyl tail beyond the cutoff is added to the
/// value; for other potentials the raw truncated trace is returned with a
/// heuristic bound `‖V‖_∞^n × tail`.
pub fn amplitude_cn(sys: &EigenSystem, v: &PotentialSpec, n: u32) -> Result<Amplitude> {
    let half = sys.dim() as f64 / 2.0;
    if f64::from(n) <= half {
        return Err(Error::AmplitudeDivergent { n, half_dim: half });
    }
    let op = green_potential_operator(sys, v, 0.0)?;
    let raw = op.trace_power(n);
    let tail = weyl_tail(sys, sys.cutoff(), n)?;
    Ok(match v {
        PotentialSpec::Constant(c) => {
            let t = c.powi(n as i32) * tail;
            Amplitude {
                value: raw + t,
                tail_bound: t.abs(),
            }
        }
        _ => Amplitude {
            value: raw,
            tail_bound: v.sup_norm().powi(n as i32) * tail,
        },
    })
}

/// Smallest cutoff for which `e^{-4εΛ} <= 1e-12`.
pub fn required_cutoff(epsilon: f64) -> f64 {
    (1e12f64).ln() / (4.0 * epsilon)
}

/// Heat-regularized second trace `Tr((e^{-2εΔ}Δ^{-1}V)²)`.
pub fn regularized_c2(sys: &EigenSystem, v: &PotentialSpec, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let required = required_cutoff(epsilon);
    if sys.cutoff() < required {
        return Err(Error::CutoffTooSmall {
            epsilon,
            required,
            available: sys.cutoff(),
        });
    }
    Ok(green_potential_operator(sys, v, epsilon)?.trace_power(2))
}

/// `‖e^{-2εΔ}Δ^{-1}‖_HS`, with the Weyl tail folded in at `ε = 0`.
pub fn green_hs_norm(sys: &EigenSystem, epsilon: f64) -> Result<f64> {
    if sys.dim() >= 4 && epsilon == 0.0 {
        return Err(Error::HsDivergent(sys.dim()));
    }
    let terms: Vec<f64> = sys
        .nonzero_levels()
        .iter()
        .map(|l| l.mult as f64 * (-4.0 * epsilon * l.value).exp() / (l.value * l.value))
        .collect();
    let mut sq = pairwise_sum(&terms);
    if epsilon == 0.0 {
        sq += weyl_tail(sys, sys.cutoff(), 2)?;
    }
    Ok(sq.sqrt())
}

/// Guaranteed convergence radius `1 / (‖V‖_∞ ‖e^{-2εΔ}Δ^{-1}‖_HS)`.
pub fn hs_radius(sys: &EigenSystem, v: &PotentialSpec, epsilon: f64) -> Result<f64> {
    let norm = green_hs_norm(sys, epsilon)?;
    let sup = v.sup_norm();
    if sup == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (sup * norm))
}

/// Both sides of `‖e^{-εΔ}Δ^{-1/2}VΔ^{-1/2}e^{-εΔ}‖_HS <= ‖V‖_∞ (Tr Δ^{-2}e^{-4εΔ})^{1/2}`
/// on the truncation.
#[derive(Debug, Clone, Copy)]
pub struct HolderChain {
    pub symmetrized_hs: f64,
    pub bound: f64,
}

pub fn holder_chain(sys: &EigenSystem, v: &PotentialSpec, epsilon: f64) -> Result<HolderChain> {
    let op = green_potential_operator(sys, v, epsilon)?;
    let symmetrized_hs = op.symmetrized().norm();
    let terms: Vec<f64> = sys
        .nonzero_levels()
        .iter()
        .map(|l| l.mult as f64 * (-4.0 * epsilon * l.value).exp() / (l.value * l.value))
        .collect();
    Ok(HolderChain {
        symmetrized_hs,
        bound: v.sup_norm() * pairwise_sum(&terms).sqrt(),
    })
}
