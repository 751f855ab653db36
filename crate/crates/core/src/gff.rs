//! Sampling the heat-regularized Gaussian free field and its Wick square.
//!
//! A draw of the field on a truncation is a vector of i.i.d. standard
//! normals, one per nonzero mode; the smoothed field is
//! `φ_ε = Σ e^{-ελ} c_λ λ^{-1/2} e_λ`. The integrated Wick square against a
//! potential is the centred quadratic form `cᵀBc − Tr B` with `B` the
//! symmetrized operator.
//!
//! Every draw comes from its own ChaCha stream keyed by `(seed, stream)` and
//! positioned by the sample index, so parallel runs are reproducible no
//! matter how the work is scheduled.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::operator::{green_potential_operator, OperatorKind, PotentialSpec, TruncatedOperator};
use crate::spectrum::EigenSystem;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// The generator for draw number `counter` of `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64, counter: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = seed ^ splitmix64(stream);
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(counter);
    rng
}

/// One draw of the truncated field.
#[derive(Debug, Clone, PartialEq)]
pub struct GFFSample {
    /// Standard normal coordinates, one per retained nonzero mode.
    pub coefficients: Vec<f64>,
    pub epsilon: f64,
    pub seed: u64,
    pub stream: u64,
    pub counter: u64,
}

/// Draws the coefficients of the field on `sys` at smoothing `epsilon`.
pub fn sample_gff(sys: &EigenSystem, epsilon: f64, seed: u64, stream: u64, counter: u64) -> GFFSample {
    let n = sys.mode_count() - 1;
    let mut rng = stream_rng(seed, stream, counter);
    let coefficients = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    GFFSample {
        coefficients,
        epsilon,
        seed,
        stream,
        counter,
    }
}

/// The centred quadratic form `c ↦ cᵀBc − Tr B` for one `(V, ε)`.
#[derive(Debug, Clone)]
pub struct WickObservable {
    form: Form,
    /// Eigenvalues of `B` with multiplicities.
    spectrum: Vec<(f64, usize)>,
    trace: f64,
    epsilon: f64,
}

#[derive(Debug, Clone)]
enum Form {
    /// One weight per level; coefficients are laid out level by level.
    Levels { weights: Vec<f64>, mult: Vec<usize> },
    Dense(DMatrix<f64>),
}

impl WickObservable {
    pub fn new(sys: &EigenSystem, v: &PotentialSpec, epsilon: f64) -> Result<Self> {
        let op = green_potential_operator(sys, v, epsilon)?;
        Self::from_operator(&op)
    }

    pub fn from_operator(op: &TruncatedOperator) -> Result<Self> {
        let form = match op.kind() {
            OperatorKind::Diagonal { entries, mult } => Form::Levels {
                weights: entries.clone(),
                mult: mult.clone(),
            },
            OperatorKind::Dense { .. } => Form::Dense(op.symmetrized_real()?),
        };
        let trace = match &form {
            Form::Levels { weights, mult } => {
                let t: Vec<f64> = weights.iter().zip(mult).map(|(w, m)| w * *m as f64).collect();
                pairwise_sum(&t)
            }
            Form::Dense(b) => b.trace(),
        };
        Ok(Self {
            form,
            spectrum: op.eigenvalues(),
            trace,
            epsilon: op.epsilon(),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `Tr B`.
    pub fn trace(&self) -> f64 {
        self.trace
    }

    /// Eigenvalues of `B` with multiplicities.
    pub fn spectrum(&self) -> &[(f64, usize)] {
        &self.spectrum
    }

    /// Number of coordinates the form expects.
    pub fn rank(&self) -> usize {
        match &self.form {
            Form::Levels { mult, .. } => mult.iter().sum(),
            Form::Dense(b) => b.nrows(),
        }
    }

    pub fn evaluate(&self, coefficients: &[f64]) -> Result<f64> {
        if coefficients.len() != self.rank() {
            return Err(Error::InvalidArgument(format!(
                "sample has {} coefficients, the observable expects {}",
                coefficients.len(),
                self.rank()
            )));
        }
        Ok(match &self.form {
            Form::Levels { weights, mult } => {
                let mut terms = Vec::with_capacity(weights.len());
                let mut at = 0;
                for (w, &m) in weights.iter().zip(mult) {
                    let s: f64 = coefficients[at..at + m].iter().map(|c| c * c - 1.0).sum();
                    terms.push(w * s);
                    at += m;
                }
                pairwise_sum(&terms)
            }
            Form::Dense(b) => {
                let c = DVector::from_column_slice(coefficients);
                c.dot(&(b * &c)) - self.trace
            }
        })
    }

    /// One draw of the observable. Level forms only need the per-level sum
    /// of squares, which is drawn directly as a χ² variable.
    fn draw(&self, seed: u64, stream: u64, counter: u64) -> f64 {
        let mut rng = stream_rng(seed, stream, counter);
        match &self.form {
            Form::Levels { weights, mult } => {
                let terms: Vec<f64> = weights
                    .iter()
                    .zip(mult)
                    .map(|(w, &m)| {
                        let chi: f64 = ChiSquared::new(m as f64).expect("positive degrees of freedom").sample(&mut rng);
                        w * (chi - m as f64)
                    })
                    .collect();
                pairwise_sum(&terms)
            }
            Form::Dense(b) => {
                let c = DVector::from_fn(b.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
                c.dot(&(b * &c)) - self.trace
            }
        }
    }

    /// Draws `n` values in sample-index order.
    pub fn samples(&self, n: usize, seed: u64, stream: u64) -> Vec<f64> {
        (0..n as u64).into_par_iter().map(|i| self.draw(seed, stream, i)).collect()
    }

    /// The Gaussian integral with coupling `λ` converges iff `1 + λμ > 0`
    /// for every eigenvalue `μ` of `B`.
    pub fn check_coupling(&self, lambda: f64) -> Result<()> {
        match self.spectrum.iter().map(|&(mu, _)| 1.0 + lambda * mu).find(|f| !(*f > 0.0)) {
            Some(factor) => Err(Error::GaussianDivergent(factor)),
            None => Ok(()),
        }
    }

    /// `det₂(I + λB)^{-1/2}`, the exact expectation of `exp(−(λ/2) W)`.
    pub fn exact_partition(&self, lambda: f64) -> Result<f64> {
        self.check_coupling(lambda)?;
        let terms: Vec<f64> = self
            .spectrum
            .iter()
            .map(|&(mu, m)| {
                let x = lambda * mu;
                m as f64 * (x - x.ln_1p())
            })
            .collect();
        Ok((0.5 * pairwise_sum(&terms)).exp())
    }
}

/// `∫ V :φ_ε²: dv` for one sample.
pub fn wick_square_integral(sample: &GFFSample, sys: &EigenSystem, v: &PotentialSpec) -> Result<f64> {
    WickObservable::new(sys, v, sample.epsilon)?.evaluate(&sample.coefficients)
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}

impl MCEstimate {
    pub fn from_values(values: &[f64], seed: u64) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 samples, got {n}")));
        }
        let mean = pairwise_sum(values) / n as f64;
        let dev: Vec<f64> = values.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        Ok(Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
            seed,
        })
    }

    /// Unbiased sample variance recovered from the standard error.
    pub fn sample_variance(&self) -> f64 {
        self.stderr * self.stderr * self.n as f64
    }
}

/// Running mean and standard error every `every` samples.
pub fn convergence_trace(values: &[f64], every: usize) -> Vec<(usize, f64, f64)> {
    let every = every.max(2);
    let mut out = Vec::new();
    let (mut s, mut s2) = (0.0, 0.0);
    for (i, x) in values.iter().enumerate() {
        s += x;
        s2 += x * x;
        let n = i + 1;
        if n >= 2 && (n % every == 0 || n == values.len()) {
            let mean = s / n as f64;
            let var = ((s2 - n as f64 * mean * mean) / (n - 1) as f64).max(0.0);
            out.push((n, mean, (var / n as f64).sqrt()));
        }
    }
    out
}

/// Stream id used by [`mc_partition`] and [`mc_moments`].
pub const DEFAULT_STREAM: u64 = 0;

/// Estimates `Z = E exp(−(λ/2) ∫V:φ_ε²:)` from `n_samples` draws.
pub fn mc_partition(
    sys: &EigenSystem,
    v: &PotentialSpec,
    lambda: f64,
    epsilon: f64,
    n_samples: usize,
    seed: u64,
) -> Result<MCEstimate> {
    let obs = WickObservable::new(sys, v, epsilon)?;
    mc_partition_with(&obs, lambda, n_samples, seed).map(|(est, _)| est)
}

/// Like [`mc_partition`] on a prepared observable; also returns the per-sample
/// integrand values for convergence traces.
pub fn mc_partition_with(obs: &WickObservable, lambda: f64, n_samples: usize, seed: u64) -> Result<(MCEstimate, Vec<f64>)> {
    if lambda == 0.0 {
        return Ok((
            MCEstimate {
                mean: 1.0,
                stderr: 0.0,
                n: n_samples,
                seed,
            },
            vec![1.0; n_samples],
        ));
    }
    obs.check_coupling(lambda)?;
    let values: Vec<f64> = obs
        .samples(n_samples, seed, DEFAULT_STREAM)
        .into_iter()
        .map(|w| (-0.5 * lambda * w).exp())
        .collect();
    Ok((MCEstimate::from_values(&values, seed)?, values))
}

/// Raw moments `E W^k`, `k = 1..=k_max`, of the Wick-square integral.
pub fn mc_moments(
    sys: &EigenSystem,
    v: &PotentialSpec,
    epsilon: f64,
    n_samples: usize,
    k_max: u32,
    seed: u64,
) -> Result<Vec<MCEstimate>> {
    let obs = WickObservable::new(sys, v, epsilon)?;
    let w = obs.samples(n_samples, seed, DEFAULT_STREAM);
    (1..=k_max)
        .map(|k| {
            let p: Vec<f64> = w.iter().map(|x| x.powi(k as i32)).collect();
            MCEstimate::from_values(&p, seed)
        })
        .collect()
}

/// Cumulant `κ_n = 2^{n-1}(n-1)! Tr(Bⁿ)` of the Wick-square integral.
pub fn wick_cumulant(obs: &WickObservable, n: u32) -> f64 {
    let fact: f64 = (1..n).map(f64::from).product();
    let terms: Vec<f64> = obs.spectrum.iter().map(|&(mu, m)| m as f64 * mu.powi(n as i32)).collect();
    2f64.powi(n as i32 - 1) * fact * pairwise_sum(&terms)
}
