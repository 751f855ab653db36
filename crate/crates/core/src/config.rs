//! Experiment configuration: one JSON document per run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inverse::DEFAULT_SCAN_POINTS;
use crate::operator::PotentialSpec;
use crate::spectrum::{EigenSystem, SpectrumSpec};
use crate::tensor::SymTensorField;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: SpectrumSpec,
    #[serde(default)]
    pub potential: PotentialConfig,
    /// Couplings for `partition`.
    #[serde(default)]
    pub lambdas: Vec<f64>,
    /// Smoothing used by `mc`.
    #[serde(default)]
    pub epsilon: f64,
    /// Smoothing schedule for the four-dimensional counterterm fit.
    #[serde(default)]
    pub eps_schedule: Option<Vec<f64>>,
    /// Amplitude orders; defaults to every `n ∈ 2..=4` with `n > d/2`.
    #[serde(default)]
    pub amplitude_orders: Option<Vec<u32>>,
    #[serde(default)]
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub inverse: Option<InverseConfig>,
    #[serde(default)]
    pub wave: Option<WaveConfig>,
    #[serde(default)]
    pub xray: Option<XrayConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialConfig {
    Constant { value: f64 },
    TorusFourier { modes: Vec<FourierMode> },
    Grid { values: Vec<f64> },
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig::Constant { value: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierMode {
    pub k: Vec<i64>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub samples: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    pub lambda: f64,
    #[serde(default = "default_moments")]
    pub moments: u32,
    #[serde(default = "default_trace_every")]
    pub trace_every: usize,
}

fn default_moments() -> u32 {
    3
}

fn default_trace_every() -> usize {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseConfig {
    /// `[lo, hi]` on the negative real axis.
    pub search: [f64; 2],
    pub max_count: usize,
    #[serde(default = "default_scan_points")]
    pub scan_points: usize,
    /// Heat fit window; the suggested window is used when absent.
    #[serde(default)]
    pub heat_window: Option<[f64; 2]>,
}

fn default_scan_points() -> usize {
    DEFAULT_SCAN_POINTS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    /// Frequency window width; `√Λ / 3` when absent.
    #[serde(default)]
    pub sigma_w: Option<f64>,
    /// Minimum peak prominence as a fraction of the envelope maximum.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XrayConfig {
    pub band: i64,
    pub l_max: f64,
    /// Order-2 tensor to transform; the flat metric when absent.
    #[serde(default)]
    pub tensor: Option<Vec<TensorMode>>,
    #[serde(default)]
    pub offset: [f64; 2],
}

/// One Fourier mode of an order-2 field: reduced components `T_0, T_1, T_2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorMode {
    pub k: [i64; 2],
    pub re: [f64; 3],
    #[serde(default)]
    pub im: [f64; 3],
}

/// Largest band accepted for X-ray probes.
pub const MAX_XRAY_BAND: i64 = 8;

fn cfg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl ExperimentConfig {
    /// Parses and validates; relative external spectrum paths are resolved
    /// against `base`.
    pub fn from_json(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut c: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        if let (SpectrumSpec::External { path, .. }, Some(base)) = (&mut c.geometry, base) {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        match &self.potential {
            PotentialConfig::Constant { value } if !value.is_finite() => return cfg("potential.value: must be finite"),
            PotentialConfig::TorusFourier { modes } => {
                if modes.is_empty() {
                    return cfg("potential.modes: at least one mode required");
                }
                if modes.iter().any(|m| !m.re.is_finite() || !m.im.is_finite()) {
                    return cfg("potential.modes: coefficients must be finite");
                }
                self.potential()?;
            }
            PotentialConfig::Grid { values } if values.iter().any(|v| !v.is_finite()) => {
                return cfg("potential.values: must be finite")
            }
            _ => {}
        }
        if self.lambdas.iter().any(|l| !l.is_finite()) {
            return cfg("lambdas: must be finite");
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return cfg("epsilon: must be finite and >= 0");
        }
        if let Some(s) = &self.eps_schedule {
            if s.len() < 5 {
                return cfg("eps_schedule: need at least 5 values");
            }
            if s.iter().any(|e| !(*e > 0.0)) || s.windows(2).any(|w| !(w[1] < w[0])) {
                return cfg("eps_schedule: values must be positive and strictly decreasing");
            }
        }
        if let Some(orders) = &self.amplitude_orders {
            if orders.is_empty() || orders.iter().any(|n| *n < 1) {
                return cfg("amplitude_orders: need positive orders");
            }
        }
        if let Some(mc) = &self.mc {
            if mc.samples < 2 {
                return cfg("mc.samples: need at least 2");
            }
            if !mc.lambda.is_finite() {
                return cfg("mc.lambda: must be finite");
            }
            if mc.trace_every == 0 {
                return cfg("mc.trace_every: must be positive");
            }
        }
        if let Some(inv) = &self.inverse {
            let [lo, hi] = inv.search;
            if !(lo < hi) || hi > 0.0 || !lo.is_finite() {
                return cfg("inverse.search: need lo < hi <= 0");
            }
            if inv.max_count == 0 {
                return cfg("inverse.max_count: must be positive");
            }
            if inv.scan_points < 3 {
                return cfg("inverse.scan_points: need at least 3");
            }
            if let Some([a, b]) = inv.heat_window {
                if !(a > 0.0 && b > a) {
                    return cfg("inverse.heat_window: need 0 < t_min < t_max");
                }
            }
        }
        if let Some(w) = &self.wave {
            if !(w.t_min > 0.0 && w.t_max > w.t_min && w.t_max.is_finite()) {
                return cfg("wave: need 0 < t_min < t_max");
            }
            if w.points < 3 {
                return cfg("wave.points: need at least 3");
            }
            if let Some(s) = w.sigma_w {
                if !(s > 0.0) {
                    return cfg("wave.sigma_w: must be positive");
                }
            }
            if !(w.threshold >= 0.0) {
                return cfg("wave.threshold: must be >= 0");
            }
        }
        if let Some(x) = &self.xray {
            if !(0..=MAX_XRAY_BAND).contains(&x.band) {
                return cfg(format!("xray.band: must be in 0..={MAX_XRAY_BAND}"));
            }
            if !(x.l_max > 0.0) || !x.l_max.is_finite() {
                return cfg("xray.l_max: must be positive");
            }
            if let Some(modes) = &x.tensor {
                if modes.iter().any(|m| m.k[0].abs() > x.band || m.k[1].abs() > x.band) {
                    return cfg("xray.tensor: mode outside the band");
                }
            }
        }
        Ok(())
    }

    pub fn potential(&self) -> Result<PotentialSpec> {
        Ok(match &self.potential {
            PotentialConfig::Constant { value } => PotentialSpec::Constant(*value),
            PotentialConfig::TorusFourier { modes } => {
                let mut map = BTreeMap::new();
                for m in modes {
                    if map.insert(m.k.clone(), Complex64::new(m.re, m.im)).is_some() {
                        return cfg(format!("potential.modes: duplicate frequency {:?}", m.k));
                    }
                }
                PotentialSpec::torus_fourier(map).map_err(|e| Error::Config(format!("potential.modes: {e}")))?
            }
            PotentialConfig::Grid { values } => PotentialSpec::Grid(values.clone()),
        })
    }

    pub fn system(&self) -> Result<EigenSystem> {
        self.geometry.build()
    }

    pub fn amplitude_orders(&self, dim: usize) -> Vec<u32> {
        match &self.amplitude_orders {
            Some(o) => o.clone(),
            None => (2..=4).filter(|n| 2 * *n as usize > dim).collect(),
        }
    }

    /// The order-2 field for `xray`, or the flat metric.
    pub fn xray_tensor(&self) -> Result<SymTensorField> {
        let x = self.xray.as_ref().ok_or_else(|| Error::Config("xray: section missing".into()))?;
        match &x.tensor {
            None => SymTensorField::constant(&[1.0, 0.0, 1.0], x.band),
            Some(modes) => {
                let mut f = SymTensorField::zeros(2, x.band)?;
                for m in modes {
                    let c: Vec<Complex64> = (0..3).map(|r| Complex64::new(m.re[r], m.im[r])).collect();
                    f.set_mode(m.k, &c).map_err(|e| Error::Config(format!("xray.tensor: {e}")))?;
                }
                Ok(f)
            }
        }
    }
}
