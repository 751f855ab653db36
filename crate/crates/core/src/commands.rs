//! Subcommand implementations. Each command computes all of its outputs in
//! memory first; files and the manifest are written only once everything
//! succeeded, so a failing run leaves the output directory untouched.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::gff::{convergence_trace, mc_partition_with, wick_cumulant, WickObservable, DEFAULT_STREAM};
use crate::inverse::{
    default_window_width, detect_lengths, heat_coefficients_fit, log_abs_det_fn, recover_spectrum_with,
    suggested_heat_window, uniform_grid, wave_trace,
};
use crate::numeric::{fmt_f64, pairwise_sum};
use crate::operator::amplitude_cn;
use crate::partition::{default_eps_schedule, partition_d4_counterterm, partition_lowdim};
use crate::tensor::{enumerate_geodesics, xray_i2, xray_kernel_rank};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Amplitudes,
    Partition,
    Mc,
    Invert,
    Wavetrace,
    Xray,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Amplitudes => "amplitudes",
            Command::Partition => "partition",
            Command::Mc => "mc",
            Command::Invert => "invert",
            Command::Wavetrace => "wavetrace",
            Command::Xray => "xray",
        }
    }
}

/// A file produced by a command, not yet written.
#[derive(Debug, Clone)]
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl OutputFile {
    fn text(name: &str, s: String) -> Self {
        Self {
            name: name.into(),
            bytes: s.into_bytes(),
        }
    }

    fn json(name: &str, v: &impl Serialize) -> Result<Self> {
        let mut bytes = serde_json::to_vec_pretty(v)?;
        bytes.push(b'\n');
        Ok(Self { name: name.into(), bytes })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub version: String,
    pub seed: Option<u64>,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    pub files: Vec<FileDigest>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn require<'a, T>(section: &'a Option<T>, name: &str, cmd: Command) -> Result<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| Error::Config(format!("{name}: section required by `{}`", cmd.name())))
}

/// Checks the parts of the configuration a command needs.
pub fn check_command(cmd: Command, cfg: &ExperimentConfig, seed: Option<u64>) -> Result<()> {
    match cmd {
        Command::Partition if cfg.lambdas.is_empty() => {
            return Err(Error::Config("lambdas: `partition` needs at least one coupling".into()))
        }
        Command::Mc => {
            let mc = require(&cfg.mc, "mc", cmd)?;
            if seed.or(mc.seed).is_none() {
                return Err(Error::Config("mc.seed: a seed is required (config or --seed)".into()));
            }
        }
        Command::Invert => {
            require(&cfg.inverse, "inverse", cmd)?;
        }
        Command::Wavetrace => {
            require(&cfg.wave, "wave", cmd)?;
        }
        Command::Xray => {
            require(&cfg.xray, "xray", cmd)?;
        }
        _ => {}
    }
    Ok(())
}

/// Computes the outputs of `cmd` without touching the file system.
pub fn execute(cmd: Command, cfg: &ExperimentConfig, seed: Option<u64>) -> Result<Vec<OutputFile>> {
    check_command(cmd, cfg, seed)?;
    match cmd {
        Command::Spectrum => cmd_spectrum(cfg),
        Command::Amplitudes => cmd_amplitudes(cfg),
        Command::Partition => cmd_partition(cfg),
        Command::Mc => cmd_mc(cfg, seed),
        Command::Invert => cmd_invert(cfg),
        Command::Wavetrace => cmd_wavetrace(cfg),
        Command::Xray => cmd_xray(cfg),
    }
}

/// Loads the config, runs the command and writes outputs plus manifest to
/// `--out` (or the config's `output_dir`).
pub fn run(cmd: Command, config_path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<RunManifest> {
    let start = Instant::now();
    let raw = std::fs::read(config_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let text = String::from_utf8(raw.clone()).map_err(|_| Error::Config("config is not UTF-8".into()))?;
    let cfg = ExperimentConfig::from_json(&text, config_path.parent())?;
    let dir: PathBuf = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Config("output_dir: no output directory (config or --out)".into()))?;
    let files = execute(cmd, &cfg, seed)?;

    std::fs::create_dir_all(&dir)?;
    let mut digests = Vec::with_capacity(files.len());
    for f in &files {
        std::fs::write(dir.join(&f.name), &f.bytes)?;
        digests.push(FileDigest {
            path: f.name.clone(),
            sha256: sha256_hex(&f.bytes),
            bytes: f.bytes.len(),
        });
    }
    let manifest = RunManifest {
        command: cmd.name().into(),
        config_sha256: sha256_hex(&raw),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: if cmd == Command::Mc { seed.or(cfg.mc.as_ref().and_then(|m| m.seed)) } else { None },
        threads: rayon::current_num_threads(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        files: digests,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    std::fs::write(dir.join(MANIFEST_NAME), bytes)?;
    Ok(manifest)
}

fn cmd_spectrum(cfg: &ExperimentConfig) -> Result<Vec<OutputFile>> {
    let sys = cfg.system()?;
    let half = sys.dim() as f64 / 2.0;
    let weyl = sys.weyl_constant() * sys.cutoff().powf(half);
    let summary = json!({
        "dim": sys.dim(),
        "volume": sys.volume(),
        "basis": sys.basis().tag(),
        "cutoff": sys.cutoff(),
        "levels": sys.levels().len(),
        "modes": sys.mode_count(),
        "first_nonzero": sys.first_nonzero(),
        "weyl_constant": sys.weyl_constant(),
        "weyl_ratio": sys.counting(sys.cutoff()) as f64 / weyl,
    });
    Ok(vec![
        OutputFile::text("spectrum.txt", sys.to_spectrum_text()),
        OutputFile::json("spectrum.json", &summary)?,
    ])
}

fn cmd_amplitudes(cfg: &ExperimentConfig) -> Result<Vec<OutputFile>> {
    let sys = cfg.system()?;
    let v = cfg.potential()?;
    let mut csv = String::from("n,c_n,tail\n");
    for n in cfg.amplitude_orders(sys.dim()) {
        let a = amplitude_cn(&sys, &v, n)?;
        let _ = writeln!(csv, "{n},{},{}", fmt_f64(a.value), fmt_f64(a.tail_bound));
    }
    Ok(vec![OutputFile::text("amplitudes.csv", csv)])
}

/// Header of `partition.csv`.
pub const PARTITION_HEADER: &str = "lambda,Z,method,N,tail,slope,intercept,residual";

fn cmd_partition(cfg: &ExperimentConfig) -> Result<Vec<OutputFile>> {
    let sys = cfg.system()?;
    let v = cfg.potential()?;
    let schedule = cfg.eps_schedule.clone().unwrap_or_else(default_eps_schedule);
    let mut csv = format!("{PARTITION_HEADER}\n");
    for &lam in &cfg.lambdas {
        let r = if sys.dim() >= 4 {
            partition_d4_counterterm(&sys, &v, lam, &schedule)?
        } else {
            partition_lowdim(&sys, &v, Complex64::new(lam, 0.0))?
        };
        let (slope, intercept, residual) = match &r.d4 {
            Some(fit) => (fmt_f64(fit.slope), fmt_f64(fit.intercept), fmt_f64(fit.residual)),
            None => Default::default(),
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{slope},{intercept},{residual}",
            fmt_f64(lam),
            fmt_f64(r.value.re),
            r.method.tag(),
            r.truncation,
            fmt_f64(r.tail_bound),
        );
    }
    Ok(vec![OutputFile::text("partition.csv", csv)])
}

/// Raw moments from cumulants: `m_n = Σ_j C(n−1, j−1) κ_j m_{n−j}`.
fn moments_from_cumulants(kappa: &[f64]) -> Vec<f64> {
    let mut m = vec![1.0];
    for n in 1..=kappa.len() {
        let mut s = 0.0;
        let mut binom = 1.0;
        for j in 1..=n {
            s += binom * kappa[j - 1] * m[n - j];
            binom = binom * (n - j) as f64 / j as f64;
        }
        m.push(s);
    }
    m.split_off(1)
}

fn cmd_mc(cfg: &ExperimentConfig, seed_override: Option<u64>) -> Result<Vec<OutputFile>> {
    let mc = cfg.mc.as_ref().expect("checked");
    let seed = seed_override.or(mc.seed).expect("checked");
    let sys = cfg.system()?;
    let v = cfg.potential()?;
    let obs = WickObservable::new(&sys, &v, cfg.epsilon)?;
    let (estimate, values) = mc_partition_with(&obs, mc.lambda, mc.samples, seed)?;
    let exact = obs.exact_partition(mc.lambda)?;

    let w = obs.samples(mc.samples, seed, DEFAULT_STREAM);
    let kappa: Vec<f64> = (1..=mc.moments)
        .map(|k| if k == 1 { 0.0 } else { wick_cumulant(&obs, k) })
        .collect();
    let oracle = moments_from_cumulants(&kappa);
    let mut moments = Vec::new();
    for k in 1..=mc.moments {
        let p: Vec<f64> = w.iter().map(|x| x.powi(k as i32)).collect();
        let est = crate::gff::MCEstimate::from_values(&p, seed)?;
        moments.push(json!({
            "k": k,
            "mean": est.mean,
            "stderr": est.stderr,
            "exact": oracle[k as usize - 1],
        }));
    }
    let mean_w = pairwise_sum(&w) / w.len() as f64;
    let summary = json!({
        "lambda": mc.lambda,
        "epsilon": cfg.epsilon,
        "seed": seed,
        "samples": mc.samples,
        "estimate": estimate,
        "exact": exact,
        "z_score": if estimate.stderr > 0.0 { (estimate.mean - exact) / estimate.stderr } else { 0.0 },
        "wick_mean": mean_w,
        "moments": moments,
    });
    let mut csv = String::from("n,mean,stderr\n");
    for (n, mean, se) in convergence_trace(&values, mc.trace_every) {
        let _ = writeln!(csv, "{n},{},{}", fmt_f64(mean), fmt_f64(se));
    }
    Ok(vec![OutputFile::text("mc_trace.csv", csv), OutputFile::json("mc.json", &summary)?])
}

fn cmd_invert(cfg: &ExperimentConfig) -> Result<Vec<OutputFile>> {
    let inv = cfg.inverse.as_ref().expect("checked");
    let sys = cfg.system()?;
    let v = cfg.potential()?;
    let f = log_abs_det_fn(&sys, &v)?;
    let rec = recover_spectrum_with(&f, inv.search[0], inv.search[1], inv.max_count, inv.scan_points)?;
    let window = inv.heat_window.map(|[a, b]| (a, b)).unwrap_or_else(|| suggested_heat_window(&sys));
    let heat = heat_coefficients_fit(&sys, window)?;
    let mut csv = String::from("value,multiplicity,exponent,merged\n");
    for z in &rec.zeros {
        let _ = writeln!(csv, "{},{},{},{}", fmt_f64(z.value), z.multiplicity, fmt_f64(z.exponent), z.merged);
    }
    let summary = json!({
        "recovered": rec,
        "any_merged": rec.any_merged(),
        "heat": heat,
        "volume": sys.volume(),
    });
    Ok(vec![OutputFile::text("recovered.csv", csv), OutputFile::json("invert.json", &summary)?])
}

fn cmd_wavetrace(cfg: &ExperimentConfig) -> Result<Vec<OutputFile>> {
    let w = cfg.wave.as_ref().expect("checked");
    let sys = cfg.system()?;
    let grid = uniform_grid(w.t_min, w.t_max, w.points);
    let sigma = w.sigma_w.unwrap_or_else(|| default_window_width(sys.cutoff()));
    let curve = wave_trace(&sys, &grid, sigma)?;
    let peaks = detect_lengths(&curve, w.threshold)?;
    let mut csv = String::from("t,W,envelope\n");
    for i in 0..curve.t.len() {
        let _ = writeln!(
            csv,
            "{},{},{}",
            fmt_f64(curve.t[i]),
            fmt_f64(curve.values[i]),
            fmt_f64(curve.envelope[i])
        );
    }
    let summary = json!({
        "sigma_w": sigma,
        "cutoff": sys.cutoff(),
        "threshold": w.threshold,
        "peaks": peaks,
    });
    Ok(vec![OutputFile::text("wavetrace.csv", csv), OutputFile::json("peaks.json", &summary)?])
}

fn cmd_xray(cfg: &ExperimentConfig) -> Result<Vec<OutputFile>> {
    let x = cfg.xray.as_ref().expect("checked");
    let t = cfg.xray_tensor()?;
    let geodesics = enumerate_geodesics(x.l_max, x.offset);
    let values = xray_i2(&t, &geodesics)?;
    let mut csv = String::from("p,q,w,length,I2\n");
    for (g, val) in geodesics.iter().zip(&values) {
        let _ = writeln!(csv, "{},{},{},{},{}", g.p, g.q, g.winding, fmt_f64(g.length()), fmt_f64(*val));
    }
    let report = xray_kernel_rank(x.band, x.l_max)?;
    Ok(vec![OutputFile::text("xray.csv", csv), OutputFile::json("kernel_rank.json", &report)?])
}
