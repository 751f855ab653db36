//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its PASS/FAIL line; exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gfflab::determinant::{det_gk_product, det_gk_series};
use gfflab::gff::{mc_moments, mc_partition};
use gfflab::inverse::{
    default_window_width, detect_lengths, heat_coefficients_fit, log_abs_det_fn, recover_spectrum, suggested_heat_window,
    uniform_grid, wave_trace,
};
use gfflab::operator::{amplitude_cn, green_potential_operator, PotentialSpec, TruncatedOperator};
use gfflab::partition::{counterterm_fit, default_eps_schedule, partition_lowdim, partition_series};
use gfflab::spectrum::{sphere_spectrum, torus_spectrum, EigenSystem};
use gfflab::tensor::{
    enumerate_geodesics, divergence, pi_star, solenoidal_decompose, symmetrized_derivative, xray_i2, SymTensorField,
};

type Outcome = Result<String, String>;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=60);
        let mut entries: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rho = entries.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        let target = rng.random_range(0.05..=0.5);
        entries.iter_mut().for_each(|e| *e *= target / rho);
        let a = TruncatedOperator::from_diagonal(entries);
        let z = Complex64::from_polar(rng.random_range(0.0..=1.0), rng.random_range(-PI..PI));
        for p in [2, 3] {
            for zz in [c(1.0), z] {
                let s = det_gk_series(&a, p, zz).map_err(|e| e.to_string())?;
                let d = det_gk_product(&a, p, zz).map_err(|e| e.to_string())?;
                worst = worst.max((s - d).norm() / d.norm());
            }
        }
    }
    check(worst <= 1e-10, format!("max relative difference {worst:.3e}"))
}

fn criterion_2() -> Outcome {
    let sys = sphere_spectrum(200).map_err(|e| e.to_string())?;
    let v = PotentialSpec::Constant(1.0);
    let mut worst = 0.0f64;
    for lam in [-0.5, -0.1, 0.1, 0.5] {
        let a = partition_lowdim(&sys, &v, c(lam)).map_err(|e| e.to_string())?;
        let b = partition_series(&sys, &v, c(lam), None).map_err(|e| e.to_string())?;
        worst = worst.max((a.value - b.value).norm());
    }
    check(worst <= 1e-10, format!("max |product - series| = {worst:.3e}"))
}

fn sphere_product_oracle(sys: &EigenSystem, lam: f64) -> f64 {
    sys.nonzero_levels()
        .iter()
        .map(|l| l.mult as f64 * (lam / (2.0 * l.value) - 0.5 * (lam / l.value).ln_1p()))
        .sum::<f64>()
        .exp()
}

fn criterion_3() -> Outcome {
    let sys = sphere_spectrum(30).map_err(|e| e.to_string())?;
    let v = PotentialSpec::Constant(1.0);
    let exact = sphere_product_oracle(&sys, 0.5);
    let mut inside = 0;
    for seed in 0..100 {
        let est = mc_partition(&sys, &v, 0.5, 0.0, 200_000, seed).map_err(|e| e.to_string())?;
        if (est.mean - exact).abs() <= 3.0 * est.stderr {
            inside += 1;
        }
    }
    check(inside >= 99, format!("{inside}/100 repetitions within 3 stderr of {exact:.10}"))
}

fn criterion_4() -> Outcome {
    let sys = sphere_spectrum(100).map_err(|e| e.to_string())?;
    let v = PotentialSpec::Constant(1.0);
    let op = green_potential_operator(&sys, &v, 0.0).map_err(|e| e.to_string())?;
    let (c2, c3) = (op.trace_power(2), op.trace_power(3));
    let m = mc_moments(&sys, &v, 0.0, 1_000_000, 3, 2024).map_err(|e| e.to_string())?;
    let var = m[1].mean - m[0].mean * m[0].mean;
    let var_ok = (var / (2.0 * c2) - 1.0).abs() <= 0.05;
    let z3 = (m[2].mean - 8.0 * c3) / m[2].stderr;
    let mean_ok = m[0].mean.abs() <= 4.0 * m[0].stderr;
    check(
        var_ok && z3.abs() <= 5.0 && mean_ok,
        format!(
            "variance {var:.5} vs 2c2 = {:.5}; third moment {:.5} vs 8c3 = {:.5} ({z3:+.2} stderr)",
            2.0 * c2,
            m[2].mean,
            8.0 * c3
        ),
    )
}

fn criterion_5() -> Outcome {
    let sys = torus_spectrum(&[1.0; 4], 4.0 * PI * PI * 1200.0).map_err(|e| e.to_string())?;
    let v = PotentialSpec::Constant(1.0);
    let sched = default_eps_schedule();
    if sched.iter().any(|e| !(1e-4..=1e-2).contains(e)) {
        return Err("schedule leaves [1e-4, 1e-2]".into());
    }
    let f1 = counterterm_fit(&sys, &v, 0.1, &sched).map_err(|e| e.to_string())?;
    let f2 = counterterm_fit(&sys, &v, 0.2, &sched).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (lam, f) in [(0.1, &f1), (0.2, &f2)] {
        let want = lam * lam / (64.0 * PI * PI);
        let rel = (f.slope / want - 1.0).abs();
        ok &= rel <= 0.02 && f.residual <= 1e-3 * f.slope.abs();
        parts.push(format!("slope({lam}) off by {rel:.2e}, residual/slope {:.2e}", f.residual / f.slope.abs()));
    }
    let err = 3.0 * (f2.intercept_std_error.powi(2) + 16.0 * f1.intercept_std_error.powi(2)).sqrt();
    let gap = (f2.intercept - 4.0 * f1.intercept).abs();
    ok &= gap <= err.max(1e-12 * f2.intercept.abs());
    parts.push(format!("intercept ratio {:.10}", f2.intercept / f1.intercept));
    check(ok, parts.join("; "))
}

fn r2(n: i64) -> usize {
    let r = (n as f64).sqrt() as i64 + 1;
    (-r..=r).flat_map(|a| (-r..=r).map(move |b| a * a + b * b)).filter(|&s| s == n).count()
}

fn recover_first_20(sys: &EigenSystem, want: &[(f64, usize)]) -> Result<(f64, bool), String> {
    let f = log_abs_det_fn(sys, &PotentialSpec::Constant(1.0)).map_err(|e| e.to_string())?;
    let last = want.last().unwrap().0;
    let rec = recover_spectrum(&f, -(last * 1.02 + 1.0), -0.1 * want[0].0, 20).map_err(|e| e.to_string())?;
    let got = rec.levels();
    if got.len() != want.len() {
        return Ok((f64::INFINITY, false));
    }
    let mut worst = 0.0f64;
    let mut mult_ok = true;
    for ((v, m), (wv, wm)) in got.iter().zip(want) {
        worst = worst.max((v / wv - 1.0).abs());
        mult_ok &= m == wm;
    }
    Ok((worst, mult_ok))
}

fn criterion_6() -> Outcome {
    let sphere = sphere_spectrum(200).map_err(|e| e.to_string())?;
    let want_s: Vec<(f64, usize)> = (1..=20).map(|k| ((k * (k + 1)) as f64, 2 * k + 1)).collect();
    let (ws, ms) = recover_first_20(&sphere, &want_s)?;
    let torus = torus_spectrum(&[1.0, 1.0], 4.0 * PI * PI * 200.0).map_err(|e| e.to_string())?;
    let want_t: Vec<(f64, usize)> = (1..)
        .map(|n| (n, r2(n)))
        .filter(|&(_, m)| m > 0)
        .take(20)
        .map(|(n, m)| (4.0 * PI * PI * n as f64, m))
        .collect();
    let (wt, mt) = recover_first_20(&torus, &want_t)?;
    check(
        ws <= 1e-8 && wt <= 1e-8 && ms && mt,
        format!("S2 rel err {ws:.2e} mult ok {ms}; T2 rel err {wt:.2e} mult ok {mt}"),
    )
}

fn criterion_7() -> Outcome {
    let s2 = sphere_spectrum(400).map_err(|e| e.to_string())?;
    let h = heat_coefficients_fit(&s2, suggested_heat_window(&s2)).map_err(|e| e.to_string())?;
    let t2 = torus_spectrum(&[1.0, 1.0], 4.0 * PI * PI * 400.0).map_err(|e| e.to_string())?;
    let ht = heat_coefficients_fit(&t2, suggested_heat_window(&t2)).map_err(|e| e.to_string())?;
    let chi = h.euler_char.unwrap_or(f64::NAN);
    check(
        (h.a0 / (4.0 * PI) - 1.0).abs() <= 0.01
            && (h.a1 / (4.0 * PI / 3.0) - 1.0).abs() <= 0.02
            && (chi - 2.0).abs() <= 0.05
            && ht.a1.abs() <= 1e-3,
        format!("S2 a0 {:.5} a1 {:.5} chi {chi:.4}; T2 a1 {:.2e}", h.a0, h.a1, ht.a1),
    )
}

fn lengths_of(lengths: &[f64]) -> Result<Vec<f64>, String> {
    let sys = torus_spectrum(lengths, 4.0 * PI * PI * 650.0).map_err(|e| e.to_string())?;
    let w = wave_trace(&sys, &uniform_grid(0.2, 2.5, 2301), default_window_width(sys.cutoff())).map_err(|e| e.to_string())?;
    Ok(detect_lengths(&w, 0.05).map_err(|e| e.to_string())?.iter().map(|p| p.t_peak).collect())
}

fn criterion_8() -> Outcome {
    let unit = lengths_of(&[1.0, 1.0])?;
    let rect = lengths_of(&[1.0, 1.3])?;
    let swapped = lengths_of(&[1.3, 1.0])?;
    let near = |got: &[f64], want: &[f64]| got.len() >= want.len() && got.iter().zip(want).all(|(g, w)| (g - w).abs() <= 0.02);
    let same = rect.len() == swapped.len() && rect.iter().zip(&swapped).all(|(a, b)| (a - b).abs() <= 1e-9);
    check(
        near(&unit, &[1.0, 2f64.sqrt(), 2.0]) && near(&rect, &[1.0, 1.3]) && same,
        format!("unit {:?}; (1,1.3) {:?}; permuted identical {same}", &unit[..unit.len().min(3)], &rect[..rect.len().min(2)]),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut flow = 0.0f64;
    for _ in 0..100 {
        let f = SymTensorField::random(2, 3, &mut rng).map_err(|e| e.to_string())?;
        let df = symmetrized_derivative(&f).map_err(|e| e.to_string())?;
        let x = [rng.random::<f64>(), rng.random::<f64>()];
        let a = rng.random_range(-PI..PI);
        let v = [a.cos(), a.sin()];
        let h = 1e-20;
        let xs = [Complex64::new(x[0], h * v[0]), Complex64::new(x[1], h * v[1])];
        let lhs = f.evaluate_complex(xs, v).im / h;
        let rhs = pi_star(&df, x, v).map_err(|e| e.to_string())?;
        flow = flow.max((lhs - rhs).abs() / rhs.abs().max(1.0));
    }
    let mut decomp = 0.0f64;
    for _ in 0..20 {
        let t = SymTensorField::random(2, 3, &mut rng).map_err(|e| e.to_string())?;
        let (ts, theta) = solenoidal_decompose(&t).map_err(|e| e.to_string())?;
        let back = ts.add(&symmetrized_derivative(&theta).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let div = divergence(&ts).map_err(|e| e.to_string())?.norm() / t.norm();
        let rec = back.sub(&t).map_err(|e| e.to_string())?.norm() / t.norm();
        decomp = decomp.max(div).max(rec);
    }
    let geodesics = enumerate_geodesics(5.0, [0.23, 0.61]);
    let mut kill = 0.0f64;
    for _ in 0..50 {
        let theta = SymTensorField::random(1, 3, &mut rng).map_err(|e| e.to_string())?;
        let t = symmetrized_derivative(&theta).map_err(|e| e.to_string())?;
        let vals = xray_i2(&t, &geodesics).map_err(|e| e.to_string())?;
        kill = kill.max(vals.iter().fold(0.0f64, |m, v| m.max(v.abs())) / theta.norm());
    }
    check(
        flow <= 1e-8 && decomp <= 1e-10 && kill <= 1e-12,
        format!("flow identity {flow:.2e}; decomposition residual {decomp:.2e}; max |I2(D theta)|/|theta| {kill:.2e}"),
    )
}

fn criterion_10() -> Outcome {
    let v = PotentialSpec::Constant(1.0);
    let mut cn = 0.0f64;
    for (a, b) in [(vec![1.0, 1.3], vec![1.3, 1.0]), (vec![1.0, 1.3, 0.8], vec![0.8, 1.0, 1.3])] {
        let cut = 4.0 * PI * PI * 60.0;
        let sa = torus_spectrum(&a, cut).map_err(|e| e.to_string())?;
        let sb = torus_spectrum(&b, cut).map_err(|e| e.to_string())?;
        for n in 2..=4 {
            let x = amplitude_cn(&sa, &v, n).map_err(|e| e.to_string())?.value;
            let y = amplitude_cn(&sb, &v, n).map_err(|e| e.to_string())?.value;
            cn = cn.max((x - y).abs() / x.abs());
        }
    }
    let cut = 4.0 * PI * PI * 200.0;
    let sa = torus_spectrum(&[1.0, 1.3], cut).map_err(|e| e.to_string())?;
    let sb = torus_spectrum(&[1.3, 1.0], cut).map_err(|e| e.to_string())?;
    let mut z = 0.0f64;
    for lam in [-5.0, -1.0, 0.5, 3.0, 10.0] {
        let x = partition_lowdim(&sa, &v, c(lam)).map_err(|e| e.to_string())?.value;
        let y = partition_lowdim(&sb, &v, c(lam)).map_err(|e| e.to_string())?.value;
        z = z.max((x - y).norm() / x.norm());
    }
    let fa = log_abs_det_fn(&sa, &v).map_err(|e| e.to_string())?;
    let fb = log_abs_det_fn(&sb, &v).map_err(|e| e.to_string())?;
    let ra = recover_spectrum(&fa, -4.0 * PI * PI * 10.0, -1.0, 20).map_err(|e| e.to_string())?.levels();
    let rb = recover_spectrum(&fb, -4.0 * PI * PI * 10.0, -1.0, 20).map_err(|e| e.to_string())?.levels();
    let spectra = ra.len() == rb.len()
        && !ra.is_empty()
        && ra.iter().zip(&rb).all(|(x, y)| x.1 == y.1 && (x.0 / y.0 - 1.0).abs() <= 1e-10);
    let la = lengths_of(&[1.0, 1.3])?;
    let lb = lengths_of(&[1.3, 1.0])?;
    let lengths = la.len() == lb.len() && la.iter().zip(&lb).all(|(x, y)| (x - y).abs() <= 1e-9);
    check(
        cn <= 1e-12 && z <= 1e-12 && spectra && lengths,
        format!("c_n rel diff {cn:.2e}; Z rel diff {z:.2e}; {} recovered levels match {spectra}; lengths match {lengths}", ra.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("determinant routes agree", criterion_1, Duration::from_secs(1)),
        ("partition product vs series on S2", criterion_2, Duration::from_secs(1)),
        ("Monte Carlo partition identity", criterion_3, Duration::from_secs(60)),
        ("Wick-square moments", criterion_4, Duration::from_secs(60)),
        ("d=4 counterterm regression", criterion_5, Duration::from_secs(120)),
        ("spectrum recovery from zeros", criterion_6, Duration::from_secs(10)),
        ("heat coefficients", criterion_7, Duration::from_secs(5)),
        ("length spectrum from wave trace", criterion_8, Duration::from_secs(30)),
        ("tensor calculus identities", criterion_9, Duration::from_secs(5)),
        ("isospectral invariance", criterion_10, Duration::from_secs(10)),
    ];
    let mut failed = 0;
    for (i, (name, f, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) => (took <= *limit, d),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {detail} [{:.2}s, limit {}s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
