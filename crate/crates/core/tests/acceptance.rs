//! Acceptance suite. Runs every criterion, prints one PASS/FAIL/SKIP line
//! each and exits non-zero if any criterion failed.
//!
//! Set `ARCHETYPE_SAMSON_DIR` to a directory holding `samson.npy`
//! (95×95×156, height×width×bands), `endmembers.npy` (156×3) and
//! `abundances.npy` (3×9025) to enable the real-data criterion.

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use archetype::edaa::{
    entropic_step, grad_abundances, grad_contributions, run_observed, SolverConfig,
};
use archetype::ensemble::{run_ensemble, select, EnsembleConfig, RunRecord};
use archetype::image::{l2_normalize, AbundanceMatrix, ContributionMatrix, HsiImage};
use archetype::io::{read_cube, read_matrix};
use archetype::linalg::Matrix;
use archetype::metrics::{evaluate, EvaluationResult};
use archetype::rng::Prng;
use archetype::synth::{generate, SynthSpec, Synthetic};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, Box<dyn FnOnce() -> Verdict>);

fn verdict(check: Check) -> Verdict {
    match check {
        Ok(detail) => Verdict::Pass(detail),
        Err(detail) => Verdict::Fail(detail),
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Check {
    let s = elapsed.as_secs_f64();
    if s < limit_s {
        Ok(format!("{s:.1}s < {limit_s}s"))
    } else {
        Err(format!("runtime {s:.1}s exceeds {limit_s}s"))
    }
}

/// Joins sub-checks; fails if any failed, listing every result.
fn all(parts: Vec<(&str, Check)>) -> Check {
    let failed = parts.iter().any(|(_, c)| c.is_err());
    let text = parts
        .into_iter()
        .map(|(name, c)| match c {
            Ok(d) => format!("{name}: ok ({d})"),
            Err(d) => format!("{name}: FAILED ({d})"),
        })
        .collect::<Vec<_>>()
        .join("; ");
    if failed {
        Err(text)
    } else {
        Ok(text)
    }
}

fn less(name: &str, value: f64, bound: f64) -> Check {
    if value < bound {
        Ok(format!("{name} {value:.4} < {bound}"))
    } else {
        Err(format!("{name} {value:.4} not < {bound}"))
    }
}

fn scene(snr_db: Option<f64>) -> Synthetic {
    let mut spec = SynthSpec::new(20, 500, 3);
    spec.pure_pixels = true;
    spec.snr_db = snr_db;
    spec.seed = 0;
    generate(&spec).expect("synthetic scene")
}

fn normalized(s: &Synthetic) -> HsiImage {
    l2_normalize(&s.image).expect("normalizable").image
}

fn score(s: &Synthetic, cfg: &EnsembleConfig) -> (EvaluationResult, archetype::edaa::RunResult) {
    let out = run_ensemble(&normalized(s), cfg).expect("ensemble");
    let ev = evaluate(
        &s.endmembers,
        s.abundances.matrix(),
        &out.best.endmembers,
        &out.best.abundances,
        None,
    )
    .expect("evaluation");
    (ev, out.best)
}

fn on_simplex(m: &Matrix, tol: f64) -> Option<String> {
    for (j, c) in m.columns().enumerate() {
        if let Some(v) = c.iter().find(|v| **v < 0.0) {
            return Some(format!("column {j} has entry {v}"));
        }
        let sum: f64 = c.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Some(format!("column {j} sums to {sum}"));
        }
    }
    None
}

fn simplex_preservation() -> Check {
    let start = Instant::now();
    let mut spec = SynthSpec::new(20, 500, 3);
    spec.snr_db = Some(30.0);
    let x = normalized(&generate(&spec).unwrap());
    let mut parts = Vec::new();
    for gamma in [1.0, 8.0] {
        let mut cfg = SolverConfig::new(3);
        cfg.gamma = gamma;
        let mut checks = 0usize;
        let mut violation = None;
        let result = run_observed(&x, &cfg, |it| {
            checks += 1;
            if violation.is_none() {
                violation = on_simplex(it.abundances, 1e-9)
                    .map(|v| format!("A at outer {} {:?} {}: {v}", it.outer, it.phase, it.inner))
                    .or_else(|| {
                        on_simplex(it.contributions, 1e-9).map(|v| {
                            format!("B at outer {} {:?} {}: {v}", it.outer, it.phase, it.inner)
                        })
                    });
            }
        });
        let expected = cfg.outer_iterations * (cfg.inner_abundances + cfg.inner_contributions);
        let check = match (result, violation) {
            (Err(e), _) => Err(e.to_string()),
            (_, Some(v)) => Err(v),
            (Ok(_), None) if checks != expected => {
                Err(format!("{checks} observations, expected {expected}"))
            }
            (Ok(_), None) => Ok(format!("{checks} iterates")),
        };
        parts.push((if gamma == 1.0 { "gamma 1" } else { "gamma 8" }, check));
    }
    parts.push(("runtime", within(start.elapsed(), 30.0)));
    all(parts)
}

/// `gᵀ(z − z0) + KL(z‖z0)/η` on the simplex.
fn prox_objective(z: &[f64], z0: &[f64], g: &[f64], eta: f64) -> f64 {
    let mut lin = 0.0;
    let mut kl = 0.0;
    for i in 0..z.len() {
        lin += g[i] * (z[i] - z0[i]);
        if z[i] > 0.0 {
            kl += z[i] * (z[i] / z0[i]).ln();
        }
    }
    lin + kl / eta
}

/// Minimizes over the simplex by successively refined grids: a full grid of
/// spacing 0.01, then boxes of ±3 cells around the incumbent at a tenth of
/// the spacing, down to 1e-7.
fn grid_minimize(f: impl Fn(&[f64]) -> f64, dim: usize) -> Vec<f64> {
    let point = |t: &[f64]| -> Option<Vec<f64>> {
        let rest = 1.0 - t.iter().sum::<f64>();
        if t.iter().any(|&v| v < 0.0) || rest < -1e-15 {
            return None;
        }
        let mut p = t.to_vec();
        p.push(rest.max(0.0));
        Some(p)
    };
    let mut best_t = vec![0.0; dim - 1];
    let mut best_val = f64::INFINITY;
    let consider = |t: &[f64], best_t: &mut Vec<f64>, best_val: &mut f64| {
        if let Some(p) = point(t) {
            let v = f(&p);
            if v < *best_val {
                *best_val = v;
                *best_t = t.to_vec();
            }
        }
    };
    let mut h = 0.01;
    let (mut lo, mut steps) = (vec![0.0; dim - 1], 100usize);
    loop {
        let base = lo.clone();
        match dim {
            2 => {
                for i in 0..=steps {
                    consider(&[base[0] + i as f64 * h], &mut best_t, &mut best_val);
                }
            }
            3 => {
                for i in 0..=steps {
                    for j in 0..=steps {
                        let t = [base[0] + i as f64 * h, base[1] + j as f64 * h];
                        consider(&t, &mut best_t, &mut best_val);
                    }
                }
            }
            _ => unreachable!(),
        }
        if h <= 1e-7 {
            break;
        }
        lo = best_t.iter().map(|&c| c - 3.0 * h).collect();
        steps = 60;
        h /= 10.0;
    }
    point(&best_t).unwrap()
}

fn prox_oracle() -> Check {
    let start = Instant::now();
    let mut rng = Prng::new(2024);
    let mut worst: f64 = 0.0;
    for trial in 0..1000 {
        let dim = if trial % 2 == 0 { 2 } else { 3 };
        let raw: Vec<f64> = (0..dim).map(|_| 0.05 + rng.next_unit()).collect();
        let s: f64 = raw.iter().sum();
        let z0: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let g: Vec<f64> = (0..dim).map(|_| rng.next_normal()).collect();
        let eta = 0.05 + 1.95 * rng.next_unit();
        let step = entropic_step(&z0, &g, eta).map_err(|e| e.to_string())?;
        let grid = grid_minimize(|z| prox_objective(z, &z0, &g, eta), dim);
        let err = step
            .iter()
            .zip(&grid)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err);
        if err > 1e-4 {
            return Err(format!(
                "trial {trial}: step {step:?} vs grid {grid:?} (z0 {z0:?}, g {g:?}, eta {eta})"
            ));
        }
    }
    all(vec![
        (
            "1000 triples",
            Ok(format!("max coordinate gap {worst:.2e} <= 1e-4")),
        ),
        ("runtime", within(start.elapsed(), 10.0)),
    ])
}

/// `½‖X − XBA‖²` by explicit loops, independent of the library's products.
fn naive_objective(x: &Matrix, b: &Matrix, a: &Matrix) -> f64 {
    let (l, n, p) = (x.rows(), x.cols(), a.rows());
    let mut e = vec![0.0; l * p];
    for i in 0..l {
        for k in 0..p {
            e[i * p + k] = (0..n).map(|j| x.get(i, j) * b.get(j, k)).sum();
        }
    }
    let mut total = 0.0;
    for i in 0..l {
        for j in 0..n {
            let recon: f64 = (0..p).map(|k| e[i * p + k] * a.get(k, j)).sum();
            total += (x.get(i, j) - recon).powi(2);
        }
    }
    0.5 * total
}

fn simplex_matrix(rows: usize, cols: usize, rng: &mut Prng) -> Matrix {
    let mut m = Matrix::from_fn(rows, cols, |_, _| 0.01 + rng.next_unit());
    for c in m.columns_mut() {
        let s: f64 = c.iter().sum();
        c.iter_mut().for_each(|v| *v /= s);
    }
    m
}

/// Central differences of `f` with respect to every entry of `at`.
fn central_differences(at: &Matrix, f: impl Fn(&Matrix) -> f64) -> Matrix {
    let h = 1e-6;
    let mut out = Matrix::zeros(at.rows(), at.cols());
    for j in 0..at.cols() {
        for i in 0..at.rows() {
            let mut plus = at.clone();
            plus.set(i, j, at.get(i, j) + h);
            let mut minus = at.clone();
            minus.set(i, j, at.get(i, j) - h);
            out.set(i, j, (f(&plus) - f(&minus)) / (2.0 * h));
        }
    }
    out
}

/// `‖fd − g‖∞ / ‖g‖∞`.
fn relative_gap(fd: &Matrix, g: &Matrix) -> f64 {
    let scale = g.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    fd.max_abs_diff(g).unwrap() / scale
}

fn gradient_checks() -> Check {
    let start = Instant::now();
    let mut rng = Prng::new(77);
    let (l, n, p) = (4, 6, 2);
    let (mut worst_a, mut worst_b): (f64, f64) = (0.0, 0.0);
    for trial in 0..100 {
        let raw = HsiImage::new(Matrix::from_fn(l, n, |_, _| rng.next_unit())).unwrap();
        let x = l2_normalize(&raw).unwrap().image;
        let a = simplex_matrix(p, n, &mut rng);
        let b = simplex_matrix(n, p, &mut rng);
        let am = AbundanceMatrix::new(a.clone()).unwrap();
        let bm = ContributionMatrix::new(b.clone()).unwrap();

        let ga = grad_abundances(&x, &bm, &am).map_err(|e| e.to_string())?;
        let fd_a = central_differences(&a, |a| naive_objective(x.data(), &b, a));
        let gb = grad_contributions(&x, &bm, &am).map_err(|e| e.to_string())?;
        let fd_b = central_differences(&b, |b| naive_objective(x.data(), b, &a));

        let (ra, rb) = (relative_gap(&fd_a, &ga), relative_gap(&fd_b, &gb));
        worst_a = worst_a.max(ra);
        worst_b = worst_b.max(rb);
        if ra > 1e-5 || rb > 1e-5 {
            return Err(format!(
                "instance {trial}: relative gaps A {ra:.2e}, B {rb:.2e}"
            ));
        }
    }
    all(vec![
        ("abundances", Ok(format!("max relative gap {worst_a:.2e}"))),
        (
            "contributions",
            Ok(format!("max relative gap {worst_b:.2e}")),
        ),
        ("runtime", within(start.elapsed(), 5.0)),
    ])
}

fn exact_recovery() -> Check {
    let start = Instant::now();
    let s = scene(None);
    let mut cfg = EnsembleConfig::new(3);
    cfg.runs = 20;
    let (ev, best) = score(&s, &cfg);
    let trace = &best.objective_trace;
    let ratio = trace.last().unwrap() / trace[0];
    all(vec![
        ("SAD", less("overall SAD", ev.overall_sad, 2.0)),
        ("RMSE", less("overall RMSE", ev.overall_rmse, 5.0)),
        (
            "objective",
            if ratio <= 0.01 {
                Ok(format!("final/initial {ratio:.4} <= 0.01"))
            } else {
                Err(format!("final/initial {ratio:.4} > 0.01"))
            },
        ),
        ("runtime", within(start.elapsed(), 120.0)),
    ])
}

fn noise_robustness() -> Check {
    let start = Instant::now();
    let s = scene(Some(30.0));
    let mut cfg = EnsembleConfig::new(3);
    cfg.runs = 20;
    let (ev, _) = score(&s, &cfg);
    all(vec![
        ("SAD", less("overall SAD", ev.overall_sad, 5.0)),
        ("RMSE", less("overall RMSE", ev.overall_rmse, 10.0)),
        ("runtime", within(start.elapsed(), 120.0)),
    ])
}

fn selection_trace() -> Check {
    let records: Vec<RunRecord> = [(10.0, 0.9), (10.4, 0.8), (11.0, 0.1)]
        .into_iter()
        .enumerate()
        .map(|(i, (fit, mu))| RunRecord {
            index: i,
            seed: i as u64,
            gamma: 1.0,
            fit_l1: Some(fit),
            coherence: Some(mu),
            wall_time_ms: 0.0,
            error: None,
        })
        .collect();
    let sel = select(&records, 1.05).ok_or("no selection")?;
    if sel.selected == 1 && sel.candidates == [0, 1] && sel.fit_min == 10.0 {
        Ok("candidates [0, 1], selected 1".into())
    } else {
        Err(format!("got {sel:?}"))
    }
}

fn determinism() -> Check {
    let start = Instant::now();
    let x = normalized(&scene(Some(30.0)));
    let mut selections = Vec::new();
    for threads in [1, 8] {
        let mut cfg = EnsembleConfig::new(3);
        cfg.threads = threads;
        let out = run_ensemble(&x, &cfg).map_err(|e| e.to_string())?;
        let runs: Vec<_> = out
            .report
            .per_run
            .iter()
            .map(|r| {
                (
                    r.seed,
                    r.gamma,
                    r.fit_l1.map(f64::to_bits),
                    r.coherence.map(f64::to_bits),
                )
            })
            .collect();
        let selection = serde_json::to_string(&out.report.selection).unwrap();
        let bits: Vec<u64> = out
            .best
            .endmembers
            .matrix()
            .as_slice()
            .iter()
            .map(|v| v.to_bits())
            .collect();
        selections.push((selection, runs, bits));
    }
    let (a, b) = (&selections[0], &selections[1]);
    all(vec![
        (
            "selection",
            if a.0 == b.0 {
                Ok(a.0.clone())
            } else {
                Err(format!("{} vs {}", a.0, b.0))
            },
        ),
        (
            "per-run fits",
            if a.1 == b.1 {
                Ok("bitwise equal".into())
            } else {
                Err("differ".into())
            },
        ),
        (
            "selected endmembers",
            if a.2 == b.2 {
                Ok("bitwise equal".into())
            } else {
                Err("differ".into())
            },
        ),
        ("runtime", within(start.elapsed(), 240.0)),
    ])
}

fn samson() -> Verdict {
    let Some(dir) = std::env::var_os("ARCHETYPE_SAMSON_DIR").map(PathBuf::from) else {
        return Verdict::Skip("ARCHETYPE_SAMSON_DIR not set".into());
    };
    let cube_path = dir.join("samson.npy");
    if !cube_path.is_file() {
        return Verdict::Skip(format!("{} not found", cube_path.display()));
    }
    verdict((|| {
        let start = Instant::now();
        let cube = read_cube(&cube_path).map_err(|e| e.to_string())?;
        if (cube.bands(), cube.pixels()) != (156, 95 * 95) {
            return Err(format!(
                "unexpected cube shape {}x{}",
                cube.bands(),
                cube.pixels()
            ));
        }
        let gt_e = read_matrix(&dir.join("endmembers.npy")).map_err(|e| e.to_string())?;
        let gt_a = read_matrix(&dir.join("abundances.npy")).map_err(|e| e.to_string())?;
        let gt_e = archetype::image::EndmemberMatrix::new(gt_e).map_err(|e| e.to_string())?;
        let x = l2_normalize(&cube).map_err(|e| e.to_string())?.image;
        let out = run_ensemble(&x, &EnsembleConfig::new(3)).map_err(|e| e.to_string())?;
        let ev = evaluate(
            &gt_e,
            &gt_a,
            &out.best.endmembers,
            &out.best.abundances,
            None,
        )
        .map_err(|e| e.to_string())?;
        let band = |name: &str, v: f64, target: f64, width: f64| {
            if (v - target).abs() <= width {
                Ok(format!("{name} {v:.2} within {target}±{width}"))
            } else {
                Err(format!("{name} {v:.2} outside {target}±{width}"))
            }
        };
        all(vec![
            ("RMSE", band("overall RMSE", ev.overall_rmse, 4.24, 1.5)),
            ("SAD", band("overall SAD", ev.overall_sad, 1.64, 1.0)),
            ("runtime", within(start.elapsed(), 600.0)),
        ])
    })())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn ablation_runs() -> Check {
    let start = Instant::now();
    let s = scene(Some(30.0));
    let x = normalized(&s);
    let mut medians = Vec::new();
    for runs in [1, 10, 50] {
        let mut rmses = Vec::new();
        for rep in 0..5u64 {
            let mut cfg = EnsembleConfig::new(3);
            cfg.runs = runs;
            cfg.base_seed = rep * 1000;
            let out = run_ensemble(&x, &cfg).map_err(|e| e.to_string())?;
            let ev = evaluate(
                &s.endmembers,
                s.abundances.matrix(),
                &out.best.endmembers,
                &out.best.abundances,
                None,
            )
            .map_err(|e| e.to_string())?;
            rmses.push(ev.overall_rmse);
        }
        medians.push((runs, median(rmses)));
    }
    let text = medians
        .iter()
        .map(|(m, r)| format!("M={m}: {r:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    let monotone = medians.windows(2).all(|w| w[1].1 <= w[0].1);
    all(vec![
        (
            "median RMSE",
            if monotone {
                Ok(text)
            } else {
                Err(format!("not non-increasing: {text}"))
            },
        ),
        ("runtime", within(start.elapsed(), 600.0)),
    ])
}

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Verdict::Fail(format!("panicked: {msg}"))
        }
    }
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        (
            "1 simplex preservation",
            Box::new(|| verdict(simplex_preservation())),
        ),
        ("2 prox oracle", Box::new(|| verdict(prox_oracle()))),
        ("3 gradient checks", Box::new(|| verdict(gradient_checks()))),
        ("4 exact recovery", Box::new(|| verdict(exact_recovery()))),
        (
            "5 noise robustness",
            Box::new(|| verdict(noise_robustness())),
        ),
        ("6 selection trace", Box::new(|| verdict(selection_trace()))),
        ("7 determinism", Box::new(|| verdict(determinism()))),
        ("8 samson", Box::new(samson)),
        ("9 ensemble size", Box::new(|| verdict(ablation_runs()))),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failures = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        match guarded(f) {
            Verdict::Pass(d) => println!("criterion {name}: PASS  {d}"),
            Verdict::Skip(d) => println!("criterion {name}: SKIP  {d}"),
            Verdict::Fail(d) => {
                failures += 1;
                println!("criterion {name}: FAIL  {d}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
